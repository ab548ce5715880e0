#pragma once

#include "ieqnet/bus.hpp"
#include "ieqnet/control_plane.hpp"
#include "ieqnet/engine.hpp"
#include "ieqnet/physics.hpp"
#include "ieqnet/plant.hpp"
#include "ieqnet/profile.hpp"
#include "ieqnet/protocol.hpp"
#include "ieqnet/rwa.hpp"
#include "ieqnet/servo.hpp"
#include "ieqnet/service.hpp"
#include "ieqnet/simulator.hpp"
#include "ieqnet/store.hpp"
#include "ieqnet/topology.hpp"
