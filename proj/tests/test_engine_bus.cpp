#include <ieqnet/bus.hpp>
#include <ieqnet/engine.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace ieqnet;

TEST(Engine, RunsEventsInTimeThenInsertionOrder) {
  Engine e;
  std::vector<int> order;
  e.schedule(2.0, EventKind::Timer, "", [&] { order.push_back(3); });
  e.schedule(1.0, EventKind::Timer, "", [&] { order.push_back(1); });
  e.schedule(1.0, EventKind::Timer, "", [&] { order.push_back(2); });
  e.run();
  EXPECT_EQ(order, (std::vector<int>{1, 2, 3}));
  EXPECT_DOUBLE_EQ(e.now(), 2.0);
  EXPECT_EQ(e.executed(), 3u);
}

TEST(Engine, CancelledEventsNeverRun) {
  Engine e;
  bool ran = false;
  auto h = e.schedule(1.0, EventKind::Timer, "", [&] { ran = true; });
  EXPECT_EQ(e.pending(), 1u);
  e.cancel(h);
  e.cancel(h);
  e.cancel(999);
  EXPECT_TRUE(e.empty());
  e.run();
  EXPECT_FALSE(ran);
}

TEST(Engine, RunUntilAdvancesClockAndStopsAtBoundary) {
  Engine e;
  int count = 0;
  e.schedule(1.0, EventKind::Timer, "", [&] { ++count; });
  e.schedule(3.0, EventKind::Timer, "", [&] { ++count; });
  e.run_until(2.5);
  EXPECT_EQ(count, 1);
  EXPECT_DOUBLE_EQ(e.now(), 2.5);
  e.run_until(3.0);
  EXPECT_EQ(count, 2);
}

TEST(Engine, RejectsSchedulingInThePast) {
  Engine e;
  e.run_until(5);
  EXPECT_THROW(e.schedule(4.0, EventKind::Timer, "", [] {}), std::logic_error);
}

TEST(Engine, RandomScheduleMatchesStableSortOracle) {
  std::mt19937_64 rng(42);
  std::uniform_int_distribution<int> t(0, 20);
  Engine e;
  std::vector<std::pair<int, int>> expected;
  std::vector<int> got;
  for (int i = 0; i < 500; ++i) {
    const int at = t(rng);
    expected.emplace_back(at, i);
    e.schedule(at, EventKind::Timer, "", [&got, i] { got.push_back(i); });
  }
  std::stable_sort(expected.begin(), expected.end(), [](auto& a, auto& b) { return a.first < b.first; });
  e.run();
  ASSERT_EQ(got.size(), expected.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i], expected[i].second);
}

TEST(Engine, NestedSchedulingKeepsCausality) {
  Engine e;
  std::vector<double> times;
  e.schedule(1.0, EventKind::Timer, "", [&] {
    times.push_back(e.now());
    e.after(0.5, EventKind::Timer, "", [&] { times.push_back(e.now()); });
    e.after(0.0, EventKind::Timer, "", [&] { times.push_back(e.now()); });
  });
  e.run();
  EXPECT_EQ(times, (std::vector<double>{1.0, 1.0, 1.5}));
}

TEST(TopicFilter, MqttWildcards) {
  EXPECT_TRUE(topic_matches("a/b/c", "a/b/c"));
  EXPECT_FALSE(topic_matches("a/b", "a/b/c"));
  EXPECT_TRUE(topic_matches("a/+/c", "a/x/c"));
  EXPECT_FALSE(topic_matches("a/+/c", "a/x/y/c"));
  EXPECT_TRUE(topic_matches("a/#", "a/b/c"));
  EXPECT_TRUE(topic_matches("#", "x"));
  EXPECT_FALSE(topic_matches("a/+", "a"));
}

TEST(Bus, DeliversAfterLatencyAndTracesPublishes) {
  Engine e;
  Trace trace;
  Bus bus(e, trace);
  std::vector<std::pair<double, std::string>> seen;
  bus.subscribe("ctl/+/status", "sub", [&](const BusMessage& m) { seen.emplace_back(e.now(), m.sender); });
  bus.publish("ctl/q1/status", "q1", "r-1", MessageKind::Ready);
  bus.publish("ctl/q1/other", "q1", "r-1", MessageKind::Ready);
  e.run();
  ASSERT_EQ(seen.size(), 1u);
  EXPECT_DOUBLE_EQ(seen[0].first, 1e-3);
  ASSERT_EQ(trace.entries().size(), 2u);
  EXPECT_EQ(trace.entries()[0], (TraceEntry{0.0, "q1", "Ready", "ctl/q1/status", "r-1"}));
  EXPECT_EQ(bus.log()[1].seq, 2u);
}

TEST(Bus, PerSenderOrderIsPreserved) {
  Engine e;
  Trace trace;
  Bus bus(e, trace);
  std::vector<std::uint64_t> seqs;
  bus.subscribe("#", "sink", [&](const BusMessage& m) {
    if (m.sender == "a") seqs.push_back(m.seq);
  });
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    e.after(std::uniform_real_distribution<double>(0, 1e-3)(rng) * 0 + i * 1e-4, EventKind::Timer, "",
            [&bus, i] { bus.publish(i % 2 ? "x/a" : "y/a", i % 3 ? "a" : "b", "", MessageKind::Submit); });
  }
  e.run();
  for (std::size_t i = 1; i < seqs.size(); ++i) EXPECT_EQ(seqs[i], seqs[i - 1] + 1);
  EXPECT_FALSE(seqs.empty());
}

TEST(Bus, ProjectionCollapsesRepeats) {
  Trace t;
  t.add({0, "a", "X", "t", ""});
  t.add({0, "b", "X", "t", ""});
  t.add({0, "a", "Y", "", "r"});
  t.add({0, "a", "X", "t", ""});
  auto all = t.projected_kinds([](const TraceEntry&) { return true; });
  EXPECT_EQ(all, (std::vector<std::string>{"X", "Y", "X"}));
  auto msgs = t.projected_kinds([](const TraceEntry& e) { return !e.topic.empty(); });
  EXPECT_EQ(msgs, (std::vector<std::string>{"X"}));
}
