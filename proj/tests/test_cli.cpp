#include "support/oracles.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <csignal>
#include <cstdio>
#include <sys/wait.h>
#include <unistd.h>

namespace {

struct Result {
  int code = -1;
  std::string out;
};

std::string quote(const std::string& s) { return "'" + s + "'"; }

// Runs the CLI with `args`, capturing stdout; stderr is folded in when asked.
Result cli(const std::string& args, bool with_stderr = false) {
  const std::string cmd = quote(IEQNET_CLI_PATH) + " " + args + (with_stderr ? " 2>&1" : " 2>/dev/null");
  Result r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string src(const std::string& rel) { return quote(oracle::source_path(rel).string()); }

struct TempDir {
  std::filesystem::path path;
  TempDir() : path(std::filesystem::temp_directory_path() / ("ieqnet-cli-" + std::to_string(::getpid()))) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST(Cli, ValidateShippedDocuments) {
  for (const auto* f : {"topologies/ieqnet_4site.yaml", "scenarios/happy_path.yaml", "profiles/qlan2_coexist.yaml"}) {
    auto r = cli("validate " + src(f));
    EXPECT_EQ(r.code, 0) << f;
    EXPECT_EQ(r.out.rfind("ok:", 0), 0u) << r.out;
  }
}

TEST(Cli, ValidateReportsLineAndExitCodes) {
  TempDir dir;
  auto text = ieqnet::read_text_file(oracle::source_path("topologies/star.yaml").string());
  text.replace(text.find("length_km"), 9, "lenght_km");
  const auto bad = dir.path / "bad.yaml";
  std::ofstream(bad) << text;
  auto r = cli("validate " + quote(bad.string()), true);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("did you mean 'length_km'"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("line "), std::string::npos) << r.out;
  EXPECT_EQ(cli("validate /nonexistent.yaml").code, 2);
  EXPECT_EQ(cli("").code, 3);
  EXPECT_EQ(cli("frobnicate").code, 3);
}

TEST(Cli, RunIsDeterministicAndWritesReports) {
  TempDir dir;
  const auto a = dir.path / "a", b = dir.path / "b";
  auto r1 = cli("run " + src("scenarios/happy_path.yaml") + " --out " + quote(a.string()) + " --format series");
  auto r2 = cli("run " + src("scenarios/happy_path.yaml") + " --out " + quote(b.string()) + " --format series");
  ASSERT_EQ(r1.code, 0);
  ASSERT_EQ(r2.code, 0);
  const auto ra = ieqnet::read_text_file((a / "report.json").string());
  EXPECT_EQ(ra, ieqnet::read_text_file((b / "report.json").string()));
  EXPECT_EQ(ieqnet::read_text_file((a / "series.csv").string()), ieqnet::read_text_file((b / "series.csv").string()));
  EXPECT_EQ(nlohmann::json::parse(ra).at("requests")[0].at("state"), "Completed");

  auto seeded = cli("run " + src("scenarios/happy_path.yaml") + " --seed 99");
  ASSERT_EQ(seeded.code, 0);
  EXPECT_EQ(nlohmann::json::parse(seeded.out).at("seed"), 99);

  auto summary = cli("report " + quote((a / "report.json").string()));
  EXPECT_EQ(summary.code, 0);
  EXPECT_NE(summary.out.find("Completed"), std::string::npos) << summary.out;
  auto csv = cli("report " + quote((a / "report.json").string()) + " --format series");
  EXPECT_EQ(csv.out, ieqnet::read_text_file((a / "series.csv").string()));
}

TEST(Cli, ServeAnswersHealthAndShutsDownCleanly) {
  int pipefd[2];
  ASSERT_EQ(::pipe(pipefd), 0);
  const pid_t pid = ::fork();
  ASSERT_GE(pid, 0);
  if (pid == 0) {
    ::dup2(pipefd[1], STDOUT_FILENO);
    ::dup2(pipefd[1], STDERR_FILENO);
    ::close(pipefd[0]);
    const auto topo = oracle::source_path("topologies/star.yaml").string();
    const auto tokens = oracle::source_path("scenarios/tokens.json").string();
    ::execl(IEQNET_CLI_PATH, IEQNET_CLI_PATH, "serve", topo.c_str(), "--tokens", tokens.c_str(), "--addr",
            "127.0.0.1:0", "--time-scale", "20", static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(pipefd[1]);
  FILE* out = ::fdopen(pipefd[0], "r");
  char line[256] = {0};
  ASSERT_TRUE(std::fgets(line, sizeof line, out));
  const std::string first(line);
  const auto colon = first.rfind(':');
  ASSERT_NE(first.find("listening on http://127.0.0.1:"), std::string::npos) << first;
  const int port = std::stoi(first.substr(colon + 1));

  httplib::Client c("127.0.0.1", port);
  auto h = c.Get("/v1/health");
  ASSERT_TRUE(h);
  EXPECT_EQ(nlohmann::json::parse(h->body).at("status"), "ready");
  auto sub = c.Post("/v1/requests", httplib::Headers{{"Authorization", "Bearer dev-alice-token"}},
                    R"({"qnode_a": "q1", "qnode_b": "q2", "requirements": {"rate": 10, "duration": 1}})",
                    "application/json");
  ASSERT_TRUE(sub);
  EXPECT_EQ(sub->status, 202);

  ::kill(pid, SIGTERM);
  int status = 0;
  ::waitpid(pid, &status, 0);
  std::string rest;
  while (std::fgets(line, sizeof line, out)) rest += line;
  std::fclose(out);
  EXPECT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 0);
  EXPECT_NE(rest.find("shut down"), std::string::npos) << rest;
}

TEST(Cli, ServeRefusesBadTokenFile) {
  TempDir dir;
  const auto tokens = dir.path / "tokens.json";
  std::ofstream(tokens) << R"([{"token": "x", "subject": "s", "scopes": ["root"]}])";
  auto r = cli("serve " + src("topologies/star.yaml") + " --tokens " + quote(tokens.string()) + " --addr 127.0.0.1:0",
               true);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("refusing to start"), std::string::npos) << r.out;
}
