// Copyright 2026 The refgame Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "oracles.hpp"
#include "refgame/cli.hpp"
#include "refgame/jsonl.hpp"
#include "refgame/study.hpp"
#include "study_fixtures.hpp"

namespace refgame::cli {
namespace {

using refgame::testing::TempDir;

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  args.push_back("--log-level");
  args.push_back("error");
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

void write_embeddings(const std::string& path, int n, std::uint64_t seed = 3) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  std::ofstream f(path);
  for (int i = 0; i < n; ++i) {
    std::vector<double> v(6);
    for (auto& x : v) x = nd(gen);
    f << Json{{"id", "img-" + std::to_string(i)}, {"vector", v}, {"uri", "file:///img/" + std::to_string(i) + ".jpg"}}.dump()
      << '\n';
  }
}

Json read_json(const std::string& path) { return Json::parse(read_file(path)); }

std::string contexts_file(const TempDir& dir, int per_temp = 5) {
  write_embeddings(dir / "emb.jsonl", 40);
  const auto r = cli({"sample-contexts", "--embeddings", dir / "emb.jsonl", "--out", dir / "ctx.json", "--temps",
                      "0.05,0.5", "--per-temp", std::to_string(per_temp), "--seed", "9"});
  EXPECT_EQ(r.code, 0) << r.err;
  return dir / "ctx.json";
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli({}).code, kInputError);
  EXPECT_EQ(cli({"frobnicate"}).code, kInputError);
  EXPECT_EQ(cli({"simulate", "--n", "four"}).code, kInputError);
  EXPECT_EQ(cli({"simulate", "--no-such-flag", "1"}).code, kInputError);
}

TEST(Cli, HelpExitsZero) {
  const auto r = cli({"simulate", "--help"});
  EXPECT_EQ(r.code, kOk);
  EXPECT_NE(r.out.find("--games-per-context"), std::string::npos);
}

TEST(SampleContexts, MissingEmbeddingsExitTwo) {
  TempDir dir;
  const auto r = cli({"sample-contexts", "--embeddings", dir / "absent.jsonl", "--out", dir / "c.json"});
  EXPECT_EQ(r.code, kInputError);
  EXPECT_NE(r.err.find("absent.jsonl"), std::string::npos) << r.err;
  EXPECT_EQ(cli({"sample-contexts", "--out", dir / "c.json"}).code, kInputError);
}

TEST(SampleContexts, MalformedEmbeddingsExitTwo) {
  TempDir dir;
  std::ofstream(dir / "bad.jsonl") << "{\"id\": \"a\", \"vector\": [1, 2]}\n{\"id\": \"b\", \"vector\": [1]}\n";
  EXPECT_EQ(cli({"sample-contexts", "--embeddings", dir / "bad.jsonl", "--out", dir / "c.json"}).code, kInputError);
}

TEST(SampleContexts, PerTempZeroGivesEmptySuite) {
  TempDir dir;
  write_embeddings(dir / "emb.jsonl", 12);
  const auto r = cli({"sample-contexts", "--embeddings", dir / "emb.jsonl", "--out", dir / "c.json", "--per-temp", "0"});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_EQ(read_json(dir / "c.json")["contexts"].size(), 0u);
}

TEST(SampleContexts, DefaultsGiveFiveHundredContexts) {
  TempDir dir;
  write_embeddings(dir / "emb.jsonl", 60);
  const auto r = cli({"sample-contexts", "--embeddings", dir / "emb.jsonl", "--out", dir / "c.json"});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto j = read_json(dir / "c.json");
  EXPECT_EQ(j["contexts"].size(), 500u);
  EXPECT_EQ(j["config_hash"].get<std::string>().size(), 64u);
  // The effective configuration is logged with every run.
  EXPECT_NE(r.err.find("effective config (sample-contexts)"), std::string::npos);
}

TEST(SampleContexts, KLargerThanBankExitTwo) {
  TempDir dir;
  write_embeddings(dir / "emb.jsonl", 3);
  EXPECT_EQ(cli({"sample-contexts", "--embeddings", dir / "emb.jsonl", "--out", dir / "c.json"}).code, kInputError);
}

TEST(ConfigFile, FlagsOverrideFileAndUnknownKeysFail) {
  TempDir dir;
  write_embeddings(dir / "emb.jsonl", 20);
  std::ofstream(dir / "cfg.json") << Json{{"embeddings", dir / "emb.jsonl"}, {"per_temp", 1}, {"out", dir / "a.json"}}.dump();
  ASSERT_EQ(cli({"--config", dir / "cfg.json", "sample-contexts", "--per-temp", "2"}).code, kOk);
  EXPECT_EQ(read_json(dir / "a.json")["contexts"].size(), 10u);
  std::ofstream(dir / "bad.json") << R"({"per_tmp": 1})";
  const auto r = cli({"--config", dir / "bad.json", "sample-contexts"});
  EXPECT_EQ(r.code, kInputError);
  EXPECT_NE(r.err.find("per_tmp"), std::string::npos);
}

TEST(Simulate, DeterministicAcrossRunsAndParallelism) {
  TempDir dir;
  const auto ctx = contexts_file(dir);
  const std::vector<std::string> base = {"simulate", "--contexts", ctx, "--games-per-context", "2", "--seed", "4",
                                         "--policy", "greedy_shortest_success"};
  auto a = base, b = base;
  a.insert(a.end(), {"--out-dir", dir / "a"});
  b.insert(b.end(), {"--out-dir", dir / "b", "--parallelism", "3"});
  ASSERT_EQ(cli(a).code, kOk);
  ASSERT_EQ(cli(b).code, kOk);
  for (const char* f : {"logs.jsonl", "samples.jsonl"}) {
    EXPECT_EQ(read_file(dir / ("a/" + std::string(f))), read_file(dir / ("b/" + std::string(f)))) << f;
  }
  const auto m = read_json(dir / "a/manifest.json");
  EXPECT_EQ(m["counts"]["games"], 20);
  EXPECT_EQ(m["counts"]["trials"], 400);
  EXPECT_EQ(m["config_hash"], read_json(dir / "b/manifest.json")["config_hash"]);
}

TEST(Simulate, UnknownPolicyExitTwo) {
  TempDir dir;
  const auto ctx = contexts_file(dir);
  EXPECT_EQ(cli({"simulate", "--contexts", ctx, "--out-dir", dir / "o", "--policy", "best"}).code, kInputError);
  EXPECT_EQ(cli({"simulate", "--contexts", ctx, "--out-dir", dir / "o", "--trials", "18"}).code, kInputError);
}

TEST(Simulate, UnreachableEndpointExitThree) {
  TempDir dir;
  const auto ctx = contexts_file(dir);
  const Json speaker = {{"kind", "model"},
                        {"endpoint",
                         {{"base_url", "http://127.0.0.1:9"},
                          {"model", "m"},
                          {"timeout_ms", 500},
                          {"max_retries", 0},
                          {"retry_backoff_ms", 1}}}};
  const auto r = cli({"simulate", "--contexts", ctx, "--out-dir", dir / "o", "--max-contexts", "2", "--speaker",
                      speaker.dump()});
  EXPECT_EQ(r.code, kPartialFailure) << r.err;
  const auto games = read_game_log_file(dir / "o/logs.jsonl");
  ASSERT_EQ(games.size(), 2u);
  for (const auto& g : games) {
    EXPECT_FALSE(g.complete());
    EXPECT_TRUE(g.failure());
  }
}

TEST(BuildPrefs, EndToEndAndBadCondition) {
  TempDir dir;
  const auto ctx = contexts_file(dir);
  ASSERT_EQ(cli({"simulate", "--contexts", ctx, "--out-dir", dir / "run", "--seed", "2"}).code, kOk);
  const auto r = cli({"build-prefs", "--logs", dir / "run/logs.jsonl", "--samples", dir / "run/samples.jsonl", "--out",
                      dir / "prefs.jsonl"});
  ASSERT_EQ(r.code, kOk) << r.err;
  std::ifstream in(dir / "prefs.jsonl");
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) {
    const auto j = Json::parse(line);
    EXPECT_TRUE(j.contains("prompt_messages"));
    EXPECT_TRUE(j.contains("chosen"));
    EXPECT_TRUE(j.contains("rejected"));
    ++n;
  }
  EXPECT_LE(n, 10u * 20u * 3u);
  EXPECT_EQ(cli({"build-prefs", "--logs", dir / "run/logs.jsonl", "--samples", dir / "run/samples.jsonl", "--out",
                 dir / "p2.jsonl", "--condition", "brevity"})
                .code,
            kInputError);
}

TEST(Analyze, ReportShapeAndDenominator) {
  TempDir dir;
  const auto ctx = contexts_file(dir);
  ASSERT_EQ(cli({"simulate", "--contexts", ctx, "--out-dir", dir / "run", "--policy", "greedy_shortest_success"}).code,
            kOk);
  ASSERT_EQ(cli({"analyze", "--logs", dir / "run/logs.jsonl", "--out", dir / "r1.json", "--csv", dir / "r1.csv"}).code,
            kOk);
  ASSERT_EQ(cli({"analyze", "--logs", dir / "run/logs.jsonl", "--out", dir / "r2.json", "--wnr-denominator", "tokens"})
                .code,
            kOk);
  const auto r1 = read_json(dir / "r1.json"), r2 = read_json(dir / "r2.json");
  EXPECT_EQ(r1["games"], 10);
  EXPECT_EQ(r1["trials"], 200);
  EXPECT_EQ(r1["wnr_denominator"], "content");
  EXPECT_EQ(r2["wnr_denominator"], "tokens");
  EXPECT_NE(r1["config_hash"], r2["config_hash"]);
  EXPECT_EQ(r1["curves"].size(), 5u);
  EXPECT_NE(read_file(dir / "r1.csv").find("group,repetition,metric,mean,se,count"), std::string::npos);
  EXPECT_EQ(cli({"analyze", "--logs", dir / "run/logs.jsonl", "--out", dir / "r3.json", "--wnr-denominator", "chars"})
                .code,
            kInputError);
}

TEST(Analyze, EmptyCorpusIsFine) {
  TempDir dir;
  std::ofstream(dir / "empty.jsonl").flush();
  const auto r = cli({"analyze", "--logs", dir / "empty.jsonl", "--out", dir / "r.json"});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto j = read_json(dir / "r.json");
  EXPECT_EQ(j["games"], 0);
  EXPECT_TRUE(j["consistency"]["gmm"].is_null());
}

TEST(Analyze, IncompleteGamesExcludedByDefault) {
  TempDir dir;
  GameState done("done", Context::from_ids({"a", "b", "c", "d"}), 4, 0);
  Rng rng(0);
  for (int i = 0; i < 4; ++i) {
    const auto t = next_target(done, rng);
    done = record_trial(std::move(done), {t, "the " + t, t});
  }
  GameState partial("partial", Context::from_ids({"a", "b", "c", "d"}), 4, 0);
  const auto t = next_target(partial, rng);
  partial = record_trial(std::move(partial), {t, "x", t});
  {
    std::ofstream f(dir / "logs.jsonl");
    write_game_log(f, {done, partial});
  }
  ASSERT_EQ(cli({"analyze", "--logs", dir / "logs.jsonl", "--out", dir / "r.json"}).code, kOk);
  EXPECT_EQ(read_json(dir / "r.json")["games"], 1);
  EXPECT_EQ(read_json(dir / "r.json")["excluded_incomplete"], 1);
  ASSERT_EQ(cli({"analyze", "--logs", dir / "logs.jsonl", "--out", dir / "r.json", "--include-incomplete"}).code, kOk);
  EXPECT_EQ(read_json(dir / "r.json")["games"], 2);
}

TEST(Analyze, MalformedLogExitTwo) {
  TempDir dir;
  std::ofstream(dir / "bad.jsonl") << "{\n";
  const auto r = cli({"analyze", "--logs", dir / "bad.jsonl", "--out", dir / "r.json"});
  EXPECT_EQ(r.code, kInputError);
  EXPECT_NE(r.err.find("line 1"), std::string::npos) << r.err;
}

TEST(ExportStudy, WritesFilesFromEventLog) {
  TempDir dir;
  {
    auto log = std::make_shared<std::ofstream>(dir / "events.jsonl");
    study::StudyService svc(refgame::testing::study_config(), log);
    refgame::testing::complete_model_session(svc, "p1", 12, 18);
    const auto sid = svc.create_session("p2").session_id;
    svc.give_consent(sid, true);
    svc.assign_games(sid);
  }
  const auto r = cli({"export-study", "--event-log", dir / "events.jsonl", "--out-dir", dir / "export"});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_EQ(read_game_log_file(dir / "export/games.jsonl").size(), 2u);
  const auto m = read_json(dir / "export/manifest.json");
  EXPECT_EQ(m["included_sessions"].size(), 1u);
  EXPECT_EQ(m["excluded_sessions"].size(), 1u);
  EXPECT_NE(read_file(dir / "export/payments.csv").find(",30,300,120,420,"), std::string::npos);
  EXPECT_EQ(cli({"export-study", "--event-log", dir / "none.jsonl", "--out-dir", dir / "x"}).code, kInputError);
}

// serve runs as a child process so signals can be delivered.
struct Child {
  pid_t pid = -1;
  int out_fd = -1;
};

Child spawn(const std::vector<std::string>& args) {
  int fds[2];
  if (pipe(fds) != 0) throw std::runtime_error("pipe");
  const pid_t pid = fork();
  if (pid == 0) {
    dup2(fds[1], STDOUT_FILENO);
    close(fds[0]);
    close(fds[1]);
    std::vector<char*> argv;
    std::string prog = REFGAME_CLI_PATH;
    argv.push_back(prog.data());
    std::vector<std::string> copy = args;
    for (auto& a : copy) argv.push_back(a.data());
    argv.push_back(nullptr);
    execv(prog.c_str(), argv.data());
    _exit(127);
  }
  close(fds[1]);
  return {pid, fds[0]};
}

std::string read_line(int fd) {
  std::string line;
  char c;
  while (read(fd, &c, 1) == 1 && c != '\n') line.push_back(c);
  return line;
}

int wait_exit(pid_t pid) {
  int status = 0;
  for (int i = 0; i < 200; ++i) {
    if (waitpid(pid, &status, WNOHANG) == pid) return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  kill(pid, SIGKILL);
  waitpid(pid, &status, 0);
  return -2;
}

TEST(Serve, SigtermFlushesEventLog) {
  TempDir dir;
  const auto ctx = contexts_file(dir);
  const Json agents = {{"treatment_model", {{"kind", "fixed"}, {"utterances", {"left"}}}},
                       {"baseline_model_1", {{"kind", "fixed"}, {"utterances", {"right"}}}},
                       {"baseline_model_2", {{"kind", "fixed"}, {"utterances", {"middle"}}}}};
  auto child = spawn({"serve", "--contexts", ctx, "--port", "0", "--ws-port", "0", "--event-log", dir / "ev.jsonl",
                      "--agents", agents.dump(), "--log-level", "error"});
  const auto banner = read_line(child.out_fd);
  const auto http = banner.find("http=127.0.0.1:");
  ASSERT_NE(http, std::string::npos) << banner;
  const int port = std::stoi(banner.substr(http + 15));
  httplib::Client client("127.0.0.1", port);
  auto res = client.Post("/api/sessions", R"({"participant_id": "p1"})", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 201);
  const auto sid = Json::parse(res->body)["session_id"].get<std::string>();
  res = client.Post(("/api/sessions/" + sid + "/consent").c_str(), R"({"consent": true})", "application/json");
  ASSERT_TRUE(res);
  res = client.Post(("/api/sessions/" + sid + "/assign").c_str(), "", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);

  kill(child.pid, SIGTERM);
  EXPECT_EQ(wait_exit(child.pid), 0);
  close(child.out_fd);
  std::ifstream in(dir / "ev.jsonl");
  std::vector<std::string> types;
  for (std::string line; std::getline(in, line);) types.push_back(Json::parse(line)["type"]);
  EXPECT_EQ(types, (std::vector<std::string>{"session_created", "consent", "games_assigned"}));
}

TEST(Serve, PortInUseExitFour) {
  TempDir dir;
  const auto ctx = contexts_file(dir);
  httplib::Server blocker;
  const int port = blocker.bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  const auto r = cli({"serve", "--contexts", ctx, "--port", std::to_string(port), "--ws-port", "0", "--event-log",
                      dir / "ev.jsonl"});
  EXPECT_EQ(r.code, kServiceError) << r.err;
}

}  // namespace
}  // namespace refgame::cli
