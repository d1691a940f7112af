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

#include <pthread.h>
#include <signal.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "refgame/agents.hpp"
#include "refgame/cli.hpp"
#include "refgame/context_sampler.hpp"
#include "refgame/errors.hpp"
#include "refgame/gmm.hpp"
#include "refgame/jsonl.hpp"
#include "refgame/metrics.hpp"
#include "refgame/preference.hpp"
#include "refgame/simulation.hpp"
#include "refgame/stats.hpp"
#include "refgame/study.hpp"
#include "refgame/study_server.hpp"

namespace refgame::cli {
namespace {

std::string required_path(const config::RunConfig& rc, const char* key, const char* flag) {
  auto v = rc.at(key).get<std::string>();
  if (v.empty()) throw InputError(std::string("missing --") + flag);
  return v;
}

int positive_int(const config::RunConfig& rc, const char* key, int min) {
  const auto v = rc.at(key).get<long long>();
  if (v < min) throw InputError(std::string(key) + " must be >= " + std::to_string(min));
  return static_cast<int>(v);
}

std::vector<Context> load_contexts(const std::string& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("context suite '" + path + "': " + e.what());
  }
  std::vector<Context> out;
  for (auto& c : sampler::suite_from_json(j)) out.push_back(std::move(c.context));
  return out;
}

Json summary_json(const metrics::SummaryStat& s) {
  return {{"mean", s.count ? Json(s.mean) : Json(nullptr)}, {"se", s.se ? Json(*s.se) : Json(nullptr)}, {"count", s.count}};
}

Json curves_json(const std::vector<metrics::RepetitionPoint>& curves) {
  Json out = Json::array();
  for (const auto& p : curves) {
    Json pos = Json::object();
    for (const auto& [k, v] : p.pos_proportions) pos[k] = v;
    out.push_back({{"repetition", p.repetition},
                   {"accuracy", summary_json(p.accuracy)},
                   {"length", summary_json(p.length)},
                   {"wnr", summary_json(p.wnr)},
                   {"response_time_ms", summary_json(p.response_time_ms)},
                   {"pos_proportions", std::move(pos)}});
  }
  return out;
}

void curves_csv(std::ostream& csv, const std::string& group, const std::vector<metrics::RepetitionPoint>& curves) {
  auto row = [&](int rep, const char* metric, const metrics::SummaryStat& s) {
    csv << group << ',' << rep << ',' << metric << ',';
    if (s.count) csv << s.mean;
    csv << ',';
    if (s.se) csv << *s.se;
    csv << ',' << s.count << '\n';
  };
  for (const auto& p : curves) {
    row(p.repetition, "accuracy", p.accuracy);
    row(p.repetition, "length", p.length);
    row(p.repetition, "wnr", p.wnr);
    row(p.repetition, "response_time_ms", p.response_time_ms);
  }
}

std::string group_key(const GameState& g, const std::string& path) {
  Json node = game_to_json(g);
  std::stringstream ss(path);
  for (std::string part; std::getline(ss, part, '.');) {
    if (!node.is_object() || !node.contains(part)) return "unknown";
    node = Json(node.at(part));
  }
  return node.is_string() ? node.get<std::string>() : node.dump();
}

Json welch_json(const std::vector<double>& a, const std::vector<double>& b) {
  try {
    const auto r = stats::welch_t_test(a, b);
    return {{"t", r.t}, {"dof", r.dof}, {"p", r.p}, {"n_a", a.size()}, {"n_b", b.size()}};
  } catch (const InputError& e) {
    return {{"t", nullptr}, {"dof", nullptr}, {"p", nullptr}, {"n_a", a.size()}, {"n_b", b.size()}, {"note", e.what()}};
  }
}

}  // namespace

int cmd_sample_contexts(const config::RunConfig& rc, std::ostream& out) {
  const auto path = required_path(rc, "embeddings", "embeddings");
  const auto index = sampler::load_embeddings(path);
  const auto temps = rc.at("temps").get<std::vector<double>>();
  const int per_temp = positive_int(rc, "per_temp", 0);
  const int k = positive_int(rc, "k", 2);
  Rng rng(rc.at("seed").get<std::uint64_t>());
  const auto suite = sampler::sample_context_suite(index, temps, static_cast<std::size_t>(per_temp),
                                                   static_cast<std::size_t>(k), rng);
  Json j = sampler::suite_to_json(suite);
  j["config_hash"] = rc.hash();
  const auto dest = rc.at("out").get<std::string>();
  open_output(dest) << j.dump(2) << '\n';
  out << "wrote " << suite.size() << " contexts to " << dest << '\n';
  return kOk;
}

int cmd_simulate(const config::RunConfig& rc, std::ostream& out) {
  auto contexts = load_contexts(required_path(rc, "contexts", "contexts"));
  const int max_contexts = positive_int(rc, "max_contexts", 0);
  if (max_contexts > 0 && contexts.size() > static_cast<std::size_t>(max_contexts)) contexts.resize(max_contexts);

  sim::BatchSpec spec;
  auto& cfg = spec.config;
  cfg.samples_per_trial = positive_int(rc, "n", 1);
  cfg.trials_per_game = positive_int(rc, "trials", 1);
  cfg.seed = rc.at("seed").get<std::uint64_t>();
  const auto policy = rc.at("policy").get<std::string>();
  auto p = sim::parse_policy(policy);
  if (!p) throw InputError("unknown --policy '" + policy + "'");
  cfg.policy = *p;
  const Json& dec = rc.at("decoding");
  cfg.decoding.temperature = dec.at("temperature").get<double>();
  cfg.decoding.top_p = dec.at("top_p").get<double>();
  cfg.decoding.max_tokens = dec.at("max_tokens").get<int>();
  cfg.decoding.n = cfg.samples_per_trial;
  spec.contexts = contexts;
  spec.games_per_context = positive_int(rc, "games_per_context", 1);
  spec.parallelism = positive_int(rc, "parallelism", 1);
  spec.config_hash = rc.hash();

  agents::AgentResources res;
  res.limiter = std::make_shared<agents::RequestLimiter>(positive_int(rc, "max_inflight", 1));
  const auto audit = rc.at("audit_log").get<std::string>();
  if (!audit.empty()) res.audit = std::make_shared<agents::AuditLog>(audit);
  res.contexts = spec.contexts;
  auto speaker = agents::make_speaker(rc.at("speaker"), res);
  auto listener = agents::make_listener(rc.at("listener"), res);

  const auto result = sim::run_batch(spec, *speaker, *listener);
  const auto dir = rc.at("out_dir").get<std::string>();
  sim::write_batch(result, dir, spec.config_hash);
  const auto& counts = result.manifest.at("counts");
  out << "simulated " << counts.at("games") << " games (" << counts.at("incomplete") << " incomplete), "
      << counts.at("candidate_sets") << " candidate sets -> " << dir << '\n';
  return result.incomplete_count() > 0 ? kPartialFailure : kOk;
}

int cmd_build_prefs(const config::RunConfig& rc, std::ostream& out) {
  const auto cond_name = rc.at("condition").get<std::string>();
  auto cond = prefs::parse_condition(cond_name);
  if (!cond) throw InputError("unknown --condition '" + cond_name + "' (success+cost | success | cost)");
  const auto games = read_game_log_file(required_path(rc, "logs", "logs"));
  const auto samples = sim::read_samples_file(required_path(rc, "samples", "samples"));

  std::optional<agents::DemonstrationGame> demo;
  if (const Json& d = rc.at("demo"); !d.is_null()) {
    demo = agents::demo_from_json(d.is_string() ? Json::parse(read_file(d.get<std::string>())) : d);
    demo->validate();
  }
  prefs::DatasetOptions opts;
  opts.condition = *cond;
  opts.demo = demo ? &*demo : nullptr;
  opts.prompt.end_marker = rc.at("end_marker").get<std::string>();
  opts.config_hash = rc.hash();
  const auto ds = prefs::build_dataset(games, samples, opts);
  for (const auto& g : ds.excluded_games) spdlog::warn("excluded incomplete game {}", g);

  const auto dest = rc.at("out").get<std::string>();
  auto f = open_output(dest);
  prefs::write_pairs(f, ds.pairs);
  out << "wrote " << ds.pairs.size() << " " << cond_name << " pairs from " << ds.candidate_sets
      << " candidate sets to " << dest << '\n';
  return kOk;
}

int cmd_analyze(const config::RunConfig& rc, std::ostream& out) {
  auto all_games = read_game_log_file(required_path(rc, "logs", "logs"));
  std::vector<GameState> games;
  std::size_t excluded = 0;
  const bool keep_incomplete = rc.at("include_incomplete").get<bool>();
  for (auto& g : all_games) {
    if (!keep_incomplete && (!g.complete() || g.failure())) {
      spdlog::warn("excluded incomplete game {}", g.game_id());
      ++excluded;
      continue;
    }
    games.push_back(std::move(g));
  }
  const auto denom_name = rc.at("wnr_denominator").get<std::string>();
  auto denom = metrics::parse_wnr_denominator(denom_name);
  if (!denom) throw InputError("unknown --wnr-denominator '" + denom_name + "' (content | tokens)");

  std::unique_ptr<text::Tagger> owned;
  const text::Tagger* tagger = &text::LexiconTagger::builtin();
  if (const auto cmd = rc.at("tagger_command").get<std::string>(); !cmd.empty()) {
    owned = std::make_unique<text::SubprocessTagger>(cmd);
    tagger = owned.get();
  } else if (const auto lex = rc.at("lexicon").get<std::string>(); !lex.empty()) {
    owned = std::make_unique<text::LexiconTagger>(text::LexiconTagger::from_file(lex));
    tagger = owned.get();
  }

  const metrics::CurveOptions copts{*denom};
  const metrics::CorpusAnalysis corpus(games, *tagger);
  std::size_t trials = 0;
  for (const auto& g : games) trials += g.trials().size();

  Json report = {{"config_hash", rc.hash()},
                 {"games", games.size()},
                 {"excluded_incomplete", excluded},
                 {"trials", trials},
                 {"wnr_denominator", metrics::to_string(*denom)},
                 {"tagger", tagger->name()},
                 {"curves", curves_json(corpus.repetition_curves(copts))}};

  std::ostringstream csv;
  csv << "group,repetition,metric,mean,se,count\n";
  curves_csv(csv, "all", corpus.repetition_curves(copts));

  const auto group_by = rc.at("group_by").get<std::string>();
  Json groups = Json::object();
  if (!group_by.empty() && !games.empty()) {
    std::map<std::string, std::vector<GameState>> by_group;
    for (const auto& g : games) by_group[group_key(g, group_by)].push_back(g);
    for (const auto& [key, members] : by_group) {
      const auto curves = metrics::repetition_curves(members, *tagger, copts);
      groups[key] = {{"games", members.size()}, {"curves", curves_json(curves)}};
      curves_csv(csv, key, curves);
    }
    if (by_group.size() == 2) {
      // Per-repetition Welch tests between the two groups.
      std::map<std::string, std::map<int, std::map<std::string, std::vector<double>>>> raw;
      for (std::size_t gi = 0; gi < games.size(); ++gi) {
        const auto key = group_key(games[gi], group_by);
        const auto& ts = games[gi].trials();
        for (std::size_t t = 0; t < ts.size(); ++t) {
          auto& cell = raw[key][ts[t].repetition];
          cell["length"].push_back(static_cast<double>(corpus.analysis(gi, t).length()));
          cell["accuracy"].push_back(ts[t].correct() ? 1.0 : 0.0);
          if (auto rt = ts[t].meta.find("response_time_ms"); rt != ts[t].meta.end() && rt->is_number()) {
            cell["response_time_ms"].push_back(rt->get<double>());
          }
        }
      }
      const auto a = by_group.begin()->first;
      const auto b = std::next(by_group.begin())->first;
      Json tests = Json::array();
      for (const auto& [rep, cell_a] : raw[a]) {
        auto& cell_b = raw[b][rep];
        Json row = {{"repetition", rep}};
        for (const char* metric : {"length", "accuracy", "response_time_ms"}) {
          row[metric] = welch_json(cell_a.count(metric) ? cell_a.at(metric) : std::vector<double>{},
                                   cell_b.count(metric) ? cell_b.at(metric) : std::vector<double>{});
        }
        tests.push_back(std::move(row));
      }
      report["comparison"] = {{"a", a}, {"b", b}, {"welch", std::move(tests)}};
    }
  }
  report["groups"] = std::move(groups);

  // Speaker consistency from late-game WND, one speaker per game.
  std::map<std::string, double> late;
  for (std::size_t gi = 0; gi < games.size(); ++gi) {
    if (auto v = corpus.late_game_wnd(gi, positive_int(rc, "late_blocks", 1))) late[games[gi].game_id()] = *v;
  }
  Json consistency = {{"late_game_wnd", late}, {"threshold", rc.at("consistency_threshold").get<double>()}};
  const int k_max = std::min<int>(positive_int(rc, "gmm_k_max", 1), static_cast<int>(late.size()) - 1);
  if (k_max >= 1) {
    std::vector<double> data;
    for (const auto& [id, v] : late) data.push_back(v);
    std::vector<std::uint64_t> seeds;
    for (int s = 0; s < positive_int(rc, "gmm_seeds", 1); ++s) seeds.push_back(static_cast<std::uint64_t>(s));
    const auto sel = gmm::fit_gmm_1d(data, 1, k_max, seeds);
    consistency["gmm"] = {{"components", sel.best.components},
                          {"weights", sel.best.weights},
                          {"means", sel.best.means},
                          {"variances", sel.best.variances},
                          {"bic", sel.best.bic}};
    Json classes = Json::object();
    for (const auto& [id, c] :
         gmm::classify_speaker_consistency(late, sel.best, rc.at("consistency_threshold").get<double>())) {
      classes[id] = gmm::to_string(c);
    }
    consistency["classes"] = std::move(classes);
  } else {
    consistency["gmm"] = nullptr;
    consistency["note"] = "too few speakers for a mixture fit";
  }
  report["consistency"] = std::move(consistency);

  const auto dest = rc.at("out").get<std::string>();
  open_output(dest) << report.dump(2) << '\n';
  if (const auto csv_path = rc.at("csv").get<std::string>(); !csv_path.empty()) open_output(csv_path) << csv.str();
  out << "analyzed " << games.size() << " games, " << trials << " trials -> " << dest << '\n';
  return kOk;
}

int cmd_serve(const config::RunConfig& rc, std::ostream& out) {
  study::StudyConfig cfg;
  cfg.contexts = load_contexts(required_path(rc, "contexts", "contexts"));
  cfg.seed = rc.at("seed").get<std::uint64_t>();
  cfg.trials_per_game = positive_int(rc, "trials_per_game", 1);
  cfg.rt_cap_ms = positive_int(rc, "rt_cap_ms", 1);
  cfg.treatment_probability = rc.at("treatment_probability").get<double>();
  for (const auto& [kind, color] : rc.at("colors").items()) {
    auto k = study::parse_speaker_kind(kind);
    if (!k) throw InputError("unknown speaker kind '" + kind + "' in colors");
    cfg.colors[*k] = color.get<std::string>();
  }
  agents::AgentResources res;
  res.limiter = std::make_shared<agents::RequestLimiter>(positive_int(rc, "max_inflight", 1));
  res.contexts = cfg.contexts;
  if (const Json& agents_spec = rc.at("agents"); !agents_spec.is_null()) {
    for (const auto& [kind, spec] : agents_spec.items()) {
      auto k = study::parse_speaker_kind(kind);
      if (!k || !study::is_model(*k)) throw InputError("agents: '" + kind + "' is not a model speaker kind");
      cfg.speakers[*k] = agents::make_speaker(spec, res);
    }
  }

  const auto log_path = rc.at("event_log").get<std::string>();
  std::unique_ptr<study::StudyService> svc;
  auto log = std::make_shared<std::ofstream>();
  if (std::filesystem::exists(log_path)) {
    auto in = open_input(log_path);
    log->open(log_path, std::ios::app | std::ios::binary);
    if (!*log) throw ServiceError("cannot append to event log '" + log_path + "'");
    svc = study::StudyService::replay(cfg, in, log);
    spdlog::info("replayed {} events from {}", svc->events().size(), log_path);
  } else {
    log->open(log_path, std::ios::binary);
    if (!*log) throw ServiceError("cannot create event log '" + log_path + "'");
    svc = std::make_unique<study::StudyService>(cfg, log);
  }

  study::ServerOptions opts;
  opts.host = rc.at("host").get<std::string>();
  opts.port = positive_int(rc, "port", 0);
  opts.ws_port = positive_int(rc, "ws_port", 0);
  opts.config_hash = rc.hash();
  study::StudyServer server(*svc, opts);

  sigset_t set, old;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, &old);
  try {
    server.start();
  } catch (...) {
    pthread_sigmask(SIG_SETMASK, &old, nullptr);
    throw;
  }
  out << "serving http=" << opts.host << ':' << server.http_port() << " ws=" << opts.host << ':' << server.ws_port()
      << std::endl;
  int sig = 0;
  sigwait(&set, &sig);
  spdlog::info("signal {} received, shutting down", sig);
  server.stop();
  log->flush();
  pthread_sigmask(SIG_SETMASK, &old, nullptr);
  out << "stopped after " << svc->events().size() << " events" << std::endl;
  return kOk;
}

int cmd_export_study(const config::RunConfig& rc, std::ostream& out) {
  const auto path = required_path(rc, "event_log", "event-log");
  auto in = open_input(path);
  auto svc = study::StudyService::replay(study::StudyConfig{}, in, nullptr);
  auto result = svc->export_study({rc.at("include_incomplete").get<bool>()});
  const auto hash = rc.hash();
  for (auto& g : result.games) g.meta()["config_hash"] = hash;
  const auto dir = rc.at("out_dir").get<std::string>();
  study::write_export(result, dir);
  Json manifest = {{"config_hash", hash},
                   {"event_log", path},
                   {"events", svc->events().size()},
                   {"included_sessions", result.included_sessions},
                   {"excluded_sessions", result.excluded_sessions},
                   {"games", result.games.size()}};
  open_output((std::filesystem::path(dir) / "manifest.json").string()) << manifest.dump(2) << '\n';
  out << "exported " << result.games.size() << " games from " << result.included_sessions.size() << " sessions ("
      << result.excluded_sessions.size() << " excluded) -> " << dir << '\n';
  return kOk;
}

}  // namespace refgame::cli
