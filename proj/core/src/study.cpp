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

#include "refgame/study.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "refgame/config.hpp"
#include "refgame/errors.hpp"
#include "refgame/jsonl.hpp"

namespace refgame::study {
namespace {

constexpr int kBadRequest = 400;
constexpr int kForbidden = 403;
constexpr int kNotFound = 404;
constexpr int kConflict = 409;
constexpr int kBadGateway = 502;
constexpr int kUnavailable = 503;

std::string make_id(char prefix, std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c-%06zu", prefix, n);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string dollars(std::int64_t cents) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%lld.%02lld", static_cast<long long>(cents / 100), static_cast<long long>(cents % 100));
  return buf;
}

Json images_json(const Context& ctx, const std::vector<std::string>& order) {
  Json out = Json::array();
  for (const auto& id : order) {
    const ImageRef* img = ctx.find(id);
    out.push_back({{"id", img->id}, {"uri", img->uri}});
  }
  return out;
}

Json context_json(const Context& ctx) {
  Json out = Json::array();
  for (const auto& img : ctx.images()) out.push_back({{"id", img.id}, {"label", img.label}, {"uri", img.uri}});
  return out;
}

}  // namespace

std::string_view to_string(SpeakerKind k) {
  switch (k) {
    case SpeakerKind::TreatmentModel:
      return "treatment_model";
    case SpeakerKind::BaselineModel1:
      return "baseline_model_1";
    case SpeakerKind::BaselineModel2:
      return "baseline_model_2";
    case SpeakerKind::Human:
      return "human";
  }
  return "human";
}

std::optional<SpeakerKind> parse_speaker_kind(std::string_view s) {
  for (auto k : {SpeakerKind::TreatmentModel, SpeakerKind::BaselineModel1, SpeakerKind::BaselineModel2,
                 SpeakerKind::Human}) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

bool is_model(SpeakerKind k) { return k != SpeakerKind::Human; }

std::string_view to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::Active:
      return "active";
    case SessionStatus::Complete:
      return "complete";
    case SessionStatus::Abandoned:
      return "abandoned";
  }
  return "active";
}

std::string_view to_string(Role r) { return r == Role::Speaker ? "speaker" : "listener"; }

const std::vector<std::string>& survey_questions() {
  static const std::vector<std::string> kQuestions = {"mental_demand", "temporal_demand", "performance"};
  return kQuestions;
}

std::string iso8601_utc(std::chrono::system_clock::time_point t) {
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
  const std::time_t secs = static_cast<std::time_t>(ms >= 0 ? ms / 1000 : (ms - 999) / 1000);
  const long long frac = ms - static_cast<long long>(secs) * 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[80];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(frac));
  return out;
}

Json event_to_json(const StudyEvent& e) {
  return {{"seq", e.seq}, {"ts", e.ts}, {"type", e.type}, {"payload", e.payload}};
}

StudyEvent event_from_json(const Json& j) {
  try {
    return {j.at("seq").get<std::uint64_t>(), j.at("ts").get<std::string>(), j.at("type").get<std::string>(),
            j.at("payload")};
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed study event: ") + e.what());
  }
}

std::pair<SpeakerKind, SpeakerKind> draw_game_kinds(Rng& rng, double p) {
  const bool treatment_first = rng.uniform01() < p;
  const SpeakerKind baseline =
      rng.uniform_index(2) == 0 ? SpeakerKind::BaselineModel1 : SpeakerKind::BaselineModel2;
  if (treatment_first) return {SpeakerKind::TreatmentModel, baseline};
  return {baseline, SpeakerKind::TreatmentModel};
}

StudyService::StudyService(StudyConfig config, std::shared_ptr<std::ostream> log)
    : config_(std::move(config)), log_(std::move(log)) {
  for (const auto& ctx : config_.contexts) {
    if (config_.trials_per_game <= 0 || config_.trials_per_game % static_cast<int>(ctx.size()) != 0) {
      throw InputError("trials per game must be a positive multiple of every context size");
    }
  }
  if (config_.rt_cap_ms <= 0) throw InputError("response-time cap must be positive");
}

std::unique_ptr<StudyService> StudyService::replay(StudyConfig config, std::istream& in,
                                                   std::shared_ptr<std::ostream> log) {
  auto svc = std::make_unique<StudyService>(std::move(config), nullptr);
  for_each_jsonl(in, [&](const Json& j, std::size_t line) {
    StudyEvent e = event_from_json(j);
    if (e.seq != svc->events_.size() + 1) {
      throw InputError("event log line " + std::to_string(line) + ": expected seq " +
                       std::to_string(svc->events_.size() + 1));
    }
    try {
      svc->apply(e);
    } catch (const std::exception& ex) {
      throw InputError("event log line " + std::to_string(line) + ": " + ex.what());
    }
    svc->events_.push_back(std::move(e));
  });
  svc->log_ = std::move(log);
  return svc;
}

StudyEvent StudyService::emit_locked(std::string type, Json payload) {
  StudyEvent e{events_.size() + 1, iso8601_utc(config_.clock()), std::move(type), std::move(payload)};
  if (log_) {
    *log_ << event_to_json(e).dump() << '\n';
    log_->flush();
    if (!*log_) throw ServiceError("study event log is not writable");
  }
  apply(e);
  events_.push_back(e);
  return e;
}

void StudyService::notify(const StudyEvent& e) {
  std::function<void(const StudyEvent&)> sink;
  {
    std::lock_guard lk(sink_mu_);
    sink = sink_;
  }
  if (sink) sink(e);
}

void StudyService::set_event_sink(std::function<void(const StudyEvent&)> sink) {
  std::lock_guard lk(sink_mu_);
  sink_ = std::move(sink);
}

Rng StudyService::op_rng(std::uint64_t salt) const {
  return Rng(derive_seed(config_.seed, (events_.size() + 1) * 16 + salt));
}

std::string StudyService::color_of(SpeakerKind k) const {
  auto it = config_.colors.find(k);
  return it != config_.colors.end() ? it->second : std::string(to_string(k));
}

std::mutex& StudyService::session_mutex(const std::string& session_id) {
  std::lock_guard lk(session_mu_guard_);
  auto& m = session_mu_[session_id];
  if (!m) m = std::make_unique<std::mutex>();
  return *m;
}

Session& StudyService::session_locked(const std::string& id) {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw StudyError(kNotFound, "unknown session '" + id + "'");
  return it->second;
}

const Session& StudyService::session_locked(const std::string& id) const {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw StudyError(kNotFound, "unknown session '" + id + "'");
  return it->second;
}

StudyGame& StudyService::game_locked(const std::string& id) {
  auto it = games_.find(id);
  if (it == games_.end()) throw StudyError(kNotFound, "unknown game '" + id + "'");
  return it->second;
}

const StudyGame& StudyService::game_locked(const std::string& id) const {
  auto it = games_.find(id);
  if (it == games_.end()) throw StudyError(kNotFound, "unknown game '" + id + "'");
  return it->second;
}

Role StudyService::role_locked(const Session& s, const std::string& game_id) const {
  for (const auto& g : s.games) {
    if (g.game_id == game_id) return g.role;
  }
  throw StudyError(kForbidden, "game '" + game_id + "' is not assigned to session '" + s.session_id + "'");
}

void StudyService::require_active(const Session& s) const {
  if (s.status != SessionStatus::Active) {
    throw StudyError(kConflict, "session '" + s.session_id + "' is " + std::string(to_string(s.status)));
  }
}

bool StudyService::session_games_complete(const Session& s) const {
  if (s.games.empty()) return false;
  return std::all_of(s.games.begin(), s.games.end(),
                     [&](const GameAssignment& a) { return games_.at(a.game_id).state.complete(); });
}

void StudyService::apply(const StudyEvent& e) {
  const Json& p = e.payload;
  const auto& type = e.type;
  // Games carry their context and length so a log replays without the
  // server's configuration.
  auto new_game = [&](const Json& spec, const std::string& game_id, SpeakerKind kind, std::size_t ctx_index,
                      const std::string& listener, std::optional<std::string> speaker) {
    if (games_.count(game_id)) throw InputError("duplicate game id '" + game_id + "'");
    Context ctx;
    if (spec.contains("context")) {
      std::vector<ImageRef> images;
      for (const auto& img : spec.at("context")) {
        images.push_back({img.at("id").get<std::string>(), img.at("label").get<std::string>(),
                          img.value("uri", img.at("id").get<std::string>())});
      }
      ctx = Context(std::move(images));
    } else {
      if (ctx_index >= config_.contexts.size()) throw InputError("context index out of range");
      ctx = config_.contexts[ctx_index];
    }
    StudyGame g;
    g.state = GameState(game_id, std::move(ctx), spec.value("num_trials", config_.trials_per_game),
                        spec.value("seed", derive_seed(config_.seed, games_.size())));
    g.kind = kind;
    g.color = spec.value("color", color_of(kind));
    g.listener_session = listener;
    g.speaker_session = std::move(speaker);
    g.state.meta() = {{"speaker_kind", to_string(kind)}, {"color", g.color}, {"context_index", ctx_index}};
    games_.emplace(game_id, std::move(g));
  };

  if (type == "session_created") {
    Session s;
    s.session_id = p.at("session_id").get<std::string>();
    s.participant_id = p.at("participant_id").get<std::string>();
    s.created_at = e.ts;
    if (participants_.count(s.participant_id)) throw InputError("participant already has a session");
    participants_[s.participant_id] = s.session_id;
    sessions_.emplace(s.session_id, std::move(s));
  } else if (type == "consent") {
    session_locked(p.at("session_id").get<std::string>()).consent = p.at("consent").get<bool>();
  } else if (type == "games_assigned") {
    Session& s = session_locked(p.at("session_id").get<std::string>());
    for (const auto& a : p.at("games")) {
      GameAssignment ga;
      ga.game_id = a.at("game_id").get<std::string>();
      auto kind = parse_speaker_kind(a.at("speaker_kind").get<std::string>());
      if (!kind) throw InputError("unknown speaker kind");
      ga.speaker_kind = *kind;
      ga.context_index = a.at("context_index").get<std::size_t>();
      ga.order = a.at("order").get<int>();
      ga.role = Role::Listener;
      new_game(a, ga.game_id, ga.speaker_kind, ga.context_index, s.session_id, std::nullopt);
      ga.color = games_.at(ga.game_id).color;
      auto& meta = games_.at(ga.game_id).state.meta();
      meta["order"] = ga.order;
      meta["listener_session"] = s.session_id;
      meta["participant_id"] = s.participant_id;
      s.games.push_back(std::move(ga));
    }
  } else if (type == "queued") {
    Session& s = session_locked(p.at("session_id").get<std::string>());
    s.queued = true;
    queue_.push_back(s.session_id);
  } else if (type == "matched") {
    const auto game_id = p.at("game_id").get<std::string>();
    const auto speaker = p.at("speaker_session").get<std::string>();
    const auto listener = p.at("listener_session").get<std::string>();
    const auto ctx_index = p.at("context_index").get<std::size_t>();
    Session& sp = session_locked(speaker);
    Session& li = session_locked(listener);
    new_game(p, game_id, SpeakerKind::Human, ctx_index, listener, speaker);
    auto& meta = games_.at(game_id).state.meta();
    meta["order"] = 0;
    meta["listener_session"] = listener;
    meta["speaker_session"] = speaker;
    meta["participant_id"] = li.participant_id;
    meta["speaker_participant_id"] = sp.participant_id;
    const auto& color = games_.at(game_id).color;
    sp.games.push_back({game_id, SpeakerKind::Human, color, ctx_index, 0, Role::Speaker});
    li.games.push_back({game_id, SpeakerKind::Human, color, ctx_index, 0, Role::Listener});
    sp.queued = li.queued = false;
    std::erase(queue_, speaker);
    std::erase(queue_, listener);
  } else if (type == "trial_started") {
    StudyGame& g = game_locked(p.at("game_id").get<std::string>());
    ActiveTrial t;
    t.trial_index = p.at("trial_index").get<int>();
    if (g.active || t.trial_index != static_cast<int>(g.state.trials().size())) {
      throw InputError("trial started out of order");
    }
    t.target = p.at("target").get<std::string>();
    t.display_order = p.at("display_order").get<std::vector<std::string>>();
    if (p.contains("utterance") && !p.at("utterance").is_null()) t.utterance = p.at("utterance").get<std::string>();
    t.started_at = e.ts;
    schedule_target(g.state, t.target);
    g.active = std::move(t);
  } else if (type == "message") {
    StudyGame& g = game_locked(p.at("game_id").get<std::string>());
    if (!g.active || g.active->trial_index != p.at("trial_index").get<int>()) throw InputError("message out of order");
    g.active->utterance = p.at("utterance").get<std::string>();
  } else if (type == "guess") {
    StudyGame& g = game_locked(p.at("game_id").get<std::string>());
    if (!g.active || g.active->trial_index != p.at("trial_index").get<int>() || !g.active->utterance) {
      throw InputError("guess out of order");
    }
    Trial t;
    t.target = g.active->target;
    t.utterance = *g.active->utterance;
    t.guess = p.at("guess").get<std::string>();
    t.meta = {{"response_time_ms", p.at("response_time_ms").get<std::int64_t>()},
              {"rt_clamped", p.value("rt_clamped", false)},
              {"display_order", g.active->display_order},
              {"feedback_shown", true},
              {"started_at", g.active->started_at},
              {"guessed_at", e.ts}};
    g.state = record_trial(std::move(g.state), std::move(t));
    g.active.reset();
    if (g.state.complete()) {
      for (const auto* sid : {&g.listener_session, g.speaker_session ? &*g.speaker_session : nullptr}) {
        if (sid == nullptr) continue;
        Session& s = session_locked(*sid);
        if (s.status == SessionStatus::Active && session_games_complete(s)) s.status = SessionStatus::Complete;
      }
    }
  } else if (type == "survey") {
    Session& s = session_locked(p.at("session_id").get<std::string>());
    SurveyResponse r;
    if (p.contains("game_id") && !p.at("game_id").is_null()) r.game_id = p.at("game_id").get<std::string>();
    r.question = p.at("question").get<std::string>();
    r.rating = p.at("rating").get<int>();
    s.surveys.push_back(std::move(r));
  } else if (type == "abandoned") {
    Session& s = session_locked(p.at("session_id").get<std::string>());
    s.status = SessionStatus::Abandoned;
    s.queued = false;
    std::erase(queue_, s.session_id);
  } else if (type == "completion_code") {
    session_locked(p.at("session_id").get<std::string>()).completion_code = p.at("code").get<std::string>();
  } else {
    throw InputError("unknown study event type '" + type + "'");
  }
}

Session StudyService::create_session(const std::string& participant_id) {
  if (participant_id.empty()) throw StudyError(kBadRequest, "participant_id is required");
  StudyEvent e;
  Session out;
  {
    std::lock_guard lk(mu_);
    if (participants_.count(participant_id)) {
      throw StudyError(kConflict, "participant '" + participant_id + "' already has a session");
    }
    const std::string sid = make_id('s', sessions_.size() + 1);
    e = emit_locked("session_created", {{"session_id", sid}, {"participant_id", participant_id}});
    out = sessions_.at(sid);
  }
  notify(e);
  return out;
}

void StudyService::give_consent(const std::string& session_id, bool consent) {
  StudyEvent e;
  {
    std::lock_guard lk(mu_);
    Session& s = session_locked(session_id);
    require_active(s);
    if (s.consent) throw StudyError(kConflict, "consent already recorded");
    e = emit_locked("consent", {{"session_id", session_id}, {"consent", consent}});
  }
  notify(e);
}

std::vector<GameAssignment> StudyService::assign_games(const std::string& session_id) {
  StudyEvent e;
  std::vector<GameAssignment> out;
  {
    std::lock_guard lk(mu_);
    Session& s = session_locked(session_id);
    require_active(s);
    if (s.consent != true) throw StudyError(kForbidden, "consent has not been given");
    if (!s.games.empty() || s.queued) throw StudyError(kConflict, "games already assigned");
    const std::size_t n = config_.contexts.size();
    if (n < 2) throw StudyError(kUnavailable, "no contexts available");
    Rng rng = op_rng(1);
    const auto [first, second] = draw_game_kinds(rng, config_.treatment_probability);
    const std::size_t a = rng.uniform_index(n);
    std::size_t b = rng.uniform_index(n - 1);
    if (b >= a) ++b;
    Json games = Json::array();
    games.push_back({{"game_id", make_id('g', games_.size() + 1)},
                     {"speaker_kind", to_string(first)},
                     {"color", color_of(first)},
                     {"seed", derive_seed(config_.seed, games_.size())},
                     {"context_index", a},
                     {"context", context_json(config_.contexts[a])},
                     {"num_trials", config_.trials_per_game},
                     {"order", 0}});
    games.push_back({{"game_id", make_id('g', games_.size() + 2)},
                     {"speaker_kind", to_string(second)},
                     {"color", color_of(second)},
                     {"seed", derive_seed(config_.seed, games_.size() + 1)},
                     {"context_index", b},
                     {"context", context_json(config_.contexts[b])},
                     {"num_trials", config_.trials_per_game},
                     {"order", 1}});
    e = emit_locked("games_assigned", {{"session_id", session_id}, {"games", std::move(games)}});
    out = s.games;
  }
  notify(e);
  return out;
}

MatchResult StudyService::join_matchmaking(const std::string& session_id) {
  StudyEvent e;
  MatchResult out;
  {
    std::lock_guard lk(mu_);
    Session& s = session_locked(session_id);
    require_active(s);
    if (s.consent != true) throw StudyError(kForbidden, "consent has not been given");
    if (s.queued) return out;
    if (!s.games.empty()) throw StudyError(kConflict, "session already has games");
    std::optional<std::string> partner;
    for (const auto& q : queue_) {
      const Session& other = sessions_.at(q);
      if (q != session_id && other.participant_id != s.participant_id && other.status == SessionStatus::Active) {
        partner = q;
        break;
      }
    }
    if (!partner) {
      e = emit_locked("queued", {{"session_id", session_id}});
    } else {
      if (config_.contexts.empty()) throw StudyError(kUnavailable, "no contexts available");
      Rng rng = op_rng(2);
      const std::string gid = make_id('g', games_.size() + 1);
      const std::size_t ctx_index = rng.uniform_index(config_.contexts.size());
      e = emit_locked("matched", {{"game_id", gid},
                                  {"speaker_session", *partner},
                                  {"listener_session", session_id},
                                  {"context_index", ctx_index},
                                  {"color", color_of(SpeakerKind::Human)},
                                  {"seed", derive_seed(config_.seed, games_.size())},
                                  {"context", context_json(config_.contexts[ctx_index])},
                                  {"num_trials", config_.trials_per_game}});
      out = {true, gid, Role::Listener};
    }
  }
  notify(e);
  return out;
}

Json StudyService::trial_view_locked(const Session& s, const std::string& game_id) const {
  const Role role = role_locked(s, game_id);
  const StudyGame& g = game_locked(game_id);
  const auto& ctx = g.state.context();
  Json v = {{"game_id", game_id},
            {"role", to_string(role)},
            {"color", g.color},
            {"num_trials", g.state.num_trials()},
            {"trials_completed", g.state.trials().size()}};
  if (g.state.complete()) {
    v["status"] = "complete";
    v["images"] = images_json(ctx, ctx.ids());
    return v;
  }
  if (!g.active) {
    v["status"] = "not_started";
    v["trial_index"] = g.state.trials().size();
    v["images"] = images_json(ctx, ctx.ids());
    return v;
  }
  const ActiveTrial& t = *g.active;
  v["trial_index"] = t.trial_index;
  v["status"] = t.utterance ? "awaiting_guess" : "awaiting_message";
  v["images"] = images_json(ctx, t.display_order);
  v["utterance"] = t.utterance ? Json(*t.utterance) : Json(nullptr);
  if (role == Role::Speaker) v["target"] = t.target;
  return v;
}

Json StudyService::next_trial(const std::string& session_id, const std::string& game_id) {
  std::lock_guard session_lock(session_mutex(session_id));
  std::unique_lock lk(mu_);
  {
    const Session& s = session_locked(session_id);
    require_active(s);
    role_locked(s, game_id);
  }
  StudyGame& g = game_locked(game_id);
  if (g.state.complete() || g.active) return trial_view_locked(session_locked(session_id), game_id);

  GameState probe = g.state;
  Rng rng = op_rng(3);
  const std::string target = next_target(probe, rng);
  std::vector<std::string> order = g.state.context().ids();
  rng.shuffle(std::span(order));
  const int trial_index = static_cast<int>(g.state.trials().size());
  Json payload = {{"game_id", game_id}, {"trial_index", trial_index}, {"target", target}, {"display_order", order}};

  if (is_model(g.kind)) {
    auto it = config_.speakers.find(g.kind);
    if (it == config_.speakers.end() || !it->second) {
      throw StudyError(kUnavailable, "no speaker configured for " + std::string(to_string(g.kind)));
    }
    auto speaker = it->second;
    const Context ctx = g.state.context();
    const std::vector<Trial> history = g.state.trials();
    const std::uint64_t seed = derive_seed(g.state.seed(), static_cast<std::uint64_t>(trial_index));
    lk.unlock();
    std::string utterance;
    try {
      auto out = speaker->sample({ctx, history, target, seed}, config_.decoding);
      if (out.empty()) throw TransportError("", "speaker returned no utterance");
      utterance = out.front();
    } catch (const TransportError& e) {
      throw StudyError(kBadGateway, std::string("speaker unavailable: ") + e.what());
    }
    lk.lock();
    StudyGame& g2 = game_locked(game_id);
    if (g2.active || static_cast<int>(g2.state.trials().size()) != trial_index) {
      return trial_view_locked(session_locked(session_id), game_id);
    }
    payload["utterance"] = utterance;
  }
  StudyEvent e = emit_locked("trial_started", std::move(payload));
  Json view = trial_view_locked(session_locked(session_id), game_id);
  lk.unlock();
  notify(e);
  return view;
}

void StudyService::submit_message(const std::string& session_id, const std::string& game_id, int trial_index,
                                  const std::string& utterance) {
  StudyEvent e;
  {
    std::lock_guard lk(mu_);
    const Session& s = session_locked(session_id);
    require_active(s);
    if (role_locked(s, game_id) != Role::Speaker) throw StudyError(kForbidden, "only the speaker sends messages");
    StudyGame& g = game_locked(game_id);
    if (!g.active || g.active->trial_index != trial_index) throw StudyError(kConflict, "no such trial in progress");
    if (g.active->utterance) throw StudyError(kConflict, "message already sent for this trial");
    if (utterance.find_first_not_of(" \t\r\n") == std::string::npos) {
      throw StudyError(kBadRequest, "message is empty");
    }
    e = emit_locked("message", {{"game_id", game_id}, {"trial_index", trial_index}, {"utterance", utterance}});
  }
  notify(e);
}

Feedback StudyService::submit_guess(const std::string& session_id, const std::string& game_id, int trial_index,
                                    const std::string& guess, std::int64_t response_time_ms) {
  StudyEvent e;
  Feedback fb;
  {
    std::lock_guard lk(mu_);
    const Session& s = session_locked(session_id);
    require_active(s);
    if (role_locked(s, game_id) != Role::Listener) throw StudyError(kForbidden, "only the listener guesses");
    StudyGame& g = game_locked(game_id);
    if (trial_index >= 0 && trial_index < static_cast<int>(g.state.trials().size())) {
      throw StudyError(kConflict, "trial " + std::to_string(trial_index) + " already has a guess");
    }
    if (!g.active || g.active->trial_index != trial_index) {
      throw StudyError(kConflict, "trial " + std::to_string(trial_index) + " is not awaiting a guess");
    }
    if (!g.active->utterance) throw StudyError(kConflict, "no message for this trial yet");
    if (!g.state.context().contains(guess)) throw StudyError(kBadRequest, "unknown image '" + guess + "'");
    if (response_time_ms < 0) throw StudyError(kBadRequest, "response_time_ms must be >= 0");
    const bool clamped = response_time_ms > config_.rt_cap_ms;
    const std::int64_t rt = clamped ? config_.rt_cap_ms : response_time_ms;
    if (clamped) spdlog::warn("{} trial {}: response time {} ms capped at {}", game_id, trial_index, response_time_ms, rt);
    const std::string target = g.active->target;
    e = emit_locked("guess", {{"game_id", game_id},
                              {"trial_index", trial_index},
                              {"guess", guess},
                              {"response_time_ms", rt},
                              {"rt_clamped", clamped}});
    fb = {game_id, trial_index, target, guess, guess == target, rt, clamped, g.state.complete()};
  }
  notify(e);
  return fb;
}

void StudyService::submit_survey(const std::string& session_id, const SurveyResponse& r) {
  StudyEvent e;
  {
    std::lock_guard lk(mu_);
    const Session& s = session_locked(session_id);
    if (s.status == SessionStatus::Abandoned) throw StudyError(kConflict, "session is abandoned");
    const auto& qs = survey_questions();
    if (std::find(qs.begin(), qs.end(), r.question) == qs.end()) {
      throw StudyError(kBadRequest, "unknown survey question '" + r.question + "'");
    }
    if (r.rating < 1 || r.rating > 5) throw StudyError(kBadRequest, "rating must be an integer in 1..5");
    if (r.game_id) {
      role_locked(s, *r.game_id);
      if (!game_locked(*r.game_id).state.complete()) throw StudyError(kConflict, "game is not finished");
    } else {
      if (s.games.size() < 2 || !session_games_complete(s)) {
        throw StudyError(kConflict, "comparative questions follow both games");
      }
    }
    for (const auto& prev : s.surveys) {
      if (prev.game_id == r.game_id && prev.question == r.question) throw StudyError(kConflict, "already answered");
    }
    e = emit_locked("survey", {{"session_id", session_id},
                               {"game_id", r.game_id ? Json(*r.game_id) : Json(nullptr)},
                               {"question", r.question},
                               {"rating", r.rating}});
  }
  notify(e);
}

void StudyService::abandon(const std::string& session_id) {
  StudyEvent e;
  {
    std::lock_guard lk(mu_);
    const Session& s = session_locked(session_id);
    require_active(s);
    e = emit_locked("abandoned", {{"session_id", session_id}});
  }
  spdlog::info("session {} abandoned", session_id);
  notify(e);
}

std::string StudyService::completion_code(const std::string& session_id) {
  StudyEvent e;
  std::string code;
  {
    std::lock_guard lk(mu_);
    const Session& s = session_locked(session_id);
    if (s.status != SessionStatus::Complete) throw StudyError(kConflict, "session is not complete");
    if (s.completion_code) return *s.completion_code;
    code = config::sha256_hex(std::to_string(config_.seed) + ":" + session_id).substr(0, 12);
    std::transform(code.begin(), code.end(), code.begin(), [](unsigned char c) { return std::toupper(c); });
    e = emit_locked("completion_code", {{"session_id", session_id}, {"code", code}});
  }
  notify(e);
  return code;
}

Compensation StudyService::compensation_locked(const Session& s) const {
  Compensation c;
  for (const auto& a : s.games) {
    const StudyGame& g = games_.at(a.game_id);
    if (!g.state.complete()) continue;
    c.base_cents += is_model(g.kind) ? kCentsPerModelGame : kCentsPerHumanGame;
    for (const auto& t : g.state.trials()) c.correct_trials += t.correct() ? 1 : 0;
  }
  c.bonus_cents = c.correct_trials * kCentsPerCorrect;
  return c;
}

Compensation StudyService::compute_compensation(const std::string& session_id) const {
  std::lock_guard lk(mu_);
  const Session& s = session_locked(session_id);
  if (s.status != SessionStatus::Complete) throw StudyError(kConflict, "session is not complete");
  return compensation_locked(s);
}

ExportResult StudyService::export_study(const ExportFilters& filters) const {
  std::lock_guard lk(mu_);
  ExportResult out;
  std::ostringstream excl;
  excl << "participant_id,session_id,reason\n";
  std::map<std::string, bool> included;
  for (const auto& [sid, s] : sessions_) {
    std::string reason;
    if (s.status == SessionStatus::Abandoned) {
      reason = "abandoned";
    } else if (s.consent != true) {
      reason = "no_consent";
    } else if (s.games.empty()) {
      reason = "no_games";
    } else if (s.status != SessionStatus::Complete) {
      reason = "incomplete";
    }
    if (!reason.empty() && !(filters.include_incomplete && reason == "incomplete")) {
      out.excluded_sessions[sid] = reason;
      excl << csv_field(s.participant_id) << ',' << csv_field(sid) << ',' << reason << '\n';
      spdlog::info("export: excluding session {} ({})", sid, reason);
      continue;
    }
    included[sid] = true;
    out.included_sessions.push_back(sid);
  }

  std::ostringstream surveys;
  surveys << "participant_id,session_id,game_id,speaker_kind,question,rating\n";
  std::ostringstream pay;
  pay << "participant_id,session_id,completion_code,games,correct_trials,base_cents,bonus_cents,total_cents,"
         "base_usd,bonus_usd,total_usd\n";
  std::map<std::string, bool> exported;
  for (const auto& sid : out.included_sessions) {
    const Session& s = sessions_.at(sid);
    for (const auto& a : s.games) {
      const StudyGame& g = games_.at(a.game_id);
      if (exported.count(a.game_id)) continue;
      if (!filters.include_incomplete && !g.state.complete()) continue;
      if (!included.count(g.listener_session)) continue;
      if (g.speaker_session && !included.count(*g.speaker_session)) continue;
      exported[a.game_id] = true;
      GameState gs = g.state;
      gs.meta()["session_id"] = g.listener_session;
      out.games.push_back(std::move(gs));
    }
    for (const auto& r : s.surveys) {
      std::string kind;
      if (r.game_id) kind = std::string(to_string(games_.at(*r.game_id).kind));
      surveys << csv_field(s.participant_id) << ',' << csv_field(sid) << ',' << csv_field(r.game_id.value_or(""))
              << ',' << kind << ',' << r.question << ',' << r.rating << '\n';
    }
    if (s.status == SessionStatus::Complete) {
      const Compensation c = compensation_locked(s);
      pay << csv_field(s.participant_id) << ',' << csv_field(sid) << ',' << s.completion_code.value_or("") << ','
          << s.games.size() << ',' << c.correct_trials << ',' << c.base_cents << ',' << c.bonus_cents << ','
          << c.total_cents() << ',' << dollars(c.base_cents) << ',' << dollars(c.bonus_cents) << ','
          << dollars(c.total_cents()) << '\n';
    }
  }
  out.surveys_csv = surveys.str();
  out.payments_csv = pay.str();
  out.exclusions_csv = excl.str();
  return out;
}

void write_export(const ExportResult& result, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path d(dir);
  {
    auto out = open_output((d / "games.jsonl").string());
    write_game_log(out, result.games);
  }
  open_output((d / "surveys.csv").string()) << result.surveys_csv;
  open_output((d / "payments.csv").string()) << result.payments_csv;
  open_output((d / "exclusions.csv").string()) << result.exclusions_csv;
}

Session StudyService::session(const std::string& session_id) const {
  std::lock_guard lk(mu_);
  return session_locked(session_id);
}

StudyGame StudyService::game(const std::string& game_id) const {
  std::lock_guard lk(mu_);
  return game_locked(game_id);
}

Json StudyService::session_view(const std::string& session_id) const {
  std::lock_guard lk(mu_);
  const Session& s = session_locked(session_id);
  Json games = Json::array();
  for (const auto& a : s.games) {
    const StudyGame& g = games_.at(a.game_id);
    games.push_back({{"game_id", a.game_id},
                     {"color", a.color},
                     {"order", a.order},
                     {"role", to_string(a.role)},
                     {"trials_completed", g.state.trials().size()},
                     {"num_trials", g.state.num_trials()},
                     {"complete", g.state.complete()}});
  }
  Json v = {{"session_id", s.session_id},
            {"participant_id", s.participant_id},
            {"status", to_string(s.status)},
            {"consent", s.consent ? Json(*s.consent) : Json(nullptr)},
            {"queued", s.queued},
            {"games", std::move(games)},
            {"surveys_answered", s.surveys.size()},
            {"created_at", s.created_at}};
  if (s.completion_code) v["completion_code"] = *s.completion_code;
  return v;
}

Json StudyService::trial_view(const std::string& session_id, const std::string& game_id) const {
  std::lock_guard lk(mu_);
  return trial_view_locked(session_locked(session_id), game_id);
}

std::vector<StudyEvent> StudyService::events() const {
  std::lock_guard lk(mu_);
  return events_;
}

std::size_t StudyService::session_count() const {
  std::lock_guard lk(mu_);
  return sessions_.size();
}

}  // namespace refgame::study
