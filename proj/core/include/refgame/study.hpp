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

#pragma once

// Human-in-the-loop study sessions. Every state change is an event appended
// to a JSONL log before it is applied, and a service rebuilt from the log
// reaches the same state. Randomized outcomes (assignments, targets, display
// orders, model utterances) are stored in the events, so replay needs no RNG.

#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "refgame/agents.hpp"
#include "refgame/game.hpp"
#include "refgame/rng.hpp"

namespace refgame::study {

enum class SpeakerKind { TreatmentModel, BaselineModel1, BaselineModel2, Human };
std::string_view to_string(SpeakerKind k);
std::optional<SpeakerKind> parse_speaker_kind(std::string_view s);
bool is_model(SpeakerKind k);

enum class SessionStatus { Active, Complete, Abandoned };
std::string_view to_string(SessionStatus s);

enum class Role { Speaker, Listener };
std::string_view to_string(Role r);

inline constexpr std::int64_t kCentsPerModelGame = 150;
inline constexpr std::int64_t kCentsPerHumanGame = 300;
inline constexpr std::int64_t kCentsPerCorrect = 4;

// Per-game questions, then the comparative ones after both games.
const std::vector<std::string>& survey_questions();

// "2026-01-02T03:04:05.678Z"
std::string iso8601_utc(std::chrono::system_clock::time_point t);

struct GameAssignment {
  std::string game_id;
  SpeakerKind speaker_kind = SpeakerKind::TreatmentModel;
  std::string color;  // what the participant sees instead of the kind
  std::size_t context_index = 0;
  int order = 0;
  Role role = Role::Listener;
};

struct SurveyResponse {
  std::optional<std::string> game_id;  // nullopt for comparative questions
  std::string question;
  int rating = 0;
};

struct Session {
  std::string session_id;
  std::string participant_id;
  std::optional<bool> consent;
  std::vector<GameAssignment> games;
  std::vector<SurveyResponse> surveys;
  SessionStatus status = SessionStatus::Active;
  bool queued = false;  // waiting for a human partner
  std::optional<std::string> completion_code;
  std::string created_at;
};

struct ActiveTrial {
  int trial_index = 0;
  std::string target;
  std::vector<std::string> display_order;
  std::optional<std::string> utterance;
  std::string started_at;
};

struct StudyGame {
  GameState state;
  SpeakerKind kind = SpeakerKind::TreatmentModel;
  std::string color;
  std::string listener_session;
  std::optional<std::string> speaker_session;  // human games
  std::optional<ActiveTrial> active;
};

struct Compensation {
  std::int64_t base_cents = 0;
  std::int64_t bonus_cents = 0;
  std::int64_t correct_trials = 0;
  std::int64_t total_cents() const { return base_cents + bonus_cents; }
};

struct StudyConfig {
  std::vector<Context> contexts;
  int trials_per_game = 20;
  std::int64_t rt_cap_ms = 10 * 60 * 1000;
  double treatment_probability = 0.5;
  std::map<SpeakerKind, std::string> colors = {{SpeakerKind::TreatmentModel, "blue"},
                                               {SpeakerKind::BaselineModel1, "green"},
                                               {SpeakerKind::BaselineModel2, "orange"},
                                               {SpeakerKind::Human, "gray"}};
  std::uint64_t seed = 0;
  // Model speakers by kind; a model game without one fails at next_trial.
  std::map<SpeakerKind, std::shared_ptr<agents::Speaker>> speakers;
  agents::DecodingParams decoding{1.0, 0.95, 1, 64};
  std::function<std::chrono::system_clock::time_point()> clock = [] { return std::chrono::system_clock::now(); };
};

struct StudyEvent {
  std::uint64_t seq = 0;
  std::string ts;
  std::string type;
  Json payload;
};
Json event_to_json(const StudyEvent& e);
StudyEvent event_from_json(const Json& j);

// First-game kinds: treatment with probability p, otherwise a uniformly
// chosen baseline; the second game is the complementary kind.
std::pair<SpeakerKind, SpeakerKind> draw_game_kinds(Rng& rng, double treatment_probability);

struct MatchResult {
  bool paired = false;
  std::string game_id;
  Role role = Role::Listener;
};

struct Feedback {
  std::string game_id;
  int trial_index = 0;
  std::string target;
  std::string guess;
  bool correct = false;
  std::int64_t response_time_ms = 0;
  bool rt_clamped = false;
  bool game_complete = false;
};

struct ExportFilters {
  bool include_incomplete = false;
};

struct ExportResult {
  std::vector<GameState> games;  // exported game logs, response times in trial meta
  std::string surveys_csv;
  std::string payments_csv;
  std::string exclusions_csv;
  std::vector<std::string> included_sessions;
  std::map<std::string, std::string> excluded_sessions;  // session -> reason
};

// Writes games.jsonl, surveys.csv, payments.csv and exclusions.csv.
void write_export(const ExportResult& result, const std::string& dir);

class StudyService {
 public:
  // log may be null (in-memory only).
  StudyService(StudyConfig config, std::shared_ptr<std::ostream> log);

  // Rebuilds state from a log, then keeps appending to `log`.
  static std::unique_ptr<StudyService> replay(StudyConfig config, std::istream& in, std::shared_ptr<std::ostream> log);

  Session create_session(const std::string& participant_id);
  void give_consent(const std::string& session_id, bool consent);
  std::vector<GameAssignment> assign_games(const std::string& session_id);
  MatchResult join_matchmaking(const std::string& session_id);
  // The participant's view of the current trial, starting one when needed.
  Json next_trial(const std::string& session_id, const std::string& game_id);
  void submit_message(const std::string& session_id, const std::string& game_id, int trial_index,
                      const std::string& utterance);
  Feedback submit_guess(const std::string& session_id, const std::string& game_id, int trial_index,
                        const std::string& guess, std::int64_t response_time_ms);
  void submit_survey(const std::string& session_id, const SurveyResponse& r);
  void abandon(const std::string& session_id);
  // Requires a complete session; the code is stable once issued.
  std::string completion_code(const std::string& session_id);

  Compensation compute_compensation(const std::string& session_id) const;
  ExportResult export_study(const ExportFilters& filters) const;

  // Read-only views.
  Session session(const std::string& session_id) const;
  StudyGame game(const std::string& game_id) const;
  Json session_view(const std::string& session_id) const;
  // Current trial as seen by the participant, without starting one.
  Json trial_view(const std::string& session_id, const std::string& game_id) const;
  std::vector<StudyEvent> events() const;
  std::size_t session_count() const;

  // Called after every applied event, outside the service lock.
  void set_event_sink(std::function<void(const StudyEvent&)> sink);

 private:
  StudyEvent emit_locked(std::string type, Json payload);
  void apply(const StudyEvent& e);
  void notify(const StudyEvent& e);
  Session& session_locked(const std::string& session_id);
  const Session& session_locked(const std::string& session_id) const;
  StudyGame& game_locked(const std::string& game_id);
  const StudyGame& game_locked(const std::string& game_id) const;
  Role role_locked(const Session& s, const std::string& game_id) const;
  void require_active(const Session& s) const;
  Json trial_view_locked(const Session& s, const std::string& game_id) const;
  Compensation compensation_locked(const Session& s) const;
  bool session_games_complete(const Session& s) const;
  std::mutex& session_mutex(const std::string& session_id);
  Rng op_rng(std::uint64_t salt) const;
  std::string color_of(SpeakerKind k) const;

  StudyConfig config_;
  std::shared_ptr<std::ostream> log_;
  mutable std::mutex mu_;
  std::vector<StudyEvent> events_;
  std::map<std::string, Session> sessions_;
  std::map<std::string, std::string> participants_;  // participant -> session
  std::map<std::string, StudyGame> games_;
  std::vector<std::string> queue_;  // sessions waiting for a partner
  std::mutex session_mu_guard_;
  std::map<std::string, std::unique_ptr<std::mutex>> session_mu_;
  std::mutex sink_mu_;
  std::function<void(const StudyEvent&)> sink_;
};

}  // namespace refgame::study
