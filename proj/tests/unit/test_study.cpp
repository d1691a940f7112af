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

#include <barrier>
#include <set>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>

#include "refgame/errors.hpp"
#include "refgame/study.hpp"
#include "study_fixtures.hpp"

namespace refgame::study {
namespace {

using refgame::testing::complete_model_session;
using refgame::testing::play_human_game;
using refgame::testing::play_model_game;
using refgame::testing::study_config;

int status_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const StudyError& e) {
    return e.http_status();
  }
  return 0;
}

TEST(Iso8601, UtcMillis) {
  EXPECT_EQ(iso8601_utc(std::chrono::system_clock::time_point(std::chrono::milliseconds(1767225600123))),
            "2026-01-01T00:00:00.123Z");
}

TEST(Sessions, CreateOncePerParticipant) {
  StudyService svc(study_config(), nullptr);
  const auto s = svc.create_session("p1");
  EXPECT_EQ(s.status, SessionStatus::Active);
  EXPECT_FALSE(s.consent);
  EXPECT_EQ(status_of([&] { svc.create_session("p1"); }), 409);
  EXPECT_EQ(status_of([&] { svc.create_session(""); }), 400);
  EXPECT_EQ(svc.session_count(), 1u);
}

TEST(Sessions, ConsentGatesGames) {
  StudyService svc(study_config(), nullptr);
  const auto sid = svc.create_session("p1").session_id;
  EXPECT_EQ(status_of([&] { svc.assign_games(sid); }), 403);
  EXPECT_EQ(status_of([&] { svc.join_matchmaking(sid); }), 403);
  svc.give_consent(sid, false);
  EXPECT_EQ(status_of([&] { svc.assign_games(sid); }), 403);
  EXPECT_EQ(status_of([&] { svc.give_consent(sid, true); }), 409);
  EXPECT_EQ(status_of([&] { svc.assign_games("nope"); }), 404);
}

TEST(Assignment, OneTreatmentOneBaselineDistinctContexts) {
  StudyService svc(study_config(), nullptr);
  for (int i = 0; i < 200; ++i) {
    const auto sid = svc.create_session("p" + std::to_string(i)).session_id;
    svc.give_consent(sid, true);
    const auto g = svc.assign_games(sid);
    ASSERT_EQ(g.size(), 2u);
    EXPECT_NE(g[0].context_index, g[1].context_index);
    EXPECT_EQ((g[0].speaker_kind == SpeakerKind::TreatmentModel) + (g[1].speaker_kind == SpeakerKind::TreatmentModel), 1);
    EXPECT_NE(g[0].speaker_kind, SpeakerKind::Human);
    EXPECT_NE(g[1].speaker_kind, SpeakerKind::Human);
    EXPECT_EQ(g[0].order, 0);
    EXPECT_EQ(g[1].order, 1);
    EXPECT_EQ(g[0].role, Role::Listener);
    // Colors mask the kind.
    EXPECT_EQ(g[0].color, study_config().colors.at(g[0].speaker_kind));
    EXPECT_EQ(status_of([&] { svc.assign_games(sid); }), 409);
  }
}

TEST(Assignment, FrequenciesMatchRule) {
  Rng rng(2024);
  int treatment_first = 0, baseline_first = 0, b1_given_baseline_first = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto [first, second] = draw_game_kinds(rng, 0.5);
    if (first == SpeakerKind::TreatmentModel) {
      ++treatment_first;
      EXPECT_NE(second, SpeakerKind::TreatmentModel);
    } else {
      ++baseline_first;
      b1_given_baseline_first += first == SpeakerKind::BaselineModel1;
      EXPECT_EQ(second, SpeakerKind::TreatmentModel);
    }
  }
  EXPECT_NEAR(treatment_first / double(draws), 0.5, 0.02);
  EXPECT_NEAR(b1_given_baseline_first / double(baseline_first), 0.5, 0.03);
}

TEST(Assignment, ServiceFrequenciesMatchRule) {
  auto cfg = study_config(77);
  StudyService svc(cfg, nullptr);
  int treatment_first = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto sid = svc.create_session("p" + std::to_string(i)).session_id;
    svc.give_consent(sid, true);
    treatment_first += svc.assign_games(sid)[0].speaker_kind == SpeakerKind::TreatmentModel;
  }
  EXPECT_NEAR(treatment_first / double(n), 0.5, 0.02);
}

TEST(Assignment, NeedsTwoContexts) {
  auto cfg = study_config();
  cfg.contexts.resize(1);
  StudyService svc(cfg, nullptr);
  const auto sid = svc.create_session("p").session_id;
  svc.give_consent(sid, true);
  EXPECT_EQ(status_of([&] { svc.assign_games(sid); }), 503);
}

TEST(Trials, ModelGameFlowAndFeedback) {
  StudyService svc(study_config(), nullptr);
  const auto sid = svc.create_session("p1").session_id;
  svc.give_consent(sid, true);
  const auto gid = svc.assign_games(sid)[0].game_id;
  const auto view = svc.next_trial(sid, gid);
  EXPECT_EQ(view["status"], "awaiting_guess");
  EXPECT_EQ(view["utterance"], "the one on the left");
  EXPECT_FALSE(view.contains("target"));
  EXPECT_EQ(view["images"].size(), 4u);
  // Repeated fetches return the same trial.
  EXPECT_EQ(svc.next_trial(sid, gid), view);
  const auto target = svc.game(gid).active->target;
  const auto fb = svc.submit_guess(sid, gid, 0, target, 1234);
  EXPECT_TRUE(fb.correct);
  EXPECT_EQ(fb.target, target);
  EXPECT_EQ(fb.response_time_ms, 1234);
  EXPECT_FALSE(fb.game_complete);
  const auto t = svc.game(gid).state.trials().at(0);
  EXPECT_EQ(t.meta["response_time_ms"], 1234);
  EXPECT_EQ(t.meta["feedback_shown"], true);
  EXPECT_EQ(t.meta["display_order"].size(), 4u);
}

TEST(Trials, GuessErrors) {
  StudyService svc(study_config(), nullptr);
  const auto sid = svc.create_session("p1").session_id;
  svc.give_consent(sid, true);
  const auto gid = svc.assign_games(sid)[0].game_id;
  svc.next_trial(sid, gid);
  const auto target = svc.game(gid).active->target;
  EXPECT_EQ(status_of([&] { svc.submit_guess(sid, gid, 0, "not-an-image", 10); }), 400);
  EXPECT_EQ(status_of([&] { svc.submit_guess(sid, gid, 0, target, -1); }), 400);
  EXPECT_EQ(status_of([&] { svc.submit_guess(sid, gid, 3, target, 10); }), 409);
  const auto ids = svc.game(gid).state.context().ids();
  const auto wrong = ids[0] == target ? ids[1] : ids[0];
  EXPECT_FALSE(svc.submit_guess(sid, gid, 0, wrong, 10).correct);
  // Duplicate: rejected, the first guess stands.
  EXPECT_EQ(status_of([&] { svc.submit_guess(sid, gid, 0, target, 10); }), 409);
  EXPECT_EQ(svc.game(gid).state.trials().at(0).guess, wrong);
  // A session cannot act on someone else's game.
  const auto other = svc.create_session("p2").session_id;
  svc.give_consent(other, true);
  svc.assign_games(other);
  EXPECT_EQ(status_of([&] { svc.next_trial(other, gid); }), 403);
}

TEST(Trials, ResponseTimeCapped) {
  auto cfg = study_config();
  cfg.rt_cap_ms = 5000;
  StudyService svc(cfg, nullptr);
  const auto sid = svc.create_session("p1").session_id;
  svc.give_consent(sid, true);
  const auto gid = svc.assign_games(sid)[0].game_id;
  svc.next_trial(sid, gid);
  const auto fb = svc.submit_guess(sid, gid, 0, svc.game(gid).active->target, 99999);
  EXPECT_EQ(fb.response_time_ms, 5000);
  EXPECT_TRUE(fb.rt_clamped);
  EXPECT_EQ(svc.game(gid).state.trials()[0].meta["rt_clamped"], true);
}

TEST(Trials, AbandonedSessionRejectsGuesses) {
  StudyService svc(study_config(), nullptr);
  const auto sid = svc.create_session("p1").session_id;
  svc.give_consent(sid, true);
  const auto gid = svc.assign_games(sid)[0].game_id;
  svc.next_trial(sid, gid);
  const auto target = svc.game(gid).active->target;
  svc.abandon(sid);
  EXPECT_EQ(svc.session(sid).status, SessionStatus::Abandoned);
  EXPECT_EQ(status_of([&] { svc.submit_guess(sid, gid, 0, target, 10); }), 409);
}

TEST(Trials, MissingSpeakerAndSpeakerOutage) {
  auto cfg = study_config();
  cfg.speakers.clear();
  StudyService svc(cfg, nullptr);
  const auto sid = svc.create_session("p1").session_id;
  svc.give_consent(sid, true);
  const auto gid = svc.assign_games(sid)[0].game_id;
  EXPECT_EQ(status_of([&] { svc.next_trial(sid, gid); }), 503);

  auto cfg2 = study_config();
  auto down = std::make_shared<agents::CallbackSpeaker>(
      [](const agents::SpeakerQuery&, const agents::DecodingParams&) -> std::vector<std::string> {
        throw TransportError("r", "endpoint down");
      });
  for (auto& [k, s] : cfg2.speakers) s = down;
  StudyService svc2(cfg2, nullptr);
  const auto sid2 = svc2.create_session("p1").session_id;
  svc2.give_consent(sid2, true);
  const auto gid2 = svc2.assign_games(sid2)[0].game_id;
  EXPECT_EQ(status_of([&] { svc2.next_trial(sid2, gid2); }), 502);
  EXPECT_FALSE(svc2.game(gid2).active);
}

TEST(Trials, BlocksScheduledLikeAnyGame) {
  StudyService svc(study_config(), nullptr);
  const auto sid = svc.create_session("p1").session_id;
  svc.give_consent(sid, true);
  const auto gid = svc.assign_games(sid)[0].game_id;
  play_model_game(svc, sid, gid, 20);
  const auto g = svc.game(gid).state;
  EXPECT_TRUE(g.complete());
  EXPECT_TRUE(validate_game(g).empty());
  EXPECT_EQ(accuracy(g), 1.0);
}

TEST(Surveys, Rules) {
  StudyService svc(study_config(), nullptr);
  const auto sid = svc.create_session("p1").session_id;
  svc.give_consent(sid, true);
  const auto games = svc.assign_games(sid);
  EXPECT_EQ(status_of([&] { svc.submit_survey(sid, {games[0].game_id, "mental_demand", 3}); }), 409);
  play_model_game(svc, sid, games[0].game_id, 10);
  EXPECT_EQ(status_of([&] { svc.submit_survey(sid, {games[0].game_id, "mental_demand", 0}); }), 400);
  EXPECT_EQ(status_of([&] { svc.submit_survey(sid, {games[0].game_id, "mental_demand", 6}); }), 400);
  EXPECT_EQ(status_of([&] { svc.submit_survey(sid, {games[0].game_id, "fun", 3}); }), 400);
  svc.submit_survey(sid, {games[0].game_id, "mental_demand", 2});
  EXPECT_EQ(status_of([&] { svc.submit_survey(sid, {games[0].game_id, "mental_demand", 4}); }), 409);
  EXPECT_EQ(status_of([&] { svc.submit_survey(sid, {std::nullopt, "performance", 4}); }), 409);
  play_model_game(svc, sid, games[1].game_id, 10);
  svc.submit_survey(sid, {std::nullopt, "performance", 4});
  EXPECT_EQ(svc.session(sid).surveys.size(), 2u);
}

TEST(Matchmaking, PairsInOrder) {
  StudyService svc(study_config(), nullptr);
  std::vector<std::string> sids;
  for (const char* p : {"p1", "p2"}) {
    sids.push_back(svc.create_session(p).session_id);
    svc.give_consent(sids.back(), true);
  }
  EXPECT_FALSE(svc.join_matchmaking(sids[0]).paired);
  EXPECT_TRUE(svc.session(sids[0]).queued);
  const auto m = svc.join_matchmaking(sids[1]);
  EXPECT_TRUE(m.paired);
  EXPECT_EQ(m.role, Role::Listener);
  EXPECT_FALSE(svc.session(sids[0]).queued);
  const auto s0 = svc.session(sids[0]), s1 = svc.session(sids[1]);
  ASSERT_EQ(s0.games.size(), 1u);
  EXPECT_EQ(s0.games[0].role, Role::Speaker);
  EXPECT_EQ(s1.games[0].role, Role::Listener);
  EXPECT_EQ(s0.games[0].speaker_kind, SpeakerKind::Human);
  EXPECT_EQ(status_of([&] { svc.join_matchmaking(sids[1]); }), 409);
}

TEST(Matchmaking, ConcurrentJoinsPairExactlyOnce) {
  for (int round = 0; round < 50; ++round) {
    StudyService svc(study_config(round), nullptr);
    std::vector<std::string> sids;
    for (const char* p : {"p1", "p2", "p3"}) {
      sids.push_back(svc.create_session(p).session_id);
      svc.give_consent(sids.back(), true);
    }
    svc.join_matchmaking(sids[0]);
    std::barrier sync(2);
    MatchResult r2, r3;
    std::thread t2([&] {
      sync.arrive_and_wait();
      r2 = svc.join_matchmaking(sids[1]);
    });
    std::thread t3([&] {
      sync.arrive_and_wait();
      r3 = svc.join_matchmaking(sids[2]);
    });
    t2.join();
    t3.join();
    ASSERT_EQ(r2.paired + r3.paired, 1) << "round " << round;
    const auto& loser = r2.paired ? sids[2] : sids[1];
    EXPECT_TRUE(svc.session(loser).queued);
    EXPECT_EQ(svc.session(sids[0]).games.size(), 1u);
  }
}

TEST(Matchmaking, HumanGameFlow) {
  StudyService svc(study_config(), nullptr);
  const auto a = svc.create_session("pa").session_id, b = svc.create_session("pb").session_id;
  svc.give_consent(a, true);
  svc.give_consent(b, true);
  svc.join_matchmaking(a);
  const auto gid = svc.join_matchmaking(b).game_id;
  const auto listener_view = svc.next_trial(b, gid);
  EXPECT_EQ(listener_view["status"], "awaiting_message");
  EXPECT_FALSE(listener_view.contains("target"));
  const auto speaker_view = svc.trial_view(a, gid);
  EXPECT_TRUE(speaker_view.contains("target"));
  EXPECT_EQ(status_of([&] { svc.submit_guess(b, gid, 0, speaker_view["target"], 5); }), 409);
  EXPECT_EQ(status_of([&] { svc.submit_message(b, gid, 0, "hi"); }), 403);
  EXPECT_EQ(status_of([&] { svc.submit_message(a, gid, 0, "   "); }), 400);
  svc.submit_message(a, gid, 0, "striped");
  EXPECT_EQ(status_of([&] { svc.submit_message(a, gid, 0, "again"); }), 409);
  EXPECT_EQ(status_of([&] { svc.submit_guess(a, gid, 0, speaker_view["target"], 5); }), 403);
  svc.submit_guess(b, gid, 0, speaker_view["target"].get<std::string>(), 5);
  play_human_game(svc, a, b, gid, 14);
  EXPECT_EQ(svc.session(a).status, SessionStatus::Complete);
  EXPECT_EQ(svc.session(b).status, SessionStatus::Complete);
}

TEST(Compensation, TwoModelGames) {
  StudyService svc(study_config(), nullptr);
  const auto sid = complete_model_session(svc, "p1", 14, 16);
  const auto c = svc.compute_compensation(sid);
  EXPECT_EQ(c.base_cents, 300);
  EXPECT_EQ(c.correct_trials, 30);
  EXPECT_EQ(c.bonus_cents, 120);
  EXPECT_EQ(c.total_cents(), 420);
}

TEST(Compensation, HumanGameAsListener) {
  StudyService svc(study_config(), nullptr);
  const auto a = svc.create_session("pa").session_id, b = svc.create_session("pb").session_id;
  svc.give_consent(a, true);
  svc.give_consent(b, true);
  svc.join_matchmaking(a);
  const auto gid = svc.join_matchmaking(b).game_id;
  play_human_game(svc, a, b, gid, 15);
  const auto c = svc.compute_compensation(b);
  EXPECT_EQ(c.base_cents, 300);
  EXPECT_EQ(c.bonus_cents, 60);
}

TEST(Compensation, RequiresCompleteSession) {
  StudyService svc(study_config(), nullptr);
  const auto sid = svc.create_session("p1").session_id;
  svc.give_consent(sid, true);
  svc.assign_games(sid);
  EXPECT_EQ(status_of([&] { svc.compute_compensation(sid); }), 409);
  EXPECT_EQ(status_of([&] { svc.completion_code(sid); }), 409);
}

TEST(CompletionCode, StableOnceIssued) {
  StudyService svc(study_config(), nullptr);
  const auto sid = complete_model_session(svc, "p1", 20, 20);
  const auto code = svc.completion_code(sid);
  EXPECT_EQ(code.size(), 12u);
  EXPECT_EQ(svc.completion_code(sid), code);
}

TEST(Export, ExclusionsAndPayments) {
  StudyService svc(study_config(), nullptr);
  const auto done = complete_model_session(svc, "done", 14, 16);
  svc.completion_code(done);
  // One of two games finished.
  const auto half = svc.create_session("half").session_id;
  svc.give_consent(half, true);
  const auto hg = svc.assign_games(half);
  play_model_game(svc, half, hg[0].game_id, 20);
  // Abandoned and never-consented sessions.
  const auto quit = svc.create_session("quit").session_id;
  svc.give_consent(quit, true);
  svc.assign_games(quit);
  svc.abandon(quit);
  const auto no = svc.create_session("no").session_id;
  svc.give_consent(no, false);

  const auto ex = svc.export_study({});
  EXPECT_EQ(ex.included_sessions, std::vector<std::string>{done});
  EXPECT_EQ(ex.excluded_sessions.at(half), "incomplete");
  EXPECT_EQ(ex.excluded_sessions.at(quit), "abandoned");
  EXPECT_EQ(ex.excluded_sessions.at(no), "no_consent");
  ASSERT_EQ(ex.games.size(), 2u);
  std::size_t trials = 0, correct = 0;
  for (const auto& g : ex.games) {
    trials += g.trials().size();
    for (const auto& t : g.trials()) {
      correct += t.correct();
      EXPECT_TRUE(t.meta.contains("response_time_ms"));
    }
    EXPECT_EQ(g.meta()["session_id"], done);
  }
  EXPECT_EQ(trials, 40u);
  EXPECT_EQ(correct, 30u);
  // Header plus 3 + 3 per-game rows and 3 comparative rows.
  EXPECT_EQ(std::count(ex.surveys_csv.begin(), ex.surveys_csv.end(), '\n'), 10);
  EXPECT_NE(ex.payments_csv.find(",30,300,120,420,3.00,1.20,4.20"), std::string::npos) << ex.payments_csv;
  EXPECT_EQ(ex.payments_csv.find("quit"), std::string::npos);
  EXPECT_NE(ex.exclusions_csv.find("quit," + quit + ",abandoned"), std::string::npos);

  const auto loose = svc.export_study({true});
  EXPECT_EQ(loose.included_sessions.size(), 2u);
  EXPECT_EQ(loose.games.size(), 4u);
}

TEST(Export, EveryParticipantOnceAndOneTreatmentPerSession) {
  StudyService svc(study_config(5), nullptr);
  for (int i = 0; i < 10; ++i) complete_model_session(svc, "p" + std::to_string(i), 10, 10);
  const auto ex = svc.export_study({});
  std::map<std::string, std::vector<std::string>> kinds;
  for (const auto& g : ex.games) kinds[g.meta()["participant_id"]].push_back(g.meta()["speaker_kind"]);
  EXPECT_EQ(kinds.size(), 10u);
  for (const auto& [p, k] : kinds) {
    ASSERT_EQ(k.size(), 2u);
    EXPECT_EQ(std::count(k.begin(), k.end(), "treatment_model"), 1) << p;
  }
}

TEST(EventLog, ReplayReachesSameState) {
  auto log = std::make_shared<std::stringstream>();
  StudyService svc(study_config(), log);
  const auto done = complete_model_session(svc, "done", 11, 19);
  svc.completion_code(done);
  const auto a = svc.create_session("pa").session_id, b = svc.create_session("pb").session_id;
  svc.give_consent(a, true);
  svc.give_consent(b, true);
  svc.join_matchmaking(a);
  const auto gid = svc.join_matchmaking(b).game_id;
  play_human_game(svc, a, b, gid, 9);
  const auto dangling = svc.create_session("dangling").session_id;
  svc.give_consent(dangling, true);
  const auto dg = svc.assign_games(dangling)[0].game_id;
  svc.next_trial(dangling, dg);

  std::stringstream in(log->str());
  auto again = StudyService::replay(StudyConfig{}, in, nullptr);
  EXPECT_EQ(again->session_count(), svc.session_count());
  EXPECT_EQ(again->events().size(), svc.events().size());
  for (const auto& sid : {done, a, b, dangling}) EXPECT_EQ(again->session_view(sid), svc.session_view(sid));
  EXPECT_EQ(game_to_json(again->game(gid).state).dump(), game_to_json(svc.game(gid).state).dump());
  EXPECT_EQ(again->game(dg).active->target, svc.game(dg).active->target);
  const auto e1 = svc.export_study({}), e2 = again->export_study({});
  ASSERT_EQ(e1.games.size(), e2.games.size());
  for (std::size_t i = 0; i < e1.games.size(); ++i) {
    EXPECT_EQ(game_to_json(e1.games[i]).dump(), game_to_json(e2.games[i]).dump());
  }
  EXPECT_EQ(e1.payments_csv, e2.payments_csv);
  EXPECT_EQ(e1.surveys_csv, e2.surveys_csv);
  EXPECT_EQ(again->completion_code(done), svc.completion_code(done));
}

TEST(EventLog, EventsAreOrderedIsoStamped) {
  auto log = std::make_shared<std::stringstream>();
  StudyService svc(study_config(), log);
  complete_model_session(svc, "p", 1, 2);
  std::uint64_t seq = 0;
  std::string line;
  std::stringstream in(log->str());
  while (std::getline(in, line)) {
    const auto e = event_from_json(Json::parse(line));
    EXPECT_EQ(e.seq, ++seq);
    EXPECT_EQ(e.ts.size(), 24u);
    EXPECT_EQ(e.ts.back(), 'Z');
  }
  EXPECT_EQ(seq, svc.events().size());
}

TEST(EventLog, CorruptLogRejected) {
  std::stringstream gap("{\"seq\":2,\"ts\":\"x\",\"type\":\"session_created\",\"payload\":{}}\n");
  EXPECT_THROW(StudyService::replay(StudyConfig{}, gap, nullptr), InputError);
  std::stringstream junk("{\"seq\":1}\n");
  EXPECT_THROW(StudyService::replay(StudyConfig{}, junk, nullptr), InputError);
}

TEST(EventLog, SinkSeesEveryEvent) {
  StudyService svc(study_config(), nullptr);
  std::vector<std::string> types;
  svc.set_event_sink([&](const StudyEvent& e) { types.push_back(e.type); });
  const auto sid = svc.create_session("p").session_id;
  svc.give_consent(sid, true);
  const auto gid = svc.assign_games(sid)[0].game_id;
  svc.next_trial(sid, gid);
  EXPECT_EQ(types, (std::vector<std::string>{"session_created", "consent", "games_assigned", "trial_started"}));
}

}  // namespace
}  // namespace refgame::study
