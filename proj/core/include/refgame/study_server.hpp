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

// Network front end of the study service: an HTTP JSON API and a WebSocket
// channel per game for typing indicators and turn events.
//
// HTTP (JSON bodies, errors as {"error": ...}):
//   GET  /api/health
//   POST /api/sessions                                  {participant_id}
//   GET  /api/sessions/{sid}
//   POST /api/sessions/{sid}/consent                    {consent}
//   POST /api/sessions/{sid}/assign
//   POST /api/sessions/{sid}/match
//   POST /api/sessions/{sid}/games/{gid}/next-trial
//   GET  /api/sessions/{sid}/games/{gid}/trial
//   POST /api/sessions/{sid}/games/{gid}/message        {trial_index, utterance}
//   POST /api/sessions/{sid}/games/{gid}/guess          {trial_index, guess, response_time_ms}
//   POST /api/sessions/{sid}/survey                     {game_id?, question, rating}
//   POST /api/sessions/{sid}/abandon
//   GET  /api/sessions/{sid}/completion-code
//
// WebSocket: ws://host:ws_port/ws?session={sid}&game={gid}. Every frame is
// {"type", "payload", "ts"} with type one of join, state, typing, message,
// guess, feedback, survey_prompt (plus error). Clients send typing, message,
// guess and state.

#include <memory>
#include <string>

#include "refgame/study.hpp"

namespace refgame::study {

struct ApiResponse {
  int status = 200;
  Json body;
};

// Routes one HTTP request. Never throws.
ApiResponse handle_api(StudyService& svc, const std::string& method, const std::string& path,
                       const std::string& body, const std::string& config_hash);

// {"type", "payload", "ts"}
Json ws_envelope(std::string_view type, Json payload, std::chrono::system_clock::time_point now);

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;     // 0 picks a free port
  int ws_port = 8081;  // 0 picks a free port
  std::string config_hash;
};

class StudyServer {
 public:
  StudyServer(StudyService& svc, ServerOptions opts);
  ~StudyServer();
  StudyServer(const StudyServer&) = delete;
  StudyServer& operator=(const StudyServer&) = delete;

  // Binds both ports and serves on background threads. Throws ServiceError
  // when a port cannot be bound.
  void start();
  // Idempotent; closes WebSocket connections and joins the threads.
  void stop();
  // Blocks until stop() is called from another thread or a signal handler.
  void wait();

  int http_port() const;
  int ws_port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace refgame::study
