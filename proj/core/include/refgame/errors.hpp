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

#include <stdexcept>
#include <string>

namespace refgame {

// Malformed input: bad files, invalid configs, contract violations by the
// caller. The CLI maps these to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A game-rule violation (out-of-block target, unknown image, ...).
class GameError : public InputError {
 public:
  using InputError::InputError;
};

// Remote agent or tagger unreachable, or returned an unusable response.
class TransportError : public std::runtime_error {
 public:
  TransportError(std::string request_id, const std::string& what)
      : std::runtime_error(request_id.empty() ? what : "[" + request_id + "] " + what),
        request_id_(std::move(request_id)) {}

  const std::string& request_id() const { return request_id_; }

 private:
  std::string request_id_;
};

// The listener produced output that names no candidate label.
class UnparseableGuess : public std::runtime_error {
 public:
  explicit UnparseableGuess(std::string raw)
      : std::runtime_error("unparseable guess: '" + raw + "'"), raw_(std::move(raw)) {}

  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

// Study protocol violations (ordering, duplicates, missing consent).
class StudyError : public std::runtime_error {
 public:
  StudyError(int http_status, const std::string& what)
      : std::runtime_error(what), http_status_(http_status) {}

  int http_status() const { return http_status_; }

 private:
  int http_status_;
};

// A service could not start or keep running (port in use, log unwritable).
// The CLI maps these to exit code 4.
class ServiceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace refgame
