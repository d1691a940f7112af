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

// JSON-over-HTTP client for remote generative models.
//
//   request:  {model, messages, n, temperature, top_p, max_tokens, stop, logprobs}
//   response: {choices: [{text, logprobs}]}
//
// For label scoring, `logprobs` in a choice is either {"top_logprobs":
// [{token: logprob, ...}, ...]} (first generated position is used) or a flat
// {token: logprob} object.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "refgame/game.hpp"
#include "refgame/prompt.hpp"

namespace refgame::agents {

struct DecodingParams {
  double temperature = 1.0;
  double top_p = 0.95;
  int n = 4;
  int max_tokens = 64;

  // Throws InputError when temperature < 0, top_p outside (0, 1], or n < 1.
  void validate() const;
};

struct AgentEndpoint {
  std::string base_url;  // scheme://host[:port]
  std::string path = "/v1/completions";
  std::string auth_env;  // name of the environment variable holding a bearer token
  std::string model;
  std::chrono::milliseconds timeout{60000};
  int max_retries = 2;
  std::chrono::milliseconds retry_backoff{200};  // doubled after each failed attempt
  std::vector<std::string> stop_strings{"<EOM>"};
  // Send images as base64 data URIs instead of their locators.
  bool inline_images = false;

  // Throws InputError when timeout <= 0 or max_retries < 0.
  void validate() const;
};

AgentEndpoint endpoint_from_json(const Json& j);
Json endpoint_to_json(const AgentEndpoint& ep);

struct HttpResult {
  int status = 0;
  std::string body;
};

// Synchronous POST. Implementations throw TransportError on connection
// failure or timeout.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResult post(const std::string& path, const std::string& body,
                          const std::map<std::string, std::string>& headers, std::chrono::milliseconds timeout) = 0;
};

std::shared_ptr<Transport> make_http_transport(const std::string& base_url);

// Bounds the number of in-flight requests across all clients sharing it.
class RequestLimiter {
 public:
  explicit RequestLimiter(std::ptrdiff_t max_in_flight) : slots_(max_in_flight) {}

  class Slot {
   public:
    explicit Slot(RequestLimiter* l) : limiter_(l) {
      if (limiter_ != nullptr) limiter_->slots_.acquire();
    }
    ~Slot() {
      if (limiter_ != nullptr) limiter_->slots_.release();
    }
    Slot(const Slot&) = delete;
    Slot& operator=(const Slot&) = delete;

   private:
    RequestLimiter* limiter_;
  };

 private:
  std::counting_semaphore<1 << 20> slots_;
};

// Append-only JSONL mirror of request/response pairs.
class AuditLog {
 public:
  explicit AuditLog(const std::string& path);
  void record(const std::string& request_id, const Json& request, int status, const std::string& response_body);

 private:
  std::mutex mu_;
  std::ofstream out_;
};

// Cuts text at the earliest occurrence of any stop string, then trims whitespace.
std::string truncate_at_stop(std::string_view text, const std::vector<std::string>& stop_strings);

// Label with the highest score among candidates; ties go to the earlier
// candidate. nullopt when no candidate has a score.
std::optional<std::string> argmax_label(const std::map<std::string, double>& scores,
                                        const std::vector<std::string>& candidate_labels);

// Strict parse of a generated answer: optional "Image " prefix, optional
// trailing punctuation, and nothing else. Throws UnparseableGuess.
std::string parse_label(std::string_view text, const std::vector<std::string>& candidate_labels);

class ChatClient {
 public:
  ChatClient(AgentEndpoint ep, std::shared_ptr<Transport> transport, std::shared_ptr<RequestLimiter> limiter = nullptr,
             std::shared_ptr<AuditLog> audit = nullptr);

  const AgentEndpoint& endpoint() const { return ep_; }

  // Exactly dec.n utterances, stop-truncated and trimmed; empty texts kept.
  std::vector<std::string> sample_utterances(const PromptBundle& prompt, const DecodingParams& dec);

  // Per-candidate-label log-probabilities for the next token; empty when the
  // endpoint returned none.
  std::map<std::string, double> score_labels(const PromptBundle& prompt);

  // Single greedy completion.
  std::string greedy(const PromptBundle& prompt, int max_tokens);

  // Builds the wire body (exposed for tests).
  Json request_body(const PromptBundle& prompt, int n, double temperature, double top_p, int max_tokens,
                    bool logprobs) const;

 private:
  Json post_with_retries(const Json& body, std::string& request_id);
  std::string next_request_id();

  AgentEndpoint ep_;
  std::shared_ptr<Transport> transport_;
  std::shared_ptr<RequestLimiter> limiter_;
  std::shared_ptr<AuditLog> audit_;
  std::uint64_t instance_;
  std::atomic<std::uint64_t> counter_{0};
};

// Image id of the best-scoring label, falling back to greedy decoding plus
// strict parsing when the endpoint gives no scores. Throws UnparseableGuess.
std::string listener_guess(ChatClient& client, const PromptBundle& prompt);

}  // namespace refgame::agents
