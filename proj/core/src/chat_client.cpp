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

#include "refgame/chat_client.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "refgame/errors.hpp"
#include "refgame/jsonl.hpp"

namespace refgame::agents {
namespace {

constexpr int kScoringTopLogprobs = 20;

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string base64(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string mime_for(const std::string& path) {
  auto ext = std::filesystem::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return "image/png";
  if (ext == ".gif") return "image/gif";
  if (ext == ".webp") return "image/webp";
  if (ext == ".svg") return "image/svg+xml";
  return "image/jpeg";
}

class HttplibTransport final : public Transport {
 public:
  explicit HttplibTransport(std::string base_url) : base_url_(std::move(base_url)) {}

  HttpResult post(const std::string& path, const std::string& body, const std::map<std::string, std::string>& headers,
                  std::chrono::milliseconds timeout) override {
    httplib::Client cli(base_url_);
    const auto secs = timeout.count() / 1000;
    const auto usecs = (timeout.count() % 1000) * 1000;
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = cli.Post(path, h, body, "application/json");
    if (!res) {
      const std::string rid = headers.count("X-Request-Id") != 0 ? headers.at("X-Request-Id") : "";
      throw TransportError(rid, "POST " + base_url_ + path + " failed: " + httplib::to_string(res.error()));
    }
    return {res->status, res->body};
  }

 private:
  std::string base_url_;
};

std::uint64_t fresh_instance_id() {
  static std::atomic<std::uint64_t> seq{0};
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 16) ^ seq.fetch_add(1);
}

}  // namespace

void DecodingParams::validate() const {
  if (!(temperature >= 0.0)) throw InputError("decoding temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw InputError("top_p must be in (0, 1]");
  if (n < 1) throw InputError("n must be >= 1");
  if (max_tokens < 1) throw InputError("max_tokens must be >= 1");
}

void AgentEndpoint::validate() const {
  if (timeout.count() <= 0) throw InputError("endpoint timeout must be positive");
  if (max_retries < 0) throw InputError("endpoint max_retries must be >= 0");
  if (base_url.empty()) throw InputError("endpoint base_url is required");
}

AgentEndpoint endpoint_from_json(const Json& j) {
  AgentEndpoint ep;
  try {
    ep.base_url = j.at("base_url").get<std::string>();
    ep.path = j.value("path", ep.path);
    ep.auth_env = j.value("auth_env", ep.auth_env);
    ep.model = j.value("model", ep.model);
    ep.timeout = std::chrono::milliseconds(j.value("timeout_ms", static_cast<long long>(ep.timeout.count())));
    ep.max_retries = j.value("max_retries", ep.max_retries);
    ep.retry_backoff = std::chrono::milliseconds(j.value("retry_backoff_ms", static_cast<long long>(ep.retry_backoff.count())));
    if (j.contains("stop_strings")) ep.stop_strings = j.at("stop_strings").get<std::vector<std::string>>();
    ep.inline_images = j.value("inline_images", ep.inline_images);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed endpoint config: ") + e.what());
  }
  ep.validate();
  return ep;
}

Json endpoint_to_json(const AgentEndpoint& ep) {
  return {{"base_url", ep.base_url},
          {"path", ep.path},
          {"auth_env", ep.auth_env},
          {"model", ep.model},
          {"timeout_ms", ep.timeout.count()},
          {"max_retries", ep.max_retries},
          {"retry_backoff_ms", ep.retry_backoff.count()},
          {"stop_strings", ep.stop_strings},
          {"inline_images", ep.inline_images}};
}

std::shared_ptr<Transport> make_http_transport(const std::string& base_url) {
  return std::make_shared<HttplibTransport>(base_url);
}

AuditLog::AuditLog(const std::string& path) : out_(path, std::ios::app | std::ios::binary) {
  if (!out_) throw InputError("cannot open audit log '" + path + "'");
}

void AuditLog::record(const std::string& request_id, const Json& request, int status, const std::string& response_body) {
  Json response;
  try {
    response = Json::parse(response_body);
  } catch (const nlohmann::json::exception&) {
    response = response_body;
  }
  std::lock_guard lock(mu_);
  write_jsonl_line(out_, {{"request_id", request_id}, {"request", request}, {"status", status}, {"response", response}});
  out_.flush();
}

std::string truncate_at_stop(std::string_view text, const std::vector<std::string>& stop_strings) {
  std::size_t cut = text.size();
  for (const auto& s : stop_strings) {
    if (s.empty()) continue;
    cut = std::min(cut, text.find(s));
  }
  return trim(text.substr(0, cut));
}

std::optional<std::string> argmax_label(const std::map<std::string, double>& scores,
                                        const std::vector<std::string>& candidate_labels) {
  std::optional<std::string> best;
  double best_score = 0.0;
  for (const auto& label : candidate_labels) {
    auto it = scores.find(label);
    if (it == scores.end()) continue;
    if (!best || it->second > best_score) {
      best = label;
      best_score = it->second;
    }
  }
  return best;
}

std::string parse_label(std::string_view text, const std::vector<std::string>& candidate_labels) {
  std::string s = trim(text);
  if (s.rfind("Image ", 0) == 0) s = trim(s.substr(6));
  while (!s.empty() && (s.back() == '.' || s.back() == ')' || s.back() == ':')) s.pop_back();
  if (std::find(candidate_labels.begin(), candidate_labels.end(), s) != candidate_labels.end()) return s;
  throw UnparseableGuess(std::string(text));
}

ChatClient::ChatClient(AgentEndpoint ep, std::shared_ptr<Transport> transport, std::shared_ptr<RequestLimiter> limiter,
                       std::shared_ptr<AuditLog> audit)
    : ep_(std::move(ep)),
      transport_(std::move(transport)),
      limiter_(std::move(limiter)),
      audit_(std::move(audit)),
      instance_(fresh_instance_id()) {
  ep_.validate();
  if (!transport_) transport_ = make_http_transport(ep_.base_url);
}

std::string ChatClient::next_request_id() {
  char buf[48];
  std::snprintf(buf, sizeof buf, "req-%012llx-%06llu", static_cast<unsigned long long>(instance_ & 0xffffffffffffULL),
                static_cast<unsigned long long>(counter_.fetch_add(1)));
  return buf;
}

Json ChatClient::request_body(const PromptBundle& prompt, int n, double temperature, double top_p, int max_tokens,
                              bool logprobs) const {
  Json messages = Json::array();
  for (const auto& m : prompt.messages) {
    Json content = Json::array();
    for (const auto& p : m.parts) {
      if (p.kind == PromptPart::Kind::Text) {
        content.push_back({{"type", "text"}, {"text", p.text}});
        continue;
      }
      std::string url = p.image_uri;
      if (ep_.inline_images && url.rfind("http", 0) != 0 && url.rfind("data:", 0) != 0) {
        url = "data:" + mime_for(p.image_uri) + ";base64," + base64(read_file(p.image_uri));
      }
      content.push_back({{"type", "image_url"}, {"image_url", {{"url", url}}}});
    }
    messages.push_back({{"role", m.role}, {"content", std::move(content)}});
  }
  Json body = {{"model", ep_.model},
               {"messages", std::move(messages)},
               {"n", n},
               {"temperature", temperature},
               {"top_p", top_p},
               {"max_tokens", max_tokens},
               {"stop", ep_.stop_strings}};
  if (logprobs) {
    body["logprobs"] = kScoringTopLogprobs;
  } else {
    body["logprobs"] = false;
  }
  return body;
}

Json ChatClient::post_with_retries(const Json& body, std::string& request_id) {
  request_id = next_request_id();
  std::map<std::string, std::string> headers{{"X-Request-Id", request_id}};
  if (!ep_.auth_env.empty()) {
    if (const char* token = std::getenv(ep_.auth_env.c_str()); token != nullptr && *token != '\0') {
      headers["Authorization"] = std::string("Bearer ") + token;
    }
  }
  const std::string payload = body.dump();
  auto backoff = ep_.retry_backoff;
  std::string last_error;
  for (int attempt = 0; attempt <= ep_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    HttpResult res;
    try {
      RequestLimiter::Slot slot(limiter_.get());
      res = transport_->post(ep_.path, payload, headers, ep_.timeout);
    } catch (const TransportError& e) {
      last_error = e.what();
      spdlog::warn("[{}] attempt {} failed: {}", request_id, attempt + 1, last_error);
      continue;
    }
    if (audit_) audit_->record(request_id, body, res.status, res.body);
    if (res.status == 429 || res.status >= 500) {
      last_error = "HTTP " + std::to_string(res.status);
      spdlog::warn("[{}] attempt {} got {}", request_id, attempt + 1, last_error);
      continue;
    }
    if (res.status < 200 || res.status >= 300) {
      throw TransportError(request_id, "HTTP " + std::to_string(res.status) + ": " + res.body.substr(0, 200));
    }
    try {
      Json parsed = Json::parse(res.body);
      if (!parsed.contains("choices") || !parsed.at("choices").is_array()) {
        throw TransportError(request_id, "malformed response: missing 'choices' array");
      }
      return parsed;
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(request_id, std::string("malformed response body: ") + e.what());
    }
  }
  throw TransportError(request_id, "giving up after " + std::to_string(ep_.max_retries + 1) + " attempts: " + last_error);
}

std::vector<std::string> ChatClient::sample_utterances(const PromptBundle& prompt, const DecodingParams& dec) {
  dec.validate();
  std::string rid;
  Json res = post_with_retries(request_body(prompt, dec.n, dec.temperature, dec.top_p, dec.max_tokens, false), rid);
  const auto& choices = res.at("choices");
  if (choices.size() != static_cast<std::size_t>(dec.n)) {
    throw TransportError(rid, "expected " + std::to_string(dec.n) + " choices, got " + std::to_string(choices.size()));
  }
  std::vector<std::string> out;
  out.reserve(choices.size());
  for (const auto& c : choices) {
    if (!c.contains("text") || !c.at("text").is_string()) throw TransportError(rid, "choice without 'text'");
    out.push_back(truncate_at_stop(c.at("text").get<std::string>(), ep_.stop_strings));
  }
  return out;
}

std::map<std::string, double> ChatClient::score_labels(const PromptBundle& prompt) {
  std::string rid;
  Json res = post_with_retries(request_body(prompt, 1, 0.0, 1.0, 1, true), rid);
  std::map<std::string, double> scores;
  const auto& choices = res.at("choices");
  if (choices.empty()) return scores;
  const auto& c = choices.front();
  if (!c.contains("logprobs") || !c.at("logprobs").is_object()) return scores;
  const Json* table = &c.at("logprobs");
  if (table->contains("top_logprobs")) {
    const auto& top = table->at("top_logprobs");
    if (!top.is_array() || top.empty()) return scores;
    table = &top.front();
  }
  if (!table->is_object()) throw TransportError(rid, "malformed logprobs table");
  for (const auto& [token, lp] : table->items()) {
    if (!lp.is_number()) continue;
    std::string label = trim(token);
    const double v = lp.get<double>();
    auto it = scores.find(label);
    if (it == scores.end() || v > it->second) scores[label] = v;
  }
  for (auto it = scores.begin(); it != scores.end();) {
    if (std::find(prompt.candidate_labels.begin(), prompt.candidate_labels.end(), it->first) ==
        prompt.candidate_labels.end()) {
      it = scores.erase(it);
    } else {
      ++it;
    }
  }
  return scores;
}

std::string ChatClient::greedy(const PromptBundle& prompt, int max_tokens) {
  std::string rid;
  Json res = post_with_retries(request_body(prompt, 1, 0.0, 1.0, max_tokens, false), rid);
  const auto& choices = res.at("choices");
  if (choices.empty() || !choices.front().contains("text")) throw TransportError(rid, "greedy response has no text");
  return truncate_at_stop(choices.front().at("text").get<std::string>(), ep_.stop_strings);
}

std::string listener_guess(ChatClient& client, const PromptBundle& prompt) {
  if (prompt.candidate_labels.empty()) throw InputError("listener prompt has no candidate labels");
  auto scores = client.score_labels(prompt);
  std::string label;
  if (auto best = argmax_label(scores, prompt.candidate_labels)) {
    label = *best;
  } else {
    label = parse_label(client.greedy(prompt, 4), prompt.candidate_labels);
  }
  return *prompt.image_for_label(label);
}

}  // namespace refgame::agents
