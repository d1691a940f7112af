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

#include "refgame/study_server.hpp"

#include <condition_variable>
#include <deque>
#include <map>
#include <regex>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "refgame/errors.hpp"

namespace refgame::study {
namespace {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

Json parse_body(const std::string& body) {
  if (body.find_first_not_of(" \t\r\n") == std::string::npos) return Json::object();
  Json j = Json::parse(body);
  if (!j.is_object()) throw InputError("request body must be a JSON object");
  return j;
}

Json feedback_json(const Feedback& f) {
  return {{"game_id", f.game_id},
          {"trial_index", f.trial_index},
          {"target", f.target},
          {"guess", f.guess},
          {"correct", f.correct},
          {"response_time_ms", f.response_time_ms},
          {"rt_clamped", f.rt_clamped},
          {"game_complete", f.game_complete}};
}

std::string require_string(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) throw InputError(std::string("'") + key + "' must be a string");
  return it->get<std::string>();
}

std::int64_t require_int(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number_integer()) throw InputError(std::string("'") + key + "' must be an integer");
  return it->get<std::int64_t>();
}

ApiResponse route(StudyService& svc, const std::string& method, const std::string& path, const Json& body,
                  const std::string& config_hash) {
  static const std::regex kSession(R"(^/api/sessions/([^/]+)(/[a-z-]+)?$)");
  static const std::regex kGame(R"(^/api/sessions/([^/]+)/games/([^/]+)/([a-z-]+)$)");
  std::smatch m;

  if (path == "/api/health" && method == "GET") {
    return {200, {{"status", "ok"}, {"config_hash", config_hash}, {"sessions", svc.session_count()}}};
  }
  if (path == "/api/sessions" && method == "POST") {
    Session s = svc.create_session(require_string(body, "participant_id"));
    return {201, svc.session_view(s.session_id)};
  }
  if (std::regex_match(path, m, kGame)) {
    const std::string sid = m[1], gid = m[2], action = m[3];
    if (action == "next-trial" && method == "POST") return {200, svc.next_trial(sid, gid)};
    if (action == "trial" && method == "GET") return {200, svc.trial_view(sid, gid)};
    if (action == "message" && method == "POST") {
      svc.submit_message(sid, gid, static_cast<int>(require_int(body, "trial_index")), require_string(body, "utterance"));
      return {200, {{"ok", true}}};
    }
    if (action == "guess" && method == "POST") {
      auto fb = svc.submit_guess(sid, gid, static_cast<int>(require_int(body, "trial_index")),
                                 require_string(body, "guess"), require_int(body, "response_time_ms"));
      return {200, feedback_json(fb)};
    }
    return {404, {{"error", "no such endpoint"}}};
  }
  if (std::regex_match(path, m, kSession)) {
    const std::string sid = m[1];
    const std::string action = m[2].matched ? std::string(m[2]).substr(1) : std::string{};
    if (action.empty() && method == "GET") return {200, svc.session_view(sid)};
    if (action == "consent" && method == "POST") {
      auto it = body.find("consent");
      if (it == body.end() || !it->is_boolean()) throw InputError("'consent' must be a boolean");
      svc.give_consent(sid, it->get<bool>());
      return {200, svc.session_view(sid)};
    }
    if (action == "assign" && method == "POST") {
      Json games = Json::array();
      for (const auto& a : svc.assign_games(sid)) {
        games.push_back({{"game_id", a.game_id}, {"color", a.color}, {"order", a.order}, {"role", to_string(a.role)}});
      }
      return {200, {{"games", std::move(games)}}};
    }
    if (action == "match" && method == "POST") {
      auto r = svc.join_matchmaking(sid);
      Json j = {{"paired", r.paired}};
      if (r.paired) {
        j["game_id"] = r.game_id;
        j["role"] = to_string(r.role);
      }
      return {200, j};
    }
    if (action == "survey" && method == "POST") {
      SurveyResponse r;
      if (body.contains("game_id") && !body.at("game_id").is_null()) r.game_id = require_string(body, "game_id");
      r.question = require_string(body, "question");
      r.rating = static_cast<int>(require_int(body, "rating"));
      svc.submit_survey(sid, r);
      return {200, {{"ok", true}}};
    }
    if (action == "abandon" && method == "POST") {
      svc.abandon(sid);
      return {200, svc.session_view(sid)};
    }
    if (action == "completion-code" && method == "GET") {
      const std::string code = svc.completion_code(sid);
      const Compensation c = svc.compute_compensation(sid);
      return {200,
              {{"completion_code", code},
               {"compensation",
                {{"base_cents", c.base_cents}, {"bonus_cents", c.bonus_cents}, {"total_cents", c.total_cents()}}}}};
    }
  }
  return {404, {{"error", "no such endpoint"}}};
}

}  // namespace

ApiResponse handle_api(StudyService& svc, const std::string& method, const std::string& path,
                       const std::string& body, const std::string& config_hash) {
  try {
    return route(svc, method, path, parse_body(body), config_hash);
  } catch (const StudyError& e) {
    return {e.http_status(), {{"error", e.what()}}};
  } catch (const nlohmann::json::exception& e) {
    return {400, {{"error", std::string("malformed JSON: ") + e.what()}}};
  } catch (const InputError& e) {
    return {400, {{"error", e.what()}}};
  } catch (const std::exception& e) {
    spdlog::error("{} {}: {}", method, path, e.what());
    return {500, {{"error", e.what()}}};
  }
}

Json ws_envelope(std::string_view type, Json payload, std::chrono::system_clock::time_point now) {
  return {{"type", type}, {"payload", std::move(payload)}, {"ts", iso8601_utc(now)}};
}

namespace {

class WsHub;

class WsConn : public std::enable_shared_from_this<WsConn> {
 public:
  WsConn(tcp::socket socket, WsHub& hub) : ws_(std::move(socket)), hub_(hub) {}

  void run() {
    net::dispatch(ws_.get_executor(), [self = shared_from_this()] { self->read_request(); });
  }

  void send(std::string text) {
    net::post(ws_.get_executor(), [self = shared_from_this(), text = std::move(text)]() mutable {
      self->outq_.push_back(std::move(text));
      if (self->outq_.size() == 1) self->do_write();
    });
  }

  void close() {
    net::post(ws_.get_executor(), [self = shared_from_this()] {
      if (!self->ws_.is_open()) return;
      self->ws_.async_close(websocket::close_code::going_away, [self](beast::error_code) {});
    });
  }

  // Only once the io loop has stopped.
  void force_close() {
    beast::error_code ec;
    auto& sock = beast::get_lowest_layer(ws_).socket();
    sock.shutdown(tcp::socket::shutdown_both, ec);
    sock.close(ec);
  }

  const std::string& session() const { return session_; }
  const std::string& game() const { return game_; }

 private:
  void read_request() {
    http::async_read(ws_.next_layer(), http_buf_, req_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_request(ec); });
  }

  void on_request(beast::error_code ec);
  void on_accept(beast::error_code ec);
  void do_read() {
    ws_.async_read(buf_, [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }
  void on_read(beast::error_code ec);
  void do_write() {
    ws_.text(true);
    ws_.async_write(net::buffer(outq_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->outq_.clear();
        return;
      }
      self->outq_.pop_front();
      if (!self->outq_.empty()) self->do_write();
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer http_buf_;
  beast::flat_buffer buf_;
  http::request<http::string_body> req_;
  std::deque<std::string> outq_;
  WsHub& hub_;
  std::string session_;
  std::string game_;
};

class WsHub {
 public:
  explicit WsHub(StudyService& svc) : svc_(svc) {}

  StudyService& service() { return svc_; }

  void send(WsConn& c, std::string_view type, Json payload) {
    c.send(ws_envelope(type, std::move(payload), std::chrono::system_clock::now()).dump());
  }

  bool attach(const std::shared_ptr<WsConn>& c) {
    Json view;
    try {
      view = svc_.trial_view(c->session(), c->game());
    } catch (const std::exception& e) {
      send(*c, "error", {{"message", e.what()}});
      return false;
    }
    {
      std::lock_guard lk(mu_);
      conns_[c->game()].push_back(c);
      all_.push_back(c);
    }
    send(*c, "join", {{"game_id", c->game()}, {"session_id", c->session()}, {"role", view.at("role")}});
    send(*c, "state", std::move(view));
    return true;
  }

  void detach(const WsConn* c) {
    std::lock_guard lk(mu_);
    for (auto& [game, list] : conns_) {
      std::erase_if(list, [&](const std::weak_ptr<WsConn>& w) {
        auto p = w.lock();
        return !p || p.get() == c;
      });
    }
  }

  std::vector<std::shared_ptr<WsConn>> on_game(const std::string& game_id) {
    std::lock_guard lk(mu_);
    std::vector<std::shared_ptr<WsConn>> out;
    for (const auto& w : conns_[game_id]) {
      if (auto p = w.lock()) out.push_back(std::move(p));
    }
    return out;
  }

  void close_all() {
    std::lock_guard lk(mu_);
    for (auto& [game, list] : conns_) {
      for (auto& w : list) {
        if (auto p = w.lock()) p->close();
      }
    }
    conns_.clear();
  }

  void force_close_all() {
    std::lock_guard lk(mu_);
    for (auto& w : all_) {
      if (auto p = w.lock()) p->force_close();
    }
    all_.clear();
  }

  void handle_client(const std::shared_ptr<WsConn>& c, const std::string& text) {
    try {
      const Json msg = Json::parse(text);
      const auto type = msg.at("type").get<std::string>();
      const Json payload = msg.value("payload", Json::object());
      if (type == "typing") {
        const Json view = svc_.trial_view(c->session(), c->game());
        for (auto& other : on_game(c->game())) {
          if (other != c) {
            send(*other, "typing",
                 {{"game_id", c->game()}, {"role", view.at("role")}, {"typing", payload.value("typing", true)}});
          }
        }
      } else if (type == "message") {
        svc_.submit_message(c->session(), c->game(), payload.at("trial_index").get<int>(),
                            payload.at("utterance").get<std::string>());
      } else if (type == "guess") {
        svc_.submit_guess(c->session(), c->game(), payload.at("trial_index").get<int>(),
                          payload.at("guess").get<std::string>(), payload.at("response_time_ms").get<std::int64_t>());
      } else if (type == "state") {
        send(*c, "state", svc_.trial_view(c->session(), c->game()));
      } else {
        send(*c, "error", {{"message", "unknown message type '" + type + "'"}});
      }
    } catch (const StudyError& e) {
      send(*c, "error", {{"status", e.http_status()}, {"message", e.what()}});
    } catch (const std::exception& e) {
      send(*c, "error", {{"status", 400}, {"message", e.what()}});
    }
  }

  // Turns service events into per-participant frames. Listener frames never
  // carry the target before the guess is in.
  void on_event(const StudyEvent& e) {
    const Json& p = e.payload;
    if (!p.contains("game_id")) return;
    const auto game_id = p.at("game_id").get<std::string>();
    auto conns = on_game(game_id);
    if (conns.empty()) return;
    if (e.type == "trial_started") {
      for (auto& c : conns) send(*c, "state", svc_.trial_view(c->session(), game_id));
    } else if (e.type == "message") {
      for (auto& c : conns) {
        send(*c, "message", {{"game_id", game_id}, {"trial_index", p.at("trial_index")}, {"utterance", p.at("utterance")}});
      }
    } else if (e.type == "guess") {
      const StudyGame g = svc_.game(game_id);
      const Trial& t = g.state.trials().back();
      const Json result = {{"game_id", game_id},
                           {"trial_index", p.at("trial_index")},
                           {"target", t.target},
                           {"guess", t.guess},
                           {"correct", t.correct()}};
      for (auto& c : conns) {
        const bool listener = c->session() == g.listener_session;
        send(*c, listener ? "feedback" : "guess", result);
        if (g.state.complete()) {
          send(*c, "survey_prompt", {{"game_id", game_id}, {"questions", survey_questions()}});
        }
      }
    }
  }

 private:
  StudyService& svc_;
  std::mutex mu_;
  std::map<std::string, std::vector<std::weak_ptr<WsConn>>> conns_;
  std::vector<std::weak_ptr<WsConn>> all_;
};

void WsConn::on_request(beast::error_code ec) {
  if (ec) return;
  if (!websocket::is_upgrade(req_)) {
    http::response<http::string_body> res{http::status::bad_request, req_.version()};
    res.set(http::field::content_type, "text/plain");
    res.body() = "websocket upgrade required";
    res.prepare_payload();
    beast::error_code wec;
    http::write(ws_.next_layer(), res, wec);
    return;
  }
  const std::string target(req_.target());
  static const std::regex kSessionParam(R"([?&]session=([^&]+))");
  static const std::regex kGameParam(R"([?&]game=([^&]+))");
  std::smatch m;
  if (std::regex_search(target, m, kSessionParam)) session_ = m[1];
  if (std::regex_search(target, m, kGameParam)) game_ = m[1];
  ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
  ws_.async_accept(req_, [self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
}

void WsConn::on_accept(beast::error_code ec) {
  if (ec) return;
  if (!hub_.attach(shared_from_this())) {
    close();
    return;
  }
  do_read();
}

void WsConn::on_read(beast::error_code ec) {
  if (ec) {
    hub_.detach(this);
    return;
  }
  const std::string text = beast::buffers_to_string(buf_.data());
  buf_.consume(buf_.size());
  hub_.handle_client(shared_from_this(), text);
  do_read();
}

}  // namespace

struct StudyServer::Impl {
  StudyService& svc;
  ServerOptions opts;
  httplib::Server http;
  net::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  WsHub hub{svc};
  std::thread http_thread;
  std::thread ws_thread;
  int bound_http = 0;
  int bound_ws = 0;
  bool running = false;
  std::mutex mu;
  std::condition_variable cv;

  Impl(StudyService& s, ServerOptions o) : svc(s), opts(std::move(o)) {}

  void do_accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<WsConn>(std::move(socket), hub)->run();
      do_accept();
    });
  }
};

StudyServer::StudyServer(StudyService& svc, ServerOptions opts) : impl_(std::make_unique<Impl>(svc, std::move(opts))) {}

StudyServer::~StudyServer() { stop(); }

void StudyServer::start() {
  auto& im = *impl_;
  const std::string hash = im.opts.config_hash;
  auto handler = [&svc = im.svc, hash](const httplib::Request& req, httplib::Response& res) {
    const ApiResponse r = handle_api(svc, req.method, req.path, req.body, hash);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  // httplib's default is SO_REUSEPORT, which lets a second server bind the
  // same port silently.
  im.http.set_socket_options([](int sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  });
  im.http.Get(".*", handler);
  im.http.Post(".*", handler);

  if (im.opts.port == 0) {
    im.bound_http = im.http.bind_to_any_port(im.opts.host);
  } else {
    im.bound_http = im.http.bind_to_port(im.opts.host, im.opts.port) ? im.opts.port : -1;
  }
  if (im.bound_http <= 0) {
    throw ServiceError("cannot bind HTTP port " + std::to_string(im.opts.port) + " on " + im.opts.host);
  }

  beast::error_code ec;
  const auto addr = net::ip::make_address(im.opts.host, ec);
  if (ec) throw ServiceError("bad host '" + im.opts.host + "'");
  tcp::endpoint ep{addr, static_cast<unsigned short>(im.opts.ws_port)};
  im.acceptor.open(ep.protocol(), ec);
  if (!ec) im.acceptor.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) im.acceptor.bind(ep, ec);
  if (!ec) im.acceptor.listen(net::socket_base::max_listen_connections, ec);
  if (ec) {
    im.http.stop();
    throw ServiceError("cannot bind WebSocket port " + std::to_string(im.opts.ws_port) + ": " + ec.message());
  }
  im.bound_ws = im.acceptor.local_endpoint().port();

  im.svc.set_event_sink([&hub = im.hub](const StudyEvent& e) { hub.on_event(e); });
  im.do_accept();
  im.http_thread = std::thread([&im] { im.http.listen_after_bind(); });
  im.ws_thread = std::thread([&im] { im.ioc.run(); });
  im.http.wait_until_ready();
  {
    std::lock_guard lk(im.mu);
    im.running = true;
  }
  spdlog::info("study server: http {}:{} ws {}:{}", im.opts.host, im.bound_http, im.opts.host, im.bound_ws);
}

void StudyServer::stop() {
  auto& im = *impl_;
  {
    std::lock_guard lk(im.mu);
    if (!im.running && !im.http_thread.joinable() && !im.ws_thread.joinable()) return;
    im.running = false;
  }
  im.svc.set_event_sink(nullptr);
  im.http.stop();
  net::post(im.ioc, [&im] {
    beast::error_code ec;
    im.acceptor.close(ec);
  });
  im.hub.close_all();
  if (im.http_thread.joinable()) im.http_thread.join();
  // Give close frames a moment to go out, then stop the loop and drop
  // whatever is still connected.
  auto grace = std::make_shared<net::steady_timer>(im.ioc, std::chrono::milliseconds(250));
  grace->async_wait([&im, grace](beast::error_code) { im.ioc.stop(); });
  if (im.ws_thread.joinable()) im.ws_thread.join();
  im.hub.force_close_all();
  im.cv.notify_all();
}

void StudyServer::wait() {
  auto& im = *impl_;
  std::unique_lock lk(im.mu);
  im.cv.wait(lk, [&] { return !im.running; });
}

int StudyServer::http_port() const { return impl_->bound_http; }
int StudyServer::ws_port() const { return impl_->bound_ws; }

}  // namespace refgame::study
