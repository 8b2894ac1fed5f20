#include "travel/http_server.hpp"

#include <atomic>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <sstream>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "travel/error.hpp"
#include "travel/json_codec.hpp"

namespace travel {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

namespace {

using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

http::status status_for(Errc code) {
  switch (code) {
    case Errc::UnknownSession: return http::status::not_found;
    case Errc::SessionClosed:
    case Errc::Conflict: return http::status::conflict;
    case Errc::StoreFull: return http::status::service_unavailable;
    case Errc::ParseError: return http::status::bad_request;
    default: return http::status::internal_server_error;
  }
}

beast::string_view bsv(std::string_view s) { return {s.data(), s.size()}; }
std::string_view ssv(beast::string_view s) { return {s.data(), s.size()}; }

Response make_response(const Request& req, http::status status, std::string body,
                       std::string_view content_type = "application/json") {
  Response res{status, req.version()};
  res.set(http::field::server, "travel-agent");
  res.set(http::field::content_type, bsv(content_type));
  res.set(http::field::access_control_allow_origin, "*");
  res.keep_alive(req.keep_alive());
  res.body() = std::move(body);
  res.prepare_payload();
  return res;
}

Response json_response(const Request& req, http::status status, const json& body) {
  return make_response(req, status, body.dump());
}

Response error_response(const Request& req, http::status status, std::string_view code, const std::string& message) {
  return json_response(req, status, json{{"error", code}, {"message", message}});
}

std::vector<std::string> split_path(std::string_view target) {
  const auto q = target.find('?');
  if (q != std::string_view::npos) target = target.substr(0, q);
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (pos < target.size()) {
    if (target[pos] == '/') {
      ++pos;
      continue;
    }
    const auto end = target.find('/', pos);
    parts.emplace_back(target.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos));
    if (end == std::string_view::npos) break;
    pos = end;
  }
  return parts;
}

std::string_view mime_type(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".ico") return "image/x-icon";
  return "application/octet-stream";
}

json post_result_json(const PostResult& r) {
  return json{{"reply", r.reply.text},
              {"turn", turn_to_json(r.reply)},
              {"customer_turn", turn_to_json(r.customer)},
              {"phase", phase_name(r.phase)},
              {"status", status_name(r.status)},
              {"slots", slots_to_json(r.slots)},
              {"breakdown", r.customer.breakdown ? verdict_to_json(*r.customer.breakdown) : json(nullptr)},
              {"latency_ms", r.reply.latency_ms.value_or(0)}};
}

}  // namespace

struct HttpServer::Impl {
  std::shared_ptr<SessionService> service;
  HttpServerOptions options;
  net::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  std::thread io_thread;
  std::atomic<bool> running{false};

  // Blocking pipeline calls run on their own threads; stop() waits for them.
  std::mutex inflight_mutex;
  std::condition_variable inflight_cv;
  std::size_t inflight = 0;

  std::mutex stopped_mutex;
  std::condition_variable stopped_cv;
  bool stopped = false;

  // Runs `work` off the io thread and hands its response back to `done` on
  // the io thread.
  template <typename Work, typename Done>
  void offload(Work work, Done done) {
    {
      std::lock_guard lock(inflight_mutex);
      ++inflight;
    }
    std::thread([this, work = std::move(work), done = std::move(done)]() mutable {
      auto res = work();
      net::post(ioc, [done = std::move(done), res = std::move(res)]() mutable { done(std::move(res)); });
      std::lock_guard lock(inflight_mutex);
      --inflight;
      inflight_cv.notify_all();
    }).detach();
  }

  Response handle_static(const Request& req) const;
  void accept();
};

namespace {

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket socket, std::shared_ptr<SessionService> service, std::string id)
      : ws_(std::move(socket)), service_(std::move(service)), id_(std::move(id)) {}
  ~WsSession() { close(); }

  void run(Request req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) { self->on_accept(ec); });
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    std::weak_ptr<WsSession> weak = shared_from_this();
    auto executor = ws_.get_executor();
    token_ = service_->events().subscribe(id_, [weak, executor](const json& event) {
      net::post(executor, [weak, event] {
        if (auto self = weak.lock()) self->on_event(event);
      });
    });
    subscribed_ = true;
    try {
      const auto snapshot = service_->get_session(id_);
      next_index_ = snapshot.transcript.size();
      send(json{{"type", "snapshot"}, {"session", session_to_json(snapshot)}}.dump());
    } catch (const Error& e) {
      send(json{{"type", "error"}, {"error", errc_name(e.code())}, {"message", e.detail()}}.dump());
    }
    read();
  }

  void on_event(const json& event) {
    if (event.value("type", "") == "turn") {
      const auto index = event.at("turn").at("index").get<std::size_t>();
      if (index < next_index_) return;  // already part of the snapshot
      next_index_ = index + 1;
    }
    send(event.dump());
  }

  void send(std::string message) {
    queue_.push_back(std::move(message));
    if (queue_.size() == 1) write_next();
  }

  void write_next() {
    ws_.text(true);
    ws_.async_write(net::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->close();
      self->queue_.pop_front();
      if (!self->queue_.empty()) self->write_next();
    });
  }

  // Client messages are ignored; reading keeps ping/pong and close handling
  // going.
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->close();
      self->buffer_.consume(self->buffer_.size());
      self->read();
    });
  }

  void close() {
    if (subscribed_) {
      service_->events().unsubscribe(id_, token_);
      subscribed_ = false;
    }
  }

  websocket::stream<beast::tcp_stream> ws_;
  std::shared_ptr<SessionService> service_;
  std::string id_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  std::uint64_t token_ = 0;
  bool subscribed_ = false;
  std::size_t next_index_ = 0;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket socket, HttpServer::Impl& server) : stream_(std::move(socket)), server_(server) {}

  void run() { read(); }

 private:
  void read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(60));
    http::async_read(stream_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->shutdown();
      self->route();
    });
  }

  void write(Response res) {
    auto shared = std::make_shared<Response>(std::move(res));
    http::async_write(stream_, *shared, [self = shared_from_this(), shared](beast::error_code ec, std::size_t) {
      if (ec) return self->shutdown();
      if (!shared->keep_alive()) return self->shutdown();
      self->read();
    });
  }

  void shutdown() {
    beast::error_code ec;
    stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
  }

  template <typename Work>
  void offload(Work work) {
    stream_.expires_never();
    server_.offload(std::move(work), [self = shared_from_this()](Response res) { self->write(std::move(res)); });
  }

  void route() {
    const auto parts = split_path(ssv(req_.target()));
    const auto method = req_.method();
    auto& service = server_.service;

    if (websocket::is_upgrade(req_)) {
      if (parts.size() == 3 && parts[0] == "sessions" && parts[2] == "stream") {
        try {
          service->get_session(parts[1]);
        } catch (const Error& e) {
          return write(error_response(req_, status_for(e.code()), errc_name(e.code()), e.detail()));
        }
        stream_.expires_never();
        std::make_shared<WsSession>(stream_.release_socket(), service, parts[1])->run(std::move(req_));
        return;
      }
      return write(error_response(req_, http::status::not_found, "NotFound", "no stream at this path"));
    }

    if (method == http::verb::options) {
      auto res = make_response(req_, http::status::no_content, "");
      res.set(http::field::access_control_allow_methods, "GET, POST, DELETE, OPTIONS");
      res.set(http::field::access_control_allow_headers, "Content-Type");
      return write(std::move(res));
    }

    if (!parts.empty() && parts[0] == "sessions") {
      if (parts.size() == 1 && method == http::verb::post) {
        return offload([req = req_, service] { return create(req, *service); });
      }
      if (parts.size() == 3 && parts[2] == "turns" && method == http::verb::post) {
        return offload([req = req_, service, sid = parts[1]] { return post_turn(req, *service, sid); });
      }
      if (parts.size() == 2 && method == http::verb::get) {
        return write(guarded(req_, [&] {
          return json_response(req_, http::status::ok, session_to_json(service->get_session(parts[1])));
        }));
      }
      if (parts.size() == 2 && method == http::verb::delete_) {
        return write(guarded(req_, [&] {
          return json_response(req_, http::status::ok, session_to_json(service->abort_session(parts[1])));
        }));
      }
      return write(error_response(req_, http::status::method_not_allowed, "MethodNotAllowed",
                                  std::string(req_.method_string()) + " " + std::string(req_.target())));
    }

    if (method == http::verb::get && !server_.options.static_dir.empty()) return write(server_.handle_static(req_));
    write(error_response(req_, http::status::not_found, "NotFound", std::string(req_.target())));
  }

  template <typename F>
  static Response guarded(const Request& req, F f) {
    try {
      return f();
    } catch (const Error& e) {
      return error_response(req, status_for(e.code()), errc_name(e.code()), e.detail());
    } catch (const std::exception& e) {
      return error_response(req, http::status::internal_server_error, "Internal", e.what());
    }
  }

  static Response create(const Request& req, SessionService& service) {
    return guarded(req, [&] {
      const auto created = service.create_session();
      return json_response(
          req, http::status::created,
          json{{"id", created.id}, {"opening", turn_to_json(created.opening)}, {"phase", phase_name(created.phase)}});
    });
  }

  static Response post_turn(const Request& req, SessionService& service, const std::string& id) {
    const json body = json::parse(req.body(), nullptr, false);
    if (body.is_discarded() || !body.is_object() || !body.contains("text") || !body["text"].is_string()) {
      return error_response(req, http::status::bad_request, "BadRequest", "body must be {\"text\": string}");
    }
    return guarded(req, [&] {
      return json_response(req, http::status::ok, post_result_json(service.post_turn(id, body["text"].get<std::string>())));
    });
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buffer_;
  Request req_;
  HttpServer::Impl& server_;
};

}  // namespace

Response HttpServer::Impl::handle_static(const Request& req) const {
  auto parts = split_path(ssv(req.target()));
  std::filesystem::path path = options.static_dir;
  for (const auto& p : parts) {
    if (p == ".." || p == ".") return error_response(req, http::status::bad_request, "BadRequest", "bad path");
    path /= p;
  }
  if (parts.empty() || std::filesystem::is_directory(path)) path /= "index.html";
  std::ifstream in(path, std::ios::binary);
  if (!in) return error_response(req, http::status::not_found, "NotFound", std::string(req.target()));
  std::ostringstream body;
  body << in.rdbuf();
  return make_response(req, http::status::ok, body.str(), mime_type(path));
}

void HttpServer::Impl::accept() {
  acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
    if (!running) return;
    if (!ec) std::make_shared<HttpSession>(std::move(socket), *this)->run();
    accept();
  });
}

HttpServer::HttpServer(std::shared_ptr<SessionService> service, HttpServerOptions options)
    : impl_(std::make_unique<Impl>()) {
  impl_->service = std::move(service);
  impl_->options = std::move(options);
}

HttpServer::~HttpServer() { stop(); }

void HttpServer::start() {
  auto& s = *impl_;
  const tcp::endpoint endpoint{net::ip::make_address(s.options.address), s.options.port};
  s.acceptor.open(endpoint.protocol());
  s.acceptor.set_option(net::socket_base::reuse_address(true));
  s.acceptor.bind(endpoint);
  s.acceptor.listen(net::socket_base::max_listen_connections);
  s.running = true;
  s.accept();
  s.io_thread = std::thread([&s] { s.ioc.run(); });
}

std::uint16_t HttpServer::port() const { return impl_->acceptor.local_endpoint().port(); }

void HttpServer::stop() {
  auto& s = *impl_;
  if (!s.running.exchange(false)) return;
  net::post(s.ioc, [&s] {
    beast::error_code ec;
    s.acceptor.close(ec);
  });
  {
    std::unique_lock lock(s.inflight_mutex);
    s.inflight_cv.wait(lock, [&s] { return s.inflight == 0; });
  }
  s.ioc.stop();
  if (s.io_thread.joinable()) s.io_thread.join();
  {
    std::lock_guard lock(s.stopped_mutex);
    s.stopped = true;
  }
  s.stopped_cv.notify_all();
}

void HttpServer::wait() {
  auto& s = *impl_;
  std::unique_lock lock(s.stopped_mutex);
  s.stopped_cv.wait(lock, [&s] { return s.stopped; });
}

}  // namespace travel
