#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "travel/session_service.hpp"

namespace travel {

struct HttpServerOptions {
  std::string address = "127.0.0.1";
  std::uint16_t port = 0;  // 0 picks a free port
  std::filesystem::path static_dir;  // served under "/" when set
};

// HTTP and WebSocket front end for a SessionService, both on one port.
//
//   POST   /sessions              -> 201 {id, opening, phase}
//   POST   /sessions/{id}/turns   -> 200 {reply, turn, customer_turn, phase, status, slots, breakdown, latency_ms}
//   GET    /sessions/{id}         -> 200 session snapshot
//   DELETE /sessions/{id}         -> 200 session snapshot (aborted)
//   WS     /sessions/{id}/stream  -> {"type":"snapshot"} then turn and closed events
//
// Errors are {"error": code, "message": text} with 400, 404, 409, 503 or 500.
class HttpServer {
 public:
  HttpServer(std::shared_ptr<SessionService> service, HttpServerOptions options);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds and starts serving on a background thread. Throws on bind failure.
  void start();
  // Port actually bound; valid after start().
  std::uint16_t port() const;
  // Stops accepting, closes connections and waits for in-flight turns.
  void stop();
  // Blocks until stop() is called from another thread or a signal handler.
  void wait();

  struct Impl;

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace travel
