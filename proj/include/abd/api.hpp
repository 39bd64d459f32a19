#pragma once

#include <memory>
#include <string>

#include "abd/service.hpp"

namespace abd {

/// JSON over HTTP front end for a Service.
///
/// Error bodies are {"error": <code>, "message": <text>} with status 400
/// (invalid request), 401 (admin token), 404 (unknown resource) or 500.
/// A blocked generation answers 403 with the verification outcome and
/// alternatives.
class ApiServer {
 public:
  explicit ApiServer(Service& service);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Binds to `host:port`; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks until stop() is called.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace abd
