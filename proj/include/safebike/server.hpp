#pragma once

// HTTP front end over the JSON API, plus the optional re-ingestion loop.

#include "safebike/service.hpp"

#include <httplib.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <iostream>
#include <memory>
#include <string>
#include <thread>

namespace safebike::service {

class Server {
public:
  Server(EngineConfig cfg, std::shared_ptr<const EngineState> initial)
      : config_(std::move(cfg)), engine_(std::move(initial)) {
    install_routes();
  }

  ~Server() { stop(); }

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and serves until stop(). Returns false if the address could not be bound.
  bool listen(const std::string& host, int port) {
    start_poller();
    return http_.listen(host, port);
  }

  /// Binds to an ephemeral port; serve with listen_after_bind().
  int bind_any(const std::string& host) { return http_.bind_to_any_port(host); }
  bool listen_after_bind() {
    start_poller();
    return http_.listen_after_bind();
  }

  void wait_until_ready() const { http_.wait_until_ready(); }

  void stop() {
    {
      std::lock_guard lock(poll_mu_);
      stopping_ = true;
    }
    poll_cv_.notify_all();
    http_.stop();
    if (poller_.joinable()) {
      poller_.join();
    }
  }

  EngineHandle& engine() { return engine_; }

  /// One re-ingestion pass; the old state stays live on failure.
  bool reload() {
    try {
      engine_.swap_in(load_engine(config_, LoadMode::serve));
      return true;
    } catch (const std::exception& e) {
      std::cerr << "reload failed, keeping previous state: " << e.what() << "\n";
      return false;
    }
  }

private:
  static void send(httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(r.body.dump(), "application/json");
  }

  static std::optional<int> int_param(const httplib::Request& req, const char* name, int fallback) {
    if (!req.has_param(name)) {
      return fallback;
    }
    int v = 0;
    if (!safebike::detail::parse_int(req.get_param_value(name), v)) {
      return std::nullopt;
    }
    return v;
  }

  void install_routes() {
    http_.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
      const auto st = engine_.get();
      send(res, {200, json{{"api_version", kApiVersion}, {"status", "ok"}, {"now", format_instant(st->now)}}});
    });
    http_.Get("/stations", [this](const httplib::Request&, httplib::Response& res) {
      send(res, get_stations(*engine_.get()));
    });
    http_.Get(R"(/stations/([^/]+)/history)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto hours = int_param(req, "hours", 24);
      if (!hours) {
        send(res, api_error(400, "invalid_argument", "hours must be an integer"));
        return;
      }
      send(res, get_history(*engine_.get(), req.matches[1], *hours));
    });
    http_.Get(R"(/stations/([^/]+)/prediction)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto st = engine_.get();
      const auto horizon = int_param(req, "horizon", st->config.horizon);
      if (!horizon) {
        send(res, api_error(400, "invalid_argument", "horizon must be an integer"));
        return;
      }
      send(res, get_prediction(*st, req.matches[1], *horizon));
    });
    http_.Post("/route", [this](const httplib::Request& req, httplib::Response& res) {
      send(res, post_route(*engine_.get(), std::string_view(req.body)));
    });
    http_.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
    if (!config_.static_dir.empty()) {
      http_.set_mount_point("/", config_.static_dir.string());
    }
  }

  void start_poller() {
    if (config_.poll_interval_s <= 0 || poller_.joinable()) {
      return;
    }
    poller_ = std::thread([this] {
      std::unique_lock lock(poll_mu_);
      while (!stopping_) {
        if (poll_cv_.wait_for(lock, std::chrono::seconds{config_.poll_interval_s}, [this] { return stopping_; })) {
          break;
        }
        lock.unlock();
        reload();
        lock.lock();
      }
    });
  }

  EngineConfig config_;
  EngineHandle engine_;
  httplib::Server http_;
  std::thread poller_;
  std::mutex poll_mu_;
  std::condition_variable poll_cv_;
  bool stopping_ = false;
};

}  // namespace safebike::service
