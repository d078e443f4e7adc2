// safebike: ingest feeds, run the HTTP service, or answer one route /
// prediction query offline.

#include "safebike/server.hpp"
#include "safebike/service.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

using safebike::service::EngineConfig;
using safebike::service::json;

EngineConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  EngineConfig cfg = safebike::service::load_config(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw safebike::service::ConfigError("--set expects key=value, got '" + kv + "'");
    }
    safebike::service::apply_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  safebike::service::validate_config(cfg);
  return cfg;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) {
      return out;
    }
    start = pos + 1;
  }
}

// "lat,lon" -> {"lat": .., "lon": ..}; the field name is reported on failure.
json parse_point_flag(const std::string& flag, const std::string& value) {
  const auto parts = split(value, ',');
  if (parts.size() != 2) {
    throw std::invalid_argument(flag + " must be LAT,LON");
  }
  json p;
  const char* names[2] = {"lat", "lon"};
  for (int k = 0; k < 2; ++k) {
    try {
      std::size_t used = 0;
      const double v = std::stod(parts[k], &used);
      if (used != parts[k].size()) {
        throw std::invalid_argument("trailing characters");
      }
      p[names[k]] = v;
    } catch (const std::exception&) {
      throw std::invalid_argument(flag + "." + names[k] + " must be a number, got '" + parts[k] + "'");
    }
  }
  return p;
}

json parse_weights_flag(const std::string& value) {
  const auto parts = split(value, ',');
  if (parts.size() != 3) {
    throw std::invalid_argument("weights must be ALPHA,BETA,GAMMA");
  }
  json w;
  const char* names[3] = {"alpha", "beta", "gamma"};
  for (int k = 0; k < 3; ++k) {
    try {
      std::size_t used = 0;
      const double v = std::stod(parts[k], &used);
      if (used != parts[k].size()) {
        throw std::invalid_argument("trailing characters");
      }
      w[names[k]] = v;
    } catch (const std::exception&) {
      throw std::invalid_argument(std::string("weights.") + names[k] + " must be a number, got '" + parts[k] + "'");
    }
  }
  return w;
}

int run_ingest(const EngineConfig& cfg) {
  if (cfg.snapshot_store.empty()) {
    throw safebike::service::ConfigError("config key 'snapshot_store' is required for ingest");
  }
  const auto st = safebike::service::load_engine(cfg, safebike::service::LoadMode::ingest);
  safebike::ingest::save_store(st->store, cfg.snapshot_store);
  if (!cfg.network_out.empty()) {
    std::ofstream out(cfg.network_out, std::ios::binary | std::ios::trunc);
    out << safebike::ingest::serialize_road_geojson(st->network);
    if (!out) {
      throw std::runtime_error("cannot write " + cfg.network_out.string());
    }
  }
  json reports = json::object();
  for (const auto& [name, rep] : st->reports) {
    reports[name] = rep.to_json();
  }
  json doc{{"api_version", safebike::service::kApiVersion},
           {"reports", reports},
           {"stations", st->registry.size()},
           {"store_series", st->store.size()},
           {"store_records", st->store.filled()},
           {"network", {{"nodes", st->network.node_count()}, {"edges", st->network.edge_count()}}},
           {"snapshot_store", cfg.snapshot_store.string()}};
  std::cout << doc.dump(2) << "\n";
  return 0;
}

int print_response(const safebike::service::ApiResponse& r) {
  std::cout << r.body.dump(2) << "\n";
  if (r.status != 200) {
    std::cerr << "error: " << r.body["error"]["message"].get<std::string>() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bike-share availability prediction and safe route recommendation"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_path, "Engine config file (key = value lines)")->required();
  app.add_option("--set", overrides, "Override a config key: key=value (repeatable)");

  auto* ingest_cmd = app.add_subcommand("ingest", "Parse inputs, write the snapshot store, print ingest reports");

  auto* serve_cmd = app.add_subcommand("serve", "Start the HTTP service");
  std::string listen;
  serve_cmd->add_option("--listen", listen, "host:port (overrides config 'listen')");

  auto* route_cmd = app.add_subcommand("route", "Answer one route query and print the response document");
  std::string origin;
  std::string destination;
  std::string departure;
  std::string scheme = "optimal";
  std::string weights;
  route_cmd->add_option("--origin", origin, "LAT,LON")->required();
  route_cmd->add_option("--destination", destination, "LAT,LON")->required();
  route_cmd->add_option("--departure", departure, "ISO-8601 instant (default: engine now)");
  route_cmd->add_option("--scheme", scheme, "shortest | safest | optimal");
  route_cmd->add_option("--weights", weights, "ALPHA,BETA,GAMMA (default 0.3,0.3,0.4)");

  auto* predict_cmd = app.add_subcommand("predict", "Predict one station's availability");
  std::string station;
  int horizon = 0;
  predict_cmd->add_option("--station", station, "Station id")->required();
  predict_cmd->add_option("--horizon", horizon, "Number of 10-minute steps (default: config 'horizon')");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!listen.empty()) {
      overrides.push_back("listen=" + listen);
    }
    const EngineConfig cfg = resolve_config(config_path, overrides);

    if (*ingest_cmd) {
      return run_ingest(cfg);
    }

    if (*serve_cmd) {
      auto state = safebike::service::load_engine(cfg, safebike::service::LoadMode::serve);
      safebike::service::Server server(cfg, std::move(state));
      std::cerr << "listening on " << cfg.listen_host << ":" << cfg.listen_port << "\n";
      if (!server.listen(cfg.listen_host, cfg.listen_port)) {
        std::cerr << "error: cannot bind " << cfg.listen_host << ":" << cfg.listen_port << "\n";
        return 1;
      }
      return 0;
    }

    if (*route_cmd) {
      json body{{"origin", parse_point_flag("origin", origin)},
                {"destination", parse_point_flag("destination", destination)},
                {"scheme", scheme}};
      if (!departure.empty()) {
        body["departure_time"] = departure;
      }
      if (!weights.empty()) {
        body["weights"] = parse_weights_flag(weights);
      }
      const auto st = safebike::service::load_engine(cfg);
      return print_response(safebike::service::post_route(*st, body));
    }

    if (*predict_cmd) {
      const auto st = safebike::service::load_engine(cfg);
      const int n = predict_cmd->count("--horizon") > 0 ? horizon : cfg.horizon;
      return print_response(safebike::service::get_prediction(*st, station, n));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
