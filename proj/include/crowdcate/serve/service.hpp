#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "crowdcate/model/estimator.hpp"
#include "crowdcate/sim/simulate.hpp"

namespace httplib {
class Server;
}

namespace crowdcate::serve {

struct Reply {
  int status = 200;
  nlohmann::json body;
};

/// Backing logic for the HTTP endpoints, callable without a socket. Immutable once loaded,
/// so handlers may run concurrently.
class WhatIfService {
 public:
  explicit WhatIfService(std::chrono::milliseconds simulation_budget = std::chrono::seconds(10));
  ~WhatIfService();

  /// One checkpoint per outcome component, in max/mean/std order.
  void load_checkpoints(const std::array<std::filesystem::path, 3>& paths);
  /// Debug mode: predictions come from the noiseless simulator.
  void load_oracle();
  bool ready() const;

  Reply whatif(const std::string& request_body) const;
  Reply layout() const;
  Reply health() const;

  const std::string& model_manifest_hash() const { return manifest_hash_; }

 private:
  std::array<double, 3> predict(const sim::Occupancy& x, std::size_t treatment,
                                const std::array<std::vector<model::OutcomeRow>, 3>& tables) const;

  std::chrono::milliseconds budget_;
  const sim::TheaterLayout* layout_;
  std::unique_ptr<sim::Simulator> simulator_;
  std::optional<std::array<model::Estimator, 3>> estimators_;
  bool oracle_ = false;
  std::string manifest_hash_;
  nlohmann::json model_info_ = nlohmann::json::object();
  nlohmann::json layout_json_;
};

/// Registers GET /health, GET /layout, POST /whatif and CORS preflight on `server`.
void install_routes(httplib::Server& server, const WhatIfService& service, const std::string& cors_origin = "*");

}  // namespace crowdcate::serve
