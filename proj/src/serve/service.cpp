#include "crowdcate/serve/service.hpp"

#include <algorithm>
#include <numeric>

#include <fmt/format.h>
#include <httplib.h>

#include "crowdcate/common/digest.hpp"
#include "crowdcate/scenario/generate.hpp"

namespace crowdcate::serve {

using nlohmann::json;
using scenario::Outcome;

namespace {

const sim::TheaterLayout& bundled_layout() {
  static const sim::TheaterLayout layout = sim::build_default_layout();
  return layout;
}

struct BadRequest : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BudgetExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Reply error(int status, const std::string& msg) { return {status, json{{"error", msg}}}; }

json outcome_json(const std::array<double, 3>& v) { return {{"max", v[0]}, {"mean", v[1]}, {"std", v[2]}}; }

json make_layout_json(const sim::TheaterLayout& layout) {
  json seats = json::array(), blocks = json::array(), exits = json::array(), grid = json::array();
  for (std::size_t s = 0; s < layout.seat_count(); ++s) {
    const auto p = layout.cell_pos(layout.seat_cell(s));
    seats.push_back({p.row, p.col});
    blocks.push_back(std::string(1, static_cast<char>('A' + layout.block_of_seat(s))));
  }
  for (const auto& e : layout.exits()) exits.push_back({{"id", e.id}, {"row", e.cell.row}, {"col", e.cell.col}});
  for (std::size_t r = 0; r < layout.rows(); ++r) {
    std::string row;
    for (std::size_t c = 0; c < layout.cols(); ++c) {
      switch (layout.kind(layout.cell_index(r, c))) {
        case sim::CellKind::wall: row += '#'; break;
        case sim::CellKind::aisle: row += '.'; break;
        case sim::CellKind::seat: row += 'S'; break;
        case sim::CellKind::exit: row += 'E'; break;
      }
    }
    grid.push_back(row);
  }
  return {{"rows", layout.rows()},   {"cols", layout.cols()}, {"seat_count", layout.seat_count()},
          {"seats", seats},          {"blocks", blocks},      {"exits", exits},
          {"grid", grid},            {"layout_hash", layout.hash()}};
}

sim::Occupancy parse_occupancy(const json& req, const sim::TheaterLayout& layout) {
  const bool has_bits = req.contains("occupancy");
  const bool has_rates = req.contains("rates") || req.contains("seed");
  if (has_bits == has_rates) throw BadRequest("supply exactly one of 'occupancy' or 'rates' + 'seed'");
  if (has_bits) {
    const json& bits = req.at("occupancy");
    if (!bits.is_array() || bits.size() != layout.seat_count()) {
      throw BadRequest(fmt::format("'occupancy' must be an array of {} 0/1 values", layout.seat_count()));
    }
    sim::Occupancy x(layout.seat_count());
    for (std::size_t i = 0; i < bits.size(); ++i) {
      const json& b = bits[i];
      if (b.is_boolean()) {
        x.set(i, b.get<bool>());
      } else if (b.is_number_integer() && (b.get<int>() == 0 || b.get<int>() == 1)) {
        x.set(i, b.get<int>() == 1);
      } else {
        throw BadRequest(fmt::format("occupancy[{}] is not 0/1", i));
      }
    }
    return x;
  }
  if (!req.contains("rates") || !req.contains("seed")) throw BadRequest("'rates' needs a 'seed' and vice versa");
  const json& rates = req.at("rates");
  if (!rates.is_array() || rates.size() != sim::kBlockCount) throw BadRequest("'rates' must hold 4 numbers");
  std::array<double, sim::kBlockCount> r{};
  for (std::size_t b = 0; b < r.size(); ++b) {
    if (!rates[b].is_number()) throw BadRequest("'rates' must hold 4 numbers");
    r[b] = rates[b].get<double>();
    if (!(r[b] >= 0.0 && r[b] <= 1.0)) throw BadRequest("rates must lie in [0, 1]");
  }
  if (!req.at("seed").is_number_unsigned()) throw BadRequest("'seed' must be a nonnegative integer");
  return scenario::sample_occupancy(layout, r, req.at("seed").get<std::uint64_t>());
}

std::vector<std::size_t> parse_filter(const json& req) {
  std::vector<std::size_t> out;
  if (!req.contains("treatments") || req.at("treatments").is_null()) {
    out.resize(scenario::kTreatmentCount);
    std::iota(out.begin(), out.end(), 0);
    return out;
  }
  const json& f = req.at("treatments");
  if (!f.is_array()) throw BadRequest("'treatments' must be an array");
  for (const json& t : f) {
    std::size_t idx = 0;
    if (t.is_number_unsigned()) {
      idx = t.get<std::size_t>();
      if (idx >= scenario::kTreatmentCount) throw BadRequest(fmt::format("treatment index {} out of range", idx));
    } else if (t.is_array() && t.size() == sim::kTreatmentDims) {
      std::array<int, sim::kTreatmentDims> bits{};
      for (std::size_t k = 0; k < bits.size(); ++k) {
        if (!t[k].is_number_integer()) throw BadRequest("treatment bits must be 0/1");
        bits[k] = t[k].get<int>();
      }
      try {
        idx = scenario::treatment_index(sim::Treatment::from_bits(bits));
      } catch (const std::exception& e) {
        throw BadRequest(std::string("invalid treatment: ") + e.what());
      }
    } else {
      throw BadRequest("each treatment is an index 0..29 or a 7-bit array");
    }
    if (std::find(out.begin(), out.end(), idx) != out.end()) throw BadRequest("duplicate treatment in filter");
    out.push_back(idx);
  }
  if (out.empty()) throw BadRequest("'treatments' filter is empty");
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

WhatIfService::WhatIfService(std::chrono::milliseconds simulation_budget)
    : budget_(simulation_budget), layout_(&bundled_layout()), layout_json_(make_layout_json(bundled_layout())) {}

WhatIfService::~WhatIfService() = default;

void WhatIfService::load_checkpoints(const std::array<std::filesystem::path, 3>& paths) {
  std::array<model::Estimator, 3> est;
  std::string joined;
  json info = json::object();
  for (std::size_t k = 0; k < 3; ++k) {
    est[k] = model::Estimator::load(paths[k]);
    const std::string want = scenario::to_string(static_cast<Outcome>(k));
    const std::string got = est[k].meta().value("outcome", std::string());
    if (got != want) {
      throw std::invalid_argument(fmt::format("{} predicts '{}', expected '{}'", paths[k].string(), got, want));
    }
    if (est[k].meta().value("layout_hash", std::string()) != layout_->hash()) {
      throw std::invalid_argument(fmt::format("{} was trained on a different layout", paths[k].string()));
    }
    const std::string file_hash = sha256_file(paths[k]);
    joined += file_hash;
    info[want] = {{"checkpoint_sha256", file_hash},
                  {"run_id", est[k].meta().value("run_id", std::string())},
                  {"method", est[k].method_label()},
                  {"dataset_sha256", est[k].meta().value("dataset_sha256", std::string())}};
  }
  estimators_ = std::move(est);
  oracle_ = false;
  simulator_ = std::make_unique<sim::Simulator>(*layout_);
  manifest_hash_ = sha256_hex(joined);
  model_info_ = info;
}

void WhatIfService::load_oracle() {
  estimators_.reset();
  oracle_ = true;
  simulator_ = std::make_unique<sim::Simulator>(*layout_);
  manifest_hash_ = sha256_hex("oracle:" + layout_->hash());
  model_info_ = {{"oracle", true}};
}

bool WhatIfService::ready() const { return oracle_ || estimators_.has_value(); }

Reply WhatIfService::health() const {
  json body{{"ready", ready()}, {"layout_hash", layout_->hash()}, {"models", model_info_}};
  if (ready()) body["model_manifest_hash"] = manifest_hash_;
  return {ready() ? 200 : 503, body};
}

Reply WhatIfService::layout() const { return {200, layout_json_}; }

Reply WhatIfService::whatif(const std::string& request_body) const {
  if (!ready()) return error(503, "models not loaded");
  json req;
  try {
    req = json::parse(request_body);
  } catch (const json::exception& e) {
    return error(400, std::string("malformed JSON: ") + e.what());
  }
  if (!req.is_object()) return error(400, "request body must be a JSON object");
  try {
    const sim::Occupancy x = parse_occupancy(req, *layout_);
    const std::vector<std::size_t> filter = parse_filter(req);
    bool simulate = false;
    if (req.contains("include_simulation")) {
      if (!req.at("include_simulation").is_boolean()) throw BadRequest("'include_simulation' must be a boolean");
      simulate = req.at("include_simulation").get<bool>();
    }
    if ((simulate || oracle_) && x.count() == 0) throw BadRequest("simulation needs at least one occupied seat");

    const auto& treatments = scenario::enumerate_treatments();
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::optional<std::array<double, 3>>> simulated(scenario::kTreatmentCount);
    auto run_sim = [&](std::size_t t) {
      if (!simulated[t]) {
        if (std::chrono::steady_clock::now() - start > budget_) throw BudgetExceeded("simulation budget exceeded");
        simulated[t] = scenario::OutcomeTriple::from(sim::simulate(*simulator_, x, treatments[t])).values();
      }
      return *simulated[t];
    };

    std::vector<std::array<double, 3>> predicted(scenario::kTreatmentCount);
    if (oracle_) {
      for (std::size_t t : filter) predicted[t] = run_sim(t);
    } else {
      for (std::size_t k = 0; k < 3; ++k) {
        const auto rows = (*estimators_)[k].predict_tables(*layout_, {x});
        for (std::size_t t : filter) predicted[t][k] = rows[0][t];
      }
    }

    json entries = json::array();
    for (std::size_t t : filter) {
      const auto& z = treatments[t];
      std::vector<std::size_t> doors;
      for (std::size_t d = 0; d < sim::kExitCount; ++d) {
        if (z.doors[d]) doors.push_back(d + 1);
      }
      json e{{"treatment", t},
             {"z", z.bits()},
             {"route_guide", z.route_guide},
             {"doors", doors},
             {"predicted", outcome_json(predicted[t])}};
      if (simulate) e["simulated"] = outcome_json(run_sim(t));
      entries.push_back(std::move(e));
    }
    std::vector<std::size_t> ranking = filter;
    std::stable_sort(ranking.begin(), ranking.end(),
                     [&](std::size_t a, std::size_t b) { return predicted[a][0] < predicted[b][0]; });
    return {200, json{{"entries", entries},
                      {"ranking", ranking},
                      {"occupied", x.count()},
                      {"model_manifest_hash", manifest_hash_}}};
  } catch (const BadRequest& e) {
    return error(400, e.what());
  } catch (const BudgetExceeded& e) {
    return error(503, e.what());
  } catch (const sim::NonTerminationError& e) {
    return error(500, e.what());
  }
}

void install_routes(httplib::Server& server, const WhatIfService& service, const std::string& cors_origin) {
  auto send = [cors_origin](httplib::Response& res, const Reply& r) {
    res.status = r.status;
    res.set_header("Access-Control-Allow-Origin", cors_origin);
    res.set_content(r.body.dump(), "application/json");
  };
  server.Get("/health", [&service, send](const httplib::Request&, httplib::Response& res) { send(res, service.health()); });
  server.Get("/layout", [&service, send](const httplib::Request&, httplib::Response& res) { send(res, service.layout()); });
  server.Post("/whatif", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.whatif(req.body));
  });
  server.Options(R"(/.*)", [cors_origin](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
    res.set_header("Access-Control-Allow-Origin", cors_origin);
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  });
}

}  // namespace crowdcate::serve
