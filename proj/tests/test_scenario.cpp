#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "crowdcate/common/digest.hpp"
#include "crowdcate/scenario/dataset.hpp"
#include "crowdcate/scenario/generate.hpp"

using namespace crowdcate;
using namespace crowdcate::scenario;

namespace {

const sim::Simulator& shared_sim() {
  static const sim::Simulator s(sim::build_default_layout());
  return s;
}

GenConfig small_config(double rate = 0.9, std::size_t seeds = 4) {
  GenConfig c;
  c.occupancy_rates = {rate};
  c.seeds_per_rate_combo = seeds;
  return c;
}

std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "crowdcate_test_scenario";
  std::filesystem::create_directories(dir);
  return dir / name;
}

// P({i,j}) for sequential weighted sampling without replacement, straight from the definition.
double pair_probability(const std::array<double, 6>& w, std::size_t i, std::size_t j) {
  double total = 0;
  for (double v : w) total += v;
  auto first_then = [&](std::size_t a, std::size_t b) { return w[a] / total * w[b] / (total - w[a]); };
  return first_then(i, j) + first_then(j, i);
}

}  // namespace

TEST(Treatments, ThirtyDistinctWithTwoOpenDoors) {
  const auto& zs = enumerate_treatments();
  ASSERT_EQ(zs.size(), 30u);
  for (std::size_t a = 0; a < zs.size(); ++a) {
    EXPECT_EQ(zs[a].open_door_count(), 2u);
    EXPECT_EQ(treatment_index(zs[a]), a);
    for (std::size_t b = a + 1; b < zs.size(); ++b) EXPECT_FALSE(zs[a] == zs[b]);
  }
  EXPECT_FALSE(zs[14].route_guide);
  EXPECT_TRUE(zs[15].route_guide);
  EXPECT_EQ(zs[0], sim::Treatment::with_doors(false, 0, 1));
  EXPECT_EQ(zs[29], sim::Treatment::with_doors(true, 4, 5));
}

TEST(Occupancy, DegenerateRates) {
  const auto& L = shared_sim().layout();
  EXPECT_EQ(sample_occupancy(L, {0, 0, 0, 0}, 5).count(), 0u);
  EXPECT_EQ(sample_occupancy(L, {1, 1, 1, 1}, 5).count(), 868u);
  const auto x = sample_occupancy(L, {1, 0, 0, 0}, 5);
  EXPECT_EQ(x.count(), L.block_size(0));
  for (std::size_t s = 0; s < L.seat_count(); ++s) EXPECT_EQ(x[s], L.block_of_seat(s) == 0);
  EXPECT_EQ(sample_occupancy(L, {0.3, 0.6, 0.2, 0.8}, 9), sample_occupancy(L, {0.3, 0.6, 0.2, 0.8}, 9));
}

TEST(Occupancy, BlockFractionsWithinBinomialBand) {
  const auto& L = shared_sim().layout();
  std::array<double, 4> occupied{};
  const std::size_t runs = 10000;
  for (std::size_t seed = 0; seed < runs; ++seed) {
    const auto x = sample_occupancy(L, {0.5, 0.5, 0.5, 0.5}, seed);
    for (std::size_t s = 0; s < L.seat_count(); ++s) occupied[L.block_of_seat(s)] += x[s];
  }
  for (std::size_t b = 0; b < 4; ++b) {
    const double n = static_cast<double>(runs * L.block_size(b));
    const double sigma = std::sqrt(0.25 / n);
    EXPECT_NEAR(occupied[b] / n, 0.5, 3 * sigma) << "block " << b;
  }
}

TEST(Propensity, ClosedFormValues) {
  EXPECT_EQ(guide_propensity(sim::Occupancy(868, true)), 0.5);
  EXPECT_NEAR(guide_propensity(sim::Occupancy(868)), 1.0 / (1.0 + std::exp(1.0)), 1e-15);
  EXPECT_NEAR(guide_propensity(sim::Occupancy(868)), 0.26894, 1e-5);
  sim::Occupancy x(868);
  double prev = guide_propensity(x);
  for (std::size_t s = 0; s < 868; s += 7) {
    x.set(s, true);
    const double p = guide_propensity(x);
    EXPECT_GT(p, prev);
    prev = p;
  }
}

TEST(Doors, PairDistributionMatchesDefinition) {
  const std::array<double, 6> w{0.2, 0.9, 0.5, 0.1, 0.7, 0.3};
  const auto dist = door_pair_distribution(w);
  double total = 0;
  std::size_t k = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = i + 1; j < 6; ++j, ++k) {
      EXPECT_NEAR(dist[k], pair_probability(w, i, j), 1e-15);
      total += dist[k];
    }
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Doors, SampledPairsFollowTheDistribution) {
  const std::array<double, 6> w{0.2, 0.9, 0.5, 0.1, 0.7, 0.3};
  const auto dist = door_pair_distribution(w);
  std::array<double, 15> count{};
  Rng rng(31);
  const std::size_t n = 10000;
  for (std::size_t t = 0; t < n; ++t) {
    auto [a, b] = sample_doors(w, rng);
    ASSERT_NE(a, b);
    if (a > b) std::swap(a, b);
    std::size_t k = 0;
    for (std::size_t i = 0; i < a; ++i) k += 5 - i;
    ++count[k + (b - a - 1)];
  }
  for (std::size_t k = 0; k < 15; ++k) {
    const double sigma = std::sqrt(dist[k] * (1 - dist[k]) / static_cast<double>(n));
    EXPECT_NEAR(count[k] / static_cast<double>(n), dist[k], 3 * sigma + 1e-12) << "pair " << k;
  }
}

TEST(Doors, DegenerateWeightsFixTheFirstDoor) {
  const std::array<double, 6> w{1, 0, 0, 0, 0, 0};
  Rng rng(32);
  std::array<int, 6> second{};
  for (int t = 0; t < 5000; ++t) {
    const auto [a, b] = sample_doors(w, rng);
    EXPECT_EQ(a, 0u);
    ++second[b];
  }
  for (std::size_t d = 1; d < 6; ++d) EXPECT_NEAR(second[d] / 5000.0, 0.2, 3 * std::sqrt(0.16 / 5000));
  const std::array<double, 6> zero{};
  const auto [a, b] = sample_doors(zero, rng);
  EXPECT_NE(a, b);
}

TEST(Doors, SymmetricOccupancyGivesSymmetricFrequencies) {
  // Exits 1 and 2 sit at mirrored front corners, so a full house weights them equally.
  const auto hoods = door_neighborhoods(shared_sim().layout(), 8.0, 0.9);
  const auto w = door_weights(sim::Occupancy(868, true), hoods);
  EXPECT_EQ(w[0], w[1]);
  Rng rng(33);
  std::array<double, 6> hits{};
  const std::size_t n = 10000;
  for (std::size_t t = 0; t < n; ++t) {
    const auto [a, b] = sample_doors(w, rng);
    ++hits[a];
    ++hits[b];
  }
  const double p = 2.0 / 6.0;
  const double sigma = std::sqrt(2 * p * (1 - p) / static_cast<double>(n));
  EXPECT_NEAR(hits[0] / n - hits[1] / n, 0.0, 3 * sigma);
}

TEST(Doors, NeighbourhoodsAreNonEmptyAndRadiusBound) {
  const auto& L = shared_sim().layout();
  const auto hoods = door_neighborhoods(L, 8.0, 0.9);
  for (std::size_t e = 0; e < 6; ++e) {
    EXPECT_FALSE(hoods.seats[e].empty());
    const auto ex = L.exits()[e].cell;
    for (std::size_t s : hoods.seats[e]) {
      const auto p = L.cell_pos(L.seat_cell(s));
      const double dr = (static_cast<double>(p.row) - static_cast<double>(ex.row)) * 0.9;
      const double dc = (static_cast<double>(p.col) - static_cast<double>(ex.col)) * 0.9;
      EXPECT_LE(std::hypot(dr, dc), 8.0 + 1e-12);
    }
  }
}

TEST(Policy, EveryTreatmentHasPositiveProbability) {
  const auto& L = shared_sim().layout();
  const auto hoods = door_neighborhoods(L, 8.0, 0.9);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto x = sample_occupancy(L, {0.5, 0.9, 0.5, 0.9}, seed);
    const auto dist = treatment_distribution(x, hoods);
    double total = 0, guided = 0;
    for (std::size_t t = 0; t < 30; ++t) {
      EXPECT_GT(dist[t], 0.0);
      total += dist[t];
      if (t >= 15) guided += dist[t];
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    EXPECT_NEAR(guided, guide_propensity(x), 1e-12);
  }
}

TEST(Policy, GuideFrequencyWithinThreeSigmaOfPropensity) {
  const auto& L = shared_sim().layout();
  const auto hoods = door_neighborhoods(L, 8.0, 0.9);
  Rng rng(34);
  const std::array<double, 3> rates{0.1, 0.5, 0.9};
  double guided = 0, mean_p = 0, var = 0;
  const std::size_t n = 10000;
  for (std::size_t t = 0; t < n; ++t) {
    const std::array<double, 4> r{rates[uniform_index(rng, 3)], rates[uniform_index(rng, 3)],
                                  rates[uniform_index(rng, 3)], rates[uniform_index(rng, 3)]};
    const auto x = sample_occupancy(L, r, rng);
    const double p = guide_propensity(x);
    mean_p += p;
    var += p * (1 - p);
    guided += sample_treatment(x, hoods, rng).route_guide;
  }
  EXPECT_NEAR(guided, mean_p, 3 * std::sqrt(var));
}

TEST(CovariateGrid, CountsOccupiedSeats) {
  const auto& L = shared_sim().layout();
  const auto empty = to_covariate_grid(L, sim::Occupancy(868));
  EXPECT_EQ(empty.shape(), (nn::Shape{1, 22, 42}));
  for (double v : empty.data()) EXPECT_EQ(v, 0.0);
  double full = 0;
  for (double v : to_covariate_grid(L, sim::Occupancy(868, true)).data()) full += v;
  EXPECT_EQ(full, 868.0);
  const auto x = sample_occupancy(L, {0.2, 0.4, 0.6, 0.8}, 3);
  const auto g = to_covariate_grid(L, x);
  double s = 0;
  for (double v : g.data()) s += v;
  EXPECT_EQ(s, static_cast<double>(x.count()));
  for (std::size_t seat = 0; seat < 868; ++seat) EXPECT_EQ(g[L.seat_cell(seat)], x[seat] ? 1.0 : 0.0);
}

TEST(Generate, RatePointNineNeverDrops) {
  const auto r = generate_dataset(shared_sim(), small_config(0.9, 10), 1);
  EXPECT_EQ(r.records.size(), 10u);
  EXPECT_EQ(r.dropped, 0u);
  EXPECT_EQ(r.combos, 1u);
  for (const auto& rec : r.records) {
    EXPECT_GE(rec.occupancy.count(), 400u);
    ASSERT_TRUE(rec.has_table());
    for (const auto& o : rec.table) {
      EXPECT_GE(o.max_time, o.mean_time);
      EXPECT_GE(o.mean_time, 0.0);
      EXPECT_GE(o.std_time, 0.0);
    }
  }
}

TEST(Generate, RatePointOneAlwaysDrops) {
  const auto r = generate_dataset(shared_sim(), small_config(0.1, 10), 1);
  EXPECT_TRUE(r.records.empty());
  EXPECT_EQ(r.dropped, 10u);
}

TEST(Generate, ZeroNoiseFactualEqualsTable) {
  GenConfig c = small_config(0.9, 3);
  c.noise_std = 0.0;
  for (const auto& rec : generate_dataset(shared_sim(), c, 2).records) {
    EXPECT_EQ(rec.factual_outcome, rec.table[treatment_index(rec.factual_treatment)]);
  }
}

TEST(Generate, NoisyFactualIsTablePlusNoise) {
  const auto recs = generate_dataset(shared_sim(), small_config(0.9, 3), 2).records;
  bool differs = false;
  for (const auto& rec : recs) {
    const auto truth = rec.table[treatment_index(rec.factual_treatment)];
    differs |= !(rec.factual_outcome == truth);
    EXPECT_LT(std::abs(rec.factual_outcome.max_time - truth.max_time), 2.0 * 6);
  }
  EXPECT_TRUE(differs);
}

TEST(Generate, TableMatchesDirectSimulation) {
  const auto rec = generate_dataset(shared_sim(), small_config(0.9, 1), 3).records.at(0);
  const auto& zs = enumerate_treatments();
  for (std::size_t t = 0; t < 30; t += 7) {
    EXPECT_EQ(rec.table[t], OutcomeTriple::from(sim::simulate(shared_sim(), rec.occupancy, zs[t])));
  }
  EXPECT_EQ(simulate_table(shared_sim(), rec.occupancy), rec.table);
}

TEST(Generate, IndependentOfJobCount) {
  GenConfig c;
  c.occupancy_rates = {0.5, 0.9};
  c.seeds_per_rate_combo = 1;
  c.max_combos = 6;
  const auto a = generate_dataset(shared_sim(), c, 4, 1);
  const auto b = generate_dataset(shared_sim(), c, 4, 3);
  const Dataset da{{}, a.records}, db{{}, b.records};
  EXPECT_EQ(dataset_text(da, true), dataset_text(db, true));
  EXPECT_EQ(a.dropped, b.dropped);
}

TEST(Generate, RateCombinationsEnumerateAllFourBlocks) {
  GenConfig c;
  const auto combos = rate_combinations(c);
  EXPECT_EQ(combos.size(), 81u);
  EXPECT_EQ(combos.front(), (std::array<double, 4>{0.1, 0.1, 0.1, 0.1}));
  EXPECT_EQ(combos[1], (std::array<double, 4>{0.1, 0.1, 0.1, 0.5}));
  c.max_combos = 5;
  EXPECT_EQ(rate_combinations(c).size(), 5u);
}

TEST(Generate, InvalidConfigRejected) {
  GenConfig c;
  c.occupancy_rates = {0.0};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.occupancy_rates = {0.5};
  c.noise_std = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Dataset, RoundTripAndDeterminism) {
  const auto gen = generate_dataset(shared_sim(), small_config(0.9, 3), 5);
  Dataset ds;
  ds.manifest.gen = small_config(0.9, 3);
  ds.manifest.master_seed = 5;
  ds.manifest.layout_hash = shared_sim().layout().hash();
  ds.manifest.scenarios = gen.records.size();
  ds.records = gen.records;
  const auto p1 = temp_path("a.jsonl"), p2 = temp_path("b.jsonl");
  write_dataset(p1, ds);
  write_dataset(p2, ds);
  EXPECT_EQ(read_file(p1), read_file(p2));
  EXPECT_EQ(read_file(manifest_path(p1)), read_file(manifest_path(p2)));
  const Dataset back = read_dataset(p1);
  ASSERT_EQ(back.records.size(), ds.records.size());
  EXPECT_EQ(back.manifest.records_sha256, sha256_file(p1));
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    EXPECT_EQ(back.records[i].occupancy, ds.records[i].occupancy);
    EXPECT_EQ(back.records[i].factual_outcome, ds.records[i].factual_outcome);
    EXPECT_EQ(back.records[i].table, ds.records[i].table);
    EXPECT_EQ(back.records[i].factual_treatment, ds.records[i].factual_treatment);
  }
  EXPECT_EQ(dataset_text(back, true), dataset_text(ds, true));
}

TEST(Dataset, ObservationalExportHasNoTables) {
  Dataset ds;
  ds.records = generate_dataset(shared_sim(), small_config(0.9, 2), 6).records;
  ds.manifest.scenarios = ds.records.size();
  const auto p = temp_path("obs.jsonl");
  write_dataset(p, ds, false);
  const Dataset back = read_dataset(p);
  EXPECT_FALSE(back.manifest.ground_truth);
  for (const auto& r : back.records) EXPECT_FALSE(r.has_table());
  EXPECT_EQ(read_file(p).find("table"), std::string::npos);
}

TEST(Dataset, TamperingIsDetected) {
  Dataset ds;
  ds.records = generate_dataset(shared_sim(), small_config(0.9, 2), 7).records;
  ds.manifest.scenarios = ds.records.size();
  const auto p = temp_path("tamper.jsonl");
  write_dataset(p, ds);
  std::string text = read_file(p);
  text[text.size() / 2] = text[text.size() / 2] == '1' ? '2' : '1';
  write_file(p, text);
  EXPECT_THROW(read_dataset(p), DatasetError);
  EXPECT_THROW(read_dataset(temp_path("missing.jsonl")), std::exception);
}

TEST(Split, DisjointAndComplete) {
  for (std::uint64_t seed : {0ULL, 1ULL, 99ULL}) {
    const auto s = split_scenarios(423, seed, 0.9);
    EXPECT_EQ(s.train.size(), 381u);
    std::set<std::size_t> all(s.train.begin(), s.train.end());
    for (std::size_t t : s.test) EXPECT_TRUE(all.insert(t).second);
    EXPECT_EQ(all.size(), 423u);
    EXPECT_EQ(*all.rbegin(), 422u);
  }
  EXPECT_EQ(split_scenarios(100, 3).test, split_scenarios(100, 3).test);
  EXPECT_NE(split_scenarios(100, 3).test, split_scenarios(100, 4).test);
}
