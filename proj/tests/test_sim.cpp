#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <thread>

#include "crowdcate/common/rng.hpp"
#include "crowdcate/sim/layout.hpp"
#include "crowdcate/sim/routing.hpp"
#include "crowdcate/sim/simulate.hpp"
#include "oracles.hpp"

using namespace crowdcate;
using namespace crowdcate::sim;

namespace {

const Simulator& shared_sim() {
  static const Simulator sim(build_default_layout());
  return sim;
}

Occupancy random_occupancy(Rng& rng, std::size_t seats, double rate) {
  Occupancy x(seats);
  for (std::size_t s = 0; s < seats; ++s) x.set(s, bernoulli(rng, rate));
  if (x.count() == 0) x.set(0, true);
  return x;
}

Occupancy only(std::initializer_list<std::size_t> seats) {
  Occupancy x(kDefaultSeatCount);
  for (std::size_t s : seats) x.set(s, true);
  return x;
}

Treatment door_pair(bool guide, std::size_t a, std::size_t b) { return Treatment::with_doors(guide, a, b); }

}  // namespace

TEST(Layout, DefaultShape) {
  const TheaterLayout& L = shared_sim().layout();
  EXPECT_EQ(L.rows(), 22u);
  EXPECT_EQ(L.cols(), 42u);
  EXPECT_EQ(L.seat_count(), 868u);
  ASSERT_EQ(L.exits().size(), 6u);
  std::set<int> ids;
  for (const auto& e : L.exits()) ids.insert(e.id);
  EXPECT_EQ(ids, (std::set<int>{1, 2, 3, 4, 5, 6}));
  std::size_t total = 0;
  for (std::size_t b = 0; b < kBlockCount; ++b) {
    EXPECT_GT(L.block_size(b), 0u);
    total += L.block_size(b);
  }
  EXPECT_EQ(total, 868u);
  EXPECT_NO_THROW(L.validate());
}

TEST(Layout, BundledFileMatchesBuiltIn) {
  const TheaterLayout file = load_layout(CROWDCATE_SOURCE_DIR "/data/default_layout.txt");
  EXPECT_EQ(file.hash(), build_default_layout().hash());
  EXPECT_EQ(parse_layout(file.to_text()).to_text(), file.to_text());
}

TEST(Layout, EverySeatReachesEveryExit) {
  const TheaterLayout& L = shared_sim().layout();
  for (std::size_t e = 0; e < kExitCount; ++e) {
    const auto d = oracle::bfs(L, L.exit_cell(e));
    for (std::size_t s = 0; s < L.seat_count(); ++s) EXPECT_GT(d[L.seat_cell(s)], 0);
  }
}

TEST(Layout, WalledOffSeatFailsValidation) {
  TheaterLayout L = build_default_layout();
  const std::size_t target = L.seat_cell(400);
  for (std::size_t n : L.neighbors(target)) L.set_kind(n, CellKind::wall);
  EXPECT_THROW(L.validate(), LayoutError);
  EXPECT_THROW(distance_fields(L), LayoutError);
}

TEST(Layout, MalformedTextIsRejected) {
  EXPECT_THROW(parse_layout(""), std::exception);
  EXPECT_THROW(parse_layout("crowd-layout 2 3\nSS\n"), std::exception);
}

TEST(Routing, DistanceFieldsMatchBfsOracle) {
  const Simulator& sim = shared_sim();
  const TheaterLayout& L = sim.layout();
  for (std::size_t e = 0; e < kExitCount; ++e) {
    const auto ref = oracle::bfs(L, L.exit_cell(e));
    EXPECT_EQ(sim.fields().distance(e, L.exit_cell(e)), 0);
    for (std::size_t c = 0; c < L.cell_count(); ++c) {
      if (!L.walkable(c)) continue;
      EXPECT_EQ(sim.fields().distance(e, c), ref[c]) << "exit " << e << " cell " << c;
    }
    for (std::size_t n : L.neighbors(L.exit_cell(e))) {
      if (L.walkable(n)) EXPECT_EQ(sim.fields().distance(e, n), 1);
    }
  }
}

TEST(Routing, SuccessorIsLowestIndexedCloserNeighbour) {
  const Simulator& sim = shared_sim();
  const TheaterLayout& L = sim.layout();
  for (std::size_t e = 0; e < kExitCount; ++e) {
    const auto& succ = sim.successors(e);
    for (std::size_t c = 0; c < L.cell_count(); ++c) {
      if (!L.walkable(c)) continue;
      const int d = sim.fields().distance(e, c);
      long expect = kUnreachable;
      for (std::size_t n : L.neighbors(c)) {
        const bool closer = n == L.exit_cell(e) ? d == 1 : (L.walkable(n) && sim.fields().distance(e, n) == d - 1);
        if (closer && (expect == kUnreachable || static_cast<long>(n) < expect)) expect = static_cast<long>(n);
      }
      EXPECT_EQ(succ[c], expect);
    }
  }
}

TEST(Routing, NearestPlanPicksMinimumWithLowestIdTieBreak) {
  const Simulator& sim = shared_sim();
  const TheaterLayout& L = sim.layout();
  const Occupancy full(L.seat_count(), true);
  const RoutePlan plan = nearest_exit_plan(L, full);
  std::vector<std::vector<int>> d;
  for (std::size_t e = 0; e < kExitCount; ++e) d.push_back(oracle::bfs(L, L.exit_cell(e)));
  std::array<std::size_t, kExitCount> load{};
  std::size_t ties = 0;
  for (std::size_t s = 0; s < L.seat_count(); ++s) {
    std::size_t best = 0;
    for (std::size_t e = 1; e < kExitCount; ++e) {
      if (d[e][L.seat_cell(s)] < d[best][L.seat_cell(s)]) best = e;
    }
    for (std::size_t e = best + 1; e < kExitCount; ++e) ties += d[e][L.seat_cell(s)] == d[best][L.seat_cell(s)];
    EXPECT_EQ(plan.exit_of_seat[s], static_cast<int>(best));
    ++load[best];
  }
  EXPECT_GT(ties, 0u);  // the tie rule is actually exercised
  for (std::size_t n : load) EXPECT_GT(n, 0u);
  EXPECT_EQ(plan.exit_of_seat[0], 0);  // seat 0 sits next to exit 1
}

TEST(Routing, NearestPlanSkipsEmptySeats) {
  const RoutePlan plan = nearest_exit_plan(shared_sim().layout(), only({3, 500}));
  EXPECT_EQ(plan.assigned_count(), 2u);
  EXPECT_EQ(plan.exit_of_seat[4], -1);
}

TEST(Routing, GuidedPlanIsTotalAndStable) {
  const Simulator& sim = shared_sim();
  const RoutePlan& a = sim.guided_plan();
  EXPECT_EQ(a.assigned_count(), sim.layout().seat_count());
  const Simulator other(build_default_layout());
  EXPECT_EQ(guided_plan(other), a);
}

TEST(Simulate, SingleAgentNextToOpenExit) {
  const SimResult r = simulate(shared_sim(), only({0}), door_pair(false, 0, 1));
  EXPECT_EQ(r.evac_time_per_agent, std::vector<double>{1.0});
  EXPECT_EQ(r.max_time, 1.0);
  EXPECT_EQ(r.mean_time, 1.0);
  EXPECT_EQ(r.std_time, 0.0);
}

TEST(Simulate, TwoAgentsQueueAtHalfOpenDoor) {
  // Exit 1 half-open; seats 0 and 1 both drain through it.
  const SimResult r = simulate(shared_sim(), only({0, 1}), door_pair(false, 2, 3));
  EXPECT_EQ(r.evac_time_per_agent, (std::vector<double>{1.0, 2.0}));
}

TEST(Simulate, CapacityBoundsAbsorptionPerTick) {
  // Seats 0 and 20 (row 1, col 0) both neighbour exit 1 at distance 1.
  const TheaterLayout& L = shared_sim().layout();
  const std::size_t below = *L.seat_at(L.cell_index(1, 0));
  const SimResult half = simulate(shared_sim(), only({0, below}), door_pair(false, 2, 3));
  const SimResult full = simulate(shared_sim(), only({0, below}), door_pair(false, 0, 3));
  EXPECT_EQ(half.max_time, 2.0);
  EXPECT_EQ(full.max_time, 1.0);
}

TEST(Simulate, SummaryStatisticsArePopulationMoments) {
  Rng rng(21);
  const SimResult r = simulate(shared_sim(), random_occupancy(rng, 868, 0.4), door_pair(true, 1, 4));
  const auto& t = r.evac_time_per_agent;
  double mean = 0, sq = 0;
  for (double v : t) mean += v / static_cast<double>(t.size());
  for (double v : t) sq += (v - mean) * (v - mean) / static_cast<double>(t.size());
  EXPECT_EQ(r.max_time, *std::max_element(t.begin(), t.end()));
  EXPECT_NEAR(r.mean_time, mean, 1e-9);
  EXPECT_NEAR(r.std_time, std::sqrt(sq), 1e-9);
  EXPECT_GE(r.max_time, r.mean_time);
}

TEST(Simulate, ClosedFormMatchesTickLoop) {
  const Simulator& sim = shared_sim();
  Rng rng(22);
  const std::array<double, 4> rates{0.1, 0.5, 0.9, 1.0};
  for (int trial = 0; trial < 16; ++trial) {
    const Occupancy x = random_occupancy(rng, 868, rates[static_cast<std::size_t>(trial) % 4]);
    const Treatment z = door_pair(trial % 2 == 1, uniform_index(rng, 3), 3 + uniform_index(rng, 3));
    const RoutePlan plan = sim.plan_for(x, z.route_guide);
    const DoorCapacities caps = sim.capacities(z);
    EXPECT_EQ(sim.run_with_plan(plan, caps).evac_time_per_agent, oracle::tick_loop(sim, plan, caps))
        << "trial " << trial;
  }
}

TEST(Simulate, ClosedFormMatchesTickLoopWithWideDoors) {
  const Simulator sim(build_default_layout(), SimConfig{4, 3});
  Rng rng(23);
  const Occupancy x = random_occupancy(rng, 868, 0.8);
  const RoutePlan plan = sim.plan_for(x, true);
  const DoorCapacities caps = sim.capacities(door_pair(true, 0, 5));
  EXPECT_EQ(sim.run_with_plan(plan, caps).evac_time_per_agent, oracle::tick_loop(sim, plan, caps));
}

TEST(Simulate, RepeatRunsAreBitIdentical) {
  Rng rng(24);
  const Occupancy x = random_occupancy(rng, 868, 0.7);
  const Treatment z = door_pair(true, 2, 5);
  const SimResult a = simulate(shared_sim(), x, z);
  const Simulator fresh(build_default_layout());
  EXPECT_EQ(a, simulate(shared_sim(), x, z));
  EXPECT_EQ(a, simulate(fresh, x, z));
}

TEST(Simulate, ConservationOverRandomScenarios) {
  Rng rng(25);
  for (int trial = 0; trial < 50; ++trial) {
    const Occupancy x = random_occupancy(rng, 868, uniform(rng, 0.05, 1.0));
    const SimResult r = simulate(shared_sim(), x, door_pair(bernoulli(rng, 0.5), 0, 1 + uniform_index(rng, 5)));
    EXPECT_EQ(r.evac_time_per_agent.size(), x.count());
    for (double t : r.evac_time_per_agent) EXPECT_GE(t, 1.0);
  }
}

TEST(Simulate, LoweringCapacityNeverSpeedsAnyone) {
  const Simulator& sim = shared_sim();
  Rng rng(26);
  for (int trial = 0; trial < 50; ++trial) {
    const Occupancy x = random_occupancy(rng, 868, uniform(rng, 0.1, 1.0));
    const RoutePlan plan = sim.plan_for(x, bernoulli(rng, 0.5));
    const DoorCapacities full = sim.all_full();
    DoorCapacities reduced = sim.capacities(door_pair(false, 0, 1));
    const auto base = sim.run_with_plan(plan, full).evac_time_per_agent;
    const auto slow = sim.run_with_plan(plan, reduced).evac_time_per_agent;
    ASSERT_EQ(base.size(), slow.size());
    for (std::size_t i = 0; i < base.size(); ++i) EXPECT_GE(slow[i], base[i]);
    // one more door halved on top
    reduced[uniform_index(rng, 2)] = 1;
    const auto slower = sim.run_with_plan(plan, reduced).evac_time_per_agent;
    for (std::size_t i = 0; i < base.size(); ++i) EXPECT_GE(slower[i], slow[i]);
  }
}

TEST(Simulate, GuidedPlanNoSlowerAtFullHouse) {
  const Simulator& sim = shared_sim();
  const Occupancy full(868, true);
  const double guided = sim.run_with_plan(sim.plan_for(full, true), sim.all_full()).max_time;
  const double nearest = sim.run_with_plan(sim.plan_for(full, false), sim.all_full()).max_time;
  EXPECT_LE(guided, nearest);
}

TEST(Simulate, GuideHelpsForSomeTreatmentAtFullHouse) {
  const Occupancy full(868, true);
  bool helps = false;
  for (std::size_t a = 0; a < kExitCount && !helps; ++a) {
    for (std::size_t b = a + 1; b < kExitCount && !helps; ++b) {
      helps = simulate(shared_sim(), full, door_pair(true, a, b)).max_time <
              simulate(shared_sim(), full, door_pair(false, a, b)).max_time;
    }
  }
  EXPECT_TRUE(helps);
}

TEST(Simulate, ScenarioOrderAndThreadsDoNotMatter) {
  Rng rng(27);
  std::vector<Occupancy> xs;
  for (int i = 0; i < 6; ++i) xs.push_back(random_occupancy(rng, 868, 0.6));
  const Treatment z = door_pair(true, 1, 3);
  std::vector<SimResult> forward, threaded(xs.size());
  for (const auto& x : xs) forward.push_back(simulate(shared_sim(), x, z));
  std::vector<std::thread> pool;
  for (std::size_t i = xs.size(); i-- > 0;) {
    pool.emplace_back([&, i] { threaded[i] = simulate(shared_sim(), xs[i], z); });
  }
  for (auto& t : pool) t.join();
  EXPECT_EQ(forward, threaded);
}

TEST(Simulate, TickLimitRaisesNonTermination) {
  const Simulator sim(build_default_layout(), SimConfig{2, 1, 5});
  try {
    (void)simulate(sim, Occupancy(868, true), door_pair(false, 0, 1));
    FAIL() << "expected NonTerminationError";
  } catch (const NonTerminationError& e) {
    EXPECT_GT(e.stuck_agents(), 0u);
    EXPECT_LT(e.stuck_agents(), 868u);
  }
}

TEST(Simulate, RejectsBadInputs) {
  EXPECT_THROW(simulate(shared_sim(), Occupancy(868), door_pair(false, 0, 1)), std::invalid_argument);
  EXPECT_THROW(simulate(shared_sim(), Occupancy(10, true), door_pair(false, 0, 1)), std::invalid_argument);
  Treatment three = door_pair(false, 0, 1);
  three.doors[2] = true;
  EXPECT_THROW(simulate(shared_sim(), only({0}), three), std::invalid_argument);
  EXPECT_THROW(Simulator(build_default_layout(), SimConfig{1, 1}), std::invalid_argument);
  EXPECT_THROW(Simulator(build_default_layout(), SimConfig{2, 0}), std::invalid_argument);
}

TEST(Simulate, DefaultTickLimitFormula) {
  EXPECT_EQ(default_tick_limit(shared_sim().layout(), 1), 10u * (22 + 42) * 145);
  EXPECT_EQ(shared_sim().tick_limit(), default_tick_limit(shared_sim().layout(), 1));
}

TEST(Treatment, BitsRoundTrip) {
  const Treatment z = door_pair(true, 1, 4);
  EXPECT_EQ(z.bits(), (std::array<int, 7>{1, 0, 1, 0, 0, 1, 0}));
  EXPECT_EQ(Treatment::from_bits(z.bits()), z);
  EXPECT_EQ(z.open_door_count(), 2u);
  EXPECT_THROW(Treatment::from_bits({0, 1, 1, 1, 0, 0, 0}), std::invalid_argument);
  EXPECT_THROW(Treatment::with_doors(false, 2, 2), std::invalid_argument);
}

TEST(Occupancy, PackedRoundTrip) {
  Rng rng(28);
  const Occupancy x = random_occupancy(rng, 868, 0.3);
  const auto bytes = x.packed();
  EXPECT_EQ(bytes.size(), 109u);
  EXPECT_EQ(Occupancy::from_packed(bytes, 868), x);
}
