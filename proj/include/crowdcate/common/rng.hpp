#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include <boost/random/mersenne_twister.hpp>

namespace crowdcate {

// Boost's engine and distributions produce identical streams on every platform,
// unlike the implementation-defined std:: distributions.
using Rng = boost::random::mt19937_64;

/// Child seed from a parent seed and a path of stream indices. Uses std::seed_seq,
/// whose mixing algorithm is fixed by the standard.
std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> path);

double uniform01(Rng& rng);
double uniform(Rng& rng, double lo, double hi);
double normal(Rng& rng, double mean, double stddev);
bool bernoulli(Rng& rng, double p);
std::size_t uniform_index(Rng& rng, std::size_t n);

/// Index drawn proportionally to `weights`; uniform when all weights are zero.
std::size_t weighted_index(Rng& rng, std::span<const double> weights);

/// Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> permutation(Rng& rng, std::size_t n);

}  // namespace crowdcate
