#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace spl {

using Rng = std::mt19937_64;

// Derives an independent seed for a named sub-stream (data generation,
// planning, evaluation, ...) so that consumers never share generator state.
std::uint64_t seed_stream(std::uint64_t base, std::uint64_t tag);

double draw_uniform(Rng& rng);                          // [0, 1)
double draw_normal(Rng& rng, double mean, double sd);
int draw_index(Rng& rng, int n);                        // uniform over {0..n-1}

// Inverse standard normal CDF, accurate to ~1e-15 over (0, 1).
double normal_quantile(double p);

double mean_of(const std::vector<double>& xs);
double stderr_of(const std::vector<double>& xs);        // sample-sd / sqrt(n)

// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

// Shortest round-trip decimal representation, stable across runs.
std::string fmt_double(double v);

}  // namespace spl
