#pragma once

#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "sggmix/distributions.hpp"

namespace sggmix {

/// Index of the normalised stable process, constrained to (0,1).
struct StableIndex {
  double nu;

  explicit StableIndex(double v) : nu(v) {
    detail::check(std::isfinite(v) && v > 0.0 && v < 1.0, "StableIndex: nu must lie in (0,1)");
  }
};

/// Sizes of the blocks of a partition; all counts >= 1.
struct PartitionCounts {
  std::vector<int> counts;

  int total() const { return std::accumulate(counts.begin(), counts.end(), 0); }
  int blocks() const { return static_cast<int>(counts.size()); }

  bool valid() const {
    if (counts.empty()) return false;
    for (int c : counts)
      if (c < 1) return false;
    return true;
  }
};

struct UrnWeights {
  double new_cluster;            // nu * m / (n - 1)
  std::vector<double> existing;  // (n_j - nu) / (n - 1)
};

/// Predictive weights of the generalised Polya urn given the sizes of the
/// blocks among the other n-1 elements. Weights sum to one.
inline UrnWeights urn_predictive_weights(const PartitionCounts& others, StableIndex nu) {
  detail::check(others.valid(), "urn_predictive_weights: block sizes must be positive");
  const double denom = static_cast<double>(others.total());
  UrnWeights w;
  w.new_cluster = nu.nu * static_cast<double>(others.blocks()) / denom;
  w.existing.reserve(others.counts.size());
  for (int c : others.counts) w.existing.push_back((static_cast<double>(c) - nu.nu) / denom);
  return w;
}

/// Log exchangeable partition probability function of the normalised stable
/// process: (m-1)!/Gamma(n) * nu^(m-1) * prod_j Gamma(n_j - nu)/Gamma(1 - nu).
inline double eppf_log(const PartitionCounts& pc, StableIndex nu) {
  detail::check(pc.valid(), "eppf_log: block sizes must be positive");
  const int n = pc.total();
  const int m = pc.blocks();
  const double lg1mnu = std::lgamma(1.0 - nu.nu);
  double lp = std::lgamma(static_cast<double>(m)) - std::lgamma(static_cast<double>(n)) +
              (m - 1) * std::log(nu.nu);
  for (int c : pc.counts) lp += std::lgamma(static_cast<double>(c) - nu.nu) - lg1mnu;
  return lp;
}

struct StickBreakingWeights {
  std::vector<double> weights;
  double residual;  // 1 - sum(weights), the mass beyond the truncation
};

/// First J stick-breaking weights W_j = V_j * prod_{k<j} (1 - V_k) with
/// V_j ~ Be(1 - nu, j*nu). Used for prior simulation and cross-checks only.
inline StickBreakingWeights stick_breaking_weights(StableIndex nu, int truncation,
                                                   RngStream& rng) {
  detail::check(truncation >= 1, "stick_breaking_weights: truncation must be >= 1");
  std::vector<double> w(static_cast<std::size_t>(truncation));
  double stick = 1.0;
  for (int j = 0; j < truncation; ++j) {
    const double v = beta_sample(1.0 - nu.nu, (j + 1) * nu.nu, rng);
    w[static_cast<std::size_t>(j)] = v * stick;
    stick *= 1.0 - v;
  }
  return {std::move(w), stick};
}

/// Normalised-increment construction: W_j proportional to U_j^(-1/nu) with
/// U_j the partial sums of iid Ga(1,1) increments, truncated at J terms and
/// renormalised. The renormalisation makes this a truncation approximation,
/// adequate for the distributional cross-checks it exists for.
inline std::vector<double> normalised_form_weights(StableIndex nu, int truncation,
                                                   RngStream& rng) {
  detail::check(truncation >= 1, "normalised_form_weights: truncation must be >= 1");
  std::vector<double> logw(static_cast<std::size_t>(truncation));
  double u = 0.0;
  for (int j = 0; j < truncation; ++j) {
    u += rng.exponential(1.0);
    logw[static_cast<std::size_t>(j)] = -std::log(u) / nu.nu;
  }
  const double lmax = logw[0];  // U_j increases, so the first term dominates
  double sum = 0.0;
  for (double& lw : logw) {
    lw = std::exp(lw - lmax);
    sum += lw;
  }
  for (double& lw : logw) lw /= sum;
  return logw;
}

/// Partition of n items grown one element at a time through the urn.
inline PartitionCounts prior_partition_sample(int n, StableIndex nu, RngStream& rng) {
  detail::check(n >= 1, "prior_partition_sample: n must be >= 1");
  PartitionCounts pc;
  pc.counts.push_back(1);
  for (int i = 2; i <= n; ++i) {
    const UrnWeights w = urn_predictive_weights(pc, nu);
    const double u = rng.uniform();
    double acc = 0.0;
    int pick = -1;
    for (std::size_t j = 0; j < w.existing.size(); ++j) {
      acc += w.existing[j];
      if (u <= acc) {
        pick = static_cast<int>(j);
        break;
      }
    }
    if (pick >= 0)
      pc.counts[static_cast<std::size_t>(pick)] += 1;
    else
      pc.counts.push_back(1);  // remaining mass is the new-cluster weight
  }
  return pc;
}

} // namespace sggmix
