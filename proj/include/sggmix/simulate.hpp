#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "sggmix/distributions.hpp"

namespace sggmix {

struct MixtureComponent {
  double weight = 1.0;
  SggParams params{};
};

/// Finite mixture of shifted gamma-gamma kernels; weights must sum to one.
struct MixtureSpec {
  std::vector<MixtureComponent> components;

  void validate() const {
    detail::check(!components.empty(), "MixtureSpec: at least one component required");
    double s = 0.0;
    for (const auto& c : components) {
      detail::check(std::isfinite(c.weight) && c.weight > 0.0 && c.weight <= 1.0,
                    "MixtureSpec: weights must lie in (0,1]");
      detail::check(c.params.valid(), "MixtureSpec: invalid component parameters");
      s += c.weight;
    }
    detail::check(std::abs(s - 1.0) < 1e-9, "MixtureSpec: weights must sum to 1");
  }
};

struct MixtureSample {
  std::vector<double> values;
  std::vector<int> labels;  // component of each draw, for scoring only
};

inline MixtureSample sample_mixture(const MixtureSpec& spec, int n, RngStream& rng) {
  spec.validate();
  detail::check(n >= 1, "sample_mixture: n must be >= 1");
  MixtureSample out;
  out.values.resize(static_cast<std::size_t>(n));
  out.labels.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t k = spec.components.size() - 1;
    for (std::size_t j = 0; j < spec.components.size(); ++j) {
      acc += spec.components[j].weight;
      if (u <= acc) {
        k = j;
        break;
      }
    }
    out.labels[static_cast<std::size_t>(i)] = static_cast<int>(k);
    out.values[static_cast<std::size_t>(i)] = sgg_sample(spec.components[k].params, rng);
  }
  return out;
}

inline double mixture_pdf(const MixtureSpec& spec, double x) {
  spec.validate();
  double f = 0.0;
  for (const auto& c : spec.components) f += c.weight * sgg_pdf(x, c.params);
  return f;
}

} // namespace sggmix
