#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include "sggmix/sampler.hpp"

namespace sggmix {

namespace detail {

/// Linear-interpolation quantile (type 7) of an unsorted sample.
inline double quantile(std::vector<double> v, double p) {
  if (v.empty()) throw std::runtime_error("quantile: empty sample");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= v.size()) return v.back();
  const double frac = h - static_cast<double>(lo);
  return v[lo] + frac * (v[lo + 1] - v[lo]);
}

} // namespace detail

struct CpoResult {
  std::vector<double> cpo;  // per-observation conditional predictive ordinate
  double lpml = 0.0;
  int zero_count = 0;  // observations whose CPO collapsed to zero
};

/// Harmonic-mean CPO over the retained draws,
/// CPO_i = (1/L sum_l 1/f(x_i, y_i^(l) | theta_i^(l)))^(-1), done in log
/// space. By default the stored augmented terms are used; `marginal`
/// switches to the marginal kernel density evaluated from the trace.
inline CpoResult cpo_lpml(const Trace& tr, const std::vector<double>& data,
                          bool marginal = false) {
  const std::size_t n = data.size();
  detail::check(!tr.iterations.empty(), "cpo_lpml: empty trace");
  detail::check(n == tr.n_observations, "cpo_lpml: data size does not match the trace");
  const std::size_t L = tr.iterations.size();
  const double logL = std::log(static_cast<double>(L));

  CpoResult res;
  res.cpo.resize(n);
  std::vector<double> neg_ll(L);
  for (std::size_t i = 0; i < n; ++i) {
    bool has_inf = false;
    double lmax = neg_inf;
    for (std::size_t l = 0; l < L; ++l) {
      const auto& it = tr.iterations[l];
      const double ll =
          marginal ? sgg_logpdf(data[i], it.unique_values[static_cast<std::size_t>(it.assignment[i])])
                   : it.obs_loglik[i];
      if (ll == neg_inf) {
        has_inf = true;
        break;
      }
      neg_ll[l] = -ll;
      lmax = std::max(lmax, neg_ll[l]);
    }
    double log_cpo;
    if (has_inf) {
      log_cpo = neg_inf;
    } else {
      double s = 0.0;
      for (std::size_t l = 0; l < L; ++l) s += std::exp(neg_ll[l] - lmax);
      log_cpo = logL - (lmax + std::log(s));
    }
    res.cpo[i] = std::exp(log_cpo);
    if (res.cpo[i] == 0.0) res.zero_count += 1;
    res.lpml += log_cpo;
  }
  return res;
}

struct IcResult {
  double aic = 0.0;
  double bic = 0.0;
};

/// Posterior means of AIC/BIC with per-draw deviance from the marginal
/// kernel density and parameter count p = 4m + 1 (four kernel parameters per
/// cluster plus the stable index).
inline IcResult posterior_ic(const Trace& tr, const std::vector<double>& data) {
  detail::check(!tr.iterations.empty(), "posterior_ic: empty trace");
  detail::check(data.size() == tr.n_observations, "posterior_ic: data size does not match the trace");
  const double n = static_cast<double>(data.size());
  const double logn = std::log(n);
  double aic = 0.0, bic = 0.0;
  for (const auto& it : tr.iterations) {
    double dev = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i)
      dev += sgg_logpdf(data[i], it.unique_values[static_cast<std::size_t>(it.assignment[i])]);
    dev *= -2.0;
    const double p = 4.0 * it.n_clusters() + 1.0;
    aic += dev + 2.0 * p;
    bic += dev + p * logn;
  }
  const double L = static_cast<double>(tr.iterations.size());
  return {aic / L, bic / L};
}

/// Pointwise posterior predictive density with equal-tail 95% band.
struct PredictiveBand {
  std::vector<double> grid;
  std::vector<double> mean_density;
  std::vector<double> lower95;
  std::vector<double> upper95;
};

/// Per retained draw l the predictive for a new observation is
///   (nu m / n) * mean of sgg_pdf over n_base_draws fresh g0 values
///   + sum_j ((n_j - nu)/n) * sgg_pdf(. | theta_j),
/// then the band is the pointwise mean and 2.5/97.5 percentiles over l.
inline PredictiveBand predictive_density(const Trace& tr, const BaseMeasure& base,
                                         const std::vector<double>& grid, int n_base_draws,
                                         RngStream& rng) {
  detail::check(!tr.iterations.empty(), "predictive_density: empty trace");
  detail::check(!grid.empty(), "predictive_density: empty grid");
  detail::check(n_base_draws >= 1, "predictive_density: n_base_draws must be >= 1");
  for (std::size_t g = 1; g < grid.size(); ++g)
    detail::check(grid[g] > grid[g - 1], "predictive_density: grid must be strictly increasing");

  const std::size_t L = tr.iterations.size();
  const std::size_t G = grid.size();
  const double n = static_cast<double>(tr.n_observations);

  std::vector<double> dens(L * G, 0.0);
  std::vector<SggParams> fresh(static_cast<std::size_t>(n_base_draws));
  for (std::size_t l = 0; l < L; ++l) {
    const auto& it = tr.iterations[l];
    const double w_new = it.nu * static_cast<double>(it.n_clusters()) / n;
    for (auto& f : fresh) f = base.sample(rng);
    double* row = &dens[l * G];
    for (const auto& f : fresh) {
      const double w = w_new / static_cast<double>(n_base_draws);
      for (std::size_t g = 0; g < G; ++g) row[g] += w * sgg_pdf(grid[g], f);
    }
    for (std::size_t j = 0; j < it.unique_values.size(); ++j) {
      const double w = (static_cast<double>(it.sizes[j]) - it.nu) / n;
      for (std::size_t g = 0; g < G; ++g) row[g] += w * sgg_pdf(grid[g], it.unique_values[j]);
    }
  }

  PredictiveBand band;
  band.grid = grid;
  band.mean_density.resize(G);
  band.lower95.resize(G);
  band.upper95.resize(G);
  std::vector<double> col(L);
  for (std::size_t g = 0; g < G; ++g) {
    double s = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      col[l] = dens[l * G + g];
      s += col[l];
    }
    band.mean_density[g] = s / static_cast<double>(L);
    band.lower95[g] = detail::quantile(col, 0.025);
    band.upper95[g] = detail::quantile(col, 0.975);
  }
  return band;
}

/// Tail-parameter buckets plus the pooled per-observation draws of alpha and
/// mu across all retained iterations.
struct TailReport {
  double p_alpha_lt1 = 0.0;
  double p_alpha_1to2 = 0.0;
  double p_alpha_gt2 = 0.0;
  std::vector<double> alpha_draws;
  std::vector<double> mu_draws;
};

inline TailReport tail_report(const Trace& tr) {
  detail::check(!tr.iterations.empty(), "tail_report: empty trace");
  TailReport rep;
  const std::size_t n = tr.n_observations;
  rep.alpha_draws.reserve(tr.iterations.size() * n);
  rep.mu_draws.reserve(tr.iterations.size() * n);
  std::int64_t lt1 = 0, mid = 0;
  for (const auto& it : tr.iterations) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& th = it.unique_values[static_cast<std::size_t>(it.assignment[i])];
      rep.alpha_draws.push_back(th.alpha);
      rep.mu_draws.push_back(th.mu);
      if (th.alpha < 1.0)
        lt1 += 1;
      else if (th.alpha < 2.0)
        mid += 1;
    }
  }
  const double total = static_cast<double>(rep.alpha_draws.size());
  rep.p_alpha_lt1 = static_cast<double>(lt1) / total;
  rep.p_alpha_1to2 = static_cast<double>(mid) / total;
  rep.p_alpha_gt2 = 1.0 - rep.p_alpha_lt1 - rep.p_alpha_1to2;
  return rep;
}

struct NuSummary {
  double mean = 0.0;
  double lower95 = 0.0;
  double upper95 = 0.0;
};

struct FitReport {
  double lpml = 0.0;
  double aic = 0.0;
  double bic = 0.0;
  int m_mode = 0;
  std::map<int, double> m_posterior;
  NuSummary nu;
  double p_alpha_lt1 = 0.0;
  double p_alpha_1to2 = 0.0;
  double p_alpha_gt2 = 0.0;
  int cpo_zero_count = 0;
};

/// All scalar posterior summaries in one pass over the trace.
inline FitReport fit_report(const Trace& tr, const std::vector<double>& data,
                            bool cpo_marginal = false) {
  FitReport rep;
  const auto cpo = cpo_lpml(tr, data, cpo_marginal);
  rep.lpml = cpo.lpml;
  rep.cpo_zero_count = cpo.zero_count;
  const auto ic = posterior_ic(tr, data);
  rep.aic = ic.aic;
  rep.bic = ic.bic;

  const double L = static_cast<double>(tr.iterations.size());
  std::map<int, int> m_counts;
  std::vector<double> nus;
  nus.reserve(tr.iterations.size());
  for (const auto& it : tr.iterations) {
    m_counts[it.n_clusters()] += 1;
    nus.push_back(it.nu);
  }
  int best_m = 0, best_count = -1;
  for (const auto& [m, c] : m_counts) {
    rep.m_posterior[m] = static_cast<double>(c) / L;
    if (c > best_count) {
      best_count = c;
      best_m = m;
    }
  }
  rep.m_mode = best_m;

  double s = 0.0;
  for (double v : nus) s += v;
  rep.nu.mean = s / L;
  rep.nu.lower95 = detail::quantile(nus, 0.025);
  rep.nu.upper95 = detail::quantile(nus, 0.975);

  const auto tail = tail_report(tr);
  rep.p_alpha_lt1 = tail.p_alpha_lt1;
  rep.p_alpha_1to2 = tail.p_alpha_1to2;
  rep.p_alpha_gt2 = tail.p_alpha_gt2;
  return rep;
}

} // namespace sggmix
