#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include "sggmix/distributions.hpp"
#include "sggmix/stable_process.hpp"

namespace sggmix {

struct GammaHyper {
  double a = 0.5;
  double b = 0.5;
};

/// Centering measure: independent gamma priors on (mu, gamma, alpha, beta).
struct BaseMeasure {
  GammaHyper mu{};
  GammaHyper gamma{};
  GammaHyper alpha{};
  GammaHyper beta{};

  SggParams sample(RngStream& rng) const {
    SggParams p;
    p.mu = gamma_sample(mu.a, mu.b, rng);
    p.gamma = gamma_sample(gamma.a, gamma.b, rng);
    p.alpha = gamma_sample(alpha.a, alpha.b, rng);
    p.beta = gamma_sample(beta.a, beta.b, rng);
    return p;
  }

  double logpdf(const SggParams& p) const {
    return gamma_logpdf(p.mu, mu.a, mu.b) + gamma_logpdf(p.gamma, gamma.a, gamma.b) +
           gamma_logpdf(p.alpha, alpha.a, alpha.b) + gamma_logpdf(p.beta, beta.a, beta.b);
  }

  void validate() const {
    detail::check(mu.a > 0 && mu.b > 0 && gamma.a > 0 && gamma.b > 0 && alpha.a > 0 &&
                      alpha.b > 0 && beta.a > 0 && beta.b > 0,
                  "BaseMeasure: hyperparameters must be positive");
  }
};

struct NuFixed {
  double value = 0.5;
};
struct NuBetaPrior {
  double a = 0.5;
  double b = 0.5;
};
using NuSpec = std::variant<NuFixed, NuBetaPrior>;

struct ChainConfig {
  int iterations = 15000;
  int burn_in = 1000;
  int thinning = 4;
  int r_aux = 3;        // auxiliary values per reassignment draw
  int batch_size = 50;  // iterations per adaptation batch
  double target_rate_low = 0.3;
  double target_rate_high = 0.4;
  BaseMeasure base_measure{};
  NuSpec nu_spec = NuBetaPrior{};
  std::uint64_t seed = 1;
  double data_scale = 1.0;         // divisor applied to the data on ingestion
  bool reuse_aux = false;          // keep unselected auxiliary draws for the next observation
  bool retain_singleton_aux = true;  // a removed singleton's value fills the first auxiliary slot
  bool hastings_correction = false;  // include the truncated-uniform proposal ratio
  bool adapt_throughout = true;      // false: freeze step widths once burn-in ends
  bool single_cluster = false;       // one-component fit, no reassignment or nu moves

  void validate() const {
    detail::check(iterations >= 1, "ChainConfig: iterations must be >= 1");
    detail::check(burn_in >= 0 && burn_in < iterations,
                  "ChainConfig: burn_in must satisfy 0 <= burn_in < iterations");
    detail::check(thinning >= 1, "ChainConfig: thinning must be >= 1");
    detail::check(r_aux >= 1, "ChainConfig: r_aux must be >= 1");
    detail::check(batch_size >= 1, "ChainConfig: batch_size must be >= 1");
    detail::check(target_rate_low > 0.0 && target_rate_low < target_rate_high &&
                      target_rate_high < 1.0,
                  "ChainConfig: target rates must satisfy 0 < low < high < 1");
    detail::check(data_scale > 0.0 && std::isfinite(data_scale),
                  "ChainConfig: data_scale must be positive finite");
    base_measure.validate();
    if (const auto* f = std::get_if<NuFixed>(&nu_spec))
      detail::check(f->value > 0.0 && f->value < 1.0, "ChainConfig: fixed nu must lie in (0,1)");
    if (const auto* p = std::get_if<NuBetaPrior>(&nu_spec))
      detail::check(p->a > 0.0 && p->b > 0.0, "ChainConfig: nu prior parameters must be positive");
  }
};

/// Random-walk families sharing one step width each.
enum class Family : int { mu = 0, gamma = 1, alpha = 2, beta = 3, nu = 4 };
inline constexpr int n_families = 5;

inline const char* family_name(Family f) {
  switch (f) {
    case Family::mu: return "mu";
    case Family::gamma: return "gamma";
    case Family::alpha: return "alpha";
    case Family::beta: return "beta";
    case Family::nu: return "nu";
  }
  return "?";
}

/// Per-family step widths plus within-batch proposal bookkeeping.
struct AdaptState {
  std::array<double, n_families> delta{1.0, 1.0, 1.0, 1.0, 1.0};
  std::array<std::int64_t, n_families> proposals{};
  std::array<std::int64_t, n_families> accepts{};
  int batch = 1;
  // last batch whose rate sat inside the target interval, per family; the
  // escalation base of the multiplicative rule
  std::array<int, n_families> last_in_band{};

  void record(Family f, bool accepted) {
    const int i = static_cast<int>(f);
    proposals[i] += 1;
    if (accepted) accepts[i] += 1;
  }

  double rate(Family f) const {
    const int i = static_cast<int>(f);
    if (proposals[i] == 0) return std::numeric_limits<double>::quiet_NaN();
    return static_cast<double>(accepts[i]) / static_cast<double>(proposals[i]);
  }

  void reset_counters() {
    proposals.fill(0);
    accepts.fill(0);
  }
};

/// Multiplicative batch rule: a family whose batch rate falls outside
/// [low, high] has its width scaled by 1.1^(+-sqrt(b)), where b counts the
/// batches since that family's rate last sat inside the interval. Persistent
/// miscalibration therefore escalates exactly like the raw
/// delta^(b+1) = delta^(b) * 1.1^(+-sqrt(b)) schedule from a cold start,
/// while an isolated noisy batch after a calibrated stretch only nudges the
/// width by 1.1. With a monotone exponent the late-batch corrections grow
/// into x4+ jumps that noise alone keeps triggering, and the widths never
/// settle. Counters reset and the batch index advances.
inline void adapt_tuning(AdaptState& a, double low = 0.3, double high = 0.4) {
  for (int i = 0; i < n_families; ++i) {
    if (a.proposals[i] > 0) {
      const double rate = static_cast<double>(a.accepts[i]) / static_cast<double>(a.proposals[i]);
      const double b_eff = static_cast<double>(a.batch - a.last_in_band[i]);
      if (rate < low)
        a.delta[i] *= std::pow(1.1, -std::sqrt(b_eff));
      else if (rate > high)
        a.delta[i] *= std::pow(1.1, std::sqrt(b_eff));
      else
        a.last_in_band[i] = a.batch;
    }
  }
  a.reset_counters();
  a.batch += 1;
}

/// Current partition, unique kernel parameters, latents and stable index.
struct ClusterState {
  std::vector<int> assignment;           // observation -> cluster id
  std::vector<SggParams> unique_values;  // one entry per cluster
  std::vector<int> sizes;
  std::vector<double> latents;  // y_i > 0
  double nu = 0.5;

  int n_clusters() const { return static_cast<int>(unique_values.size()); }

  /// Consistency of the bookkeeping; used by tests and debug paths.
  void check_consistent(std::size_t n_obs) const {
    detail::check(assignment.size() == n_obs && latents.size() == n_obs,
                  "ClusterState: per-observation vectors out of sync");
    detail::check(unique_values.size() == sizes.size(), "ClusterState: cluster vectors out of sync");
    std::vector<int> histo(sizes.size(), 0);
    for (int a : assignment) {
      detail::check(a >= 0 && a < static_cast<int>(sizes.size()), "ClusterState: bad label");
      histo[static_cast<std::size_t>(a)] += 1;
    }
    for (std::size_t j = 0; j < sizes.size(); ++j)
      detail::check(histo[j] == sizes[j] && sizes[j] > 0, "ClusterState: sizes do not match labels");
    for (double y : latents) detail::check(y > 0.0, "ClusterState: latent must be positive");
  }
};

/// Joint log density of (x, y): Ga(x - mu | gamma, y) * Ga(y | alpha, beta).
/// Returns -inf when x < mu. x - mu is floored at 1e-12 * max(1, beta) so
/// that observations landing exactly on a cluster location keep a finite
/// log value inside MH ratios.
inline double augmented_loglik(double x, double y, const SggParams& p) {
  double t = x - p.mu;
  if (t < 0.0 || !(y > 0.0)) return neg_inf;
  t = std::max(t, 1e-12 * std::max(1.0, p.beta));
  const double logy = std::log(y);
  return (p.gamma + p.alpha - 1.0) * logy + (p.gamma - 1.0) * std::log(t) - y * (t + p.beta) +
         p.alpha * std::log(p.beta) - std::lgamma(p.gamma) - std::lgamma(p.alpha);
}

/// Unnormalised log posterior of one cluster's parameter vector:
/// g0(theta) * prod over members of f(x_i, y_i | theta).
inline double cluster_log_target(const SggParams& theta, std::span<const double> xs,
                                 std::span<const double> ys, const BaseMeasure& base) {
  double lp = base.logpdf(theta);
  for (std::size_t i = 0; i < xs.size(); ++i) lp += augmented_loglik(xs[i], ys[i], theta);
  return lp;
}

namespace detail {

/// Base-measure draw with the location forced below x_upper: rejection with
/// a scaled-uniform fallback after 100 tries (needed when x_upper is far in
/// the prior tail, and for x_upper == 0 where only mu == 0 remains).
inline SggParams sample_g0_below(const BaseMeasure& base, double x_upper, RngStream& rng) {
  SggParams p = base.sample(rng);
  for (int tries = 0; p.mu >= x_upper && tries < 100; ++tries) p.mu = gamma_sample(base.mu.a, base.mu.b, rng);
  if (p.mu >= x_upper) p.mu = x_upper * rng.uniform();
  return p;
}

} // namespace detail

/// Draw the starting state: per-observation parameters from the centering
/// measure (locations kept below their observation so the initial augmented
/// likelihood is finite), latents from their conditionals, nu from its prior.
inline ClusterState init_state(const std::vector<double>& data, const ChainConfig& cfg,
                               RngStream& rng) {
  cfg.validate();
  if (data.empty()) throw std::runtime_error("init_state: data must be nonempty");
  for (double x : data)
    if (!std::isfinite(x) || x < 0.0)
      throw std::runtime_error("init_state: data must be finite and nonnegative");

  const std::size_t n = data.size();
  ClusterState st;
  st.assignment.resize(n);
  st.latents.resize(n);

  if (cfg.single_cluster) {
    const double xmin = *std::min_element(data.begin(), data.end());
    st.unique_values.push_back(detail::sample_g0_below(cfg.base_measure, xmin, rng));
    st.sizes.push_back(static_cast<int>(n));
    std::fill(st.assignment.begin(), st.assignment.end(), 0);
  } else {
    st.unique_values.reserve(n);
    st.sizes.assign(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
      st.unique_values.push_back(detail::sample_g0_below(cfg.base_measure, data[i], rng));
      st.assignment[i] = static_cast<int>(i);
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    const SggParams& p = st.unique_values[static_cast<std::size_t>(st.assignment[i])];
    st.latents[i] = gamma_sample(p.gamma + p.alpha, data[i] - p.mu + p.beta, rng);
  }

  if (const auto* f = std::get_if<NuFixed>(&cfg.nu_spec))
    st.nu = f->value;
  else {
    const auto& bp = std::get<NuBetaPrior>(cfg.nu_spec);
    st.nu = beta_sample(bp.a, bp.b, rng);
  }
  return st;
}

/// Step (i): refresh every latent from Ga(gamma + alpha, x - mu + beta).
inline void step_latents(ClusterState& st, const std::vector<double>& data, RngStream& rng) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    const SggParams& p = st.unique_values[static_cast<std::size_t>(st.assignment[i])];
    st.latents[i] = gamma_sample(p.gamma + p.alpha, data[i] - p.mu + p.beta, rng);
  }
}

struct AssignmentSweepStats {
  std::int64_t zero_weight_events = 0;  // sweeps where every candidate had zero likelihood
  std::int64_t draws = 0;
};

/// Steps (ii)-(iii): per observation, auxiliary-value reassignment. Existing
/// cluster j (sizes counted without observation i) carries weight
/// (n_j - nu) * f(x_i, y_i | theta_j); each of the r auxiliary values carries
/// (nu * m_i / r) * f(x_i, y_i | theta_aux). When the observation leaves a
/// singleton behind, that cluster's value fills the first auxiliary slot and
/// only r-1 fresh draws are taken, as in Neal's algorithm 8; dropping the
/// retained value breaks reversibility of the partition moves and the chain
/// over-merges. If every candidate has zero likelihood the observation keeps
/// its cluster and the event is counted.
inline AssignmentSweepStats step_assignments(ClusterState& st, const std::vector<double>& data,
                                             const ChainConfig& cfg, RngStream& rng) {
  const std::size_t n = data.size();
  const int r = cfg.r_aux;
  AssignmentSweepStats stats;

  std::vector<SggParams> aux(static_cast<std::size_t>(r));
  bool aux_ready = false;
  std::vector<double> logw;
  std::vector<int> cand_cluster;

  for (std::size_t i = 0; i < n; ++i) {
    stats.draws += 1;
    const int old = st.assignment[i];
    st.sizes[static_cast<std::size_t>(old)] -= 1;
    const bool was_singleton = st.sizes[static_cast<std::size_t>(old)] == 0;

    int m_i = 0;
    for (int s : st.sizes)
      if (s > 0) m_i += 1;

    if (!cfg.reuse_aux || !aux_ready) {
      for (auto& a : aux) a = cfg.base_measure.sample(rng);
      aux_ready = true;
    }
    if (was_singleton && cfg.retain_singleton_aux)
      aux[0] = st.unique_values[static_cast<std::size_t>(old)];

    const double x = data[i];
    const double y = st.latents[i];
    const double nu = st.nu;

    logw.clear();
    cand_cluster.clear();
    for (std::size_t j = 0; j < st.sizes.size(); ++j) {
      if (st.sizes[j] == 0) continue;
      logw.push_back(std::log(static_cast<double>(st.sizes[j]) - nu) +
                     augmented_loglik(x, y, st.unique_values[j]));
      cand_cluster.push_back(static_cast<int>(j));
    }
    const std::size_t n_existing = logw.size();
    const double log_new = m_i > 0 ? std::log(nu * static_cast<double>(m_i) / r) : neg_inf;
    for (const auto& a : aux) logw.push_back(log_new + augmented_loglik(x, y, a));

    double lmax = neg_inf;
    for (double lw : logw) lmax = std::max(lmax, lw);
    if (lmax == neg_inf) {
      st.sizes[static_cast<std::size_t>(old)] += 1;  // keep the current assignment
      stats.zero_weight_events += 1;
      continue;
    }

    double total = 0.0;
    for (double& lw : logw) {
      lw = std::exp(lw - lmax);
      total += lw;
    }
    const double u = rng.uniform() * total;
    double acc = 0.0;
    std::size_t pick = logw.size() - 1;
    for (std::size_t k = 0; k < logw.size(); ++k) {
      acc += logw[k];
      if (u <= acc) {
        pick = k;
        break;
      }
    }

    if (pick < n_existing) {
      const int j = cand_cluster[pick];
      st.assignment[i] = j;
      st.sizes[static_cast<std::size_t>(j)] += 1;
    } else {
      const std::size_t s = pick - n_existing;
      st.unique_values.push_back(aux[s]);
      st.sizes.push_back(1);
      st.assignment[i] = static_cast<int>(st.unique_values.size() - 1);
      if (cfg.reuse_aux) aux[s] = cfg.base_measure.sample(rng);  // replace the consumed value
    }

    if (st.sizes[static_cast<std::size_t>(old)] == 0) {
      st.sizes.erase(st.sizes.begin() + old);
      st.unique_values.erase(st.unique_values.begin() + old);
      for (auto& a : st.assignment)
        if (a > old) a -= 1;
    }
  }
  return stats;
}

namespace detail {

struct BoundedWalkResult {
  double value;
  bool accepted;
};

/// One bounded random-walk move on [0, upper] with step width delta and the
/// accept rule min{1, exp(log_target(prop) - log_target(cur))}. When enabled,
/// the Hastings factor for the truncated-uniform proposal is included.
template <typename LogTarget>
BoundedWalkResult bounded_walk_move(double cur, double cur_lt, double delta, double upper,
                                    bool hastings, LogTarget&& log_target, RngStream& rng,
                                    double floor_value, double& prop_lt_out) {
  const double lo = std::max(cur - delta, 0.0);
  const double hi = std::min(cur + delta, upper);
  if (!(lo < hi)) {  // degenerate window (only possible at upper == 0)
    prop_lt_out = cur_lt;
    return {cur, false};
  }
  double prop = rng.uniform(lo, hi);
  if (floor_value > 0.0) prop = std::max(prop, floor_value);
  const double prop_lt = log_target(prop);
  double log_acc = prop_lt - cur_lt;
  if (hastings) {
    const double len_cur = hi - lo;
    const double len_prop = std::min(prop + delta, upper) - std::max(prop - delta, 0.0);
    log_acc += std::log(len_cur) - std::log(len_prop);
  }
  bool accept;
  if (log_acc >= 0.0)
    accept = true;
  else
    accept = std::log(rng.uniform()) < log_acc;
  prop_lt_out = prop_lt;
  return accept ? BoundedWalkResult{prop, true} : BoundedWalkResult{cur, false};
}

} // namespace detail

/// Step (iv): per cluster, coordinate-wise random-walk refresh of the unique
/// parameter vector against g0 times the cluster's augmented likelihood. The
/// location proposal is bounded above by the cluster's smallest observation;
/// gamma/alpha/beta proposals are floored at 1e-8 to stay inside the domain.
inline void step_unique_values(ClusterState& st, const std::vector<double>& data,
                               const ChainConfig& cfg, AdaptState& adapt, RngStream& rng) {
  const int m = st.n_clusters();
  std::vector<double> xs, ys;
  for (int j = 0; j < m; ++j) {
    xs.clear();
    ys.clear();
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (st.assignment[i] == j) {
        xs.push_back(data[i]);
        ys.push_back(st.latents[i]);
      }
    }
    const double b_mu = *std::min_element(xs.begin(), xs.end());

    SggParams th = st.unique_values[static_cast<std::size_t>(j)];
    double cur_lt = cluster_log_target(th, xs, ys, cfg.base_measure);

    constexpr std::array<Family, 4> sweep{Family::mu, Family::gamma, Family::alpha, Family::beta};
    for (Family fam : sweep) {
      double* coord = nullptr;
      double upper = pos_inf;
      double floor_value = 1e-8;
      switch (fam) {
        case Family::mu:
          coord = &th.mu;
          upper = b_mu;
          floor_value = 0.0;  // mu == 0 is inside the domain
          break;
        case Family::gamma: coord = &th.gamma; break;
        case Family::alpha: coord = &th.alpha; break;
        case Family::beta: coord = &th.beta; break;
        default: break;
      }
      const double cur = *coord;
      double prop_lt = cur_lt;
      const auto res = detail::bounded_walk_move(
          cur, cur_lt, adapt.delta[static_cast<int>(fam)], upper, cfg.hastings_correction,
          [&](double v) {
            SggParams cand = th;
            switch (fam) {
              case Family::mu: cand.mu = v; break;
              case Family::gamma: cand.gamma = v; break;
              case Family::alpha: cand.alpha = v; break;
              case Family::beta: cand.beta = v; break;
              default: break;
            }
            return cluster_log_target(cand, xs, ys, cfg.base_measure);
          },
          rng, floor_value, prop_lt);
      if (res.accepted) {
        *coord = res.value;
        cur_lt = prop_lt;
      }
      adapt.record(fam, res.accepted);
    }
    st.unique_values[static_cast<std::size_t>(j)] = th;
  }
}

/// Log of the step (v) target: nu^(a + m - 2) * (1 - nu)^(b - 1) *
/// prod_j Gamma(n_j - nu)/Gamma(1 - nu) on (0,1).
inline double nu_log_target(double nu, int m, const std::vector<int>& sizes, double a_nu,
                            double b_nu) {
  if (!(nu > 0.0 && nu < 1.0)) return neg_inf;
  double lp = (a_nu + m - 2.0) * std::log(nu) + (b_nu - 1.0) * std::log1p(-nu);
  const double lg1mnu = std::lgamma(1.0 - nu);
  for (int s : sizes)
    if (s > 0) lp += std::lgamma(static_cast<double>(s) - nu) - lg1mnu;
  return lp;
}

/// Step (v): bounded random walk on nu. No-op when nu is fixed.
inline void step_nu(ClusterState& st, const ChainConfig& cfg, AdaptState& adapt, RngStream& rng) {
  const auto* prior = std::get_if<NuBetaPrior>(&cfg.nu_spec);
  if (prior == nullptr) return;
  const int m = st.n_clusters();
  const double cur_lt = nu_log_target(st.nu, m, st.sizes, prior->a, prior->b);
  double prop_lt = cur_lt;
  const auto res = detail::bounded_walk_move(
      st.nu, cur_lt, adapt.delta[static_cast<int>(Family::nu)], 1.0, cfg.hastings_correction,
      [&](double v) { return nu_log_target(v, m, st.sizes, prior->a, prior->b); }, rng, 0.0,
      prop_lt);
  if (res.accepted) st.nu = res.value;
  adapt.record(Family::nu, res.accepted);
}

/// One retained draw of the chain.
struct TraceIteration {
  int iteration = 0;
  double nu = 0.0;
  std::vector<SggParams> unique_values;
  std::vector<int> sizes;
  std::vector<int> assignment;
  std::vector<double> latents;
  std::vector<double> obs_loglik;  // augmented per-observation terms

  int n_clusters() const { return static_cast<int>(unique_values.size()); }
};

struct BatchRecord {
  int batch = 0;
  Family family = Family::mu;
  double rate = 0.0;
};

struct Trace {
  std::vector<TraceIteration> iterations;
  std::vector<BatchRecord> acceptance;
  std::int64_t zero_weight_events = 0;
  std::int64_t reassignment_draws = 0;
  std::size_t n_observations = 0;
};

namespace detail {

inline TraceIteration snapshot(int t, const ClusterState& st, const std::vector<double>& data) {
  TraceIteration it;
  it.iteration = t;
  it.nu = st.nu;
  it.unique_values = st.unique_values;
  it.sizes = st.sizes;
  it.assignment = st.assignment;
  it.latents = st.latents;
  it.obs_loglik.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    it.obs_loglik[i] =
        augmented_loglik(data[i], st.latents[i], st.unique_values[static_cast<std::size_t>(st.assignment[i])]);
  return it;
}

} // namespace detail

/// Full marginal sampler: latents, reassignment, unique-value refresh, nu
/// update, batch adaptation. Deterministic given the config seed. Retains
/// every thinning-th iteration after burn-in.
inline Trace run_chain(const std::vector<double>& data, const ChainConfig& cfg) {
  cfg.validate();
  RngStream rng(cfg.seed);
  ClusterState st = init_state(data, cfg, rng);
  AdaptState adapt;

  Trace tr;
  tr.n_observations = data.size();
  tr.iterations.reserve(static_cast<std::size_t>((cfg.iterations - cfg.burn_in) / cfg.thinning));

  for (int t = 1; t <= cfg.iterations; ++t) {
    step_latents(st, data, rng);
    if (!cfg.single_cluster) {
      const auto s = step_assignments(st, data, cfg, rng);
      tr.zero_weight_events += s.zero_weight_events;
      tr.reassignment_draws += s.draws;
    }
    step_unique_values(st, data, cfg, adapt, rng);
    if (!cfg.single_cluster) step_nu(st, cfg, adapt, rng);

    if (t % cfg.batch_size == 0) {
      for (int f = 0; f < n_families; ++f) {
        if (adapt.proposals[f] > 0)
          tr.acceptance.push_back(
              {adapt.batch, static_cast<Family>(f), adapt.rate(static_cast<Family>(f))});
      }
      if (cfg.adapt_throughout || t <= cfg.burn_in) {
        adapt_tuning(adapt, cfg.target_rate_low, cfg.target_rate_high);
      } else {
        adapt.reset_counters();
        adapt.batch += 1;
      }
    }

    if (t > cfg.burn_in && (t - cfg.burn_in) % cfg.thinning == 0)
      tr.iterations.push_back(detail::snapshot(t, st, data));
  }
  return tr;
}

} // namespace sggmix
