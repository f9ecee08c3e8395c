// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. The heavy two-group fits are shared across criteria.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "oracles.hpp"
#include "sggmix/diagnostics.hpp"
#include "sggmix/io.hpp"
#include "sggmix/sampler.hpp"
#include "sggmix/simulate.hpp"

using namespace sggmix;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::cout << "criterion " << criterion << ": " << (pass ? "PASS" : "FAIL") << " - " << detail
            << std::endl;
  if (!pass) ++g_failures;
}

MixtureSpec two_group_mixture() {
  MixtureSpec spec;
  spec.components.push_back({0.7, {0.0, 3.0, 3.0, 2.0}});
  spec.components.push_back({0.3, {5.0, 1.0, 0.5, 3.0}});
  return spec;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// --- criterion 1: gamma=1 slice vs generalised Pareto -----------------------

void criterion1() {
  RngStream rng(1001);
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const double mu = rng.uniform(0.0, 10.0);
    const double a = rng.uniform(0.2, 5.0);
    const double b = rng.uniform(0.2, 5.0);
    const GpdParams gpd{mu, b / a, 1.0 / a};
    const SggParams sgg{mu, 1.0, a, b};
    for (int i = 0; i < 1000; ++i) {
      const double x = mu + 60.0 * std::pow(i / 999.0, 2.0);
      worst = std::max(worst, std::abs(sgg_pdf(x, sgg) - gpd_pdf(x, gpd)));
    }
  }
  report(1, worst < 1e-12, "kernel/GPD identity on 50x1000 points, max |diff| = " + fmt(worst));
}

// --- criterion 2: normalization by quadrature --------------------------------

void criterion2() {
  // integrated in offset space: sgg_logpdf evaluates through t = x - mu, and
  // for gamma < 1 a visible share of mass sits within one ulp of mu
  RngStream rng(1002);
  double worst = 0.0;
  double worst_shift = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    SggParams p;
    p.mu = 0.0;
    p.gamma = rep % 2 == 0 ? rng.uniform(0.25, 1.0) : rng.uniform(1.0, 4.0);
    p.alpha = rng.uniform(0.3, 5.0);
    p.beta = rng.uniform(0.3, 4.0);
    const double mass = oracle::integrate_tail([&](double t) { return sgg_pdf(t, p); }, 0.0);
    worst = std::max(worst, std::abs(mass - 1.0));
    SggParams shifted = p;
    shifted.mu = rng.uniform(0.0, 5.0);
    for (double t : {1e-9, 0.05, 2.0, 150.0})
      worst_shift = std::max(worst_shift, std::abs(sgg_logpdf(shifted.mu + t, shifted) -
                                                   sgg_logpdf((shifted.mu + t) - shifted.mu, p)));
  }
  report(2, worst < 1e-6 && worst_shift == 0.0,
         "density normalization over 50 parameter sets, max |mass-1| = " + fmt(worst) +
             "; shifted member identical to the offset integrand");
}

// --- criterion 3: eppf sums + sequential urn Monte Carlo ---------------------

void criterion3() {
  double worst_sum = 0.0;
  for (int n = 2; n <= 8; ++n) {
    for (double nu : {0.1, 0.3, 0.5, 0.7, 0.9}) {
      double total = 0.0;
      oracle::for_each_set_partition(n, [&](const std::vector<int>& counts) {
        total += std::exp(eppf_log({counts}, StableIndex{nu}));
      });
      worst_sum = std::max(worst_sum, std::abs(total - 1.0));
    }
  }

  const int n = 6, reps = 1000000;
  const StableIndex nu{0.5};
  std::map<std::vector<int>, double> probs;
  std::map<std::vector<int>, long> mult;
  oracle::for_each_set_partition(n, [&](const std::vector<int>& counts) {
    std::vector<int> key = counts;
    std::sort(key.begin(), key.end(), std::greater<>());
    mult[key] += 1;
    probs[key] = std::exp(eppf_log({counts}, nu));
  });
  RngStream rng(1003);
  std::map<std::vector<int>, long> freq;
  for (int i = 0; i < reps; ++i) {
    auto pc = prior_partition_sample(n, nu, rng);
    std::sort(pc.counts.begin(), pc.counts.end(), std::greater<>());
    freq[pc.counts] += 1;
  }
  bool mc_ok = true;
  double worst_z = 0.0;
  for (const auto& [key, p] : probs) {
    const double expect = p * static_cast<double>(mult[key]);
    const double got = static_cast<double>(freq[key]) / reps;
    const double se = std::sqrt(expect * (1.0 - expect) / reps);
    const double z = std::abs(got - expect) / se;
    worst_z = std::max(worst_z, z);
    if (z > 3.0) mc_ok = false;
  }
  report(3, worst_sum < 1e-10 && mc_ok,
         "eppf sum error " + fmt(worst_sum) + " (n<=8); urn MC worst |z| = " + fmt(worst_z) +
             " over integer-partition classes (n=6, 1e6 reps)");
}

// --- criterion 4: frozen nu target vs quadrature ------------------------------

void criterion4() {
  struct Case {
    std::vector<int> sizes;
  };
  const std::vector<Case> cases{{{2}}, {{10}}, {{5, 3, 2}}};
  const double a_nu = 0.5, b_nu = 0.5;
  bool ok = true;
  std::string detail;
  for (const auto& c : cases) {
    const int m = static_cast<int>(c.sizes.size());
    auto target = [&](double v) { return std::exp(nu_log_target(v, m, c.sizes, a_nu, b_nu)); };
    const double z = oracle::tanh_sinh_01([&](double u, double) { return target(u); });
    const double mean =
        oracle::tanh_sinh_01([&](double u, double) { return u * target(u); }) / z;
    const double second =
        oracle::tanh_sinh_01([&](double u, double) { return u * u * target(u); }) / z;
    const double var = second - mean * mean;

    ChainConfig cfg;
    cfg.nu_spec = NuBetaPrior{a_nu, b_nu};
    // target validation runs the exact variant: the verbatim accept rule has
    // no proposal-ratio term and is biased where the bounded window truncates
    cfg.hastings_correction = true;
    ClusterState st;
    st.sizes = c.sizes;
    st.unique_values.assign(c.sizes.size(), SggParams{0.0, 1.0, 1.0, 1.0});
    st.nu = 0.5;
    AdaptState adapt;
    adapt.delta[static_cast<int>(Family::nu)] = 0.4;
    RngStream rng(1004);
    const int steps = 300000;
    std::vector<double> draws(steps), sq(steps);
    for (int t = 0; t < steps; ++t) {
      step_nu(st, cfg, adapt, rng);
      draws[static_cast<std::size_t>(t)] = st.nu;
      sq[static_cast<std::size_t>(t)] = st.nu * st.nu;
    }
    const auto m1 = oracle::batch_mean_se(draws, 100);
    const auto m2 = oracle::batch_mean_se(sq, 100);
    const double var_mc = m2.mean - m1.mean * m1.mean;
    const double var_se =
        std::sqrt(m2.se * m2.se + 4.0 * m1.mean * m1.mean * m1.se * m1.se);
    const bool mean_ok = std::abs(m1.mean - mean) < 3.0 * m1.se;
    const bool var_ok = std::abs(var_mc - var) < 3.0 * var_se;
    if (!(mean_ok && var_ok)) ok = false;
    int n_total = 0;
    for (int s : c.sizes) n_total += s;
    detail += "n=" + std::to_string(n_total) + ",m=" + std::to_string(m) + "[dmean=" +
              fmt(std::abs(m1.mean - mean)) + " dvar=" + fmt(std::abs(var_mc - var)) + "] ";
  }
  report(4, ok, "nu step vs 1-D quadrature of its target: " + detail);
}

// --- criterion 5: adaptation rule, unit and end-to-end ------------------------

bool criterion5_unit() {
  for (int b : {1, 4, 9, 16}) {
    AdaptState down;
    down.batch = b;
    down.proposals[0] = 10;
    down.accepts[0] = 1;
    adapt_tuning(down);
    if (down.delta[0] != std::pow(1.1, -std::sqrt(static_cast<double>(b)))) return false;
    AdaptState up;
    up.batch = b;
    up.delta[0] = 1.7;
    up.proposals[0] = 10;
    up.accepts[0] = 5;
    adapt_tuning(up);
    if (up.delta[0] != 1.7 * std::pow(1.1, std::sqrt(static_cast<double>(b)))) return false;
    AdaptState hold;
    hold.batch = b;
    hold.proposals[0] = 100;
    hold.accepts[0] = 35;
    adapt_tuning(hold);
    if (hold.delta[0] != 1.0) return false;
  }
  return true;
}

void criterion5(const Trace& beta_fit) {
  const bool unit_ok = criterion5_unit();

  std::map<Family, std::pair<int, int>> in_range;  // family -> (in, total)
  for (const auto& rec : beta_fit.acceptance) {
    if (rec.batch <= 100) continue;
    if (rec.family != Family::mu && rec.family != Family::alpha) continue;
    auto& [in, total] = in_range[rec.family];
    total += 1;
    if (rec.rate >= 0.25 && rec.rate <= 0.45) in += 1;
  }
  const double f_mu = static_cast<double>(in_range[Family::mu].first) /
                      std::max(1, in_range[Family::mu].second);
  const double f_alpha = static_cast<double>(in_range[Family::alpha].first) /
                         std::max(1, in_range[Family::alpha].second);
  const bool e2e_ok = f_mu >= 0.8 && f_alpha >= 0.8;
  report(5, unit_ok && e2e_ok,
         std::string("adaptation rule exact (") + (unit_ok ? "yes" : "no") +
             "); batches 101+ inside [0.25,0.45]: mu " + fmt(100.0 * f_mu) + "%, alpha " +
             fmt(100.0 * f_alpha) + "%");
}

// --- criterion 6: two-group replication ---------------------------------------

struct Replication {
  std::vector<double> data;
  Trace fixed_trace;
  Trace beta_trace;
  FitReport fixed_report;
  FitReport beta_report;
  ChainConfig beta_cfg;
};

Replication run_replication() {
  Replication r;
  RngStream gen(20240501);
  r.data = sample_mixture(two_group_mixture(), 500, gen).values;

  ChainConfig cfg;
  cfg.iterations = 15000;
  cfg.burn_in = 1000;
  cfg.thinning = 4;
  cfg.batch_size = 50;
  cfg.seed = 11;

  cfg.nu_spec = NuFixed{0.05};
  r.fixed_trace = run_chain(r.data, cfg);
  r.fixed_report = fit_report(r.fixed_trace, r.data);

  cfg.nu_spec = NuBetaPrior{0.5, 0.5};
  cfg.seed = 15;
  r.beta_cfg = cfg;
  r.beta_trace = run_chain(r.data, cfg);
  r.beta_report = fit_report(r.beta_trace, r.data);
  return r;
}

void criterion6(const Replication& r) {
  // (a) fixed nu = 0.05
  double p_m_gt4 = 0.0;
  for (const auto& [m, p] : r.fixed_report.m_posterior)
    if (m > 4) p_m_gt4 += p;
  const bool a_ok = r.fixed_report.m_mode == 2 && p_m_gt4 < 0.05;

  // (b) hyper-prior fit
  const int mode_b = r.beta_report.m_mode;
  const bool b_ok = (mode_b >= 2 && mode_b <= 4) && r.beta_report.nu.mean >= 0.04 &&
                    r.beta_report.nu.mean <= 0.43;

  // (c) pooled location and tail-parameter posteriors are bimodal at the truth
  const auto tail = tail_report(r.beta_trace);
  const auto mu_modes = oracle::smoothed_top_two_modes(tail.mu_draws, 0.0, 10.0, 0.25, 2.0);
  const auto alpha_modes = oracle::smoothed_top_two_modes(tail.alpha_draws, 0.0, 8.0, 0.15, 1.25);
  const bool c_ok = std::abs(mu_modes.first - 0.0) <= 0.75 &&
                    std::abs(mu_modes.second - 5.0) <= 0.75 &&
                    std::abs(alpha_modes.first - 0.5) <= 0.3 &&
                    std::abs(alpha_modes.second - 3.0) <= 1.0;

  // (d) fit quality band, on the kernel-density CPO scale that the reference
  // values are reported in (the augmented-likelihood variant sits ~600 lower;
  // both variants are computed by cpo_lpml)
  const double lpml_fixed = cpo_lpml(r.fixed_trace, r.data, true).lpml;
  const double lpml_beta = cpo_lpml(r.beta_trace, r.data, true).lpml;
  const bool d_ok = lpml_fixed >= -1700.0 && lpml_fixed <= -1450.0 && lpml_beta >= -1700.0 &&
                    lpml_beta <= -1450.0;

  // (e) the 95% band covers the true density on [0, 15]
  std::vector<double> grid;
  for (int g = 0; g <= 150; ++g) grid.push_back(0.1 * g);
  grid[0] = 1e-9;
  RngStream band_rng(1006);
  const auto band =
      predictive_density(r.beta_trace, r.beta_cfg.base_measure, grid, 100, band_rng);
  const auto spec = two_group_mixture();
  int covered = 0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double truth = mixture_pdf(spec, grid[g]);
    if (band.lower95[g] <= truth && truth <= band.upper95[g]) ++covered;
  }
  const double cov = static_cast<double>(covered) / static_cast<double>(grid.size());
  const bool e_ok = cov >= 0.9;

  const bool ok = a_ok && b_ok && c_ok && d_ok && e_ok;
  std::ostringstream os;
  os << "(a) fixed-nu m_mode=" << r.fixed_report.m_mode << " P(m>4)=" << fmt(p_m_gt4)
     << (a_ok ? " ok" : " BAD") << "; (b) prior m_mode=" << mode_b
     << " nu_mean=" << fmt(r.beta_report.nu.mean) << (b_ok ? " ok" : " BAD")
     << "; (c) mu modes " << fmt(mu_modes.first) << "/" << fmt(mu_modes.second) << ", alpha modes "
     << fmt(alpha_modes.first) << "/" << fmt(alpha_modes.second) << (c_ok ? " ok" : " BAD")
     << "; (d) kernel-cpo lpml " << fmt(lpml_fixed) << "/" << fmt(lpml_beta)
     << (d_ok ? " ok" : " BAD") << "; (e) band coverage " << fmt(100.0 * cov) << "%"
     << (e_ok ? " ok" : " BAD");
  report(6, ok, os.str());
}

// --- criterion 7: cpo oracle ---------------------------------------------------

void criterion7() {
  Trace tr;
  tr.n_observations = 1;
  for (double lik : {0.5, 0.25, 0.125}) {
    TraceIteration it;
    it.iteration = static_cast<int>(tr.iterations.size()) + 1;
    it.nu = 0.5;
    it.unique_values = {{0.0, 1.0, 1.0, 1.0}};
    it.sizes = {1};
    it.assignment = {0};
    it.latents = {1.0};
    it.obs_loglik = {std::log(lik)};
    tr.iterations.push_back(std::move(it));
  }
  const auto res = cpo_lpml(tr, {1.0});
  const bool hand_ok = std::abs(res.cpo[0] - 3.0 / 14.0) < 1e-12;

  Trace perm = tr;
  std::swap(perm.iterations[0], perm.iterations[2]);
  const double lp1 = res.lpml;
  const double lp2 = cpo_lpml(perm, {1.0}).lpml;
  const bool perm_ok = std::abs(lp1 - lp2) <= 1e-9 * std::abs(lp1);
  report(7, hand_ok && perm_ok,
         "CPO = 3/14 within 1e-12 (" + std::string(hand_ok ? "yes" : "no") +
             "), LPML order-invariant (" + (perm_ok ? "yes" : "no") + ")");
}

// --- criterion 8: single-kernel baseline ---------------------------------------

void criterion8(const Replication& r) {
  ChainConfig cfg = r.beta_cfg;
  cfg.single_cluster = true;
  cfg.seed = 16;
  const Trace single = run_chain(r.data, cfg);
  // lpml ordering on both cpo variants, plus the information criteria: the
  // mixture should win every measure
  const double s_marg = cpo_lpml(single, r.data, true).lpml;
  const double s_aug = cpo_lpml(single, r.data, false).lpml;
  const double m_marg = std::min(cpo_lpml(r.fixed_trace, r.data, true).lpml,
                                 cpo_lpml(r.beta_trace, r.data, true).lpml);
  const double m_aug = std::min(r.fixed_report.lpml, r.beta_report.lpml);
  const IcResult s_ic = posterior_ic(single, r.data);
  const double m_aic = std::max(r.fixed_report.aic, r.beta_report.aic);
  const double m_bic = std::max(r.fixed_report.bic, r.beta_report.bic);
  const bool ok =
      s_marg < m_marg && s_aug < m_aug && s_ic.aic > m_aic && s_ic.bic > m_bic;
  report(8, ok,
         "single-kernel lpml " + fmt(s_marg) + " (kernel-cpo) / " + fmt(s_aug) +
             " (augmented), aic " + fmt(s_ic.aic) + ", bic " + fmt(s_ic.bic) +
             " vs worst mixture lpml " + fmt(m_marg) + " / " + fmt(m_aug) + ", aic " +
             fmt(m_aic) + ", bic " + fmt(m_bic));
}

// --- criterion 9: bit-identical reruns through the CLI -------------------------

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SGGMIX_BIN) + " " + args + " >/dev/null 2>/dev/null";
  const int status = std::system(cmd.c_str());
  if (status < 0) return -1;
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string drop_runtime_line(const std::string& text) {
  std::istringstream is(text);
  std::ostringstream os;
  std::string line;
  while (std::getline(is, line))
    if (line.rfind("runtime_seconds=", 0) != 0) os << line << '\n';
  return os.str();
}

void criterion9() {
  const fs::path dir = fs::temp_directory_path() / "sggmix_acceptance_c9";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "mix.txt") << "0.7 0 3 3 2\n0.3 5 1 0.5 3\n";

  bool ok = run_cli("simulate --spec " + (dir / "mix.txt").string() +
                    " --n 120 --seed 5 --out " + (dir / "data.txt").string()) == 0;
  std::ofstream(dir / "run.cfg") << "iterations=2500\nburn_in=400\nthinning=4\nseed=17\n"
                                 << "a_nu=0.5\nb_nu=0.5\n";
  const auto a = dir / "out_a";
  const auto b = dir / "out_b";
  ok = ok && run_cli("fit --data " + (dir / "data.txt").string() + " --config " +
                     (dir / "run.cfg").string() + " --out " + a.string()) == 0;
  ok = ok && run_cli("fit --data " + (dir / "data.txt").string() + " --config " +
                     (dir / "run.cfg").string() + " --out " + b.string()) == 0;

  std::string mismatch;
  if (ok) {
    for (const auto& entry : fs::directory_iterator(a)) {
      const auto name = entry.path().filename().string();
      std::string va = slurp(entry.path());
      std::string vb = slurp(b / name);
      if (name == "manifest.txt") {  // wall-clock runtime is recorded there
        va = drop_runtime_line(va);
        vb = drop_runtime_line(vb);
      }
      if (va != vb) {
        mismatch = name;
        ok = false;
        break;
      }
    }
  }
  report(9, ok,
         ok ? "repeated fit produced byte-identical outputs (manifest compared without its runtime line)"
            : "outputs differ" + (mismatch.empty() ? std::string() : ": " + mismatch));
}

} // namespace

int main(int argc, char** argv) {
  // with a criterion number as the only argument, run just that criterion
  // (the replication fits are recomputed where needed; chains are seeded, so
  // the numbers match the full run)
  int only = 0;
  if (argc > 1) only = std::atoi(argv[1]);

  auto want = [&](int n) { return only == 0 || only == n; };

  if (only == 0) std::cout << "acceptance suite" << std::endl;
  if (want(1)) criterion1();
  if (want(2)) criterion2();
  if (want(3)) criterion3();
  if (want(4)) criterion4();

  if (want(5) || want(6) || want(8)) {
    const Replication repl = run_replication();
    if (want(5)) criterion5(repl.beta_trace);
    if (want(6)) criterion6(repl);
    if (want(7)) criterion7();
    if (want(8)) criterion8(repl);
  } else if (want(7)) {
    criterion7();
  }
  if (want(9)) criterion9();

  if (only == 0)
    std::cout << (g_failures == 0 ? "all criteria passed"
                                  : "failures: " + std::to_string(g_failures))
              << std::endl;
  return g_failures == 0 ? 0 : 1;
}
