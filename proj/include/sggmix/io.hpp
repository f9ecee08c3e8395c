#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sggmix/diagnostics.hpp"
#include "sggmix/sampler.hpp"
#include "sggmix/simulate.hpp"

namespace sggmix {

/// Shortest exact decimal form of a double; parses back to the same bits.
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

inline double parse_double(const std::string& s, const std::string& context) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw std::runtime_error(context + ": not a number: '" + s + "'");
  return v;
}

inline long parse_long(const std::string& s, const std::string& context) {
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0')
    throw std::runtime_error(context + ": not an integer: '" + s + "'");
  return v;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string rstrip(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r' || s.back() == ' ' || s.back() == '\t'))
    s.pop_back();
  return s;
}

/// Newline-delimited numeric column; blank lines are ignored, an optional
/// single header line can be skipped.
inline std::vector<double> read_data_file(const std::string& path, bool skip_header = false) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open data file: " + path);
  std::vector<double> data;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = rstrip(line);
    if (line.empty()) continue;
    if (skip_header && lineno == 1) continue;
    data.push_back(parse_double(line, path + ":" + std::to_string(lineno)));
  }
  if (data.empty()) throw std::runtime_error("data file is empty: " + path);
  return data;
}

/// Mixture description: one component per line, "weight mu gamma alpha beta",
/// '#' starts a comment.
inline MixtureSpec read_mixture_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open mixture spec: " + path);
  MixtureSpec spec;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream iss(line);
    MixtureComponent c;
    if (!(iss >> c.weight)) continue;  // blank or comment-only line
    if (!(iss >> c.params.mu >> c.params.gamma >> c.params.alpha >> c.params.beta))
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected 'weight mu gamma alpha beta'");
    std::string extra;
    if (iss >> extra)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": trailing content");
    spec.components.push_back(c);
  }
  spec.validate();
  return spec;
}

/// FNV-1a over the raw bytes of a file, as a hex string.
inline std::string file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file for checksum: " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char buf[65536];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (got < static_cast<std::streamsize>(sizeof(buf))) break;
  }
  char out[20];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return std::string(out);
}

// ---------------------------------------------------------------------------
// Trace files. Three comma-separated tables plus the ingested data column:
//   trace_iterations.csv   iter,m,nu
//   trace_clusters.csv     iter,cluster,size,mu,gamma,alpha,beta
//   trace_observations.csv iter,obs,cluster,y,loglik
//   data.csv               x
// Doubles are written with 17 significant digits so a reload reproduces the
// in-memory values exactly.
// ---------------------------------------------------------------------------

inline void write_trace(const std::filesystem::path& dir, const Trace& tr,
                        const std::vector<double>& data) {
  {
    std::ofstream f(dir / "trace_iterations.csv");
    f << "iter,m,nu\n";
    for (const auto& it : tr.iterations)
      f << it.iteration << ',' << it.n_clusters() << ',' << fmt_double(it.nu) << '\n';
    if (!f) throw std::runtime_error("failed to write trace_iterations.csv");
  }
  {
    std::ofstream f(dir / "trace_clusters.csv");
    f << "iter,cluster,size,mu,gamma,alpha,beta\n";
    for (const auto& it : tr.iterations)
      for (std::size_t j = 0; j < it.unique_values.size(); ++j) {
        const auto& p = it.unique_values[j];
        f << it.iteration << ',' << j << ',' << it.sizes[j] << ',' << fmt_double(p.mu) << ','
          << fmt_double(p.gamma) << ',' << fmt_double(p.alpha) << ',' << fmt_double(p.beta)
          << '\n';
      }
    if (!f) throw std::runtime_error("failed to write trace_clusters.csv");
  }
  {
    std::ofstream f(dir / "trace_observations.csv");
    f << "iter,obs,cluster,y,loglik\n";
    for (const auto& it : tr.iterations)
      for (std::size_t i = 0; i < it.assignment.size(); ++i)
        f << it.iteration << ',' << i << ',' << it.assignment[i] << ','
          << fmt_double(it.latents[i]) << ',' << fmt_double(it.obs_loglik[i]) << '\n';
    if (!f) throw std::runtime_error("failed to write trace_observations.csv");
  }
  {
    std::ofstream f(dir / "data.csv");
    f << "x\n";
    for (double x : data) f << fmt_double(x) << '\n';
    if (!f) throw std::runtime_error("failed to write data.csv");
  }
}

inline void write_acceptance(const std::filesystem::path& dir, const Trace& tr) {
  std::ofstream f(dir / "acceptance.csv");
  f << "batch,family,rate\n";
  for (const auto& rec : tr.acceptance)
    f << rec.batch << ',' << family_name(rec.family) << ',' << fmt_double(rec.rate) << '\n';
  if (!f) throw std::runtime_error("failed to write acceptance.csv");
}

struct LoadedTrace {
  Trace trace;
  std::vector<double> data;
};

namespace detail {

inline std::ifstream open_or_throw(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("missing trace file: " + p.string());
  return in;
}

inline void expect_header(std::ifstream& in, const char* expected,
                          const std::filesystem::path& p) {
  std::string line;
  if (!std::getline(in, line) || rstrip(line) != expected)
    throw std::runtime_error("corrupt trace file (bad header): " + p.string());
}

} // namespace detail

/// Reload a trace directory. Validates row counts against the iteration
/// table and throws on any structural damage.
inline LoadedTrace read_trace(const std::filesystem::path& dir) {
  LoadedTrace out;

  {
    auto p = dir / "data.csv";
    auto in = detail::open_or_throw(p);
    detail::expect_header(in, "x", p);
    std::string line;
    long lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      line = rstrip(line);
      if (line.empty()) continue;
      out.data.push_back(parse_double(line, p.string() + ":" + std::to_string(lineno)));
    }
    if (out.data.empty()) throw std::runtime_error("corrupt trace: empty data.csv");
  }
  out.trace.n_observations = out.data.size();

  std::map<int, std::size_t> iter_index;
  std::vector<int> expected_m;
  {
    auto p = dir / "trace_iterations.csv";
    auto in = detail::open_or_throw(p);
    detail::expect_header(in, "iter,m,nu", p);
    std::string line;
    while (std::getline(in, line)) {
      line = rstrip(line);
      if (line.empty()) continue;
      const auto cells = split_csv(line);
      if (cells.size() != 3) throw std::runtime_error("corrupt row in " + p.string());
      TraceIteration it;
      it.iteration = static_cast<int>(parse_long(cells[0], p.string()));
      const int m = static_cast<int>(parse_long(cells[1], p.string()));
      if (m < 1) throw std::runtime_error("corrupt trace: nonpositive m in " + p.string());
      it.nu = parse_double(cells[2], p.string());
      it.unique_values.reserve(static_cast<std::size_t>(m));
      it.sizes.reserve(static_cast<std::size_t>(m));
      it.assignment.resize(out.data.size(), -1);
      it.latents.resize(out.data.size());
      it.obs_loglik.resize(out.data.size());
      iter_index[it.iteration] = out.trace.iterations.size();
      out.trace.iterations.push_back(std::move(it));
      expected_m.push_back(m);
    }
    if (out.trace.iterations.empty())
      throw std::runtime_error("corrupt trace: no retained iterations in " + p.string());
  }

  {
    auto p = dir / "trace_clusters.csv";
    auto in = detail::open_or_throw(p);
    detail::expect_header(in, "iter,cluster,size,mu,gamma,alpha,beta", p);
    std::string line;
    while (std::getline(in, line)) {
      line = rstrip(line);
      if (line.empty()) continue;
      const auto cells = split_csv(line);
      if (cells.size() != 7) throw std::runtime_error("corrupt row in " + p.string());
      const int iter = static_cast<int>(parse_long(cells[0], p.string()));
      const auto at = iter_index.find(iter);
      if (at == iter_index.end())
        throw std::runtime_error("corrupt trace: unknown iteration in " + p.string());
      auto& it = out.trace.iterations[at->second];
      const std::size_t cluster = static_cast<std::size_t>(parse_long(cells[1], p.string()));
      if (cluster != it.unique_values.size())
        throw std::runtime_error("corrupt trace: cluster ids out of order in " + p.string());
      it.sizes.push_back(static_cast<int>(parse_long(cells[2], p.string())));
      SggParams th;
      th.mu = parse_double(cells[3], p.string());
      th.gamma = parse_double(cells[4], p.string());
      th.alpha = parse_double(cells[5], p.string());
      th.beta = parse_double(cells[6], p.string());
      it.unique_values.push_back(th);
    }
  }

  {
    auto p = dir / "trace_observations.csv";
    auto in = detail::open_or_throw(p);
    detail::expect_header(in, "iter,obs,cluster,y,loglik", p);
    std::string line;
    while (std::getline(in, line)) {
      line = rstrip(line);
      if (line.empty()) continue;
      const auto cells = split_csv(line);
      if (cells.size() != 5) throw std::runtime_error("corrupt row in " + p.string());
      const int iter = static_cast<int>(parse_long(cells[0], p.string()));
      const auto at = iter_index.find(iter);
      if (at == iter_index.end())
        throw std::runtime_error("corrupt trace: unknown iteration in " + p.string());
      auto& it = out.trace.iterations[at->second];
      const std::size_t obs = static_cast<std::size_t>(parse_long(cells[1], p.string()));
      if (obs >= it.assignment.size())
        throw std::runtime_error("corrupt trace: observation index out of range in " + p.string());
      it.assignment[obs] = static_cast<int>(parse_long(cells[2], p.string()));
      it.latents[obs] = parse_double(cells[3], p.string());
      it.obs_loglik[obs] = parse_double(cells[4], p.string());
    }
  }

  for (std::size_t l = 0; l < out.trace.iterations.size(); ++l) {
    const auto& it = out.trace.iterations[l];
    if (it.n_clusters() != expected_m[l])
      throw std::runtime_error("corrupt trace: cluster rows do not match the iteration table");
    std::vector<int> histo(it.unique_values.size(), 0);
    for (std::size_t i = 0; i < it.assignment.size(); ++i) {
      if (it.assignment[i] < 0 || it.assignment[i] >= it.n_clusters())
        throw std::runtime_error("corrupt trace: missing or invalid observation rows");
      histo[static_cast<std::size_t>(it.assignment[i])] += 1;
    }
    for (std::size_t j = 0; j < histo.size(); ++j)
      if (histo[j] != it.sizes[j])
        throw std::runtime_error("corrupt trace: cluster sizes do not match the assignments");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report, band and histogram files
// ---------------------------------------------------------------------------

inline std::string format_report(const FitReport& rep) {
  std::ostringstream os;
  os << "lpml=" << fmt_double(rep.lpml) << '\n';
  os << "aic=" << fmt_double(rep.aic) << '\n';
  os << "bic=" << fmt_double(rep.bic) << '\n';
  os << "m_mode=" << rep.m_mode << '\n';
  for (const auto& [m, p] : rep.m_posterior)
    os << "m_posterior_" << m << '=' << fmt_double(p) << '\n';
  os << "nu_mean=" << fmt_double(rep.nu.mean) << '\n';
  os << "nu_ci_lower=" << fmt_double(rep.nu.lower95) << '\n';
  os << "nu_ci_upper=" << fmt_double(rep.nu.upper95) << '\n';
  os << "p_alpha_lt_1=" << fmt_double(rep.p_alpha_lt1) << '\n';
  os << "p_alpha_1_2=" << fmt_double(rep.p_alpha_1to2) << '\n';
  os << "p_alpha_gt_2=" << fmt_double(rep.p_alpha_gt2) << '\n';
  os << "cpo_zero_count=" << rep.cpo_zero_count << '\n';
  return os.str();
}

inline void write_band(const std::filesystem::path& path, const PredictiveBand& band) {
  std::ofstream f(path);
  f << "grid,mean,lower,upper\n";
  for (std::size_t g = 0; g < band.grid.size(); ++g)
    f << fmt_double(band.grid[g]) << ',' << fmt_double(band.mean_density[g]) << ','
      << fmt_double(band.lower95[g]) << ',' << fmt_double(band.upper95[g]) << '\n';
  if (!f) throw std::runtime_error("failed to write band file: " + path.string());
}

struct Histogram {
  std::vector<double> lower, upper;
  std::vector<std::int64_t> count;
  std::vector<double> density;
};

/// Equal-width bins over [lo, hi]; the last bin is closed on the right.
inline Histogram make_histogram(const std::vector<double>& draws, double lo, double hi,
                                int nbins) {
  detail::check(nbins >= 1 && hi > lo, "make_histogram: bad bin layout");
  Histogram h;
  h.lower.resize(static_cast<std::size_t>(nbins));
  h.upper.resize(static_cast<std::size_t>(nbins));
  h.count.assign(static_cast<std::size_t>(nbins), 0);
  h.density.resize(static_cast<std::size_t>(nbins));
  const double width = (hi - lo) / nbins;
  for (int b = 0; b < nbins; ++b) {
    h.lower[static_cast<std::size_t>(b)] = lo + b * width;
    h.upper[static_cast<std::size_t>(b)] = lo + (b + 1) * width;
  }
  for (double v : draws) {
    if (v < lo || v > hi) continue;
    int b = static_cast<int>((v - lo) / width);
    if (b >= nbins) b = nbins - 1;
    h.count[static_cast<std::size_t>(b)] += 1;
  }
  const double denom = static_cast<double>(draws.size()) * width;
  for (int b = 0; b < nbins; ++b)
    h.density[static_cast<std::size_t>(b)] = static_cast<double>(h.count[static_cast<std::size_t>(b)]) / denom;
  return h;
}

inline void write_histogram(const std::filesystem::path& path, const Histogram& h) {
  std::ofstream f(path);
  f << "bin_low,bin_high,count,density\n";
  for (std::size_t b = 0; b < h.count.size(); ++b)
    f << fmt_double(h.lower[b]) << ',' << fmt_double(h.upper[b]) << ',' << h.count[b] << ','
      << fmt_double(h.density[b]) << '\n';
  if (!f) throw std::runtime_error("failed to write histogram file: " + path.string());
}

// ---------------------------------------------------------------------------
// key=value files: run configuration and manifest
// ---------------------------------------------------------------------------

inline std::map<std::string, std::string> read_keyvalue_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = rstrip(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key=value");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

/// Ordered key=value writer, moved into place atomically.
inline void write_keyvalue_file(const std::filesystem::path& path,
                                const std::vector<std::pair<std::string, std::string>>& kv) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp);
    for (const auto& [k, v] : kv) f << k << '=' << v << '\n';
    if (!f) throw std::runtime_error("failed to write: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

} // namespace sggmix
