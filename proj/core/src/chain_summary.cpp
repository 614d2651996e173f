#include "pmm/chain_summary.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "pmm/error.hpp"
#include "pmm/stats.hpp"

namespace pmm {
namespace {

double variance(std::span<const double> v) {
  const double s = sample_sd(v);
  return s * s;
}

std::vector<std::vector<double>> split_halves(std::span<const std::vector<double>> chains) {
  std::vector<std::vector<double>> out;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    out.emplace_back(c.end() - static_cast<std::ptrdiff_t>(half), c.end());
  }
  return out;
}

}  // namespace

double split_rhat(std::span<const std::vector<double>> chains) {
  const auto parts = split_halves(chains);
  require(!parts.empty() && parts.front().size() >= 2, "split R-hat needs at least four draws per chain");
  const double n = static_cast<double>(parts.front().size());
  std::vector<double> means, vars;
  for (const auto& p : parts) {
    means.push_back(mean(p));
    vars.push_back(variance(p));
  }
  const double w = mean(vars);
  const double b = n * variance(means);
  if (w <= 0.0) return b <= 0.0 ? 1.0 : INFINITY;
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

double effective_sample_size(std::span<const std::vector<double>> chains) {
  const auto parts = split_halves(chains);
  require(!parts.empty() && parts.front().size() >= 4, "ESS needs at least eight draws per chain");
  const std::size_t n = parts.front().size();
  const double m = static_cast<double>(parts.size());
  std::vector<double> means, vars;
  for (const auto& p : parts) {
    means.push_back(mean(p));
    vars.push_back(variance(p));
  }
  const double w = mean(vars);
  const double b = static_cast<double>(n) * variance(means);
  const double var_plus = (static_cast<double>(n) - 1.0) / static_cast<double>(n) * w + b / static_cast<double>(n);
  if (!(var_plus > 0.0)) return m * static_cast<double>(n);

  auto rho = [&](std::size_t lag) {
    double v = 0.0;
    for (const auto& p : parts) {
      for (std::size_t i = lag; i < n; ++i) v += (p[i] - p[i - lag]) * (p[i] - p[i - lag]);
    }
    v /= m * static_cast<double>(n - lag);
    return 1.0 - v / (2.0 * var_plus);
  };
  // Geyer: sum positive pair sums, forced monotone
  double sum = 0.0;
  double prev_pair = INFINITY;
  for (std::size_t t = 0; t + 1 < n; t += 2) {
    const double pair = (t == 0 ? 1.0 : rho(t)) + rho(t + 1);
    if (pair <= 0.0) break;
    const double use = std::min(pair, prev_pair);
    sum += use;
    prev_pair = use;
  }
  const double tau = std::max(-1.0 + 2.0 * sum, 1.0 / std::log10(m * static_cast<double>(n) + 10.0));
  return m * static_cast<double>(n) / tau;
}

std::vector<ParamSummary> summarize(std::span<const ChainOutput> chains) {
  require(!chains.empty(), "no chains to summarise");
  const auto& names = chains.front().names;
  for (const auto& c : chains) require(c.names == names, "chains disagree on parameter names");
  std::vector<ParamSummary> out;
  for (std::size_t p = 0; p < names.size(); ++p) {
    std::vector<std::vector<double>> per;
    std::vector<double> pooled;
    for (const auto& c : chains) {
      std::vector<double> v(static_cast<std::size_t>(c.draws.rows()));
      for (Eigen::Index r = 0; r < c.draws.rows(); ++r) v[static_cast<std::size_t>(r)] = c.draws(r, static_cast<Eigen::Index>(p));
      pooled.insert(pooled.end(), v.begin(), v.end());
      per.push_back(std::move(v));
    }
    ParamSummary s;
    s.name = names[p];
    if (pooled.empty()) {
      out.push_back(s);
      continue;
    }
    s.mean = mean(pooled);
    s.sd = sample_sd(pooled);
    s.q025 = sample_quantile(pooled, 0.025);
    s.q500 = sample_quantile(pooled, 0.5);
    s.q975 = sample_quantile(pooled, 0.975);
    const std::size_t shortest = std::min_element(per.begin(), per.end(), [](const auto& a, const auto& b) { return a.size() < b.size(); })->size();
    if (shortest >= 8) {
      for (auto& v : per) v.resize(shortest);
      s.rhat = split_rhat(per);
      s.ess = effective_sample_size(per);
    } else {
      s.rhat = NAN;
      s.ess = NAN;
    }
    out.push_back(s);
  }
  return out;
}

void write_chain_csv(std::ostream& out, const ChainOutput& chain) {
  out.precision(17);
  out << "draw";
  for (const auto& n : chain.names) out << ',' << n;
  out << ",log_posterior\n";
  for (Eigen::Index r = 0; r < chain.draws.rows(); ++r) {
    out << r + 1;
    for (Eigen::Index c = 0; c < chain.draws.cols(); ++c) out << ',' << chain.draws(r, c);
    out << ',' << chain.log_posterior[static_cast<std::size_t>(r)] << '\n';
  }
}

ChainOutput read_chain_csv(std::istream& in) {
  ChainOutput c;
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "empty chain file");
  {
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    require(cell == "draw", "chain file must start with a draw column");
    while (std::getline(ss, cell, ',')) c.names.push_back(cell);
    require(!c.names.empty() && c.names.back() == "log_posterior", "chain file lacks log_posterior");
    c.names.pop_back();
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    require(row.size() == c.names.size() + 1, "chain row has the wrong number of columns");
    c.log_posterior.push_back(row.back());
    row.pop_back();
    rows.push_back(std::move(row));
  }
  c.draws.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(c.names.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t k = 0; k < rows[r].size(); ++k) c.draws(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = rows[r][k];
  }
  return c;
}

void write_summary_csv(std::ostream& out, std::span<const ParamSummary> rows) {
  out.precision(10);
  out << "parameter,mean,sd,q2.5,q50,q97.5,rhat,ess\n";
  for (const auto& s : rows) {
    out << s.name << ',' << s.mean << ',' << s.sd << ',' << s.q025 << ',' << s.q500 << ',' << s.q975
        << ',' << s.rhat << ',' << s.ess << '\n';
  }
}

}  // namespace pmm
