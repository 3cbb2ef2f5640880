#include "toxhmm/analytics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>

#include "toxhmm/error.hpp"
#include "toxhmm/kernels.hpp"

namespace toxhmm {

RelativeRisk relative_risk(const Matrix& emission, std::size_t terminal_state, std::size_t other_state) {
  if (emission.cols() < 3) throw InputError("relative risk needs at least 3 symbols");
  if (terminal_state >= emission.rows() || other_state >= emission.rows()) {
    throw InputError("state index out of range");
  }
  if (terminal_state == other_state) throw InputError("terminal and other state must differ");
  RelativeRisk rr;
  auto ratio = [&](std::size_t symbol, double& value, bool& defined) {
    const double den = emission(other_state, symbol);
    defined = den > 0.0;
    value = defined ? emission(terminal_state, symbol) / den : 0.0;
  };
  ratio(1, rr.rr_x2, rr.x2_defined);
  ratio(2, rr.rr_x3, rr.x3_defined);
  return rr;
}

TerminalState identify_terminal_state(const Matrix& emission, double tolerance) {
  if (emission.rows() == 0 || emission.cols() == 0) throw InputError("empty emission matrix");
  TerminalState out;
  for (std::size_t i = 1; i < emission.rows(); ++i) {
    if (emission(i, 0) > emission(out.state, 0)) out.state = i;
  }
  for (std::size_t i = 0; i < emission.rows(); ++i) {
    if (i != out.state) out.other_end_probability = std::max(out.other_end_probability, emission(i, 0));
  }
  out.clean = out.other_end_probability < tolerance;
  return out;
}

namespace {

double quantile_sorted(std::span<const double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

void check_unit_interval(std::span<const double> values) {
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) throw InputError("score outside [0,1]");
  }
}

std::vector<double> uniform_grid(std::size_t n) {
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) g[i] = static_cast<double>(i) / static_cast<double>(n - 1);
  return g;
}

}  // namespace

double silverman_bandwidth(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) return kMinBandwidth;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
  double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  if (!(spread > 0.0)) return kMinBandwidth;
  return std::max(kMinBandwidth, 0.9 * spread * std::pow(static_cast<double>(n), -0.2));
}

double trapezoid(std::span<const double> grid, std::span<const double> f) {
  double s = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i) s += 0.5 * (grid[i] - grid[i - 1]) * (f[i] + f[i - 1]);
  return s;
}

double density_mean(std::span<const double> grid, std::span<const double> f) {
  std::vector<double> yf(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) yf[i] = grid[i] * f[i];
  return trapezoid(grid, yf);
}

std::vector<double> reflected_kde(std::span<const double> values, std::span<const double> grid, double bandwidth) {
  if (values.empty()) throw InputError("density of an empty sample");
  if (!(bandwidth > 0.0)) throw InputError("bandwidth must be positive");
  check_unit_interval(values);
  std::vector<double> reflected;
  reflected.reserve(3 * values.size());
  for (double v : values) {
    reflected.push_back(v);
    reflected.push_back(-v);
    reflected.push_back(2.0 - v);
  }
  std::vector<double> f(grid.size());
  kernels::gaussian_kernel_sum(reflected, grid, bandwidth, f);
  const double z = trapezoid(grid, f);
  if (z > 0.0) {
    for (double& x : f) x /= z;
  }
  return f;
}

ConditionalDensity conditional_density(std::span<const std::pair<double, double>> pairs,
                                       const DensityOptions& options) {
  if (pairs.empty()) throw InputError("conditional density of an empty sample");
  const auto& edges = options.x_edges;
  if (edges.size() < 2) throw InputError("need at least two bin edges");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (!(edges[i] >= 0.0 && edges[i] <= 1.0)) throw InputError("bin edges must lie in [0,1]");
    if (i && !(edges[i] > edges[i - 1])) throw InputError("bin edges must be strictly ascending");
  }
  if (options.grid_points < 2) throw InputError("grid needs at least two points");

  ConditionalDensity out;
  out.x_edges = edges;
  out.y_grid = uniform_grid(options.grid_points);
  out.n_pairs = pairs.size();
  const std::size_t n_bins = edges.size() - 1;
  std::vector<std::vector<double>> per_bin(n_bins);
  std::vector<double> all;
  all.reserve(pairs.size());
  for (const auto& [x, y] : pairs) {
    if (!(x >= 0.0 && x <= 1.0) || !(y >= 0.0 && y <= 1.0)) throw InputError("score outside [0,1]");
    all.push_back(y);
    const auto it = std::upper_bound(edges.begin(), edges.end(), x);
    std::size_t b = static_cast<std::size_t>(it - edges.begin());
    if (b == 0) continue;  // below the first edge
    --b;
    if (b == n_bins) {
      if (x != edges.back()) continue;
      b = n_bins - 1;
    }
    per_bin[b].push_back(y);
  }
  out.bandwidth = options.bandwidth ? *options.bandwidth : silverman_bandwidth(all);
  out.unconditional = reflected_kde(all, out.y_grid, out.bandwidth);
  for (std::size_t b = 0; b < n_bins; ++b) {
    out.counts.push_back(per_bin[b].size());
    out.sparse.push_back(per_bin[b].size() < options.min_count);
    out.densities.push_back(per_bin[b].empty() ? std::vector<double>(out.y_grid.size(), 0.0)
                                               : reflected_kde(per_bin[b], out.y_grid, out.bandwidth));
  }
  return out;
}

std::vector<std::pair<double, double>> reply_pairs(std::span<const Conversation> conversations,
                                                   const std::string& attribute) {
  std::vector<std::pair<double, double>> out;
  for (const auto& conv : conversations) {
    const auto top = conv.top.scores.find(attribute);
    if (top == conv.top.scores.end()) continue;
    for (const auto& r : conv.replies) {
      const auto s = r.scores.find(attribute);
      if (s != r.scores.end()) out.emplace_back(top->second, s->second);
    }
  }
  return out;
}

namespace {

std::int64_t day_index(std::int64_t timestamp) {
  // floor division so that pre-epoch times land on the right day
  const std::int64_t d = 86400;
  return timestamp >= 0 ? timestamp / d : -((-timestamp + d - 1) / d);
}

std::string date_of_day(std::int64_t day) {
  using namespace std::chrono;
  const year_month_day ymd{sys_days{days{day}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

}  // namespace

std::string utc_date(std::int64_t timestamp) { return date_of_day(day_index(timestamp)); }

DailySeries daily_series(std::span<const Comment> comments, const std::string& attribute, double threshold) {
  DailySeries s;
  if (comments.empty()) return s;
  std::int64_t first = day_index(comments[0].timestamp);
  std::int64_t last = first;
  for (const auto& c : comments) {
    first = std::min(first, day_index(c.timestamp));
    last = std::max(last, day_index(c.timestamp));
  }
  const auto n_days = static_cast<std::size_t>(last - first + 1);
  s.counts.assign(n_days, 0);
  s.scored.assign(n_days, 0);
  s.above.assign(n_days, 0);
  for (const auto& c : comments) {
    const auto d = static_cast<std::size_t>(day_index(c.timestamp) - first);
    ++s.counts[d];
    const auto it = c.scores.find(attribute);
    if (it == c.scores.end()) continue;
    ++s.scored[d];
    if (it->second > threshold) ++s.above[d];
  }
  s.dates.reserve(n_days);
  for (std::size_t d = 0; d < n_days; ++d) {
    s.dates.push_back(date_of_day(first + static_cast<std::int64_t>(d)));
    s.fraction.push_back(s.scored[d] ? std::optional(static_cast<double>(s.above[d]) / static_cast<double>(s.scored[d]))
                                     : std::nullopt);
    if (d + 1 < kRollingWindow) {
      s.rolling_count.push_back(std::nullopt);
      s.rolling_fraction.push_back(std::nullopt);
      continue;
    }
    // integer sums keep a constant series exactly constant
    std::size_t count = 0, scored = 0, above = 0;
    for (std::size_t k = d + 1 - kRollingWindow; k <= d; ++k) {
      count += s.counts[k];
      scored += s.scored[k];
      above += s.above[k];
    }
    s.rolling_count.push_back(static_cast<double>(count) / static_cast<double>(kRollingWindow));
    s.rolling_fraction.push_back(scored ? std::optional(static_cast<double>(above) / static_cast<double>(scored))
                                        : std::nullopt);
  }
  return s;
}

std::vector<std::pair<double, double>> ccdf(std::span<const double> values) {
  if (values.empty()) throw InputError("ccdf of an empty sample");
  std::vector<double> sorted(values.begin(), values.end());
  for (double v : sorted) {
    if (!(v >= 0.0)) throw InputError("ccdf values must be non-negative");
  }
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i && sorted[i] == sorted[i - 1]) continue;
    out.emplace_back(sorted[i], static_cast<double>(sorted.size() - i) / n);
  }
  return out;
}

EngagementMetrics engagement_metrics(std::span<const Comment> comments, std::span<const Conversation> conversations) {
  EngagementMetrics m;
  std::map<std::string, std::vector<std::pair<std::int64_t, std::string>>> by_author;
  std::map<std::string, std::size_t> per_video;
  for (const auto& c : comments) {
    by_author[c.author_id].emplace_back(c.timestamp, c.id);
    ++per_video[c.video_id];
  }
  for (auto& [author, times] : by_author) {
    std::sort(times.begin(), times.end());
    for (std::size_t i = 1; i < times.size(); ++i) {
      m.interevent_seconds.push_back(static_cast<double>(times[i].first - times[i - 1].first));
    }
    m.comments_per_author.push_back(static_cast<double>(times.size()));
  }
  for (const auto& [video, n] : per_video) m.comments_per_video.push_back(static_cast<double>(n));
  for (const auto& conv : conversations) m.conversation_lengths.push_back(static_cast<double>(conv.size()));
  return m;
}

namespace {

std::string fmt_opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

std::string bin_name(const ConditionalDensity& d, std::size_t b) {
  const bool last = b + 2 == d.x_edges.size();
  return "[" + format_double(d.x_edges[b]) + "," + format_double(d.x_edges[b + 1]) + (last ? "]" : ")");
}

}  // namespace

Table daily_series_table(const DailySeries& s) {
  Table t;
  t.header = {"date", "comments", "scored", "above", "fraction", "rolling_comments", "rolling_fraction"};
  for (std::size_t d = 0; d < s.dates.size(); ++d) {
    t.rows.push_back({s.dates[d], std::to_string(s.counts[d]), std::to_string(s.scored[d]), std::to_string(s.above[d]),
                      fmt_opt(s.fraction[d]), fmt_opt(s.rolling_count[d]), fmt_opt(s.rolling_fraction[d])});
  }
  return t;
}

Table density_table(const ConditionalDensity& d) {
  Table t;
  t.header.push_back("y");
  for (std::size_t b = 0; b < d.densities.size(); ++b) t.header.push_back(bin_name(d, b));
  t.header.push_back("unconditional");
  for (std::size_t i = 0; i < d.y_grid.size(); ++i) {
    std::vector<std::string> row{format_double(d.y_grid[i])};
    for (const auto& f : d.densities) row.push_back(format_double(f[i]));
    row.push_back(format_double(d.unconditional[i]));
    t.rows.push_back(std::move(row));
  }
  return t;
}

Table ccdf_table(std::span<const std::pair<double, double>> c) {
  Table t;
  t.header = {"value", "ccdf"};
  for (const auto& [v, p] : c) t.rows.push_back({format_double(v), format_double(p)});
  return t;
}

nlohmann::json to_json(const ConditionalDensity& d) {
  nlohmann::json bins = nlohmann::json::array();
  for (std::size_t b = 0; b < d.densities.size(); ++b) {
    bins.push_back({{"range", bin_name(d, b)},
                    {"lo", d.x_edges[b]},
                    {"hi", d.x_edges[b + 1]},
                    {"count", d.counts[b]},
                    {"sparse", static_cast<bool>(d.sparse[b])},
                    {"mean", d.counts[b] ? density_mean(d.y_grid, d.densities[b]) : 0.0},
                    {"density", d.densities[b]}});
  }
  return {{"bandwidth", d.bandwidth},
          {"n_pairs", d.n_pairs},
          {"y_grid", d.y_grid},
          {"bins", bins},
          {"unconditional", d.unconditional}};
}

}  // namespace toxhmm
