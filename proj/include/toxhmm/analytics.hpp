#pragma once

// Derived quantities: relative risks, terminal-state identification, reply
// score densities, daily series, CCDFs and engagement metrics.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "toxhmm/corpus.hpp"
#include "toxhmm/hmm.hpp"
#include "toxhmm/io.hpp"

namespace toxhmm {

// rr_x2 = P(1 | terminal) / P(1 | other), rr_x3 = P(2 | terminal) / P(2 | other).
// A zero denominator clears the defined flag and leaves the value at 0.
struct RelativeRisk {
  double rr_x2 = 0.0;
  double rr_x3 = 0.0;
  bool x2_defined = false;
  bool x3_defined = false;
};

RelativeRisk relative_risk(const Matrix& emission, std::size_t terminal_state, std::size_t other_state);

struct TerminalState {
  std::size_t state = 0;
  // max P(0 | Z) over the remaining states
  double other_end_probability = 0.0;
  // every other state has P(0 | Z) below the tolerance
  bool clean = false;
};

// State with the largest P(0 | Z); ties go to the lowest index.
TerminalState identify_terminal_state(const Matrix& emission, double tolerance = 1e-3);

struct DensityOptions {
  std::vector<double> x_edges{0.0, 0.5, 0.65, 0.8, 1.0};
  std::optional<double> bandwidth;  // Silverman on all reply scores when unset
  std::size_t grid_points = 201;
  std::size_t min_count = 50;
};

// Reply-score densities conditioned on the top-level score. Bins are
// [e_k, e_{k+1}), the last one closed on the right; pairs whose x falls in no
// bin only enter the unconditional density.
struct ConditionalDensity {
  std::vector<double> x_edges;
  std::vector<double> y_grid;
  std::vector<std::vector<double>> densities;  // per bin, over y_grid; empty bins are all zero
  std::vector<std::size_t> counts;
  std::vector<bool> sparse;
  std::vector<double> unconditional;
  double bandwidth = 0.0;
  std::size_t n_pairs = 0;
};

inline constexpr double kMinBandwidth = 0.01;

// 0.9 min(sd, IQR/1.34) n^(-1/5), falling back to sd alone when the IQR is
// zero and to kMinBandwidth when the data have no spread.
double silverman_bandwidth(std::span<const double> values);

// Gaussian KDE reflected at 0 and 1, renormalized on the grid with the
// trapezoid rule. Throws InputError on empty input or values outside [0,1].
std::vector<double> reflected_kde(std::span<const double> values, std::span<const double> grid, double bandwidth);

ConditionalDensity conditional_density(std::span<const std::pair<double, double>> pairs,
                                       const DensityOptions& options = {});

double trapezoid(std::span<const double> grid, std::span<const double> f);
// Mean of a density tabulated on grid.
double density_mean(std::span<const double> grid, std::span<const double> f);

// (top score, reply score) for every reply in the conversations. Replies or
// tops without the attribute are skipped.
std::vector<std::pair<double, double>> reply_pairs(std::span<const Conversation> conversations,
                                                   const std::string& attribute);

struct DailySeries {
  std::vector<std::string> dates;       // YYYY-MM-DD, every day from first to last
  std::vector<std::size_t> counts;      // comments that day
  std::vector<std::size_t> scored;      // comments carrying the attribute
  std::vector<std::size_t> above;       // scored comments over the threshold
  std::vector<std::optional<double>> fraction;           // above / scored; gap if none scored
  std::vector<std::optional<double>> rolling_count;      // trailing 7 days incl. current
  std::vector<std::optional<double>> rolling_fraction;   // pooled over the same window
};

inline constexpr std::size_t kRollingWindow = 7;

DailySeries daily_series(std::span<const Comment> comments, const std::string& attribute, double threshold);

// UTC calendar date of a timestamp.
std::string utc_date(std::int64_t timestamp);

// Sorted unique values with P(V >= v). Throws InputError on empty input or
// negative values.
std::vector<std::pair<double, double>> ccdf(std::span<const double> values);

struct EngagementMetrics {
  std::vector<double> interevent_seconds;    // by author id, then time
  std::vector<double> conversation_lengths;  // conversation order
  std::vector<double> comments_per_author;   // by author id
  std::vector<double> comments_per_video;    // by video id
};

EngagementMetrics engagement_metrics(std::span<const Comment> comments, std::span<const Conversation> conversations);

// CSV forms.
//   daily:   date, comments, scored, above, fraction, rolling_comments, rolling_fraction
//   density: y, one column per bin "[lo,hi)", unconditional
//   ccdf:    value, ccdf
Table daily_series_table(const DailySeries& s);
Table density_table(const ConditionalDensity& d);
Table ccdf_table(std::span<const std::pair<double, double>> c);
nlohmann::json to_json(const ConditionalDensity& d);

}  // namespace toxhmm
