// Baum-Welch over a corpus. The E-step runs through the dispatching kernel
// (scaled recursions, lane-striped accumulation), so results do not depend on
// which instruction set was selected.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include "toxhmm/error.hpp"
#include "toxhmm/hmm.hpp"
#include "toxhmm/kernels.hpp"

namespace toxhmm {

namespace {

constexpr double kTransitionFloor = 1e-300;

// Neumaier-compensated sum, in index order.
double compensated_sum(std::span<const double> values) {
  double sum = 0.0;
  double carry = 0.0;
  for (double v : values) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v)) {
      carry += (sum - t) + v;
    } else {
      carry += (v - t) + sum;
    }
    sum = t;
  }
  return sum + carry;
}

kernels::ModelView view_of(const HmmParameters& p) {
  return {p.n_states(), p.n_symbols(), p.initial, p.transition.data(), p.emission.data()};
}

// Normalizes a row of expected counts into `row`. Rows with no mass keep their
// previous value: the likelihood does not depend on them.
void normalize_into(std::span<const double> counts, std::span<double> row) {
  double total = 0.0;
  for (double c : counts) total += c;
  if (!(total > 0.0)) return;
  for (std::size_t j = 0; j < row.size(); ++j) row[j] = counts[j] / total;
}

void m_step(const kernels::EStepResult& stats, HmmParameters& p) {
  const std::size_t n = p.n_states();
  const std::size_t j = p.n_symbols();
  normalize_into(stats.initial, p.initial);
  for (std::size_t i = 0; i < n; ++i) {
    normalize_into(std::span(stats.transition).subspan(i * n, n), p.transition.row(i));
    for (double& x : p.transition.row(i)) x = std::max(x, kTransitionFloor);
    normalize_into(std::span(stats.emission).subspan(i * j, j), p.emission.row(i));
  }
}

bool has_converged(double previous_mean, double current_mean, double tolerance) {
  const double change = std::abs(current_mean - previous_mean);
  if (previous_mean == 0.0) return change < tolerance;
  return change / std::abs(previous_mean) < tolerance;
}

struct SingleRun {
  HmmParameters params;
  std::vector<double> trace;
  bool converged = false;
  std::size_t iterations = 0;
};

class EmMap {
 public:
  explicit EmMap(const kernels::PackedSequences& corpus) : corpus_(corpus) {}

  // Corpus log-likelihood of `params`; leaves the expected counts in stats().
  double evaluate(const HmmParameters& params) {
    kernels::estep(view_of(params), corpus_, stats_);
    return compensated_sum(stats_.log_likelihood);
  }

  // One EM update from the counts of the last evaluate().
  HmmParameters update(const HmmParameters& from) const {
    HmmParameters next = from;
    m_step(stats_, next);
    return next;
  }

 private:
  const kernels::PackedSequences& corpus_;
  kernels::EStepResult stats_;
};

void require_finite(double ll, std::size_t iteration) {
  if (!std::isfinite(ll)) {
    throw NumericalError("non-finite corpus log-likelihood at iteration " +
                         std::to_string(iteration));
  }
}

SingleRun run_plain(const kernels::PackedSequences& corpus, HmmParameters params,
                    const FitConfig& config) {
  SingleRun run;
  const auto n_seq = static_cast<double>(corpus.size());
  EmMap em(corpus);
  for (;;) {
    const double total = em.evaluate(params);
    require_finite(total, run.iterations);
    run.trace.push_back(total);
    if (run.trace.size() > 1 &&
        has_converged(run.trace[run.trace.size() - 2] / n_seq, total / n_seq, config.tolerance)) {
      run.converged = true;
      break;
    }
    if (run.iterations >= config.max_iterations) break;
    params = em.update(params);
    ++run.iterations;
  }
  run.params = std::move(params);
  return run;
}

// theta0 - 2 a r + a^2 v with r = theta1 - theta0, v = theta2 - 2 theta1 + theta0,
// applied entry-wise. Returns false if any entry leaves [0, 1].
bool extrapolate(std::span<const double> t0, std::span<const double> t1, std::span<const double> t2,
                 double a, std::span<double> out) {
  for (std::size_t c = 0; c < out.size(); ++c) {
    const double r = t1[c] - t0[c];
    const double v = (t2[c] - t1[c]) - r;
    const double x = t0[c] - 2.0 * a * r + a * a * v;
    if (!(x >= 0.0 && x <= 1.0)) return false;
    out[c] = x;
  }
  return true;
}

std::optional<HmmParameters> squarem_point(const HmmParameters& t0, const HmmParameters& t1,
                                           const HmmParameters& t2, double a) {
  HmmParameters out = t2;
  if (!extrapolate(t0.initial, t1.initial, t2.initial, a, out.initial)) return std::nullopt;
  if (!extrapolate(t0.transition.data(), t1.transition.data(), t2.transition.data(), a,
                   out.transition.data())) {
    return std::nullopt;
  }
  if (!extrapolate(t0.emission.data(), t1.emission.data(), t2.emission.data(), a,
                   out.emission.data())) {
    return std::nullopt;
  }
  auto renormalize = [](std::span<double> row) {
    double total = 0.0;
    for (double x : row) total += x;
    for (double& x : row) x /= total;
  };
  renormalize(out.initial);
  for (std::size_t i = 0; i < out.n_states(); ++i) {
    renormalize(out.transition.row(i));
    for (double& x : out.transition.row(i)) x = std::max(x, kTransitionFloor);
    renormalize(out.emission.row(i));
  }
  return out;
}

double squared_norm_diff(const HmmParameters& a, const HmmParameters& b, const HmmParameters* c) {
  // ||a - b||^2, or ||a - 2b + c||^2 when c is given
  double s = 0.0;
  auto acc = [&](std::span<const double> x, std::span<const double> y, std::span<const double> z) {
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double d = c ? (x[k] - y[k]) - (y[k] - z[k]) : x[k] - y[k];
      s += d * d;
    }
  };
  acc(a.initial, b.initial, c ? std::span<const double>(c->initial) : std::span<const double>());
  acc(a.transition.data(), b.transition.data(),
      c ? c->transition.data() : std::span<const double>());
  acc(a.emission.data(), b.emission.data(), c ? c->emission.data() : std::span<const double>());
  return s;
}

// SQUAREM (squared extrapolation, step length scheme S3) around the EM map.
// One iteration: two EM updates, an extrapolated point, one stabilizing EM
// update. The extrapolation is kept only if its likelihood is at least that
// of the first EM update, so the trace stays nondecreasing; otherwise the
// plain two-step EM point is used.
SingleRun run_squarem(const kernels::PackedSequences& corpus, HmmParameters params,
                      const FitConfig& config) {
  SingleRun run;
  const auto n_seq = static_cast<double>(corpus.size());
  EmMap em(corpus);
  double ll0 = em.evaluate(params);
  require_finite(ll0, 0);
  run.trace.push_back(ll0);
  while (run.iterations < config.max_iterations) {
    const HmmParameters t1 = em.update(params);
    const double ll1 = em.evaluate(t1);
    require_finite(ll1, run.iterations);
    const HmmParameters t2 = em.update(t1);

    const double rr = squared_norm_diff(t1, params, nullptr);
    const double vv = squared_norm_diff(t2, t1, &params);
    HmmParameters next = t2;
    double next_ll = std::numeric_limits<double>::quiet_NaN();
    if (vv > 0.0 && rr > 0.0) {
      double a = std::min(-1.0, -std::sqrt(rr / vv));
      for (int attempt = 0; attempt < 8 && a < -1.0; ++attempt, a = (a - 1.0) / 2.0) {
        auto candidate = squarem_point(params, t1, t2, a);
        if (!candidate) continue;
        const double ll_candidate = em.evaluate(*candidate);
        if (std::isfinite(ll_candidate) && ll_candidate >= ll1) {
          next = em.update(*candidate);
          break;
        }
      }
    }
    next_ll = em.evaluate(next);
    require_finite(next_ll, run.iterations);
    if (next_ll < ll1) {
      // the stabilized point fell behind plain EM; take the second EM update
      next = t2;
      next_ll = em.evaluate(next);
      require_finite(next_ll, run.iterations);
    }
    params = std::move(next);
    ++run.iterations;
    run.trace.push_back(next_ll);
    if (has_converged(ll0 / n_seq, next_ll / n_seq, config.tolerance)) {
      run.converged = true;
      break;
    }
    ll0 = next_ll;
  }
  run.params = std::move(params);
  return run;
}

SingleRun run_em(const kernels::PackedSequences& corpus, HmmParameters params,
                 const FitConfig& config) {
  return config.acceleration == Acceleration::kSquarem ? run_squarem(corpus, std::move(params), config)
                                                       : run_plain(corpus, std::move(params), config);
}

}  // namespace

FitResult baum_welch_fit(std::span<const Sequence> train, std::size_t n_states,
                         const FitConfig& config, std::uint64_t seed) {
  if (train.empty()) throw InputError("empty training set");
  if (n_states == 0) throw InputError("n_states must be at least 1");
  if (config.n_symbols == 0) throw InputError("n_symbols must be at least 1");
  if (!(config.tolerance >= 0.0)) throw InputError("tolerance must be non-negative");

  // Pack longest first so that lockstep groups have similar lengths. The
  // order is a pure function of the input.
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return train[a].size() > train[b].size();
  });
  kernels::PackedSequences corpus;
  const auto j = static_cast<int>(config.n_symbols);
  for (std::size_t idx : order) {
    const Sequence& s = train[idx];
    if (s.empty()) throw InputError("empty sequence in training set");
    for (int x : s) {
      if (x < 0 || x >= j) throw InputError("symbol outside alphabet in training set");
    }
    corpus.push_back(s);
  }

  const std::size_t restarts = std::max<std::size_t>(config.n_restarts, 1);
  FitResult best;
  bool have_best = false;
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng rng(mix_seed(seed, r));
    SingleRun run = run_em(corpus, random_parameters(n_states, config.n_symbols, rng), config);
    if (!have_best || run.trace.back() > best.log_likelihood_trace.back()) {
      best.params = std::move(run.params);
      best.log_likelihood_trace = std::move(run.trace);
      best.converged = run.converged;
      best.iterations = run.iterations;
      best.best_restart = r;
      have_best = true;
    }
  }
  best.params = canonicalize_states(best.params);
  best.params.seed = seed;
  best.seed = seed;
  best.n_sequences = train.size();
  return best;
}

}  // namespace toxhmm
