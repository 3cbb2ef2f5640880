#include "toxhmm/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "toxhmm/error.hpp"

namespace toxhmm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kSumTolerance = 1e-12;

double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

double log_sum_exp(std::span<const double> v) {
  double hi = kNegInf;
  for (double x : v) hi = std::max(hi, x);
  if (hi == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - hi);
  return hi + std::log(s);
}

void check_distribution(std::span<const double> p, const std::string& what) {
  double sum = 0.0;
  for (double x : p) {
    if (!std::isfinite(x)) throw InputError(what + ": non-finite entry");
    if (x < 0.0 || x > 1.0) throw InputError(what + ": entry outside [0,1]");
    sum += x;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw InputError(what + ": sums to " + std::to_string(sum) + ", expected 1");
  }
}

void check_sequence(const HmmParameters& params, std::span<const int> seq) {
  if (seq.empty()) throw InputError("empty observation sequence");
  const auto j = static_cast<int>(params.n_symbols());
  for (int s : seq) {
    if (s < 0 || s >= j) {
      throw InputError("symbol " + std::to_string(s) + " outside alphabet of size " +
                       std::to_string(j));
    }
  }
}

// Element-wise logs of the parameters, computed once per call.
struct LogParams {
  std::vector<double> initial;
  Matrix transition;
  Matrix emission;

  explicit LogParams(const HmmParameters& p)
      : initial(p.initial.size()),
        transition(p.transition.rows(), p.transition.cols()),
        emission(p.emission.rows(), p.emission.cols()) {
    std::transform(p.initial.begin(), p.initial.end(), initial.begin(), safe_log);
    std::transform(p.transition.data().begin(), p.transition.data().end(),
                   transition.data().begin(), safe_log);
    std::transform(p.emission.data().begin(), p.emission.data().end(), emission.data().begin(),
                   safe_log);
  }
};

// log alpha, T x I.
Matrix forward_log(const HmmParameters& params, const LogParams& lp, std::span<const int> seq) {
  const std::size_t n = params.n_states();
  Matrix alpha(seq.size(), n);
  for (std::size_t k = 0; k < n; ++k) alpha(0, k) = lp.initial[k] + lp.emission(k, seq[0]);
  std::vector<double> terms(n);
  for (std::size_t t = 1; t < seq.size(); ++t) {
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t i = 0; i < n; ++i) terms[i] = alpha(t - 1, i) + lp.transition(i, k);
      alpha(t, k) = log_sum_exp(terms) + lp.emission(k, seq[t]);
    }
  }
  return alpha;
}

// log beta, T x I.
Matrix backward_log(const HmmParameters& params, const LogParams& lp, std::span<const int> seq) {
  const std::size_t n = params.n_states();
  const std::size_t len = seq.size();
  Matrix beta(len, n, 0.0);
  std::vector<double> terms(n);
  for (std::size_t t = len - 1; t-- > 0;) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < n; ++k) {
        terms[k] = lp.transition(i, k) + lp.emission(k, seq[t + 1]) + beta(t + 1, k);
      }
      beta(t, i) = log_sum_exp(terms);
    }
  }
  return beta;
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) throw InputError("matrix data does not match its shape");
}

void HmmParameters::validate() const {
  const std::size_t n = n_states();
  if (n == 0) throw InputError("model has no states");
  if (transition.rows() != n || transition.cols() != n) {
    throw InputError("transition matrix must be n_states x n_states");
  }
  if (emission.rows() != n || emission.cols() == 0) {
    throw InputError("emission matrix must be n_states x n_symbols");
  }
  check_distribution(initial, "initial distribution");
  for (std::size_t i = 0; i < n; ++i) {
    check_distribution(transition.row(i), "transition row " + std::to_string(i));
    check_distribution(emission.row(i), "emission row " + std::to_string(i));
  }
}

double log_likelihood(const HmmParameters& params, std::span<const int> seq) {
  params.validate();
  check_sequence(params, seq);
  const LogParams lp(params);
  const Matrix alpha = forward_log(params, lp, seq);
  return log_sum_exp(alpha.row(seq.size() - 1));
}

PosteriorMarginals posteriors(const HmmParameters& params, std::span<const int> seq) {
  params.validate();
  check_sequence(params, seq);
  const LogParams lp(params);
  const Matrix alpha = forward_log(params, lp, seq);
  const Matrix beta = backward_log(params, lp, seq);
  const std::size_t n = params.n_states();
  const std::size_t len = seq.size();

  PosteriorMarginals out;
  out.log_likelihood = log_sum_exp(alpha.row(len - 1));
  if (out.log_likelihood == kNegInf) throw ImpossibleSequence("sequence has probability zero");

  out.gamma = Matrix(len, n);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      out.gamma(t, i) = std::exp(alpha(t, i) + beta(t, i) - out.log_likelihood);
    }
  }
  out.xi.reserve(len > 0 ? len - 1 : 0);
  for (std::size_t t = 0; t + 1 < len; ++t) {
    Matrix slice(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < n; ++k) {
        slice(i, k) = std::exp(alpha(t, i) + lp.transition(i, k) + lp.emission(k, seq[t + 1]) +
                               beta(t + 1, k) - out.log_likelihood);
      }
    }
    out.xi.push_back(std::move(slice));
  }
  return out;
}

std::vector<int> viterbi(const HmmParameters& params, std::span<const int> seq) {
  params.validate();
  check_sequence(params, seq);
  const LogParams lp(params);
  const std::size_t n = params.n_states();
  const std::size_t len = seq.size();

  Matrix delta(len, n);
  std::vector<std::size_t> back(len * n, 0);
  for (std::size_t k = 0; k < n; ++k) delta(0, k) = lp.initial[k] + lp.emission(k, seq[0]);
  for (std::size_t t = 1; t < len; ++t) {
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t best = 0;
      double best_score = delta(t - 1, 0) + lp.transition(0, k);
      for (std::size_t i = 1; i < n; ++i) {
        const double score = delta(t - 1, i) + lp.transition(i, k);
        if (score > best_score) {
          best_score = score;
          best = i;
        }
      }
      back[t * n + k] = best;
      delta(t, k) = best_score + lp.emission(k, seq[t]);
    }
  }

  std::size_t state = 0;
  for (std::size_t k = 1; k < n; ++k) {
    if (delta(len - 1, k) > delta(len - 1, state)) state = k;
  }
  if (delta(len - 1, state) == kNegInf) throw ImpossibleSequence("sequence has probability zero");

  std::vector<int> path(len);
  for (std::size_t t = len; t-- > 0;) {
    path[t] = static_cast<int>(state);
    if (t > 0) state = back[t * n + state];
  }
  return path;
}

double path_log_probability(const HmmParameters& params, std::span<const int> seq,
                            std::span<const int> path) {
  check_sequence(params, seq);
  if (path.size() != seq.size()) throw InputError("path and sequence lengths differ");
  double lp = safe_log(params.initial.at(path[0])) + safe_log(params.emission(path[0], seq[0]));
  for (std::size_t t = 1; t < seq.size(); ++t) {
    lp += safe_log(params.transition(path[t - 1], path[t])) +
          safe_log(params.emission(path[t], seq[t]));
  }
  return lp;
}

HmmParameters random_parameters(std::size_t n_states, std::size_t n_symbols, Rng& rng) {
  auto dirichlet_row = [&rng](std::span<double> row) {
    double total = 0.0;
    for (double& x : row) {
      x = rng.exponential();
      total += x;
    }
    for (double& x : row) x /= total;
  };
  HmmParameters p;
  p.initial.assign(n_states, 0.0);
  p.transition = Matrix(n_states, n_states);
  p.emission = Matrix(n_states, n_symbols);
  dirichlet_row(p.initial);
  for (std::size_t i = 0; i < n_states; ++i) dirichlet_row(p.transition.row(i));
  for (std::size_t i = 0; i < n_states; ++i) dirichlet_row(p.emission.row(i));
  return p;
}

std::vector<std::size_t> canonical_order(const HmmParameters& params) {
  std::vector<std::size_t> order(params.n_states());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const Matrix& e = params.emission;
  const bool has_toxic_column = e.cols() > 2;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (e(a, 0) != e(b, 0)) return e(a, 0) > e(b, 0);
    if (has_toxic_column && e(a, 2) != e(b, 2)) return e(a, 2) > e(b, 2);
    return false;
  });
  return order;
}

HmmParameters permute_states(const HmmParameters& params, std::span<const std::size_t> perm) {
  const std::size_t n = params.n_states();
  if (perm.size() != n) throw InputError("permutation size does not match state count");
  HmmParameters out;
  out.seed = params.seed;
  out.initial.resize(n);
  out.transition = Matrix(n, n);
  out.emission = Matrix(n, params.n_symbols());
  for (std::size_t a = 0; a < n; ++a) {
    out.initial[a] = params.initial[perm[a]];
    for (std::size_t b = 0; b < n; ++b) out.transition(a, b) = params.transition(perm[a], perm[b]);
    for (std::size_t j = 0; j < params.n_symbols(); ++j) out.emission(a, j) = params.emission(perm[a], j);
  }
  return out;
}

HmmParameters canonicalize_states(const HmmParameters& params) {
  const auto order = canonical_order(params);
  return permute_states(params, order);
}

Sequence sample(const HmmParameters& params, Rng& rng, std::size_t max_length,
                std::optional<int> stop_symbol) {
  if (max_length == 0) throw InputError("max_length must be at least 1");
  Sequence out;
  std::size_t state = rng.categorical(params.initial);
  while (out.size() < max_length) {
    const int symbol = static_cast<int>(rng.categorical(params.emission.row(state)));
    out.push_back(symbol);
    if (stop_symbol && symbol == *stop_symbol) break;
    state = rng.categorical(params.transition.row(state));
  }
  return out;
}

}  // namespace toxhmm
