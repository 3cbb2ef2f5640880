#pragma once

// Discrete-observation hidden Markov models.
//
// Conventions used throughout:
//   transition(i, k) = P(Z_t = k | Z_{t-1} = i)
//   emission(i, j)   = P(X_t = j | Z_t = i)
// Likelihoods are natural logs. Ties are always broken toward the lowest
// state index.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "toxhmm/rng.hpp"

namespace toxhmm {

using Sequence = std::vector<int>;

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct HmmParameters {
  std::vector<double> initial;
  Matrix transition;
  Matrix emission;
  std::uint64_t seed = 0;

  std::size_t n_states() const noexcept { return initial.size(); }
  std::size_t n_symbols() const noexcept { return emission.cols(); }

  // Throws InputError unless shapes agree, entries are finite and in [0,1]
  // and every distribution sums to one within 1e-12.
  void validate() const;

  friend bool operator==(const HmmParameters&, const HmmParameters&) = default;
};

enum class Acceleration {
  kNone,     // textbook Baum-Welch, one EM update per iteration
  kSquarem,  // squared extrapolation of the EM map, monotone safeguarded
};

struct FitConfig {
  std::size_t n_symbols = 3;
  std::size_t max_iterations = 500;
  // Stop when the relative change of the mean per-sequence log-likelihood
  // falls below this.
  double tolerance = 1e-6;
  std::size_t n_restarts = 5;
  Acceleration acceleration = Acceleration::kSquarem;
};

struct FitResult {
  HmmParameters params;
  // Total corpus log-likelihood after each iteration; entry 0 is the
  // initialization. Nondecreasing up to rounding.
  std::vector<double> log_likelihood_trace;
  bool converged = false;
  std::size_t iterations = 0;
  std::uint64_t seed = 0;
  std::size_t best_restart = 0;
  std::size_t n_sequences = 0;

  double mean_log_likelihood() const {
    return log_likelihood_trace.empty() || n_sequences == 0
               ? 0.0
               : log_likelihood_trace.back() / static_cast<double>(n_sequences);
  }
};

struct PosteriorMarginals {
  Matrix gamma;                // T x I
  std::vector<Matrix> xi;      // T-1 slices of I x I
  double log_likelihood = 0.0;
};

// log P(seq | params). Returns -infinity for zero-probability sequences.
double log_likelihood(const HmmParameters& params, std::span<const int> seq);

// Throws ImpossibleSequence if the sequence has probability zero.
PosteriorMarginals posteriors(const HmmParameters& params, std::span<const int> seq);

// Most probable state path. Throws ImpossibleSequence if every path has
// probability zero.
std::vector<int> viterbi(const HmmParameters& params, std::span<const int> seq);

// Joint log P(seq, path).
double path_log_probability(const HmmParameters& params, std::span<const int> seq,
                            std::span<const int> path);

// Baum-Welch with random restarts. The returned parameters are canonicalized.
FitResult baum_welch_fit(std::span<const Sequence> train, std::size_t n_states,
                         const FitConfig& config, std::uint64_t seed);

// Flat-Dirichlet random parameters.
HmmParameters random_parameters(std::size_t n_states, std::size_t n_symbols, Rng& rng);

// Permutation that orders states by descending P(symbol 0 | Z), then by
// descending P(symbol 2 | Z), then by original index. perm[new] = old.
std::vector<std::size_t> canonical_order(const HmmParameters& params);

HmmParameters permute_states(const HmmParameters& params, std::span<const std::size_t> perm);

HmmParameters canonicalize_states(const HmmParameters& params);

// Draws one sequence. With a stop symbol, generation halts right after that
// symbol is first emitted; in any case at most max_length symbols are drawn.
Sequence sample(const HmmParameters& params, Rng& rng, std::size_t max_length,
                std::optional<int> stop_symbol = std::nullopt);

}  // namespace toxhmm
