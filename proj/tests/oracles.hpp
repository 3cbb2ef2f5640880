#pragma once

// Independent reference computations for tests. Nothing here calls into the
// library's inference code; paths are enumerated and probabilities are plain
// products.

#include <cmath>
#include <cstddef>
#include <vector>

#include "toxhmm/hmm.hpp"
#include "toxhmm/rng.hpp"

namespace oracle {

struct PathEnumeration {
  double likelihood = 0.0;                 // P(seq)
  std::vector<std::vector<double>> gamma;  // T x I posteriors
  std::vector<std::vector<std::vector<double>>> xi;  // (T-1) x I x I
  double best_path_probability = 0.0;
  std::vector<int> best_path;  // lowest-index-first among ties is NOT implied
};

inline double path_probability(const toxhmm::HmmParameters& p, const std::vector<int>& seq,
                               const std::vector<int>& path) {
  double prob = p.initial[path[0]] * p.emission(path[0], seq[0]);
  for (std::size_t t = 1; t < seq.size(); ++t) {
    prob *= p.transition(path[t - 1], path[t]) * p.emission(path[t], seq[t]);
  }
  return prob;
}

// Visits all I^T state paths.
inline PathEnumeration enumerate_paths(const toxhmm::HmmParameters& p, const std::vector<int>& seq) {
  const std::size_t n = p.n_states();
  const std::size_t len = seq.size();
  PathEnumeration out;
  out.gamma.assign(len, std::vector<double>(n, 0.0));
  out.xi.assign(len > 0 ? len - 1 : 0, std::vector<std::vector<double>>(n, std::vector<double>(n, 0.0)));

  std::vector<int> path(len, 0);
  for (;;) {
    const double prob = path_probability(p, seq, path);
    out.likelihood += prob;
    for (std::size_t t = 0; t < len; ++t) out.gamma[t][path[t]] += prob;
    for (std::size_t t = 0; t + 1 < len; ++t) out.xi[t][path[t]][path[t + 1]] += prob;
    if (prob > out.best_path_probability) {
      out.best_path_probability = prob;
      out.best_path = path;
    }
    // odometer increment
    std::size_t pos = 0;
    while (pos < len) {
      if (++path[pos] < static_cast<int>(n)) break;
      path[pos] = 0;
      ++pos;
    }
    if (pos == len) break;
  }
  if (out.likelihood > 0.0) {
    for (auto& row : out.gamma) {
      for (double& g : row) g /= out.likelihood;
    }
    for (auto& slice : out.xi) {
      for (auto& row : slice) {
        for (double& x : row) x /= out.likelihood;
      }
    }
  }
  return out;
}

// Flat-Dirichlet parameters drawn with the test's own generator.
inline toxhmm::HmmParameters random_model(std::size_t n, std::size_t j, toxhmm::Rng& rng) {
  auto row = [&rng](std::size_t len) {
    std::vector<double> r(len);
    double total = 0.0;
    for (double& x : r) {
      x = -std::log(1.0 - rng.uniform());
      total += x;
    }
    for (double& x : r) x /= total;
    return r;
  };
  toxhmm::HmmParameters p;
  p.initial = row(n);
  std::vector<double> t, e;
  for (std::size_t i = 0; i < n; ++i) {
    auto tr = row(n);
    auto er = row(j);
    t.insert(t.end(), tr.begin(), tr.end());
    e.insert(e.end(), er.begin(), er.end());
  }
  p.transition = toxhmm::Matrix(n, n, t);
  p.emission = toxhmm::Matrix(n, j, e);
  return p;
}

inline std::vector<int> random_sequence(std::size_t len, std::size_t j, toxhmm::Rng& rng) {
  std::vector<int> s(len);
  for (int& x : s) x = static_cast<int>(rng.below(j));
  return s;
}

// Stationary distribution of a row-stochastic matrix by power iteration.
inline std::vector<double> stationary(const toxhmm::Matrix& a) {
  const std::size_t n = a.rows();
  std::vector<double> pi(n, 1.0 / static_cast<double>(n)), next(n);
  for (int it = 0; it < 100000; ++it) {
    for (std::size_t k = 0; k < n; ++k) {
      next[k] = 0.0;
      for (std::size_t i = 0; i < n; ++i) next[k] += pi[i] * a(i, k);
    }
    double diff = 0.0;
    for (std::size_t k = 0; k < n; ++k) diff += std::abs(next[k] - pi[k]);
    pi.swap(next);
    if (diff < 1e-15) break;
  }
  return pi;
}

}  // namespace oracle
