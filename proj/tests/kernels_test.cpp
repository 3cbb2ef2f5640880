// Equivalence of the SIMD kernels with the scalar reference, plus checks of
// the scalar reference against independent computations.

#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstring>

#include "oracles.hpp"
#include "toxhmm/hmm.hpp"
#include "toxhmm/kernels.hpp"

using namespace toxhmm;
using namespace toxhmm::kernels;

namespace {

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

ModelView view(const HmmParameters& p) {
  return {p.n_states(), p.n_symbols(), p.initial, p.transition.data(), p.emission.data()};
}

PackedSequences random_corpus(std::size_t count, std::size_t max_len, const HmmParameters& p, Rng& rng) {
  PackedSequences packed;
  for (std::size_t c = 0; c < count; ++c) packed.push_back(sample(p, rng, 1 + rng.below(max_len)));
  return packed;
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("exp_nonpositive agrees with std::exp") {
  Rng rng(4);
  double worst = 0.0;
  for (int i = 0; i < 200000; ++i) {
    const double x = -700.0 * rng.uniform() * rng.uniform();
    const double ref = std::exp(x);
    worst = std::max(worst, std::abs(exp_nonpositive(x) - ref) / ref);
  }
  CHECK(worst < 1e-15);
  CHECK(exp_nonpositive(0.0) == 1.0);
  CHECK(exp_nonpositive(-800.0) == 0.0);
  CHECK(exp_nonpositive(-std::numeric_limits<double>::infinity()) == 0.0);
}

TEST_CASE("scalar estep log-likelihoods match enumeration") {
  Rng rng(12);
  for (int draw = 0; draw < 50; ++draw) {
    const auto p = oracle::random_model(1 + rng.below(3), 1 + rng.below(3), rng);
    PackedSequences packed;
    std::vector<std::vector<int>> seqs;
    for (int s = 0; s < 6; ++s) {
      seqs.push_back(oracle::random_sequence(1 + rng.below(7), p.n_symbols(), rng));
      packed.push_back(seqs.back());
    }
    EStepResult out;
    scalar::estep(view(p), packed, out);
    for (std::size_t s = 0; s < seqs.size(); ++s) {
      const auto ref = oracle::enumerate_paths(p, seqs[s]);
      CHECK(std::abs(out.log_likelihood[s] - std::log(ref.likelihood)) <= 1e-9);
    }
  }
}

TEST_CASE("scalar estep expected counts match summed enumerated marginals") {
  Rng rng(13);
  for (int draw = 0; draw < 30; ++draw) {
    const std::size_t n = 1 + rng.below(3);
    const std::size_t j = 1 + rng.below(3);
    const auto p = oracle::random_model(n, j, rng);
    PackedSequences packed;
    std::vector<double> init(n, 0.0), trans(n * n, 0.0), emit(n * j, 0.0);
    for (int s = 0; s < 7; ++s) {
      const auto seq = oracle::random_sequence(1 + rng.below(6), j, rng);
      packed.push_back(seq);
      const auto ref = oracle::enumerate_paths(p, seq);
      for (std::size_t i = 0; i < n; ++i) init[i] += ref.gamma[0][i];
      for (std::size_t t = 0; t < seq.size(); ++t) {
        for (std::size_t i = 0; i < n; ++i) emit[i * j + seq[t]] += ref.gamma[t][i];
      }
      for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t k = 0; k < n; ++k) trans[i * n + k] += ref.xi[t][i][k];
        }
      }
    }
    EStepResult out;
    scalar::estep(view(p), packed, out);
    for (std::size_t c = 0; c < init.size(); ++c) CHECK(std::abs(out.initial[c] - init[c]) <= 1e-9);
    for (std::size_t c = 0; c < trans.size(); ++c) CHECK(std::abs(out.transition[c] - trans[c]) <= 1e-9);
    for (std::size_t c = 0; c < emit.size(); ++c) CHECK(std::abs(out.emission[c] - emit[c]) <= 1e-9);
  }
}

TEST_CASE("avx2 estep is bit-identical to scalar") {
  if (!isa_supported(Isa::kAvx2)) {
    MESSAGE("AVX2 unavailable; skipping");
    return;
  }
  Rng rng(14);
  for (int draw = 0; draw < 40; ++draw) {
    const std::size_t n = 1 + rng.below(5);
    const auto p = oracle::random_model(n, 3, rng);
    // counts not multiple of the lane width, ragged lengths, length-1 items
    const auto packed = random_corpus(1 + rng.below(41), 1 + rng.below(60), p, rng);
    EStepResult a, b;
    scalar::estep(view(p), packed, a);
    avx2::estep(view(p), packed, b);
    CHECK(bit_equal(a.log_likelihood, b.log_likelihood));
    CHECK(bit_equal(a.initial, b.initial));
    CHECK(bit_equal(a.transition, b.transition));
    CHECK(bit_equal(a.emission, b.emission));
  }
}

TEST_CASE("avx2 estep equivalence with exact zeros in the parameters") {
  if (!isa_supported(Isa::kAvx2)) return;
  HmmParameters p;
  p.initial = {0.3, 0.7};
  p.transition = Matrix(2, 2, {0.6, 0.4, 0.3, 0.7});
  p.emission = Matrix(2, 3, {0.10, 0.60, 0.30, 0.00, 0.85, 0.15});
  Rng rng(15);
  PackedSequences packed;
  for (int c = 0; c < 103; ++c) packed.push_back(sample(p, rng, 500, 0));
  EStepResult a, b;
  scalar::estep(view(p), packed, a);
  avx2::estep(view(p), packed, b);
  CHECK(bit_equal(a.log_likelihood, b.log_likelihood));
  CHECK(bit_equal(a.emission, b.emission));
  CHECK(bit_equal(a.transition, b.transition));
  CHECK(a.emission[1 * 3 + 0] == 0.0);
}

TEST_CASE("gaussian kernel sum: scalar matches a direct std::exp sum") {
  Rng rng(16);
  std::vector<double> samples(1001), grid(37), out(37);
  for (double& s : samples) s = rng.uniform();
  for (std::size_t g = 0; g < grid.size(); ++g) grid[g] = static_cast<double>(g) / 36.0;
  scalar::gaussian_kernel_sum(samples, grid, 0.05, out);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double ref = 0.0;
    for (double s : samples) {
      const double z = (grid[g] - s) / 0.05;
      ref += std::exp(-0.5 * z * z);
    }
    CHECK(std::abs(out[g] - ref) <= 1e-12 * std::max(1.0, ref));
  }
}

TEST_CASE("avx2 gaussian kernel sum is bit-identical to scalar") {
  if (!isa_supported(Isa::kAvx2)) return;
  Rng rng(17);
  for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 127u, 1000u}) {
    std::vector<double> samples(n), grid(53), a(53), b(53);
    for (double& s : samples) s = 3.0 * rng.uniform() - 1.0;
    for (std::size_t g = 0; g < grid.size(); ++g) grid[g] = static_cast<double>(g) / 52.0;
    scalar::gaussian_kernel_sum(samples, grid, 0.03, a);
    avx2::gaussian_kernel_sum(samples, grid, 0.03, b);
    CHECK(bit_equal(a, b));
  }
}

TEST_CASE("dispatch honors the override") {
  set_isa_override(Isa::kScalar);
  CHECK(active_isa() == Isa::kScalar);
  set_isa_override(std::nullopt);
  CHECK(isa_supported(active_isa()));
  CHECK(isa_name(Isa::kAvx2) == "avx2");
}

}  // TEST_SUITE
