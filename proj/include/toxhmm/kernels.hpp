#pragma once

// Data-parallel inner loops with a scalar reference and SIMD variants.
//
// Every variant performs the same IEEE operations in the same order, so the
// outputs are bit-identical to the scalar reference regardless of which one
// runs. Accumulations are lane-striped with a fixed width of kLanes: item n
// contributes to lane n % kLanes and lanes are folded as
// ((l0 + l1) + l2) + l3.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace toxhmm::kernels {

inline constexpr std::size_t kLanes = 4;

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa) noexcept;

// Best variant supported by this CPU and build.
Isa detected_isa() noexcept;

// Variant used by the dispatching entry points. Honors set_isa_override()
// first, then the TOXHMM_ISA environment variable ("scalar" or "avx2"), then
// detected_isa().
Isa active_isa() noexcept;

// Forces a variant, or restores automatic selection with nullopt. Requesting
// an unsupported variant falls back to scalar.
void set_isa_override(std::optional<Isa> isa) noexcept;

bool isa_supported(Isa isa) noexcept;

// Concatenated sequences. Sequence n occupies symbols[offsets[n], offsets[n+1]).
struct PackedSequences {
  std::vector<std::int32_t> symbols;
  std::vector<std::size_t> offsets{0};

  std::size_t size() const noexcept { return offsets.size() - 1; }
  std::size_t length(std::size_t n) const noexcept { return offsets[n + 1] - offsets[n]; }
  std::size_t max_length() const noexcept;
  void push_back(std::span<const int> seq);
};

// Read-only view of model parameters, row-major.
struct ModelView {
  std::size_t n_states;
  std::size_t n_symbols;
  std::span<const double> initial;     // I
  std::span<const double> transition;  // I x I
  std::span<const double> emission;    // I x J
};

// Expected sufficient statistics of one E-step.
struct EStepResult {
  std::vector<double> initial;     // I, sum over sequences of gamma_0
  std::vector<double> transition;  // I x I, sum of xi
  std::vector<double> emission;    // I x J, sum of gamma by emitted symbol
  std::vector<double> log_likelihood;  // per sequence, natural log

  void reset(std::size_t n_states, std::size_t n_symbols, std::size_t n_sequences);
};

// Scaled forward-backward over every sequence, accumulating expected counts.
// Precondition: every symbol is in [0, n_symbols) and every sequence is
// non-empty. A sequence with probability zero yields a non-finite
// log-likelihood and poisons the counts; callers check the likelihoods.
void estep(const ModelView& model, const PackedSequences& seqs, EStepResult& out);

// out[g] = sum_s exp(-0.5 * ((grid[g] - samples[s]) / bandwidth)^2)
void gaussian_kernel_sum(std::span<const double> samples, std::span<const double> grid,
                         double bandwidth, std::span<double> out);

// Exponential used by the kernels, valid for x <= 0 (returns 0 below about
// -708). Relative error against std::exp is a few ulp.
double exp_nonpositive(double x) noexcept;

// Direct entry points to each variant, for equivalence tests and benchmarks.
namespace scalar {
void estep(const ModelView& model, const PackedSequences& seqs, EStepResult& out);
void gaussian_kernel_sum(std::span<const double> samples, std::span<const double> grid,
                         double bandwidth, std::span<double> out);
}  // namespace scalar

namespace avx2 {
void estep(const ModelView& model, const PackedSequences& seqs, EStepResult& out);
void gaussian_kernel_sum(std::span<const double> samples, std::span<const double> grid,
                         double bandwidth, std::span<double> out);
}  // namespace avx2

}  // namespace toxhmm::kernels
