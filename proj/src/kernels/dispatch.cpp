#include <atomic>
#include <cstdlib>
#include <string>

#include "toxhmm/kernels.hpp"

namespace toxhmm::kernels {

namespace {

// -1: automatic, otherwise the forced Isa value.
std::atomic<int> g_override{-1};

}  // namespace

std::string_view isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
  }
  return "unknown";
}

bool isa_supported(Isa isa) noexcept {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(TOXHMM_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
  }
  return false;
}

Isa detected_isa() noexcept {
  return isa_supported(Isa::kAvx2) ? Isa::kAvx2 : Isa::kScalar;
}

void set_isa_override(std::optional<Isa> isa) noexcept {
  g_override.store(isa ? static_cast<int>(*isa) : -1, std::memory_order_relaxed);
}

Isa active_isa() noexcept {
  const int forced = g_override.load(std::memory_order_relaxed);
  if (forced >= 0) {
    const auto isa = static_cast<Isa>(forced);
    return isa_supported(isa) ? isa : Isa::kScalar;
  }
  static const Isa from_env = [] {
    const char* env = std::getenv("TOXHMM_ISA");
    if (env == nullptr) return detected_isa();
    const std::string value(env);
    if (value == "scalar") return Isa::kScalar;
    if (value == "avx2" && isa_supported(Isa::kAvx2)) return Isa::kAvx2;
    return detected_isa();
  }();
  return from_env;
}

std::size_t PackedSequences::max_length() const noexcept {
  std::size_t longest = 0;
  for (std::size_t n = 0; n < size(); ++n) longest = std::max(longest, length(n));
  return longest;
}

void PackedSequences::push_back(std::span<const int> seq) {
  symbols.insert(symbols.end(), seq.begin(), seq.end());
  offsets.push_back(symbols.size());
}

void EStepResult::reset(std::size_t n_states, std::size_t n_symbols, std::size_t n_sequences) {
  initial.assign(n_states, 0.0);
  transition.assign(n_states * n_states, 0.0);
  emission.assign(n_states * n_symbols, 0.0);
  log_likelihood.assign(n_sequences, 0.0);
}

void estep(const ModelView& model, const PackedSequences& seqs, EStepResult& out) {
  if (active_isa() == Isa::kAvx2) {
    avx2::estep(model, seqs, out);
  } else {
    scalar::estep(model, seqs, out);
  }
}

void gaussian_kernel_sum(std::span<const double> samples, std::span<const double> grid,
                         double bandwidth, std::span<double> out) {
  if (active_isa() == Isa::kAvx2) {
    avx2::gaussian_kernel_sum(samples, grid, bandwidth, out);
  } else {
    scalar::gaussian_kernel_sum(samples, grid, bandwidth, out);
  }
}

}  // namespace toxhmm::kernels
