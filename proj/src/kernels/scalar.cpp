// Scalar reference kernels. These define the results; the SIMD variants must
// reproduce them bit for bit. Build with -ffp-contract=off.

#include <bit>
#include <cmath>
#include <cstdint>
#include <vector>

#include "kernels_internal.hpp"
#include "toxhmm/kernels.hpp"

namespace toxhmm::kernels {

double exp_nonpositive(double x) noexcept {
  using namespace detail;
  if (!(x >= kExpMin)) return 0.0;
  const double n = std::nearbyint(x * kLog2e);
  const double r = (x - n * kLn2Hi) - n * kLn2Lo;
  double p = kExpPoly[0];
  for (std::size_t c = 1; c < std::size(kExpPoly); ++c) p = p * r + kExpPoly[c];
  const auto bits = static_cast<std::uint64_t>(static_cast<std::int64_t>(n) + 1023) << 52;
  return p * std::bit_cast<double>(bits);
}

namespace scalar {

void estep(const ModelView& m, const PackedSequences& seqs, EStepResult& out) {
  const std::size_t I = m.n_states;
  const std::size_t J = m.n_symbols;
  const std::size_t N = seqs.size();
  out.reset(I, J, N);

  const double* A = m.transition.data();
  const double* E = m.emission.data();

  // Lane-striped accumulators: cell-major, kLanes consecutive lanes.
  std::vector<double> acc_init(I * kLanes, 0.0);
  std::vector<double> acc_trans(I * I * kLanes, 0.0);
  std::vector<double> acc_emit(I * J * kLanes, 0.0);

  const std::size_t max_t = seqs.max_length();
  std::vector<double> alpha(max_t * I);
  std::vector<double> scale(max_t);
  std::vector<double> beta(I), beta_next(I), w(I);

  for (std::size_t n = 0; n < N; ++n) {
    const std::size_t lane = n % kLanes;
    const std::int32_t* x = seqs.symbols.data() + seqs.offsets[n];
    const std::size_t T = seqs.length(n);

    // Forward, normalized at every step.
    {
      double* a = alpha.data();
      for (std::size_t k = 0; k < I; ++k) a[k] = m.initial[k] * E[k * J + x[0]];
      double c = a[0];
      for (std::size_t k = 1; k < I; ++k) c = c + a[k];
      scale[0] = c;
      for (std::size_t k = 0; k < I; ++k) a[k] = a[k] / c;
    }
    for (std::size_t t = 1; t < T; ++t) {
      const double* prev = alpha.data() + (t - 1) * I;
      double* a = alpha.data() + t * I;
      for (std::size_t k = 0; k < I; ++k) {
        double s = prev[0] * A[k];
        for (std::size_t i = 1; i < I; ++i) s = s + prev[i] * A[i * I + k];
        a[k] = s * E[k * J + x[t]];
      }
      double c = a[0];
      for (std::size_t k = 1; k < I; ++k) c = c + a[k];
      scale[t] = c;
      for (std::size_t k = 0; k < I; ++k) a[k] = a[k] / c;
    }
    out.log_likelihood[n] = detail::sum_log(scale.data(), 1, T);

    // Backward, accumulating xi and gamma as we go.
    for (std::size_t i = 0; i < I; ++i) beta[i] = 1.0;
    for (std::size_t t = T; t-- > 0;) {
      const double* a = alpha.data() + t * I;
      if (t + 1 < T) {
        const std::int32_t xn = x[t + 1];
        const double cn = scale[t + 1];
        for (std::size_t k = 0; k < I; ++k) w[k] = (E[k * J + xn] * beta[k]) / cn;
        for (std::size_t i = 0; i < I; ++i) {
          double s = A[i * I] * w[0];
          for (std::size_t k = 1; k < I; ++k) s = s + A[i * I + k] * w[k];
          beta_next[i] = s;
          for (std::size_t k = 0; k < I; ++k) {
            acc_trans[(i * I + k) * kLanes + lane] += (a[i] * A[i * I + k]) * w[k];
          }
        }
        beta.swap(beta_next);
      }
      for (std::size_t i = 0; i < I; ++i) {
        const double g = a[i] * beta[i];
        acc_emit[(i * J + static_cast<std::size_t>(x[t])) * kLanes + lane] += g;
        if (t == 0) acc_init[i * kLanes + lane] += g;
      }
    }
  }

  auto fold = [](const std::vector<double>& acc, std::vector<double>& dst) {
    for (std::size_t c = 0; c < dst.size(); ++c) {
      const double* l = acc.data() + c * kLanes;
      dst[c] = ((l[0] + l[1]) + l[2]) + l[3];
    }
  };
  fold(acc_init, out.initial);
  fold(acc_trans, out.transition);
  fold(acc_emit, out.emission);
}

void gaussian_kernel_sum(std::span<const double> samples, std::span<const double> grid,
                         double bandwidth, std::span<double> out) {
  const double inv_h = 1.0 / bandwidth;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double y = grid[g];
    double acc[kLanes] = {0.0, 0.0, 0.0, 0.0};
    for (std::size_t s = 0; s < samples.size(); ++s) {
      const double z = (y - samples[s]) * inv_h;
      acc[s % kLanes] += exp_nonpositive((z * z) * -0.5);
    }
    out[g] = ((acc[0] + acc[1]) + acc[2]) + acc[3];
  }
}

}  // namespace scalar
}  // namespace toxhmm::kernels
