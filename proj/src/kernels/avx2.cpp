// AVX2 kernels. Four sequences (or four samples) ride in the four double
// lanes; inactive lanes are masked to +0.0 before every accumulation so the
// per-lane sums match the scalar reference exactly. No FMA: contraction would
// change rounding.

#include "toxhmm/kernels.hpp"

#if defined(TOXHMM_HAVE_AVX2) && defined(__AVX2__)

#include <immintrin.h>

#include <cstdint>
#include <vector>

#include "kernels_internal.hpp"

namespace toxhmm::kernels::avx2 {

namespace {

inline __m256d exp_nonpositive_pd(__m256d x) {
  using namespace detail;
  const __m256d valid = _mm256_cmp_pd(x, _mm256_set1_pd(kExpMin), _CMP_GE_OQ);
  const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(kLog2e)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  const __m256d r = _mm256_sub_pd(_mm256_sub_pd(x, _mm256_mul_pd(n, _mm256_set1_pd(kLn2Hi))),
                                  _mm256_mul_pd(n, _mm256_set1_pd(kLn2Lo)));
  __m256d p = _mm256_set1_pd(kExpPoly[0]);
  for (std::size_t c = 1; c < std::size(kExpPoly); ++c) {
    p = _mm256_add_pd(_mm256_mul_pd(p, r), _mm256_set1_pd(kExpPoly[c]));
  }
  // n is integral and small, so n + 1.5 * 2^52 carries it in the low
  // mantissa bits.
  const __m256d magic = _mm256_set1_pd(0x1.8p52);
  const __m256i ni =
      _mm256_sub_epi64(_mm256_castpd_si256(_mm256_add_pd(n, magic)), _mm256_castpd_si256(magic));
  const __m256i bits = _mm256_slli_epi64(_mm256_add_epi64(ni, _mm256_set1_epi64x(1023)), 52);
  const __m256d result = _mm256_mul_pd(p, _mm256_castsi256_pd(bits));
  return _mm256_and_pd(result, valid);
}

inline __m256d masked(__m256d v, __m256d mask) { return _mm256_and_pd(v, mask); }

}  // namespace

void estep(const ModelView& m, const PackedSequences& seqs, EStepResult& out) {
  const std::size_t I = m.n_states;
  const std::size_t J = m.n_symbols;
  const std::size_t N = seqs.size();
  out.reset(I, J, N);

  const double* A = m.transition.data();
  const double* E = m.emission.data();
  const __m256d one = _mm256_set1_pd(1.0);

  std::vector<__m256d> acc_init(I, _mm256_setzero_pd());
  std::vector<__m256d> acc_trans(I * I, _mm256_setzero_pd());
  std::vector<__m256d> acc_emit(I * J, _mm256_setzero_pd());

  const std::size_t max_t = seqs.max_length();
  std::vector<__m256d> alpha(max_t * I);
  std::vector<__m256d> scale(max_t);
  std::vector<__m256i> sym(max_t);
  std::vector<__m256d> a_tmp(I), beta(I), beta_next(I), w(I);

  for (std::size_t base = 0; base < N; base += kLanes) {
    // Gather this group's symbols into [t][lane], padding with symbol 0.
    alignas(32) std::int64_t len[kLanes] = {0, 0, 0, 0};
    std::size_t group_t = 0;
    for (std::size_t l = 0; l < kLanes && base + l < N; ++l) {
      len[l] = static_cast<std::int64_t>(seqs.length(base + l));
      group_t = std::max(group_t, seqs.length(base + l));
    }
    for (std::size_t t = 0; t < group_t; ++t) {
      alignas(32) std::int64_t s[kLanes] = {0, 0, 0, 0};
      for (std::size_t l = 0; l < kLanes && base + l < N; ++l) {
        if (static_cast<std::int64_t>(t) < len[l]) s[l] = seqs.symbols[seqs.offsets[base + l] + t];
      }
      sym[t] = _mm256_load_si256(reinterpret_cast<const __m256i*>(s));
    }
    const __m256i lengths = _mm256_load_si256(reinterpret_cast<const __m256i*>(len));
    auto lane_mask = [&](std::size_t t) {
      // t < length, per lane
      return _mm256_castsi256_pd(
          _mm256_cmpgt_epi64(lengths, _mm256_set1_epi64x(static_cast<std::int64_t>(t))));
    };

    // Forward.
    for (std::size_t t = 0; t < group_t; ++t) {
      const __m256d active = lane_mask(t);
      __m256d* a = alpha.data() + t * I;
      if (t == 0) {
        for (std::size_t k = 0; k < I; ++k) {
          a_tmp[k] = _mm256_mul_pd(_mm256_set1_pd(m.initial[k]),
                                   _mm256_i64gather_pd(E + k * J, sym[0], 8));
        }
      } else {
        const __m256d* prev = alpha.data() + (t - 1) * I;
        for (std::size_t k = 0; k < I; ++k) {
          __m256d s = _mm256_mul_pd(prev[0], _mm256_set1_pd(A[k]));
          for (std::size_t i = 1; i < I; ++i) {
            s = _mm256_add_pd(s, _mm256_mul_pd(prev[i], _mm256_set1_pd(A[i * I + k])));
          }
          a_tmp[k] = _mm256_mul_pd(s, _mm256_i64gather_pd(E + k * J, sym[t], 8));
        }
      }
      __m256d c = a_tmp[0];
      for (std::size_t k = 1; k < I; ++k) c = _mm256_add_pd(c, a_tmp[k]);
      c = _mm256_blendv_pd(one, c, active);
      scale[t] = c;
      for (std::size_t k = 0; k < I; ++k) a[k] = _mm256_div_pd(a_tmp[k], c);
    }
    {
      alignas(32) double sc[kLanes];
      std::vector<double> lane_scale(group_t * kLanes);
      for (std::size_t t = 0; t < group_t; ++t) {
        _mm256_store_pd(sc, scale[t]);
        for (std::size_t l = 0; l < kLanes; ++l) lane_scale[t * kLanes + l] = sc[l];
      }
      for (std::size_t l = 0; l < kLanes && base + l < N; ++l) {
        out.log_likelihood[base + l] = detail::sum_log(lane_scale.data() + l, kLanes,
                                                       static_cast<std::size_t>(len[l]));
      }
    }

    // Backward.
    for (std::size_t i = 0; i < I; ++i) beta[i] = one;
    for (std::size_t t = group_t; t-- > 0;) {
      const __m256d active = lane_mask(t);
      const __m256d* a = alpha.data() + t * I;
      if (t + 1 < group_t) {
        const __m256d inner = lane_mask(t + 1);
        const __m256d cn = _mm256_blendv_pd(one, scale[t + 1], inner);
        for (std::size_t k = 0; k < I; ++k) {
          w[k] = _mm256_div_pd(_mm256_mul_pd(_mm256_i64gather_pd(E + k * J, sym[t + 1], 8), beta[k]),
                               cn);
        }
        for (std::size_t i = 0; i < I; ++i) {
          __m256d s = _mm256_mul_pd(_mm256_set1_pd(A[i * I]), w[0]);
          for (std::size_t k = 1; k < I; ++k) {
            s = _mm256_add_pd(s, _mm256_mul_pd(_mm256_set1_pd(A[i * I + k]), w[k]));
          }
          beta_next[i] = _mm256_blendv_pd(beta[i], s, inner);
          for (std::size_t k = 0; k < I; ++k) {
            const __m256d xi = _mm256_mul_pd(_mm256_mul_pd(a[i], _mm256_set1_pd(A[i * I + k])), w[k]);
            acc_trans[i * I + k] = _mm256_add_pd(acc_trans[i * I + k], masked(xi, inner));
          }
        }
        beta.swap(beta_next);
      }
      for (std::size_t i = 0; i < I; ++i) {
        const __m256d g = masked(_mm256_mul_pd(a[i], beta[i]), active);
        for (std::size_t j = 0; j < J; ++j) {
          const __m256d is_j = _mm256_castsi256_pd(
              _mm256_cmpeq_epi64(sym[t], _mm256_set1_epi64x(static_cast<std::int64_t>(j))));
          acc_emit[i * J + j] = _mm256_add_pd(acc_emit[i * J + j], masked(g, is_j));
        }
        if (t == 0) acc_init[i] = _mm256_add_pd(acc_init[i], g);
      }
    }
  }

  auto fold = [](const std::vector<__m256d>& acc, std::vector<double>& dst) {
    alignas(32) double l[kLanes];
    for (std::size_t c = 0; c < dst.size(); ++c) {
      _mm256_store_pd(l, acc[c]);
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
  const std::size_t n = samples.size();
  const std::size_t full = n - n % kLanes;
  const __m256d vinv = _mm256_set1_pd(inv_h);
  const __m256d half = _mm256_set1_pd(-0.5);

  alignas(32) double tail[kLanes] = {0.0, 0.0, 0.0, 0.0};
  alignas(32) std::int64_t tail_mask_bits[kLanes] = {0, 0, 0, 0};
  for (std::size_t l = 0; l < n - full; ++l) {
    tail[l] = samples[full + l];
    tail_mask_bits[l] = -1;
  }
  const __m256d tail_samples = _mm256_load_pd(tail);
  const __m256d tail_mask =
      _mm256_castsi256_pd(_mm256_load_si256(reinterpret_cast<const __m256i*>(tail_mask_bits)));

  for (std::size_t g = 0; g < grid.size(); ++g) {
    const __m256d y = _mm256_set1_pd(grid[g]);
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t s = 0; s < full; s += kLanes) {
      const __m256d z = _mm256_mul_pd(_mm256_sub_pd(y, _mm256_loadu_pd(samples.data() + s)), vinv);
      acc = _mm256_add_pd(acc, exp_nonpositive_pd(_mm256_mul_pd(_mm256_mul_pd(z, z), half)));
    }
    if (full < n) {
      const __m256d z = _mm256_mul_pd(_mm256_sub_pd(y, tail_samples), vinv);
      const __m256d e = exp_nonpositive_pd(_mm256_mul_pd(_mm256_mul_pd(z, z), half));
      acc = _mm256_add_pd(acc, _mm256_and_pd(e, tail_mask));
    }
    alignas(32) double l[kLanes];
    _mm256_store_pd(l, acc);
    out[g] = ((l[0] + l[1]) + l[2]) + l[3];
  }
}

}  // namespace toxhmm::kernels::avx2

#else

namespace toxhmm::kernels::avx2 {

// Built without AVX2: the entry points exist so that callers and tests link,
// and they are never selected by the dispatcher.
void estep(const ModelView& m, const PackedSequences& seqs, EStepResult& out) {
  scalar::estep(m, seqs, out);
}

void gaussian_kernel_sum(std::span<const double> samples, std::span<const double> grid,
                         double bandwidth, std::span<double> out) {
  scalar::gaussian_kernel_sum(samples, grid, bandwidth, out);
}

}  // namespace toxhmm::kernels::avx2

#endif
