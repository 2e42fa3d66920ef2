// AVX2+FMA kernel variants. This translation unit is the only one compiled
// with -mavx2 -mfma; callers reach it through the dispatch table in
// kernels.cpp, which checks CPU support at runtime.

#if LISTENNET_HAVE_AVX2

#include <immintrin.h>

#include <cstddef>

namespace listennet::kernels::detail {

namespace {

inline float hsum256(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_hadd_ps(lo, lo);
  lo = _mm_hadd_ps(lo, lo);
  return _mm_cvtss_f32(lo);
}

inline double hsum256d(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(lo) + _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
}

}  // namespace

void axpy_avx2(float a, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256 vy = _mm256_loadu_ps(y + i);
    vy = _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), vy);
    _mm256_storeu_ps(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

float dot_avx2(const float* x, const float* y, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i + 8), _mm256_loadu_ps(y + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc0);
  }
  float r = hsum256(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) r += x[i] * y[i];
  return r;
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  }
  double r = hsum256d(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) r += x[i] * y[i];
  return r;
}

float sum_avx2(const float* x, std::size_t n) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
  float r = hsum256(acc);
  for (; i < n; ++i) r += x[i];
  return r;
}

double sum_avx2(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double r = hsum256d(acc);
  for (; i < n; ++i) r += x[i];
  return r;
}

void add_avx2(const float* x, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), _mm256_loadu_ps(x + i)));
  }
  for (; i < n; ++i) y[i] += x[i];
}

void add_avx2(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) y[i] += x[i];
}

void hadamard_avx2(const float* x, float* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_loadu_ps(y + i), _mm256_loadu_ps(x + i)));
  }
  for (; i < n; ++i) y[i] *= x[i];
}

void hadamard_avx2(const double* x, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) y[i] *= x[i];
}

void scale_avx2(float a, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_mul_ps(va, _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] *= a;
}

void scale_avx2(double a, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_mul_pd(va, _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] *= a;
}

// y[j] += sum_t w[t] * x[offsets[t] + j]; two independent FMA chains over a
// 16-wide block of y, loaded and stored once.
void axpy_taps_avx2(const float* x, float* y, const float* w, const std::ptrdiff_t* offsets,
                    int taps, std::size_t n) {
  std::size_t j = 0;
  for (; j + 16 <= n; j += 16) {
    __m256 acc0 = _mm256_loadu_ps(y + j);
    __m256 acc1 = _mm256_loadu_ps(y + j + 8);
    for (int t = 0; t < taps; ++t) {
      const __m256 wt = _mm256_set1_ps(w[t]);
      const float* src = x + offsets[t] + static_cast<std::ptrdiff_t>(j);
      acc0 = _mm256_fmadd_ps(wt, _mm256_loadu_ps(src), acc0);
      acc1 = _mm256_fmadd_ps(wt, _mm256_loadu_ps(src + 8), acc1);
    }
    _mm256_storeu_ps(y + j, acc0);
    _mm256_storeu_ps(y + j + 8, acc1);
  }
  for (; j + 8 <= n; j += 8) {
    __m256 acc = _mm256_loadu_ps(y + j);
    for (int t = 0; t < taps; ++t)
      acc = _mm256_fmadd_ps(_mm256_set1_ps(w[t]),
                            _mm256_loadu_ps(x + offsets[t] + static_cast<std::ptrdiff_t>(j)), acc);
    _mm256_storeu_ps(y + j, acc);
  }
  for (; j < n; ++j) {
    float acc = y[j];
    for (int t = 0; t < taps; ++t) acc += w[t] * x[offsets[t] + static_cast<std::ptrdiff_t>(j)];
    y[j] = acc;
  }
}

void axpy_taps_avx2(const double* x, double* y, const double* w, const std::ptrdiff_t* offsets,
                    int taps, std::size_t n) {
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    __m256d acc0 = _mm256_loadu_pd(y + j);
    __m256d acc1 = _mm256_loadu_pd(y + j + 4);
    for (int t = 0; t < taps; ++t) {
      const __m256d wt = _mm256_set1_pd(w[t]);
      const double* src = x + offsets[t] + static_cast<std::ptrdiff_t>(j);
      acc0 = _mm256_fmadd_pd(wt, _mm256_loadu_pd(src), acc0);
      acc1 = _mm256_fmadd_pd(wt, _mm256_loadu_pd(src + 4), acc1);
    }
    _mm256_storeu_pd(y + j, acc0);
    _mm256_storeu_pd(y + j + 4, acc1);
  }
  for (; j + 4 <= n; j += 4) {
    __m256d acc = _mm256_loadu_pd(y + j);
    for (int t = 0; t < taps; ++t)
      acc = _mm256_fmadd_pd(_mm256_set1_pd(w[t]),
                            _mm256_loadu_pd(x + offsets[t] + static_cast<std::ptrdiff_t>(j)), acc);
    _mm256_storeu_pd(y + j, acc);
  }
  for (; j < n; ++j) {
    double acc = y[j];
    for (int t = 0; t < taps; ++t) acc += w[t] * x[offsets[t] + static_cast<std::ptrdiff_t>(j)];
    y[j] = acc;
  }
}

// Taps are processed one at a time and in order: destination regions overlap
// whenever two offsets differ by less than n.
void axpy_taps_adj_avx2(const float* x, float* y, const float* w, const std::ptrdiff_t* offsets,
                        int taps, std::size_t n) {
  for (int t = 0; t < taps; ++t) {
    float* dst = y + offsets[t];
    const __m256 wt = _mm256_set1_ps(w[t]);
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8)
      _mm256_storeu_ps(dst + j,
                       _mm256_fmadd_ps(wt, _mm256_loadu_ps(x + j), _mm256_loadu_ps(dst + j)));
    for (; j < n; ++j) dst[j] += w[t] * x[j];
  }
}

void axpy_taps_adj_avx2(const double* x, double* y, const double* w, const std::ptrdiff_t* offsets,
                        int taps, std::size_t n) {
  for (int t = 0; t < taps; ++t) {
    double* dst = y + offsets[t];
    const __m256d wt = _mm256_set1_pd(w[t]);
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4)
      _mm256_storeu_pd(dst + j,
                       _mm256_fmadd_pd(wt, _mm256_loadu_pd(x + j), _mm256_loadu_pd(dst + j)));
    for (; j < n; ++j) dst[j] += w[t] * x[j];
  }
}

void dot_taps_avx2(const float* x, const float* y, float* acc, const std::ptrdiff_t* offsets,
                   int taps, std::size_t n) {
  for (int t = 0; t < taps; ++t) {
    const float* row = y + offsets[t];
    __m256 vacc = _mm256_setzero_ps();
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8)
      vacc = _mm256_fmadd_ps(_mm256_loadu_ps(x + j), _mm256_loadu_ps(row + j), vacc);
    float a = hsum256(vacc);
    for (; j < n; ++j) a += x[j] * row[j];
    acc[t] += a;
  }
}

void dot_taps_avx2(const double* x, const double* y, double* acc, const std::ptrdiff_t* offsets,
                   int taps, std::size_t n) {
  for (int t = 0; t < taps; ++t) {
    const double* row = y + offsets[t];
    __m256d vacc = _mm256_setzero_pd();
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4)
      vacc = _mm256_fmadd_pd(_mm256_loadu_pd(x + j), _mm256_loadu_pd(row + j), vacc);
    double a = hsum256d(vacc);
    for (; j < n; ++j) a += x[j] * row[j];
    acc[t] += a;
  }
}

}  // namespace listennet::kernels::detail

#endif  // LISTENNET_HAVE_AVX2
