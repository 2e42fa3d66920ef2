#include "listennet/kernels.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace listennet::kernels {

namespace detail {

#if defined(__GLIBC__)
// Activation tensors are a few MB and churn every batch; above glibc's
// default mmap threshold each one becomes an mmap/munmap pair and the page
// faults dwarf the arithmetic. Keep them on the reusable heap instead.
struct AllocTuning {
  AllocTuning() {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
  }
};
const AllocTuning g_alloc_tuning;
#endif

template <class T>
void axpy_scalar(T a, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <class T>
T dot_scalar(const T* x, const T* y, std::size_t n) {
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <class T>
T sum_scalar(const T* x, std::size_t n) {
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

template <class T>
void add_scalar(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

template <class T>
void hadamard_scalar(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] *= x[i];
}

template <class T>
void scale_scalar(T a, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] *= a;
}

template <class T>
void axpy_taps_scalar(const T* x, T* y, const T* w, const std::ptrdiff_t* offsets, int taps,
                      std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    T acc = y[j];
    for (int t = 0; t < taps; ++t) acc += w[t] * x[offsets[t] + static_cast<std::ptrdiff_t>(j)];
    y[j] = acc;
  }
}

template <class T>
void axpy_taps_adj_scalar(const T* x, T* y, const T* w, const std::ptrdiff_t* offsets, int taps,
                          std::size_t n) {
  for (int t = 0; t < taps; ++t) {
    T* dst = y + offsets[t];
    const T wt = w[t];
    for (std::size_t j = 0; j < n; ++j) dst[j] += wt * x[j];
  }
}

template <class T>
void dot_taps_scalar(const T* x, const T* y, T* acc, const std::ptrdiff_t* offsets, int taps,
                     std::size_t n) {
  for (int t = 0; t < taps; ++t) {
    const T* row = y + offsets[t];
    T a = T(0);
    for (std::size_t j = 0; j < n; ++j) a += x[j] * row[j];
    acc[t] += a;
  }
}

#if LISTENNET_HAVE_AVX2
// Implemented in kernels_avx2.cpp (compiled with -mavx2 -mfma).
void axpy_avx2(float a, const float* x, float* y, std::size_t n);
void axpy_avx2(double a, const double* x, double* y, std::size_t n);
float dot_avx2(const float* x, const float* y, std::size_t n);
double dot_avx2(const double* x, const double* y, std::size_t n);
float sum_avx2(const float* x, std::size_t n);
double sum_avx2(const double* x, std::size_t n);
void add_avx2(const float* x, float* y, std::size_t n);
void add_avx2(const double* x, double* y, std::size_t n);
void hadamard_avx2(const float* x, float* y, std::size_t n);
void hadamard_avx2(const double* x, double* y, std::size_t n);
void scale_avx2(float a, float* y, std::size_t n);
void scale_avx2(double a, double* y, std::size_t n);
void axpy_taps_avx2(const float* x, float* y, const float* w, const std::ptrdiff_t* offsets,
                    int taps, std::size_t n);
void axpy_taps_avx2(const double* x, double* y, const double* w, const std::ptrdiff_t* offsets,
                    int taps, std::size_t n);
void axpy_taps_adj_avx2(const float* x, float* y, const float* w, const std::ptrdiff_t* offsets,
                        int taps, std::size_t n);
void axpy_taps_adj_avx2(const double* x, double* y, const double* w, const std::ptrdiff_t* offsets,
                        int taps, std::size_t n);
void dot_taps_avx2(const float* x, const float* y, float* acc, const std::ptrdiff_t* offsets,
                   int taps, std::size_t n);
void dot_taps_avx2(const double* x, const double* y, double* acc, const std::ptrdiff_t* offsets,
                   int taps, std::size_t n);
#endif

struct DispatchTable {
  void (*axpy_f)(float, const float*, float*, std::size_t);
  void (*axpy_d)(double, const double*, double*, std::size_t);
  float (*dot_f)(const float*, const float*, std::size_t);
  double (*dot_d)(const double*, const double*, std::size_t);
  float (*sum_f)(const float*, std::size_t);
  double (*sum_d)(const double*, std::size_t);
  void (*add_f)(const float*, float*, std::size_t);
  void (*add_d)(const double*, double*, std::size_t);
  void (*had_f)(const float*, float*, std::size_t);
  void (*had_d)(const double*, double*, std::size_t);
  void (*scale_f)(float, float*, std::size_t);
  void (*scale_d)(double, double*, std::size_t);
  void (*axpy_taps_f)(const float*, float*, const float*, const std::ptrdiff_t*, int, std::size_t);
  void (*axpy_taps_d)(const double*, double*, const double*, const std::ptrdiff_t*, int, std::size_t);
  void (*axpy_taps_adj_f)(const float*, float*, const float*, const std::ptrdiff_t*, int, std::size_t);
  void (*axpy_taps_adj_d)(const double*, double*, const double*, const std::ptrdiff_t*, int, std::size_t);
  void (*dot_taps_f)(const float*, const float*, float*, const std::ptrdiff_t*, int, std::size_t);
  void (*dot_taps_d)(const double*, const double*, double*, const std::ptrdiff_t*, int, std::size_t);
  const char* name;
};

constexpr DispatchTable kScalarTable = {axpy_scalar<float>,
                                        axpy_scalar<double>,
                                        dot_scalar<float>,
                                        dot_scalar<double>,
                                        sum_scalar<float>,
                                        sum_scalar<double>,
                                        add_scalar<float>,
                                        add_scalar<double>,
                                        hadamard_scalar<float>,
                                        hadamard_scalar<double>,
                                        scale_scalar<float>,
                                        scale_scalar<double>,
                                        axpy_taps_scalar<float>,
                                        axpy_taps_scalar<double>,
                                        axpy_taps_adj_scalar<float>,
                                        axpy_taps_adj_scalar<double>,
                                        dot_taps_scalar<float>,
                                        dot_taps_scalar<double>,
                                        "scalar"};

#if LISTENNET_HAVE_AVX2
constexpr DispatchTable kAvx2Table = {
    static_cast<void (*)(float, const float*, float*, std::size_t)>(axpy_avx2),
    static_cast<void (*)(double, const double*, double*, std::size_t)>(axpy_avx2),
    dot_avx2,
    static_cast<double (*)(const double*, const double*, std::size_t)>(dot_avx2),
    sum_avx2,
    static_cast<double (*)(const double*, std::size_t)>(sum_avx2),
    static_cast<void (*)(const float*, float*, std::size_t)>(add_avx2),
    static_cast<void (*)(const double*, double*, std::size_t)>(add_avx2),
    static_cast<void (*)(const float*, float*, std::size_t)>(hadamard_avx2),
    static_cast<void (*)(const double*, double*, std::size_t)>(hadamard_avx2),
    static_cast<void (*)(float, float*, std::size_t)>(scale_avx2),
    static_cast<void (*)(double, double*, std::size_t)>(scale_avx2),
    static_cast<void (*)(const float*, float*, const float*, const std::ptrdiff_t*, int,
                         std::size_t)>(axpy_taps_avx2),
    static_cast<void (*)(const double*, double*, const double*, const std::ptrdiff_t*, int,
                         std::size_t)>(axpy_taps_avx2),
    static_cast<void (*)(const float*, float*, const float*, const std::ptrdiff_t*, int,
                         std::size_t)>(axpy_taps_adj_avx2),
    static_cast<void (*)(const double*, double*, const double*, const std::ptrdiff_t*, int,
                         std::size_t)>(axpy_taps_adj_avx2),
    static_cast<void (*)(const float*, const float*, float*, const std::ptrdiff_t*, int,
                         std::size_t)>(dot_taps_avx2),
    static_cast<void (*)(const double*, const double*, double*, const std::ptrdiff_t*, int,
                         std::size_t)>(dot_taps_avx2),
    "avx2"};
#endif

bool cpu_has_avx2() {
#if LISTENNET_HAVE_AVX2
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const DispatchTable* best_table() {
#if LISTENNET_HAVE_AVX2
  if (cpu_has_avx2()) return &kAvx2Table;
#endif
  return &kScalarTable;
}

const DispatchTable* g_active = best_table();

}  // namespace detail

void axpy(float a, const float* x, float* y, std::size_t n) { detail::g_active->axpy_f(a, x, y, n); }
void axpy(double a, const double* x, double* y, std::size_t n) { detail::g_active->axpy_d(a, x, y, n); }
float dot(const float* x, const float* y, std::size_t n) { return detail::g_active->dot_f(x, y, n); }
double dot(const double* x, const double* y, std::size_t n) { return detail::g_active->dot_d(x, y, n); }
float sum(const float* x, std::size_t n) { return detail::g_active->sum_f(x, n); }
double sum(const double* x, std::size_t n) { return detail::g_active->sum_d(x, n); }
void add(const float* x, float* y, std::size_t n) { detail::g_active->add_f(x, y, n); }
void add(const double* x, double* y, std::size_t n) { detail::g_active->add_d(x, y, n); }
void hadamard(const float* x, float* y, std::size_t n) { detail::g_active->had_f(x, y, n); }
void hadamard(const double* x, double* y, std::size_t n) { detail::g_active->had_d(x, y, n); }
void scale(float a, float* y, std::size_t n) { detail::g_active->scale_f(a, y, n); }
void scale(double a, double* y, std::size_t n) { detail::g_active->scale_d(a, y, n); }
void axpy_taps(const float* x, float* y, const float* w, const std::ptrdiff_t* offsets, int taps,
               std::size_t n) {
  detail::g_active->axpy_taps_f(x, y, w, offsets, taps, n);
}
void axpy_taps(const double* x, double* y, const double* w, const std::ptrdiff_t* offsets,
               int taps, std::size_t n) {
  detail::g_active->axpy_taps_d(x, y, w, offsets, taps, n);
}
void axpy_taps_adj(const float* x, float* y, const float* w, const std::ptrdiff_t* offsets,
                   int taps, std::size_t n) {
  detail::g_active->axpy_taps_adj_f(x, y, w, offsets, taps, n);
}
void axpy_taps_adj(const double* x, double* y, const double* w, const std::ptrdiff_t* offsets,
                   int taps, std::size_t n) {
  detail::g_active->axpy_taps_adj_d(x, y, w, offsets, taps, n);
}
void dot_taps(const float* x, const float* y, float* acc, const std::ptrdiff_t* offsets, int taps,
              std::size_t n) {
  detail::g_active->dot_taps_f(x, y, acc, offsets, taps, n);
}
void dot_taps(const double* x, const double* y, double* acc, const std::ptrdiff_t* offsets,
              int taps, std::size_t n) {
  detail::g_active->dot_taps_d(x, y, acc, offsets, taps, n);
}

bool avx2_available() { return detail::cpu_has_avx2(); }

void force_scalar(bool on) {
  detail::g_active = on ? &detail::kScalarTable : detail::best_table();
}

const char* active_backend() { return detail::g_active->name; }

}  // namespace listennet::kernels
