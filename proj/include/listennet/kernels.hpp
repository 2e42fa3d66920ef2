#pragma once

#include <cstddef>

// Data-parallel primitives behind the tensor/layer code. Scalar reference
// kernels always exist; AVX2+FMA variants are selected at runtime when the
// CPU supports them. force_scalar(true) pins the scalar path (used by the
// equivalence tests and available for debugging).
//
// Dispatch is resolved once per toggle, so a fixed platform always runs the
// same kernel with the same summation order and training stays bit-reproducible.

namespace listennet::kernels {

// y[i] += a * x[i]
void axpy(float a, const float* x, float* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);

// sum_i x[i] * y[i]
float dot(const float* x, const float* y, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);

// sum_i x[i]
float sum(const float* x, std::size_t n);
double sum(const double* x, std::size_t n);

// y[i] += x[i]
void add(const float* x, float* y, std::size_t n);
void add(const double* x, double* y, std::size_t n);

// y[i] *= x[i]
void hadamard(const float* x, float* y, std::size_t n);
void hadamard(const double* x, double* y, std::size_t n);

// y[i] *= a
void scale(float a, float* y, std::size_t n);
void scale(double a, double* y, std::size_t n);

// Fused multi-tap primitives for the convolution loops. A tap is one
// (input-depth, kernel-row, kernel-col) offset into x; all taps of one output
// row share a single pass over contiguous output elements:
//   axpy_taps:     y[j]              += sum_t w[t] * x[offsets[t] + j]
//   axpy_taps_adj: y[offsets[t] + j] += w[t] * x[j]   (adjoint scatter,
//                  taps processed in order because regions may overlap)
//   dot_taps:      acc[t]            += sum_j x[j] * y[offsets[t] + j]
void axpy_taps(const float* x, float* y, const float* w, const std::ptrdiff_t* offsets, int taps,
               std::size_t n);
void axpy_taps(const double* x, double* y, const double* w, const std::ptrdiff_t* offsets,
               int taps, std::size_t n);
void axpy_taps_adj(const float* x, float* y, const float* w, const std::ptrdiff_t* offsets,
                   int taps, std::size_t n);
void axpy_taps_adj(const double* x, double* y, const double* w, const std::ptrdiff_t* offsets,
                   int taps, std::size_t n);
void dot_taps(const float* x, const float* y, float* acc, const std::ptrdiff_t* offsets, int taps,
              std::size_t n);
void dot_taps(const double* x, const double* y, double* acc, const std::ptrdiff_t* offsets,
              int taps, std::size_t n);

bool avx2_available();
void force_scalar(bool on);
const char* active_backend();  // "avx2" or "scalar"

}  // namespace listennet::kernels
