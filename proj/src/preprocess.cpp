#include "listennet/preprocess.hpp"

#include <cmath>
#include <cstdio>

namespace listennet {

Recording zscore_normalize(const Recording& rec) {
  if (rec.samples < 2) throw DataError("zscore needs at least 2 samples per channel");
  Recording out = rec;
  const long long s_count = rec.samples;
  for (int c = 0; c < rec.channels; ++c) {
    double mean = 0.0;
    for (long long s = 0; s < s_count; ++s) mean += rec.at(c, s);
    mean /= static_cast<double>(s_count);
    double var = 0.0;
    for (long long s = 0; s < s_count; ++s) {
      const double d = rec.at(c, s) - mean;
      var += d * d;
    }
    var /= static_cast<double>(s_count);
    double sd = std::sqrt(var);
    if (sd < 1e-8) {
      std::fprintf(stderr, "warning: constant channel %d in %s/%s, normalized to zeros\n", c,
                   rec.subject_id.c_str(), rec.trial_id.c_str());
      sd = 1e-8;
    }
    for (long long s = 0; s < s_count; ++s)
      out.at(c, s) = static_cast<float>((rec.at(c, s) - mean) / sd);
  }
  return out;
}

std::vector<DecisionWindow> make_windows(const Recording& rec, int win_len, int stride) {
  if (stride < 1) throw ConfigError("window stride must be >= 1");
  std::vector<DecisionWindow> out;
  if (win_len > rec.samples) {
    std::fprintf(stderr, "warning: window length %d exceeds %lld samples in %s/%s\n", win_len,
                 rec.samples, rec.subject_id.c_str(), rec.trial_id.c_str());
    return out;
  }
  for (long long start = 0; start + win_len <= rec.samples; start += stride) {
    DecisionWindow w;
    w.channels = rec.channels;
    w.length = win_len;
    w.label = rec.label;
    w.subject_id = rec.subject_id;
    w.trial_id = rec.trial_id;
    w.start_sample = start;
    w.data.resize(static_cast<std::size_t>(rec.channels) * win_len);
    for (int c = 0; c < rec.channels; ++c)
      for (int t = 0; t < win_len; ++t)
        w.data[static_cast<std::size_t>(c) * win_len + t] = rec.at(c, start + t);
    out.push_back(std::move(w));
  }
  return out;
}

void symmetric_eigen(const std::vector<double>& a, int n, std::vector<double>& eigenvalues,
                     std::vector<double>& v) {
  std::vector<double> m = a;
  v.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * n + i] = 1.0;
  auto at = [n](std::vector<double>& x, int r, int c) -> double& {
    return x[static_cast<std::size_t>(r) * n + c];
  };
  const int max_sweeps = 64;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += at(m, p, q) * at(m, p, q);
    if (off < 1e-26) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = at(m, p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double app = at(m, p, p), aqq = at(m, q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double mkp = at(m, k, p), mkq = at(m, k, q);
          at(m, k, p) = c * mkp - s * mkq;
          at(m, k, q) = s * mkp + c * mkq;
        }
        for (int k = 0; k < n; ++k) {
          const double mpk = at(m, p, k), mqk = at(m, q, k);
          at(m, p, k) = c * mpk - s * mqk;
          at(m, q, k) = s * mpk + c * mqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = at(v, k, p), vkq = at(v, k, q);
          at(v, k, p) = c * vkp - s * vkq;
          at(v, k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  eigenvalues.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) eigenvalues[static_cast<std::size_t>(i)] = at(m, i, i);
}

AlignmentMatrix compute_alignment(const std::vector<DecisionWindow>& windows,
                                  const std::string& scope_id) {
  if (windows.empty()) throw DataError("compute_alignment needs at least one window");
  const int c_count = windows.front().channels;
  std::vector<double> mean_cov(static_cast<std::size_t>(c_count) * c_count, 0.0);
  for (const auto& w : windows) {
    if (w.channels != c_count) throw ShapeError("mixed channel counts in alignment scope");
    for (int r = 0; r < c_count; ++r) {
      for (int c = r; c < c_count; ++c) {
        double acc = 0.0;
        const float* pr = w.data.data() + static_cast<std::size_t>(r) * w.length;
        const float* pc = w.data.data() + static_cast<std::size_t>(c) * w.length;
        for (int t = 0; t < w.length; ++t) acc += static_cast<double>(pr[t]) * pc[t];
        if (!std::isfinite(acc)) throw DataError("non-finite data in alignment scope " + scope_id);
        const double val = acc / w.length;
        mean_cov[static_cast<std::size_t>(r) * c_count + c] += val;
        mean_cov[static_cast<std::size_t>(c) * c_count + r] =
            mean_cov[static_cast<std::size_t>(r) * c_count + c];
      }
    }
  }
  const double inv_n = 1.0 / static_cast<double>(windows.size());
  for (auto& x : mean_cov) x *= inv_n;

  std::vector<double> eigenvalues, vecs;
  symmetric_eigen(mean_cov, c_count, eigenvalues, vecs);
  bool floored = false;
  for (auto& ev : eigenvalues) {
    if (ev < 1e-10) {
      ev = 1e-10;
      floored = true;
    }
  }
  if (floored)
    std::fprintf(stderr, "warning: rank-deficient covariance in scope %s, eigenvalue floor engaged\n",
                 scope_id.c_str());

  // M = V diag(1/sqrt(lambda)) V^T
  AlignmentMatrix out;
  out.scope_id = scope_id;
  out.channels = c_count;
  out.m.assign(static_cast<std::size_t>(c_count) * c_count, 0.0);
  for (int r = 0; r < c_count; ++r) {
    for (int c = r; c < c_count; ++c) {
      double acc = 0.0;
      for (int k = 0; k < c_count; ++k)
        acc += vecs[static_cast<std::size_t>(r) * c_count + k] *
               vecs[static_cast<std::size_t>(c) * c_count + k] /
               std::sqrt(eigenvalues[static_cast<std::size_t>(k)]);
      out.m[static_cast<std::size_t>(r) * c_count + c] = acc;
      out.m[static_cast<std::size_t>(c) * c_count + r] = acc;
    }
  }
  return out;
}

DecisionWindow apply_alignment(const DecisionWindow& window, const AlignmentMatrix& matrix) {
  if (window.channels != matrix.channels)
    throw ShapeError("alignment matrix channels " + std::to_string(matrix.channels) +
                     " != window channels " + std::to_string(window.channels));
  DecisionWindow out = window;
  const int c_count = window.channels, t_count = window.length;
  for (int r = 0; r < c_count; ++r) {
    for (int t = 0; t < t_count; ++t) {
      double acc = 0.0;
      for (int k = 0; k < c_count; ++k)
        acc += matrix.at(r, k) * window.at(k, t);
      out.data[static_cast<std::size_t>(r) * t_count + t] = static_cast<float>(acc);
    }
  }
  return out;
}

}  // namespace listennet
