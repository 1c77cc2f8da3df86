#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "volpose/error.hpp"
#include "volpose/geometry.hpp"

namespace volpose {

// Single-channel dense map, row-major. Coordinates are (row, col).
struct Heatmap2D {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Heatmap2D() = default;
  Heatmap2D(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

struct Heatmap1D {
  std::vector<double> data;

  Heatmap1D() = default;
  explicit Heatmap1D(std::size_t n) : data(n, 0.0) {}
  std::size_t size() const { return data.size(); }
};

struct Peak {
  Vec2 position = Vec2::Zero();  // (row, col), sub-cell
  double confidence = 0.0;
};

struct Peak1D {
  double position = 0.0;
  double confidence = 0.0;
};

struct HeatmapDefaults {
  static constexpr double sigma = 2.5;
  static constexpr double temperature = 0.05;
  static constexpr int k = 10;
  static constexpr int nms_radius = 3;
  static constexpr double threshold = 0.3;
};

inline Heatmap2D channel_of(const PlaneFeature& plane, int channel) {
  Heatmap2D h(plane.rows, plane.cols);
  for (int r = 0; r < plane.rows; ++r)
    for (int c = 0; c < plane.cols; ++c) h.at(r, c) = plane.at(r, c, channel);
  return h;
}

inline Heatmap2D render_gaussian(int rows, int cols, const Vec2& center, double sigma) {
  if (!(sigma > 0.0)) throw Error(ErrorKind::NonPositiveSigma, "gaussian sigma must be positive");
  Heatmap2D h(rows, cols);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const double dr = r - center.x(), dc = c - center.y();
      h.at(r, c) = std::exp(-(dr * dr + dc * dc) * inv);
    }
  return h;
}

inline Heatmap1D render_gaussian_1d(int length, double center, double sigma) {
  if (!(sigma > 0.0)) throw Error(ErrorKind::NonPositiveSigma, "gaussian sigma must be positive");
  Heatmap1D h(static_cast<std::size_t>(length));
  for (int i = 0; i < length; ++i) {
    const double d = i - center;
    h.data[i] = std::exp(-d * d / (2.0 * sigma * sigma));
  }
  return h;
}

// Max-composites amplitude * gaussian into one channel of `plane`, evaluated
// only within `radius_sigmas` standard deviations of the center.
inline void splat_gaussian(PlaneFeature& plane, int channel, const Vec2& center, double sigma,
                           double amplitude = 1.0, double radius_sigmas = 5.0) {
  if (!(sigma > 0.0)) throw Error(ErrorKind::NonPositiveSigma, "gaussian sigma must be positive");
  if (!center.allFinite()) return;
  const double reach = radius_sigmas * sigma;
  const int r0 = std::max(0, static_cast<int>(std::floor(center.x() - reach)));
  const int r1 = std::min(plane.rows - 1, static_cast<int>(std::ceil(center.x() + reach)));
  const int c0 = std::max(0, static_cast<int>(std::floor(center.y() - reach)));
  const int c1 = std::min(plane.cols - 1, static_cast<int>(std::ceil(center.y() + reach)));
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c) {
      const double dr = r - center.x(), dc = c - center.y();
      const double v = amplitude * std::exp(-(dr * dr + dc * dc) * inv);
      double& cell = plane.at(r, c, channel);
      cell = std::max(cell, v);
    }
}

// Softmax terms below exp(-60) are skipped; they are far under one ulp of the
// normalizer, which is at least 1.
inline constexpr double kSoftmaxCutoff = -60.0;

// position = sum_p p * softmax(h / temperature)[p]; confidence = max cell.
inline Peak soft_argmax(const Heatmap2D& h, double temperature = HeatmapDefaults::temperature) {
  const double peak = h.data.empty() ? 0.0 : *std::max_element(h.data.begin(), h.data.end());
  if (!(peak > 0.0)) throw Error(ErrorKind::AllZeroHeatmap, "heatmap has no positive cell");
  double wsum = 0.0, sr = 0.0, sc = 0.0;
  for (int r = 0; r < h.rows; ++r)
    for (int c = 0; c < h.cols; ++c) {
      const double e = (h.at(r, c) - peak) / temperature;
      if (e < kSoftmaxCutoff) continue;
      const double w = std::exp(e);
      wsum += w;
      sr += w * r;
      sc += w * c;
    }
  return {Vec2(sr / wsum, sc / wsum), peak};
}

inline Peak1D peak_1d(const Heatmap1D& h, double temperature = HeatmapDefaults::temperature) {
  const double peak = h.data.empty() ? 0.0 : *std::max_element(h.data.begin(), h.data.end());
  if (!(peak > 0.0)) throw Error(ErrorKind::AllZeroHeatmap, "1D heatmap has no positive cell");
  double wsum = 0.0, s = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double e = (h.data[i] - peak) / temperature;
    if (e < kSoftmaxCutoff) continue;
    const double w = std::exp(e);
    wsum += w;
    s += w * static_cast<double>(i);
  }
  return {s / wsum, peak};
}

// Greedy non-maximum suppression: repeatedly take the largest remaining cell
// (ties to the lower row-major index), suppress the (2r+1)^2 window around it.
// Cells below `threshold` are never selected.
inline std::vector<Peak> top_k_peaks(const Heatmap2D& h, int k = HeatmapDefaults::k,
                                     int nms_radius = HeatmapDefaults::nms_radius,
                                     double threshold = HeatmapDefaults::threshold) {
  std::vector<Peak> peaks;
  if (k < 1) return peaks;
  std::vector<std::size_t> order(h.data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return h.data[a] > h.data[b]; });
  std::vector<char> suppressed(h.data.size(), 0);
  for (std::size_t idx : order) {
    if (static_cast<int>(peaks.size()) >= k) break;
    const double v = h.data[idx];
    if (v < threshold) break;
    if (suppressed[idx]) continue;
    const int r = static_cast<int>(idx / h.cols), c = static_cast<int>(idx % h.cols);
    peaks.push_back({Vec2(r, c), v});
    for (int rr = std::max(0, r - nms_radius); rr <= std::min(h.rows - 1, r + nms_radius); ++rr)
      for (int cc = std::max(0, c - nms_radius); cc <= std::min(h.cols - 1, c + nms_radius); ++cc)
        suppressed[static_cast<std::size_t>(rr) * h.cols + cc] = 1;
  }
  return peaks;
}

// Soft-argmax restricted to the (2r+1)^2 window around an integer peak, with
// values normalized by the peak so the temperature is scale free.
inline Vec2 refine_peak(const Heatmap2D& h, const Vec2& cell, int radius,
                        double temperature = HeatmapDefaults::temperature) {
  const int r = static_cast<int>(std::lround(cell.x())), c = static_cast<int>(std::lround(cell.y()));
  const double peak = h.at(r, c);
  if (!(peak > 0.0)) return cell;
  double wsum = 0.0, sr = 0.0, sc = 0.0;
  for (int rr = std::max(0, r - radius); rr <= std::min(h.rows - 1, r + radius); ++rr)
    for (int cc = std::max(0, c - radius); cc <= std::min(h.cols - 1, c + radius); ++cc) {
      const double w = std::exp((h.at(rr, cc) - peak) / (peak * temperature));
      wsum += w;
      sr += w * rr;
      sc += w * cc;
    }
  return Vec2(sr / wsum, sc / wsum);
}

}  // namespace volpose
