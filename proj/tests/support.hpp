#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "volpose/volpose.hpp"

namespace volpose::testing {

inline PlaneFeature random_plane(int rows, int cols, int channels, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  PlaneFeature p(PlaneAxes::xy, rows, cols, channels);
  for (auto& v : p.data) v = n(rng);
  return p;
}

inline GruParams random_gru(int channels, std::mt19937_64& rng, double scale = 0.5) {
  GruParams p = GruParams::zeros(channels);
  std::normal_distribution<double> n(0.0, scale);
  for (auto* b : p.blocks())
    for (auto& v : *b) v = n(rng);
  return p;
}

// Dense GRU cell with explicit zero-padded 3x3 convolutions, written from the
// cell equations without the library's helpers.
inline PlaneFeature oracle_gru(const GruParams& p, const PlaneFeature& x, const PlaneFeature& h) {
  const int C = p.channels, R = x.rows, W = x.cols;
  auto conv = [&](const std::vector<double>& w, const std::vector<double>& b, const PlaneFeature& a,
                  const PlaneFeature& c2, int r, int c, int o) {
    double s = b[o];
    for (int i = 0; i < 2 * C; ++i)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const int rr = r + ky - 1, cc = c + kx - 1;
          if (rr < 0 || cc < 0 || rr >= R || cc >= W) continue;
          const double in = i < C ? a.at(rr, cc, i) : c2.at(rr, cc, i - C);
          s += w[((o * 2 * C + i) * 3 + ky) * 3 + kx] * in;
        }
    return s;
  };
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  PlaneFeature rh = h, out = h;
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < W; ++c)
      for (int o = 0; o < C; ++o) rh.at(r, c, o) = sig(conv(p.wr, p.br, x, h, r, c, o)) * h.at(r, c, o);
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < W; ++c)
      for (int o = 0; o < C; ++o) {
        const double z = sig(conv(p.wz, p.bz, x, h, r, c, o));
        const double cand = std::tanh(conv(p.wh, p.bh, x, rh, r, c, o));
        out.at(r, c, o) = (1.0 - z) * h.at(r, c, o) + z * cand;
      }
  return out;
}

inline double dot(const PlaneFeature& a, const PlaneFeature& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t entries = 0;
};

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

// Compares gru_cell_backward against central differences of
// L = <upstream, gru_cell_forward(p, x, h)> for every parameter, x and h entry.
inline GradCheck gru_gradient_check(const GruParams& p, const PlaneFeature& x, const PlaneFeature& h,
                                    const PlaneFeature& upstream, double eps = 1e-5) {
  const GruGradients g = gru_cell_backward(p, x, h, upstream);
  GradCheck out;
  auto loss = [&](const GruParams& pp, const PlaneFeature& xx, const PlaneFeature& hh) {
    return dot(upstream, gru_cell_forward(pp, xx, hh));
  };
  const std::vector<double> flat = p.flatten(), gflat = g.params.flatten();
  GruParams q = p;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    std::vector<double> f = flat;
    f[i] = flat[i] + eps;
    q.unflatten(f);
    const double lp = loss(q, x, h);
    f[i] = flat[i] - eps;
    q.unflatten(f);
    const double lm = loss(q, x, h);
    out.max_rel_error = std::max(out.max_rel_error, relative_error(gflat[i], (lp - lm) / (2 * eps)));
    ++out.entries;
  }
  for (int which = 0; which < 2; ++which) {
    const PlaneFeature& base = which == 0 ? x : h;
    const PlaneFeature& grad = which == 0 ? g.dx : g.dh;
    for (std::size_t i = 0; i < base.data.size(); ++i) {
      PlaneFeature plus = base, minus = base;
      plus.data[i] += eps;
      minus.data[i] -= eps;
      const double lp = which == 0 ? loss(p, plus, h) : loss(p, x, plus);
      const double lm = which == 0 ? loss(p, minus, h) : loss(p, x, minus);
      out.max_rel_error = std::max(out.max_rel_error, relative_error(grad.data[i], (lp - lm) / (2 * eps)));
      ++out.entries;
    }
  }
  return out;
}

// Worst gradient error over `instances` random small GRU problems.
inline GradCheck gru_gradient_sweep(int instances, std::uint64_t seed) {
  GradCheck worst;
  std::mt19937_64 rng(seed);
  for (int n = 0; n < instances; ++n) {
    const int C = 1 + n % 2, R = 3 + n % 3, W = 3 + (n / 3) % 2;
    const GruParams p = random_gru(C, rng);
    const PlaneFeature x = random_plane(R, W, C, rng), h = random_plane(R, W, C, rng);
    const PlaneFeature up = random_plane(R, W, C, rng);
    const GradCheck g = gru_gradient_check(p, x, h, up);
    worst.max_rel_error = std::max(worst.max_rel_error, g.max_rel_error);
    worst.entries += g.entries;
  }
  return worst;
}

// One synthetic walker on small planes: observations are noisy Gaussians at
// the current position, the hidden state is the previous target (fixed), and
// each step is scored on the current plane and on a zero-input one-step
// forecast against the next target, mirroring the per-timestep loss.
struct SmokeTrack {
  std::vector<PlaneFeature> obs, hidden, target;
};

inline SmokeTrack make_smoke_track(int steps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.05);
  SmokeTrack tr;
  auto blob = [](double r, double c) {
    PlaneFeature p(PlaneAxes::xy, 9, 9, 1, 100.0);
    splat_gaussian(p, 0, Vec2(r, c), 1.2, 1.0, 6.0);
    return p;
  };
  for (int t = 0; t <= steps + 1; ++t) tr.target.push_back(blob(4.0, 2.0 + 0.5 * t));
  for (int t = 0; t < steps; ++t) {
    PlaneFeature o = tr.target[t + 1];
    for (auto& v : o.data) v += noise(rng);
    tr.obs.push_back(o);
    tr.hidden.push_back(tr.target[t]);
  }
  return tr;
}

struct SmokeLoss {
  double value = 0.0;
  GruParams grad;
};

inline SmokeLoss smoke_loss(const GruParams& p, const SmokeTrack& tr) {
  SmokeLoss out;
  out.grad = GruParams::zeros(p.channels);
  std::vector<double> g = out.grad.flatten();
  auto accumulate = [&g](const GruParams& d) {
    const auto f = d.flatten();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += f[i];
  };
  for (std::size_t t = 0; t < tr.obs.size(); ++t) {
    const PlaneFeature cur = gru_cell_forward(p, tr.obs[t], tr.hidden[t]);
    PlaneFeature zero = cur;
    std::fill(zero.data.begin(), zero.data.end(), 0.0);
    const PlaneFeature fut = gru_cell_forward(p, zero, cur);
    const double n = static_cast<double>(cur.data.size());
    PlaneFeature d_cur = cur, d_fut = fut;
    for (std::size_t i = 0; i < cur.data.size(); ++i) {
      const double ec = cur.data[i] - tr.target[t + 1].data[i];
      const double ef = fut.data[i] - tr.target[t + 2].data[i];
      out.value += (ec * ec + ef * ef) / n;
      d_cur.data[i] = 2.0 * ec / n;
      d_fut.data[i] = 2.0 * ef / n;
    }
    const GruGradients gf = gru_cell_backward(p, zero, cur, d_fut);
    accumulate(gf.params);
    for (std::size_t i = 0; i < d_cur.data.size(); ++i) d_cur.data[i] += gf.dh.data[i];
    accumulate(gru_cell_backward(p, tr.obs[t], tr.hidden[t], d_cur).params);
  }
  out.grad.unflatten(g);
  return out;
}

struct SmokeFit {
  double initial = 0.0;
  double final_loss = 0.0;
  int iterations = 0;
};

// Plain gradient descent from zero parameters; stops once the loss has
// halved or after `max_iterations`.
inline SmokeFit smoke_fit(int max_iterations = 500, double lr = 0.5, std::uint64_t seed = 7) {
  const SmokeTrack tr = make_smoke_track(4, seed);
  GruParams p = GruParams::zeros(1);
  SmokeFit fit;
  fit.initial = smoke_loss(p, tr).value;
  fit.final_loss = fit.initial;
  for (int it = 0; it < max_iterations; ++it) {
    const SmokeLoss l = smoke_loss(p, tr);
    fit.final_loss = l.value;
    fit.iterations = it;
    if (l.value <= 0.5 * fit.initial) break;
    std::vector<double> f = p.flatten();
    const std::vector<double> g = l.grad.flatten();
    for (std::size_t i = 0; i < f.size(); ++i) f[i] -= lr * g[i];
    p.unflatten(f);
  }
  return fit;
}

}  // namespace volpose::testing
