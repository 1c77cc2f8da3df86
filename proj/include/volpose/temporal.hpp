#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "volpose/error.hpp"
#include "volpose/geometry.hpp"
#include "volpose/posecube.hpp"

namespace volpose {

// Convolutional GRU weights. Every gate convolves the channel-wise
// concatenation of two C-channel planes with a 3x3 kernel, zero padded:
//   z  = sigmoid(Wz * [x; h] + bz)
//   r  = sigmoid(Wr * [x; h] + br)
//   h~ = tanh(Wh * [x; r.h] + bh)
//   h' = (1 - z).h + z.h~
// Kernels are laid out [out][in][ky][kx] with in in [0, 2C).
struct GruParams {
  static constexpr int kKernel = 3;

  int channels = 0;
  std::vector<double> wz, wr, wh;
  std::vector<double> bz, br, bh;

  static GruParams zeros(int channels) {
    GruParams p;
    p.channels = channels;
    const std::size_t n = static_cast<std::size_t>(channels) * 2 * channels * kKernel * kKernel;
    p.wz.assign(n, 0.0);
    p.wr.assign(n, 0.0);
    p.wh.assign(n, 0.0);
    p.bz.assign(channels, 0.0);
    p.br.assign(channels, 0.0);
    p.bh.assign(channels, 0.0);
    return p;
  }

  std::size_t w_index(int out, int in, int ky, int kx) const {
    return ((static_cast<std::size_t>(out) * 2 * channels + in) * kKernel + ky) * kKernel + kx;
  }

  std::size_t parameter_count() const {
    return wz.size() + bz.size() + wr.size() + br.size() + wh.size() + bh.size();
  }

  // Blocks in serialization order: wz, bz, wr, br, wh, bh.
  std::vector<std::vector<double>*> blocks() { return {&wz, &bz, &wr, &br, &wh, &bh}; }
  std::vector<const std::vector<double>*> blocks() const { return {&wz, &bz, &wr, &br, &wh, &bh}; }

  std::vector<double> flatten() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const auto* b : blocks()) out.insert(out.end(), b->begin(), b->end());
    return out;
  }

  void unflatten(std::span<const double> flat) {
    if (flat.size() != parameter_count())
      throw Error(ErrorKind::ShapeMismatch, "flat parameter vector has the wrong length");
    std::size_t off = 0;
    for (auto* b : blocks()) {
      std::copy(flat.begin() + off, flat.begin() + off + b->size(), b->begin());
      off += b->size();
    }
  }

  bool consistent() const {
    const std::size_t n = static_cast<std::size_t>(channels) * 2 * channels * kKernel * kKernel;
    const auto c = static_cast<std::size_t>(channels);
    return channels > 0 && wz.size() == n && wr.size() == n && wh.size() == n && bz.size() == c &&
           br.size() == c && bh.size() == c;
  }
};

// Gate-saturated parameters that copy the hidden state through unchanged.
inline GruParams identity_gru(int channels) {
  GruParams p = GruParams::zeros(channels);
  std::fill(p.bz.begin(), p.bz.end(), -30.0);
  return p;
}

// Exponential-memory fusion: z = sigmoid(logit(1/history) + gate_gain * x),
// candidate tanh(gain * x), per channel with no cross-channel mixing. With
// gate_gain > 0 the update opens where the observation is strong and memory
// persists elsewhere. history == 1 keeps no memory.
inline GruParams memory_gru(int channels, int history, double gain = 1.0, double gate_gain = 0.0) {
  GruParams p = GruParams::zeros(channels);
  const double z = 1.0 / std::max(history, 1);
  const double logit = z >= 1.0 ? 30.0 : std::log(z / (1.0 - z));
  std::fill(p.bz.begin(), p.bz.end(), logit);
  for (int c = 0; c < channels; ++c) {
    p.wh[p.w_index(c, c, 1, 1)] = gain;
    p.wz[p.w_index(c, c, 1, 1)] = gate_gain;
  }
  return p;
}

namespace detail {

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Elementwise activation that reuses the previous result for repeated inputs;
// constant gate channels and zero inputs dominate in practice.
template <typename Fn>
inline void activate(PlaneFeature& m, Fn fn) {
  double last_in = 0.0, last_out = fn(0.0);
  for (auto& v : m.data) {
    if (v != last_in) {
      last_in = v;
      last_out = fn(v);
    }
    v = last_out;
  }
}

inline void check_gru_shapes(const GruParams& p, const PlaneFeature& x, const PlaneFeature& h) {
  if (!p.consistent()) throw Error(ErrorKind::ShapeMismatch, "GRU parameter shapes are inconsistent");
  if (!x.same_shape(h)) throw Error(ErrorKind::ShapeMismatch, "GRU input and hidden shapes differ");
  if (x.channels != p.channels)
    throw Error(ErrorKind::ShapeMismatch, "GRU channel count does not match the planes");
}

// out(r, c, o) = bias[o] + sum_{i,ky,kx} W[o][i][ky][kx] * in_i(r + ky - 1, c + kx - 1)
// where in_i is a for i < C and b for i >= C. Zero weights are skipped.
inline PlaneFeature conv_pair(const GruParams& p, const std::vector<double>& w, const std::vector<double>& bias,
                              const PlaneFeature& a, const PlaneFeature& b) {
  const int C = p.channels, R = a.rows, W = a.cols;
  PlaneFeature out = a;
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < W; ++c)
      for (int o = 0; o < C; ++o) out.at(r, c, o) = bias[o];
  for (int o = 0; o < C; ++o)
    for (int i = 0; i < 2 * C; ++i) {
      const PlaneFeature& src = i < C ? a : b;
      const int ic = i < C ? i : i - C;
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const double wv = w[p.w_index(o, i, ky, kx)];
          if (wv == 0.0) continue;
          const int dy = ky - 1, dx = kx - 1;
          for (int r = std::max(0, -dy); r < std::min(R, R - dy); ++r)
            for (int c = std::max(0, -dx); c < std::min(W, W - dx); ++c)
              out.at(r, c, o) += wv * src.at(r + dy, c + dx, ic);
        }
    }
  return out;
}

// Reverse of conv_pair: accumulates dW, dbias and the input gradients.
inline void conv_pair_backward(const GruParams& p, const std::vector<double>& w, const PlaneFeature& a,
                               const PlaneFeature& b, const PlaneFeature& dout, std::vector<double>& dw,
                               std::vector<double>& dbias, PlaneFeature& da, PlaneFeature& db) {
  const int C = p.channels, R = a.rows, W = a.cols;
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < W; ++c)
      for (int o = 0; o < C; ++o) dbias[o] += dout.at(r, c, o);
  for (int o = 0; o < C; ++o)
    for (int i = 0; i < 2 * C; ++i) {
      const PlaneFeature& src = i < C ? a : b;
      PlaneFeature& dsrc = i < C ? da : db;
      const int ic = i < C ? i : i - C;
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const double wv = w[p.w_index(o, i, ky, kx)];
          const int dy = ky - 1, dx = kx - 1;
          double acc = 0.0;
          for (int r = std::max(0, -dy); r < std::min(R, R - dy); ++r)
            for (int c = std::max(0, -dx); c < std::min(W, W - dx); ++c) {
              const double g = dout.at(r, c, o);
              acc += g * src.at(r + dy, c + dx, ic);
              dsrc.at(r + dy, c + dx, ic) += wv * g;
            }
          dw[p.w_index(o, i, ky, kx)] += acc;
        }
    }
}

}  // namespace detail

struct GruTrace {
  PlaneFeature z, r, candidate, gated_hidden, output;
};

inline GruTrace gru_cell_trace(const GruParams& p, const PlaneFeature& x, const PlaneFeature& h) {
  detail::check_gru_shapes(p, x, h);
  GruTrace t;
  t.z = detail::conv_pair(p, p.wz, p.bz, x, h);
  detail::activate(t.z, detail::sigmoid);
  t.r = detail::conv_pair(p, p.wr, p.br, x, h);
  detail::activate(t.r, detail::sigmoid);
  t.gated_hidden = h;
  for (std::size_t i = 0; i < h.data.size(); ++i) t.gated_hidden.data[i] = t.r.data[i] * h.data[i];
  t.candidate = detail::conv_pair(p, p.wh, p.bh, x, t.gated_hidden);
  detail::activate(t.candidate, [](double v) { return std::tanh(v); });
  t.output = h;
  for (std::size_t i = 0; i < h.data.size(); ++i)
    t.output.data[i] = (1.0 - t.z.data[i]) * h.data[i] + t.z.data[i] * t.candidate.data[i];
  return t;
}

inline PlaneFeature gru_cell_forward(const GruParams& p, const PlaneFeature& x, const PlaneFeature& h) {
  return gru_cell_trace(p, x, h).output;
}

struct GruGradients {
  GruParams params;
  PlaneFeature dx;
  PlaneFeature dh;
};

// Exact reverse-mode gradients of gru_cell_forward given dL/dh'.
inline GruGradients gru_cell_backward(const GruParams& p, const PlaneFeature& x, const PlaneFeature& h,
                                      const PlaneFeature& upstream) {
  detail::check_gru_shapes(p, x, h);
  if (!upstream.same_shape(h)) throw Error(ErrorKind::ShapeMismatch, "upstream gradient shape differs");
  const GruTrace t = gru_cell_trace(p, x, h);
  const std::size_t n = h.data.size();

  GruGradients g;
  g.params = GruParams::zeros(p.channels);
  g.dx = x;
  g.dh = h;
  std::fill(g.dx.data.begin(), g.dx.data.end(), 0.0);
  std::fill(g.dh.data.begin(), g.dh.data.end(), 0.0);

  PlaneFeature dz_pre = h, dcand_pre = h, dgated = h;
  std::fill(dgated.data.begin(), dgated.data.end(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double up = upstream.data[i];
    const double z = t.z.data[i], cand = t.candidate.data[i];
    g.dh.data[i] += up * (1.0 - z);
    dz_pre.data[i] = up * (cand - h.data[i]) * z * (1.0 - z);
    dcand_pre.data[i] = up * z * (1.0 - cand * cand);
  }
  detail::conv_pair_backward(p, p.wh, x, t.gated_hidden, dcand_pre, g.params.wh, g.params.bh, g.dx, dgated);

  PlaneFeature dr_pre = h;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = t.r.data[i];
    g.dh.data[i] += dgated.data[i] * r;
    dr_pre.data[i] = dgated.data[i] * h.data[i] * r * (1.0 - r);
  }
  detail::conv_pair_backward(p, p.wz, x, h, dz_pre, g.params.wz, g.params.bz, g.dx, g.dh);
  detail::conv_pair_backward(p, p.wr, x, h, dr_pre, g.params.wr, g.params.br, g.dx, g.dh);
  return g;
}

// Per-person tri-plane embedding anchored at the cube center (mm).
struct PoseEmbedding {
  TriPlane planes;
  Vec3 anchor = Vec3::Zero();
};

struct TemporalState {
  PoseEmbedding hidden;
  Vec3 last_anchor = Vec3::Zero();
  int age = 0;
};

// Encoder stand-in: scales every plane channel to a unit peak so hidden and
// observation share a range regardless of camera count.
inline PoseEmbedding encode_observation(const TriPlane& planes, const Vec3& anchor) {
  PoseEmbedding e{planes, anchor};
  for (PlaneFeature* pl : {&e.planes.xy, &e.planes.xz, &e.planes.yz}) {
    for (int c = 0; c < pl->channels; ++c) {
      double peak = 0.0;
      for (int r = 0; r < pl->rows; ++r)
        for (int k = 0; k < pl->cols; ++k) peak = std::max(peak, pl->at(r, k, c));
      if (!(peak > 0.0)) continue;
      for (int r = 0; r < pl->rows; ++r)
        for (int k = 0; k < pl->cols; ++k) pl->at(r, k, c) /= peak;
    }
  }
  return e;
}

inline PoseEmbedding zeros_like(const PoseEmbedding& e) {
  PoseEmbedding z = e;
  for (PlaneFeature* pl : {&z.planes.xy, &z.planes.xz, &z.planes.yz})
    std::fill(pl->data.begin(), pl->data.end(), 0.0);
  return z;
}

// Resamples the hidden planes from the previous anchor's frame into the frame
// centered on `anchor`.
inline TriPlane warp_to_anchor(const TriPlane& planes, const Vec3& from, const Vec3& to) {
  const Vec3 d = to - from;
  return {warp_plane(planes.xy, Vec2(-d.x(), -d.y())), warp_plane(planes.xz, Vec2(-d.x(), -d.z())),
          warp_plane(planes.yz, Vec2(-d.y(), -d.z()))};
}

struct TemporalOptions {
  bool warp = true;
};

struct FuseResult {
  PoseEmbedding fused;
  TemporalState state;
};

// One recurrent step. The first step starts from a zero hidden state.
inline FuseResult temporal_fuse(const TemporalState& state, const PoseEmbedding& obs, const GruParams& params,
                                const TemporalOptions& opts = {}) {
  if (!obs.anchor.allFinite() || !state.last_anchor.allFinite())
    throw Error(ErrorKind::ShapeMismatch, "temporal anchors must be finite");
  TriPlane hidden;
  if (state.age == 0) {
    hidden = zeros_like(obs).planes;
  } else {
    hidden = opts.warp ? warp_to_anchor(state.hidden.planes, state.last_anchor, obs.anchor)
                       : state.hidden.planes;
  }
  FuseResult res;
  res.fused.anchor = obs.anchor;
  res.fused.planes = {gru_cell_forward(params, obs.planes.xy, hidden.xy),
                      gru_cell_forward(params, obs.planes.xz, hidden.xz),
                      gru_cell_forward(params, obs.planes.yz, hidden.yz)};
  res.state.hidden = res.fused;
  res.state.last_anchor = obs.anchor;
  res.state.age = state.age + 1;
  return res;
}

// Zero-input autoregressive rollout. Step s (1-based) is anchored at
// origin + velocity * s * stride_frames; the hidden planes stay in the
// person-centered frame.
inline std::vector<PoseEmbedding> forecast(const TemporalState& state, const GruParams& params, int steps,
                                           int stride_frames, const Vec3& origin, const Vec3& velocity) {
  std::vector<PoseEmbedding> out;
  if (steps < 1) return out;
  PoseEmbedding h = state.hidden;
  const PoseEmbedding zero = zeros_like(h);
  for (int s = 1; s <= steps; ++s) {
    h.planes = {gru_cell_forward(params, zero.planes.xy, h.planes.xy),
                gru_cell_forward(params, zero.planes.xz, h.planes.xz),
                gru_cell_forward(params, zero.planes.yz, h.planes.yz)};
    h.anchor = origin + velocity * static_cast<double>(s * stride_frames);
    out.push_back(h);
  }
  return out;
}

inline DecodedPose decode_embedding(const PoseEmbedding& e, double temperature = HeatmapDefaults::temperature) {
  return {decode_planes(e.planes, e.anchor, temperature), e.planes};
}

// Per-person predictions for one timestep.
struct PoseFrame {
  std::vector<DecodedPose> persons;
};

// sum_t sum_i [L(t) + L(t+1)]: `current` holds the poses at t and `future`
// the one-step-ahead poses predicted at t.
inline double pose_sequence_loss(std::span<const PoseFrame> pred_current, std::span<const PoseFrame> pred_future,
                                 std::span<const PoseFrame> gt_current, std::span<const PoseFrame> gt_future) {
  if (pred_current.size() != gt_current.size() || pred_future.size() != gt_future.size())
    throw Error(ErrorKind::LengthMismatch, "prediction and ground-truth sequence lengths differ");
  if (!pred_future.empty() && pred_future.size() != pred_current.size())
    throw Error(ErrorKind::LengthMismatch, "future sequence length differs from the current sequence");
  double loss = 0.0;
  auto add = [&loss](const PoseFrame& p, const PoseFrame& g) {
    if (p.persons.size() != g.persons.size())
      throw Error(ErrorKind::LengthMismatch, "person counts differ within a timestep");
    for (std::size_t i = 0; i < p.persons.size(); ++i) loss += pose_loss(p.persons[i], g.persons[i]);
  };
  for (std::size_t t = 0; t < pred_current.size(); ++t) {
    add(pred_current[t], gt_current[t]);
    if (!pred_future.empty()) add(pred_future[t], gt_future[t]);
  }
  return loss;
}

}  // namespace volpose
