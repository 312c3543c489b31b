#pragma once

// Minimal templated layer library with explicit forward/backward passes.
// Feature maps are (channels x pixels) matrices, column-major, pixel index
// y*w + x; instruction contexts are (dim x tokens). Every layer caches what
// its backward needs, so forward/backward calls must be paired per sample.
// The scalar type is a template parameter: training instantiates float,
// the finite-difference gradient check instantiates double.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "planpaint/error.hpp"
#include "planpaint/rng.hpp"

namespace planpaint::nn {

template <typename S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// Visits (name, value, grad) for every parameter tensor, in a fixed order.
template <typename S>
using ParamVisitor =
    std::function<void(const std::string&, MatX<S>&, MatX<S>&)>;

template <typename S>
MatX<S> random_normal(int rows, int cols, double stddev, Rng& rng) {
  MatX<S> m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r)
      m(r, c) = static_cast<S>(stddev * rng.next_normal());
  return m;
}

// ---------------------------------------------------------------------------
// Convolution (3x3 pad 1 stride 1|2, or 1x1 stride 1) via im2col + GEMM.
template <typename S>
struct Conv {
  int in_ch = 0, out_ch = 0, ksize = 1, stride = 1;
  int in_h = 0, in_w = 0, out_h = 0, out_w = 0;
  MatX<S> w;   // out_ch x (in_ch*ksize*ksize)
  MatX<S> b;   // out_ch x 1
  MatX<S> gw, gb;
  MatX<S> cols;  // cached patches, (in_ch*k*k) x (out_h*out_w)

  void init(int in_channels, int out_channels, int kernel, int stride_,
            Rng& rng, bool zero_init = false) {
    in_ch = in_channels;
    out_ch = out_channels;
    ksize = kernel;
    stride = stride_;
    PP_CHECK((ksize == 3 && (stride == 1 || stride == 2)) ||
             (ksize == 1 && stride == 1));
    const int fan_in = in_ch * ksize * ksize;
    w = zero_init ? MatX<S>::Zero(out_ch, fan_in)
                  : random_normal<S>(out_ch, fan_in,
                                     std::sqrt(2.0 / fan_in), rng);
    b = MatX<S>::Zero(out_ch, 1);
    gw = MatX<S>::Zero(out_ch, fan_in);
    gb = MatX<S>::Zero(out_ch, 1);
  }

  MatX<S> forward(const MatX<S>& x, int h, int width) {
    PP_CHECK(x.rows() == in_ch && x.cols() == h * width);
    in_h = h;
    in_w = width;
    if (ksize == 1) {
      out_h = h;
      out_w = width;
      cols = x;  // 1x1: patches are the pixels themselves
      return (w * x).colwise() + b.col(0);
    }
    out_h = (h + 2 - 3) / stride + 1;
    out_w = (width + 2 - 3) / stride + 1;
    const int n_out = out_h * out_w;
    cols = MatX<S>::Zero(in_ch * 9, n_out);
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox) {
        const int col = oy * out_w + ox;
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * stride + kx - 1;
            if (ix < 0 || ix >= width) continue;
            cols.block((ky * 3 + kx) * in_ch, col, in_ch, 1) =
                x.col(iy * width + ix);
          }
        }
      }
    }
    return (w * cols).colwise() + b.col(0);
  }

  MatX<S> backward(const MatX<S>& dy) {
    PP_CHECK(dy.rows() == out_ch && dy.cols() == out_h * out_w);
    gw.noalias() += dy * cols.transpose();
    gb.col(0) += dy.rowwise().sum();
    if (ksize == 1) return w.transpose() * dy;
    const MatX<S> dcols = w.transpose() * dy;
    MatX<S> dx = MatX<S>::Zero(in_ch, in_h * in_w);
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox) {
        const int col = oy * out_w + ox;
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= in_h) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = ox * stride + kx - 1;
            if (ix < 0 || ix >= in_w) continue;
            dx.col(iy * in_w + ix) +=
                dcols.block((ky * 3 + kx) * in_ch, col, in_ch, 1);
          }
        }
      }
    }
    return dx;
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
    fn(prefix + ".w", w, gw);
    fn(prefix + ".b", b, gb);
  }
};

// ---------------------------------------------------------------------------
template <typename S>
struct Linear {
  MatX<S> w;  // out x in
  MatX<S> b;  // out x 1
  MatX<S> gw, gb;
  MatX<S> x_cache;

  void init(int in_dim, int out_dim, Rng& rng) {
    w = random_normal<S>(out_dim, in_dim, std::sqrt(2.0 / in_dim), rng);
    b = MatX<S>::Zero(out_dim, 1);
    gw = MatX<S>::Zero(out_dim, in_dim);
    gb = MatX<S>::Zero(out_dim, 1);
  }

  MatX<S> forward(const MatX<S>& x) {
    x_cache = x;
    return (w * x).colwise() + b.col(0);
  }

  MatX<S> backward(const MatX<S>& dy) {
    gw.noalias() += dy * x_cache.transpose();
    gb.col(0) += dy.rowwise().sum();
    return w.transpose() * dy;
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
    fn(prefix + ".w", w, gw);
    fn(prefix + ".b", b, gb);
  }
};

// ---------------------------------------------------------------------------
template <typename S>
struct SiLU {
  MatX<S> x_cache;

  MatX<S> forward(const MatX<S>& x) {
    x_cache = x;
    return (x.array() / (1 + (-x.array()).exp())).matrix();
  }

  MatX<S> backward(const MatX<S>& dy) const {
    const auto sig = (1 / (1 + (-x_cache.array()).exp())).eval();
    return (dy.array() * (sig + x_cache.array() * sig * (1 - sig))).matrix();
  }
};

// ---------------------------------------------------------------------------
template <typename S>
struct GroupNorm {
  static constexpr double kEps = 1e-5;
  int ch = 0, groups = 0;
  MatX<S> gamma, beta;  // ch x 1
  MatX<S> ggamma, gbeta;
  MatX<S> xhat;
  VecX<S> inv_std;  // per group

  void init(int channels, int max_groups) {
    ch = channels;
    groups = std::min(max_groups, channels);
    while (ch % groups != 0) --groups;  // groups always divides channels
    gamma = MatX<S>::Ones(ch, 1);
    beta = MatX<S>::Zero(ch, 1);
    ggamma = MatX<S>::Zero(ch, 1);
    gbeta = MatX<S>::Zero(ch, 1);
  }

  MatX<S> forward(const MatX<S>& x) {
    PP_CHECK(x.rows() == ch);
    const int cpg = ch / groups;
    const auto n = x.cols();
    xhat.resize(ch, n);
    inv_std.resize(groups);
    for (int g = 0; g < groups; ++g) {
      auto block = x.middleRows(g * cpg, cpg);
      const S mean = block.mean();
      const S var = (block.array() - mean).square().mean();
      const S istd = S(1) / std::sqrt(var + S(kEps));
      inv_std[g] = istd;
      xhat.middleRows(g * cpg, cpg) = ((block.array() - mean) * istd).matrix();
    }
    return ((xhat.array().colwise() * gamma.col(0).array()).colwise() +
            beta.col(0).array())
        .matrix();
  }

  MatX<S> backward(const MatX<S>& dy) {
    const int cpg = ch / groups;
    const auto n = dy.cols();
    ggamma.col(0) += (dy.array() * xhat.array()).rowwise().sum().matrix();
    gbeta.col(0) += dy.rowwise().sum();
    MatX<S> dx(ch, n);
    const MatX<S> dxhat =
        (dy.array().colwise() * gamma.col(0).array()).matrix();
    for (int g = 0; g < groups; ++g) {
      auto dxh = dxhat.middleRows(g * cpg, cpg);
      auto xh = xhat.middleRows(g * cpg, cpg);
      const S m = static_cast<S>(cpg) * n;
      const S sum_dxh = dxh.sum();
      const S sum_dxh_xh = (dxh.array() * xh.array()).sum();
      dx.middleRows(g * cpg, cpg) =
          (inv_std[g] *
           (dxh.array() - (sum_dxh + xh.array() * sum_dxh_xh) / m))
              .matrix();
    }
    return dx;
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
    fn(prefix + ".gamma", gamma, ggamma);
    fn(prefix + ".beta", beta, gbeta);
  }
};

// ---------------------------------------------------------------------------
// Scaled dot-product attention core shared by self- and cross-attention.
// Queries/keys/values are (head_dim x tokens) per head, stacked over rows.
template <typename S>
struct AttentionCore {
  int heads = 1, head_dim = 1;
  std::vector<MatX<S>> a_cache;  // per head, (n_q x n_kv)
  MatX<S> q_cache, k_cache, v_cache;

  // mask: for each key token, nonzero = attendable; empty = all attendable.
  MatX<S> forward(const MatX<S>& q, const MatX<S>& k, const MatX<S>& v,
                  const std::vector<uint8_t>& mask) {
    const auto n_q = q.cols();
    const auto n_kv = k.cols();
    PP_CHECK(q.rows() == heads * head_dim && k.rows() == q.rows() &&
             v.rows() == q.rows() && v.cols() == n_kv);
    q_cache = q;
    k_cache = k;
    v_cache = v;
    a_cache.assign(heads, {});
    const S scale = S(1) / std::sqrt(static_cast<S>(head_dim));
    MatX<S> out(heads * head_dim, n_q);
    for (int h = 0; h < heads; ++h) {
      auto qh = q.middleRows(h * head_dim, head_dim);
      auto kh = k.middleRows(h * head_dim, head_dim);
      auto vh = v.middleRows(h * head_dim, head_dim);
      MatX<S> scores = qh.transpose() * kh * scale;  // n_q x n_kv
      if (!mask.empty()) {
        PP_CHECK(static_cast<size_t>(n_kv) == mask.size());
        for (int j = 0; j < n_kv; ++j)
          if (!mask[j]) scores.col(j).setConstant(S(-1e30));
      }
      MatX<S>& a = a_cache[h];
      a.resize(n_q, n_kv);
      for (int i = 0; i < n_q; ++i) {
        const S row_max = scores.row(i).maxCoeff();
        a.row(i) = (scores.row(i).array() - row_max).exp().matrix();
        a.row(i) /= a.row(i).sum();
      }
      out.middleRows(h * head_dim, head_dim) = vh * a.transpose();
    }
    return out;
  }

  // Returns (dq, dk, dv) via out parameters.
  void backward(const MatX<S>& dout, MatX<S>& dq, MatX<S>& dk, MatX<S>& dv) {
    const auto n_q = dout.cols();
    const auto n_kv = k_cache.cols();
    dq.setZero(heads * head_dim, n_q);
    dk.setZero(heads * head_dim, n_kv);
    dv.setZero(heads * head_dim, n_kv);
    const S scale = S(1) / std::sqrt(static_cast<S>(head_dim));
    for (int h = 0; h < heads; ++h) {
      auto doh = dout.middleRows(h * head_dim, head_dim);
      auto qh = q_cache.middleRows(h * head_dim, head_dim);
      auto kh = k_cache.middleRows(h * head_dim, head_dim);
      auto vh = v_cache.middleRows(h * head_dim, head_dim);
      const MatX<S>& a = a_cache[h];
      dv.middleRows(h * head_dim, head_dim) = doh * a;
      MatX<S> da = doh.transpose() * vh;  // n_q x n_kv
      MatX<S> ds(n_q, n_kv);
      for (int i = 0; i < n_q; ++i) {
        const S dot = da.row(i).dot(a.row(i));
        ds.row(i) = (a.row(i).array() * (da.row(i).array() - dot)).matrix();
      }
      dq.middleRows(h * head_dim, head_dim) = kh * ds.transpose() * scale;
      dk.middleRows(h * head_dim, head_dim) = qh * ds * scale;
    }
  }
};

// Pre-normalized residual self-attention over pixels.
template <typename S>
struct SelfAttention {
  int ch = 0;
  GroupNorm<S> norm;
  Linear<S> wq, wk, wv, wo;
  AttentionCore<S> core;
  MatX<S> xn_cache;

  void init(int channels, int norm_groups, int head_dim, Rng& rng) {
    ch = channels;
    norm.init(channels, norm_groups);
    core.head_dim = std::min(head_dim, channels);
    core.heads = channels / core.head_dim;
    PP_CHECK(core.heads * core.head_dim == channels);
    wq.init(channels, channels, rng);
    wk.init(channels, channels, rng);
    wv.init(channels, channels, rng);
    wo.init(channels, channels, rng);
  }

  MatX<S> forward(const MatX<S>& x) {
    xn_cache = norm.forward(x);
    const MatX<S> att = core.forward(wq.forward(xn_cache),
                                     wk.forward(xn_cache),
                                     wv.forward(xn_cache), {});
    return x + wo.forward(att);
  }

  MatX<S> backward(const MatX<S>& dy) {
    const MatX<S> datt = wo.backward(dy);
    MatX<S> dq, dk, dv;
    core.backward(datt, dq, dk, dv);
    const MatX<S> dxn =
        wq.backward(dq) + wk.backward(dk) + wv.backward(dv);
    return dy + norm.backward(dxn);
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
    norm.visit(prefix + ".norm", fn);
    wq.visit(prefix + ".wq", fn);
    wk.visit(prefix + ".wk", fn);
    wv.visit(prefix + ".wv", fn);
    wo.visit(prefix + ".wo", fn);
  }
};

// Pre-normalized residual cross-attention from pixels to instruction tokens.
// backward() also produces the gradient w.r.t. the (dim x tokens) context.
template <typename S>
struct CrossAttention {
  int ch = 0;
  GroupNorm<S> norm;
  Linear<S> wq, wk, wv, wo;
  AttentionCore<S> core;

  void init(int channels, int context_dim, int norm_groups, int head_dim,
            Rng& rng) {
    ch = channels;
    norm.init(channels, norm_groups);
    core.head_dim = std::min(head_dim, channels);
    core.heads = channels / core.head_dim;
    PP_CHECK(core.heads * core.head_dim == channels);
    wq.init(channels, channels, rng);
    wk.init(context_dim, channels, rng);
    wv.init(context_dim, channels, rng);
    wo.init(channels, channels, rng);
  }

  MatX<S> forward(const MatX<S>& x, const MatX<S>& context,
                  const std::vector<uint8_t>& mask) {
    const MatX<S> xn = norm.forward(x);
    const MatX<S> att = core.forward(wq.forward(xn), wk.forward(context),
                                     wv.forward(context), mask);
    return x + wo.forward(att);
  }

  MatX<S> backward(const MatX<S>& dy, MatX<S>& dcontext) {
    const MatX<S> datt = wo.backward(dy);
    MatX<S> dq, dk, dv;
    core.backward(datt, dq, dk, dv);
    dcontext += wk.backward(dk) + wv.backward(dv);
    return dy + norm.backward(wq.backward(dq));
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
    norm.visit(prefix + ".norm", fn);
    wq.visit(prefix + ".wq", fn);
    wk.visit(prefix + ".wk", fn);
    wv.visit(prefix + ".wv", fn);
    wo.visit(prefix + ".wo", fn);
  }
};

// ---------------------------------------------------------------------------
// Residual block with timestep-embedding modulation: two GN+SiLU+conv stages,
// the embedding projected to a per-channel (scale, shift) pair applied after
// the second normalization as gn2(h) * (1 + scale) + shift.  The scale rows
// start at zero so an untrained block reduces to plain shift conditioning.
template <typename S>
struct ResBlock {
  int in_ch = 0, out_ch = 0;
  GroupNorm<S> gn1, gn2;
  SiLU<S> act1, act2, act_temb;
  Conv<S> conv1, conv2;
  Linear<S> temb_proj;  // temb_dim -> 2*out_ch (scale rows, then shift rows)
  Conv<S> skip;         // 1x1, only when in_ch != out_ch
  MatX<S> g_cache;      // gn2 output, needed for the scale gradient
  VecX<S> scale1p_cache;

  void init(int in_channels, int out_channels, int temb_dim, int norm_groups,
            Rng& rng) {
    in_ch = in_channels;
    out_ch = out_channels;
    gn1.init(in_ch, norm_groups);
    conv1.init(in_ch, out_ch, 3, 1, rng);
    temb_proj.init(temb_dim, 2 * out_ch, rng);
    temb_proj.w.topRows(out_ch).setZero();
    gn2.init(out_ch, norm_groups);
    conv2.init(out_ch, out_ch, 3, 1, rng);
    if (in_ch != out_ch) skip.init(in_ch, out_ch, 1, 1, rng);
  }

  MatX<S> forward(const MatX<S>& x, int h, int w, const VecX<S>& temb) {
    const MatX<S> hid = conv1.forward(act1.forward(gn1.forward(x)), h, w);
    const MatX<S> sb = temb_proj.forward(act_temb.forward(temb));
    scale1p_cache = VecX<S>::Ones(out_ch) + sb.col(0).head(out_ch);
    g_cache = gn2.forward(hid);
    MatX<S> mod = scale1p_cache.asDiagonal() * g_cache;
    mod.colwise() += sb.col(0).tail(out_ch);
    MatX<S> out = conv2.forward(act2.forward(mod), h, w);
    if (in_ch != out_ch) return out + skip.forward(x, h, w);
    return out + x;
  }

  // dtemb accumulates the gradient w.r.t. the shared timestep embedding.
  MatX<S> backward(const MatX<S>& dy, VecX<S>& dtemb) {
    const MatX<S> dmod = act2.backward(conv2.backward(dy));
    MatX<S> dsb(2 * out_ch, 1);
    dsb.col(0).head(out_ch) = dmod.cwiseProduct(g_cache).rowwise().sum();
    dsb.col(0).tail(out_ch) = dmod.rowwise().sum();
    dtemb += act_temb.backward(temb_proj.backward(dsb)).col(0);
    const MatX<S> dhid = gn2.backward(scale1p_cache.asDiagonal() * dmod);
    MatX<S> dx = gn1.backward(act1.backward(conv1.backward(dhid)));
    if (in_ch != out_ch)
      dx += skip.backward(dy);
    else
      dx += dy;
    return dx;
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
    gn1.visit(prefix + ".gn1", fn);
    conv1.visit(prefix + ".conv1", fn);
    temb_proj.visit(prefix + ".temb", fn);
    gn2.visit(prefix + ".gn2", fn);
    conv2.visit(prefix + ".conv2", fn);
    if (in_ch != out_ch) skip.visit(prefix + ".skip", fn);
  }
};

// ---------------------------------------------------------------------------
// Nearest-neighbor 2x upsample followed by a 3x3 convolution.
template <typename S>
struct Upsample {
  Conv<S> conv;
  int in_h = 0, in_w = 0;

  void init(int in_channels, int out_channels, Rng& rng) {
    conv.init(in_channels, out_channels, 3, 1, rng);
  }

  MatX<S> forward(const MatX<S>& x, int h, int w) {
    in_h = h;
    in_w = w;
    MatX<S> up(x.rows(), 4 * h * w);
    for (int y = 0; y < 2 * h; ++y)
      for (int xx = 0; xx < 2 * w; ++xx)
        up.col(y * 2 * w + xx) = x.col((y / 2) * w + (xx / 2));
    return conv.forward(up, 2 * h, 2 * w);
  }

  MatX<S> backward(const MatX<S>& dy) {
    const MatX<S> dup = conv.backward(dy);
    MatX<S> dx = MatX<S>::Zero(dup.rows(), in_h * in_w);
    for (int y = 0; y < 2 * in_h; ++y)
      for (int xx = 0; xx < 2 * in_w; ++xx)
        dx.col((y / 2) * in_w + (xx / 2)) += dup.col(y * 2 * in_w + xx);
    return dx;
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
    conv.visit(prefix + ".conv", fn);
  }
};

// ---------------------------------------------------------------------------
// Token embedding table, (dim x vocab); rows gather by id, backward
// scatter-adds.
template <typename S>
struct Embedding {
  MatX<S> table;  // dim x vocab
  MatX<S> gtable;
  std::vector<int32_t> ids_cache;

  void init(int vocab, int dim, Rng& rng) {
    table = random_normal<S>(dim, vocab, 1.0, rng);
    gtable = MatX<S>::Zero(dim, vocab);
  }

  MatX<S> forward(const std::vector<int32_t>& ids) {
    ids_cache = ids;
    MatX<S> out(table.rows(), static_cast<Eigen::Index>(ids.size()));
    for (size_t i = 0; i < ids.size(); ++i) {
      PP_CHECK_MSG(ids[i] >= 0 && ids[i] < table.cols(),
                   "embedding id out of range");
      out.col(static_cast<Eigen::Index>(i)) = table.col(ids[i]);
    }
    return out;
  }

  void backward(const MatX<S>& dy) {
    PP_CHECK(dy.cols() == static_cast<Eigen::Index>(ids_cache.size()));
    for (size_t i = 0; i < ids_cache.size(); ++i)
      gtable.col(ids_cache[i]) += dy.col(static_cast<Eigen::Index>(i));
  }

  void visit(const std::string& prefix, const ParamVisitor<S>& fn) {
    fn(prefix + ".table", table, gtable);
  }
};

// ---------------------------------------------------------------------------
// Fixed sinusoidal timestep features (half sin, half cos).
template <typename S>
VecX<S> sinusoidal_embedding(int k, int dim) {
  PP_CHECK(dim >= 4 && dim % 2 == 0);
  const int half = dim / 2;
  VecX<S> out(dim);
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / (half - 1));
    out[i] = static_cast<S>(std::sin(k * freq));
    out[half + i] = static_cast<S>(std::cos(k * freq));
  }
  return out;
}

}  // namespace planpaint::nn
