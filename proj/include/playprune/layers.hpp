#ifndef PLAYPRUNE_LAYERS_HPP
#define PLAYPRUNE_LAYERS_HPP

// Forward and backward kernels for the fixed layer set: conv2d, dense,
// batchnorm, relu, 2x2 max-pool and softmax cross-entropy. All tensors are
// channels-major [N,C,H,W] in double precision.

#include "error.hpp"
#include "tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

namespace playprune {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

inline std::size_t conv_out_extent(std::size_t in, std::size_t k,
                                   std::size_t stride, std::size_t pad,
                                   const char *axis) {
  const std::size_t padded = in + 2 * pad;
  PLAYPRUNE_CHECK(padded >= k, "conv2d: kernel ", axis, " extent ", k,
                  " exceeds padded input ", padded);
  PLAYPRUNE_CHECK((padded - k) % stride == 0, "conv2d: output ", axis,
                  " extent (", in, " + 2*", pad, " - ", k, ")/", stride,
                  " is not integral");
  return (padded - k) / stride + 1;
}

struct ConvGeometry {
  std::size_t n, c, h, w, f, kh, kw, stride, pad, oh, ow;
  std::size_t patch() const { return c * kh * kw; }
  std::size_t pixels() const { return oh * ow; }
};

// cols is [C*kh*kw, OH*OW] for one sample.
inline void im2col(const double *img, const ConvGeometry &g, double *cols) {
  const std::size_t P = g.pixels();
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t ky = 0; ky < g.kh; ++ky)
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        double *row = cols + ((c * g.kh + ky) * g.kw + kx) * P;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) -
                          static_cast<long>(g.pad);
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) -
                            static_cast<long>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 &&
                                iy < static_cast<long>(g.h) &&
                                ix < static_cast<long>(g.w);
            row[oy * g.ow + ox] =
                inside ? img[(c * g.h + static_cast<std::size_t>(iy)) * g.w +
                             static_cast<std::size_t>(ix)]
                       : 0.0;
          }
        }
      }
}

inline void col2im(const double *cols, const ConvGeometry &g, double *img) {
  const std::size_t P = g.pixels();
  for (std::size_t c = 0; c < g.c; ++c)
    for (std::size_t ky = 0; ky < g.kh; ++ky)
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const double *row = cols + ((c * g.kh + ky) * g.kw + kx) * P;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) -
                          static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h))
            continue;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) -
                            static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.w))
              continue;
            img[(c * g.h + static_cast<std::size_t>(iy)) * g.w +
                static_cast<std::size_t>(ix)] += row[oy * g.ow + ox];
          }
        }
      }
}

} // namespace detail

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

struct Conv2dCache {
  Tensor input;
  std::size_t stride = 1;
  std::size_t pad = 0;
};

struct Conv2dGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

inline detail::ConvGeometry conv_geometry(const Shape &in, const Shape &wt,
                                          std::size_t stride, std::size_t pad) {
  PLAYPRUNE_CHECK(in.size() == 4, "conv2d: input must be [N,C,H,W], got ",
                  shape_string(in));
  PLAYPRUNE_CHECK(wt.size() == 4, "conv2d: weights must be [F,C,kh,kw], got ",
                  shape_string(wt));
  PLAYPRUNE_CHECK(stride > 0, "conv2d: stride must be positive");
  PLAYPRUNE_CHECK(in[1] == wt[1], "conv2d: input channels C=", in[1],
                  " do not match weight channels C=", wt[1]);
  detail::ConvGeometry g{};
  g.n = in[0];
  g.c = in[1];
  g.h = in[2];
  g.w = in[3];
  g.f = wt[0];
  g.kh = wt[2];
  g.kw = wt[3];
  g.stride = stride;
  g.pad = pad;
  g.oh = detail::conv_out_extent(g.h, g.kh, stride, pad, "H");
  g.ow = detail::conv_out_extent(g.w, g.kw, stride, pad, "W");
  return g;
}

inline Tensor conv2d_forward(const Tensor &input, const Tensor &weights,
                             const Tensor &bias, std::size_t stride,
                             std::size_t pad, Conv2dCache *cache = nullptr) {
  const auto g = conv_geometry(input.shape(), weights.shape(), stride, pad);
  PLAYPRUNE_CHECK(bias.rank() == 1 && bias.dim(0) == g.f, "conv2d: bias ",
                  shape_string(bias.shape()), " does not match F=", g.f);

  Tensor out({g.n, g.f, g.oh, g.ow});
  const std::size_t K = g.patch(), P = g.pixels();
  std::vector<double> cols(K * P);
  detail::ConstMapMat W(weights.ptr(), static_cast<Eigen::Index>(g.f),
                        static_cast<Eigen::Index>(K));
  for (std::size_t n = 0; n < g.n; ++n) {
    detail::im2col(input.ptr() + n * g.c * g.h * g.w, g, cols.data());
    detail::ConstMapMat C(cols.data(), static_cast<Eigen::Index>(K),
                          static_cast<Eigen::Index>(P));
    detail::MapMat O(out.ptr() + n * g.f * P, static_cast<Eigen::Index>(g.f),
                     static_cast<Eigen::Index>(P));
    O.noalias() = W * C;
    for (std::size_t f = 0; f < g.f; ++f)
      O.row(static_cast<Eigen::Index>(f)).array() += bias[f];
  }
  if (cache) {
    cache->input = input;
    cache->stride = stride;
    cache->pad = pad;
  }
  return out;
}

inline Conv2dGrads conv2d_backward(const std::optional<Conv2dCache> &cache,
                                   const Tensor &weights,
                                   const Tensor &grad_out) {
  PLAYPRUNE_CHECK(cache.has_value() && !cache->input.empty(),
                  "conv2d_backward: no forward cache");
  const auto &input = cache->input;
  const auto g =
      conv_geometry(input.shape(), weights.shape(), cache->stride, cache->pad);
  PLAYPRUNE_CHECK(grad_out.shape() == Shape({g.n, g.f, g.oh, g.ow}),
                  "conv2d_backward: grad_out ",
                  shape_string(grad_out.shape()), " does not match output");

  Conv2dGrads grads{Tensor(input.shape()), Tensor(weights.shape()),
                    Tensor({g.f})};
  const std::size_t K = g.patch(), P = g.pixels();
  std::vector<double> cols(K * P), dcols(K * P);
  detail::ConstMapMat W(weights.ptr(), static_cast<Eigen::Index>(g.f),
                        static_cast<Eigen::Index>(K));
  detail::MapMat dW(grads.weights.ptr(), static_cast<Eigen::Index>(g.f),
                    static_cast<Eigen::Index>(K));
  for (std::size_t n = 0; n < g.n; ++n) {
    detail::im2col(input.ptr() + n * g.c * g.h * g.w, g, cols.data());
    detail::ConstMapMat C(cols.data(), static_cast<Eigen::Index>(K),
                          static_cast<Eigen::Index>(P));
    detail::ConstMapMat G(grad_out.ptr() + n * g.f * P,
                          static_cast<Eigen::Index>(g.f),
                          static_cast<Eigen::Index>(P));
    dW.noalias() += G * C.transpose();
    for (std::size_t f = 0; f < g.f; ++f)
      grads.bias[f] += G.row(static_cast<Eigen::Index>(f)).sum();
    detail::MapMat dC(dcols.data(), static_cast<Eigen::Index>(K),
                      static_cast<Eigen::Index>(P));
    dC.noalias() = W.transpose() * G;
    detail::col2im(dcols.data(), g, grads.input.ptr() + n * g.c * g.h * g.w);
  }
  return grads;
}

// ---------------------------------------------------------------------------
// dense
// ---------------------------------------------------------------------------

struct DenseCache {
  Tensor input;
};

struct DenseGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

inline Tensor dense_forward(const Tensor &input, const Tensor &weights,
                            const Tensor &bias, DenseCache *cache = nullptr) {
  PLAYPRUNE_CHECK(input.rank() == 2, "dense: input must be [N,D], got ",
                  shape_string(input.shape()));
  PLAYPRUNE_CHECK(weights.rank() == 2 && weights.dim(1) == input.dim(1),
                  "dense: weights ", shape_string(weights.shape()),
                  " do not match input D=", input.dim(1));
  PLAYPRUNE_CHECK(bias.rank() == 1 && bias.dim(0) == weights.dim(0),
                  "dense: bias ", shape_string(bias.shape()),
                  " does not match O=", weights.dim(0));
  const auto N = static_cast<Eigen::Index>(input.dim(0));
  const auto D = static_cast<Eigen::Index>(input.dim(1));
  const auto O = static_cast<Eigen::Index>(weights.dim(0));
  Tensor out({input.dim(0), weights.dim(0)});
  detail::ConstMapMat X(input.ptr(), N, D);
  detail::ConstMapMat W(weights.ptr(), O, D);
  detail::MapMat Y(out.ptr(), N, O);
  Y.noalias() = X * W.transpose();
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index o = 0; o < O; ++o)
      Y(i, o) += bias[static_cast<std::size_t>(o)];
  if (cache)
    cache->input = input;
  return out;
}

inline DenseGrads dense_backward(const std::optional<DenseCache> &cache,
                                 const Tensor &weights,
                                 const Tensor &grad_out) {
  PLAYPRUNE_CHECK(cache.has_value() && !cache->input.empty(),
                  "dense_backward: no forward cache");
  const auto &input = cache->input;
  const auto N = static_cast<Eigen::Index>(input.dim(0));
  const auto D = static_cast<Eigen::Index>(input.dim(1));
  const auto O = static_cast<Eigen::Index>(weights.dim(0));
  PLAYPRUNE_CHECK(grad_out.shape() == Shape({input.dim(0), weights.dim(0)}),
                  "dense_backward: grad_out ", shape_string(grad_out.shape()),
                  " does not match output");
  DenseGrads grads{Tensor(input.shape()), Tensor(weights.shape()),
                   Tensor({weights.dim(0)})};
  detail::ConstMapMat X(input.ptr(), N, D);
  detail::ConstMapMat W(weights.ptr(), O, D);
  detail::ConstMapMat G(grad_out.ptr(), N, O);
  detail::MapMat(grads.input.ptr(), N, D).noalias() = G * W;
  detail::MapMat(grads.weights.ptr(), O, D).noalias() = G.transpose() * X;
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index o = 0; o < O; ++o)
      grads.bias[static_cast<std::size_t>(o)] += G(i, o);
  return grads;
}

// ---------------------------------------------------------------------------
// batchnorm
// ---------------------------------------------------------------------------

enum class Mode { Train, Eval };

struct BatchNormParams {
  double momentum = 0.1;
  double eps = 1e-5;
};

struct BatchNormCache {
  Tensor xhat;
  std::vector<double> inv_std;
  Mode mode = Mode::Eval;
};

struct BatchNormGrads {
  Tensor input;
  Tensor gamma;
  Tensor beta;
};

/// Train mode normalizes with biased batch statistics and folds them into
/// the running estimates; eval mode uses the running estimates unchanged.
inline Tensor batchnorm_forward(const Tensor &input, const Tensor &gamma,
                                const Tensor &beta, Tensor &running_mean,
                                Tensor &running_var, Mode mode,
                                BatchNormParams params = {},
                                BatchNormCache *cache = nullptr) {
  PLAYPRUNE_CHECK(input.rank() == 4, "batchnorm: input must be [N,C,H,W]");
  const std::size_t N = input.dim(0), C = input.dim(1),
                    S = input.dim(2) * input.dim(3);
  PLAYPRUNE_CHECK(gamma.size() == C && beta.size() == C &&
                      running_mean.size() == C && running_var.size() == C,
                  "batchnorm: channel count C=", C,
                  " does not match gamma/beta/running stats (", gamma.size(),
                  ")");
  PLAYPRUNE_CHECK(mode == Mode::Eval || N > 0,
                  "batchnorm: empty batch in train mode");

  Tensor out(input.shape());
  Tensor xhat(input.shape());
  std::vector<double> inv_std(C);
  for (std::size_t c = 0; c < C; ++c) {
    double mean, var;
    if (mode == Mode::Train) {
      double sum = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double *p = input.ptr() + (n * C + c) * S;
        for (std::size_t s = 0; s < S; ++s)
          sum += p[s];
      }
      const double count = static_cast<double>(N * S);
      mean = sum / count;
      double sq = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double *p = input.ptr() + (n * C + c) * S;
        for (std::size_t s = 0; s < S; ++s)
          sq += (p[s] - mean) * (p[s] - mean);
      }
      var = sq / count;
      running_mean[c] =
          (1.0 - params.momentum) * running_mean[c] + params.momentum * mean;
      running_var[c] =
          (1.0 - params.momentum) * running_var[c] + params.momentum * var;
    } else {
      mean = running_mean[c];
      var = running_var[c];
    }
    inv_std[c] = 1.0 / std::sqrt(var + params.eps);
    for (std::size_t n = 0; n < N; ++n) {
      const double *p = input.ptr() + (n * C + c) * S;
      double *xh = xhat.ptr() + (n * C + c) * S;
      double *o = out.ptr() + (n * C + c) * S;
      for (std::size_t s = 0; s < S; ++s) {
        xh[s] = (p[s] - mean) * inv_std[c];
        o[s] = gamma[c] * xh[s] + beta[c];
      }
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->mode = mode;
  }
  return out;
}

inline BatchNormGrads batchnorm_backward(const std::optional<BatchNormCache> &cache,
                                         const Tensor &gamma,
                                         const Tensor &grad_out) {
  PLAYPRUNE_CHECK(cache.has_value() && !cache->xhat.empty(),
                  "batchnorm_backward: no forward cache");
  const Tensor &xhat = cache->xhat;
  PLAYPRUNE_CHECK(grad_out.shape() == xhat.shape(),
                  "batchnorm_backward: grad_out shape mismatch");
  const std::size_t N = xhat.dim(0), C = xhat.dim(1),
                    S = xhat.dim(2) * xhat.dim(3);
  const double count = static_cast<double>(N * S);
  BatchNormGrads grads{Tensor(xhat.shape()), Tensor({C}), Tensor({C})};
  for (std::size_t c = 0; c < C; ++c) {
    double dbeta = 0.0, dgamma = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      const double *g = grad_out.ptr() + (n * C + c) * S;
      const double *xh = xhat.ptr() + (n * C + c) * S;
      for (std::size_t s = 0; s < S; ++s) {
        dbeta += g[s];
        dgamma += g[s] * xh[s];
      }
    }
    grads.beta[c] = dbeta;
    grads.gamma[c] = dgamma;
    const double k = gamma[c] * cache->inv_std[c];
    for (std::size_t n = 0; n < N; ++n) {
      const double *g = grad_out.ptr() + (n * C + c) * S;
      const double *xh = xhat.ptr() + (n * C + c) * S;
      double *dx = grads.input.ptr() + (n * C + c) * S;
      for (std::size_t s = 0; s < S; ++s) {
        if (cache->mode == Mode::Train)
          dx[s] = k * (g[s] - dbeta / count - xh[s] * dgamma / count);
        else
          dx[s] = k * g[s];
      }
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// relu, max-pool, softmax cross-entropy
// ---------------------------------------------------------------------------

inline Tensor relu_forward(const Tensor &input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i)
    out[i] = input[i] > 0.0 ? input[i] : 0.0;
  return out;
}

/// Gradient of relu given the forward input (subgradient 0 at 0).
inline Tensor relu_backward(const Tensor &input, const Tensor &grad_out) {
  PLAYPRUNE_CHECK(input.shape() == grad_out.shape(),
                  "relu_backward: shape mismatch");
  Tensor g(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i)
    g[i] = input[i] > 0.0 ? grad_out[i] : 0.0;
  return g;
}

struct MaxPoolCache {
  Shape input_shape;
  std::vector<std::size_t> argmax; // flat input index per output element
};

/// 2x2 window, stride 2; odd trailing rows/columns are dropped.
inline Tensor maxpool_forward(const Tensor &input,
                              MaxPoolCache *cache = nullptr) {
  PLAYPRUNE_CHECK(input.rank() == 4, "maxpool: input must be [N,C,H,W]");
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2),
                    W = input.dim(3);
  PLAYPRUNE_CHECK(H >= 2 && W >= 2, "maxpool: spatial extent ", H, "x", W,
                  " smaller than the 2x2 window");
  const std::size_t OH = H / 2, OW = W / 2;
  Tensor out({N, C, OH, OW});
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t nc = 0; nc < N * C; ++nc)
    for (std::size_t oy = 0; oy < OH; ++oy)
      for (std::size_t ox = 0; ox < OW; ++ox) {
        std::size_t best = nc * H * W + (2 * oy) * W + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = nc * H * W + (2 * oy + dy) * W + 2 * ox + dx;
            if (input[idx] > input[best])
              best = idx;
          }
        const std::size_t o = (nc * OH + oy) * OW + ox;
        out[o] = input[best];
        argmax[o] = best;
      }
  if (cache) {
    cache->input_shape = input.shape();
    cache->argmax = std::move(argmax);
  }
  return out;
}

inline Tensor maxpool_backward(const std::optional<MaxPoolCache> &cache,
                               const Tensor &grad_out) {
  PLAYPRUNE_CHECK(cache.has_value() && !cache->input_shape.empty(),
                  "maxpool_backward: no forward cache");
  PLAYPRUNE_CHECK(grad_out.size() == cache->argmax.size(),
                  "maxpool_backward: grad_out shape mismatch");
  Tensor g(cache->input_shape);
  for (std::size_t o = 0; o < grad_out.size(); ++o)
    g[cache->argmax[o]] += grad_out[o];
  return g;
}

struct LossResult {
  double loss = 0.0;
  Tensor grad_logits; // d(mean loss)/d(logits)
};

/// Mean negative log-likelihood of softmax(logits) over the batch.
inline LossResult softmax_cross_entropy(const Tensor &logits,
                                        std::span<const int> labels) {
  PLAYPRUNE_CHECK(logits.rank() == 2, "softmax_ce: logits must be [N,K]");
  const std::size_t N = logits.dim(0), K = logits.dim(1);
  PLAYPRUNE_CHECK(labels.size() == N, "softmax_ce: ", labels.size(),
                  " labels for batch of ", N);
  LossResult r{0.0, Tensor(logits.shape())};
  for (std::size_t n = 0; n < N; ++n) {
    const int y = labels[n];
    PLAYPRUNE_CHECK(y >= 0 && static_cast<std::size_t>(y) < K,
                    "softmax_ce: label ", y, " out of range [0,", K, ")");
    const double *z = logits.ptr() + n * K;
    double *g = r.grad_logits.ptr() + n * K;
    const double zmax = *std::max_element(z, z + K);
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k)
      sum += std::exp(z[k] - zmax);
    const double log_sum = std::log(sum) + zmax;
    r.loss += log_sum - z[y];
    for (std::size_t k = 0; k < K; ++k)
      g[k] = std::exp(z[k] - log_sum) / static_cast<double>(N);
    g[y] -= 1.0 / static_cast<double>(N);
  }
  r.loss /= static_cast<double>(N);
  return r;
}

} // namespace playprune

#endif // PLAYPRUNE_LAYERS_HPP
