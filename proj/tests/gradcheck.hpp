#ifndef PLAYPRUNE_TESTS_GRADCHECK_HPP
#define PLAYPRUNE_TESTS_GRADCHECK_HPP

// Test-only helpers: random tensors and a central finite-difference oracle
// for the layer backward passes. Each check contracts the layer output with
// a fixed random cotangent r, so L = sum(r * out) and dL/dout = r.

#include "playprune/layers.hpp"
#include "playprune/random.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace playprune::testing {

inline Tensor random_tensor(Shape shape, Rng &rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto &v : t.data())
    v = rng.normal(0.0, scale);
  return t;
}

struct GradCheckResult {
  std::size_t checked = 0;
  double max_rel_error = 0.0;
};

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

/// Compares `analytic` (gradient of L w.r.t. `param`) against central
/// differences of `loss` at `samples` random coordinates of `param`.
inline GradCheckResult check_gradient(Tensor &param, const Tensor &analytic,
                                      const std::function<double()> &loss,
                                      std::size_t samples, Rng &rng,
                                      double step = 1e-5) {
  GradCheckResult r;
  for (std::size_t s = 0; s < samples; ++s) {
    const std::size_t k = rng.below(param.size());
    const double orig = param[k];
    param[k] = orig + step;
    const double up = loss();
    param[k] = orig - step;
    const double down = loss();
    param[k] = orig;
    const double numeric = (up - down) / (2.0 * step);
    r.max_rel_error = std::max(r.max_rel_error, relative_error(analytic[k], numeric));
    ++r.checked;
  }
  return r;
}

inline double contract(const Tensor &a, const Tensor &b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += a[i] * b[i];
  return s;
}

/// Runs every layer-type check; `samples` coordinates per parameter tensor
/// (split over the tensors of that layer type so each type sees at least
/// `samples` coordinates in total).
struct LayerGradReport {
  std::string layer;
  GradCheckResult result;
};

inline void merge(GradCheckResult &into, const GradCheckResult &r) {
  into.checked += r.checked;
  into.max_rel_error = std::max(into.max_rel_error, r.max_rel_error);
}

inline std::vector<LayerGradReport> check_all_layers(std::uint64_t seed,
                                                     std::size_t samples) {
  Rng rng(seed);
  std::vector<LayerGradReport> out;

  { // conv2d with padding and stride 1
    Tensor x = random_tensor({2, 3, 6, 6}, rng);
    Tensor w = random_tensor({4, 3, 3, 3}, rng, 0.5);
    Tensor b = random_tensor({4}, rng);
    Conv2dCache cache;
    const Tensor y = conv2d_forward(x, w, b, 1, 1, &cache);
    const Tensor r = random_tensor(y.shape(), rng);
    const auto g = conv2d_backward(cache, w, r);
    auto loss = [&] { return contract(conv2d_forward(x, w, b, 1, 1), r); };
    GradCheckResult acc;
    merge(acc, check_gradient(x, g.input, loss, samples, rng));
    merge(acc, check_gradient(w, g.weights, loss, samples, rng));
    merge(acc, check_gradient(b, g.bias, loss, samples, rng));
    out.push_back({"conv2d", acc});
  }
  { // conv2d strided
    Tensor x = random_tensor({2, 2, 7, 7}, rng);
    Tensor w = random_tensor({3, 2, 3, 3}, rng, 0.5);
    Tensor b = random_tensor({3}, rng);
    Conv2dCache cache;
    const Tensor y = conv2d_forward(x, w, b, 2, 0, &cache);
    const Tensor r = random_tensor(y.shape(), rng);
    const auto g = conv2d_backward(cache, w, r);
    auto loss = [&] { return contract(conv2d_forward(x, w, b, 2, 0), r); };
    GradCheckResult acc;
    merge(acc, check_gradient(x, g.input, loss, samples, rng));
    merge(acc, check_gradient(w, g.weights, loss, samples, rng));
    out.push_back({"conv2d_stride2", acc});
  }
  { // dense
    Tensor x = random_tensor({4, 7}, rng);
    Tensor w = random_tensor({5, 7}, rng);
    Tensor b = random_tensor({5}, rng);
    DenseCache cache;
    const Tensor y = dense_forward(x, w, b, &cache);
    const Tensor r = random_tensor(y.shape(), rng);
    const auto g = dense_backward(cache, w, r);
    auto loss = [&] { return contract(dense_forward(x, w, b), r); };
    GradCheckResult acc;
    merge(acc, check_gradient(x, g.input, loss, samples, rng));
    merge(acc, check_gradient(w, g.weights, loss, samples, rng));
    merge(acc, check_gradient(b, g.bias, loss, samples, rng));
    out.push_back({"dense", acc});
  }
  for (Mode mode : {Mode::Train, Mode::Eval}) { // batchnorm
    Tensor x = random_tensor({3, 2, 3, 3}, rng);
    Tensor gamma = random_tensor({2}, rng);
    Tensor beta = random_tensor({2}, rng);
    Tensor rm = random_tensor({2}, rng, 0.1), rv({2}, 1.5);
    auto fwd = [&](BatchNormCache *c) {
      Tensor m = rm, v = rv; // running stats must not drift between probes
      return batchnorm_forward(x, gamma, beta, m, v, mode, {}, c);
    };
    BatchNormCache cache;
    const Tensor y = fwd(&cache);
    const Tensor r = random_tensor(y.shape(), rng);
    const auto g = batchnorm_backward(cache, gamma, r);
    auto loss = [&] { return contract(fwd(nullptr), r); };
    GradCheckResult acc;
    merge(acc, check_gradient(x, g.input, loss, samples, rng));
    merge(acc, check_gradient(gamma, g.gamma, loss, samples, rng));
    merge(acc, check_gradient(beta, g.beta, loss, samples, rng));
    out.push_back({mode == Mode::Train ? "batchnorm_train" : "batchnorm_eval", acc});
  }
  { // relu
    Tensor x = random_tensor({2, 3, 4, 4}, rng);
    for (auto &v : x.data()) // keep inputs away from the kink
      if (std::abs(v) < 1e-3)
        v = 0.1;
    const Tensor r = random_tensor(x.shape(), rng);
    const Tensor g = relu_backward(x, r);
    auto loss = [&] { return contract(relu_forward(x), r); };
    out.push_back({"relu", check_gradient(x, g, loss, samples, rng)});
  }
  { // maxpool
    Tensor x = random_tensor({2, 3, 6, 6}, rng);
    MaxPoolCache cache;
    const Tensor y = maxpool_forward(x, &cache);
    const Tensor r = random_tensor(y.shape(), rng);
    const Tensor g = maxpool_backward(cache, r);
    auto loss = [&] { return contract(maxpool_forward(x), r); };
    out.push_back({"maxpool", check_gradient(x, g, loss, samples, rng)});
  }
  { // softmax cross-entropy
    Tensor z = random_tensor({5, 10}, rng, 2.0);
    std::vector<int> labels;
    for (int i = 0; i < 5; ++i)
      labels.push_back(static_cast<int>(rng.below(10)));
    const auto res = softmax_cross_entropy(z, labels);
    auto loss = [&] { return softmax_cross_entropy(z, labels).loss; };
    out.push_back({"softmax_ce", check_gradient(z, res.grad_logits, loss, samples, rng)});
  }
  return out;
}

} // namespace playprune::testing

#endif // PLAYPRUNE_TESTS_GRADCHECK_HPP
