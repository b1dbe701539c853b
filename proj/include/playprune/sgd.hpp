#ifndef PLAYPRUNE_SGD_HPP
#define PLAYPRUNE_SGD_HPP

#include "error.hpp"
#include "tensor.hpp"

#include <cmath>
#include <vector>

namespace playprune {

struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::size_t batch_size = 64;
};

/// SGD with heavy-ball momentum:
///   v <- momentum * v + grad + weight_decay * param
///   param <- param - lr * v
/// Velocity buffers follow the parameter list positionally; a buffer whose
/// length no longer matches its parameter (after filter removal) restarts
/// from zero.
class Sgd {
public:
  explicit Sgd(SgdConfig config = {}) : config_(config) { validate(config_); }

  static void validate(const SgdConfig &c) {
    PLAYPRUNE_CHECK(c.lr >= 0.0 && std::isfinite(c.lr),
                    "sgd: lr must be finite and non-negative, got ", c.lr);
    PLAYPRUNE_CHECK(c.momentum >= 0.0 && c.momentum < 1.0,
                    "sgd: momentum must lie in [0,1), got ", c.momentum);
    PLAYPRUNE_CHECK(c.weight_decay >= 0.0,
                    "sgd: weight_decay must be non-negative, got ",
                    c.weight_decay);
    PLAYPRUNE_CHECK(c.batch_size >= 1, "sgd: batch_size must be positive");
  }

  const SgdConfig &config() const { return config_; }

  /// Applies one update to every tensor in `params` using its grad buffer.
  /// Rejects the whole step (no parameter touched) on a non-finite gradient.
  void step(const std::vector<Tensor *> &params) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const Tensor &p = *params[i];
      PLAYPRUNE_CHECK(p.grad().size() == p.size(), "sgd: parameter ", i,
                      " has no gradient of matching shape");
      for (double g : p.grad())
        PLAYPRUNE_CHECK(std::isfinite(g), "sgd: non-finite gradient in parameter ",
                        i, "; step rejected");
    }
    velocity_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor &p = *params[i];
      auto &v = velocity_[i];
      if (v.size() != p.size())
        v.assign(p.size(), 0.0);
      auto w = p.data();
      auto g = p.grad();
      for (std::size_t k = 0; k < p.size(); ++k) {
        v[k] = config_.momentum * v[k] + g[k] + config_.weight_decay * w[k];
        w[k] -= config_.lr * v[k];
      }
    }
  }

  void reset() { velocity_.clear(); }

  /// Velocity buffer of parameter `i` (empty before its first update).
  std::span<double> velocity(std::size_t i) {
    if (i < velocity_.size())
      return velocity_[i];
    return {};
  }

private:
  SgdConfig config_;
  std::vector<std::vector<double>> velocity_;
};

} // namespace playprune

#endif // PLAYPRUNE_SGD_HPP
