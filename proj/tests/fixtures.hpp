#ifndef PLAYPRUNE_TESTS_FIXTURES_HPP
#define PLAYPRUNE_TESTS_FIXTURES_HPP

// Shared builders for the unit and acceptance tests.

#include "playprune/orchestrator.hpp"

#include <string>
#include <vector>

namespace playprune::testing {

inline ArchConfig arch_from(const std::string &body) {
  return parse_architecture(ConfigDocument::parse("[architecture]\n" + body));
}

inline NetworkModel model_from(const std::string &body, std::uint64_t seed = 1) {
  Rng rng(seed);
  return build_model(arch_from(body), rng);
}

inline std::string source_dir() { return PLAYPRUNE_SOURCE_DIR; }

inline ConfigDocument load_config(const std::string &name) {
  return ConfigDocument::load(source_dir() + "/configs/" + name);
}

/// Gaussian images with arbitrary labels; shape [n, c, h, w].
inline DatasetSplit random_split(std::size_t n, std::size_t c, std::size_t h,
                                 std::size_t w, std::size_t classes, Rng &rng,
                                 SplitRole role = SplitRole::Validation) {
  DatasetSplit s;
  s.images = Tensor({n, c, h, w});
  for (auto &v : s.images.data())
    v = rng.normal();
  for (std::size_t i = 0; i < n; ++i) {
    s.labels.push_back(static_cast<int>(rng.below(classes)));
    s.source_index.push_back(i);
  }
  s.num_classes = classes;
  s.role = role;
  return s;
}

/// Random conv chain: 2-3 convs (optional batchnorm), pools, one or two
/// dense layers. Every conv except possibly the last feeds a conv.
inline ArchConfig random_chain(Rng &rng) {
  ArchConfig a;
  a.in_channels = 1 + rng.below(3);
  a.in_height = a.in_width = 8;
  const std::size_t convs = 2 + rng.below(2);
  const bool bn = rng.below(2) == 0;
  std::size_t pools = 0;
  for (std::size_t k = 0; k < convs; ++k) {
    LayerDesc c;
    c.kind = LayerKind::Conv;
    c.units = 2 + rng.below(5);
    c.kernel = rng.below(2) ? 3 : 1;
    c.pad = c.kernel / 2;
    a.layers.push_back(c);
    if (bn)
      a.layers.push_back({LayerKind::BatchNorm});
    a.layers.push_back({LayerKind::Relu});
    if (pools < 2 && rng.below(2)) {
      a.layers.push_back({LayerKind::MaxPool});
      ++pools;
    }
  }
  if (rng.below(2)) {
    LayerDesc hidden{LayerKind::Dense};
    hidden.units = 5;
    a.layers.push_back(hidden);
    a.layers.push_back({LayerKind::Relu});
  }
  LayerDesc out{LayerKind::Dense};
  out.units = 3;
  a.layers.push_back(out);
  return a;
}

/// Stem conv, then one or two residual blocks of two convs with batchnorm.
inline ArchConfig random_residual(Rng &rng) {
  ArchConfig a;
  a.in_channels = 2;
  a.in_height = a.in_width = 6;
  const std::size_t width = 2 + rng.below(4);
  auto conv = [&](std::size_t units) {
    LayerDesc c{LayerKind::Conv};
    c.units = units;
    c.kernel = 3;
    c.pad = 1;
    return c;
  };
  a.layers.push_back(conv(width));
  a.layers.push_back({LayerKind::BatchNorm});
  a.layers.push_back({LayerKind::Relu});
  const std::size_t blocks = 1 + rng.below(2);
  for (std::size_t b = 0; b < blocks; ++b) {
    a.layers.push_back({LayerKind::BlockBegin});
    a.layers.push_back(conv(2 + rng.below(5)));
    a.layers.push_back({LayerKind::BatchNorm});
    a.layers.push_back({LayerKind::Relu});
    a.layers.push_back(conv(width));
    a.layers.push_back({LayerKind::BatchNorm});
    a.layers.push_back({LayerKind::BlockEnd});
    a.layers.push_back({LayerKind::Relu});
  }
  LayerDesc out{LayerKind::Dense};
  out.units = 3;
  a.layers.push_back(out);
  return a;
}

/// Gives batchnorm layers non-trivial affine parameters and running
/// statistics so masking has something to zero.
inline void perturb_batchnorm(NetworkModel &m, Rng &rng) {
  for (auto &l : m.mutable_layers())
    if (l.kind == LayerKind::BatchNorm)
      for (std::size_t c = 0; c < l.gamma.size(); ++c) {
        l.gamma[c] = rng.uniform(0.5, 1.5);
        l.beta[c] = rng.normal(0.0, 0.5);
        l.running_mean[c] = rng.normal(0.0, 0.3);
        l.running_var[c] = rng.uniform(0.5, 2.0);
      }
  for (auto &l : m.mutable_layers())
    if (l.kind == LayerKind::Conv || l.kind == LayerKind::Dense)
      for (auto &b : l.bias.data())
        b = rng.normal(0.0, 0.2);
}

/// Random admissible removal set: a random subset of every prunable layer,
/// never all of its filters.
inline FilterRemovals random_removals(const NetworkModel &m, Rng &rng) {
  FilterRemovals r;
  for (auto i : m.prunable_layers()) {
    const std::size_t n = m.layer(i).units();
    std::vector<std::size_t> idx(n);
    for (std::size_t j = 0; j < n; ++j)
      idx[j] = j;
    rng.shuffle(idx);
    const std::size_t k = rng.below(n); // 0 .. n-1
    if (k)
      r[i] = {idx.begin(), idx.begin() + static_cast<long>(k)};
  }
  return r;
}

inline double max_abs_diff(const Tensor &a, const Tensor &b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

/// Loads a config shipped in configs/ as a CampaignConfig.
inline CampaignConfig campaign_from(const std::string &name) {
  return parse_campaign(load_config(name));
}

} // namespace playprune::testing

#endif // PLAYPRUNE_TESTS_FIXTURES_HPP
