#pragma once

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "plmgnn/gnn_layers.hpp"

namespace plmgnn::testing {

/// Finite-difference check of cross-entropy through a full classifier, over
/// every parameter, on a batch of three random trees, at a randomly
/// perturbed parameter point.
inline GradCheckResult classifier_grad_check(const ModelConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GraphClassifier<double> model(cfg, rng);
  std::vector<GraphExample> exs;
  const std::uint32_t sizes[] = {5, 8, 4};
  for (int i = 0; i < 3; ++i)
    exs.push_back(random_example(sizes[i], cfg.pe_dim, cfg.semantic_enabled ? cfg.semantic_dim : 0,
                                 cfg.type_vocab, rng, i % cfg.num_classes));
  auto batch = make_batch(std::span<const GraphExample>(exs));
  auto ps = model.parameters();
  // Move off the initialization, where GraphNorm (mean_scale = 1) cancels
  // the preceding layer's bias exactly and its gradient is identically zero.
  std::uniform_real_distribution<double> jitter(-0.2, 0.2);
  for (auto& [_, p] : ps)
    for (Eigen::Index i = 0; i < p.value().size(); ++i) p.mutable_value().data()[i] += jitter(rng);
  Leaves leaves(ps.begin(), ps.end());
  return grad_check(leaves, [&] {
    std::mt19937_64 r(0);
    return nn::cross_entropy(model.forward(batch, false, r), batch.labels);
  });
}

}  // namespace plmgnn::testing
