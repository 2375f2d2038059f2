#pragma once

#include <optional>

#include <json.hpp>
#include <torch/torch.h>

#include "tse/embedder.hpp"
#include "tse/metrics.hpp"
#include "tse/mixing.hpp"

namespace tse {

struct LossWeights {
  double lambda_s = 1.0;   // reconstruction term
  double lambda_u = 0.05;  // embedder term
  double gamma = 1.0;      // triplet margin
};

nlohmann::json to_json(const LossWeights& w);
LossWeights loss_weights_from_json(const nlohmann::json& j);

// Epsilon inside the embedding distances, keeps d|z_e - z_t| finite at zero.
inline constexpr double kDistanceEps = 1e-12;

// 1/2 * (-SI-SDR(s_t, est_t) - SI-SDR(s_r, est_r)), averaged over any leading
// batch dimensions. All four tensors share one shape [..., L].
torch::Tensor si_sdr_loss(const torch::Tensor& ref_target, const torch::Tensor& ref_residual,
                          const torch::Tensor& est_target, const torch::Tensor& est_residual,
                          const SiSdrOptions& opts = {});

// max(|z_e - z_t| - |z_e - z_r| + gamma, 0), averaged over leading dimensions.
torch::Tensor triplet_embedder_loss(const torch::Tensor& z_e, const torch::Tensor& z_t,
                                    const torch::Tensor& z_r, double gamma = 1.0);

// lambda_s * [labeled] * recon + lambda_u * triplet. The reconstruction term
// is absent (not zero-weighted) for unlabeled items.
torch::Tensor combine_objective(const std::optional<torch::Tensor>& recon,
                                const torch::Tensor& triplet, const LossWeights& w);

struct SemiLoss {
  torch::Tensor total;
  std::optional<torch::Tensor> recon;  // only for labeled items
  torch::Tensor triplet;
};

// z_e comes from the enrollment; z_t, z_r from the estimates through the
// frozen embedder (gradients reach the estimates, not the embedder).
// Estimates are 1-D [L] tensors matching the item's mixture length.
SemiLoss semi_supervised_loss(const TrainItem& item, const torch::Tensor& est_target,
                              const torch::Tensor& est_residual, Embedder& embedder,
                              const LossWeights& w,
                              const std::optional<torch::Tensor>& enrollment_embedding = {});

}  // namespace tse
