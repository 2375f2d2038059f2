#include "tse/losses.hpp"

#include "tse/error.hpp"
#include "tse/json_util.hpp"

namespace tse {

using nlohmann::json;

namespace {

torch::Tensor as_tensor(const Waveform& w) {
  return torch::from_blob(const_cast<float*>(w.samples.data()),
                          {static_cast<std::int64_t>(w.size())}, torch::kFloat32)
      .clone();
}

torch::Tensor stable_distance(const torch::Tensor& a, const torch::Tensor& b) {
  return torch::sqrt((a - b).square().sum(-1) + kDistanceEps);
}

}  // namespace

json to_json(const LossWeights& w) {
  return {{"lambda_s", w.lambda_s}, {"lambda_u", w.lambda_u}, {"gamma", w.gamma}};
}

LossWeights loss_weights_from_json(const json& j) {
  LossWeights w;
  ConfigReader(j, "loss")
      .get("lambda_s", w.lambda_s)
      .get("lambda_u", w.lambda_u)
      .get("gamma", w.gamma)
      .finish();
  return w;
}

torch::Tensor si_sdr_loss(const torch::Tensor& ref_target, const torch::Tensor& ref_residual,
                          const torch::Tensor& est_target, const torch::Tensor& est_residual,
                          const SiSdrOptions& opts) {
  require(ref_target.sizes() == est_target.sizes() && ref_residual.sizes() == est_residual.sizes() &&
              ref_target.sizes() == ref_residual.sizes(),
          Errc::kLengthMismatch, "si_sdr_loss: all four signals must have the same shape");
  auto per_item = -0.5 * (si_sdr(ref_target, est_target, opts) + si_sdr(ref_residual, est_residual, opts));
  return per_item.mean();
}

torch::Tensor triplet_embedder_loss(const torch::Tensor& z_e, const torch::Tensor& z_t,
                                    const torch::Tensor& z_r, double gamma) {
  require(z_e.sizes() == z_t.sizes() && z_e.sizes() == z_r.sizes(), Errc::kDimensionMismatch,
          "triplet_embedder_loss: embeddings differ in shape");
  auto margin = stable_distance(z_e, z_t) - stable_distance(z_e, z_r) + gamma;
  return torch::relu(margin).mean();
}

torch::Tensor combine_objective(const std::optional<torch::Tensor>& recon,
                                const torch::Tensor& triplet, const LossWeights& w) {
  auto total = w.lambda_u * triplet;
  if (recon) total = w.lambda_s * *recon + total;
  return total;
}

SemiLoss semi_supervised_loss(const TrainItem& item, const torch::Tensor& est_target,
                              const torch::Tensor& est_residual, Embedder& embedder,
                              const LossWeights& w,
                              const std::optional<torch::Tensor>& enrollment_embedding) {
  const auto n = static_cast<std::int64_t>(item.mixture.size());
  require(est_target.dim() == 1 && est_target.size(0) == n && est_residual.sizes() == est_target.sizes(),
          Errc::kLengthMismatch, "estimates must be 1-D and match the mixture length");
  if (item.labeled) {
    require(item.target.has_value() && item.residual.has_value(), Errc::kInvalidArgument,
            "labeled item is missing its reference signals");
  }

  const auto emb_dtype = embedder->parameters().front().scalar_type();
  torch::Tensor z_e;
  if (enrollment_embedding) {
    z_e = enrollment_embedding->reshape({1, -1});
  } else {
    torch::NoGradGuard no_grad;
    z_e = embedder->forward(as_tensor(item.enrollment).to(emb_dtype).unsqueeze(0));
  }
  auto z = embedder->forward(torch::stack({est_target, est_residual}).to(emb_dtype));
  z = z.to(est_target.scalar_type());

  SemiLoss out;
  out.triplet = triplet_embedder_loss(z_e.to(z.scalar_type()), z.narrow(0, 0, 1), z.narrow(0, 1, 1), w.gamma);
  if (item.labeled) {
    const auto dtype = est_target.scalar_type();
    out.recon = si_sdr_loss(as_tensor(*item.target).to(dtype), as_tensor(*item.residual).to(dtype),
                            est_target, est_residual);
  }
  out.total = combine_objective(out.recon, out.triplet, w);
  return out;
}

}  // namespace tse
