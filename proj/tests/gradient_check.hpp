#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "xmodal/model.hpp"
#include "xmodal/rng.hpp"

namespace testutil {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // tensor/element of the worst deviation
};

// Central finite differences over the joint loss, perturbing every parameter
// element. Relative error uses a 1e-6 floor so dead-ReLU zero gradients do
// not divide by zero.
inline GradCheckResult finite_difference_check(xmodal::ModelParams& params,
                                               const xmodal::MiniBatch& batch,
                                               const xmodal::TrainConfig& cfg,
                                               double step = 1e-5) {
  using namespace xmodal;
  auto [loss, grads] = joint_loss_and_grads(params, batch, cfg);
  (void)loss;

  GradCheckResult result;
  const auto tensors = params.tensors();
  const auto names = params.tensor_names();
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    for (std::size_t i = 0; i < tensors[t]->data.size(); ++i) {
      const double saved = tensors[t]->data[i];
      tensors[t]->data[i] = saved + step;
      const double up = joint_loss_and_grads(params, batch, cfg).first.total;
      tensors[t]->data[i] = saved - step;
      const double down = joint_loss_and_grads(params, batch, cfg).first.total;
      tensors[t]->data[i] = saved;

      const double numeric = (up - down) / (2.0 * step);
      const double analytic = grads[t].data[i];
      const double denom =
          std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      const double rel = std::abs(numeric - analytic) / denom;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst = names[t] + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

// Small random model/batch instance for gradient checking.
struct RandomInstance {
  xmodal::ModelParams params;
  std::vector<xmodal::Canvas> canvases;
  xmodal::MiniBatch batch;
};

inline RandomInstance random_instance(std::uint64_t seed) {
  using namespace xmodal;
  Rng rng(seed);
  const int input = 8 + static_cast<int>(rng.below(2)) * 4;  // 8 or 12
  const int classes = 2 + static_cast<int>(rng.below(2));    // 2 or 3
  const char* specs[] = {"conv2,pool2,fc4", "pool2,conv3,fc5", "conv2,fc3"};
  const auto spec = parse_backbone_spec(specs[rng.below(3)]);

  RandomInstance inst;
  inst.params = init_params(spec, input, input, classes, rng);
  const int batch_size = 4 + static_cast<int>(rng.below(3));
  for (int i = 0; i < batch_size; ++i) {
    Canvas c(input, input);
    for (auto& b : c.data) b = static_cast<std::uint8_t>(rng.below(256));
    inst.canvases.push_back(std::move(c));
  }
  for (int i = 0; i < batch_size; ++i) {
    inst.batch.inputs.push_back(&inst.canvases[i]);
    inst.batch.labels.push_back(static_cast<int>(rng.below(classes)));
    inst.batch.modalities.push_back(i % 2 == 0 ? Modality::Image
                                               : Modality::Text);
  }
  return inst;
}

}  // namespace testutil
