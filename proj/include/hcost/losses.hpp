#pragma once

#include <vector>

#include "hcost/scene.hpp"
#include "hcost/tensor.hpp"

namespace hcost {

// All weighting and thresholding knobs in one place.
struct LossConfig {
    double alpha = 0.2;                       // distinctiveness weight
    double beta = 0.1;                        // hierarchical weight
    double margin = 1.0;                      // embedding margin m
    std::vector<double> deltas = {1.0, 0.5, 0.0};  // stage thresholds, meters
    double predict_threshold = 0.5;

    void validate() const;
    bool operator==(const LossConfig&) const = default;
};

// Per-stage binary target vectors over the scene's objects.
struct StageTargets {
    std::vector<std::vector<double>> stages;
};

StageTargets hierarchical_targets(const std::vector<ObjectRecord>& objects,
                                  const std::vector<int>& target_ids,
                                  const std::vector<double>& deltas);

// 1 where the object id is a target, in object order.
std::vector<double> target_indicator(const std::vector<ObjectRecord>& objects,
                                     const std::vector<int>& target_ids);

Tensor hierarchical_loss(const std::vector<Tensor>& stage_logits,
                         const StageTargets& targets, const std::vector<double>& mask,
                         double beta);

Tensor pairwise_contrastive(const Tensor& f1, const Tensor& f2, int y, double margin);

Tensor alignment_loss_attn(const std::vector<Tensor>& a_inf,
                           const std::vector<Tensor>& a_aux);
Tensor alignment_loss_hidden(const std::vector<Tensor>& h_inf,
                             const std::vector<Tensor>& h_aux);

Tensor distinctiveness_loss(const Tensor& h_inf, const Tensor& h_aux, double margin);

Tensor siamese_contrastive(const Tensor& align_attn, const Tensor& align_hidden,
                           const Tensor& distinct, double alpha);

Tensor grounding_loss(const Tensor& z_final, const std::vector<double>& target_indicator,
                      const std::vector<double>& mask);

}  // namespace hcost
