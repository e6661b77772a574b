#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hcost/losses.hpp"
#include "hcost/model.hpp"
#include "hcost/scene.hpp"

namespace hcost {

class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct AdamWConfig {
    double lr = 0.0005;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// Decoupled weight decay applied multiplicatively before the adaptive step.
class AdamW {
public:
    AdamW(NamedParams params, AdamWConfig cfg);

    void step();
    std::size_t step_count() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    struct Slot {
        Tensor param;
        std::vector<double> m, v;
    };
    std::vector<Slot> slots_;
    AdamWConfig cfg_;
    std::size_t t_ = 0;
};

// Scales all gradients so their global L2 norm is at most max_norm.
void clip_global_grad_norm(const NamedParams& params, double max_norm);

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 16;
    double lr = 0.0005;
    double weight_decay = 0.01;
    double grad_clip = 5.0;
    LossConfig loss;
    ModelConfig model;
    std::uint64_t seed = 0;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double loss_total = 0;
    double loss_ground = 0;
    double loss_hier = 0;
    double loss_align_attn = 0;
    double loss_align_hidden = 0;
    double loss_distinct = 0;
    double wall_time = 0;
};

std::string epoch_record_to_json(const EpochRecord& r);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Phase 1: teacher on ground-truth semantic features, grounding + hierarchical loss.
GroundingNetwork train_auxiliary(const Dataset& ds, const TrainConfig& cfg,
                                 const EpochCallback& on_epoch = nullptr);

// Phase 2: student on point clouds against the frozen teacher. The Siamese
// term is active iff alpha > 0.
GroundingNetwork train_inference(const Dataset& ds, const GroundingNetwork& teacher,
                                 const TrainConfig& cfg,
                                 const EpochCallback& on_epoch = nullptr);

// ---- checkpoints -----------------------------------------------------------

struct CheckpointMeta {
    ModelConfig model;
    InputMode mode = InputMode::Semantic;
    LossConfig loss;
    std::size_t epoch = 0;
    std::uint64_t seed = 0;
    std::uint64_t dataset_fingerprint = 0;
};

void save_checkpoint(const std::string& path, const GroundingNetwork& net,
                     const CheckpointMeta& meta);
GroundingNetwork load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

}  // namespace hcost
