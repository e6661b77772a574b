#include "hcost/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hcost {

void LossConfig::validate() const {
    if (alpha < 0 || beta < 0) throw ConfigError("LossConfig: alpha and beta must be >= 0");
    if (margin <= 0) throw ConfigError("LossConfig: margin must be > 0");
    if (predict_threshold <= 0 || predict_threshold >= 1)
        throw ConfigError("LossConfig: predict_threshold must lie in (0,1)");
    if (deltas.empty() || deltas.back() != 0.0)
        throw ConfigError("LossConfig: deltas must end with exactly 0");
    for (std::size_t i = 1; i < deltas.size(); ++i)
        if (deltas[i] >= deltas[i - 1])
            throw ConfigError("LossConfig: deltas must be strictly decreasing");
}

StageTargets hierarchical_targets(const std::vector<ObjectRecord>& objects,
                                  const std::vector<int>& target_ids,
                                  const std::vector<double>& deltas) {
    std::vector<double> dist(objects.size(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < objects.size(); ++i) {
        for (int tid : target_ids) {
            const ObjectRecord* t = nullptr;
            for (const auto& o : objects)
                if (o.id == tid) t = &o;
            if (!t) throw DataError("hierarchical_targets: unknown target id " +
                                    std::to_string(tid));
            double s = 0.0;
            for (int k = 0; k < 3; ++k) {
                const double diff = objects[i].centroid[k] - t->centroid[k];
                s += diff * diff;
            }
            dist[i] = std::min(dist[i], std::sqrt(s));
        }
    }
    StageTargets out;
    for (double delta : deltas) {
        std::vector<double> t(objects.size(), 0.0);
        for (std::size_t i = 0; i < objects.size(); ++i)
            if (dist[i] <= delta) t[i] = 1.0;
        out.stages.push_back(std::move(t));
    }
    return out;
}

std::vector<double> target_indicator(const std::vector<ObjectRecord>& objects,
                                     const std::vector<int>& target_ids) {
    std::vector<double> y(objects.size(), 0.0);
    for (std::size_t i = 0; i < objects.size(); ++i)
        if (std::find(target_ids.begin(), target_ids.end(), objects[i].id) !=
            target_ids.end())
            y[i] = 1.0;
    return y;
}

Tensor hierarchical_loss(const std::vector<Tensor>& stage_logits,
                         const StageTargets& targets, const std::vector<double>& mask,
                         double beta) {
    if (stage_logits.size() != targets.stages.size())
        throw TensorError("hierarchical_loss: one logit vector per stage required");
    Tensor total = Tensor::scalar(0.0);
    for (std::size_t s = 0; s < stage_logits.size(); ++s)
        total = add(total, bce_with_logits(stage_logits[s], targets.stages[s], mask));
    return scale(total, beta);
}

Tensor pairwise_contrastive(const Tensor& f1, const Tensor& f2, int y, double margin) {
    if (margin <= 0) throw ConfigError("pairwise_contrastive: margin must be > 0");
    Tensor diff = sub(f1, f2);
    if (y == 1) return scale(sum(mul(diff, diff)), 0.5);
    Tensor gap = relu(add_scalar(scale(norm2(diff), -1.0), margin));  // max(0, m - ||.||)
    return scale(mul(gap, gap), 0.5);
}

namespace {

// Mean over layers and rows of squared L2 row differences; second argument
// is treated as a constant (detached) target.
Tensor alignment_mean(const std::vector<Tensor>& a, const std::vector<Tensor>& b,
                      const char* who) {
    if (a.size() != b.size() || a.empty())
        throw TensorError(std::string(who) + ": layer count mismatch or empty input");
    const std::size_t n = a[0].shape()[0];
    Tensor total = Tensor::scalar(0.0);
    for (std::size_t l = 0; l < a.size(); ++l) {
        if (a[l].shape() != b[l].shape())
            throw TensorError(std::string(who) + ": shape mismatch at layer " +
                              std::to_string(l));
        Tensor diff = sub(a[l], b[l]);
        total = add(total, sum(mul(diff, diff)));
    }
    return scale(total, 1.0 / (static_cast<double>(a.size()) * static_cast<double>(n)));
}

}  // namespace

Tensor alignment_loss_attn(const std::vector<Tensor>& a_inf,
                           const std::vector<Tensor>& a_aux) {
    return alignment_mean(a_inf, a_aux, "alignment_loss_attn");
}

Tensor alignment_loss_hidden(const std::vector<Tensor>& h_inf,
                             const std::vector<Tensor>& h_aux) {
    return alignment_mean(h_inf, h_aux, "alignment_loss_hidden");
}

Tensor distinctiveness_loss(const Tensor& h_inf, const Tensor& h_aux, double margin) {
    return distinct_hinge(h_inf, h_aux, margin);
}

Tensor siamese_contrastive(const Tensor& align_attn, const Tensor& align_hidden,
                           const Tensor& distinct, double alpha) {
    return add(scale(distinct, alpha), add(align_attn, align_hidden));
}

Tensor grounding_loss(const Tensor& z_final, const std::vector<double>& target_indicator,
                      const std::vector<double>& mask) {
    return bce_with_logits(z_final, target_indicator, mask);
}

}  // namespace hcost
