#pragma once

#include <array>
#include <string>
#include <vector>

#include "hcost/geometry.hpp"
#include "hcost/model.hpp"
#include "hcost/scene.hpp"

namespace hcost {

struct MetricsRow {
    std::size_t count = 0;
    double f1 = 0.0;

    bool operator==(const MetricsRow&) const = default;
};

// Per-subset and overall F1@0.5; "all" is the query-count-weighted mean.
struct MetricsTable {
    std::array<MetricsRow, kSubsetCount> per_subset{};
    MetricsRow all{};

    bool operator==(const MetricsTable&) const = default;
};

// {i : sigma(z_i) > threshold}, strict inequality at the boundary.
std::vector<int> select_predictions(const std::vector<double>& logits,
                                    const std::vector<int>& object_ids, double threshold);

// Greedy matching by descending IoU; returns the true-positive count.
std::size_t match_predictions(const std::vector<Box3D>& pred,
                              const std::vector<Box3D>& gt, double tau = 0.5);

// F1 with the zero-target convention: no gt and no pred -> 1, no gt but
// predictions -> 0; 0/0 ratios -> 0.
double f1_for_query(const std::vector<Box3D>& pred, const std::vector<Box3D>& gt,
                    double tau = 0.5);

// Candidate (detector-style) box: ground-truth box perturbed with a jitter
// derived deterministically from (scene_id, object id).
Box3D jittered_box(const Scene& scene, const ObjectRecord& obj);

MetricsTable evaluate(const Dataset& ds, const GroundingNetwork& net, double threshold,
                      bool oracle_gt = false);

std::string metrics_to_csv(const MetricsTable& table);
MetricsTable metrics_from_csv(const std::string& text);

}  // namespace hcost
