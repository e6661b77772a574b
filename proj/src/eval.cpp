#include "hcost/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace hcost {

std::vector<int> select_predictions(const std::vector<double>& logits,
                                    const std::vector<int>& object_ids, double threshold) {
    if (logits.size() != object_ids.size())
        throw DataError("select_predictions: logits/ids length mismatch");
    if (threshold <= 0 || threshold >= 1)
        throw ConfigError("select_predictions: threshold must lie in (0,1)");
    std::vector<int> out;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double p = 1.0 / (1.0 + std::exp(-logits[i]));
        if (p > threshold) out.push_back(object_ids[i]);
    }
    return out;
}

std::size_t match_predictions(const std::vector<Box3D>& pred,
                              const std::vector<Box3D>& gt, double tau) {
    if (tau <= 0 || tau >= 1)
        throw ConfigError("match_predictions: tau must lie in (0,1)");
    struct Pair {
        double iou;
        std::size_t p, g;
    };
    std::vector<Pair> pairs;
    for (std::size_t p = 0; p < pred.size(); ++p)
        for (std::size_t g = 0; g < gt.size(); ++g) {
            const double v = iou_aabb(pred[p], gt[g]);
            if (v > tau) pairs.push_back({v, p, g});
        }
    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const Pair& a, const Pair& b) { return a.iou > b.iou; });
    std::vector<char> p_used(pred.size(), 0), g_used(gt.size(), 0);
    std::size_t tp = 0;
    for (const auto& pr : pairs) {
        if (p_used[pr.p] || g_used[pr.g]) continue;
        p_used[pr.p] = 1;
        g_used[pr.g] = 1;
        ++tp;
    }
    return tp;
}

double f1_for_query(const std::vector<Box3D>& pred, const std::vector<Box3D>& gt,
                    double tau) {
    if (gt.empty()) return pred.empty() ? 1.0 : 0.0;
    if (pred.empty()) return 0.0;
    const double tp = static_cast<double>(match_predictions(pred, gt, tau));
    const double precision = tp / static_cast<double>(pred.size());
    const double recall = tp / static_cast<double>(gt.size());
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

Box3D jittered_box(const Scene& scene, const ObjectRecord& obj) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : scene.scene_id) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    Rng rng(derive_seed(h, static_cast<std::uint64_t>(obj.id)));
    Box3D box = obj.box();
    constexpr double kJitterSigma = 0.05;
    for (int k = 0; k < 3; ++k) box.centroid[k] += rng.gaussian() * kJitterSigma;
    for (int k = 0; k < 3; ++k)
        box.size[k] = std::max(0.05, box.size[k] + rng.gaussian() * kJitterSigma);
    return box;
}

MetricsTable evaluate(const Dataset& ds, const GroundingNetwork& net, double threshold,
                      bool oracle_gt) {
    if (ds.scenes.empty()) throw DataError("evaluate: empty dataset");
    std::array<double, kSubsetCount> f1_sum{};
    std::array<std::size_t, kSubsetCount> counts{};
    for (const auto& scene : ds.scenes) {
        std::vector<int> ids;
        for (const auto& o : scene.objects) ids.push_back(o.id);
        for (const auto& query : scene.queries) {
            std::vector<int> selected;
            if (oracle_gt) {
                selected = query.target_ids;
            } else {
                const FusionState state = net.forward(scene.objects, query.tokens);
                const auto& z = state.logits.back().data();
                selected = select_predictions(z, ids, threshold);
            }
            std::vector<Box3D> pred, gt;
            for (int id : selected) {
                const ObjectRecord* o = scene.find_object(id);
                pred.push_back(oracle_gt ? o->box() : jittered_box(scene, *o));
            }
            for (int id : query.target_ids) gt.push_back(scene.find_object(id)->box());
            const double f1 = f1_for_query(pred, gt);
            f1_sum[static_cast<int>(query.subset)] += f1;
            ++counts[static_cast<int>(query.subset)];
        }
    }
    MetricsTable table;
    double total_sum = 0.0;
    std::size_t total_count = 0;
    for (int s = 0; s < kSubsetCount; ++s) {
        table.per_subset[s].count = counts[s];
        table.per_subset[s].f1 = counts[s] ? f1_sum[s] / static_cast<double>(counts[s]) : 0.0;
        total_sum += f1_sum[s];
        total_count += counts[s];
    }
    table.all.count = total_count;
    table.all.f1 = total_count ? total_sum / static_cast<double>(total_count) : 0.0;
    return table;
}

std::string metrics_to_csv(const MetricsTable& table) {
    std::ostringstream os;
    os << "subset,count,f1_at_0.5\n";
    char buf[64];
    for (int s = 0; s < kSubsetCount; ++s) {
        std::snprintf(buf, sizeof(buf), "%.17g", table.per_subset[s].f1);
        os << subset_name(static_cast<Subset>(s)) << "," << table.per_subset[s].count << ","
           << buf << "\n";
    }
    std::snprintf(buf, sizeof(buf), "%.17g", table.all.f1);
    os << "all," << table.all.count << "," << buf << "\n";
    return os.str();
}

MetricsTable metrics_from_csv(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != "subset,count,f1_at_0.5")
        throw DataError("metrics_from_csv: missing or bad header");
    MetricsTable table;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string name, count_s, f1_s;
        if (!std::getline(ls, name, ',') || !std::getline(ls, count_s, ',') ||
            !std::getline(ls, f1_s))
            throw DataError("metrics_from_csv: malformed row: " + line);
        MetricsRow row{std::stoul(count_s), std::stod(f1_s)};
        if (name == "all")
            table.all = row;
        else
            table.per_subset[static_cast<int>(subset_from_name(name))] = row;
    }
    return table;
}

}  // namespace hcost
