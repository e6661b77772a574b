#pragma once

#include <algorithm>
#include <array>
#include <stdexcept>

namespace hcost {

// Axis-aligned 3D box given by centroid and full extents, meters.
struct Box3D {
    std::array<double, 3> centroid{0, 0, 0};
    std::array<double, 3> size{1, 1, 1};
};

inline double iou_aabb(const Box3D& a, const Box3D& b) {
    for (int k = 0; k < 3; ++k)
        if (a.size[k] <= 0 || b.size[k] <= 0)
            throw std::invalid_argument("iou_aabb: box extents must be positive");
    double inter = 1.0;
    for (int k = 0; k < 3; ++k) {
        const double lo = std::max(a.centroid[k] - a.size[k] / 2, b.centroid[k] - b.size[k] / 2);
        const double hi = std::min(a.centroid[k] + a.size[k] / 2, b.centroid[k] + b.size[k] / 2);
        if (hi <= lo) return 0.0;
        inter *= hi - lo;
    }
    const double va = a.size[0] * a.size[1] * a.size[2];
    const double vb = b.size[0] * b.size[1] * b.size[2];
    return inter / (va + vb - inter);
}

}  // namespace hcost
