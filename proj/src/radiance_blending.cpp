// Copyright 2026 nevrf contributors
// SPDX-License-Identifier: Apache-2.0
#include "nevrf/radiance_blending.hpp"

#include <algorithm>
#include <numeric>

namespace nevrf {

std::vector<int> select_views(const Vec3& point, const Ray& ray, std::span<const Camera> cameras,
                              std::span<const int> candidates, int k, std::optional<int> exclude) {
    if (k < 1) throw Error(ErrorKind::InvalidArgument, "k must be >= 1");
    std::vector<std::pair<double, int>> scored;
    scored.reserve(candidates.size());
    for (int v : candidates) {
        if (exclude && v == *exclude) continue;
        const Vec3 d = point - cameras[v].center();
        const double n = d.norm();
        if (n < 1e-12) continue;
        // smallest angle first, ranked by cosine
        const double c = std::clamp(ray.direction.dot(d) / n, -1.0, 1.0);
        scored.emplace_back(-c, v);
    }
    if (static_cast<int>(scored.size()) < k) {
        throw Error(ErrorKind::InsufficientViews,
                    "need " + std::to_string(k) + " source views, have " + std::to_string(scored.size()));
    }
    std::partial_sort(scored.begin(), scored.begin() + k, scored.end());
    std::vector<int> out(k);
    for (int i = 0; i < k; ++i) out[i] = scored[i].second;
    return out;
}

std::vector<int> select_views(const Vec3& point, const Ray& ray, const MultiViewFrame& frame, int k,
                              std::optional<int> exclude) {
    std::vector<int> all(frame.view_count());
    std::iota(all.begin(), all.end(), 0);
    return select_views(point, ray, frame.cameras(), all, k, exclude);
}

} // namespace nevrf
