#include "drape/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace drape {

PointGrid::PointGrid(std::vector<Vec3> points, double cell_size)
    : points_(std::move(points)) {
    if (points_.empty()) throw std::runtime_error("point grid: no points");

    if (cell_size > 0.0) {
        cell_ = cell_size;
    } else {
        Vec3 lo = points_[0], hi = points_[0];
        for (const auto& p : points_)
            for (int k = 0; k < 3; ++k) {
                lo[k] = std::min(lo[k], p[k]);
                hi[k] = std::max(hi[k], p[k]);
            }
        double diag = distance(lo, hi);
        double n = std::cbrt(static_cast<double>(points_.size()));
        cell_ = std::max(diag / std::max(n, 1.0), 1e-9);
    }

    for (int k = 0; k < 3; ++k) {
        min_cell_[k] = std::numeric_limits<int64_t>::max();
        max_cell_[k] = std::numeric_limits<int64_t>::min();
    }
    for (size_t i = 0; i < points_.size(); ++i) {
        int64_t c[3];
        for (int k = 0; k < 3; ++k) {
            c[k] = cell_coord(points_[i][k]);
            min_cell_[k] = std::min(min_cell_[k], c[k]);
            max_cell_[k] = std::max(max_cell_[k], c[k]);
        }
        cells_[key(c[0], c[1], c[2])].push_back(static_cast<int>(i));
    }
}

int64_t PointGrid::cell_coord(double v) const {
    return static_cast<int64_t>(std::floor(v / cell_));
}

uint64_t PointGrid::key(int64_t x, int64_t y, int64_t z) {
    // 21 bits per axis, offset to keep negatives positive.
    const uint64_t off = 1ull << 20;
    return ((static_cast<uint64_t>(x) + off) & 0x1fffff) << 42 |
           ((static_cast<uint64_t>(y) + off) & 0x1fffff) << 21 |
           ((static_cast<uint64_t>(z) + off) & 0x1fffff);
}

int PointGrid::nearest(const Vec3& q) const {
    // Shells are centered on the query cell clamped into the occupied box;
    // clamping only shrinks per-axis cell distances, so the (r - 1) * cell
    // lower bound below stays valid and far-away queries cost O(extent).
    int64_t qc[3] = {cell_coord(q.x), cell_coord(q.y), cell_coord(q.z)};
    int64_t max_r = 1;
    for (int k = 0; k < 3; ++k) {
        qc[k] = std::clamp(qc[k], min_cell_[k], max_cell_[k]);
        max_r = std::max(max_r, max_cell_[k] - min_cell_[k]);
    }

    int best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    auto scan_cell = [&](int64_t x, int64_t y, int64_t z) {
        auto it = cells_.find(key(x, y, z));
        if (it == cells_.end()) return;
        for (int i : it->second) {
            double d2 = squared_distance(points_[i], q);
            if (d2 < best_d2) {
                best_d2 = d2;
                best = i;
            }
        }
    };

    for (int64_t r = 0; r <= max_r + 1; ++r) {
        if (best >= 0) {
            double reachable = static_cast<double>(r - 1) * cell_;
            if (reachable > 0.0 && reachable * reachable > best_d2) break;
        }
        if (r == 0) {
            scan_cell(qc[0], qc[1], qc[2]);
            continue;
        }
        for (int64_t dx = -r; dx <= r; ++dx)
            for (int64_t dy = -r; dy <= r; ++dy)
                for (int64_t dz = -r; dz <= r; ++dz) {
                    if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
                    scan_cell(qc[0] + dx, qc[1] + dy, qc[2] + dz);
                }
    }
    if (best < 0) throw std::runtime_error("point grid: nearest query failed");
    return best;
}

std::vector<int> PointGrid::within(const Vec3& q, double radius) const {
    std::vector<int> out;
    double r2 = radius * radius;
    int64_t lo[3], hi[3];
    for (int k = 0; k < 3; ++k) {
        lo[k] = std::max(cell_coord(q[k] - radius), min_cell_[k]);
        hi[k] = std::min(cell_coord(q[k] + radius), max_cell_[k]);
    }
    for (int64_t x = lo[0]; x <= hi[0]; ++x)
        for (int64_t y = lo[1]; y <= hi[1]; ++y)
            for (int64_t z = lo[2]; z <= hi[2]; ++z) {
                auto it = cells_.find(key(x, y, z));
                if (it == cells_.end()) continue;
                for (int i : it->second)
                    if (squared_distance(points_[i], q) <= r2) out.push_back(i);
            }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace drape
