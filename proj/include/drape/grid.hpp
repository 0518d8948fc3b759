#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "drape/geometry.hpp"

namespace drape {

// Uniform spatial hash for nearest-point queries. Cells are scanned in
// expanding Chebyshev shells; a shell at distance r cannot hold anything
// closer than (r-1) cell widths, which bounds the search.
class PointGrid {
public:
    explicit PointGrid(std::vector<Vec3> points, double cell_size = 0.0);

    int nearest(const Vec3& query) const;
    double nearest_distance(const Vec3& query) const {
        return distance(points_[nearest(query)], query);
    }

    // Indices of all points with distance <= radius, ascending by index.
    std::vector<int> within(const Vec3& query, double radius) const;

    const Vec3& point(int i) const { return points_[i]; }
    int size() const { return static_cast<int>(points_.size()); }
    double cell_size() const { return cell_; }

private:
    int64_t cell_coord(double v) const;
    static uint64_t key(int64_t x, int64_t y, int64_t z);

    std::vector<Vec3> points_;
    double cell_ = 1.0;
    std::unordered_map<uint64_t, std::vector<int>> cells_;
    int64_t min_cell_[3], max_cell_[3];
};

}  // namespace drape
