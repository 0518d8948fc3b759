#pragma once

#include <cstdlib>
#include <filesystem>
#include <map>
#include <string>

#include "drape/mesh.hpp"
#include "drape/rng.hpp"

namespace drape::testing {

inline std::string temp_path(const std::string& name) {
    static int counter = 0;
    auto dir = std::filesystem::temp_directory_path() / "drape_tests";
    std::filesystem::create_directories(dir);
    return (dir / (std::to_string(counter++) + "_" + name)).string();
}

inline Mesh make_icosphere(int subdivisions, double radius = 1.0) {
    const double p = (1.0 + std::sqrt(5.0)) / 2.0;
    Mesh m;
    m.vertices = {{-1, p, 0}, {1, p, 0},  {-1, -p, 0}, {1, -p, 0},
                  {0, -1, p}, {0, 1, p},  {0, -1, -p}, {0, 1, -p},
                  {p, 0, -1}, {p, 0, 1},  {-p, 0, -1}, {-p, 0, 1}};
    m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
               {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
               {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
               {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    for (auto& v : m.vertices) v = v.normalized();

    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            Vec3 v = ((m.vertices[a] + m.vertices[b]) * 0.5).normalized();
            int idx = m.vertex_count();
            m.vertices.push_back(v);
            midpoint[key] = idx;
            return idx;
        };
        std::vector<std::array<int, 3>> next;
        next.reserve(m.faces.size() * 4);
        for (const auto& f : m.faces) {
            int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        m.faces = std::move(next);
    }
    for (auto& v : m.vertices) v *= radius;
    return m;
}

// Random point cloud with random (possibly self-intersecting) triangles.
// Valid per Mesh::validate(); geometry is arbitrary.
inline Mesh make_random_mesh(Pcg32& rng, int vertices, int faces) {
    Mesh m;
    m.vertices.reserve(vertices);
    for (int i = 0; i < vertices; ++i)
        m.vertices.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    while (m.face_count() < faces) {
        int a = static_cast<int>(rng.next_below(vertices));
        int b = static_cast<int>(rng.next_below(vertices));
        int c = static_cast<int>(rng.next_below(vertices));
        if (a == b || b == c || a == c) continue;
        m.faces.push_back({a, b, c});
    }
    return m;
}

}  // namespace drape::testing
