#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "drape/geometry.hpp"
#include "drape/image.hpp"
#include "drape/mesh.hpp"

namespace drape {

// Keypoint pinning a mesh vertex to a normalized position inside one side
// (0 front, 1 back) of the UV template rectangle.
struct AtlasKeypoint {
    int vertex = 0;            // region-local vertex index
    uint8_t side = 0;          // 0 front, 1 back
    double u = 0.0, v = 0.0;   // position inside the side's rectangle, [0,1]
};

struct TpsControl {
    Vec3 source;
    std::array<double, 2> target{};
};

// Pixel position a keypoint at (u, v) on the given side pins to; the margin
// around the template rectangle scales with the resolution.
std::array<double, 2> atlas_template_position(int side, double u, double v, int width,
                                              int height);

// R^3 -> R^2 interpolant with kernel phi(r) = r plus an affine tail.
// Radial weights satisfy the side conditions: orthogonal to 1, x, y, z.
struct TpsMap {
    std::vector<Vec3> sources;
    std::array<std::array<double, 4>, 2> affine{};   // per output: [cx cy cz c1]
    std::vector<std::array<double, 2>> weights;      // per control point

    std::array<double, 2> evaluate(const Vec3& p) const;
};

// Interpolates every control exactly. Throws if the system is rank deficient
// in a way that prevents exact interpolation (duplicate sources with
// conflicting targets and the like); merely underdetermined systems resolve
// to the minimum-norm interpolant.
TpsMap fit_tps(const std::vector<TpsControl>& controls);

// Maps each vertex of a mesh to a pixel of a two-sided image: the front side
// occupies columns [0, width/2), the back the rest. Seam vertices (those with
// an edge to the other side) own one pixel per side; all pixels are distinct.
struct UvAtlas {
    struct Pixel {
        int x = -1, y = -1;
        bool valid() const { return x >= 0; }
        bool operator==(const Pixel& o) const { return x == o.x && y == o.y; }
    };

    int width = 0, height = 0;
    std::vector<Pixel> front, back;          // per vertex, invalid when absent
    std::vector<uint8_t> side_labels;        // 0 front, 1 back
    std::vector<uint8_t> seam;               // 1 when the vertex has two pixels
    std::vector<std::array<int, 3>> faces;
    std::vector<uint8_t> face_side;          // majority corner label
    std::vector<uint8_t> mask;               // height*width, 1 = covered

    int vertex_count() const { return static_cast<int>(front.size()); }
    int half_width() const { return width / 2; }
    const Pixel& entry(int vertex, int side) const {
        return side == 0 ? front[vertex] : back[vertex];
    }
    bool mask_at(int y, int x) const { return mask[static_cast<size_t>(y) * width + x] != 0; }

    void validate() const;
    void save(const std::string& path) const;
    static UvAtlas load(const std::string& path);
};

// Two-pass template construction: a per-side interpolant fitted to the
// keypoints lays out all vertices, then seam vertices are pushed onto the
// template boundary and the fit is repeated with them as extra controls.
// Pixel collisions move the later vertex to the nearest free covered pixel;
// exhausting a side's pixels throws an error suggesting a higher resolution.
UvAtlas build_atlas(const Mesh& mesh, const std::vector<uint8_t>& side_labels,
                    const std::vector<AtlasKeypoint>& keypoints, int width, int height);

// Rasterizes per-vertex values (C channels per vertex, layout [v*C + c]) into
// the atlas image: barycentric interpolation over each face, then each
// vertex's own pixel is overwritten with its exact value, then any residual
// covered hole copies its nearest populated pixel. Background stays 0.
UvImage mesh_to_uv(const UvAtlas& atlas, const std::vector<double>& values, int channels,
                   UvRole role = UvRole::none);
UvImage mesh_to_uv(const UvAtlas& atlas, const std::vector<Vec3>& values,
                   UvRole role = UvRole::none);

// Reads each vertex's pixels back; seam vertices average their two pixels.
std::vector<double> uv_to_mesh(const UvAtlas& atlas, const UvImage& image);
std::vector<Vec3> uv_to_mesh_points(const UvAtlas& atlas, const UvImage& image);

// Area-weighted vertex normals rendered into the atlas and renormalized to
// unit length at every covered pixel.
UvImage normal_uv(const Mesh& mesh, const UvAtlas& atlas);

}  // namespace drape
