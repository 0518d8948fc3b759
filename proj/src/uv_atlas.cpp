#include "drape/uv_atlas.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "drape/archive.hpp"

namespace drape {

namespace {

// Fraction of each side rectangle kept free around the keypoint targets so
// the interpolant can overshoot without leaving the image.
constexpr double kMarginFraction = 0.04;

struct SideRect {
    double x0, x1, y0, y1;
};

// Continuous bounds, chosen so the rectangle scales exactly with resolution;
// rounding and clamping keep pixels inside the half-image.
SideRect side_rect(int side, int width, int height) {
    double half = width / 2.0;
    double mx = kMarginFraction * half;
    double my = kMarginFraction * height;
    double ox = side * half;
    return {ox + mx, ox + half - mx, my, height - my};
}


// Nearest point on the rectangle boundary: outside points clamp onto it,
// interior points move to the closest edge.
std::array<double, 2> push_to_boundary(std::array<double, 2> p, const SideRect& r) {
    double x = std::clamp(p[0], r.x0, r.x1);
    double y = std::clamp(p[1], r.y0, r.y1);
    double left = x - r.x0, right = r.x1 - x, bottom = y - r.y0, top = r.y1 - y;
    double m = std::min({left, right, bottom, top});
    if (m > 0.0) {
        if (m == left) x = r.x0;
        else if (m == right) x = r.x1;
        else if (m == bottom) y = r.y0;
        else y = r.y1;
    }
    return {x, y};
}

// Integer pixels covered by the triangle a,b,c with barycentric weights.
template <typename Fn>
void for_each_covered_pixel(const UvAtlas::Pixel& a, const UvAtlas::Pixel& b,
                            const UvAtlas::Pixel& c, Fn&& fn) {
    double area = static_cast<double>(b.x - a.x) * (c.y - a.y) -
                  static_cast<double>(b.y - a.y) * (c.x - a.x);
    if (std::abs(area) < 1e-12) return;
    int x0 = std::min({a.x, b.x, c.x}), x1 = std::max({a.x, b.x, c.x});
    int y0 = std::min({a.y, b.y, c.y}), y1 = std::max({a.y, b.y, c.y});
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            double w0 = (static_cast<double>(b.x - x) * (c.y - y) -
                         static_cast<double>(b.y - y) * (c.x - x)) / area;
            double w1 = (static_cast<double>(c.x - x) * (a.y - y) -
                         static_cast<double>(c.y - y) * (a.x - x)) / area;
            double w2 = 1.0 - w0 - w1;
            if (w0 >= -1e-9 && w1 >= -1e-9 && w2 >= -1e-9) fn(x, y, w0, w1, w2);
        }
}

std::vector<uint8_t> rasterize_mask(const UvAtlas& atlas) {
    std::vector<uint8_t> mask(static_cast<size_t>(atlas.height) * atlas.width, 0);
    for (size_t f = 0; f < atlas.faces.size(); ++f) {
        int side = atlas.face_side[f];
        const auto& face = atlas.faces[f];
        for_each_covered_pixel(atlas.entry(face[0], side), atlas.entry(face[1], side),
                               atlas.entry(face[2], side),
                               [&](int x, int y, double, double, double) {
                                   mask[static_cast<size_t>(y) * atlas.width + x] = 1;
                               });
    }
    for (int v = 0; v < atlas.vertex_count(); ++v)
        for (int side = 0; side < 2; ++side) {
            const auto& e = atlas.entry(v, side);
            if (e.valid()) mask[static_cast<size_t>(e.y) * atlas.width + e.x] = 1;
        }
    return mask;
}

uint8_t majority_side(const std::array<int, 3>& face, const std::vector<uint8_t>& labels) {
    int front = (labels[face[0]] == 0) + (labels[face[1]] == 0) + (labels[face[2]] == 0);
    return front >= 2 ? 0 : 1;
}

}  // namespace

std::array<double, 2> atlas_template_position(int side, double u, double v, int width,
                                              int height) {
    SideRect r = side_rect(side, width, height);
    return {r.x0 + u * (r.x1 - r.x0), r.y0 + v * (r.y1 - r.y0)};
}

std::array<double, 2> TpsMap::evaluate(const Vec3& p) const {
    std::array<double, 2> out;
    for (int d = 0; d < 2; ++d)
        out[d] = affine[d][0] * p.x + affine[d][1] * p.y + affine[d][2] * p.z + affine[d][3];
    for (size_t i = 0; i < sources.size(); ++i) {
        double r = distance(sources[i], p);
        out[0] += weights[i][0] * r;
        out[1] += weights[i][1] * r;
    }
    return out;
}

TpsMap fit_tps(const std::vector<TpsControl>& controls) {
    const int n = static_cast<int>(controls.size());
    if (n == 0) throw std::runtime_error("tps: no control points");
    for (const auto& c : controls)
        if (!c.source.finite() || !std::isfinite(c.target[0]) || !std::isfinite(c.target[1]))
            throw std::runtime_error("tps: non-finite control point");

    // Saddle system: kernel block, then the affine tail columns [x y z 1].
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n + 4, n + 4);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n + 4, 2);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j)
            m(i, j) = distance(controls[i].source, controls[j].source);
        const Vec3& s = controls[i].source;
        double tail[4] = {s.x, s.y, s.z, 1.0};
        for (int k = 0; k < 4; ++k) {
            m(i, n + k) = tail[k];
            m(n + k, i) = tail[k];
        }
        rhs(i, 0) = controls[i].target[0];
        rhs(i, 1) = controls[i].target[1];
    }

    // Minimum-norm least-squares: degenerate but consistent layouts (collinear
    // or coplanar sources) still yield an exact interpolant.
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(m);
    Eigen::MatrixXd sol = cod.solve(rhs);

    TpsMap map;
    map.sources.resize(n);
    map.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        map.sources[i] = controls[i].source;
        map.weights[i] = {sol(i, 0), sol(i, 1)};
    }
    for (int d = 0; d < 2; ++d)
        map.affine[d] = {sol(n + 0, d), sol(n + 1, d), sol(n + 2, d), sol(n + 3, d)};

    double scale = 1.0;
    for (const auto& c : controls)
        scale = std::max({scale, std::abs(c.target[0]), std::abs(c.target[1])});
    for (const auto& c : controls) {
        auto e = map.evaluate(c.source);
        if (std::abs(e[0] - c.target[0]) > 1e-7 * scale ||
            std::abs(e[1] - c.target[1]) > 1e-7 * scale)
            throw std::runtime_error(
                "tps: control points are rank deficient (no exact interpolant)");
    }
    return map;
}

UvAtlas build_atlas(const Mesh& mesh, const std::vector<uint8_t>& side_labels,
                    const std::vector<AtlasKeypoint>& keypoints, int width, int height) {
    mesh.validate();
    const int n = mesh.vertex_count();
    if (width < 4 || height < 2 || width % 2 != 0 || height % 2 != 0)
        throw std::runtime_error("uv atlas: resolution must be even, at least 4x2");
    if (static_cast<int>(side_labels.size()) != n)
        throw std::runtime_error("uv atlas: side label count does not match vertex count");
    for (auto s : side_labels)
        if (s > 1) throw std::runtime_error("uv atlas: side labels must be 0 or 1");

    int side_count[2] = {0, 0};
    for (auto s : side_labels) ++side_count[s];
    std::vector<std::vector<TpsControl>> controls(2);
    std::vector<std::set<int>> pinned(2);
    for (const auto& kp : keypoints) {
        if (kp.vertex < 0 || kp.vertex >= n)
            throw std::runtime_error("uv atlas: keypoint references vertex " +
                                     std::to_string(kp.vertex) + " outside the mesh");
        if (kp.side > 1 || kp.u < 0.0 || kp.u > 1.0 || kp.v < 0.0 || kp.v > 1.0)
            throw std::runtime_error("uv atlas: keypoint side or position out of range");
        controls[kp.side].push_back(
            {mesh.vertices[kp.vertex],
             atlas_template_position(kp.side, kp.u, kp.v, width, height)});
        pinned[kp.side].insert(kp.vertex);
    }
    for (int s = 0; s < 2; ++s)
        if (side_count[s] > 0 && controls[s].size() < 3)
            throw std::runtime_error("uv atlas: side " + std::to_string(s) +
                                     " needs at least 3 keypoints");

    // Seam vertices touch an edge whose endpoints carry different labels.
    std::vector<uint8_t> seam(n, 0);
    auto adjacency = vertex_adjacency(mesh);
    for (int v = 0; v < n; ++v)
        for (int u : adjacency[v])
            if (side_labels[u] != side_labels[v]) {
                seam[v] = 1;
                break;
            }

    // Pass 1 lays out each side from the keypoints alone; pass 2 re-fits with
    // every seam vertex pinned to the boundary of the side rectangle.
    std::array<TpsMap, 2> tps;
    for (int s = 0; s < 2; ++s) {
        if (side_count[s] == 0) continue;
        TpsMap first = fit_tps(controls[s]);
        SideRect rect = side_rect(s, width, height);
        auto refined = controls[s];
        for (int v = 0; v < n; ++v) {
            if (!seam[v] || pinned[s].count(v)) continue;
            auto p = push_to_boundary(first.evaluate(mesh.vertices[v]), rect);
            refined.push_back({mesh.vertices[v], p});
        }
        tps[s] = refined.size() > controls[s].size() ? fit_tps(refined) : std::move(first);
    }

    UvAtlas atlas;
    atlas.width = width;
    atlas.height = height;
    atlas.side_labels = side_labels;
    atlas.seam = seam;
    atlas.front.resize(n);
    atlas.back.resize(n);
    atlas.faces = mesh.faces;
    atlas.face_side.resize(mesh.faces.size());
    for (size_t f = 0; f < mesh.faces.size(); ++f)
        atlas.face_side[f] = majority_side(mesh.faces[f], side_labels);

    const int half = width / 2;
    auto raw_entry = [&](int v, int s) {
        auto e = tps[s].evaluate(mesh.vertices[v]);
        if (!std::isfinite(e[0]) || !std::isfinite(e[1]))
            throw std::runtime_error("uv atlas: non-finite layout for vertex " +
                                     std::to_string(v));
        UvAtlas::Pixel p;
        p.x = std::clamp(static_cast<int>(std::llround(e[0])), s * half, s * half + half - 1);
        p.y = std::clamp(static_cast<int>(std::llround(e[1])), 0, height - 1);
        return p;
    };
    for (int v = 0; v < n; ++v) {
        int s = side_labels[v];
        (s == 0 ? atlas.front : atlas.back)[v] = raw_entry(v, s);
        if (seam[v]) (s == 0 ? atlas.back : atlas.front)[v] = raw_entry(v, 1 - s);
    }

    // Collisions move the later entry to the nearest free covered pixel of
    // its side (ties broken by row, then column).
    std::vector<uint8_t> covered = rasterize_mask(atlas);
    std::vector<uint8_t> occupied(covered.size(), 0);
    auto resolve = [&](UvAtlas::Pixel& e, int s) {
        size_t at = static_cast<size_t>(e.y) * width + e.x;
        if (!occupied[at]) {
            occupied[at] = 1;
            return;
        }
        int best_x = -1, best_y = -1;
        long best_d2 = 0;
        int max_r = std::max(half, height);
        for (int r = 1; r <= max_r; ++r) {
            if (best_x >= 0 && static_cast<long>(r) * r > best_d2) break;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    if (std::max(std::abs(dx), std::abs(dy)) != r) continue;
                    int x = e.x + dx, y = e.y + dy;
                    if (x < s * half || x >= s * half + half || y < 0 || y >= height) continue;
                    size_t idx = static_cast<size_t>(y) * width + x;
                    if (occupied[idx] || !covered[idx]) continue;
                    long d2 = static_cast<long>(dx) * dx + static_cast<long>(dy) * dy;
                    if (best_x < 0 || d2 < best_d2 ||
                        (d2 == best_d2 && (y < best_y || (y == best_y && x < best_x)))) {
                        best_x = x;
                        best_y = y;
                        best_d2 = d2;
                    }
                }
        }
        if (best_x < 0)
            throw std::runtime_error(
                "uv atlas: side " + std::to_string(s) +
                " ran out of free pixels; increase the atlas resolution");
        e.x = best_x;
        e.y = best_y;
        occupied[static_cast<size_t>(best_y) * width + best_x] = 1;
    };
    for (int v = 0; v < n; ++v) {
        if (atlas.front[v].valid()) resolve(atlas.front[v], 0);
        if (atlas.back[v].valid()) resolve(atlas.back[v], 1);
    }

    atlas.mask = rasterize_mask(atlas);
    atlas.validate();
    return atlas;
}

void UvAtlas::validate() const {
    const int n = vertex_count();
    if (width < 4 || height < 2 || width % 2 != 0 || height % 2 != 0)
        throw std::runtime_error("uv atlas: bad resolution");
    if (static_cast<int>(back.size()) != n || static_cast<int>(side_labels.size()) != n ||
        static_cast<int>(seam.size()) != n)
        throw std::runtime_error("uv atlas: inconsistent per-vertex arrays");
    if (mask.size() != static_cast<size_t>(height) * width)
        throw std::runtime_error("uv atlas: mask size mismatch");
    if (face_side.size() != faces.size())
        throw std::runtime_error("uv atlas: face side count mismatch");

    const int half = width / 2;
    std::set<std::pair<int, int>> used;
    for (int v = 0; v < n; ++v) {
        int s = side_labels[v];
        const Pixel& own = entry(v, s);
        const Pixel& other = entry(v, 1 - s);
        if (!own.valid())
            throw std::runtime_error("uv atlas: vertex " + std::to_string(v) + " has no pixel");
        if (other.valid() != (seam[v] != 0))
            throw std::runtime_error("uv atlas: vertex " + std::to_string(v) +
                                     " disagrees with its seam flag");
        for (int side = 0; side < 2; ++side) {
            const Pixel& e = entry(v, side);
            if (!e.valid()) continue;
            if (e.x < side * half || e.x >= side * half + half || e.y < 0 || e.y >= height)
                throw std::runtime_error("uv atlas: pixel outside its side for vertex " +
                                         std::to_string(v));
            if (!mask_at(e.y, e.x))
                throw std::runtime_error("uv atlas: vertex pixel not covered by the mask");
            if (!used.insert({e.x, e.y}).second)
                throw std::runtime_error("uv atlas: two vertices share pixel (" +
                                         std::to_string(e.x) + ", " + std::to_string(e.y) + ")");
        }
    }
    for (size_t f = 0; f < faces.size(); ++f) {
        for (int k = 0; k < 3; ++k)
            if (faces[f][k] < 0 || faces[f][k] >= n)
                throw std::runtime_error("uv atlas: face corner out of range");
        if (face_side[f] != majority_side(faces[f], side_labels))
            throw std::runtime_error("uv atlas: face side is not the majority corner label");
    }
}

void UvAtlas::save(const std::string& path) const {
    validate();
    const uint32_t absent = 0xffffffffu;
    auto pack = [&](const std::vector<Pixel>& entries) {
        std::vector<uint32_t> out;
        out.reserve(entries.size() * 2);
        for (const auto& e : entries) {
            out.push_back(e.valid() ? static_cast<uint32_t>(e.x) : absent);
            out.push_back(e.valid() ? static_cast<uint32_t>(e.y) : absent);
        }
        return out;
    };
    std::vector<uint32_t> face_data;
    face_data.reserve(faces.size() * 3);
    for (const auto& f : faces)
        for (int k = 0; k < 3; ++k) face_data.push_back(static_cast<uint32_t>(f[k]));

    NamedTensorArchive archive;
    archive.add(NamedTensor::make_u32("size", {2},
                                      {static_cast<uint32_t>(width), static_cast<uint32_t>(height)}));
    archive.add(NamedTensor::make_u32("front", {front.size(), 2}, pack(front)));
    archive.add(NamedTensor::make_u32("back", {back.size(), 2}, pack(back)));
    archive.add(NamedTensor::make_u8("side_labels", {side_labels.size()}, side_labels));
    archive.add(NamedTensor::make_u8("seam", {seam.size()}, seam));
    archive.add(NamedTensor::make_u32("faces", {faces.size(), 3}, face_data));
    archive.add(NamedTensor::make_u8("face_side", {face_side.size()}, face_side));
    archive.add(NamedTensor::make_u8("mask", {static_cast<uint64_t>(height),
                                              static_cast<uint64_t>(width)}, mask));
    archive.save(path);
}

UvAtlas UvAtlas::load(const std::string& path) {
    NamedTensorArchive archive = NamedTensorArchive::load(path);
    UvAtlas atlas;
    const auto& size = archive.get("size").u32;
    if (size.size() != 2) throw std::runtime_error(path + ": bad atlas size tensor");
    atlas.width = static_cast<int>(size[0]);
    atlas.height = static_cast<int>(size[1]);

    auto unpack = [&](const std::string& name) {
        const auto& data = archive.get(name).u32;
        std::vector<Pixel> entries(data.size() / 2);
        for (size_t v = 0; v < entries.size(); ++v)
            if (data[2 * v] != 0xffffffffu) {
                entries[v].x = static_cast<int>(data[2 * v]);
                entries[v].y = static_cast<int>(data[2 * v + 1]);
            }
        return entries;
    };
    atlas.front = unpack("front");
    atlas.back = unpack("back");
    atlas.side_labels = archive.get("side_labels").u8;
    atlas.seam = archive.get("seam").u8;
    atlas.face_side = archive.get("face_side").u8;
    atlas.mask = archive.get("mask").u8;
    const auto& face_data = archive.get("faces").u32;
    atlas.faces.resize(face_data.size() / 3);
    for (size_t f = 0; f < atlas.faces.size(); ++f)
        for (int k = 0; k < 3; ++k)
            atlas.faces[f][k] = static_cast<int>(face_data[3 * f + k]);

    try {
        atlas.validate();
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    return atlas;
}

UvImage mesh_to_uv(const UvAtlas& atlas, const std::vector<double>& values, int channels,
                   UvRole role) {
    const int n = atlas.vertex_count();
    if (channels < 1) throw std::runtime_error("mesh_to_uv: need at least one channel");
    if (values.size() != static_cast<size_t>(n) * channels)
        throw std::runtime_error("mesh_to_uv: expected " + std::to_string(n) + " x " +
                                 std::to_string(channels) + " values, got " +
                                 std::to_string(values.size()));

    UvImage img(atlas.height, atlas.width, channels);
    img.role = role;
    img.mask = atlas.mask;
    std::vector<uint8_t> written(img.mask.size(), 0);

    for (size_t f = 0; f < atlas.faces.size(); ++f) {
        int side = atlas.face_side[f];
        const auto& face = atlas.faces[f];
        for_each_covered_pixel(
            atlas.entry(face[0], side), atlas.entry(face[1], side), atlas.entry(face[2], side),
            [&](int x, int y, double w0, double w1, double w2) {
                for (int c = 0; c < channels; ++c)
                    img.at(c, y, x) = static_cast<float>(w0 * values[face[0] * channels + c] +
                                                         w1 * values[face[1] * channels + c] +
                                                         w2 * values[face[2] * channels + c]);
                written[static_cast<size_t>(y) * atlas.width + x] = 1;
            });
    }
    for (int v = 0; v < n; ++v)
        for (int side = 0; side < 2; ++side) {
            const auto& e = atlas.entry(v, side);
            if (!e.valid()) continue;
            for (int c = 0; c < channels; ++c)
                img.at(c, e.y, e.x) = static_cast<float>(values[v * channels + c]);
            written[static_cast<size_t>(e.y) * atlas.width + e.x] = 1;
        }

    // Residual covered holes copy their nearest populated pixel.
    for (int y = 0; y < atlas.height; ++y)
        for (int x = 0; x < atlas.width; ++x) {
            size_t at = static_cast<size_t>(y) * atlas.width + x;
            if (!img.mask[at] || written[at]) continue;
            int best_x = -1, best_y = -1;
            long best_d2 = 0;
            int max_r = std::max(atlas.width, atlas.height);
            for (int r = 1; r <= max_r; ++r) {
                if (best_x >= 0 && static_cast<long>(r) * r > best_d2) break;
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx) {
                        if (std::max(std::abs(dx), std::abs(dy)) != r) continue;
                        int qx = x + dx, qy = y + dy;
                        if (qx < 0 || qx >= atlas.width || qy < 0 || qy >= atlas.height) continue;
                        if (!written[static_cast<size_t>(qy) * atlas.width + qx]) continue;
                        long d2 = static_cast<long>(dx) * dx + static_cast<long>(dy) * dy;
                        if (best_x < 0 || d2 < best_d2 ||
                            (d2 == best_d2 && (qy < best_y || (qy == best_y && qx < best_x)))) {
                            best_x = qx;
                            best_y = qy;
                            best_d2 = d2;
                        }
                    }
            }
            if (best_x < 0) continue;
            for (int c = 0; c < channels; ++c) img.at(c, y, x) = img.at(c, best_y, best_x);
        }

    img.zero_background();
    return img;
}

UvImage mesh_to_uv(const UvAtlas& atlas, const std::vector<Vec3>& values, UvRole role) {
    std::vector<double> flat;
    flat.reserve(values.size() * 3);
    for (const auto& v : values) {
        flat.push_back(v.x);
        flat.push_back(v.y);
        flat.push_back(v.z);
    }
    return mesh_to_uv(atlas, flat, 3, role);
}

std::vector<double> uv_to_mesh(const UvAtlas& atlas, const UvImage& image) {
    if (image.height != atlas.height || image.width != atlas.width)
        throw std::runtime_error("uv_to_mesh: image is " + std::to_string(image.width) + "x" +
                                 std::to_string(image.height) + " but the atlas needs " +
                                 std::to_string(atlas.width) + "x" + std::to_string(atlas.height));
    const int n = atlas.vertex_count();
    const int channels = image.channels;
    std::vector<double> values(static_cast<size_t>(n) * channels, 0.0);
    for (int v = 0; v < n; ++v) {
        int reads = 0;
        for (int side = 0; side < 2; ++side) {
            const auto& e = atlas.entry(v, side);
            if (!e.valid()) continue;
            for (int c = 0; c < channels; ++c)
                values[v * channels + c] += image.at(c, e.y, e.x);
            ++reads;
        }
        for (int c = 0; c < channels; ++c) values[v * channels + c] /= reads;
    }
    return values;
}

std::vector<Vec3> uv_to_mesh_points(const UvAtlas& atlas, const UvImage& image) {
    if (image.channels != 3) throw std::runtime_error("uv_to_mesh_points: need 3 channels");
    auto flat = uv_to_mesh(atlas, image);
    std::vector<Vec3> out(flat.size() / 3);
    for (size_t v = 0; v < out.size(); ++v)
        out[v] = {flat[3 * v], flat[3 * v + 1], flat[3 * v + 2]};
    return out;
}

UvImage normal_uv(const Mesh& mesh, const UvAtlas& atlas) {
    if (mesh.vertex_count() != atlas.vertex_count())
        throw std::runtime_error("normal_uv: mesh does not match the atlas topology");
    UvImage img = mesh_to_uv(atlas, vertex_normals(mesh), UvRole::normals);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            if (!img.mask_at(y, x)) continue;
            Vec3 d{img.at(0, y, x), img.at(1, y, x), img.at(2, y, x)};
            double len = d.norm();
            Vec3 unit = len < 1e-12 ? Vec3{0, 0, 1} : d / len;
            img.at(0, y, x) = static_cast<float>(unit.x);
            img.at(1, y, x) = static_cast<float>(unit.y);
            img.at(2, y, x) = static_cast<float>(unit.z);
        }
    return img;
}

}  // namespace drape
