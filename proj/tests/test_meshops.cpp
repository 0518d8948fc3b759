#include <cmath>

#include "doctest.h"
#include "drape/grad_check.hpp"
#include "drape/image.hpp"
#include "drape/mesh.hpp"
#include "drape/mesh_ops.hpp"
#include "drape/rng.hpp"
#include "drape/uv_atlas.hpp"

using namespace drape;

namespace {

Mesh bumpy_grid(int nx, int ny, double spacing) {
    Mesh m;
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x)
            m.vertices.push_back(
                {x * spacing, y * spacing, 0.05 * std::sin(2.0 * x) * std::cos(1.3 * y)});
    for (int y = 0; y + 1 < ny; ++y)
        for (int x = 0; x + 1 < nx; ++x) {
            int v = y * nx + x;
            m.faces.push_back({v, v + 1, v + nx});
            m.faces.push_back({v + 1, v + nx + 1, v + nx});
        }
    return m;
}

// Single-sided atlas over a grid patch pinned at its four corners.
UvAtlas grid_atlas(const Mesh& m, int nx, int ny, int width, int height) {
    std::vector<uint8_t> labels(m.vertices.size(), 0);
    std::vector<AtlasKeypoint> kps = {{0, 0, 0.0, 0.0},
                                      {nx - 1, 0, 1.0, 0.0},
                                      {(ny - 1) * nx, 0, 0.0, 1.0},
                                      {ny * nx - 1, 0, 1.0, 1.0}};
    return build_atlas(m, labels, kps, width, height);
}

}  // namespace

TEST_SUITE("meshops") {

TEST_CASE("uv_gather agrees with the plain readback and differentiates") {
    int nx = 6, ny = 5;
    Mesh m = bumpy_grid(nx, ny, 0.1);
    UvAtlas atlas = grid_atlas(m, nx, ny, 32, 16);
    UvImage img = mesh_to_uv(atlas, m.vertices, UvRole::garment_canonical);

    Tape t;
    auto image = t.leaf(Shape{1, 3, atlas.height, atlas.width}, img.data, false);
    auto verts = uv_gather(t, image, atlas);
    auto plain = uv_to_mesh(atlas, img);
    REQUIRE(t.shape(verts) == Shape{m.vertex_count(), 3});
    double worst = 0.0;
    for (size_t i = 0; i < plain.size(); ++i)
        worst = std::max(worst, std::abs(t.val(verts)[i] - plain[i]));
    CHECK(worst < 1e-6);

    Pcg32 rng(51);
    std::vector<double> pix(static_cast<size_t>(3) * atlas.height * atlas.width);
    for (double& v : pix) v = rng.uniform(-1.0, 1.0);
    auto res = check_gradients(
        {{Shape{1, 3, atlas.height, atlas.width}, pix}},
        [&](TapeF64& t2, const std::vector<int>& ids) {
            std::vector<double> w(static_cast<size_t>(m.vertex_count()) * 3);
            Pcg32 wr(52);
            for (double& v : w) v = wr.uniform(-1.0, 1.0);
            auto g = uv_gather(t2, ids[0], atlas);
            return t2.sum(t2.mul(g, t2.constant(Shape{m.vertex_count(), 3}, w)));
        });
    CHECK(res.max_rel_err < 1e-4);

    CHECK_THROWS_WITH_AS(
        uv_gather(t, t.leaf(Shape{1, 3, 8, 8}, std::vector<float>(192, 0.0f), false), atlas),
        doctest::Contains("atlas needs"), std::runtime_error);
}

TEST_CASE("vertex_affine applies fixed transforms and differentiates") {
    Pcg32 rng(53);
    int n = 5;
    std::vector<std::array<double, 12>> tf(n);
    for (auto& m : tf)
        for (double& v : m) v = rng.uniform(-1.0, 1.0);
    std::vector<double> x(static_cast<size_t>(n) * 3);
    for (double& v : x) v = rng.uniform(-1.0, 1.0);

    TapeF64 t;
    auto y = vertex_affine(t, t.leaf(Shape{n, 3}, x, false), tf);
    for (int v = 0; v < n; ++v)
        for (int r = 0; r < 3; ++r) {
            double want = tf[v][r * 4 + 3];
            for (int c = 0; c < 3; ++c) want += tf[v][r * 4 + c] * x[static_cast<size_t>(v) * 3 + c];
            CHECK(std::abs(t.val(y)[static_cast<size_t>(v) * 3 + r] - want) < 1e-12);
        }

    auto res = check_gradients({{Shape{n, 3}, x}},
                               [&](TapeF64& t2, const std::vector<int>& ids) {
                                   auto out = vertex_affine(t2, ids[0], tf);
                                   return t2.sum(t2.mul(out, out));
                               });
    CHECK(res.max_rel_err < 1e-4);

    CHECK_THROWS_WITH_AS(vertex_affine(t, t.leaf(Shape{2, 3}, std::vector<double>(6), false), tf),
                         doctest::Contains("transforms"), std::runtime_error);
}

TEST_CASE("vertex_normals_op matches the mesh utility and differentiates") {
    Mesh m = bumpy_grid(5, 4, 0.2);
    auto want = vertex_normals(m);

    std::vector<double> x;
    for (const Vec3& v : m.vertices) {
        x.push_back(v.x);
        x.push_back(v.y);
        x.push_back(v.z);
    }
    TapeF64 t;
    auto n = vertex_normals_op(t, t.leaf(Shape{m.vertex_count(), 3}, x, false), m.faces);
    for (int v = 0; v < m.vertex_count(); ++v)
        for (int k = 0; k < 3; ++k)
            CHECK(std::abs(t.val(n)[static_cast<size_t>(v) * 3 + k] - want[v][k]) < 1e-12);

    auto res = check_gradients({{Shape{m.vertex_count(), 3}, x}},
                               [&](TapeF64& t2, const std::vector<int>& ids) {
                                   auto nn = vertex_normals_op(t2, ids[0], m.faces);
                                   Pcg32 wr(54);
                                   std::vector<double> w(x.size());
                                   for (double& v : w) v = wr.uniform(-1.0, 1.0);
                                   return t2.sum(t2.mul(nn, t2.constant(t2.shape(nn), w)));
                               });
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("edge_lengths_op measures pairs and differentiates") {
    std::vector<double> x = {0, 0, 0, 3, 4, 0, 1, 1, 1};
    std::vector<std::array<int, 2>> edges = {{0, 1}, {0, 2}, {1, 2}};

    TapeF64 t;
    auto len = edge_lengths_op(t, t.leaf(Shape{3, 3}, x, false), edges);
    CHECK(t.val(len)[0] == doctest::Approx(5.0));
    CHECK(t.val(len)[1] == doctest::Approx(std::sqrt(3.0)));
    CHECK(t.val(len)[2] == doctest::Approx(std::sqrt(4.0 + 9.0 + 1.0)));

    auto res = check_gradients({{Shape{3, 3}, x}},
                               [&](TapeF64& t2, const std::vector<int>& ids) {
                                   return t2.sum(edge_lengths_op(t2, ids[0], edges));
                               });
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("collision_penalty hand value, oracle, and gradient") {
    // One cloth vertex 1 cm inside a body point whose normal is +z, with a
    // 4 mm margin: penalty (0.010 + 0.004)^2.
    TapeF64 t;
    auto x = t.leaf(Shape{1, 3}, {0.0, 0.0, -0.01}, false);
    auto pen = collision_penalty(t, x, {Vec3{0, 0, 0}}, {Vec3{0, 0, 1}}, {0}, 0.004);
    CHECK(t.scalar(pen) == doctest::Approx(1.96e-4).epsilon(1e-9));

    Pcg32 rng(55);
    int n = 40, nb = 12;
    std::vector<Vec3> body_pts(nb), body_nrm(nb);
    for (int i = 0; i < nb; ++i) {
        body_pts[i] = {rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)};
        body_nrm[i] =
            Vec3{rng.normal(), rng.normal(), rng.normal()}.normalized();
    }
    std::vector<int> pairing(n);
    std::vector<double> cloth(static_cast<size_t>(n) * 3);
    for (int i = 0; i < n; ++i) {
        pairing[i] = static_cast<int>(rng.next_below(nb));
        for (int k = 0; k < 3; ++k)
            cloth[static_cast<size_t>(i) * 3 + k] = rng.uniform(-0.12, 0.12);
    }
    double margin = 0.01;
    double want = 0.0;
    for (int i = 0; i < n; ++i) {
        Vec3 p{cloth[i * 3], cloth[i * 3 + 1], cloth[i * 3 + 2]};
        double d = (p - body_pts[pairing[i]]).dot(body_nrm[pairing[i]]) - margin;
        if (d < 0.0) want += d * d;
    }
    REQUIRE(want > 0.0);

    TapeF64 t2;
    auto c = t2.leaf(Shape{n, 3}, cloth, false);
    auto pen2 = collision_penalty(t2, c, body_pts, body_nrm, pairing, margin);
    CHECK(t2.scalar(pen2) == doctest::Approx(want).epsilon(1e-12));

    auto res = check_gradients({{Shape{n, 3}, cloth}},
                               [&](TapeF64& t3, const std::vector<int>& ids) {
                                   return collision_penalty(t3, ids[0], body_pts, body_nrm,
                                                            pairing, margin);
                               });
    CHECK(res.max_rel_err < 1e-4);

    CHECK_THROWS_WITH_AS(collision_penalty(t2, c, body_pts, body_nrm,
                                           std::vector<int>(n, nb + 3), margin),
                         doctest::Contains("outside the body"), std::runtime_error);
}

}  // TEST_SUITE meshops
