#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "drape/mesh.hpp"
#include "helpers.hpp"

using namespace drape;
using namespace drape::testing;

namespace {

Mesh unit_right_triangle() {
    Mesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    m.faces = {{0, 1, 2}};
    return m;
}

Mesh rigid_transformed(const Mesh& m, const Mat3& r, const Vec3& t) {
    Mesh out = m;
    for (auto& v : out.vertices) v = r * v + t;
    return out;
}

}  // namespace

TEST_SUITE("mesh") {

TEST_CASE("obj: minimal triangle file") {
    auto path = temp_path("tri.obj");
    {
        std::ofstream f(path);
        f << "# comment\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n";
    }
    Mesh m = load_obj(path);
    CHECK(m.vertex_count() == 3);
    CHECK(m.face_count() == 1);
    CHECK(m.vertices[1].x == doctest::Approx(1.0));
    CHECK(m.faces[0] == std::array<int, 3>{0, 1, 2});
}

TEST_CASE("obj: save/load round trip on seeded random mesh") {
    Pcg32 rng(42);
    Mesh m = make_random_mesh(rng, 100, 150);
    auto path = temp_path("roundtrip.obj");
    save_obj(m, path);
    Mesh back = load_obj(path);
    REQUIRE(back.vertex_count() == m.vertex_count());
    REQUIRE(back.faces == m.faces);
    double max_dev = 0.0;
    for (int i = 0; i < m.vertex_count(); ++i)
        max_dev = std::max(max_dev, distance(m.vertices[i], back.vertices[i]));
    CHECK(max_dev < 1e-6);
}

TEST_CASE("obj: quad face rejected") {
    auto path = temp_path("quad.obj");
    {
        std::ofstream f(path);
        f << "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
    }
    CHECK_THROWS_WITH_AS(load_obj(path), doctest::Contains("4 vertices"), std::runtime_error);
}

TEST_CASE("obj: malformed record reports line number") {
    auto path = temp_path("bad.obj");
    {
        std::ofstream f(path);
        f << "v 0 0 0\nv 1 0 zzz\n";
    }
    CHECK_THROWS_WITH_AS(load_obj(path), doctest::Contains(":2:"), std::runtime_error);
}

TEST_CASE("obj: face index styles with slashes") {
    auto path = temp_path("slashes.obj");
    {
        std::ofstream f(path);
        f << "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1 2/2/2 3//3\n";
    }
    Mesh m = load_obj(path);
    CHECK(m.faces[0] == std::array<int, 3>{0, 1, 2});
}

TEST_CASE("validate: out-of-range and repeated indices") {
    Mesh m = unit_right_triangle();
    m.faces[0][2] = 3;
    CHECK_THROWS_AS(m.validate(), std::runtime_error);
    m.faces[0] = {0, 1, 1};
    CHECK_THROWS_AS(m.validate(), std::runtime_error);
    m.faces[0] = {0, 1, 2};
    m.vertices[0].y = std::nan("");
    CHECK_THROWS_AS(m.validate(), std::runtime_error);
}

TEST_CASE("normals: flat CCW triangle points +z") {
    auto n = vertex_normals(unit_right_triangle());
    for (const auto& v : n) {
        CHECK(v.x == doctest::Approx(0.0));
        CHECK(v.y == doctest::Approx(0.0));
        CHECK(v.z == doctest::Approx(1.0));
    }
}

TEST_CASE("normals: icosphere within 5 degrees of radial") {
    Mesh sphere = make_icosphere(2);
    auto n = vertex_normals(sphere);
    double cos5 = std::cos(5.0 * M_PI / 180.0);
    for (int i = 0; i < sphere.vertex_count(); ++i) {
        Vec3 radial = sphere.vertices[i].normalized();
        CHECK(n[i].dot(radial) > cos5);
    }
}

TEST_CASE("normals: unit length on seeded random meshes") {
    Pcg32 rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        Mesh m = make_random_mesh(rng, 40, 80);
        // A random mesh may leave a vertex unused; skip those trials.
        std::vector<char> used(m.vertices.size(), 0);
        for (auto& f : m.faces)
            for (int k = 0; k < 3; ++k) used[f[k]] = 1;
        bool all_used = true;
        for (char u : used) all_used = all_used && u;
        if (!all_used) continue;
        for (const auto& v : vertex_normals(m))
            CHECK(std::abs(v.norm() - 1.0) < 1e-6);
    }
}

TEST_CASE("normals: mirroring across x=0 flips x component") {
    Mesh sphere = make_icosphere(1);
    for (auto& v : sphere.vertices) v.x += 2.0;  // move off the plane
    Mesh mirrored = sphere;
    for (auto& v : mirrored.vertices) v.x = -v.x;
    // Reflection reverses orientation; flip faces to keep outward normals.
    for (auto& f : mirrored.faces) std::swap(f[1], f[2]);
    auto n0 = vertex_normals(sphere);
    auto n1 = vertex_normals(mirrored);
    for (size_t i = 0; i < n0.size(); ++i) {
        CHECK(n1[i].x == doctest::Approx(-n0[i].x));
        CHECK(n1[i].y == doctest::Approx(n0[i].y));
        CHECK(n1[i].z == doctest::Approx(n0[i].z));
    }
}

TEST_CASE("normals: isolated vertex is an error naming the vertex") {
    Mesh m = unit_right_triangle();
    m.vertices.push_back({5, 5, 5});
    CHECK_THROWS_WITH_AS(vertex_normals(m), doctest::Contains("vertex 3"), std::runtime_error);
}

TEST_CASE("normals: zero-area faces are skipped") {
    Mesh m = unit_right_triangle();
    m.vertices.push_back({2, 0, 0});
    m.faces.push_back({1, 3, 2});      // second real triangle
    m.faces.push_back({0, 1, 3});      // collinear, zero area
    auto n = vertex_normals(m);
    for (const auto& v : n) CHECK(v.z == doctest::Approx(1.0));
}

TEST_CASE("edges: unit right triangle lengths") {
    EdgeSet es = edge_lengths(unit_right_triangle());
    REQUIRE(es.count() == 3);
    std::multiset<double> lens;
    for (const auto& e : es.edges) lens.insert(e.rest_length);
    auto it = lens.begin();
    CHECK(*it++ == doctest::Approx(1.0));
    CHECK(*it++ == doctest::Approx(1.0));
    CHECK(*it == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("edges: uniform scale doubles lengths") {
    Mesh m = make_icosphere(1);
    Mesh scaled = m;
    for (auto& v : scaled.vertices) v *= 2.0;
    EdgeSet a = edge_lengths(m), b = edge_lengths(scaled);
    REQUIRE(a.count() == b.count());
    for (int i = 0; i < a.count(); ++i)
        CHECK(b.edges[i].rest_length == doctest::Approx(2.0 * a.edges[i].rest_length));
}

TEST_CASE("edges: match brute-force pair enumeration") {
    Pcg32 rng(11);
    Mesh m = make_random_mesh(rng, 30, 60);
    std::set<std::pair<int, int>> oracle;
    for (const auto& f : m.faces) {
        for (int k = 0; k < 3; ++k) {
            int a = f[k], b = f[(k + 1) % 3];
            oracle.insert(std::minmax(a, b));
        }
    }
    EdgeSet es = edge_lengths(m);
    REQUIRE(static_cast<size_t>(es.count()) == oracle.size());
    for (const auto& e : es.edges) {
        CHECK(e.a < e.b);
        CHECK(oracle.count({e.a, e.b}) == 1);
        CHECK(e.rest_length ==
              doctest::Approx(distance(m.vertices[e.a], m.vertices[e.b])));
        CHECK(e.rest_length > 0.0);
    }
}

TEST_CASE("area: unit right triangle and additivity") {
    CHECK(surface_area(unit_right_triangle()) == doctest::Approx(0.5));
    Mesh two = unit_right_triangle();
    two.vertices.push_back({5, 0, 0});
    two.vertices.push_back({6, 0, 0});
    two.vertices.push_back({5, 1, 0});
    two.faces.push_back({3, 4, 5});
    CHECK(surface_area(two) == doctest::Approx(1.0));
}

TEST_CASE("area: 1280-face icosphere within 2% of sphere") {
    Mesh sphere = make_icosphere(3);
    REQUIRE(sphere.face_count() == 1280);
    double area = surface_area(sphere);
    CHECK(std::abs(area - 4.0 * M_PI) / (4.0 * M_PI) < 0.02);
}

TEST_CASE("area and edges: rigid invariance") {
    Pcg32 rng(3);
    Mesh m = make_icosphere(2);
    for (int trial = 0; trial < 3; ++trial) {
        Vec3 axis{rng.normal(), rng.normal(), rng.normal()};
        Mat3 r = Mat3::axis_angle(axis, rng.uniform(0, 6.28));
        Vec3 t{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)};
        Mesh moved = rigid_transformed(m, r, t);
        CHECK(surface_area(moved) ==
              doctest::Approx(surface_area(m)).epsilon(1e-6));
        EdgeSet a = edge_lengths(m), b = edge_lengths(moved);
        for (int i = 0; i < a.count(); ++i)
            CHECK(b.edges[i].rest_length ==
                  doctest::Approx(a.edges[i].rest_length).epsilon(1e-6));
    }
}

TEST_CASE("smooth: zero iterations is the identity") {
    Mesh m = make_icosphere(1);
    Mesh out = laplacian_smooth(m, 0, 0.5);
    for (int i = 0; i < m.vertex_count(); ++i)
        CHECK(distance(out.vertices[i], m.vertices[i]) == 0.0);
    CHECK(out.faces == m.faces);
}

TEST_CASE("smooth: factor 1 with symmetric neighbors lands on centroid") {
    // Square pyramid apex: 4 base neighbors centered at the origin.
    Mesh m;
    m.vertices = {{1, 0, 0}, {0, 1, 0}, {-1, 0, 0}, {0, -1, 0}, {0, 0, 1}};
    m.faces = {{0, 1, 4}, {1, 2, 4}, {2, 3, 4}, {3, 0, 4}};
    Mesh out = laplacian_smooth(m, 1, 1.0);
    CHECK(out.vertices[4].x == doctest::Approx(0.0));
    CHECK(out.vertices[4].y == doctest::Approx(0.0));
    CHECK(out.vertices[4].z == doctest::Approx(0.0));
}

TEST_CASE("smooth: roughness proxy decreases on noisy sphere") {
    Pcg32 rng(19);
    Mesh m = make_icosphere(2);
    for (auto& v : m.vertices) v *= 1.0 + 0.05 * rng.normal();

    auto roughness = [](const Mesh& mesh) {
        auto adj = vertex_adjacency(mesh);
        double total = 0.0;
        for (int i = 0; i < mesh.vertex_count(); ++i) {
            Vec3 c;
            for (int j : adj[i]) c += mesh.vertices[j];
            c = c / static_cast<double>(adj[i].size());
            total += distance(mesh.vertices[i], c);
        }
        return total / mesh.vertex_count();
    };

    double before = roughness(m);
    Mesh cur = m;
    for (int it = 0; it < 5; ++it) {
        cur = laplacian_smooth(cur, 1, 0.5);
        double after = roughness(cur);
        CHECK(after < before);
        before = after;
    }
}

TEST_CASE("smooth: preserves counts and topology") {
    Mesh m = make_icosphere(1);
    Mesh out = laplacian_smooth(m, 3, 0.7);
    CHECK(out.vertex_count() == m.vertex_count());
    CHECK(out.faces == m.faces);
    CHECK_THROWS_AS(laplacian_smooth(m, 1, 0.0), std::runtime_error);
    CHECK_THROWS_AS(laplacian_smooth(m, 1, 1.5), std::runtime_error);
    CHECK_THROWS_AS(laplacian_smooth(m, -1, 0.5), std::runtime_error);
}

}  // TEST_SUITE
