#include <doctest.h>

#include <cmath>

#include "drape/synth.hpp"
#include "helpers.hpp"

using namespace drape;
using namespace drape::testing;

TEST_SUITE("synth") {

TEST_CASE("default body satisfies model invariants") {
    auto body = make_body(BodyConfig{}, 0);
    body.model.validate();
    CHECK(body.model.vertex_count() > 1500);
    CHECK(body.model.joint_count() == 13);

    // Root joint rests at the origin for every shape (rotation removal
    // depends on this).
    for (uint64_t s : {0ull, 1ull, 2ull}) {
        Pcg32 rng(s);
        BodyShape shape;
        for (auto& c : shape.coeffs) c = rng.uniform(-2, 2);
        auto joints = rest_joints(body.model, shape);
        CHECK(joints[0].norm() < 1e-12);
    }

    // Regions index valid vertices and carry usable keypoints.
    for (const auto& region : body.regions) {
        CHECK(!region.body_indices.empty());
        CHECK(region.side_labels.size() == region.body_indices.size());
        CHECK(region.keypoints.size() >= 10);
        for (const auto& kp : region.keypoints) {
            CHECK(kp.vertex >= 0);
            CHECK(kp.vertex < static_cast<int>(region.body_indices.size()));
            CHECK(kp.u >= 0.0);
            CHECK(kp.u <= 1.0);
        }
    }
}

TEST_CASE("identity pose skin equals template") {
    auto body = make_body(BodyConfig{}, 4);
    auto posed = skin(body.model.template_vertices, Pose::rest(body.model.joint_count()),
                      body.model.blend_weights, body.model, BodyShape{});
    for (size_t v = 0; v < posed.size(); ++v)
        CHECK(distance(posed[v], body.model.template_vertices[v]) == 0.0);
}

TEST_CASE("two seeds: same topology, different proportions") {
    auto a = make_body(BodyConfig{}, 1);
    auto b = make_body(BodyConfig{}, 2);
    CHECK(a.model.faces == b.model.faces);
    CHECK(a.model.parents == b.model.parents);
    REQUIRE(a.model.vertex_count() == b.model.vertex_count());
    double diff = 0.0;
    for (int v = 0; v < a.model.vertex_count(); ++v)
        diff = std::max(diff, distance(a.model.template_vertices[v],
                                       b.model.template_vertices[v]));
    CHECK(diff > 1e-3);
}

TEST_CASE("same seed reproduces the body exactly") {
    auto a = make_body(BodyConfig{}, 9);
    auto b = make_body(BodyConfig{}, 9);
    CHECK(a.model.template_vertices.size() == b.model.template_vertices.size());
    for (size_t v = 0; v < a.model.template_vertices.size(); ++v)
        CHECK(distance(a.model.template_vertices[v], b.model.template_vertices[v]) == 0.0);
    CHECK(a.model.blend_weights == b.model.blend_weights);
}

TEST_CASE("garment shell sits exactly offset along body normals") {
    auto body = make_body(BodyConfig{}, 7);
    const auto& region = body.region("shirt").body_indices;
    Mesh garment = make_garment(body.model, region, 0.01);
    REQUIRE(garment.vertex_count() == static_cast<int>(region.size()));

    Mesh body_mesh = body.mesh();
    auto normals = vertex_normals(body_mesh);
    for (size_t v = 0; v < region.size(); ++v) {
        Vec3 d = garment.vertices[v] - body.model.template_vertices[region[v]];
        CHECK(std::abs(d.norm() - 0.01) < 1e-12);
        CHECK(d.normalized().dot(normals[region[v]]) > 1.0 - 1e-9);
    }
    CHECK_THROWS_AS(make_garment(body.model, {}, 0.01), std::runtime_error);
    CHECK_THROWS_AS(make_garment(body.model, region, -0.01), std::runtime_error);
}

TEST_CASE("zero wrinkle amplitude makes frames pure skinning") {
    auto body = make_body(BodyConfig{}, 11);
    const auto& region = body.region("skirt").body_indices;
    Mesh garment = make_garment(body.model, region, 0.008);
    WrinkleConfig wrinkles;
    wrinkles.amplitude = 0.0;
    auto seq = make_sequence(body.model, garment, region, 4, wrinkles, PoseConfig{}, 3);
    REQUIRE(seq.frames.size() == 4);
    for (const auto& frame : seq.frames) {
        for (size_t v = 0; v < frame.canonical.size(); ++v)
            CHECK(distance(frame.canonical[v], garment.vertices[v]) == 0.0);
        auto direct = repose(garment.vertices, frame.pose, seq.shape, region, body.model);
        for (size_t v = 0; v < direct.size(); ++v)
            CHECK(distance(frame.posed[v], direct[v]) == 0.0);
    }
}

TEST_CASE("unposing recovers the stored canonical garment") {
    auto body = make_body(BodyConfig{}, 13);
    const auto& region = body.region("shirt").body_indices;
    Mesh garment = make_garment(body.model, region, 0.01);
    auto seq = make_sequence(body.model, garment, region, 6, WrinkleConfig{}, PoseConfig{}, 19);
    for (const auto& frame : seq.frames) {
        auto recovered = unpose(frame.posed, frame.pose, seq.shape, region, body.model);
        double worst = 0.0;
        for (size_t v = 0; v < recovered.size(); ++v)
            worst = std::max(worst, distance(recovered[v], frame.canonical[v]));
        CHECK(worst < 1e-5);
    }
}

TEST_CASE("fixed seed reproduces a sequence exactly") {
    auto body = make_body(BodyConfig{}, 2);
    const auto& region = body.region("skirt").body_indices;
    Mesh garment = make_garment(body.model, region, 0.01);
    auto a = make_sequence(body.model, garment, region, 5, WrinkleConfig{}, PoseConfig{}, 8);
    auto b = make_sequence(body.model, garment, region, 5, WrinkleConfig{}, PoseConfig{}, 8);
    for (size_t t = 0; t < a.frames.size(); ++t)
        for (size_t v = 0; v < a.frames[t].posed.size(); ++v)
            CHECK(distance(a.frames[t].posed[v], b.frames[t].posed[v]) == 0.0);
}

TEST_CASE("wrinkles stay within the configured amplitude") {
    auto body = make_body(BodyConfig{}, 23);
    const auto& region = body.region("shirt").body_indices;
    Mesh garment = make_garment(body.model, region, 0.01);
    WrinkleConfig wrinkles;
    wrinkles.amplitude = 0.006;
    auto seq = make_sequence(body.model, garment, region, 8, wrinkles, PoseConfig{}, 4);
    for (const auto& frame : seq.frames)
        for (size_t v = 0; v < frame.canonical.size(); ++v)
            CHECK(distance(frame.canonical[v], garment.vertices[v]) <= wrinkles.amplitude + 1e-9);
}

}  // TEST_SUITE
