#pragma once

#include <array>
#include <string>
#include <vector>

#include "drape/geometry.hpp"
#include "drape/mesh.hpp"

namespace drape {

inline constexpr int kShapeCoeffs = 10;

// Articulated body: shaped template + skeleton + skinning weights.
// Joints form a tree rooted at index 0; rotating a joint spins its subtree
// about the joint's rest location.
struct BodyModel {
    std::vector<Vec3> template_vertices;          // m
    std::vector<std::array<int, 3>> faces;
    std::vector<std::vector<Vec3>> blend_shapes;  // kShapeCoeffs entries of m offsets
    std::vector<double> blend_weights;            // m x J, row-major, rows sum to 1
    std::vector<double> joint_regressor;          // J x m, row-major, rows sum to 1
    std::vector<int> parents;                     // J, parents[0] == -1

    int vertex_count() const { return static_cast<int>(template_vertices.size()); }
    int joint_count() const { return static_cast<int>(parents.size()); }
    double weight(int v, int j) const { return blend_weights[static_cast<size_t>(v) * parents.size() + j]; }

    void validate() const;

    void save(const std::string& path) const;
    static BodyModel load(const std::string& path);
};

struct BodyShape {
    std::array<double, kShapeCoeffs> coeffs{};

    void validate() const;
};

struct Pose {
    std::vector<Mat3> joint_rotations;

    int joint_count() const { return static_cast<int>(joint_rotations.size()); }
    static Pose rest(int joints) { return Pose{std::vector<Mat3>(joints)}; }
    void validate() const;
};

// Per-vertex blendshape displacements, dense over the template.
std::vector<Vec3> shape_offsets(const BodyModel& model, const BodyShape& shape);
// Same, gathered to the vertices listed in body_indices.
std::vector<Vec3> shape_offsets(const BodyModel& model, const BodyShape& shape,
                                const std::vector<int>& body_indices);

// Skeleton joint rest positions regressed from the shaped template.
std::vector<Vec3> rest_joints(const BodyModel& model, const BodyShape& shape);

// World transform per joint (identity at rest pose). The shape argument sets
// the skeleton via rest_joints.
std::vector<Affine3> joint_transforms(const BodyModel& model, const BodyShape& shape,
                                      const Pose& pose);

// Linear blend skinning. weight_rows is vertices.size() x J row-major; every
// row must sum to 1. The vertices are expected to already include any shape
// offsets; shape only positions the skeleton.
std::vector<Vec3> skin(const std::vector<Vec3>& vertices, const Pose& pose,
                       const std::vector<double>& weight_rows, const BodyModel& model,
                       const BodyShape& shape);

// Blend-weight rows for a garment whose vertex v rides body vertex
// body_indices[v].
std::vector<double> gather_weights(const BodyModel& model,
                                   const std::vector<int>& body_indices);

struct UnrotatedScene {
    std::vector<Vec3> garment;
    std::vector<Vec3> body;
    Pose pose;  // root rotation replaced by identity
};

// Rotates both vertex sets by the inverse of the root rotation and clears it
// from the pose. Exact (skin(theta') == unrotate(skin(theta))) when the root
// rest joint sits at the origin, which the synthetic generator guarantees.
UnrotatedScene remove_global_rotation(const std::vector<Vec3>& garment,
                                      const std::vector<Vec3>& body, const Pose& pose);

// Inverts skinning per vertex: recovers canonical positions c such that
// skin(c + offsets, pose) reproduces the input garment. body_indices maps
// garment vertices to body vertices (weights and offsets are gathered by it).
// With refine=true a Gauss-Newton polish runs after the closed form and
// throws if the residual fails to reach tolerance.
std::vector<Vec3> unpose(const std::vector<Vec3>& garment, const Pose& pose,
                         const BodyShape& shape, const std::vector<int>& body_indices,
                         const BodyModel& model, bool refine = false,
                         int max_iters = 20, double tolerance = 1e-9);

// Forward of unpose: adds gathered shape offsets and skins.
std::vector<Vec3> repose(const std::vector<Vec3>& canonical, const Pose& pose,
                         const BodyShape& shape, const std::vector<int>& body_indices,
                         const BodyModel& model);

}  // namespace drape
