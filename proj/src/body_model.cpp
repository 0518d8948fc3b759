#include "drape/body_model.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

#include "drape/archive.hpp"

namespace drape {

namespace {

constexpr double kWeightRowTol = 1e-6;
constexpr double kMaxConditionNumber = 1e8;

void check_weight_rows(const std::vector<double>& rows, size_t count, int joints,
                       const char* what) {
    if (rows.size() != count * joints)
        throw std::runtime_error(std::string(what) + ": weight row count mismatch");
    for (size_t v = 0; v < count; ++v) {
        double sum = 0.0;
        for (int j = 0; j < joints; ++j) {
            double w = rows[v * joints + j];
            if (w < -kWeightRowTol)
                throw std::runtime_error(std::string(what) + ": negative weight at row " +
                                         std::to_string(v));
            sum += w;
        }
        if (std::abs(sum - 1.0) > kWeightRowTol)
            throw std::runtime_error(std::string(what) + ": weight row " + std::to_string(v) +
                                     " sums to " + std::to_string(sum));
    }
}

Affine3 rotation_about(const Vec3& center, const Mat3& r) {
    return {r, center - r * center};
}

double condition_number(const Mat3& m) {
    Eigen::Matrix3d e;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) e(i, j) = m(i, j);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig;
    eig.computeDirect(e.transpose() * e);
    double lo = eig.eigenvalues()(0), hi = eig.eigenvalues()(2);
    if (lo <= 0.0) return std::numeric_limits<double>::infinity();
    return std::sqrt(hi / lo);
}

Mat3 inverse(const Mat3& m) {
    double d = m.det();
    Mat3 inv;
    inv(0, 0) = (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) / d;
    inv(0, 1) = (m(0, 2) * m(2, 1) - m(0, 1) * m(2, 2)) / d;
    inv(0, 2) = (m(0, 1) * m(1, 2) - m(0, 2) * m(1, 1)) / d;
    inv(1, 0) = (m(1, 2) * m(2, 0) - m(1, 0) * m(2, 2)) / d;
    inv(1, 1) = (m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0)) / d;
    inv(1, 2) = (m(0, 2) * m(1, 0) - m(0, 0) * m(1, 2)) / d;
    inv(2, 0) = (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0)) / d;
    inv(2, 1) = (m(0, 1) * m(2, 0) - m(0, 0) * m(2, 1)) / d;
    inv(2, 2) = (m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0)) / d;
    return inv;
}

// Per-vertex blended transforms for the given weight rows.
std::vector<Affine3> blended_transforms(const std::vector<double>& weight_rows,
                                        size_t count, const std::vector<Affine3>& joints) {
    const int j_count = static_cast<int>(joints.size());
    std::vector<Affine3> out(count);
    for (size_t v = 0; v < count; ++v) {
        Affine3 t{Mat3::zero(), Vec3{}};
        for (int j = 0; j < j_count; ++j) {
            double w = weight_rows[v * j_count + j];
            if (w == 0.0) continue;
            t = t + joints[j].scaled(w);
        }
        out[v] = t;
    }
    return out;
}

}  // namespace

void BodyModel::validate() const {
    const size_t m = template_vertices.size();
    const int j = joint_count();
    if (m == 0) throw std::runtime_error("body model: empty template");
    if (j == 0) throw std::runtime_error("body model: no joints");
    if (parents[0] != -1) throw std::runtime_error("body model: parents[0] must be the root");
    for (int i = 1; i < j; ++i)
        if (parents[i] < 0 || parents[i] >= i)
            throw std::runtime_error("body model: parents must satisfy parent[i] < i (tree order)");
    if (blend_shapes.size() != kShapeCoeffs)
        throw std::runtime_error("body model: expected " + std::to_string(kShapeCoeffs) +
                                 " blendshapes, got " + std::to_string(blend_shapes.size()));
    for (const auto& bs : blend_shapes)
        if (bs.size() != m) throw std::runtime_error("body model: blendshape size mismatch");
    check_weight_rows(blend_weights, m, j, "body model blend_weights");
    if (joint_regressor.size() != static_cast<size_t>(j) * m)
        throw std::runtime_error("body model: joint_regressor size mismatch");
    for (int ji = 0; ji < j; ++ji) {
        double sum = 0.0;
        for (size_t v = 0; v < m; ++v) sum += joint_regressor[ji * m + v];
        if (std::abs(sum - 1.0) > kWeightRowTol)
            throw std::runtime_error("body model: joint_regressor row " + std::to_string(ji) +
                                     " sums to " + std::to_string(sum));
    }
    Mesh mesh;
    mesh.vertices = template_vertices;
    mesh.faces = faces;
    mesh.validate();
}

void BodyShape::validate() const {
    for (double c : coeffs)
        if (!std::isfinite(c)) throw std::runtime_error("shape: non-finite coefficient");
}

void Pose::validate() const {
    for (size_t j = 0; j < joint_rotations.size(); ++j)
        if (!joint_rotations[j].is_rotation(1e-5))
            throw std::runtime_error("pose: joint " + std::to_string(j) +
                                     " is not a rotation matrix");
}

std::vector<Vec3> shape_offsets(const BodyModel& model, const BodyShape& shape) {
    shape.validate();
    std::vector<Vec3> out(model.template_vertices.size());
    for (int k = 0; k < kShapeCoeffs; ++k) {
        double c = shape.coeffs[k];
        if (c == 0.0) continue;
        const auto& bs = model.blend_shapes[k];
        for (size_t v = 0; v < out.size(); ++v) out[v] += bs[v] * c;
    }
    return out;
}

std::vector<Vec3> shape_offsets(const BodyModel& model, const BodyShape& shape,
                                const std::vector<int>& body_indices) {
    if (body_indices.empty()) throw std::runtime_error("shape_offsets: empty vertex selection");
    for (int i : body_indices)
        if (i < 0 || i >= model.vertex_count())
            throw std::runtime_error("shape_offsets: body index out of range");
    auto dense = shape_offsets(model, shape);
    std::vector<Vec3> out(body_indices.size());
    for (size_t v = 0; v < body_indices.size(); ++v) out[v] = dense[body_indices[v]];
    return out;
}

std::vector<Vec3> rest_joints(const BodyModel& model, const BodyShape& shape) {
    auto offsets = shape_offsets(model, shape);
    const size_t m = model.template_vertices.size();
    std::vector<Vec3> joints(model.joint_count());
    for (int j = 0; j < model.joint_count(); ++j) {
        Vec3 p;
        for (size_t v = 0; v < m; ++v) {
            double w = model.joint_regressor[static_cast<size_t>(j) * m + v];
            if (w != 0.0) p += (model.template_vertices[v] + offsets[v]) * w;
        }
        joints[j] = p;
    }
    return joints;
}

std::vector<Affine3> joint_transforms(const BodyModel& model, const BodyShape& shape,
                                      const Pose& pose) {
    if (pose.joint_count() != model.joint_count())
        throw std::runtime_error("joint_transforms: pose joint count mismatch");
    pose.validate();
    auto joints = rest_joints(model, shape);
    std::vector<Affine3> world(model.joint_count());
    for (int j = 0; j < model.joint_count(); ++j) {
        Affine3 local = rotation_about(joints[j], pose.joint_rotations[j]);
        world[j] = j == 0 ? local : world[model.parents[j]] * local;
    }
    return world;
}

std::vector<Vec3> skin(const std::vector<Vec3>& vertices, const Pose& pose,
                       const std::vector<double>& weight_rows, const BodyModel& model,
                       const BodyShape& shape) {
    check_weight_rows(weight_rows, vertices.size(), model.joint_count(), "skin");
    auto world = joint_transforms(model, shape, pose);
    auto per_vertex = blended_transforms(weight_rows, vertices.size(), world);
    std::vector<Vec3> out(vertices.size());
    for (size_t v = 0; v < vertices.size(); ++v) out[v] = per_vertex[v](vertices[v]);
    return out;
}

std::vector<double> gather_weights(const BodyModel& model,
                                   const std::vector<int>& body_indices) {
    const int j = model.joint_count();
    std::vector<double> rows(body_indices.size() * j);
    for (size_t v = 0; v < body_indices.size(); ++v) {
        int b = body_indices[v];
        if (b < 0 || b >= model.vertex_count())
            throw std::runtime_error("gather_weights: body index out of range");
        for (int k = 0; k < j; ++k) rows[v * j + k] = model.weight(b, k);
    }
    return rows;
}

UnrotatedScene remove_global_rotation(const std::vector<Vec3>& garment,
                                      const std::vector<Vec3>& body, const Pose& pose) {
    if (pose.joint_count() == 0) throw std::runtime_error("remove_global_rotation: empty pose");
    pose.validate();
    Mat3 inv_root = pose.joint_rotations[0].transposed();
    UnrotatedScene out;
    out.garment.reserve(garment.size());
    for (const auto& v : garment) out.garment.push_back(inv_root * v);
    out.body.reserve(body.size());
    for (const auto& v : body) out.body.push_back(inv_root * v);
    out.pose = pose;
    out.pose.joint_rotations[0] = Mat3::identity();
    return out;
}

std::vector<Vec3> unpose(const std::vector<Vec3>& garment, const Pose& pose,
                         const BodyShape& shape, const std::vector<int>& body_indices,
                         const BodyModel& model, bool refine, int max_iters,
                         double tolerance) {
    if (garment.size() != body_indices.size())
        throw std::runtime_error("unpose: garment vertex count does not match body_indices");
    auto weights = gather_weights(model, body_indices);
    auto world = joint_transforms(model, shape, pose);
    auto per_vertex = blended_transforms(weights, garment.size(), world);
    auto offsets = shape_offsets(model, shape, body_indices);

    std::vector<Vec3> canonical(garment.size());
    std::vector<Mat3> inverses(garment.size());
    for (size_t v = 0; v < garment.size(); ++v) {
        if (condition_number(per_vertex[v].linear) >= kMaxConditionNumber)
            throw std::runtime_error("unpose: blended transform at vertex " + std::to_string(v) +
                                     " is numerically singular");
        inverses[v] = inverse(per_vertex[v].linear);
        canonical[v] = inverses[v] * (garment[v] - per_vertex[v].offset) - offsets[v];
    }

    if (refine) {
        // The objective is quadratic, so each step solves it exactly; the loop
        // exists to confirm the tolerance and surface numerical trouble.
        double residual = 0.0;
        for (int it = 0; it < max_iters; ++it) {
            residual = 0.0;
            for (size_t v = 0; v < garment.size(); ++v) {
                Vec3 r = per_vertex[v](canonical[v] + offsets[v]) - garment[v];
                residual = std::max(residual, std::max({std::abs(r.x), std::abs(r.y), std::abs(r.z)}));
                canonical[v] -= inverses[v] * r;
            }
            if (residual < tolerance) return canonical;
        }
        throw std::runtime_error("unpose: refinement stalled at residual " +
                                 std::to_string(residual));
    }
    return canonical;
}

std::vector<Vec3> repose(const std::vector<Vec3>& canonical, const Pose& pose,
                         const BodyShape& shape, const std::vector<int>& body_indices,
                         const BodyModel& model) {
    if (canonical.size() != body_indices.size())
        throw std::runtime_error("repose: vertex count does not match body_indices");
    auto offsets = shape_offsets(model, shape, body_indices);
    std::vector<Vec3> shaped(canonical.size());
    for (size_t v = 0; v < canonical.size(); ++v) shaped[v] = canonical[v] + offsets[v];
    return skin(shaped, pose, gather_weights(model, body_indices), model, shape);
}

void BodyModel::save(const std::string& path) const {
    validate();
    const size_t m = template_vertices.size();
    const size_t j = parents.size();
    NamedTensorArchive arc;

    std::vector<float> tv(m * 3);
    for (size_t v = 0; v < m; ++v)
        for (int k = 0; k < 3; ++k) tv[v * 3 + k] = static_cast<float>(template_vertices[v][k]);
    arc.add(NamedTensor::make_f32("template_vertices", {m, 3}, std::move(tv)));

    std::vector<uint32_t> fv(faces.size() * 3);
    for (size_t f = 0; f < faces.size(); ++f)
        for (int k = 0; k < 3; ++k) fv[f * 3 + k] = static_cast<uint32_t>(faces[f][k]);
    arc.add(NamedTensor::make_u32("faces", {faces.size(), 3}, std::move(fv)));

    std::vector<float> bs(static_cast<size_t>(kShapeCoeffs) * m * 3);
    for (int k = 0; k < kShapeCoeffs; ++k)
        for (size_t v = 0; v < m; ++v)
            for (int c = 0; c < 3; ++c)
                bs[(static_cast<size_t>(k) * m + v) * 3 + c] =
                    static_cast<float>(blend_shapes[k][v][c]);
    arc.add(NamedTensor::make_f32("blend_shapes", {kShapeCoeffs, m, 3}, std::move(bs)));

    std::vector<float> bw(blend_weights.begin(), blend_weights.end());
    arc.add(NamedTensor::make_f32("blend_weights", {m, j}, std::move(bw)));

    std::vector<float> jr(joint_regressor.begin(), joint_regressor.end());
    arc.add(NamedTensor::make_f32("joint_regressor", {j, m}, std::move(jr)));

    std::vector<uint32_t> par(j);
    for (size_t i = 0; i < j; ++i)
        par[i] = parents[i] < 0 ? 0xffffffffu : static_cast<uint32_t>(parents[i]);
    arc.add(NamedTensor::make_u32("parents", {j}, std::move(par)));

    arc.save(path);
}

BodyModel BodyModel::load(const std::string& path) {
    auto arc = NamedTensorArchive::load(path);
    BodyModel model;

    const auto& tv = arc.get("template_vertices");
    size_t m = tv.dims.at(0);
    model.template_vertices.resize(m);
    for (size_t v = 0; v < m; ++v)
        model.template_vertices[v] = {tv.f32[v * 3], tv.f32[v * 3 + 1], tv.f32[v * 3 + 2]};

    const auto& fv = arc.get("faces");
    model.faces.resize(fv.dims.at(0));
    for (size_t f = 0; f < model.faces.size(); ++f)
        for (int k = 0; k < 3; ++k) model.faces[f][k] = static_cast<int>(fv.u32[f * 3 + k]);

    const auto& bs = arc.get("blend_shapes");
    model.blend_shapes.assign(kShapeCoeffs, std::vector<Vec3>(m));
    for (int k = 0; k < kShapeCoeffs; ++k)
        for (size_t v = 0; v < m; ++v) {
            size_t base = (static_cast<size_t>(k) * m + v) * 3;
            model.blend_shapes[k][v] = {bs.f32[base], bs.f32[base + 1], bs.f32[base + 2]};
        }

    const auto& bw = arc.get("blend_weights");
    model.blend_weights.assign(bw.f32.begin(), bw.f32.end());

    const auto& jr = arc.get("joint_regressor");
    model.joint_regressor.assign(jr.f32.begin(), jr.f32.end());

    const auto& par = arc.get("parents");
    model.parents.resize(par.dims.at(0));
    for (size_t i = 0; i < model.parents.size(); ++i)
        model.parents[i] = par.u32[i] == 0xffffffffu ? -1 : static_cast<int>(par.u32[i]);

    // Weight rows are renormalized after the f32 round trip so downstream
    // sum-to-1 checks hold exactly.
    const size_t j = model.parents.size();
    for (size_t v = 0; v < m; ++v) {
        double sum = 0.0;
        for (size_t k = 0; k < j; ++k) sum += model.blend_weights[v * j + k];
        for (size_t k = 0; k < j; ++k) model.blend_weights[v * j + k] /= sum;
    }
    for (size_t ji = 0; ji < j; ++ji) {
        double sum = 0.0;
        for (size_t v = 0; v < m; ++v) sum += model.joint_regressor[ji * m + v];
        for (size_t v = 0; v < m; ++v) model.joint_regressor[ji * m + v] /= sum;
    }

    model.validate();
    return model;
}

}  // namespace drape
