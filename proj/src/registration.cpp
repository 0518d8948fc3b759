#include "drape/registration.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "drape/archive.hpp"
#include "drape/grid.hpp"

namespace drape {

void SurfaceSample::validate(int face_count) const {
    if (static_cast<int>(face_id) >= face_count)
        throw std::runtime_error("surface sample: face id out of range");
    double sum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw std::runtime_error("surface sample: negative weight");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::runtime_error("surface sample: weights sum to " + std::to_string(sum));
}

int RegistrationRecord::masked_count() const {
    int n = 0;
    for (uint8_t m : body_mask) n += m ? 1 : 0;
    return n;
}

std::vector<int> RegistrationRecord::masked_indices() const {
    std::vector<int> idx;
    for (size_t v = 0; v < body_mask.size(); ++v)
        if (body_mask[v]) idx.push_back(static_cast<int>(v));
    return idx;
}

void RegistrationRecord::validate(int face_count) const {
    if (static_cast<int>(samples.size()) != masked_count())
        throw std::runtime_error("registration record: sample count does not match mask");
    for (const auto& s : samples) s.validate(face_count);
}

Mesh warp_to_body(const Mesh& garment, const Mesh& body, int iters, double stiffness) {
    if (body.vertices.empty()) throw std::runtime_error("warp_to_body: empty body mesh");
    if (!(stiffness > 0.0 && stiffness <= 1.0))
        throw std::runtime_error("warp_to_body: stiffness must be in (0, 1]");
    garment.validate();
    body.validate();

    PointGrid body_grid(body.vertices);
    auto adjacency = vertex_adjacency(garment);
    Mesh out = garment;

    auto mean_gap = [&](const std::vector<Vec3>& verts) {
        double total = 0.0;
        for (const auto& v : verts) total += body_grid.nearest_distance(v);
        return total / static_cast<double>(verts.size());
    };

    double current = mean_gap(out.vertices);
    for (int it = 0; it < iters; ++it) {
        std::vector<Vec3> pull(out.vertices.size());
        std::vector<Vec3> smooth(out.vertices.size());
        for (size_t v = 0; v < out.vertices.size(); ++v) {
            pull[v] = body_grid.point(body_grid.nearest(out.vertices[v])) - out.vertices[v];
            if (!adjacency[v].empty()) {
                Vec3 centroid;
                for (int n : adjacency[v]) centroid += out.vertices[n];
                smooth[v] = centroid / static_cast<double>(adjacency[v].size()) -
                            out.vertices[v];
            }
        }
        double s = stiffness;
        std::vector<Vec3> proposal(out.vertices.size());
        for (int attempt = 0; attempt < 24; ++attempt) {
            for (size_t v = 0; v < out.vertices.size(); ++v)
                proposal[v] = out.vertices[v] + pull[v] * (1.0 - s) + smooth[v] * s;
            if (mean_gap(proposal) <= current + 1e-12 || stiffness == 1.0) break;
            s *= 0.5;
        }
        out.vertices = proposal;
        current = mean_gap(out.vertices);
    }
    return out;
}

std::vector<uint8_t> extract_mask(const Mesh& body, const Mesh& warped_garment,
                                  double radius) {
    if (!(radius > 0.0)) throw std::runtime_error("extract_mask: radius must be positive");
    body.validate();
    PointGrid garment_grid(warped_garment.vertices);
    std::vector<uint8_t> mask(body.vertices.size(), 0);
    int covered = 0;
    for (size_t v = 0; v < body.vertices.size(); ++v) {
        if (garment_grid.nearest_distance(body.vertices[v]) <= radius) {
            mask[v] = 1;
            ++covered;
        }
    }
    if (covered == 0)
        throw std::runtime_error("extract_mask: no body vertex within " +
                                 std::to_string(radius) + " of the garment");
    return mask;
}

std::vector<SurfaceSample> sample_faces(const Mesh& garment, int k, Pcg32& rng) {
    if (k < 1) throw std::runtime_error("sample_faces: k must be >= 1");
    garment.validate();
    std::vector<SurfaceSample> samples;
    samples.reserve(garment.faces.size() * k);
    for (size_t f = 0; f < garment.faces.size(); ++f) {
        for (int i = 0; i < k; ++i) {
            double a = rng.uniform(), b = rng.uniform();
            if (a > b) std::swap(a, b);
            SurfaceSample s;
            s.face_id = static_cast<uint32_t>(f);
            s.weights = {a, b - a, 1.0 - b};
            samples.push_back(s);
        }
    }
    return samples;
}

Vec3 sample_position(const Mesh& garment, const SurfaceSample& sample) {
    sample.validate(garment.face_count());
    const auto& f = garment.faces[sample.face_id];
    return garment.vertices[f[0]] * sample.weights[0] +
           garment.vertices[f[1]] * sample.weights[1] +
           garment.vertices[f[2]] * sample.weights[2];
}

RegistrationRecord register_garment(const Mesh& body, const Mesh& warped_garment,
                                    const std::vector<uint8_t>& mask,
                                    const std::vector<SurfaceSample>& samples) {
    if (samples.empty()) throw std::runtime_error("register_garment: no samples");
    if (mask.size() != body.vertices.size())
        throw std::runtime_error("register_garment: mask size does not match body");
    if (std::find(mask.begin(), mask.end(), uint8_t{1}) == mask.end())
        throw std::runtime_error("register_garment: empty mask");

    std::vector<Vec3> positions(samples.size());
    for (size_t i = 0; i < samples.size(); ++i)
        positions[i] = sample_position(warped_garment, samples[i]);
    PointGrid grid(std::move(positions));

    auto prefer = [&](const SurfaceSample& a, const SurfaceSample& b) {
        if (a.face_id != b.face_id) return a.face_id < b.face_id;
        return a.weights < b.weights;
    };

    RegistrationRecord record;
    record.body_mask = mask;
    for (size_t v = 0; v < body.vertices.size(); ++v) {
        if (!mask[v]) continue;
        const Vec3& q = body.vertices[v];
        int first = grid.nearest(q);
        double best_d2 = squared_distance(grid.point(first), q);
        // Resolve exact distance ties by sample content so the result does
        // not depend on the order of the sample list.
        SurfaceSample best = samples[first];
        for (int i : grid.within(q, std::sqrt(best_d2) * (1.0 + 1e-12) + 1e-300)) {
            if (squared_distance(grid.point(i), q) == best_d2 && prefer(samples[i], best))
                best = samples[i];
        }
        record.samples.push_back(best);
    }
    return record;
}

std::vector<Vec3> apply_registration(const RegistrationRecord& record, const Mesh& frame) {
    record.validate(frame.face_count());
    std::vector<Vec3> out;
    out.reserve(record.samples.size());
    for (const auto& s : record.samples) out.push_back(sample_position(frame, s));
    return out;
}

void RegistrationRecord::save(const std::string& path) const {
    NamedTensorArchive arc;
    arc.add(NamedTensor::make_u8("body_mask", {body_mask.size()},
                                 std::vector<uint8_t>(body_mask)));
    std::vector<uint32_t> faces(samples.size());
    std::vector<float> weights(samples.size() * 3);
    for (size_t i = 0; i < samples.size(); ++i) {
        faces[i] = samples[i].face_id;
        for (int k = 0; k < 3; ++k)
            weights[i * 3 + k] = static_cast<float>(samples[i].weights[k]);
    }
    arc.add(NamedTensor::make_u32("sample_faces", {samples.size()}, std::move(faces)));
    arc.add(NamedTensor::make_f32("sample_weights", {samples.size(), 3}, std::move(weights)));
    arc.save(path);
}

RegistrationRecord RegistrationRecord::load(const std::string& path) {
    auto arc = NamedTensorArchive::load(path);
    RegistrationRecord record;
    record.body_mask = arc.get("body_mask").u8;
    const auto& faces = arc.get("sample_faces");
    const auto& weights = arc.get("sample_weights");
    record.samples.resize(faces.u32.size());
    for (size_t i = 0; i < record.samples.size(); ++i) {
        record.samples[i].face_id = faces.u32[i];
        double sum = 0.0;
        for (int k = 0; k < 3; ++k) sum += weights.f32[i * 3 + k];
        // Renormalize after the f32 round trip so the sum-to-1 invariant is
        // exact again.
        for (int k = 0; k < 3; ++k)
            record.samples[i].weights[k] = weights.f32[i * 3 + k] / sum;
    }
    if (static_cast<int>(record.samples.size()) != record.masked_count())
        throw std::runtime_error("registration record: corrupt archive " + path);
    return record;
}

}  // namespace drape
