#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "drape/mesh.hpp"
#include "drape/rng.hpp"

namespace drape {

// Point on a garment face in barycentric coordinates.
struct SurfaceSample {
    uint32_t face_id = 0;
    std::array<double, 3> weights{};  // nonnegative, sum to 1

    void validate(int face_count) const;
};

// Garment expressed on body topology: which body vertices are covered, and
// for each covered vertex the surface point that reconstructs it from any
// deformation of the garment template.
struct RegistrationRecord {
    std::vector<uint8_t> body_mask;      // per body vertex
    std::vector<SurfaceSample> samples;  // one per masked vertex, in body-vertex order

    int masked_count() const;
    std::vector<int> masked_indices() const;
    void validate(int face_count) const;

    void save(const std::string& path) const;
    static RegistrationRecord load(const std::string& path);
};

// Simplified non-rigid ICP: each iteration pulls vertices toward their
// nearest body vertex, blended with a uniform Laplacian term weighted by
// stiffness. The Laplacian share is halved within an iteration whenever it
// would raise the mean gap, so the mean nearest distance never increases.
Mesh warp_to_body(const Mesh& garment, const Mesh& body, int iters, double stiffness);

// True where a body vertex lies within radius of the warped garment.
std::vector<uint8_t> extract_mask(const Mesh& body, const Mesh& warped_garment,
                                  double radius);

// k samples per face, uniform on each triangle (sorted-spacings construction).
std::vector<SurfaceSample> sample_faces(const Mesh& garment, int k, Pcg32& rng);

Vec3 sample_position(const Mesh& garment, const SurfaceSample& sample);

// For each masked body vertex, the nearest of the sampled surface points.
// Ties resolve by (face_id, weights), making the result independent of
// sample order.
RegistrationRecord register_garment(const Mesh& body, const Mesh& warped_garment,
                                    const std::vector<uint8_t>& mask,
                                    const std::vector<SurfaceSample>& samples);

// Reconstructs the registered points on a deformed copy of the garment.
std::vector<Vec3> apply_registration(const RegistrationRecord& record, const Mesh& frame);

}  // namespace drape
