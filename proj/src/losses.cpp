#include "drape/losses.hpp"

namespace drape {

std::vector<int> nearest_body_pairing(const std::vector<Vec3>& garment, const PointGrid& body) {
    if (body.size() == 0) throw std::runtime_error("collision: empty body");
    std::vector<int> pairing(garment.size());
    for (size_t i = 0; i < garment.size(); ++i) pairing[i] = body.nearest(garment[i]);
    return pairing;
}

double collision_energy(const std::vector<Vec3>& garment, const std::vector<Vec3>& body_vertices,
                        const std::vector<Vec3>& body_normals, double margin) {
    if (body_vertices.empty()) throw std::runtime_error("collision: empty body");
    if (body_vertices.size() != body_normals.size())
        throw std::runtime_error("collision: normal count does not match body points");
    PointGrid grid(body_vertices);
    double total = 0.0;
    for (const Vec3& p : garment) {
        int b = grid.nearest(p);
        double d = (p - body_vertices[b]).dot(body_normals[b]) - margin;
        if (d < 0.0) total += d * d;
    }
    return total;
}

void MeshTargets::validate() const {
    if (!atlas || !faces || !edges || !repose || !gt_posed || !gt_edge_lengths || !gt_normals ||
        !body_posed || !body_normals)
        throw std::runtime_error("loss: mesh targets are incomplete");
    if (gt_edge_lengths->size() != edges->size())
        throw std::runtime_error("loss: edge target count does not match edge list");
    if (gt_normals->size() != gt_posed->size())
        throw std::runtime_error("loss: normal target count does not match vertices");
    if (body_posed->size() != body_normals->size())
        throw std::runtime_error("collision: normal count does not match body points");
    bounds.validate();
}

}  // namespace drape
