#pragma once

#include <string>
#include <vector>

#include "drape/geometry.hpp"

namespace drape {

enum class MeshRole { none, body, garment_template, garment_posed, garment_canonical };

struct Mesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;
    MeshRole role = MeshRole::none;

    int vertex_count() const { return static_cast<int>(vertices.size()); }
    int face_count() const { return static_cast<int>(faces.size()); }

    // Throws if a face indexes past the vertex list, repeats a vertex, or a
    // coordinate is non-finite.
    void validate() const;
};

struct Edge {
    int a = 0, b = 0;   // a < b
    double rest_length = 0.0;
};

struct EdgeSet {
    std::vector<Edge> edges;

    int count() const { return static_cast<int>(edges.size()); }
};

Mesh load_obj(const std::string& path);
void save_obj(const Mesh& mesh, const std::string& path);

// Area-weighted average of incident face normals, normalized. Zero-area faces
// contribute nothing; a vertex with no contributing face is an error.
std::vector<Vec3> vertex_normals(const Mesh& mesh);

// One entry per unique undirected edge, rest length = current distance.
EdgeSet edge_lengths(const Mesh& mesh);

double surface_area(const Mesh& mesh);

// Uniform-weight neighbor centroid blend: v <- v + factor * (centroid - v),
// repeated `iterations` times. Vertices without neighbors stay put.
Mesh laplacian_smooth(const Mesh& mesh, int iterations, double factor);

// Adjacency as sorted unique neighbor lists, derived from face edges.
std::vector<std::vector<int>> vertex_adjacency(const Mesh& mesh);

// Submesh over the listed vertices; keeps faces whose three corners are all
// selected, reindexed to the listed order.
Mesh extract_submesh(const Mesh& mesh, const std::vector<int>& vertex_indices);

}  // namespace drape
