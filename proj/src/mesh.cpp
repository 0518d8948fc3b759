#include "drape/mesh.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace drape {

void Mesh::validate() const {
    const int n = vertex_count();
    for (size_t fi = 0; fi < faces.size(); ++fi) {
        const auto& f = faces[fi];
        for (int k = 0; k < 3; ++k) {
            if (f[k] < 0 || f[k] >= n)
                throw std::runtime_error("mesh: face " + std::to_string(fi) +
                                         " index " + std::to_string(f[k]) + " out of range");
        }
        if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2])
            throw std::runtime_error("mesh: face " + std::to_string(fi) + " repeats a vertex");
    }
    for (size_t vi = 0; vi < vertices.size(); ++vi) {
        if (!vertices[vi].finite())
            throw std::runtime_error("mesh: vertex " + std::to_string(vi) + " is not finite");
    }
}

Mesh load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_obj: cannot open " + path);

    Mesh mesh;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "v") {
            Vec3 v;
            if (!(ss >> v.x >> v.y >> v.z))
                throw std::runtime_error("load_obj: " + path + ":" + std::to_string(line_no) +
                                         ": malformed vertex record");
            mesh.vertices.push_back(v);
        } else if (tag == "f") {
            std::vector<long> idx;
            std::string tok;
            while (ss >> tok) {
                // Accept "i", "i/t", "i/t/n", "i//n"; only the position index is used.
                size_t slash = tok.find('/');
                std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
                try {
                    idx.push_back(std::stol(head));
                } catch (const std::exception&) {
                    throw std::runtime_error("load_obj: " + path + ":" + std::to_string(line_no) +
                                             ": malformed face index '" + tok + "'");
                }
            }
            if (idx.size() != 3)
                throw std::runtime_error("load_obj: " + path + ":" + std::to_string(line_no) +
                                         ": face with " + std::to_string(idx.size()) +
                                         " vertices (triangles only)");
            std::array<int, 3> f;
            for (int k = 0; k < 3; ++k) {
                long i = idx[k];
                if (i < 0) i = static_cast<long>(mesh.vertices.size()) + i + 1;
                f[k] = static_cast<int>(i - 1);
            }
            mesh.faces.push_back(f);
        }
        // Other OBJ records (vn, vt, o, g, s, usemtl, ...) are ignored.
    }
    mesh.validate();
    return mesh;
}

void save_obj(const Mesh& mesh, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_obj: cannot open " + path);
    char buf[128];
    for (const auto& v : mesh.vertices) {
        std::snprintf(buf, sizeof(buf), "v %.9g %.9g %.9g\n", v.x, v.y, v.z);
        out << buf;
    }
    for (const auto& f : mesh.faces)
        out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    if (!out) throw std::runtime_error("save_obj: write failed for " + path);
}

std::vector<Vec3> vertex_normals(const Mesh& mesh) {
    mesh.validate();
    std::vector<Vec3> accum(mesh.vertices.size());
    std::vector<char> touched(mesh.vertices.size(), 0);
    for (const auto& f : mesh.faces) {
        const Vec3& a = mesh.vertices[f[0]];
        const Vec3& b = mesh.vertices[f[1]];
        const Vec3& c = mesh.vertices[f[2]];
        Vec3 n = (b - a).cross(c - a);  // length = 2 * area, so this is area weighting
        for (int k = 0; k < 3; ++k) touched[f[k]] = 1;
        if (n.squared_norm() == 0.0) continue;
        for (int k = 0; k < 3; ++k) accum[f[k]] += n;
    }
    std::vector<Vec3> normals(mesh.vertices.size());
    for (size_t i = 0; i < accum.size(); ++i) {
        if (!touched[i])
            throw std::runtime_error("vertex_normals: vertex " + std::to_string(i) +
                                     " belongs to no face");
        double len = accum[i].norm();
        if (len == 0.0)
            throw std::runtime_error("vertex_normals: vertex " + std::to_string(i) +
                                     " has only zero-area faces");
        normals[i] = accum[i] / len;
    }
    return normals;
}

EdgeSet edge_lengths(const Mesh& mesh) {
    mesh.validate();
    std::set<std::pair<int, int>> seen;
    EdgeSet es;
    for (const auto& f : mesh.faces) {
        for (int k = 0; k < 3; ++k) {
            int a = f[k], b = f[(k + 1) % 3];
            if (a > b) std::swap(a, b);
            if (seen.insert({a, b}).second)
                es.edges.push_back({a, b, distance(mesh.vertices[a], mesh.vertices[b])});
        }
    }
    return es;
}

double surface_area(const Mesh& mesh) {
    mesh.validate();
    double area = 0.0;
    for (const auto& f : mesh.faces) {
        const Vec3& a = mesh.vertices[f[0]];
        const Vec3& b = mesh.vertices[f[1]];
        const Vec3& c = mesh.vertices[f[2]];
        area += 0.5 * (b - a).cross(c - a).norm();
    }
    return area;
}

std::vector<std::vector<int>> vertex_adjacency(const Mesh& mesh) {
    std::vector<std::set<int>> adj(mesh.vertices.size());
    for (const auto& f : mesh.faces) {
        for (int k = 0; k < 3; ++k) {
            int a = f[k], b = f[(k + 1) % 3];
            adj[a].insert(b);
            adj[b].insert(a);
        }
    }
    std::vector<std::vector<int>> out(adj.size());
    for (size_t i = 0; i < adj.size(); ++i) out[i].assign(adj[i].begin(), adj[i].end());
    return out;
}

Mesh extract_submesh(const Mesh& mesh, const std::vector<int>& vertex_indices) {
    mesh.validate();
    std::vector<int> remap(mesh.vertices.size(), -1);
    Mesh out;
    out.vertices.reserve(vertex_indices.size());
    for (size_t i = 0; i < vertex_indices.size(); ++i) {
        int v = vertex_indices[i];
        if (v < 0 || v >= mesh.vertex_count())
            throw std::runtime_error("extract_submesh: vertex index out of range");
        if (remap[v] != -1) throw std::runtime_error("extract_submesh: duplicate vertex index");
        remap[v] = static_cast<int>(i);
        out.vertices.push_back(mesh.vertices[v]);
    }
    for (const auto& f : mesh.faces) {
        if (remap[f[0]] >= 0 && remap[f[1]] >= 0 && remap[f[2]] >= 0)
            out.faces.push_back({remap[f[0]], remap[f[1]], remap[f[2]]});
    }
    return out;
}

Mesh laplacian_smooth(const Mesh& mesh, int iterations, double factor) {
    if (iterations < 0) throw std::runtime_error("laplacian_smooth: iterations must be >= 0");
    if (!(factor > 0.0 && factor <= 1.0))
        throw std::runtime_error("laplacian_smooth: factor must be in (0, 1]");
    mesh.validate();

    Mesh out = mesh;
    auto adjacency = vertex_adjacency(mesh);
    std::vector<Vec3> next(out.vertices.size());
    for (int it = 0; it < iterations; ++it) {
        for (size_t i = 0; i < out.vertices.size(); ++i) {
            const auto& nbrs = adjacency[i];
            if (nbrs.empty()) {
                next[i] = out.vertices[i];
                continue;
            }
            Vec3 centroid;
            for (int j : nbrs) centroid += out.vertices[j];
            centroid = centroid / static_cast<double>(nbrs.size());
            next[i] = out.vertices[i] + (centroid - out.vertices[i]) * factor;
        }
        out.vertices = next;
    }
    return out;
}

}  // namespace drape
