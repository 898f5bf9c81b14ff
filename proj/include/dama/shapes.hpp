// Built-in synthetic body meshes: flat patch, icosphere, capsule and a
// two-joint cylinder. All are closed or bordered manifolds with valid
// skinning data so the full pipeline can run on them.
#pragma once

#include <cmath>
#include <map>

#include "dama/geometry.hpp"

namespace dama {

inline void attach_single_joint(SkinnedMesh& mesh) {
    mesh.joints = {Rigid{}};
    mesh.skin_weights.assign(mesh.vertices.size(), {SkinInfluence{0, 1.0}});
}

// Regular grid of 2*n*n triangles in the z=0 plane, spanning [0,size]^2.
inline SkinnedMesh make_flat_patch(int n = 4, double size = 1.0) {
    SkinnedMesh m;
    for (int j = 0; j <= n; ++j)
        for (int i = 0; i <= n; ++i)
            m.vertices.emplace_back(size * i / n, size * j / n, 0.0);
    auto idx = [&](int i, int j) { return j * (n + 1) + i; };
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            m.faces.push_back({idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)});
            m.faces.push_back({idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)});
        }
    attach_single_joint(m);
    refresh_normals(m);
    return m;
}

// Icosphere: subdivided icosahedron projected to the given radius.
inline SkinnedMesh make_icosphere(int subdivisions = 2, double radius = 1.0) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v = {
        {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
        {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    std::vector<std::array<int, 3>> f = {
        {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11},
        {1, 5, 9}, {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8}, {3, 8, 9},
        {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1}};
    for (auto& p : v) p.normalize();
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            auto key = std::make_pair(std::min(a, b), std::max(a, b));
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            int idx = static_cast<int>(v.size());
            v.push_back((0.5 * (v[a] + v[b])).normalized());
            midpoint[key] = idx;
            return idx;
        };
        std::vector<std::array<int, 3>> nf;
        for (const auto& face : f) {
            int ab = mid(face[0], face[1]), bc = mid(face[1], face[2]), ca = mid(face[2], face[0]);
            nf.push_back({face[0], ab, ca});
            nf.push_back({ab, face[1], bc});
            nf.push_back({ca, bc, face[2]});
            nf.push_back({ab, bc, ca});
        }
        f = std::move(nf);
    }
    SkinnedMesh m;
    for (const auto& p : v) m.vertices.push_back(radius * p);
    m.faces = f;
    attach_single_joint(m);
    refresh_normals(m);
    return m;
}

// Capsule along z: cylinder of the given half-height capped by hemispheres.
// Convex, closed, single-jointed. rings/segments control tessellation.
inline SkinnedMesh make_capsule(double radius = 0.15, double half_height = 0.25,
                                int segments = 24, int rings = 12, int cap_rings = 6) {
    SkinnedMesh m;
    std::vector<std::vector<int>> ring_idx;
    auto add_ring = [&](double z, double r) {
        std::vector<int> row;
        for (int s = 0; s < segments; ++s) {
            double a = 2.0 * M_PI * s / segments;
            row.push_back(static_cast<int>(m.vertices.size()));
            m.vertices.emplace_back(r * std::cos(a), r * std::sin(a), z);
        }
        ring_idx.push_back(row);
    };
    // bottom cap (excluding pole), cylinder body, top cap (excluding pole)
    for (int i = cap_rings - 1; i >= 1; --i) {
        double phi = 0.5 * M_PI * i / cap_rings;
        add_ring(-half_height - radius * std::sin(phi), radius * std::cos(phi));
    }
    for (int i = 0; i <= rings; ++i) add_ring(-half_height + 2.0 * half_height * i / rings, radius);
    for (int i = 1; i < cap_rings; ++i) {
        double phi = 0.5 * M_PI * i / cap_rings;
        add_ring(half_height + radius * std::sin(phi), radius * std::cos(phi));
    }
    int south = static_cast<int>(m.vertices.size());
    m.vertices.emplace_back(0, 0, -half_height - radius);
    int north = static_cast<int>(m.vertices.size());
    m.vertices.emplace_back(0, 0, half_height + radius);

    for (std::size_t r = 0; r + 1 < ring_idx.size(); ++r) {
        for (int s = 0; s < segments; ++s) {
            int s1 = (s + 1) % segments;
            int a = ring_idx[r][s], b = ring_idx[r][s1];
            int c = ring_idx[r + 1][s], d = ring_idx[r + 1][s1];
            m.faces.push_back({a, b, d});
            m.faces.push_back({a, d, c});
        }
    }
    for (int s = 0; s < segments; ++s) {
        int s1 = (s + 1) % segments;
        m.faces.push_back({south, ring_idx.front()[s1], ring_idx.front()[s]});
        m.faces.push_back({north, ring_idx.back()[s], ring_idx.back()[s1]});
    }
    attach_single_joint(m);
    refresh_normals(m);
    return m;
}

// Cylinder along z in [0, length] with two joints: joint 0 at the origin
// and joint 1 at mid-height. Weights ramp linearly across a blend band at
// the middle, so bending joint 1 folds the upper half smoothly.
inline SkinnedMesh make_cylinder2(double radius = 0.1, double length = 1.0,
                                  int segments = 16, int rings = 20, double blend = 0.1) {
    SkinnedMesh m;
    std::vector<std::vector<int>> ring_idx;
    for (int i = 0; i <= rings; ++i) {
        double z = length * i / rings;
        std::vector<int> row;
        for (int s = 0; s < segments; ++s) {
            double a = 2.0 * M_PI * s / segments;
            row.push_back(static_cast<int>(m.vertices.size()));
            m.vertices.emplace_back(radius * std::cos(a), radius * std::sin(a), z);
        }
        ring_idx.push_back(row);
    }
    int bottom = static_cast<int>(m.vertices.size());
    m.vertices.emplace_back(0, 0, 0);
    int top = static_cast<int>(m.vertices.size());
    m.vertices.emplace_back(0, 0, length);
    for (int i = 0; i < rings; ++i) {
        for (int s = 0; s < segments; ++s) {
            int s1 = (s + 1) % segments;
            int a = ring_idx[i][s], b = ring_idx[i][s1];
            int c = ring_idx[i + 1][s], d = ring_idx[i + 1][s1];
            m.faces.push_back({a, b, d});
            m.faces.push_back({a, d, c});
        }
    }
    for (int s = 0; s < segments; ++s) {
        int s1 = (s + 1) % segments;
        m.faces.push_back({bottom, ring_idx.front()[s1], ring_idx.front()[s]});
        m.faces.push_back({top, ring_idx.back()[s], ring_idx.back()[s1]});
    }
    m.joints.resize(2);
    m.joints[0] = Rigid{};                               // base
    m.joints[1] = Rigid{Mat3::Identity(), Vec3(0, 0, length / 2)};  // mid joint
    m.skin_weights.resize(m.vertices.size());
    double mid = length / 2;
    for (std::size_t v = 0; v < m.vertices.size(); ++v) {
        double z = m.vertices[v].z();
        double w1 = std::clamp((z - (mid - blend)) / (2 * blend), 0.0, 1.0);
        if (w1 <= 0)
            m.skin_weights[v] = {SkinInfluence{0, 1.0}};
        else if (w1 >= 1)
            m.skin_weights[v] = {SkinInfluence{1, 1.0}};
        else
            m.skin_weights[v] = {SkinInfluence{0, 1.0 - w1}, SkinInfluence{1, w1}};
    }
    refresh_normals(m);
    return m;
}

}  // namespace dama
