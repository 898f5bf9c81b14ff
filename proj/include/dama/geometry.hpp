// Triangle-mesh container, normals, adjacency, quaternion algebra and
// linear blend skinning. Everything here is a pure function over value types.
#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <utility>
#include <vector>

#include "dama/core.hpp"

namespace dama {

// Rigid transform, rotation then translation.
struct Rigid {
    Mat3 R = Mat3::Identity();
    Vec3 t = Vec3::Zero();

    Vec3 apply(const Vec3& p) const { return R * p + t; }
    Vec3 rotate(const Vec3& v) const { return R * v; }
    Rigid inverse() const { return {R.transpose(), -(R.transpose() * t)}; }
    Rigid operator*(const Rigid& o) const { return {R * o.R, R * o.t + t}; }
};

// Quaternions are stored (w, x, y, z) and kept unit-norm.
inline Vec4 quat_identity() { return Vec4(1, 0, 0, 0); }

inline Vec4 quat_normalize(const Vec4& q) {
    double n = q.norm();
    if (!(n > 1e-300) || !std::isfinite(n)) throw Error("quat_normalize: degenerate quaternion");
    return q / n;
}

// Hamilton product, renormalized.
inline Vec4 quat_compose(const Vec4& a, const Vec4& b) {
    Vec4 r;
    r[0] = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3];
    r[1] = a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2];
    r[2] = a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1];
    r[3] = a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0];
    return quat_normalize(r);
}

inline Mat3 quat_to_matrix(const Vec4& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 R;
    R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return R;
}

inline Vec4 quat_from_axis_angle(const Vec3& axis, double angle) {
    Vec3 a = axis.normalized();
    double h = 0.5 * angle;
    return Vec4(std::cos(h), a.x() * std::sin(h), a.y() * std::sin(h), a.z() * std::sin(h));
}

// Robust rotation-matrix -> quaternion (Shepperd's method).
inline Vec4 quat_from_matrix(const Mat3& R) {
    Vec4 q;
    double tr = R.trace();
    if (tr > 0) {
        double s = std::sqrt(tr + 1.0) * 2;
        q = Vec4(0.25 * s, (R(2, 1) - R(1, 2)) / s, (R(0, 2) - R(2, 0)) / s, (R(1, 0) - R(0, 1)) / s);
    } else if (R(0, 0) > R(1, 1) && R(0, 0) > R(2, 2)) {
        double s = std::sqrt(1.0 + R(0, 0) - R(1, 1) - R(2, 2)) * 2;
        q = Vec4((R(2, 1) - R(1, 2)) / s, 0.25 * s, (R(0, 1) + R(1, 0)) / s, (R(0, 2) + R(2, 0)) / s);
    } else if (R(1, 1) > R(2, 2)) {
        double s = std::sqrt(1.0 + R(1, 1) - R(0, 0) - R(2, 2)) * 2;
        q = Vec4((R(0, 2) - R(2, 0)) / s, (R(0, 1) + R(1, 0)) / s, 0.25 * s, (R(1, 2) + R(2, 1)) / s);
    } else {
        double s = std::sqrt(1.0 + R(2, 2) - R(0, 0) - R(1, 1)) * 2;
        q = Vec4((R(1, 0) - R(0, 1)) / s, (R(0, 2) + R(2, 0)) / s, (R(1, 2) + R(2, 1)) / s, 0.25 * s);
    }
    return quat_normalize(q);
}

// One skinning influence: joint index and weight.
struct SkinInfluence {
    int joint = 0;
    double weight = 0.0;
};

// Triangle mesh with vertex normals, rest-pose joints and per-vertex
// skinning weights. The anchor surface for every Gaussian layer.
struct SkinnedMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;
    std::vector<Vec3> vertex_normals;               // unit, recomputed after deformation
    std::vector<Rigid> joints;                      // rest-pose transforms
    std::vector<std::vector<SkinInfluence>> skin_weights;  // per vertex, rows sum to 1
    std::vector<int> face_labels;                   // optional semantic labels

    std::size_t vertex_count() const { return vertices.size(); }
    std::size_t face_count() const { return faces.size(); }
};

struct Pose {
    std::vector<Vec4> joint_rotations;  // unit quaternions, one per joint
    Vec3 root_translation = Vec3::Zero();
};

struct FaceAdjacencyGraph {
    std::vector<std::vector<int>> neighbors;  // edge-adjacent faces
    std::vector<double> face_areas;           // m^2
};

inline Vec3 face_raw_normal(const SkinnedMesh& mesh, int f) {
    const auto& fc = mesh.faces[f];
    return (mesh.vertices[fc[1]] - mesh.vertices[fc[0]])
               .cross(mesh.vertices[fc[2]] - mesh.vertices[fc[0]]);
}

inline double face_area(const SkinnedMesh& mesh, int f) {
    return 0.5 * face_raw_normal(mesh, f).norm();
}

inline Vec3 face_centroid(const SkinnedMesh& mesh, int f) {
    const auto& fc = mesh.faces[f];
    return (mesh.vertices[fc[0]] + mesh.vertices[fc[1]] + mesh.vertices[fc[2]]) / 3.0;
}

constexpr double kDegenerateFaceArea = 1e-12;

// Structural validation run after load and after deformation. Throws on the
// first problem found; zero-area faces are rejected because both the anchor
// realization and the label refinement divide by or threshold on face area.
inline void validate_mesh(const SkinnedMesh& mesh) {
    const int nv = static_cast<int>(mesh.vertices.size());
    if (mesh.faces.empty()) throw Error("validate_mesh: mesh has no faces");
    std::vector<char> touched(nv, 0);
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        for (int k = 0; k < 3; ++k) {
            int v = mesh.faces[f][k];
            if (v < 0 || v >= nv)
                throw Error("validate_mesh: face " + std::to_string(f) + " references vertex " +
                            std::to_string(v) + " out of range");
            touched[v] = 1;
        }
        if (face_area(mesh, static_cast<int>(f)) < kDegenerateFaceArea)
            throw Error("validate_mesh: degenerate (zero-area) face " + std::to_string(f));
    }
    for (int v = 0; v < nv; ++v)
        if (!touched[v]) throw Error("validate_mesh: vertex " + std::to_string(v) + " has no incident face");
    if (!mesh.skin_weights.empty()) {
        if (mesh.skin_weights.size() != mesh.vertices.size())
            throw Error("validate_mesh: skin weight rows != vertex count");
        const int nj = static_cast<int>(mesh.joints.size());
        for (std::size_t v = 0; v < mesh.skin_weights.size(); ++v) {
            double sum = 0;
            for (const auto& inf : mesh.skin_weights[v]) {
                if (inf.joint < 0 || inf.joint >= nj)
                    throw Error("validate_mesh: vertex " + std::to_string(v) + " references joint " +
                                std::to_string(inf.joint) + " out of range");
                if (inf.weight < 0)
                    throw Error("validate_mesh: negative skin weight at vertex " + std::to_string(v));
                sum += inf.weight;
            }
            if (std::abs(sum - 1.0) > 1e-6)
                throw Error("validate_mesh: skin weights at vertex " + std::to_string(v) +
                            " sum to " + std::to_string(sum));
        }
    }
    if (!mesh.face_labels.empty() && mesh.face_labels.size() != mesh.faces.size())
        throw Error("validate_mesh: face_labels size mismatch");
}

// Area-weighted average of incident face normals. A vertex whose weighted
// sum cancels falls back to the normal of its largest incident face.
inline std::vector<Vec3> compute_vertex_normals(const SkinnedMesh& mesh) {
    const int nv = static_cast<int>(mesh.vertices.size());
    std::vector<Vec3> acc(nv, Vec3::Zero());
    std::vector<int> largest_face(nv, -1);
    std::vector<double> largest_area(nv, -1.0);
    for (int f = 0; f < static_cast<int>(mesh.faces.size()); ++f) {
        Vec3 rn = face_raw_normal(mesh, f);  // |rn| = 2 * area
        double area = 0.5 * rn.norm();
        for (int k = 0; k < 3; ++k) {
            int v = mesh.faces[f][k];
            acc[v] += 0.5 * rn;  // area-weighted unit normal
            if (area > largest_area[v]) {
                largest_area[v] = area;
                largest_face[v] = f;
            }
        }
    }
    std::vector<Vec3> normals(nv);
    for (int v = 0; v < nv; ++v) {
        if (largest_face[v] < 0)
            throw Error("compute_vertex_normals: vertex " + std::to_string(v) + " has no incident face");
        double n = acc[v].norm();
        if (n > 1e-12) {
            normals[v] = acc[v] / n;
        } else {
            normals[v] = face_raw_normal(mesh, largest_face[v]).normalized();
        }
    }
    return normals;
}

inline void refresh_normals(SkinnedMesh& mesh) { mesh.vertex_normals = compute_vertex_normals(mesh); }

// LBS: each vertex is moved by the weight-blended joint motions
// M_j = A_j R(q_j) A_j^{-1} (a rotation about the joint's rest frame),
// followed by the root translation. Topology is unchanged.
inline SkinnedMesh pose_mesh(const SkinnedMesh& mesh, const Pose& pose) {
    if (pose.joint_rotations.size() != mesh.joints.size())
        throw Error("pose_mesh: pose has " + std::to_string(pose.joint_rotations.size()) +
                    " joints, mesh has " + std::to_string(mesh.joints.size()));
    std::vector<Rigid> motion(mesh.joints.size());
    for (std::size_t j = 0; j < mesh.joints.size(); ++j) {
        Vec4 q = pose.joint_rotations[j];
        if (std::abs(q.norm() - 1.0) > 1e-6) throw Error("pose_mesh: joint rotation not unit norm");
        Rigid rot{quat_to_matrix(q), Vec3::Zero()};
        motion[j] = mesh.joints[j] * rot * mesh.joints[j].inverse();
    }
    SkinnedMesh out = mesh;
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
        Vec3 p = Vec3::Zero();
        for (const auto& inf : mesh.skin_weights[v]) p += inf.weight * motion[inf.joint].apply(mesh.vertices[v]);
        out.vertices[v] = p + pose.root_translation;
    }
    refresh_normals(out);
    return out;
}

// Symmetric edge adjacency plus face areas. Rejects non-manifold edges.
inline FaceAdjacencyGraph build_adjacency(const SkinnedMesh& mesh) {
    FaceAdjacencyGraph g;
    const int nf = static_cast<int>(mesh.faces.size());
    g.neighbors.resize(nf);
    g.face_areas.resize(nf);
    std::map<std::pair<int, int>, std::vector<int>> edge_faces;
    for (int f = 0; f < nf; ++f) {
        g.face_areas[f] = face_area(mesh, f);
        for (int k = 0; k < 3; ++k) {
            int a = mesh.faces[f][k], b = mesh.faces[f][(k + 1) % 3];
            edge_faces[{std::min(a, b), std::max(a, b)}].push_back(f);
        }
    }
    for (const auto& [edge, fs] : edge_faces) {
        if (fs.size() > 2)
            throw Error("build_adjacency: non-manifold edge (" + std::to_string(edge.first) + "," +
                        std::to_string(edge.second) + ") shared by " + std::to_string(fs.size()) + " faces");
        if (fs.size() == 2) {
            g.neighbors[fs[0]].push_back(fs[1]);
            g.neighbors[fs[1]].push_back(fs[0]);
        }
    }
    for (auto& nb : g.neighbors) std::sort(nb.begin(), nb.end());
    return g;
}

// One level of uniform midpoint subdivision (1 face -> 4). Midpoint skin
// weights are the renormalized average of the edge endpoints' weights;
// face labels are inherited.
inline SkinnedMesh subdivide_midpoint(const SkinnedMesh& mesh) {
    SkinnedMesh out;
    out.vertices = mesh.vertices;
    out.joints = mesh.joints;
    out.skin_weights = mesh.skin_weights;
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
        auto key = std::make_pair(std::min(a, b), std::max(a, b));
        auto it = midpoint.find(key);
        if (it != midpoint.end()) return it->second;
        int idx = static_cast<int>(out.vertices.size());
        out.vertices.push_back(0.5 * (mesh.vertices[a] + mesh.vertices[b]));
        if (!mesh.skin_weights.empty()) {
            std::map<int, double> w;
            for (const auto& inf : mesh.skin_weights[a]) w[inf.joint] += 0.5 * inf.weight;
            for (const auto& inf : mesh.skin_weights[b]) w[inf.joint] += 0.5 * inf.weight;
            double sum = 0;
            for (auto& [j, ww] : w) sum += ww;
            std::vector<SkinInfluence> row;
            for (auto& [j, ww] : w) row.push_back({j, ww / sum});
            out.skin_weights.push_back(std::move(row));
        }
        midpoint[key] = idx;
        return idx;
    };
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        int a = mesh.faces[f][0], b = mesh.faces[f][1], c = mesh.faces[f][2];
        int ab = mid(a, b), bc = mid(b, c), ca = mid(c, a);
        out.faces.push_back({a, ab, ca});
        out.faces.push_back({ab, b, bc});
        out.faces.push_back({ca, bc, c});
        out.faces.push_back({ab, bc, ca});
        if (!mesh.face_labels.empty())
            for (int k = 0; k < 4; ++k) out.face_labels.push_back(mesh.face_labels[f]);
    }
    refresh_normals(out);
    return out;
}

inline double total_mesh_area(const SkinnedMesh& mesh) {
    double a = 0;
    for (int f = 0; f < static_cast<int>(mesh.faces.size()); ++f) a += face_area(mesh, f);
    return a;
}

}  // namespace dama
