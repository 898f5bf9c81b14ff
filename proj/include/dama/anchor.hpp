// Anchored Gaussian representation: splats bound to mesh faces by
// barycentric coordinates and a strictly positive normal offset, plus the
// per-face reference Gaussians and the constraint-free reparameterization
// used by the optimizer.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dama/geometry.hpp"

namespace dama {

// 2D splat disk bound to a mesh face. bary is a point of the open simplex,
// offset is strictly positive; both are maintained by construction through
// the softmax/exp reparameterization below.
struct AnchoredGaussian {
    int face_id = 0;
    Vec3 bary = Vec3(1.0 / 3, 1.0 / 3, 1.0 / 3);
    double offset = 1e-4;              // delta, meters, > 0
    Vec4 rel_rotation = quat_identity();  // q_r, unit
    Vec2 scale = Vec2(0.01, 0.01);     // in-plane extents, meters, > 0
    double opacity = 1.0;
    Vec3 color = Vec3(0.5, 0.5, 0.5);  // RGB in [0,1]
    VecX label_logits;                 // over semantic classes (Stage 1 only)
};

// One fixed splat per mesh face: centroid mean, face-plane frame, scales
// circumscribing the triangle. Serves as the gradient-frozen body backdrop.
struct ReferenceGaussian {
    int face_id = 0;
    Vec3 center = Vec3::Zero();
    Vec4 orientation = quat_identity();  // columns (t1, t2, n); third axis = face normal
    Vec2 scale = Vec2(0.01, 0.01);
    Vec3 color = Vec3(0.8, 0.6, 0.5);
    double opacity = 1.0;
};

struct GaussianLayer {
    std::string name;
    std::vector<AnchoredGaussian> gaussians;
    int order_rank = 0;
};

// mu = sum_k b_k v_k + delta * sum_k b_k n_k  on the bound face.
inline Vec3 realize_mean(const AnchoredGaussian& g, const SkinnedMesh& mesh) {
    const auto& f = mesh.faces[g.face_id];
    Vec3 p = Vec3::Zero(), n = Vec3::Zero();
    for (int k = 0; k < 3; ++k) {
        p += g.bary[k] * mesh.vertices[f[k]];
        n += g.bary[k] * mesh.vertex_normals[f[k]];
    }
    return p + g.offset * n;
}

inline Vec3 interpolated_normal(const AnchoredGaussian& g, const SkinnedMesh& mesh) {
    const auto& f = mesh.faces[g.face_id];
    Vec3 n = Vec3::Zero();
    for (int k = 0; k < 3; ++k) n += g.bary[k] * mesh.vertex_normals[f[k]];
    return n;
}

inline Vec4 realize_orientation(const AnchoredGaussian& g, const ReferenceGaussian& ref) {
    if (g.face_id != ref.face_id)
        throw Error("realize_orientation: gaussian bound to face " + std::to_string(g.face_id) +
                    " but reference is for face " + std::to_string(ref.face_id));
    return quat_compose(ref.orientation, g.rel_rotation);
}

// Local face frame: x along the longest edge, z along the face normal.
// The longest edge makes the frame deterministic; ties break by edge index.
inline Mat3 face_frame(const SkinnedMesh& mesh, int f) {
    const auto& fc = mesh.faces[f];
    Vec3 e[3] = {mesh.vertices[fc[1]] - mesh.vertices[fc[0]],
                 mesh.vertices[fc[2]] - mesh.vertices[fc[1]],
                 mesh.vertices[fc[0]] - mesh.vertices[fc[2]]};
    int longest = 0;
    for (int k = 1; k < 3; ++k)
        if (e[k].squaredNorm() > e[longest].squaredNorm()) longest = k;
    Vec3 n = face_raw_normal(mesh, f).normalized();
    Vec3 t1 = (e[longest] - e[longest].dot(n) * n).normalized();
    Vec3 t2 = n.cross(t1);
    Mat3 frame;
    frame.col(0) = t1;
    frame.col(1) = t2;
    frame.col(2) = n;
    return frame;
}

// One reference Gaussian per face. In-plane scales are proportional to the
// RMS of the vertex coordinates in the face frame, scaled up so all three
// vertices land on or inside the unit-variance ellipse, then multiplied by
// `coverage`.
inline std::vector<ReferenceGaussian> reference_from_mesh(const SkinnedMesh& mesh,
                                                          const Vec3& skin_color,
                                                          double coverage = 1.0) {
    std::vector<ReferenceGaussian> refs;
    refs.reserve(mesh.faces.size());
    for (int f = 0; f < static_cast<int>(mesh.faces.size()); ++f) {
        if (face_area(mesh, f) < kDegenerateFaceArea)
            throw Error("reference_from_mesh: degenerate face " + std::to_string(f));
        ReferenceGaussian r;
        r.face_id = f;
        r.center = face_centroid(mesh, f);
        Mat3 frame = face_frame(mesh, f);
        r.orientation = quat_from_matrix(frame);
        double sx = 0, sy = 0;
        Vec2 local[3];
        for (int k = 0; k < 3; ++k) {
            Vec3 d = mesh.vertices[mesh.faces[f][k]] - r.center;
            local[k] = Vec2(d.dot(frame.col(0)), d.dot(frame.col(1)));
            sx += local[k].x() * local[k].x();
            sy += local[k].y() * local[k].y();
        }
        sx = std::sqrt(sx / 3);
        sy = std::sqrt(sy / 3);
        double m = 0;
        for (int k = 0; k < 3; ++k) {
            double dx = local[k].x() / sx, dy = local[k].y() / sy;
            m = std::max(m, std::sqrt(dx * dx + dy * dy));
        }
        r.scale = coverage * m * Vec2(sx, sy);
        r.color = skin_color;
        r.opacity = 1.0;
        refs.push_back(r);
    }
    return refs;
}

// Stage-1 segmentation layer: one Gaussian per face at the face centroid,
// offset close to zero, identity relative rotation, scales copied from the
// references, all labels initialized to the skin class.
inline GaussianLayer init_seg_layer(const SkinnedMesh& mesh, const std::vector<ReferenceGaussian>& refs,
                                    int num_classes, int skin_class = 0, double init_offset = 1e-4) {
    if (refs.size() != mesh.faces.size()) throw Error("init_seg_layer: refs/face count mismatch");
    GaussianLayer layer;
    layer.name = "seg";
    layer.gaussians.resize(refs.size());
    for (std::size_t i = 0; i < refs.size(); ++i) {
        AnchoredGaussian& g = layer.gaussians[i];
        g.face_id = static_cast<int>(i);
        g.bary = Vec3(1.0 / 3, 1.0 / 3, 1.0 / 3);
        g.offset = init_offset;
        g.rel_rotation = quat_identity();
        g.scale = refs[i].scale;
        g.opacity = 1.0;
        g.color = refs[i].color;
        g.label_logits = VecX::Zero(num_classes);
        g.label_logits[skin_class] = 6.0;  // argmax = skin, still soft enough to move
    }
    return layer;
}

// ----- constraint-free parameter vector -------------------------------------
//
// Layout per Gaussian (P = 13 + C free values, C = label class count):
//   [0..2]   barycentric logits  (softmax -> bary)
//   [3]      log offset          (exp -> delta)
//   [4..7]   relative quaternion (normalized on realization)
//   [8..9]   log scales
//   [10..12] color logits        (sigmoid -> RGB)
//   [13..]   label logits        (unconstrained)
//
// Every finite free vector maps to a Gaussian satisfying all invariants, so
// unconstrained gradient steps can never violate them.

struct FreeLayout {
    int num_classes = 0;
    static constexpr int kBary = 0;
    static constexpr int kLogOffset = 3;
    static constexpr int kQuat = 4;
    static constexpr int kLogScale = 8;
    static constexpr int kColor = 10;
    static constexpr int kLabel = 13;
    int params_per_gaussian() const { return kLabel + num_classes; }
};

inline Vec3 softmax3(const Vec3& z) {
    double m = z.maxCoeff();
    Vec3 e = (z.array() - m).exp();
    return e / e.sum();
}

inline VecX softmax(const VecX& z) {
    double m = z.maxCoeff();
    VecX e = (z.array() - m).exp();
    return e / e.sum();
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double logit(double p, double eps = 1e-12) {
    p = std::clamp(p, eps, 1.0 - eps);
    return std::log(p / (1.0 - p));
}

inline VecX reparam_to_free(const AnchoredGaussian& g) {
    FreeLayout lay{static_cast<int>(g.label_logits.size())};
    VecX v(lay.params_per_gaussian());
    for (int k = 0; k < 3; ++k) v[FreeLayout::kBary + k] = std::log(std::max(g.bary[k], 1e-12));
    v[FreeLayout::kLogOffset] = std::log(g.offset);
    for (int k = 0; k < 4; ++k) v[FreeLayout::kQuat + k] = g.rel_rotation[k];
    for (int k = 0; k < 2; ++k) v[FreeLayout::kLogScale + k] = std::log(g.scale[k]);
    for (int k = 0; k < 3; ++k) v[FreeLayout::kColor + k] = logit(g.color[k]);
    for (int k = 0; k < lay.num_classes; ++k) v[FreeLayout::kLabel + k] = g.label_logits[k];
    return v;
}

inline AnchoredGaussian reparam_from_free(const VecX& v, int face_id, int num_classes) {
    FreeLayout lay{num_classes};
    if (v.size() != lay.params_per_gaussian()) throw Error("reparam_from_free: size mismatch");
    if (!v.allFinite()) throw Error("reparam_from_free: non-finite free values");
    AnchoredGaussian g;
    g.face_id = face_id;
    g.bary = softmax3(v.segment<3>(FreeLayout::kBary));
    g.offset = std::exp(v[FreeLayout::kLogOffset]);
    g.rel_rotation = quat_normalize(v.segment<4>(FreeLayout::kQuat));
    g.scale = v.segment<2>(FreeLayout::kLogScale).array().exp();
    for (int k = 0; k < 3; ++k) g.color[k] = sigmoid(v[FreeLayout::kColor + k]);
    g.label_logits = v.segment(FreeLayout::kLabel, num_classes);
    g.opacity = 1.0;
    return g;
}

// Free matrix for a whole layer, one row per Gaussian.
inline MatX layer_to_free(const GaussianLayer& layer) {
    if (layer.gaussians.empty()) return MatX();
    MatX m(layer.gaussians.size(), reparam_to_free(layer.gaussians[0]).size());
    for (std::size_t i = 0; i < layer.gaussians.size(); ++i) m.row(i) = reparam_to_free(layer.gaussians[i]);
    return m;
}

// Writes the selected parameter groups back into the layer. Untouched
// groups keep their exact bytes, which the joint/transfer refinements
// rely on.
enum ParamGroup : unsigned {
    kGroupBary = 1u << 0,
    kGroupOffset = 1u << 1,
    kGroupRotation = 1u << 2,
    kGroupScale = 1u << 3,
    kGroupColor = 1u << 4,
    kGroupLabel = 1u << 5,
    kGroupAll = 0x3f,
};

inline void free_to_layer(const MatX& m, GaussianLayer& layer, unsigned groups = kGroupAll) {
    if (static_cast<std::size_t>(m.rows()) != layer.gaussians.size())
        throw Error("free_to_layer: row count mismatch");
    for (std::size_t i = 0; i < layer.gaussians.size(); ++i) {
        AnchoredGaussian& g = layer.gaussians[i];
        int c = static_cast<int>(g.label_logits.size());
        AnchoredGaussian full = reparam_from_free(m.row(i).transpose(), g.face_id, c);
        if (groups & kGroupBary) g.bary = full.bary;
        if (groups & kGroupOffset) g.offset = full.offset;
        if (groups & kGroupRotation) g.rel_rotation = full.rel_rotation;
        if (groups & kGroupScale) g.scale = full.scale;
        if (groups & kGroupColor) g.color = full.color;
        if (groups & kGroupLabel) g.label_logits = full.label_logits;
    }
}

}  // namespace dama
