// Realization of anchored Gaussians into world-space splats and the
// adjoint chain from per-splat gradients back to the constraint-free
// parameter vector (barycentric logits, log offset, quaternion, log scales,
// color or label logits).
#pragma once

#include <vector>

#include "dama/anchor.hpp"
#include "dama/renderer.hpp"

namespace dama {

enum class ColorMode {
    kRGB,            // sigmoid(color logits)
    kLabelExpected,  // sum_c softmax(label logits)_c * palette_c
    kLabelHard,      // palette color of the argmax class (no gradient)
    kWhite,          // constant 1 (mask rendering, no gradient)
    kBlack,          // constant 0
};

// Class palette: one RGB per semantic class.
using Palette = std::vector<Vec3>;

inline Vec3 splat_color(const AnchoredGaussian& g, ColorMode mode, const Palette& palette) {
    switch (mode) {
        case ColorMode::kRGB:
            return g.color;
        case ColorMode::kLabelExpected: {
            VecX p = softmax(g.label_logits);
            if (static_cast<int>(palette.size()) < p.size()) throw Error("splat_color: palette too small");
            Vec3 c = Vec3::Zero();
            for (int k = 0; k < p.size(); ++k) c += p[k] * palette[k];
            return c;
        }
        case ColorMode::kLabelHard: {
            int arg;
            g.label_logits.maxCoeff(&arg);
            if (arg >= static_cast<int>(palette.size())) throw Error("splat_color: unknown class id");
            return palette[arg];
        }
        case ColorMode::kWhite:
            return Vec3(1, 1, 1);
        case ColorMode::kBlack:
            return Vec3(0, 0, 0);
    }
    return Vec3::Zero();
}

// extra_offset implements the stacking shift: the mean is displaced by
// (offset + extra_offset) along the interpolated normal.
inline WorldSplat realize_splat(const AnchoredGaussian& g, const SkinnedMesh& mesh,
                                const ReferenceGaussian& ref, ColorMode mode, const Palette& palette,
                                double extra_offset = 0.0) {
    WorldSplat s;
    const auto& f = mesh.faces[g.face_id];
    Vec3 p = Vec3::Zero(), n = Vec3::Zero();
    for (int k = 0; k < 3; ++k) {
        p += g.bary[k] * mesh.vertices[f[k]];
        n += g.bary[k] * mesh.vertex_normals[f[k]];
    }
    s.mu = p + (g.offset + extra_offset) * n;
    s.quat = realize_orientation(g, ref);
    s.scale = g.scale;
    s.color = splat_color(g, mode, palette);
    s.alpha = g.opacity;
    return s;
}

inline std::vector<WorldSplat> realize_layer(const GaussianLayer& layer, const SkinnedMesh& mesh,
                                             const std::vector<ReferenceGaussian>& refs, ColorMode mode,
                                             const Palette& palette,
                                             const std::vector<double>* extra_offsets = nullptr) {
    std::vector<WorldSplat> out;
    out.reserve(layer.gaussians.size());
    for (std::size_t i = 0; i < layer.gaussians.size(); ++i) {
        double extra = extra_offsets ? (*extra_offsets)[i] : 0.0;
        out.push_back(realize_splat(layer.gaussians[i], mesh, refs[layer.gaussians[i].face_id], mode,
                                    palette, extra));
    }
    return out;
}

// Reference splats used as the gradient-frozen body backdrop. Colors may be
// re-randomized per iteration by the optimizer.
inline std::vector<WorldSplat> reference_splats(const std::vector<ReferenceGaussian>& refs) {
    std::vector<WorldSplat> out;
    out.reserve(refs.size());
    for (const auto& r : refs) {
        WorldSplat s;
        s.mu = r.center;
        s.quat = r.orientation;
        s.scale = r.scale;
        s.color = r.color;
        s.alpha = r.opacity;
        s.frozen = true;
        out.push_back(s);
    }
    return out;
}

namespace realize_detail {

// dR/dq for the unit-quaternion rotation formula, one 3x3 block per
// quaternion component (w, x, y, z).
inline void rotation_quat_jacobian(const Vec4& q, Mat3 J[4]) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    J[0] << 0, -z, y,
            z, 0, -x,
            -y, x, 0;
    J[1] << 0, y, z,
            y, -2 * x, -w,
            z, w, -2 * x;
    J[2] << -2 * y, x, w,
            x, 0, z,
            -w, z, -2 * y;
    J[3] << -2 * z, -w, x,
            w, -2 * z, y,
            x, y, 0;
    for (int k = 0; k < 4; ++k) J[k] *= 2.0;
}

// Left-multiplication matrix: quat_compose(a, b) = M(a) * b for unit a.
inline Eigen::Matrix4d quat_left_matrix(const Vec4& a) {
    Eigen::Matrix4d M;
    M << a[0], -a[1], -a[2], -a[3],
         a[1], a[0], -a[3], a[2],
         a[2], a[3], a[0], -a[1],
         a[3], -a[2], a[1], a[0];
    return M;
}

}  // namespace realize_detail

// Accumulates d(loss)/d(free vector) for one Gaussian given the per-splat
// world gradients. `free_row` must hold the free vector the splat was
// realized from (the quaternion segment is the unnormalized storage).
inline void accumulate_free_grad(const VecX& free_row, const AnchoredGaussian& g,
                                 const SkinnedMesh& mesh, const ReferenceGaussian& ref, ColorMode mode,
                                 const Palette& palette, double extra_offset, const SplatGrad& sg,
                                 Eigen::Ref<Eigen::RowVectorXd> out) {
    using namespace realize_detail;
    const auto& f = mesh.faces[g.face_id];
    const double delta = g.offset + extra_offset;

    // mean: mu = sum b_k (v_k + delta n_k), b = softmax(logits), delta = exp(l) + const
    Vec3 dmu = sg.dmu;
    Vec3 db;
    for (int k = 0; k < 3; ++k)
        db[k] = (mesh.vertices[f[k]] + delta * mesh.vertex_normals[f[k]]).dot(dmu);
    Vec3 b = g.bary;
    Vec3 dlogits = b.asDiagonal() * db - b * (b.dot(db));
    for (int k = 0; k < 3; ++k) out[FreeLayout::kBary + k] += dlogits[k];
    Vec3 interp_n = Vec3::Zero();
    for (int k = 0; k < 3; ++k) interp_n += b[k] * mesh.vertex_normals[f[k]];
    out[FreeLayout::kLogOffset] += g.offset * interp_n.dot(dmu);

    // rotation: R(q_w), q_w = q_ref o normalize(u)
    if (!sg.dR.isZero(0)) {
        Vec4 q_w = quat_compose(ref.orientation, g.rel_rotation);
        Mat3 J[4];
        rotation_quat_jacobian(q_w, J);
        Vec4 dq_w;
        for (int k = 0; k < 4; ++k) dq_w[k] = (J[k].array() * sg.dR.array()).sum();
        Vec4 dq_r = quat_left_matrix(ref.orientation).transpose() * dq_w;
        Vec4 u = free_row.segment<4>(FreeLayout::kQuat);
        double un = u.norm();
        Vec4 uh = u / un;
        Vec4 du = (dq_r - uh * uh.dot(dq_r)) / un;
        for (int k = 0; k < 4; ++k) out[FreeLayout::kQuat + k] += du[k];
    }

    // scales: s = exp(l)
    out[FreeLayout::kLogScale + 0] += g.scale.x() * sg.dscale.x();
    out[FreeLayout::kLogScale + 1] += g.scale.y() * sg.dscale.y();

    // color
    if (!sg.dcolor.isZero(0)) {
        if (mode == ColorMode::kRGB) {
            for (int k = 0; k < 3; ++k)
                out[FreeLayout::kColor + k] += g.color[k] * (1.0 - g.color[k]) * sg.dcolor[k];
        } else if (mode == ColorMode::kLabelExpected) {
            VecX p = softmax(g.label_logits);
            VecX dp(p.size());
            for (int k = 0; k < p.size(); ++k) dp[k] = palette[k].dot(sg.dcolor);
            VecX dl = p.asDiagonal() * dp - p * p.dot(dp);
            for (int k = 0; k < p.size(); ++k) out[FreeLayout::kLabel + k] += dl[k];
        }
        // hard/white/black colors carry no gradient
    }
}

}  // namespace dama
