// Deterministic software rasterizer for 2D Gaussian splats (surfel disks).
// Falloff is evaluated by exact ray-disk intersection; compositing is
// front-to-back alpha blending over a global depth sort with index
// tie-breaking. The backward pass produces per-splat gradients of any
// scalar of the output images with respect to splat mean, rotation, scale,
// color and opacity; backdrop ("frozen") splats contribute to transmittance
// but never receive gradients.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "dama/camera.hpp"
#include "dama/image.hpp"

namespace dama {

struct WorldSplat {
    Vec3 mu = Vec3::Zero();
    Vec4 quat = quat_identity();  // unit; columns of R = (t1, t2, disk normal)
    Vec2 scale = Vec2(0.01, 0.01);
    Vec3 color = Vec3::Zero();
    double alpha = 1.0;
    bool frozen = false;  // excluded from gradients (body backdrop)
};

struct RenderOptions {
    double cutoff = 1e-4;      // contributions with alpha*falloff below this are skipped
    double bound_sigma = 4.6;  // screen bounding radius in sigma units; covers the cutoff
    double znear = 0.01;
    bool exact = false;        // no cutoff, full-image rasterization (gradient checks)
};

struct RenderOutput {
    Image color;              // 3ch, black background
    Image alpha;              // 1ch in [0,1]
    Image depth;              // 1ch camera-space depth, alpha-weighted mean; 0 where alpha = 0
    Image normal_splat;       // 3ch composited camera-space splat normals (unnormalized)
    Image normal_from_depth;  // 3ch unit normals in camera frame
    Image normal_valid;       // 1ch
};

struct SplatGrad {
    Vec3 dmu = Vec3::Zero();
    Mat3 dR = Mat3::Zero();
    Vec2 dscale = Vec2::Zero();
    Vec3 dcolor = Vec3::Zero();
    double dalpha = 0;
};

// Upstream image gradients fed to the backward pass. Any image may be
// empty, meaning zero gradient for that channel.
struct RenderUpstream {
    Image dcolor;        // 3ch
    Image dalpha;        // 1ch
    Image ddepth;        // 1ch, gradient of the alpha-weighted mean depth
    Image dnormal_splat; // 3ch
};

namespace render_detail {

struct PreparedSplat {
    int index = 0;  // into the caller's splat array
    double z = 0;   // camera depth of the mean (sort key)
    Vec3 mu;
    Mat3 R;       // world frame of the disk
    Vec3 n_cam;   // camera-space disk normal, flipped toward the camera
    double flip = 1;
    Vec2 scale;
    Vec3 color;
    double alpha = 1;
    bool frozen = false;
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // inclusive pixel bounds
};

inline bool project_bbox(const Camera& cam, const RenderOptions& opt, PreparedSplat& ps) {
    if (opt.exact) {
        ps.x0 = 0;
        ps.y0 = 0;
        ps.x1 = cam.width - 1;
        ps.y1 = cam.height - 1;
        return true;
    }
    const int kSamples = 20;
    double r = opt.bound_sigma;
    double minx = 1e30, miny = 1e30, maxx = -1e30, maxy = -1e30;
    Vec3 center_cam = cam.world_to_cam.apply(ps.mu);
    auto add = [&](const Vec3& p_cam) {
        if (p_cam.z() <= opt.znear) return false;
        double px = cam.fx * p_cam.x() / p_cam.z() + cam.cx;
        double py = cam.fy * p_cam.y() / p_cam.z() + cam.cy;
        minx = std::min(minx, px);
        maxx = std::max(maxx, px);
        miny = std::min(miny, py);
        maxy = std::max(maxy, py);
        return true;
    };
    bool all_front = add(center_cam);
    for (int k = 0; k < kSamples && all_front; ++k) {
        double phi = 2.0 * M_PI * k / kSamples;
        Vec3 rim = ps.mu + r * (ps.scale.x() * std::cos(phi) * ps.R.col(0) +
                                ps.scale.y() * std::sin(phi) * ps.R.col(1));
        all_front = add(cam.world_to_cam.apply(rim));
    }
    if (!all_front) {  // disk crosses the camera plane: fall back to the full image
        ps.x0 = 0;
        ps.y0 = 0;
        ps.x1 = cam.width - 1;
        ps.y1 = cam.height - 1;
        return true;
    }
    ps.x0 = std::max(0, static_cast<int>(std::floor(minx)) - 1);
    ps.y0 = std::max(0, static_cast<int>(std::floor(miny)) - 1);
    ps.x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(maxx)) + 1);
    ps.y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(maxy)) + 1);
    return ps.x0 <= ps.x1 && ps.y0 <= ps.y1;
}

inline std::vector<PreparedSplat> prepare(const std::vector<WorldSplat>& splats, const Camera& cam,
                                          const RenderOptions& opt) {
    std::vector<PreparedSplat> prepared;
    prepared.reserve(splats.size());
    for (int i = 0; i < static_cast<int>(splats.size()); ++i) {
        const WorldSplat& s = splats[i];
        PreparedSplat ps;
        ps.index = i;
        ps.z = cam.depth_of(s.mu);
        if (ps.z <= opt.znear) continue;  // behind the camera: culled silently
        ps.mu = s.mu;
        ps.R = quat_to_matrix(quat_normalize(s.quat));
        ps.scale = s.scale;
        ps.color = s.color;
        ps.alpha = s.alpha;
        ps.frozen = s.frozen;
        Vec3 n_world = ps.R.col(2);
        ps.flip = n_world.dot(s.mu - cam.position()) > 0 ? -1.0 : 1.0;
        ps.n_cam = cam.world_to_cam.R * (ps.flip * n_world);
        if (!project_bbox(cam, opt, ps)) continue;
        prepared.push_back(ps);
    }
    std::sort(prepared.begin(), prepared.end(), [](const PreparedSplat& a, const PreparedSplat& b) {
        if (a.z != b.z) return a.z < b.z;
        return a.index < b.index;
    });
    return prepared;
}

// CSR binning: per-pixel lists of prepared-splat indices in depth order.
struct Bins {
    std::vector<int> offsets;  // pixel_count + 1
    std::vector<int> entries;  // indices into the prepared array
};

inline Bins bin_splats(const std::vector<PreparedSplat>& prepared, const Camera& cam) {
    Bins bins;
    const std::size_t npix = static_cast<std::size_t>(cam.width) * cam.height;
    std::vector<int> count(npix, 0);
    for (const auto& ps : prepared)
        for (int y = ps.y0; y <= ps.y1; ++y)
            for (int x = ps.x0; x <= ps.x1; ++x) count[static_cast<std::size_t>(y) * cam.width + x]++;
    bins.offsets.assign(npix + 1, 0);
    for (std::size_t p = 0; p < npix; ++p) bins.offsets[p + 1] = bins.offsets[p] + count[p];
    bins.entries.resize(bins.offsets.back());
    std::vector<int> cursor(bins.offsets.begin(), bins.offsets.end() - 1);
    for (int k = 0; k < static_cast<int>(prepared.size()); ++k) {
        const auto& ps = prepared[k];
        for (int y = ps.y0; y <= ps.y1; ++y)
            for (int x = ps.x0; x <= ps.x1; ++x)
                bins.entries[cursor[static_cast<std::size_t>(y) * cam.width + x]++] = k;
    }
    return bins;
}

// Ray-disk evaluation at one pixel. Returns false when the splat does not
// contribute (grazing ray, behind znear, or below the cutoff).
struct HitGeom {
    double t = 0, u = 0, v = 0, w = 0, a = 0, beta = 0;
    Vec3 q = Vec3::Zero();  // intersection point minus mu
};

inline bool eval_hit(const PreparedSplat& ps, const Vec3& origin, const Vec3& dir,
                     const RenderOptions& opt, HitGeom& h) {
    Vec3 n = ps.R.col(2);
    h.beta = dir.dot(n);
    if (std::abs(h.beta) < 1e-12) return false;
    h.t = (ps.mu - origin).dot(n) / h.beta;
    if (h.t <= opt.znear) return false;
    h.q = origin + h.t * dir - ps.mu;
    h.u = h.q.dot(ps.R.col(0)) / ps.scale.x();
    h.v = h.q.dot(ps.R.col(1)) / ps.scale.y();
    double rho = h.u * h.u + h.v * h.v;
    if (rho > 700) return false;  // exp underflow guard
    h.w = std::exp(-0.5 * rho);
    h.a = ps.alpha * h.w;
    if (!opt.exact && h.a < opt.cutoff) return false;
    return true;
}

constexpr double kMinTransmittance = 1e-14;

}  // namespace render_detail

inline RenderOutput render(const std::vector<WorldSplat>& splats, const Camera& cam,
                           const RenderOptions& opt = {}) {
    cam.check();
    using namespace render_detail;
    auto prepared = prepare(splats, cam, opt);
    auto bins = bin_splats(prepared, cam);

    RenderOutput out;
    out.color = Image(cam.width, cam.height, 3);
    out.alpha = Image(cam.width, cam.height, 1);
    out.depth = Image(cam.width, cam.height, 1);
    out.normal_splat = Image(cam.width, cam.height, 3);

    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            std::size_t pix = static_cast<std::size_t>(y) * cam.width + x;
            int begin = bins.offsets[pix], end = bins.offsets[pix + 1];
            if (begin == end) continue;
            Vec3 origin, dir;
            cam.pixel_ray(x + 0.5, y + 0.5, origin, dir);
            double T = 1.0, A = 0.0, Znum = 0.0;
            Vec3 C = Vec3::Zero(), N = Vec3::Zero();
            for (int e = begin; e < end; ++e) {
                const PreparedSplat& ps = prepared[bins.entries[e]];
                HitGeom h;
                if (!eval_hit(ps, origin, dir, opt, h)) continue;
                double wgt = h.a * T;
                C += wgt * ps.color;
                A += wgt;
                Znum += wgt * h.t;
                N += wgt * ps.n_cam;
                T *= (1.0 - h.a);
                if (T < kMinTransmittance) break;
            }
            out.color.set_rgb(x, y, C);
            out.alpha.at(x, y) = A;
            out.depth.at(x, y) = A > 1e-12 ? Znum / A : 0.0;
            out.normal_splat.set_rgb(x, y, N);
        }
    }
    return out;
}

// Backward: accumulates per-splat gradients for each non-frozen input splat.
// The forward pass is recomputed per pixel (nothing is cached), then the
// standard back-to-front recursion distributes the compositing gradients.
inline std::vector<SplatGrad> render_backward(const std::vector<WorldSplat>& splats, const Camera& cam,
                                              const RenderOptions& opt, const RenderUpstream& up) {
    using namespace render_detail;
    auto prepared = prepare(splats, cam, opt);
    auto bins = bin_splats(prepared, cam);
    std::vector<SplatGrad> grads(splats.size());

    const bool has_c = up.dcolor.channels == 3;
    const bool has_a = up.dalpha.channels == 1;
    const bool has_d = up.ddepth.channels == 1;
    const bool has_n = up.dnormal_splat.channels == 3;

    struct Entry {
        int pi;  // prepared index
        HitGeom h;
    };
    std::vector<Entry> hits;

    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            std::size_t pix = static_cast<std::size_t>(y) * cam.width + x;
            int begin = bins.offsets[pix], end = bins.offsets[pix + 1];
            if (begin == end) continue;
            Vec3 origin, dir;
            cam.pixel_ray(x + 0.5, y + 0.5, origin, dir);

            hits.clear();
            double T = 1.0, A = 0.0, Znum = 0.0;
            for (int e = begin; e < end; ++e) {
                const PreparedSplat& ps = prepared[bins.entries[e]];
                HitGeom h;
                if (!eval_hit(ps, origin, dir, opt, h)) continue;
                hits.push_back({bins.entries[e], h});
                A += h.a * T;
                Znum += h.a * T * h.t;
                T *= (1.0 - h.a);
                if (T < kMinTransmittance) break;
            }
            if (hits.empty()) continue;

            Vec3 dC = has_c ? up.dcolor.rgb(x, y) : Vec3::Zero();
            double dA = has_a ? up.dalpha.at(x, y) : 0.0;
            Vec3 dN = has_n ? up.dnormal_splat.rgb(x, y) : Vec3::Zero();
            double dZ = 0.0;
            if (has_d && A > 1e-12) {
                double dD = up.ddepth.at(x, y);
                dZ = dD / A;                 // depth = Znum / A
                dA += -dD * Znum / (A * A);
            }
            if (dC.isZero(0) && dA == 0 && dZ == 0 && dN.isZero(0)) continue;

            // back-to-front suffix state: composited value of everything
            // behind the current splat, as seen with unit transmittance
            Vec3 Bc = Vec3::Zero(), Bn = Vec3::Zero();
            double Bone = 0.0, Bz = 0.0;
            // recompute prefix transmittances
            std::vector<double> Tpre(hits.size());
            {
                double t = 1.0;
                for (std::size_t i = 0; i < hits.size(); ++i) {
                    Tpre[i] = t;
                    t *= (1.0 - hits[i].h.a);
                }
            }
            for (int i = static_cast<int>(hits.size()) - 1; i >= 0; --i) {
                const PreparedSplat& ps = prepared[hits[i].pi];
                const HitGeom& h = hits[i].h;
                double Ti = Tpre[i];
                double da = Ti * ((ps.color - Bc).dot(dC) + (1.0 - Bone) * dA + (h.t - Bz) * dZ +
                                  (ps.n_cam - Bn).dot(dN));
                double wgt = h.a * Ti;
                Bc = h.a * ps.color + (1.0 - h.a) * Bc;
                Bone = h.a + (1.0 - h.a) * Bone;
                Bz = h.a * h.t + (1.0 - h.a) * Bz;
                Bn = h.a * ps.n_cam + (1.0 - h.a) * Bn;
                if (ps.frozen) continue;

                SplatGrad& g = grads[ps.index];
                g.dcolor += wgt * dC;
                double dt = wgt * dZ;  // depth payload
                // normal payload: n_cam = W * (flip * R.col(2))
                Vec3 dn_world = ps.flip * (cam.world_to_cam.R.transpose() * (wgt * dN));

                // da -> (alpha, falloff)
                g.dalpha += h.w * da;
                double dw = ps.alpha * da;
                double drho = -0.5 * h.w * dw;
                double du = 2.0 * h.u * drho;
                double dv = 2.0 * h.v * drho;

                // u = q . t1 / s1, v = q . t2 / s2
                Vec3 dq = du * ps.R.col(0) / ps.scale.x() + dv * ps.R.col(1) / ps.scale.y();
                Vec3 dt1 = du * h.q / ps.scale.x();
                Vec3 dt2 = dv * h.q / ps.scale.y();
                g.dscale.x() += -du * h.u / ps.scale.x();
                g.dscale.y() += -dv * h.v / ps.scale.y();

                // q = origin + t * dir - mu
                dt += dq.dot(dir);
                g.dmu += -dq;

                // t = ((mu - origin) . n) / (dir . n)
                Vec3 n = ps.R.col(2);
                g.dmu += dt * n / h.beta;
                Vec3 dn = dt * (-h.q) / h.beta + dn_world;

                g.dR.col(0) += dt1;
                g.dR.col(1) += dt2;
                g.dR.col(2) += dn;
            }
        }
    }
    return grads;
}

// Central-difference normals from back-projected depth. Normals are unit,
// camera-space, flipped to face the camera. A pixel is valid only when it
// and its four neighbors are valid and the cross product is nonzero.
inline void normals_from_depth(const Image& depth, const Image& valid, const Camera& cam,
                               Image& normal, Image& nvalid) {
    normal = Image(depth.width, depth.height, 3);
    nvalid = Image(depth.width, depth.height, 1);
    auto ok = [&](int x, int y) { return depth.inside(x, y) && valid.at(x, y) > 0.5; };
    for (int y = 0; y < depth.height; ++y)
        for (int x = 0; x < depth.width; ++x) {
            if (!(ok(x, y) && ok(x - 1, y) && ok(x + 1, y) && ok(x, y - 1) && ok(x, y + 1))) continue;
            auto P = [&](int px, int py) { return depth.at(px, py) * cam.backproject_dir(px + 0.5, py + 0.5); };
            Vec3 dx = P(x + 1, y) - P(x - 1, y);
            Vec3 dy = P(x, y + 1) - P(x, y - 1);
            Vec3 c = dx.cross(dy);
            double n = c.norm();
            if (n < 1e-12) continue;
            Vec3 nm = c / n;
            if (nm.dot(cam.backproject_dir(x + 0.5, y + 0.5)) > 0) nm = -nm;
            normal.set_rgb(x, y, nm);
            nvalid.at(x, y) = 1.0;
        }
}

// Adjoint of normals_from_depth: folds dL/dnormal back onto the depth image.
// The validity gate and the facing flip are treated as constants.
inline Image normals_from_depth_backward(const Image& depth, const Image& valid, const Camera& cam,
                                         const Image& dnormal) {
    Image ddepth(depth.width, depth.height, 1);
    auto ok = [&](int x, int y) { return depth.inside(x, y) && valid.at(x, y) > 0.5; };
    for (int y = 0; y < depth.height; ++y)
        for (int x = 0; x < depth.width; ++x) {
            if (!(ok(x, y) && ok(x - 1, y) && ok(x + 1, y) && ok(x, y - 1) && ok(x, y + 1))) continue;
            auto P = [&](int px, int py) { return depth.at(px, py) * cam.backproject_dir(px + 0.5, py + 0.5); };
            Vec3 dx = P(x + 1, y) - P(x - 1, y);
            Vec3 dy = P(x, y + 1) - P(x, y - 1);
            Vec3 c = dx.cross(dy);
            double n = c.norm();
            if (n < 1e-12) continue;
            Vec3 nm = c / n;
            double flip = nm.dot(cam.backproject_dir(x + 0.5, y + 0.5)) > 0 ? -1.0 : 1.0;
            Vec3 g = dnormal.rgb(x, y);
            if (g.isZero(0)) continue;
            // through the flip and the normalization
            Vec3 dc = flip * (Mat3::Identity() - nm * nm.transpose()) * g / n;
            // c = dx x dy
            Vec3 ddx = dy.cross(dc);
            Vec3 ddy = dc.cross(dx);
            // P(px,py) = depth(px,py) * r(px,py)
            ddepth.at(x + 1, y) += ddx.dot(cam.backproject_dir(x + 1.5, y + 0.5));
            ddepth.at(x - 1, y) += -ddx.dot(cam.backproject_dir(x - 0.5, y + 0.5));
            ddepth.at(x, y + 1) += ddy.dot(cam.backproject_dir(x + 0.5, y + 1.5));
            ddepth.at(x, y - 1) += -ddy.dot(cam.backproject_dir(x + 0.5, y - 0.5));
        }
    return ddepth;
}

}  // namespace dama
