#include <catch2/catch_amalgamated.hpp>

#include <numeric>

#include "dama/realize.hpp"
#include "dama/renderer.hpp"
#include "dama/shapes.hpp"

using namespace dama;

namespace {

// Camera at the origin looking down +z; odd resolution so the center pixel's
// ray is exactly the principal axis.
Camera axis_camera(int res = 17, double focal = 100) {
    Camera cam;
    cam.width = cam.height = res;
    cam.fx = cam.fy = focal;
    cam.cx = cam.cy = res / 2.0;
    cam.world_to_cam = Rigid{};
    return cam;
}

WorldSplat axis_splat(double z, const Vec3& color, double alpha) {
    WorldSplat s;
    s.mu = Vec3(0, 0, z);
    s.quat = quat_identity();  // disk normal +z, facing the camera after flip
    s.scale = Vec2(0.05, 0.05);
    s.color = color;
    s.alpha = alpha;
    return s;
}

// Straight-loop compositing oracle: per pixel, walk all splats in depth
// order and blend, with the same skip rule as the renderer.
Vec3 oracle_pixel(const std::vector<WorldSplat>& splats, const Camera& cam, int x, int y,
                  const RenderOptions& opt, double* alpha_out = nullptr) {
    std::vector<int> order(splats.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return cam.depth_of(splats[a].mu) < cam.depth_of(splats[b].mu);
    });
    Vec3 o, d;
    cam.pixel_ray(x + 0.5, y + 0.5, o, d);
    Vec3 c = Vec3::Zero();
    double T = 1, A = 0;
    for (int i : order) {
        const auto& s = splats[i];
        if (cam.depth_of(s.mu) <= opt.znear) continue;
        Mat3 R = quat_to_matrix(quat_normalize(s.quat));
        Vec3 n = R.col(2);
        double beta = d.dot(n);
        if (std::abs(beta) < 1e-12) continue;
        double t = (s.mu - o).dot(n) / beta;
        if (t <= opt.znear) continue;
        Vec3 q = o + t * d - s.mu;
        double u = q.dot(R.col(0)) / s.scale.x();
        double v = q.dot(R.col(1)) / s.scale.y();
        double rho = u * u + v * v;
        if (rho > 700) continue;
        double a = s.alpha * std::exp(-0.5 * rho);
        if (!opt.exact && a < opt.cutoff) continue;
        c += a * T * s.color;
        A += a * T;
        T *= 1 - a;
    }
    if (alpha_out) *alpha_out = A;
    return c;
}

std::vector<WorldSplat> random_scene(Rng& rng, int n, bool with_frozen = false) {
    std::vector<WorldSplat> splats;
    for (int i = 0; i < n; ++i) {
        WorldSplat s;
        s.mu = Vec3(uniform(rng, -0.25, 0.25), uniform(rng, -0.25, 0.25), uniform(rng, 1.0, 3.0));
        s.quat = quat_from_axis_angle(
            Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)), uniform(rng, -1.2, 1.2));
        s.scale = Vec2(std::exp(uniform(rng, -3.5, -2.0)), std::exp(uniform(rng, -3.5, -2.0)));
        s.color = Vec3(uniform(rng), uniform(rng), uniform(rng));
        s.alpha = uniform(rng, 0.3, 1.0);
        s.frozen = with_frozen && (i % 4 == 0);
        splats.push_back(s);
    }
    return splats;
}

}  // namespace

TEST_CASE("single opaque splat covering the pixel center exactly") {
    auto cam = axis_camera();
    std::vector<WorldSplat> splats = {axis_splat(1.0, Vec3(0.2, 0.7, 0.4), 1.0)};
    auto out = render(splats, cam);
    int c = cam.width / 2;
    CHECK((out.color.rgb(c, c) - Vec3(0.2, 0.7, 0.4)).norm() < 1e-12);
    CHECK(out.alpha.at(c, c) == Catch::Approx(1.0).margin(1e-12));
    CHECK(out.depth.at(c, c) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("two stacked splats composite arithmetically") {
    auto cam = axis_camera();
    Vec3 c1(1, 0, 0), c2(0, 1, 0);
    std::vector<WorldSplat> splats = {axis_splat(2.0, c2, 0.5), axis_splat(1.0, c1, 0.5)};
    auto out = render(splats, cam);
    int c = cam.width / 2;
    CHECK((out.color.rgb(c, c) - (0.5 * c1 + 0.25 * c2)).norm() < 1e-12);
    CHECK(out.alpha.at(c, c) == Catch::Approx(0.75).margin(1e-12));
}

TEST_CASE("zero splats produce a background-only output") {
    auto cam = axis_camera();
    auto out = render({}, cam);
    CHECK(out.alpha.at(3, 3) == 0.0);
    CHECK(out.color.rgb(3, 3).norm() == 0.0);
}

TEST_CASE("splat behind the camera is culled silently") {
    auto cam = axis_camera();
    std::vector<WorldSplat> splats = {axis_splat(-1.0, Vec3(1, 1, 1), 1.0)};
    auto out = render(splats, cam);
    CHECK(out.alpha.at(cam.width / 2, cam.height / 2) == 0.0);
}

TEST_CASE("random 10-splat scene equals the straight-loop oracle") {
    Rng rng(42);
    auto cam = axis_camera(24, 60);
    for (int trial = 0; trial < 5; ++trial) {
        auto splats = random_scene(rng, 10);
        auto out = render(splats, cam);
        for (int y = 0; y < cam.height; ++y)
            for (int x = 0; x < cam.width; ++x) {
                double a;
                Vec3 c = oracle_pixel(splats, cam, x, y, RenderOptions{}, &a);
                CHECK((out.color.rgb(x, y) - c).norm() < 1e-6);
                CHECK(std::abs(out.alpha.at(x, y) - a) < 1e-6);
            }
    }
}

TEST_CASE("order correctness: opaque front-most splat wins") {
    auto cam = axis_camera();
    std::vector<WorldSplat> splats = {axis_splat(3.0, Vec3(0, 0, 1), 1.0), axis_splat(1.0, Vec3(1, 0, 0), 1.0),
                                      axis_splat(2.0, Vec3(0, 1, 0), 1.0)};
    auto out = render(splats, cam);
    CHECK((out.color.rgb(cam.width / 2, cam.height / 2) - Vec3(1, 0, 0)).norm() < 1e-12);
}

TEST_CASE("alpha is non-decreasing in splat count and bounded by 1") {
    Rng rng(11);
    auto cam = axis_camera(20, 50);
    auto splats = random_scene(rng, 12);
    Image prev_alpha;
    for (int n = 1; n <= 12; ++n) {
        std::vector<WorldSplat> sub(splats.begin(), splats.begin() + n);
        auto out = render(sub, cam);
        for (int y = 0; y < cam.height; ++y)
            for (int x = 0; x < cam.width; ++x) {
                CHECK(out.alpha.at(x, y) <= 1.0 + 1e-12);
                if (n > 1) CHECK(out.alpha.at(x, y) >= prev_alpha.at(x, y) - 1e-12);
            }
        prev_alpha = out.alpha;
    }
}

TEST_CASE("rendering is bit-deterministic") {
    Rng rng(5);
    auto cam = axis_camera(32, 70);
    auto splats = random_scene(rng, 20, true);
    auto a = render(splats, cam);
    auto b = render(splats, cam);
    CHECK(a.color.data == b.color.data);
    CHECK(a.alpha.data == b.alpha.data);
    CHECK(a.depth.data == b.depth.data);
    CHECK(a.normal_splat.data == b.normal_splat.data);
}

TEST_CASE("normals from a constant-depth plane are (0,0,-1)") {
    auto cam = axis_camera();
    Image depth(cam.width, cam.height, 1, 2.0);
    Image valid(cam.width, cam.height, 1, 1.0);
    Image normal, nvalid;
    normals_from_depth(depth, valid, cam, normal, nvalid);
    for (int y = 1; y < cam.height - 1; ++y)
        for (int x = 1; x < cam.width - 1; ++x) {
            REQUIRE(nvalid.at(x, y) == 1.0);
            CHECK((normal.rgb(x, y) - Vec3(0, 0, -1)).norm() < 1e-12);
        }
}

TEST_CASE("normals from a depth ramp match the analytic plane") {
    auto cam = axis_camera(33, 200);
    // camera-space plane z = z0 + s * x  =>  depth(px) solves z = z0 + s*z*(px-cx)/fx
    double z0 = 2.0, slope = 0.3;
    Image depth(cam.width, cam.height, 1);
    Image valid(cam.width, cam.height, 1, 1.0);
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x) {
            double xn = (x + 0.5 - cam.cx) / cam.fx;
            depth.at(x, y) = z0 / (1.0 - slope * xn);
        }
    Image normal, nvalid;
    normals_from_depth(depth, valid, cam, normal, nvalid);
    Vec3 expect = Vec3(slope, 0, -1).normalized();  // plane s*x - z + z0 = 0, facing camera
    for (int y = 1; y < cam.height - 1; ++y)
        for (int x = 1; x < cam.width - 1; ++x) {
            REQUIRE(nvalid.at(x, y) == 1.0);
            CHECK((normal.rgb(x, y) - expect).norm() < 1e-4);
        }
}

TEST_CASE("rendered icosphere depth normals agree with the radial oracle within 5 degrees") {
    auto mesh = make_icosphere(3, 0.4);
    auto refs = reference_from_mesh(mesh, Vec3(0.7, 0.7, 0.7));
    auto splats = reference_splats(refs);
    auto cam = look_at_camera(Vec3(0, -1.6, 0), Vec3(0, 0, 0), 96, 96, 140);
    auto out = render(splats, cam);
    Image valid(out.alpha.width, out.alpha.height, 1);
    for (int y = 0; y < valid.height; ++y)
        for (int x = 0; x < valid.width; ++x) valid.at(x, y) = out.alpha.at(x, y) >= 0.5 ? 1.0 : 0.0;
    Image normal, nvalid;
    normals_from_depth(out.depth, valid, cam, normal, nvalid);
    double err_sum = 0;
    int count = 0;
    for (int y = 0; y < valid.height; ++y)
        for (int x = 0; x < valid.width; ++x) {
            if (nvalid.at(x, y) < 0.5) continue;
            Vec3 p_cam = out.depth.at(x, y) * cam.backproject_dir(x + 0.5, y + 0.5);
            Vec3 p_world = cam.world_to_cam.inverse().apply(p_cam);
            Vec3 radial_cam = cam.world_to_cam.R * p_world.normalized();
            if (radial_cam.dot(cam.backproject_dir(x + 0.5, y + 0.5)) > 0) radial_cam = -radial_cam;
            double ang = std::acos(std::clamp(normal.rgb(x, y).dot(radial_cam), -1.0, 1.0));
            err_sum += ang;
            ++count;
        }
    REQUIRE(count > 500);
    CHECK(err_sum / count < 5.0 * M_PI / 180.0);
}

namespace {

// scalar probe of all render channels with fixed random weights
double render_probe(const std::vector<WorldSplat>& splats, const Camera& cam, const RenderOptions& opt,
                    const Image& rc, const Image& ra, const Image& rd, const Image& rn) {
    auto out = render(splats, cam, opt);
    double s = 0;
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x) {
            s += out.color.rgb(x, y).dot(rc.rgb(x, y));
            s += out.alpha.at(x, y) * ra.at(x, y);
            s += out.depth.at(x, y) * rd.at(x, y);
            s += out.normal_splat.rgb(x, y).dot(rn.rgb(x, y));
        }
    return s;
}

}  // namespace

TEST_CASE("render backward matches finite differences for mean, scale, color, opacity") {
    Rng rng(77);
    auto cam = axis_camera(16, 40);
    RenderOptions opt;
    opt.exact = true;
    auto splats = random_scene(rng, 6, true);
    Image rc(16, 16, 3), ra(16, 16, 1), rd(16, 16, 1), rn(16, 16, 3);
    for (auto* img : {&rc, &ra, &rd, &rn})
        for (auto& v : img->data) v = uniform(rng, -1, 1);

    RenderUpstream up{rc, ra, rd, rn};
    auto grads = render_backward(splats, cam, opt, up);

    const double h = 1e-6;
    auto fd = [&](double& slot) {
        double saved = slot;
        slot = saved + h;
        double fp = render_probe(splats, cam, opt, rc, ra, rd, rn);
        slot = saved - h;
        double fm = render_probe(splats, cam, opt, rc, ra, rd, rn);
        slot = saved;
        return (fp - fm) / (2 * h);
    };
    int checked = 0;
    for (std::size_t i = 0; i < splats.size(); ++i) {
        if (splats[i].frozen) {
            CHECK(grads[i].dmu.norm() == 0.0);
            continue;
        }
        for (int k = 0; k < 3; ++k) {
            double want = fd(splats[i].mu[k]);
            CHECK(grads[i].dmu[k] == Catch::Approx(want).margin(1e-4).epsilon(1e-3));
        }
        for (int k = 0; k < 2; ++k) {
            double want = fd(splats[i].scale[k]);
            CHECK(grads[i].dscale[k] == Catch::Approx(want).margin(1e-4).epsilon(1e-3));
        }
        for (int k = 0; k < 3; ++k) {
            double want = fd(splats[i].color[k]);
            CHECK(grads[i].dcolor[k] == Catch::Approx(want).margin(1e-4).epsilon(1e-3));
        }
        double want = fd(splats[i].alpha);
        CHECK(grads[i].dalpha == Catch::Approx(want).margin(1e-4).epsilon(1e-3));
        ++checked;
    }
    CHECK(checked >= 4);
}

TEST_CASE("normals_from_depth backward matches finite differences") {
    Rng rng(123);
    auto cam = axis_camera(9, 30);
    Image depth(9, 9, 1), valid(9, 9, 1, 1.0), rn(9, 9, 3);
    for (int y = 0; y < 9; ++y)
        for (int x = 0; x < 9; ++x) depth.at(x, y) = 2.0 + 0.1 * std::sin(x * 0.8) + 0.07 * std::cos(y * 1.1);
    for (auto& v : rn.data) v = uniform(rng, -1, 1);

    auto probe = [&](const Image& d) {
        Image normal, nvalid;
        normals_from_depth(d, valid, cam, normal, nvalid);
        double s = 0;
        for (int y = 0; y < 9; ++y)
            for (int x = 0; x < 9; ++x)
                if (nvalid.at(x, y) > 0.5) s += normal.rgb(x, y).dot(rn.rgb(x, y));
        return s;
    };
    Image ddepth = normals_from_depth_backward(depth, valid, cam, rn);
    const double h = 1e-6;
    for (int y = 0; y < 9; ++y)
        for (int x = 0; x < 9; ++x) {
            Image dp = depth, dm = depth;
            dp.at(x, y) += h;
            dm.at(x, y) -= h;
            double want = (probe(dp) - probe(dm)) / (2 * h);
            CHECK(ddepth.at(x, y) == Catch::Approx(want).margin(1e-5).epsilon(1e-3));
        }
}

TEST_CASE("rotation jacobian helpers match finite differences") {
    Rng rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        Vec4 q = quat_from_axis_angle(
            Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)), uniform(rng, -3, 3));
        Mat3 J[4];
        realize_detail::rotation_quat_jacobian(q, J);
        const double h = 1e-7;
        for (int k = 0; k < 4; ++k) {
            Vec4 qp = q, qm = q;
            qp[k] += h;
            qm[k] -= h;
            Mat3 want = (quat_to_matrix(qp) - quat_to_matrix(qm)) / (2 * h);
            CHECK((J[k] - want).norm() < 1e-5);
        }
        Vec4 b = quat_from_axis_angle(Vec3(uniform(rng, -1, 1), 1, uniform(rng, -1, 1)), uniform(rng, -2, 2));
        Vec4 via_matrix = realize_detail::quat_left_matrix(q) * b;
        CHECK((via_matrix.normalized() - quat_compose(q, b)).norm() < 1e-12);
    }
}
