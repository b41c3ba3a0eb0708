#include "plastiscan/registration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "plastiscan/parallel.hpp"

namespace plastiscan {

namespace {

constexpr double kDetEps = 1e-12;
constexpr double kConditionEps = 1e-10;

/// Cyclic Jacobi eigendecomposition of a symmetric n x n matrix (row-major).
/// Returns eigenvalues ascending with matching eigenvectors as columns of V.
void jacobi_eigen(std::vector<double>& a, int n, std::vector<double>& eigenvalues,
                  std::vector<double>& v) {
    v.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * n + i] = 1.0;

    auto at = [&](std::vector<double>& m, int r, int c) -> double& {
        return m[static_cast<std::size_t>(r) * n + c];
    };

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += at(a, p, q) * at(a, p, q);
        if (off < 1e-30) break;

        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = at(a, p, q);
                if (apq == 0.0) continue;
                const double app = at(a, p, p);
                const double aqq = at(a, q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (int k = 0; k < n; ++k) {
                    const double akp = at(a, k, p);
                    const double akq = at(a, k, q);
                    at(a, k, p) = c * akp - s * akq;
                    at(a, k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = at(a, p, k);
                    const double aqk = at(a, q, k);
                    at(a, p, k) = c * apk - s * aqk;
                    at(a, q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = at(v, k, p);
                    const double vkq = at(v, k, q);
                    at(v, k, p) = c * vkp - s * vkq;
                    at(v, k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    eigenvalues.resize(n);
    for (int i = 0; i < n; ++i) eigenvalues[i] = at(a, i, i);

    // sort ascending, permuting eigenvector columns alongside
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](int lhs, int rhs) { return eigenvalues[lhs] < eigenvalues[rhs]; });
    std::vector<double> ev_sorted(n);
    std::vector<double> v_sorted(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i) {
        ev_sorted[i] = eigenvalues[order[i]];
        for (int k = 0; k < n; ++k)
            v_sorted[static_cast<std::size_t>(k) * n + i] = v[static_cast<std::size_t>(k) * n + order[i]];
    }
    eigenvalues = std::move(ev_sorted);
    v = std::move(v_sorted);
}

struct NormalizeResult {
    std::vector<Point2> points;
    // similarity transform T: normalized = T * p, with T = [s 0 -s*cx; 0 s -s*cy; 0 0 1]
    double scale = 1.0;
    double cx = 0.0, cy = 0.0;
};

NormalizeResult hartley_normalize(const std::vector<Point2>& pts) {
    NormalizeResult out;
    const double n = static_cast<double>(pts.size());
    for (const Point2& p : pts) {
        out.cx += p.x;
        out.cy += p.y;
    }
    out.cx /= n;
    out.cy /= n;
    double mean_dist = 0.0;
    for (const Point2& p : pts)
        mean_dist += std::hypot(p.x - out.cx, p.y - out.cy);
    mean_dist /= n;
    if (mean_dist < 1e-15) throw std::invalid_argument("degenerate correspondences: coincident points");
    out.scale = std::sqrt(2.0) / mean_dist;
    out.points.reserve(pts.size());
    for (const Point2& p : pts)
        out.points.push_back({(p.x - out.cx) * out.scale, (p.y - out.cy) * out.scale});
    return out;
}

std::array<double, 9> mat_mul(const std::array<double, 9>& a, const std::array<double, 9>& b) {
    std::array<double, 9> r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += a[i * 3 + k] * b[k * 3 + j];
            r[i * 3 + j] = s;
        }
    return r;
}

}  // namespace

Homography Homography::translation(double dx, double dy) {
    Homography h;
    h.m = {1, 0, dx, 0, 1, dy, 0, 0, 1};
    return h;
}

Homography Homography::scaling(double sx, double sy) {
    Homography h;
    h.m = {sx, 0, 0, 0, sy, 0, 0, 0, 1};
    return h;
}

Point2 Homography::apply(Point2 p) const {
    const double w = m[6] * p.x + m[7] * p.y + m[8];
    return {(m[0] * p.x + m[1] * p.y + m[2]) / w, (m[3] * p.x + m[4] * p.y + m[5]) / w};
}

double Homography::det() const {
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Homography Homography::inverse() const {
    const Homography n = normalized();
    const double d = n.det();
    if (std::abs(d) < kDetEps) throw std::invalid_argument("homography is not invertible");
    const auto& a = n.m;
    Homography inv;
    inv.m = {(a[4] * a[8] - a[5] * a[7]) / d, (a[2] * a[7] - a[1] * a[8]) / d,
             (a[1] * a[5] - a[2] * a[4]) / d, (a[5] * a[6] - a[3] * a[8]) / d,
             (a[0] * a[8] - a[2] * a[6]) / d, (a[2] * a[3] - a[0] * a[5]) / d,
             (a[3] * a[7] - a[4] * a[6]) / d, (a[1] * a[6] - a[0] * a[7]) / d,
             (a[0] * a[4] - a[1] * a[3]) / d};
    return inv.normalized();
}

Homography Homography::compose(const Homography& inner) const {
    Homography r;
    r.m = mat_mul(m, inner.m);
    return r.normalized();
}

Homography Homography::normalized() const {
    Homography r = *this;
    if (m[8] != 0.0) {
        for (double& v : r.m) v /= m[8];
        // keep exact identity on the pivot
        r.m[8] = 1.0;
    } else {
        double fro = 0.0;
        for (double v : m) fro += v * v;
        fro = std::sqrt(fro);
        if (fro == 0.0) throw std::invalid_argument("zero homography");
        for (double& v : r.m) v /= fro;
    }
    return r;
}

HomographyEstimate estimate_homography(const std::vector<Correspondence>& points) {
    if (points.size() < 4)
        throw std::invalid_argument("homography estimation needs at least 4 correspondences");
    for (const Correspondence& c : points)
        if (!std::isfinite(c.src.x) || !std::isfinite(c.src.y) || !std::isfinite(c.dst.x) ||
            !std::isfinite(c.dst.y))
            throw std::invalid_argument("correspondence coordinates must be finite");

    std::vector<Point2> src, dst;
    src.reserve(points.size());
    dst.reserve(points.size());
    for (const Correspondence& c : points) {
        src.push_back(c.src);
        dst.push_back(c.dst);
    }
    const NormalizeResult ns = hartley_normalize(src);
    const NormalizeResult nd = hartley_normalize(dst);

    // Normal matrix M = A^T A of the stacked 2Nx9 DLT system.
    std::vector<double> normal(81, 0.0);
    auto accumulate_row = [&](const std::array<double, 9>& row) {
        for (int i = 0; i < 9; ++i)
            for (int j = i; j < 9; ++j) normal[static_cast<std::size_t>(i) * 9 + j] += row[i] * row[j];
    };
    for (std::size_t k = 0; k < points.size(); ++k) {
        const Point2& s = ns.points[k];
        const Point2& d = nd.points[k];
        accumulate_row({-s.x, -s.y, -1.0, 0.0, 0.0, 0.0, s.x * d.x, s.y * d.x, d.x});
        accumulate_row({0.0, 0.0, 0.0, -s.x, -s.y, -1.0, s.x * d.y, s.y * d.y, d.y});
    }
    for (int i = 0; i < 9; ++i)
        for (int j = 0; j < i; ++j)
            normal[static_cast<std::size_t>(i) * 9 + j] = normal[static_cast<std::size_t>(j) * 9 + i];

    std::vector<double> eigenvalues, vectors;
    jacobi_eigen(normal, 9, eigenvalues, vectors);

    const double lambda_max = std::max(std::abs(eigenvalues.front()), std::abs(eigenvalues.back()));
    if (!(lambda_max > 0.0) || eigenvalues[1] <= kConditionEps * lambda_max)
        throw std::invalid_argument(
            "degenerate correspondence configuration (collinear or coincident points)");

    std::array<double, 9> h_norm;  // eigenvector of the smallest eigenvalue
    for (int i = 0; i < 9; ++i) h_norm[i] = vectors[static_cast<std::size_t>(i) * 9];

    // Denormalize: H = T_dst^-1 * H_norm * T_src.
    const std::array<double, 9> t_src = {ns.scale, 0, -ns.scale * ns.cx,
                                         0, ns.scale, -ns.scale * ns.cy,
                                         0, 0, 1};
    const std::array<double, 9> t_dst_inv = {1.0 / nd.scale, 0, nd.cx,
                                             0, 1.0 / nd.scale, nd.cy,
                                             0, 0, 1};
    Homography h;
    h.m = mat_mul(t_dst_inv, mat_mul(h_norm, t_src));
    h = h.normalized();
    if (std::abs(h.normalized().det()) < kDetEps)
        throw std::invalid_argument("estimated homography is singular");

    double sq_sum = 0.0;
    for (const Correspondence& c : points) {
        const Point2 p = h.apply(c.src);
        const double dx = p.x - c.dst.x;
        const double dy = p.y - c.dst.y;
        sq_sum += dx * dx + dy * dy;
    }
    return {h, std::sqrt(sq_sum / static_cast<double>(points.size()))};
}

namespace {

/// Shared inverse-warp driver. sample(r_out, c_out, u, v, fu, fv, u0, v0)
/// receives the clamped bilinear cell; invalid pixels are handled before.
template <typename WriteInvalid, typename Sample>
void warp_grid(const Homography& h, int in_height, int in_width, int out_height, int out_width,
               int workers, LabelMask& validity, WriteInvalid&& write_invalid, Sample&& sample) {
    const Homography hinv = h.inverse();
    parallel_chunks(static_cast<std::size_t>(out_height), workers, [&](std::size_t r0, std::size_t r1) {
        for (std::size_t r = r0; r < r1; ++r) {
            for (int c = 0; c < out_width; ++c) {
                const double w = hinv.m[6] * c + hinv.m[7] * static_cast<double>(r) + hinv.m[8];
                bool ok = std::abs(w) > kDetEps;
                double u = 0.0, v = 0.0;
                if (ok) {
                    u = (hinv.m[0] * c + hinv.m[1] * static_cast<double>(r) + hinv.m[2]) / w;
                    v = (hinv.m[3] * c + hinv.m[4] * static_cast<double>(r) + hinv.m[5]) / w;
                    ok = u >= 0.0 && u <= in_width - 1.0 && v >= 0.0 && v <= in_height - 1.0;
                }
                if (!ok) {
                    validity.at(static_cast<int>(r), c) = kLabelIgnore;
                    write_invalid(static_cast<int>(r), c);
                    continue;
                }
                int u0 = static_cast<int>(std::floor(u));
                int v0 = static_cast<int>(std::floor(v));
                if (u0 > in_width - 2) u0 = in_width - 2;
                if (v0 > in_height - 2) v0 = in_height - 2;
                if (u0 < 0) u0 = 0;  // 1-wide inputs
                if (v0 < 0) v0 = 0;
                const double fu = u - u0;
                const double fv = v - v0;
                sample(static_cast<int>(r), c, u0, v0, fu, fv);
            }
        }
    });
}

}  // namespace

WarpedCube warp_to(const SpectralCube& raster, const Homography& h, int out_height, int out_width,
                   int workers) {
    if (out_height <= 0 || out_width <= 0)
        throw std::invalid_argument("warp output dimensions must be positive");

    WarpedCube out;
    out.cube.height = out_height;
    out.cube.width = out_width;
    out.cube.bands = raster.bands;
    out.cube.wavelengths = raster.wavelengths;
    out.cube.state = raster.state;
    out.cube.integration_time_ms = raster.integration_time_ms;
    out.cube.data.assign(static_cast<std::size_t>(out_height) * out_width * raster.bands, 0.0f);
    out.validity = LabelMask::filled(out_height, out_width, kLabelNonPlastic);

    const std::size_t in_plane = raster.pixel_count();
    const std::size_t out_plane = static_cast<std::size_t>(out_height) * out_width;
    warp_grid(
        h, raster.height, raster.width, out_height, out_width, workers, out.validity,
        [](int, int) {},
        [&](int r, int c, int u0, int v0, double fu, double fv) {
            const std::size_t base00 = static_cast<std::size_t>(v0) * raster.width + u0;
            const std::size_t out_idx = static_cast<std::size_t>(r) * out_width + c;
            const int u1 = u0 + 1 < raster.width ? 1 : 0;
            const int v1 = v0 + 1 < raster.height ? raster.width : 0;
            const double w00 = (1.0 - fu) * (1.0 - fv);
            const double w10 = fu * (1.0 - fv);
            const double w01 = (1.0 - fu) * fv;
            const double w11 = fu * fv;
            for (int b = 0; b < raster.bands; ++b) {
                const float* plane = raster.data.data() + static_cast<std::size_t>(b) * in_plane;
                const double value = w00 * plane[base00] + w10 * plane[base00 + u1] +
                                     w01 * plane[base00 + v1] + w11 * plane[base00 + v1 + u1];
                out.cube.data[static_cast<std::size_t>(b) * out_plane + out_idx] =
                    static_cast<float>(value);
            }
        });
    return out;
}

WarpedRGB warp_to(const RGBImage& raster, const Homography& h, int out_height, int out_width,
                  int workers) {
    if (out_height <= 0 || out_width <= 0)
        throw std::invalid_argument("warp output dimensions must be positive");

    WarpedRGB out;
    out.image.height = out_height;
    out.image.width = out_width;
    out.image.data.assign(static_cast<std::size_t>(out_height) * out_width * 3, 0.0f);
    out.validity = LabelMask::filled(out_height, out_width, kLabelNonPlastic);

    warp_grid(
        h, raster.height, raster.width, out_height, out_width, workers, out.validity,
        [](int, int) {},
        [&](int r, int c, int u0, int v0, double fu, double fv) {
            const int u1 = u0 + 1 < raster.width ? u0 + 1 : u0;
            const int v1 = v0 + 1 < raster.height ? v0 + 1 : v0;
            const double w00 = (1.0 - fu) * (1.0 - fv);
            const double w10 = fu * (1.0 - fv);
            const double w01 = (1.0 - fu) * fv;
            const double w11 = fu * fv;
            for (int ch = 0; ch < 3; ++ch) {
                const double value = w00 * raster.at(v0, u0, ch) + w10 * raster.at(v0, u1, ch) +
                                     w01 * raster.at(v1, u0, ch) + w11 * raster.at(v1, u1, ch);
                out.image.at(r, c, ch) = static_cast<float>(value);
            }
        });
    return out;
}

WarpedCube register_cube_to_rgb(const SpectralCube& cube, const RGBImage& rgb, const Homography& h,
                                int workers) {
    return warp_to(cube, h, rgb.height, rgb.width, workers);
}

std::vector<Correspondence> load_correspondences(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open correspondence file: " + path.string());
    try {
        nlohmann::json doc = nlohmann::json::parse(in);
        std::vector<Correspondence> out;
        for (const auto& entry : doc) {
            Correspondence c;
            c.src = {entry.at("src").at(0).get<double>(), entry.at("src").at(1).get<double>()};
            c.dst = {entry.at("dst").at(0).get<double>(), entry.at("dst").at(1).get<double>()};
            out.push_back(c);
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("bad correspondence file " + path.string() + ": " + e.what());
    }
}

void save_correspondences(const std::vector<Correspondence>& points,
                          const std::filesystem::path& path) {
    nlohmann::json doc = nlohmann::json::array();
    for (const Correspondence& c : points)
        doc.push_back({{"src", {c.src.x, c.src.y}}, {"dst", {c.dst.x, c.dst.y}}});
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for write: " + path.string());
    out << doc.dump(2) << '\n';
}

Homography load_homography(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open homography file: " + path.string());
    try {
        nlohmann::json doc = nlohmann::json::parse(in);
        Homography h;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) h.m[r * 3 + c] = doc.at(r).at(c).get<double>();
        return h;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("bad homography file " + path.string() + ": " + e.what());
    }
}

void save_homography(const Homography& h, const std::filesystem::path& path) {
    nlohmann::json doc = nlohmann::json::array();
    for (int r = 0; r < 3; ++r)
        doc.push_back({h.m[r * 3 + 0], h.m[r * 3 + 1], h.m[r * 3 + 2]});
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for write: " + path.string());
    out << doc.dump(2) << '\n';
}

}  // namespace plastiscan
