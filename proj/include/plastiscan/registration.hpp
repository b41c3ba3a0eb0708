#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "plastiscan/cube_io.hpp"

namespace plastiscan {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

/// 3x3 projective transform in row-major order, mapping cube pixel coordinates
/// (x = column, y = row) to RGB-frame coordinates. Kept normalized so that
/// m[8] == 1 when possible, otherwise to unit Frobenius norm.
struct Homography {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Homography identity() { return {}; }
    static Homography translation(double dx, double dy);
    static Homography scaling(double sx, double sy);

    Point2 apply(Point2 p) const;
    double det() const;
    Homography inverse() const;
    /// Composition as maps: result(p) = (*this)(inner(p)).
    Homography compose(const Homography& inner) const;
    Homography normalized() const;
};

struct Correspondence {
    Point2 src;
    Point2 dst;
};

struct HomographyEstimate {
    Homography h;
    double reprojection_rms = 0.0;
};

/// Normalized DLT: Hartley-normalize both point sets, take the smallest
/// eigenvector of the 9x9 normal matrix of the 2Nx9 system, denormalize.
/// Degenerate configurations (collinear/coincident points) are detected via
/// the conditioning of the normal matrix and rejected.
HomographyEstimate estimate_homography(const std::vector<Correspondence>& points);

struct WarpedCube {
    SpectralCube cube;
    LabelMask validity;  // 0 = valid, 255 = preimage outside the input raster
};

struct WarpedRGB {
    RGBImage image;
    LabelMask validity;
};

/// Inverse-map each output pixel through h^-1 and sample the input with
/// bilinear interpolation. Output pixels whose preimage leaves the input
/// domain are zeroed and marked invalid.
WarpedCube warp_to(const SpectralCube& raster, const Homography& h, int out_height, int out_width,
                   int workers = 1);
WarpedRGB warp_to(const RGBImage& raster, const Homography& h, int out_height, int out_width,
                  int workers = 1);

/// Warp the cube onto the RGB frame's grid; wavelengths are preserved and
/// border pixels are reported in the validity mask for downstream exclusion.
WarpedCube register_cube_to_rgb(const SpectralCube& cube, const RGBImage& rgb, const Homography& h,
                                int workers = 1);

std::vector<Correspondence> load_correspondences(const std::filesystem::path& path);
void save_correspondences(const std::vector<Correspondence>& points,
                          const std::filesystem::path& path);
Homography load_homography(const std::filesystem::path& path);
void save_homography(const Homography& h, const std::filesystem::path& path);

}  // namespace plastiscan
