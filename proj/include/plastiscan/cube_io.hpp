#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace plastiscan {

// Label codes shared by ground-truth and prediction masks.
inline constexpr std::uint8_t kLabelNonPlastic = 0;
inline constexpr std::uint8_t kLabelPlastic = 1;
inline constexpr std::uint8_t kLabelIgnore = 255;

enum class CalibrationState { RawCounts, Reflectance };

/// Band-center wavelengths in nanometers, strictly increasing, within [300, 2500].
struct WavelengthGrid {
    std::vector<float> centers_nm;

    std::size_t size() const { return centers_nm.size(); }
    void validate() const;
    bool operator==(const WavelengthGrid&) const = default;
};

/// H x W x B raster of 32-bit floats in band-sequential layout:
/// data[b*H*W + r*W + c] is band b at pixel (r, c).
struct SpectralCube {
    int height = 0;
    int width = 0;
    int bands = 0;
    std::vector<float> data;
    WavelengthGrid wavelengths;
    CalibrationState state = CalibrationState::RawCounts;
    std::optional<float> integration_time_ms;

    std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
    std::size_t value_count() const { return pixel_count() * bands; }

    float at(int r, int c, int b) const {
        return data[static_cast<std::size_t>(b) * pixel_count() + static_cast<std::size_t>(r) * width + c];
    }
    float& at(int r, int c, int b) {
        return data[static_cast<std::size_t>(b) * pixel_count() + static_cast<std::size_t>(r) * width + c];
    }

    void validate() const;
    bool operator==(const SpectralCube&) const = default;
};

/// H x W image, 3 channels pixel-interleaved (R, G, B), values in [0, 1].
struct RGBImage {
    int height = 0;
    int width = 0;
    std::vector<float> data;

    float at(int r, int c, int ch) const {
        return data[(static_cast<std::size_t>(r) * width + c) * 3 + ch];
    }
    float& at(int r, int c, int ch) {
        return data[(static_cast<std::size_t>(r) * width + c) * 3 + ch];
    }

    void validate() const;
    bool operator==(const RGBImage&) const = default;
};

/// Per-pixel labels: 0 = non-plastic, 1 = plastic, 255 = ignore.
struct LabelMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> labels;

    static LabelMask filled(int height, int width, std::uint8_t value);

    std::uint8_t at(int r, int c) const { return labels[static_cast<std::size_t>(r) * width + c]; }
    std::uint8_t& at(int r, int c) { return labels[static_cast<std::size_t>(r) * width + c]; }

    void validate() const;
    bool operator==(const LabelMask&) const = default;
};

enum class Role { Train, Test };

std::string role_name(Role role);
Role role_from_name(const std::string& name);

/// One scenario entry: composition tags, background, split role and file paths.
/// Paths are stored exactly as written in the manifest JSON (usually relative
/// to the manifest's directory); `dark` and `reference` are optional inputs
/// used to calibrate raw cubes on load.
struct SceneManifest {
    int scenario_id = 0;
    std::vector<std::string> composition;
    std::string background;
    Role role = Role::Train;
    std::string cube;
    std::string rgb;
    std::string mask;
    std::string dark;
    std::string reference;

    void validate() const;
    bool operator==(const SceneManifest&) const = default;
};

/// Flattened per-pixel training samples: `features` is count x bands row-major,
/// one row per non-ignored pixel in row-major scan order.
struct PixelSamples {
    std::size_t count = 0;
    std::size_t bands = 0;
    std::vector<float> features;
    std::vector<std::uint8_t> labels;
};

SpectralCube load_cube(const std::filesystem::path& path);
void save_cube(const SpectralCube& cube, const std::filesystem::path& path);

LabelMask load_mask(const std::filesystem::path& path);
void save_mask(const LabelMask& mask, const std::filesystem::path& path);

SceneManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const SceneManifest& manifest, const std::filesystem::path& path);

/// Resolve a manifest-relative path against the directory the manifest lives in.
std::filesystem::path resolve_manifest_path(const std::filesystem::path& manifest_file,
                                            const std::string& entry);

PixelSamples flatten_pixels(const SpectralCube& cube, const LabelMask& mask);

/// RGB frames are stored on disk as 3-band cubes with nominal band centers
/// {470, 540, 620} nm; band order follows the increasing wavelength grid,
/// so band 0 = blue, band 1 = green, band 2 = red.
SpectralCube cube_from_rgb(const RGBImage& image);
RGBImage rgb_from_cube(const SpectralCube& cube);

}  // namespace plastiscan
