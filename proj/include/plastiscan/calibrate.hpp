#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "plastiscan/cube_io.hpp"

namespace plastiscan {

/// Pixel rectangle, half-open in neither direction: rows [row, row+height),
/// cols [col, col+width).
struct PixelRect {
    int row = 0;
    int col = 0;
    int height = 0;
    int width = 0;
};

/// Mean dark signal, either full resolution (H x W x B) or one scalar per band.
class DarkFrame {
  public:
    static DarkFrame full_frame(int height, int width, int bands, std::vector<float> values);
    static DarkFrame per_band(std::vector<float> values);

    bool is_per_band() const { return per_band_; }
    int bands() const { return bands_; }
    int height() const { return height_; }
    int width() const { return width_; }

    float value(int r, int c, int b) const {
        if (per_band_) return values_[static_cast<std::size_t>(b)];
        return values_[static_cast<std::size_t>(b) * height_ * width_ +
                       static_cast<std::size_t>(r) * width_ + c];
    }

    /// True when this dark frame can calibrate a cube of the given dimensions.
    bool matches(const SpectralCube& cube) const;

  private:
    DarkFrame() = default;
    bool per_band_ = false;
    int height_ = 0, width_ = 0, bands_ = 0;
    std::vector<float> values_;
};

/// Per-band white-panel signal such that Eq. 1 maps panel pixels to the
/// panel's certified reflectivity.
struct ReferenceSpectrum {
    std::vector<float> reference;
    float panel_reflectivity = 0.95f;

    void validate() const;
};

struct CalibratedCube {
    SpectralCube cube;                // state = Reflectance
    LabelMask validity;               // 0 = valid, 255 = invalid (dead denominator)
};

DarkFrame estimate_dark(const std::vector<SpectralCube>& frames);

ReferenceSpectrum extract_reference(const SpectralCube& cube, const PixelRect& panel_region,
                                    const DarkFrame& dark, float panel_reflectivity);

/// reflectance = (signal - dark) / (reference - dark), clamped to [0, 1].
/// Pixels where any band's denominator <= 1e-6 counts are zeroed and marked 255
/// in the validity mask.
CalibratedCube reflectance(const SpectralCube& cube, const DarkFrame& dark,
                           const ReferenceSpectrum& reference);

ReferenceSpectrum load_reference(const std::filesystem::path& path);
void save_reference(const ReferenceSpectrum& reference, const std::filesystem::path& path);

}  // namespace plastiscan
