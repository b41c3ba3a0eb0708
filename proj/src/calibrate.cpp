#include "plastiscan/calibrate.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace plastiscan {

namespace {
constexpr double kDenominatorEps = 1e-6;  // counts
}

DarkFrame DarkFrame::full_frame(int height, int width, int bands, std::vector<float> values) {
    if (height <= 0 || width <= 0 || bands <= 0)
        throw std::invalid_argument("dark frame dimensions must be positive");
    if (values.size() != static_cast<std::size_t>(height) * width * bands)
        throw std::invalid_argument("dark frame data length mismatch");
    for (float v : values)
        if (!std::isfinite(v) || v < 0.0f)
            throw std::invalid_argument("dark frame values must be finite and non-negative");
    DarkFrame d;
    d.per_band_ = false;
    d.height_ = height;
    d.width_ = width;
    d.bands_ = bands;
    d.values_ = std::move(values);
    return d;
}

DarkFrame DarkFrame::per_band(std::vector<float> values) {
    if (values.empty()) throw std::invalid_argument("per-band dark frame needs >= 1 band");
    for (float v : values)
        if (!std::isfinite(v) || v < 0.0f)
            throw std::invalid_argument("dark frame values must be finite and non-negative");
    DarkFrame d;
    d.per_band_ = true;
    d.bands_ = static_cast<int>(values.size());
    d.values_ = std::move(values);
    return d;
}

bool DarkFrame::matches(const SpectralCube& cube) const {
    if (bands_ != cube.bands) return false;
    if (per_band_) return true;
    return height_ == cube.height && width_ == cube.width;
}

void ReferenceSpectrum::validate() const {
    if (reference.empty()) throw std::invalid_argument("reference spectrum is empty");
    if (!(panel_reflectivity > 0.0f && panel_reflectivity <= 1.0f))
        throw std::invalid_argument("panel reflectivity must be in (0, 1]");
    for (float v : reference)
        if (!std::isfinite(v)) throw std::invalid_argument("reference spectrum must be finite");
}

DarkFrame estimate_dark(const std::vector<SpectralCube>& frames) {
    if (frames.empty()) throw std::invalid_argument("estimate_dark needs at least one frame");
    const SpectralCube& first = frames.front();
    for (const SpectralCube& f : frames) {
        if (f.height != first.height || f.width != first.width || f.bands != first.bands)
            throw std::invalid_argument("dark frames have mismatched dimensions");
        if (f.state != CalibrationState::RawCounts)
            throw std::invalid_argument("dark frames must hold raw counts");
    }

    std::vector<double> acc(first.value_count(), 0.0);
    for (const SpectralCube& f : frames)
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += f.data[i];

    std::vector<float> mean(acc.size());
    const double inv = 1.0 / static_cast<double>(frames.size());
    for (std::size_t i = 0; i < acc.size(); ++i) mean[i] = static_cast<float>(acc[i] * inv);
    return DarkFrame::full_frame(first.height, first.width, first.bands, std::move(mean));
}

ReferenceSpectrum extract_reference(const SpectralCube& cube, const PixelRect& panel_region,
                                    const DarkFrame& dark, float panel_reflectivity) {
    if (cube.state != CalibrationState::RawCounts)
        throw std::invalid_argument("extract_reference expects a raw-counts cube");
    if (!dark.matches(cube)) throw std::invalid_argument("dark frame does not match cube");
    if (!(panel_reflectivity > 0.0f && panel_reflectivity <= 1.0f))
        throw std::invalid_argument("panel reflectivity must be in (0, 1]");
    if (panel_region.row < 0 || panel_region.col < 0 || panel_region.height <= 0 ||
        panel_region.width <= 0 || panel_region.row + panel_region.height > cube.height ||
        panel_region.col + panel_region.width > cube.width)
        throw std::invalid_argument("panel region out of bounds");

    ReferenceSpectrum out;
    out.panel_reflectivity = panel_reflectivity;
    out.reference.resize(static_cast<std::size_t>(cube.bands));

    const double n = static_cast<double>(panel_region.height) * panel_region.width;
    for (int b = 0; b < cube.bands; ++b) {
        double signal_minus_dark = 0.0;
        double dark_mean = 0.0;
        for (int r = panel_region.row; r < panel_region.row + panel_region.height; ++r) {
            for (int c = panel_region.col; c < panel_region.col + panel_region.width; ++c) {
                const double d = dark.value(r, c, b);
                signal_minus_dark += cube.at(r, c, b) - d;
                dark_mean += d;
            }
        }
        signal_minus_dark /= n;
        dark_mean /= n;
        if (signal_minus_dark <= 0.0)
            throw std::runtime_error("unusable reference: panel not brighter than dark at band " +
                                     std::to_string(b));
        out.reference[b] =
            static_cast<float>(dark_mean + signal_minus_dark / panel_reflectivity);
    }
    return out;
}

CalibratedCube reflectance(const SpectralCube& cube, const DarkFrame& dark,
                           const ReferenceSpectrum& reference) {
    if (cube.state == CalibrationState::Reflectance)
        throw std::invalid_argument("cube is already reflectance calibrated");
    if (!dark.matches(cube)) throw std::invalid_argument("dark frame does not match cube");
    reference.validate();
    if (reference.reference.size() != static_cast<std::size_t>(cube.bands))
        throw std::invalid_argument("reference band count does not match cube");

    CalibratedCube out;
    out.cube.height = cube.height;
    out.cube.width = cube.width;
    out.cube.bands = cube.bands;
    out.cube.wavelengths = cube.wavelengths;
    out.cube.state = CalibrationState::Reflectance;
    out.cube.integration_time_ms = cube.integration_time_ms;
    out.cube.data.assign(cube.value_count(), 0.0f);
    out.validity = LabelMask::filled(cube.height, cube.width, kLabelNonPlastic);

    const std::size_t plane = cube.pixel_count();
    for (int r = 0; r < cube.height; ++r) {
        for (int c = 0; c < cube.width; ++c) {
            const std::size_t p = static_cast<std::size_t>(r) * cube.width + c;
            bool dead = false;
            for (int b = 0; b < cube.bands && !dead; ++b) {
                const double denom = static_cast<double>(reference.reference[b]) - dark.value(r, c, b);
                if (denom <= kDenominatorEps) dead = true;
            }
            if (dead) {
                out.validity.labels[p] = kLabelIgnore;
                continue;  // bands stay 0
            }
            for (int b = 0; b < cube.bands; ++b) {
                const double d = dark.value(r, c, b);
                const double denom = static_cast<double>(reference.reference[b]) - d;
                double v = (static_cast<double>(cube.data[b * plane + p]) - d) / denom;
                if (v < 0.0) v = 0.0;
                if (v > 1.0) v = 1.0;
                out.cube.data[b * plane + p] = static_cast<float>(v);
            }
        }
    }
    return out;
}

ReferenceSpectrum load_reference(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open reference file: " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
        ReferenceSpectrum ref;
        ref.reference = doc.at("reference").get<std::vector<float>>();
        ref.panel_reflectivity = doc.at("panel_reflectivity").get<float>();
        ref.validate();
        return ref;
    } catch (const std::exception& e) {
        throw std::runtime_error("bad reference file " + path.string() + ": " + e.what());
    }
}

void save_reference(const ReferenceSpectrum& reference, const std::filesystem::path& path) {
    reference.validate();
    nlohmann::json doc;
    doc["reference"] = reference.reference;
    doc["panel_reflectivity"] = reference.panel_reflectivity;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for write: " + path.string());
    out << doc.dump(2) << '\n';
}

}  // namespace plastiscan
