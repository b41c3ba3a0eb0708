#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "plastiscan/cube_io.hpp"

namespace plastiscan {

/// Gaussian absorption feature subtracted from a material's base spectrum.
struct AbsorptionDip {
    float center_nm = 0.0f;
    float sigma_nm = 40.0f;
    float depth = 0.1f;
};

/// Material reflectance model: a smooth quadratic base through three anchor
/// reflectances (at lambda_min, mid, lambda_max) minus Gaussian dips.
struct MaterialSpec {
    std::string name;
    bool is_plastic = false;
    std::array<float, 3> base_anchors{0.3f, 0.3f, 0.3f};
    std::vector<AbsorptionDip> dips;
};

struct SceneSpec {
    int scenario_id = 1;
    Role role = Role::Train;
    std::string background;
    std::vector<std::string> items;  // material names scattered over the background
    int items_per_material = 6;
    bool turbid = false;
};

struct SynthConfig {
    int height = 72;
    int width = 96;
    int bands = 33;
    float lambda_min_nm = 460.0f;
    float lambda_max_nm = 1700.0f;
    float noise_sigma = 0.02f;
    /// Turbid scenes keep s' = background + attenuation * (s - background).
    float attenuation = 0.8f;
    /// Per-item contrast factor drawn from U(1 - depth_jitter, 1); models
    /// partially submerged items whose spectral contrast is damped.
    float depth_jitter = 0.0f;
    std::vector<MaterialSpec> materials;
    std::vector<SceneSpec> scenes;

    void validate() const;
};

/// Ten-scenario riverine benchmark: lab-staged training scenes (1-6) and
/// settled/turbid riverbed test scenes (7-10). Plastics are only separable
/// through SWIR absorption dips, and the dip pattern is chosen so that no
/// linear score can split plastics from the organics clutter.
SynthConfig riverine_preset();

/// Clean (noise-free) spectrum of one material on a wavelength grid,
/// clamped to [0, 1].
std::vector<float> material_spectrum(const MaterialSpec& material, const WavelengthGrid& grid,
                                     float lambda_min_nm, float lambda_max_nm);

/// Average of the cube bands within `window_nm` of each of {620, 540, 470} nm
/// (nearest band when the window is empty), packed as an RGB image.
RGBImage derive_rgb(const SpectralCube& cube, float window_nm = 45.0f);

/// Generate cube/rgb/mask/manifest files for every scene in the config.
/// Returns the manifest paths in scene order. Same (config, seed) produces
/// byte-identical files.
std::vector<std::filesystem::path> synth_gen(const SynthConfig& config, std::uint64_t seed,
                                             const std::filesystem::path& out_dir);

}  // namespace plastiscan
