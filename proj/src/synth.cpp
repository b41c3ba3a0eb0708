#include "plastiscan/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <unordered_map>

namespace plastiscan {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

char digit(int v) { return static_cast<char>('0' + v); }

std::string scene_stem(int scenario_id) {
    return std::string("scene_") + digit(scenario_id / 10) + digit(scenario_id % 10);
}

}  // namespace

void SynthConfig::validate() const {
    if (height < 16 || width < 16) throw std::invalid_argument("scene dimensions must be >= 16");
    if (bands < 3) throw std::invalid_argument("need at least 3 bands");
    if (!(lambda_min_nm < lambda_max_nm) || lambda_min_nm < 300.0f || lambda_max_nm > 2500.0f)
        throw std::invalid_argument("wavelength range must be increasing within [300, 2500] nm");
    if (noise_sigma < 0.0f) throw std::invalid_argument("noise sigma must be >= 0");
    if (!(attenuation > 0.0f && attenuation <= 1.0f))
        throw std::invalid_argument("attenuation must be in (0, 1]");
    if (depth_jitter < 0.0f || depth_jitter >= 1.0f)
        throw std::invalid_argument("depth jitter must be in [0, 1)");
    if (materials.empty()) throw std::invalid_argument("material list is empty");
    if (scenes.empty()) throw std::invalid_argument("scene list is empty");

    bool any_plastic = false, any_background = false;
    for (const MaterialSpec& m : materials) {
        if (m.name.empty()) throw std::invalid_argument("material with empty name");
        (m.is_plastic ? any_plastic : any_background) = true;
    }
    if (!any_plastic || !any_background)
        throw std::invalid_argument("need at least one plastic and one background material");

    auto find = [&](const std::string& name) {
        for (const MaterialSpec& m : materials)
            if (m.name == name) return true;
        return false;
    };
    for (const SceneSpec& s : scenes) {
        if (!find(s.background)) throw std::invalid_argument("unknown background: " + s.background);
        for (const std::string& item : s.items)
            if (!find(item)) throw std::invalid_argument("unknown item material: " + item);
        if (s.items_per_material < 1) throw std::invalid_argument("items_per_material must be >= 1");
    }
}

std::vector<float> material_spectrum(const MaterialSpec& material, const WavelengthGrid& grid,
                                     float lambda_min_nm, float lambda_max_nm) {
    // quadratic through anchors at u = 0, 0.5, 1
    const double p0 = material.base_anchors[0];
    const double p1 = material.base_anchors[1];
    const double p2 = material.base_anchors[2];
    const double b = 4.0 * p1 - 3.0 * p0 - p2;
    const double c = 2.0 * p0 + 2.0 * p2 - 4.0 * p1;
    const double span = static_cast<double>(lambda_max_nm) - lambda_min_nm;

    std::vector<float> out(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double lambda = grid.centers_nm[i];
        const double u = (lambda - lambda_min_nm) / span;
        double r = p0 + b * u + c * u * u;
        for (const AbsorptionDip& dip : material.dips) {
            const double d = (lambda - dip.center_nm) / dip.sigma_nm;
            r -= dip.depth * std::exp(-0.5 * d * d);
        }
        out[i] = static_cast<float>(std::clamp(r, 0.0, 1.0));
    }
    return out;
}

RGBImage derive_rgb(const SpectralCube& cube, float window_nm) {
    if (cube.state != CalibrationState::Reflectance)
        throw std::invalid_argument("derive_rgb expects a reflectance cube");
    const std::array<float, 3> targets{620.0f, 540.0f, 470.0f};  // R, G, B

    std::array<std::vector<int>, 3> channel_bands;
    for (int ch = 0; ch < 3; ++ch) {
        int nearest = 0;
        float nearest_dist = std::numeric_limits<float>::infinity();
        for (int b = 0; b < cube.bands; ++b) {
            const float dist = std::abs(cube.wavelengths.centers_nm[b] - targets[ch]);
            if (dist <= window_nm) channel_bands[ch].push_back(b);
            if (dist < nearest_dist) {
                nearest_dist = dist;
                nearest = b;
            }
        }
        if (channel_bands[ch].empty()) channel_bands[ch].push_back(nearest);
    }

    RGBImage image;
    image.height = cube.height;
    image.width = cube.width;
    image.data.resize(cube.pixel_count() * 3);
    const std::size_t plane = cube.pixel_count();
    for (std::size_t p = 0; p < plane; ++p) {
        for (int ch = 0; ch < 3; ++ch) {
            double acc = 0.0;
            for (int b : channel_bands[ch]) acc += cube.data[static_cast<std::size_t>(b) * plane + p];
            image.data[p * 3 + ch] =
                static_cast<float>(acc / static_cast<double>(channel_bands[ch].size()));
        }
    }
    return image;
}

SynthConfig riverine_preset() {
    SynthConfig cfg;
    cfg.depth_jitter = 0.4f;  // partial submersion damps item contrast
    cfg.materials = {
        // staging tarp: dark and featureless
        {"black_pe", false, {0.05f, 0.06f, 0.05f}, {}},
        {"water", false, {0.16f, 0.36f, 0.22f}, {}},
        {"river_sand", false, {0.40f, 0.48f, 0.40f}, {}},
        // cellulose-like debris: absorbs at both SWIR features
        {"cardboard",
         false,
         {0.24f, 0.42f, 0.30f},
         {{1215.0f, 45.0f, 0.22f}, {1410.0f, 50.0f, 0.30f}}},
        // foliage: red-edge-ish base, leaf water absorption at both features
        {"vegetation",
         false,
         {0.12f, 0.45f, 0.28f},
         {{1215.0f, 45.0f, 0.20f}, {1410.0f, 55.0f, 0.30f}}},
        // woody branches: brownish base, same cellulose/water dip pair
        {"driftwood",
         false,
         {0.20f, 0.34f, 0.24f},
         {{1215.0f, 45.0f, 0.24f}, {1410.0f, 50.0f, 0.26f}}},
        // transparent film riding on water: water base, one SWIR dip
        {"plastic_film", true, {0.16f, 0.36f, 0.22f}, {{1410.0f, 40.0f, 0.28f}}},
        // sand-colored container plastic: sand base, the other SWIR dip
        {"plastic_shell", true, {0.40f, 0.48f, 0.40f}, {{1215.0f, 40.0f, 0.28f}}},
    };
    cfg.scenes = {
        {1, Role::Train, "black_pe", {"vegetation", "driftwood"}, 5, false},
        {2, Role::Train, "black_pe", {"plastic_film", "plastic_shell"}, 6, false},
        {3, Role::Train, "black_pe", {"plastic_film", "plastic_shell", "water"}, 5, false},
        {4, Role::Train, "river_sand", {"plastic_film", "plastic_shell", "driftwood"}, 5, false},
        {5, Role::Train, "black_pe", {"plastic_film", "plastic_shell"}, 6, false},
        {6, Role::Train, "river_sand", {"plastic_film", "plastic_shell", "vegetation"}, 5, false},
        {7, Role::Test, "river_sand",
         {"plastic_film", "plastic_shell", "cardboard", "cardboard", "water"}, 4, false},
        {8, Role::Test, "river_sand",
         {"plastic_film", "plastic_shell", "cardboard", "cardboard", "water"}, 4, true},
        {9, Role::Test, "river_sand",
         {"plastic_film", "plastic_shell", "cardboard", "vegetation", "driftwood", "water"}, 4,
         false},
        {10, Role::Test, "river_sand",
         {"plastic_film", "plastic_shell", "cardboard", "vegetation", "driftwood", "water"}, 4,
         true},
    };
    return cfg;
}

std::vector<std::filesystem::path> synth_gen(const SynthConfig& config, std::uint64_t seed,
                                             const std::filesystem::path& out_dir) {
    config.validate();
    std::filesystem::create_directories(out_dir);

    WavelengthGrid grid;
    grid.centers_nm.resize(config.bands);
    for (int b = 0; b < config.bands; ++b)
        grid.centers_nm[b] = config.lambda_min_nm + (config.lambda_max_nm - config.lambda_min_nm) *
                                                        static_cast<float>(b) /
                                                        static_cast<float>(config.bands - 1);

    std::unordered_map<std::string, const MaterialSpec*> by_name;
    for (const MaterialSpec& m : config.materials) by_name[m.name] = &m;

    std::vector<std::filesystem::path> manifests;
    for (const SceneSpec& scene : config.scenes) {
        std::mt19937_64 rng(splitmix64(seed ^ (0x51ED270B8A03ull * scene.scenario_id)));
        const int h = config.height;
        const int w = config.width;

        // paint items over the background, later items on top; each item gets
        // one contrast factor combining turbidity and submersion jitter
        std::vector<const MaterialSpec*> pixel_material(
            static_cast<std::size_t>(h) * w, by_name.at(scene.background));
        std::vector<float> pixel_contrast(static_cast<std::size_t>(h) * w, 1.0f);
        std::uniform_int_distribution<int> row_dist(0, h - 1), col_dist(0, w - 1);
        std::uniform_int_distribution<int> rh_dist(h / 10, h / 4), rw_dist(w / 10, w / 4);
        std::uniform_real_distribution<float> jitter_dist(1.0f - config.depth_jitter, 1.0f);
        for (const std::string& item : scene.items) {
            const MaterialSpec* mat = by_name.at(item);
            for (int k = 0; k < scene.items_per_material; ++k) {
                const int r0 = row_dist(rng);
                const int c0 = col_dist(rng);
                const int rh = rh_dist(rng);
                const int rw = rw_dist(rng);
                const float contrast =
                    (scene.turbid ? config.attenuation : 1.0f) * jitter_dist(rng);
                for (int r = r0; r < std::min(h, r0 + rh); ++r)
                    for (int c = c0; c < std::min(w, c0 + rw); ++c) {
                        pixel_material[static_cast<std::size_t>(r) * w + c] = mat;
                        pixel_contrast[static_cast<std::size_t>(r) * w + c] = contrast;
                    }
            }
        }

        std::unordered_map<const MaterialSpec*, std::vector<float>> spectra;
        const std::vector<float> bg_spectrum = material_spectrum(
            *by_name.at(scene.background), grid, config.lambda_min_nm, config.lambda_max_nm);
        for (const auto& [name, mat] : by_name)
            spectra[mat] = material_spectrum(*mat, grid, config.lambda_min_nm, config.lambda_max_nm);

        SpectralCube cube;
        cube.height = h;
        cube.width = w;
        cube.bands = config.bands;
        cube.wavelengths = grid;
        cube.state = CalibrationState::Reflectance;
        cube.data.resize(cube.value_count());
        LabelMask mask = LabelMask::filled(h, w, kLabelNonPlastic);

        const std::size_t plane = cube.pixel_count();
        std::normal_distribution<double> noise(0.0, config.noise_sigma);
        for (std::size_t p = 0; p < plane; ++p) {
            const MaterialSpec* mat = pixel_material[p];
            const std::vector<float>& s = spectra.at(mat);
            const float contrast = pixel_contrast[p];
            for (int b = 0; b < config.bands; ++b) {
                double v = bg_spectrum[b] + contrast * (s[b] - bg_spectrum[b]);
                if (config.noise_sigma > 0.0f) v += noise(rng);
                cube.data[static_cast<std::size_t>(b) * plane + p] =
                    static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
            if (mat->is_plastic) mask.labels[p] = kLabelPlastic;
        }

        const std::string stem = scene_stem(scene.scenario_id);
        const std::filesystem::path cube_path = out_dir / (stem + ".rcube");
        const std::filesystem::path rgb_path = out_dir / (stem + "_rgb.rcube");
        const std::filesystem::path mask_path = out_dir / (stem + "_mask.pgm");
        const std::filesystem::path manifest_path = out_dir / (stem + ".json");

        save_cube(cube, cube_path);
        save_cube(cube_from_rgb(derive_rgb(cube)), rgb_path);
        save_mask(mask, mask_path);

        SceneManifest manifest;
        manifest.scenario_id = scene.scenario_id;
        manifest.composition = scene.items;
        if (scene.turbid) manifest.composition.push_back("turbid water");
        manifest.background = scene.background;
        manifest.role = scene.role;
        manifest.cube = stem + ".rcube";
        manifest.rgb = stem + "_rgb.rcube";
        manifest.mask = stem + "_mask.pgm";
        save_manifest(manifest, manifest_path);
        manifests.push_back(manifest_path);
    }
    return manifests;
}

}  // namespace plastiscan
