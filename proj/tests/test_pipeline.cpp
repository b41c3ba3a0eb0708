#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "doctest.h"
#include "plastiscan/calibrate.hpp"
#include "plastiscan/pipeline.hpp"
#include "plastiscan/synth.hpp"

using namespace plastiscan;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("plastiscan_pipe_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), {});
}

Dataset numbered_dataset(std::size_t n) {
    Dataset d;
    d.bands = 1;
    d.count = n;
    d.features.resize(n);
    d.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        d.features[i] = static_cast<float>(i) / static_cast<float>(n);
        d.labels[i] = static_cast<std::uint8_t>(i & 1);
    }
    return d;
}

// two lab scenes over water with a one-dip film; ids 1 and 2 are train roles
SynthConfig tiny_benchmark(float sigma) {
    SynthConfig cfg;
    cfg.height = 32;
    cfg.width = 40;
    cfg.noise_sigma = sigma;
    cfg.materials = {
        {"water", false, {0.16f, 0.36f, 0.22f}, {}},
        {"film", true, {0.16f, 0.36f, 0.22f}, {{1410.0f, 40.0f, 0.22f}}},
    };
    cfg.scenes = {
        {1, Role::Train, "water", {"film"}, 5, false},
        {2, Role::Train, "water", {"film"}, 5, false},
        {7, Role::Test, "water", {"film"}, 5, false},
        {8, Role::Test, "water", {"film"}, 5, true},
    };
    return cfg;
}

// deterministic single-band scene: plastic pixels carry 0.9 in band 0,
// background 0.1, so a fixed logistic stump classifies it perfectly
struct HandScene {
    SpectralCube cube;
    LabelMask truth;
};
HandScene hand_scene(int h, int w, int bands) {
    HandScene scene;
    scene.cube.height = h;
    scene.cube.width = w;
    scene.cube.bands = bands;
    scene.cube.wavelengths.centers_nm.resize(bands);
    for (int b = 0; b < bands; ++b)
        scene.cube.wavelengths.centers_nm[b] = 500.0f + 25.0f * static_cast<float>(b);
    scene.cube.state = CalibrationState::Reflectance;
    scene.cube.data.assign(scene.cube.value_count(), 0.1f);
    scene.truth = LabelMask::filled(h, w, kLabelNonPlastic);
    for (int r = h / 4; r < h / 2; ++r)
        for (int c = w / 4; c < w / 2; ++c) {
            scene.truth.at(r, c) = kLabelPlastic;
            scene.cube.at(r, c, 0) = 0.9f;
        }
    return scene;
}

Model perfect_stump(int bands) {
    LinearModel model = LinearModel::zeros(LinearKind::Logistic, bands);
    model.weights[0] = 40.0;
    model.bias = -20.0;  // sigmoid(40 x - 20) > 0.5 iff x > 0.5
    return model;
}

void write_hand_scene_files(const HandScene& scene, const fs::path& dir, int scenario_id) {
    const std::string stem = scenario_id < 10 ? "scene_0" + std::to_string(scenario_id)
                                              : "scene_" + std::to_string(scenario_id);
    save_cube(scene.cube, dir / (stem + ".rcube"));
    save_cube(cube_from_rgb(derive_rgb(scene.cube)), dir / (stem + "_rgb.rcube"));
    save_mask(scene.truth, dir / (stem + "_mask.pgm"));
    SceneManifest manifest;
    manifest.scenario_id = scenario_id;
    manifest.composition = {"film"};
    manifest.background = "water";
    manifest.role = scenario_id <= 6 ? Role::Train : Role::Test;
    manifest.cube = stem + ".rcube";
    manifest.rgb = stem + "_rgb.rcube";
    manifest.mask = stem + "_mask.pgm";
    save_manifest(manifest, dir / (stem + ".json"));
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("split sizes follow the half-then-half protocol") {
    SUBCASE("N=8 gives 4 validation and 2 training pixels") {
        const SplitResult split = split_train_val(numbered_dataset(8), 1);
        CHECK(split.validation.count == 4);
        CHECK(split.train.count == 2);
    }
    SUBCASE("same seed, same partition") {
        const SplitIndices a = split_indices(1000, 9);
        const SplitIndices b = split_indices(1000, 9);
        CHECK(a.train == b.train);
        CHECK(a.validation == b.validation);
        CHECK(a.discarded == b.discarded);
        const SplitIndices c = split_indices(1000, 10);
        CHECK(a.train != c.train);
    }
    SUBCASE("partition is exact and disjoint for random sizes") {
        std::mt19937 rng(77);
        for (int trial = 0; trial < 25; ++trial) {
            const std::size_t n = 4 + rng() % 997;
            const SplitIndices s = split_indices(n, trial);
            std::set<std::size_t> seen;
            for (const auto* part : {&s.train, &s.validation, &s.discarded})
                for (std::size_t idx : *part) {
                    CHECK(idx < n);
                    CHECK(seen.insert(idx).second);  // no index twice
                }
            CHECK(seen.size() == n);
            CHECK(s.validation.size() == n / 2);
            const std::size_t candidate = (n + 1) / 2;
            CHECK(s.train.size() == candidate / 2);
        }
    }
    SUBCASE("too few pixels") {
        CHECK_THROWS_AS(split_indices(3, 0), std::invalid_argument);
    }
}

TEST_CASE("run_train writes a model and a complete validation report") {
    const fs::path scenes = fresh_dir("train_scenes");
    const auto manifests = synth_gen(tiny_benchmark(0.02f), 21, scenes);

    ExperimentConfig cfg;
    cfg.manifests = {manifests[0], manifests[1]};
    cfg.modality = Modality::HSI;
    cfg.model_kind = "mlp";
    cfg.train.epochs = 8;
    cfg.train.seed = 5;
    cfg.split_seed = 6;
    cfg.out_dir = fresh_dir("train_out");

    const TrainOutcome outcome = run_train(cfg);
    CHECK(fs::exists(outcome.model_file));
    CHECK(fs::exists(outcome.report_file));
    const std::string report = slurp(outcome.report_file);
    for (const char* key : {"accuracy", "precision", "recall", "f1", "auc"})
        CHECK(report.find(key) != std::string::npos);

    SUBCASE("test-role scenes are rejected as training input") {
        ExperimentConfig bad = cfg;
        bad.manifests = {manifests[2]};  // scenario 7
        CHECK_THROWS_AS(run_train(bad), ConfigError);
    }
    SUBCASE("same config and seed give byte-identical model files") {
        ExperimentConfig again = cfg;
        again.out_dir = fresh_dir("train_out2");
        const TrainOutcome second = run_train(again);
        CHECK(slurp(outcome.model_file) == slurp(second.model_file));
        CHECK(slurp(outcome.report_file) == slurp(second.report_file));
    }
    SUBCASE("empty manifest list is a configuration error") {
        ExperimentConfig bad = cfg;
        bad.manifests.clear();
        CHECK_THROWS_AS(run_train(bad), ConfigError);
    }
}

TEST_CASE("run_eval on a perfect scene yields accuracy 1 and a purple-only map") {
    const fs::path dir = fresh_dir("eval_perfect");
    const HandScene scene = hand_scene(24, 30, 4);
    write_hand_scene_files(scene, dir, 7);

    TrainConfig tc;
    const fs::path model_file = dir / "stump.json";
    save_model(perfect_stump(4), tc, model_file);

    RenderPalette palette;
    const EvalOutcome outcome =
        run_eval(model_file, {dir / "scene_07.json"}, Modality::HSI, palette, dir);
    CHECK(outcome.pooled.accuracy == 1.0);
    CHECK(outcome.pooled.auc == 1.0);

    const std::string map = slurp(outcome.scenes[0].map_file);
    const std::string pixels = map.substr(map.find("255\n") + 4);
    std::set<std::string> colors;
    for (std::size_t i = 0; i + 2 < pixels.size(); i += 3) colors.insert(pixels.substr(i, 3));
    const std::string tp{'\xC9', '\xA0', '\xDC'};
    const std::string tn{'\x4B', '\x00', '\x82'};
    CHECK(colors == std::set<std::string>{tp, tn});
}

TEST_CASE("an all-zero model has recall 0 and no TP color in the map") {
    const fs::path dir = fresh_dir("eval_zero");
    const HandScene scene = hand_scene(24, 30, 4);
    write_hand_scene_files(scene, dir, 7);
    TrainConfig tc;
    const fs::path model_file = dir / "zero.json";
    save_model(LinearModel::zeros(LinearKind::Logistic, 4), tc, model_file);

    const EvalOutcome outcome =
        run_eval(model_file, {dir / "scene_07.json"}, Modality::HSI, RenderPalette{}, dir);
    // reports default to weighted averaging, so read the plastic-class recall
    // off the counts
    CHECK(outcome.pooled.counts.tp == 0);
    const MetricsReport binary = classification_metrics(outcome.pooled.counts, Averaging::Binary);
    CHECK(binary.recall == 0.0);

    const std::string map = slurp(outcome.scenes[0].map_file);
    const std::string tp{'\xC9', '\xA0', '\xDC'};
    CHECK(map.find(tp) == std::string::npos);
}

TEST_CASE("pooled confusion is the element-wise sum of the scenes") {
    const fs::path dir = fresh_dir("eval_pool");
    const auto manifests = synth_gen(tiny_benchmark(0.02f), 31, dir);
    TrainConfig tc;
    const fs::path model_file = dir / "stump.json";
    save_model(perfect_stump(33), tc, model_file);

    const EvalOutcome outcome = run_eval(model_file, {manifests[2], manifests[3]}, Modality::HSI,
                                         RenderPalette{}, fresh_dir("eval_pool_out"));
    REQUIRE(outcome.scenes.size() == 2);
    ConfusionCounts sum;
    sum += outcome.scenes[0].report.counts;
    sum += outcome.scenes[1].report.counts;
    CHECK(sum == outcome.pooled.counts);

    SUBCASE("band mismatch between model and scene is a configuration error") {
        const fs::path narrow_model = dir / "narrow.json";
        save_model(perfect_stump(5), tc, narrow_model);
        CHECK_THROWS_AS(run_eval(narrow_model, {manifests[2]}, Modality::HSI, RenderPalette{},
                                 fresh_dir("eval_pool_bad")),
                        ConfigError);
    }
}

TEST_CASE("render colors are a pure function of (pred, truth)") {
    LabelMask pred = LabelMask::filled(1, 5, 0);
    LabelMask truth = LabelMask::filled(1, 5, 0);
    pred.labels = {1, 0, 1, 0, 255};
    truth.labels = {1, 1, 0, 0, 1};
    const fs::path out = fs::temp_directory_path() / "plastiscan_map.ppm";
    render_map(pred, truth, RenderPalette{}, out);
    const std::string map = slurp(out);
    const std::string pixels = map.substr(map.find("255\n") + 4);
    REQUIRE(pixels.size() == 15);
    CHECK(pixels.substr(0, 3) == std::string{'\xC9', '\xA0', '\xDC'});   // TP
    CHECK(pixels.substr(3, 3) == std::string{'\xD4', '\xB4', '\x00'});   // FN
    CHECK(pixels.substr(6, 3) == std::string{'\xFF', '\xF3', '\xA0'});   // FP
    CHECK(pixels.substr(9, 3) == std::string{'\x4B', '\x00', '\x82'});   // TN
    CHECK(pixels.substr(12, 3) == std::string{'\x00', '\x00', '\x00'});  // ignore
}

TEST_CASE("palettes must hold four distinct colors") {
    RenderPalette palette;
    palette.fn = palette.fp;
    CHECK_THROWS_AS(palette.validate(), ConfigError);
}

TEST_CASE("scenes with raw cubes calibrate when dark and reference are given") {
    const fs::path dir = fresh_dir("raw_scene");
    HandScene scene = hand_scene(16, 16, 3);

    // fold the reflectance into raw counts: raw = dark + r * (ref - dark)
    SpectralCube raw = scene.cube;
    raw.state = CalibrationState::RawCounts;
    for (float& v : raw.data) v = 100.0f + v * 1000.0f;
    save_cube(raw, dir / "scene_01.rcube");
    save_cube(cube_from_rgb(derive_rgb(scene.cube)), dir / "scene_01_rgb.rcube");
    save_mask(scene.truth, dir / "scene_01_mask.pgm");

    SpectralCube dark = raw;
    dark.data.assign(dark.data.size(), 100.0f);
    save_cube(dark, dir / "dark.rcube");
    ReferenceSpectrum ref;
    ref.reference = {1100.0f, 1100.0f, 1100.0f};
    save_reference(ref, dir / "reference.json");

    SceneManifest manifest;
    manifest.scenario_id = 1;
    manifest.composition = {"film"};
    manifest.background = "water";
    manifest.role = Role::Train;
    manifest.cube = "scene_01.rcube";
    manifest.rgb = "scene_01_rgb.rcube";
    manifest.mask = "scene_01_mask.pgm";
    manifest.dark = "dark.rcube";
    manifest.reference = "reference.json";
    save_manifest(manifest, dir / "scene_01.json");

    const LoadedScene loaded = load_scene(dir / "scene_01.json", Modality::HSI);
    CHECK(loaded.cube.state == CalibrationState::Reflectance);
    CHECK(loaded.cube.at(4, 4, 0) == doctest::Approx(scene.cube.at(4, 4, 0)).epsilon(1e-4));

    SUBCASE("without calibration inputs the raw scene is a configuration error") {
        manifest.dark.clear();
        manifest.reference.clear();
        save_manifest(manifest, dir / "scene_01.json");
        CHECK_THROWS_AS(load_scene(dir / "scene_01.json", Modality::HSI), ConfigError);
    }
}

TEST_CASE("bench reports the requested samples and resists extra workers") {
    SynthConfig cfg = tiny_benchmark(0.02f);
    cfg.height = 150;
    cfg.width = 200;
    const fs::path dir = fresh_dir("bench");
    const auto manifests = synth_gen(cfg, 51, dir);
    const SpectralCube cube = load_cube(dir / load_manifest(manifests[0]).cube);

    std::mt19937_64 rng(1);
    const Model model = MLPModel::seeded(33, rng);

    const BenchReport one = bench(model, cube, 5, 1);
    CHECK(one.samples_ms.size() == 5);
    CHECK(one.repetitions == 5);
    CHECK(one.median_ms > 0.0);
    CHECK(one.pixels_per_second > 0.0);
    CHECK(one.workers == 1);

    const BenchReport two = bench(model, cube, 5, 2);
    // scaling sanity with slack for scheduler noise
    CHECK(two.median_ms <= one.median_ms * 1.3);

    SUBCASE("fewer than 5 repetitions is rejected") {
        CHECK_THROWS_AS(bench(model, cube, 3, 1), ConfigError);
    }
    SUBCASE("the report serializes with all fields") {
        const fs::path path = dir / "bench_report.json";
        save_bench_report(one, path);
        const std::string text = slurp(path);
        for (const char* key : {"samples_ms", "median_ms", "pixels_per_second", "workers",
                                "model_kind", "repetitions"})
            CHECK(text.find(key) != std::string::npos);
    }
}

TEST_CASE("modality names round-trip and bad ones fail") {
    CHECK(modality_from_name("hsi") == Modality::HSI);
    CHECK(modality_from_name("rgb") == Modality::RGB);
    CHECK(modality_name(Modality::RGB) == "rgb");
    CHECK_THROWS_AS(modality_from_name("lidar"), ConfigError);
}

}  // TEST_SUITE
