#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "plastiscan/classify.hpp"
#include "plastiscan/cube_io.hpp"
#include "plastiscan/metrics.hpp"

namespace plastiscan {

/// Raised for invalid configuration (bad config files, role violations,
/// modality/band mismatches); the CLI maps it to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Modality { HSI, RGB };

std::string modality_name(Modality modality);
Modality modality_from_name(const std::string& name);

/// Four-color map palette keyed by the (prediction, truth) outcome.
/// Ignored pixels render black.
struct RenderPalette {
    std::array<std::uint8_t, 3> tp{0xC9, 0xA0, 0xDC};  // light purple
    std::array<std::uint8_t, 3> tn{0x4B, 0x00, 0x82};  // dark purple
    std::array<std::uint8_t, 3> fp{0xFF, 0xF3, 0xA0};  // light yellow
    std::array<std::uint8_t, 3> fn{0xD4, 0xB4, 0x00};  // dark yellow

    void validate() const;  // the four colors must be distinct
};

/// Half-then-half split protocol: shuffle, first half becomes the candidate
/// training pool and the second half validation, then keep only half of the
/// candidate pool as the final training set.
struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> discarded;
};
SplitIndices split_indices(std::size_t n, std::uint64_t seed);

struct SplitResult {
    Dataset train;
    Dataset validation;
};
SplitResult split_train_val(const Dataset& pixels, std::uint64_t seed);

struct ExperimentConfig {
    std::vector<std::filesystem::path> manifests;
    Modality modality = Modality::HSI;
    std::string model_kind = "mlp";  // "mlp" | "logistic" | "svm"
    TrainConfig train;
    std::uint64_t split_seed = 0;
    std::filesystem::path out_dir;
    int workers = 1;
};

/// A scenario loaded for one modality: truth labels as annotated plus the
/// validity mask accumulated from calibration.
struct LoadedScene {
    SceneManifest manifest;
    SpectralCube cube;
    LabelMask truth;
    LabelMask validity;  // 0 = usable, 255 = excluded
};
LoadedScene load_scene(const std::filesystem::path& manifest_path, Modality modality);

/// Truth with validity-excluded pixels forced to the ignore code.
LabelMask merge_ignore(const LabelMask& truth, const LabelMask& validity);

struct TrainOutcome {
    std::filesystem::path model_file;
    std::filesystem::path report_file;
    MetricsReport validation;
};
TrainOutcome run_train(const ExperimentConfig& cfg);

struct SceneEval {
    int scenario_id = 0;
    MetricsReport report;
    std::filesystem::path report_file;
    std::filesystem::path map_file;
};
struct EvalOutcome {
    std::vector<SceneEval> scenes;
    MetricsReport pooled;
    std::filesystem::path pooled_report_file;
};
EvalOutcome run_eval(const std::filesystem::path& model_file,
                     const std::vector<std::filesystem::path>& manifests, Modality modality,
                     const RenderPalette& palette, const std::filesystem::path& out_dir,
                     std::optional<double> threshold = std::nullopt, int workers = 1);

/// Binary PPM (P6) with one palette color per (pred, truth) outcome.
void render_map(const LabelMask& pred, const LabelMask& truth, const RenderPalette& palette,
                const std::filesystem::path& out_path);

struct BenchReport {
    std::vector<double> samples_ms;
    double median_ms = 0.0;
    double pixels_per_second = 0.0;
    int workers = 1;
    int height = 0;
    int width = 0;
    int bands = 0;
    std::string model_kind;
    int repetitions = 0;
};

/// Median wall-clock time of full-cube inference; the timed region covers
/// prediction only, never file I/O.
BenchReport bench(const Model& model, const SpectralCube& cube, int repetitions, int workers);
void save_bench_report(const BenchReport& report, const std::filesystem::path& path);

}  // namespace plastiscan
