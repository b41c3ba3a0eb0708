#include "plastiscan/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "json.hpp"
#include "plastiscan/calibrate.hpp"
#include "plastiscan/parallel.hpp"

namespace plastiscan {

namespace {

std::string two_digit(int v) {
    std::string s = std::to_string(v);
    return s.size() < 2 ? "0" + s : s;
}

void append_samples(Dataset& acc, const Dataset& more) {
    if (acc.count == 0) {
        acc = more;
        return;
    }
    if (acc.bands != more.bands)
        throw ConfigError("scenes disagree on band count: " + std::to_string(acc.bands) + " vs " +
                          std::to_string(more.bands));
    acc.features.insert(acc.features.end(), more.features.begin(), more.features.end());
    acc.labels.insert(acc.labels.end(), more.labels.begin(), more.labels.end());
    acc.count += more.count;
}

Dataset gather_rows(const Dataset& data, const std::vector<std::size_t>& rows) {
    Dataset out;
    out.count = rows.size();
    out.bands = data.bands;
    out.features.resize(out.count * out.bands);
    out.labels.resize(out.count);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::size_t r = rows[i];
        std::copy_n(data.features.data() + r * data.bands, data.bands,
                    out.features.data() + i * out.bands);
        out.labels[i] = data.labels[r];
    }
    return out;
}

Model train_by_kind(const std::string& kind, const Dataset& train, const TrainConfig& cfg,
                    const Dataset* validation) {
    if (kind == "mlp") return train_mlp(train, cfg, validation);
    if (kind == "logistic") return train_logistic(train, cfg, validation);
    if (kind == "svm") return train_svm(train, cfg, validation);
    throw ConfigError("unknown model kind: " + kind);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw std::runtime_error("write failure: " + path.string());
}

MetricsReport scored_report(std::span<const double> scores, std::span<const std::uint8_t> labels,
                            const ConfusionCounts& counts) {
    MetricsReport report = classification_metrics(counts, Averaging::Weighted);
    bool has0 = false, has1 = false;
    for (std::uint8_t y : labels) (y == 1 ? has1 : has0) = true;
    if (has0 && has1) set_auc(report, roc_auc(scores, labels));
    return report;
}

}  // namespace

std::string modality_name(Modality modality) { return modality == Modality::HSI ? "hsi" : "rgb"; }

Modality modality_from_name(const std::string& name) {
    if (name == "hsi") return Modality::HSI;
    if (name == "rgb") return Modality::RGB;
    throw ConfigError("unknown modality: " + name);
}

void RenderPalette::validate() const {
    const std::array<std::array<std::uint8_t, 3>, 4> colors{tp, tn, fp, fn};
    for (std::size_t i = 0; i < colors.size(); ++i)
        for (std::size_t j = i + 1; j < colors.size(); ++j)
            if (colors[i] == colors[j])
                throw ConfigError("render palette colors must be pairwise distinct");
}

SplitIndices split_indices(std::size_t n, std::uint64_t seed) {
    if (n < 4) throw std::invalid_argument("split needs at least 4 pixels");
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);

    const std::size_t candidate = (n + 1) / 2;  // first half (larger on odd n)
    const std::size_t kept = candidate / 2;     // half of the candidate pool

    SplitIndices out;
    out.train.assign(perm.begin(), perm.begin() + kept);
    out.discarded.assign(perm.begin() + kept, perm.begin() + candidate);
    out.validation.assign(perm.begin() + candidate, perm.end());
    return out;
}

SplitResult split_train_val(const Dataset& pixels, std::uint64_t seed) {
    const SplitIndices idx = split_indices(pixels.count, seed);
    return {gather_rows(pixels, idx.train), gather_rows(pixels, idx.validation)};
}

LabelMask merge_ignore(const LabelMask& truth, const LabelMask& validity) {
    if (truth.height != validity.height || truth.width != validity.width)
        throw std::invalid_argument("merge_ignore: dimensions differ");
    LabelMask out = truth;
    for (std::size_t i = 0; i < out.labels.size(); ++i)
        if (validity.labels[i] == kLabelIgnore) out.labels[i] = kLabelIgnore;
    return out;
}

LoadedScene load_scene(const std::filesystem::path& manifest_path, Modality modality) {
    LoadedScene scene;
    scene.manifest = load_manifest(manifest_path);
    const std::string raster_entry =
        modality == Modality::HSI ? scene.manifest.cube : scene.manifest.rgb;
    scene.cube = load_cube(resolve_manifest_path(manifest_path, raster_entry));
    scene.validity = LabelMask::filled(scene.cube.height, scene.cube.width, kLabelNonPlastic);

    if (scene.cube.state == CalibrationState::RawCounts) {
        if (scene.manifest.dark.empty() || scene.manifest.reference.empty())
            throw ConfigError("raw-counts scene " + manifest_path.string() +
                              " has no dark/reference calibration inputs");
        const SpectralCube dark_cube =
            load_cube(resolve_manifest_path(manifest_path, scene.manifest.dark));
        const DarkFrame dark = DarkFrame::full_frame(dark_cube.height, dark_cube.width,
                                                     dark_cube.bands, dark_cube.data);
        const ReferenceSpectrum reference =
            load_reference(resolve_manifest_path(manifest_path, scene.manifest.reference));
        CalibratedCube calibrated = reflectance(scene.cube, dark, reference);
        scene.cube = std::move(calibrated.cube);
        scene.validity = std::move(calibrated.validity);
    }

    scene.truth = load_mask(resolve_manifest_path(manifest_path, scene.manifest.mask));
    if (scene.truth.height != scene.cube.height || scene.truth.width != scene.cube.width)
        throw ConfigError("mask dimensions do not match raster in " + manifest_path.string());
    return scene;
}

TrainOutcome run_train(const ExperimentConfig& cfg) {
    if (cfg.manifests.empty()) throw ConfigError("no training manifests given");
    if (cfg.out_dir.empty()) throw ConfigError("output directory not set");
    std::filesystem::create_directories(cfg.out_dir);

    Dataset all;
    for (const std::filesystem::path& path : cfg.manifests) {
        LoadedScene scene = load_scene(path, cfg.modality);
        if (scene.manifest.role != Role::Train)
            throw ConfigError("scene " + path.string() + " has role 'test'; training takes only "
                              "train scenarios");
        append_samples(all, flatten_pixels(scene.cube, merge_ignore(scene.truth, scene.validity)));
    }

    const SplitResult split = split_train_val(all, cfg.split_seed);
    const Model model = train_by_kind(cfg.model_kind, split.train, cfg.train, &split.validation);

    const std::vector<double> scores =
        predict_scores(model, split.validation.features, split.validation.bands, cfg.workers);
    const double threshold = default_threshold(model);
    const ConfusionCounts counts =
        confusion_from_scores(scores, split.validation.labels, threshold);
    MetricsReport report = scored_report(scores, split.validation.labels, counts);

    const std::string tag = cfg.model_kind + "_" + modality_name(cfg.modality);
    TrainOutcome outcome;
    outcome.validation = report;
    outcome.model_file = cfg.out_dir / ("model_" + tag + ".json");
    outcome.report_file = cfg.out_dir / ("report_validation_" + tag + ".json");
    save_model(model, cfg.train, outcome.model_file);
    write_text(outcome.report_file,
               report_to_json(report, cfg.model_kind, modality_name(cfg.modality), "validation"));
    return outcome;
}

EvalOutcome run_eval(const std::filesystem::path& model_file,
                     const std::vector<std::filesystem::path>& manifests, Modality modality,
                     const RenderPalette& palette, const std::filesystem::path& out_dir,
                     std::optional<double> threshold, int workers) {
    if (manifests.empty()) throw ConfigError("no evaluation manifests given");
    if (out_dir.empty()) throw ConfigError("output directory not set");
    palette.validate();
    std::filesystem::create_directories(out_dir);

    const SavedModel saved = load_model(model_file);
    const std::string kind = model_kind_name(saved.model);
    const double thr = threshold.value_or(default_threshold(saved.model));
    const std::string tag = kind + "_" + modality_name(modality);

    EvalOutcome outcome;
    ConfusionCounts pooled_counts;
    std::vector<double> pooled_scores;
    std::vector<std::uint8_t> pooled_labels;

    for (const std::filesystem::path& path : manifests) {
        LoadedScene scene = load_scene(path, modality);
        if (model_input_width(saved.model) != static_cast<std::size_t>(scene.cube.bands))
            throw ConfigError("model expects " + std::to_string(model_input_width(saved.model)) +
                              " bands but scene " + path.string() + " has " +
                              std::to_string(scene.cube.bands));

        const LabelMask pred = predict_mask(saved.model, scene.cube, thr, &scene.validity, workers);
        const ConfusionCounts counts = confusion(pred, scene.truth);
        pooled_counts += counts;

        const LabelMask eval_mask = merge_ignore(scene.truth, scene.validity);
        const PixelSamples samples = flatten_pixels(scene.cube, eval_mask);
        const std::vector<double> scores =
            predict_scores(saved.model, samples.features, samples.bands, workers);
        pooled_scores.insert(pooled_scores.end(), scores.begin(), scores.end());
        pooled_labels.insert(pooled_labels.end(), samples.labels.begin(), samples.labels.end());

        SceneEval scene_eval;
        scene_eval.scenario_id = scene.manifest.scenario_id;
        scene_eval.report = scored_report(scores, samples.labels, counts);

        const std::string stem = "scene" + two_digit(scene.manifest.scenario_id) + "_" + tag;
        scene_eval.report_file = out_dir / ("report_" + stem + ".json");
        scene_eval.map_file = out_dir / ("map_" + stem + ".ppm");
        write_text(scene_eval.report_file,
                   report_to_json(scene_eval.report, kind, modality_name(modality),
                                  "scene" + two_digit(scene.manifest.scenario_id)));
        render_map(pred, scene.truth, palette, scene_eval.map_file);
        outcome.scenes.push_back(std::move(scene_eval));
    }

    outcome.pooled = scored_report(pooled_scores, pooled_labels, pooled_counts);
    outcome.pooled_report_file = out_dir / ("report_pooled_" + tag + ".json");
    write_text(outcome.pooled_report_file,
               report_to_json(outcome.pooled, kind, modality_name(modality), "test_pooled"));
    return outcome;
}

void render_map(const LabelMask& pred, const LabelMask& truth, const RenderPalette& palette,
                const std::filesystem::path& out_path) {
    if (pred.height != truth.height || pred.width != truth.width)
        throw std::invalid_argument("render_map: mask dimensions differ");
    palette.validate();

    std::string payload;
    payload.reserve(pred.labels.size() * 3);
    for (std::size_t i = 0; i < pred.labels.size(); ++i) {
        const std::uint8_t p = pred.labels[i];
        const std::uint8_t t = truth.labels[i];
        std::array<std::uint8_t, 3> color{0, 0, 0};  // ignore -> black
        if (p != kLabelIgnore && t != kLabelIgnore) {
            if (t == kLabelPlastic)
                color = p == kLabelPlastic ? palette.tp : palette.fn;
            else
                color = p == kLabelPlastic ? palette.fp : palette.tn;
        }
        payload.push_back(static_cast<char>(color[0]));
        payload.push_back(static_cast<char>(color[1]));
        payload.push_back(static_cast<char>(color[2]));
    }

    std::string header =
        "P6\n" + std::to_string(pred.width) + " " + std::to_string(pred.height) + "\n255\n";
    write_text(out_path, header + payload);
}

BenchReport bench(const Model& model, const SpectralCube& cube, int repetitions, int workers) {
    if (repetitions < 5) throw ConfigError("bench needs at least 5 repetitions");
    workers = resolve_workers(workers);

    BenchReport report;
    report.workers = workers;
    report.height = cube.height;
    report.width = cube.width;
    report.bands = cube.bands;
    report.model_kind = model_kind_name(model);
    report.repetitions = repetitions;

    const double threshold = default_threshold(model);
    // warm-up pass: page in the cube and the thread pool before timing
    (void)predict_mask(model, cube, threshold, nullptr, workers);

    for (int i = 0; i < repetitions; ++i) {
        const auto start = std::chrono::steady_clock::now();
        const LabelMask mask = predict_mask(model, cube, threshold, nullptr, workers);
        const auto stop = std::chrono::steady_clock::now();
        (void)mask;
        report.samples_ms.push_back(
            std::chrono::duration<double, std::milli>(stop - start).count());
    }

    std::vector<double> sorted = report.samples_ms;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    report.median_ms = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    report.pixels_per_second =
        static_cast<double>(cube.pixel_count()) / (report.median_ms / 1000.0);
    return report;
}

void save_bench_report(const BenchReport& report, const std::filesystem::path& path) {
    nlohmann::json doc;
    doc["samples_ms"] = report.samples_ms;
    doc["median_ms"] = report.median_ms;
    doc["pixels_per_second"] = report.pixels_per_second;
    doc["workers"] = report.workers;
    doc["height"] = report.height;
    doc["width"] = report.width;
    doc["bands"] = report.bands;
    doc["model_kind"] = report.model_kind;
    doc["repetitions"] = report.repetitions;
    write_text(path, doc.dump(2) + "\n");
}

}  // namespace plastiscan
