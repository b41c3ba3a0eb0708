#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "plastiscan/calibrate.hpp"
#include "plastiscan/classify.hpp"
#include "plastiscan/cube_io.hpp"
#include "plastiscan/pipeline.hpp"
#include "plastiscan/registration.hpp"
#include "plastiscan/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace plastiscan;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    int workers = 1;
};

json load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("bad config JSON in " + path.string() + ": " + e.what());
    }
}

fs::path resolve(const fs::path& config_file, const std::string& entry) {
    fs::path p(entry);
    if (p.is_absolute()) return p;
    return config_file.parent_path() / p;
}

std::array<std::uint8_t, 3> parse_color(const std::string& hex) {
    if (hex.size() != 7 || hex[0] != '#') throw ConfigError("palette color must look like #RRGGBB");
    auto byte_at = [&](std::size_t pos) {
        return static_cast<std::uint8_t>(std::stoi(hex.substr(pos, 2), nullptr, 16));
    };
    try {
        return {byte_at(1), byte_at(3), byte_at(5)};
    } catch (const std::exception&) {
        throw ConfigError("palette color must look like #RRGGBB");
    }
}

RenderPalette parse_palette(const json& doc) {
    RenderPalette palette;
    if (doc.contains("palette")) {
        const json& p = doc["palette"];
        if (p.contains("tp")) palette.tp = parse_color(p["tp"].get<std::string>());
        if (p.contains("tn")) palette.tn = parse_color(p["tn"].get<std::string>());
        if (p.contains("fp")) palette.fp = parse_color(p["fp"].get<std::string>());
        if (p.contains("fn")) palette.fn = parse_color(p["fn"].get<std::string>());
    }
    palette.validate();
    return palette;
}

TrainConfig parse_train_config(const json& doc) {
    TrainConfig cfg;
    if (!doc.contains("train")) return cfg;
    const json& t = doc["train"];
    if (t.contains("learning_rate")) cfg.learning_rate = t["learning_rate"].get<double>();
    if (t.contains("beta1")) cfg.beta1 = t["beta1"].get<double>();
    if (t.contains("beta2")) cfg.beta2 = t["beta2"].get<double>();
    if (t.contains("eps")) cfg.eps = t["eps"].get<double>();
    if (t.contains("epochs")) cfg.epochs = t["epochs"].get<int>();
    if (t.contains("batch_size")) cfg.batch_size = t["batch_size"].get<std::size_t>();
    if (t.contains("l2") && !t["l2"].is_null()) cfg.l2 = t["l2"].get<double>();
    if (t.contains("seed")) cfg.seed = t["seed"].get<std::uint64_t>();
    return cfg;
}

SynthConfig parse_synth_config(const json& doc) {
    SynthConfig cfg;
    if (doc.contains("preset")) {
        const std::string preset = doc["preset"].get<std::string>();
        if (preset != "riverine") throw ConfigError("unknown preset: " + preset);
        cfg = riverine_preset();
    }
    if (doc.contains("height")) cfg.height = doc["height"].get<int>();
    if (doc.contains("width")) cfg.width = doc["width"].get<int>();
    if (doc.contains("bands")) cfg.bands = doc["bands"].get<int>();
    if (doc.contains("lambda_min_nm")) cfg.lambda_min_nm = doc["lambda_min_nm"].get<float>();
    if (doc.contains("lambda_max_nm")) cfg.lambda_max_nm = doc["lambda_max_nm"].get<float>();
    if (doc.contains("noise_sigma")) cfg.noise_sigma = doc["noise_sigma"].get<float>();
    if (doc.contains("attenuation")) cfg.attenuation = doc["attenuation"].get<float>();

    if (doc.contains("materials")) {
        cfg.materials.clear();
        for (const json& m : doc["materials"]) {
            MaterialSpec mat;
            mat.name = m.at("name").get<std::string>();
            mat.is_plastic = m.at("plastic").get<bool>();
            const auto base = m.at("base").get<std::vector<float>>();
            if (base.size() != 3) throw ConfigError("material base needs 3 anchor values");
            mat.base_anchors = {base[0], base[1], base[2]};
            if (m.contains("dips"))
                for (const json& d : m["dips"])
                    mat.dips.push_back({d.at("center_nm").get<float>(),
                                        d.at("sigma_nm").get<float>(),
                                        d.at("depth").get<float>()});
            cfg.materials.push_back(std::move(mat));
        }
    }
    if (doc.contains("scenes")) {
        cfg.scenes.clear();
        for (const json& s : doc["scenes"]) {
            SceneSpec scene;
            scene.scenario_id = s.at("scenario_id").get<int>();
            scene.role = role_from_name(s.at("role").get<std::string>());
            scene.background = s.at("background").get<std::string>();
            scene.items = s.at("items").get<std::vector<std::string>>();
            if (s.contains("items_per_material"))
                scene.items_per_material = s["items_per_material"].get<int>();
            if (s.contains("turbid")) scene.turbid = s["turbid"].get<bool>();
            cfg.scenes.push_back(std::move(scene));
        }
    }
    return cfg;
}

std::vector<fs::path> manifest_paths(const json& doc, const fs::path& config_file) {
    std::vector<fs::path> out;
    for (const json& entry : doc.at("manifests"))
        out.push_back(resolve(config_file, entry.get<std::string>()));
    if (out.empty()) throw ConfigError("manifest list is empty");
    return out;
}

int cmd_synth_gen(const CommonArgs& args) {
    const json doc = load_config(args.config_path);
    const SynthConfig cfg = parse_synth_config(doc);
    const std::uint64_t seed = args.seed.value_or(doc.value("seed", std::uint64_t{1}));
    const auto manifests = synth_gen(cfg, seed, args.out_dir);
    for (const fs::path& p : manifests) std::cout << p.string() << '\n';
    return 0;
}

int cmd_train(const CommonArgs& args) {
    const fs::path config_file(args.config_path);
    const json doc = load_config(config_file);

    ExperimentConfig cfg;
    cfg.manifests = manifest_paths(doc, config_file);
    cfg.modality = modality_from_name(doc.value("modality", std::string("hsi")));
    cfg.model_kind = doc.value("model", std::string("mlp"));
    cfg.train = parse_train_config(doc);
    cfg.split_seed = doc.value("split_seed", std::uint64_t{0});
    if (args.seed) {
        cfg.train.seed = *args.seed;
        cfg.split_seed = *args.seed;
    }
    cfg.out_dir = args.out_dir;
    cfg.workers = args.workers;

    const TrainOutcome outcome = run_train(cfg);
    std::cout << "model: " << outcome.model_file.string() << '\n'
              << "validation report: " << outcome.report_file.string() << '\n'
              << "validation accuracy: " << outcome.validation.accuracy
              << "  auc: " << outcome.validation.auc << '\n';
    return 0;
}

int cmd_eval(const CommonArgs& args) {
    const fs::path config_file(args.config_path);
    const json doc = load_config(config_file);

    const fs::path model_file = resolve(config_file, doc.at("model").get<std::string>());
    const auto manifests = manifest_paths(doc, config_file);
    const Modality modality = modality_from_name(doc.value("modality", std::string("hsi")));
    const RenderPalette palette = parse_palette(doc);
    std::optional<double> threshold;
    if (doc.contains("threshold") && !doc["threshold"].is_null())
        threshold = doc["threshold"].get<double>();

    const EvalOutcome outcome =
        run_eval(model_file, manifests, modality, palette, args.out_dir, threshold, args.workers);
    for (const SceneEval& scene : outcome.scenes)
        std::cout << "scene " << scene.scenario_id << ": accuracy " << scene.report.accuracy
                  << "  auc " << scene.report.auc << '\n';
    std::cout << "pooled: accuracy " << outcome.pooled.accuracy << "  auc " << outcome.pooled.auc
              << "  report " << outcome.pooled_report_file.string() << '\n';
    return 0;
}

int cmd_render(const CommonArgs& args) {
    const fs::path config_file(args.config_path);
    const json doc = load_config(config_file);

    const LabelMask pred = load_mask(resolve(config_file, doc.at("pred").get<std::string>()));
    const LabelMask truth = load_mask(resolve(config_file, doc.at("truth").get<std::string>()));
    const RenderPalette palette = parse_palette(doc);
    fs::create_directories(args.out_dir);
    const fs::path out = fs::path(args.out_dir) / doc.value("out", std::string("map.ppm"));
    render_map(pred, truth, palette, out);
    std::cout << out.string() << '\n';
    return 0;
}

int cmd_bench(const CommonArgs& args) {
    const fs::path config_file(args.config_path);
    const json doc = load_config(config_file);

    const SavedModel saved = load_model(resolve(config_file, doc.at("model").get<std::string>()));
    const SpectralCube cube = load_cube(resolve(config_file, doc.at("cube").get<std::string>()));
    const int repetitions = doc.value("repetitions", 5);

    const BenchReport report = bench(saved.model, cube, repetitions, args.workers);
    fs::create_directories(args.out_dir);
    const fs::path out = fs::path(args.out_dir) / "bench_report.json";
    save_bench_report(report, out);
    std::cout << report.model_kind << " on " << report.height << "x" << report.width << "x"
              << report.bands << ": median " << report.median_ms << " ms over "
              << report.repetitions << " runs, " << report.pixels_per_second << " px/s with "
              << report.workers << " workers\n"
              << out.string() << '\n';
    return 0;
}

int cmd_calibrate(const CommonArgs& args) {
    const fs::path config_file(args.config_path);
    const json doc = load_config(config_file);

    const SpectralCube cube = load_cube(resolve(config_file, doc.at("cube").get<std::string>()));

    DarkFrame dark = [&]() {
        if (doc.contains("dark_frames")) {
            std::vector<SpectralCube> frames;
            for (const json& entry : doc["dark_frames"])
                frames.push_back(load_cube(resolve(config_file, entry.get<std::string>())));
            return estimate_dark(frames);
        }
        if (doc.contains("dark")) {
            const SpectralCube d = load_cube(resolve(config_file, doc["dark"].get<std::string>()));
            return DarkFrame::full_frame(d.height, d.width, d.bands, d.data);
        }
        if (doc.contains("dark_per_band"))
            return DarkFrame::per_band(doc["dark_per_band"].get<std::vector<float>>());
        throw ConfigError("calibrate config needs dark, dark_frames or dark_per_band");
    }();

    ReferenceSpectrum reference;
    if (doc.contains("reference")) {
        reference = load_reference(resolve(config_file, doc["reference"].get<std::string>()));
    } else if (doc.contains("panel_region")) {
        const auto region = doc["panel_region"].get<std::vector<int>>();
        if (region.size() != 4) throw ConfigError("panel_region must be [row, col, height, width]");
        const float reflectivity = doc.value("panel_reflectivity", 0.95f);
        reference = extract_reference(cube, {region[0], region[1], region[2], region[3]}, dark,
                                      reflectivity);
    } else {
        throw ConfigError("calibrate config needs reference or panel_region");
    }

    const CalibratedCube calibrated = reflectance(cube, dark, reference);
    fs::create_directories(args.out_dir);
    const fs::path out_cube =
        fs::path(args.out_dir) / doc.value("out_cube", std::string("reflectance.rcube"));
    const fs::path out_validity =
        fs::path(args.out_dir) / doc.value("out_validity", std::string("validity.pgm"));
    save_cube(calibrated.cube, out_cube);
    save_mask(calibrated.validity, out_validity);
    if (doc.contains("out_reference"))
        save_reference(reference,
                       fs::path(args.out_dir) / doc["out_reference"].get<std::string>());
    std::cout << out_cube.string() << '\n' << out_validity.string() << '\n';
    return 0;
}

int cmd_register(const CommonArgs& args) {
    const fs::path config_file(args.config_path);
    const json doc = load_config(config_file);

    const SpectralCube cube = load_cube(resolve(config_file, doc.at("cube").get<std::string>()));

    Homography h;
    std::optional<double> rms;
    if (doc.contains("correspondences")) {
        const auto points =
            load_correspondences(resolve(config_file, doc["correspondences"].get<std::string>()));
        const HomographyEstimate estimate = estimate_homography(points);
        h = estimate.h;
        rms = estimate.reprojection_rms;
    } else if (doc.contains("homography")) {
        h = load_homography(resolve(config_file, doc["homography"].get<std::string>()));
    } else {
        throw ConfigError("register config needs correspondences or homography");
    }

    int out_height = 0, out_width = 0;
    if (doc.contains("rgb")) {
        const SpectralCube rgb = load_cube(resolve(config_file, doc["rgb"].get<std::string>()));
        out_height = rgb.height;
        out_width = rgb.width;
    } else if (doc.contains("out_height") && doc.contains("out_width")) {
        out_height = doc["out_height"].get<int>();
        out_width = doc["out_width"].get<int>();
    } else {
        throw ConfigError("register config needs rgb or out_height/out_width");
    }

    const WarpedCube warped = warp_to(cube, h, out_height, out_width, args.workers);
    fs::create_directories(args.out_dir);
    const fs::path out_cube =
        fs::path(args.out_dir) / doc.value("out_cube", std::string("registered.rcube"));
    const fs::path out_mask =
        fs::path(args.out_dir) / doc.value("out_mask", std::string("registered_validity.pgm"));
    save_cube(warped.cube, out_cube);
    save_mask(warped.validity, out_mask);
    if (doc.contains("out_homography"))
        save_homography(h, fs::path(args.out_dir) / doc["out_homography"].get<std::string>());
    if (rms) std::cout << "reprojection rms: " << *rms << " px\n";
    std::cout << out_cube.string() << '\n' << out_mask.string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hyperspectral riverine plastic detection pipeline"};
    app.require_subcommand(1);

    CommonArgs args;
    const std::vector<std::pair<std::string, int (*)(const CommonArgs&)>> commands = {
        {"synth-gen", cmd_synth_gen}, {"train", cmd_train},         {"eval", cmd_eval},
        {"render", cmd_render},       {"bench", cmd_bench},         {"calibrate", cmd_calibrate},
        {"register", cmd_register},
    };

    std::map<std::string, int (*)(const CommonArgs&)> dispatch;
    for (const auto& [name, fn] : commands) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("config", args.config_path, "JSON config path")->required();
        sub->add_option("--out-dir", args.out_dir, "output directory");
        sub->add_option("--seed", args.seed, "seed override");
        sub->add_option("--workers", args.workers, "worker threads (0 = all cores)");
        dispatch[name] = fn;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        return dispatch.at(app.get_subcommands().front()->get_name())(args);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
