#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "plastiscan/classify.hpp"
#include "plastiscan/metrics.hpp"

using namespace plastiscan;

namespace {

Dataset make_dataset(std::size_t bands, const std::vector<std::vector<float>>& rows,
                     const std::vector<std::uint8_t>& labels) {
    Dataset d;
    d.bands = bands;
    d.count = rows.size();
    d.labels = labels;
    for (const auto& row : rows) d.features.insert(d.features.end(), row.begin(), row.end());
    return d;
}

Dataset one_dim_pair() {
    return make_dataset(1, {{0.1f}, {0.9f}}, {0, 1});
}

// four jittered clusters on the unit square corners, classes on the diagonals
Dataset xor_dataset(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> jitter(0.0f, 0.05f);
    Dataset d;
    d.bands = 2;
    d.count = n;
    for (std::size_t i = 0; i < n; ++i) {
        const bool right = (i & 1) != 0;
        const bool top = (i & 2) != 0;
        const float x = (right ? 0.9f : 0.1f) + jitter(rng);
        const float y = (top ? 0.9f : 0.1f) + jitter(rng);
        d.features.push_back(x);
        d.features.push_back(y);
        d.labels.push_back(right != top ? 1 : 0);
    }
    return d;
}

Dataset random_dataset(std::size_t n, std::size_t bands, std::uint64_t seed, float class_gap) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> base(0.2f, 0.6f);
    Dataset d;
    d.bands = bands;
    d.count = n;
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t y = static_cast<std::uint8_t>(rng() & 1);
        for (std::size_t b = 0; b < bands; ++b)
            d.features.push_back(base(rng) + (y ? class_gap : 0.0f));
        d.labels.push_back(y);
    }
    // make sure both classes exist
    d.labels[0] = 0;
    d.labels[1] = 1;
    return d;
}

double accuracy_at(const Model& model, const Dataset& data, double threshold) {
    const std::vector<double> scores = predict_scores(model, data.features, data.bands);
    const ConfusionCounts counts = confusion_from_scores(scores, data.labels, threshold);
    return static_cast<double>(counts.tp + counts.tn) / static_cast<double>(counts.total());
}

double relative_error(double a, double b) {
    return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)});
}

// central finite differences against the analytic gradient over every
// coordinate; draws are rejected while any sample sits within `margin` of a
// non-smooth point of the loss
double max_gradcheck_error(Objective& obj, const Dataset& batch, std::vector<double> params,
                           double h = 1e-5) {
    std::vector<double> analytic(obj.param_count());
    obj.gradient(params, batch, analytic);

    double worst = 0.0;
    Dataset probe;
    probe.bands = batch.bands;
    probe.count = 1;
    probe.labels.resize(1);
    probe.features.resize(batch.bands);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + h;
        const double up = obj.loss(params, batch);
        params[i] = saved - h;
        const double down = obj.loss(params, batch);
        params[i] = saved;
        worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * h)));
    }
    return worst;
}

bool far_from_kinks(const Objective& obj, std::span<const double> params, const Dataset& batch,
                    double margin) {
    for (std::size_t i = 0; i < batch.count; ++i)
        if (obj.smoothness_margin(params, batch.features.data() + i * batch.bands,
                                  batch.labels[i]) < margin)
            return false;
    return true;
}

SpectralCube reflectance_cube_random(int h, int w, int b, std::uint64_t seed) {
    SpectralCube cube;
    cube.height = h;
    cube.width = w;
    cube.bands = b;
    cube.wavelengths.centers_nm.resize(b);
    for (int i = 0; i < b; ++i)
        cube.wavelengths.centers_nm[i] = 460.0f + 30.0f * static_cast<float>(i);
    cube.state = CalibrationState::Reflectance;
    cube.data.resize(cube.value_count());
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> v(0.0f, 1.0f);
    for (float& x : cube.data) x = v(rng);
    return cube;
}

}  // namespace

TEST_SUITE("classify") {

TEST_CASE("zero models have the advertised neutral outputs") {
    const Model logistic = LinearModel::zeros(LinearKind::Logistic, 4);
    const Model svm = LinearModel::zeros(LinearKind::Svm, 4);
    const Model mlp = MLPModel::zeros(4);

    const std::vector<float> features{0.1f, 0.9f, 0.3f, 0.7f, 0.2f, 0.2f, 0.8f, 0.4f};
    for (double s : predict_scores(logistic, features, 4)) CHECK(s == 0.5);
    for (double s : predict_scores(svm, features, 4)) CHECK(s == 0.0);
    for (double s : predict_scores(mlp, features, 4)) CHECK(s == 0.5);
}

TEST_CASE("logistic regression solves the 1-D pair") {
    TrainConfig cfg;
    cfg.epochs = 500;
    cfg.seed = 1;
    const LinearModel model = train_logistic(one_dim_pair(), cfg);
    const Model m = model;
    const std::vector<double> scores = predict_scores(m, one_dim_pair().features, 1);
    CHECK(scores[0] < 0.5);
    CHECK(scores[1] > 0.5);

    const auto obj = make_logistic_objective(1, 0.0);
    std::vector<double> params{model.weights[0], model.bias};
    CHECK(obj->loss(params, one_dim_pair()) < std::log(2.0));
}

TEST_CASE("duplicating every row leaves full-batch training bit-identical") {
    // power-of-two row count; consecutive duplicates pair exactly in the
    // reduction tree, so the mean gradient and every Adam step match
    const Dataset base = random_dataset(8, 3, 99, 0.2f);
    Dataset dup;
    dup.bands = base.bands;
    dup.count = base.count * 2;
    for (std::size_t i = 0; i < base.count; ++i) {
        for (int copy = 0; copy < 2; ++copy) {
            dup.features.insert(dup.features.end(), base.features.begin() + i * base.bands,
                                base.features.begin() + (i + 1) * base.bands);
            dup.labels.push_back(base.labels[i]);
        }
    }

    TrainConfig cfg;
    cfg.epochs = 40;
    cfg.batch_size = 64;  // full batch for both datasets
    cfg.seed = 7;
    const LinearModel a = train_logistic(base, cfg);
    const LinearModel b = train_logistic(dup, cfg);
    CHECK(a.weights == b.weights);
    CHECK(a.bias == b.bias);

    const LinearModel sa = train_svm(base, cfg);
    const LinearModel sb = train_svm(dup, cfg);
    CHECK(sa.weights == sb.weights);
    CHECK(sa.bias == sb.bias);
}

TEST_CASE("svm learns the separable pair and scaling keeps the sign pattern") {
    TrainConfig cfg;
    cfg.learning_rate = 1e-2;  // the hinge optimum needs |w| >= 2.5 here
    cfg.epochs = 1500;
    cfg.seed = 3;
    cfg.l2 = 0.0;
    const LinearModel model = train_svm(one_dim_pair(), cfg);
    const std::vector<double> margins = predict_scores(Model{model}, one_dim_pair().features, 1);
    CHECK(margins[0] < 0.0);
    CHECK(margins[1] > 0.0);

    Dataset scaled = one_dim_pair();
    for (float& v : scaled.features) v *= 2.0f;
    const LinearModel model2 = train_svm(scaled, cfg);
    const std::vector<double> margins2 = predict_scores(Model{model2}, scaled.features, 1);
    CHECK(margins2[0] < 0.0);
    CHECK(margins2[1] > 0.0);
}

TEST_CASE("mlp separates xor where the linear model cannot") {
    const Dataset data = xor_dataset(400, 12);
    TrainConfig cfg;
    cfg.epochs = 200;
    cfg.batch_size = 64;
    cfg.seed = 5;

    const MLPModel mlp = train_mlp(data, cfg);
    CHECK(accuracy_at(mlp, data, 0.5) >= 0.95);

    TrainConfig lr_cfg = cfg;
    lr_cfg.epochs = 400;
    const LinearModel lr = train_logistic(data, lr_cfg);
    CHECK(accuracy_at(lr, data, 0.5) <= 0.75);
}

TEST_CASE("mlp beats the linear model on xor across 5 seeds") {
    for (std::uint64_t seed : {101, 102, 103, 104, 105}) {
        const Dataset data = xor_dataset(320, seed);
        TrainConfig cfg;
        cfg.epochs = 200;
        cfg.batch_size = 64;
        cfg.seed = seed;
        const MLPModel mlp = train_mlp(data, cfg);
        const LinearModel lr = train_logistic(data, cfg);
        CHECK(accuracy_at(mlp, data, 0.5) >= 0.95);
        CHECK(accuracy_at(lr, data, 0.5) <= 0.75);
    }
}

TEST_CASE("analytic gradients match central finite differences") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> param(-0.6, 0.6);

    SUBCASE("logistic") {
        auto obj = make_logistic_objective(5, 0.01);
        const Dataset batch = random_dataset(6, 5, 10, 0.15f);
        for (int point = 0; point < 5; ++point) {
            std::vector<double> params(obj->param_count());
            for (double& p : params) p = param(rng);
            CHECK(max_gradcheck_error(*obj, batch, params) < 1e-4);
        }
    }
    SUBCASE("hinge") {
        auto obj = make_hinge_objective(5, 0.01);
        const Dataset batch = random_dataset(6, 5, 11, 0.15f);
        int done = 0;
        while (done < 5) {
            std::vector<double> params(obj->param_count());
            for (double& p : params) p = param(rng);
            if (!far_from_kinks(*obj, params, batch, 1e-3)) continue;
            CHECK(max_gradcheck_error(*obj, batch, params) < 1e-4);
            ++done;
        }
    }
    SUBCASE("mlp on a random 5-sample batch") {
        auto obj = make_mlp_objective(4, 0.0);
        const Dataset batch = random_dataset(5, 4, 12, 0.2f);
        std::mt19937_64 init_rng(77);
        int done = 0;
        while (done < 2) {
            std::vector<double> params(obj->param_count());
            obj->init_params(params, init_rng);
            for (double& p : params) p += 0.01 * param(rng);
            if (!far_from_kinks(*obj, params, batch, 1e-3)) continue;
            CHECK(max_gradcheck_error(*obj, batch, params) < 1e-4);
            ++done;
        }
    }
}

TEST_CASE("training is deterministic for a fixed seed") {
    const Dataset data = xor_dataset(128, 9);
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.batch_size = 32;
    cfg.seed = 1234;
    const MLPModel a = train_mlp(data, cfg);
    const MLPModel b = train_mlp(data, cfg);
    REQUIRE(a.layers.size() == b.layers.size());
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        CHECK(a.layers[l].weights == b.layers[l].weights);
        CHECK(a.layers[l].bias == b.layers[l].bias);
    }

    TrainConfig other = cfg;
    other.seed = 4321;
    const MLPModel c = train_mlp(data, other);
    CHECK(c.layers[0].weights != a.layers[0].weights);
}

TEST_CASE("full-batch gradient is invariant to row order") {
    const Dataset data = random_dataset(33, 4, 21, 0.1f);
    Dataset reversed;
    reversed.bands = data.bands;
    reversed.count = data.count;
    for (std::size_t i = data.count; i-- > 0;) {
        reversed.features.insert(reversed.features.end(), data.features.begin() + i * data.bands,
                                 data.features.begin() + (i + 1) * data.bands);
        reversed.labels.push_back(data.labels[i]);
    }

    auto obj = make_logistic_objective(4, 0.0);
    std::vector<double> params(obj->param_count(), 0.25);
    std::vector<double> g1(params.size()), g2(params.size());
    obj->gradient(params, data, g1);
    obj->gradient(params, reversed, g2);
    for (std::size_t i = 0; i < g1.size(); ++i)
        CHECK(g1[i] == doctest::Approx(g2[i]).epsilon(1e-12));
}

TEST_CASE("full-batch training lowers the convex losses") {
    const Dataset data = random_dataset(64, 6, 31, 0.1f);
    TrainConfig cfg;
    cfg.epochs = 50;
    cfg.batch_size = 1024;
    cfg.seed = 2;

    {
        auto obj = make_logistic_objective(6, 0.0);
        std::vector<double> zero(obj->param_count(), 0.0);
        const double initial = obj->loss(zero, data);
        const LinearModel model = train_logistic(data, cfg);
        std::vector<double> trained(model.weights);
        trained.push_back(model.bias);
        CHECK(obj->loss(trained, data) < initial);
    }
    {
        auto obj = make_hinge_objective(6, 1e-4);
        std::vector<double> zero(obj->param_count(), 0.0);
        const double initial = obj->loss(zero, data);
        const LinearModel model = train_svm(data, cfg);
        std::vector<double> trained(model.weights);
        trained.push_back(model.bias);
        CHECK(obj->loss(trained, data) < initial);
    }
}

TEST_CASE("single-class data is rejected") {
    Dataset d = make_dataset(2, {{0.1f, 0.2f}, {0.3f, 0.4f}}, {1, 1});
    TrainConfig cfg;
    CHECK_THROWS_AS(train_logistic(d, cfg), std::invalid_argument);
    CHECK_THROWS_AS(train_svm(d, cfg), std::invalid_argument);
    CHECK_THROWS_AS(train_mlp(d, cfg), std::invalid_argument);
}

TEST_CASE("batch scores equal row-by-row scores") {
    std::mt19937_64 rng(60);
    const MLPModel mlp = MLPModel::seeded(7, rng);
    const Dataset data = random_dataset(100, 7, 61, 0.1f);
    const Model model = mlp;

    const std::vector<double> batch = predict_scores(model, data.features, 7);
    for (std::size_t i = 0; i < data.count; ++i) {
        const std::span<const float> row(data.features.data() + i * 7, 7);
        const std::vector<double> single = predict_scores(model, row, 7);
        CHECK(std::abs(single[0] - batch[i]) <= 1e-6);
    }

    SUBCASE("and are identical across worker counts") {
        const std::vector<double> threaded = predict_scores(model, data.features, 7, 2);
        CHECK(threaded == batch);
    }
}

TEST_CASE("predict_mask thresholds scores with the strict rule") {
    const SpectralCube cube = reflectance_cube_random(6, 7, 3, 71);
    const Model zero_logistic = LinearModel::zeros(LinearKind::Logistic, 3);

    SUBCASE("score 0.5 is not > 0.5") {
        const LabelMask mask = predict_mask(zero_logistic, cube, 0.5);
        for (std::uint8_t v : mask.labels) CHECK(v == kLabelNonPlastic);
    }
    SUBCASE("threshold -1 turns every valid pixel on") {
        const LabelMask mask = predict_mask(zero_logistic, cube, -1.0);
        for (std::uint8_t v : mask.labels) CHECK(v == kLabelPlastic);
    }
    SUBCASE("ignore mask pixels come back as 255") {
        LabelMask ignore = LabelMask::filled(6, 7, kLabelNonPlastic);
        ignore.at(0, 0) = kLabelIgnore;
        const LabelMask mask = predict_mask(zero_logistic, cube, -1.0, &ignore);
        CHECK(mask.at(0, 0) == kLabelIgnore);
        CHECK(mask.at(0, 1) == kLabelPlastic);
    }
}

TEST_CASE("predict_mask agrees with thresholded predict_scores") {
    const SpectralCube cube = reflectance_cube_random(9, 11, 4, 81);
    std::mt19937_64 rng(82);
    const Model model = MLPModel::seeded(4, rng);
    const double threshold = 0.5;

    const LabelMask mask = predict_mask(model, cube, threshold, nullptr, 2);
    const PixelSamples samples = flatten_pixels(cube, LabelMask::filled(9, 11, kLabelNonPlastic));
    const std::vector<double> scores = predict_scores(model, samples.features, 4);
    for (std::size_t i = 0; i < samples.count; ++i)
        CHECK((scores[i] > threshold) == (mask.labels[i] == kLabelPlastic));
}

TEST_CASE("predict_mask rejects raw cubes and width mismatches") {
    SpectralCube cube = reflectance_cube_random(3, 3, 3, 91);
    const Model model = LinearModel::zeros(LinearKind::Logistic, 3);
    SpectralCube raw = cube;
    raw.state = CalibrationState::RawCounts;
    CHECK_THROWS_AS(predict_mask(model, raw, 0.5), std::invalid_argument);
    const Model wide = LinearModel::zeros(LinearKind::Logistic, 5);
    CHECK_THROWS_AS(predict_mask(wide, cube, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(predict_scores(wide, cube.data, 3), std::invalid_argument);
}

TEST_CASE("models round-trip through the JSON file format") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path();
    TrainConfig cfg;
    cfg.seed = 4;
    cfg.epochs = 15;

    SUBCASE("mlp") {
        const Dataset data = xor_dataset(64, 40);
        const MLPModel trained = train_mlp(data, cfg);
        const fs::path path = dir / "plastiscan_model_mlp.json";
        save_model(trained, cfg, path);
        const SavedModel back = load_model(path);
        const auto& mlp = std::get<MLPModel>(back.model);
        REQUIRE(mlp.layers.size() == trained.layers.size());
        for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
            CHECK(mlp.layers[l].weights == trained.layers[l].weights);
            CHECK(mlp.layers[l].bias == trained.layers[l].bias);
        }
        CHECK(back.config.epochs == cfg.epochs);

        // deterministic bytes on re-save
        const fs::path path2 = dir / "plastiscan_model_mlp2.json";
        save_model(back.model, back.config, path2);
        std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
        const std::string bytes_a((std::istreambuf_iterator<char>(a)), {});
        const std::string bytes_b((std::istreambuf_iterator<char>(b)), {});
        CHECK(bytes_a == bytes_b);
    }
    SUBCASE("linear kinds survive") {
        const LinearModel svm = train_svm(one_dim_pair(), cfg);
        const fs::path path = dir / "plastiscan_model_svm.json";
        save_model(svm, cfg, path);
        const SavedModel back = load_model(path);
        const auto& lin = std::get<LinearModel>(back.model);
        CHECK(lin.kind == LinearKind::Svm);
        CHECK(lin.weights == svm.weights);
        CHECK(lin.bias == svm.bias);
        CHECK(default_threshold(back.model) == 0.0);
    }
}

TEST_CASE("l2 defaults differ per model family") {
    TrainConfig cfg;
    CHECK(resolved_l2(cfg, false) == 0.0);
    CHECK(resolved_l2(cfg, true) == 1e-4);
    cfg.l2 = 0.5;
    CHECK(resolved_l2(cfg, true) == 0.5);
}

}  // TEST_SUITE
