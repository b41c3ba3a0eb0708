#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "plastiscan/cube_io.hpp"

namespace plastiscan {

/// Per-pixel training set: feature rows in [0,1], labels in {0,1}.
using Dataset = PixelSamples;

enum class LinearKind { Logistic, Svm };

struct LinearModel {
    LinearKind kind = LinearKind::Logistic;
    std::vector<double> weights;
    double bias = 0.0;

    static LinearModel zeros(LinearKind kind, std::size_t bands);
    std::size_t input_width() const { return weights.size(); }
};

/// Feed-forward net with hidden widths 100/50/25, ReLU hidden activations and
/// a single sigmoid output unit.
struct MLPModel {
    struct Layer {
        std::size_t out = 0;
        std::size_t in = 0;
        std::vector<double> weights;  // row-major out x in
        std::vector<double> bias;
    };
    std::vector<Layer> layers;

    static constexpr std::array<std::size_t, 3> kHiddenWidths{100, 50, 25};

    static MLPModel zeros(std::size_t input_width);
    /// Variance-scaled uniform init, weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
    /// biases zero, drawn in layer order from the given generator.
    static MLPModel seeded(std::size_t input_width, std::mt19937_64& rng);

    std::size_t input_width() const { return layers.empty() ? 0 : layers.front().in; }
    std::vector<std::size_t> layer_widths() const;
};

using Model = std::variant<LinearModel, MLPModel>;

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int epochs = 50;
    std::size_t batch_size = 1024;
    std::optional<double> l2;  // default: 1e-4 for SVM, 0 otherwise
    std::uint64_t seed = 0;
};

double resolved_l2(const TrainConfig& cfg, bool svm);

/// Training objective over a flat parameter vector: mean per-sample loss plus
/// an L2 penalty on weight entries. Exposed so tests can finite-difference the
/// analytic gradient. Instances carry scratch buffers and are not thread-safe.
class Objective {
  public:
    virtual ~Objective() = default;
    virtual std::size_t param_count() const = 0;
    virtual void init_params(std::span<double> params, std::mt19937_64& rng) const = 0;
    virtual double sample_loss(std::span<const double> params, const float* x,
                               std::uint8_t y) const = 0;
    /// Writes the full per-sample gradient (no regularization term).
    virtual void sample_gradient(std::span<const double> params, const float* x, std::uint8_t y,
                                 std::span<double> out) const = 0;
    virtual double reg_loss(std::span<const double> params) const = 0;
    virtual void add_reg_gradient(std::span<const double> params, std::span<double> grad) const = 0;

    /// Distance from the nearest non-smooth point of the sample loss (ReLU
    /// kinks, hinge corner); infinity for smooth objectives. Finite-difference
    /// checks use it to reject parameter/data draws that straddle a kink.
    virtual double smoothness_margin(std::span<const double> params, const float* x,
                                     std::uint8_t y) const;

    /// Mean sample loss over the set plus the L2 term.
    double loss(std::span<const double> params, const Dataset& data) const;
    /// Mean sample gradient (pairwise-tree reduction) plus the L2 term.
    void gradient(std::span<const double> params, const Dataset& data,
                  std::span<double> out) const;
};

std::unique_ptr<Objective> make_logistic_objective(std::size_t bands, double l2);
std::unique_ptr<Objective> make_hinge_objective(std::size_t bands, double l2);
std::unique_ptr<Objective> make_mlp_objective(std::size_t bands, double l2);

LinearModel train_logistic(const Dataset& data, const TrainConfig& cfg,
                           const Dataset* validation = nullptr);
LinearModel train_svm(const Dataset& data, const TrainConfig& cfg,
                      const Dataset* validation = nullptr);
MLPModel train_mlp(const Dataset& data, const TrainConfig& cfg,
                   const Dataset* validation = nullptr);

std::size_t model_input_width(const Model& model);
std::string model_kind_name(const Model& model);
/// Decision threshold on the score: 0.5 for probability models, 0 for SVM margins.
double default_threshold(const Model& model);

/// Scores per feature row: probabilities in [0,1] for logistic/MLP models,
/// raw margins for the SVM.
std::vector<double> predict_scores(const Model& model, std::span<const float> features,
                                   std::size_t bands, int workers = 1);

/// Per-pixel classification of a reflectance cube: class 1 iff score > threshold;
/// pixels marked ignore in the optional validity mask come back as 255.
LabelMask predict_mask(const Model& model, const SpectralCube& cube, double threshold,
                       const LabelMask* ignore = nullptr, int workers = 1);

void save_model(const Model& model, const TrainConfig& cfg, const std::filesystem::path& path);
struct SavedModel {
    Model model;
    TrainConfig config;
};
SavedModel load_model(const std::filesystem::path& path);

}  // namespace plastiscan
