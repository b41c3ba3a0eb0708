#include "plastiscan/classify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "json.hpp"
#include "plastiscan/parallel.hpp"

namespace plastiscan {

namespace {

double stable_sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// binary cross-entropy from the logit, stable for large |z|
double bce_from_logit(double z, double y) {
    return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

void check_dataset(const Dataset& data, bool require_both_classes) {
    if (data.count == 0 || data.bands == 0)
        throw std::invalid_argument("dataset is empty");
    if (data.features.size() != data.count * data.bands || data.labels.size() != data.count)
        throw std::invalid_argument("dataset buffer sizes are inconsistent");
    if (require_both_classes) {
        bool has0 = false, has1 = false;
        for (std::uint8_t y : data.labels) (y == 1 ? has1 : has0) = true;
        if (!has0 || !has1)
            throw std::invalid_argument("training requires both classes to be present");
    }
}

/// Binary-counter pairwise summation of equal-length vectors. The reduction
/// tree depends only on the number of leaves, which keeps full-batch gradients
/// reproducible and makes duplicated-consecutive leaves an exact doubling for
/// power-of-two counts.
class PairwiseReducer {
  public:
    explicit PairwiseReducer(std::size_t dim) : dim_(dim) {}

    void push(const double* leaf) {
        std::vector<double> buf = take_buffer();
        std::copy(leaf, leaf + dim_, buf.begin());
        stack_.push_back(std::move(buf));
        counts_.push_back(1);
        while (counts_.size() >= 2 && counts_[counts_.size() - 1] == counts_[counts_.size() - 2]) {
            std::vector<double>& top = stack_[stack_.size() - 1];
            std::vector<double>& below = stack_[stack_.size() - 2];
            for (std::size_t i = 0; i < dim_; ++i) below[i] += top[i];
            counts_[counts_.size() - 2] += counts_.back();
            pool_.push_back(std::move(top));
            stack_.pop_back();
            counts_.pop_back();
        }
    }

    /// Mean of all pushed leaves; resets the reducer.
    void finish_mean(std::span<double> out) {
        if (stack_.empty()) throw std::logic_error("PairwiseReducer: no leaves");
        std::uint64_t total = 0;
        for (std::uint64_t c : counts_) total += c;
        // fold smaller partials (top of stack) into larger ones
        while (stack_.size() > 1) {
            std::vector<double>& top = stack_[stack_.size() - 1];
            std::vector<double>& below = stack_[stack_.size() - 2];
            for (std::size_t i = 0; i < dim_; ++i) below[i] += top[i];
            pool_.push_back(std::move(top));
            stack_.pop_back();
        }
        const double inv_n = static_cast<double>(total);
        for (std::size_t i = 0; i < dim_; ++i) out[i] = stack_.front()[i] / inv_n;
        pool_.push_back(std::move(stack_.front()));
        stack_.clear();
        counts_.clear();
    }

  private:
    std::vector<double> take_buffer() {
        if (!pool_.empty()) {
            std::vector<double> b = std::move(pool_.back());
            pool_.pop_back();
            return b;
        }
        return std::vector<double>(dim_);
    }

    std::size_t dim_;
    std::vector<std::vector<double>> stack_;
    std::vector<std::uint64_t> counts_;
    std::vector<std::vector<double>> pool_;
};

class LogisticObjective final : public Objective {
  public:
    LogisticObjective(std::size_t bands, double l2, bool hinge)
        : bands_(bands), l2_(l2), hinge_(hinge) {}

    std::size_t param_count() const override { return bands_ + 1; }

    void init_params(std::span<double> params, std::mt19937_64&) const override {
        std::fill(params.begin(), params.end(), 0.0);
    }

    double sample_loss(std::span<const double> params, const float* x,
                       std::uint8_t y) const override {
        const double z = dot(params, x);
        if (!hinge_) return bce_from_logit(z, static_cast<double>(y));
        const double ypm = y == 1 ? 1.0 : -1.0;
        return std::max(0.0, 1.0 - ypm * z);
    }

    void sample_gradient(std::span<const double> params, const float* x, std::uint8_t y,
                         std::span<double> out) const override {
        const double z = dot(params, x);
        double dz;
        if (!hinge_) {
            dz = stable_sigmoid(z) - static_cast<double>(y);
        } else {
            const double ypm = y == 1 ? 1.0 : -1.0;
            dz = (1.0 - ypm * z > 0.0) ? -ypm : 0.0;
        }
        for (std::size_t i = 0; i < bands_; ++i) out[i] = dz * static_cast<double>(x[i]);
        out[bands_] = dz;
    }

    double reg_loss(std::span<const double> params) const override {
        double s = 0.0;
        for (std::size_t i = 0; i < bands_; ++i) s += params[i] * params[i];
        return 0.5 * l2_ * s;
    }

    void add_reg_gradient(std::span<const double> params, std::span<double> grad) const override {
        for (std::size_t i = 0; i < bands_; ++i) grad[i] += l2_ * params[i];
    }

    double smoothness_margin(std::span<const double> params, const float* x,
                             std::uint8_t y) const override {
        if (!hinge_) return std::numeric_limits<double>::infinity();
        const double ypm = y == 1 ? 1.0 : -1.0;
        return std::abs(1.0 - ypm * dot(params, x));
    }

  private:
    double dot(std::span<const double> params, const float* x) const {
        double z = params[bands_];
        for (std::size_t i = 0; i < bands_; ++i) z += params[i] * static_cast<double>(x[i]);
        return z;
    }

    std::size_t bands_;
    double l2_;
    bool hinge_;
};

struct MlpShape {
    std::vector<std::size_t> widths;  // input, hidden..., 1

    explicit MlpShape(std::size_t input_width) {
        widths.push_back(input_width);
        for (std::size_t w : MLPModel::kHiddenWidths) widths.push_back(w);
        widths.push_back(1);
    }

    std::size_t layer_count() const { return widths.size() - 1; }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < layer_count(); ++l) n += widths[l + 1] * widths[l] + widths[l + 1];
        return n;
    }

    // offset of layer l's weights; biases follow them
    std::size_t weight_offset(std::size_t l) const {
        std::size_t off = 0;
        for (std::size_t k = 0; k < l; ++k) off += widths[k + 1] * widths[k] + widths[k + 1];
        return off;
    }
};

class MlpObjective final : public Objective {
  public:
    MlpObjective(std::size_t bands, double l2) : shape_(bands), l2_(l2) {
        for (std::size_t l = 0; l <= shape_.layer_count(); ++l) {
            act_.emplace_back(shape_.widths[l]);
            pre_.emplace_back(l > 0 ? shape_.widths[l] : 0);
            delta_.emplace_back(l > 0 ? shape_.widths[l] : 0);
        }
    }

    std::size_t param_count() const override { return shape_.param_count(); }

    void init_params(std::span<double> params, std::mt19937_64& rng) const override {
        std::size_t off = 0;
        for (std::size_t l = 0; l < shape_.layer_count(); ++l) {
            const std::size_t in = shape_.widths[l];
            const std::size_t out = shape_.widths[l + 1];
            const double scale = 1.0 / std::sqrt(static_cast<double>(in));
            std::uniform_real_distribution<double> dist(-scale, scale);
            for (std::size_t i = 0; i < out * in; ++i) params[off + i] = dist(rng);
            off += out * in;
            for (std::size_t i = 0; i < out; ++i) params[off + i] = 0.0;
            off += out;
        }
    }

    double sample_loss(std::span<const double> params, const float* x,
                       std::uint8_t y) const override {
        const double z = forward(params, x);
        return bce_from_logit(z, static_cast<double>(y));
    }

    void sample_gradient(std::span<const double> params, const float* x, std::uint8_t y,
                         std::span<double> out) const override {
        const double z = forward(params, x);
        const std::size_t layers = shape_.layer_count();
        delta_[layers][0] = stable_sigmoid(z) - static_cast<double>(y);

        for (std::size_t l = layers; l-- > 0;) {
            const std::size_t in = shape_.widths[l];
            const std::size_t n_out = shape_.widths[l + 1];
            const std::size_t w_off = shape_.weight_offset(l);
            const double* w = params.data() + w_off;
            const std::vector<double>& a_in = act_[l];
            const std::vector<double>& dz = delta_[l + 1];

            double* gw = out.data() + w_off;
            double* gb = gw + n_out * in;
            for (std::size_t j = 0; j < n_out; ++j) {
                const double d = dz[j];
                double* gw_row = gw + j * in;
                for (std::size_t i = 0; i < in; ++i) gw_row[i] = d * a_in[i];
                gb[j] = d;
            }
            if (l == 0) break;
            std::vector<double>& d_prev = delta_[l];
            for (std::size_t i = 0; i < in; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < n_out; ++j) s += w[j * in + i] * dz[j];
                d_prev[i] = pre_[l][i] > 0.0 ? s : 0.0;  // ReLU'
            }
        }
    }

    double reg_loss(std::span<const double> params) const override {
        if (l2_ == 0.0) return 0.0;
        double s = 0.0;
        for (std::size_t l = 0; l < shape_.layer_count(); ++l) {
            const std::size_t w_off = shape_.weight_offset(l);
            const std::size_t n = shape_.widths[l + 1] * shape_.widths[l];
            for (std::size_t i = 0; i < n; ++i) s += params[w_off + i] * params[w_off + i];
        }
        return 0.5 * l2_ * s;
    }

    void add_reg_gradient(std::span<const double> params, std::span<double> grad) const override {
        if (l2_ == 0.0) return;
        for (std::size_t l = 0; l < shape_.layer_count(); ++l) {
            const std::size_t w_off = shape_.weight_offset(l);
            const std::size_t n = shape_.widths[l + 1] * shape_.widths[l];
            for (std::size_t i = 0; i < n; ++i) grad[w_off + i] += l2_ * params[w_off + i];
        }
    }

    double smoothness_margin(std::span<const double> params, const float* x,
                             std::uint8_t) const override {
        forward(params, x);
        double margin = std::numeric_limits<double>::infinity();
        for (std::size_t l = 1; l < shape_.layer_count(); ++l)
            for (double z : pre_[l]) margin = std::min(margin, std::abs(z));
        return margin;
    }

  private:
    // returns the output logit; fills act_ and pre_
    double forward(std::span<const double> params, const float* x) const {
        for (std::size_t i = 0; i < shape_.widths[0]; ++i) act_[0][i] = static_cast<double>(x[i]);
        for (std::size_t l = 0; l < shape_.layer_count(); ++l) {
            const std::size_t in = shape_.widths[l];
            const std::size_t n_out = shape_.widths[l + 1];
            const std::size_t w_off = shape_.weight_offset(l);
            const double* w = params.data() + w_off;
            const double* b = w + n_out * in;
            for (std::size_t j = 0; j < n_out; ++j) {
                double z = b[j];
                const double* w_row = w + j * in;
                for (std::size_t i = 0; i < in; ++i) z += w_row[i] * act_[l][i];
                pre_[l + 1][j] = z;
                act_[l + 1][j] = (l + 1 < shape_.layer_count()) ? std::max(0.0, z) : z;
            }
        }
        return pre_.back()[0];
    }

    MlpShape shape_;
    double l2_;
    mutable std::vector<std::vector<double>> act_;
    mutable std::vector<std::vector<double>> pre_;
    mutable std::vector<std::vector<double>> delta_;
};

constexpr int kEarlyStopPatience = 5;

std::vector<double> fit(const Objective& obj, const Dataset& data, const TrainConfig& cfg,
                        const Dataset* validation) {
    check_dataset(data, true);
    if (cfg.learning_rate <= 0.0) throw std::invalid_argument("learning rate must be positive");
    if (cfg.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (cfg.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");

    const std::size_t n = data.count;
    const std::size_t p = obj.param_count();
    std::vector<double> params(p);
    std::mt19937_64 rng(cfg.seed);
    obj.init_params(params, rng);

    std::vector<double> m(p, 0.0), v(p, 0.0), grad(p), leaf(p);
    std::vector<std::size_t> indices(n);
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    const bool full_batch = cfg.batch_size >= n;

    PairwiseReducer reducer(p);
    double best_vloss = std::numeric_limits<double>::infinity();
    std::vector<double> best_params;
    int stale_epochs = 0;
    std::uint64_t step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (!full_batch) std::shuffle(indices.begin(), indices.end(), rng);

        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            for (std::size_t k = start; k < stop; ++k) {
                const std::size_t idx = indices[k];
                obj.sample_gradient(params, data.features.data() + idx * data.bands,
                                    data.labels[idx], leaf);
                reducer.push(leaf.data());
            }
            reducer.finish_mean(grad);
            obj.add_reg_gradient(params, grad);

            ++step;
            const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            for (std::size_t i = 0; i < p; ++i) {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
                params[i] -= cfg.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.eps);
            }
        }

        for (double x : params)
            if (!std::isfinite(x)) throw std::runtime_error("training diverged: non-finite parameters");

        if (validation && validation->count > 0) {
            const double vloss = obj.loss(params, *validation);
            if (!std::isfinite(vloss)) throw std::runtime_error("non-finite validation loss");
            if (vloss < best_vloss) {
                best_vloss = vloss;
                best_params = params;
                stale_epochs = 0;
            } else if (++stale_epochs >= kEarlyStopPatience) {
                break;
            }
        }
    }
    return best_params.empty() ? params : best_params;
}

LinearModel params_to_linear(LinearKind kind, std::size_t bands, std::span<const double> params) {
    LinearModel model;
    model.kind = kind;
    model.weights.assign(params.begin(), params.begin() + bands);
    model.bias = params[bands];
    return model;
}

MLPModel params_to_mlp(std::size_t bands, std::span<const double> params) {
    const MlpShape shape(bands);
    MLPModel model;
    std::size_t off = 0;
    for (std::size_t l = 0; l < shape.layer_count(); ++l) {
        MLPModel::Layer layer;
        layer.in = shape.widths[l];
        layer.out = shape.widths[l + 1];
        layer.weights.assign(params.begin() + off, params.begin() + off + layer.out * layer.in);
        off += layer.out * layer.in;
        layer.bias.assign(params.begin() + off, params.begin() + off + layer.out);
        off += layer.out;
        model.layers.push_back(std::move(layer));
    }
    return model;
}

/// Float inference network with in-major ("transposed") weight layout so the
/// inner accumulation loop runs over independent output lanes.
struct InferenceNet {
    struct Layer {
        std::size_t in = 0, out = 0;
        std::vector<float> wt;  // wt[i*out + j]
        std::vector<float> bias;
        bool relu = false;
    };
    std::vector<Layer> layers;
    std::size_t input_width = 0;
    bool sigmoid_output = true;

    static InferenceNet build(const Model& model) {
        InferenceNet net;
        if (const auto* lin = std::get_if<LinearModel>(&model)) {
            net.input_width = lin->weights.size();
            net.sigmoid_output = lin->kind == LinearKind::Logistic;
            Layer layer;
            layer.in = net.input_width;
            layer.out = 1;
            layer.wt.resize(layer.in);
            for (std::size_t i = 0; i < layer.in; ++i)
                layer.wt[i] = static_cast<float>(lin->weights[i]);
            layer.bias = {static_cast<float>(lin->bias)};
            net.layers.push_back(std::move(layer));
        } else {
            const auto& mlp = std::get<MLPModel>(model);
            net.input_width = mlp.input_width();
            net.sigmoid_output = true;
            for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
                const auto& src = mlp.layers[l];
                Layer layer;
                layer.in = src.in;
                layer.out = src.out;
                layer.relu = l + 1 < mlp.layers.size();
                layer.wt.resize(layer.in * layer.out);
                for (std::size_t j = 0; j < layer.out; ++j)
                    for (std::size_t i = 0; i < layer.in; ++i)
                        layer.wt[i * layer.out + j] = static_cast<float>(src.weights[j * layer.in + i]);
                layer.bias.resize(layer.out);
                for (std::size_t j = 0; j < layer.out; ++j)
                    layer.bias[j] = static_cast<float>(src.bias[j]);
                net.layers.push_back(std::move(layer));
            }
        }
        return net;
    }

    std::size_t max_width() const {
        std::size_t w = input_width;
        for (const auto& l : layers) w = std::max(w, l.out);
        return w;
    }

    /// Scores for `rows` feature rows (row-major, width = input_width).
    /// Each row's arithmetic is independent of the block it lands in.
    void forward_block(const float* input, std::size_t rows, float* scores,
                       std::vector<float>& scratch_a, std::vector<float>& scratch_b) const {
        const std::size_t cap = rows * max_width();
        if (scratch_a.size() < cap) scratch_a.resize(cap);
        if (scratch_b.size() < cap) scratch_b.resize(cap);

        const float* cur = input;
        float* next = scratch_a.data();
        float* spare = scratch_b.data();
        for (const Layer& layer : layers) {
            for (std::size_t r = 0; r < rows; ++r) {
                float* out_row = next + r * layer.out;
                for (std::size_t j = 0; j < layer.out; ++j) out_row[j] = layer.bias[j];
                const float* in_row = cur + r * layer.in;
                for (std::size_t i = 0; i < layer.in; ++i) {
                    const float xi = in_row[i];
                    const float* wt_row = layer.wt.data() + i * layer.out;
                    for (std::size_t j = 0; j < layer.out; ++j) out_row[j] += wt_row[j] * xi;
                }
                if (layer.relu)
                    for (std::size_t j = 0; j < layer.out; ++j)
                        out_row[j] = out_row[j] > 0.0f ? out_row[j] : 0.0f;
            }
            cur = next;
            std::swap(next, spare);
        }
        for (std::size_t r = 0; r < rows; ++r) {
            float z = cur[r * layers.back().out];
            if (sigmoid_output) z = z >= 0.0f ? 1.0f / (1.0f + std::exp(-z)) : std::exp(z) / (1.0f + std::exp(z));
            scores[r] = z;
        }
    }
};

constexpr std::size_t kInferBlock = 128;

}  // namespace

LinearModel LinearModel::zeros(LinearKind kind, std::size_t bands) {
    LinearModel m;
    m.kind = kind;
    m.weights.assign(bands, 0.0);
    m.bias = 0.0;
    return m;
}

MLPModel MLPModel::zeros(std::size_t input_width) {
    const MlpShape shape(input_width);
    return params_to_mlp(input_width, std::vector<double>(shape.param_count(), 0.0));
}

MLPModel MLPModel::seeded(std::size_t input_width, std::mt19937_64& rng) {
    const MlpObjective obj(input_width, 0.0);
    std::vector<double> params(obj.param_count());
    obj.init_params(params, rng);
    return params_to_mlp(input_width, params);
}

std::vector<std::size_t> MLPModel::layer_widths() const {
    std::vector<std::size_t> w;
    if (layers.empty()) return w;
    w.push_back(layers.front().in);
    for (const auto& layer : layers) w.push_back(layer.out);
    return w;
}

double resolved_l2(const TrainConfig& cfg, bool svm) {
    return cfg.l2.value_or(svm ? 1e-4 : 0.0);
}

double Objective::smoothness_margin(std::span<const double>, const float*, std::uint8_t) const {
    return std::numeric_limits<double>::infinity();
}

double Objective::loss(std::span<const double> params, const Dataset& data) const {
    check_dataset(data, false);
    PairwiseReducer reducer(1);
    for (std::size_t i = 0; i < data.count; ++i) {
        const double l = sample_loss(params, data.features.data() + i * data.bands, data.labels[i]);
        reducer.push(&l);
    }
    double mean = 0.0;
    reducer.finish_mean({&mean, 1});
    return mean + reg_loss(params);
}

void Objective::gradient(std::span<const double> params, const Dataset& data,
                         std::span<double> out) const {
    check_dataset(data, false);
    const std::size_t p = param_count();
    PairwiseReducer reducer(p);
    std::vector<double> leaf(p);
    for (std::size_t i = 0; i < data.count; ++i) {
        sample_gradient(params, data.features.data() + i * data.bands, data.labels[i], leaf);
        reducer.push(leaf.data());
    }
    reducer.finish_mean(out);
    add_reg_gradient(params, out);
}

std::unique_ptr<Objective> make_logistic_objective(std::size_t bands, double l2) {
    return std::make_unique<LogisticObjective>(bands, l2, false);
}

std::unique_ptr<Objective> make_hinge_objective(std::size_t bands, double l2) {
    return std::make_unique<LogisticObjective>(bands, l2, true);
}

std::unique_ptr<Objective> make_mlp_objective(std::size_t bands, double l2) {
    return std::make_unique<MlpObjective>(bands, l2);
}

LinearModel train_logistic(const Dataset& data, const TrainConfig& cfg, const Dataset* validation) {
    const auto obj = make_logistic_objective(data.bands, resolved_l2(cfg, false));
    const std::vector<double> params = fit(*obj, data, cfg, validation);
    return params_to_linear(LinearKind::Logistic, data.bands, params);
}

LinearModel train_svm(const Dataset& data, const TrainConfig& cfg, const Dataset* validation) {
    const auto obj = make_hinge_objective(data.bands, resolved_l2(cfg, true));
    const std::vector<double> params = fit(*obj, data, cfg, validation);
    return params_to_linear(LinearKind::Svm, data.bands, params);
}

MLPModel train_mlp(const Dataset& data, const TrainConfig& cfg, const Dataset* validation) {
    const auto obj = make_mlp_objective(data.bands, resolved_l2(cfg, false));
    const std::vector<double> params = fit(*obj, data, cfg, validation);
    return params_to_mlp(data.bands, params);
}

std::size_t model_input_width(const Model& model) {
    if (const auto* lin = std::get_if<LinearModel>(&model)) return lin->input_width();
    return std::get<MLPModel>(model).input_width();
}

std::string model_kind_name(const Model& model) {
    if (const auto* lin = std::get_if<LinearModel>(&model))
        return lin->kind == LinearKind::Logistic ? "logistic" : "svm";
    return "mlp";
}

double default_threshold(const Model& model) {
    if (const auto* lin = std::get_if<LinearModel>(&model))
        if (lin->kind == LinearKind::Svm) return 0.0;
    return 0.5;
}

std::vector<double> predict_scores(const Model& model, std::span<const float> features,
                                   std::size_t bands, int workers) {
    if (bands == 0 || bands != model_input_width(model))
        throw std::invalid_argument("feature width does not match model input width");
    if (features.size() % bands != 0)
        throw std::invalid_argument("feature buffer is not a multiple of the band count");
    const std::size_t n = features.size() / bands;
    std::vector<double> scores(n);
    if (n == 0) return scores;

    const InferenceNet net = InferenceNet::build(model);
    parallel_chunks(n, workers, [&](std::size_t begin, std::size_t end) {
        std::vector<float> block_scores(kInferBlock);
        std::vector<float> scratch_a, scratch_b;
        for (std::size_t start = begin; start < end; start += kInferBlock) {
            const std::size_t rows = std::min(kInferBlock, end - start);
            net.forward_block(features.data() + start * bands, rows, block_scores.data(),
                              scratch_a, scratch_b);
            for (std::size_t r = 0; r < rows; ++r)
                scores[start + r] = static_cast<double>(block_scores[r]);
        }
    });
    return scores;
}

LabelMask predict_mask(const Model& model, const SpectralCube& cube, double threshold,
                       const LabelMask* ignore, int workers) {
    if (cube.state != CalibrationState::Reflectance)
        throw std::invalid_argument("predict_mask expects a reflectance cube");
    if (model_input_width(model) != static_cast<std::size_t>(cube.bands))
        throw std::invalid_argument("model input width does not match cube band count");
    if (ignore && (ignore->height != cube.height || ignore->width != cube.width))
        throw std::invalid_argument("ignore mask dimensions do not match cube");

    LabelMask out = LabelMask::filled(cube.height, cube.width, kLabelNonPlastic);
    const std::size_t plane = cube.pixel_count();
    const std::size_t bands = static_cast<std::size_t>(cube.bands);
    const InferenceNet net = InferenceNet::build(model);

    parallel_chunks(plane, workers, [&](std::size_t begin, std::size_t end) {
        std::vector<float> block(kInferBlock * bands);
        std::vector<float> block_scores(kInferBlock);
        std::vector<float> scratch_a, scratch_b;
        for (std::size_t start = begin; start < end; start += kInferBlock) {
            const std::size_t rows = std::min(kInferBlock, end - start);
            for (std::size_t b = 0; b < bands; ++b) {
                const float* src = cube.data.data() + b * plane + start;
                for (std::size_t r = 0; r < rows; ++r) block[r * bands + b] = src[r];
            }
            net.forward_block(block.data(), rows, block_scores.data(), scratch_a, scratch_b);
            for (std::size_t r = 0; r < rows; ++r)
                out.labels[start + r] =
                    static_cast<double>(block_scores[r]) > threshold ? kLabelPlastic : kLabelNonPlastic;
        }
    });

    if (ignore)
        for (std::size_t i = 0; i < plane; ++i)
            if (ignore->labels[i] == kLabelIgnore) out.labels[i] = kLabelIgnore;
    return out;
}

void save_model(const Model& model, const TrainConfig& cfg, const std::filesystem::path& path) {
    nlohmann::json doc;
    doc["format_version"] = 1;
    doc["kind"] = model_kind_name(model);
    if (const auto* lin = std::get_if<LinearModel>(&model)) {
        doc["layer_widths"] = {lin->weights.size(), std::size_t{1}};
        doc["weights"] = {lin->weights};
        doc["biases"] = {{lin->bias}};
    } else {
        const auto& mlp = std::get<MLPModel>(model);
        doc["layer_widths"] = mlp.layer_widths();
        nlohmann::json weights = nlohmann::json::array();
        nlohmann::json biases = nlohmann::json::array();
        for (const auto& layer : mlp.layers) {
            weights.push_back(layer.weights);
            biases.push_back(layer.bias);
        }
        doc["weights"] = weights;
        doc["biases"] = biases;
    }
    doc["training_config"] = {{"learning_rate", cfg.learning_rate}, {"beta1", cfg.beta1},
                              {"beta2", cfg.beta2},                 {"eps", cfg.eps},
                              {"epochs", cfg.epochs},               {"batch_size", cfg.batch_size},
                              {"l2", resolved_l2(cfg, std::holds_alternative<LinearModel>(model) &&
                                                          std::get<LinearModel>(model).kind ==
                                                              LinearKind::Svm)}};
    doc["seed"] = cfg.seed;

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for write: " + path.string());
    out << doc.dump(2) << '\n';
    if (!out) throw std::runtime_error("write failure: " + path.string());
}

SavedModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file: " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
        if (doc.at("format_version").get<int>() != 1)
            throw std::runtime_error("unsupported model format version");

        SavedModel out;
        const auto& tc = doc.at("training_config");
        out.config.learning_rate = tc.at("learning_rate").get<double>();
        out.config.beta1 = tc.at("beta1").get<double>();
        out.config.beta2 = tc.at("beta2").get<double>();
        out.config.eps = tc.at("eps").get<double>();
        out.config.epochs = tc.at("epochs").get<int>();
        out.config.batch_size = tc.at("batch_size").get<std::size_t>();
        out.config.l2 = tc.at("l2").get<double>();
        out.config.seed = doc.at("seed").get<std::uint64_t>();

        const std::string kind = doc.at("kind").get<std::string>();
        const auto widths = doc.at("layer_widths").get<std::vector<std::size_t>>();
        const auto& weights = doc.at("weights");
        const auto& biases = doc.at("biases");
        if (kind == "mlp") {
            MLPModel mlp;
            for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
                MLPModel::Layer layer;
                layer.in = widths[l];
                layer.out = widths[l + 1];
                layer.weights = weights.at(l).get<std::vector<double>>();
                layer.bias = biases.at(l).get<std::vector<double>>();
                if (layer.weights.size() != layer.in * layer.out || layer.bias.size() != layer.out)
                    throw std::runtime_error("model layer size mismatch");
                mlp.layers.push_back(std::move(layer));
            }
            const auto expected = MlpShape(widths.front()).widths;
            if (mlp.layer_widths() != expected)
                throw std::runtime_error("mlp layer widths must be input/100/50/25/1");
            out.model = std::move(mlp);
        } else if (kind == "logistic" || kind == "svm") {
            LinearModel lin;
            lin.kind = kind == "svm" ? LinearKind::Svm : LinearKind::Logistic;
            lin.weights = weights.at(0).get<std::vector<double>>();
            lin.bias = biases.at(0).get<std::vector<double>>().at(0);
            if (widths.size() != 2 || widths[0] != lin.weights.size() || widths[1] != 1)
                throw std::runtime_error("linear model width mismatch");
            out.model = std::move(lin);
        } else {
            throw std::runtime_error("unknown model kind: " + kind);
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("bad model file " + path.string() + ": " + e.what());
    }
}

}  // namespace plastiscan
