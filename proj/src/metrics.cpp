#include "plastiscan/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace plastiscan {

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
}

std::string averaging_name(Averaging a) { return a == Averaging::Binary ? "binary" : "weighted"; }

ConfusionCounts confusion(const LabelMask& pred, const LabelMask& truth) {
    if (pred.height != truth.height || pred.width != truth.width)
        throw std::invalid_argument("confusion: mask dimensions differ");
    ConfusionCounts c;
    for (std::size_t i = 0; i < truth.labels.size(); ++i) {
        const std::uint8_t t = truth.labels[i];
        const std::uint8_t p = pred.labels[i];
        if (t == kLabelIgnore || p == kLabelIgnore) continue;
        if (t == kLabelPlastic)
            (p == kLabelPlastic ? c.tp : c.fn)++;
        else
            (p == kLabelPlastic ? c.fp : c.tn)++;
    }
    return c;
}

MetricsReport classification_metrics(const ConfusionCounts& counts, Averaging averaging) {
    const double total = static_cast<double>(counts.total());
    if (counts.total() == 0) throw std::invalid_argument("classification_metrics: empty evaluation set");

    MetricsReport r;
    r.counts = counts;
    r.averaging = averaging;
    r.accuracy = static_cast<double>(counts.tp + counts.tn) / total;

    const double tp = static_cast<double>(counts.tp);
    const double fp = static_cast<double>(counts.fp);
    const double tn = static_cast<double>(counts.tn);
    const double fn = static_cast<double>(counts.fn);

    if (averaging == Averaging::Binary) {
        if (tp + fp > 0)
            r.precision = tp / (tp + fp);
        else
            r.precision_defined = false;
        if (tp + fn > 0)
            r.recall = tp / (tp + fn);
        else
            r.recall_defined = false;
        if (r.precision_defined && r.recall_defined && r.precision + r.recall > 0)
            r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
        else
            r.f1_defined = false;
        return r;
    }

    // Weighted: per-class statistics, class 1 and class 0 each taken as
    // positive in turn. Precision weights = predicted supports, recall and
    // F1 weights = truth supports. Zero-support classes contribute weight 0.
    const double pred1 = tp + fp, pred0 = tn + fn;
    const double true1 = tp + fn, true0 = tn + fp;

    const double prec1 = pred1 > 0 ? tp / pred1 : 0.0;
    const double prec0 = pred0 > 0 ? tn / pred0 : 0.0;
    r.precision = (pred1 * prec1 + pred0 * prec0) / total;

    const double rec1 = true1 > 0 ? tp / true1 : 0.0;
    const double rec0 = true0 > 0 ? tn / true0 : 0.0;
    r.recall = (true1 * rec1 + true0 * rec0) / total;

    auto f1_of = [](double p, double rec) { return p + rec > 0 ? 2.0 * p * rec / (p + rec) : 0.0; };
    const double f11 = f1_of(prec1, rec1);
    const double f10 = f1_of(prec0, rec0);
    r.f1 = (true1 * f11 + true0 * f10) / total;
    if ((true1 > 0 && prec1 + rec1 == 0) || (true0 > 0 && prec0 + rec0 == 0)) r.f1_defined = false;
    return r;
}

double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("roc_auc: length mismatch");
    const std::size_t n = scores.size();
    std::size_t n_pos = 0;
    for (std::uint8_t y : labels) n_pos += (y == 1);
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("roc_auc: both classes must be present");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // rank sum of positives with average ranks over tie groups (1-based ranks)
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t k = i; k <= j; ++k)
            if (labels[order[k]] == 1) pos_rank_sum += avg_rank;
        i = j + 1;
    }
    const double u = pos_rank_sum - 0.5 * static_cast<double>(n_pos) * (n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

void set_auc(MetricsReport& report, double auc) {
    report.auc = auc;
    report.auc_defined = true;
}

ConfusionCounts confusion_from_scores(std::span<const double> scores,
                                      std::span<const std::uint8_t> labels, double threshold) {
    if (scores.size() != labels.size())
        throw std::invalid_argument("confusion_from_scores: length mismatch");
    ConfusionCounts c;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] > threshold;
        if (labels[i] == 1)
            (pred ? c.tp : c.fn)++;
        else
            (pred ? c.fp : c.tn)++;
    }
    return c;
}

std::string report_to_json(const MetricsReport& report, const std::string& model,
                           const std::string& modality, const std::string& split) {
    nlohmann::json doc;
    doc["model"] = model;
    doc["modality"] = modality;
    doc["split"] = split;
    doc["accuracy"] = report.accuracy;
    doc["precision"] = report.precision;
    doc["recall"] = report.recall;
    doc["f1"] = report.f1;
    doc["auc"] = report.auc;
    doc["counts"] = {{"tp", report.counts.tp},
                     {"fp", report.counts.fp},
                     {"tn", report.counts.tn},
                     {"fn", report.counts.fn}};
    doc["averaging"] = averaging_name(report.averaging);
    nlohmann::json undefined = nlohmann::json::array();
    if (!report.precision_defined) undefined.push_back("precision");
    if (!report.recall_defined) undefined.push_back("recall");
    if (!report.f1_defined) undefined.push_back("f1");
    if (!report.auc_defined) undefined.push_back("auc");
    doc["undefined"] = undefined;
    return doc.dump(2) + "\n";
}

}  // namespace plastiscan
