#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "plastiscan/cube_io.hpp"

namespace plastiscan {

struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fn = 0;

    std::uint64_t total() const { return tp + fp + tn + fn; }
    ConfusionCounts& operator+=(const ConfusionCounts& o);
    bool operator==(const ConfusionCounts&) const = default;
};

enum class Averaging { Binary, Weighted };

std::string averaging_name(Averaging a);

/// The five reported statistics plus confusion counts. Metrics whose
/// denominator vanished are reported as 0 with the matching *_defined flag
/// cleared instead of aborting the run.
struct MetricsReport {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double auc = 0.0;
    ConfusionCounts counts;
    Averaging averaging = Averaging::Weighted;
    bool precision_defined = true;
    bool recall_defined = true;
    bool f1_defined = true;
    bool auc_defined = false;  // set by set_auc
};

/// Count agreement over pixels where neither mask is the ignore code;
/// class 1 (plastic) is the positive class.
ConfusionCounts confusion(const LabelMask& pred, const LabelMask& truth);

/// Accuracy/precision/recall/F1 from counts. Binary treats class 1 as the
/// positive class. Weighted averages per-class statistics with class-support
/// weights: predicted supports for precision, truth supports for recall and
/// F1, which makes weighted precision and recall coincide with accuracy.
MetricsReport classification_metrics(const ConfusionCounts& counts, Averaging averaging);

/// Mann-Whitney AUC with 0.5 credit per tie, computed via rank sums in
/// O(N log N). Throws when only one class is present.
double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

void set_auc(MetricsReport& report, double auc);

/// Confusion counts from thresholded scores against {0,1} labels
/// (predicted class 1 iff score > threshold).
ConfusionCounts confusion_from_scores(std::span<const double> scores,
                                      std::span<const std::uint8_t> labels, double threshold);

/// Serialized as {model, modality, split, accuracy, ..., counts, averaging}.
std::string report_to_json(const MetricsReport& report, const std::string& model,
                           const std::string& modality, const std::string& split);

}  // namespace plastiscan
