#ifndef OCTSEG_OBJECTIVES_HPP
#define OCTSEG_OBJECTIVES_HPP

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "octseg/common.hpp"
#include "octseg/tensor.hpp"

namespace octseg::objectives {

// How the soft Dice term pools classes: one global overlap ratio, or the mean
// of per-class ratios (default; absent classes then contribute 1 through the
// smoothing term instead of dragging the score down).
enum class DiceReduction { Global, MeanOverClasses };

DiceReduction dice_reduction_from_string(const std::string& s);
std::string to_string(DiceReduction r);

struct LossConfig {
    double dice_weight = 0.5;  // lambda in L = CCE + lambda * (1 - Dice)
    double epsilon = 1e-6;     // smoothing in Dice, clip floor in CCE
    DiceReduction dice_reduction = DiceReduction::MeanOverClasses;

    void validate() const;  // dice_weight >= 0, epsilon > 0
};

void to_json(nlohmann::json& j, const LossConfig& c);
void from_json(const nlohmann::json& j, LossConfig& c);

// Soft losses over probability tensors. The trailing axis is the class axis;
// tensors must share shapes. Accumulation runs in double so the scalar values
// are stable enough for finite-difference checks.
double cce_loss(const Tensor& y_true, const Tensor& y_pred, const LossConfig& cfg = {});
double dice_coefficient(const Tensor& y_true, const Tensor& y_pred, const LossConfig& cfg = {});
double hybrid_loss(const Tensor& y_true, const Tensor& y_pred, const LossConfig& cfg = {});

// Analytic d(loss)/d(y_pred). The CCE clip zeroes the gradient below epsilon.
Tensor cce_grad(const Tensor& y_true, const Tensor& y_pred, const LossConfig& cfg = {});
Tensor dice_grad(const Tensor& y_true, const Tensor& y_pred, const LossConfig& cfg = {});
Tensor hybrid_grad(const Tensor& y_true, const Tensor& y_pred, const LossConfig& cfg = {});

// Hard-mask metrics.
double accuracy(const LabelMask& truth, const LabelMask& pred);
// Intersection-over-union of class `class_id`; a class absent from both masks
// scores 1.0 (the flag lives in ClasswiseStats).
double iou(const LabelMask& truth, const LabelMask& pred, int class_id, int num_classes = 8);

struct ClasswiseStats {
    std::vector<double> iou;       // per class
    std::vector<double> dice;      // 2*IoU/(1+IoU) by construction
    std::vector<double> accuracy;  // per-class recall: correct pixels / ground-truth pixels
    std::vector<bool> present;     // class occurs in truth or prediction
};

// Streaming pixel-count accumulator shared by evaluation and the per-epoch
// training metrics. Counts are exact integers, so derived metrics are
// reproducible to the last bit.
class MetricAccumulator {
public:
    explicit MetricAccumulator(int num_classes = 8);

    void add(const LabelMask& truth, const LabelMask& pred);
    void reset();

    int64_t total_pixels() const { return total_; }
    double accuracy() const;
    double mean_iou() const;   // unweighted over present classes
    double mean_dice() const;  // unweighted over present classes
    ClasswiseStats classwise() const;
    int num_classes() const { return num_classes_; }

private:
    int num_classes_;
    int64_t correct_ = 0;
    int64_t total_ = 0;
    std::vector<int64_t> inter_;   // per class: pixels where truth == pred == c
    std::vector<int64_t> truth_;   // per class: truth pixels
    std::vector<int64_t> pred_;    // per class: predicted pixels
};

struct MetricsReport {
    double accuracy = 0.0;
    double dice = 0.0;
    double iou = 0.0;
    double loss = 0.0;
    std::vector<double> per_class_iou;
    std::vector<double> per_class_accuracy;  // recall, as fractions in [0,1]
    std::vector<bool> per_class_present;

    // {"Accuracy": ..., "Dice Coefficient": ..., "Jaccard Index (IoU)": ...,
    //  "Loss": ...} plus the class-wise vectors.
    nlohmann::json to_json() const;
    // Two-row layout: metric names down the first column, one column per class.
    // IoU as a fraction, accuracy in percent.
    std::string classwise_csv() const;
    std::string summary_csv() const;  // Metric,Value rows with the JSON names
};

}  // namespace octseg::objectives

#endif
