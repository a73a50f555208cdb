#include "octseg/objectives/objectives.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>

namespace octseg::objectives {

using nlohmann::json;

DiceReduction dice_reduction_from_string(const std::string& s) {
    if (s == "global") return DiceReduction::Global;
    if (s == "mean_over_classes") return DiceReduction::MeanOverClasses;
    throw ConfigError("unknown dice_reduction '" + s + "' (expected global or mean_over_classes)");
}

std::string to_string(DiceReduction r) {
    return r == DiceReduction::Global ? "global" : "mean_over_classes";
}

void LossConfig::validate() const {
    if (dice_weight < 0.0) throw ConfigError("dice_weight must be >= 0");
    if (epsilon <= 0.0) throw ConfigError("epsilon must be > 0");
}

void to_json(json& j, const LossConfig& c) {
    j = json{{"dice_weight", c.dice_weight},
             {"epsilon", c.epsilon},
             {"dice_reduction", to_string(c.dice_reduction)}};
}

void from_json(const json& j, LossConfig& c) {
    LossConfig d;
    c.dice_weight = j.value("dice_weight", d.dice_weight);
    c.epsilon = j.value("epsilon", d.epsilon);
    c.dice_reduction = dice_reduction_from_string(j.value("dice_reduction", to_string(d.dice_reduction)));
}

namespace {

int check_pair(const Tensor& y_true, const Tensor& y_pred) {
    require_same_shape(y_true, y_pred, "loss inputs");
    if (y_true.rank() < 2) throw ShapeError("loss inputs need a trailing class axis, got " + y_true.shape_str());
    return y_true.dim(y_true.rank() - 1);
}

}  // namespace

double cce_loss(const Tensor& y_true, const Tensor& y_pred, const LossConfig& cfg) {
    cfg.validate();
    const int C = check_pair(y_true, y_pred);
    const int64_t pixels = y_true.size() / C;
    double sum = 0.0;
    for (int64_t i = 0; i < y_true.size(); ++i) {
        const double y = y_true[i];
        if (y == 0.0) continue;
        double p = y_pred[i];
        if (p < cfg.epsilon) p = cfg.epsilon;
        if (p > 1.0) p = 1.0;
        sum -= y * std::log(p);
    }
    return sum / static_cast<double>(pixels);
}

Tensor cce_grad(const Tensor& y_true, const Tensor& y_pred, const LossConfig& cfg) {
    cfg.validate();
    const int C = check_pair(y_true, y_pred);
    const int64_t pixels = y_true.size() / C;
    Tensor g(y_true.shape());
    const double inv_n = 1.0 / static_cast<double>(pixels);
    for (int64_t i = 0; i < y_true.size(); ++i) {
        const double y = y_true[i];
        const double p = y_pred[i];
        // clip is flat below epsilon and above 1, so the gradient vanishes there
        if (y == 0.0 || p < cfg.epsilon || p > 1.0) continue;
        g[i] = static_cast<float>(-y / p * inv_n);
    }
    return g;
}

double dice_coefficient(const Tensor& y_true, const Tensor& y_pred, const LossConfig& cfg) {
    cfg.validate();
    const int C = check_pair(y_true, y_pred);
    if (cfg.dice_reduction == DiceReduction::Global) {
        double inter = 0.0, total = 0.0;
        for (int64_t i = 0; i < y_true.size(); ++i) {
            inter += static_cast<double>(y_true[i]) * y_pred[i];
            total += static_cast<double>(y_true[i]) + y_pred[i];
        }
        return (2.0 * inter + cfg.epsilon) / (total + cfg.epsilon);
    }
    std::vector<double> inter(static_cast<size_t>(C), 0.0), total(static_cast<size_t>(C), 0.0);
    for (int64_t i = 0; i < y_true.size(); ++i) {
        const auto c = static_cast<size_t>(i % C);
        inter[c] += static_cast<double>(y_true[i]) * y_pred[i];
        total[c] += static_cast<double>(y_true[i]) + y_pred[i];
    }
    double sum = 0.0;
    for (int c = 0; c < C; ++c)
        sum += (2.0 * inter[static_cast<size_t>(c)] + cfg.epsilon) /
               (total[static_cast<size_t>(c)] + cfg.epsilon);
    return sum / C;
}

Tensor dice_grad(const Tensor& y_true, const Tensor& y_pred, const LossConfig& cfg) {
    cfg.validate();
    const int C = check_pair(y_true, y_pred);
    Tensor g(y_true.shape());
    if (cfg.dice_reduction == DiceReduction::Global) {
        double inter = 0.0, total = 0.0;
        for (int64_t i = 0; i < y_true.size(); ++i) {
            inter += static_cast<double>(y_true[i]) * y_pred[i];
            total += static_cast<double>(y_true[i]) + y_pred[i];
        }
        const double num = 2.0 * inter + cfg.epsilon;
        const double den = total + cfg.epsilon;
        // d/dp (num/den) = (2*y*den - num) / den^2
        const double inv_den2 = 1.0 / (den * den);
        for (int64_t i = 0; i < y_true.size(); ++i)
            g[i] = static_cast<float>((2.0 * y_true[i] * den - num) * inv_den2);
        return g;
    }
    std::vector<double> inter(static_cast<size_t>(C), 0.0), total(static_cast<size_t>(C), 0.0);
    for (int64_t i = 0; i < y_true.size(); ++i) {
        const auto c = static_cast<size_t>(i % C);
        inter[c] += static_cast<double>(y_true[i]) * y_pred[i];
        total[c] += static_cast<double>(y_true[i]) + y_pred[i];
    }
    std::vector<double> num(static_cast<size_t>(C)), inv_den2(static_cast<size_t>(C)), den(static_cast<size_t>(C));
    for (size_t c = 0; c < static_cast<size_t>(C); ++c) {
        num[c] = 2.0 * inter[c] + cfg.epsilon;
        den[c] = total[c] + cfg.epsilon;
        inv_den2[c] = 1.0 / (den[c] * den[c]);
    }
    for (int64_t i = 0; i < y_true.size(); ++i) {
        const auto c = static_cast<size_t>(i % C);
        g[i] = static_cast<float>((2.0 * y_true[i] * den[c] - num[c]) * inv_den2[c] / C);
    }
    return g;
}

double hybrid_loss(const Tensor& y_true, const Tensor& y_pred, const LossConfig& cfg) {
    return cce_loss(y_true, y_pred, cfg) +
           cfg.dice_weight * (1.0 - dice_coefficient(y_true, y_pred, cfg));
}

Tensor hybrid_grad(const Tensor& y_true, const Tensor& y_pred, const LossConfig& cfg) {
    Tensor g = cce_grad(y_true, y_pred, cfg);
    Tensor d = dice_grad(y_true, y_pred, cfg);
    for (int64_t i = 0; i < g.size(); ++i)
        g[i] = static_cast<float>(g[i] - cfg.dice_weight * d[i]);
    return g;
}

double accuracy(const LabelMask& truth, const LabelMask& pred) {
    if (!truth.same_shape(pred))
        throw ShapeError("mask shapes differ: " + std::to_string(truth.height) + "x" +
                         std::to_string(truth.width) + " vs " + std::to_string(pred.height) + "x" +
                         std::to_string(pred.width));
    if (truth.size() == 0) throw ShapeError("empty masks");
    int64_t correct = 0;
    for (int64_t i = 0; i < truth.size(); ++i)
        if (truth.labels[static_cast<size_t>(i)] == pred.labels[static_cast<size_t>(i)]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(truth.size());
}

double iou(const LabelMask& truth, const LabelMask& pred, int class_id, int num_classes) {
    if (class_id < 0 || class_id >= num_classes)
        throw ArgumentError("class_id " + std::to_string(class_id) + " outside [0, " +
                            std::to_string(num_classes) + ")");
    MetricAccumulator acc(num_classes);
    acc.add(truth, pred);
    return acc.classwise().iou[static_cast<size_t>(class_id)];
}

MetricAccumulator::MetricAccumulator(int num_classes) : num_classes_(num_classes) {
    if (num_classes < 2) throw ArgumentError("need at least 2 classes");
    reset();
}

void MetricAccumulator::reset() {
    correct_ = 0;
    total_ = 0;
    inter_.assign(static_cast<size_t>(num_classes_), 0);
    truth_.assign(static_cast<size_t>(num_classes_), 0);
    pred_.assign(static_cast<size_t>(num_classes_), 0);
}

void MetricAccumulator::add(const LabelMask& truth, const LabelMask& pred) {
    if (!truth.same_shape(pred)) throw ShapeError("mask shapes differ in metric accumulation");
    for (int64_t i = 0; i < truth.size(); ++i) {
        const uint8_t t = truth.labels[static_cast<size_t>(i)];
        const uint8_t p = pred.labels[static_cast<size_t>(i)];
        if (t >= num_classes_ || p >= num_classes_)
            throw ValidationError("label " + std::to_string(std::max(t, p)) + " outside [0, " +
                                  std::to_string(num_classes_) + ")");
        ++truth_[t];
        ++pred_[p];
        if (t == p) {
            ++inter_[t];
            ++correct_;
        }
    }
    total_ += truth.size();
}

double MetricAccumulator::accuracy() const {
    if (total_ == 0) throw ValidationError("no pixels accumulated");
    return static_cast<double>(correct_) / static_cast<double>(total_);
}

ClasswiseStats MetricAccumulator::classwise() const {
    ClasswiseStats s;
    const auto n = static_cast<size_t>(num_classes_);
    s.iou.resize(n);
    s.dice.resize(n);
    s.accuracy.resize(n);
    s.present.resize(n);
    for (size_t c = 0; c < n; ++c) {
        const int64_t uni = truth_[c] + pred_[c] - inter_[c];
        s.present[c] = uni > 0;
        if (uni == 0) {
            // class appears in neither mask: perfect agreement by convention
            s.iou[c] = 1.0;
            s.dice[c] = 1.0;
            s.accuracy[c] = 1.0;
            continue;
        }
        s.iou[c] = static_cast<double>(inter_[c]) / static_cast<double>(uni);
        s.dice[c] = 2.0 * static_cast<double>(inter_[c]) /
                    static_cast<double>(truth_[c] + pred_[c]);
        s.accuracy[c] = truth_[c] > 0
                            ? static_cast<double>(inter_[c]) / static_cast<double>(truth_[c])
                            : 0.0;  // predicted but never true: nothing recalled
    }
    return s;
}

double MetricAccumulator::mean_iou() const {
    ClasswiseStats s = classwise();
    double sum = 0.0;
    int present = 0;
    for (size_t c = 0; c < s.iou.size(); ++c)
        if (s.present[c]) {
            sum += s.iou[c];
            ++present;
        }
    if (present == 0) throw ValidationError("no classes present");
    return sum / present;
}

double MetricAccumulator::mean_dice() const {
    ClasswiseStats s = classwise();
    double sum = 0.0;
    int present = 0;
    for (size_t c = 0; c < s.dice.size(); ++c)
        if (s.present[c]) {
            sum += s.dice[c];
            ++present;
        }
    if (present == 0) throw ValidationError("no classes present");
    return sum / present;
}

json MetricsReport::to_json() const {
    json j;
    j["Accuracy"] = accuracy;
    j["Dice Coefficient"] = dice;
    j["Jaccard Index (IoU)"] = iou;
    j["Loss"] = loss;
    j["per_class_iou"] = per_class_iou;
    j["per_class_accuracy"] = per_class_accuracy;
    j["per_class_present"] = per_class_present;
    return j;
}

std::string MetricsReport::classwise_csv() const {
    std::string out = "Segmentation Class";
    for (size_t c = 0; c < per_class_iou.size(); ++c) out += "," + std::to_string(c);
    out += "\nIoU Score";
    char buf[32];
    for (double v : per_class_iou) {
        std::snprintf(buf, sizeof(buf), ",%.4f", v);
        out += buf;
    }
    out += "\nSegmentation Accuracy (%)";
    for (double v : per_class_accuracy) {
        std::snprintf(buf, sizeof(buf), ",%.2f", 100.0 * v);
        out += buf;
    }
    out += "\n";
    return out;
}

std::string MetricsReport::summary_csv() const {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "Metric,Value\nAccuracy,%.6f\nDice Coefficient,%.6f\n"
                  "Jaccard Index (IoU),%.6f\nLoss,%.6f\n",
                  accuracy, dice, iou, loss);
    return buf;
}

}  // namespace octseg::objectives
