#ifndef OCTSEG_REPORT_HPP
#define OCTSEG_REPORT_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "octseg/dataio/dataset.hpp"
#include "octseg/objectives/objectives.hpp"
#include "octseg/segnet/model.hpp"
#include "octseg/trainer/callbacks.hpp"

namespace octseg::report {

struct EvalOptions {
    int batch_size = 32;
    objectives::LossConfig loss;
};

// Micro-aggregated (pixel-pooled) metrics over the whole sample set: hybrid
// loss, global accuracy, and mean-over-present-class Dice/IoU, plus the
// class-wise vectors. Pure function of (model parameters, samples).
objectives::MetricsReport evaluate(const segnet::SegmentationModel& model,
                                   const std::vector<dataio::PreprocessedSample>& samples,
                                   const EvalOptions& opts = {});

// input | ground truth | prediction, side by side. Masks are jet-colored over
// the class index with one shared mapping, the input is plain grayscale.
void render_comparison(const dataio::PreprocessedSample& sample, const LabelMask& prediction,
                       int num_classes, const std::filesystem::path& out_png);

struct Misclassification {
    LabelMask error_grid;             // 1 where labels differ
    int num_classes = 0;
    std::vector<int64_t> confusion;   // row = true class, col = predicted

    int64_t count(int true_class, int predicted) const {
        return confusion[static_cast<size_t>(true_class) * num_classes + predicted];
    }
    int64_t errors() const;
};

Misclassification misclassification_map(const LabelMask& gt, const LabelMask& pred,
                                        int num_classes = 8);
void render_error_map(const Misclassification& mis, const std::filesystem::path& out_png);

// The numeric series behind the four curve plots, exposed so tests can check
// them against the parsed CSV history.
struct CurveSeries {
    std::string metric;  // loss | accuracy | dice | iou
    std::vector<double> train;
    std::vector<double> val;
};
std::vector<CurveSeries> curve_data(const std::vector<trainer::EpochLog>& history);

// Writes <dir>/loss.png, accuracy.png, dice.png, iou.png (train + validation
// series per plot).
void plot_training_curves(const std::vector<trainer::EpochLog>& history,
                          const std::filesystem::path& dir);

struct EvaluationArtifacts {
    objectives::MetricsReport metrics;
    std::vector<std::filesystem::path> files;  // everything written
};

// Full report layout under `root`: metrics.json, classwise.csv, curves/*.png
// (when history is non-empty), compare/<source_id>.png, errors/<source_id>.png.
EvaluationArtifacts write_reports(const segnet::SegmentationModel& model,
                                  const std::vector<dataio::PreprocessedSample>& samples,
                                  const std::vector<trainer::EpochLog>& history,
                                  const std::filesystem::path& root, const EvalOptions& opts = {});

}  // namespace octseg::report

#endif
