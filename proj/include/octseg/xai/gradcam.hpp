#ifndef OCTSEG_XAI_GRADCAM_HPP
#define OCTSEG_XAI_GRADCAM_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "octseg/dataio/dataset.hpp"
#include "octseg/segnet/model.hpp"
#include "octseg/tensor.hpp"

namespace octseg::xai {

struct GradCamOptions {
    // Score the raw class logits instead of the softmax probabilities.
    bool use_logits = false;
};

struct GradCamResult {
    int class_id = 0;
    std::string layer;
    std::vector<double> alpha;        // gradient global-average-pool, one weight per channel
    Tensor heatmap;                   // (H, W) at the model input size, values in [0, 1]
    double max_activation = 0.0;      // 1.0 unless the raw map is identically zero
    double mean_intensity = 0.0;      // arithmetic mean of heatmap pixels
    double feature_importance = 0.0;  // scalar summary of alpha: mean over channels
};

// Y^c: the class-c output summed over every pixel of the map (rank 3 or 4).
double class_score(const Tensor& output, int class_id);

// Per-channel mean of dY^c/dA over the spatial grid; accepts (H,W,K) or (1,H,W,K).
std::vector<double> compute_alpha(const Tensor& gradient);

// ReLU(sum_k alpha_k * A_k) on the layer grid, before any resizing.
Tensor compute_heatmap_raw(const Tensor& features, const std::vector<double>& alpha);

// Bilinear upsample to (out_h, out_w), then scale so the max is exactly 1;
// identically-zero maps stay zero. Reports which case applied.
Tensor finalize_heatmap(const Tensor& raw, int out_h, int out_w, double* max_activation = nullptr);

double mean_intensity(const Tensor& heatmap);

GradCamResult gradcam(const segnet::SegmentationModel& model, const Tensor& image,
                      const std::string& layer_name, int class_id,
                      const GradCamOptions& opts = {});

// One independent gradient pass per class, results indexed by class id.
std::vector<GradCamResult> multi_class_gradcam(const segnet::SegmentationModel& model,
                                               const Tensor& image, const std::string& layer_name,
                                               const GradCamOptions& opts = {});

// 0.6 * grayscale scan + 0.4 * jet(heatmap), written as a PNG.
void render_overlay(const Tensor& heatmap, const Tensor& image,
                    const std::filesystem::path& out_png);

struct XaiArtifacts {
    std::vector<std::filesystem::path> overlays;  // <source_id>_class<k>_<layer>.png
    std::filesystem::path stats_csv;
    std::vector<GradCamResult> results;  // layer-major, class-minor
};

// Per-class overlays for every requested layer plus one statistics table
// (layer, class, feature importance, max activation, mean intensity).
XaiArtifacts export_gradcam(const segnet::SegmentationModel& model,
                            const dataio::PreprocessedSample& sample,
                            const std::vector<std::string>& layers,
                            const std::filesystem::path& out_dir,
                            const GradCamOptions& opts = {});

}  // namespace octseg::xai

#endif
