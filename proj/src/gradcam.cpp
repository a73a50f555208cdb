#include "octseg/xai/gradcam.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

namespace octseg::xai {

namespace fs = std::filesystem;

namespace {

// (H,W,K) view of a rank-3 or single-sample rank-4 map.
void spatial_dims(const Tensor& t, int& H, int& W, int& K, const char* what) {
    if (t.rank() == 3) {
        H = t.dim(0), W = t.dim(1), K = t.dim(2);
    } else if (t.rank() == 4 && t.dim(0) == 1) {
        H = t.dim(1), W = t.dim(2), K = t.dim(3);
    } else {
        throw ShapeError(std::string(what) + ": expected (H,W,K) or (1,H,W,K), got " +
                         t.shape_str());
    }
}

}  // namespace

double class_score(const Tensor& output, int class_id) {
    int H, W, K;
    spatial_dims(output, H, W, K, "class_score");
    if (class_id < 0 || class_id >= K)
        throw ArgumentError("class " + std::to_string(class_id) + " outside [0, " +
                            std::to_string(K) + ")");
    double sum = 0.0;
    const float* p = output.data();
    const int64_t pixels = static_cast<int64_t>(H) * W;
    for (int64_t i = 0; i < pixels; ++i) sum += p[i * K + class_id];
    return sum;
}

std::vector<double> compute_alpha(const Tensor& gradient) {
    if (gradient.empty()) throw ArgumentError("empty gradient map");
    int H, W, K;
    spatial_dims(gradient, H, W, K, "compute_alpha");
    std::vector<double> alpha(static_cast<size_t>(K), 0.0);
    const float* p = gradient.data();
    const int64_t pixels = static_cast<int64_t>(H) * W;
    for (int64_t i = 0; i < pixels; ++i)
        for (int k = 0; k < K; ++k) alpha[static_cast<size_t>(k)] += p[i * K + k];
    for (auto& a : alpha) a /= static_cast<double>(pixels);
    return alpha;
}

Tensor compute_heatmap_raw(const Tensor& features, const std::vector<double>& alpha) {
    int H, W, K;
    spatial_dims(features, H, W, K, "compute_heatmap_raw");
    if (static_cast<size_t>(K) != alpha.size())
        throw ShapeError("alpha has " + std::to_string(alpha.size()) + " weights for " +
                         std::to_string(K) + " channels");
    Tensor raw({H, W});
    const float* p = features.data();
    for (int64_t i = 0; i < static_cast<int64_t>(H) * W; ++i) {
        double s = 0.0;
        for (int k = 0; k < K; ++k) s += alpha[static_cast<size_t>(k)] * p[i * K + k];
        raw[i] = s > 0.0 ? static_cast<float>(s) : 0.0f;
    }
    return raw;
}

Tensor finalize_heatmap(const Tensor& raw, int out_h, int out_w, double* max_activation) {
    if (raw.rank() != 2) throw ShapeError("raw heatmap must be rank 2, got " + raw.shape_str());
    Tensor up({out_h, out_w});
    if (raw.dim(0) == out_h && raw.dim(1) == out_w) {
        std::copy(raw.data(), raw.data() + raw.size(), up.data());
    } else {
        const cv::Mat src(raw.dim(0), raw.dim(1), CV_32F, const_cast<float*>(raw.data()));
        cv::Mat dst(out_h, out_w, CV_32F, up.data());
        cv::resize(src, dst, dst.size(), 0, 0, cv::INTER_LINEAR);
    }
    float mx = 0.0f;
    for (int64_t i = 0; i < up.size(); ++i) mx = std::max(mx, up[i]);
    if (mx > 0.0f)
        for (int64_t i = 0; i < up.size(); ++i) up[i] /= mx;
    if (max_activation) *max_activation = mx > 0.0f ? 1.0 : 0.0;
    return up;
}

double mean_intensity(const Tensor& heatmap) {
    if (heatmap.empty()) throw ArgumentError("empty heatmap");
    double sum = 0.0;
    for (int64_t i = 0; i < heatmap.size(); ++i) sum += heatmap[i];
    return sum / static_cast<double>(heatmap.size());
}

GradCamResult gradcam(const segnet::SegmentationModel& model, const Tensor& image,
                      const std::string& layer_name, int class_id, const GradCamOptions& opts) {
    const auto cg = model.class_gradient(image, layer_name, class_id, opts.use_logits);
    GradCamResult r;
    r.class_id = class_id;
    r.layer = layer_name;
    r.alpha = compute_alpha(cg.gradient);
    const Tensor raw = compute_heatmap_raw(cg.features, r.alpha);
    r.heatmap = finalize_heatmap(raw, model.config().height, model.config().width,
                                 &r.max_activation);
    r.mean_intensity = mean_intensity(r.heatmap);
    double asum = 0.0;
    for (double a : r.alpha) asum += a;
    r.feature_importance = asum / static_cast<double>(r.alpha.size());
    return r;
}

std::vector<GradCamResult> multi_class_gradcam(const segnet::SegmentationModel& model,
                                               const Tensor& image, const std::string& layer_name,
                                               const GradCamOptions& opts) {
    std::vector<GradCamResult> out;
    out.reserve(static_cast<size_t>(model.config().num_classes));
    for (int c = 0; c < model.config().num_classes; ++c)
        out.push_back(gradcam(model, image, layer_name, c, opts));
    return out;
}

void render_overlay(const Tensor& heatmap, const Tensor& image, const fs::path& out_png) {
    if (heatmap.rank() != 2) throw ShapeError("heatmap must be rank 2, got " + heatmap.shape_str());
    int ih, iw, ic;
    spatial_dims(image, ih, iw, ic, "render_overlay");
    if (ih != heatmap.dim(0) || iw != heatmap.dim(1))
        throw ShapeError("heatmap " + heatmap.shape_str() + " does not cover the scan " +
                         image.shape_str());

    cv::Mat gray(ih, iw, CV_8U);
    const float* ip = image.data();
    for (int y = 0; y < ih; ++y)
        for (int x = 0; x < iw; ++x)
            gray.at<uint8_t>(y, x) = static_cast<uint8_t>(
                std::lround(255.0f * std::clamp(ip[(static_cast<int64_t>(y) * iw + x) * ic], 0.0f, 1.0f)));
    cv::Mat gray3;
    cv::cvtColor(gray, gray3, cv::COLOR_GRAY2BGR);

    cv::Mat hm8(ih, iw, CV_8U);
    for (int y = 0; y < ih; ++y)
        for (int x = 0; x < iw; ++x)
            hm8.at<uint8_t>(y, x) = static_cast<uint8_t>(
                std::lround(255.0f * std::clamp(heatmap[static_cast<int64_t>(y) * iw + x], 0.0f, 1.0f)));
    cv::Mat jet;
    cv::applyColorMap(hm8, jet, cv::COLORMAP_JET);

    cv::Mat blended;
    cv::addWeighted(gray3, 0.6, jet, 0.4, 0.0, blended);
    if (out_png.has_parent_path()) fs::create_directories(out_png.parent_path());
    if (!cv::imwrite(out_png.string(), blended))
        throw IoError("cannot write overlay " + out_png.string());
}

XaiArtifacts export_gradcam(const segnet::SegmentationModel& model,
                            const dataio::PreprocessedSample& sample,
                            const std::vector<std::string>& layers, const fs::path& out_dir,
                            const GradCamOptions& opts) {
    if (layers.empty()) throw ArgumentError("no layers requested");
    for (const auto& l : layers)
        if (!model.has_layer(l)) throw LookupError("unknown layer: " + l);
    fs::create_directories(out_dir);

    XaiArtifacts art;
    art.stats_csv = out_dir / "gradcam_stats.csv";
    std::ofstream csv(art.stats_csv);
    if (!csv) throw IoError("cannot write " + art.stats_csv.string());
    csv << "layer,class,feature_importance,max_activation,mean_intensity\n";

    for (const auto& layer : layers) {
        auto results = multi_class_gradcam(model, sample.image, layer, opts);
        for (auto& r : results) {
            const fs::path png = out_dir / (sample.source_id + "_class" +
                                            std::to_string(r.class_id) + "_" + layer + ".png");
            render_overlay(r.heatmap, sample.image, png);
            art.overlays.push_back(png);

            char buf[160];
            std::snprintf(buf, sizeof(buf), "%s,%d,%.6f,%.3f,%.3f\n", layer.c_str(), r.class_id,
                          r.feature_importance, r.max_activation, r.mean_intensity);
            csv << buf;
            art.results.push_back(std::move(r));
        }
    }
    csv.flush();
    if (!csv) throw IoError("failed writing " + art.stats_csv.string());
    return art;
}

}  // namespace octseg::xai
