#include "octseg/report/report.hpp"

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace octseg::report {

namespace fs = std::filesystem;
using objectives::MetricsReport;

namespace {

// One shared class->color mapping: class index spread over the jet LUT.
cv::Mat jet_mask(const LabelMask& mask, int num_classes) {
    cv::Mat gray(mask.height, mask.width, CV_8U);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            gray.at<uint8_t>(y, x) =
                static_cast<uint8_t>(std::lround(255.0 * mask.at(y, x) / (num_classes - 1)));
    cv::Mat color;
    cv::applyColorMap(gray, color, cv::COLORMAP_JET);
    return color;
}

cv::Mat gray_image(const Tensor& image) {
    const int H = image.dim(0), W = image.dim(1);
    cv::Mat gray(H, W, CV_8U);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const float v = image[(static_cast<int64_t>(y) * W + x) * image.dim(2)];
            gray.at<uint8_t>(y, x) = static_cast<uint8_t>(std::lround(255.0f * std::clamp(v, 0.0f, 1.0f)));
        }
    return gray;
}

void imwrite_or_throw(const fs::path& path, const cv::Mat& img) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), img)) throw IoError("cannot write image " + path.string());
}

}  // namespace

MetricsReport evaluate(const segnet::SegmentationModel& model,
                       const std::vector<dataio::PreprocessedSample>& samples,
                       const EvalOptions& opts) {
    if (samples.empty()) throw ArgumentError("cannot evaluate an empty sample set");
    if (opts.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    const auto& cfg = model.config();

    objectives::MetricAccumulator acc(cfg.num_classes);
    double loss_weighted = 0.0;
    int64_t pixels_total = 0;

    for (size_t start = 0; start < samples.size(); start += static_cast<size_t>(opts.batch_size)) {
        const size_t end = std::min(samples.size(), start + static_cast<size_t>(opts.batch_size));
        const int B = static_cast<int>(end - start);
        Tensor batch({B, cfg.height, cfg.width, cfg.channels});
        Tensor truth({B, cfg.height, cfg.width, cfg.num_classes});
        for (int b = 0; b < B; ++b) {
            const auto& s = samples[start + static_cast<size_t>(b)];
            if (s.image.size() != static_cast<int64_t>(cfg.height) * cfg.width * cfg.channels)
                throw ShapeError(s.source_id + ": sample does not match the model input " +
                                 s.image.shape_str());
            std::memcpy(batch.data() + static_cast<int64_t>(b) * s.image.size(), s.image.data(),
                        sizeof(float) * static_cast<size_t>(s.image.size()));
            std::memcpy(truth.data() + static_cast<int64_t>(b) * s.onehot.size(), s.onehot.data(),
                        sizeof(float) * static_cast<size_t>(s.onehot.size()));
        }
        segnet::ForwardTrace trace = model.forward(batch);
        const double batch_loss = objectives::hybrid_loss(truth, trace.output, opts.loss);
        const int64_t batch_pixels = static_cast<int64_t>(B) * cfg.height * cfg.width;
        loss_weighted += batch_loss * static_cast<double>(batch_pixels);
        pixels_total += batch_pixels;

        for (int b = 0; b < B; ++b) {
            Tensor one({cfg.height, cfg.width, cfg.num_classes});
            std::memcpy(one.data(), trace.output.data() + static_cast<int64_t>(b) * one.size(),
                        sizeof(float) * static_cast<size_t>(one.size()));
            acc.add(dataio::one_hot_decode(samples[start + static_cast<size_t>(b)].onehot),
                    segnet::argmax_mask(one));
        }
    }

    objectives::ClasswiseStats cls = acc.classwise();
    MetricsReport r;
    r.accuracy = acc.accuracy();
    r.dice = acc.mean_dice();
    r.iou = acc.mean_iou();
    r.loss = loss_weighted / static_cast<double>(pixels_total);
    r.per_class_iou = cls.iou;
    r.per_class_accuracy = cls.accuracy;
    r.per_class_present = std::vector<bool>(cls.present.begin(), cls.present.end());
    return r;
}

void render_comparison(const dataio::PreprocessedSample& sample, const LabelMask& prediction,
                       int num_classes, const fs::path& out_png) {
    LabelMask gt = dataio::one_hot_decode(sample.onehot);
    if (!gt.same_shape(prediction))
        throw ShapeError(sample.source_id + ": prediction " + std::to_string(prediction.height) +
                         "x" + std::to_string(prediction.width) + " does not match ground truth");

    cv::Mat input;
    cv::cvtColor(gray_image(sample.image), input, cv::COLOR_GRAY2BGR);
    cv::Mat panels[3] = {input, jet_mask(gt, num_classes), jet_mask(prediction, num_classes)};
    cv::Mat trip;
    cv::hconcat(panels, 3, trip);
    imwrite_or_throw(out_png, trip);
}

int64_t Misclassification::errors() const {
    int64_t n = 0;
    for (int64_t i = 0; i < error_grid.size(); ++i) n += error_grid.labels[static_cast<size_t>(i)];
    return n;
}

Misclassification misclassification_map(const LabelMask& gt, const LabelMask& pred,
                                        int num_classes) {
    if (!gt.same_shape(pred)) throw ShapeError("mask shapes differ in misclassification_map");
    Misclassification m;
    m.num_classes = num_classes;
    m.error_grid = LabelMask(gt.height, gt.width);
    m.confusion.assign(static_cast<size_t>(num_classes) * num_classes, 0);
    for (int64_t i = 0; i < gt.size(); ++i) {
        const uint8_t t = gt.labels[static_cast<size_t>(i)];
        const uint8_t p = pred.labels[static_cast<size_t>(i)];
        if (t >= num_classes || p >= num_classes)
            throw ValidationError("label outside [0, " + std::to_string(num_classes) + ")");
        ++m.confusion[static_cast<size_t>(t) * num_classes + p];
        m.error_grid.labels[static_cast<size_t>(i)] = t == p ? 0 : 1;
    }
    return m;
}

void render_error_map(const Misclassification& mis, const fs::path& out_png) {
    const auto& g = mis.error_grid;
    cv::Mat img(g.height, g.width, CV_8U);
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) img.at<uint8_t>(y, x) = g.at(y, x) ? 255 : 0;
    imwrite_or_throw(out_png, img);
}

std::vector<CurveSeries> curve_data(const std::vector<trainer::EpochLog>& history) {
    std::vector<CurveSeries> out(4);
    out[0].metric = "loss";
    out[1].metric = "accuracy";
    out[2].metric = "dice";
    out[3].metric = "iou";
    for (const auto& row : history) {
        out[0].train.push_back(row.loss);
        out[0].val.push_back(row.val_loss);
        out[1].train.push_back(row.accuracy);
        out[1].val.push_back(row.val_accuracy);
        out[2].train.push_back(row.dice);
        out[2].val.push_back(row.val_dice);
        out[3].train.push_back(row.iou);
        out[3].val.push_back(row.val_iou);
    }
    return out;
}

namespace {

void draw_curve_plot(const CurveSeries& series, const fs::path& path) {
    const int W = 720, H = 480, ml = 70, mr = 20, mt = 40, mb = 50;
    cv::Mat img(H, W, CV_8UC3, cv::Scalar(255, 255, 255));

    double lo = 1e300, hi = -1e300;
    for (double v : series.train) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (double v : series.val) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi <= lo) {  // flat series: pad so the line sits mid-plot
        hi = lo + (std::abs(lo) > 0 ? std::abs(lo) * 0.1 : 1.0);
        lo = lo - (hi - lo);
    }
    const auto n = static_cast<int>(series.train.size());
    auto px = [&](int i) {
        return n <= 1 ? (ml + (W - ml - mr) / 2)
                      : ml + static_cast<int>(std::lround(static_cast<double>(i) * (W - ml - mr - 1) /
                                                          (n - 1)));
    };
    auto py = [&](double v) {
        return (H - mb) - static_cast<int>(std::lround((v - lo) / (hi - lo) * (H - mt - mb - 1)));
    };

    // axes
    cv::line(img, {ml, mt}, {ml, H - mb}, {0, 0, 0}, 1);
    cv::line(img, {ml, H - mb}, {W - mr, H - mb}, {0, 0, 0}, 1);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", hi);
    cv::putText(img, buf, {6, mt + 6}, cv::FONT_HERSHEY_SIMPLEX, 0.4, {0, 0, 0}, 1);
    std::snprintf(buf, sizeof(buf), "%.4g", lo);
    cv::putText(img, buf, {6, H - mb}, cv::FONT_HERSHEY_SIMPLEX, 0.4, {0, 0, 0}, 1);
    cv::putText(img, "epoch", {W / 2 - 25, H - 14}, cv::FONT_HERSHEY_SIMPLEX, 0.5, {0, 0, 0}, 1);
    cv::putText(img, series.metric + " vs epoch", {ml, 24}, cv::FONT_HERSHEY_SIMPLEX, 0.6,
                {0, 0, 0}, 1);

    auto draw_series = [&](const std::vector<double>& v, const cv::Scalar& color) {
        for (size_t i = 0; i + 1 < v.size(); ++i)
            cv::line(img, {px(static_cast<int>(i)), py(v[i])},
                     {px(static_cast<int>(i + 1)), py(v[i + 1])}, color, 2);
        for (size_t i = 0; i < v.size(); ++i)
            cv::circle(img, {px(static_cast<int>(i)), py(v[i])}, 2, color, cv::FILLED);
    };
    draw_series(series.train, {180, 60, 20});  // blue-ish: training
    draw_series(series.val, {40, 40, 220});    // red-ish: validation
    cv::putText(img, "train", {W - 140, mt + 16}, cv::FONT_HERSHEY_SIMPLEX, 0.5, {180, 60, 20}, 1);
    cv::putText(img, "val", {W - 140, mt + 36}, cv::FONT_HERSHEY_SIMPLEX, 0.5, {40, 40, 220}, 1);

    imwrite_or_throw(path, img);
}

}  // namespace

void plot_training_curves(const std::vector<trainer::EpochLog>& history, const fs::path& dir) {
    if (history.empty()) throw ArgumentError("cannot plot an empty history");
    fs::create_directories(dir);
    for (const auto& series : curve_data(history)) draw_curve_plot(series, dir / (series.metric + ".png"));
}

EvaluationArtifacts write_reports(const segnet::SegmentationModel& model,
                                  const std::vector<dataio::PreprocessedSample>& samples,
                                  const std::vector<trainer::EpochLog>& history,
                                  const fs::path& root, const EvalOptions& opts) {
    EvaluationArtifacts art;
    art.metrics = evaluate(model, samples, opts);
    fs::create_directories(root);

    const fs::path metrics_path = root / "metrics.json";
    {
        std::ofstream out(metrics_path);
        if (!out) throw IoError("cannot write " + metrics_path.string());
        out << art.metrics.to_json().dump(2) << "\n";
    }
    art.files.push_back(metrics_path);

    const fs::path classwise_path = root / "classwise.csv";
    {
        std::ofstream out(classwise_path);
        if (!out) throw IoError("cannot write " + classwise_path.string());
        out << art.metrics.classwise_csv();
    }
    art.files.push_back(classwise_path);

    if (!history.empty()) {
        plot_training_curves(history, root / "curves");
        for (const char* name : {"loss", "accuracy", "dice", "iou"})
            art.files.push_back(root / "curves" / (std::string(name) + ".png"));
    }

    for (const auto& s : samples) {
        LabelMask pred = model.predict_mask(s.image);
        const fs::path cmp = root / "compare" / (s.source_id + ".png");
        render_comparison(s, pred, model.config().num_classes, cmp);
        art.files.push_back(cmp);

        Misclassification mis =
            misclassification_map(dataio::one_hot_decode(s.onehot), pred, model.config().num_classes);
        const fs::path err = root / "errors" / (s.source_id + ".png");
        render_error_map(mis, err);
        art.files.push_back(err);
    }

    for (const auto& f : art.files)
        if (!fs::exists(f) || fs::file_size(f) == 0)
            throw IoError("report artifact missing or empty: " + f.string());
    return art;
}

}  // namespace octseg::report
