// Acceptance suite: one line per criterion, nonzero exit iff any criterion
// fails. Each criterion re-derives its expected values independently of the
// library code under test (confusion-matrix counting, finite differences,
// brute-force loops), so a pass means agreement between two implementations.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "octseg/cli/cli.hpp"
#include "octseg/dataio/cache.hpp"
#include "octseg/dataio/dataset.hpp"
#include "octseg/dataio/npy.hpp"
#include "octseg/objectives/objectives.hpp"
#include "octseg/report/report.hpp"
#include "octseg/segnet/model.hpp"
#include "octseg/trainer/callbacks.hpp"
#include "octseg/trainer/trainer.hpp"
#include "octseg/xai/gradcam.hpp"

using namespace octseg;
namespace fs = std::filesystem;

namespace {

struct Check {
    bool ok = true;
    std::string detail;

    void fail(const std::string& msg) {
        if (ok) detail = msg;  // keep the first failure
        ok = false;
    }
    void expect(bool cond, const std::string& msg) {
        if (!cond) fail(msg);
    }
    void note(const std::string& msg) {
        if (ok && detail.empty()) detail = msg;
    }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

fs::path scratch(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("octseg_accept_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// ---------------------------------------------------------------------------
// 1. accuracy / Dice / IoU against a from-scratch confusion-matrix count

Check metric_oracle() {
    Check c;
    const int C = 8, H = 8, W = 8;
    Rng rng(1001);
    objectives::MetricAccumulator streaming(C);
    std::vector<int64_t> pooled(static_cast<size_t>(C) * C, 0);
    double worst = 0.0;

    for (int trial = 0; trial < 1000; ++trial) {
        LabelMask gt(H, W), pred(H, W);
        for (auto& v : gt.labels) v = static_cast<uint8_t>(rng.next_below(C));
        for (auto& v : pred.labels) v = static_cast<uint8_t>(rng.next_below(C));

        // oracle: one confusion matrix, every metric read off its counts
        std::vector<int64_t> conf(static_cast<size_t>(C) * C, 0);
        for (int64_t i = 0; i < gt.size(); ++i)
            conf[static_cast<size_t>(gt.labels[i]) * C + pred.labels[i]]++;
        for (size_t i = 0; i < conf.size(); ++i) pooled[i] += conf[i];

        int64_t diag = 0;
        for (int k = 0; k < C; ++k) diag += conf[static_cast<size_t>(k) * C + k];
        const double acc_ref = static_cast<double>(diag) / gt.size();

        double iou_sum = 0, dice_sum = 0;
        int present = 0;
        std::vector<double> iou_ref(C, 1.0);
        for (int k = 0; k < C; ++k) {
            int64_t row = 0, col = 0;
            for (int j = 0; j < C; ++j) {
                row += conf[static_cast<size_t>(k) * C + j];
                col += conf[static_cast<size_t>(j) * C + k];
            }
            if (row + col == 0) continue;
            const int64_t tp = conf[static_cast<size_t>(k) * C + k];
            iou_ref[k] = static_cast<double>(tp) / static_cast<double>(row + col - tp);
            iou_sum += iou_ref[k];
            dice_sum += 2.0 * tp / static_cast<double>(row + col);
            ++present;
        }

        objectives::MetricAccumulator acc(C);
        acc.add(gt, pred);
        streaming.add(gt, pred);

        const double d1 = std::abs(acc.accuracy() - acc_ref);
        const double d2 = std::abs(acc.mean_iou() - iou_sum / present);
        const double d3 = std::abs(acc.mean_dice() - dice_sum / present);
        worst = std::max({worst, d1, d2, d3});
        const auto cw = acc.classwise();
        for (int k = 0; k < C; ++k)
            if (cw.present[k]) worst = std::max(worst, std::abs(cw.iou[k] - iou_ref[k]));
        if (worst > 1e-12) {
            c.fail("trial " + std::to_string(trial) + " deviates by " + fmt("%.3e", worst));
            return c;
        }
    }

    // the streaming accumulator must equal the pooled confusion matrix too
    int64_t diag = 0, total = 0;
    for (int k = 0; k < C; ++k) diag += pooled[static_cast<size_t>(k) * C + k];
    for (int64_t v : pooled) total += v;
    c.expect(std::abs(streaming.accuracy() - static_cast<double>(diag) / total) <= 1e-12,
             "streaming accuracy drifts from pooled counts");
    c.note("1000 pairs, max deviation " + fmt("%.1e", worst));
    return c;
}

// ---------------------------------------------------------------------------
// 2. analytic hybrid-loss gradient against realized-step central differences

Check loss_gradient() {
    Check c;
    objectives::LossConfig cfg;
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        Rng rng(2000 + trial);
        Tensor yt({4, 4, 8}), yp({4, 4, 8});
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) {
                const int hot = static_cast<int>(rng.next_below(8));
                double z[8], zmax = -1e9, sum = 0;
                for (int k = 0; k < 8; ++k) zmax = std::max(zmax, z[k] = rng.uniform(-2.0, 2.0));
                for (int k = 0; k < 8; ++k) sum += (z[k] = std::exp(z[k] - zmax));
                for (int k = 0; k < 8; ++k) {
                    yt.at(y, x, k) = (k == hot) ? 1.0f : 0.0f;
                    yp.at(y, x, k) = static_cast<float>(z[k] / sum);
                }
            }

        const Tensor g = objectives::hybrid_grad(yt, yp, cfg);
        for (int64_t i = 0; i < yp.size(); ++i) {
            const float x0 = yp[i];
            const float xp = x0 + 1e-5f, xm = x0 - 1e-5f;
            yp[i] = xp;
            const double lp = objectives::hybrid_loss(yt, yp, cfg);
            yp[i] = xm;
            const double lm = objectives::hybrid_loss(yt, yp, cfg);
            yp[i] = x0;
            const double fd = (lp - lm) / (static_cast<double>(xp) - static_cast<double>(xm));
            const double rel = std::abs(g[i] - fd) / std::max(1.0, std::abs(fd));
            worst = std::max(worst, rel);
            if (rel >= 1e-4) {
                c.fail("trial " + std::to_string(trial) + " element " + std::to_string(i) +
                       ": rel error " + fmt("%.3e", rel));
                return c;
            }
        }
    }
    c.note("100 trials, worst rel error " + fmt("%.1e", worst));
    return c;
}

// ---------------------------------------------------------------------------
// 3. default architecture: 256 -> 8 bottleneck, 256x256x8 softmax output

Check shape_suite() {
    Check c;
    for (auto mode : {segnet::DecoderMode::TransposedConvSkip, segnet::DecoderMode::IndexUnpool}) {
        segnet::ArchitectureConfig cfg;  // 256x256x1 -> 8 classes
        cfg.decoder_mode = mode;
        const auto model = segnet::SegmentationModel::build(cfg);

        Tensor batch({1, cfg.height, cfg.width, cfg.channels});
        Rng rng(31);
        for (int64_t i = 0; i < batch.size(); ++i)
            batch[i] = static_cast<float>(rng.next_double());
        const auto trace = model.forward(batch, {"max_pooling2d_4"});

        const Tensor& bottleneck = trace.features.at("max_pooling2d_4");
        c.expect(bottleneck.dim(1) == 8 && bottleneck.dim(2) == 8,
                 to_string(mode) + ": bottleneck is " + std::to_string(bottleneck.dim(1)) + "x" +
                     std::to_string(bottleneck.dim(2)) + ", expected 8x8");

        c.expect(trace.output.rank() == 4 && trace.output.dim(1) == 256 &&
                     trace.output.dim(2) == 256 && trace.output.dim(3) == 8,
                 to_string(mode) + ": output shape is not 256x256x8");

        double worst = 0.0;
        for (int y = 0; y < 256; ++y)
            for (int x = 0; x < 256; ++x) {
                double s = 0;
                for (int k = 0; k < 8; ++k) s += trace.output.at(0, y, x, k);
                worst = std::max(worst, std::abs(s - 1.0));
            }
        c.expect(worst <= 1e-6,
                 to_string(mode) + ": probability sum off by " + fmt("%.3e", worst));
        if (!c.ok) return c;
    }
    c.note("both decoder modes");
    return c;
}

// ---------------------------------------------------------------------------
// 4. callback state machines on scripted loss sequences

Check callback_machines() {
    Check c;

    {  // reduce-lr: plateau, reduction, reset, floor clamp
        trainer::ReduceLrConfig cfg;
        cfg.patience = 2;
        cfg.factor = 0.5;
        cfg.min_lr = 2.5e-4;
        trainer::ReduceLrOnPlateau r(cfg, 1e-3);
        const double script[] = {1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.5, 0.5};
        const double expect[] = {1e-3, 1e-3, 5e-4, 5e-4, 5e-4, 2.5e-4, 2.5e-4, 2.5e-4};
        for (int i = 0; i < 8; ++i) {
            const double lr = r.observe(script[i]);
            c.expect(lr == expect[i], "reduce-lr step " + std::to_string(i) + ": lr " +
                                          fmt("%.6g", lr) + " != " + fmt("%.6g", expect[i]));
        }

        trainer::ReduceLrConfig strict;  // min_delta turns small gains into plateaus
        strict.patience = 1;
        strict.min_delta = 0.1;
        trainer::ReduceLrOnPlateau r2(strict, 1.0);
        c.expect(r2.observe(1.00) == 1.0, "min_delta: first epoch always improves");
        c.expect(r2.observe(0.95) == 0.5, "min_delta: +0.05 gain must count as plateau");
        c.expect(r2.observe(0.50) == 0.5, "min_delta: +0.45 gain must reset the counter");
    }

    {  // early stopping: improvement resets, exhausted patience stops
        trainer::EarlyStopConfig cfg;
        cfg.patience = 3;
        trainer::EarlyStopping s(cfg);
        for (int i = 0; i < 10; ++i)
            c.expect(!s.observe(1.0 - 0.01 * i), "early stop fired on an improving run");

        trainer::EarlyStopping s2(cfg);
        c.expect(!s2.observe(1.0), "epoch 1 improves on +inf");
        c.expect(!s2.observe(1.0), "wait 1");
        c.expect(!s2.observe(1.0), "wait 2");
        c.expect(s2.observe(1.0), "wait 3 == patience must stop");
        c.expect(s2.stopped(), "stopped flag latches");

        trainer::EarlyStopping s3(cfg);
        s3.observe(1.0);
        s3.observe(1.0);
        s3.observe(1.0);
        c.expect(!s3.observe(0.9), "improvement on the last allowed epoch rescues the run");
        c.expect(!s3.observe(0.9) && !s3.observe(0.9), "counter restarted after the rescue");
        c.expect(s3.observe(0.9), "patience re-exhausted");
    }

    {  // checkpoint-best: strict improvement writes, ties do not
        const fs::path dir = scratch("callbacks");
        segnet::ArchitectureConfig mc;
        mc.height = mc.width = 32;
        mc.num_classes = 3;
        mc.encoder_filters = {2, 2, 4, 4, 4};
        const auto m1 = segnet::SegmentationModel::build(mc);
        mc.seed = 99;  // different weights, same structure
        const auto m2 = segnet::SegmentationModel::build(mc);

        trainer::BestCheckpoint best(dir / "best.ckpt");
        c.expect(best.observe(0.5, m1), "first value always saves");
        c.expect(!best.observe(0.5, m2), "equal value is not an improvement");
        c.expect(!best.observe(0.6, m2), "worse value is not an improvement");
        c.expect(best.observe(0.4, m2), "strictly smaller value saves");
        c.expect(best.best() == 0.4, "best() tracks the running minimum");

        const auto loaded = segnet::SegmentationModel::load_checkpoint(dir / "best.ckpt");
        const auto& a = loaded.graph().node(1).w;
        const auto& b = m2.graph().node(1).w;
        bool same = a.size() == b.size();
        for (int64_t i = 0; same && i < a.size(); ++i) same = a[i] == b[i];
        c.expect(same, "checkpoint on disk is not the strictly-best model");
    }

    c.note("reduce-lr, early-stop, checkpoint-best transitions");
    return c;
}

// ---------------------------------------------------------------------------
// 5. grad-cam against brute force and finite differences

// Double-precision toy net: 3x3 same conv -> per-pixel softmax -> spatial sum
// of one class probability. Small enough to differentiate numerically.
struct ToyNet {
    static constexpr int H = 5, W = 5, Cin = 2, Cout = 3;
    std::vector<double> w;  // [Cout][3][3][Cin]
    std::vector<double> b;  // [Cout]

    explicit ToyNet(uint64_t seed) : w(Cout * 9 * Cin), b(Cout) {
        Rng rng(seed);
        for (auto& v : w) v = rng.uniform(-0.8, 0.8);
        for (auto& v : b) v = rng.uniform(-0.2, 0.2);
    }
    double wat(int j, int dy, int dx, int k) const {
        return w[((j * 3 + dy) * 3 + dx) * Cin + k];
    }
    // class probabilities at every pixel, row-major [H][W][Cout]
    std::vector<double> probs(const std::vector<double>& x) const {
        std::vector<double> p(H * W * Cout);
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx) {
                double z[Cout], zmax = -1e300;
                for (int j = 0; j < Cout; ++j) {
                    double s = b[j];
                    for (int dy = 0; dy < 3; ++dy)
                        for (int dx = 0; dx < 3; ++dx) {
                            const int sy = y + dy - 1, sx = xx + dx - 1;
                            if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
                            for (int k = 0; k < Cin; ++k)
                                s += wat(j, dy, dx, k) * x[(sy * W + sx) * Cin + k];
                        }
                    zmax = std::max(zmax, z[j] = s);
                }
                double sum = 0;
                for (int j = 0; j < Cout; ++j) sum += std::exp(z[j] - zmax);
                for (int j = 0; j < Cout; ++j)
                    p[(y * W + xx) * Cout + j] = std::exp(z[j] - zmax) / sum;
            }
        return p;
    }
    double score(const std::vector<double>& x, int c) const {
        const auto p = probs(x);
        double s = 0;
        for (int q = 0; q < H * W; ++q) s += p[q * Cout + c];
        return s;
    }
    // analytic d(score)/dx via the softmax jacobian and conv transpose
    std::vector<double> grad(const std::vector<double>& x, int c) const {
        const auto p = probs(x);
        std::vector<double> g(H * W * Cin, 0.0);
        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx)
                for (int j = 0; j < Cout; ++j) {
                    const double pc = p[(y * W + xx) * Cout + c];
                    const double delta = pc * ((j == c ? 1.0 : 0.0) - p[(y * W + xx) * Cout + j]);
                    for (int dy = 0; dy < 3; ++dy)
                        for (int dx = 0; dx < 3; ++dx) {
                            const int sy = y + dy - 1, sx = xx + dx - 1;
                            if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
                            for (int k = 0; k < Cin; ++k)
                                g[(sy * W + sx) * Cin + k] += delta * wat(j, dy, dx, k);
                        }
                }
        return g;
    }
};

Check gradcam_oracle() {
    Check c;

    {  // toy net: analytic/FD alpha vs the production pooling
        ToyNet net(501);
        Rng rng(502);
        std::vector<double> x(ToyNet::H * ToyNet::W * ToyNet::Cin);
        for (auto& v : x) v = rng.uniform(-1.0, 1.0);
        const int cls = 1;

        const auto g = net.grad(x, cls);
        std::vector<double> alpha_fd(ToyNet::Cin, 0.0), alpha_bf(ToyNet::Cin, 0.0);
        const double h = 1e-6;
        for (int q = 0; q < ToyNet::H * ToyNet::W; ++q)
            for (int k = 0; k < ToyNet::Cin; ++k) {
                const double save = x[q * ToyNet::Cin + k];
                x[q * ToyNet::Cin + k] = save + h;
                const double sp = net.score(x, cls);
                x[q * ToyNet::Cin + k] = save - h;
                const double sm = net.score(x, cls);
                x[q * ToyNet::Cin + k] = save;
                alpha_fd[k] += (sp - sm) / (2 * h) / (ToyNet::H * ToyNet::W);
                alpha_bf[k] += g[q * ToyNet::Cin + k] / (ToyNet::H * ToyNet::W);
            }

        Tensor gt({ToyNet::H, ToyNet::W, ToyNet::Cin});
        for (int64_t i = 0; i < gt.size(); ++i) gt[i] = static_cast<float>(g[i]);
        const auto alpha = xai::compute_alpha(gt);
        for (int k = 0; k < ToyNet::Cin; ++k) {
            const double rel =
                std::abs(alpha[k] - alpha_fd[k]) / std::max(1e-8, std::abs(alpha_fd[k]));
            c.expect(rel < 1e-4, "alpha[" + std::to_string(k) + "] vs finite differences: rel " +
                                     fmt("%.3e", rel));
            c.expect(std::abs(alpha[k] - alpha_bf[k]) <= 1e-6,
                     "alpha[" + std::to_string(k) + "] vs brute force");
        }

        // heatmap through the production path vs a plain double loop
        Tensor feat({ToyNet::H, ToyNet::W, ToyNet::Cin});
        for (int64_t i = 0; i < feat.size(); ++i) feat[i] = static_cast<float>(x[i]);
        const Tensor raw = xai::compute_heatmap_raw(feat, alpha);
        double max_activation = 0.0;
        const Tensor hm = xai::finalize_heatmap(raw, ToyNet::H, ToyNet::W, &max_activation);

        std::vector<double> raw_bf(ToyNet::H * ToyNet::W, 0.0);
        double peak = 0.0;
        for (int q = 0; q < ToyNet::H * ToyNet::W; ++q) {
            double s = 0;
            for (int k = 0; k < ToyNet::Cin; ++k) s += alpha[k] * x[q * ToyNet::Cin + k];
            raw_bf[q] = std::max(0.0, s);
            peak = std::max(peak, raw_bf[q]);
        }
        for (int q = 0; q < ToyNet::H * ToyNet::W; ++q) {
            const double want = peak > 0 ? raw_bf[q] / peak : 0.0;
            if (std::abs(hm[q] - want) > 1e-6) {
                c.fail("heatmap pixel " + std::to_string(q) + " vs brute force: " +
                       fmt("%.3e", std::abs(hm[q] - want)));
                break;
            }
        }
        c.expect(max_activation == (peak > 0 ? 1.0 : 0.0), "max_activation flag");
    }

    {  // real pipeline: range, normalization and the mean-intensity identity
        segnet::ArchitectureConfig mc;
        mc.height = mc.width = 32;
        mc.num_classes = 3;
        mc.encoder_filters = {2, 2, 4, 4, 4};
        const auto model = segnet::SegmentationModel::build(mc);
        Tensor image({32, 32, 1});
        Rng rng(503);
        for (int64_t i = 0; i < image.size(); ++i)
            image[i] = static_cast<float>(rng.next_double());

        for (const std::string layer : {"conv2d_9", "conv2d_19", "conv2d_20"}) {
            for (int cls = 0; cls < mc.num_classes; ++cls) {
                const auto res = xai::gradcam(model, image, layer, cls);
                double lo = 1e300, hi = -1e300, sum = 0;
                for (int64_t i = 0; i < res.heatmap.size(); ++i) {
                    lo = std::min(lo, static_cast<double>(res.heatmap[i]));
                    hi = std::max(hi, static_cast<double>(res.heatmap[i]));
                    sum += res.heatmap[i];
                }
                c.expect(lo >= 0.0 && hi <= 1.0, layer + ": heatmap leaves [0,1]");
                c.expect(std::abs(res.mean_intensity - sum / res.heatmap.size()) <= 1e-9,
                         layer + ": mean intensity is not the arithmetic mean");
                c.expect(res.max_activation == (hi > 0 ? 1.0 : 0.0),
                         layer + ": normalized peak must be 1 (or 0 for a dead map)");
            }
        }
    }

    c.note("alpha, heatmaps, FD, [0,1] range, mean identity");
    return c;
}

// ---------------------------------------------------------------------------
// 6. seeded overfit on an 8-sample fixture

Check overfit_smoke() {
    Check c;
    segnet::ArchitectureConfig mc;
    mc.height = mc.width = 32;
    mc.num_classes = 3;
    mc.encoder_filters = {8, 8, 16, 16, 16};
    mc.seed = 7;

    dataio::DatasetSplit split;
    for (int i = 0; i < 8; ++i) {
        Rng rng(100 + i);
        dataio::PreprocessedSample s;
        s.source_id = "fix_" + std::to_string(i);
        s.image = Tensor({32, 32, 1});
        LabelMask m(32, 32);
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x) {
                const int label = y * mc.num_classes / 32;
                m.at(y, x) = static_cast<uint8_t>(label);
                s.image.at(y, x, 0) =
                    static_cast<float>(label / double(mc.num_classes - 1) * 0.8 + 0.1 +
                                       0.05 * rng.uniform(-1.0, 1.0));
            }
        s.onehot = dataio::one_hot_encode(m, mc.num_classes);
        split.train.push_back(std::move(s));
    }

    const fs::path dir = scratch("overfit");
    trainer::TrainingConfig tc;
    tc.epochs = 200;
    tc.batch_size = 4;
    tc.seed = 11;
    tc.checkpoint_path = dir / "best.ckpt";
    tc.log_path = dir / "log.csv";

    auto model = segnet::SegmentationModel::build(mc);
    const auto result = trainer::train(model, split, tc);

    double best_dice = 0.0;
    int best_at = 0;
    for (const auto& row : result.history)
        if (row.dice > best_dice) {
            best_dice = row.dice;
            best_at = row.epoch;
        }
    c.expect(best_dice >= 0.90, "training dice peaked at " + fmt("%.4f", best_dice));
    c.note("dice " + fmt("%.4f", best_dice) + " at epoch " + std::to_string(best_at) + " of " +
           std::to_string(result.history.size()));
    return c;
}

// ---------------------------------------------------------------------------
// 7. byte-identical prepare caches + exact one-hot round trips

Check preprocessing_determinism() {
    Check c;
    const fs::path dir = scratch("prepare");

    // dataset: either the real volume (when configured) or a synthetic one
    fs::path data_dir;
    std::string source = "synthetic fixtures";
    if (const char* duke = std::getenv("OCTSEG_DUKE_DIR");
        duke && *duke && fs::exists(duke)) {
        data_dir = duke;
        source = "configured dataset";
    } else {
        data_dir = dir / "data";
        fs::create_directories(data_dir);
        Rng rng(71);
        for (int i = 0; i < 10; ++i) {
            const int h = 48 + static_cast<int>(rng.next_below(3)) * 8;  // mixed resolutions
            const int w = 64;
            std::vector<float> img(static_cast<size_t>(h) * w);
            std::vector<uint8_t> mask(img.size());
            for (size_t q = 0; q < img.size(); ++q) {
                img[q] = static_cast<float>(rng.next_double());
                mask[q] = static_cast<uint8_t>(rng.next_below(8));
            }
            char id[16];
            std::snprintf(id, sizeof(id), "fx%02d", i);
            dataio::write_npy_f4(data_dir / (std::string(id) + "_img.npy"), {h, w}, img.data());
            dataio::write_npy_u1(data_dir / (std::string(id) + "_mask.npy"), {h, w}, mask.data());
        }
    }

    nlohmann::json cfg{
        {"data", {{"path", data_dir.string()}, {"split_ratio", 0.8}, {"seed", 42}}},
        {"model",
         {{"height", 32}, {"width", 32}, {"num_classes", 8}, {"encoder_filters", {2, 2, 4, 4, 4}}}},
        {"output", (dir / "out1").string()}};
    std::ofstream(dir / "run1.json") << cfg.dump();
    cfg["output"] = (dir / "out2").string();
    std::ofstream(dir / "run2.json") << cfg.dump();

    std::ostringstream out, err;
    c.expect(cli::run({"prepare", "--config", (dir / "run1.json").string()}, out, err) == 0,
             "first prepare failed: " + err.str());
    c.expect(cli::run({"prepare", "--config", (dir / "run2.json").string()}, out, err) == 0,
             "second prepare failed: " + err.str());
    if (!c.ok) return c;

    const auto h1 = dataio::file_hash(dir / "out1" / "dataset.cache");
    const auto h2 = dataio::file_hash(dir / "out2" / "dataset.cache");
    c.expect(h1 == h2, "caches differ across runs");

    std::ifstream a(dir / "out1" / "dataset.cache", std::ios::binary);
    std::ifstream b(dir / "out2" / "dataset.cache", std::ios::binary);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    c.expect(sa.str() == sb.str() && !sa.str().empty(), "cache bytes differ");

    // exact label recovery through one-hot encode/decode on every mask
    const auto raw = dataio::load_dataset(data_dir);
    for (const auto& s : raw) {
        const auto back = dataio::one_hot_decode(dataio::one_hot_encode(s.mask, 8));
        if (back.labels != s.mask.labels) {
            c.fail("one-hot round trip lost labels on " + s.source_id);
            break;
        }
    }
    c.note(std::to_string(raw.size()) + " samples (" + source + "), cache hash " + to_hex(h1));
    return c;
}

// ---------------------------------------------------------------------------
// 8. extended: full-dataset reference run (opt-in, excluded from CI)

Check full_reference_run() {
    Check c;
    const char* duke = std::getenv("OCTSEG_DUKE_DIR");
    if (!duke || !*duke || !fs::exists(duke)) {
        c.detail = "SKIP";
        c.note("SKIP");
        return c;
    }

    const fs::path dir = scratch("fullrun");
    const auto raw = dataio::load_dataset(duke);
    const auto prepared = dataio::preprocess(raw, 256, 256, 8);
    const auto split = dataio::split_dataset(prepared, 0.8, 42);

    segnet::ArchitectureConfig mc;  // defaults: 256x256x1 -> 8 classes
    trainer::TrainingConfig tc;     // defaults: lr 1e-3, batch 32, 100 epochs
    tc.checkpoint_path = dir / "best.ckpt";
    tc.log_path = dir / "log.csv";

    auto model = segnet::SegmentationModel::build(mc);
    trainer::train(model, split, tc);

    const auto best = segnet::SegmentationModel::load_checkpoint(tc.checkpoint_path, mc);
    report::EvalOptions opts;
    opts.batch_size = tc.batch_size;
    const auto metrics = report::evaluate(best, split.validation, opts);

    c.expect(std::abs(metrics.accuracy - 0.9577) <= 0.015,
             "validation accuracy " + fmt("%.4f", metrics.accuracy));
    c.expect(std::abs(metrics.dice - 0.9446) <= 0.03, "dice " + fmt("%.4f", metrics.dice));
    c.expect(std::abs(metrics.iou - 0.8951) <= 0.03, "iou " + fmt("%.4f", metrics.iou));
    c.expect(std::abs(metrics.loss - 0.1354) <= 0.03, "loss " + fmt("%.4f", metrics.loss));
    c.expect(metrics.per_class_iou.at(0) >= 0.95,
             "class 0 iou " + fmt("%.4f", metrics.per_class_iou.at(0)));

    // classes 3 and 4 should be the two weakest
    std::vector<int> order(8);
    for (int k = 0; k < 8; ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return metrics.per_class_iou[a] < metrics.per_class_iou[b];
    });
    const bool weakest_34 = (order[0] == 3 || order[0] == 4) && (order[1] == 3 || order[1] == 4);
    c.expect(weakest_34, "weakest classes are " + std::to_string(order[0]) + "," +
                             std::to_string(order[1]) + ", expected {3,4}");
    c.note("val acc " + fmt("%.4f", metrics.accuracy) + ", dice " + fmt("%.4f", metrics.dice));
    return c;
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        double budget_s;
        std::function<Check()> run;
    };
    const std::vector<Criterion> criteria = {
        {"metric oracle equivalence", 10.0, metric_oracle},
        {"hybrid loss gradient vs finite differences", 30.0, loss_gradient},
        {"architecture shape suite", 60.0, shape_suite},
        {"callback state machines", 5.0, callback_machines},
        {"grad-cam oracle", 30.0, gradcam_oracle},
        {"overfit smoke test", 600.0, overfit_smoke},
        {"preprocessing determinism", 120.0, preprocessing_determinism},
        {"full-dataset reference run (extended)", 0.0, full_reference_run},
    };

    int failures = 0;
    for (size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Check c;
        try {
            c = criteria[i].run();
        } catch (const std::exception& e) {
            c.fail(std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        const bool skipped = c.ok && c.detail == "SKIP";
        bool pass = c.ok;
        std::string detail = c.detail;
        if (pass && !skipped && criteria[i].budget_s > 0 && secs > criteria[i].budget_s) {
            pass = false;
            detail = "over budget (" + fmt("%.1f", secs) + "s > " +
                     fmt("%.0f", criteria[i].budget_s) + "s)";
        }

        const char* verdict = skipped ? "SKIP" : (pass ? "PASS" : "FAIL");
        std::string info = skipped ? "dataset not configured; excluded from CI" : detail;
        if (!info.empty()) info += " ";
        std::printf("criterion %zu [%s] %s — %s(%.2fs)\n", i + 1, verdict, criteria[i].name,
                    info.c_str(), secs);
        std::fflush(stdout);
        if (!pass && !skipped) ++failures;
    }

    if (failures) std::printf("%d criterion(s) failed\n", failures);
    return failures ? 1 : 0;
}
