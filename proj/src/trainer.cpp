#include "octseg/trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "octseg/report/report.hpp"

namespace octseg::trainer {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainingConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must be in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must be in [0, 1)");
    if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (checkpoint_path.empty()) throw ConfigError("checkpoint_path is empty");
    if (log_path.empty()) throw ConfigError("log_path is empty");
    reduce_lr.validate();
    early_stop.validate();
    loss.validate();
}

void to_json(json& j, const TrainingConfig& c) {
    j = json{{"learning_rate", c.learning_rate},
             {"beta1", c.beta1},
             {"beta2", c.beta2},
             {"adam_epsilon", c.adam_epsilon},
             {"batch_size", c.batch_size},
             {"epochs", c.epochs},
             {"seed", c.seed},
             {"reduce_lr",
              {{"patience", c.reduce_lr.patience},
               {"factor", c.reduce_lr.factor},
               {"min_lr", c.reduce_lr.min_lr},
               {"min_delta", c.reduce_lr.min_delta}}},
             {"early_stop",
              {{"patience", c.early_stop.patience}, {"min_delta", c.early_stop.min_delta}}},
             {"checkpoint_path", c.checkpoint_path.string()},
             {"log_path", c.log_path.string()}};
    to_json(j["loss"], c.loss);
}

void from_json(const json& j, TrainingConfig& c) {
    TrainingConfig d;
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.beta1 = j.value("beta1", d.beta1);
    c.beta2 = j.value("beta2", d.beta2);
    c.adam_epsilon = j.value("adam_epsilon", d.adam_epsilon);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.epochs = j.value("epochs", d.epochs);
    c.seed = j.value("seed", d.seed);
    if (j.contains("reduce_lr")) {
        const json& r = j.at("reduce_lr");
        c.reduce_lr.patience = r.value("patience", d.reduce_lr.patience);
        c.reduce_lr.factor = r.value("factor", d.reduce_lr.factor);
        c.reduce_lr.min_lr = r.value("min_lr", d.reduce_lr.min_lr);
        c.reduce_lr.min_delta = r.value("min_delta", d.reduce_lr.min_delta);
    }
    if (j.contains("early_stop")) {
        const json& e = j.at("early_stop");
        c.early_stop.patience = e.value("patience", d.early_stop.patience);
        c.early_stop.min_delta = e.value("min_delta", d.early_stop.min_delta);
    }
    c.checkpoint_path = j.value("checkpoint_path", d.checkpoint_path.string());
    c.log_path = j.value("log_path", d.log_path.string());
    if (j.contains("loss")) from_json(j.at("loss"), c.loss);
}

namespace {

// First and second Adam moments for one parameter node.
struct AdamSlot {
    Tensor mw, vw, mb, vb;
};

void adam_update(Tensor& p, const Tensor& g, Tensor& m, Tensor& v, float lr_t, float b1, float b2,
                 float eps) {
    float* pp = p.data();
    const float* gp = g.data();
    float* mp = m.data();
    float* vp = v.data();
    const int64_t n = p.size();
    for (int64_t i = 0; i < n; ++i) {
        mp[i] = b1 * mp[i] + (1.0f - b1) * gp[i];
        vp[i] = b2 * vp[i] + (1.0f - b2) * gp[i] * gp[i];
        pp[i] -= lr_t * mp[i] / (std::sqrt(vp[i]) + eps);
    }
}

// Fail fast on an unwritable checkpoint location without leaving a file behind.
void probe_writable(const fs::path& path) {
    try {
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        const bool existed = fs::exists(path);
        {
            std::ofstream f(path, std::ios::app | std::ios::binary);
            if (!f) throw IoError("cannot open checkpoint path: " + path.string());
        }
        if (!existed) fs::remove(path);
    } catch (const fs::filesystem_error& e) {
        throw IoError("cannot use checkpoint path " + path.string() + ": " + e.what());
    }
}

}  // namespace

TrainResult train(segnet::SegmentationModel& model, const dataio::DatasetSplit& split,
                  const TrainingConfig& config) {
    config.validate();
    if (split.train.empty()) throw ArgumentError("training set is empty");
    const auto& cfg = model.config();
    const int64_t in_size = static_cast<int64_t>(cfg.height) * cfg.width * cfg.channels;
    const int64_t out_size = static_cast<int64_t>(cfg.height) * cfg.width * cfg.num_classes;
    for (const auto& s : split.train)
        if (s.image.size() != in_size || s.onehot.size() != out_size)
            throw ShapeError(s.source_id + ": sample does not match the model input " +
                             s.image.shape_str());

    // Both output paths must be usable before the first batch runs.
    probe_writable(config.checkpoint_path);
    CsvLogger logger(config.log_path);

    TrainResult result;
    if (config.epochs == 0) return result;

    nn::Graph& graph = model.graph();
    nn::Workspace ws;
    nn::ParamGrads pg = graph.make_param_grads();
    const std::vector<int> param_ids = graph.param_node_ids();
    std::vector<AdamSlot> adam;
    adam.reserve(param_ids.size());
    for (int id : param_ids) {
        const nn::Node& n = graph.node(id);
        adam.push_back({Tensor::zeros(n.w.shape()), Tensor::zeros(n.w.shape()),
                        Tensor::zeros(n.b.shape()), Tensor::zeros(n.b.shape())});
    }

    ReduceLrOnPlateau reduce(config.reduce_lr, config.learning_rate);
    EarlyStopping stopper(config.early_stop);
    BestCheckpoint checkpoint(config.checkpoint_path);

    report::EvalOptions eval_opts;
    eval_opts.batch_size = config.batch_size;
    eval_opts.loss = config.loss;

    // One RNG stream drives every epoch's reshuffle, so the batch order of
    // epoch k depends on (seed, k) and nothing else.
    Rng rng(config.seed);
    std::vector<size_t> order(split.train.size());
    std::iota(order.begin(), order.end(), size_t{0});

    double lr = config.learning_rate;
    int64_t step = 0;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.next_below(i)]);

        objectives::MetricAccumulator acc(cfg.num_classes);
        double loss_weighted = 0.0;
        int64_t pixels_total = 0;

        for (size_t start = 0; start < order.size();
             start += static_cast<size_t>(config.batch_size)) {
            const size_t end =
                std::min(order.size(), start + static_cast<size_t>(config.batch_size));
            const int B = static_cast<int>(end - start);
            Tensor batch({B, cfg.height, cfg.width, cfg.channels});
            Tensor truth({B, cfg.height, cfg.width, cfg.num_classes});
            for (int b = 0; b < B; ++b) {
                const auto& s = split.train[order[start + static_cast<size_t>(b)]];
                std::memcpy(batch.data() + static_cast<int64_t>(b) * in_size, s.image.data(),
                            sizeof(float) * static_cast<size_t>(in_size));
                std::memcpy(truth.data() + static_cast<int64_t>(b) * out_size, s.onehot.data(),
                            sizeof(float) * static_cast<size_t>(out_size));
            }

            const Tensor& probs = graph.forward(batch, ws);
            const double batch_loss = objectives::hybrid_loss(truth, probs, config.loss);
            const Tensor seed_grad = objectives::hybrid_grad(truth, probs, config.loss);

            // Epoch-level training metrics are taken from the pre-update
            // forward pass of each batch, i.e. they track the moving model.
            const int64_t batch_pixels = static_cast<int64_t>(B) * cfg.height * cfg.width;
            loss_weighted += batch_loss * static_cast<double>(batch_pixels);
            pixels_total += batch_pixels;
            for (int b = 0; b < B; ++b) {
                Tensor one({cfg.height, cfg.width, cfg.num_classes});
                std::memcpy(one.data(), probs.data() + static_cast<int64_t>(b) * out_size,
                            sizeof(float) * static_cast<size_t>(out_size));
                const auto& s = split.train[order[start + static_cast<size_t>(b)]];
                acc.add(dataio::one_hot_decode(s.onehot), segnet::argmax_mask(one));
            }

            nn::Graph::zero_param_grads(pg);
            graph.backward(seed_grad, graph.output_id(), ws, 0, &pg);

            ++step;
            const double bias_corr = std::sqrt(1.0 - std::pow(config.beta2, step)) /
                                     (1.0 - std::pow(config.beta1, step));
            const float lr_t = static_cast<float>(lr * bias_corr);
            for (size_t k = 0; k < param_ids.size(); ++k) {
                nn::Node& n = graph.node(param_ids[k]);
                const nn::ParamGrad& g = pg[static_cast<size_t>(param_ids[k])];
                adam_update(n.w, g.gw, adam[k].mw, adam[k].vw, lr_t,
                            static_cast<float>(config.beta1), static_cast<float>(config.beta2),
                            static_cast<float>(config.adam_epsilon));
                adam_update(n.b, g.gb, adam[k].mb, adam[k].vb, lr_t,
                            static_cast<float>(config.beta1), static_cast<float>(config.beta2),
                            static_cast<float>(config.adam_epsilon));
            }
        }

        EpochLog row;
        row.epoch = epoch;
        row.loss = loss_weighted / static_cast<double>(pixels_total);
        row.accuracy = acc.accuracy();
        row.dice = acc.mean_dice();
        row.iou = acc.mean_iou();
        row.learning_rate = lr;
        if (!split.validation.empty()) {
            const objectives::MetricsReport m = report::evaluate(model, split.validation, eval_opts);
            row.val_loss = m.loss;
            row.val_accuracy = m.accuracy;
            row.val_dice = m.dice;
            row.val_iou = m.iou;
        } else {
            // No validation data: the control callbacks monitor the training
            // loss and the val columns mirror the training columns.
            row.val_loss = row.loss;
            row.val_accuracy = row.accuracy;
            row.val_dice = row.dice;
            row.val_iou = row.iou;
        }

        lr = reduce.observe(row.val_loss);
        const bool stop_now = stopper.observe(row.val_loss);
        if (checkpoint.observe(row.val_loss, model)) {
            result.best_epoch = epoch;
            result.best_val_loss = row.val_loss;
        }
        logger.append(row);
        result.history.push_back(row);
        if (stop_now) {
            result.early_stopped = true;
            break;
        }
    }
    return result;
}

}  // namespace octseg::trainer
