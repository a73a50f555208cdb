#include "octseg/cli/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>

#include <CLI11.hpp>

#include "octseg/dataio/cache.hpp"
#include "octseg/report/report.hpp"
#include "octseg/xai/gradcam.hpp"

namespace octseg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

RunConfig RunConfig::load(const fs::path& config_path) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config: " + config_path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config " + config_path.string() + " is not valid JSON: " + e.what());
    }

    RunConfig cfg;
    try {
        if (j.contains("data")) {
            const json& d = j.at("data");
            cfg.data.path = d.value("path", std::string());
            cfg.data.layout.image_field = d.value("image_field", cfg.data.layout.image_field);
            cfg.data.layout.mask_field = d.value("mask_field", cfg.data.layout.mask_field);
            cfg.data.layout.sample_axis_trailing =
                d.value("sample_axis_trailing", cfg.data.layout.sample_axis_trailing);
            cfg.data.layout.transpose_hw = d.value("transpose_hw", cfg.data.layout.transpose_hw);
            cfg.data.split_ratio = d.value("split_ratio", cfg.data.split_ratio);
            cfg.data.seed = d.value("seed", cfg.data.seed);
        }
        if (j.contains("model")) cfg.model = j.at("model").get<segnet::ArchitectureConfig>();
        if (j.contains("training")) cfg.training = j.at("training").get<trainer::TrainingConfig>();
        if (j.contains("xai")) {
            const json& x = j.at("xai");
            if (x.contains("layers")) cfg.xai.layers = x.at("layers").get<std::vector<std::string>>();
            if (x.contains("classes")) cfg.xai.classes = x.at("classes").get<std::vector<int>>();
            cfg.xai.use_logits = x.value("use_logits", cfg.xai.use_logits);
        }
        cfg.output_root = j.value("output", cfg.output_root.string());
    } catch (const json::exception& e) {
        throw ConfigError("config " + config_path.string() + ": " + e.what());
    }

    if (const char* env = std::getenv("OCTSEG_DATA_DIR"); env && *env) cfg.data.path = env;

    // Relative training outputs live under the run's output root.
    if (cfg.training.checkpoint_path.is_relative())
        cfg.training.checkpoint_path = cfg.output_root / cfg.training.checkpoint_path;
    if (cfg.training.log_path.is_relative())
        cfg.training.log_path = cfg.output_root / cfg.training.log_path;

    cfg.validate();
    return cfg;
}

void RunConfig::validate() const {
    if (data.path.empty()) throw ConfigError("data.path is not set");
    if (!(data.split_ratio > 0.0 && data.split_ratio <= 1.0))
        throw ConfigError("data.split_ratio must be in (0, 1]");
    if (output_root.empty()) throw ConfigError("output root is not set");
    model.validate();
    training.validate();
    if (xai.layers.empty()) throw ConfigError("xai.layers is empty");
    for (int c : xai.classes)
        if (c < 0 || c >= model.num_classes)
            throw ConfigError("xai class " + std::to_string(c) + " outside [0, " +
                              std::to_string(model.num_classes) + ")");
}

json RunConfig::to_json() const {
    json d{{"path", data.path.string()},
           {"image_field", data.layout.image_field},
           {"mask_field", data.layout.mask_field},
           {"sample_axis_trailing", data.layout.sample_axis_trailing},
           {"transpose_hw", data.layout.transpose_hw},
           {"split_ratio", data.split_ratio},
           {"seed", data.seed}};
    json x{{"layers", xai.layers}, {"classes", xai.classes}, {"use_logits", xai.use_logits}};
    return json{{"data", d},
                {"model", model},
                {"training", training},
                {"xai", x},
                {"output", output_root.string()}};
}

namespace {

fs::path cache_path(const RunConfig& cfg) { return cfg.output_root / "dataset.cache"; }

// prepare's pipeline: load -> preprocess -> split. Used directly by prepare
// and as the fallback when train/evaluate/explain run without a cache.
dataio::DatasetSplit build_split(const RunConfig& cfg) {
    const auto raw = dataio::load_dataset(cfg.data.path, cfg.data.layout);
    const auto prepared =
        dataio::preprocess(raw, cfg.model.height, cfg.model.width, cfg.model.num_classes);
    return dataio::split_dataset(prepared, cfg.data.split_ratio, cfg.data.seed);
}

dataio::DatasetSplit obtain_split(const RunConfig& cfg) {
    const fs::path cache = cache_path(cfg);
    if (fs::exists(cache)) return dataio::read_cache(cache);
    return build_split(cfg);
}

uint64_t split_hash(const dataio::DatasetSplit& split) {
    std::vector<dataio::PreprocessedSample> all = split.train;
    all.insert(all.end(), split.validation.begin(), split.validation.end());
    return dataio::dataset_hash(all);
}

void write_manifest(const RunConfig& cfg, const std::string& command, uint64_t dataset_hash,
                    const std::vector<fs::path>& artifacts) {
    json m{{"command", command},
           {"config", cfg.to_json()},
           {"seed", cfg.training.seed},
           {"dataset_hash", to_hex(dataset_hash)}};
    m["artifacts"] = json::array();
    for (const auto& a : artifacts) m["artifacts"].push_back(a.string());
    const fs::path path = cfg.output_root / "manifest.json";
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest: " + path.string());
    out << m.dump(2) << "\n";
}

int fail(std::ostream& err, int code, const std::string& what) {
    err << "error: " << what << "\n";
    return code;
}

}  // namespace

int cmd_prepare(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    try {
        const auto raw = dataio::load_dataset(cfg.data.path, cfg.data.layout);

        // Dataset survey: sample count, native resolutions, observed labels.
        std::map<std::string, int> resolutions;
        std::set<int> labels;
        for (const auto& s : raw) {
            resolutions[std::to_string(s.image.dim(0)) + "x" + std::to_string(s.image.dim(1))]++;
            for (int64_t i = 0; i < s.mask.size(); ++i)
                labels.insert(s.mask.labels[static_cast<size_t>(i)]);
        }
        out << "samples: " << raw.size() << "\n";
        out << "resolutions:";
        for (const auto& [res, n] : resolutions) out << " " << res << " (" << n << ")";
        out << "\n";
        out << "labels:";
        for (int l : labels) out << " " << l;
        out << " (" << labels.size() << " unique)\n";

        const auto prepared =
            dataio::preprocess(raw, cfg.model.height, cfg.model.width, cfg.model.num_classes);
        const auto split = dataio::split_dataset(prepared, cfg.data.split_ratio, cfg.data.seed);
        out << "split: " << split.train.size() << " train / " << split.validation.size()
            << " validation (ratio " << cfg.data.split_ratio << ", seed " << cfg.data.seed
            << ")\n";

        fs::create_directories(cfg.output_root);
        const fs::path cache = cache_path(cfg);
        dataio::write_cache(cache, split, cfg.model.num_classes);
        out << "cache: " << cache.string() << " (hash " << to_hex(dataio::file_hash(cache))
            << ")\n";
        return kOk;
    } catch (const Error& e) {
        return fail(err, kData, e.what());
    } catch (const fs::filesystem_error& e) {
        return fail(err, kData, e.what());
    }
}

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    dataio::DatasetSplit split;
    try {
        split = obtain_split(cfg);
    } catch (const Error& e) {
        return fail(err, kData, e.what());
    }

    try {
        auto model = segnet::SegmentationModel::build(cfg.model);
        const auto result = trainer::train(model, split, cfg.training);

        if (!result.history.empty()) {
            const auto& last = result.history.back();
            char buf[512];
            std::snprintf(buf, sizeof(buf),
                          "epoch %d: loss %.6f acc %.6f dice %.6f iou %.6f val_loss %.6f "
                          "val_acc %.6f val_dice %.6f val_iou %.6f lr %g\n",
                          last.epoch, last.loss, last.accuracy, last.dice, last.iou, last.val_loss,
                          last.val_accuracy, last.val_dice, last.val_iou, last.learning_rate);
            out << buf;
            out << "best epoch " << result.best_epoch << " (val_loss " << result.best_val_loss
                << ")" << (result.early_stopped ? ", stopped early" : "") << "\n";
        } else {
            out << "no epochs requested; nothing trained\n";
        }

        std::vector<fs::path> artifacts = {cfg.training.log_path};
        if (result.best_epoch > 0) artifacts.insert(artifacts.begin(), cfg.training.checkpoint_path);
        write_manifest(cfg, "train", split_hash(split), artifacts);
        out << "checkpoint: " << cfg.training.checkpoint_path.string() << "\n";
        out << "log: " << cfg.training.log_path.string() << "\n";
        return kOk;
    } catch (const CheckpointError& e) {
        return fail(err, kTrainingIo, e.what());
    } catch (const IoError& e) {
        return fail(err, kTrainingIo, e.what());
    } catch (const ConfigError& e) {
        return fail(err, kUsage, e.what());
    } catch (const Error& e) {
        // shape/argument problems mean the cached data does not fit the model
        return fail(err, kData, e.what());
    }
}

int cmd_evaluate(const RunConfig& cfg, const fs::path& checkpoint, std::ostream& out,
                 std::ostream& err) {
    dataio::DatasetSplit split;
    try {
        split = obtain_split(cfg);
    } catch (const Error& e) {
        return fail(err, kData, e.what());
    }

    std::optional<segnet::SegmentationModel> model;
    const fs::path ckpt = checkpoint.empty() ? cfg.training.checkpoint_path : checkpoint;
    try {
        model = segnet::SegmentationModel::load_checkpoint(ckpt, cfg.model);
    } catch (const Error& e) {
        return fail(err, kCheckpoint, e.what());
    }

    try {
        const auto& samples = split.validation.empty() ? split.train : split.validation;
        report::EvalOptions opts;
        opts.batch_size = cfg.training.batch_size;
        opts.loss = cfg.training.loss;

        std::vector<trainer::EpochLog> history;
        if (fs::exists(cfg.training.log_path)) {
            try {
                history = trainer::parse_history_csv(cfg.training.log_path);
            } catch (const Error& e) {
                err << "warning: ignoring unreadable training log: " << e.what() << "\n";
            }
        }

        const auto art =
            report::write_reports(*model, samples, history, cfg.output_root / "reports", opts);
        out << art.metrics.to_json().dump(2) << "\n";
        err << "reports: " << (cfg.output_root / "reports").string() << " (" << art.files.size()
            << " files)\n";
        return kOk;
    } catch (const Error& e) {
        return fail(err, kTrainingIo, e.what());
    }
}

int cmd_explain(const RunConfig& cfg, const fs::path& checkpoint,
                const std::vector<std::string>& ids, const std::string& layer_override,
                std::ostream& out, std::ostream& err) {
    dataio::DatasetSplit split;
    try {
        split = obtain_split(cfg);
    } catch (const Error& e) {
        return fail(err, kData, e.what());
    }

    std::optional<segnet::SegmentationModel> model;
    const fs::path ckpt = checkpoint.empty() ? cfg.training.checkpoint_path : checkpoint;
    try {
        model = segnet::SegmentationModel::load_checkpoint(ckpt, cfg.model);
    } catch (const Error& e) {
        return fail(err, kCheckpoint, e.what());
    }

    const std::vector<std::string> layers =
        layer_override.empty() ? cfg.xai.layers : std::vector<std::string>{layer_override};
    for (const auto& layer : layers) {
        if (model->has_layer(layer)) continue;
        err << "error: unknown layer '" << layer << "'; registered layers:\n";
        for (const auto& name : model->layer_names()) err << "  " << name << "\n";
        return kXai;
    }

    // Default to the validation samples when no ids are requested.
    std::vector<dataio::PreprocessedSample> pool = split.train;
    pool.insert(pool.end(), split.validation.begin(), split.validation.end());
    std::vector<dataio::PreprocessedSample> chosen;
    if (ids.empty()) {
        chosen = split.validation.empty() ? split.train : split.validation;
    } else {
        for (const auto& id : ids) {
            bool found = false;
            for (const auto& s : pool)
                if (s.source_id == id) {
                    chosen.push_back(s);
                    found = true;
                    break;
                }
            if (!found) return fail(err, kData, "no sample with id '" + id + "'");
        }
    }

    try {
        xai::GradCamOptions opts;
        opts.use_logits = cfg.xai.use_logits;
        int files = 0;
        for (const auto& s : chosen) {
            const fs::path dir = cfg.output_root / "xai" / s.source_id;
            const auto art = xai::export_gradcam(*model, s, layers, dir, opts);
            // Keep only the requested classes when a subset was configured.
            if (!cfg.xai.classes.empty()) {
                for (const auto& png : art.overlays) {
                    bool keep = false;
                    for (int c : cfg.xai.classes)
                        if (png.filename().string().find("_class" + std::to_string(c) + "_") !=
                            std::string::npos)
                            keep = true;
                    if (!keep) fs::remove(png);
                }
            }
            files += static_cast<int>(art.overlays.size()) + 1;
        }
        out << "explained " << chosen.size() << " sample(s), " << layers.size() << " layer(s), "
            << files << " file(s) under " << (cfg.output_root / "xai").string() << "\n";
        return kOk;
    } catch (const Error& e) {
        return fail(err, kXai, e.what());
    }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"OCT retinal layer segmentation: prepare, train, evaluate, explain"};
    app.require_subcommand(1);

    std::string config_file, checkpoint, layer;
    std::vector<std::string> ids;

    CLI::App* prepare = app.add_subcommand("prepare", "Load, preprocess, split, and cache a dataset");
    prepare->add_option("--config", config_file, "JSON run configuration")->required();

    CLI::App* train = app.add_subcommand("train", "Train the segmentation model");
    train->add_option("--config", config_file, "JSON run configuration")->required();

    CLI::App* evaluate = app.add_subcommand("evaluate", "Write metric reports for a checkpoint");
    evaluate->add_option("--config", config_file, "JSON run configuration")->required();
    evaluate->add_option("--checkpoint", checkpoint, "checkpoint file (default: the training one)");

    CLI::App* explain = app.add_subcommand("explain", "Render per-class activation heatmaps");
    explain->add_option("--config", config_file, "JSON run configuration")->required();
    explain->add_option("--checkpoint", checkpoint, "checkpoint file (default: the training one)");
    explain->add_option("--ids", ids, "sample ids to explain (default: validation split)");
    explain->add_option("--layer", layer, "single layer override");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return kUsage;
    }

    RunConfig cfg;
    try {
        cfg = RunConfig::load(config_file);
    } catch (const Error& e) {
        return fail(err, kUsage, e.what());
    }

    if (prepare->parsed()) return cmd_prepare(cfg, out, err);
    if (train->parsed()) return cmd_train(cfg, out, err);
    if (evaluate->parsed()) return cmd_evaluate(cfg, checkpoint, out, err);
    return cmd_explain(cfg, checkpoint, ids, layer, out, err);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv = {"octseg"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace octseg::cli
