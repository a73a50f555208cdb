#ifndef OCTSEG_CLI_HPP
#define OCTSEG_CLI_HPP

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "octseg/dataio/dataset.hpp"
#include "octseg/segnet/model.hpp"
#include "octseg/trainer/trainer.hpp"

namespace octseg::cli {

// Stable exit-code contract for scripting.
enum ExitCode : int {
    kOk = 0,
    kUsage = 1,       // bad arguments or invalid config
    kData = 2,        // dataset loading / preprocessing problems
    kTrainingIo = 3,  // I/O failure while training or writing reports
    kCheckpoint = 4,  // missing or incompatible checkpoint
    kXai = 5,         // explanation-stage failure (unknown layer etc.)
};

struct DataConfig {
    std::filesystem::path path;
    dataio::ContainerLayout layout;
    double split_ratio = 0.8;
    uint64_t seed = 42;
};

struct XaiConfig {
    std::vector<std::string> layers = {"conv2d_19", "conv2d_20"};
    std::vector<int> classes;  // empty: every class
    bool use_logits = false;
};

struct RunConfig {
    DataConfig data;
    segnet::ArchitectureConfig model;
    trainer::TrainingConfig training;
    XaiConfig xai;
    std::filesystem::path output_root = "runs/default";

    // Parses the JSON file, applies the OCTSEG_DATA_DIR override, roots the
    // relative training output paths under output_root, and validates every
    // numeric field. Throws ConfigError.
    static RunConfig load(const std::filesystem::path& config_path);
    void validate() const;
    nlohmann::json to_json() const;
};

int cmd_prepare(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_evaluate(const RunConfig& cfg, const std::filesystem::path& checkpoint, std::ostream& out,
                 std::ostream& err);
int cmd_explain(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                const std::vector<std::string>& ids, const std::string& layer_override,
                std::ostream& out, std::ostream& err);

// Full argv dispatch: `octseg prepare|train|evaluate|explain --config <file> ...`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace octseg::cli

#endif
