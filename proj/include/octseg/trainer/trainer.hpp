#ifndef OCTSEG_TRAINER_HPP
#define OCTSEG_TRAINER_HPP

#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

#include <nlohmann/json.hpp>

#include "octseg/dataio/dataset.hpp"
#include "octseg/objectives/objectives.hpp"
#include "octseg/segnet/model.hpp"
#include "octseg/trainer/callbacks.hpp"

namespace octseg::trainer {

struct TrainingConfig {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-7;
    int batch_size = 32;
    int epochs = 100;
    uint64_t seed = 42;
    ReduceLrConfig reduce_lr;
    EarlyStopConfig early_stop;
    std::filesystem::path checkpoint_path = "best_model.ckpt";
    std::filesystem::path log_path = "training_log.csv";
    objectives::LossConfig loss;

    void validate() const;
};

void to_json(nlohmann::json& j, const TrainingConfig& c);
void from_json(const nlohmann::json& j, TrainingConfig& c);

struct TrainResult {
    std::vector<EpochLog> history;  // one row per completed epoch, 1-based
    int best_epoch = 0;             // epoch whose weights are in the checkpoint (0: none)
    double best_val_loss = std::numeric_limits<double>::infinity();
    bool early_stopped = false;
};

// Mini-batch Adam on the hybrid loss. Trains `model` in place, runs the
// validation pass plus the four callbacks (reduce-LR, early-stop, best
// checkpoint, CSV log, in that order) at every epoch end, and leaves the
// best-validation-loss weights on disk. Both output paths are probed before
// the first batch so an unwritable location fails fast.
TrainResult train(segnet::SegmentationModel& model, const dataio::DatasetSplit& split,
                  const TrainingConfig& config);

}  // namespace octseg::trainer

#endif
