#ifndef OCTSEG_TRAINER_CALLBACKS_HPP
#define OCTSEG_TRAINER_CALLBACKS_HPP

#include <filesystem>
#include <fstream>
#include <limits>
#include <vector>

#include "octseg/common.hpp"
#include "octseg/segnet/model.hpp"

namespace octseg::trainer {

// The four epoch-end callbacks, written as plain state machines so their
// transition behavior can be tested without running any training.
// "Improvement" is strict: new < best - min_delta.

struct ReduceLrConfig {
    int patience = 5;
    double factor = 0.5;
    double min_lr = 1e-6;
    double min_delta = 0.0;
    void validate() const;
};

class ReduceLrOnPlateau {
public:
    ReduceLrOnPlateau(const ReduceLrConfig& cfg, double initial_lr);
    // Epoch-end observation; returns the learning rate for the next epoch.
    double observe(double monitored);
    double lr() const { return lr_; }

private:
    ReduceLrConfig cfg_;
    double lr_;
    double best_ = std::numeric_limits<double>::infinity();
    int wait_ = 0;
};

struct EarlyStopConfig {
    int patience = 10;
    double min_delta = 0.0;
    void validate() const;
};

class EarlyStopping {
public:
    explicit EarlyStopping(const EarlyStopConfig& cfg);
    bool observe(double monitored);  // true -> stop now
    bool stopped() const { return stopped_; }

private:
    EarlyStopConfig cfg_;
    double best_ = std::numeric_limits<double>::infinity();
    int wait_ = 0;
    bool stopped_ = false;
};

class BestCheckpoint {
public:
    explicit BestCheckpoint(std::filesystem::path path);
    // Persists the model iff `monitored` strictly beats the best seen.
    bool observe(double monitored, const segnet::SegmentationModel& model);
    double best() const { return best_; }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    double best_ = std::numeric_limits<double>::infinity();
};

struct EpochLog {
    int epoch = 0;  // 1-based, matching the log file
    double loss = 0.0;
    double accuracy = 0.0;
    double dice = 0.0;
    double iou = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
    double val_dice = 0.0;
    double val_iou = 0.0;
    double learning_rate = 0.0;
};

// Writes the header on construction and one flushed row per append, so a
// crash mid-training leaves a complete log of every finished epoch.
class CsvLogger {
public:
    explicit CsvLogger(const std::filesystem::path& path);
    void append(const EpochLog& row);
    static const char* header();

private:
    std::ofstream out_;
    std::filesystem::path path_;
};

std::vector<EpochLog> parse_history_csv(const std::filesystem::path& path);

}  // namespace octseg::trainer

#endif
