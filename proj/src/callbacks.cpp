#include "octseg/trainer/callbacks.hpp"

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <sstream>

namespace octseg::trainer {

void ReduceLrConfig::validate() const {
    if (patience < 1) throw ConfigError("reduce_lr.patience must be >= 1");
    if (!(factor > 0.0 && factor < 1.0)) throw ConfigError("reduce_lr.factor must be in (0, 1)");
    if (min_lr < 0.0) throw ConfigError("reduce_lr.min_lr must be >= 0");
    if (min_delta < 0.0) throw ConfigError("reduce_lr.min_delta must be >= 0");
}

ReduceLrOnPlateau::ReduceLrOnPlateau(const ReduceLrConfig& cfg, double initial_lr)
    : cfg_(cfg), lr_(initial_lr) {
    cfg.validate();
    if (initial_lr <= 0.0) throw ConfigError("initial learning rate must be > 0");
}

double ReduceLrOnPlateau::observe(double monitored) {
    if (monitored < best_ - cfg_.min_delta) {
        best_ = monitored;
        wait_ = 0;
        return lr_;
    }
    if (++wait_ >= cfg_.patience) {
        lr_ = std::max(lr_ * cfg_.factor, cfg_.min_lr);
        wait_ = 0;
    }
    return lr_;
}

void EarlyStopConfig::validate() const {
    if (patience < 1) throw ConfigError("early_stop.patience must be >= 1");
    if (min_delta < 0.0) throw ConfigError("early_stop.min_delta must be >= 0");
}

EarlyStopping::EarlyStopping(const EarlyStopConfig& cfg) : cfg_(cfg) { cfg.validate(); }

bool EarlyStopping::observe(double monitored) {
    if (monitored < best_ - cfg_.min_delta) {
        best_ = monitored;
        wait_ = 0;
        return false;
    }
    if (++wait_ >= cfg_.patience) stopped_ = true;
    return stopped_;
}

BestCheckpoint::BestCheckpoint(std::filesystem::path path) : path_(std::move(path)) {
    try {
        if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    } catch (const std::filesystem::filesystem_error& e) {
        throw IoError("cannot create checkpoint directory for " + path_.string() + ": " + e.what());
    }
}

bool BestCheckpoint::observe(double monitored, const segnet::SegmentationModel& model) {
    if (!(monitored < best_)) return false;  // ties do not overwrite
    best_ = monitored;
    model.save_checkpoint(path_);
    return true;
}

const char* CsvLogger::header() {
    return "epoch,loss,accuracy,dice_coefficient,iou,val_loss,val_accuracy,"
           "val_dice_coefficient,val_iou,learning_rate";
}

CsvLogger::CsvLogger(const std::filesystem::path& path) : path_(path) {
    try {
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    } catch (const std::filesystem::filesystem_error& e) {
        throw IoError("cannot create log directory for " + path.string() + ": " + e.what());
    }
    out_.open(path, std::ios::trunc);
    if (!out_) throw IoError("cannot open training log: " + path.string());
    out_ << header() << "\n";
    out_.flush();
    if (!out_) throw IoError("cannot write training log: " + path.string());
}

void CsvLogger::append(const EpochLog& row) {
    char buf[512];
    // 17 significant digits reproduce a double exactly on parse-back.
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  row.epoch, row.loss, row.accuracy, row.dice, row.iou, row.val_loss,
                  row.val_accuracy, row.val_dice, row.val_iou, row.learning_rate);
    out_ << buf;
    out_.flush();
    if (!out_) throw IoError("failed appending to training log: " + path_.string());
}

std::vector<EpochLog> parse_history_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open history: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty history file: " + path.string());
    if (line != CsvLogger::header())
        throw IoError("unexpected history header in " + path.string() + ": " + line);

    std::vector<EpochLog> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        double v[10];
        for (int i = 0; i < 10; ++i) {
            if (!std::getline(ss, cell, ','))
                throw IoError("short history row: " + line);
            v[i] = std::stod(cell);
        }
        EpochLog r;
        r.epoch = static_cast<int>(v[0]);
        r.loss = v[1];
        r.accuracy = v[2];
        r.dice = v[3];
        r.iou = v[4];
        r.val_loss = v[5];
        r.val_accuracy = v[6];
        r.val_dice = v[7];
        r.val_iou = v[8];
        r.learning_rate = v[9];
        rows.push_back(r);
    }
    return rows;
}

}  // namespace octseg::trainer
