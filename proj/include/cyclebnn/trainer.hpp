#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cyclebnn/data.hpp"
#include "cyclebnn/metrics.hpp"
#include "cyclebnn/nn.hpp"
#include "cyclebnn/schedule.hpp"

namespace cyclebnn {

// Flat key-value training configuration. Defaults mirror the training recipe
// (lr 0.001, batch 16, beta1 0.9, anchored 2-6 bits over 8 cycles). Unknown
// keys in a config file are an error.
struct TrainConfig {
    std::string arch = "convnet-small";
    int64_t epochs = 10;
    int64_t cycles = 8;
    int min_bits = 2;
    int max_bits = 6;
    ScheduleMode schedule_mode = ScheduleMode::anchored;
    int64_t batch_size = 16;
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 1e-4;
    double eps = 1e-8;
    uint64_t seed = 1;
    std::string dataset = "synth"; // "synth" | "idx"
    int64_t synth_n = 2000;
    int64_t synth_test_n = 500;
    std::string train_images, train_labels, test_images, test_labels;
    int64_t train_subset = 0; // 0 = use all
    std::string out_dir = "out";
    int grad_bits = 8;
    bool binarize_first_last = false;
};

// Parses `key = value` lines ('#' comments); throws Error("config:...") on
// unknown keys, bad values, or violated invariants.
TrainConfig parse_train_config(const std::string& path);
void validate(const TrainConfig& cfg);

struct EpochRow {
    int64_t epoch;
    int bits;
    double lr;
    double loss;
    double train_acc;
    double test_acc;
    double cum_macs;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochRow& row);

struct TrainResult {
    std::vector<EpochRow> rows;
    CostReport cost;
    std::string checkpoint_path;
    std::string metrics_path;
};

// Full cyclic-precision training loop. Writes metrics.csv, cost_report.csv,
// cost_report.txt and model.cbnn into cfg.out_dir. Throws Error("diverged")
// if the loss goes non-finite.
TrainResult run_training(const TrainConfig& cfg, std::ostream& log);

// held-out split used when dataset = synth (documented: seed+1)
Dataset synth_test_split(const TrainConfig& cfg);

// top-1 accuracy of the float inference path
double evaluate(Network& net, const Dataset& ds, int64_t batch_size = 64);

// Bit-packed inference: binary conv layers run through the XNOR/popcount
// kernel on pre-packed weights, everything else identical to the float path.
struct PackedEval {
    double accuracy = 0.0;
    bool paths_agree = false;
    double float_samples_per_sec = 0.0;
    double packed_samples_per_sec = 0.0;
};
PackedEval evaluate_packed(Network& net, const Dataset& ds, int64_t batch_size = 64);

// checkpoint glue: model parameters + BN buffers + meta records
void save_model(const std::string& path, Network& net, const TrainConfig& cfg, const Shape& input_chw,
                int64_t class_count);

struct LoadedModel {
    Network net;
    Shape input_chw;
    int64_t class_count = 0;
    bool binarize_first_last = false;
};
LoadedModel load_model(const std::string& path);

} // namespace cyclebnn
