#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cyclebnn/trainer.hpp"

namespace cyclebnn {

// Subcommand bodies, CLI-framework free so tests can drive them directly.
// Exit codes: 0 success, 2 usage/validation, 3 runtime numerical failure.

int cmd_train(const std::string& config_path, std::ostream& out, std::ostream& err);

struct EvalOptions {
    std::string checkpoint;
    bool packed = false;
    std::string packed_model; // optional CBNP file to verify against
    bool use_synth = true;
    int64_t synth_n = 500;
    uint64_t synth_seed = 2;
    std::string images, labels;
    int64_t batch = 64;
};
int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err);

int cmd_schedule(int64_t total_epochs, int64_t cycles, int min_bits, int max_bits,
                 const std::string& mode, double initial_lr, const std::string& out_path,
                 std::ostream& out, std::ostream& err);

struct QeOptions {
    std::string fits_file;  // CSV of A,mu,sigma per row
    std::string checkpoint; // or: fit each binary layer's weight histogram
    std::string out_path;   // "-" = stdout
    std::vector<int> bits = {2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
    double alpha = 1.0;
    double lo = -15.0;
    double hi = 15.0;
    int64_t steps = 300000;
    double quant_lo = -1.0;
    double quant_hi = 1.0;
};
int cmd_qe(const QeOptions& opt, std::ostream& out, std::ostream& err);

int cmd_pack(const std::string& checkpoint, const std::string& out_path, std::ostream& out,
             std::ostream& err);

// asserts a CBNP file is byte-equivalent to re-packing the checkpoint
void verify_packed_model(const std::string& path, LoadedModel& model);

// least-squares Gaussian fit helper used by cmd_qe --checkpoint (log-domain
// weighted quadratic fit of the value histogram); returns false if degenerate
struct HistogramFit {
    bool ok = false;
    double amplitude = 0.0;
    double mean = 0.0;
    double sigma = 0.0;
};
HistogramFit fit_gaussian_histogram(const std::vector<float>& values, int bin_count = 64);

} // namespace cyclebnn
