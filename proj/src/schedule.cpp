#include "cyclebnn/schedule.hpp"

#include <cmath>

#include "cyclebnn/error.hpp"

namespace cyclebnn {

ScheduleMode schedule_mode_from_string(const std::string& s) {
    if (s == "literal") return ScheduleMode::literal;
    if (s == "anchored") return ScheduleMode::anchored;
    throw Error("invalid-schedule-mode");
}

const char* to_string(ScheduleMode mode) {
    return mode == ScheduleMode::literal ? "literal" : "anchored";
}

CycleConfig::CycleConfig(int64_t total_epochs, int64_t cycles, int min_bits, int max_bits,
                         ScheduleMode mode)
    : total_epochs(total_epochs), cycles(cycles), min_bits(min_bits), max_bits(max_bits),
      mode(mode) {
    CBNN_CHECK(total_epochs >= 1, "invalid-cycle-config");
    CBNN_CHECK(cycles >= 1 && cycles <= total_epochs, "invalid-cycle-config");
    CBNN_CHECK(min_bits >= 1 && min_bits <= max_bits && max_bits <= 8, "invalid-cycle-config");
}

int precision_at(int64_t epoch, const CycleConfig& cfg) {
    CBNN_CHECK(epoch >= 0 && epoch < cfg.total_epochs, "epoch-out-of-range");
    const int64_t k = cfg.max_bits + 1 - cfg.min_bits; // cycle width V+1-v
    const int64_t n = cfg.total_epochs;
    // floor((x mod k)) for rational x = offset/n + k*e*c/n, done exactly over
    // the common denominator n: floor(((offset + k*e*c) mod (k*n)) / n).
    if (cfg.mode == ScheduleMode::anchored) {
        const int64_t inner = (k * epoch * cfg.cycles) % (k * n);
        return cfg.min_bits + static_cast<int>(inner / n);
    }
    const int64_t inner = (cfg.min_bits * n + k * epoch * cfg.cycles) % (k * n);
    return static_cast<int>(inner / n);
}

LrConfig::LrConfig(double initial_lr, int64_t total_steps, double min_lr)
    : initial_lr(initial_lr), total_steps(total_steps), min_lr(min_lr) {
    CBNN_CHECK(initial_lr > 0.0, "invalid-lr-config");
    CBNN_CHECK(total_steps >= 1, "invalid-lr-config");
    CBNN_CHECK(min_lr >= 0.0 && min_lr < initial_lr, "invalid-lr-config");
}

double lr_at(int64_t step, const LrConfig& cfg) {
    CBNN_CHECK(step >= 0 && step <= cfg.total_steps, "step-out-of-range");
    const double t = static_cast<double>(step) / static_cast<double>(cfg.total_steps);
    return cfg.min_lr +
           0.5 * (cfg.initial_lr - cfg.min_lr) * (1.0 + std::cos(3.14159265358979323846 * t));
}

} // namespace cyclebnn
