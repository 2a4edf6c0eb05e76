#pragma once

#include <cstdint>
#include <string>

namespace cyclebnn {

// Two readings of the cyclic schedule. `anchored` (the default everywhere)
// anchors the sweep at min_bits so emitted values cover [min_bits, max_bits].
// `literal` keeps min_bits inside the modulo, which shifts the output range to
// [0, max_bits - min_bits]; it is retained verbatim as a regression reference
// for the anchored variant. Do not merge the two.
enum class ScheduleMode { literal, anchored };

ScheduleMode schedule_mode_from_string(const std::string& s);
const char* to_string(ScheduleMode mode);

struct CycleConfig {
    int64_t total_epochs;
    int64_t cycles;
    int min_bits;
    int max_bits;
    ScheduleMode mode = ScheduleMode::anchored;

    CycleConfig(int64_t total_epochs, int64_t cycles, int min_bits, int max_bits,
                ScheduleMode mode = ScheduleMode::anchored);
};

// Cyclic precision schedule: bit width for epoch e. Evaluated in exact integer
// arithmetic so cycle wrap epochs are not subject to float rounding.
int precision_at(int64_t epoch, const CycleConfig& cfg);

struct LrConfig {
    double initial_lr;
    int64_t total_steps;
    double min_lr = 0.0;

    LrConfig(double initial_lr, int64_t total_steps, double min_lr = 0.0);
};

// cosine annealing from initial_lr to min_lr over total_steps
double lr_at(int64_t step, const LrConfig& cfg);

} // namespace cyclebnn
