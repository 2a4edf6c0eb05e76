#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cyclebnn/nn.hpp"

namespace cyclebnn {

struct MacEntry {
    std::string layer;
    int64_t raw_macs = 0;
    int bit_a = 32;
    int bit_b = 32;
    int64_t multiplicity = 1;
};

struct MacLedger {
    std::vector<MacEntry> entries;
};

// Raw MAC count of one layer for a per-sample input shape [c,h,w] (or
// [features] for linear layers). conv: c_out*h'*w'*c_in*k_h*k_w; linear:
// in*out; everything else: 0.
int64_t layer_macs(const LayerSpec& spec, const Shape& input);

// sum of count*multiplicity*(bit_a/32)*(bit_b/32)
double training_macs(const MacLedger& ledger);

struct MemoryLedger {
    double used_bytes = 0.0;
    double baseline_bytes = 0.0;
};

double memory_usage(const MemoryLedger& ledger);

struct LayerCost {
    std::string name;
    int64_t raw_macs = 0;
    bool binary = false;
    int64_t weight_count = 0;
    int64_t activation_count = 0; // per-sample output elements
};

// per-layer raw MACs and tensor sizes of a built network for one sample
std::vector<LayerCost> model_costs(Network& net, const Shape& input_chw);

// Cost accounting convention (printed in every report):
// forward counts binary layers at 1/1 and fp layers at 32/32; backward counts
// two conv-sized blocks per layer (grad-input, grad-weight) at PS(e)/8 bits
// for binary layers and 32/32 for fp layers. The baseline runs all three
// blocks at 32/32. The uniform regime instead applies bits/bits to every
// block of every layer (the constant-schedule identity cases).
struct CostReport {
    double baseline_macs = 0.0;
    double regime_macs = 0.0;
    double reduction_pct = 0.0;
    double memory_ratio = 1.0;
    std::string convention;
};

enum class CostConvention { cyclebnn, uniform };

CostReport run_report(const std::vector<int>& bits_per_epoch, const std::vector<LayerCost>& costs,
                      int64_t samples_per_epoch, CostConvention convention = CostConvention::cyclebnn,
                      int grad_bits = 8);

// adjusted MACs of one epoch under the cyclebnn convention (metrics.csv column)
double epoch_adjusted_macs(int ps_bits, const std::vector<LayerCost>& costs,
                           int64_t samples, int grad_bits = 8);

std::string cost_report_text(const CostReport& report);
std::string cost_report_csv(const CostReport& report);

} // namespace cyclebnn
