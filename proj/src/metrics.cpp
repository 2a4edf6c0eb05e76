#include "cyclebnn/metrics.hpp"

#include <cmath>
#include <sstream>

#include "cyclebnn/error.hpp"

namespace cyclebnn {

int64_t layer_macs(const LayerSpec& spec, const Shape& input) {
    using K = LayerSpec::Kind;
    switch (spec.kind) {
    case K::fp_conv:
    case K::binary_conv: {
        CBNN_CHECK(input.rank() == 3, "incompatible-shapes");
        const int64_t h = input[1];
        const int64_t w = input[2];
        CBNN_CHECK(spec.kernel >= 1 && spec.stride >= 1 && spec.padding >= 0 &&
                       spec.out_channels >= 1,
                   "incompatible-shapes");
        CBNN_CHECK(spec.kernel <= h + 2 * spec.padding && spec.kernel <= w + 2 * spec.padding,
                   "incompatible-shapes");
        const int64_t oh = (h + 2 * spec.padding - spec.kernel) / spec.stride + 1;
        const int64_t ow = (w + 2 * spec.padding - spec.kernel) / spec.stride + 1;
        return spec.out_channels * oh * ow * input[0] * spec.kernel * spec.kernel;
    }
    case K::fp_linear:
    case K::binary_linear:
        CBNN_CHECK(input.rank() == 1 && spec.out_channels >= 1, "incompatible-shapes");
        return input[0] * spec.out_channels;
    default:
        return 0;
    }
}

double training_macs(const MacLedger& ledger) {
    double total = 0.0;
    for (const MacEntry& e : ledger.entries) {
        CBNN_CHECK(e.raw_macs >= 0 && e.multiplicity >= 0, "incompatible-shapes");
        CBNN_CHECK(e.bit_a >= 1 && e.bit_a <= 32 && e.bit_b >= 1 && e.bit_b <= 32,
                   "invalid-bit-width");
        total += static_cast<double>(e.raw_macs) * static_cast<double>(e.multiplicity) *
                 (static_cast<double>(e.bit_a) / 32.0) * (static_cast<double>(e.bit_b) / 32.0);
    }
    return total;
}

double memory_usage(const MemoryLedger& ledger) {
    CBNN_CHECK(ledger.baseline_bytes > 0.0, "zero-baseline");
    return ledger.used_bytes / ledger.baseline_bytes;
}

std::vector<LayerCost> model_costs(Network& net, const Shape& input_chw) {
    std::vector<LayerCost> out;
    Shape cur = input_chw;
    int idx = 0;
    for (auto& layer : net.layers) {
        LayerCost cost;
        cost.name = "l" + std::to_string(idx++) + ":" + to_string(layer->kind());
        cost.raw_macs = layer->mac_count(cur);
        cost.binary = layer->kind() == LayerSpec::Kind::binary_conv ||
                      layer->kind() == LayerSpec::Kind::binary_linear;
        for (Parameter* p : layer->parameters()) cost.weight_count += p->real.numel();
        cur = layer->output_shape(cur);
        cost.activation_count = cur.numel();
        out.push_back(cost);
    }
    return out;
}

namespace {

// one epoch of adjusted MACs per sample; the baseline runs the same three
// blocks (forward + grad-input + grad-weight) at 32/32
double per_sample_regime(int ps_bits, const std::vector<LayerCost>& costs, int grad_bits) {
    double total = 0.0;
    for (const LayerCost& c : costs) {
        const double raw = static_cast<double>(c.raw_macs);
        if (c.binary) {
            total += raw * (1.0 / 32.0) * (1.0 / 32.0);
            total += 2.0 * raw * (static_cast<double>(ps_bits) / 32.0) *
                     (static_cast<double>(grad_bits) / 32.0);
        } else {
            total += 3.0 * raw;
        }
    }
    return total;
}

double per_sample_uniform(int bits, const std::vector<LayerCost>& costs) {
    double total = 0.0;
    const double f = static_cast<double>(bits) / 32.0;
    for (const LayerCost& c : costs) total += 3.0 * static_cast<double>(c.raw_macs) * f * f;
    return total;
}

double per_sample_baseline(const std::vector<LayerCost>& costs) {
    double total = 0.0;
    for (const LayerCost& c : costs) total += 3.0 * static_cast<double>(c.raw_macs);
    return total;
}

// Peak training bytes under the regime: binary layers store 1-bit weights and
// 8-bit activations/gradients, fp layers stay at 32; baseline is all-32.
double regime_bytes(const std::vector<LayerCost>& costs, int bits_weights, int bits_act,
                    bool uniform, int uniform_bits) {
    double bytes = 0.0;
    for (const LayerCost& c : costs) {
        const int wb = uniform ? uniform_bits : (c.binary ? bits_weights : 32);
        const int ab = uniform ? uniform_bits : (c.binary ? bits_act : 32);
        bytes += static_cast<double>(c.weight_count) * wb / 8.0;
        bytes += 2.0 * static_cast<double>(c.activation_count) * ab / 8.0; // act + grad
    }
    return bytes;
}

} // namespace

double epoch_adjusted_macs(int ps_bits, const std::vector<LayerCost>& costs, int64_t samples,
                           int grad_bits) {
    return per_sample_regime(ps_bits, costs, grad_bits) * static_cast<double>(samples);
}

CostReport run_report(const std::vector<int>& bits_per_epoch, const std::vector<LayerCost>& costs,
                      int64_t samples_per_epoch, CostConvention convention, int grad_bits) {
    CostReport report;
    const double base = per_sample_baseline(costs) * static_cast<double>(samples_per_epoch);
    for (int bits : bits_per_epoch) {
        report.baseline_macs += base;
        if (convention == CostConvention::uniform)
            report.regime_macs +=
                per_sample_uniform(bits, costs) * static_cast<double>(samples_per_epoch);
        else
            report.regime_macs +=
                per_sample_regime(bits, costs, grad_bits) * static_cast<double>(samples_per_epoch);
    }
    report.reduction_pct =
        report.baseline_macs > 0.0
            ? 100.0 * (1.0 - report.regime_macs / report.baseline_macs)
            : 0.0;

    const double base_bytes = regime_bytes(costs, 32, 32, true, 32);
    const double used_bytes = convention == CostConvention::uniform
                                  ? regime_bytes(costs, 0, 0, true,
                                                 bits_per_epoch.empty() ? 32 : bits_per_epoch[0])
                                  : regime_bytes(costs, 1, grad_bits, false, 0);
    report.memory_ratio = memory_usage({used_bytes, base_bytes});

    report.convention =
        convention == CostConvention::uniform
            ? "uniform: every pass of every layer at schedule-bits/schedule-bits"
            : "forward: binary 1/1, fp 32/32; backward: 2 blocks/layer, binary PS(e)/" +
                  std::to_string(grad_bits) + ", fp 32/32";
    return report;
}

std::string cost_report_text(const CostReport& report) {
    std::ostringstream os;
    os.precision(6);
    os << "# training cost report\n";
    os << "# convention: " << report.convention << "\n";
    os << "adjusted MACs (32/32 baseline): " << report.baseline_macs << "\n";
    os << "adjusted MACs (regime):         " << report.regime_macs << "\n";
    os << "reduction: " << report.reduction_pct << "%\n";
    os << "peak memory ratio: " << report.memory_ratio << "\n";
    return os.str();
}

std::string cost_report_csv(const CostReport& report) {
    std::ostringstream os;
    os.precision(10);
    os << "baseline_macs,regime_macs,reduction_pct,memory_ratio\n";
    os << report.baseline_macs << "," << report.regime_macs << "," << report.reduction_pct << ","
       << report.memory_ratio << "\n";
    return os.str();
}

} // namespace cyclebnn
