#include "cyclebnn/quant.hpp"

#include <algorithm>
#include <cmath>

#include "cyclebnn/error.hpp"

namespace cyclebnn {

QuantSpec::QuantSpec(int bits, double min_value, double max_value)
    : bits(bits), min_value(min_value), max_value(max_value) {
    CBNN_CHECK(bits >= 1 && bits <= 32, "invalid-quant-spec");
    CBNN_CHECK(min_value < max_value, "invalid-quant-spec");
    CBNN_CHECK(std::isfinite(min_value) && std::isfinite(max_value), "invalid-quant-spec");
}

double sign(double x) {
    CBNN_CHECK(std::isfinite(x), "non-finite-input");
    return x < 0.0 ? -1.0 : 1.0;
}

namespace {

inline double lattice_round(double x, const QuantSpec& spec) {
    // levels = 2^p - 1 lattice steps; k*(span)/levels is evaluated with the
    // multiplication first so both endpoints are reproduced exactly.
    const double levels = static_cast<double>((int64_t{1} << spec.bits) - 1);
    const double span = spec.max_value - spec.min_value;
    const double k = std::floor((x - spec.min_value) * levels / span + 0.5);
    return spec.min_value + k * span / levels;
}

} // namespace

double quantize(double x, const QuantSpec& spec) {
    CBNN_CHECK(std::isfinite(x), "non-finite-input");
    return lattice_round(std::clamp(x, spec.min_value, spec.max_value), spec);
}

double quantize_unclamped(double x, const QuantSpec& spec) {
    CBNN_CHECK(std::isfinite(x), "non-finite-input");
    return lattice_round(x, spec);
}

Tensor quantize_tensor(const Tensor& t, const QuantSpec& spec) {
    Tensor out(t.shape());
    for (int64_t i = 0; i < t.numel(); ++i)
        out[i] = static_cast<float>(quantize(static_cast<double>(t[i]), spec));
    return out;
}

Tensor standardize(const Tensor& w) {
    const auto [mean, sigma] = stats(w);
    (void)mean;
    CBNN_CHECK(sigma > 0.0, "zero-variance-weights");
    Tensor out(w.shape());
    for (int64_t i = 0; i < w.numel(); ++i)
        out[i] = static_cast<float>(static_cast<double>(w[i]) / sigma);
    return out;
}

GaussianFit::GaussianFit(double amplitude, double mean, double sigma)
    : amplitude(amplitude), mean(mean), sigma(sigma) {
    CBNN_CHECK(amplitude > 0.0 && sigma > 0.0, "invalid-gaussian-fit");
    CBNN_CHECK(std::isfinite(amplitude) && std::isfinite(mean) && std::isfinite(sigma),
               "invalid-gaussian-fit");
}

void validate(const QEConfig& cfg) {
    CBNN_CHECK(cfg.lo < cfg.hi, "invalid-qe-config");
    CBNN_CHECK(cfg.steps >= 1000, "invalid-qe-config");
    CBNN_CHECK(cfg.quant_lo < cfg.quant_hi, "invalid-qe-config");
    CBNN_CHECK(std::isfinite(cfg.alpha), "invalid-qe-config");
}

double quantization_error(const GaussianFit& fit, int bits, const QEConfig& cfg) {
    validate(cfg);
    const QuantSpec spec(bits, cfg.quant_lo, cfg.quant_hi);
    const double h = (cfg.hi - cfg.lo) / static_cast<double>(cfg.steps);
    const double inv_two_sigma_sq = 1.0 / (2.0 * fit.sigma * fit.sigma);

    double acc = 0.0;
    for (int64_t i = 0; i < cfg.steps; ++i) {
        const double w = cfg.lo + (static_cast<double>(i) + 0.5) * h;
        const double q = quantize_unclamped(w, spec);
        const double d = q - fit.mean;
        const double f = fit.amplitude * std::exp(-d * d * inv_two_sigma_sq);
        const double r = q - cfg.alpha * (q < 0.0 ? -1.0 : 1.0);
        acc += f * r * r;
    }
    const double result = acc * h;
    CBNN_CHECK(std::isfinite(result), "integration-failure");
    return result;
}

} // namespace cyclebnn
