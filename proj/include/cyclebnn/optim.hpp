#pragma once

#include <cstdint>
#include <vector>

#include "cyclebnn/nn.hpp"

namespace cyclebnn {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
};

// AdamW with decoupled weight decay:
//   m <- b1*m + (1-b1)*g,  s <- b2*s + (1-b2)*g^2
//   w <- w - lr*(mhat/(sqrt(shat)+eps) + wd*w)
// Moment state is keyed by parameter order and sized lazily on the first step.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

    void step(const std::vector<Parameter*>& params, double lr);

    int64_t step_count() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }

private:
    AdamWConfig cfg_;
    int64_t t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> s_;
};

} // namespace cyclebnn
