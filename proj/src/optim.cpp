#include "cyclebnn/optim.hpp"

#include <cmath>

#include "cyclebnn/error.hpp"

namespace cyclebnn {

void AdamW::step(const std::vector<Parameter*>& params, double lr) {
    CBNN_CHECK(lr > 0.0, "invalid-learning-rate");
    if (m_.empty()) {
        m_.resize(params.size());
        s_.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(static_cast<size_t>(params[i]->real.numel()), 0.0);
            s_[i].assign(static_cast<size_t>(params[i]->real.numel()), 0.0);
        }
    }
    CBNN_CHECK(m_.size() == params.size(), "optimizer-state-mismatch");

    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));

    for (size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        CBNN_CHECK(static_cast<size_t>(p.real.numel()) == m_[pi].size(),
                   "optimizer-state-mismatch");
        auto& m = m_[pi];
        auto& s = s_[pi];
        for (int64_t i = 0; i < p.real.numel(); ++i) {
            const double g = p.grad[i];
            CBNN_CHECK(std::isfinite(g), "non-finite-gradient");
            m[static_cast<size_t>(i)] = cfg_.beta1 * m[static_cast<size_t>(i)] +
                                        (1.0 - cfg_.beta1) * g;
            s[static_cast<size_t>(i)] = cfg_.beta2 * s[static_cast<size_t>(i)] +
                                        (1.0 - cfg_.beta2) * g * g;
            const double mhat = m[static_cast<size_t>(i)] / bc1;
            const double shat = s[static_cast<size_t>(i)] / bc2;
            const double w = p.real[i];
            const double next =
                w - lr * (mhat / (std::sqrt(shat) + cfg_.eps) + cfg_.weight_decay * w);
            CBNN_CHECK(std::isfinite(next), "non-finite-gradient");
            p.real[i] = static_cast<float>(next);
        }
    }
}

} // namespace cyclebnn
