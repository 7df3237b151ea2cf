#include "occap/optim.hpp"

#include <cmath>

#include "occap/errors.hpp"

namespace occap::num {

void AdamState::step(ParamStore& params) {
    for (auto& [name, p] : params) {
        if (!p.has_grad()) throw ContractError("adam_step: parameter '" + name + "' has no gradient");
    }
    step_count_ += 1;
    const double t = static_cast<double>(step_count_);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t);
    for (auto& [name, p] : params) {
        auto& m = m_[name];
        auto& v = v_[name];
        if (m.empty()) m.assign(static_cast<std::size_t>(p.size()), 0.0);
        if (v.empty()) v.assign(static_cast<std::size_t>(p.size()), 0.0);
        const auto& g = p.grad();
        auto& x = p.data();
        for (std::size_t i = 0; i < x.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            x[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
    params.clear_all_grads();
}

void SgdMomentum::step(ParamStore& params) {
    for (auto& [name, p] : params) {
        if (!p.has_grad()) throw ContractError("sgd_step: parameter '" + name + "' has no gradient");
    }
    for (auto& [name, p] : params) {
        auto& vel = velocity_[name];
        if (vel.empty()) vel.assign(static_cast<std::size_t>(p.size()), 0.0);
        const auto& g = p.grad();
        auto& x = p.data();
        for (std::size_t i = 0; i < x.size(); ++i) {
            vel[i] = cfg_.momentum * vel[i] - cfg_.lr * g[i];
            x[i] += vel[i];
        }
    }
    params.clear_all_grads();
}

bool PlateauScheduler::observe(double loss, SgdMomentum& opt) {
    if (!seen_ || loss < best_ - threshold_) {
        best_ = loss;
        seen_ = true;
        stall_ = 0;
        return false;
    }
    if (++stall_ >= patience_) {
        opt.set_learning_rate(opt.learning_rate() * factor_);
        stall_ = 0;
        return true;
    }
    return false;
}

} // namespace occap::num
