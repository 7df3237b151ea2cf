#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "occap/param_store.hpp"

namespace occap::num {

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction. Requires every parameter to carry a gradient;
// clears gradients after the update.
class AdamState {
public:
    explicit AdamState(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(ParamStore& params);

    std::int64_t step_count() const { return step_count_; }
    AdamConfig& config() { return cfg_; }
    const AdamConfig& config() const { return cfg_; }

    // Exposed for checkpointing.
    std::map<std::string, std::vector<double>>& first_moments() { return m_; }
    std::map<std::string, std::vector<double>>& second_moments() { return v_; }
    const std::map<std::string, std::vector<double>>& first_moments() const { return m_; }
    const std::map<std::string, std::vector<double>>& second_moments() const { return v_; }
    void set_step_count(std::int64_t t) { step_count_ = t; }

private:
    AdamConfig cfg_;
    std::int64_t step_count_ = 0;
    std::map<std::string, std::vector<double>> m_;
    std::map<std::string, std::vector<double>> v_;
};

struct SgdConfig {
    double lr = 0.1;
    double momentum = 0.9;
};

class SgdMomentum {
public:
    explicit SgdMomentum(SgdConfig cfg = {}) : cfg_(cfg) {}

    void step(ParamStore& params);

    double learning_rate() const { return cfg_.lr; }
    void set_learning_rate(double lr) { cfg_.lr = lr; }

private:
    SgdConfig cfg_;
    std::map<std::string, std::vector<double>> velocity_;
};

// Reduce-on-plateau: multiplies the learning rate by `factor` after
// `patience` consecutive epochs without improvement.
class PlateauScheduler {
public:
    PlateauScheduler(int patience, double factor, double threshold = 1e-10)
        : patience_(patience), factor_(factor), threshold_(threshold) {}

    // Returns true when the learning rate was reduced this call.
    bool observe(double loss, SgdMomentum& opt);

private:
    int patience_;
    double factor_;
    double threshold_;
    double best_ = 0.0;
    bool seen_ = false;
    int stall_ = 0;
};

} // namespace occap::num
