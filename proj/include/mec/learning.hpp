#pragma once

#include <functional>
#include <optional>

#include "mec/markov.hpp"
#include "mec/model.hpp"

namespace mec {

// What the base station sees in one frame.
struct FrameObservation {
    bool arrival = false;
    double pathloss = 0.0;
    double cpu_freq_hz = 0.0;
    double cycles_per_bit = 0.0;

    static FrameObservation from(const std::optional<Task>& task);
};

// Running means of the arrival indicator, 1/rho, and the local cost.
struct EstimatorState {
    long t = 0;  // frames observed
    long n = 0;  // arrivals observed
    double p_hat = 0.0;
    double varpi_hat = 0.0;
    double cbar_hat = 0.0;

    ChainStats stats() const { return {p_hat, varpi_hat, cbar_hat}; }
};

// The local-cost sample averages C over every d in [d_min, d_max] at the
// observed (f, l).
EstimatorState update_estimators(EstimatorState est, const FrameObservation& obs, const ModelParams& params);

struct ReferenceGradient {
    double value = 0.0;     // e1^T (I - gamma Phi)^-1 c
    double gradient = 0.0;  // d value / d p_r
    double residual = 0.0;  // largest residual of the two solves
};

// Objective and gradient of the reference-state value in p_r, using the
// full cost vector c (holding and local-cost terms included). p_r is
// params.receive_power_w.
ReferenceGradient reference_gradient(const ModelParams& params, const ChainStats& stats);
inline double gradient_pr(double p_r, ModelParams params, const ChainStats& stats) {
    params.receive_power_w = p_r;
    return reference_gradient(params, stats).gradient;
}

enum class StepSchedule {
    harmonic,          // eta0 / n
    delayed_harmonic,  // eta0 / (1 + (n - 1) / decay_iterations)
};

struct SgdConfig {
    StepSchedule schedule = StepSchedule::harmonic;
    // If eta0 <= 0 it is set on the first step to
    // first_step_fraction * p_r / |gradient|.
    double eta0 = 0.0;
    double first_step_fraction = 1e-2;
    double decay_iterations = 100.0;
    double p_floor = 1e-12;
    double p_cap = 1.0;

    double step_size(long n, double eta0_value) const;
};

struct SgdState {
    long n = 0;
    double p_r = 1e-9;
    double eta0 = 0.0;  // resolved step-size scale
    double last_gradient = 0.0;
    double last_step = 0.0;
};

using GradientFn = std::function<double(double p_r)>;

// One projected step p_r <- clamp(p_r - eta_n * gradient(p_r), p_floor, p_cap).
SgdState sgd_step(SgdState sgd, const SgdConfig& config, const GradientFn& gradient);
// The step with the reference-state gradient at the current estimates.
SgdState sgd_step(SgdState sgd, const SgdConfig& config, const ModelParams& params, const ChainStats& stats);

}  // namespace mec
