#include "mec/learning.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mec/valuefn.hpp"

namespace mec {

FrameObservation FrameObservation::from(const std::optional<Task>& task) {
    FrameObservation obs;
    if (task) {
        obs.arrival = true;
        obs.pathloss = task->pathloss;
        obs.cpu_freq_hz = task->cpu_freq_hz;
        obs.cycles_per_bit = task->cycles_per_bit;
    }
    return obs;
}

EstimatorState update_estimators(EstimatorState est, const FrameObservation& obs, const ModelParams& params) {
    est.t += 1;
    const double t = static_cast<double>(est.t);
    est.p_hat = (t - 1.0) / t * est.p_hat + (obs.arrival ? 1.0 : 0.0) / t;
    if (!obs.arrival) return est;
    if (!(obs.pathloss > 0.0) || !(obs.cpu_freq_hz > 0.0) || !(obs.cycles_per_bit > 0.0))
        throw std::invalid_argument("update_estimators: arrival needs positive pathloss, f and l");
    est.n += 1;
    const double n = static_cast<double>(est.n);
    est.varpi_hat = (n - 1.0) / n * est.varpi_hat + 1.0 / (n * obs.pathloss);
    const double sample = local_cost_over_segments(obs.cpu_freq_hz, obs.cycles_per_bit, params);
    est.cbar_hat = (n - 1.0) / n * est.cbar_hat + sample / n;
    return est;
}

ReferenceGradient reference_gradient(const ModelParams& params, const ChainStats& stats) {
    const double p_r = params.receive_power_w;
    const ChainIndex index = ChainIndex::from_params(params);
    const DiscountedChain chain(build_phi(params, p_r, stats.arrival_prob), params.discount);
    const Eigen::VectorXd c = build_c(params, p_r, stats);
    ReferenceGradient out;
    const Eigen::VectorXd x = chain.solve(c);
    out.residual = chain.last_residual();
    out.value = x(0);
    // v^T A^-1 r = (A^-T v)^T r with r = dc + gamma dPhi x
    const Eigen::VectorXd z = chain.solve_transposed(reference_entry(index));
    out.residual = std::max(out.residual, chain.last_residual());
    const Eigen::VectorXd r =
        build_dc(stats.varpi, index) + params.discount * (build_dphi(params, p_r, stats.arrival_prob) * x);
    out.gradient = z.dot(r);
    return out;
}

double SgdConfig::step_size(long n, double eta0_value) const {
    if (n < 1) throw std::invalid_argument("step_size: iterations start at 1");
    const double k = static_cast<double>(n);
    switch (schedule) {
        case StepSchedule::harmonic: return eta0_value / k;
        case StepSchedule::delayed_harmonic: return eta0_value / (1.0 + (k - 1.0) / decay_iterations);
    }
    return 0.0;
}

SgdState sgd_step(SgdState sgd, const SgdConfig& config, const GradientFn& gradient) {
    if (!(config.p_floor > 0.0 && config.p_floor < config.p_cap))
        throw std::invalid_argument("sgd_step: need 0 < p_floor < p_cap");
    const double grad = gradient(sgd.p_r);
    sgd.n += 1;
    if (sgd.eta0 <= 0.0) {
        sgd.eta0 = config.eta0 > 0.0 ? config.eta0
                   : grad != 0.0     ? config.first_step_fraction * sgd.p_r / std::abs(grad)
                                     : 0.0;
    }
    const double step = config.step_size(sgd.n, sgd.eta0);
    sgd.last_gradient = grad;
    sgd.last_step = step;
    sgd.p_r = std::clamp(sgd.p_r - step * grad, config.p_floor, config.p_cap);
    return sgd;
}

SgdState sgd_step(SgdState sgd, const SgdConfig& config, const ModelParams& params, const ChainStats& stats) {
    return sgd_step(sgd, config, [&](double p_r) { return gradient_pr(p_r, params, stats); });
}

}  // namespace mec
