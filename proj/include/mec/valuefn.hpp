#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <vector>

#include "mec/markov.hpp"
#include "mec/model.hpp"

namespace mec {

// E[log2(1 + (p_r/sigma^2) X)], X ~ Exp(1).
double ergodic_spectral_efficiency(double p_r, const ModelParams& params);

// Frames to push queue_segments through at the ergodic rate.
long transmission_frames(int queue_segments, double spectral_efficiency, const ModelParams& params);
inline long transmission_frames(int queue_segments, const ModelParams& params) {
    return transmission_frames(queue_segments, ergodic_spectral_efficiency(params.receive_power_w, params), params);
}

// E[C] over d ~ U{d_min..d_max}, f and l uniform over their ranges.
double expected_local_cost(const ModelParams& params);
// C averaged over d at a fixed (f, l).
double local_cost_over_segments(double cpu_freq_hz, double cycles_per_bit, const ModelParams& params);

// Statistics of the configured arrival distributions (no estimation).
ChainStats true_chain_stats(const ModelParams& params);

// Everything the baseline value depends on. p_r is model.receive_power_w,
// K is model.admission_threshold; stats may come from estimates.
struct ValueParams {
    ModelParams model;
    ChainStats stats;
};

struct ValueBreakdown {
    double w1 = 0.0;
    double w2 = 0.0;
    double w3 = 0.0;
    double total = 0.0;
};

// Baseline-policy value of a compact state, split into the period of the
// first [N-K]+ devices, the period of the last min(N,K) initial devices, and
// the remaining steady period.
class ValueFunction {
public:
    explicit ValueFunction(ValueParams params);

    ValueBreakdown breakdown(const CompactState& state) const;
    double value(const CompactState& state) const { return breakdown(state).total; }
    double w1(const CompactState& state) const { return breakdown(state).w1; }
    double w2(const CompactState& state) const { return breakdown(state).w2; }
    double w3(const CompactState& state) const { return breakdown(state).w3; }

    // Value of `state` after the device at `position` sends `sent` segments
    // (leaving when its queue empties), with `appended` joining the tail if set.
    double value_after(const CompactState& state, std::optional<std::size_t> position, int sent,
                       const EdgeEntry* appended) const;

    // Value of the empty state, e1^T (I - gamma Phi)^-1 c.
    double reference_value() const { return steady_(0); }

    const ValueParams& params() const { return params_; }
    double spectral_efficiency() const { return spectral_efficiency_; }
    long frames_for(int queue_segments) const;
    double phi_row_sum_deviation() const { return row_sum_deviation_; }
    double solve_residual() const { return residual_; }
    const Eigen::VectorXd& steady_values() const { return steady_; }

private:
    template <class Get>
    ValueBreakdown evaluate(std::size_t n, Get&& get) const;

    // Count-chain quantities over T frames: M^T and sum_{b<T} (gamma M)^b g.
    struct Span {
        long frames = 0;
        double discount = 1.0;
        Eigen::MatrixXd power;
        Eigen::VectorXd holding;
    };
    Span span_for(long frames) const;
    const Span& span_for_queue(int queue_segments, Span& scratch) const;

    ValueParams params_;
    ChainIndex index_;
    double spectral_efficiency_ = 0.0;
    SmallChain small_;
    Eigen::VectorXd steady_;
    Eigen::VectorXd block_means_;  // mean steady value over fresh head queues, per count
    std::vector<Span> spans_;      // indexed by queue length 1..d_max
    double row_sum_deviation_ = 0.0;
    double residual_ = 0.0;
};

// Shared, immutable value functions keyed by every parameter they read.
std::shared_ptr<const ValueFunction> cached_value_function(const ValueParams& params);
void clear_value_cache();

}  // namespace mec
