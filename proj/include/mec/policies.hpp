#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mec/model.hpp"
#include "mec/valuefn.hpp"

namespace mec {

enum class PolicyKind { baseline, all_local, all_edge, improved };

std::string to_string(PolicyKind kind);
// Accepts baseline/all_local/all_edge/improved and the short labels BSL/ALC/AEC/Proposed.
std::optional<PolicyKind> parse_policy_kind(const std::string& text);

struct PolicySpec {
    PolicyKind kind = PolicyKind::baseline;
    // Unset fields fall back to ModelParams (receive_power_w, admission_threshold, power_grid).
    std::optional<double> p_r;
    std::optional<int> K;
    std::vector<double> power_grid;

    std::string label() const;
};

// FCFS head transmits with channel inversion p_r/rho; admit iff |U_E| < K.
Action baseline_decide(const FullState& state, double p_r, int K);
Action all_local_decide(const FullState& state);
// Baseline uplink rule with unlimited admission.
Action all_edge_decide(const FullState& state, double p_r);

struct ImprovedChoice {
    Action action;
    // min over candidates of p + gamma W(next) with the arrival admitted (edge)
    // or computed locally (local, includes C); equal when there is no arrival.
    double edge_objective = 0.0;
    double local_objective = 0.0;
    std::optional<DeviceId> edge_device;
    double edge_power_w = 0.0;
    std::optional<DeviceId> local_device;
    double local_power_w = 0.0;
};

// One-step improvement of the baseline. Candidates: idle, and every edge
// device at every receive level of `grid` plus the baseline level p_r
// (transmit power level/rho), levels ascending. A level whose successor
// equals that of a lower level (or of idling) is skipped since it only adds
// power. Ties go to the earlier candidate (idle first) and to local computing.
ImprovedChoice improved_choice(const FullState& state, const ValueFunction& value, const std::vector<double>& grid);
inline Action improved_decide(const FullState& state, const ValueFunction& value, const std::vector<double>& grid) {
    return improved_choice(state, value, grid).action;
}

class Policy {
public:
    virtual ~Policy() = default;
    virtual Action decide(const FullState& state) const = 0;
};

// The value function of the improved policy is built from `stats` (true or
// estimated arrival statistics).
std::unique_ptr<Policy> make_policy(const PolicySpec& spec, const ModelParams& params, const ChainStats& stats);

}  // namespace mec
