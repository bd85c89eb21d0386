#include "mec/policies.hpp"

#include <algorithm>
#include <stdexcept>

namespace mec {

std::string to_string(PolicyKind kind) {
    switch (kind) {
        case PolicyKind::baseline: return "baseline";
        case PolicyKind::all_local: return "all_local";
        case PolicyKind::all_edge: return "all_edge";
        case PolicyKind::improved: return "improved";
    }
    return "unknown";
}

std::optional<PolicyKind> parse_policy_kind(const std::string& text) {
    if (text == "baseline" || text == "BSL") return PolicyKind::baseline;
    if (text == "all_local" || text == "ALC") return PolicyKind::all_local;
    if (text == "all_edge" || text == "AEC") return PolicyKind::all_edge;
    if (text == "improved" || text == "Proposed") return PolicyKind::improved;
    return std::nullopt;
}

std::string PolicySpec::label() const {
    std::string out = to_string(kind);
    if (K && (kind == PolicyKind::baseline || kind == PolicyKind::improved)) out += "_K" + std::to_string(*K);
    return out;
}

Action baseline_decide(const FullState& state, double p_r, int K) {
    Action action;
    if (!state.compact.empty()) {
        const EdgeEntry& head = state.compact.entries.front();
        action.selected_device = head.device_id;
        action.transmit_power_w = p_r / head.pathloss;
    }
    action.offload = state.arrival.has_value() && state.compact.size() < static_cast<std::size_t>(K);
    return action;
}

Action all_local_decide(const FullState&) { return Action{}; }

Action all_edge_decide(const FullState& state, double p_r) {
    Action action = baseline_decide(state, p_r, 1);
    action.offload = state.arrival.has_value();
    return action;
}

ImprovedChoice improved_choice(const FullState& state, const ValueFunction& value, const std::vector<double>& grid) {
    const ModelParams& m = value.params().model;
    const double g = m.discount;
    const bool arrival = state.arrival.has_value();
    const double local_c = arrival ? local_cost(*state.arrival, m) : 0.0;

    const EdgeEntry* admitted = nullptr;
    EdgeEntry arriving;
    if (arrival) {
        arriving = EdgeEntry{state.arrival->id, state.arrival->pathloss, state.arrival->segments};
        admitted = &arriving;
    }

    ImprovedChoice best;
    bool first = true;
    const auto consider = [&](std::optional<std::size_t> position, int sent, std::optional<DeviceId> device,
                              double power) {
        double local = power + g * value.value_after(state.compact, position, sent, nullptr);
        double edge = local;
        if (arrival) {
            edge = power + g * value.value_after(state.compact, position, sent, admitted);
            local += local_c;
        }
        if (first || edge < best.edge_objective) {
            best.edge_objective = edge;
            best.edge_device = device;
            best.edge_power_w = power;
        }
        if (first || local < best.local_objective) {
            best.local_objective = local;
            best.local_device = device;
            best.local_power_w = power;
        }
        first = false;
    };

    consider(std::nullopt, 0, std::nullopt, 0.0);

    std::vector<double> levels = grid;
    levels.push_back(m.receive_power_w);
    std::sort(levels.begin(), levels.end());
    const auto& entries = state.compact.entries;
    for (std::size_t k = 0; k < entries.size(); ++k) {
        const EdgeEntry& entry = entries[k];
        const double fading = k < state.fading.size() ? state.fading[k] : 0.0;
        int previous = 0;
        for (double level : levels) {
            const double power = level / entry.pathloss;
            const int sent = std::min(entry.queue_segments,
                                      segments_per_frame(channel_capacity(power, entry.pathloss, fading, m), m));
            // a higher level with the same successor costs more: idle (sent = 0) or
            // the previous level already covers it
            if (sent == previous) continue;
            previous = sent;
            consider(k, sent, entry.device_id, power);
            if (sent == entry.queue_segments) break;
        }
    }

    const bool offload = arrival && best.edge_objective < best.local_objective;
    best.action.offload = offload;
    best.action.selected_device = offload ? best.edge_device : best.local_device;
    best.action.transmit_power_w = offload ? best.edge_power_w : best.local_power_w;
    if (!best.action.selected_device) best.action.transmit_power_w = 0.0;
    return best;
}

namespace {

class BaselinePolicy final : public Policy {
public:
    BaselinePolicy(double p_r, int K) : p_r_(p_r), K_(K) {}
    Action decide(const FullState& state) const override { return baseline_decide(state, p_r_, K_); }

private:
    double p_r_;
    int K_;
};

class AllLocalPolicy final : public Policy {
public:
    Action decide(const FullState& state) const override { return all_local_decide(state); }
};

class AllEdgePolicy final : public Policy {
public:
    explicit AllEdgePolicy(double p_r) : p_r_(p_r) {}
    Action decide(const FullState& state) const override { return all_edge_decide(state, p_r_); }

private:
    double p_r_;
};

class ImprovedPolicy final : public Policy {
public:
    ImprovedPolicy(std::shared_ptr<const ValueFunction> value, std::vector<double> grid)
        : value_(std::move(value)), grid_(std::move(grid)) {}
    Action decide(const FullState& state) const override { return improved_decide(state, *value_, grid_); }

private:
    std::shared_ptr<const ValueFunction> value_;
    std::vector<double> grid_;
};

}  // namespace

std::unique_ptr<Policy> make_policy(const PolicySpec& spec, const ModelParams& params, const ChainStats& stats) {
    const double p_r = spec.p_r.value_or(params.receive_power_w);
    const int K = spec.K.value_or(params.admission_threshold);
    if (!(p_r > 0.0)) throw std::invalid_argument("policy p_r must be positive");
    if (K < 1) throw std::invalid_argument("policy K must be >= 1");
    switch (spec.kind) {
        case PolicyKind::baseline: return std::make_unique<BaselinePolicy>(p_r, K);
        case PolicyKind::all_local: return std::make_unique<AllLocalPolicy>();
        case PolicyKind::all_edge: return std::make_unique<AllEdgePolicy>(p_r);
        case PolicyKind::improved: {
            std::vector<double> grid = spec.power_grid.empty() ? params.power_grid : spec.power_grid;
            if (grid.size() < 2) throw std::invalid_argument("improved policy needs at least 2 power levels");
            for (std::size_t i = 0; i < grid.size(); ++i)
                if (!(grid[i] > 0.0) || (i > 0 && !(grid[i] > grid[i - 1])))
                    throw std::invalid_argument("power grid must be positive and strictly increasing");
            ValueParams vp{params, stats};
            vp.model.receive_power_w = p_r;
            vp.model.admission_threshold = K;
            return std::make_unique<ImprovedPolicy>(cached_value_function(vp), std::move(grid));
        }
    }
    throw std::invalid_argument("unknown policy kind");
}

}  // namespace mec
