#include "mec/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mec {

namespace {

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("invalid model parameters: ") + what);
}

// Guards integer rounding of quantities that are exact in real arithmetic
// (e.g. 112.00000000000001 frames must stay 112).
constexpr double kRoundingSlack = 1e-12;

}  // namespace

std::vector<double> log_power_grid(double lo_w, double hi_w, int levels) {
    if (levels < 1 || !(lo_w > 0.0) || !(hi_w >= lo_w))
        throw std::invalid_argument("log_power_grid: need levels >= 1 and 0 < lo <= hi");
    std::vector<double> grid(static_cast<std::size_t>(levels));
    if (levels == 1) {
        grid[0] = lo_w;
        return grid;
    }
    const double step = std::log(hi_w / lo_w) / (levels - 1);
    for (int i = 0; i < levels; ++i) grid[static_cast<std::size_t>(i)] = lo_w * std::exp(step * i);
    grid.back() = hi_w;
    return grid;
}

void ModelParams::validate() const {
    require(frame_duration_s > 0.0, "frame_duration_s must be positive");
    require(bandwidth_hz > 0.0, "bandwidth_hz must be positive");
    require(segment_bits > 0.0, "segment_bits must be positive");
    require(noise_power_w > 0.0, "noise_power_w must be positive");
    require(latency_weight > 0.0, "latency_weight must be positive");
    require(discount > 0.0 && discount < 1.0, "discount must lie in (0,1)");
    require(switched_capacitance > 0.0, "switched_capacitance must be positive");
    require(seg_min >= 1 && seg_min <= seg_max, "need 1 <= seg_min <= seg_max");
    require(arrival_prob >= 0.0 && arrival_prob <= 1.0, "arrival_prob must lie in [0,1]");
    require(admission_threshold >= 1, "admission_threshold must be >= 1");
    require(receive_power_w > 0.0, "receive_power_w must be positive");
    require(cell_radius_m > 0.0, "cell_radius_m must be positive");
    require(pathloss_exponent > 0.0, "pathloss_exponent must be positive");
    require(min_distance_m > 0.0 && min_distance_m < cell_radius_m, "need 0 < min_distance_m < cell_radius_m");
    require(cpu_freq_range_hz.first > 0.0 && cpu_freq_range_hz.first <= cpu_freq_range_hz.second,
            "cpu_freq_range_hz must be a positive nonempty range");
    require(cycles_per_bit_range.first > 0.0 && cycles_per_bit_range.first <= cycles_per_bit_range.second,
            "cycles_per_bit_range must be a positive nonempty range");
    require(!power_grid.empty(), "power_grid must be nonempty");
    for (std::size_t i = 0; i < power_grid.size(); ++i) {
        require(power_grid[i] > 0.0, "power_grid levels must be positive");
        if (i > 0) require(power_grid[i] > power_grid[i - 1], "power_grid must be strictly increasing");
    }
}

bool CompactState::contains(DeviceId id) const {
    return std::any_of(entries.begin(), entries.end(), [id](const EdgeEntry& e) { return e.device_id == id; });
}

bool CompactState::well_formed() const {
    for (std::size_t i = 1; i < entries.size(); ++i)
        if (!(raw(entries[i - 1].device_id) < raw(entries[i].device_id))) return false;
    return std::all_of(entries.begin(), entries.end(), [](const EdgeEntry& e) { return e.queue_segments >= 1; });
}

double channel_capacity(double power_w, double pathloss, double fading_sq, const ModelParams& params) {
    const double snr = power_w * pathloss * fading_sq / params.noise_power_w;
    return params.bandwidth_hz * std::log2(1.0 + snr);
}

int segments_per_frame(double rate_bits_per_s, const ModelParams& params) {
    const double segs = rate_bits_per_s * params.frame_duration_s / params.segment_bits;
    if (!(segs > 0.0)) return 0;
    if (segs >= 2e9) return 2'000'000'000;
    return static_cast<int>(std::floor(segs));
}

int local_completion_frames(int segments, double cpu_freq_hz, double cycles_per_bit, const ModelParams& params) {
    const double frames = segments * params.segment_bits * cycles_per_bit / (cpu_freq_hz * params.frame_duration_s);
    return std::max(1, static_cast<int>(std::ceil(frames * (1.0 - kRoundingSlack))));
}

double local_power(double cpu_freq_hz, const ModelParams& params) {
    return params.switched_capacitance * cpu_freq_hz * cpu_freq_hz * cpu_freq_hz;
}

double local_cost(int segments, double cpu_freq_hz, double cycles_per_bit, const ModelParams& params) {
    const int frames = local_completion_frames(segments, cpu_freq_hz, cycles_per_bit, params);
    const double g = params.discount;
    const double per_frame = params.latency_weight + local_power(cpu_freq_hz, params);
    return g * (1.0 - std::pow(g, frames)) / (1.0 - g) * per_frame;
}

double local_drain_per_frame(double cpu_freq_hz, double cycles_per_bit, const ModelParams& params) {
    return cpu_freq_hz * params.frame_duration_s / (cycles_per_bit * params.segment_bits);
}

double stage_cost_full(const FullState& state, const Action& action, const ModelParams& params) {
    double cost = params.latency_weight * static_cast<double>(state.compact.size() + state.locals.size());
    cost += action.transmit_power_w;
    for (const auto& local : state.locals) cost += local_power(local.cpu_freq_hz, params);
    return cost;
}

double stage_cost_reduced(const FullState& state, const Action& action, const ModelParams& params) {
    double cost = params.latency_weight * static_cast<double>(state.compact.size()) + action.transmit_power_w;
    if (state.arrival && !action.offload) cost += local_cost(*state.arrival, params);
    return cost;
}

void apply_transmission(CompactState& compact, std::size_t position, int transmitted) {
    auto& entry = compact.entries.at(position);
    entry.queue_segments = std::max(0, entry.queue_segments - transmitted);
    if (entry.queue_segments == 0) compact.entries.erase(compact.entries.begin() + static_cast<std::ptrdiff_t>(position));
}

FullState advance_state(const FullState& state, const Action& action, const FadingSource& next_fading,
                        std::optional<Task> next_arrival, const ModelParams& params, TransitionReport* report) {
    if (action.transmit_power_w < 0.0) throw std::invalid_argument("advance_state: negative transmit power");
    if (!action.selected_device && action.transmit_power_w != 0.0)
        throw std::invalid_argument("advance_state: transmit power without a selected device");
    FullState next;
    next.compact = state.compact;
    TransitionReport local_report;

    if (action.selected_device) {
        const auto& entries = state.compact.entries;
        const auto it = std::find_if(entries.begin(), entries.end(),
                                     [&](const EdgeEntry& e) { return e.device_id == *action.selected_device; });
        if (it == entries.end())
            throw std::invalid_argument("advance_state: selected device is not in the edge set");
        const auto pos = static_cast<std::size_t>(it - entries.begin());
        const double fading = pos < state.fading.size() ? state.fading[pos] : 0.0;
        const int sent = std::min(
            it->queue_segments,
            segments_per_frame(channel_capacity(action.transmit_power_w, it->pathloss, fading, params), params));
        local_report.transmitted_segments = sent;
        if (sent >= it->queue_segments) local_report.departed_edge.push_back(it->device_id);
        apply_transmission(next.compact, pos, sent);
    }

    next.locals.reserve(state.locals.size() + 1);
    for (const auto& local : state.locals) {
        LocalEntry drained = local;
        drained.remaining_frames -= 1;
        drained.queue_segments =
            std::max(0.0, drained.queue_segments - local_drain_per_frame(local.cpu_freq_hz, local.cycles_per_bit, params));
        if (drained.remaining_frames <= 0) {
            local_report.departed_local.push_back(local.device_id);
            continue;
        }
        next.locals.push_back(drained);
    }

    if (state.arrival) {
        const Task& task = *state.arrival;
        if (action.offload) {
            next.compact.entries.push_back(EdgeEntry{task.id, task.pathloss, task.segments});
        } else {
            next.locals.push_back(LocalEntry{task.id, static_cast<double>(task.segments), task.cpu_freq_hz,
                                             task.cycles_per_bit,
                                             local_completion_frames(task.segments, task.cpu_freq_hz,
                                                                     task.cycles_per_bit, params)});
        }
    }

    next.fading.reserve(next.compact.size());
    for (const auto& entry : next.compact.entries) next.fading.push_back(next_fading(entry.device_id));
    next.arrival = std::move(next_arrival);
    if (report) *report = std::move(local_report);
    return next;
}

}  // namespace mec
