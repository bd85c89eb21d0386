#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

namespace mec {

enum class DeviceId : std::uint64_t {};

inline std::uint64_t raw(DeviceId id) { return static_cast<std::uint64_t>(id); }

// Receive-side power levels, log-spaced over [lo, hi] watts.
std::vector<double> log_power_grid(double lo_w, double hi_w, int levels);

// Physical and statistical constants of one cell. Defaults are the
// simulation setup of the reference study; discount is not given there.
struct ModelParams {
    double frame_duration_s = 0.01;
    double bandwidth_hz = 10e6;
    double segment_bits = 10e3;
    double noise_power_w = 1e-9;
    double latency_weight = 0.05;
    double discount = 0.95;
    double switched_capacitance = 1.2e-28;
    int seg_min = 200;
    int seg_max = 300;
    double arrival_prob = 0.1;
    int admission_threshold = 4;
    double receive_power_w = 2.8e-9;
    double cell_radius_m = 400.0;
    double pathloss_exponent = 3.5;
    double min_distance_m = 1.0;
    std::pair<double, double> cpu_freq_range_hz{0.6e9, 1.0e9};
    std::pair<double, double> cycles_per_bit_range{560.0, 600.0};
    // Receive-side levels searched by the improved policy.
    std::vector<double> power_grid = log_power_grid(1e-10, 1e-1, 32);

    // Throws std::invalid_argument naming the first violated constraint.
    void validate() const;
};

struct Task {
    DeviceId id{};
    int segments = 0;
    double cycles_per_bit = 0.0;
    double cpu_freq_hz = 0.0;
    double pathloss = 0.0;
    double distance_m = 0.0;
    std::int64_t arrival_frame = 0;
};

struct EdgeEntry {
    DeviceId device_id{};
    double pathloss = 0.0;
    int queue_segments = 0;
};

// Edge devices in FCFS (= device id) order; the head transmits under FCFS.
struct CompactState {
    std::vector<EdgeEntry> entries;

    std::size_t size() const { return entries.size(); }
    bool empty() const { return entries.empty(); }
    bool contains(DeviceId id) const;
    // FCFS order and unique ids.
    bool well_formed() const;
};

struct LocalEntry {
    DeviceId device_id{};
    double queue_segments = 0.0;
    double cpu_freq_hz = 0.0;
    double cycles_per_bit = 0.0;
    // Frames of computation left; the device departs when this reaches 0.
    int remaining_frames = 0;
};

struct FullState {
    CompactState compact;
    // |h|^2 of every edge entry this frame, aligned with compact.entries.
    std::vector<double> fading;
    std::vector<LocalEntry> locals;
    std::optional<Task> arrival;
};

struct Action {
    std::optional<DeviceId> selected_device;
    double transmit_power_w = 0.0;
    bool offload = false;
};

double channel_capacity(double power_w, double pathloss, double fading_sq, const ModelParams& params);
int segments_per_frame(double rate_bits_per_s, const ModelParams& params);
int local_completion_frames(int segments, double cpu_freq_hz, double cycles_per_bit, const ModelParams& params);
double local_power(double cpu_freq_hz, const ModelParams& params);
// Discounted cost of computing a task locally, charged at its arrival frame.
double local_cost(int segments, double cpu_freq_hz, double cycles_per_bit, const ModelParams& params);
inline double local_cost(const Task& task, const ModelParams& params) {
    return local_cost(task.segments, task.cpu_freq_hz, task.cycles_per_bit, params);
}
// Segments a local device computes per frame.
double local_drain_per_frame(double cpu_freq_hz, double cycles_per_bit, const ModelParams& params);

double stage_cost_full(const FullState& state, const Action& action, const ModelParams& params);
double stage_cost_reduced(const FullState& state, const Action& action, const ModelParams& params);

using FadingSource = std::function<double(DeviceId)>;

struct TransitionReport {
    int transmitted_segments = 0;
    std::vector<DeviceId> departed_edge;
    std::vector<DeviceId> departed_local;
};

// One frame of queue dynamics. The arrival in `state` (if any) joins the edge
// tail or the local set according to action.offload; it never transmits in
// its own arrival frame. Throws std::invalid_argument when the selected
// device is not in the edge set.
FullState advance_state(const FullState& state, const Action& action, const FadingSource& next_fading,
                        std::optional<Task> next_arrival, const ModelParams& params,
                        TransitionReport* report = nullptr);

// Applies only the edge-queue part of a transmission to a compact state.
void apply_transmission(CompactState& compact, std::size_t position, int transmitted);

}  // namespace mec
