#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "mec/model.hpp"
#include "mec/policies.hpp"

namespace mec {

struct InitialDevice {
    double pathloss = 1.0;
    int queue_segments = 1;
};

enum class FirstArrival {
    none,    // S_1 has I_N = 0 (the figures' initial state)
    random,  // frame 1 draws an arrival like every other frame
};

enum class CostAccounting { full, reduced };

struct SimConfig {
    ModelParams params;
    // 0 selects the smallest T with gamma^T < horizon_tolerance.
    long horizon_frames = 0;
    double horizon_tolerance = 1e-6;
    int episodes = 1;
    std::uint64_t seed = 1;
    std::vector<InitialDevice> initial_edge;
    FirstArrival first_arrival = FirstArrival::none;

    long resolved_horizon() const;
    void validate() const;
};

long auto_horizon(double gamma, double tolerance);

struct FrameRecord {
    long frame = 0;
    int edge_count = 0;
    int local_count = 0;
    bool arrival = false;
    bool offload = false;
    std::optional<DeviceId> selected;
    double transmit_power_w = 0.0;
    int transmitted_segments = 0;
    double stage_cost = 0.0;          // g
    double reduced_stage_cost = 0.0;  // g'
};

enum class ServiceMode { edge, local };

struct DeviceRecord {
    DeviceId id{};
    ServiceMode mode = ServiceMode::edge;
    bool initial = false;  // present in S_1 rather than arriving during the run
    int segments = 0;
    long arrival_frame = 0;
    // Last frame the device was active; nullopt if still active at the horizon.
    std::optional<long> departure_frame;
    long active_frames = 0;
    double energy_j = 0.0;
    double power_sum_w = 0.0;  // sum of per-frame power, i.e. energy / T_s

    long latency_frames() const { return departure_frame ? *departure_frame - arrival_frame : -1; }
};

struct Trajectory {
    std::vector<FrameRecord> frames;
    std::vector<DeviceRecord> devices;
    double discounted_cost = 0.0;          // sum gamma^(t-1) g
    double discounted_reduced_cost = 0.0;  // sum gamma^(t-1) g'
    double max_stage_cost = 0.0;

    bool all_departed() const;
};

// Streams of one episode: arrivals and fading are keyed by (seed, episode),
// and fading additionally by (device, frame), so every policy run with the
// same seed and episode index sees the same randomness.
Trajectory run_episode(const SimConfig& config, const Policy& policy, std::uint64_t episode, bool keep_frames = true);

// Runs config.episodes episodes on `workers` threads; results are in episode order.
std::vector<Trajectory> run_episodes(const SimConfig& config, const Policy& policy, int workers,
                                     bool keep_frames = false);

double discounted_cost(const Trajectory& trajectory, double gamma, CostAccounting which);

struct Metrics {
    int episodes = 0;
    double discounted_cost_mean = 0.0;
    double discounted_cost_sd = 0.0;
    double discounted_cost_ci = 0.0;  // 95% half-width
    double reduced_cost_mean = 0.0;
    double reduced_cost_ci = 0.0;
    double per_device_cost = 0.0;
    double per_device_cost_ci = 0.0;
    double edge_ratio = 0.0;
    long departed_devices = 0;
    std::map<long, double> latency_pmf;  // frames -> mass
    std::map<int, double> power_pmf;     // decile of log10(W) -> mass; bin b covers [b/10, (b+1)/10)
    double truncation_bound = 0.0;       // gamma^T * max stage cost / (1 - gamma)
};

inline constexpr double kPowerBinsPerDecade = 10.0;
int power_bin(double watts);

Metrics aggregate_metrics(const std::vector<Trajectory>& trajectories, const ModelParams& params, long horizon);

}  // namespace mec
