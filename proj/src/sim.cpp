#include "mec/sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

#include "mec/stochastic.hpp"

namespace mec {

namespace {

constexpr std::uint64_t kEpisodeRoot = 0x6d65632d73696dULL;
constexpr std::uint64_t kArrivalTag = 1;
constexpr std::uint64_t kFadingTag = 2;

double mean_of(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double sd_of(const std::vector<double>& xs, double mean) {
    if (xs.size() < 2) return 0.0;
    double s = 0.0;
    for (double x : xs) s += (x - mean) * (x - mean);
    return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

}  // namespace

long auto_horizon(double gamma, double tolerance) {
    if (!(gamma > 0.0 && gamma < 1.0) || !(tolerance > 0.0 && tolerance < 1.0))
        throw std::invalid_argument("auto_horizon: need gamma and tolerance in (0,1)");
    long T = static_cast<long>(std::floor(std::log(tolerance) / std::log(gamma)));
    while (std::pow(gamma, T) >= tolerance) ++T;
    while (T > 1 && std::pow(gamma, T - 1) < tolerance) --T;
    return std::max(1L, T);
}

long SimConfig::resolved_horizon() const {
    return horizon_frames > 0 ? horizon_frames : auto_horizon(params.discount, horizon_tolerance);
}

void SimConfig::validate() const {
    params.validate();
    if (episodes < 1) throw std::invalid_argument("episodes must be >= 1");
    if (horizon_frames < 0) throw std::invalid_argument("horizon_frames must be >= 0");
    for (const auto& d : initial_edge)
        if (!(d.pathloss > 0.0) || d.queue_segments < 1)
            throw std::invalid_argument("initial edge devices need pathloss > 0 and queue >= 1");
}

bool Trajectory::all_departed() const {
    return std::all_of(devices.begin(), devices.end(), [](const DeviceRecord& d) { return d.departure_frame.has_value(); });
}

Trajectory run_episode(const SimConfig& config, const Policy& policy, std::uint64_t episode, bool keep_frames) {
    const ModelParams& params = config.params;
    const long horizon = config.resolved_horizon();
    const std::uint64_t episode_stream = derive_stream(kEpisodeRoot, episode);
    ArrivalSampler sampler(RngStream(config.seed, derive_stream(episode_stream, kArrivalTag)),
                           ArrivalConfig::from_params(params), params, config.initial_edge.size() + 1);
    const FadingField fading(config.seed, derive_stream(episode_stream, kFadingTag));

    Trajectory out;
    FullState state;
    for (std::size_t i = 0; i < config.initial_edge.size(); ++i) {
        const DeviceId id{i + 1};
        const auto& d = config.initial_edge[i];
        state.compact.entries.push_back(EdgeEntry{id, d.pathloss, d.queue_segments});
        state.fading.push_back(fading.at(id, 1));
        DeviceRecord rec;
        rec.id = id;
        rec.initial = true;
        rec.segments = d.queue_segments;
        out.devices.push_back(rec);
    }
    if (config.first_arrival == FirstArrival::random) state.arrival = sampler.sample(1);
    // record index of device id n is n - 1
    const auto record = [&out](DeviceId id) -> DeviceRecord& { return out.devices.at(raw(id) - 1); };

    if (keep_frames) out.frames.reserve(static_cast<std::size_t>(horizon));
    double disc = 1.0;
    for (long t = 1; t <= horizon; ++t) {
        const Action action = policy.decide(state);
        const double g = stage_cost_full(state, action, params);
        const double g_reduced = stage_cost_reduced(state, action, params);
        out.discounted_cost += disc * g;
        out.discounted_reduced_cost += disc * g_reduced;
        out.max_stage_cost = std::max(out.max_stage_cost, g);
        disc *= params.discount;

        for (const auto& e : state.compact.entries) {
            DeviceRecord& rec = record(e.device_id);
            ++rec.active_frames;
            if (action.selected_device && *action.selected_device == e.device_id) {
                rec.power_sum_w += action.transmit_power_w;
                rec.energy_j += action.transmit_power_w * params.frame_duration_s;
            }
        }
        for (const auto& l : state.locals) {
            DeviceRecord& rec = record(l.device_id);
            const double p = local_power(l.cpu_freq_hz, params);
            ++rec.active_frames;
            rec.power_sum_w += p;
            rec.energy_j += p * params.frame_duration_s;
        }
        if (state.arrival) {
            DeviceRecord rec;
            rec.id = state.arrival->id;
            rec.mode = action.offload ? ServiceMode::edge : ServiceMode::local;
            rec.segments = state.arrival->segments;
            rec.arrival_frame = t;
            if (raw(rec.id) != out.devices.size() + 1) throw std::logic_error("device ids out of sequence");
            out.devices.push_back(rec);
        }

        TransitionReport report;
        std::optional<Task> next_arrival = sampler.sample(t + 1);
        FullState next = advance_state(
            state, action, [&](DeviceId id) { return fading.at(id, t + 1); }, std::move(next_arrival), params, &report);
        for (DeviceId id : report.departed_edge) record(id).departure_frame = t;
        for (DeviceId id : report.departed_local) record(id).departure_frame = t;

        if (keep_frames) {
            FrameRecord fr;
            fr.frame = t;
            fr.edge_count = static_cast<int>(state.compact.size());
            fr.local_count = static_cast<int>(state.locals.size());
            fr.arrival = state.arrival.has_value();
            fr.offload = action.offload;
            fr.selected = action.selected_device;
            fr.transmit_power_w = action.transmit_power_w;
            fr.transmitted_segments = report.transmitted_segments;
            fr.stage_cost = g;
            fr.reduced_stage_cost = g_reduced;
            out.frames.push_back(fr);
        }
        state = std::move(next);
    }
    return out;
}

std::vector<Trajectory> run_episodes(const SimConfig& config, const Policy& policy, int workers, bool keep_frames) {
    config.validate();
    const auto n = static_cast<std::size_t>(config.episodes);
    std::vector<Trajectory> results(n);
    const int threads = std::max(1, std::min<int>(workers, config.episodes));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    const auto work = [&] {
        for (std::size_t i = next++; i < n && !failed; i = next++) {
            try {
                results[i] = run_episode(config, policy, i, keep_frames);
            } catch (...) {
                if (!failed.exchange(true)) failure = std::current_exception();
            }
        }
    };
    if (threads == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < threads; ++i) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    return results;
}

double discounted_cost(const Trajectory& trajectory, double gamma, CostAccounting which) {
    double total = 0.0;
    double disc = 1.0;
    for (const auto& fr : trajectory.frames) {
        total += disc * (which == CostAccounting::full ? fr.stage_cost : fr.reduced_stage_cost);
        disc *= gamma;
    }
    return total;
}

int power_bin(double watts) {
    if (!(watts > 0.0)) return std::numeric_limits<int>::min();
    return static_cast<int>(std::floor(std::log10(watts) * kPowerBinsPerDecade));
}

Metrics aggregate_metrics(const std::vector<Trajectory>& trajectories, const ModelParams& params, long horizon) {
    if (trajectories.empty()) throw std::invalid_argument("aggregate_metrics: no trajectories");
    Metrics m;
    m.episodes = static_cast<int>(trajectories.size());
    std::vector<double> full, reduced, device_cost_sums, device_counts;
    long edge_devices = 0;
    double max_stage = 0.0;
    std::map<long, long> latency_counts;
    std::map<int, long> power_counts;
    for (const auto& tr : trajectories) {
        full.push_back(tr.discounted_cost);
        reduced.push_back(tr.discounted_reduced_cost);
        max_stage = std::max(max_stage, tr.max_stage_cost);
        double cost_sum = 0.0;
        long count = 0;
        for (const auto& d : tr.devices) {
            if (d.initial || !d.departure_frame) continue;
            const long latency = d.latency_frames();
            cost_sum += params.latency_weight * static_cast<double>(latency) + d.power_sum_w;
            ++count;
            if (d.mode == ServiceMode::edge) ++edge_devices;
            ++latency_counts[latency];
            ++power_counts[power_bin(d.power_sum_w / static_cast<double>(latency))];
        }
        device_cost_sums.push_back(cost_sum);
        device_counts.push_back(static_cast<double>(count));
    }
    const double n = static_cast<double>(m.episodes);
    m.discounted_cost_mean = mean_of(full);
    m.discounted_cost_sd = sd_of(full, m.discounted_cost_mean);
    m.discounted_cost_ci = 1.96 * m.discounted_cost_sd / std::sqrt(n);
    m.reduced_cost_mean = mean_of(reduced);
    m.reduced_cost_ci = 1.96 * sd_of(reduced, m.reduced_cost_mean) / std::sqrt(n);

    double total_cost = 0.0, total_devices = 0.0;
    for (std::size_t i = 0; i < device_counts.size(); ++i) {
        total_cost += device_cost_sums[i];
        total_devices += device_counts[i];
    }
    m.departed_devices = static_cast<long>(total_devices);
    if (total_devices > 0.0) {
        m.per_device_cost = total_cost / total_devices;
        m.edge_ratio = static_cast<double>(edge_devices) / total_devices;
        // ratio estimator: residuals C_e - r N_e over episodes
        std::vector<double> resid;
        for (std::size_t i = 0; i < device_counts.size(); ++i)
            resid.push_back(device_cost_sums[i] - m.per_device_cost * device_counts[i]);
        const double mean_count = total_devices / n;
        m.per_device_cost_ci = 1.96 * sd_of(resid, mean_of(resid)) / (std::sqrt(n) * mean_count);
        for (const auto& [k, c] : latency_counts) m.latency_pmf[k] = static_cast<double>(c) / total_devices;
        for (const auto& [k, c] : power_counts) m.power_pmf[k] = static_cast<double>(c) / total_devices;
    }
    m.truncation_bound = std::pow(params.discount, static_cast<double>(horizon)) * max_stage / (1.0 - params.discount);
    return m;
}

}  // namespace mec
