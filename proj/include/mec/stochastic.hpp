#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "mec/model.hpp"

namespace mec {

// Counter-based generator: draw i of stream (seed, stream_id) is a pure
// function of (seed, stream_id, i), so streams can be addressed at random
// and never share draws.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }
    std::uint64_t position() const { return counter_; }
    void seek(std::uint64_t counter) { counter_ = counter; }

    std::uint64_t bits_at(std::uint64_t counter) const;
    // Uniform on the open interval (0, 1).
    double uniform_at(std::uint64_t counter) const;

    std::uint64_t next_bits() { return bits_at(counter_++); }
    double uniform() { return uniform_at(counter_++); }

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

// Derives a child stream id from a parent id and a tag; used to give every
// (episode, role, device) its own stream.
std::uint64_t derive_stream(std::uint64_t parent, std::uint64_t tag);

struct ArrivalConfig {
    double arrival_prob = 0.1;
    int seg_min = 200;
    int seg_max = 300;
    std::pair<double, double> cpu_freq_range_hz{0.6e9, 1.0e9};
    std::pair<double, double> cycles_per_bit_range{560.0, 600.0};
    // Maps u ~ U(0,1) to a distance from the base station; the default is a
    // uniform density over the disk of radius cell_radius_m.
    std::function<double(double)> radial_inverse_cdf;

    static ArrivalConfig from_params(const ModelParams& params);
    void validate() const;
};

// Each frame consumes a fixed block of counters, so the arrival record of
// frame t does not depend on what happened in other frames.
inline constexpr std::uint64_t kCountersPerFrame = 8;

std::optional<Task> sample_arrival(const RngStream& rng, const ArrivalConfig& config, const ModelParams& params,
                                   std::int64_t frame_index, DeviceId id);

// Hands out monotone device ids on top of sample_arrival.
class ArrivalSampler {
public:
    ArrivalSampler(RngStream rng, ArrivalConfig config, ModelParams params, std::uint64_t first_id = 1)
        : rng_(rng), config_(std::move(config)), params_(std::move(params)), next_id_(first_id) {}

    std::optional<Task> sample(std::int64_t frame_index);
    std::uint64_t next_id() const { return next_id_; }

private:
    RngStream rng_;
    ArrivalConfig config_;
    ModelParams params_;
    std::uint64_t next_id_;
};

// |h|^2 for h ~ CN(0,1), i.e. Exponential(1).
double sample_fading_sq(RngStream& rng);

// Fading realizations keyed by (device, frame). A device sees the same
// sequence under every policy driven by the same seed and episode.
class FadingField {
public:
    FadingField(std::uint64_t seed, std::uint64_t episode_stream) : seed_(seed), episode_stream_(episode_stream) {}
    double at(DeviceId device, std::int64_t frame) const;

private:
    std::uint64_t seed_;
    std::uint64_t episode_stream_;
};

double pathloss_from_distance(double distance_m, const ModelParams& params);

// E[1/rho] for a uniform density over the cell disk, in closed form.
double uniform_disk_inverse_pathloss_mean(const ModelParams& params);

}  // namespace mec
