#include "mec/stochastic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mec {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), key_(mix64(seed ^ mix64(stream_id + kGolden)) | 1ULL) {}

std::uint64_t RngStream::bits_at(std::uint64_t counter) const {
    std::uint64_t x = mix64(counter * kGolden + key_);
    return mix64(x ^ rotl(key_, 29));
}

double RngStream::uniform_at(std::uint64_t counter) const {
    return (static_cast<double>(bits_at(counter) >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t derive_stream(std::uint64_t parent, std::uint64_t tag) {
    return mix64(mix64(parent + kGolden) ^ (tag * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL));
}

ArrivalConfig ArrivalConfig::from_params(const ModelParams& params) {
    ArrivalConfig config;
    config.arrival_prob = params.arrival_prob;
    config.seg_min = params.seg_min;
    config.seg_max = params.seg_max;
    config.cpu_freq_range_hz = params.cpu_freq_range_hz;
    config.cycles_per_bit_range = params.cycles_per_bit_range;
    const double radius = params.cell_radius_m;
    config.radial_inverse_cdf = [radius](double u) { return radius * std::sqrt(u); };
    return config;
}

void ArrivalConfig::validate() const {
    if (!(arrival_prob >= 0.0 && arrival_prob <= 1.0)) throw std::invalid_argument("arrival_prob outside [0,1]");
    if (seg_min < 1 || seg_min > seg_max) throw std::invalid_argument("segment range is empty");
    if (!(cpu_freq_range_hz.first > 0.0 && cpu_freq_range_hz.first <= cpu_freq_range_hz.second))
        throw std::invalid_argument("cpu frequency range is empty");
    if (!(cycles_per_bit_range.first > 0.0 && cycles_per_bit_range.first <= cycles_per_bit_range.second))
        throw std::invalid_argument("cycles-per-bit range is empty");
    if (!radial_inverse_cdf) throw std::invalid_argument("radial density is not set");
}

std::optional<Task> sample_arrival(const RngStream& rng, const ArrivalConfig& config, const ModelParams& params,
                                   std::int64_t frame_index, DeviceId id) {
    const std::uint64_t base = static_cast<std::uint64_t>(frame_index) * kCountersPerFrame;
    if (!(rng.uniform_at(base) < config.arrival_prob)) return std::nullopt;

    Task task;
    task.id = id;
    task.arrival_frame = frame_index;
    task.distance_m = config.radial_inverse_cdf(rng.uniform_at(base + 1));
    task.pathloss = pathloss_from_distance(task.distance_m, params);
    const int span = config.seg_max - config.seg_min + 1;
    task.segments = config.seg_min + std::min(span - 1, static_cast<int>(rng.uniform_at(base + 2) * span));
    const auto [f_lo, f_hi] = config.cpu_freq_range_hz;
    task.cpu_freq_hz = f_lo + (f_hi - f_lo) * rng.uniform_at(base + 3);
    const auto [l_lo, l_hi] = config.cycles_per_bit_range;
    task.cycles_per_bit = l_lo + (l_hi - l_lo) * rng.uniform_at(base + 4);
    return task;
}

std::optional<Task> ArrivalSampler::sample(std::int64_t frame_index) {
    auto task = sample_arrival(rng_, config_, params_, frame_index, DeviceId{next_id_});
    if (task) ++next_id_;
    return task;
}

double sample_fading_sq(RngStream& rng) { return -std::log(rng.uniform()); }

double FadingField::at(DeviceId device, std::int64_t frame) const {
    const RngStream stream(seed_, derive_stream(episode_stream_, raw(device)));
    return -std::log(stream.uniform_at(static_cast<std::uint64_t>(frame)));
}

double pathloss_from_distance(double distance_m, const ModelParams& params) {
    return std::pow(std::max(distance_m, params.min_distance_m), -params.pathloss_exponent);
}

double uniform_disk_inverse_pathloss_mean(const ModelParams& params) {
    const double r0 = params.min_distance_m;
    const double radius = params.cell_radius_m;
    const double eta = params.pathloss_exponent;
    const double inner = std::pow(r0, eta) * (r0 / radius) * (r0 / radius);
    const double outer = 2.0 / (radius * radius * (eta + 2.0)) * (std::pow(radius, eta + 2.0) - std::pow(r0, eta + 2.0));
    return inner + outer;
}

}  // namespace mec
