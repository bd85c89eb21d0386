#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "mec/model.hpp"
#include "mec/stochastic.hpp"

using namespace mec;

namespace {

ModelParams defaults() { return ModelParams{}; }

FullState with_edge(std::initializer_list<EdgeEntry> entries) {
    FullState s;
    s.compact.entries = entries;
    s.fading.assign(s.compact.size(), 1.0);
    return s;
}

}  // namespace

TEST_CASE("channel capacity") {
    const auto p = defaults();
    CHECK(channel_capacity(0.0, 1.0, 1.0, p) == 0.0);
    // snr product 1 and 3
    CHECK(channel_capacity(1e-9, 1.0, 1.0, p) == doctest::Approx(1e7).epsilon(1e-12));
    CHECK(channel_capacity(3e-9, 1.0, 1.0, p) == doctest::Approx(2e7).epsilon(1e-12));

    RngStream rng(5, 5);
    for (int i = 0; i < 1000; ++i) {
        const double pw = rng.uniform() * 1e-6, rho = rng.uniform(), h = rng.uniform() * 3;
        const double c = channel_capacity(pw, rho, h, p);
        CHECK(channel_capacity(pw * 1.5, rho, h, p) >= c);
        CHECK(channel_capacity(pw, rho * 1.5, h, p) >= c);
        CHECK(channel_capacity(pw, rho, h * 1.5, p) >= c);
    }
}

TEST_CASE("segments per frame") {
    const auto p = defaults();
    CHECK(segments_per_frame(0.0, p) == 0);
    CHECK(segments_per_frame(2e7, p) == 20);
    CHECK(segments_per_frame(9.99e6, p) == 9);
}

TEST_CASE("local completion frames") {
    auto p = defaults();
    CHECK(local_completion_frames(1, p.frame_duration_s / p.segment_bits, 1.0, p) == 1);
    CHECK(local_completion_frames(250, 0.8e9, 580, p) == 182);
    CHECK(local_completion_frames(200, 1e9, 560, p) == 112);
}

TEST_CASE("local power") {
    const auto p = defaults();
    CHECK(local_power(0.0, p) == 0.0);
    CHECK(local_power(1e9, p) == doctest::Approx(0.12).epsilon(1e-12));
    CHECK(local_power(0.6e9, p) == doctest::Approx(0.02592).epsilon(1e-12));
}

TEST_CASE("local cost") {
    auto p = defaults();
    const int one = local_completion_frames(1, 1e9, 560, p);
    REQUIRE(one == 1);
    CHECK(local_cost(1, 1e9, 560, p) == doctest::Approx(p.discount * (p.latency_weight + 0.12)).epsilon(1e-12));

    // gamma 0.5, two frames, w + kf^3 = 0.17
    p.discount = 0.5;
    const double l_two = 2.0 * 1e9 * p.frame_duration_s / p.segment_bits * 0.99;  // 1 segment, 2 frames
    REQUIRE(local_completion_frames(1, 1e9, l_two, p) == 2);
    CHECK(local_cost(1, 1e9, l_two, p) == doctest::Approx(0.1275).epsilon(1e-12));

    // loop oracle
    p.discount = 0.97;
    RngStream rng(11, 2);
    for (int i = 0; i < 200; ++i) {
        const int d = 200 + static_cast<int>(rng.uniform() * 101);
        const double f = 0.6e9 + 0.4e9 * rng.uniform();
        const double l = 560 + 40 * rng.uniform();
        const int T = local_completion_frames(d, f, l, p);
        double sum = 0.0, disc = 1.0;
        for (int tau = 1; tau <= T; ++tau) {
            disc *= p.discount;
            sum += disc * (p.latency_weight + p.switched_capacitance * f * f * f);
        }
        CHECK(local_cost(d, f, l, p) == doctest::Approx(sum).epsilon(1e-12));
    }
}

TEST_CASE("stage costs") {
    const auto p = defaults();
    FullState empty;
    CHECK(stage_cost_full(empty, Action{}, p) == 0.0);
    CHECK(stage_cost_reduced(empty, Action{}, p) == 0.0);

    FullState s = with_edge({{DeviceId{1}, 1e-6, 10}, {DeviceId{2}, 1e-6, 10}});
    s.locals.push_back({DeviceId{3}, 5.0, 1e9, 560, 3});
    Action a;
    a.selected_device = DeviceId{1};
    a.transmit_power_w = 0.01;
    CHECK(stage_cost_full(s, a, p) == doctest::Approx(0.28).epsilon(1e-12));
    Action b = a;
    b.transmit_power_w += 0.125;
    CHECK(stage_cost_full(s, b, p) - stage_cost_full(s, a, p) == doctest::Approx(0.125).epsilon(1e-12));

    Task task;
    task.id = DeviceId{4};
    task.segments = 250;
    task.cpu_freq_hz = 0.8e9;
    task.cycles_per_bit = 580;
    task.pathloss = 1e-7;
    s.arrival = task;
    Action local = a;
    local.offload = false;
    Action edge = a;
    edge.offload = true;
    CHECK(stage_cost_reduced(s, local, p) == doctest::Approx(0.1 + 0.01 + local_cost(task, p)).epsilon(1e-12));
    CHECK(stage_cost_reduced(s, edge, p) == doctest::Approx(0.1 + 0.01).epsilon(1e-12));
}

TEST_CASE("advance_state basics") {
    const auto p = defaults();
    const FadingSource unit = [](DeviceId) { return 1.0; };
    FullState empty;
    const FullState next = advance_state(empty, Action{}, unit, std::nullopt, p);
    CHECK(next.compact.empty());
    CHECK(next.locals.empty());
    CHECK(!next.arrival);

    FullState s = with_edge({{DeviceId{1}, 1.0, 20}, {DeviceId{2}, 1.0, 5}});
    // 3e-9 W at unit gain and fading: 2e7 b/s -> 20 segments
    Action a;
    a.selected_device = DeviceId{1};
    a.transmit_power_w = 3e-9;
    TransitionReport report;
    const FullState after = advance_state(s, a, unit, std::nullopt, p, &report);
    CHECK(report.transmitted_segments == 20);
    REQUIRE(after.compact.size() == 1);
    CHECK(after.compact.entries[0].device_id == DeviceId{2});
    REQUIRE(report.departed_edge.size() == 1);

    Action bad;
    bad.selected_device = DeviceId{9};
    CHECK_THROWS_AS(advance_state(s, bad, unit, std::nullopt, p), std::invalid_argument);
}

TEST_CASE("advance_state routes the arrival and it waits a frame") {
    const auto p = defaults();
    const FadingSource unit = [](DeviceId) { return 1.0; };
    FullState s;
    Task t;
    t.id = DeviceId{1};
    t.segments = 7;
    t.cpu_freq_hz = 1e9;
    t.cycles_per_bit = 560;
    t.pathloss = 1.0;
    s.arrival = t;
    Action admit;
    admit.offload = true;
    const FullState e = advance_state(s, admit, unit, std::nullopt, p);
    REQUIRE(e.compact.size() == 1);
    CHECK(e.compact.entries[0].queue_segments == 7);
    CHECK(e.fading.size() == 1);
    const FullState l = advance_state(s, Action{}, unit, std::nullopt, p);
    CHECK(l.compact.empty());
    REQUIRE(l.locals.size() == 1);
    CHECK(l.locals[0].queue_segments == 7.0);
}

// Random action/arrival sequences: FCFS order, nonnegative queues and
// conservation of segments for every departed device.
TEST_CASE("queue invariants under random sequences") {
    const auto p = defaults();
    RngStream rng(2024, 1);
    for (int run = 0; run < 20; ++run) {
        FullState s;
        std::map<std::uint64_t, int> admitted, sent;
        std::map<std::uint64_t, double> local_total, local_done;
        std::uint64_t next_id = 1;
        for (int frame = 0; frame < 400; ++frame) {
            Action a;
            if (!s.compact.empty() && rng.uniform() < 0.8) {
                const auto pos = static_cast<std::size_t>(rng.uniform() * s.compact.size());
                a.selected_device = s.compact.entries[pos].device_id;
                a.transmit_power_w = 1e-9 * std::pow(10.0, 4.0 * rng.uniform()) / s.compact.entries[pos].pathloss;
            }
            if (s.arrival) a.offload = rng.uniform() < 0.5;
            std::optional<Task> arrival;
            if (rng.uniform() < 0.3) {
                Task t;
                t.id = DeviceId{next_id++};
                t.segments = 1 + static_cast<int>(rng.uniform() * 30);
                t.cpu_freq_hz = 0.6e9 + 0.4e9 * rng.uniform();
                t.cycles_per_bit = 560 + 40 * rng.uniform();
                t.pathloss = pathloss_from_distance(1 + 399 * rng.uniform(), p);
                arrival = t;
            }
            if (s.arrival) {
                if (a.offload) admitted[raw(s.arrival->id)] = s.arrival->segments;
                else local_total[raw(s.arrival->id)] = s.arrival->segments;
            }
            std::vector<double> before_local;
            for (const auto& l : s.locals) before_local.push_back(l.queue_segments);
            TransitionReport report;
            const double h = -std::log(rng.uniform());
            const FullState next = advance_state(s, a, [h](DeviceId) { return h; }, arrival, p, &report);
            if (a.selected_device) sent[raw(*a.selected_device)] += report.transmitted_segments;
            for (std::size_t i = 0; i < s.locals.size(); ++i)
                local_done[raw(s.locals[i].device_id)] +=
                    std::min(before_local[i], local_drain_per_frame(s.locals[i].cpu_freq_hz, s.locals[i].cycles_per_bit, p));
            for (DeviceId id : report.departed_edge) CHECK(sent[raw(id)] == admitted[raw(id)]);
            for (DeviceId id : report.departed_local)
                CHECK(local_done[raw(id)] == doctest::Approx(local_total[raw(id)]).epsilon(1e-9));
            CHECK(next.compact.well_formed());
            for (const auto& l : next.locals) CHECK(l.queue_segments >= 0.0);
            CHECK(next.fading.size() == next.compact.size());
            s = next;
        }
    }
}

TEST_CASE("parameter validation") {
    auto p = defaults();
    CHECK_NOTHROW(p.validate());
    p.discount = 1.0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = defaults();
    p.seg_min = 10;
    p.seg_max = 5;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = defaults();
    p.power_grid = {1e-3, 1e-4};
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p = defaults();
    p.min_distance_m = 500;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("log power grid") {
    const auto g = log_power_grid(1e-10, 1e-1, 32);
    REQUIRE(g.size() == 32);
    CHECK(g.front() == 1e-10);
    CHECK(g.back() == 1e-1);
    for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] / g[i - 1] == doctest::Approx(std::pow(1e9, 1.0 / 31)));
}
