#include "experiment.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "mec/stochastic.hpp"
#include "mec/valuefn.hpp"

namespace mec::cli {

using nlohmann::json;

namespace {

// Reads the keys of one JSON object, remembering which were used so that
// anything left over can be rejected.
class Section {
public:
    Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) throw ConfigError(where() + " must be an object");
    }

    bool has(const std::string& key) const { return node_.contains(key); }

    const json* raw(const std::string& key) {
        used_.insert(key);
        auto it = node_.find(key);
        return it == node_.end() ? nullptr : &*it;
    }

    const json& required(const std::string& key) {
        const json* j = raw(key);
        if (!j) throw ConfigError("missing required field " + child(key));
        return *j;
    }

    void number(const std::string& key, double& out) {
        if (const json* j = raw(key)) out = as_number(*j, child(key));
    }
    void integer(const std::string& key, int& out) {
        if (const json* j = raw(key)) out = static_cast<int>(as_integer(*j, child(key)));
    }
    void integer(const std::string& key, long& out) {
        if (const json* j = raw(key)) out = static_cast<long>(as_integer(*j, child(key)));
    }
    void text(const std::string& key, std::string& out) {
        if (const json* j = raw(key)) {
            if (!j->is_string()) throw ConfigError(child(key) + " must be a string");
            out = j->get<std::string>();
        }
    }
    void range(const std::string& key, std::pair<double, double>& out) {
        if (const json* j = raw(key)) {
            if (!j->is_array() || j->size() != 2) throw ConfigError(child(key) + " must be [lo, hi]");
            out = {as_number((*j)[0], child(key)), as_number((*j)[1], child(key))};
        }
    }
    void numbers(const std::string& key, std::vector<double>& out) {
        if (const json* j = raw(key)) {
            if (!j->is_array()) throw ConfigError(child(key) + " must be an array of numbers");
            out.clear();
            for (const auto& v : *j) out.push_back(as_number(v, child(key)));
        }
    }

    void finish() const {
        for (const auto& [key, value] : node_.items()) {
            (void)value;
            if (!used_.count(key)) throw ConfigError("unknown key " + child(key));
        }
    }

    std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    static double as_number(const json& j, const std::string& where) {
        if (!j.is_number()) throw ConfigError(where + " must be a number");
        const double v = j.get<double>();
        if (!std::isfinite(v)) throw ConfigError(where + " must be finite");
        return v;
    }
    static long long as_integer(const json& j, const std::string& where) {
        if (!j.is_number_integer()) throw ConfigError(where + " must be an integer");
        return j.get<long long>();
    }

private:
    std::string where() const { return path_.empty() ? "config" : path_; }

    const json& node_;
    std::string path_;
    std::set<std::string> used_;
};

void parse_model(Section s, ModelParams& p) {
    s.number("frame_duration_s", p.frame_duration_s);
    s.number("bandwidth_hz", p.bandwidth_hz);
    s.number("segment_bits", p.segment_bits);
    s.number("noise_power_w", p.noise_power_w);
    s.number("latency_weight", p.latency_weight);
    s.number("discount", p.discount);
    s.number("switched_capacitance", p.switched_capacitance);
    s.integer("seg_min", p.seg_min);
    s.integer("seg_max", p.seg_max);
    s.number("arrival_prob", p.arrival_prob);
    s.integer("admission_threshold", p.admission_threshold);
    s.number("receive_power_w", p.receive_power_w);
    s.number("cell_radius_m", p.cell_radius_m);
    s.number("pathloss_exponent", p.pathloss_exponent);
    s.number("min_distance_m", p.min_distance_m);
    s.range("cpu_freq_range_hz", p.cpu_freq_range_hz);
    s.range("cycles_per_bit_range", p.cycles_per_bit_range);
    if (const json* grid = s.raw("power_grid")) {
        if (grid->is_array()) {
            p.power_grid.clear();
            for (const auto& v : *grid) p.power_grid.push_back(Section::as_number(v, "model.power_grid"));
        } else {
            Section g(*grid, "model.power_grid");
            double lo = Section::as_number(g.required("lo"), "model.power_grid.lo");
            double hi = Section::as_number(g.required("hi"), "model.power_grid.hi");
            long levels = Section::as_integer(g.required("levels"), "model.power_grid.levels");
            g.finish();
            if (!(lo > 0.0 && hi > lo) || levels < 2) throw ConfigError("model.power_grid needs 0 < lo < hi, levels >= 2");
            p.power_grid = log_power_grid(lo, hi, static_cast<int>(levels));
        }
    }
    s.finish();
}

PolicySpec parse_policy(const json& j, const std::string& where) {
    PolicySpec spec;
    auto kind_of = [&](const json& name) {
        if (!name.is_string()) throw ConfigError(where + " must name a policy");
        auto kind = parse_policy_kind(name.get<std::string>());
        if (!kind) throw ConfigError(where + ": unknown policy '" + name.get<std::string>() + "'");
        return *kind;
    };
    if (j.is_string()) {
        spec.kind = kind_of(j);
        return spec;
    }
    Section s(j, where);
    spec.kind = kind_of(s.required("kind"));
    if (const json* p = s.raw("p_r")) spec.p_r = Section::as_number(*p, where + ".p_r");
    if (const json* k = s.raw("K")) spec.K = static_cast<int>(Section::as_integer(*k, where + ".K"));
    s.numbers("power_grid", spec.power_grid);
    s.finish();
    return spec;
}

std::vector<InitialDevice> parse_state(const json& j, const std::string& where, const ModelParams& params) {
    if (!j.is_array()) throw ConfigError(where + " must be an array of devices");
    std::vector<InitialDevice> devices;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string at = where + "[" + std::to_string(i) + "]";
        Section s(j[i], at);
        InitialDevice d;
        const bool by_pathloss = s.has("pathloss");
        const bool by_distance = s.has("distance_m");
        if (by_pathloss == by_distance) throw ConfigError(at + " needs exactly one of pathloss, distance_m");
        if (by_pathloss) {
            s.number("pathloss", d.pathloss);
        } else {
            double r = 0.0;
            s.number("distance_m", r);
            if (!(r > 0.0)) throw ConfigError(at + ".distance_m must be positive");
            d.pathloss = pathloss_from_distance(r, params);
        }
        d.queue_segments = static_cast<int>(Section::as_integer(s.required("queue_segments"), at + ".queue_segments"));
        s.finish();
        devices.push_back(d);
    }
    return devices;
}

void parse_learn(Section s, LearnSettings& learn) {
    std::string mode = "joint";
    s.text("mode", mode);
    if (mode == "estimators") learn.mode = LearnMode::estimators;
    else if (mode == "sgd") learn.mode = LearnMode::sgd;
    else if (mode == "joint") learn.mode = LearnMode::joint;
    else throw ConfigError("learn.mode must be estimators, sgd or joint");
    s.integer("frames", learn.frames);
    s.integer("sgd_iterations", learn.sgd_iterations);
    s.number("initial_p_r", learn.initial_p_r);
    s.integer("log_every", learn.log_every);
    std::string schedule = "harmonic";
    s.text("schedule", schedule);
    if (schedule == "harmonic") learn.sgd.schedule = StepSchedule::harmonic;
    else if (schedule == "delayed_harmonic") learn.sgd.schedule = StepSchedule::delayed_harmonic;
    else throw ConfigError("learn.schedule must be harmonic or delayed_harmonic");
    s.number("eta0", learn.sgd.eta0);
    s.number("first_step_fraction", learn.sgd.first_step_fraction);
    s.number("decay_iterations", learn.sgd.decay_iterations);
    s.number("p_floor", learn.sgd.p_floor);
    s.number("p_cap", learn.sgd.p_cap);
    s.finish();
    if (learn.frames < 0 || learn.sgd_iterations < 0 || learn.log_every < 1)
        throw ConfigError("learn: frames and sgd_iterations must be >= 0, log_every >= 1");
    if (!(learn.sgd.p_floor > 0.0 && learn.sgd.p_floor < learn.sgd.p_cap))
        throw ConfigError("learn: need 0 < p_floor < p_cap");
    if (!(learn.initial_p_r >= learn.sgd.p_floor && learn.initial_p_r <= learn.sgd.p_cap))
        throw ConfigError("learn.initial_p_r outside [p_floor, p_cap]");
    if (!(learn.sgd.first_step_fraction > 0.0) || !(learn.sgd.decay_iterations > 0.0) || learn.sgd.eta0 < 0.0)
        throw ConfigError("learn: step-size settings must be positive");
}

json hashed_part(const json& resolved) {
    json copy = resolved;
    copy.erase("workers");
    copy.erase("out");
    return copy;
}

CompactState compact_of(const std::vector<InitialDevice>& devices) {
    CompactState s;
    for (std::size_t i = 0; i < devices.size(); ++i)
        s.entries.push_back({DeviceId{i + 1}, devices[i].pathloss, devices[i].queue_segments});
    return s;
}

json state_json(const std::vector<InitialDevice>& devices) {
    json arr = json::array();
    for (const auto& d : devices) arr.push_back({{"pathloss", d.pathloss}, {"queue_segments", d.queue_segments}});
    return arr;
}

void stamp(CsvTable& table, const ExperimentConfig& config, const std::string& command) {
    table.add_meta("version", std::string("mecsched ") + kToolVersion + " schema " + std::to_string(kCsvSchemaVersion));
    table.add_meta("config_hash", config.hash);
    table.add_meta("command", command);
}

struct PairedStats {
    double mean = 0.0;
    double se = 0.0;
};

PairedStats mean_se(const std::vector<double>& xs) {
    PairedStats out;
    if (xs.empty()) return out;
    double s = 0.0;
    for (double x : xs) s += x;
    out.mean = s / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double v = 0.0;
        for (double x : xs) v += (x - out.mean) * (x - out.mean);
        out.se = std::sqrt(v / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
    }
    return out;
}

PolicySpec spec_of(PolicyKind kind) {
    PolicySpec spec;
    spec.kind = kind;
    return spec;
}

constexpr std::uint64_t kLearnRoot = 0x6c6561726e;

}  // namespace

void apply_override(json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects KEY=VALUE, got '" + assignment + "'");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    json* node = &config;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("--set: empty path component in '" + key + "'");
        if (!node->is_object()) throw ConfigError("--set: '" + key + "' descends into a non-object");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

std::string config_hash(const json& resolved) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : hashed_part(resolved).dump()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ModelParams scaled_task_size(ModelParams params, double scale) {
    if (!(scale > 0.0)) throw std::invalid_argument("task size scale must be positive");
    params.seg_min = std::max(1, static_cast<int>(std::lround(params.seg_min * scale)));
    params.seg_max = std::max(params.seg_min, static_cast<int>(std::lround(params.seg_max * scale)));
    return params;
}

ExperimentConfig parse_config(const json& document) {
    ExperimentConfig config;
    Section top(document, "");
    parse_model(Section(top.required("model"), "model"), config.sim.params);

    {
        Section s(top.required("sim"), "sim");
        config.sim.episodes = static_cast<int>(Section::as_integer(s.required("episodes"), "sim.episodes"));
        s.integer("horizon_frames", config.sim.horizon_frames);
        s.number("horizon_tolerance", config.sim.horizon_tolerance);
        std::string first = "none";
        s.text("first_arrival", first);
        if (first == "none") config.sim.first_arrival = FirstArrival::none;
        else if (first == "random") config.sim.first_arrival = FirstArrival::random;
        else throw ConfigError("sim.first_arrival must be none or random");
        s.finish();
    }
    if (const json* seed = top.raw("seed")) {
        if (!seed->is_number_unsigned() && !(seed->is_number_integer() && seed->get<long long>() >= 0))
            throw ConfigError("seed must be a non-negative integer");
        config.sim.seed = seed->get<std::uint64_t>();
    }
    top.integer("workers", config.workers);
    top.text("out", config.out_dir);

    if (const json* sweep = top.raw("sweep")) {
        Section s(*sweep, "sweep");
        if (const json* pol = s.raw("policies")) {
            if (!pol->is_array()) throw ConfigError("sweep.policies must be an array");
            for (std::size_t i = 0; i < pol->size(); ++i)
                config.policies.push_back(parse_policy((*pol)[i], "sweep.policies[" + std::to_string(i) + "]"));
        }
        s.numbers("arrival_prob", config.arrival_probs);
        s.numbers("task_size_scale", config.task_size_scales);
        s.numbers("p_r", config.p_rs);
        s.finish();
    }
    if (const json* states = top.raw("states")) {
        if (!states->is_array()) throw ConfigError("states must be an array of states");
        for (std::size_t i = 0; i < states->size(); ++i)
            config.states.push_back(parse_state((*states)[i], "states[" + std::to_string(i) + "]", config.sim.params));
    }
    if (config.states.empty()) config.states.emplace_back();
    if (const json* learn = top.raw("learn")) parse_learn(Section(*learn, "learn"), config.learn);
    if (const json* bound = top.raw("bound_check")) {
        Section s(*bound, "bound_check");
        s.number("confidence_z", config.bound.confidence_z);
        s.number("analytic_tolerance", config.bound.analytic_tolerance);
        s.finish();
        if (!(config.bound.confidence_z > 0.0) || !(config.bound.analytic_tolerance >= 0.0))
            throw ConfigError("bound_check: confidence_z > 0 and analytic_tolerance >= 0 required");
    }
    top.finish();

    if (config.workers < 1) throw ConfigError("workers must be >= 1");
    for (double p : config.arrival_probs)
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("sweep.arrival_prob values must lie in [0,1]");
    for (double s : config.task_size_scales)
        if (!(s > 0.0)) throw ConfigError("sweep.task_size_scale values must be positive");
    for (double p : config.p_rs)
        if (!(p > 0.0)) throw ConfigError("sweep.p_r values must be positive");
    try {
        config.sim.validate();
        for (const auto& state : config.states) {
            SimConfig probe = config.sim;
            probe.initial_edge = state;
            probe.validate();
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }

    config.resolved = document;
    config.hash = config_hash(document);
    return config;
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    json document = json::parse(in, nullptr, false);
    if (document.is_discarded()) throw ConfigError("config file '" + path + "' is not valid JSON");
    for (const auto& o : overrides) apply_override(document, o);
    return parse_config(document);
}

std::string format_number(double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", value);
    return buf;
}

void CsvTable::add_row(std::vector<std::string> cells) {
    if (cells.size() != columns_.size()) throw std::logic_error("CsvTable: row width does not match header");
    rows_.push_back(std::move(cells));
}

void CsvTable::write(std::ostream& out) const {
    for (const auto& [k, v] : meta_) out << "# " << k << ": " << v << '\n';
    for (std::size_t i = 0; i < columns_.size(); ++i) out << (i ? "," : "") << columns_[i];
    out << '\n';
    for (const auto& row : rows_) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
        out << '\n';
    }
}

CommandResult cmd_simulate(const ExperimentConfig& config) {
    if (config.policies.empty()) throw ConfigError("simulate needs sweep.policies");
    const auto& base = config.sim.params;
    const std::vector<double> probs = config.arrival_probs.empty() ? std::vector<double>{base.arrival_prob}
                                                                   : config.arrival_probs;
    const std::vector<double> scales =
        config.task_size_scales.empty() ? std::vector<double>{1.0} : config.task_size_scales;
    const std::vector<double> powers = config.p_rs.empty() ? std::vector<double>{base.receive_power_w} : config.p_rs;

    CommandResult result;
    CsvTable metrics(kMetricsColumns);
    CsvTable pmfs(kPmfColumns);
    stamp(metrics, config, "simulate");
    stamp(pmfs, config, "simulate");
    pmfs.add_meta("power_bin", "bin b covers [10^(b/10), 10^((b+1)/10)) W");

    json runs = json::array();
    for (const auto& spec : config.policies) {
        for (double scale : scales) {
            for (double p_r : powers) {
                for (double prob : probs) {
                    SimConfig sim = config.sim;
                    sim.params = scaled_task_size(base, scale);
                    sim.params.arrival_prob = prob;
                    sim.params.receive_power_w = p_r;
                    sim.initial_edge = config.states.front();
                    const auto policy = make_policy(spec, sim.params, true_chain_stats(sim.params));
                    const long horizon = sim.resolved_horizon();
                    const auto trajectories = run_episodes(sim, *policy, config.workers);
                    const Metrics m = aggregate_metrics(trajectories, sim.params, horizon);
                    const std::string label = spec.label();
                    const double used_pr = spec.p_r.value_or(p_r);

                    metrics.add_row({label, format_number(prob), format_number(used_pr), std::to_string(sim.seed),
                                     std::to_string(m.episodes), format_number(m.discounted_cost_mean),
                                     format_number(m.discounted_cost_ci), format_number(m.per_device_cost),
                                     format_number(m.edge_ratio), format_number(scale),
                                     format_number(m.per_device_cost_ci), std::to_string(m.departed_devices)});
                    for (const auto& [bin, mass] : m.latency_pmf)
                        pmfs.add_row({label, format_number(prob), "latency", std::to_string(bin), format_number(mass),
                                      format_number(used_pr), format_number(scale)});
                    for (const auto& [bin, mass] : m.power_pmf)
                        pmfs.add_row({label, format_number(prob), "power", std::to_string(bin), format_number(mass),
                                      format_number(used_pr), format_number(scale)});
                    const double rel_trunc =
                        m.discounted_cost_mean > 0.0 ? m.truncation_bound / m.discounted_cost_mean : 0.0;
                    runs.push_back({{"policy", label},
                                    {"arrival_prob", prob},
                                    {"p_r", used_pr},
                                    {"task_size_scale", scale},
                                    {"horizon_frames", horizon},
                                    {"truncation_bound", m.truncation_bound},
                                    {"truncation_ok", rel_trunc < 1e-4}});
                }
            }
        }
    }
    result.report = {{"rows", metrics.rows()}, {"runs", runs}};
    result.files.emplace("metrics.csv", std::move(metrics));
    result.files.emplace("pmfs.csv", std::move(pmfs));
    return result;
}

CommandResult cmd_value(const ExperimentConfig& config) {
    const ModelParams& params = config.sim.params;
    const ValueFunction vf({params, true_chain_stats(params)});
    CommandResult result;
    const bool rows_ok = vf.phi_row_sum_deviation() <= 1e-12;
    json states = json::array();
    for (const auto& state : config.states) {
        const ValueBreakdown b = vf.breakdown(compact_of(state));
        states.push_back({{"state", state_json(state)},
                          {"w1", b.w1},
                          {"w2", b.w2},
                          {"w3", b.w3},
                          {"total", b.total}});
    }
    result.report = {{"states", states},
                     {"diagnostics",
                      {{"row_sum_max_deviation", vf.phi_row_sum_deviation()},
                       {"solve_residual", vf.solve_residual()},
                       {"spectral_efficiency", vf.spectral_efficiency()},
                       {"reference_value", vf.reference_value()},
                       {"ok", rows_ok}}}};
    if (!rows_ok) throw SolverError("transition matrix row sums deviate from 1 by more than 1e-12");
    return result;
}

CommandResult cmd_learn(const ExperimentConfig& config) {
    const ModelParams& params = config.sim.params;
    const LearnSettings& learn = config.learn;
    const bool estimators = learn.mode != LearnMode::sgd;
    const bool sgd = learn.mode != LearnMode::estimators;
    if (sgd && learn.sgd_iterations > 0 && !(params.arrival_prob > 0.0))
        throw ConfigError("learn: SGD steps on arrivals, so model.arrival_prob must be positive");

    const ChainStats truth = true_chain_stats(params);
    const RngStream rng(config.sim.seed, derive_stream(kLearnRoot, 0));
    const ArrivalConfig arrivals = ArrivalConfig::from_params(params);

    CommandResult result;
    CsvTable learning(kLearningColumns);
    CsvTable steps(kSgdColumns);
    stamp(learning, config, "learn");
    stamp(steps, config, "learn");

    EstimatorState est;
    SgdState state;
    state.p_r = learn.initial_p_r;
    ModelParams sgd_params = params;
    long t = 0;
    while ((estimators && t < learn.frames) || (sgd && state.n < learn.sgd_iterations)) {
        ++t;
        const auto task = sample_arrival(rng, arrivals, params, t, DeviceId{0});
        est = update_estimators(est, FrameObservation::from(task), params);
        if (estimators && t <= learn.frames && (t == 1 || t % learn.log_every == 0))
            learning.add_row({std::to_string(est.t), std::to_string(est.n), format_number(est.p_hat),
                              format_number(est.varpi_hat), format_number(est.cbar_hat)});
        if (sgd && task && state.n < learn.sgd_iterations) {
            const ChainStats stats = learn.mode == LearnMode::joint ? est.stats() : truth;
            state = sgd_step(state, learn.sgd, sgd_params, stats);
            steps.add_row({std::to_string(state.n), format_number(state.p_r), format_number(state.last_gradient)});
        }
    }

    json report = {{"mode", learn.mode == LearnMode::joint ? "joint" : estimators ? "estimators" : "sgd"},
                   {"frames", t},
                   {"truth", {{"P_N", truth.arrival_prob}, {"varpi", truth.varpi}, {"cbar", truth.cbar}}}};
    if (estimators) {
        report["estimates"] = {{"t", est.t}, {"n", est.n}, {"P_hat", est.p_hat}, {"varpi_hat", est.varpi_hat},
                               {"cbar_hat", est.cbar_hat}};
        result.files.emplace("learning.csv", std::move(learning));
    }
    if (sgd) {
        report["sgd"] = {{"iterations", state.n}, {"p_r", state.p_r}, {"eta0", state.eta0},
                         {"last_gradient", state.last_gradient}};
        result.files.emplace("sgd.csv", std::move(steps));
    }
    result.report = report;
    return result;
}

CommandResult cmd_bound_check(const ExperimentConfig& config) {
    const ModelParams& params = config.sim.params;
    const ChainStats stats = true_chain_stats(params);
    const ValueFunction vf({params, stats});
    const auto baseline = make_policy(spec_of(PolicyKind::baseline), params, stats);
    const auto improved = make_policy(spec_of(PolicyKind::improved), params, stats);
    const double z = config.bound.confidence_z;

    CommandResult result;
    CsvTable table(kBoundColumns);
    stamp(table, config, "bound-check");
    table.add_meta("accounting", "reduced stage cost, first frame draws an arrival");

    json states = json::array();
    bool all_ok = true;
    for (std::size_t i = 0; i < config.states.size(); ++i) {
        SimConfig sim = config.sim;
        sim.initial_edge = config.states[i];
        sim.first_arrival = FirstArrival::random;
        const auto base_runs = run_episodes(sim, *baseline, config.workers);
        const auto impr_runs = run_episodes(sim, *improved, config.workers);
        std::vector<double> wb, wi, diff;
        for (std::size_t e = 0; e < base_runs.size(); ++e) {
            wb.push_back(base_runs[e].discounted_reduced_cost);
            wi.push_back(impr_runs[e].discounted_reduced_cost);
            diff.push_back(wi.back() - wb.back());
        }
        const PairedStats b = mean_se(wb), im = mean_se(wi), d = mean_se(diff);
        const double analytic = vf.value(compact_of(config.states[i]));
        // not significantly above the baseline, and both nonnegative
        const bool ordering_ok = d.mean <= z * d.se + 1e-12 * std::abs(b.mean) && b.mean >= 0.0 && im.mean >= 0.0;
        const bool analytic_ok =
            std::abs(b.mean - analytic) <= config.bound.analytic_tolerance * std::abs(analytic) + z * b.se + 1e-12;
        all_ok = all_ok && ordering_ok && analytic_ok;
        table.add_row({std::to_string(i), std::to_string(config.states[i].size()), format_number(b.mean),
                       format_number(z * b.se), format_number(im.mean), format_number(z * im.se),
                       format_number(analytic), format_number(d.mean), format_number(z * d.se),
                       ordering_ok ? "1" : "0", analytic_ok ? "1" : "0"});
        states.push_back({{"state", state_json(config.states[i])},
                          {"W_hat_baseline", b.mean},
                          {"W_hat_baseline_ci", z * b.se},
                          {"W_hat_improved", im.mean},
                          {"W_hat_improved_ci", z * im.se},
                          {"analytic_W_baseline", analytic},
                          {"paired_diff", d.mean},
                          {"paired_CI", z * d.se},
                          {"ordering_ok", ordering_ok},
                          {"analytic_ok", analytic_ok}});
    }
    result.report = {{"states", states}, {"confidence_z", z}, {"all_ok", all_ok}};
    result.files.emplace("bound_check.csv", std::move(table));
    if (!all_ok) result.status = kExitAssertion;
    return result;
}

void write_outputs(const CommandResult& result, const std::string& out_dir) {
    namespace fs = std::filesystem;
    if (result.files.empty()) return;
    fs::create_directories(out_dir);
    std::vector<std::pair<fs::path, fs::path>> staged;
    for (const auto& [name, table] : result.files) {
        const fs::path final_path = fs::path(out_dir) / name;
        const fs::path tmp = fs::path(out_dir) / ("." + name + ".tmp");
        std::ofstream out(tmp, std::ios::binary);
        table.write(out);
        out.close();
        if (!out) throw std::runtime_error("failed writing " + tmp.string());
        staged.emplace_back(tmp, final_path);
    }
    for (const auto& [tmp, final_path] : staged) fs::rename(tmp, final_path);
}

int run_command(const std::string& command, const std::string& config_path, const std::vector<std::string>& overrides,
                std::optional<std::uint64_t> seed, std::optional<int> workers, std::optional<std::string> out_dir,
                std::ostream& out) {
    const auto fail = [&](int status, const std::string& kind, const std::string& message) {
        out << json{{"command", command}, {"status", "error"}, {"error", kind}, {"exit_status", status},
                    {"message", message}}
                   .dump()
            << std::endl;
        return status;
    };
    try {
        std::vector<std::string> all = overrides;
        if (seed) all.push_back("seed=" + std::to_string(*seed));
        if (workers) all.push_back("workers=" + std::to_string(*workers));
        if (out_dir) all.push_back("out=" + json(*out_dir).dump());
        const ExperimentConfig config = load_config(config_path, all);

        CommandResult result;
        if (command == "simulate") result = cmd_simulate(config);
        else if (command == "value") result = cmd_value(config);
        else if (command == "learn") result = cmd_learn(config);
        else if (command == "bound-check") result = cmd_bound_check(config);
        else throw ConfigError("unknown command '" + command + "'");

        write_outputs(result, config.out_dir);
        json record = {{"command", command},
                       {"status", result.status == kExitOk ? "ok" : "assertion_failure"},
                       {"exit_status", result.status},
                       {"version", kToolVersion},
                       {"config_hash", config.hash},
                       {"seed", config.sim.seed},
                       {"out", config.out_dir}};
        json files = json::array();
        for (const auto& [name, table] : result.files) files.push_back(name);
        record["files"] = files;
        record["result"] = result.report;
        out << record.dump() << std::endl;
        return result.status;
    } catch (const ConfigError& e) {
        return fail(kExitConfig, "config_error", e.what());
    } catch (const SolverError& e) {
        return fail(kExitSolver, "solver_failure", e.what());
    } catch (const std::exception& e) {
        return fail(kExitInternal, "internal_error", e.what());
    }
}

}  // namespace mec::cli
