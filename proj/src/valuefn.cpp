#include "mec/valuefn.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

#include "mec/stochastic.hpp"

namespace mec {

namespace {

struct Rule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

// Golub-Welsch on a symmetric Jacobi matrix.
Rule golub_welsch(const Eigen::VectorXd& diag, const Eigen::VectorXd& offdiag, double mu0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.computeFromTridiagonal(diag, offdiag, Eigen::ComputeEigenvectors);
    Rule rule;
    const auto n = diag.size();
    for (Eigen::Index i = 0; i < n; ++i) {
        rule.nodes.push_back(solver.eigenvalues()(i));
        const double v0 = solver.eigenvectors()(0, i);
        rule.weights.push_back(mu0 * v0 * v0);
    }
    return rule;
}

Rule laguerre_rule(int n) {
    Eigen::VectorXd diag(n), off(n - 1);
    for (int i = 0; i < n; ++i) diag(i) = 2.0 * i + 1.0;
    for (int i = 1; i < n; ++i) off(i - 1) = i;
    return golub_welsch(diag, off, 1.0);
}

Rule legendre_rule(int n) {
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(n), off(n - 1);
    for (int i = 1; i < n; ++i) off(i - 1) = i / std::sqrt(4.0 * i * i - 1.0);
    return golub_welsch(diag, off, 2.0);
}

const Rule& cached_laguerre(int n) {
    static std::mutex mutex;
    static std::map<int, Rule> rules;
    std::lock_guard lock(mutex);
    auto it = rules.find(n);
    if (it == rules.end()) it = rules.emplace(n, laguerre_rule(n)).first;
    return it->second;
}

const Rule& legendre20() {
    static const Rule rule = legendre_rule(20);
    return rule;
}

template <class F>
double legendre_on(const Rule& rule, double lo, double hi, F&& f) {
    const double half = 0.5 * (hi - lo);
    const double mid = 0.5 * (hi + lo);
    double sum = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) sum += rule.weights[i] * f(mid + half * rule.nodes[i]);
    return half * sum;
}

// exactly integrates polynomials up to degree 5 on [lo, hi]
template <class F>
double gauss3(double lo, double hi, F&& f) {
    static const double node = std::sqrt(0.6);
    const double half = 0.5 * (hi - lo);
    const double mid = 0.5 * (hi + lo);
    return half * (5.0 / 9.0 * f(mid - half * node) + 8.0 / 9.0 * f(mid) + 5.0 / 9.0 * f(mid + half * node));
}

constexpr double kRoundingSlack = 1e-12;

int completion_frames(double ratio) { return std::max(1, static_cast<int>(std::ceil(ratio * (1.0 - kRoundingSlack)))); }

// Mean over l ~ U[l_lo, l_hi] of (1 - gamma^T), T = ceil(a l / f).
double mean_completion_factor(double a, double f, const ModelParams& params) {
    const double g = params.discount;
    const auto [l_lo, l_hi] = params.cycles_per_bit_range;
    if (!(l_hi > l_lo)) return 1.0 - std::pow(g, completion_frames(a * l_lo / f));
    const int j_lo = completion_frames(a * l_lo / f);
    const int j_hi = completion_frames(a * l_hi / f);
    double sum = 0.0;
    for (int j = j_lo; j <= j_hi; ++j) {
        const double from = std::max(static_cast<double>(j - 1) * f / a, l_lo);
        const double to = std::min(static_cast<double>(j) * f / a, l_hi);
        if (to > from) sum += (to - from) * (1.0 - std::pow(g, j));
    }
    return sum / (l_hi - l_lo);
}

// E over (f, l) of C for a fixed d. Between consecutive points f = a l_{lo,hi}/j
// the integrand is a degree-4 polynomial in f, so 3-point Gauss is exact.
double local_cost_at_segments(int segments, const ModelParams& params) {
    const double a = segments * params.segment_bits / params.frame_duration_s;
    const double g = params.discount;
    const double scale = g / (1.0 - g);
    const auto integrand = [&](double f) {
        return (params.latency_weight + local_power(f, params)) * mean_completion_factor(a, f, params);
    };
    const auto [f_lo, f_hi] = params.cpu_freq_range_hz;
    if (!(f_hi > f_lo)) return scale * integrand(f_lo);

    std::vector<double> cuts{f_lo, f_hi};
    for (double l : {params.cycles_per_bit_range.first, params.cycles_per_bit_range.second}) {
        const long j_first = static_cast<long>(std::floor(a * l / f_hi)) + 1;
        const long j_last = static_cast<long>(std::ceil(a * l / f_lo)) - 1;
        for (long j = std::max(1L, j_first); j <= j_last; ++j) {
            const double f = a * l / static_cast<double>(j);
            if (f > f_lo && f < f_hi) cuts.push_back(f);
        }
    }
    std::sort(cuts.begin(), cuts.end());
    double total = 0.0;
    for (std::size_t i = 1; i < cuts.size(); ++i)
        if (cuts[i] > cuts[i - 1]) total += gauss3(cuts[i - 1], cuts[i], integrand);
    return scale * total / (f_hi - f_lo);
}

}  // namespace

double ergodic_spectral_efficiency(double p_r, const ModelParams& params) {
    if (!(p_r > 0.0)) return 0.0;
    const double a = p_r / params.noise_power_w;
    const auto log2_gain = [a](double x) { return std::log1p(a * x) / std::log(2.0); };

    // [0, 1]: log(1 + a x) is nearly singular at 0 for large a, so use panels
    // shrinking geometrically toward 0.
    double head = 0.0;
    double hi = 1.0;
    for (int panel = 0; panel < 60 && a * hi > 1e-3; ++panel) {
        const double lo = 0.25 * hi;
        head += legendre_on(legendre20(), lo, hi, [&](double x) { return std::exp(-x) * log2_gain(x); });
        hi = lo;
    }
    head += legendre_on(legendre20(), 0.0, hi, [&](double x) { return std::exp(-x) * log2_gain(x); });

    // [1, inf): Gauss-Laguerre in y = x - 1, doubling the node count.
    const auto tail_with = [&](int n) {
        const Rule& rule = cached_laguerre(n);
        double sum = 0.0;
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) sum += rule.weights[i] * log2_gain(1.0 + rule.nodes[i]);
        return std::exp(-1.0) * sum;
    };
    int n = 64;
    double tail = tail_with(n);
    while (n < 512) {
        n *= 2;
        const double refined = tail_with(n);
        const double delta = std::abs(refined - tail);
        tail = refined;
        if (delta < 1e-8) break;
    }
    return head + tail;
}

long transmission_frames(int queue_segments, double spectral_efficiency, const ModelParams& params) {
    if (queue_segments < 1) throw std::invalid_argument("transmission_frames: queue must be >= 1");
    if (!(spectral_efficiency > 0.0)) throw std::invalid_argument("transmission_frames: zero spectral efficiency");
    const double frames = queue_segments * params.segment_bits /
                          (spectral_efficiency * params.bandwidth_hz * params.frame_duration_s);
    if (frames > 1e12) throw std::invalid_argument("transmission_frames: transmission time overflows");
    return std::max(1L, static_cast<long>(std::ceil(frames * (1.0 - kRoundingSlack))));
}

double expected_local_cost(const ModelParams& params) {
    double total = 0.0;
    for (int d = params.seg_min; d <= params.seg_max; ++d) total += local_cost_at_segments(d, params);
    return total / (params.seg_max - params.seg_min + 1);
}

double local_cost_over_segments(double cpu_freq_hz, double cycles_per_bit, const ModelParams& params) {
    double total = 0.0;
    for (int d = params.seg_min; d <= params.seg_max; ++d) total += local_cost(d, cpu_freq_hz, cycles_per_bit, params);
    return total / (params.seg_max - params.seg_min + 1);
}

ChainStats true_chain_stats(const ModelParams& params) {
    return {params.arrival_prob, uniform_disk_inverse_pathloss_mean(params), expected_local_cost(params)};
}

ValueFunction::ValueFunction(ValueParams params) : params_(std::move(params)) {
    const ModelParams& m = params_.model;
    m.validate();
    const ChainStats& s = params_.stats;
    if (!(s.varpi > 0.0) || !(s.cbar >= 0.0) || !(s.arrival_prob >= 0.0 && s.arrival_prob <= 1.0))
        throw std::invalid_argument("ValueFunction: need varpi > 0, cbar >= 0, arrival_prob in [0,1]");
    index_ = ChainIndex::from_params(m);
    const double p_r = m.receive_power_w;
    spectral_efficiency_ = ergodic_spectral_efficiency(p_r, m);

    const Eigen::MatrixXd phi = build_phi(m, p_r, s.arrival_prob);
    row_sum_deviation_ = max_row_sum_deviation(phi, 1.0);
    const DiscountedChain chain(phi, m.discount);
    steady_ = chain.solve(build_c(m, p_r, s));
    residual_ = chain.last_residual();

    const int K = index_.K;
    block_means_ = Eigen::VectorXd::Zero(K + 1);
    block_means_(0) = steady_(0);
    for (int zeta = 1; zeta <= K; ++zeta) {
        double sum = 0.0;
        for (int xi = m.seg_min; xi <= m.seg_max; ++xi) sum += steady_(static_cast<Eigen::Index>(index_.slot(zeta, xi)));
        block_means_(zeta) = sum / (m.seg_max - m.seg_min + 1);
    }

    small_ = build_small_chain(m, 0, s);
    spans_.resize(static_cast<std::size_t>(m.seg_max) + 1);
    for (int q = 1; q <= m.seg_max; ++q) spans_[static_cast<std::size_t>(q)] = span_for(frames_for(q));
}

long ValueFunction::frames_for(int queue_segments) const {
    return transmission_frames(queue_segments, spectral_efficiency_, params_.model);
}

// Binary powering of the one-frame span; spans compose as
// (T1) then (T2): power = M1 M2, holding = H1 + gamma^T1 M1 H2.
ValueFunction::Span ValueFunction::span_for(long frames) const {
    const Eigen::Index n = small_.gvec.size();
    const double g = params_.model.discount;
    Span result{0, 1.0, Eigen::MatrixXd::Identity(n, n), Eigen::VectorXd::Zero(n)};
    Span base{1, g, small_.Mmat, small_.gvec};
    long remaining = frames;
    while (remaining > 0) {
        if (remaining & 1L) {
            result.holding += result.discount * (result.power * base.holding);
            result.power = result.power * base.power;
            result.discount *= base.discount;
            result.frames += base.frames;
        }
        remaining >>= 1;
        if (remaining > 0) {
            base.holding += base.discount * (base.power * base.holding);
            base.power = base.power * base.power;
            base.discount *= base.discount;
            base.frames *= 2;
        }
    }
    return result;
}

const ValueFunction::Span& ValueFunction::span_for_queue(int queue_segments, Span& scratch) const {
    if (queue_segments >= 1 && static_cast<std::size_t>(queue_segments) < spans_.size())
        return spans_[static_cast<std::size_t>(queue_segments)];
    scratch = span_for(frames_for(queue_segments));
    return scratch;
}

ValueBreakdown ValueFunction::breakdown(const CompactState& state) const {
    return evaluate(state.size(), [&state](std::size_t i) -> const EdgeEntry& { return state.entries[i]; });
}

double ValueFunction::value_after(const CompactState& state, std::optional<std::size_t> position, int sent,
                                  const EdgeEntry* appended) const {
    const std::size_t base = state.size();
    std::size_t skip = base;  // index removed from the sequence, if any
    EdgeEntry changed;
    if (position) {
        changed = state.entries.at(*position);
        changed.queue_segments -= std::max(0, sent);
        if (changed.queue_segments <= 0) skip = *position;
    }
    const std::size_t kept = skip < base ? base - 1 : base;
    const std::size_t n = kept + (appended ? 1 : 0);
    return evaluate(n, [&](std::size_t i) -> const EdgeEntry& {
               if (i >= kept) return *appended;
               const std::size_t src = i >= skip ? i + 1 : i;
               if (position && src == *position) return changed;
               return state.entries[src];
           })
        .total;
}

template <class Get>
ValueBreakdown ValueFunction::evaluate(std::size_t n, Get&& get) const {
    const ModelParams& m = params_.model;
    const ChainStats& s = params_.stats;
    const double g = m.discount;
    const double p_r = m.receive_power_w;
    const std::size_t K = static_cast<std::size_t>(index_.K);
    const std::size_t first_period = n > K ? n - K : 0;

    ValueBreakdown out;
    double disc = 1.0;  // gamma^(frames elapsed before the current device)
    Span scratch;
    for (std::size_t k = 0; k < first_period; ++k) {
        const EdgeEntry& entry = get(k);
        const Span& span = span_for_queue(entry.queue_segments, scratch);
        const double geo = (1.0 - span.discount) / (1.0 - g);
        const double holding = m.latency_weight * static_cast<double>(n - k);
        out.w1 += disc * geo * (p_r / entry.pathloss + holding);
        disc *= span.discount;
    }
    // every arrival of the first period is computed locally
    out.w1 += s.arrival_prob * s.cbar * (1.0 - disc) / (1.0 - g);

    // distribution of the edge-device count at the start of the current device's service
    const std::size_t width = K + 1;
    thread_local std::vector<double> u, moved;
    u.assign(width, 0.0);
    moved.assign(width, 0.0);
    u[std::min(n, K)] = 1.0;
    for (std::size_t k = first_period; k < n; ++k) {
        const EdgeEntry& entry = get(k);
        const Span& span = span_for_queue(entry.queue_segments, scratch);
        const double geo = (1.0 - span.discount) / (1.0 - g);
        double holding = 0.0;
        for (std::size_t i = 0; i < width; ++i) holding += u[i] * span.holding(static_cast<Eigen::Index>(i));
        out.w2 += disc * (geo * p_r / entry.pathloss + holding);
        // u <- P^T (M^T)^T u: arrivals over the span, then the head departs
        for (std::size_t j = 0; j < width; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i <= j; ++i)
                acc += u[i] * span.power(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            moved[j] = acc;
        }
        u[0] = moved[0] + (width > 1 ? moved[1] : 0.0);
        for (std::size_t j = 1; j + 1 < width; ++j) u[j] = moved[j + 1];
        if (width > 1) u[width - 1] = 0.0;
        disc *= span.discount;
    }

    double steady = 0.0;
    for (std::size_t i = 0; i < width; ++i) steady += u[i] * block_means_(static_cast<Eigen::Index>(i));
    out.w3 = disc * steady;
    out.total = out.w1 + out.w2 + out.w3;
    return out;
}

namespace {

using CacheKey = std::array<double, 13>;

struct ValueCache {
    std::mutex mutex;
    std::map<CacheKey, std::shared_ptr<const ValueFunction>> entries;
};

ValueCache& value_cache() {
    static ValueCache cache;
    return cache;
}

}  // namespace

std::shared_ptr<const ValueFunction> cached_value_function(const ValueParams& params) {
    const ModelParams& m = params.model;
    const CacheKey key{m.receive_power_w, params.stats.arrival_prob, params.stats.varpi, params.stats.cbar,
                       m.discount, static_cast<double>(m.admission_threshold), static_cast<double>(m.seg_min),
                       static_cast<double>(m.seg_max), m.latency_weight, m.frame_duration_s, m.bandwidth_hz,
                       m.segment_bits, m.noise_power_w};
    ValueCache& cache = value_cache();
    {
        std::lock_guard lock(cache.mutex);
        if (auto it = cache.entries.find(key); it != cache.entries.end()) return it->second;
    }
    auto built = std::make_shared<const ValueFunction>(params);
    std::lock_guard lock(cache.mutex);
    if (cache.entries.size() >= 64) cache.entries.clear();
    return cache.entries.emplace(key, std::move(built)).first->second;
}

void clear_value_cache() {
    ValueCache& cache = value_cache();
    std::lock_guard lock(cache.mutex);
    cache.entries.clear();
}

}  // namespace mec
