#include "mec/markov.hpp"

#include <cmath>
#include <vector>

namespace mec {

namespace {

// exp(-alpha(x)/p_r) for x = 0..d_max+1 and its derivative in p_r.
struct TailTable {
    std::vector<double> value;
    std::vector<double> derivative;
};

TailTable tail_table(const ModelParams& params, double p_r) {
    const int top = params.seg_max + 1;
    TailTable table;
    table.value.assign(static_cast<std::size_t>(top) + 1, 0.0);
    table.derivative.assign(static_cast<std::size_t>(top) + 1, 0.0);
    for (int x = 0; x <= top; ++x) {
        const double ratio = alpha(x, params) / p_r;
        if (!(ratio < 745.0)) break;  // exp underflows; the table is decreasing in x
        const double e = std::exp(-ratio);
        table.value[static_cast<std::size_t>(x)] = e;
        table.derivative[static_cast<std::size_t>(x)] = ratio / p_r * e;
    }
    return table;
}

// Fills Table-I structure from a tail array. With `constants` false the
// p_r-independent cells (empty-state row) are left at zero, which yields the
// derivative matrix when `tail` holds derivatives.
Eigen::MatrixXd fill_chain(const ModelParams& params, double arrival_prob, const std::vector<double>& tail,
                           bool constants) {
    const ChainIndex index = ChainIndex::from_params(params);
    const int K = index.K;
    const int d_min = params.seg_min;
    const int d_max = params.seg_max;
    const double spread = 1.0 / static_cast<double>(d_max - d_min + 1);
    const double pn = arrival_prob;
    const auto E = [&](int x) { return tail[static_cast<std::size_t>(x)]; };

    Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(index.size()),
                                                static_cast<Eigen::Index>(index.size()));
    const auto at = [&](std::size_t r, std::size_t c) -> double& {
        return phi(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    };

    const std::size_t empty = index.slot(0, 0);
    if (constants) {
        at(empty, empty) = 1.0 - pn;
        for (int xi = d_min; xi <= d_max; ++xi) at(empty, index.slot(1, xi)) += pn * spread;
    }

    for (int zeta = 1; zeta <= K; ++zeta) {
        for (int xi = 1; xi <= d_max; ++xi) {
            const std::size_t row = index.slot(zeta, xi);
            const double done = E(xi);
            if (zeta < K) {
                // head finishes, no arrival
                if (zeta == 1) {
                    at(row, empty) += (1.0 - pn) * done;
                } else {
                    for (int next = d_min; next <= d_max; ++next)
                        at(row, index.slot(zeta - 1, next)) += (1.0 - pn) * spread * done;
                }
                // head finishes, arrival admitted: count unchanged, fresh head
                for (int next = d_min; next <= d_max; ++next) at(row, index.slot(zeta, next)) += pn * spread * done;
                // partial transmission of xi - next segments
                for (int next = 1; next <= xi; ++next) {
                    const double part = E(xi - next) - E(xi - next + 1);
                    at(row, index.slot(zeta + 1, next)) += pn * part;
                    at(row, index.slot(zeta, next)) += (1.0 - pn) * part;
                }
            } else {
                // saturated: arrivals go local
                for (int next = 1; next <= xi; ++next)
                    at(row, index.slot(K, next)) += E(xi - next) - E(xi - next + 1);
                if (K == 1) {
                    at(row, empty) += done;
                } else {
                    for (int next = d_min; next <= d_max; ++next) at(row, index.slot(K - 1, next)) += spread * done;
                }
            }
        }
    }
    return phi;
}

void check_chain_params(const ModelParams& params, double p_r, double arrival_prob) {
    params.validate();
    if (!(p_r > 0.0)) throw std::invalid_argument("chain: p_r must be positive");
    if (!(arrival_prob >= 0.0 && arrival_prob <= 1.0)) throw std::invalid_argument("chain: arrival_prob outside [0,1]");
}

}  // namespace

std::size_t ChainIndex::epsilon_index(int zeta, int xi) const {
    if (zeta == 0) {
        if (xi != 0) throw std::out_of_range("epsilon_index: empty state must have xi = 0");
        return 1;
    }
    if (zeta < 0 || zeta > K) throw std::out_of_range("epsilon_index: zeta outside 0..K");
    if (xi < 1 || xi > d_max) throw std::out_of_range("epsilon_index: xi outside 1..d_max");
    return static_cast<std::size_t>(zeta - 1) * static_cast<std::size_t>(d_max) + static_cast<std::size_t>(xi) + 1;
}

double alpha(int x, const ModelParams& params) {
    const double exponent = x * params.segment_bits / (params.bandwidth_hz * params.frame_duration_s);
    return std::expm1(exponent * std::log(2.0)) * params.noise_power_w;
}

Eigen::MatrixXd build_phi(const ModelParams& params, double p_r, double arrival_prob) {
    check_chain_params(params, p_r, arrival_prob);
    return fill_chain(params, arrival_prob, tail_table(params, p_r).value, true);
}

Eigen::MatrixXd build_dphi(const ModelParams& params, double p_r, double arrival_prob) {
    check_chain_params(params, p_r, arrival_prob);
    return fill_chain(params, arrival_prob, tail_table(params, p_r).derivative, false);
}

Eigen::VectorXd build_c(const ModelParams& params, double p_r, const ChainStats& stats) {
    const ChainIndex index = ChainIndex::from_params(params);
    Eigen::VectorXd c(static_cast<Eigen::Index>(index.size()));
    c(0) = 0.0;
    for (int zeta = 1; zeta <= index.K; ++zeta) {
        double cost = params.latency_weight * zeta + p_r * stats.varpi;
        if (zeta == index.K) cost += stats.arrival_prob * stats.cbar;
        for (int xi = 1; xi <= index.d_max; ++xi) c(static_cast<Eigen::Index>(index.slot(zeta, xi))) = cost;
    }
    return c;
}

Eigen::VectorXd build_dc(double varpi, const ChainIndex& index) {
    Eigen::VectorXd dc = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(index.size()), varpi);
    dc(0) = 0.0;
    return dc;
}

SmallChain build_small_chain(const ModelParams& params, std::size_t initial_edge_count, const ChainStats& stats) {
    const int K = params.admission_threshold;
    if (K < 1) throw std::invalid_argument("build_small_chain: K must be >= 1");
    const Eigen::Index n = K + 1;
    SmallChain chain;
    chain.u = Eigen::VectorXd::Zero(n);
    chain.u(static_cast<Eigen::Index>(std::min<std::size_t>(initial_edge_count, static_cast<std::size_t>(K)))) = 1.0;

    chain.gvec.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) chain.gvec(i) = params.latency_weight * static_cast<double>(i);
    chain.gvec(K) += stats.arrival_prob * stats.cbar;

    chain.Pmat = Eigen::MatrixXd::Zero(n, n);
    chain.Pmat(0, 0) = 1.0;
    for (Eigen::Index i = 1; i < n; ++i) chain.Pmat(i, i - 1) = 1.0;

    chain.Mmat = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index j = 0; j < K; ++j) {
        chain.Mmat(j, j) = 1.0 - stats.arrival_prob;
        chain.Mmat(j, j + 1) = stats.arrival_prob;
    }
    chain.Mmat(K, K) = 1.0;
    return chain;
}

Eigen::VectorXd propagate_u(const Eigen::VectorXd& u, const Eigen::MatrixXd& Mmat, const Eigen::MatrixXd& Pmat,
                            long frames) {
    if (frames < 0) throw std::invalid_argument("propagate_u: negative frame count");
    Eigen::RowVectorXd row = u.transpose();
    for (long t = 0; t < frames; ++t) row = row * Mmat;
    return (row * Pmat).transpose();
}

Eigen::VectorXd reference_entry(const ChainIndex& index) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(index.size()));
    v(0) = 1.0;
    return v;
}

Eigen::VectorXd build_v(const std::optional<Eigen::VectorXd>& u_last, const Eigen::MatrixXd& Mmat,
                        const Eigen::MatrixXd& Pmat, long frames_last, const ChainIndex& index,
                        const ModelParams& params) {
    if (!u_last) return reference_entry(index);
    const Eigen::VectorXd counts = propagate_u(*u_last, Mmat, Pmat, frames_last);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(index.size()));
    v(0) = counts(0);
    const double spread = 1.0 / static_cast<double>(params.seg_max - params.seg_min + 1);
    for (int zeta = 1; zeta <= index.K; ++zeta)
        for (int xi = params.seg_min; xi <= params.seg_max; ++xi)
            v(static_cast<Eigen::Index>(index.slot(zeta, xi))) = counts(zeta) * spread;
    return v;
}

DiscountedChain::DiscountedChain(const Eigen::MatrixXd& phi, double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("DiscountedChain: gamma must lie in (0,1)");
    if (phi.rows() != phi.cols()) throw std::invalid_argument("DiscountedChain: matrix must be square");
    system_ = Eigen::MatrixXd::Identity(phi.rows(), phi.cols()) - gamma * phi;
    lu_.compute(system_);
}

Eigen::VectorXd DiscountedChain::solve(const Eigen::VectorXd& rhs) const {
    Eigen::VectorXd x = lu_.solve(rhs);
    last_residual_ = (system_ * x - rhs).lpNorm<Eigen::Infinity>();
    if (!std::isfinite(last_residual_) || last_residual_ > 1e-9 * rhs.lpNorm<Eigen::Infinity>())
        throw SolverError("discounted chain solve residual " + std::to_string(last_residual_) + " exceeds tolerance");
    return x;
}

Eigen::VectorXd DiscountedChain::solve_transposed(const Eigen::VectorXd& rhs) const {
    Eigen::VectorXd y = lu_.transpose().solve(rhs);
    last_residual_ = (system_.transpose() * y - rhs).lpNorm<Eigen::Infinity>();
    if (!std::isfinite(last_residual_) || last_residual_ > 1e-9 * rhs.lpNorm<Eigen::Infinity>())
        throw SolverError("transposed chain solve residual " + std::to_string(last_residual_) + " exceeds tolerance");
    return y;
}

Eigen::VectorXd solve_discounted(const Eigen::MatrixXd& phi, const Eigen::VectorXd& c, double gamma) {
    return DiscountedChain(phi, gamma).solve(c);
}

double max_row_sum_deviation(const Eigen::MatrixXd& matrix, double target) {
    if (matrix.rows() == 0) return 0.0;
    return (matrix.rowwise().sum().array() - target).abs().maxCoeff();
}

}  // namespace mec
