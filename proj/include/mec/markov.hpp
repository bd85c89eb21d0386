#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <string>

#include "mec/model.hpp"

namespace mec {

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Arrival statistics the value function depends on: arrival probability,
// E[1/rho] of arriving devices, and E[C] of a locally computed task.
struct ChainStats {
    double arrival_prob = 0.0;
    double varpi = 0.0;
    double cbar = 0.0;
};

// State (zeta, xi) of the steady-period chain: zeta edge devices, xi segments
// left at the head. (0,0) is the empty state.
struct ChainIndex {
    int K = 1;
    int d_max = 1;

    std::size_t size() const { return static_cast<std::size_t>(K) * static_cast<std::size_t>(d_max) + 1; }
    // 1-based index; throws std::out_of_range outside the valid domain.
    std::size_t epsilon_index(int zeta, int xi) const;
    // 0-based storage slot of the same state.
    std::size_t slot(int zeta, int xi) const { return epsilon_index(zeta, xi) - 1; }

    static ChainIndex from_params(const ModelParams& params) { return {params.admission_threshold, params.seg_max}; }
};

// Receive power needed to push x segments through one frame at unit fading.
double alpha(int x, const ModelParams& params);

// Transition matrix of the baseline policy's edge queue (at most K devices).
Eigen::MatrixXd build_phi(const ModelParams& params, double p_r, double arrival_prob);
// Entrywise derivative of build_phi with respect to p_r.
Eigen::MatrixXd build_dphi(const ModelParams& params, double p_r, double arrival_prob);

Eigen::VectorXd build_c(const ModelParams& params, double p_r, const ChainStats& stats);
// d c / d p_r: zero at the empty state, varpi everywhere else.
Eigen::VectorXd build_dc(double varpi, const ChainIndex& index);

// Edge-device count chain used while the initial devices are still in the
// queue: count c sits at position c (0-based), capped at K.
struct SmallChain {
    Eigen::VectorXd u;      // K+1
    Eigen::VectorXd gvec;   // K+1
    Eigen::MatrixXd Pmat;   // departure shift
    Eigen::MatrixXd Mmat;   // arrivals admitted below K
};

SmallChain build_small_chain(const ModelParams& params, std::size_t initial_edge_count, const ChainStats& stats);

// ((u^T M^T) P)^T.
Eigen::VectorXd propagate_u(const Eigen::VectorXd& u, const Eigen::MatrixXd& Mmat, const Eigen::MatrixXd& Pmat,
                            long frames);

// Distribution over chain states when the last initial device departs.
// With no initial devices the chain starts empty.
Eigen::VectorXd build_v(const std::optional<Eigen::VectorXd>& u_last, const Eigen::MatrixXd& Mmat,
                        const Eigen::MatrixXd& Pmat, long frames_last, const ChainIndex& index,
                        const ModelParams& params);

// Reference-state entry distribution: unit mass on the empty state.
Eigen::VectorXd reference_entry(const ChainIndex& index);

// Factorization of (I - gamma Phi), reused for several right-hand sides.
class DiscountedChain {
public:
    DiscountedChain(const Eigen::MatrixXd& phi, double gamma);

    // x with (I - gamma Phi) x = rhs; throws SolverError when the residual
    // exceeds 1e-9 of the right-hand side.
    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
    // y with (I - gamma Phi)^T y = rhs.
    Eigen::VectorXd solve_transposed(const Eigen::VectorXd& rhs) const;
    double last_residual() const { return last_residual_; }

private:
    Eigen::MatrixXd system_;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
    mutable double last_residual_ = 0.0;
};

Eigen::VectorXd solve_discounted(const Eigen::MatrixXd& phi, const Eigen::VectorXd& c, double gamma);

// max_i |sum_j A_ij - target|.
double max_row_sum_deviation(const Eigen::MatrixXd& matrix, double target);

}  // namespace mec
