#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mec/markov.hpp"
#include "mec/stochastic.hpp"

using namespace mec;

namespace {

ModelParams small(int K, int d_min, int d_max) {
    ModelParams p;
    p.admission_threshold = K;
    p.seg_min = d_min;
    p.seg_max = d_max;
    return p;
}

double at(const Eigen::MatrixXd& m, std::size_t r, std::size_t c) {
    return m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

}  // namespace

TEST_CASE("epsilon index") {
    const ChainIndex idx{4, 300};
    CHECK(idx.size() == 1201);
    CHECK(idx.epsilon_index(0, 0) == 1);
    CHECK(idx.epsilon_index(1, 1) == 2);
    CHECK(idx.epsilon_index(2, 3) == 304);
    CHECK(idx.epsilon_index(4, 300) == 1201);
    CHECK_THROWS_AS(idx.epsilon_index(1, 0), std::out_of_range);
    CHECK_THROWS_AS(idx.epsilon_index(0, 2), std::out_of_range);
    CHECK_THROWS_AS(idx.epsilon_index(5, 1), std::out_of_range);
    // bijection
    std::vector<int> seen(idx.size() + 1, 0);
    seen[idx.epsilon_index(0, 0)]++;
    for (int z = 1; z <= 4; ++z)
        for (int x = 1; x <= 300; ++x) seen[idx.epsilon_index(z, x)]++;
    for (std::size_t i = 1; i <= idx.size(); ++i) CHECK(seen[i] == 1);
}

TEST_CASE("alpha") {
    ModelParams p;
    CHECK(alpha(0, p) == 0.0);
    CHECK(alpha(10, p) == doctest::Approx(p.noise_power_w).epsilon(1e-12));  // x b_s = W T_s
    CHECK(alpha(20, p) == doctest::Approx(3e-9).epsilon(1e-12));
    for (int x = 1; x < 300; ++x) CHECK(alpha(x + 1, p) > alpha(x, p));
}

TEST_CASE("phi structure") {
    const auto p = small(3, 2, 6);
    const double pr = 2.8e-9, pn = 0.2;
    const auto phi = build_phi(p, pr, pn);
    const ChainIndex idx = ChainIndex::from_params(p);
    CHECK(at(phi, 0, 0) == doctest::Approx(1 - pn));
    for (int xi = 2; xi <= 6; ++xi) CHECK(at(phi, 0, idx.slot(1, xi)) == doctest::Approx(pn / 5));
    for (int xi = 1; xi <= 6; ++xi)
        CHECK(at(phi, idx.slot(1, xi), 0) == doctest::Approx((1 - pn) * std::exp(-alpha(xi, p) / pr)).epsilon(1e-12));
    CHECK(max_row_sum_deviation(phi, 1.0) < 1e-12);
    CHECK(phi.minCoeff() >= 0.0);
    CHECK(phi.maxCoeff() <= 1.0);

    const auto dphi = build_dphi(p, pr, pn);
    CHECK(dphi.row(0).cwiseAbs().maxCoeff() == 0.0);  // empty-state row does not depend on p_r
}

TEST_CASE("telescoping of the exp tails") {
    ModelParams p;
    const double pr = 2.8e-9;
    for (int xi = 1; xi <= 300; ++xi) {
        double s = std::exp(-alpha(xi, p) / pr);
        for (int next = 1; next <= xi; ++next)
            s += std::exp(-alpha(xi - next, p) / pr) - std::exp(-alpha(xi - next + 1, p) / pr);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("random configurations stay stochastic") {
    RngStream rng(77, 1);
    for (int i = 0; i < 200; ++i) {
        const int K = 1 + static_cast<int>(rng.uniform() * 5);
        const int d_max = 1 + static_cast<int>(rng.uniform() * 30);
        const int d_min = 1 + static_cast<int>(rng.uniform() * d_max);
        const auto p = small(K, d_min, d_max);
        const double pn = 1.0 - rng.uniform();
        const double pr = 1e-10 * std::pow(10.0, 4.0 * rng.uniform());
        CHECK(max_row_sum_deviation(build_phi(p, pr, pn), 1.0) < 1e-12);
        // entries of dPhi/dp_r are O(1/p_r); p_r dPhi/dp_r is dimensionless with entries <= 1/e
        CHECK(max_row_sum_deviation(pr * build_dphi(p, pr, pn), 0.0) < 1e-12);
    }
}

TEST_CASE("K = 1 saturates immediately") {
    const auto p = small(1, 2, 4);
    const auto phi = build_phi(p, 2.8e-9, 0.5);
    const ChainIndex idx = ChainIndex::from_params(p);
    for (int xi = 1; xi <= 4; ++xi)
        CHECK(at(phi, idx.slot(1, xi), 0) == doctest::Approx(std::exp(-alpha(xi, p) / 2.8e-9)).epsilon(1e-12));
    CHECK(max_row_sum_deviation(phi, 1.0) < 1e-12);
}

TEST_CASE("dphi matches finite differences with O(delta^2) error") {
    const auto p = small(3, 5, 25);
    const double pn = 0.3;
    for (double pr : {5e-10, 2.8e-9, 3e-8}) {
        const auto dphi = build_dphi(p, pr, pn);
        const auto fd = [&](double h) { return ((build_phi(p, pr + h, pn) - build_phi(p, pr - h, pn)) / (2 * h)).eval(); };
        const double scale = dphi.cwiseAbs().maxCoeff();
        const auto fd1 = fd(1e-3 * pr);
        const auto fd2 = fd(0.5e-3 * pr);
        const double e1 = (fd1 - dphi).cwiseAbs().maxCoeff() / scale;
        const double e2 = (fd2 - dphi).cwiseAbs().maxCoeff() / scale;
        CHECK(e1 < 1e-5);
        // halving delta cuts the error about 4x; Richardson extrapolation removes it
        CHECK(e2 < e1 / 3.0);
        const auto rich = ((4.0 * fd2 - fd1) / 3.0).eval();
        CHECK((rich - dphi).cwiseAbs().maxCoeff() / scale < 1e-8);
    }
}

TEST_CASE("cost vector and its derivative") {
    const auto p = small(3, 2, 6);
    const ChainStats stats{0.2, 0.03 / 1e-9, 0.7};
    const double pr = 1e-9;
    const auto c = build_c(p, pr, stats);
    const ChainIndex idx = ChainIndex::from_params(p);
    CHECK(c(0) == 0.0);
    CHECK(c(static_cast<Eigen::Index>(idx.slot(1, 3))) == doctest::Approx(0.08));
    CHECK(c(static_cast<Eigen::Index>(idx.slot(3, 3))) - c(static_cast<Eigen::Index>(idx.slot(2, 3))) ==
          doctest::Approx(p.latency_weight + 0.2 * 0.7));
    CHECK(c.minCoeff() >= 0.0);

    const auto dc = build_dc(stats.varpi, idx);
    CHECK(dc(0) == 0.0);
    const Eigen::VectorXd fd = (build_c(p, pr * 1.001, stats) - build_c(p, pr * 0.999, stats)) / (0.002 * pr);
    CHECK((fd - dc).cwiseAbs().maxCoeff() / stats.varpi < 1e-9);
    CHECK((build_dc(2 * stats.varpi, idx) - 2 * dc).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("small chain") {
    const auto p = small(4, 2, 6);
    const ChainStats stats{0.3, 1.0, 0.9};
    const auto sc = build_small_chain(p, 2, stats);
    CHECK(sc.u(2) == 1.0);
    CHECK(sc.u.sum() == 1.0);
    CHECK(build_small_chain(p, 9, stats).u(4) == 1.0);
    CHECK(sc.gvec(0) == 0.0);
    CHECK(sc.gvec(4) == doctest::Approx(p.latency_weight * 4 + 0.3 * 0.9));
    CHECK(max_row_sum_deviation(sc.Mmat, 1.0) < 1e-15);
    const Eigen::VectorXd prob = (Eigen::VectorXd(5) << 0.1, 0.2, 0.3, 0.25, 0.15).finished();
    CHECK((sc.Pmat.transpose() * prob).sum() == doctest::Approx(1.0));
}

TEST_CASE("propagate_u") {
    const auto p = small(3, 2, 6);
    ChainStats stats{0.0, 1.0, 0.0};
    auto sc = build_small_chain(p, 2, stats);
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(4, 4);
    CHECK((propagate_u(sc.u, sc.Mmat, I, 0) - sc.u).norm() == 0.0);
    // P_N = 0: pure shift
    CHECK(propagate_u(sc.u, sc.Mmat, sc.Pmat, 7)(1) == 1.0);

    // frame-loop oracle of the counting chain
    stats.arrival_prob = 0.35;
    sc = build_small_chain(p, 1, stats);
    std::vector<double> dist{0, 1, 0, 0};
    for (int t = 0; t < 9; ++t) {
        std::vector<double> next(4, 0.0);
        for (int c = 0; c < 4; ++c) {
            if (c < 3) {
                next[c] += dist[c] * (1 - 0.35);
                next[c + 1] += dist[c] * 0.35;
            } else {
                next[c] += dist[c];
            }
        }
        dist = next;
    }
    std::vector<double> shifted{dist[0] + dist[1], dist[2], dist[3], 0.0};
    const auto u = propagate_u(sc.u, sc.Mmat, sc.Pmat, 9);
    for (int i = 0; i < 4; ++i) CHECK(u(i) == doctest::Approx(shifted[i]).epsilon(1e-14));
    CHECK(u.sum() == doctest::Approx(1.0));
}

TEST_CASE("entry distribution") {
    const auto p = small(3, 2, 6);
    const ChainIndex idx = ChainIndex::from_params(p);
    const ChainStats stats{0.4, 1.0, 0.0};
    const auto ref = build_v(std::nullopt, Eigen::MatrixXd(), Eigen::MatrixXd(), 0, idx, p);
    CHECK(ref(0) == 1.0);
    CHECK(ref.sum() == 1.0);
    const auto sc = build_small_chain(p, 2, stats);
    const auto v = build_v(sc.u, sc.Mmat, sc.Pmat, 4, idx, p);
    CHECK(v.sum() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(v(static_cast<Eigen::Index>(idx.slot(1, 1))) == 0.0);  // below d_min gets no mass
}

TEST_CASE("discounted solve") {
    SUBCASE("one state") {
        Eigen::MatrixXd phi(1, 1);
        phi << 1.0;
        Eigen::VectorXd c(1);
        c << 2.0;
        CHECK(solve_discounted(phi, c, 0.9)(0) == doctest::Approx(20.0));
    }
    const auto p = small(3, 3, 20);
    const auto phi = build_phi(p, 1.5e-9, 0.25);
    const auto c = build_c(p, 1.5e-9, ChainStats{0.25, 4.6e8, 2.0});
    const double g = 0.9;
    SUBCASE("zero cost") {
        CHECK(solve_discounted(phi, Eigen::VectorXd::Zero(c.size()), g).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("series oracle") {
        const auto x = solve_discounted(phi, c, g);
        Eigen::VectorXd term = c, sum = c;
        double gt = 1.0;
        while (gt > 1e-13) {
            term = g * (phi * term);
            sum += term;
            gt *= g;
        }
        CHECK((x - sum).cwiseAbs().maxCoeff() / sum.cwiseAbs().maxCoeff() < 1e-9);
        CHECK(x.minCoeff() >= 0.0);
    }
    SUBCASE("monotone in c") {
        RngStream rng(8, 8);
        for (int i = 0; i < 20; ++i) {
            Eigen::VectorXd lo(c.size()), hi(c.size());
            for (Eigen::Index j = 0; j < c.size(); ++j) {
                lo(j) = rng.uniform();
                hi(j) = lo(j) + (rng.uniform() < 0.3 ? rng.uniform() : 0.0);
            }
            const Eigen::VectorXd d = solve_discounted(phi, hi, g) - solve_discounted(phi, lo, g);
            CHECK(d.minCoeff() >= -1e-12);
        }
    }
    SUBCASE("bad discount") { CHECK_THROWS_AS(DiscountedChain(phi, 1.0), std::invalid_argument); }
}
