// SPDX-License-Identifier: Apache-2.0
//
// satul - uplink transmit covariance design for massive MIMO LEO satellites
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------


#include <doctest.h>

#include "test_util.hpp"

#include "satul/de.hpp"

#include <cmath>

using namespace satul;
using namespace satul::test;

namespace
{
    // Textbook dense form of the deterministic equivalent: S x S and M x M matrices, plain
    // inverses, Jacobi sweeps from gamma = ||g||^2, psi = 0.
    struct DenseDe
    {
        RVec gamma;
        std::vector<RVec> psi;
        CMat Xi, PhiR;
        double value = 0.0;
        std::vector<CMat> grad;
    };

    DenseDe dense_de(const UplinkProblem &pb, const CovarianceSet &T, int sweeps)
    {
        const int K = pb.n_users();
        const Eigen::Index M = pb.stats[0].g.size();
        std::vector<int> off;
        int S = 0;
        for (const auto &f : pb.factors)
        {
            off.push_back(S);
            S += f.s1;
        }
        const double sigma = std::sqrt(pb.sigma2);
        CMat Hbar = CMat::Zero(M, S), Tbig = CMat::Zero(S, S);
        std::vector<RVec> om;
        for (int k = 0; k < K; ++k)
        {
            const auto &st = pb.stats[std::size_t(k)];
            const auto &f = pb.factors[std::size_t(k)];
            Hbar.middleCols(off[std::size_t(k)], f.s1) = st.los_amplitude() / sigma * st.g * f.c0.adjoint();
            Tbig.block(off[std::size_t(k)], off[std::size_t(k)], f.s1, f.s1) = T[std::size_t(k)];
            om.push_back(f.omega / pb.sigma2);
        }

        DenseDe out;
        out.gamma.resize(K);
        for (int k = 0; k < K; ++k)
        {
            out.gamma(k) = pb.stats[std::size_t(k)].g.squaredNorm();
            out.psi.push_back(RVec::Zero(om[std::size_t(k)].size()));
        }
        auto mats = [&](CMat &PhiT, CMat &PhiR)
        {
            PhiT = CMat::Zero(S, S);
            PhiR = CMat::Zero(M, M);
            for (int k = 0; k < K; ++k)
            {
                const auto ku = std::size_t(k);
                for (Eigen::Index i = 0; i < om[ku].size(); ++i)
                    PhiT(off[ku] + i, off[ku] + i) = out.gamma(k) * om[ku](i);
                PhiR += om[ku].dot(out.psi[ku]) * pb.stats[ku].g * pb.stats[ku].g.adjoint();
            }
        };
        const CMat IS = CMat::Identity(S, S), IM = CMat::Identity(M, M);
        CMat PhiT, PhiR, Xi, Psi;
        for (int it = 0; it < sweeps; ++it)
        {
            mats(PhiT, PhiR);
            Xi = PhiT + Hbar.adjoint() * (IM + PhiR).inverse() * Hbar;
            Psi = PhiR + Hbar * Tbig * (IS + PhiT * Tbig).inverse() * Hbar.adjoint();
            CMat Ipsi = (IM + Psi).inverse();
            CMat F = Tbig * (IS + Xi * Tbig).inverse();
            RVec g1(K);
            std::vector<RVec> p1;
            for (int k = 0; k < K; ++k)
            {
                const auto ku = std::size_t(k);
                g1(k) = (pb.stats[ku].g.adjoint() * Ipsi * pb.stats[ku].g)(0, 0).real();
                p1.push_back(F.diagonal().segment(off[ku], om[ku].size()).real());
            }
            out.gamma = g1;
            out.psi = p1;
        }
        mats(PhiT, PhiR);
        Xi = PhiT + Hbar.adjoint() * (IM + PhiR).inverse() * Hbar;
        out.Xi = Xi;
        out.PhiR = PhiR;
        Eigen::SelfAdjointEigenSolver<CMat> e1(hermitian_part(IM + PhiR), Eigen::EigenvaluesOnly);
        std::complex<double> ld = (IS + Xi * Tbig).determinant();
        out.value = std::log(std::abs(ld)) + e1.eigenvalues().array().log().sum();
        for (int k = 0; k < K; ++k)
            out.value -= out.gamma(k) * om[std::size_t(k)].dot(out.psi[std::size_t(k)]);
        CMat G = (IS + Xi * Tbig).inverse() * Xi;
        for (int k = 0; k < K; ++k)
        {
            const int s1 = pb.factors[std::size_t(k)].s1;
            out.grad.push_back(hermitian_part(G.block(off[std::size_t(k)], off[std::size_t(k)], s1, s1)));
        }
        return out;
    }

    UplinkProblem small_problem(int K, double kappa_db, int S, std::uint64_t seed, int sat_side = 6)
    {
        return build_scenario(small_config(K, sat_side, 2, 30.0, kappa_db, S, seed)).problem;
    }
} // namespace

TEST_CASE("reduced fixed point reproduces the dense textbook iteration")
{
    for (double kappa_db : {-5.0, 10.0})
    {
        UplinkProblem pb = small_problem(5, kappa_db, 2, 31);
        DeProblem dp = DeProblem::build(pb.stats, pb.factors, pb.sigma2);
        rng_stream rng(31, {1});
        CovarianceSet T = random_covariances(pb, rng);

        // identical map: compare after a few sweeps without early stopping
        DeState st = fixed_point_solve(T, dp, 3, 0.0);
        DenseDe ref = dense_de(pb, T, 3);
        CHECK(st.iters == 3);
        CHECK(rel_err(CMat(st.gamma.cast<cplx>()), CMat(ref.gamma.cast<cplx>())) < 1e-10);
        for (int k = 0; k < 5; ++k)
            CHECK(rel_err(CMat(st.psi[std::size_t(k)].cast<cplx>()), CMat(ref.psi[std::size_t(k)].cast<cplx>())) <
                  1e-10);
        CHECK(rel_err(asymptotic_esr(T, dp, st), ref.value) < 1e-10);
        CHECK(rel_err(xi_matrix(dp, st), ref.Xi) < 1e-10);
        CHECK(rel_err(phi_r_matrix(dp, st), ref.PhiR) < 1e-10);
        auto g = gradient_de(T, dp, st);
        for (int k = 0; k < 5; ++k)
            CHECK(rel_err(g[std::size_t(k)], ref.grad[std::size_t(k)]) < 1e-9);
    }
}

TEST_CASE("noise-normalized problem data")
{
    UplinkProblem pb = small_problem(3, 5.0, 1, 32);
    DeProblem dp = DeProblem::build(pb.stats, pb.factors, pb.sigma2);
    CHECK(dp.n_users() == 3);
    CHECK(dp.stacked_dim() == 6);
    for (int k = 0; k < 3; ++k)
    {
        const auto &st = pb.stats[std::size_t(k)];
        const auto &f = pb.factors[std::size_t(k)];
        CHECK((dp.c0_bar[std::size_t(k)] - st.los_amplitude() / std::sqrt(pb.sigma2) * f.c0).norm() <
              1e-12 * dp.c0_bar[std::size_t(k)].norm());
        CHECK((dp.omega_bar[std::size_t(k)] - f.omega / pb.sigma2).norm() < 1e-12 * dp.omega_bar[std::size_t(k)].norm());
    }
    CMat H = build_hbar(pb.stats, pb.factors);
    CHECK(rel_err(CMat(build_hbar(dp) * std::sqrt(pb.sigma2)), H) < 1e-12);
}

TEST_CASE("zero power: one sweep, zero rate, gradient equals Xi")
{
    UplinkProblem pb = small_problem(4, 3.0, 2, 33);
    DeProblem dp = DeProblem::build(pb.stats, pb.factors, pb.sigma2);
    CovarianceSet T;
    for (const auto &f : pb.factors)
        T.push_back(CMat::Zero(f.s1, f.s1));
    DeState st = fixed_point_solve(T, dp, 10, 1e-12);
    CHECK(st.iters == 1);
    CHECK(st.residual == 0.0);
    for (int k = 0; k < 4; ++k)
    {
        CHECK(st.gamma(k) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(st.psi[std::size_t(k)].norm() == 0.0);
    }
    CHECK(asymptotic_esr(T, dp, st) == 0.0);
    auto g = gradient_de(T, dp, st);
    for (int k = 0; k < 4; ++k)
    {
        const auto ku = std::size_t(k);
        CMat Xi_k = dp.omega_bar[ku].cast<cplx>().asDiagonal();
        Xi_k += dp.c0_bar[ku] * dp.c0_bar[ku].adjoint(); // ||g|| = 1 and Phi_R = 0
        CHECK(rel_err(g[ku], Xi_k) < 1e-12);
    }
}

TEST_CASE("deterministic single link recovers the Shannon rate")
{
    ScenarioConfig cfg = small_config(1, 4, 1, 30.0, 120.0, 1, 34);
    cfg.ut = {1, 1, 0.5, 0.5};
    UplinkProblem pb = build_scenario(cfg).problem;
    pb.sigma2 = 1.0;
    pb.stats[0].beta = 3.0;
    pb.factors[0] = factorize(pb.stats[0]);
    DeProblem dp = DeProblem::build(pb.stats, pb.factors, pb.sigma2);
    const double P = 2.0;
    CovarianceSet T{CMat::Constant(1, 1, P)};
    DeState st = fixed_point_solve(T, dp, 200, 1e-14);
    CHECK(asymptotic_esr(T, dp, st) == doctest::Approx(std::log1p(P * 3.0)).epsilon(1e-9));

    // scalar calculus: d/dT [log(1 + Xi T) + log(1 + Phi_R) - gamma omega psi] = Xi / (1 + Xi T)
    CMat Xi = xi_matrix(dp, st);
    auto g = gradient_de(T, dp, st);
    CHECK(g[0](0, 0).real() == doctest::Approx(Xi(0, 0).real() / (1.0 + Xi(0, 0).real() * P)).epsilon(1e-12));
}

TEST_CASE("converged fixed point is self-consistent and its gradient is exact")
{
    UplinkProblem pb = small_problem(8, 0.0, 2, 35, 8);
    DeProblem dp = DeProblem::build(pb.stats, pb.factors, pb.sigma2);
    rng_stream rng(35, {1});
    CovarianceSet T = random_covariances(pb, rng);
    DeState st = fixed_point_solve(T, dp, 200, 1e-12);
    CHECK(st.residual < 1e-12);
    CHECK(fixed_point_residual(T, dp, st) < 1e-8);
    for (std::size_t i = 1; i < st.residual_trace.size(); ++i)
        CHECK(st.residual_trace[i] <= st.residual_trace[i - 1] * 1.5);

    double skew = 1.0;
    auto g = gradient_de(T, dp, st, &skew);
    CHECK(skew < 1e-8);
    DeObjective obj(dp, 2000, 1e-13);
    for (int k = 0; k < 8; ++k)
    {
        const auto ku = std::size_t(k);
        Eigen::SelfAdjointEigenSolver<CMat> es(g[ku], Eigen::EigenvaluesOnly);
        CHECK(es.eigenvalues()(0) >= -1e-10 * es.eigenvalues().cwiseAbs().maxCoeff());
        for (int dir = 0; dir < 3; ++dir)
        {
            CMat D = random_hermitian(pb.factors[ku].s1, rng);
            const double h = 1e-5 * pb.stats[ku].power_budget;
            CovarianceSet Tp = T, Tm = T;
            Tp[ku] += h * D;
            Tm[ku] -= h * D;
            double fd = (obj.value(Tp) - obj.value(Tm)) / (2.0 * h);
            double an = (g[ku] * D).trace().real();
            CHECK(std::abs(fd - an) <= 1e-4 * std::max(std::abs(an), 1e-3 * g[ku].norm()));
        }
    }
}

TEST_CASE("deterministic equivalent tracks the pooled rate at M = 144")
{
    ScenarioConfig cfg = small_config(16, 12, 2, 30.0, 10.0, 1, 36);
    UplinkProblem pb = build_scenario(cfg).problem;
    std::vector<int> dims;
    for (const auto &f : pb.factors)
        dims.push_back(f.s1);
    CovarianceSet T;
    for (int k = 0; k < 16; ++k)
        T.push_back(CMat::Identity(dims[std::size_t(k)], dims[std::size_t(k)]) *
                    cplx(pb.stats[std::size_t(k)].power_budget / dims[std::size_t(k)]));
    DeProblem dp = DeProblem::build(pb.stats, pb.factors, pb.sigma2);
    DeState st = fixed_point_solve(T, dp, 200, 1e-10);
    double de = asymptotic_esr(T, dp, st);
    double mc = esr(T, draw_pool(pb.stats, pb.factors, 3000, 1), GramCache::build(pb.stats), pb.sigma2);
    CHECK(std::abs(de - mc) / mc <= 0.05);
}

TEST_CASE("fixed-point failures")
{
    UplinkProblem pb = small_problem(3, 3.0, 1, 37);
    DeProblem dp = DeProblem::build(pb.stats, pb.factors, pb.sigma2);
    rng_stream rng(37, {1});
    CovarianceSet T = random_covariances(pb, rng);
    CHECK_THROWS_AS(fixed_point_solve(T, dp, 0), invalid_argument);
    CovarianceSet bad = T;
    bad[1](0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(fixed_point_solve(bad, dp, 10), divergence_error);
    CovarianceSet wrong = T;
    wrong.pop_back();
    CHECK_THROWS_AS(fixed_point_solve(wrong, dp, 10), invalid_argument);
}
