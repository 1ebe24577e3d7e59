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

#include "satul/lowdim.hpp"

using namespace satul;
using namespace satul::test;

namespace
{
    UtStatistics make_stats(int S, double kappa, double beta, std::uint64_t seed, bool keep_eigen = true)
    {
        ArrayGeometry g{6, 6, 0.5, 0.5};
        AnglePair phi{0.8, 0.6};
        rng_stream rng(seed, {2});
        UtStatistics s;
        s.g = sat_steering(ArrayGeometry{4, 4, 1.0, 1.0}, AnglePair{0.2, 0.3});
        s.d0 = ut_steering(g, phi);
        auto sc = build_sigma(g, phi, S, rng);
        s.sigma = sc.sigma;
        if (keep_eigen)
            s.sigma_eigen = sc.eigen;
        s.kappa = kappa;
        s.beta = beta;
        s.power_budget = 1.0;
        return s;
    }
} // namespace

TEST_CASE("factorization reproduces the UT correlation exactly")
{
    for (int S : {1, 3})
        for (double kappa : {0.1, 10.0})
        {
            UtStatistics s = make_stats(S, kappa, 2.5, 10 + S);
            LowDimFactorization f = factorize(s);
            CHECK((f.B.adjoint() * f.B - CMat::Identity(f.s1, f.s1)).norm() < 1e-12);
            CHECK(rel_err(CMat(f.B * f.Omega * f.B.adjoint()), s.ut_correlation()) < 1e-12);
            CHECK(std::abs(f.c0.norm() - 1.0) < 1e-12);
            CHECK(f.Omega.trace().real() == doctest::Approx(2.5).epsilon(1e-12));
            // coefficient-space LoS maps back onto d0
            CHECK((f.B * f.c0 - s.d0).norm() < 1e-12);
        }
}

TEST_CASE("shifted scatter directions are orthogonal to the LoS direction")
{
    UtStatistics s = make_stats(2, 10.0, 1.0, 3);
    LowDimFactorization f = factorize(s);
    CHECK(f.xi0.norm() < 1e-12);
    CHECK(f.eta0 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(f.has_residual);
    CHECK(f.s1 == 3);
    CHECK((f.B.col(0) - s.d0).norm() < 1e-12);
    // Omega is then diagonal
    CMat off = f.Omega;
    off.diagonal().setZero();
    CHECK(off.norm() < 1e-12 * f.Omega.norm());
}

TEST_CASE("LoS inside the scatter span drops the residual column")
{
    UtStatistics s = make_stats(3, 2.0, 1.0, 4);
    s.d0 = s.sigma_eigen->vectors.col(1);
    LowDimFactorization f = factorize(s);
    CHECK_FALSE(f.has_residual);
    CHECK(f.s1 == 3);
    CHECK(f.eta0 < 1e-20);
    CHECK(rel_err(CMat(f.B * f.Omega * f.B.adjoint()), s.ut_correlation()) < 1e-12);

    UtStatistics r = make_stats(2, 0.0, 1.0, 5);
    LowDimFactorization fr = factorize(r);
    CHECK_FALSE(fr.has_residual);
    CHECK(fr.s1 == 2);
}

TEST_CASE("eigensolver fallback matches the constructed eigenpairs")
{
    UtStatistics with = make_stats(3, 1.0, 1.0, 6);
    UtStatistics without = make_stats(3, 1.0, 1.0, 6, false);
    LowDimFactorization a = factorize(with), b = factorize(without);
    REQUIRE(a.s1 == b.s1);
    CHECK(rel_err(RVec(b.omega), RVec(a.omega)) < 1e-12);
    CHECK(rel_err(CMat(b.B * b.Omega * b.B.adjoint()), CMat(a.B * a.Omega * a.B.adjoint())) < 1e-12);
    // projectors onto the coefficient spaces agree
    CHECK(rel_err(CMat(b.B * b.B.adjoint()), CMat(a.B * a.B.adjoint())) < 1e-10);
}

TEST_CASE("singular coefficient covariance is reported")
{
    UtStatistics s = make_stats(2, 1.0, 1.0, 7);
    ScatterEigen e = *s.sigma_eigen;
    e.values << 1.0, 0.0;
    s.sigma_eigen = e;
    s.sigma = e.vectors.col(0) * e.vectors.col(0).adjoint();
    CHECK_THROWS_AS(factorize(s), degenerate_statistics);
}

TEST_CASE("lift and the rank bound")
{
    UtStatistics s = make_stats(2, 3.0, 1.0, 8);
    LowDimFactorization f = factorize(s);
    rng_stream rng(1, {1});
    CMat T = random_psd(f.s1, f.s1, 1.0, rng);
    CMat Q = lift(f, T);
    CHECK(Q.trace().real() == doctest::Approx(1.0).epsilon(1e-12));
    RankCheck rc = rank_bound_check(Q, s);
    CHECK(rc.pass);
    CHECK(rc.rank_q == 3);
    CHECK(rc.rank_rut == 3);
    CHECK_FALSE(rank_bound_check(CMat::Identity(36, 36) / 36.0, s).pass);
    CHECK_THROWS_AS(lift(f, CMat::Identity(2, 2)), invalid_argument);

    LowDimFactorization id = LowDimFactorization::identity(3);
    CHECK(lift(id, T).isApprox(T, 1e-15));
}

TEST_CASE("channel draws: exact lift, moments and the Rician limit")
{
    UtStatistics s = make_stats(2, 2.0, 3.0, 9);
    LowDimFactorization f = factorize(s);
    rng_stream rng(2, {4});

    ChannelDraw one = sample_channel(s, f, rng);
    CHECK((one.d - f.B * one.c).norm() == 0.0);

    const int n = 100000;
    CVec mean = CVec::Zero(36);
    double p = 0.0, p2 = 0.0;
    for (int i = 0; i < n; ++i)
    {
        ChannelDraw dr = sample_channel(s, f, rng);
        mean += dr.d;
        double e = dr.d.squaredNorm();
        p += e;
        p2 += e * e;
    }
    mean /= double(n);
    p /= n;
    const double var = p2 / n - p * p;
    CHECK(std::abs(p - 3.0) < 3.0 * std::sqrt(var / n));
    // steering entries have magnitude 1/6, so each entry's scatter variance is beta/(kappa+1)/36
    const double se = std::sqrt(1.0 / (36.0 * n));
    CHECK((mean - s.los_amplitude() * s.d0).cwiseAbs().maxCoeff() < 4.0 * se);

    // scattered part shrinks like kappa^(-1/2)
    UtStatistics los = make_stats(2, 1e8, 3.0, 9);
    LowDimFactorization fl = factorize(los);
    ChannelDraw dl = sample_channel(los, fl, rng);
    CHECK((dl.d - std::sqrt(3.0) * los.d0).norm() < 1e-3 * std::sqrt(3.0));
}

TEST_CASE("mirrored draws negate only the scattered part")
{
    UtStatistics s = make_stats(3, 1.0, 1.0, 12);
    LowDimFactorization f = factorize(s);
    rng_stream a(4, {1}), b(4, {1});
    CVec c = sample_coefficients(f, a);
    CVec m = sample_coefficients(f, b, true);
    CHECK((c + m - 2.0 * f.los_amp * f.c0).norm() < 1e-14);
}
