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

#include "satul/lowdim.hpp"

#include <algorithm>
#include <numeric>

namespace satul
{
    namespace
    {
        // Scatter eigenpairs: constructed ones when present, otherwise a Hermitian eigensolve
        // keeping eigenvalues above 1e-12 (sigma has unit trace). Non-increasing order, equal
        // eigenvalues in original index order.
        ScatterEigen scatter_eigen(const UtStatistics &stats)
        {
            if (stats.sigma_eigen)
                return *stats.sigma_eigen;

            Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(stats.sigma));
            if (es.info() != Eigen::Success)
                throw numerical_failure("factorize: eigensolver failed on sigma");
            const RVec &ev = es.eigenvalues();
            std::vector<int> keep;
            for (int i = 0; i < int(ev.size()); ++i)
                if (ev(i) > 1e-12)
                    keep.push_back(i);
            std::stable_sort(keep.begin(), keep.end(), [&](int a, int b)
                             { return ev(a) > ev(b); });
            ScatterEigen out;
            out.vectors.resize(stats.sigma.rows(), Eigen::Index(keep.size()));
            out.values.resize(Eigen::Index(keep.size()));
            for (std::size_t j = 0; j < keep.size(); ++j)
            {
                CVec v = es.eigenvectors().col(keep[j]);
                normalize_phase(v);
                out.vectors.col(Eigen::Index(j)) = v;
                out.values(Eigen::Index(j)) = ev(keep[j]);
            }
            return out;
        }
    } // namespace

    LowDimFactorization LowDimFactorization::identity(int n)
    {
        LowDimFactorization f;
        f.B = CMat::Identity(n, n);
        f.s1 = n;
        f.c0 = CVec::Zero(n);
        f.lambda_full = RVec::Zero(n);
        f.omega = RVec::Zero(n);
        f.Omega = CMat::Zero(n, n);
        return f;
    }

    LowDimFactorization factorize(const UtStatistics &stats, double residual_tol)
    {
        stats.validate();
        ScatterEigen se = scatter_eigen(stats);
        const CMat &U = se.vectors;
        const int S = int(U.cols());
        const Eigen::Index n = stats.d0.size();

        LowDimFactorization f;
        f.scatter_rank = S;
        f.los_amp = stats.los_amplitude();
        f.scatter_amp = stats.scatter_amplitude();
        f.xi0 = U.adjoint() * stats.d0;
        CVec resid = stats.d0 - U * f.xi0;
        f.eta0 = resid.squaredNorm();

        // without a LoS component the residual direction carries no channel energy
        f.has_residual = stats.kappa > 0.0 && f.eta0 > residual_tol * stats.d0.squaredNorm();
        if (f.has_residual)
        {
            CVec u0 = resid / std::sqrt(f.eta0);
            u0 -= U * (U.adjoint() * u0); // second Gram-Schmidt pass
            u0.normalize();
            f.s1 = S + 1;
            f.B.resize(n, f.s1);
            f.B.col(0) = u0;
            f.B.rightCols(S) = U;
            f.c0.resize(f.s1);
            f.c0(0) = std::sqrt(f.eta0);
            f.c0.tail(S) = f.xi0;
            f.lambda_full = RVec::Zero(f.s1);
            f.lambda_full.tail(S) = se.values;
        }
        else
        {
            f.s1 = S;
            f.B = U;
            f.c0 = f.xi0;
            f.lambda_full = se.values;
        }

        f.omega = f.scatter_amp * f.scatter_amp * f.lambda_full;
        f.Omega = f.los_amp * f.los_amp * (f.c0 * f.c0.adjoint());
        f.Omega.diagonal() += f.omega.cast<cplx>();
        f.Omega = hermitian_part(f.Omega);

        Eigen::SelfAdjointEigenSolver<CMat> es(f.Omega, Eigen::EigenvaluesOnly);
        double tr = f.Omega.trace().real();
        if (f.s1 == 0 || es.eigenvalues()(0) < 1e-12 * tr)
            throw degenerate_statistics("factorize: Omega is numerically singular");
        return f;
    }

    CMat lift(const LowDimFactorization &factor, const CMat &T)
    {
        if (T.rows() != factor.s1 || T.cols() != factor.s1)
            throw invalid_argument("lift: T must be s1 x s1");
        return factor.B * T * factor.B.adjoint();
    }

    RankCheck rank_bound_check(const CMat &Q, const UtStatistics &stats, double eig_tol)
    {
        RankCheck rc;
        rc.rank_q = numerical_rank(Q, eig_tol);
        rc.rank_rut = numerical_rank(stats.ut_correlation(), eig_tol);
        rc.pass = rc.rank_q <= rc.rank_rut;
        return rc;
    }

    CVec sample_coefficients(const LowDimFactorization &factor, rng_stream &rng, bool mirror)
    {
        CVec c = factor.los_amp * factor.c0;
        const double sign = mirror ? -1.0 : 1.0;
        for (int i = 0; i < factor.s1; ++i)
        {
            // zero-variance slots consume no draws so the scatter draws line up across branches
            if (factor.lambda_full(i) > 0.0)
                c(i) += sign * factor.scatter_amp * rng.complex_normal(factor.lambda_full(i));
        }
        return c;
    }

    ChannelDraw sample_channel(const UtStatistics &, const LowDimFactorization &factor, rng_stream &rng, bool mirror)
    {
        ChannelDraw out;
        out.c = sample_coefficients(factor, rng, mirror);
        out.d = factor.B * out.c;
        return out;
    }

} // namespace satul
