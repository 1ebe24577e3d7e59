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

#ifndef SATUL_LOWDIM_HPP
#define SATUL_LOWDIM_HPP

#include "satul/common.hpp"
#include "satul/geometry.hpp"
#include "satul/rng.hpp"

namespace satul
{
    // Lossless reparameterization d = B c of a UT's Rician channel.
    //
    // B holds the normalized LoS residual u0 = (I - U U^H) d0 / sqrt(eta0) (when present) followed
    // by the scatter eigenvectors U. The random coefficient vector is
    //     c = los_amp * c0 + scatter_amp * c_tilde,
    // where c_tilde has independent CN entries with variances `lambda_full` (zero in the residual
    // slot). omega = scatter_amp^2 * lambda_full, Omega = E{c c^H}.
    struct LowDimFactorization
    {
        CMat B;
        int s1 = 0;
        CVec c0;
        double eta0 = 0.0;
        CVec xi0;
        bool has_residual = false;
        RVec lambda_full; // length s1
        RVec omega;       // length s1
        CMat Omega;       // s1 x s1
        double los_amp = 0.0;
        double scatter_amp = 0.0;
        int scatter_rank = 0; // S_k

        // Identity basis over an N-dimensional space: used to run the same machinery directly
        // on N x N covariances. Only B and s1 are meaningful.
        static LowDimFactorization identity(int n);
    };

    inline constexpr double default_residual_tol = 1e-10;

    // Throws degenerate_statistics when Omega is numerically singular.
    LowDimFactorization factorize(const UtStatistics &stats, double residual_tol = default_residual_tol);

    // Q = B T B^H
    CMat lift(const LowDimFactorization &factor, const CMat &T);

    struct RankCheck
    {
        bool pass = false;
        int rank_q = 0;
        int rank_rut = 0;
    };
    RankCheck rank_bound_check(const CMat &Q, const UtStatistics &stats, double eig_tol = 1e-8);

    struct ChannelDraw
    {
        CVec d; // length N
        CVec c; // length s1
    };

    // One channel realization. With `mirror` the scattered part enters with flipped sign, which
    // produces the antithetic partner of the same draw.
    ChannelDraw sample_channel(const UtStatistics &stats, const LowDimFactorization &factor, rng_stream &rng,
                               bool mirror = false);

    // Low-dimensional coefficient vector only (no lift to N)
    CVec sample_coefficients(const LowDimFactorization &factor, rng_stream &rng, bool mirror = false);

} // namespace satul

#endif
