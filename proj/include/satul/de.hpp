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

#ifndef SATUL_DE_HPP
#define SATUL_DE_HPP

#include "satul/common.hpp"
#include "satul/esr_mc.hpp"
#include "satul/geometry.hpp"
#include "satul/lowdim.hpp"

#include <vector>

namespace satul
{
    // Deterministic-equivalent (large-system) approximation of the pooled ergodic sum rate.
    //
    // Inputs are noise-normalized: the LoS coefficient c0_bar_k = sqrt(kappa beta/(kappa+1)) c0 / sigma
    // and the variance profile omega_bar_k = omega_k / sigma2, so the approximation targets
    // E log det(I + (1/sigma2) sum_k c_k^H T_k c_k g_k g_k^H) with T in watts.
    //
    // All M x M and S x S inverses of the textbook formulation are reduced to K x K systems through
    // the steering Gram matrix: Psi = G (Phi + Z) G^H with diagonal Phi, Z, and
    // Xi = Phi_T + C0^H R C0 with R = (I + Gamma Phi)^{-1} Gamma.
    struct DeProblem
    {
        GramCache gram;
        CMat steering;                 // M x K
        std::vector<CVec> c0_bar;      // per UT, length s1
        std::vector<RVec> omega_bar;   // per UT, length s1
        std::vector<int> block_offset; // start of block k in the stacked dimension

        static DeProblem build(const std::vector<UtStatistics> &stats, const std::vector<LowDimFactorization> &factors,
                               double sigma2);
        int n_users() const { return int(c0_bar.size()); }
        int stacked_dim() const;
    };

    struct DeState
    {
        RVec gamma;              // gamma_k
        std::vector<RVec> psi;   // psi_k
        RVec phi;                // omega_bar_k^T psi_k
        RVec z;                  // c0_bar^H D_k c0_bar
        std::vector<CMat> D;     // T_k (I + Phi_T,k T_k)^{-1}
        CMat R;                  // (I + Gamma Phi)^{-1} Gamma
        CMat Y;                  // (I + R Z)^{-1} R
        double residual = 0.0;   // max relative change of (gamma, psi) in the last sweep
        int iters = 0;
        std::vector<double> residual_trace;
    };

    inline constexpr int default_de_sweeps = 10;
    inline constexpr double default_de_tol = 1e-10;

    // Picard iteration from gamma_k = ||g_k||^2, psi_k = 0; stops after n_f sweeps or when the
    // residual drops below tol. Throws divergence_error on non-finite values or on a residual
    // that grows for 5 consecutive sweeps.
    DeState fixed_point_solve(const CovarianceSet &T, const DeProblem &problem, int n_f = default_de_sweeps,
                              double tol = default_de_tol);

    // Max relative change of (gamma, psi) produced by one more sweep from `state`
    double fixed_point_residual(const CovarianceSet &T, const DeProblem &problem, const DeState &state);

    // log det(I + Xi T) + log det(I + Phi_R) - sum_k gamma_k omega_k^T psi_k
    double asymptotic_esr(const CovarianceSet &T, const DeProblem &problem, const DeState &state);

    // Diagonal blocks of (I + Xi T)^{-1} Xi, Hermitian part. `skew` receives the largest relative
    // anti-Hermitian part seen before symmetrization.
    std::vector<CMat> gradient_de(const CovarianceSet &T, const DeProblem &problem, const DeState &state,
                                  double *skew = nullptr);

    // Dense views of the state for reporting and cross-checks
    CMat build_hbar(const DeProblem &problem);                            // M x S, noise-normalized
    CMat build_hbar(const std::vector<UtStatistics> &stats,
                    const std::vector<LowDimFactorization> &factors);     // physical units
    CMat xi_matrix(const DeProblem &problem, const DeState &state);       // S x S
    CMat phi_t_matrix(const DeProblem &problem, const DeState &state);    // S x S
    CMat phi_r_matrix(const DeProblem &problem, const DeState &state);    // M x M
    CMat psi_matrix(const DeProblem &problem, const DeState &state);      // M x M

    class DeObjective
    {
    public:
        DeObjective(DeProblem problem, int n_f = default_de_sweeps, double tol = default_de_tol);

        double value(const CovarianceSet &T) const;
        std::vector<CMat> gradient(const CovarianceSet &T) const;
        DeState solve(const CovarianceSet &T) const { return fixed_point_solve(T, problem_, n_f_, tol_); }

        const DeProblem &problem() const { return problem_; }

    private:
        DeProblem problem_;
        int n_f_;
        double tol_;
    };

} // namespace satul

#endif
