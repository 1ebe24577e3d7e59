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

#ifndef SATUL_OPTIMIZER_HPP
#define SATUL_OPTIMIZER_HPP

#include "satul/common.hpp"
#include "satul/de.hpp"
#include "satul/esr_mc.hpp"
#include "satul/geometry.hpp"
#include "satul/lowdim.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace satul
{
    enum class line_search_mode
    {
        exact_bisection,
        fw_classic, // alpha = 2 / (n + 2)
    };

    enum class step_mode
    {
        joint,  // one stepsize for all UTs, searched jointly
        per_ut, // cyclic: one UT at a time with its own stepsize
    };

    const char *to_string(line_search_mode m);
    const char *to_string(step_mode m);
    line_search_mode parse_line_search_mode(const std::string &s);
    step_mode parse_step_mode(const std::string &s);

    struct SolverOptions
    {
        int max_iters = 50;
        double eps = 1e-4; // nats
        line_search_mode line_search = line_search_mode::exact_bisection;
        int ls_max_evals = 64;
        int pool_samples = 300;
        int de_nf = default_de_sweeps;
        std::uint64_t seed = 1;
        step_mode steps = step_mode::joint;
        pool_mode pool = pool_mode::plain;
        int threads = 1;
        double tol_rank1 = 1e-3; // relative to the largest eigenvalue

        void validate() const; // throws invalid_argument
    };

    struct IterationRecord
    {
        int iteration = 0;
        double objective = 0.0;    // nats
        std::vector<double> alpha; // one entry (joint) or one per UT (per_ut)
        double wall_ms = 0.0;
    };

    struct KktEntry
    {
        double lambda_max = 0.0; // largest eigenvalue of the gradient block
        double mu = 0.0;         // trace(M_k T_k) / P_k
        double residual = 0.0;   // |lambda_max - mu| / lambda_max
    };

    struct SolveReport
    {
        std::vector<IterationRecord> history;
        CovarianceSet T;
        std::string stop_reason;
        std::vector<KktEntry> kkt;
        double objective = 0.0;
        int iterations = 0;
        int objective_evals = 0;
    };

    // Everything the optimizers need about a scenario
    struct UplinkProblem
    {
        std::vector<UtStatistics> stats;
        std::vector<LowDimFactorization> factors;
        double sigma2 = 1.0;

        std::vector<double> power() const;
        int n_users() const { return int(stats.size()); }
    };

    // Builds the fixed pool from opts (seed, pool_samples, pool mode) and the MC objective
    McObjective make_mc_objective(const UplinkProblem &problem, const SolverOptions &opts,
                                  stream_tag tag = stream_tag::channel_sample);

    // Optimizer-side fixed-point solves run until default_de_tol, at most max(de_nf, this cap)
    // sweeps. Unconverged states give gradients that need not be ascent directions at vertices.
    inline constexpr int de_optimizer_sweep_cap = 2000;
    DeObjective make_de_objective(const UplinkProblem &problem, const SolverOptions &opts);

    // Maximizer of a 1-D restriction phi on [0, 1]. For a concave phi the exact_bisection mode
    // brackets the zero of the central-difference derivative to width 1e-4 (relative to the
    // bracket end) and returns the best point evaluated; non-concave inputs are first scanned on a grid. The result is clamped to
    // [1e-12, 1]; a monotone increasing or constant phi gives 1.
    struct LineSearchResult
    {
        double alpha = 1.0;
        double value = 0.0;
        int evals = 0;
    };
    LineSearchResult line_search(const std::function<double(double)> &phi, bool concave, const SolverOptions &opts,
                                 int iteration = 0);

    // Initial point P_k / s1 I
    CovarianceSet uniform_start(const std::vector<int> &dims, const std::vector<double> &P);

    // Conditional-gradient ascent on the pooled Monte-Carlo objective
    SolveReport cg_optimize(const UplinkProblem &problem, const SolverOptions &opts);
    SolveReport cg_optimize(const McObjective &objective, const std::vector<double> &P, const SolverOptions &opts);

    // Same iteration on the deterministic equivalent (fixed point re-solved at every evaluation)
    SolveReport cg_optimize_de(const UplinkProblem &problem, const SolverOptions &opts);
    SolveReport cg_optimize_de(const DeObjective &objective, const std::vector<double> &P, const SolverOptions &opts);

    // Closed forms in T-space: rank one along the top eigenvector of Omega_k (low SNR) and along
    // c0 (strong LoS)
    CovarianceSet closed_form_low_snr(const std::vector<UtStatistics> &stats,
                                      const std::vector<LowDimFactorization> &factors);
    CovarianceSet closed_form_high_rician(const std::vector<UtStatistics> &stats,
                                          const std::vector<LowDimFactorization> &factors);

    std::vector<KktEntry> kkt_diagnostic(const CovarianceSet &T, const std::vector<CMat> &gradient,
                                         const std::vector<double> &P);
    std::vector<KktEntry> kkt_diagnostic(const CovarianceSet &T, const McObjective &objective,
                                         const std::vector<double> &P);
    std::vector<KktEntry> kkt_diagnostic(const CovarianceSet &T, const DeObjective &objective,
                                         const std::vector<double> &P);

    // Optimality test for a rank-one T_k = P_k w w^H given the other UTs' covariances. E is the
    // pooled matrix mean{G_k c c^H / (1 + G_k P_k |c^H w|^2)}; gap = lambda_max(E) - w^H E w.
    struct RankOneCheck
    {
        bool satisfied = false;
        double gap = 0.0;
        double lambda_max = 0.0;
        double tol = 0.0;
        CMat E;
    };
    RankOneCheck rank_one_condition_check(int k, const CVec &w, const CovarianceSet &T, const McObjective &objective,
                                          double P_k, double tol_rel = 1e-3);

    struct BeamformingResult
    {
        std::vector<CVec> w;
        SolveReport report;
        // per UT: || E w - (w^H E w) w || / lambda_max(E), the first-order condition of the
        // rank-one problem
        std::vector<double> stationarity;
    };

    // Cyclic ascent over rank-one covariances T_k = P_k w_k w_k^H
    BeamformingResult beamforming_optimize(const UplinkProblem &problem, const SolverOptions &opts);
    BeamformingResult beamforming_optimize(const McObjective &objective, const std::vector<double> &P,
                                           std::vector<CVec> w0, const SolverOptions &opts);

    // Feasibility of a covariance set: eigenvalues >= -1e-10 trace and trace <= P_k + 1e-9
    bool feasible(const CovarianceSet &T, const std::vector<double> &P);

} // namespace satul

#endif
