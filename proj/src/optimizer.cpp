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

#include "satul/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

namespace satul
{
    const char *to_string(line_search_mode m)
    {
        return m == line_search_mode::fw_classic ? "fw-classic" : "exact-bisection";
    }

    const char *to_string(step_mode m)
    {
        return m == step_mode::per_ut ? "per-ut" : "joint";
    }

    line_search_mode parse_line_search_mode(const std::string &s)
    {
        if (s == "exact-bisection")
            return line_search_mode::exact_bisection;
        if (s == "fw-classic")
            return line_search_mode::fw_classic;
        throw invalid_argument("unknown line search mode '" + s + "'");
    }

    step_mode parse_step_mode(const std::string &s)
    {
        if (s == "joint")
            return step_mode::joint;
        if (s == "per-ut")
            return step_mode::per_ut;
        throw invalid_argument("unknown step mode '" + s + "'");
    }

    void SolverOptions::validate() const
    {
        if (max_iters < 1)
            throw invalid_argument("max_iters must be >= 1");
        if (!(eps > 0.0))
            throw invalid_argument("eps must be > 0");
        if (ls_max_evals < 8)
            throw invalid_argument("ls_max_evals must be >= 8");
        if (pool_samples < 1)
            throw invalid_argument("pool_samples must be >= 1");
        if (de_nf < 1)
            throw invalid_argument("de_nf must be >= 1");
        if (threads < 1)
            throw invalid_argument("threads must be >= 1");
        if (!(tol_rank1 > 0.0))
            throw invalid_argument("tol_rank1 must be > 0");
    }

    std::vector<double> UplinkProblem::power() const
    {
        std::vector<double> P;
        for (const auto &s : stats)
            P.push_back(s.power_budget);
        return P;
    }

    McObjective make_mc_objective(const UplinkProblem &problem, const SolverOptions &opts, stream_tag tag)
    {
        opts.validate();
        SamplePool pool = draw_pool(problem.stats, problem.factors, opts.pool_samples, opts.seed, opts.pool, tag);
        return McObjective(std::move(pool), GramCache::build(problem.stats), problem.sigma2, opts.threads);
    }

    DeObjective make_de_objective(const UplinkProblem &problem, const SolverOptions &opts)
    {
        opts.validate();
        // the value is stationary in (gamma, psi), so stopping at tol perturbs it only at second order
        return DeObjective(DeProblem::build(problem.stats, problem.factors, problem.sigma2),
                           std::max(opts.de_nf, de_optimizer_sweep_cap), default_de_tol);
    }

    // ----- line search -------------------------------------------------------------------------

    namespace
    {
        constexpr double ls_step = 1e-6;  // finite-difference step, relative to the bracket end
        constexpr double ls_width = 1e-4; // final bracket width, relative to the bracket end
        constexpr double min_alpha = 1e-12;

        struct Probe
        {
            const std::function<double(double)> &phi;
            int evals = 0;
            double best_alpha = min_alpha;
            double best_value = -std::numeric_limits<double>::infinity();

            double operator()(double a)
            {
                double v = phi(a);
                ++evals;
                if (a > 0.0 && v > best_value)
                {
                    best_value = v;
                    best_alpha = a;
                }
                return v;
            }
            double deriv(double a, double h)
            {
                a = std::clamp(a, h, 1.0 - h);
                return ((*this)(a + h) - (*this)(a - h)) / (2.0 * h);
            }
        };

        // Shrinks [lo, hi] (derivative positive at lo, negative at hi) with safeguarded secant
        // steps. Each step also probes half a bracket width past the secant point so the bracket
        // closes from both sides. Widths scale with hi: near-singular sample terms can put the
        // maximizer very close to zero.
        void bracket_root(Probe &f, double lo, double dlo, double hi, double dhi, int max_evals)
        {
            double prev_w = std::numeric_limits<double>::infinity();
            while (hi - lo > ls_width * hi && f.evals + 4 <= max_evals)
            {
                const double w = hi - lo;
                const double h = ls_step * hi;
                double s = lo + dlo * w / (dlo - dhi);
                s = std::clamp(s, lo + 0.02 * w, hi - 0.02 * w);
                if (w > 0.5 * prev_w)
                {
                    // the last step did not halve the bracket: bisect, geometrically when it spans decades
                    s = lo == 0.0 ? hi / 16.0 : hi > 8.0 * lo ? std::sqrt(lo * hi) : 0.5 * (lo + hi);
                }
                prev_w = w;
                const double ds = f.deriv(s, h);
                if (ds > 0.0)
                {
                    lo = s;
                    dlo = ds;
                    const double t = s + 0.5 * ls_width * hi;
                    if (t < hi && f.evals + 2 <= max_evals)
                    {
                        const double dt = f.deriv(t, h);
                        if (dt > 0.0)
                            lo = t, dlo = dt;
                        else
                            hi = t, dhi = dt;
                    }
                }
                else
                {
                    hi = s;
                    dhi = ds;
                    const double t = s - 0.5 * ls_width * hi;
                    if (t > lo && f.evals + 2 <= max_evals)
                    {
                        const double dt = f.deriv(t, h);
                        if (dt > 0.0)
                            lo = t, dlo = dt;
                        else
                            hi = t, dhi = dt;
                    }
                }
            }
            if (f.evals < max_evals)
                f(0.5 * (lo + hi));
        }
    } // namespace

    LineSearchResult line_search(const std::function<double(double)> &phi, bool concave, const SolverOptions &opts,
                                 int iteration)
    {
        if (opts.line_search == line_search_mode::fw_classic)
        {
            double a = std::clamp(2.0 / (iteration + 2.0), min_alpha, 1.0);
            return {a, phi(a), 1};
        }

        Probe f{phi};
        const double p0 = f(0.0);
        const double p1 = f(1.0);

        if (!concave)
        {
            // coarse scan, then refine around the best grid point when it brackets a maximum
            int best = 10;
            double bv = p1;
            for (int j = 1; j < 10; ++j)
            {
                double v = f(0.1 * j);
                if (v > bv)
                    bv = v, best = j;
            }
            if (best < 10)
            {
                double lo = 0.1 * (best - 1), hi = 0.1 * (best + 1);
                double dlo = f.deriv(std::max(lo, ls_step), ls_step), dhi = f.deriv(hi, ls_step);
                if (dlo > 0.0 && dhi < 0.0)
                    bracket_root(f, lo, dlo, hi, dhi, opts.ls_max_evals);
            }
            if (f.best_value < p0)
                return {min_alpha, p0, f.evals};
            return {f.best_alpha, f.best_value, f.evals};
        }

        const double d1 = (p1 - f(1.0 - ls_step)) / ls_step;
        if (d1 >= 0.0)
            return {1.0, p1, f.evals};
        constexpr double h0 = 1e-9;
        const double d0 = (f(h0) - p0) / h0;
        if (d0 <= 0.0)
            return {min_alpha, p0, f.evals};

        bracket_root(f, 0.0, d0, 1.0, d1, opts.ls_max_evals);
        if (f.best_value < p0)
            return {min_alpha, p0, f.evals};
        return {f.best_alpha, f.best_value, f.evals};
    }

    // ----- shared helpers ----------------------------------------------------------------------

    CovarianceSet uniform_start(const std::vector<int> &dims, const std::vector<double> &P)
    {
        if (dims.size() != P.size())
            throw invalid_argument("uniform_start: dims/power size mismatch");
        CovarianceSet T;
        for (std::size_t k = 0; k < dims.size(); ++k)
        {
            if (P[k] < 0.0)
                throw invalid_argument("uniform_start: negative power budget");
            T.push_back(CMat::Identity(dims[k], dims[k]) * cplx(P[k] / dims[k]));
        }
        return T;
    }

    bool feasible(const CovarianceSet &T, const std::vector<double> &P)
    {
        for (std::size_t k = 0; k < T.size(); ++k)
        {
            double tr = T[k].trace().real();
            if (tr > P[k] + 1e-9)
                return false;
            Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(T[k]), Eigen::EigenvaluesOnly);
            if (T[k].rows() > 0 && es.eigenvalues()(0) < -1e-10 * std::max(tr, 0.0) - 1e-300)
                return false;
        }
        return true;
    }

    namespace
    {
        using clock_type = std::chrono::steady_clock;

        double ms_since(clock_type::time_point t0)
        {
            return std::chrono::duration<double, std::milli>(clock_type::now() - t0).count();
        }

        CMat vertex(const CMat &grad, double P)
        {
            if (P <= 0.0)
                return CMat::Zero(grad.rows(), grad.cols());
            CVec v = top_eigen(grad).vector;
            return P * (v * v.adjoint());
        }

        CovarianceSet combine(const CovarianceSet &T, const CovarianceSet &D, double a)
        {
            CovarianceSet out(T.size());
            for (std::size_t k = 0; k < T.size(); ++k)
                out[k] = hermitian_part((1.0 - a) * T[k] + a * D[k]);
            return out;
        }

        double fw_gap(const std::vector<CMat> &grad, const CovarianceSet &T, const CovarianceSet &D)
        {
            double g = 0.0;
            for (std::size_t k = 0; k < T.size(); ++k)
                g += (grad[k] * (D[k] - T[k])).trace().real();
            return g;
        }

        struct Target
        {
            std::function<double(const CovarianceSet &)> value;
            std::function<std::vector<CMat>(const CovarianceSet &)> gradient;
            std::function<std::function<double(double)>(const CovarianceSet &, const CovarianceSet &)> restrict;
        };

        [[noreturn]] void line_search_failure(int n, double R, double Rn, double gap)
        {
            std::ostringstream os;
            os.precision(17);
            os << "line search found no ascent at iteration " << n << ": objective " << R << " -> " << Rn
               << ", Frank-Wolfe gap " << gap;
            throw numerical_failure(os.str());
        }

        SolveReport run_joint(const Target &f, const std::vector<double> &P, CovarianceSet T,
                              const SolverOptions &opts)
        {
            const auto t0 = clock_type::now();
            SolveReport rep;
            double R = f.value(T);
            rep.objective_evals = 1;
            rep.history.push_back({0, R, {}, ms_since(t0)});
            for (int n = 0;; ++n)
            {
                auto grad = f.gradient(T);
                CovarianceSet D(T.size());
                for (std::size_t k = 0; k < T.size(); ++k)
                    D[k] = vertex(grad[k], P[k]);

                double alpha;
                if (opts.line_search == line_search_mode::exact_bisection)
                {
                    auto ls = line_search(f.restrict(T, D), true, opts, n);
                    rep.objective_evals += ls.evals;
                    alpha = ls.alpha;
                }
                else
                    alpha = std::clamp(2.0 / (n + 2.0), min_alpha, 1.0);

                CovarianceSet Tn = combine(T, D, alpha);
                double Rn = f.value(Tn);
                ++rep.objective_evals;
                if (opts.line_search == line_search_mode::exact_bisection && Rn < R - 1e-12)
                {
                    double gap = fw_gap(grad, T, D);
                    if (gap > 1e-8 * std::max(1.0, std::abs(R)))
                        line_search_failure(n, R, Rn, gap);
                    rep.stop_reason = "stationary";
                    break;
                }
                const double dR = Rn - R;
                T = std::move(Tn);
                R = Rn;
                rep.history.push_back({n + 1, R, {alpha}, ms_since(t0)});
                if (std::abs(dR) < opts.eps)
                {
                    rep.stop_reason = "eps";
                    break;
                }
                if (n >= opts.max_iters - 1)
                {
                    rep.stop_reason = "max_iters";
                    break;
                }
            }
            rep.T = std::move(T);
            rep.objective = R;
            rep.iterations = int(rep.history.size()) - 1;
            return rep;
        }

        // Cyclic per-UT steps through any target: the direction only moves UT k
        SolveReport run_per_ut_generic(const Target &f, const std::vector<double> &P, CovarianceSet T,
                                       const SolverOptions &opts)
        {
            const auto t0 = clock_type::now();
            SolveReport rep;
            double R = f.value(T);
            rep.objective_evals = 1;
            rep.history.push_back({0, R, {}, ms_since(t0)});
            for (int n = 0;; ++n)
            {
                const double R_start = R;
                std::vector<double> alphas(T.size(), 0.0);
                for (std::size_t k = 0; k < T.size(); ++k)
                {
                    if (P[k] <= 0.0)
                        continue;
                    auto grad = f.gradient(T);
                    CovarianceSet D = T;
                    D[k] = vertex(grad[k], P[k]);
                    double alpha;
                    if (opts.line_search == line_search_mode::exact_bisection)
                    {
                        auto ls = line_search(f.restrict(T, D), true, opts, n);
                        rep.objective_evals += ls.evals;
                        alpha = ls.alpha;
                    }
                    else
                        alpha = std::clamp(2.0 / (n + 2.0), min_alpha, 1.0);
                    CovarianceSet Tn = combine(T, D, alpha);
                    double Rn = f.value(Tn);
                    ++rep.objective_evals;
                    if (opts.line_search == line_search_mode::exact_bisection && Rn < R - 1e-12)
                        continue;
                    T = std::move(Tn);
                    R = Rn;
                    alphas[k] = alpha;
                }
                rep.history.push_back({n + 1, R, alphas, ms_since(t0)});
                if (std::abs(R - R_start) < opts.eps)
                {
                    rep.stop_reason = "eps";
                    break;
                }
                if (n >= opts.max_iters - 1)
                {
                    rep.stop_reason = "max_iters";
                    break;
                }
            }
            rep.T = std::move(T);
            rep.objective = R;
            rep.iterations = int(rep.history.size()) - 1;
            return rep;
        }

        // Cyclic per-UT steps on the pooled objective with rank-one updates of the per-sample
        // systems: a UT step costs O(n K^2) instead of n K x K factorizations per evaluation.
        SolveReport run_per_ut_mc(const McObjective &obj, const std::vector<double> &P, CovarianceSet T,
                                  const SolverOptions &opts)
        {
            const auto t0 = clock_type::now();
            SolveReport rep;
            PoolSystem sys(obj, T);
            double R = sys.value();
            rep.objective_evals = 1;
            rep.history.push_back({0, R, {}, ms_since(t0)});
            for (int n = 0;; ++n)
            {
                std::vector<double> alphas(T.size(), 0.0);
                for (std::size_t k = 0; k < T.size(); ++k)
                {
                    if (P[k] <= 0.0)
                        continue;
                    const int ki = int(k);
                    CMat Dk = vertex(sys.gradient_block(ki), P[k]);
                    RVec x0 = sys.loads().row(ki).transpose();
                    RVec x1 = sys.candidate_loads(ki, Dk);
                    auto phi = [&](double a) -> double
                    { return sys.delta_value(ki, ((1.0 - a) * x0 + a * x1).cwiseMax(0.0)); };
                    double alpha, gain;
                    if (opts.line_search == line_search_mode::exact_bisection)
                    {
                        auto ls = line_search(phi, true, opts, n);
                        rep.objective_evals += ls.evals;
                        alpha = ls.alpha;
                        gain = ls.value;
                        if (gain < -1e-12)
                            continue;
                    }
                    else
                        alpha = std::clamp(2.0 / (n + 2.0), min_alpha, 1.0);
                    (void)gain;
                    sys.update(ki, ((1.0 - alpha) * x0 + alpha * x1).cwiseMax(0.0));
                    T[k] = hermitian_part((1.0 - alpha) * T[k] + alpha * Dk);
                    alphas[k] = alpha;
                }
                sys.refresh();
                const double Rn = sys.value();
                const double dR = Rn - R;
                R = Rn;
                rep.history.push_back({n + 1, R, alphas, ms_since(t0)});
                if (std::abs(dR) < opts.eps)
                {
                    rep.stop_reason = "eps";
                    break;
                }
                if (n >= opts.max_iters - 1)
                {
                    rep.stop_reason = "max_iters";
                    break;
                }
            }
            rep.T = std::move(T);
            rep.objective = R;
            rep.iterations = int(rep.history.size()) - 1;
            return rep;
        }

        Target mc_target(const McObjective &obj)
        {
            Target t;
            t.value = [&obj](const CovarianceSet &T)
            { return obj.value(T); };
            t.gradient = [&obj](const CovarianceSet &T)
            { return obj.gradient(T); };
            t.restrict = [&obj](const CovarianceSet &T, const CovarianceSet &D)
            {
                auto line = std::make_shared<McObjective::Line>(obj.restrict(T, D));
                return std::function<double(double)>([line](double a)
                                                     { return (*line)(a); });
            };
            return t;
        }

        Target de_target(const DeObjective &obj)
        {
            Target t;
            t.value = [&obj](const CovarianceSet &T)
            { return obj.value(T); };
            t.gradient = [&obj](const CovarianceSet &T)
            { return obj.gradient(T); };
            t.restrict = [&obj](const CovarianceSet &T, const CovarianceSet &D)
            {
                return std::function<double(double)>([&obj, T, D](double a)
                                                     { return obj.value(combine(T, D, a)); });
            };
            return t;
        }

        void check_power(const std::vector<double> &P, std::size_t K)
        {
            if (P.size() != K)
                throw invalid_argument("optimizer: power vector does not match the UT count");
            for (double p : P)
                if (!(p >= 0.0) || !std::isfinite(p))
                    throw invalid_argument("optimizer: power budgets must be finite and >= 0");
        }
    } // namespace

    SolveReport cg_optimize(const McObjective &objective, const std::vector<double> &P, const SolverOptions &opts)
    {
        opts.validate();
        check_power(P, std::size_t(objective.pool().n_users()));
        std::vector<int> dims;
        for (const auto &C : objective.pool().samples)
            dims.push_back(int(C.rows()));
        CovarianceSet T0 = uniform_start(dims, P);
        SolveReport rep = opts.steps == step_mode::per_ut ? run_per_ut_mc(objective, P, std::move(T0), opts)
                                                          : run_joint(mc_target(objective), P, std::move(T0), opts);
        rep.kkt = kkt_diagnostic(rep.T, objective, P);
        return rep;
    }

    SolveReport cg_optimize(const UplinkProblem &problem, const SolverOptions &opts)
    {
        McObjective obj = make_mc_objective(problem, opts);
        return cg_optimize(obj, problem.power(), opts);
    }

    SolveReport cg_optimize_de(const DeObjective &objective, const std::vector<double> &P, const SolverOptions &opts)
    {
        opts.validate();
        check_power(P, std::size_t(objective.problem().n_users()));
        std::vector<int> dims;
        for (const auto &c : objective.problem().c0_bar)
            dims.push_back(int(c.size()));
        CovarianceSet T0 = uniform_start(dims, P);
        Target t = de_target(objective);
        SolveReport rep = opts.steps == step_mode::per_ut ? run_per_ut_generic(t, P, std::move(T0), opts)
                                                          : run_joint(t, P, std::move(T0), opts);
        rep.kkt = kkt_diagnostic(rep.T, objective, P);
        return rep;
    }

    SolveReport cg_optimize_de(const UplinkProblem &problem, const SolverOptions &opts)
    {
        DeObjective obj = make_de_objective(problem, opts);
        return cg_optimize_de(obj, problem.power(), opts);
    }

    // ----- closed forms ------------------------------------------------------------------------

    CovarianceSet closed_form_low_snr(const std::vector<UtStatistics> &stats,
                                      const std::vector<LowDimFactorization> &factors)
    {
        if (stats.size() != factors.size())
            throw invalid_argument("closed_form_low_snr: stats/factors size mismatch");
        CovarianceSet T;
        for (std::size_t k = 0; k < stats.size(); ++k)
            T.push_back(vertex(factors[k].Omega, stats[k].power_budget));
        return T;
    }

    CovarianceSet closed_form_high_rician(const std::vector<UtStatistics> &stats,
                                          const std::vector<LowDimFactorization> &factors)
    {
        if (stats.size() != factors.size())
            throw invalid_argument("closed_form_high_rician: stats/factors size mismatch");
        CovarianceSet T;
        for (std::size_t k = 0; k < stats.size(); ++k)
        {
            const CVec &c0 = factors[k].c0;
            double nrm2 = c0.squaredNorm();
            if (nrm2 <= 0.0)
                throw invalid_argument("closed_form_high_rician: UT has no LoS component");
            T.push_back(hermitian_part(stats[k].power_budget / nrm2 * (c0 * c0.adjoint())));
        }
        return T;
    }

    // ----- diagnostics -------------------------------------------------------------------------

    std::vector<KktEntry> kkt_diagnostic(const CovarianceSet &T, const std::vector<CMat> &gradient,
                                         const std::vector<double> &P)
    {
        if (T.size() != gradient.size() || T.size() != P.size())
            throw invalid_argument("kkt_diagnostic: size mismatch");
        std::vector<KktEntry> out(T.size());
        for (std::size_t k = 0; k < T.size(); ++k)
        {
            if (P[k] <= 0.0)
                continue;
            KktEntry &e = out[k];
            e.lambda_max = top_eigen(gradient[k]).value;
            e.mu = (gradient[k] * T[k]).trace().real() / P[k];
            e.residual = e.lambda_max > 0.0 ? std::abs(e.lambda_max - e.mu) / e.lambda_max : 0.0;
        }
        return out;
    }

    std::vector<KktEntry> kkt_diagnostic(const CovarianceSet &T, const McObjective &objective,
                                         const std::vector<double> &P)
    {
        return kkt_diagnostic(T, objective.gradient(T), P);
    }

    std::vector<KktEntry> kkt_diagnostic(const CovarianceSet &T, const DeObjective &objective,
                                         const std::vector<double> &P)
    {
        return kkt_diagnostic(T, objective.gradient(T), P);
    }

    RankOneCheck rank_one_condition_check(int k, const CVec &w, const CovarianceSet &T, const McObjective &objective,
                                          double P_k, double tol_rel)
    {
        if (k < 0 || k >= int(T.size()))
            throw invalid_argument("rank_one_condition_check: UT index out of range");
        if (std::abs(w.norm() - 1.0) > 1e-10)
            throw invalid_argument("rank_one_condition_check: w must have unit norm");
        CovarianceSet Tw = T;
        Tw[std::size_t(k)] = P_k * (w * w.adjoint());
        PoolSystem sys(objective, Tw);
        RankOneCheck rc;
        rc.E = sys.gradient_block(k);
        rc.lambda_max = top_eigen(rc.E).value;
        rc.gap = rc.lambda_max - w.dot(rc.E * w).real();
        rc.tol = tol_rel * rc.lambda_max;
        rc.satisfied = rc.gap <= rc.tol;
        return rc;
    }

    // ----- beamforming -------------------------------------------------------------------------

    namespace
    {
        double eigen_residual(const CMat &E, const CVec &w)
        {
            double lmax = top_eigen(E).value;
            if (lmax <= 0.0)
                return 0.0;
            CVec Ew = E * w;
            cplx q = w.dot(Ew);
            return (Ew - q * w).norm() / lmax;
        }
    } // namespace

    BeamformingResult beamforming_optimize(const McObjective &objective, const std::vector<double> &P,
                                           std::vector<CVec> w, const SolverOptions &opts)
    {
        opts.validate();
        const std::size_t K = std::size_t(objective.pool().n_users());
        check_power(P, K);
        if (w.size() != K)
            throw invalid_argument("beamforming_optimize: need one initial vector per UT");
        CovarianceSet T(K);
        for (std::size_t k = 0; k < K; ++k)
        {
            if (w[k].size() != objective.pool().samples[k].rows() || w[k].norm() == 0.0)
                throw invalid_argument("beamforming_optimize: bad initial vector");
            w[k].normalize();
            T[k] = P[k] * (w[k] * w[k].adjoint());
        }

        const auto t0 = clock_type::now();
        BeamformingResult res;
        SolveReport &rep = res.report;
        PoolSystem sys(objective, T);
        double R = sys.value();
        rep.objective_evals = 1;
        rep.history.push_back({0, R, {}, ms_since(t0)});
        // per-UT geodesic step, doubled after an accepted step and halved on rejection
        std::vector<double> theta(K, pi / 4);
        bool accepted_any = true;
        for (int n = 0;; ++n)
        {
            const double R_start = R;
            accepted_any = false;
            std::vector<double> blend(K, 0.0);
            for (std::size_t k = 0; k < K; ++k)
            {
                if (P[k] <= 0.0)
                    continue;
                const int ki = int(k);
                const CMat Mk = sys.gradient_block(ki);
                auto try_vector = [&](const CVec &cand, double &best_delta, CVec &best, RVec &best_x)
                {
                    RVec xn = sys.candidate_loads(ki, P[k] * (cand * cand.adjoint()));
                    ++rep.objective_evals;
                    const double d = sys.delta_value(ki, xn);
                    if (d > best_delta)
                    {
                        best_delta = d;
                        best = cand;
                        best_x = std::move(xn);
                    }
                    return d;
                };
                double best_delta = 0.0;
                CVec best;
                RVec best_x;
                // jump to the dominant direction of the gradient block
                try_vector(top_eigen(Mk).vector, best_delta, best, best_x);
                // Riemannian gradient step along the great circle through w and the tangent direction
                CVec g = Mk * w[k];
                g -= w[k] * w[k].dot(g);
                const double gn = g.norm();
                double taken = 0.0;
                if (gn > 0.0)
                {
                    g /= gn;
                    for (int h = 0; h <= 30; ++h, theta[k] *= 0.5)
                    {
                        CVec cand = (std::cos(theta[k]) * w[k] + std::sin(theta[k]) * g).normalized();
                        if (try_vector(cand, best_delta, best, best_x) > 0.0)
                        {
                            taken = theta[k];
                            theta[k] = std::min(2.0 * theta[k], pi / 2);
                            break;
                        }
                    }
                    theta[k] = std::max(theta[k], 1e-12);
                }
                if (best_delta > 0.0)
                {
                    sys.update(ki, best_x);
                    w[k] = best;
                    T[k] = P[k] * (best * best.adjoint());
                    blend[k] = taken;
                    accepted_any = true;
                }
            }
            sys.refresh();
            R = sys.value();
            rep.history.push_back({n + 1, R, blend, ms_since(t0)});
            if (std::abs(R - R_start) < opts.eps)
            {
                rep.stop_reason = "eps";
                break;
            }
            if (n >= opts.max_iters - 1)
            {
                rep.stop_reason = "max_iters";
                break;
            }
        }

        res.stationarity.assign(K, 0.0);
        double worst = 0.0;
        for (std::size_t k = 0; k < K; ++k)
        {
            if (P[k] <= 0.0)
                continue;
            res.stationarity[k] = eigen_residual(sys.gradient_block(int(k)), w[k]);
            worst = std::max(worst, res.stationarity[k]);
        }
        if (!accepted_any && worst > opts.tol_rank1)
        {
            std::ostringstream os;
            os << "beamforming: no improving update while stationarity residual is " << worst;
            throw numerical_failure(os.str());
        }
        res.w = w;
        rep.T = std::move(T);
        rep.objective = R;
        rep.iterations = int(rep.history.size()) - 1;
        rep.kkt = kkt_diagnostic(rep.T, objective, P);
        return res;
    }

    BeamformingResult beamforming_optimize(const UplinkProblem &problem, const SolverOptions &opts)
    {
        McObjective obj = make_mc_objective(problem, opts);
        std::vector<CVec> w0;
        for (const auto &f : problem.factors)
            w0.push_back(top_eigen(f.Omega).vector);
        return beamforming_optimize(obj, problem.power(), std::move(w0), opts);
    }

} // namespace satul
