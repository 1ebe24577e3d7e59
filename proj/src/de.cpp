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

#include "satul/de.hpp"

#include <cmath>
#include <string>

namespace satul
{
    DeProblem DeProblem::build(const std::vector<UtStatistics> &stats, const std::vector<LowDimFactorization> &factors,
                               double sigma2)
    {
        if (stats.size() != factors.size() || stats.empty())
            throw invalid_argument("DeProblem: need matching, non-empty stats and factors");
        if (!(sigma2 > 0.0))
            throw invalid_argument("DeProblem: noise variance must be positive");
        DeProblem p;
        const auto K = Eigen::Index(stats.size());
        p.steering.resize(stats.front().g.size(), K);
        int offset = 0;
        for (Eigen::Index k = 0; k < K; ++k)
        {
            const auto &f = factors[std::size_t(k)];
            p.steering.col(k) = stats[std::size_t(k)].g;
            p.c0_bar.push_back(f.los_amp / std::sqrt(sigma2) * f.c0);
            p.omega_bar.push_back(f.omega / sigma2);
            p.block_offset.push_back(offset);
            offset += f.s1;
        }
        p.gram = GramCache::build(p.steering);
        return p;
    }

    int DeProblem::stacked_dim() const
    {
        return c0_bar.empty() ? 0 : block_offset.back() + int(c0_bar.back().size());
    }

    namespace
    {
        void check_T(const CovarianceSet &T, const DeProblem &p)
        {
            if (int(T.size()) != p.n_users())
                throw invalid_argument("deterministic equivalent: T has the wrong number of UTs");
            for (std::size_t k = 0; k < T.size(); ++k)
                if (T[k].rows() != p.c0_bar[k].size() || T[k].cols() != p.c0_bar[k].size())
                    throw invalid_argument("deterministic equivalent: T_k dimension mismatch");
        }

        // Derived quantities for a given (gamma, psi): everything a sweep, the value and the
        // gradient need.
        void assemble(const CovarianceSet &T, const DeProblem &p, DeState &st)
        {
            const int K = p.n_users();
            st.phi.resize(K);
            st.z.resize(K);
            st.D.resize(std::size_t(K));
            for (int k = 0; k < K; ++k)
            {
                const auto ku = std::size_t(k);
                const RVec &om = p.omega_bar[ku];
                st.phi(k) = om.dot(st.psi[ku]);
                const Eigen::Index s1 = om.size();
                CMat A = CMat::Identity(s1, s1) + (st.gamma(k) * om).cast<cplx>().asDiagonal() * T[ku];
                // D = T A^{-1}  <=>  A^H D^H = T  (T Hermitian)
                CMat Dk = A.adjoint().partialPivLu().solve(T[ku]).adjoint();
                st.D[ku] = hermitian_part(Dk);
                st.z(k) = std::max(p.c0_bar[ku].dot(st.D[ku] * p.c0_bar[ku]).real(), 0.0);
            }
            st.R = loaded_gram_inverse(st.phi.cwiseMax(0.0), p.gram.gamma);
            st.Y = loaded_gram_inverse(st.z, st.R);
        }

        // One Picard update from the assembled state
        void next_iterate(const DeProblem &p, const DeState &st, RVec &gamma, std::vector<RVec> &psi)
        {
            const int K = p.n_users();
            gamma = solve_loads((st.phi + st.z).cwiseMax(0.0), p.gram.gamma).b;
            psi.resize(std::size_t(K));
            for (int k = 0; k < K; ++k)
            {
                const auto ku = std::size_t(k);
                CVec v = st.D[ku] * p.c0_bar[ku];
                RVec ps = st.D[ku].diagonal().real() - st.Y(k, k).real() * v.cwiseAbs2();
                psi[ku] = ps.cwiseMax(0.0);
            }
        }

        double rel_change(double a, double b)
        {
            double scale = std::max(std::abs(a), std::abs(b));
            return scale < 1e-300 ? 0.0 : std::abs(a - b) / scale;
        }

        double max_rel_change(const RVec &g0, const std::vector<RVec> &p0, const RVec &g1, const std::vector<RVec> &p1)
        {
            double r = 0.0;
            for (Eigen::Index k = 0; k < g0.size(); ++k)
            {
                r = std::max(r, rel_change(g0(k), g1(k)));
                for (Eigen::Index i = 0; i < p0[std::size_t(k)].size(); ++i)
                    r = std::max(r, rel_change(p0[std::size_t(k)](i), p1[std::size_t(k)](i)));
            }
            return r;
        }

        bool all_finite(const RVec &g, const std::vector<RVec> &p)
        {
            if (!g.allFinite())
                return false;
            for (const auto &v : p)
                if (!v.allFinite())
                    return false;
            return true;
        }
    } // namespace

    DeState fixed_point_solve(const CovarianceSet &T, const DeProblem &problem, int n_f, double tol)
    {
        check_T(T, problem);
        if (n_f < 1)
            throw invalid_argument("fixed_point_solve: n_f must be >= 1");
        const int K = problem.n_users();

        DeState st;
        st.gamma = problem.gram.gamma.diagonal().real();
        st.psi.resize(std::size_t(K));
        for (int k = 0; k < K; ++k)
            st.psi[std::size_t(k)] = RVec::Zero(problem.omega_bar[std::size_t(k)].size());

        int growth = 0;
        for (int it = 0; it < n_f; ++it)
        {
            assemble(T, problem, st);
            RVec g1;
            std::vector<RVec> p1;
            next_iterate(problem, st, g1, p1);
            if (!all_finite(g1, p1))
                throw divergence_error("fixed_point_solve: non-finite iterate at sweep " + std::to_string(it + 1),
                                       st.residual_trace);
            double r = max_rel_change(st.gamma, st.psi, g1, p1);
            if (!st.residual_trace.empty() && r > st.residual_trace.back())
                ++growth;
            else
                growth = 0;
            st.residual_trace.push_back(r);
            st.gamma = std::move(g1);
            st.psi = std::move(p1);
            st.residual = r;
            st.iters = it + 1;
            if (growth >= 5)
                throw divergence_error("fixed_point_solve: residual grew for 5 consecutive sweeps", st.residual_trace);
            if (r < tol)
                break;
        }
        assemble(T, problem, st);
        return st;
    }

    double fixed_point_residual(const CovarianceSet &T, const DeProblem &problem, const DeState &state)
    {
        DeState st = state;
        assemble(T, problem, st);
        RVec g1;
        std::vector<RVec> p1;
        next_iterate(problem, st, g1, p1);
        return max_rel_change(state.gamma, state.psi, g1, p1);
    }

    double asymptotic_esr(const CovarianceSet &T, const DeProblem &problem, const DeState &st)
    {
        check_T(T, problem);
        const int K = problem.n_users();
        double v = 0.0;
        for (int k = 0; k < K; ++k)
        {
            const auto ku = std::size_t(k);
            // log det(I + T_k Phi_T,k) in the Hermitian form I + Phi^1/2 T Phi^1/2
            RVec s = (st.gamma(k) * problem.omega_bar[ku]).cwiseMax(0.0).cwiseSqrt();
            CMat H = s.asDiagonal() * T[ku] * s.asDiagonal();
            H.diagonal().array() += 1.0;
            v += logdet_hpd(hermitian_part(H));
            v -= st.gamma(k) * st.phi(k);
        }
        v += sum_rate_from_loads(st.z, st.R);
        v += sum_rate_from_loads(st.phi.cwiseMax(0.0), problem.gram.gamma);
        return v;
    }

    std::vector<CMat> gradient_de(const CovarianceSet &T, const DeProblem &problem, const DeState &st, double *skew)
    {
        check_T(T, problem);
        const int K = problem.n_users();
        std::vector<CMat> out(static_cast<std::size_t>(K));
        double worst = 0.0;
        for (int k = 0; k < K; ++k)
        {
            const auto ku = std::size_t(k);
            const Eigen::Index s1 = T[ku].rows();
            CMat phiT = (st.gamma(k) * problem.omega_bar[ku]).cast<cplx>().asDiagonal();
            CMat A = CMat::Identity(s1, s1) + phiT * T[ku];
            auto lu = A.partialPivLu();
            CVec v = lu.solve(problem.c0_bar[ku]);
            CMat blk = lu.solve(phiT) + st.Y(k, k).real() * (v * v.adjoint());
            double nrm = blk.norm();
            if (nrm > 0.0)
                worst = std::max(worst, (blk - blk.adjoint()).norm() / (2.0 * nrm));
            out[ku] = hermitian_part(blk);
        }
        if (skew)
            *skew = worst;
        return out;
    }

    CMat build_hbar(const DeProblem &p)
    {
        const int S = p.stacked_dim();
        CMat H = CMat::Zero(p.steering.rows(), S);
        for (int k = 0; k < p.n_users(); ++k)
        {
            const auto ku = std::size_t(k);
            H.middleCols(p.block_offset[ku], p.c0_bar[ku].size()) = p.steering.col(k) * p.c0_bar[ku].adjoint();
        }
        return H;
    }

    CMat build_hbar(const std::vector<UtStatistics> &stats, const std::vector<LowDimFactorization> &factors)
    {
        // sigma2 = 1 leaves the physical scaling in place
        return build_hbar(DeProblem::build(stats, factors, 1.0));
    }

    CMat phi_t_matrix(const DeProblem &p, const DeState &st)
    {
        const int S = p.stacked_dim();
        CMat out = CMat::Zero(S, S);
        for (int k = 0; k < p.n_users(); ++k)
        {
            const auto ku = std::size_t(k);
            out.diagonal().segment(p.block_offset[ku], p.omega_bar[ku].size()) =
                (st.gamma(k) * p.omega_bar[ku]).cast<cplx>();
        }
        return out;
    }

    CMat phi_r_matrix(const DeProblem &p, const DeState &st)
    {
        return p.steering * st.phi.cast<cplx>().asDiagonal() * p.steering.adjoint();
    }

    CMat psi_matrix(const DeProblem &p, const DeState &st)
    {
        return p.steering * (st.phi + st.z).cast<cplx>().asDiagonal() * p.steering.adjoint();
    }

    CMat xi_matrix(const DeProblem &p, const DeState &st)
    {
        const int K = p.n_users();
        const int S = p.stacked_dim();
        CMat C0 = CMat::Zero(K, S); // row k: c0_bar_k^H in block k
        for (int k = 0; k < K; ++k)
        {
            const auto ku = std::size_t(k);
            C0.row(k).segment(p.block_offset[ku], p.c0_bar[ku].size()) = p.c0_bar[ku].adjoint();
        }
        return phi_t_matrix(p, st) + C0.adjoint() * st.R * C0;
    }

    DeObjective::DeObjective(DeProblem problem, int n_f, double tol)
        : problem_(std::move(problem)), n_f_(n_f), tol_(tol) {}

    double DeObjective::value(const CovarianceSet &T) const
    {
        return asymptotic_esr(T, problem_, solve(T));
    }

    std::vector<CMat> DeObjective::gradient(const CovarianceSet &T) const
    {
        return gradient_de(T, problem_, solve(T));
    }

} // namespace satul
