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

#include "satul/esr_mc.hpp"

#include <cmath>

namespace satul
{
    const char *to_string(pool_mode m)
    {
        switch (m)
        {
        case pool_mode::plain:
            return "plain";
        case pool_mode::antithetic:
            return "antithetic";
        case pool_mode::moment_matched:
            return "moment_matched";
        case pool_mode::sign_orbit:
            return "sign_orbit";
        }
        return "plain";
    }

    pool_mode parse_pool_mode(const std::string &s)
    {
        for (auto m : {pool_mode::plain, pool_mode::antithetic, pool_mode::moment_matched, pool_mode::sign_orbit})
            if (s == to_string(m))
                return m;
        throw invalid_argument("unknown pool mode '" + s + "'");
    }

    namespace
    {
        // Scatter slots that carry randomness
        std::vector<int> active_slots(const LowDimFactorization &f)
        {
            std::vector<int> out;
            for (int i = 0; i < f.s1; ++i)
                if (f.lambda_full(i) > 0.0)
                    out.push_back(i);
            return out;
        }

        // Standard CN(0, 1) draws for the active slots of one base sample
        CVec base_draw(const UtStatistics &stats, const std::vector<int> &slots, std::uint64_t seed, stream_tag tag,
                       int base)
        {
            rng_stream rng(seed, {std::uint64_t(tag), stats.id, std::uint64_t(base)});
            CVec z(Eigen::Index(slots.size()));
            for (Eigen::Index j = 0; j < z.size(); ++j)
                z(j) = rng.complex_normal(1.0);
            return z;
        }

        // Coefficient columns from standard draws Z (active slots x n)
        CMat assemble_columns(const LowDimFactorization &f, const std::vector<int> &slots, const CMat &Z)
        {
            CMat C = (f.los_amp * f.c0).replicate(1, Z.cols());
            for (std::size_t j = 0; j < slots.size(); ++j)
            {
                const int i = slots[j];
                C.row(i) += (f.scatter_amp * std::sqrt(f.lambda_full(i))) * Z.row(Eigen::Index(j));
            }
            return C;
        }
    } // namespace

    std::uint64_t sign_orbit_size(const std::vector<LowDimFactorization> &factors)
    {
        std::size_t bits = 0;
        for (const auto &f : factors)
            bits += active_slots(f).size();
        if (bits > 20)
            throw invalid_argument("sign_orbit pool: more than 20 random scatter coordinates in total");
        return std::uint64_t(1) << bits;
    }

    SamplePool draw_pool(const std::vector<UtStatistics> &stats, const std::vector<LowDimFactorization> &factors,
                         int n_samples, std::uint64_t seed, pool_mode mode, stream_tag tag)
    {
        if (stats.size() != factors.size())
            throw invalid_argument("draw_pool: stats/factors size mismatch");
        if (n_samples < 1)
            throw invalid_argument("draw_pool: need at least one sample");
        const bool halves = mode == pool_mode::antithetic || mode == pool_mode::moment_matched;
        if (halves && n_samples % 2 != 0)
            throw invalid_argument("draw_pool: antithetic pools need an even sample count");
        std::uint64_t orbit = 1;
        if (mode == pool_mode::sign_orbit)
        {
            orbit = sign_orbit_size(factors);
            if (std::uint64_t(n_samples) % orbit != 0)
                throw invalid_argument("draw_pool: sign_orbit pool size must be a multiple of " +
                                       std::to_string(orbit));
        }

        SamplePool pool;
        pool.n_samples = n_samples;
        pool.seed = seed;
        pool.tag = tag;
        pool.mode = mode;
        pool.samples.resize(stats.size());
        int bit_offset = 0;
        for (std::size_t k = 0; k < stats.size(); ++k)
        {
            const auto &f = factors[k];
            const auto slots = active_slots(f);
            const auto r = Eigen::Index(slots.size());
            CMat Z(r, n_samples);
            switch (mode)
            {
            case pool_mode::plain:
                for (int s = 0; s < n_samples; ++s)
                    Z.col(s) = base_draw(stats[k], slots, seed, tag, s);
                break;
            case pool_mode::antithetic:
            case pool_mode::moment_matched:
            {
                const int half = n_samples / 2;
                for (int s = 0; s < half; ++s)
                    Z.col(s) = base_draw(stats[k], slots, seed, tag, s);
                if (mode == pool_mode::moment_matched && r > 0)
                {
                    if (half < r)
                        throw invalid_argument("draw_pool: moment matching needs at least 2 x scatter rank samples");
                    CMat S = hermitian_part(Z.leftCols(half) * Z.leftCols(half).adjoint() / double(half));
                    Eigen::SelfAdjointEigenSolver<CMat> es(S);
                    if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0)
                        throw numerical_failure("draw_pool: singular sample covariance in moment matching");
                    CMat W = es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().cast<cplx>().asDiagonal() *
                             es.eigenvectors().adjoint();
                    Z.leftCols(half) = (W * Z.leftCols(half)).eval();
                }
                Z.rightCols(half) = -Z.leftCols(half);
                break;
            }
            case pool_mode::sign_orbit:
                for (int s = 0; s < n_samples; ++s)
                {
                    const std::uint64_t pattern = std::uint64_t(s) % orbit;
                    CVec z = base_draw(stats[k], slots, seed, tag, int(std::uint64_t(s) / orbit));
                    for (Eigen::Index j = 0; j < r; ++j)
                        if ((pattern >> (bit_offset + int(j))) & 1u)
                            z(j) = -z(j);
                    Z.col(s) = z;
                }
                break;
            }
            bit_offset += int(r);
            pool.samples[k] = assemble_columns(f, slots, Z);
        }
        return pool;
    }

    SamplePool lift_pool(const SamplePool &pool, const std::vector<LowDimFactorization> &factors)
    {
        SamplePool out = pool;
        for (std::size_t k = 0; k < pool.samples.size(); ++k)
            out.samples[k] = factors[k].B * pool.samples[k];
        return out;
    }

    GramCache GramCache::build(const CMat &steering)
    {
        GramCache gc;
        gc.gamma = steering.adjoint() * steering;
        gc.gamma = hermitian_part(gc.gamma);
        return gc;
    }

    GramCache GramCache::build(const std::vector<UtStatistics> &stats)
    {
        if (stats.empty())
            return {};
        CMat G(stats.front().g.size(), Eigen::Index(stats.size()));
        for (std::size_t k = 0; k < stats.size(); ++k)
            G.col(Eigen::Index(k)) = stats[k].g;
        return build(G);
    }

    namespace
    {
        // Cholesky of I + D Gamma D with D = diag(sqrt(x))
        Eigen::LLT<CMat> loaded_cholesky(const RVec &sx, const CMat &gamma)
        {
            CMat C = sx.asDiagonal() * gamma * sx.asDiagonal();
            C.diagonal().array() += 1.0;
            Eigen::LLT<CMat> llt(C);
            if (llt.info() != Eigen::Success)
                throw numerical_failure("solve_loads: I + X^1/2 Gamma X^1/2 is not positive definite");
            return llt;
        }

        RVec checked_sqrt(const RVec &x)
        {
            RVec sx(x.size());
            for (Eigen::Index i = 0; i < x.size(); ++i)
            {
                if (x(i) < -1e-12)
                    throw psd_violation("negative load c^H T c below -1e-12");
                sx(i) = std::sqrt(std::max(x(i), 0.0));
            }
            return sx;
        }
    } // namespace

    LoadSolve solve_loads(const RVec &x, const CMat &gamma, bool want_b)
    {
        RVec sx = checked_sqrt(x);
        auto llt = loaded_cholesky(sx, gamma);
        LoadSolve out;
        out.logdet = 2.0 * llt.matrixLLT().diagonal().real().array().log().sum();
        if (want_b)
        {
            CMat Y = sx.asDiagonal() * gamma;
            llt.matrixL().solveInPlace(Y);
            out.b = gamma.diagonal().real() - Y.colwise().squaredNorm().transpose();
        }
        return out;
    }

    CMat loaded_gram_inverse(const RVec &x, const CMat &gamma)
    {
        RVec sx = checked_sqrt(x);
        auto llt = loaded_cholesky(sx, gamma);
        CMat Y = sx.asDiagonal() * gamma;
        llt.matrixL().solveInPlace(Y);
        return hermitian_part(gamma - Y.adjoint() * Y);
    }

    double sum_rate_from_loads(const RVec &x, const CMat &gamma)
    {
        return solve_loads(x, gamma, false).logdet;
    }

    namespace
    {
        RVec sample_loads(const CovarianceSet &T, const std::vector<CVec> &c, double sigma2)
        {
            RVec x(Eigen::Index(T.size()));
            for (std::size_t k = 0; k < T.size(); ++k)
                x(Eigen::Index(k)) = (c[k].adjoint() * T[k] * c[k])(0, 0).real() / sigma2;
            return x;
        }

        void check_sizes(const CovarianceSet &T, const SamplePool &pool, const GramCache &gram)
        {
            if (T.size() != pool.samples.size() || int(T.size()) != gram.size())
                throw invalid_argument("pooled objective: UT count mismatch between T, pool and Gram matrix");
            for (std::size_t k = 0; k < T.size(); ++k)
                if (T[k].rows() != pool.samples[k].rows() || T[k].cols() != pool.samples[k].rows())
                    throw invalid_argument("pooled objective: T_k dimension does not match the pool");
        }
    } // namespace

    double sum_rate_sample(const CovarianceSet &T, const std::vector<CVec> &c, const GramCache &gram, double sigma2)
    {
        return sum_rate_from_loads(sample_loads(T, c, sigma2), gram.gamma);
    }

    double effective_gain(int k, const CovarianceSet &T, const std::vector<CVec> &c, const GramCache &gram,
                          double sigma2)
    {
        RVec x = sample_loads(T, c, sigma2);
        x(k) = 0.0;
        return solve_loads(x, gram.gamma).b(k) / sigma2;
    }

    RMat pool_loads(const CovarianceSet &T, const SamplePool &pool, double sigma2)
    {
        const int K = pool.n_users(), n = pool.n_samples;
        RMat x(K, n);
        for (int k = 0; k < K; ++k)
        {
            CMat TC = T[k] * pool.samples[k];
            for (int s = 0; s < n; ++s)
            {
                double v = pool.samples[k].col(s).dot(TC.col(s)).real() / sigma2;
                if (v < -1e-12)
                    throw psd_violation("pool_loads: negative load, T_k is not PSD");
                x(k, s) = std::max(v, 0.0);
            }
        }
        return x;
    }

    McObjective::McObjective(SamplePool pool, GramCache gram, double sigma2, int threads)
        : pool_(std::move(pool)), gram_(std::move(gram)), sigma2_(sigma2), threads_(threads)
    {
        if (pool_.n_samples < 1)
            throw invalid_argument("McObjective: empty pool");
        if (pool_.n_users() != gram_.size())
            throw invalid_argument("McObjective: pool and Gram matrix disagree on the UT count");
        if (!(sigma2_ > 0.0))
            throw invalid_argument("McObjective: noise variance must be positive");
    }

    double McObjective::value_from_loads(const RMat &x) const
    {
        std::vector<double> per(std::size_t(x.cols()));
        parallel_for(per.size(), threads_, [&](std::size_t s)
                     { per[s] = sum_rate_from_loads(x.col(Eigen::Index(s)), gram_.gamma); });
        return pairwise_sum(per) / double(per.size());
    }

    double McObjective::value(const CovarianceSet &T) const
    {
        check_sizes(T, pool_, gram_);
        return value_from_loads(pool_loads(T, pool_, sigma2_));
    }

    std::vector<CMat> McObjective::gradient(const CovarianceSet &T) const
    {
        check_sizes(T, pool_, gram_);
        const int K = pool_.n_users(), n = pool_.n_samples;
        RMat x = pool_loads(T, pool_, sigma2_);
        // G_k / (1 + G_k c^H T_k c) = b_k / sigma2, with b_k from the full (not leave-one-out) system
        RMat w(K, n);
        parallel_for(std::size_t(n), threads_, [&](std::size_t s)
                     { w.col(Eigen::Index(s)) = solve_loads(x.col(Eigen::Index(s)), gram_.gamma).b / sigma2_; });

        std::vector<CMat> grad(static_cast<std::size_t>(K));
        for (int k = 0; k < K; ++k)
        {
            const CMat &C = pool_.samples[k];
            CMat weighted = C * w.row(k).transpose().cast<cplx>().asDiagonal();
            grad[std::size_t(k)] = hermitian_part(weighted * C.adjoint()) / double(n);
        }
        return grad;
    }

    RMat McObjective::effective_gains(const CovarianceSet &T) const
    {
        check_sizes(T, pool_, gram_);
        const int K = pool_.n_users(), n = pool_.n_samples;
        RMat x = pool_loads(T, pool_, sigma2_);
        RMat G(K, n);
        parallel_for(std::size_t(n), threads_, [&](std::size_t s)
                     {
            RVec xs = x.col(Eigen::Index(s));
            RVec b = solve_loads(xs, gram_.gamma).b;
            for (int k = 0; k < K; ++k)
            {
                // leave-one-out: a = b / (1 - x b); 1 - x b = 1 / (1 + x a) stays well away from 0
                double denom = 1.0 - xs(k) * b(k);
                double a;
                if (denom > 1e-8)
                    a = b(k) / denom;
                else
                {
                    RVec xl = xs;
                    xl(k) = 0.0;
                    a = solve_loads(xl, gram_.gamma).b(k);
                }
                G(k, Eigen::Index(s)) = a / sigma2_;
            } });
        return G;
    }

    McObjective::Line McObjective::restrict(const CovarianceSet &T, const CovarianceSet &D) const
    {
        Line line;
        line.owner_ = this;
        line.x0_ = pool_loads(T, pool_, sigma2_);
        line.x1_ = pool_loads(D, pool_, sigma2_);
        return line;
    }

    double McObjective::Line::operator()(double alpha) const
    {
        RMat x = (1.0 - alpha) * x0_ + alpha * x1_;
        x = x.cwiseMax(0.0);
        return owner_->value_from_loads(x);
    }

    PoolSystem::PoolSystem(const McObjective &objective, const CovarianceSet &T) : obj_(&objective)
    {
        x_ = pool_loads(T, objective.pool(), objective.sigma2());
        refresh();
    }

    void PoolSystem::refresh()
    {
        const auto n = std::size_t(x_.cols());
        B_.resize(n);
        std::vector<double> per(n);
        parallel_for(n, obj_->threads(), [&](std::size_t s)
                     {
            RVec xs = x_.col(Eigen::Index(s));
            per[s] = sum_rate_from_loads(xs, obj_->gram().gamma);
            B_[s] = loaded_gram_inverse(xs, obj_->gram().gamma); });
        value_ = pairwise_sum(per) / double(n);
    }

    RVec PoolSystem::candidate_loads(int k, const CMat &Tk) const
    {
        const CMat &C = obj_->pool().samples[std::size_t(k)];
        CMat TC = Tk * C;
        RVec x(C.cols());
        for (Eigen::Index s = 0; s < C.cols(); ++s)
        {
            double v = C.col(s).dot(TC.col(s)).real() / obj_->sigma2();
            if (v < -1e-12)
                throw psd_violation("candidate_loads: negative load, T_k is not PSD");
            x(s) = std::max(v, 0.0);
        }
        return x;
    }

    double PoolSystem::delta_value(int k, const RVec &x_new) const
    {
        const auto n = std::size_t(x_.cols());
        std::vector<double> per(n);
        for (std::size_t s = 0; s < n; ++s)
        {
            const auto si = Eigen::Index(s);
            double t = 1.0 + (x_new(si) - x_(k, si)) * B_[s](k, k).real();
            if (!(t > 0.0))
                throw numerical_failure("PoolSystem: rank-one update lost positive definiteness");
            per[s] = std::log(t);
        }
        return pairwise_sum(per) / double(n);
    }

    CMat PoolSystem::gradient_block(int k) const
    {
        const CMat &C = obj_->pool().samples[std::size_t(k)];
        RVec w(C.cols());
        for (Eigen::Index s = 0; s < C.cols(); ++s)
            w(s) = B_[std::size_t(s)](k, k).real() / obj_->sigma2();
        return hermitian_part(C * w.cast<cplx>().asDiagonal() * C.adjoint()) / double(C.cols());
    }

    void PoolSystem::update(int k, const RVec &x_new)
    {
        value_ += delta_value(k, x_new);
        const auto n = std::size_t(x_.cols());
        parallel_for(n, obj_->threads(), [&](std::size_t s)
                     {
            const auto si = Eigen::Index(s);
            const double delta = x_new(si) - x_(k, si);
            if (delta == 0.0)
                return;
            CMat &B = B_[s];
            const double t = 1.0 + delta * B(k, k).real();
            CVec col = B.col(k);
            B.noalias() -= (delta / t) * (col * col.adjoint());
            B = hermitian_part(B); });
        x_.row(k) = x_new.transpose();
    }

    double esr(const CovarianceSet &T, const SamplePool &pool, const GramCache &gram, double sigma2, int threads)
    {
        return McObjective(pool, gram, sigma2, threads).value(T);
    }

    std::vector<CMat> gradient_mc(const CovarianceSet &T, const SamplePool &pool, const GramCache &gram,
                                  double sigma2, int threads)
    {
        return McObjective(pool, gram, sigma2, threads).gradient(T);
    }

} // namespace satul
