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

#ifndef SATUL_ESR_MC_HPP
#define SATUL_ESR_MC_HPP

#include "satul/common.hpp"
#include "satul/geometry.hpp"
#include "satul/lowdim.hpp"
#include "satul/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace satul
{
    // Per-UT low-dimensional transmit matrices T_k
    using CovarianceSet = std::vector<CMat>;

    // How the scattered parts of a pool are laid out.
    //   plain          independent draws
    //   antithetic     second half repeats the first with the scattered part negated
    //   moment_matched antithetic, then each UT's scatter draws are whitened and recolored so the
    //                  pool mean and second moment equal their population values exactly
    //   sign_orbit     every base draw is repeated under all sign flips of the individual
    //                  scatter coordinates of all UTs (2^(sum of scatter ranks) copies)
    enum class pool_mode
    {
        plain,
        antithetic,
        moment_matched,
        sign_orbit,
    };

    const char *to_string(pool_mode m);
    pool_mode parse_pool_mode(const std::string &s); // throws invalid_argument

    // Fixed pool of channel coefficient draws (common random numbers).
    //
    // Base draws come from per-(seed, tag, UT id, base index) substreams, so a UT's columns do
    // not depend on the other UTs, the evaluation order, or the thread count.
    struct SamplePool
    {
        int n_samples = 0;
        std::uint64_t seed = 0;
        stream_tag tag = stream_tag::channel_sample;
        pool_mode mode = pool_mode::plain;
        std::vector<CMat> samples; // per UT: s1 x n_samples

        int n_users() const { return int(samples.size()); }
    };

    SamplePool draw_pool(const std::vector<UtStatistics> &stats, const std::vector<LowDimFactorization> &factors,
                         int n_samples, std::uint64_t seed, pool_mode mode = pool_mode::plain,
                         stream_tag tag = stream_tag::channel_sample);

    // Number of copies a sign_orbit pool makes of every base draw
    std::uint64_t sign_orbit_size(const std::vector<LowDimFactorization> &factors);

    // Samples mapped to the N-dimensional antenna space: d = B c
    SamplePool lift_pool(const SamplePool &pool, const std::vector<LowDimFactorization> &factors);

    // Gram matrix of the satellite steering vectors, Gamma_ik = g_i^H g_k
    struct GramCache
    {
        CMat gamma;
        static GramCache build(const std::vector<UtStatistics> &stats);
        static GramCache build(const CMat &steering); // M x K, one column per UT
        int size() const { return int(gamma.rows()); }
    };

    // Per-sample solution of the K x K reduced system for loads x_k >= 0:
    //   logdet = log det(I_K + X^{1/2} Gamma X^{1/2}) = log det(I_M + sum_k x_k g_k g_k^H)
    //   b_k    = [(I + Gamma X)^{-1} Gamma]_kk = g_k^H (I_M + sum_i x_i g_i g_i^H)^{-1} g_k
    struct LoadSolve
    {
        double logdet = 0.0;
        RVec b;
    };
    LoadSolve solve_loads(const RVec &x, const CMat &gamma, bool want_b = true);

    // Full K x K matrix (I + Gamma X)^{-1} Gamma (Hermitian)
    CMat loaded_gram_inverse(const RVec &x, const CMat &gamma);

    // log det(I_K + X^{1/2} Gamma X^{1/2}) for loads x = c_k^H T_k c_k / sigma2
    double sum_rate_from_loads(const RVec &x, const CMat &gamma);

    // Single-realization sum rate in nats; c[k] is UT k's coefficient vector
    double sum_rate_sample(const CovarianceSet &T, const std::vector<CVec> &c, const GramCache &gram, double sigma2);

    // Pooled ergodic sum rate (sample mean, nats)
    double esr(const CovarianceSet &T, const SamplePool &pool, const GramCache &gram, double sigma2, int threads = 1);

    // G_k = (1/sigma2) g_k^H A_k^{-1} g_k, A_k = I + (1/sigma2) sum_{i != k} c_i^H T_i c_i g_i g_i^H
    double effective_gain(int k, const CovarianceSet &T, const std::vector<CVec> &c, const GramCache &gram,
                          double sigma2);

    // Gradient blocks M_k = mean{ G_k / (1 + G_k c^H T_k c) c c^H }
    std::vector<CMat> gradient_mc(const CovarianceSet &T, const SamplePool &pool, const GramCache &gram,
                                  double sigma2, int threads = 1);

    // Loads matrix (K x n): x(k, s) = c_{k,s}^H T_k c_{k,s} / sigma2. Throws psd_violation on
    // loads below -1e-12; small negative roundoff is clamped to zero.
    RMat pool_loads(const CovarianceSet &T, const SamplePool &pool, double sigma2);

    // Collected evaluation of the pooled objective and its gradient
    class McObjective
    {
    public:
        McObjective(SamplePool pool, GramCache gram, double sigma2, int threads = 1);

        double value(const CovarianceSet &T) const;
        std::vector<CMat> gradient(const CovarianceSet &T) const;

        // phi(alpha) = esr(T + alpha (D - T)) evaluated from precomputed per-sample loads
        class Line
        {
        public:
            double operator()(double alpha) const;

        private:
            friend class McObjective;
            const McObjective *owner_ = nullptr;
            RMat x0_, x1_;
        };
        Line restrict(const CovarianceSet &T, const CovarianceSet &D) const;

        // Per-sample leave-one-out gains G_k (K x n)
        RMat effective_gains(const CovarianceSet &T) const;

        double value_from_loads(const RMat &x) const;

        const SamplePool &pool() const { return pool_; }
        const GramCache &gram() const { return gram_; }
        double sigma2() const { return sigma2_; }
        int threads() const { return threads_; }

    private:
        SamplePool pool_;
        GramCache gram_;
        double sigma2_;
        int threads_;
    };

    // Per-sample state for moves that change one UT at a time.
    //
    // Keeps B_s = (I + Gamma X_s)^{-1} Gamma for every pool sample. Changing UT k's loads by delta
    // changes the log-determinant by log(1 + delta_s B_s(k, k)) and B by the rank-one correction
    // B - delta B(:, k) B(k, :) / (1 + delta B(k, k)).
    class PoolSystem
    {
    public:
        PoolSystem(const McObjective &objective, const CovarianceSet &T);

        // Exact re-evaluation from the loads, discarding accumulated updates
        void refresh();

        double value() const { return value_; }
        const RMat &loads() const { return x_; }

        // Loads UT k would have under T_k (length n)
        RVec candidate_loads(int k, const CMat &Tk) const;

        // Change of the pooled objective if UT k's loads become x_new
        double delta_value(int k, const RVec &x_new) const;

        // Gradient block M_k at the current point
        CMat gradient_block(int k) const;

        void update(int k, const RVec &x_new);

    private:
        const McObjective *obj_;
        RMat x_;
        std::vector<CMat> B_;
        double value_ = 0.0;
    };

} // namespace satul

#endif
