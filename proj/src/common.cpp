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

#include "satul/common.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace satul
{
    double logdet_hpd(const CMat &A)
    {
        Eigen::LLT<CMat> llt(A);
        if (llt.info() != Eigen::Success)
            throw numerical_failure("logdet_hpd: matrix is not positive definite");
        return 2.0 * llt.matrixLLT().diagonal().real().array().log().sum();
    }

    void normalize_phase(CVec &v)
    {
        for (Eigen::Index i = 0; i < v.size(); ++i)
        {
            double a = std::abs(v(i));
            if (a > 1e-12)
            {
                v *= std::conj(v(i)) / a;
                v(i) = cplx(std::abs(v(i)), 0.0);
                return;
            }
        }
    }

    TopEigen top_eigen(const CMat &A)
    {
        if (A.rows() != A.cols() || A.rows() == 0)
            throw invalid_argument("top_eigen: expected a non-empty square matrix");
        TopEigen out;
        if (A.rows() == 1)
        {
            out.value = A(0, 0).real();
            out.vector = CVec::Ones(1);
            return out;
        }
        Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(A));
        if (es.info() != Eigen::Success)
            throw numerical_failure("top_eigen: eigensolver did not converge");
        const Eigen::Index last = A.rows() - 1; // eigenvalues ascending
        out.value = es.eigenvalues()(last);
        out.vector = es.eigenvectors().col(last);
        normalize_phase(out.vector);
        return out;
    }

    int numerical_rank(const CMat &A, double rel_tol)
    {
        if (A.rows() == 0)
            return 0;
        Eigen::SelfAdjointEigenSolver<CMat> es(hermitian_part(A), Eigen::EigenvaluesOnly);
        double tr = A.trace().real();
        double thr = rel_tol * std::max(tr, 0.0);
        int r = 0;
        for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
            if (es.eigenvalues()(i) > thr)
                ++r;
        return r;
    }

    CMat hermitian_part(const CMat &A)
    {
        return 0.5 * (A + A.adjoint());
    }

    double pairwise_sum(std::span<const double> v)
    {
        if (v.size() <= 8)
        {
            double s = 0.0;
            for (double x : v)
                s += x;
            return s;
        }
        std::size_t h = v.size() / 2;
        return pairwise_sum(v.first(h)) + pairwise_sum(v.subspan(h));
    }

    void parallel_for(std::size_t n, int n_threads, const std::function<void(std::size_t)> &body)
    {
        std::size_t t = std::clamp<std::size_t>(n_threads < 1 ? 1 : std::size_t(n_threads), 1, std::max<std::size_t>(n, 1));
        if (t == 1)
        {
            for (std::size_t i = 0; i < n; ++i)
                body(i);
            return;
        }
        std::vector<std::thread> workers;
        workers.reserve(t);
        std::vector<std::exception_ptr> errors(t);
        for (std::size_t w = 0; w < t; ++w)
        {
            std::size_t lo = n * w / t, hi = n * (w + 1) / t;
            workers.emplace_back([&, lo, hi, w]
                                 {
                try
                {
                    for (std::size_t i = lo; i < hi; ++i)
                        body(i);
                }
                catch (...)
                {
                    errors[w] = std::current_exception();
                } });
        }
        for (auto &th : workers)
            th.join();
        for (auto &e : errors)
            if (e)
                std::rethrow_exception(e);
    }

} // namespace satul
