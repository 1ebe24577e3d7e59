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

#ifndef SATUL_COMMON_HPP
#define SATUL_COMMON_HPP

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace satul
{
    using cplx = std::complex<double>;
    using CVec = Eigen::VectorXcd;
    using CMat = Eigen::MatrixXcd;
    using RVec = Eigen::VectorXd;
    using RMat = Eigen::MatrixXd;

    inline constexpr double pi = 3.14159265358979323846;
    inline constexpr double speed_of_light = 299792458.0; // m/s
    inline constexpr double boltzmann = 1.38e-23;         // J/K, value used by the link budget

    // ----- Errors --------------------------------------------------------------------------------
    // Every failure raised by the library derives from satul::error so callers can map categories
    // onto exit codes without string matching.

    class error : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    class invalid_argument : public error
    {
    public:
        using error::error;
    };

    // UT below the horizon, or similar impossible geometry
    class geometry_infeasible : public error
    {
    public:
        using error::error;
    };

    class construction_error : public error
    {
    public:
        using error::error;
    };

    class degenerate_statistics : public error
    {
    public:
        using error::error;
    };

    class psd_violation : public error
    {
    public:
        using error::error;
    };

    class numerical_failure : public error
    {
    public:
        using error::error;
    };

    class divergence_error : public numerical_failure
    {
    public:
        divergence_error(const std::string &what, std::vector<double> trace)
            : numerical_failure(what), residual_trace(std::move(trace)) {}
        std::vector<double> residual_trace; // fixed-point residual per sweep
    };

    class config_error : public error
    {
    public:
        using error::error;
    };

    // ----- Small dense helpers -------------------------------------------------------------------

    // log det of a Hermitian positive definite matrix via Cholesky
    double logdet_hpd(const CMat &A);

    // Largest eigenvalue and its unit eigenvector of a Hermitian matrix. The vector is phase
    // normalized: its first component with magnitude above 1e-12 is made real positive.
    struct TopEigen
    {
        double value = 0.0;
        CVec vector;
    };
    TopEigen top_eigen(const CMat &A);

    // Multiply v by the unit phase that makes its first non-negligible entry real positive.
    void normalize_phase(CVec &v);

    // Number of eigenvalues of Hermitian A above rel_tol * trace(A) (absolute 0 when trace is 0).
    int numerical_rank(const CMat &A, double rel_tol);

    // Hermitian part (A + A^H) / 2
    CMat hermitian_part(const CMat &A);

    // Pairwise (tree) summation; result depends only on the order of the input.
    double pairwise_sum(std::span<const double> v);

    // Run body(i) for i in [0, n) split over up to n_threads contiguous chunks. Each index is
    // visited exactly once; callers must write results to per-index slots so output does not
    // depend on the thread count.
    void parallel_for(std::size_t n, int n_threads, const std::function<void(std::size_t)> &body);

    inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
    inline double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

} // namespace satul

#endif
