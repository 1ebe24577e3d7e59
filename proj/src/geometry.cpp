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

#include "satul/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace satul
{
    void ArrayGeometry::validate() const
    {
        if (n_x < 1 || n_y < 1)
            throw invalid_argument("ArrayGeometry: element counts must be >= 1");
        if (!(spacing_x > 0.0) || !(spacing_y > 0.0))
            throw invalid_argument("ArrayGeometry: spacings must be strictly positive");
    }

    AnglePair SpaceAngles::to_angles() const
    {
        double r = std::min(radius(), 1.0);
        double az = std::atan2(zeta_y, zeta_x);
        if (az < 0.0)
            az += 2.0 * pi;
        return {az, std::asin(r)};
    }

    void LinkBudgetParams::validate() const
    {
        if (!(earth_radius_km > 0) || !(orbit_altitude_km > 0) || !(carrier_freq_hz > 0) ||
            !(bandwidth_hz > 0) || !(noise_temperature_k > 0))
            throw invalid_argument("LinkBudgetParams: radius, altitude, frequency, bandwidth and noise temperature must be positive");
        if (!(extra_loss_db >= 0.0))
            throw invalid_argument("LinkBudgetParams: extra_loss_db must be >= 0");
    }

    void UtStatistics::validate() const
    {
        const Eigen::Index n = d0.size();
        if (g.size() == 0 || n == 0)
            throw construction_error("UtStatistics: empty steering or LoS vector");
        if (sigma.rows() != n || sigma.cols() != n)
            throw construction_error("UtStatistics: sigma must be N x N");
        if (std::abs(d0.norm() - 1.0) > 1e-10)
            throw construction_error("UtStatistics: ||d0|| != 1");
        if (std::abs(sigma.trace().real() - 1.0) > 1e-10)
            throw construction_error("UtStatistics: trace(sigma) != 1 (got " + std::to_string(sigma.trace().real()) + ")");
        if ((sigma - sigma.adjoint()).cwiseAbs().maxCoeff() > 1e-12)
            throw construction_error("UtStatistics: sigma is not Hermitian");
        if (!(kappa >= 0.0) || !(beta > 0.0) || !(power_budget >= 0.0))
            throw construction_error("UtStatistics: kappa >= 0, beta > 0, power >= 0 required");
    }

    CMat UtStatistics::ut_correlation() const
    {
        return (kappa * beta / (kappa + 1.0)) * (d0 * d0.adjoint()) + (beta / (kappa + 1.0)) * sigma;
    }

    CVec array_response(int n, double spacing_wavelengths, double x)
    {
        if (n < 1)
            throw invalid_argument("array_response: n must be >= 1");
        CVec a(n);
        const double scale = 1.0 / std::sqrt(double(n));
        for (int i = 0; i < n; ++i)
            a(i) = scale * std::polar(1.0, -2.0 * pi * spacing_wavelengths * double(i) * x);
        return a;
    }

    CVec kron(const CVec &a, const CVec &b)
    {
        CVec out(a.size() * b.size());
        for (Eigen::Index i = 0; i < a.size(); ++i)
            out.segment(i * b.size(), b.size()) = a(i) * b;
        return out;
    }

    CVec sat_steering(const ArrayGeometry &geom, const AnglePair &theta)
    {
        geom.validate();
        double s = std::sin(theta.polar);
        return kron(array_response(geom.n_x, geom.spacing_x, s * std::cos(theta.azimuthal)),
                    array_response(geom.n_y, geom.spacing_y, s * std::sin(theta.azimuthal)));
    }

    CVec ut_steering(const ArrayGeometry &geom, const AnglePair &phi)
    {
        // identical structure at the UT side; kept separate to mirror the channel model
        return sat_steering(geom, phi);
    }

    SpaceAngles sample_ut_geometry(rng_stream &rng, double theta_max_z)
    {
        if (!(theta_max_z > 0.0) || theta_max_z > pi / 2 + 1e-15)
            throw invalid_argument("sample_ut_geometry: theta_max_z must be in (0, pi/2]");
        double radius = std::sin(theta_max_z) * std::sqrt(rng.uniform());
        double ang = 2.0 * pi * rng.uniform();
        return {radius * std::cos(ang), radius * std::sin(ang)};
    }

    double elevation_angle(double theta_z, const LinkBudgetParams &params)
    {
        double arg = params.orbit_radius_km() / params.earth_radius_km * std::sin(theta_z);
        if (arg > 1.0 + 1e-12)
            throw geometry_infeasible("elevation_angle: UT below the horizon (argument " + std::to_string(arg) + ")");
        return std::acos(std::clamp(arg, -1.0, 1.0));
    }

    double slant_distance_km(double elevation, const LinkBudgetParams &params)
    {
        const double re = params.earth_radius_km, h = params.orbit_altitude_km;
        const double s = std::sin(elevation);
        return std::sqrt(re * re * s * s + h * h + 2.0 * h * re) - re * s;
    }

    double link_budget(double distance_km, const LinkBudgetParams &params)
    {
        if (!(distance_km > 0.0))
            throw invalid_argument("link_budget: distance must be positive");
        double fs = params.wavelength_m() / (4.0 * pi * distance_km * 1e3);
        return db_to_linear(params.sat_gain_dbi) * db_to_linear(params.ut_gain_dbi) * fs * fs *
               db_to_linear(-params.extra_loss_db);
    }

    double noise_variance(const LinkBudgetParams &params)
    {
        return boltzmann * params.noise_temperature_k * params.bandwidth_hz;
    }

    RVec normalize_eigenvalues(const RVec &raw)
    {
        double s = raw.sum();
        if (!(s > 0.0) || raw.minCoeff() < 0.0)
            throw invalid_argument("normalize_eigenvalues: draws must be nonnegative with positive sum");
        return raw / s;
    }

    SigmaConstruction build_sigma(const ArrayGeometry &geom, const AnglePair &phi0, const RVec &raw_eigenvalues)
    {
        geom.validate();
        const int rank = int(raw_eigenvalues.size());
        const int n = geom.size();
        if (rank < 1 || rank > n)
            throw invalid_argument("build_sigma: rank must be in [1, N]");

        const double px = std::sin(phi0.polar) * std::cos(phi0.azimuthal);
        const double py = std::sin(phi0.polar) * std::sin(phi0.azimuthal);
        CMat u(n, rank);
        for (int i = 1; i <= rank; ++i)
            u.col(i - 1) = kron(array_response(geom.n_x, geom.spacing_x, px + 2.0 * i / geom.n_x),
                                array_response(geom.n_y, geom.spacing_y, py + 2.0 * i / geom.n_y));

        double ortho = (u.adjoint() * u - CMat::Identity(rank, rank)).cwiseAbs().maxCoeff();
        if (ortho > 1e-8)
            throw construction_error("build_sigma: shifted steering vectors are not orthonormal (max deviation " +
                                     std::to_string(ortho) + ")");

        RVec lam = normalize_eigenvalues(raw_eigenvalues);

        // non-increasing; equal values keep the higher original index first
        std::vector<int> order(rank);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b)
                  { return lam(a) != lam(b) ? lam(a) > lam(b) : a > b; });

        SigmaConstruction out;
        out.eigen.vectors.resize(n, rank);
        out.eigen.values.resize(rank);
        for (int j = 0; j < rank; ++j)
        {
            out.eigen.vectors.col(j) = u.col(order[j]);
            out.eigen.values(j) = lam(order[j]);
        }
        out.sigma = out.eigen.vectors * out.eigen.values.cast<cplx>().asDiagonal() * out.eigen.vectors.adjoint();
        out.sigma = hermitian_part(out.sigma);
        return out;
    }

    SigmaConstruction build_sigma(const ArrayGeometry &geom, const AnglePair &phi0, int rank, rng_stream &rng)
    {
        if (rank < 1 || rank > geom.size())
            throw invalid_argument("build_sigma: rank must be in [1, N]");
        RVec raw(rank);
        for (int i = 0; i < rank; ++i)
        {
            double v = rng.uniform();
            raw(i) = v > 0.0 ? v : 0x1.0p-53; // U(0,1) open at zero
        }
        return build_sigma(geom, phi0, raw);
    }

} // namespace satul
