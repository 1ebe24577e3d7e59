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

#ifndef SATUL_GEOMETRY_HPP
#define SATUL_GEOMETRY_HPP

#include "satul/common.hpp"
#include "satul/rng.hpp"

#include <cstdint>
#include <optional>

namespace satul
{
    // Uniform planar array; spacings in carrier wavelengths
    struct ArrayGeometry
    {
        int n_x = 1;
        int n_y = 1;
        double spacing_x = 0.5;
        double spacing_y = 0.5;

        int size() const { return n_x * n_y; }
        void validate() const;
    };

    // (azimuthal, polar) angle pair in radians
    struct AnglePair
    {
        double azimuthal = 0.0;
        double polar = 0.0;
    };

    // Sine-space coordinates of the arrival direction at the satellite
    struct SpaceAngles
    {
        double zeta_x = 0.0;
        double zeta_y = 0.0;

        double radius() const { return std::hypot(zeta_x, zeta_y); }
        AnglePair to_angles() const; // (theta_x, theta_z) with theta_z = asin(radius)
    };

    struct LinkBudgetParams
    {
        double earth_radius_km = 6378.0;
        double orbit_altitude_km = 1000.0;
        double carrier_freq_hz = 2e9;
        double bandwidth_hz = 20e6;
        double noise_temperature_k = 273.0;
        double sat_gain_dbi = 7.0;
        double ut_gain_dbi = 0.0;
        double extra_loss_db = 2.0; // ionospheric + shadowing aggregate

        double orbit_radius_km() const { return earth_radius_km + orbit_altitude_km; }
        double wavelength_m() const { return speed_of_light / carrier_freq_hz; }
        void validate() const;
    };

    // Eigenpairs of a constructed scatter covariance, eigenvalues non-increasing
    struct ScatterEigen
    {
        CMat vectors; // N x S, orthonormal columns
        RVec values;  // length S, positive, sum to one
    };

    // Per-UT statistical CSI
    struct UtStatistics
    {
        CVec g;     // satellite steering vector, unit norm, length M
        CVec d0;    // LoS direction at the UT, unit norm, length N
        CMat sigma; // scatter covariance, N x N, trace one
        std::optional<ScatterEigen> sigma_eigen;
        double kappa = 1.0;        // Rician factor, linear
        double beta = 1.0;         // average channel power E||d||^2, linear
        double power_budget = 1.0; // P_k in watts
        std::uint64_t id = 0;      // keys the UT's random substreams

        int n_sat() const { return int(g.size()); }
        int n_ut() const { return int(d0.size()); }

        // Throws construction_error naming the violated invariant.
        void validate() const;

        // E{d d^H} = kappa*beta/(kappa+1) d0 d0^H + beta/(kappa+1) sigma
        CMat ut_correlation() const;
        double los_amplitude() const { return std::sqrt(kappa * beta / (kappa + 1.0)); }
        double scatter_amplitude() const { return std::sqrt(beta / (kappa + 1.0)); }
    };

    // (1/sqrt(n)) exp(-j 2 pi spacing i x), i = 0..n-1
    CVec array_response(int n, double spacing_wavelengths, double x);

    // a_{Mx}(sin(theta_z) cos(theta_x)) kron a_{My}(sin(theta_z) sin(theta_x))
    CVec sat_steering(const ArrayGeometry &geom, const AnglePair &theta);
    CVec ut_steering(const ArrayGeometry &geom, const AnglePair &phi);

    // Kronecker product of two vectors (first index slow)
    CVec kron(const CVec &a, const CVec &b);

    // Space angle pair uniform on the disk of radius sin(theta_max_z)
    SpaceAngles sample_ut_geometry(rng_stream &rng, double theta_max_z);

    double elevation_angle(double theta_z, const LinkBudgetParams &params);
    double slant_distance_km(double elevation, const LinkBudgetParams &params);

    // Free-space power gain with element gains and extra loss; distance in km
    double link_budget(double distance_km, const LinkBudgetParams &params);

    double noise_variance(const LinkBudgetParams &params);

    // Rescale raw positive draws so they sum to one
    RVec normalize_eigenvalues(const RVec &raw);

    struct SigmaConstruction
    {
        CMat sigma;
        ScatterEigen eigen;
    };

    // Scatter covariance from DFT-shifted steering vectors around the LoS space angles and
    // U(0,1) eigenvalues normalized to unit sum. Throws construction_error when the shifted
    // vectors are not orthonormal to 1e-8.
    SigmaConstruction build_sigma(const ArrayGeometry &geom, const AnglePair &phi0, int rank, rng_stream &rng);

    // Same construction with caller-provided eigenvalues (normalized internally)
    SigmaConstruction build_sigma(const ArrayGeometry &geom, const AnglePair &phi0, const RVec &raw_eigenvalues);

} // namespace satul

#endif
