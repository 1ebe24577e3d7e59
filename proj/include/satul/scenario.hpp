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

#ifndef SATUL_SCENARIO_HPP
#define SATUL_SCENARIO_HPP

#include "satul/geometry.hpp"
#include "satul/optimizer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace satul
{
    // Flat key = value scenario description. Units are part of the key names; omitted keys keep
    // the defaults below. Lists (power_dbm, kappa_db, converge_powers_dbm) are comma separated;
    // a single entry applies to every UT.
    struct ScenarioConfig
    {
        LinkBudgetParams link;
        ArrayGeometry sat{12, 12, 1.0, 1.0};
        ArrayGeometry ut{6, 6, 0.5, 0.5};
        double theta_max_deg = 30.0;
        int num_uts = 100;
        std::vector<double> power_dbm{30.0};
        std::vector<double> kappa_db{10.0}; // values <= -300 mean kappa = 0
        int scatter_rank = 1;
        std::uint64_t seed = 1;
        SolverOptions solver;
        int report_samples = 3000;
        bool array_gain_in_beta = true; // fold M N into beta (g and d0 stay unit norm)
        double debug_sigma_scale = 1.0; // != 1 corrupts trace(sigma); negative tests only
        std::vector<double> converge_powers_dbm{20.0, 30.0, 40.0};

        void validate() const; // throws config_error naming the field
    };

    // Throws config_error on syntax errors, unknown keys, or invalid values
    ScenarioConfig parse_config(const std::string &text);
    ScenarioConfig load_config(const std::string &path);

    // Every key, values printed with 17 significant digits; parse_config(serialize) is exact
    std::string serialize_config(const ScenarioConfig &cfg);

    // Short stable hash of the serialized config (hex)
    std::string config_hash(const ScenarioConfig &cfg);

    struct UtGeometry
    {
        SpaceAngles zeta;
        double elevation = 0.0; // rad
        double distance_km = 0.0;
        double azimuth = 0.0; // LoS azimuth at the UT, rad
    };

    struct Scenario
    {
        UplinkProblem problem;
        std::vector<UtGeometry> geometry;
    };

    // Draws UT positions, steering vectors, scatter covariances and link budgets from per-UT
    // substreams. With check = false the statistics are not validated or factorized (used to
    // report corrupted inputs instead of throwing).
    Scenario build_scenario(const ScenarioConfig &cfg, bool check = true);

    double kappa_linear(double kappa_db);

} // namespace satul

#endif
