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

#ifndef SATUL_HARNESS_HPP
#define SATUL_HARNESS_HPP

#include "satul/scenario.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace satul
{
    struct RunOptions
    {
        std::string out_dir = ".";
        int threads = 1;
        bool timing = false; // write measured wall times (otherwise 0, keeping outputs byte-stable)
        bool write = true;
    };

    struct CurveRow
    {
        std::string x; // iteration index or sweep value
        std::string algorithm;
        double esr_nats = 0.0;
        double wall_ms = 0.0;
    };

    inline constexpr const char *csv_header = "iteration_or_sweep,algorithm,esr_nats,esr_bits_per_hz,wall_ms";

    std::string format_csv(const std::vector<CurveRow> &rows, bool timing);
    std::vector<CurveRow> parse_csv(const std::string &text); // throws invalid_argument

    // Write through a temporary file and rename
    void write_file_atomic(const std::string &path, const std::string &content);

    struct AlgorithmRun
    {
        std::string algorithm; // cg_mc, cg_de or beamforming
        std::string point;     // power / sweep value label
        SolveReport report;
        double report_esr = 0.0; // design evaluated on the independent report pool, nats
        std::vector<RankCheck> ranks;
        double kkt_max = 0.0;
        double wall_ms = 0.0;
    };

    nlohmann::json matrix_to_json(const CMat &A);
    CMat matrix_from_json(const nlohmann::json &j);
    nlohmann::json run_to_json(const AlgorithmRun &run, bool timing);

    // ESR of a design on an independent pool (tag report_pool, report_samples draws)
    double report_esr(const Scenario &sc, const ScenarioConfig &cfg, const CovarianceSet &T, int threads);

    // Convergence curves of both algorithms at every converge_powers_dbm entry
    std::vector<AlgorithmRun> run_convergence(const ScenarioConfig &cfg, const RunOptions &opts);

    enum class sweep_var
    {
        power,
        kappa,
        k,
    };
    sweep_var parse_sweep_var(const std::string &s);
    const char *to_string(sweep_var v);

    // One entry per (sweep value, algorithm); beamforming adds the rank-one baseline
    std::vector<AlgorithmRun> run_sweep(const ScenarioConfig &cfg, sweep_var var, const std::vector<double> &values,
                                        bool beamforming, const RunOptions &opts);

    struct ValidationCheck
    {
        std::string name;
        bool pass = false;
        double measured = 0.0;
        double tolerance = 0.0;
        std::string detail;
    };

    struct ValidationReport
    {
        std::vector<ValidationCheck> checks;
        bool all_pass() const;
        nlohmann::json to_json() const;
    };

    ValidationReport run_validation(const ScenarioConfig &cfg, const RunOptions &opts);

    // ----- oracles shared by the CLI and the tests ---------------------------------------------

    // Largest relative error between tr(M_k Delta) and central differences of the pooled
    // objective over `directions` random Hermitian directions per UT (UTs listed in `uts`)
    double mc_gradient_fd_error(const McObjective &obj, const CovarianceSet &T, const std::vector<int> &uts,
                                int directions, std::uint64_t seed);

    // Same for the deterministic equivalent, with the fixed point fully re-solved
    double de_gradient_fd_error(const DeProblem &problem, const CovarianceSet &T, const std::vector<int> &uts,
                                int directions, std::uint64_t seed);

    // Largest relative mismatch between the K x K reduced and the direct M x M log-determinant
    double gram_reduction_error(const UplinkProblem &problem, const SamplePool &pool, const CovarianceSet &T,
                                int samples);

    struct RankOneFixture
    {
        ScenarioConfig cfg;
        double esr_full = 0.0;   // cg_optimize
        double esr_rank1 = 0.0;  // beamforming_optimize
        double improvement = 0.0;
        int rank_full = 0;
        RankOneCheck check; // at the rank-one maximizer
    };

    // Evaluates the low-Rician scenario family used for the rank-one condition
    RankOneFixture evaluate_rank_one_fixture(const ScenarioConfig &cfg, int threads);

    // Searches seeds until rank-one transmission loses more than `min_gain` relative ESR
    std::optional<RankOneFixture> search_rank_one_fixture(const ScenarioConfig &base, int max_seeds, double min_gain,
                                                          int threads);

    // Base configuration of that family (single UT, two scatter directions, kappa = -10 dB)
    ScenarioConfig rank_one_fixture_base();

} // namespace satul

#endif
