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

// satul_cli: experiment driver.
//
//   satul_cli converge [--config F] [--out DIR]
//   satul_cli sweep --var power|kappa|k --values 20,30,40 [--beamforming]
//   satul_cli validate [--config F]
//   satul_cli oracle [--fixture]
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 validation failure.

#include "satul/harness.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

namespace
{
    enum exit_code
    {
        exit_ok = 0,
        exit_config = 2,
        exit_numerical = 3,
        exit_validation = 4,
    };

    std::vector<double> parse_values(const std::vector<std::string> &raw)
    {
        std::vector<double> out;
        for (const auto &item : raw)
        {
            std::stringstream ss(item);
            std::string tok;
            while (std::getline(ss, tok, ','))
            {
                if (tok.empty())
                    continue;
                char *end = nullptr;
                double v = std::strtod(tok.c_str(), &end);
                if (end != tok.c_str() + tok.size())
                    throw satul::config_error("--values: cannot parse '" + tok + "'");
                out.push_back(v);
            }
        }
        return out;
    }

    void print_oracles()
    {
        using namespace satul;
        LinkBudgetParams p;
        const double tz = 30.0 * pi / 180.0;
        const double v30 = elevation_angle(tz, p);
        std::printf("elevation_rad(theta_z=30deg) = %.17g\n", v30);
        std::printf("slant_distance_km(elevation=pi/2) = %.17g\n", slant_distance_km(pi / 2, p));
        std::printf("slant_distance_km(elevation=0) = %.17g\n", slant_distance_km(0.0, p));
        std::printf("slant_distance_km(theta_z=30deg) = %.17g\n", slant_distance_km(v30, p));
        std::printf("link_budget(D=1000km) = %.17g\n", link_budget(1000.0, p));
        std::printf("noise_variance_w = %.17g\n", noise_variance(p));
    }
} // namespace

int main(int argc, char **argv)
{
    using namespace satul;

    CLI::App app{"Uplink transmit covariance design for massive MIMO LEO satellite links"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".";
    std::uint64_t seed = 0;
    int samples = 0, threads = 1;
    bool timing = false;

    auto common = [&](CLI::App *sub)
    {
        sub->add_option("--config", config_path, "Scenario file (key = value); built-in defaults when omitted");
        sub->add_option("--seed", seed, "Override the scenario seed");
        sub->add_option("--out", out_dir, "Output directory")->capture_default_str();
        sub->add_option("--samples", samples, "Override pool_samples");
        sub->add_option("--threads", threads, "Worker threads for pool reductions")->capture_default_str();
        sub->add_flag("--timing", timing, "Record wall times in the outputs (breaks byte-identical reruns)");
    };

    auto *converge = app.add_subcommand("converge", "Objective-vs-iteration curves of both algorithms per power");
    common(converge);

    auto *sweep = app.add_subcommand("sweep", "ESR over a parameter sweep");
    common(sweep);
    std::string var;
    std::vector<std::string> raw_values;
    bool beamforming = false;
    sweep->add_option("--var", var, "power | kappa | k")->required();
    sweep->add_option("--values", raw_values, "Sweep values (comma or space separated)")->required();
    sweep->add_flag("--beamforming", beamforming, "Also run the rank-one beamforming baseline");

    auto *validate = app.add_subcommand("validate", "Run the invariant checks and write a JSON report");
    common(validate);

    auto *oracle = app.add_subcommand("oracle", "Print oracle values; with --fixture search the rank-one fixture");
    common(oracle);
    bool fixture = false;
    int max_seeds = 100;
    oracle->add_flag("--fixture", fixture, "Search the low-Rician rank-one fixture and write it to --out");
    oracle->add_option("--max-seeds", max_seeds, "Seeds to try in the fixture search")->capture_default_str();

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError &e)
    {
        int rc = app.exit(e);
        return rc == 0 ? exit_ok : exit_config;
    }

    try
    {
        ScenarioConfig cfg = config_path.empty() ? ScenarioConfig{} : load_config(config_path);
        if (seed != 0)
            cfg.seed = seed;
        if (samples != 0)
            cfg.solver.pool_samples = samples;
        if (threads < 1)
            throw config_error("--threads must be >= 1");
        cfg.validate();

        RunOptions ro;
        ro.out_dir = out_dir;
        ro.threads = threads;
        ro.timing = timing;
        std::filesystem::create_directories(out_dir);

        if (*converge)
        {
            auto runs = run_convergence(cfg, ro);
            for (const auto &r : runs)
                std::printf("power_dbm=%s %s objective=%.10g nats iterations=%d stop=%s\n", r.point.c_str(),
                            r.algorithm.c_str(), r.report.objective, r.report.iterations,
                            r.report.stop_reason.c_str());
        }
        else if (*sweep)
        {
            auto runs = run_sweep(cfg, parse_sweep_var(var), parse_values(raw_values), beamforming, ro);
            for (const auto &r : runs)
                std::printf("%s=%s %s esr=%.10g bits/s/Hz\n", var.c_str(), r.point.c_str(), r.algorithm.c_str(),
                            r.report_esr / std::log(2.0));
        }
        else if (*validate)
        {
            ValidationReport rep = run_validation(cfg, ro);
            std::string text = rep.to_json().dump(2) + "\n";
            write_file_atomic((std::filesystem::path(out_dir) / "validation.json").string(), text);
            for (const auto &c : rep.checks)
                std::printf("%-26s %s measured=%.3g tol=%.3g\n", c.name.c_str(), c.pass ? "PASS" : "FAIL", c.measured,
                            c.tolerance);
            return rep.all_pass() ? exit_ok : exit_validation;
        }
        else if (*oracle)
        {
            print_oracles();
            if (fixture)
            {
                ScenarioConfig base = rank_one_fixture_base();
                if (samples != 0)
                    base.solver.pool_samples = samples;
                auto fx = search_rank_one_fixture(base, max_seeds, 0.005, threads);
                if (!fx)
                {
                    std::fprintf(stderr, "no qualifying scenario within %d seeds\n", max_seeds);
                    return exit_validation;
                }
                std::printf("rank_one_fixture seed=%llu esr_full=%.17g esr_rank1=%.17g improvement=%.6g gap=%.6g "
                            "tol=%.6g\n",
                            static_cast<unsigned long long>(fx->cfg.seed), fx->esr_full, fx->esr_rank1,
                            fx->improvement, fx->check.gap, fx->check.tol);
                write_file_atomic((std::filesystem::path(out_dir) / "rank_one_lowkappa.cfg").string(),
                                  "# SPDX-License-Identifier: Apache-2.0\n# Generated by satul_cli oracle --fixture\n" +
                                      serialize_config(fx->cfg));
            }
        }
        return exit_ok;
    }
    catch (const config_error &e)
    {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return exit_config;
    }
    catch (const invalid_argument &e)
    {
        std::fprintf(stderr, "invalid argument: %s\n", e.what());
        return exit_config;
    }
    catch (const construction_error &e)
    {
        std::fprintf(stderr, "invalid statistics: %s\n", e.what());
        return exit_validation;
    }
    catch (const error &e)
    {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return exit_numerical;
    }
    catch (const std::exception &e)
    {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_numerical;
    }
}
