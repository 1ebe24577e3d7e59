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

#include "satul/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace satul
{
    namespace fs = std::filesystem;
    using json = nlohmann::json;

    namespace
    {
        std::string fmt(double v)
        {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.17g", v);
            return buf;
        }

        // file-name friendly label for a sweep value
        std::string label(double v)
        {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%g", v);
            std::string s = buf;
            for (auto &c : s)
                if (c == '-')
                    c = 'm';
                else if (c == '.')
                    c = 'p';
            return s;
        }

        double now_ms()
        {
            using namespace std::chrono;
            return duration<double, std::milli>(steady_clock::now().time_since_epoch()).count();
        }
    } // namespace

    // ----- CSV / JSON --------------------------------------------------------------------------

    std::string format_csv(const std::vector<CurveRow> &rows, bool timing)
    {
        std::string out = std::string(csv_header) + "\n";
        for (const auto &r : rows)
            out += r.x + "," + r.algorithm + "," + fmt(r.esr_nats) + "," + fmt(r.esr_nats / std::log(2.0)) + "," +
                   fmt(timing ? r.wall_ms : 0.0) + "\n";
        return out;
    }

    std::vector<CurveRow> parse_csv(const std::string &text)
    {
        std::stringstream ss(text);
        std::string line;
        if (!std::getline(ss, line) || line != csv_header)
            throw invalid_argument("parse_csv: missing or wrong header");
        std::vector<CurveRow> rows;
        while (std::getline(ss, line))
        {
            if (line.empty())
                continue;
            std::vector<std::string> cells;
            std::stringstream ls(line);
            std::string cell;
            while (std::getline(ls, cell, ','))
                cells.push_back(cell);
            if (cells.size() != 5)
                throw invalid_argument("parse_csv: expected 5 columns in '" + line + "'");
            CurveRow r;
            r.x = cells[0];
            r.algorithm = cells[1];
            r.esr_nats = std::strtod(cells[2].c_str(), nullptr);
            r.wall_ms = std::strtod(cells[4].c_str(), nullptr);
            rows.push_back(r);
        }
        return rows;
    }

    void write_file_atomic(const std::string &path, const std::string &content)
    {
        fs::path p(path);
        if (p.has_parent_path())
            fs::create_directories(p.parent_path());
        fs::path tmp = p;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out)
                throw error("cannot write '" + tmp.string() + "'");
            out << content;
            if (!out)
                throw error("write failed for '" + tmp.string() + "'");
        }
        fs::rename(tmp, p);
    }

    json matrix_to_json(const CMat &A)
    {
        json rows = json::array();
        for (Eigen::Index i = 0; i < A.rows(); ++i)
        {
            json row = json::array();
            for (Eigen::Index j = 0; j < A.cols(); ++j)
                row.push_back({A(i, j).real(), A(i, j).imag()});
            rows.push_back(row);
        }
        return rows;
    }

    CMat matrix_from_json(const json &j)
    {
        const auto r = Eigen::Index(j.size());
        const auto c = r ? Eigen::Index(j[0].size()) : 0;
        CMat A(r, c);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index k = 0; k < c; ++k)
                A(i, k) = cplx(j[i][k][0].get<double>(), j[i][k][1].get<double>());
        return A;
    }

    json run_to_json(const AlgorithmRun &run, bool timing)
    {
        json j;
        j["algorithm"] = run.algorithm;
        j["point"] = run.point;
        j["objective_nats"] = run.report.objective;
        j["report_esr_nats"] = run.report_esr;
        j["report_esr_bits_per_hz"] = run.report_esr / std::log(2.0);
        j["iterations"] = run.report.iterations;
        j["stop_reason"] = run.report.stop_reason;
        j["kkt_max_residual"] = run.kkt_max;
        json ranks = json::array();
        int violations = 0;
        for (const auto &r : run.ranks)
        {
            ranks.push_back({r.rank_q, r.rank_rut});
            violations += r.pass ? 0 : 1;
        }
        j["ranks_q_rut"] = ranks;
        j["rank_violations"] = violations;
        json hist = json::array();
        for (const auto &h : run.report.history)
            hist.push_back(h.objective);
        j["history_nats"] = hist;
        json T = json::array();
        for (const auto &t : run.report.T)
            T.push_back(matrix_to_json(t));
        j["T"] = T;
        if (timing)
            j["wall_ms"] = run.wall_ms;
        return j;
    }

    // ----- campaigns ---------------------------------------------------------------------------

    double report_esr(const Scenario &sc, const ScenarioConfig &cfg, const CovarianceSet &T, int threads)
    {
        SolverOptions o = cfg.solver;
        o.pool_samples = cfg.report_samples;
        o.pool = pool_mode::plain;
        o.threads = threads;
        return make_mc_objective(sc.problem, o, stream_tag::report_pool).value(T);
    }

    namespace
    {
        AlgorithmRun finish_run(const std::string &alg, const std::string &point, SolveReport rep, const Scenario &sc,
                                const ScenarioConfig &cfg, int threads, double t0)
        {
            AlgorithmRun run;
            run.algorithm = alg;
            run.point = point;
            run.report = std::move(rep);
            run.report_esr = report_esr(sc, cfg, run.report.T, threads);
            for (std::size_t k = 0; k < run.report.T.size(); ++k)
                run.ranks.push_back(
                    rank_bound_check(lift(sc.problem.factors[k], run.report.T[k]), sc.problem.stats[k]));
            for (const auto &e : run.report.kkt)
                run.kkt_max = std::max(run.kkt_max, e.residual);
            run.wall_ms = now_ms() - t0;
            return run;
        }

        std::vector<AlgorithmRun> run_point(const ScenarioConfig &cfg, const std::string &point, bool beamforming,
                                            int threads)
        {
            Scenario sc = build_scenario(cfg);
            SolverOptions o = cfg.solver;
            o.threads = threads;
            std::vector<AlgorithmRun> out;
            const auto P = sc.problem.power();

            double t0 = now_ms();
            McObjective mc = make_mc_objective(sc.problem, o);
            out.push_back(finish_run("cg_mc", point, cg_optimize(mc, P, o), sc, cfg, threads, t0));

            t0 = now_ms();
            DeObjective de = make_de_objective(sc.problem, o);
            out.push_back(finish_run("cg_de", point, cg_optimize_de(de, P, o), sc, cfg, threads, t0));

            if (beamforming)
            {
                t0 = now_ms();
                std::vector<CVec> w0;
                for (const auto &f : sc.problem.factors)
                    w0.push_back(top_eigen(f.Omega).vector);
                auto bf = beamforming_optimize(mc, P, std::move(w0), o);
                out.push_back(finish_run("beamforming", point, std::move(bf.report), sc, cfg, threads, t0));
            }
            return out;
        }

        json summary_json(const ScenarioConfig &cfg, const std::string &campaign, const std::vector<AlgorithmRun> &runs,
                          bool timing)
        {
            json j;
            j["campaign"] = campaign;
            j["config_hash"] = config_hash(cfg);
            j["seed"] = cfg.seed;
            j["config"] = serialize_config(cfg);
            json arr = json::array();
            for (const auto &r : runs)
                arr.push_back(run_to_json(r, timing));
            j["runs"] = arr;
            return j;
        }
    } // namespace

    std::vector<AlgorithmRun> run_convergence(const ScenarioConfig &cfg, const RunOptions &opts)
    {
        std::vector<AlgorithmRun> all;
        for (double p : cfg.converge_powers_dbm)
        {
            ScenarioConfig c = cfg;
            c.power_dbm = {p};
            auto runs = run_point(c, fmt(p), false, opts.threads);
            for (auto &r : runs)
            {
                if (opts.write)
                {
                    std::vector<CurveRow> rows;
                    for (const auto &h : r.report.history)
                        rows.push_back({std::to_string(h.iteration), r.algorithm, h.objective, h.wall_ms});
                    write_file_atomic((fs::path(opts.out_dir) / ("converge_p" + label(p) + "_" + r.algorithm + ".csv"))
                                          .string(),
                                      format_csv(rows, opts.timing));
                }
                all.push_back(std::move(r));
            }
        }
        if (opts.write)
            write_file_atomic((fs::path(opts.out_dir) / "converge_summary.json").string(),
                              summary_json(cfg, "converge", all, opts.timing).dump(2) + "\n");
        return all;
    }

    sweep_var parse_sweep_var(const std::string &s)
    {
        if (s == "power")
            return sweep_var::power;
        if (s == "kappa")
            return sweep_var::kappa;
        if (s == "k" || s == "K")
            return sweep_var::k;
        throw config_error("--var must be power, kappa or k (got '" + s + "')");
    }

    const char *to_string(sweep_var v)
    {
        switch (v)
        {
        case sweep_var::power:
            return "power";
        case sweep_var::kappa:
            return "kappa";
        case sweep_var::k:
            return "k";
        }
        return "power";
    }

    std::vector<AlgorithmRun> run_sweep(const ScenarioConfig &cfg, sweep_var var, const std::vector<double> &values,
                                        bool beamforming, const RunOptions &opts)
    {
        if (values.empty())
            throw config_error("sweep: --values must not be empty");
        std::vector<AlgorithmRun> all;
        for (double v : values)
        {
            ScenarioConfig c = cfg;
            switch (var)
            {
            case sweep_var::power:
                c.power_dbm = {v};
                break;
            case sweep_var::kappa:
                c.kappa_db = {v};
                break;
            case sweep_var::k:
                if (v < 1 || v != std::floor(v))
                    throw config_error("sweep: K values must be positive integers");
                c.num_uts = int(v);
                if (c.power_dbm.size() != 1)
                    c.power_dbm = {c.power_dbm[0]};
                if (c.kappa_db.size() != 1)
                    c.kappa_db = {c.kappa_db[0]};
                break;
            }
            c.validate();
            for (auto &r : run_point(c, fmt(v), beamforming, opts.threads))
                all.push_back(std::move(r));
        }
        if (opts.write)
        {
            std::vector<CurveRow> rows;
            for (const auto &r : all)
                rows.push_back({r.point, r.algorithm, r.report_esr, r.wall_ms});
            const std::string base = std::string("sweep_") + to_string(var) + (beamforming ? "_bf" : "");
            write_file_atomic((fs::path(opts.out_dir) / (base + ".csv")).string(), format_csv(rows, opts.timing));
            write_file_atomic((fs::path(opts.out_dir) / (base + "_summary.json")).string(),
                              summary_json(cfg, base, all, opts.timing).dump(2) + "\n");
        }
        return all;
    }

    // ----- oracles -----------------------------------------------------------------------------

    namespace
    {
        CMat random_hermitian(int n, rng_stream &rng)
        {
            CMat A(n, n);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    A(i, j) = rng.complex_normal(1.0);
            CMat H = hermitian_part(A);
            return H / H.norm();
        }

        template <class Value, class Gradient>
        double fd_error(Value value, Gradient gradient, const CovarianceSet &T, const std::vector<int> &uts,
                        int directions, std::uint64_t seed)
        {
            auto grad = gradient(T);
            double worst = 0.0;
            for (int k : uts)
            {
                const auto ku = std::size_t(k);
                const double scale = std::max(T[ku].trace().real(), 1e-300);
                // keeps T +- h Delta positive definite for the uniform start
                const double h = 1e-4 * scale / T[ku].rows();
                for (int d = 0; d < directions; ++d)
                {
                    rng_stream rng(seed, {0xFD, std::uint64_t(k), std::uint64_t(d)});
                    CMat D = random_hermitian(int(T[ku].rows()), rng);
                    CovarianceSet Tp = T, Tm = T;
                    Tp[ku] += h * D;
                    Tm[ku] -= h * D;
                    double fd = (value(Tp) - value(Tm)) / (2.0 * h);
                    double an = (grad[ku] * D).trace().real();
                    double denom = std::max({std::abs(an), std::abs(fd), 1e-300});
                    worst = std::max(worst, std::abs(fd - an) / denom);
                }
            }
            return worst;
        }
    } // namespace

    double mc_gradient_fd_error(const McObjective &obj, const CovarianceSet &T, const std::vector<int> &uts,
                                int directions, std::uint64_t seed)
    {
        return fd_error([&](const CovarianceSet &X)
                        { return obj.value(X); },
                        [&](const CovarianceSet &X)
                        { return obj.gradient(X); },
                        T, uts, directions, seed);
    }

    double de_gradient_fd_error(const DeProblem &problem, const CovarianceSet &T, const std::vector<int> &uts,
                                int directions, std::uint64_t seed)
    {
        // fixed sweep count well past convergence keeps the objective smooth in T
        DeObjective obj(problem, 400, 0.0);
        return fd_error([&](const CovarianceSet &X)
                        { return obj.value(X); },
                        [&](const CovarianceSet &X)
                        { return obj.gradient(X); },
                        T, uts, directions, seed);
    }

    double gram_reduction_error(const UplinkProblem &problem, const SamplePool &pool, const CovarianceSet &T,
                                int samples)
    {
        GramCache gram = GramCache::build(problem.stats);
        const int K = problem.n_users();
        const int M = problem.stats.front().n_sat();
        double worst = 0.0;
        for (int s = 0; s < std::min(samples, pool.n_samples); ++s)
        {
            std::vector<CVec> c;
            CMat A = CMat::Identity(M, M);
            for (int k = 0; k < K; ++k)
            {
                const auto ku = std::size_t(k);
                c.push_back(pool.samples[ku].col(s));
                CVec d = problem.factors[ku].B * c.back();
                CMat Q = lift(problem.factors[ku], T[ku]);
                double load = d.dot(Q * d).real() / problem.sigma2;
                A += load * (problem.stats[ku].g * problem.stats[ku].g.adjoint());
            }
            double direct = logdet_hpd(hermitian_part(A));
            double reduced = sum_rate_sample(T, c, gram, problem.sigma2);
            worst = std::max(worst, std::abs(direct - reduced) / std::max(std::abs(direct), 1e-300));
        }
        return worst;
    }

    ScenarioConfig rank_one_fixture_base()
    {
        ScenarioConfig c;
        c.num_uts = 1;
        c.scatter_rank = 2;
        c.kappa_db = {-10.0};
        c.power_dbm = {40.0};
        c.solver.pool_samples = 400;
        c.solver.max_iters = 100;
        c.solver.eps = 1e-8;
        c.report_samples = 400;
        return c;
    }

    RankOneFixture evaluate_rank_one_fixture(const ScenarioConfig &cfg, int threads)
    {
        Scenario sc = build_scenario(cfg);
        SolverOptions o = cfg.solver;
        o.threads = threads;
        McObjective mc = make_mc_objective(sc.problem, o);
        const auto P = sc.problem.power();

        RankOneFixture fx;
        fx.cfg = cfg;
        SolveReport full = cg_optimize(mc, P, o);
        fx.esr_full = full.objective;
        fx.rank_full = numerical_rank(full.T[0], 1e-3);

        std::vector<CVec> w0;
        for (const auto &f : sc.problem.factors)
            w0.push_back(top_eigen(f.Omega).vector);
        BeamformingResult bf = beamforming_optimize(mc, P, w0, o);
        fx.esr_rank1 = bf.report.objective;
        fx.improvement = (fx.esr_full - fx.esr_rank1) / fx.esr_rank1;
        fx.check = rank_one_condition_check(0, bf.w[0], bf.report.T, mc, P[0], o.tol_rank1);
        return fx;
    }

    std::optional<RankOneFixture> search_rank_one_fixture(const ScenarioConfig &base, int max_seeds, double min_gain,
                                                          int threads)
    {
        for (int s = 1; s <= max_seeds; ++s)
        {
            ScenarioConfig c = base;
            c.seed = std::uint64_t(s);
            RankOneFixture fx = evaluate_rank_one_fixture(c, threads);
            if (fx.improvement > min_gain && fx.rank_full >= 2 && !fx.check.satisfied)
                return fx;
        }
        return std::nullopt;
    }

    // ----- validation --------------------------------------------------------------------------

    bool ValidationReport::all_pass() const
    {
        for (const auto &c : checks)
            if (!c.pass)
                return false;
        return !checks.empty();
    }

    json ValidationReport::to_json() const
    {
        json j;
        j["all_pass"] = all_pass();
        json arr = json::array();
        for (const auto &c : checks)
            arr.push_back({{"name", c.name},
                           {"pass", c.pass},
                           {"measured", c.measured},
                           {"tolerance", c.tolerance},
                           {"detail", c.detail}});
        j["checks"] = arr;
        return j;
    }

    ValidationReport run_validation(const ScenarioConfig &cfg, const RunOptions &opts)
    {
        ValidationReport rep;
        auto add = [&](const std::string &name, double measured, double tol, bool pass, const std::string &detail = "")
        { rep.checks.push_back({name, pass, measured, tol, detail}); };
        auto upto = [&](double measured, double tol)
        { return std::isfinite(measured) && measured <= tol; };

        Scenario sc = build_scenario(cfg, false);
        {
            int bad = 0;
            std::string first;
            for (const auto &st : sc.problem.stats)
            {
                try
                {
                    st.validate();
                }
                catch (const error &e)
                {
                    if (!bad)
                        first = e.what();
                    ++bad;
                }
            }
            add("statistics_valid", bad, 0, bad == 0, first);
            if (bad)
                return rep;
        }
        for (const auto &st : sc.problem.stats)
            sc.problem.factors.push_back(factorize(st));
        const UplinkProblem &pb = sc.problem;
        const auto P = pb.power();
        const int K = pb.n_users();

        double fact_err = 0.0;
        for (int k = 0; k < K; ++k)
        {
            const auto ku = std::size_t(k);
            CMat R = pb.stats[ku].ut_correlation();
            CMat BOB = pb.factors[ku].B * pb.factors[ku].Omega * pb.factors[ku].B.adjoint();
            fact_err = std::max(fact_err, (R - BOB).norm() / R.norm());
        }
        add("lowdim_factorization", fact_err, 1e-10, upto(fact_err, 1e-10));

        SolverOptions o = cfg.solver;
        o.threads = opts.threads;
        McObjective mc = make_mc_objective(pb, o);
        std::vector<int> dims;
        for (const auto &f : pb.factors)
            dims.push_back(f.s1);
        CovarianceSet T0 = uniform_start(dims, P);

        double gram_err = gram_reduction_error(pb, mc.pool(), T0, 10);
        add("gram_reduction", gram_err, 1e-10, upto(gram_err, 1e-10));

        std::vector<int> probe_uts;
        for (int k = 0; k < std::min(K, 3); ++k)
            probe_uts.push_back(k);
        double g_mc = mc_gradient_fd_error(mc, T0, probe_uts, 2, cfg.seed);
        add("mc_gradient_fd", g_mc, 1e-5, upto(g_mc, 1e-5));

        DeProblem dep = DeProblem::build(pb.stats, pb.factors, pb.sigma2);
        DeState st = fixed_point_solve(T0, dep, 200, 1e-10);
        double fp_res = fixed_point_residual(T0, dep, st);
        add("de_fixed_point_residual", fp_res, 1e-8, upto(fp_res, 1e-8));
        double g_de = de_gradient_fd_error(dep, T0, probe_uts, 2, cfg.seed);
        add("de_gradient_fd", g_de, 1e-4, upto(g_de, 1e-4));

        SolveReport r_mc = cg_optimize(mc, P, o);
        double mono = 0.0;
        for (std::size_t i = 1; i < r_mc.history.size(); ++i)
            mono = std::max(mono, r_mc.history[i - 1].objective - r_mc.history[i].objective);
        add("cg_mc_monotone", mono, 1e-12, mono <= 1e-12);
        add("cg_mc_feasible", feasible(r_mc.T, P) ? 0 : 1, 0, feasible(r_mc.T, P));
        int rank_viol = 0;
        for (int k = 0; k < K; ++k)
            rank_viol += rank_bound_check(lift(pb.factors[std::size_t(k)], r_mc.T[std::size_t(k)]),
                                          pb.stats[std::size_t(k)])
                             .pass
                             ? 0
                             : 1;
        add("rank_bound", rank_viol, 0, rank_viol == 0);
        double kkt = 0.0;
        for (const auto &e : r_mc.kkt)
            kkt = std::max(kkt, e.residual);
        add("cg_mc_kkt", kkt, 1e-2, upto(kkt, 1e-2));

        DeObjective de = make_de_objective(pb, o);
        SolveReport r_de = cg_optimize_de(de, P, o);
        add("cg_de_feasible", feasible(r_de.T, P) ? 0 : 1, 0, feasible(r_de.T, P));
        double gap = std::abs(r_de.objective - r_mc.objective) / std::abs(r_mc.objective);
        add("de_vs_mc_gap", gap, 0.03, upto(gap, 0.03),
            "DE objective " + fmt(r_de.objective) + " nats, MC objective " + fmt(r_mc.objective) + " nats");
        return rep;
    }

} // namespace satul
