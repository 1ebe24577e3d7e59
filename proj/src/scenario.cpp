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

#include "satul/scenario.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace satul
{
    namespace
    {
        std::string trim(const std::string &s)
        {
            const char *ws = " \t\r\n";
            auto b = s.find_first_not_of(ws);
            if (b == std::string::npos)
                return "";
            auto e = s.find_last_not_of(ws);
            return s.substr(b, e - b + 1);
        }

        std::string fmt(double v)
        {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.17g", v);
            return buf;
        }

        double to_real(const std::string &key, const std::string &v)
        {
            const char *b = v.c_str();
            char *end = nullptr;
            errno = 0;
            double d = std::strtod(b, &end);
            if (v.empty() || end != b + v.size() || errno == ERANGE)
                throw config_error(key + ": expected a real number, got '" + v + "'");
            return d;
        }

        long long to_integer(const std::string &key, const std::string &v)
        {
            const char *b = v.c_str();
            char *end = nullptr;
            errno = 0;
            long long n = std::strtoll(b, &end, 10);
            if (v.empty() || end != b + v.size() || errno == ERANGE)
                throw config_error(key + ": expected an integer, got '" + v + "'");
            return n;
        }

        std::uint64_t to_u64(const std::string &key, const std::string &v)
        {
            const char *b = v.c_str();
            char *end = nullptr;
            errno = 0;
            unsigned long long n = std::strtoull(b, &end, 10);
            if (v.empty() || v[0] == '-' || end != b + v.size() || errno == ERANGE)
                throw config_error(key + ": expected an unsigned 64-bit integer, got '" + v + "'");
            return n;
        }

        int to_int(const std::string &key, const std::string &v)
        {
            long long n = to_integer(key, v);
            if (n < -2147483647LL || n > 2147483647LL)
                throw config_error(key + ": integer out of range");
            return int(n);
        }

        bool to_bool(const std::string &key, const std::string &v)
        {
            if (v == "true" || v == "1")
                return true;
            if (v == "false" || v == "0")
                return false;
            throw config_error(key + ": expected true or false, got '" + v + "'");
        }

        std::vector<double> to_list(const std::string &key, const std::string &v)
        {
            std::vector<double> out;
            std::stringstream ss(v);
            std::string item;
            while (std::getline(ss, item, ','))
                out.push_back(to_real(key, trim(item)));
            if (out.empty())
                throw config_error(key + ": empty list");
            return out;
        }

        std::string fmt_list(const std::vector<double> &v)
        {
            std::string s;
            for (std::size_t i = 0; i < v.size(); ++i)
                s += (i ? ", " : "") + fmt(v[i]);
            return s;
        }

        struct Field
        {
            const char *name;
            std::function<void(ScenarioConfig &, const std::string &)> set;
            std::function<std::string(const ScenarioConfig &)> get;
        };

#define SATUL_REAL(key, member)                                                              \
    Field{key, [](ScenarioConfig &c, const std::string &v) { c.member = to_real(key, v); }, \
          [](const ScenarioConfig &c) { return fmt(c.member); }}
#define SATUL_INT(key, member)                                                              \
    Field{key, [](ScenarioConfig &c, const std::string &v) { c.member = to_int(key, v); }, \
          [](const ScenarioConfig &c) { return std::to_string(c.member); }}
#define SATUL_LIST(key, member)                                                              \
    Field{key, [](ScenarioConfig &c, const std::string &v) { c.member = to_list(key, v); }, \
          [](const ScenarioConfig &c) { return fmt_list(c.member); }}

        const std::vector<Field> &fields()
        {
            static const std::vector<Field> table = {
                SATUL_REAL("earth_radius_km", link.earth_radius_km),
                SATUL_REAL("orbit_altitude_km", link.orbit_altitude_km),
                SATUL_REAL("carrier_freq_hz", link.carrier_freq_hz),
                SATUL_REAL("bandwidth_hz", link.bandwidth_hz),
                SATUL_REAL("noise_temperature_k", link.noise_temperature_k),
                SATUL_REAL("sat_gain_dbi", link.sat_gain_dbi),
                SATUL_REAL("ut_gain_dbi", link.ut_gain_dbi),
                SATUL_REAL("extra_loss_db", link.extra_loss_db),
                SATUL_INT("sat_nx", sat.n_x),
                SATUL_INT("sat_ny", sat.n_y),
                SATUL_REAL("sat_spacing_x_wl", sat.spacing_x),
                SATUL_REAL("sat_spacing_y_wl", sat.spacing_y),
                SATUL_INT("ut_nx", ut.n_x),
                SATUL_INT("ut_ny", ut.n_y),
                SATUL_REAL("ut_spacing_x_wl", ut.spacing_x),
                SATUL_REAL("ut_spacing_y_wl", ut.spacing_y),
                SATUL_REAL("theta_max_deg", theta_max_deg),
                SATUL_INT("num_uts", num_uts),
                SATUL_LIST("power_dbm", power_dbm),
                SATUL_LIST("kappa_db", kappa_db),
                SATUL_INT("scatter_rank", scatter_rank),
                Field{"seed", [](ScenarioConfig &c, const std::string &v)
                      { c.seed = to_u64("seed", v); },
                      [](const ScenarioConfig &c)
                      { return std::to_string(c.seed); }},
                SATUL_INT("max_iters", solver.max_iters),
                SATUL_REAL("eps_nats", solver.eps),
                Field{"line_search", [](ScenarioConfig &c, const std::string &v)
                      {
                          try
                          {
                              c.solver.line_search = parse_line_search_mode(v);
                          }
                          catch (const invalid_argument &e)
                          {
                              throw config_error(std::string("line_search: ") + e.what());
                          }
                      },
                      [](const ScenarioConfig &c)
                      { return std::string(to_string(c.solver.line_search)); }},
                SATUL_INT("ls_max_evals", solver.ls_max_evals),
                Field{"step_mode", [](ScenarioConfig &c, const std::string &v)
                      {
                          try
                          {
                              c.solver.steps = parse_step_mode(v);
                          }
                          catch (const invalid_argument &e)
                          {
                              throw config_error(std::string("step_mode: ") + e.what());
                          }
                      },
                      [](const ScenarioConfig &c)
                      { return std::string(to_string(c.solver.steps)); }},
                SATUL_INT("pool_samples", solver.pool_samples),
                Field{"pool_mode", [](ScenarioConfig &c, const std::string &v)
                      {
                          try
                          {
                              c.solver.pool = parse_pool_mode(v);
                          }
                          catch (const invalid_argument &e)
                          {
                              throw config_error(std::string("pool_mode: ") + e.what());
                          }
                      },
                      [](const ScenarioConfig &c)
                      { return std::string(to_string(c.solver.pool)); }},
                SATUL_INT("de_nf", solver.de_nf),
                SATUL_REAL("tol_rank1", solver.tol_rank1),
                SATUL_INT("report_samples", report_samples),
                Field{"array_gain_in_beta", [](ScenarioConfig &c, const std::string &v)
                      { c.array_gain_in_beta = to_bool("array_gain_in_beta", v); },
                      [](const ScenarioConfig &c)
                      { return std::string(c.array_gain_in_beta ? "true" : "false"); }},
                SATUL_REAL("debug_sigma_scale", debug_sigma_scale),
                SATUL_LIST("converge_powers_dbm", converge_powers_dbm),
            };
            return table;
        }

#undef SATUL_REAL
#undef SATUL_INT
#undef SATUL_LIST
    } // namespace

    void ScenarioConfig::validate() const
    {
        auto fail = [](const std::string &field, const std::string &msg)
        { throw config_error(field + ": " + msg); };
        try
        {
            link.validate();
        }
        catch (const error &e)
        {
            throw config_error(std::string("link budget: ") + e.what());
        }
        for (auto [name, g] : {std::pair{"sat", &sat}, std::pair{"ut", &ut}})
        {
            if (g->n_x < 1 || g->n_y < 1)
                fail(std::string(name) + "_nx/" + name + "_ny", "array sizes must be >= 1");
            if (!(g->spacing_x > 0.0) || !(g->spacing_y > 0.0))
                fail(std::string(name) + "_spacing_x_wl/" + name + "_spacing_y_wl", "spacings must be > 0");
        }
        if (!(theta_max_deg > 0.0) || theta_max_deg > 90.0)
            fail("theta_max_deg", "must be in (0, 90]");
        if (num_uts < 1)
            fail("num_uts", "must be >= 1");
        if (power_dbm.size() != 1 && int(power_dbm.size()) != num_uts)
            fail("power_dbm", "needs one value or num_uts values");
        if (kappa_db.size() != 1 && int(kappa_db.size()) != num_uts)
            fail("kappa_db", "needs one value or num_uts values");
        for (double p : power_dbm)
            if (!std::isfinite(p))
                fail("power_dbm", "values must be finite");
        for (double k : kappa_db)
            if (std::isnan(k))
                fail("kappa_db", "values must not be NaN");
        if (scatter_rank < 1 || scatter_rank > ut.size())
            fail("scatter_rank", "must be in [1, ut_nx * ut_ny]");
        if (report_samples < 1)
            fail("report_samples", "must be >= 1");
        if (!(debug_sigma_scale > 0.0))
            fail("debug_sigma_scale", "must be > 0");
        if (converge_powers_dbm.empty())
            fail("converge_powers_dbm", "must not be empty");
        try
        {
            solver.validate();
        }
        catch (const invalid_argument &e)
        {
            throw config_error(std::string("solver: ") + e.what());
        }
    }

    ScenarioConfig parse_config(const std::string &text)
    {
        std::map<std::string, const Field *> index;
        for (const auto &f : fields())
            index[f.name] = &f;

        ScenarioConfig cfg;
        std::set<std::string> seen;
        std::stringstream ss(text);
        std::string line;
        int lineno = 0;
        while (std::getline(ss, line))
        {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos)
                line = line.substr(0, hash);
            line = trim(line);
            if (line.empty())
                continue;
            auto eq = line.find('=');
            if (eq == std::string::npos)
                throw config_error("line " + std::to_string(lineno) + ": expected 'key = value'");
            std::string key = trim(line.substr(0, eq));
            std::string value = trim(line.substr(eq + 1));
            auto it = index.find(key);
            if (it == index.end())
                throw config_error("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
            if (!seen.insert(key).second)
                throw config_error("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
            it->second->set(cfg, value);
        }
        cfg.validate();
        return cfg;
    }

    ScenarioConfig load_config(const std::string &path)
    {
        std::ifstream in(path);
        if (!in)
            throw config_error("cannot read config file '" + path + "'");
        std::stringstream buf;
        buf << in.rdbuf();
        return parse_config(buf.str());
    }

    std::string serialize_config(const ScenarioConfig &cfg)
    {
        std::string out;
        for (const auto &f : fields())
            out += std::string(f.name) + " = " + f.get(cfg) + "\n";
        return out;
    }

    std::string config_hash(const ScenarioConfig &cfg)
    {
        // FNV-1a over the canonical text
        std::uint64_t h = 1469598103934665603ull;
        for (unsigned char ch : serialize_config(cfg))
        {
            h ^= ch;
            h *= 1099511628211ull;
        }
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }

    double kappa_linear(double kappa_db)
    {
        return kappa_db <= -300.0 ? 0.0 : db_to_linear(kappa_db);
    }

    Scenario build_scenario(const ScenarioConfig &cfg, bool check)
    {
        cfg.validate();
        Scenario sc;
        UplinkProblem &pb = sc.problem;
        pb.sigma2 = noise_variance(cfg.link);
        const double theta_max = cfg.theta_max_deg * pi / 180.0;
        const double array_gain = cfg.array_gain_in_beta ? double(cfg.sat.size()) * double(cfg.ut.size()) : 1.0;
        const int K = cfg.num_uts;
        for (int k = 0; k < K; ++k)
        {
            const auto id = std::uint64_t(k);
            UtGeometry geo;
            rng_stream pos(cfg.seed, {std::uint64_t(stream_tag::ut_position), id});
            geo.zeta = sample_ut_geometry(pos, theta_max);
            AnglePair at_sat = geo.zeta.to_angles();
            geo.elevation = elevation_angle(at_sat.polar, cfg.link);
            geo.distance_km = slant_distance_km(geo.elevation, cfg.link);
            rng_stream az(cfg.seed, {std::uint64_t(stream_tag::ut_azimuth), id});
            geo.azimuth = 2.0 * pi * az.uniform();
            // horizontal UT panel: LoS polar angle is the complement of the elevation
            AnglePair at_ut{geo.azimuth, pi / 2 - geo.elevation};

            UtStatistics st;
            st.id = id;
            st.g = sat_steering(cfg.sat, at_sat);
            st.d0 = ut_steering(cfg.ut, at_ut);
            rng_stream ev(cfg.seed, {std::uint64_t(stream_tag::scatter_eigenvalues), id});
            SigmaConstruction sig = build_sigma(cfg.ut, at_ut, cfg.scatter_rank, ev);
            st.sigma = sig.sigma * cplx(cfg.debug_sigma_scale);
            st.sigma_eigen = sig.eigen;
            if (cfg.debug_sigma_scale != 1.0)
                st.sigma_eigen->values *= cfg.debug_sigma_scale;
            st.kappa = kappa_linear(cfg.kappa_db.size() == 1 ? cfg.kappa_db[0] : cfg.kappa_db[std::size_t(k)]);
            st.beta = array_gain * link_budget(geo.distance_km, cfg.link);
            st.power_budget =
                dbm_to_watt(cfg.power_dbm.size() == 1 ? cfg.power_dbm[0] : cfg.power_dbm[std::size_t(k)]);
            pb.stats.push_back(std::move(st));
            sc.geometry.push_back(geo);
        }
        if (check)
            for (const auto &st : pb.stats)
                pb.factors.push_back(factorize(st));
        return sc;
    }

} // namespace satul
