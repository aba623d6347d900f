// Experiment orchestration behind the CLI: CSV ingestion, flat dotted-key
// configuration, the Stokes-law threshold derivation, and the run engine
// that produces the e-value table, GP path draws, and a reproducibility
// manifest.

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gpfbst/errors.hpp"
#include "gpfbst/fbst.hpp"
#include "gpfbst/gchi2.hpp"
#include "gpfbst/gp.hpp"
#include "gpfbst/hypothesis.hpp"
#include "gpfbst/measure.hpp"

namespace gpfbst {

inline constexpr const char* kVersion = "0.1.0";

// ----- dataset -----

struct DropletRecord {
    double t = 0.0;
    double radius = 0.0;
    std::optional<double> v_mean;
};

struct Dataset {
    std::vector<DropletRecord> records;  // file order
    bool has_v_mean = false;

    Vector t() const {
        Vector out(records.size());
        for (std::size_t i = 0; i < records.size(); ++i) out(i) = records[i].t;
        return out;
    }
    Vector radius() const {
        Vector out(records.size());
        for (std::size_t i = 0; i < records.size(); ++i) out(i) = records[i].radius;
        return out;
    }
    Vector v_mean() const {
        Vector out(records.size());
        for (std::size_t i = 0; i < records.size(); ++i)
            out(i) = records[i].v_mean.value_or(0.0);
        return out;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

inline double parse_double(const std::string& s, int line, const char* what) {
    const std::string t = trim(s);
    if (t.empty())
        throw ParseError(std::string("line ") + std::to_string(line) + ": empty " + what);
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size() || !std::isfinite(v))
        throw ParseError(std::string("line ") + std::to_string(line) + ": bad " + what +
                         " value '" + t + "'");
    return v;
}

}  // namespace detail

/** Read a `t,radius[,v_mean]` CSV. Records come back in file order. With
 *  droplet_checks, t must be nonnegative and radii must sit inside the
 *  0.5-20 plausibility band (values outside 3-9 only warn). */
inline Dataset load_dataset(const std::string& path, bool droplet_checks = false) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset '" + path + "'");

    Dataset d;
    std::string line;
    int lineno = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        if (!header_seen) {
            const auto cols = detail::split(t, ',');
            std::vector<std::string> names;
            for (const auto& c : cols) names.push_back(detail::trim(c));
            if (names.size() < 2 || names[0] != "t" || names[1] != "radius" ||
                (names.size() == 3 && names[2] != "v_mean") || names.size() > 3)
                throw ParseError("line " + std::to_string(lineno) +
                                 ": expected header 't,radius[,v_mean]'");
            d.has_v_mean = names.size() == 3;
            header_seen = true;
            continue;
        }
        const auto cols = detail::split(t, ',');
        if (cols.size() != (d.has_v_mean ? 3u : 2u))
            throw ParseError("line " + std::to_string(lineno) + ": expected " +
                             std::to_string(d.has_v_mean ? 3 : 2) + " fields, got " +
                             std::to_string(cols.size()));
        DropletRecord r;
        r.t = detail::parse_double(cols[0], lineno, "t");
        r.radius = detail::parse_double(cols[1], lineno, "radius");
        if (d.has_v_mean) r.v_mean = detail::parse_double(cols[2], lineno, "v_mean");
        if (droplet_checks) {
            if (r.t < 0.0)
                throw ParseError("line " + std::to_string(lineno) + ": negative time");
            if (r.radius < 0.5 || r.radius > 20.0)
                throw ParseError("line " + std::to_string(lineno) +
                                 ": radius outside the 0.5-20 plausibility band");
            if (r.radius < 3.0 || r.radius > 9.0)
                warn("line " + std::to_string(lineno) +
                     ": radius outside the typical 3-9 range");
        }
        d.records.push_back(r);
    }
    if (!header_seen) throw ParseError("line 1: missing header row");
    if (d.records.empty()) throw EmptyDataset("dataset '" + path + "' has no records");
    return d;
}

// ----- Stokes-law measurement-error threshold -----

struct StokesThreshold {
    double eps_inf = 0.0;  // sup-norm radius error bound
    double eps_l2 = 0.0;   // eps_inf / sqrt(n)
};

/** Propagate the terminal-velocity error band +-(delta + eta) through the
 *  Stokes radius formula r = sqrt(ks * v) and take the worst deviation from
 *  the recorded radii. */
inline StokesThreshold stokes_threshold(const Vector& t, const Vector& v_mean,
                                        const Vector& radii, double delta = 0.14,
                                        double eta = 0.3555, double ks = 8.446) {
    if (t.size() != v_mean.size() || t.size() != radii.size())
        throw DataError("stokes_threshold: series lengths disagree");
    if (t.size() == 0) throw EmptyDataset("stokes_threshold: empty series");

    const double band = delta + eta;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < t.size(); ++i) {
        const double low = v_mean(i) - band;
        if (low < 0.0) {
            std::ostringstream msg;
            msg << "stokes_threshold: v_mean - delta - eta is negative at t = " << t(i);
            throw NegativeRadicand(msg.str());
        }
        const double lo_dev = std::abs(std::sqrt(ks * low) - radii(i));
        const double hi_dev = std::abs(std::sqrt(ks * (v_mean(i) + band)) - radii(i));
        worst = std::max({worst, lo_dev, hi_dev});
    }
    StokesThreshold out;
    out.eps_inf = worst;
    out.eps_l2 = worst / std::sqrt(static_cast<double>(t.size()));
    return out;
}

// ----- configuration -----

struct PriorConfig {
    double mean_const = 6.0;
    KernelFamily kernel = KernelFamily::Exponential;
    double length_scale = 2.0;
    double amplitude = 1.0;
    double noise_var = 0.01;
};

struct PathsConfig {
    int count = 20;
    double lo = 0.0;
    double hi = 7.0;
    int points = 141;
};

struct StokesConfig {
    double delta = 0.14;
    double eta = 0.3555;
    double ks = 8.446;
};

struct MeasureConfig {
    enum class Kind { Auto, Uniform, Dp } kind = Kind::Auto;
    double tau = 1.0;
    double lo = 0.0, hi = 0.0;  // DP base range label
    bool has_range = false;
};

struct ExperimentConfig {
    std::string data_path;
    std::string grid = "continuous";  // "continuous", "lo:step:hi", or comma list
    PriorConfig prior;
    PathsConfig paths;
    StokesConfig stokes;
    std::vector<std::string> hypotheses = {"intercept+slope", "intercept-only"};
    std::string epsilon = "none";  // "none", "stokes", or a number
    MeasureConfig measure;
    double alpha = 0.05;
    std::uint64_t seed = 1;
    std::string output_dir = "out";
};

inline ExperimentConfig droplet_defaults(const std::string& data_path) {
    ExperimentConfig c;
    c.data_path = data_path;
    c.grid = "0:0.5:7";
    c.epsilon = "stokes";
    return c;
}

namespace detail {

inline double config_double(const std::string& key, const std::string& value) {
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (value.empty() || end != value.c_str() + value.size() || !std::isfinite(v))
        throw ConfigError("config key '" + key + "': bad number '" + value + "'");
    return v;
}

inline MeasureConfig parse_measure_spec(const std::string& value) {
    MeasureConfig m;
    if (value == "auto") {
        m.kind = MeasureConfig::Kind::Auto;
        return m;
    }
    if (value == "uniform") {
        m.kind = MeasureConfig::Kind::Uniform;
        return m;
    }
    if (value.rfind("dp:", 0) == 0) {
        const auto parts = split(value, ':');
        if (parts.size() != 2 && parts.size() != 4)
            throw ConfigError("measure spec '" + value + "': expected dp:TAU or dp:TAU:LO:HI");
        m.kind = MeasureConfig::Kind::Dp;
        m.tau = config_double("measure", parts[1]);
        if (!(m.tau > 0.0)) throw ConfigError("measure spec: tau must be positive");
        if (parts.size() == 4) {
            m.lo = config_double("measure", parts[2]);
            m.hi = config_double("measure", parts[3]);
            m.has_range = true;
        }
        return m;
    }
    throw ConfigError("unknown measure spec '" + value + "'");
}

}  // namespace detail

/** Apply one dotted-key setting; unknown keys are hard errors. */
inline void apply_config_entry(ExperimentConfig& c, const std::string& key,
                               const std::string& value) {
    if (key == "data_path") c.data_path = value;
    else if (key == "grid") c.grid = value;
    else if (key == "prior.mean_const") c.prior.mean_const = detail::config_double(key, value);
    else if (key == "prior.kernel") {
        if (value == "exponential") c.prior.kernel = KernelFamily::Exponential;
        else if (value == "squared-exponential")
            c.prior.kernel = KernelFamily::SquaredExponential;
        else throw ConfigError("prior.kernel must be exponential or squared-exponential");
    }
    else if (key == "prior.length_scale") c.prior.length_scale = detail::config_double(key, value);
    else if (key == "prior.amplitude") c.prior.amplitude = detail::config_double(key, value);
    else if (key == "prior.noise_var") c.prior.noise_var = detail::config_double(key, value);
    else if (key == "paths.count") c.paths.count = static_cast<int>(detail::config_double(key, value));
    else if (key == "paths.lo") c.paths.lo = detail::config_double(key, value);
    else if (key == "paths.hi") c.paths.hi = detail::config_double(key, value);
    else if (key == "paths.points") c.paths.points = static_cast<int>(detail::config_double(key, value));
    else if (key == "stokes.delta") c.stokes.delta = detail::config_double(key, value);
    else if (key == "stokes.eta") c.stokes.eta = detail::config_double(key, value);
    else if (key == "stokes.ks") c.stokes.ks = detail::config_double(key, value);
    else if (key == "hypotheses") {
        c.hypotheses.clear();
        for (const auto& part : detail::split(value, ',')) {
            const std::string name = detail::trim(part);
            if (!name.empty()) c.hypotheses.push_back(name);
        }
        if (c.hypotheses.empty()) throw ConfigError("hypotheses: empty list");
    }
    else if (key == "pragmatic.epsilon") c.epsilon = value;
    else if (key == "pragmatic.measure") c.measure = detail::parse_measure_spec(value);
    else if (key == "alpha") c.alpha = detail::config_double(key, value);
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(detail::config_double(key, value));
    else if (key == "output_dir") c.output_dir = value;
    else throw ConfigError("unknown config key '" + key + "'");
}

/** Flat dotted-key config file: `key = value` lines, '#' comments. */
inline void load_config_file(ExperimentConfig& c, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected 'key = value'");
        apply_config_entry(c, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
    }
}

inline void validate_config(const ExperimentConfig& c) {
    if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
    if (!(c.prior.noise_var > 0.0)) throw ConfigError("prior.noise_var must be positive");
    if (!(c.prior.length_scale > 0.0)) throw ConfigError("prior.length_scale must be positive");
    if (!(c.prior.amplitude > 0.0)) throw ConfigError("prior.amplitude must be positive");
    if (c.paths.count < 1 || c.paths.points < 2) throw ConfigError("paths settings out of range");
    if (c.epsilon != "none" && c.epsilon != "stokes") {
        if (!(detail::config_double("pragmatic.epsilon", c.epsilon) > 0.0))
            throw ConfigError("pragmatic.epsilon must be positive");
    }
    if (c.hypotheses.empty()) throw ConfigError("no hypotheses configured");
    if (c.data_path.empty()) throw ConfigError("data_path is required");
}

// ----- run engine -----

struct EvalueRow {
    std::string hypothesis;
    std::string domain;  // "finite" or "infinite"
    bool pragmatic = false;
    FbstOutcome outcome;
};

struct RunReport {
    Dataset dataset;              // file order, as loaded
    PointMatrix x;                // analysis order (sorted)
    Vector y;
    std::optional<Vector> v_sorted;
    std::optional<StokesThreshold> stokes;
    std::optional<double> epsilon;
    bool finite_domain = false;
    PointMatrix grid;             // finite domain points (when finite_domain)
    std::vector<EvalueRow> rows;
};

namespace detail {

// grid spec -> points; range endpoints/steps snap to observed covariates so
// exact-equality matching survives decimal parsing
inline Vector parse_grid_values(const std::string& spec) {
    const auto colon_parts = split(spec, ':');
    if (colon_parts.size() == 3) {
        const double lo = config_double("grid", trim(colon_parts[0]));
        const double step = config_double("grid", trim(colon_parts[1]));
        const double hi = config_double("grid", trim(colon_parts[2]));
        if (!(step > 0.0) || !(hi >= lo)) throw ConfigError("grid: bad range spec");
        const int count = static_cast<int>(std::llround((hi - lo) / step)) + 1;
        if (count < 1 || count > 100000) throw ConfigError("grid: range spec out of bounds");
        Vector g(count);
        for (int i = 0; i < count; ++i) g(i) = lo + i * step;
        return g;
    }
    const auto parts = split(spec, ',');
    Vector g(static_cast<Eigen::Index>(parts.size()));
    for (std::size_t i = 0; i < parts.size(); ++i)
        g(static_cast<Eigen::Index>(i)) = config_double("grid", trim(parts[i]));
    return g;
}

inline void snap_grid_to_data(Vector& grid, const Vector& t_obs) {
    for (Eigen::Index i = 0; i < grid.size(); ++i) {
        for (Eigen::Index j = 0; j < t_obs.size(); ++j) {
            const double tol = 1e-9 * std::max(1.0, std::abs(grid(i)));
            if (std::abs(grid(i) - t_obs(j)) <= tol) {
                grid(i) = t_obs(j);
                break;
            }
        }
    }
}

inline LinearBasis resolve_basis(const std::string& name, const PointMatrix& needed_points) {
    if (name == "intercept+slope") return intercept_slope();
    if (name == "intercept-only") return intercept_only();
    if (name.rfind("file:", 0) == 0) {
        const std::string path = name.substr(5);
        std::ifstream in(path);
        if (!in) throw DataError("cannot open basis file '" + path + "'");
        std::string line;
        std::vector<double> ts;
        std::vector<std::vector<double>> rows;
        int lineno = 0;
        bool header = false;
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            const std::string t = trim(line);
            if (t.empty()) continue;
            if (!header) {
                header = true;  // header names are free-form: t,b1,b2,...
                continue;
            }
            const auto cols = split(t, ',');
            if (cols.size() < 2)
                throw ParseError("basis file line " + std::to_string(lineno) +
                                 ": expected t plus at least one column");
            ts.push_back(parse_double(cols[0], lineno, "t"));
            std::vector<double> row;
            for (std::size_t i = 1; i < cols.size(); ++i)
                row.push_back(parse_double(cols[i], lineno, "basis value"));
            if (!rows.empty() && row.size() != rows.front().size())
                throw ParseError("basis file line " + std::to_string(lineno) +
                                 ": inconsistent column count");
            rows.push_back(row);
        }
        if (rows.empty()) throw EmptyDataset("basis file '" + path + "' has no rows");
        PointMatrix pts(static_cast<Eigen::Index>(ts.size()), 1);
        Matrix cols(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.front().size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            pts(static_cast<Eigen::Index>(i), 0) = ts[i];
            for (std::size_t j = 0; j < rows[i].size(); ++j)
                cols(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
        // snap table points onto the points the run actually needs
        for (Eigen::Index i = 0; i < pts.rows(); ++i)
            for (Eigen::Index j = 0; j < needed_points.rows(); ++j)
                if (std::abs(pts(i, 0) - needed_points(j, 0)) <=
                    1e-9 * std::max(1.0, std::abs(pts(i, 0))))
                    pts(i, 0) = needed_points(j, 0);
        return tabulated_basis(pts, cols, "file:" + path);
    }
    throw ConfigError("unknown hypothesis '" + name +
                      "' (expected intercept+slope, intercept-only, or file:PATH)");
}

}  // namespace detail

/** Execute the configured experiment: load, sort, derive epsilon, run every
 *  configured hypothesis through the applicable precise and pragmatic tests.
 *  File emission is separate (write_report). */
inline RunReport run_experiment(const ExperimentConfig& cfg, bool droplet_checks = false) {
    validate_config(cfg);
    RunReport rep;
    rep.dataset = load_dataset(cfg.data_path, droplet_checks);

    // analysis order: sort by covariate then response, so outputs do not
    // depend on the CSV row order
    std::vector<DropletRecord> sorted = rep.dataset.records;
    std::sort(sorted.begin(), sorted.end(), [](const DropletRecord& a, const DropletRecord& b) {
        if (a.t != b.t) return a.t < b.t;
        return a.radius < b.radius;
    });
    const auto n = static_cast<Eigen::Index>(sorted.size());
    rep.x = PointMatrix(n, 1);
    rep.y = Vector(n);
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        rep.x(i, 0) = sorted[static_cast<std::size_t>(i)].t;
        rep.y(i) = sorted[static_cast<std::size_t>(i)].radius;
        v(i) = sorted[static_cast<std::size_t>(i)].v_mean.value_or(0.0);
    }
    if (rep.dataset.has_v_mean) rep.v_sorted = v;

    if (rep.dataset.has_v_mean)
        rep.stokes = stokes_threshold(rep.x.col(0), *rep.v_sorted, rep.y, cfg.stokes.delta,
                                      cfg.stokes.eta, cfg.stokes.ks);

    if (cfg.epsilon == "stokes") {
        if (!rep.stokes)
            throw DataError("pragmatic.epsilon = stokes requires a v_mean column");
        rep.epsilon = rep.stokes->eps_l2;
    } else if (cfg.epsilon != "none") {
        rep.epsilon = detail::config_double("pragmatic.epsilon", cfg.epsilon);
    }

    rep.finite_domain = cfg.grid != "continuous";
    if (rep.finite_domain) {
        Vector g = detail::parse_grid_values(cfg.grid);
        detail::snap_grid_to_data(g, rep.x.col(0));
        rep.grid = points_1d(g);
        detail::require_distinct_rows(rep.grid, "grid");
    }

    GpPrior prior;
    prior.mean = constant_mean(cfg.prior.mean_const);
    prior.kernel = Kernel{cfg.prior.kernel, cfg.prior.length_scale, cfg.prior.amplitude};
    prior.noise_var = cfg.prior.noise_var;

    const CollapsedData data = collapse(rep.x, rep.y);
    const GpPosterior post_star = posterior(prior, rep.x, rep.y, data.unique_rows);
    GpPosterior post_grid;
    if (rep.finite_domain) post_grid = posterior(prior, rep.x, rep.y, rep.grid);

    // pragmatic measures: Auto = uniform over the grid for the finite test,
    // DP(1, base over the covariate range) for the infinite test
    auto finite_measure = [&]() -> CovariateMeasure {
        switch (cfg.measure.kind) {
            case MeasureConfig::Kind::Uniform:
            case MeasureConfig::Kind::Auto:
                return finite_uniform(rep.grid);
            case MeasureConfig::Kind::Dp: {
                std::ostringstream base;
                if (cfg.measure.has_range)
                    base << "U(" << cfg.measure.lo << "," << cfg.measure.hi << ")";
                return dp_predictive(cfg.measure.tau, rep.x, true, base.str());
            }
        }
        throw ConfigError("bad measure");
    };
    auto infinite_measure = [&]() -> CovariateMeasure {
        switch (cfg.measure.kind) {
            case MeasureConfig::Kind::Uniform:
                if (!rep.finite_domain)
                    throw ConfigError("measure 'uniform' needs a finite grid");
                return finite_uniform(rep.grid);
            case MeasureConfig::Kind::Auto: {
                std::ostringstream base;
                base << "U(" << rep.x.col(0).minCoeff() << "," << rep.x.col(0).maxCoeff()
                     << ")";
                return dp_predictive(1.0, rep.x, true, base.str());
            }
            case MeasureConfig::Kind::Dp: {
                std::ostringstream base;
                if (cfg.measure.has_range)
                    base << "U(" << cfg.measure.lo << "," << cfg.measure.hi << ")";
                return dp_predictive(cfg.measure.tau, rep.x, true, base.str());
            }
        }
        throw ConfigError("bad measure");
    };

    for (const auto& hyp : cfg.hypotheses) {
        const LinearBasis basis =
            detail::resolve_basis(hyp, rep.finite_domain ? rep.grid : data.unique_rows);

        if (rep.finite_domain) {
            EvalueRow row;
            row.hypothesis = basis.name;
            row.domain = "finite";
            row.pragmatic = false;
            row.outcome = test_linear_finite(post_grid, basis, cfg.alpha);
            rep.rows.push_back(row);

            if (rep.epsilon) {
                PragmaticSpec spec;
                spec.epsilon = *rep.epsilon;
                spec.measure = finite_measure();
                spec.basis = basis;
                EvalueRow prow;
                prow.hypothesis = basis.name;
                prow.domain = "finite";
                prow.pragmatic = true;
                prow.outcome = test_pragmatic_finite(post_grid, spec, cfg.alpha);
                rep.rows.push_back(prow);
            }
        }

        {
            EvalueRow row;
            row.hypothesis = basis.name;
            row.domain = "infinite";
            row.pragmatic = false;
            row.outcome = test_linear_infinite(data, rep.x, rep.y, basis, post_star, cfg.alpha);
            rep.rows.push_back(row);

            if (rep.epsilon) {
                PragmaticSpec spec;
                spec.epsilon = *rep.epsilon;
                spec.measure = infinite_measure();
                spec.basis = basis;
                EvalueRow prow;
                prow.hypothesis = basis.name;
                prow.domain = "infinite";
                prow.pragmatic = true;
                prow.outcome = test_pragmatic_infinite(data, post_star, spec, cfg.alpha);
                rep.rows.push_back(prow);
            }
        }
    }
    return rep;
}

// ----- report emission -----

namespace detail {

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace detail

inline std::string evalues_csv(const RunReport& rep) {
    std::ostringstream out;
    out << "hypothesis,domain_assumption,pragmatic,statistic,threshold,e_value,reject\n";
    for (const auto& row : rep.rows) {
        out << row.hypothesis << ',' << row.domain << ',' << (row.pragmatic ? 1 : 0) << ','
            << detail::fmt(row.outcome.statistic) << ',' << detail::fmt(row.outcome.threshold)
            << ',' << detail::fmt(row.outcome.e_value) << ','
            << (row.outcome.reject ? "true" : "false") << '\n';
    }
    return out.str();
}

inline std::string paths_csv(const PointMatrix& grid, const Vector& mean, const Matrix& paths) {
    std::ostringstream out;
    out << "t,mean";
    for (Eigen::Index p = 0; p < paths.rows(); ++p) out << ",path_" << (p + 1);
    out << '\n';
    for (Eigen::Index i = 0; i < grid.rows(); ++i) {
        out << detail::fmt(grid(i, 0)) << ',' << detail::fmt(mean(i));
        for (Eigen::Index p = 0; p < paths.rows(); ++p) out << ',' << detail::fmt(paths(p, i));
        out << '\n';
    }
    return out.str();
}

inline std::string manifest_text(const ExperimentConfig& cfg, const RunReport& rep) {
    std::ostringstream out;
    out << "library_version = " << kVersion << '\n';
    out << "data_path = " << cfg.data_path << '\n';
    out << "records = " << rep.dataset.records.size() << '\n';
    out << "grid = " << cfg.grid << '\n';
    out << "prior.mean_const = " << detail::fmt(cfg.prior.mean_const) << '\n';
    out << "prior.kernel = "
        << (cfg.prior.kernel == KernelFamily::Exponential ? "exponential"
                                                          : "squared-exponential")
        << '\n';
    out << "prior.length_scale = " << detail::fmt(cfg.prior.length_scale) << '\n';
    out << "prior.amplitude = " << detail::fmt(cfg.prior.amplitude) << '\n';
    out << "prior.noise_var = " << detail::fmt(cfg.prior.noise_var) << '\n';
    out << "hypotheses =";
    for (std::size_t i = 0; i < cfg.hypotheses.size(); ++i)
        out << (i ? "," : " ") << cfg.hypotheses[i];
    out << '\n';
    out << "pragmatic.epsilon = " << cfg.epsilon;
    if (rep.epsilon) out << " (resolved " << detail::fmt(*rep.epsilon) << ")";
    out << '\n';
    out << "pragmatic.measure = ";
    switch (cfg.measure.kind) {
        case MeasureConfig::Kind::Auto: out << "auto"; break;
        case MeasureConfig::Kind::Uniform: out << "uniform"; break;
        case MeasureConfig::Kind::Dp:
            out << "dp:" << detail::fmt(cfg.measure.tau);
            if (cfg.measure.has_range)
                out << ':' << detail::fmt(cfg.measure.lo) << ':' << detail::fmt(cfg.measure.hi);
            break;
    }
    out << '\n';
    if (rep.stokes) {
        out << "stokes.delta = " << detail::fmt(cfg.stokes.delta) << '\n';
        out << "stokes.eta = " << detail::fmt(cfg.stokes.eta) << '\n';
        out << "stokes.ks = " << detail::fmt(cfg.stokes.ks) << '\n';
        out << "stokes.eps_inf = " << detail::fmt(rep.stokes->eps_inf) << '\n';
        out << "stokes.eps_l2 = " << detail::fmt(rep.stokes->eps_l2) << '\n';
    }
    out << "alpha = " << detail::fmt(cfg.alpha) << '\n';
    out << "seed = " << cfg.seed << '\n';
    out << "paths.count = " << cfg.paths.count << '\n';
    out << "paths.grid = " << detail::fmt(cfg.paths.lo) << ':' << detail::fmt(cfg.paths.hi)
        << ':' << cfg.paths.points << '\n';
    out << "paths.seed.prior = " << cfg.seed << '\n';
    out << "paths.seed.posterior = " << (cfg.seed + 1) << '\n';
    return out.str();
}

namespace detail {

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << content;
}

}  // namespace detail

/** Emit evalues.csv, paths_prior.csv, paths_posterior.csv, and manifest.txt
 *  into cfg.output_dir (which must exist). */
inline void write_report(const ExperimentConfig& cfg, const RunReport& rep) {
    const std::string dir = cfg.output_dir;

    Vector dense(cfg.paths.points);
    const double step = (cfg.paths.hi - cfg.paths.lo) / (cfg.paths.points - 1);
    for (int i = 0; i < cfg.paths.points; ++i) dense(i) = cfg.paths.lo + i * step;
    const PointMatrix dense_grid = points_1d(dense);

    GpPrior prior;
    prior.mean = constant_mean(cfg.prior.mean_const);
    prior.kernel = Kernel{cfg.prior.kernel, cfg.prior.length_scale, cfg.prior.amplitude};
    prior.noise_var = cfg.prior.noise_var;

    GpPosterior prior_on_grid;
    prior_on_grid.grid = dense_grid;
    prior_on_grid.mean = eval_mean(prior.mean, dense_grid);
    prior_on_grid.cov = kernel_matrix(prior.kernel, dense_grid, dense_grid);

    const GpPosterior post_on_grid = posterior(prior, rep.x, rep.y, dense_grid);

    const Matrix prior_paths = draw_paths(prior_on_grid, cfg.paths.count, cfg.seed);
    const Matrix post_paths = draw_paths(post_on_grid, cfg.paths.count, cfg.seed + 1);

    detail::write_file(dir + "/evalues.csv", evalues_csv(rep));
    detail::write_file(dir + "/paths_prior.csv",
                       paths_csv(dense_grid, prior_on_grid.mean, prior_paths));
    detail::write_file(dir + "/paths_posterior.csv",
                       paths_csv(dense_grid, post_on_grid.mean, post_paths));
    detail::write_file(dir + "/manifest.txt", manifest_text(cfg, rep));
}

inline RunReport run_droplet(const ExperimentConfig& cfg) { return run_experiment(cfg, true); }
inline RunReport run_custom(const ExperimentConfig& cfg) { return run_experiment(cfg, false); }

}  // namespace gpfbst
