// experiment.hpp — JSON experiment configs, time-grid runs, CSV/JSON output
//
// A config names one bath (oscillator or spin), the coherent endpoints or
// spin sector, a time grid and a mode:
//
//   kernel     kernel.csv       kernel entries over the grid
//   verify     verify.csv       analytic vs oracle residuals
//              verify.json      {max_residual, pass, seed, ...}
//   dephasing  dephasing.csv    coherence ratio, analytic and oracle
//              dephasing.json
//   structure  structure.json   squeeze / rotation checks
//
// Exit codes: 0 pass, 1 usage or config error, 2 verification failure,
// 3 convergence or truncation failure.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "qnd/canonical_structure.hpp"
#include "qnd/core.hpp"
#include "qnd/oracle.hpp"
#include "qnd/oscillator_propagator.hpp"
#include "qnd/spin_propagator.hpp"

namespace qnd::experiment {

using json = nlohmann::json;

inline constexpr const char* kSchema = "qnd-propagator/1";

enum ExitCode : int { kPass = 0, kUsageError = 1, kVerificationFailed = 2, kConvergenceFailed = 3 };

enum class BathKind { Oscillator, Spin };
enum class Mode { Kernel, Verify, Dephasing, Structure };

inline const char* to_string(BathKind k) { return k == BathKind::Oscillator ? "oscillator" : "spin"; }

inline const char* to_string(Mode m) {
    switch (m) {
        case Mode::Kernel: return "kernel";
        case Mode::Verify: return "verify";
        case Mode::Dephasing: return "dephasing";
        case Mode::Structure: return "structure";
    }
    return "?";
}

inline std::optional<Mode> parse_mode(const std::string& s) {
    if (s == "kernel") return Mode::Kernel;
    if (s == "verify") return Mode::Verify;
    if (s == "dephasing") return Mode::Dephasing;
    if (s == "structure") return Mode::Structure;
    return std::nullopt;
}

struct TimeGrid {
    double t_start{0.0};
    double t_end{0.0};
    int n_points{1};

    std::vector<double> times() const {
        if (n_points == 1) return {t_start};
        std::vector<double> out(static_cast<std::size_t>(n_points));
        for (int i = 0; i < n_points; ++i)
            out[static_cast<std::size_t>(i)] = t_start + (t_end - t_start) * i / (n_points - 1);
        return out;
    }
};

struct ExperimentConfig {
    SystemParams system;
    BathKind bath_kind{BathKind::Oscillator};
    OscillatorBathSpec oscillator_bath;
    SpinBathSpec spin_bath;

    CoherentPoint alpha_bra;
    CoherentPoint alpha_ket;
    Complex nu_bra{0.0, 0.0};
    Complex nu_ket{0.0, 0.0};
    std::optional<SpinSector> sector;  // spin bath; empty = both

    TimeGrid grid;
    Tolerances tolerances;
    Mode mode{Mode::Kernel};

    std::uint64_t seed{0};
    int random_draws{0};
    double random_alpha_max{1.0};
    std::optional<double> verify_threshold;
    double residual_floor{1e-3};
    int quadrature_order{spin::kDefaultQuadratureOrder};
    Propagation propagation{spin::kDefaultPropagation};
    unsigned threads{0};

    std::size_t modes() const {
        return bath_kind == BathKind::Oscillator ? oscillator_bath.size() : spin_bath.size();
    }
    bool driven() const { return system.drive_omega.has_value(); }
    double threshold() const { return verify_threshold.value_or(10.0 * tolerances.rel_tol); }

    std::vector<SpinSector> sectors() const {
        if (sector) return {*sector};
        return {kSectors.begin(), kSectors.end()};
    }
};

// ------------------------------------------------------------- parsing --

namespace detail {

[[noreturn]] inline void fail(const std::string& path, const std::string& what) {
    throw ConfigurationError("config field '" + path + "': " + what);
}

inline void reject_unknown(const json& obj, const std::string& path, std::initializer_list<const char*> known) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        const bool ok = std::any_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; });
        if (!ok) fail(path.empty() ? it.key() : path + "." + it.key(), "unknown field");
    }
}

inline const json& object(const json& v, const std::string& path) {
    if (!v.is_object()) fail(path, "expected an object");
    return v;
}

inline double number(const json& v, const std::string& path) {
    if (!v.is_number()) fail(path, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) fail(path, "must be finite");
    return x;
}

inline long long integer(const json& v, const std::string& path) {
    if (!v.is_number_integer()) fail(path, "expected an integer");
    return v.get<long long>();
}

// A complex number is [re, im] or a bare real.
inline Complex complex_number(const json& v, const std::string& path) {
    if (v.is_number()) return {number(v, path), 0.0};
    if (!v.is_array() || v.size() != 2) fail(path, "expected [re, im]");
    return {number(v[0], path + "[0]"), number(v[1], path + "[1]")};
}

inline CoherentPoint coherent_point(const json& v, const std::string& path, std::size_t modes) {
    if (!v.is_array()) fail(path, "expected a list of [re, im] pairs");
    if (v.size() != modes)
        fail(path, "expected " + std::to_string(modes) + " entries (one per bath mode), got " +
                       std::to_string(v.size()));
    CoherentPoint p(static_cast<Eigen::Index>(modes));
    for (std::size_t k = 0; k < modes; ++k)
        p[static_cast<Eigen::Index>(k)] = complex_number(v[k], path + "[" + std::to_string(k) + "]");
    return p;
}

template <typename Fn>
void optional_field(const json& obj, const char* key, Fn&& fn) {
    if (obj.contains(key)) fn(obj.at(key));
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& root) {
    using namespace detail;
    ExperimentConfig c;
    object(root, "<root>");
    reject_unknown(root, "", {"schema", "system", "bath", "endpoints", "sector", "time_grid", "tolerances",
                              "mode", "seed", "random_draws", "random_alpha_max", "verify_threshold",
                              "residual_floor", "quadrature_order", "propagation", "threads"});

    if (!root.contains("schema")) fail("schema", "missing (expected \"" + std::string(kSchema) + "\")");
    if (!root["schema"].is_string() || root["schema"].get<std::string>() != kSchema)
        fail("schema", "expected \"" + std::string(kSchema) + "\"");

    // system
    if (!root.contains("system")) fail("system", "missing");
    const json& sys = object(root["system"], "system");
    reject_unknown(sys, "system", {"omega", "drive_omega"});
    if (!sys.contains("omega")) fail("system.omega", "missing");
    c.system.omega = number(sys["omega"], "system.omega");
    optional_field(sys, "drive_omega", [&](const json& v) {
        if (!v.is_null()) c.system.drive_omega = number(v, "system.drive_omega");
    });

    // bath
    if (!root.contains("bath")) fail("bath", "missing");
    const json& bath = object(root["bath"], "bath");
    reject_unknown(bath, "bath", {"kind", "modes"});
    if (!bath.contains("kind") || !bath["kind"].is_string()) fail("bath.kind", "expected \"oscillator\" or \"spin\"");
    const std::string kind = bath["kind"].get<std::string>();
    if (kind == "oscillator") c.bath_kind = BathKind::Oscillator;
    else if (kind == "spin") c.bath_kind = BathKind::Spin;
    else fail("bath.kind", "expected \"oscillator\" or \"spin\", got \"" + kind + "\"");
    const json modes = bath.contains("modes") ? bath["modes"] : json::array();
    if (!modes.is_array()) fail("bath.modes", "expected a list");
    for (std::size_t k = 0; k < modes.size(); ++k) {
        const std::string path = "bath.modes[" + std::to_string(k) + "]";
        const json& m = object(modes[k], path);
        reject_unknown(m, path, {"omega", "coupling"});
        if (!m.contains("omega")) fail(path + ".omega", "missing");
        if (!m.contains("coupling")) fail(path + ".coupling", "missing");
        const double w = number(m["omega"], path + ".omega");
        const double g = number(m["coupling"], path + ".coupling");
        if (c.bath_kind == BathKind::Oscillator) c.oscillator_bath.modes.push_back({w, g});
        else c.spin_bath.modes.push_back({w, g});
    }
    try {
        if (c.bath_kind == BathKind::Oscillator) validate_bath(c.oscillator_bath);
        else validate_bath(c.spin_bath);
    } catch (const ValidationError& e) {
        const auto& issue = e.issues().front();
        fail("bath.modes[" + std::to_string(issue.mode) + "]", issue.reason);
    }

    // endpoints
    const std::size_t m = c.modes();
    c.alpha_bra = CoherentPoint::Zero(static_cast<Eigen::Index>(m));
    c.alpha_ket = CoherentPoint::Zero(static_cast<Eigen::Index>(m));
    optional_field(root, "endpoints", [&](const json& v) {
        object(v, "endpoints");
        reject_unknown(v, "endpoints", {"alpha_bra", "alpha_ket", "nu_bra", "nu_ket"});
        if (c.bath_kind == BathKind::Spin && !v.empty()) fail("endpoints", "not used by a spin bath; use 'sector'");
        optional_field(v, "alpha_bra", [&](const json& a) { c.alpha_bra = coherent_point(a, "endpoints.alpha_bra", m); });
        optional_field(v, "alpha_ket", [&](const json& a) { c.alpha_ket = coherent_point(a, "endpoints.alpha_ket", m); });
        optional_field(v, "nu_bra", [&](const json& a) { c.nu_bra = complex_number(a, "endpoints.nu_bra"); });
        optional_field(v, "nu_ket", [&](const json& a) { c.nu_ket = complex_number(a, "endpoints.nu_ket"); });
    });
    if (!c.driven() && (c.nu_bra != Complex{} || c.nu_ket != Complex{}))
        fail("endpoints.nu_bra", "external-mode endpoints need system.drive_omega");
    if (c.driven() && c.bath_kind == BathKind::Spin) fail("system.drive_omega", "the spin bath has no external mode");

    optional_field(root, "sector", [&](const json& v) {
        if (v.is_null()) return;
        if (c.bath_kind != BathKind::Spin) fail("sector", "only used by a spin bath");
        const auto s = integer(v, "sector");
        if (s != 1 && s != -1) fail("sector", "expected 1 or -1");
        c.sector = sector_from_int(static_cast<int>(s));
    });

    // time grid
    if (!root.contains("time_grid")) fail("time_grid", "missing");
    const json& grid = object(root["time_grid"], "time_grid");
    reject_unknown(grid, "time_grid", {"t_start", "t_end", "n_points"});
    c.grid.t_start = grid.contains("t_start") ? number(grid["t_start"], "time_grid.t_start") : 0.0;
    c.grid.n_points = grid.contains("n_points") ? static_cast<int>(integer(grid["n_points"], "time_grid.n_points")) : 1;
    c.grid.t_end = grid.contains("t_end") ? number(grid["t_end"], "time_grid.t_end") : c.grid.t_start;
    if (c.grid.t_start < 0.0) fail("time_grid.t_start", "must be >= 0");
    if (c.grid.n_points < 1) fail("time_grid.n_points", "must be >= 1");
    if (c.grid.n_points > 1 && !(c.grid.t_end > c.grid.t_start))
        fail("time_grid.t_end", "must exceed t_start when n_points > 1");
    if (c.grid.n_points == 1 && c.grid.t_end < c.grid.t_start) fail("time_grid.t_end", "must be >= t_start");

    optional_field(root, "tolerances", [&](const json& v) {
        object(v, "tolerances");
        reject_unknown(v, "tolerances", {"rel_tol", "abs_tol", "max_fock", "max_dyson_order"});
        optional_field(v, "rel_tol", [&](const json& x) { c.tolerances.rel_tol = number(x, "tolerances.rel_tol"); });
        optional_field(v, "abs_tol", [&](const json& x) { c.tolerances.abs_tol = number(x, "tolerances.abs_tol"); });
        optional_field(v, "max_fock", [&](const json& x) {
            c.tolerances.max_fock = static_cast<int>(integer(x, "tolerances.max_fock"));
        });
        optional_field(v, "max_dyson_order", [&](const json& x) {
            c.tolerances.max_dyson_order = static_cast<int>(integer(x, "tolerances.max_dyson_order"));
        });
    });
    try {
        c.tolerances.validate();
    } catch (const ConfigurationError& e) {
        fail("tolerances", e.what());
    }

    optional_field(root, "mode", [&](const json& v) {
        if (!v.is_string()) fail("mode", "expected a string");
        const auto mode = parse_mode(v.get<std::string>());
        if (!mode) fail("mode", "expected kernel, verify, dephasing or structure");
        c.mode = *mode;
    });
    optional_field(root, "seed", [&](const json& v) {
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
            fail("seed", "expected a non-negative integer");
        c.seed = v.get<std::uint64_t>();
    });
    optional_field(root, "random_draws", [&](const json& v) {
        const auto n = integer(v, "random_draws");
        if (n < 0 || n > 10000) fail("random_draws", "expected 0..10000");
        c.random_draws = static_cast<int>(n);
    });
    optional_field(root, "random_alpha_max", [&](const json& v) {
        c.random_alpha_max = number(v, "random_alpha_max");
        if (c.random_alpha_max < 0.0) fail("random_alpha_max", "must be >= 0");
    });
    optional_field(root, "verify_threshold", [&](const json& v) {
        c.verify_threshold = number(v, "verify_threshold");
        if (!(*c.verify_threshold > 0.0)) fail("verify_threshold", "must be > 0");
    });
    optional_field(root, "residual_floor", [&](const json& v) {
        c.residual_floor = number(v, "residual_floor");
        if (!(c.residual_floor > 0.0)) fail("residual_floor", "must be > 0");
    });
    optional_field(root, "quadrature_order", [&](const json& v) {
        const auto q = integer(v, "quadrature_order");
        if (q < 1 || q > 512) fail("quadrature_order", "expected 1..512");
        c.quadrature_order = static_cast<int>(q);
    });
    optional_field(root, "propagation", [&](const json& v) {
        const std::string p = v.is_string() ? v.get<std::string>() : "";
        if (p == "forward") c.propagation = Propagation::Forward;
        else if (p == "backward") c.propagation = Propagation::Backward;
        else fail("propagation", "expected \"forward\" or \"backward\"");
    });
    optional_field(root, "threads", [&](const json& v) {
        const auto n = integer(v, "threads");
        if (n < 0 || n > 1024) fail("threads", "expected 0..1024");
        c.threads = static_cast<unsigned>(n);
    });
    return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigurationError(std::string("config is not valid JSON: ") + e.what());
    }
    return config_from_json(root);
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigurationError("cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

// ------------------------------------------------------------- output --

inline std::string format_number(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17e", x);
    return buf;
}

class CsvTable {
public:
    void column(std::string name) { header_.push_back(std::move(name)); }
    void complex_column(const std::string& name) {
        column(name + "_re");
        column(name + "_im");
    }
    std::size_t width() const noexcept { return header_.size(); }

    void add_row(std::vector<std::string> cells) {
        if (cells.size() != header_.size())
            throw Error("csv row has " + std::to_string(cells.size()) + " cells, header has " +
                        std::to_string(header_.size()));
        rows_.push_back(std::move(cells));
    }

    std::string str() const {
        std::string out;
        auto line = [&out](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) {
                if (i) out += ',';
                out += cells[i];
            }
            out += '\n';
        };
        line(header_);
        for (const auto& r : rows_) line(r);
        return out;
    }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

struct Row {
    std::vector<std::string> cells;
    void add(double x) { cells.push_back(format_number(x)); }
    void add(Complex z) {
        add(z.real());
        add(z.imag());
    }
    void add_int(long long n) { cells.push_back(std::to_string(n)); }
};

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigurationError("cannot write " + path.string());
    out << content;
}

// Evaluates fn(i) for i in [0, n) on a few threads; results are stored by
// index, so the output order never depends on scheduling.
template <typename Result, typename Fn>
std::vector<Result> evaluate_grid(std::size_t n, unsigned threads, Fn&& fn) {
    std::vector<Result> results(n);
    std::vector<std::exception_ptr> errors(n);
    unsigned workers = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
            try {
                results[i] = fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return results;
}

// ------------------------------------------------------------- runners --

struct RunResult {
    int exit_code{kPass};
    std::string message;
    std::vector<std::filesystem::path> files;
};

namespace detail {

inline const char* sector_tag(SpinSector s) { return s == SpinSector::Up ? "up" : "down"; }

inline json base_summary(const ExperimentConfig& c) {
    json j;
    j["schema"] = kSchema;
    j["mode"] = to_string(c.mode);
    j["bath"] = to_string(c.bath_kind);
    j["modes"] = c.modes();
    j["seed"] = c.seed;
    j["n_points"] = c.grid.n_points;
    j["rel_tol"] = c.tolerances.rel_tol;
    return j;
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

struct Endpoint {
    CoherentPoint bra;
    CoherentPoint ket;
    Complex nu_bra{0.0, 0.0};
    Complex nu_ket{0.0, 0.0};
};

// Draw 0 is the configured pair; further draws put the ket uniformly in a
// disk of radius random_alpha_max and the bra within 0.5 of the ket.
inline std::vector<Endpoint> endpoints(const ExperimentConfig& c) {
    std::vector<Endpoint> out{{c.alpha_bra, c.alpha_ket, c.nu_bra, c.nu_ket}};
    std::mt19937_64 rng(c.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto disk = [&](double radius) {
        const double r = radius * std::sqrt(unit(rng));
        const double a = 2.0 * std::numbers::pi * unit(rng);
        return std::polar(r, a);
    };
    const auto m = static_cast<Eigen::Index>(c.modes());
    for (int d = 0; d < c.random_draws; ++d) {
        Endpoint e{CoherentPoint(m), CoherentPoint(m)};
        for (Eigen::Index k = 0; k < m; ++k) {
            e.ket[k] = disk(c.random_alpha_max);
            e.bra[k] = e.ket[k] + disk(0.5);
        }
        if (c.driven()) {
            e.nu_ket = disk(c.random_alpha_max);
            e.nu_bra = e.nu_ket + disk(0.5);
        }
        out.push_back(std::move(e));
    }
    return out;
}

inline oscillator::OscillatorKernel oscillator_kernel(const ExperimentConfig& c, double t, const Endpoint& e) {
    if (c.driven())
        return oscillator::kernel_u2(c.system, c.oscillator_bath, t, std::conj(e.nu_bra), e.nu_ket,
                                     e.bra.conjugate(), e.ket);
    return oscillator::kernel_u1(c.system, c.oscillator_bath, t, e.bra.conjugate(), e.ket);
}

inline Complex analytic_element(const ExperimentConfig& c, double t, SpinSector s, const Endpoint& e) {
    if (c.driven())
        return oscillator::matrix_element_u2(c.system, c.oscillator_bath, t, s, e.nu_bra, e.nu_ket, e.bra, e.ket);
    return oscillator::matrix_element_u1(c.system, c.oscillator_bath, t, s, e.bra, e.ket);
}

inline json truncation_json(const oracle::OscillatorOracle& o) {
    json j;
    j["n_max"] = o.truncation().n_max;
    if (o.drive_levels()) j["drive_n_max"] = *o.drive_levels();
    return j;
}

// ---------------------------------------------------------------- kernel

inline RunResult run_kernel_oscillator(const ExperimentConfig& c, const std::filesystem::path& out_dir) {
    const auto times = c.grid.times();
    const Endpoint e{c.alpha_bra, c.alpha_ket, c.nu_bra, c.nu_ket};
    CsvTable table;
    table.column("t");
    table.complex_column("A");
    table.complex_column(c.driven() ? "B2" : "B");
    table.complex_column("bath_prefactor");
    if (c.driven()) table.complex_column("drive_prefactor");
    table.complex_column("down_entry");
    table.complex_column("up_entry");
    table.complex_column("element_up");
    table.complex_column("element_down");

    auto rows = evaluate_grid<Row>(times.size(), c.threads, [&](std::size_t i) {
        const double t = times[i];
        const auto p = oscillator::phases(c.system, c.oscillator_bath, t, e.bra.conjugate(), e.ket);
        const auto k = oscillator_kernel(c, t, e);
        Row r;
        r.add(t);
        r.add(p.A);
        r.add(p.B2.value_or(p.B));
        r.add(k.bath_prefactor);
        if (k.drive_prefactor) r.add(*k.drive_prefactor);
        r.add(k.down_entry);
        r.add(k.up_entry);
        r.add(oscillator::physical_matrix_element(k, SpinSector::Up, e.bra, e.ket, e.nu_bra, e.nu_ket));
        r.add(oscillator::physical_matrix_element(k, SpinSector::Down, e.bra, e.ket, e.nu_bra, e.nu_ket));
        return r;
    });
    for (auto& r : rows) table.add_row(std::move(r.cells));
    const auto path = out_dir / "kernel.csv";
    write_file(path, table.str());
    return {kPass, "kernel: " + std::to_string(times.size()) + " rows", {path}};
}

inline RunResult run_kernel_spin(const ExperimentConfig& c, const std::filesystem::path& out_dir) {
    const auto times = c.grid.times();
    const auto sectors = c.sectors();
    CsvTable table;
    table.column("t");
    for (auto s : sectors) {
        const std::string tag = sector_tag(s);
        table.complex_column(tag + "_system_phase");
        table.column(tag + "_order");
        table.column(tag + "_time_steps");
        table.column(tag + "_tail_bound");
        for (std::size_t k = 0; k < c.spin_bath.size(); ++k)
            for (const char* entry : {"u00", "u01", "u10", "u11"})
                table.complex_column(tag + "_m" + std::to_string(k) + "_" + entry);
    }

    auto rows = evaluate_grid<Row>(times.size(), c.threads, [&](std::size_t i) {
        const double t = times[i];
        Row r;
        r.add(t);
        for (auto s : sectors) {
            const auto k = spin::kernel_u3(c.system, c.spin_bath, s, t, c.tolerances, c.quadrature_order,
                                           c.propagation);
            long steps = 1;
            for (const auto& m : k.modes) steps = std::max(steps, m.time_steps);
            r.add(k.system_phase);
            r.add_int(k.order_used());
            r.add_int(steps);
            r.add(k.tail_bound());
            for (const auto& m : k.modes) {
                r.add(m.value(0, 0));
                r.add(m.value(0, 1));
                r.add(m.value(1, 0));
                r.add(m.value(1, 1));
            }
        }
        return r;
    });
    for (auto& r : rows) table.add_row(std::move(r.cells));
    const auto path = out_dir / "kernel.csv";
    write_file(path, table.str());
    return {kPass, "kernel: " + std::to_string(times.size()) + " rows", {path}};
}

// ---------------------------------------------------------------- verify

inline RunResult finish_verify(const ExperimentConfig& c, const std::filesystem::path& out_dir,
                               const CsvTable& table, double max_residual, json summary) {
    const bool pass = max_residual < c.threshold();
    summary["max_residual"] = max_residual;
    summary["threshold"] = c.threshold();
    summary["pass"] = pass;
    const auto csv = out_dir / "verify.csv";
    const auto js = out_dir / "verify.json";
    write_file(csv, table.str());
    write_file(js, dump(summary));
    return {pass ? kPass : kVerificationFailed,
            std::string("verify: ") + (pass ? "pass" : "FAIL") + ", max_residual = " + format_number(max_residual) +
                ", threshold = " + format_number(c.threshold()),
            {csv, js}};
}

inline RunResult run_verify_oscillator(const ExperimentConfig& c, const std::filesystem::path& out_dir) {
    const auto times = c.grid.times();
    const auto draws = endpoints(c);
    std::vector<oracle::OracleProbe> probes;
    for (const auto& e : draws) {
        probes.push_back({e.ket, e.nu_ket});
        probes.push_back({e.bra, e.nu_bra});
    }
    const auto o = oracle::adequate_oscillator_oracle(c.system, c.oscillator_bath, probes, times, c.tolerances,
                                                      c.driven());
    std::vector<std::pair<oracle::StateVector, oracle::StateVector>> states;
    for (const auto& e : draws)
        states.emplace_back(o.coherent_state(e.bra, e.nu_bra, c.tolerances.rel_tol),
                            o.coherent_state(e.ket, e.nu_ket, c.tolerances.rel_tol));

    CsvTable table;
    table.column("t");
    table.column("draw");
    for (auto s : kSectors) {
        const std::string tag = sector_tag(s);
        table.complex_column(tag + "_analytic");
        table.complex_column(tag + "_oracle");
        table.column(tag + "_residual");
    }
    struct Block {
        std::vector<Row> rows;
        double max_residual{0.0};
    };
    auto blocks = evaluate_grid<Block>(times.size(), c.threads, [&](std::size_t i) {
        const double t = times[i];
        Block b;
        for (std::size_t d = 0; d < draws.size(); ++d) {
            Row r;
            r.add(t);
            r.add_int(static_cast<long long>(d));
            for (auto s : kSectors) {
                const Complex a = analytic_element(c, t, s, draws[d]);
                const Complex ref = o.matrix_element(s, t, states[d].first, states[d].second);
                const double res = scaled_residual(a, ref, c.residual_floor);
                b.max_residual = std::max(b.max_residual, res);
                r.add(a);
                r.add(ref);
                r.add(res);
            }
            b.rows.push_back(std::move(r));
        }
        return b;
    });
    double max_residual = 0.0;
    for (auto& b : blocks) {
        max_residual = std::max(max_residual, b.max_residual);
        for (auto& r : b.rows) table.add_row(std::move(r.cells));
    }
    json summary = base_summary(c);
    summary["draws"] = draws.size();
    summary["driven"] = c.driven();
    summary["truncation"] = truncation_json(o);
    summary["n_max"] = o.truncation().n_max;
    summary["residual"] = "|analytic - oracle| / max(|oracle|, residual_floor)";
    summary["residual_floor"] = c.residual_floor;
    return finish_verify(c, out_dir, table, max_residual, std::move(summary));
}

inline RunResult run_verify_spin(const ExperimentConfig& c, const std::filesystem::path& out_dir) {
    const auto times = c.grid.times();
    const auto sectors = c.sectors();
    const oracle::SpinOracle o(c.system, c.spin_bath);

    CsvTable table;
    table.column("t");
    for (auto s : sectors) {
        const std::string tag = sector_tag(s);
        table.column(tag + "_residual");
        table.column(tag + "_tail_bound");
        table.column(tag + "_order");
        table.column(tag + "_unitarity_defect");
    }
    struct Point {
        Row row;
        double max_residual{0.0};
        double max_bound{0.0};
        int max_order{0};
    };
    auto points = evaluate_grid<Point>(times.size(), c.threads, [&](std::size_t i) {
        const double t = times[i];
        Point p;
        p.row.add(t);
        for (auto s : sectors) {
            const auto k = spin::kernel_u3(c.system, c.spin_bath, s, t, c.tolerances, c.quadrature_order,
                                           c.propagation);
            const Eigen::MatrixXcd u = k.sector_propagator();
            const double res = (u - o.sector_unitary(s, t, c.propagation)).cwiseAbs().maxCoeff();
            p.max_residual = std::max(p.max_residual, res);
            p.max_bound = std::max(p.max_bound, k.tail_bound());
            p.max_order = std::max(p.max_order, k.order_used());
            p.row.add(res);
            p.row.add(k.tail_bound());
            p.row.add_int(k.order_used());
            p.row.add(linalg::unitarity_defect(u));
        }
        return p;
    });
    double max_residual = 0.0, max_bound = 0.0;
    int max_order = 0;
    for (auto& p : points) {
        max_residual = std::max(max_residual, p.max_residual);
        max_bound = std::max(max_bound, p.max_bound);
        max_order = std::max(max_order, p.max_order);
        table.add_row(std::move(p.row.cells));
    }
    json summary = base_summary(c);
    summary["propagation"] = c.propagation == Propagation::Forward ? "forward" : "backward";
    summary["quadrature_order"] = c.quadrature_order;
    summary["max_order_used"] = max_order;
    summary["max_tail_bound"] = max_bound;
    summary["residual"] = "max entrywise |kernel - oracle| of the sector propagator";
    return finish_verify(c, out_dir, table, max_residual, std::move(summary));
}

// ------------------------------------------------------------- dephasing

struct DephasingPoint {
    Row row;
    double residual{0.0};
    double drift{0.0};
};

inline RunResult finish_dephasing(const ExperimentConfig& c, const std::filesystem::path& out_dir,
                                  std::vector<DephasingPoint>& points, json summary) {
    CsvTable table;
    for (const char* col : {"t", "magnitude", "phase", "oracle_magnitude", "oracle_phase", "oracle_rho_up_up",
                            "oracle_rho_down_down", "residual"})
        table.column(col);
    double max_residual = 0.0, max_drift = 0.0;
    for (auto& p : points) {
        max_residual = std::max(max_residual, p.residual);
        max_drift = std::max(max_drift, p.drift);
        table.add_row(std::move(p.row.cells));
    }
    const bool pass = max_residual < c.threshold() && max_drift < c.threshold();
    summary["max_residual"] = max_residual;
    summary["max_population_drift"] = max_drift;
    summary["threshold"] = c.threshold();
    summary["pass"] = pass;
    const auto csv = out_dir / "dephasing.csv";
    const auto js = out_dir / "dephasing.json";
    write_file(csv, table.str());
    write_file(js, dump(summary));
    return {pass ? kPass : kVerificationFailed,
            std::string("dephasing: ") + (pass ? "pass" : "FAIL") + ", max_residual = " +
                format_number(max_residual) + ", max_population_drift = " + format_number(max_drift),
            {csv, js}};
}

inline void fill_dephasing_row(DephasingPoint& p, double t, Complex ratio, const Eigen::Matrix2cd& rho) {
    const Complex oracle_ratio = rho(0, 1) / 0.5;
    p.row.add(t);
    p.row.add(std::abs(ratio));
    p.row.add(std::arg(ratio));
    p.row.add(std::abs(oracle_ratio));
    p.row.add(std::arg(oracle_ratio));
    p.row.add(rho(0, 0).real());
    p.row.add(rho(1, 1).real());
    p.residual = std::abs(ratio - oracle_ratio);
    p.row.add(p.residual);
    p.drift = std::max(std::abs(rho(0, 0) - 0.5), std::abs(rho(1, 1) - 0.5));
}

// Equal superposition of the system, bath in vacuum (drive mode in vacuum too).
inline RunResult run_dephasing_oscillator(const ExperimentConfig& c, const std::filesystem::path& out_dir) {
    const auto times = c.grid.times();
    const CoherentPoint vacuum = CoherentPoint::Zero(static_cast<Eigen::Index>(c.modes()));
    const oracle::OracleProbe probe{vacuum, {}};
    const auto o = oracle::adequate_oscillator_oracle(c.system, c.oscillator_bath, std::span(&probe, 1), times,
                                                      c.tolerances, c.driven());
    const oracle::StateVector bath_state = o.coherent_state(vacuum, {}, c.tolerances.rel_tol);
    const Eigen::Vector2cd plus = Eigen::Vector2cd::Constant(1.0 / std::sqrt(2.0));

    auto points = evaluate_grid<DephasingPoint>(times.size(), c.threads, [&](std::size_t i) {
        const double t = times[i];
        Complex ratio = oscillator::dephasing_factor(c.system, c.oscillator_bath, t);
        // The external mode adds -(W/2) sz, i.e. a relative phase e^{i W t}.
        if (c.driven()) ratio *= std::exp(kI * (*c.system.drive_omega * t));
        DephasingPoint p;
        fill_dephasing_row(p, t, ratio, o.reduced_density_matrix(plus, bath_state, t));
        return p;
    });
    json summary = base_summary(c);
    summary["initial_state"] = "equal superposition, bath vacuum";
    summary["truncation"] = truncation_json(o);
    return finish_dephasing(c, out_dir, points, std::move(summary));
}

// Equal superposition of the system, every bath spin in its sz = +1 state.
inline RunResult run_dephasing_spin(const ExperimentConfig& c, const std::filesystem::path& out_dir) {
    const auto times = c.grid.times();
    const oracle::SpinOracle o(c.system, c.spin_bath);
    const Eigen::Index dim = Eigen::Index{1} << c.spin_bath.size();
    const oracle::StateVector bath_state = oracle::StateVector::Unit(dim, 0);
    const Eigen::Vector2cd plus = Eigen::Vector2cd::Constant(1.0 / std::sqrt(2.0));

    auto points = evaluate_grid<DephasingPoint>(times.size(), c.threads, [&](std::size_t i) {
        const double t = times[i];
        auto branch = [&](SpinSector s) -> Eigen::VectorXcd {
            const auto k = spin::kernel_u3(c.system, c.spin_bath, s, t, c.tolerances, c.quadrature_order,
                                           Propagation::Forward);
            return k.sector_propagator().col(0);
        };
        const Complex ratio = branch(SpinSector::Down).dot(branch(SpinSector::Up));
        DephasingPoint p;
        fill_dephasing_row(p, t, ratio, o.reduced_density_matrix(plus, bath_state, t));
        return p;
    });
    json summary = base_summary(c);
    summary["initial_state"] = "equal superposition, bath spins up";
    return finish_dephasing(c, out_dir, points, std::move(summary));
}

// ------------------------------------------------------------- structure

inline json check_json(const structure::StructureCheck& ck, double t) {
    json j;
    j["t"] = t;
    j["claim"] = ck.claim;
    j["passed"] = ck.passed;
    j["residual"] = ck.residual;
    j["threshold"] = ck.threshold;
    if (!ck.detail.empty()) j["detail"] = ck.detail;
    return j;
}

inline RunResult run_structure(const ExperimentConfig& c, const std::filesystem::path& out_dir) {
    const auto times = c.grid.times();
    const Endpoint e{c.alpha_bra, c.alpha_ket, c.nu_bra, c.nu_ket};
    struct Point {
        std::vector<std::pair<std::string, structure::StructureReport>> reports;
    };
    auto points = evaluate_grid<Point>(times.size(), c.threads, [&](std::size_t i) {
        const double t = times[i];
        Point p;
        if (c.bath_kind == BathKind::Oscillator) {
            const auto ph = oscillator::phases(c.system, c.oscillator_bath, t, e.bra.conjugate(), e.ket);
            auto r = structure::oscillator_structure(oscillator_kernel(c, t, e), ph);
            r.append(structure::polar_structure(ph.B2.value_or(ph.B).real(), c.system.omega * t));
            p.reports.emplace_back("", std::move(r));
        } else {
            for (auto s : c.sectors()) {
                const auto k = spin::kernel_u3(c.system, c.spin_bath, s, t, c.tolerances, c.quadrature_order,
                                               c.propagation);
                p.reports.emplace_back(sector_tag(s), structure::spin_structure(k, c.system, c.spin_bath));
            }
        }
        return p;
    });
    json checks = json::array();
    bool pass = true;
    double worst = 0.0;  // largest residual / threshold
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (const auto& [tag, report] : points[i].reports) {
            pass = pass && report.passed();
            for (const auto& ck : report.checks) {
                json j = check_json(ck, times[i]);
                if (!tag.empty()) j["sector"] = tag;
                worst = std::max(worst, ck.residual / ck.threshold);
                checks.push_back(std::move(j));
            }
        }
    }
    json summary = base_summary(c);
    summary["pass"] = pass;
    summary["worst_residual_ratio"] = worst;
    summary["checks"] = std::move(checks);
    const auto path = out_dir / "structure.json";
    write_file(path, dump(summary));
    return {pass ? kPass : kVerificationFailed,
            std::string("structure: ") + (pass ? "pass" : "FAIL") + ", worst residual/threshold = " +
                format_number(worst),
            {path}};
}

}  // namespace detail

/// Runs the configured mode and writes its files into out_dir.
/// Numerical failures are reported through the exit code; configuration
/// problems throw ConfigurationError.
inline RunResult run(const ExperimentConfig& c, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw ConfigurationError("cannot create output directory " + out_dir.string() + ": " + ec.message());
    try {
        const bool osc = c.bath_kind == BathKind::Oscillator;
        switch (c.mode) {
            case Mode::Kernel:
                return osc ? detail::run_kernel_oscillator(c, out_dir) : detail::run_kernel_spin(c, out_dir);
            case Mode::Verify:
                return osc ? detail::run_verify_oscillator(c, out_dir) : detail::run_verify_spin(c, out_dir);
            case Mode::Dephasing:
                return osc ? detail::run_dephasing_oscillator(c, out_dir) : detail::run_dephasing_spin(c, out_dir);
            case Mode::Structure:
                return detail::run_structure(c, out_dir);
        }
    } catch (const ConvergenceError& e) {
        return {kConvergenceFailed, std::string(e.what()) + " (achieved bound " +
                                        format_number(e.achieved_bound()) + ")", {}};
    } catch (const TruncationError& e) {
        return {kConvergenceFailed, std::string(e.what()) + " (top-level population " +
                                        format_number(e.top_population()) + ")", {}};
    } catch (const CapacityError& e) {
        throw ConfigurationError(e.what());
    }
    throw ConfigurationError("unknown mode");
}

}  // namespace qnd::experiment
