#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kamred/approx_fn.hpp"
#include "kamred/arithmetics.hpp"
#include "kamred/driver.hpp"
#include "kamred/error.hpp"
#include "kamred/rotation.hpp"
#include "kamred/schedule.hpp"
#include "kamred/sl2.hpp"
#include "kamred/torus_map.hpp"

namespace kamred::io {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Strict JSON reading
// ---------------------------------------------------------------------------

/// Object view that remembers its path and rejects unread keys on close().
class Fields {
public:
    Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(path_, "expected an object");
    }

    [[noreturn]] static void fail(const std::string& path, const std::string& what) {
        throw Error(ErrorKind::Parse, "field '" + path + "': " + what);
    }

    [[nodiscard]] bool has(const std::string& key) const { return j_.contains(key); }
    [[nodiscard]] std::string path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json& at(const std::string& key) {
        if (!j_.contains(key)) fail(path(key), "missing required field");
        seen_.insert(key);
        return j_.at(key);
    }

    const json* get(const std::string& key) {
        if (!j_.contains(key)) return nullptr;
        seen_.insert(key);
        return &j_.at(key);
    }

    double number(const std::string& key) { return as_number(at(key), path(key)); }
    double number_or(const std::string& key, double fallback) {
        const json* v = get(key);
        return v ? as_number(*v, path(key)) : fallback;
    }
    int integer(const std::string& key) { return as_int(at(key), path(key)); }
    int integer_or(const std::string& key, int fallback) {
        const json* v = get(key);
        return v ? as_int(*v, path(key)) : fallback;
    }
    bool boolean_or(const std::string& key, bool fallback) {
        const json* v = get(key);
        if (!v) return fallback;
        if (!v->is_boolean()) fail(path(key), "expected a boolean");
        return v->get<bool>();
    }
    std::string string(const std::string& key) {
        const json& v = at(key);
        if (!v.is_string()) fail(path(key), "expected a string");
        return v.get<std::string>();
    }

    void close() const {
        for (const auto& [k, v] : j_.items())
            if (!seen_.count(k)) fail(path(k), "unknown field");
    }

    static double as_number(const json& v, const std::string& path) {
        if (!v.is_number()) fail(path, "expected a number");
        return v.get<double>();
    }
    static int as_int(const json& v, const std::string& path) {
        if (!v.is_number_integer()) fail(path, "expected an integer");
        return v.get<int>();
    }
    static std::vector<double> as_numbers(const json& v, const std::string& path) {
        if (!v.is_array()) fail(path, "expected an array of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_number(v[i], path + "[" + std::to_string(i) + "]"));
        return out;
    }
    static std::vector<int> as_ints(const json& v, const std::string& path) {
        if (!v.is_array()) fail(path, "expected an array of integers");
        std::vector<int> out;
        for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_int(v[i], path + "[" + std::to_string(i) + "]"));
        return out;
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

/// Parses JSON text, reporting syntax errors with line and column.
[[nodiscard]] inline json parse_json_text(const std::string& text, const std::string& source) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        std::size_t line = 1, col = 1;
        const std::size_t upto = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
        for (std::size_t i = 0; i < upto; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw Error(ErrorKind::Parse, source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + e.what());
    }
}

[[nodiscard]] inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Parse, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write '" + path + "'");
    out << text;
}

// ---------------------------------------------------------------------------
// Matrices, maps, approximation functions
// ---------------------------------------------------------------------------

[[nodiscard]] inline json real_matrix_json(const RealMat2& m) {
    return json::array({json::array({m(0, 0), m(0, 1)}), json::array({m(1, 0), m(1, 1)})});
}

[[nodiscard]] inline RealMat2 real_matrix_from_json(const json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 2) Fields::fail(path, "expected a 2x2 array");
    RealMat2 m;
    for (int i = 0; i < 2; ++i) {
        const auto row = Fields::as_numbers(j[i], path + "[" + std::to_string(i) + "]");
        if (row.size() != 2) Fields::fail(path, "expected a 2x2 array");
        m(i, 0) = row[0];
        m(i, 1) = row[1];
    }
    return m;
}

[[nodiscard]] inline json to_json(const TorusMap& f) {
    json coeffs = json::array();
    for (const auto& [k, c] : f.entries()) {
        json rec;
        rec["half_k"] = k.half_k();
        rec["re"] = real_matrix_json(c.real());
        rec["im"] = real_matrix_json(c.imag());
        coeffs.push_back(std::move(rec));
    }
    json out;
    out["dim"] = f.dim();
    out["coeffs"] = std::move(coeffs);
    out["reality_flag"] = f.is_real();
    out["truncation_debt"] = f.truncation_debt();
    if (f.truncation_debt() > 0.0 && std::isfinite(f.debt_radius())) out["debt_r"] = f.debt_radius();
    return out;
}

/// Accepts half_k (double-torus index) or k (integer index) per coefficient.
[[nodiscard]] inline TorusMap torus_map_from_json(const json& j, const std::string& path) {
    Fields fs(j, path);
    const int dim = fs.integer("dim");
    if (dim < 1 || dim > kMaxDim) Fields::fail(fs.path("dim"), "dimension must be in [1, 4]");
    const bool real = fs.boolean_or("reality_flag", true);
    const double debt = fs.number_or("truncation_debt", 0.0);
    const double debt_r = fs.number_or("debt_r", std::numeric_limits<double>::infinity());
    const json& arr = fs.at("coeffs");
    if (!arr.is_array()) Fields::fail(fs.path("coeffs"), "expected an array");
    std::vector<TorusMap::Entry> entries;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string p = fs.path("coeffs") + "[" + std::to_string(i) + "]";
        Fields rec(arr[i], p);
        FreqIndex k;
        if (rec.has("half_k") == rec.has("k")) Fields::fail(p, "give exactly one of half_k or k");
        if (rec.has("half_k")) {
            const auto h = Fields::as_ints(rec.at("half_k"), rec.path("half_k"));
            if (static_cast<int>(h.size()) != dim) Fields::fail(rec.path("half_k"), "length differs from dim");
            k = FreqIndex::from_half(h);
        } else {
            const auto m = Fields::as_ints(rec.at("k"), rec.path("k"));
            if (static_cast<int>(m.size()) != dim) Fields::fail(rec.path("k"), "length differs from dim");
            k = FreqIndex::from_integer(m);
        }
        const RealMat2 re = real_matrix_from_json(rec.at("re"), rec.path("re"));
        const RealMat2 im = rec.has("im") ? real_matrix_from_json(rec.at("im"), rec.path("im")) : RealMat2::Zero();
        rec.close();
        Mat2 c;
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) c(a, b) = cplx(re(a, b), im(a, b));
        entries.emplace_back(k, c);
    }
    fs.close();
    try {
        TorusMap f = TorusMap::from_entries(dim, std::move(entries), real);
        if (debt > 0.0) f.add_debt(debt, debt_r);
        return f;
    } catch (const Error& e) {
        Fields::fail(path, e.what());
    }
}

[[nodiscard]] inline json to_json(const ApproxFn& f) {
    auto term_json = [](const ApproxFn::Term& t) {
        json j;
        j["kind"] = to_string(t.kind);
        if (t.kind == ApproxFn::Kind::Tabulated)
            j["values"] = *t.table;
        else
            j["param"] = t.param;
        return j;
    };
    if (f.terms().size() == 1) return term_json(f.terms().front());
    json factors = json::array();
    for (const auto& t : f.terms()) factors.push_back(term_json(t));
    return json{{"kind", "product"}, {"factors", factors}};
}

[[nodiscard]] inline ApproxFn approx_fn_from_json(const json& j, const std::string& path) {
    Fields fs(j, path);
    const std::string kind = fs.string("kind");
    ApproxFn out = ApproxFn::power(1.0);
    try {
        if (kind == "power") {
            out = ApproxFn::power(fs.number("param"));
        } else if (kind == "exp_pow") {
            out = ApproxFn::exp_pow(fs.number("param"));
        } else if (kind == "exp_log") {
            out = ApproxFn::exp_log(fs.number("param"));
        } else if (kind == "tabulated") {
            out = ApproxFn::tabulated(Fields::as_numbers(fs.at("values"), fs.path("values")));
        } else if (kind == "product") {
            const json& fac = fs.at("factors");
            if (!fac.is_array() || fac.empty()) Fields::fail(fs.path("factors"), "expected a non-empty array");
            out = approx_fn_from_json(fac[0], fs.path("factors") + "[0]");
            for (std::size_t i = 1; i < fac.size(); ++i)
                out = ApproxFn::product(out, approx_fn_from_json(fac[i], fs.path("factors") + "[" + std::to_string(i) + "]"));
        } else {
            Fields::fail(fs.path("kind"), "unknown approximation function '" + kind + "'");
        }
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::Parse) throw;
        Fields::fail(path, e.what());
    }
    fs.close();
    return out;
}

[[nodiscard]] inline json to_json(const Verdict& v) {
    return json{{"name", v.name}, {"ok", v.ok}, {"lhs", v.lhs}, {"rhs", v.rhs}, {"log_scale", v.in_log}};
}

[[nodiscard]] inline json to_json(const std::vector<Verdict>& vs) {
    json out = json::array();
    for (const auto& v : vs) out.push_back(to_json(v));
    return out;
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct CosineTerm {
    IntVec m;
    double c = 0.0;  ///< contributes c cos(2 pi <m, theta>)
};

struct SchrodingerSpec {
    double E = 0.0;
    double V0 = 0.0;
    std::vector<CosineTerm> V;
};

enum class EpsMode { Value, Log, AutoDioph, AutoBrjuno, AutoNorm };

struct RotationSpec {
    double T = 1e4;
    double h = 1e-2;
    std::vector<double> theta0;  ///< empty means the origin
    double phi0 = 0.0;
};

struct AuditSpec {
    bool measure_rho = false;  ///< integrate rho(A + F) and check arithmetic and additivity
    int rho_scan_N = 1000;
    double additivity_tol = 0.0;  ///< added to twice the integrator's error estimate
};

struct RunConfig {
    std::vector<double> omega;
    std::optional<double> kappa;  ///< nullopt: fitted over |m| <= fit_N
    int fit_N = 200;
    double kappa_prime = 1.0;
    ApproxFn G = ApproxFn::power(2.0);
    ApproxFn g = ApproxFn::power(2.0);
    double r0 = 0.5;
    int n0 = 0;
    EpsMode eps_mode = EpsMode::Value;
    double eps_value = 1e-10;  ///< the value (Value) or its logarithm (Log)
    EpsPolicy policy = EpsPolicy::Operational;
    std::optional<double> a;
    double C_prime = 10.0;
    std::optional<SchrodingerSpec> schrodinger;
    RealMat2 A = RealMat2::Zero();
    std::optional<TorusMap> F;
    std::optional<double> F_norm;  ///< rescales F so that |F|_{r0} equals this
    int max_steps = 200;
    std::optional<double> cert_tol;
    int max_modes = TorusMap::kDefaultMaxModes;
    RotationSpec rotation;
    AuditSpec audit;
};

[[nodiscard]] inline RunConfig parse_config(const json& j) {
    Fields fs(j, "");
    RunConfig c;
    c.omega = Fields::as_numbers(fs.at("omega"), "omega");
    if (c.omega.empty() || c.omega.size() > static_cast<std::size_t>(kMaxDim))
        Fields::fail("omega", "dimension must be in [1, 4]");
    const json& kap = fs.at("kappa");
    if (kap.is_string()) {
        if (kap.get<std::string>() != "fit") Fields::fail("kappa", "expected a number or \"fit\"");
    } else {
        c.kappa = Fields::as_number(kap, "kappa");
        if (*c.kappa <= 0.0) Fields::fail("kappa", "must be positive");
    }
    c.fit_N = fs.integer_or("fit_N", c.fit_N);
    if (c.fit_N < 1) Fields::fail("fit_N", "must be at least 1");
    c.kappa_prime = fs.number("kappa_prime");
    if (c.kappa_prime <= 0.0) Fields::fail("kappa_prime", "must be positive");
    c.G = approx_fn_from_json(fs.at("G"), "G");
    c.g = approx_fn_from_json(fs.at("g"), "g");
    c.r0 = fs.number("r0");
    if (c.r0 <= 0.0) Fields::fail("r0", "must be positive");
    c.n0 = fs.integer_or("n0", 0);
    if (c.n0 < 0) Fields::fail("n0", "must be non-negative");

    const json& eps = fs.at("eps0");
    if (eps.is_string()) {
        const std::string s = eps.get<std::string>();
        if (s == "auto:dioph")
            c.eps_mode = EpsMode::AutoDioph;
        else if (s == "auto:brjuno-sum")
            c.eps_mode = EpsMode::AutoBrjuno;
        else if (s == "auto:norm")
            c.eps_mode = EpsMode::AutoNorm;
        else
            Fields::fail("eps0", "unknown rule '" + s + "'");
    } else if (eps.is_object()) {
        Fields e(eps, "eps0");
        c.eps_mode = EpsMode::Log;
        c.eps_value = e.number("log");
        e.close();
    } else {
        c.eps_mode = EpsMode::Value;
        c.eps_value = Fields::as_number(eps, "eps0");
        if (c.eps_value <= 0.0) Fields::fail("eps0", "must be positive");
    }
    if (const json* p = fs.get("eps_policy")) {
        if (!p->is_string()) Fields::fail("eps_policy", "expected a string");
        try {
            c.policy = eps_policy_from_string(p->get<std::string>());
        } catch (const Error& e) {
            Fields::fail("eps_policy", e.what());
        }
    }
    if (const json* a = fs.get("a")) c.a = Fields::as_number(*a, "a");
    c.C_prime = fs.number_or("C_prime", c.C_prime);

    Fields sys(fs.at("system"), "system");
    const std::string type = sys.string("type");
    if (type == "schrodinger") {
        SchrodingerSpec sp;
        sp.E = sys.number("E");
        sp.V0 = sys.number_or("V0", 0.0);
        if (const json* terms = sys.get("V")) {
            if (!terms->is_array()) Fields::fail("system.V", "expected an array");
            for (std::size_t i = 0; i < terms->size(); ++i) {
                const std::string p = "system.V[" + std::to_string(i) + "]";
                Fields t((*terms)[i], p);
                CosineTerm ct{Fields::as_ints(t.at("m"), p + ".m"), t.number("c")};
                t.close();
                if (ct.m.size() != c.omega.size()) Fields::fail(p + ".m", "length differs from omega");
                bool zero = true;
                for (int v : ct.m) zero = zero && v == 0;
                if (zero) Fields::fail(p + ".m", "the mean belongs in V0");
                sp.V.push_back(std::move(ct));
            }
        }
        c.schrodinger = std::move(sp);
    } else if (type == "matrix") {
        c.A = real_matrix_from_json(sys.at("A"), "system.A");
        if (const json* f = sys.get("F")) {
            c.F = torus_map_from_json(*f, "system.F");
            if (c.F->dim() != static_cast<int>(c.omega.size())) Fields::fail("system.F.dim", "differs from omega");
        }
    } else {
        Fields::fail("system.type", "expected \"schrodinger\" or \"matrix\"");
    }
    sys.close();

    if (const json* v = fs.get("F_norm")) {
        c.F_norm = Fields::as_number(*v, "F_norm");
        if (*c.F_norm < 0.0) Fields::fail("F_norm", "must be non-negative");
    }
    c.max_steps = fs.integer_or("max_steps", c.max_steps);
    if (c.max_steps < 0) Fields::fail("max_steps", "must be non-negative");
    if (const json* v = fs.get("cert_tol")) c.cert_tol = Fields::as_number(*v, "cert_tol");
    c.max_modes = fs.integer_or("max_modes", c.max_modes);
    if (c.max_modes < 1) Fields::fail("max_modes", "must be positive");

    if (const json* r = fs.get("rotation")) {
        Fields rs(*r, "rotation");
        c.rotation.T = rs.number_or("T", c.rotation.T);
        c.rotation.h = rs.number_or("h", c.rotation.h);
        if (const json* th = rs.get("theta0")) c.rotation.theta0 = Fields::as_numbers(*th, "rotation.theta0");
        c.rotation.phi0 = rs.number_or("phi0", 0.0);
        rs.close();
        if (!c.rotation.theta0.empty() && c.rotation.theta0.size() != c.omega.size())
            Fields::fail("rotation.theta0", "length differs from omega");
    }
    if (const json* a = fs.get("audit")) {
        Fields as(*a, "audit");
        c.audit.measure_rho = as.boolean_or("measure_rho", false);
        c.audit.rho_scan_N = as.integer_or("rho_scan_N", c.audit.rho_scan_N);
        c.audit.additivity_tol = as.number_or("additivity_tol", 0.0);
        as.close();
    }
    fs.close();
    return c;
}

[[nodiscard]] inline RunConfig parse_config_text(const std::string& text, const std::string& source = "config") {
    const json j = parse_json_text(text, source);
    try {
        return parse_config(j);
    } catch (const Error& e) {
        throw Error(ErrorKind::Parse, source + ": " + e.what());
    }
}

[[nodiscard]] inline RunConfig load_config(const std::string& path) { return parse_config_text(read_file(path), path); }

/// Normal form: every field written, defaults included, fitted kappa kept symbolic.
[[nodiscard]] inline json to_json(const RunConfig& c) {
    json j;
    j["omega"] = c.omega;
    j["kappa"] = c.kappa ? json(*c.kappa) : json("fit");
    j["fit_N"] = c.fit_N;
    j["kappa_prime"] = c.kappa_prime;
    j["G"] = to_json(c.G);
    j["g"] = to_json(c.g);
    j["r0"] = c.r0;
    j["n0"] = c.n0;
    switch (c.eps_mode) {
        case EpsMode::Value: j["eps0"] = c.eps_value; break;
        case EpsMode::Log: j["eps0"] = json{{"log", c.eps_value}}; break;
        case EpsMode::AutoDioph: j["eps0"] = "auto:dioph"; break;
        case EpsMode::AutoBrjuno: j["eps0"] = "auto:brjuno-sum"; break;
        case EpsMode::AutoNorm: j["eps0"] = "auto:norm"; break;
    }
    j["eps_policy"] = to_string(c.policy);
    if (c.a) j["a"] = *c.a;
    j["C_prime"] = c.C_prime;
    json sys;
    if (c.schrodinger) {
        sys["type"] = "schrodinger";
        sys["E"] = c.schrodinger->E;
        sys["V0"] = c.schrodinger->V0;
        json terms = json::array();
        for (const auto& t : c.schrodinger->V) terms.push_back(json{{"m", t.m}, {"c", t.c}});
        sys["V"] = std::move(terms);
    } else {
        sys["type"] = "matrix";
        sys["A"] = real_matrix_json(c.A);
        if (c.F) sys["F"] = to_json(*c.F);
    }
    j["system"] = std::move(sys);
    if (c.F_norm) j["F_norm"] = *c.F_norm;
    j["max_steps"] = c.max_steps;
    if (c.cert_tol) j["cert_tol"] = *c.cert_tol;
    j["max_modes"] = c.max_modes;
    json rot{{"T", c.rotation.T}, {"h", c.rotation.h}, {"phi0", c.rotation.phi0}};
    if (!c.rotation.theta0.empty()) rot["theta0"] = c.rotation.theta0;
    j["rotation"] = std::move(rot);
    j["audit"] = json{{"measure_rho", c.audit.measure_rho},
                      {"rho_scan_N", c.audit.rho_scan_N},
                      {"additivity_tol", c.audit.additivity_tol}};
    return j;
}

// ---------------------------------------------------------------------------
// Scenario assembly
// ---------------------------------------------------------------------------

/// A = [[0, V0 - E], [1, 0]], F = [[0, V - V0], [0, 0]].
[[nodiscard]] inline std::pair<Sl2, TorusMap> schrodinger_system(const SchrodingerSpec& sp, int dim) {
    const Sl2 a = Sl2::from_entries(0.0, sp.V0 - sp.E, 1.0);
    std::vector<TorusMap::Entry> entries;
    for (const auto& t : sp.V) {
        Mat2 c = Mat2::Zero();
        c(0, 1) = cplx(0.5 * t.c, 0.0);
        IntVec neg(t.m.size());
        for (std::size_t i = 0; i < t.m.size(); ++i) neg[i] = -t.m[i];
        entries.emplace_back(FreqIndex::from_integer(t.m), c);
        entries.emplace_back(FreqIndex::from_integer(neg), c);
    }
    return {a, TorusMap::from_entries(dim, std::move(entries), true)};
}

struct Scenario {
    Sl2 A;
    TorusMap F;
    ArithContext ctx;
    KamSchedule schedule;
    RunOptions options;
};

[[nodiscard]] inline std::vector<double> theta0_of(const RunConfig& c) {
    return c.rotation.theta0.empty() ? std::vector<double>(c.omega.size(), 0.0) : c.rotation.theta0;
}

[[nodiscard]] inline Scenario build_scenario(const RunConfig& c) {
    Scenario sc;
    const int dim = static_cast<int>(c.omega.size());
    sc.ctx.omega = c.omega;
    sc.ctx.G = c.G;
    sc.ctx.g = c.g;
    sc.ctx.kappa = c.kappa ? *c.kappa : fit_kappa(sc.ctx.om(), c.G, c.fit_N);

    if (c.schrodinger) {
        auto [a, f] = schrodinger_system(*c.schrodinger, dim);
        sc.A = a;
        sc.F = std::move(f);
    } else {
        sc.A = Sl2(c.A);
        sc.F = c.F ? *c.F : TorusMap::zero(dim);
    }
    if (c.F_norm) {
        const double norm = weighted_norm(sc.F, c.r0);
        if (norm > 0.0) sc.F = scale(sc.F, cplx(*c.F_norm / norm, 0.0));
    }

    ScheduleInputs in;
    in.kappa = sc.ctx.kappa;
    in.kappa_prime = c.kappa_prime;
    in.G = c.G;
    in.g = c.g;
    in.r0 = c.r0;
    in.n0 = c.n0;
    in.a = c.a;
    in.C_prime = c.C_prime;
    in.policy = c.policy;
    switch (c.eps_mode) {
        case EpsMode::Value: in.eps0 = c.eps_value; break;
        case EpsMode::Log: in.log_eps0 = c.eps_value; break;
        case EpsMode::AutoNorm: {
            const double norm = weighted_norm(sc.F, c.r0) + sc.F.truncation_debt();
            in.eps0 = norm > 0.0 ? norm : 1e-300;
            break;
        }
        case EpsMode::AutoDioph: {
            const bool both_power = c.G.kind() == ApproxFn::Kind::Power && c.g.kind() == ApproxFn::Kind::Power;
            if (!both_power) throw Error(ErrorKind::Parse, "field 'eps0': auto:dioph needs power-law G and g");
            const EpsValue v = smallness_explicit(SmallnessCase::dioph(c.G.param() + c.g.param()), sc.ctx.kappa, c.r0, c.n0);
            in.log_eps0 = v.log_eps0;
            break;
        }
        case EpsMode::AutoBrjuno: {
            const double a = c.a.value_or(1.0 - a_bar_of(ApproxFn::product(c.G, c.g)));
            in.log_eps0 = brjuno_sum_threshold(sc.ctx.kappa, c.r0, c.n0, a, c.G, c.g).value.log_eps0;
            break;
        }
    }
    sc.schedule = make_schedule(in);
    sc.options.max_steps = c.max_steps;
    if (c.cert_tol) sc.options.cert_tol = *c.cert_tol;
    sc.options.step.max_modes = c.max_modes;
    return sc;
}

/// The full system A + F as one map, for direct integration.
[[nodiscard]] inline TorusMap full_system(const Scenario& sc) { return add_constant(sc.F, sc.A.complex()); }

// ---------------------------------------------------------------------------
// Trace CSV
// ---------------------------------------------------------------------------

inline const char* const kTraceHeader =
    "n,r_n,N_n,eps_bound,F_norm,resonant,m,alpha_re,alpha_im,residual,contraction,step_residual,residual_tol,"
    "truncation_debt";

[[nodiscard]] inline std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

[[nodiscard]] inline std::string join_ints(const IntVec& m, char sep) {
    std::string s;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (i) s += sep;
        s += std::to_string(m[i]);
    }
    return s;
}

[[nodiscard]] inline std::string trace_csv(const RunTrace& t) {
    std::string out = std::string(kTraceHeader) + "\n";
    for (const auto& r : t.records) {
        out += std::to_string(r.n) + "," + fmt_double(r.r_n) + "," + std::to_string(r.N_n) + "," +
               fmt_double(r.eps_bound) + "," + fmt_double(r.F_norm) + "," + (r.resonant ? "1" : "0") + "," +
               join_ints(r.m, ';') + "," + fmt_double(r.alpha.real()) + "," + fmt_double(r.alpha.imag()) + "," +
               fmt_double(r.residual) + "," + fmt_double(r.contraction) + "," + fmt_double(r.step_residual) + "," +
               fmt_double(r.residual_tol) + "," + fmt_double(r.truncation_debt) + "\n";
    }
    return out;
}

namespace detail {

inline double parse_double(const std::string& s, int line, const char* col) {
    if (s.empty()) throw Error(ErrorKind::Parse, "trace line " + std::to_string(line) + ": empty " + col);
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size())
        throw Error(ErrorKind::Parse, "trace line " + std::to_string(line) + ": bad " + col + " '" + s + "'");
    return v;
}

inline int parse_int(const std::string& s, int line, const char* col) {
    const double v = parse_double(s, line, col);
    if (v != std::floor(v) || std::abs(v) > 2147483647.0)
        throw Error(ErrorKind::Parse, "trace line " + std::to_string(line) + ": " + col + " is not an integer");
    return static_cast<int>(v);
}

}  // namespace detail

/// Reads a trace written by trace_csv. The schedule supplies log eps_n.
[[nodiscard]] inline RunTrace parse_trace_csv(const std::string& text, const KamSchedule& s, int n0) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kTraceHeader) throw Error(ErrorKind::Parse, "trace: unexpected header");
    RunTrace t;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cols.push_back(cell);
        if (!line.empty() && line.back() == ',') cols.emplace_back();
        if (cols.size() != 14)
            throw Error(ErrorKind::Parse, "trace line " + std::to_string(lineno) + ": expected 14 columns");
        StepRecord r;
        r.n = detail::parse_int(cols[0], lineno, "n");
        if (r.n != static_cast<int>(t.records.size()))
            throw Error(ErrorKind::Parse, "trace line " + std::to_string(lineno) + ": n out of sequence");
        r.r_n = detail::parse_double(cols[1], lineno, "r_n");
        r.N_n = detail::parse_int(cols[2], lineno, "N_n");
        r.eps_bound = detail::parse_double(cols[3], lineno, "eps_bound");
        r.log_eps_bound = s.log_eps(r.n);
        r.F_norm = detail::parse_double(cols[4], lineno, "F_norm");
        const int res = detail::parse_int(cols[5], lineno, "resonant");
        if (res != 0 && res != 1)
            throw Error(ErrorKind::Parse, "trace line " + std::to_string(lineno) + ": resonant must be 0 or 1");
        r.resonant = res == 1;
        if (!cols[6].empty()) {
            std::istringstream ms(cols[6]);
            std::string v;
            while (std::getline(ms, v, ';')) r.m.push_back(detail::parse_int(v, lineno, "m"));
        }
        if (r.resonant && r.m.empty())
            throw Error(ErrorKind::Parse, "trace line " + std::to_string(lineno) + ": resonant row without m");
        r.alpha = cplx(detail::parse_double(cols[7], lineno, "alpha_re"), detail::parse_double(cols[8], lineno, "alpha_im"));
        r.residual = detail::parse_double(cols[9], lineno, "residual");
        r.contraction = detail::parse_double(cols[10], lineno, "contraction");
        r.step_residual = detail::parse_double(cols[11], lineno, "step_residual");
        r.residual_tol = detail::parse_double(cols[12], lineno, "residual_tol");
        r.truncation_debt = detail::parse_double(cols[13], lineno, "truncation_debt");
        if (r.resonant && r.n >= n0) ++t.resonances_after_n0;
        t.records.push_back(std::move(r));
    }
    if (t.records.empty()) throw Error(ErrorKind::Parse, "trace: no rows");
    return t;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

[[nodiscard]] inline json to_json(const Certificate& c) {
    json j;
    j["status"] = to_string(c.status);
    j["reason"] = c.reason;
    j["B"] = real_matrix_json(c.B.matrix());
    j["Z"] = to_json(c.Z);
    j["r_final"] = c.r_final;
    j["residual"] = c.residual;
    j["residual_bound"] = c.residual_bound;
    j["F_final_norm"] = c.F_final_norm;
    j["rotation_sum"] = c.rotation_sum;
    j["steps"] = c.steps;
    j["resonances_after_n0"] = c.resonances_after_n0;
    j["schedule_verdicts"] = to_json(c.schedule_verdicts);
    return j;
}

[[nodiscard]] inline json to_json(const StepOutput& o) {
    json j;
    j["A_next"] = real_matrix_json(o.A_next.matrix());
    j["F_next"] = to_json(o.F_next);
    j["Z_step"] = to_json(o.Z_step);
    j["r_next"] = o.r_next;
    j["resonant"] = o.resonant;
    j["m"] = o.m;
    j["alpha"] = json::array({o.alpha.real(), o.alpha.imag()});
    j["alpha_shifted"] = json::array({o.alpha_shifted.real(), o.alpha_shifted.imag()});
    j["residual_norm"] = o.residual_norm;
    j["residual_tol"] = o.residual_tol;
    j["contraction_observed"] = o.contraction_observed;
    j["contraction_bound"] = o.contraction_bound;
    j["F_norm"] = o.F_norm;
    j["F_next_norm"] = o.F_next_norm;
    j["F_tilde_norm"] = o.F_tilde_norm;
    j["X_norm"] = o.X_norm;
    j["Z_norm"] = o.Z_norm;
    j["phi_norm"] = o.phi_norm;
    j["p_cond"] = o.p_cond;
    j["series_terms"] = o.series_terms;
    j["truncation_debt"] = o.truncation_debt;
    j["preconditions"] = to_json(o.preconditions);
    j["postconditions"] = to_json(o.postconditions);
    j["preconditions_hold"] = o.preconditions_hold;
    return j;
}

[[nodiscard]] inline json schedule_json(const KamSchedule& s) {
    return json{{"kappa", s.kappa},     {"kappa_prime", s.kappa_prime}, {"r0", s.r0},   {"n0", s.n0},
                {"a", s.a},             {"a_bar", s.a_bar},             {"c0", s.c0},   {"eps0", s.eps0},
                {"log_eps0", s.log_eps0}, {"C_prime", s.C_prime},       {"policy", to_string(s.policy)},
                {"verdicts", to_json(s.verdicts)}};
}

[[nodiscard]] inline json to_json(const AuditReport& r) {
    return json{{"ok", r.ok}, {"items", to_json(r.items)}};
}

[[nodiscard]] inline json to_json(const RotationEstimate& e) {
    return json{{"rho", e.rho}, {"T", e.T}, {"h", e.h}, {"error_estimate", e.error_estimate}};
}

[[nodiscard]] inline std::string g_table_csv(const FitGResult& fit) {
    std::string out = "N,G,argmin_m\n";
    for (const auto& row : fit.rows)
        out += std::to_string(row.N) + "," + fmt_double(row.G) + "," + join_ints(row.argmin, ';') + "\n";
    return out;
}

}  // namespace kamred::io
