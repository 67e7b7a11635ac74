#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "kamred/kamred.hpp"

namespace fs = std::filesystem;
using kamred::Error;
using kamred::ErrorKind;
using kamred::io::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitParse = 1;
constexpr int kExitStalled = 2;
constexpr int kExitFailed = 2;
constexpr int kExitPrecondition = 3;

std::mutex log_mutex;

void log_error(const std::string& msg) {
    std::lock_guard lock(log_mutex);
    std::cerr << "kamred: " << msg << "\n";
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

fs::path output_dir(const std::string& anchor_file, const std::string& out) {
    fs::path dir = out.empty() ? fs::absolute(anchor_file).parent_path() : fs::path(out);
    fs::create_directories(dir);
    return dir;
}

int exit_code(kamred::RunStatus s) {
    switch (s) {
        case kamred::RunStatus::Reduced: return kExitOk;
        case kamred::RunStatus::Stalled: return kExitStalled;
        case kamred::RunStatus::PreconditionFailure: return kExitPrecondition;
    }
    return kExitStalled;
}

int cmd_run(const std::string& config_path, const fs::path& dir) {
    kamred::io::RunConfig cfg;
    try {
        cfg = kamred::io::load_config(config_path);
    } catch (const Error& e) {
        log_error(e.what());
        return kExitParse;
    }
    json meta{{"tool", "kamred"}, {"config", fs::absolute(config_path).string()}, {"created_utc", utc_now()}};
    kamred::io::Scenario sc;
    try {
        sc = kamred::io::build_scenario(cfg);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::Parse) {
            log_error(e.what());
            return kExitParse;
        }
        log_error(std::string("setup failed: ") + e.what());
        kamred::io::write_file((dir / "certificate.json").string(),
                               json{{"status", "PreconditionFailure"}, {"reason", e.what()}}.dump(2) + "\n");
        kamred::io::write_file((dir / "run_meta.json").string(), meta.dump(2) + "\n");
        return kExitPrecondition;
    }
    const kamred::RunResult res = kamred::run(sc.A, sc.F, sc.ctx, sc.schedule, sc.options);
    json cert = kamred::io::to_json(res.certificate);
    cert["schedule"] = kamred::io::schedule_json(sc.schedule);
    kamred::io::write_file((dir / "trace.csv").string(), kamred::io::trace_csv(res.trace));
    kamred::io::write_file((dir / "certificate.json").string(), cert.dump(2) + "\n");
    meta["status"] = kamred::to_string(res.certificate.status);
    kamred::io::write_file((dir / "run_meta.json").string(), meta.dump(2) + "\n");
    if (res.certificate.status != kamred::RunStatus::Reduced)
        log_error(config_path + ": " + kamred::to_string(res.certificate.status) + " (" + res.certificate.reason + ")");
    return exit_code(res.certificate.status);
}

int cmd_run_batch(const std::string& batch_path, const std::string& out, int jobs) {
    std::vector<std::string> configs;
    try {
        const json j = kamred::io::parse_json_text(kamred::io::read_file(batch_path), batch_path);
        if (!j.is_array()) throw Error(ErrorKind::Parse, batch_path + ": expected an array of config paths");
        const fs::path base = fs::absolute(batch_path).parent_path();
        for (const auto& v : j) {
            if (!v.is_string()) throw Error(ErrorKind::Parse, batch_path + ": expected an array of config paths");
            const fs::path p(v.get<std::string>());
            configs.push_back((p.is_absolute() ? p : base / p).string());
        }
    } catch (const Error& e) {
        log_error(e.what());
        return kExitParse;
    }
    std::vector<int> codes(configs.size(), kExitOk);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < configs.size(); i = next++) {
            try {
                const fs::path dir = output_dir(configs[i], out) / fs::path(configs[i]).stem();
                fs::create_directories(dir);
                codes[i] = cmd_run(configs[i], dir);
            } catch (const std::exception& e) {
                log_error(configs[i] + ": " + e.what());
                codes[i] = kExitParse;
            }
        }
    };
    std::vector<std::thread> pool;
    const int n = std::max(1, std::min<int>(jobs, static_cast<int>(configs.size())));
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return codes.empty() ? kExitOk : *std::max_element(codes.begin(), codes.end());
}

json tail_json(const kamred::ApproxFn& f, double p) {
    try {
        const kamred::TailIntegral t = kamred::tail_integral(f, 1.0, p);
        return json{{"status", "finite"}, {"value", t.value}, {"error_bound", t.error_bound}, {"exponent", p}};
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::Divergent) throw;
        return json{{"status", "Divergent"}, {"exponent", p}};
    }
}

int cmd_check_arith(const std::string& config_path, int n, const std::string& out) {
    kamred::io::RunConfig cfg;
    try {
        cfg = kamred::io::load_config(config_path);
    } catch (const Error& e) {
        log_error(e.what());
        return kExitParse;
    }
    if (n < 1) {
        log_error("--N must be at least 1");
        return kExitParse;
    }
    const fs::path dir = output_dir(config_path, out);
    const kamred::Omega omega = cfg.omega;
    json report;
    report["N"] = n;
    std::vector<kamred::Verdict> conditions;

    double kappa = 0.0;
    try {
        kappa = cfg.kappa ? *cfg.kappa : kamred::fit_kappa(omega, cfg.G, cfg.fit_N);
    } catch (const Error&) {
        kappa = 0.0;
    }
    report["kappa"] = kappa;
    report["kappa_source"] = cfg.kappa ? "given" : "fit";
    if (kappa > 0.0) {
        const kamred::NrOmegaResult nr = kamred::check_nr_omega(omega, kappa, cfg.G, n);
        report["nr_omega"] = json{{"ok", nr.ok}, {"worst_m", nr.worst_m}, {"worst_log_ratio", nr.worst_log_ratio}};
        conditions.push_back({"nr_omega", nr.ok, 0.0, nr.worst_log_ratio, true});
    } else {
        report["nr_omega"] = json{{"ok", false}, {"reason", "no positive kappa: rationally dependent frequencies"}};
        conditions.push_back({"nr_omega", false, 0.0, -std::numeric_limits<double>::infinity(), true});
    }

    try {
        const kamred::FitGResult fit = kamred::fit_G(omega, n);
        kamred::io::write_file((dir / "G_table.csv").string(), kamred::io::g_table_csv(fit));
        report["fit_G_kappa"] = fit.kappa;
    } catch (const Error& e) {
        report["fit_G_error"] = e.what();
    }

    const json g_tail = tail_json(cfg.G, 2.0);
    const json gg_tail = tail_json(cfg.g, 1.5);
    report["G_tail_integral"] = g_tail;
    report["g_tail_integral"] = gg_tail;
    conditions.push_back({"G_brjuno", g_tail["status"] == "finite", 0.0, 0.0, false});
    conditions.push_back({"g_half_brjuno", gg_tail["status"] == "finite", 0.0, 0.0, false});

    const double t_min = std::max(1.0, static_cast<double>(cfg.n0));
    const kamred::RatioBound rb = kamred::ratio_bounded(cfg.g, cfg.G, t_min, std::max(2.0 * t_min, 1e6), 2000);
    report["ratio_bounded"] = json{{"bounded", rb.bounded}, {"log_sup_estimate", rb.log_sup_estimate}};
    conditions.push_back({"ratio_bounded", rb.bounded, rb.log_sup_estimate, 0.0, true});

    bool ok = true;
    for (const auto& c : conditions) ok = ok && c.ok;
    report["conditions"] = kamred::io::to_json(conditions);
    report["ok"] = ok;
    kamred::io::write_file((dir / "arith_report.json").string(), report.dump(2) + "\n");
    return ok ? kExitOk : kExitFailed;
}

int cmd_audit(const std::string& trace_path, const std::string& config_path, const std::string& out) {
    kamred::io::Scenario sc;
    kamred::io::RunConfig cfg;
    kamred::RunTrace trace;
    try {
        cfg = kamred::io::load_config(config_path);
        sc = kamred::io::build_scenario(cfg);
        trace = kamred::io::parse_trace_csv(kamred::io::read_file(trace_path), sc.schedule, sc.schedule.n0);
    } catch (const Error& e) {
        log_error(e.what());
        return kExitParse;
    }
    json report;
    std::optional<double> rho;
    if (cfg.audit.measure_rho) {
        const std::vector<double> theta0 = kamred::io::theta0_of(cfg);
        const kamred::RotationEstimate est = kamred::rotation_number(kamred::io::full_system(sc), cfg.omega, theta0,
                                                                     cfg.rotation.phi0, cfg.rotation.T, cfg.rotation.h);
        rho = est.rho;
        report["rotation"] = kamred::io::to_json(est);
        const double rho_b = std::abs(trace.records.back().alpha.imag());
        const kamred::AdditivityReport add = kamred::verify_additivity(
            est.rho, rho_b, trace, sc.schedule, cfg.omega, cfg.audit.additivity_tol + 2.0 * est.error_estimate);
        report["additivity"] = json{{"ok", add.ok},          {"rho_full", add.rho_full}, {"rho_B", add.rho_B},
                                    {"offset", add.offset},  {"mismatch", add.mismatch}, {"bound", add.bound},
                                    {"sign_full", add.sign_full}, {"sign_B", add.sign_B}};
    }
    kamred::AuditReport audit = kamred::resonance_budget_check(trace, sc.schedule, sc.ctx, rho, cfg.audit.rho_scan_N);
    if (report.contains("additivity")) {
        const bool ok = report["additivity"]["ok"].get<bool>();
        audit.items.push_back({"additivity", ok, report["additivity"]["mismatch"].get<double>(),
                               report["additivity"]["bound"].get<double>(), false});
        audit.ok = audit.ok && ok;
    }
    report["ok"] = audit.ok;
    report["items"] = kamred::io::to_json(audit.items);
    const fs::path dir = output_dir(trace_path, out);
    kamred::io::write_file((dir / "audit_report.json").string(), report.dump(2) + "\n");
    if (!audit.ok) {
        for (const auto& v : audit.items)
            if (!v.ok) log_error("audit failed: " + v.name);
    }
    return audit.ok ? kExitOk : kExitFailed;
}

int cmd_rotnum(const std::string& config_path, std::optional<double> T, std::optional<double> h) {
    kamred::io::RunConfig cfg;
    kamred::io::Scenario sc;
    try {
        cfg = kamred::io::load_config(config_path);
        sc = kamred::io::build_scenario(cfg);
    } catch (const Error& e) {
        log_error(e.what());
        return kExitParse;
    }
    try {
        const std::vector<double> theta0 = kamred::io::theta0_of(cfg);
        const kamred::RotationEstimate est =
            kamred::rotation_number(kamred::io::full_system(sc), cfg.omega, theta0, cfg.rotation.phi0,
                                    T.value_or(cfg.rotation.T), h.value_or(cfg.rotation.h));
        std::cout << kamred::io::to_json(est).dump(2) << "\n";
        return kExitOk;
    } catch (const Error& e) {
        log_error(e.what());
        return e.kind() == ErrorKind::InvalidArgument ? kExitParse : kExitFailed;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"KAM reducibility engine for quasi-periodic sl(2,R) cocycles"};
    app.require_subcommand(1);
    app.fallthrough();
    int jobs = 1;
    app.add_option("--jobs", jobs, "Worker threads for batch runs")->check(CLI::PositiveNumber);

    std::string config, out, batch, trace;
    int n = 0;
    std::optional<double> T, h;

    auto* run = app.add_subcommand("run", "Run the KAM iteration and write trace.csv and certificate.json");
    auto* run_cfg = run->add_option("--config", config, "Run configuration (JSON)");
    auto* run_batch = run->add_option("--batch", batch, "JSON array of configuration paths");
    run_cfg->excludes(run_batch);
    run->add_option("--out", out, "Output directory (default: next to the configuration)");

    auto* arith = app.add_subcommand("check-arith", "Check the arithmetic hypotheses of a configuration");
    arith->add_option("--config", config)->required();
    arith->add_option("--N", n, "Scan radius")->required();
    arith->add_option("--out", out);

    auto* audit = app.add_subcommand("audit", "Audit a run trace against the iteration invariants");
    audit->add_option("--trace", trace)->required();
    audit->add_option("--config", config)->required();
    audit->add_option("--out", out);

    auto* rotnum = app.add_subcommand("rotnum", "Rotation number of A + F by direct integration");
    rotnum->set_help_flag("--help", "Print this help message and exit");
    rotnum->add_option("--config", config)->required();
    rotnum->add_option("--T", T);
    rotnum->add_option("--h", h);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitParse;
    }

    try {
        if (*run) {
            if (!batch.empty()) return cmd_run_batch(batch, out, jobs);
            if (config.empty()) {
                log_error("run needs --config or --batch");
                return kExitParse;
            }
            return cmd_run(config, output_dir(config, out));
        }
        if (*arith) return cmd_check_arith(config, n, out);
        if (*audit) return cmd_audit(trace, config, out);
        if (*rotnum) return cmd_rotnum(config, T, h);
    } catch (const std::exception& e) {
        log_error(e.what());
        return kExitParse;
    }
    return kExitParse;
}
