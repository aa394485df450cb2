// Command-line front end: run, verify, compare.
//
// Exit codes: 0 converged / all checks passed, 1 error or bad usage,
// 2 iteration limit, 3 verification failure.

#include "nemo/nemo.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <string>
#include <vector>

namespace {

nemo::ExperimentConfig load_with_overrides(const std::string& path, const std::vector<std::string>& sets) {
    nemo::ExperimentConfig cfg = nemo::load_config(path);
    for (const auto& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw nemo::InvalidConfig("--set expects key=value, got '" + kv + "'");
        nemo::apply_setting(cfg, nemo::detail::trim(kv.substr(0, eq)), nemo::detail::trim(kv.substr(eq + 1)));
    }
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-level Newton-type optimization experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;

    auto* run = app.add_subcommand("run", "solve one configured problem and write its trace CSV");
    run->add_option("config", config_path, "key=value configuration file")->required();
    run->add_option("--set", overrides, "override a config key (key=value), repeatable");

    std::string scope = "all";
    std::string report_csv;
    auto* verify = app.add_subcommand("verify", "run the randomized theory and operator audits");
    verify->add_option("scope", scope, "all | operators | theory");
    verify->add_option("--csv", report_csv, "also write the audit report as CSV");

    std::vector<std::string> variants;
    auto* compare = app.add_subcommand("compare", "run several solver variants from the same start");
    compare->add_option("config", config_path, "key=value configuration file")->required();
    compare->add_option("--variants", variants, "newton_only | nemo_direct | nemo_two_grid")->required();
    compare->add_option("--set", overrides, "override a config key (key=value), repeatable");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*run) {
            auto cfg = load_with_overrides(config_path, overrides);
            auto out = nemo::run_experiment(cfg);
            std::cout << "trace: " << out.csv_path << '\n' << out.summary() << '\n';
            return out.exit_code();
        }
        if (*verify) {
            if (scope.empty()) {
                std::cerr << "verify: scope must be all, operators or theory\n";
                return 1;
            }
            auto rep = nemo::verify_suite(scope);
            rep.write_text(std::cout);
            if (!report_csv.empty()) {
                std::ofstream os(report_csv, std::ios::binary);
                rep.write_csv(os);
            }
            const auto failed = rep.failures();
            std::cout << (failed.empty() ? "all checks passed" : std::to_string(failed.size()) + " check(s) failed")
                      << '\n';
            return failed.empty() ? 0 : 3;
        }
        if (*compare) {
            auto cfg = load_with_overrides(config_path, overrides);
            std::vector<nemo::Variant> parsed;
            for (const auto& v : variants) parsed.push_back(nemo::parse_variant(v));
            auto rows = nemo::compare_variants(cfg, parsed);
            nemo::write_comparison_table(std::cout, rows);
            return 0;
        }
    } catch (const nemo::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
