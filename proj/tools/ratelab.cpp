#include "ratelab/experiments.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <iostream>

using namespace ratelab;

namespace {

int cmd_run(const std::string& path) {
    std::string msg;
    const int rc = run_config_file(path, &msg);
    (rc == 0 ? std::cout : std::cerr) << msg << '\n';
    return rc;
}

int cmd_verify_all(const std::string& out, std::uint64_t seed) {
    std::filesystem::create_directories(out);
    nlohmann::json index = nlohmann::json::array();
    bool all = true;
    const auto t0 = std::chrono::steady_clock::now();
    for (auto j : verify_all_configs(seed)) {
        const std::string name = j["name"];
        j["output"] = (std::filesystem::path(out) / name).string();
        const auto t1 = std::chrono::steady_clock::now();
        bool pass = false;
        std::string status;
        try {
            const ExperimentConfig cfg = parse_config(j);
            const ExperimentResult res = run_experiment(cfg);
            write_atomic(cfg.output + ".csv", csv_text(res.rows));
            write_atomic(cfg.output + ".json", res.summary.dump(2) + "\n");
            pass = res.pass;
            status = pass ? "PASS" : "FAIL";
            if (res.summary.contains("rate_report"))
                status += "  slope=" + format_double(res.summary["rate_report"]["slope"].get<double>()).substr(0, 6) +
                          " expected=" + format_double(res.summary["rate_report"]["expected"].get<double>()).substr(0, 6);
        } catch (const std::exception& e) {
            status = std::string("ERROR ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
        std::cout << name << ": " << status << "  (" << secs << " s)" << std::endl;
        all = all && pass;
        index.push_back({{"name", name}, {"pass", pass}, {"seconds", secs}});
    }
    const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_atomic((std::filesystem::path(out) / "verify_all.json").string(),
                 nlohmann::json{{"seed", seed}, {"runs", index}, {"seconds", total}}.dump(2) + "\n");
    std::cout << "total " << total << " s\n";
    return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ratelab: convergence-rate experiments for linear SPDEs"};
    app.require_subcommand(1);

    std::string config;
    auto* run = app.add_subcommand("run", "run one experiment from a JSON config");
    run->add_option("config", config, "config file")->required();

    std::string out;
    std::uint64_t seed = 20240607;
    auto* va = app.add_subcommand("verify-all", "run the default acceptance suite");
    va->add_option("--out", out, "output directory")->required();
    va->add_option("--seed", seed, "base seed");

    auto* ls = app.add_subcommand("list-experiments", "list experiment kinds");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    try {
        if (*run) return cmd_run(config);
        if (*va) return cmd_verify_all(out, seed);
        if (*ls) {
            for (const auto& k : experiment_kinds()) {
                ExperimentConfig c;
                c.experiment = k;
                std::cout << k << "\t" << theorem_for(c) << '\n';
            }
            return 0;
        }
    } catch (const NumericalFailure& e) {
        std::cerr << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << e.what() << '\n';
        return 1;
    }
    return 0;
}
