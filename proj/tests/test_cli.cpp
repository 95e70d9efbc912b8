#include "ratelab/experiments.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

using namespace ratelab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Proc {
    int code = -1;
    std::string out;
};

Proc run_cli(const std::string& args) {
    const std::string cmd = std::string(RATELAB_BIN) + " " + args + " 2>&1";
    Proc p;
    FILE* f = popen(cmd.c_str(), "r");
    if (!f) return p;
    std::array<char, 4096> buf;
    while (fgets(buf.data(), int(buf.size()), f)) p.out += buf.data();
    const int st = pclose(f);
    p.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
    return p;
}

fs::path scratch(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("ratelab_cli_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d / name;
}

fs::path write_config(const std::string& name, json j) {
    const fs::path p = scratch(name + ".json");
    if (!j.contains("output")) j["output"] = scratch(name).string();
    std::ofstream(p) << j.dump();
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> v;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            v.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    v.push_back(cur);
    return v;
}

const json kTemporalWeak = {{"experiment", "temporal_weak"}, {"family", "wave"}, {"scheme", "crank_nicolson"},
                            {"gamma", 0.25}, {"beta", 0.7}, {"k_levels", {4, 10}}};

}  // namespace

TEST(Cli, ListExperimentsNamesEveryKindAndTheorem) {
    const Proc p = run_cli("list-experiments");
    ASSERT_EQ(p.code, 0);
    for (const auto& k : experiment_kinds()) {
        EXPECT_NE(p.out.find(k + "\t"), std::string::npos) << k;
        ExperimentConfig c;
        c.experiment = k;
        EXPECT_FALSE(theorem_for(c).empty());
    }
}

TEST(Cli, TemporalWeakExample) {
    const fs::path cfg = write_config("tw", kTemporalWeak);
    const Proc p = run_cli("run " + cfg.string());
    ASSERT_EQ(p.code, 0) << p.out;
    const std::string csv = slurp(scratch("tw.csv"));
    const auto lines = split(csv, '\n');
    ASSERT_EQ(lines.size(), 9u);  // header, 7 rows, trailing empty
    EXPECT_EQ(lines[0], "experiment,family,scheme,gamma,beta,J,h,k,n_paths,seed,error_kind,error_value,std_error");
    EXPECT_TRUE(lines.back().empty());
    for (int i = 1; i <= 7; ++i) EXPECT_EQ(split(lines[i], ',').size(), 13u);
    EXPECT_EQ(csv.find('\r'), std::string::npos);
    const json s = json::parse(slurp(scratch("tw.json")));
    const json& r = s.at("rate_report");
    EXPECT_NEAR(r.at("slope").get<double>(), 1.0, 0.1);
    EXPECT_NEAR(r.at("expected").get<double>(), 1.0, 1e-12);
    for (const char* key : {"points", "slope", "expected", "tolerance", "pass"}) EXPECT_TRUE(r.contains(key)) << key;
    EXPECT_EQ(s.at("theorem").get<std::string>().rfind("Theorem 4.7", 0), 0u);
    EXPECT_FALSE(fs::exists(scratch("tw.csv.tmp")));
}

TEST(Cli, CsvValuesRoundTrip) {
    const fs::path cfg = write_config("rt", kTemporalWeak);
    ASSERT_EQ(run_cli("run " + cfg.string()).code, 0);
    const auto lines = split(slurp(scratch("rt.csv")), '\n');
    for (std::size_t i = 1; i + 1 < lines.size(); ++i) {
        const auto f = split(lines[i], ',');
        const double v = std::stod(f[11]);
        EXPECT_EQ(format_double(v), f[11]);
    }
}

TEST(Cli, SameSeedIsByteIdentical) {
    json j = kTemporalWeak;
    j["J_ref"] = 16;
    j["k_levels"] = {3, 6};
    j["n_paths"] = 2000;
    j["threads"] = 3;
    j["output"] = scratch("rep1").string();
    const fs::path c1 = write_config("rep1", j);
    j["output"] = scratch("rep2").string();
    j["threads"] = 1;
    const fs::path c2 = write_config("rep2", j);
    ASSERT_EQ(run_cli("run " + c1.string()).code, 0);
    ASSERT_EQ(run_cli("run " + c2.string()).code, 0);
    const std::string a = slurp(scratch("rep1.csv")), b = slurp(scratch("rep2.csv"));
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, b);
}

TEST(Cli, InadmissibleBetaExitsTwo) {
    json j = kTemporalWeak;
    j["beta"] = 0.9;
    const Proc p = run_cli("run " + write_config("bad_beta", j).string());
    EXPECT_EQ(p.code, 2);
    EXPECT_NE(p.out.find("diverges"), std::string::npos) << p.out;
    EXPECT_NE(p.out.find("lambda_j^(beta-1) q_j"), std::string::npos) << p.out;
}

TEST(Cli, MarginBelowBetaStarEnforced) {
    json j = kTemporalWeak;
    j["beta"] = 0.74;
    EXPECT_EQ(run_cli("run " + write_config("thin_margin", j).string()).code, 2);
}

TEST(Cli, UnknownKeyExitsTwo) {
    json j = kTemporalWeak;
    j["colour"] = "blue";
    const Proc p = run_cli("run " + write_config("unknown_key", j).string());
    EXPECT_EQ(p.code, 2);
    EXPECT_NE(p.out.find("colour"), std::string::npos);
}

TEST(Cli, MalformedInputsExitTwo) {
    const fs::path p = scratch("garbage.json");
    std::ofstream(p) << "{ not json";
    EXPECT_EQ(run_cli("run " + p.string()).code, 2);
    EXPECT_EQ(run_cli("run " + scratch("missing.json").string()).code, 2);
    json j = kTemporalWeak;
    j["scheme"] = "explicit_euler";
    EXPECT_EQ(run_cli("run " + write_config("ee", j).string()).code, 2);
    j = kTemporalWeak;
    j["experiment"] = "nope";
    EXPECT_EQ(run_cli("run " + write_config("nope", j).string()).code, 2);
    EXPECT_EQ(run_cli("frobnicate").code, 2);
}

TEST(Config, ParseDefaultsAndKeys) {
    const ExperimentConfig c = parse_config(kTemporalWeak);
    EXPECT_EQ(c.k_lo, 4);
    EXPECT_EQ(c.k_hi, 10);
    EXPECT_EQ(c.family, Family::wave);
    EXPECT_THROW(parse_config(json{{"experiment", "holder"}, {"k_levels", {5, 2}}}), ConfigError);
    EXPECT_THROW(parse_config(json{{"experiment", "holder"}, {"gamma", "x"}}), ConfigError);
}

TEST(Config, BetaStar) {
    EXPECT_DOUBLE_EQ(beta_star(Family::wave, 0.25), 0.75);
    EXPECT_DOUBLE_EQ(beta_star(Family::heat, 0.0), 0.5);
    EXPECT_DOUBLE_EQ(beta_star(Family::chc, 0.0), 1.0);
    EXPECT_DOUBLE_EQ(beta_star(Family::chc, -1.0), 0.5);
    ExperimentConfig c = parse_config(json{{"experiment", "chc_weak"}, {"family", "chc"}, {"gamma", 0.0}, {"beta", 1.0}});
    EXPECT_NO_THROW(check_admissible(c));
    c.beta = 1.1;
    EXPECT_THROW(check_admissible(c), ConfigError);
}

TEST(Experiments, DoubledPathsShrinkStandardError) {
    json j = {{"experiment", "temporal_weak"}, {"scheme", "backward_euler"}, {"J_ref", 16},
              {"k_levels", {3, 6}}, {"n_paths", 4096}, {"psi_scale", 8.0}};
    auto se = [](const ExperimentResult& r) {
        std::vector<double> v;
        for (const auto& row : r.rows)
            if (row.error_kind == "weak_mc") v.push_back(row.std_error);
        return v;
    };
    const auto a = se(run_experiment(parse_config(j)));
    j["n_paths"] = 8192;
    const auto b = se(run_experiment(parse_config(j)));
    ASSERT_EQ(a.size(), 4u);
    ASSERT_EQ(b.size(), 4u);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i] / b[i], std::sqrt(2.0), 0.1 * std::sqrt(2.0));
}

TEST(Experiments, SummaryNamesTheoremForEveryKind) {
    for (const auto& j : verify_all_configs(1)) {
        const ExperimentConfig c = parse_config(j);
        EXPECT_FALSE(theorem_for(c).empty()) << c.name;
    }
}

TEST(Experiments, WriteAtomicReplaces) {
    const fs::path p = scratch("atomic.txt");
    write_atomic(p.string(), "one\n");
    write_atomic(p.string(), "two\n");
    EXPECT_EQ(slurp(p), "two\n");
    EXPECT_FALSE(fs::exists(p.string() + ".tmp"));
}
