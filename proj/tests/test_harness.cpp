#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

#include <gtest/gtest.h>

#include "snls/harness/config.hpp"
#include "snls/harness/record.hpp"
#include "snls/harness/run.hpp"

using namespace snls;
using namespace snls::harness;
namespace fs = std::filesystem;

namespace {

std::string config_error_key(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.key();
    }
    return "<no error>";
}

fs::path temp_path(const std::string& name) { return fs::temp_directory_path() / ("snls_test_" + name); }

int run_cli(const std::string& args) {
    const std::string cmd = std::string(SNLS_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

const char* small_charge =
    "experiment = charge\n"
    "schemes = midpoint, implicit_euler\n"
    "M = 9\n"
    "tau = 2^-4, 2^-5\n"
    "T = 1\n"
    "n_paths = 6\n"
    "seed = 3\n";

} // namespace

TEST(Config, MinimalConfigGetsDefaults) {
    const auto c = parse_config("experiment = charge\ntau = 0.125\nT = 1\n");
    EXPECT_EQ(c.experiment, Experiment::charge);
    EXPECT_EQ(c.M, 19u);
    EXPECT_EQ(c.K, 30u);
    EXPECT_EQ(c.fp_tol, 1e-12);
    EXPECT_EQ(c.refinement, 4u);
    EXPECT_EQ(c.n_paths, 500u);
    ASSERT_EQ(c.eta.size(), 30u);
    EXPECT_DOUBLE_EQ(c.eta[1], 1.0 / 16);
    EXPECT_EQ(c.schemes, std::vector<Scheme>{Scheme::midpoint});
}

TEST(Config, GridKeys) {
    EXPECT_EQ(parse_config("experiment = hormander\nh = 0.05\n").M, 19u);
    EXPECT_EQ(parse_config("experiment = hormander\nh = 0.05\nM = 19\n").M, 19u);
    EXPECT_EQ(config_error_key("experiment = hormander\nh = 0.05\nM = 18\n"), "h");
    EXPECT_EQ(config_error_key("experiment = hormander\nh = 0.3\n"), "h");
    EXPECT_EQ(config_error_key("experiment = hormander\nM = 40\n"), "K");
}

TEST(Config, StepAndHorizonChecks) {
    EXPECT_EQ(config_error_key("experiment = charge\ntau = 0.3\nT = 1\n"), "T");
    EXPECT_EQ(config_error_key("experiment = charge\ntau = 2^-3, 0.3\nT = 1\n"), "T");
    EXPECT_EQ(config_error_key("experiment = charge\nT = 1\n"), "tau");
    EXPECT_EQ(config_error_key("experiment = charge\ntau = 0.5\n"), "T");
    EXPECT_EQ(config_error_key("experiment = charge\ntau = 1.5\nT = 3\n"), "tau");
    EXPECT_EQ(config_error_key("experiment = weak_order\ntau = 0.5, 0.25\nT = 1\n"), "tau");
    EXPECT_EQ(config_error_key("experiment = charge\nschemes = mp, em\ntau = 0.5\ntau.em = 0.3\nT = 1\n"), "T");
    EXPECT_EQ(config_error_key("experiment = longtime_weak\ntau = 0.5\nT = 2\ncheckpoints = 1, 0.75\n"),
              "checkpoints");
    EXPECT_EQ(config_error_key("experiment = longtime_weak\ntau = 0.5\nT = 2\ncheckpoints = 2, 1\n"), "checkpoints");
}

TEST(Config, KeyErrors) {
    EXPECT_EQ(config_error_key("experiment = charge\ntau = 0.5\nT = 1\ncolour = red\n"), "colour");
    EXPECT_EQ(config_error_key("experiment = charge\ntau = 0.5\ntau = 0.25\nT = 1\n"), "tau");
    EXPECT_EQ(config_error_key("experiment = dance\n"), "experiment");
    EXPECT_EQ(config_error_key("tau = 0.5\nT = 1\n"), "experiment");
    EXPECT_EQ(config_error_key("experiment = charge\ntau = 0.5\nT = one\n"), "T");
    EXPECT_EQ(config_error_key("experiment = charge\ntau = 0.5\nT = 1\nn_paths = -3\n"), "n_paths");
    EXPECT_EQ(config_error_key("experiment = charge\ntau = 0.5\nT = 1\nobservables = pnorm9\n"), "observables");
    EXPECT_EQ(config_error_key("experiment = charge\ntau = 0.5\nT = 1\ninitial = 6\n"), "initial");
    EXPECT_EQ(config_error_key("experiment = charge\ntau = 0.5\nT = 1\nT.rk4 = 2\n"), "T.rk4");
    EXPECT_EQ(config_error_key("experiment = charge\ntau = 0.5\nT = 1\nlambda = 2\n"), "lambda");
}

TEST(Config, ScopedOverridesAndComments) {
    const auto c = parse_config(
        "# leading comment\n"
        "experiment = ergodic   # trailing comment\n"
        "observables = pnorm3, exp_neg_pnorm4\n"
        "tau = 2^-6\n"
        "T = 20\n"
        "T.exp_neg_pnorm4 = 140\n"
        "tau.ie = 2^-4\n");
    EXPECT_EQ(c.T_for("pnorm3"), 20.0);
    EXPECT_EQ(c.T_for("exp_neg_pnorm4"), 140.0);
    EXPECT_EQ(c.taus_for(Scheme::midpoint).front(), 1.0 / 64);
    EXPECT_EQ(c.taus_for(Scheme::implicit_euler).front(), 1.0 / 16);
}

TEST(Config, ShippedConfigsAreValid) {
    int figures = 0;
    for (const auto& entry : fs::directory_iterator(SNLS_CONFIG_DIR)) {
        if (entry.path().extension() != ".cfg") continue;
        EXPECT_NO_THROW(load_config(entry.path().string())) << entry.path();
        figures += entry.path().filename().string().rfind("fig", 0) == 0;
    }
    EXPECT_EQ(figures, 4);
    for (const char* name : {"fig1_charge.cfg", "fig2_ergodic.cfg", "fig3_weak_order.cfg", "fig4_longtime.cfg"}) {
        EXPECT_TRUE(fs::exists(fs::path(SNLS_CONFIG_DIR) / name)) << name;
    }
    EXPECT_THROW(load_config("/nonexistent/x.cfg"), ConfigError);
}

TEST(Csv, EmptyRecordHasHeaderAndComments) {
    RunRecord rec;
    rec.config = parse_config("experiment = hormander\n");
    const std::string text = to_csv(rec);
    const auto data = parse_csv(text);
    EXPECT_TRUE(data.rows.empty());
    EXPECT_FALSE(data.comments.empty());
    EXPECT_NE(text.find("\nseries,x,value,stderr\n"), std::string::npos);
    EXPECT_NE(text.find("# experiment = hormander\n"), std::string::npos);
}

TEST(Csv, RoundTripIsBitwise) {
    RunRecord rec;
    rec.config = parse_config("experiment = hormander\n");
    rec.add("a", 0.1, 1.0 / 3.0, 2.220446049250313e-16);
    rec.add("b", std::ldexp(1.0, -13), -std::numbers::pi, 5e-324);
    rec.add("c", 1e300, std::numeric_limits<double>::infinity(), 0.0);
    const auto path = temp_path("roundtrip.csv");
    emit_csv(rec, path.string());
    const auto data = read_csv(path.string());
    ASSERT_EQ(data.rows.size(), rec.rows.size());
    for (std::size_t i = 0; i < rec.rows.size(); ++i) EXPECT_EQ(data.rows[i], rec.rows[i]);
    fs::remove(path);
}

TEST(Csv, UnwritablePathNamesThePath) {
    RunRecord rec;
    rec.config = parse_config("experiment = hormander\n");
    try {
        emit_csv(rec, "/nonexistent/dir/out.csv");
        FAIL();
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/out.csv"), std::string::npos);
    }
}

TEST(Csv, MalformedInputRejected) {
    EXPECT_THROW(parse_csv("a,b\n"), IoError);
    EXPECT_THROW(parse_csv("series,x,value,stderr\nx,1,2\n"), IoError);
    EXPECT_THROW(parse_csv("series,x,value,stderr\nx,1,zz,3\n"), IoError);
}

TEST(Run, Hormander) {
    const auto rec = run(parse_config("experiment = hormander\nM = 19\nK = 30\n"));
    EXPECT_NE(rec.summary.find("rank 37 < 2M = 38: FAIL"), std::string::npos);
    EXPECT_NE(rec.summary.find("with X_0: rank 38"), std::string::npos);
    ASSERT_EQ(rec.rows.size(), 3u);
    EXPECT_EQ(rec.rows[0].series, "rank");
    EXPECT_EQ(rec.rows[0].value, 37.0);
    EXPECT_EQ(rec.rows[1].series, "rank_with_drift");
    EXPECT_EQ(rec.rows[1].value, 38.0);
}

TEST(Run, ChargeSeriesAndDeterminism) {
    auto c = parse_config(small_charge);
    const auto a = run(c);
    c.threads = 4;
    const auto b = run(c);
    EXPECT_FALSE(a.failed);
    EXPECT_EQ(to_csv(a), to_csv(b));
    double worst_mp = 0.0, worst_ie = 0.0;
    std::size_t mp_rows = 0;
    for (const auto& r : a.rows) {
        if (r.series.rfind("midpoint/", 0) == 0) {
            worst_mp = std::max(worst_mp, std::abs(r.value));
            ++mp_rows;
        } else {
            worst_ie = std::max(worst_ie, std::abs(r.value));
        }
    }
    EXPECT_EQ(mp_rows, 17u + 33u);
    EXPECT_LE(worst_mp, 1e-12 * 10 * 32);
    EXPECT_GT(worst_ie, 1e-3);
}

TEST(Run, StepFailureGivesPartialRecord) {
    auto c = parse_config(std::string(small_charge) + "fp_max_iters = 1\n");
    const auto rec = run(c);
    EXPECT_TRUE(rec.failed);
    EXPECT_NE(rec.failure.find("did not converge"), std::string::npos);
    EXPECT_NE(to_csv(rec).find("# failure: "), std::string::npos);
}

TEST(Run, Ergodic) {
    const auto rec = run(parse_config(
        "experiment = ergodic\nM = 9\ninitial = 1, 2, 3\nobservables = pnorm3, sin_pnorm4\n"
        "tau = 2^-5\nT = 1\nT.sin_pnorm4 = 2\nn_paths = 4\nstride = 8\n"));
    std::size_t spreads = 0, p3_rows = 0, s4_rows = 0;
    for (const auto& r : rec.rows) {
        if (r.series.find(":spread") != std::string::npos) {
            ++spreads;
            EXPECT_GE(r.value, 0.0);
        } else if (r.series.find("/pnorm3/") != std::string::npos) {
            ++p3_rows;
        } else {
            ++s4_rows;
        }
    }
    EXPECT_EQ(spreads, 2u);
    EXPECT_EQ(p3_rows, 3u * 4u);
    EXPECT_EQ(s4_rows, 3u * 8u);
}

TEST(Run, WeakOrderRows) {
    const auto rec = run(parse_config(
        "experiment = weak_order\nM = 4\ninitial = 4\nrefinement = 2\ntau = 2^-3, 2^-4, 2^-5\nT = 0.25\n"
        "n_paths = 8\n"));
    std::size_t slopes = 0, points = 0;
    for (const auto& r : rec.rows) {
        slopes += r.series == "midpoint/pnorm3:slope";
        points += r.series == "midpoint/pnorm3";
    }
    EXPECT_EQ(slopes, 1u);
    EXPECT_EQ(points, 3u);
}

TEST(Run, LongtimeReportsEulerMaruyamaAborts) {
    const auto rec = run(parse_config(
        "experiment = longtime_weak\nschemes = mp, em\nM = 19\nrefinement = 1\ntau = 2^-5\nT = 2\n"
        "checkpoints = 0.5, 1, 1.5, 2\nn_paths = 4\n"));
    EXPECT_FALSE(rec.failed);
    bool em_aborted = false, mp_trend = false;
    for (const auto& r : rec.rows) {
        em_aborted = em_aborted || r.series == "euler_maruyama/pnorm3:aborted";
        mp_trend = mp_trend || r.series == "midpoint/pnorm3:trend";
    }
    EXPECT_TRUE(em_aborted);
    EXPECT_TRUE(mp_trend);
}

TEST(Run, Symplectic) {
    const auto rec = run(parse_config(
        "experiment = symplectic\nh = 0.1\ntau = 2^-10\nT = 2^-5\nn_paths = 2\nstride = 8\n"));
    ASSERT_FALSE(rec.failed);
    std::size_t n = 0;
    for (const auto& r : rec.rows) {
        if (r.series == "wedge_drift") {
            ++n;
            EXPECT_LE(r.value, 32 * 1e-9);
        } else {
            EXPECT_LE(r.value, 1e-8);
        }
    }
    EXPECT_EQ(n, 4u);
}

TEST(Cli, ExitCodes) {
    const auto good = temp_path("good.cfg"), bad = temp_path("bad.cfg"), failing = temp_path("fail.cfg");
    const auto out = temp_path("out.csv");
    write_file(good, "experiment = hormander\nM = 5\n");
    write_file(bad, "experiment = hormander\nM = 5\nbogus = 1\n");
    write_file(failing, std::string(small_charge) + "fp_max_iters = 1\n");
    EXPECT_EQ(run_cli("list-experiments"), 0);
    EXPECT_EQ(run_cli("verify " + good.string()), 0);
    EXPECT_EQ(run_cli("verify " + bad.string()), 1);
    EXPECT_EQ(run_cli("run " + bad.string()), 1);
    EXPECT_EQ(run_cli("run /nonexistent.cfg"), 1);
    EXPECT_EQ(run_cli("run " + good.string() + " --out " + out.string()), 0);
    EXPECT_TRUE(fs::exists(out));
    EXPECT_EQ(run_cli("run " + failing.string() + " --out " + out.string()), 2);
    EXPECT_EQ(run_cli("frobnicate"), 1);
    for (const auto& p : {good, bad, failing, out}) fs::remove(p);
}

TEST(Cli, StdoutIsPlainCsv) {
    const auto cfg = temp_path("stdout.cfg"), captured = temp_path("stdout.csv");
    write_file(cfg, "experiment = hormander\nM = 5\n");
    const std::string cmd = std::string(SNLS_CLI_PATH) + " run " + cfg.string() + " > " + captured.string() + " 2>/dev/null";
    ASSERT_EQ(WEXITSTATUS(std::system(cmd.c_str())), 0);
    std::ifstream in(captured, std::ios::binary);
    const std::string text(std::istreambuf_iterator<char>(in), {});
    const auto parsed = parse_csv(text);
    EXPECT_EQ(parsed.rows.size(), 3u);
    for (const auto& p : {cfg, captured}) fs::remove(p);
}

TEST(Cli, SeedAndThreadsFlags) {
    const auto cfg = temp_path("seed.cfg"), a = temp_path("a.csv"), b = temp_path("b.csv"), c = temp_path("c.csv");
    write_file(cfg, small_charge);
    ASSERT_EQ(run_cli("run " + cfg.string() + " --out " + a.string() + " --threads 1"), 0);
    ASSERT_EQ(run_cli("run " + cfg.string() + " --out " + b.string() + " --threads 8"), 0);
    ASSERT_EQ(run_cli("run " + cfg.string() + " --out " + c.string() + " --seed 4"), 0);
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    EXPECT_EQ(slurp(a), slurp(b));
    EXPECT_NE(slurp(a), slurp(c));
    EXPECT_NE(slurp(c).find("# seed = 4\n"), std::string::npos);
    for (const auto& p : {cfg, a, b, c}) fs::remove(p);
}
