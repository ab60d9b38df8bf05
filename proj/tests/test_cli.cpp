#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct CliRun {
    int code = -1;
    std::string out;
};

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("flexris_cli_") + info->name() + "_" + std::to_string(::getpid()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    CliRun run(const std::string& args) const {
        const fs::path log = dir_ / "stdout.txt";
        const std::string cmd = std::string(FLEXRIS_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
        const int status = std::system(cmd.c_str());
        CliRun r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = slurp(log);
        return r;
    }

    static std::string slurp(const fs::path& p) {
        std::ifstream is(p, std::ios::binary);
        std::ostringstream ss;
        ss << is.rdbuf();
        return ss.str();
    }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    fs::path dir_;
};

std::vector<std::vector<std::string>> read_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream is(text);
    for (std::string line; std::getline(is, line);) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
        rows.push_back(cells);
    }
    return rows;
}

std::string field(const std::string& out, const std::string& key) {
    const auto at = out.find(key + "=");
    if (at == std::string::npos) return {};
    const auto start = at + key.size() + 1;
    return out.substr(start, out.find_first_of(" \n", start) - start);
}

}  // namespace

TEST_F(Cli, GenerateSmallDataset) {
    const auto r = run("generate --seed 3 --s 100 --sigma 0 -o " + path("a.fris"));
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_EQ(field(r.out, "samples"), "100");
    EXPECT_EQ(field(r.out, "input_dim"), "25");
    EXPECT_NE(r.out.find("#   train.samples = 100"), std::string::npos) << "effective config is printed";
    EXPECT_EQ(fs::file_size(path("a.fris")), 24u + 100u * 30u * 8u);
    EXPECT_TRUE(fs::exists(path("a.fris.scaler")));

    const auto again = run("generate --seed 3 --s 100 --sigma 0 --threads 1 -o " + path("b.fris"));
    ASSERT_EQ(again.code, 0);
    EXPECT_EQ(field(r.out, "checksum"), field(again.out, "checksum"));
    EXPECT_EQ(slurp(path("a.fris")), slurp(path("b.fris")));
}

TEST_F(Cli, TrainIsReproducible) {
    ASSERT_EQ(run("generate --seed 4 --s 120 --sigma 0.8 -o " + path("d.fris")).code, 0);
    const std::string base = "train --seed 4 --set train.hidden=16 --max-epochs 2 -d " + path("d.fris");
    const auto a = run(base + " -o " + path("m1.frnn") + " --history " + path("h1.csv"));
    ASSERT_EQ(a.code, 0) << a.out;
    const auto b = run(base + " --threads 2 -o " + path("m2.frnn") + " --history " + path("h2.csv"));
    ASSERT_EQ(b.code, 0) << b.out;
    EXPECT_EQ(slurp(path("m1.frnn")), slurp(path("m2.frnn")));
    const auto hist = read_csv(slurp(path("h1.csv")));
    ASSERT_EQ(hist.size(), 3u);
    EXPECT_EQ(hist[0][0], "epoch");
    EXPECT_EQ(hist[1][3], "1");
    EXPECT_EQ(hist[1][4], "1");
}

TEST_F(Cli, FitNlsSynthesized) {
    const auto flat = run("fit-nls --seed 1 --synthesize 0 -o " + path("flat.csv"));
    ASSERT_EQ(flat.code, 0) << flat.out;
    const auto rows = read_csv(slurp(path("flat.csv")));
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0][0], "a_yy");
    for (int p = 0; p < 5; ++p) EXPECT_EQ(std::stod(rows[1][static_cast<std::size_t>(p)]), 0.0);

    const auto full = run("fit-nls --seed 1 --synthesize 0.4 --scheme full -o " + path("full.csv"));
    ASSERT_EQ(full.code, 0) << full.out;
    const auto fr = read_csv(slurp(path("full.csv")));
    ASSERT_EQ(fr.size(), 2u);
    EXPECT_LT(std::stod(fr[1][5]), 1e-10);
}

TEST_F(Cli, FitNlsCorruptTable) {
    std::ofstream(path("bad.csv")) << "k,x,y,z,omega_1\n1,10,2,-5,not-a-number\n";
    EXPECT_EQ(run("fit-nls --table " + path("bad.csv")).code, 2);
    EXPECT_EQ(run("fit-nls --table " + path("missing.csv")).code, 2);
}

TEST_F(Cli, SweepShape) {
    ASSERT_EQ(run("generate --seed 5 --s 60 -o " + path("d.fris")).code, 0);
    ASSERT_EQ(run("train --seed 5 --set train.hidden=8 --max-epochs 1 -d " + path("d.fris") + " -o " + path("m.frnn")).code, 0);
    const auto r = run("sweep --seed 5 --kind sigma -m " + path("m.frnn") + " --values 0,0.5 --trials 3 -o " + path("s.csv"));
    ASSERT_EQ(r.code, 0) << r.out;
    const auto rows = read_csv(slurp(path("s.csv")));
    ASSERT_EQ(rows.size(), 7u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"sweep_value", "design", "mean_snr_db", "stderr_db", "trials"}));
    EXPECT_EQ(rows[6][1], "oracle");
    EXPECT_EQ(rows[6][4], "3");

    const auto e = run("sweep --seed 5 --kind error -m " + path("m.frnn") + " --values 0,0.2 --trials 2 -o " + path("e.csv"));
    ASSERT_EQ(e.code, 0) << e.out;
    EXPECT_EQ(read_csv(slurp(path("e.csv"))).size(), 7u);
}

TEST_F(Cli, PatternIsSymmetricWithPeakAtTarget) {
    const auto r = run("pattern --axis y --span 0.5 --step 0.05 -o " + path("p.csv"));
    ASSERT_EQ(r.code, 0) << r.out;
    const auto rows = read_csv(slurp(path("p.csv")));
    ASSERT_EQ(rows.size(), 22u);
    std::map<long, double> db;
    for (std::size_t i = 1; i < rows.size(); ++i) db[std::lround(std::stod(rows[i][0]) * 100)] = std::stod(rows[i][5]);
    EXPECT_NEAR(db.at(0), 0.0, 1e-12);
    for (const auto& [k, v] : db) EXPECT_LE(v, 1e-12) << "offset " << k;
    EXPECT_LE(db.at(50), -10.0);
    EXPECT_LE(db.at(-50), -10.0);
}

TEST_F(Cli, EvaluateWithoutModel) {
    const auto r = run("evaluate --coeffs 0,0,0,0,0 --target 10,2,-5 -o " + path("ev.csv"));
    ASSERT_EQ(r.code, 0) << r.out;
    const auto rows = read_csv(slurp(path("ev.csv")));
    ASSERT_GE(rows.size(), 3u);
    EXPECT_EQ(rows[0][0], "design");
}

TEST_F(Cli, InvalidArguments) {
    EXPECT_EQ(run("").code, 1);
    EXPECT_EQ(run("frobnicate").code, 1);
    EXPECT_EQ(run("generate --s abc").code, 1);
    EXPECT_EQ(run("generate --set train.bogus=1 -o " + path("x.fris")).code, 1);
    EXPECT_EQ(run("generate --set train.samples=0 -o " + path("x.fris")).code, 1);
    EXPECT_EQ(run("fit-nls").code, 1);
    EXPECT_EQ(run("pattern --axis q").code, 1);
    EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, ConfigFile) {
    std::ofstream(path("exp.cfg")) << "# small run\ntrain.samples = 15\ntrain.sigma = 0.3\n";
    const auto r = run("--config " + path("exp.cfg") + " generate --s 12 -o " + path("c.fris"));
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_EQ(field(r.out, "samples"), "12");
    EXPECT_NE(r.out.find("#   train.sigma = 0.3"), std::string::npos);
    std::ofstream(path("broken.cfg")) << "train.samples\n";
    EXPECT_EQ(run("--config " + path("broken.cfg") + " generate").code, 1);
}

TEST_F(Cli, CorruptDatasetAndModel) {
    std::ofstream(path("junk.fris")) << "junk";
    EXPECT_EQ(run("train -d " + path("junk.fris")).code, 2);
    EXPECT_EQ(run("sweep --kind sigma -m " + path("junk.fris")).code, 2);
}
