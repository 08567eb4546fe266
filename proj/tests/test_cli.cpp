// Drives the command-line binary itself: exit codes, usage errors, config
// files, and the agreement pipeline on a small fixture.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

RunResult run(const std::string& args) {
    std::string cmd = std::string(MSTK_CLI_PATH) + " " + args + " 2>&1";
    std::array<char, 4096> buf{};
    RunResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    while (fgets(buf.data(), buf.size(), pipe)) r.output += buf.data();
    int status = pclose(pipe);
    r.exit_code = WEXITSTATUS(status);
    return r;
}

fs::path work_dir() {
    fs::path dir = fs::temp_directory_path() / "mstk_cli_test";
    fs::create_directories(dir);
    return dir;
}

std::string gold_corpus() { return std::string(MSTK_DATA_DIR) + "/gold_mini.conllu"; }

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("unknown microsystem is a usage error listing the seven names") {
    auto r = run("extract --corpus " + gold_corpus() + " --ms NOPE --out " +
                 (work_dir() / "x").string());
    CHECK(r.exit_code == 2);
    for (const char* name : {"PRF", "DET", "MLTNN", "DUR", "QUANT1", "QUANT2", "REL"})
        CHECK(r.output.find(name) != std::string::npos);
}

TEST_CASE("missing input file is a data error (exit 3)") {
    auto r = run("stats --corpus /nonexistent.conllu --out " + (work_dir() / "x").string());
    CHECK(r.exit_code == 3);
}

TEST_CASE("bad flags are usage errors (exit 2)") {
    auto r = run("stats --no-such-flag");
    CHECK(r.exit_code == 2);
}

TEST_CASE("stats writes the documented CSV header") {
    fs::path dir = work_dir() / "stats";
    auto r = run("stats --corpus " + gold_corpus() + " --out " + dir.string());
    CHECK(r.exit_code == 0);
    std::string csv = slurp(dir / "corpus_stats.csv");
    CHECK(csv.find("level,n,pct,mean_words,sd_words") != std::string::npos);
    CHECK(csv.find("B1,") != std::string::npos);
}

TEST_CASE("options can come from a config file") {
    fs::path dir = work_dir() / "cfg";
    fs::create_directories(dir);
    fs::path cfg = dir / "run.cfg";
    {
        std::ofstream out(cfg);
        out << "[stats]\n";
        out << "corpus = \"" << gold_corpus() << "\"\n";
        out << "out = \"" << dir.string() << "\"\n";
    }
    auto r = run("--config " + cfg.string() + " stats");
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(dir / "corpus_stats.csv"));
}

TEST_CASE("extract with matches dump writes the match TSV") {
    fs::path dir = work_dir() / "matches";
    auto r = run("extract --corpus " + gold_corpus() + " --ms QUANT2 --matches --out " +
                 dir.string());
    CHECK(r.exit_code == 0);
    std::string tsv = slurp(dir / "matches.tsv");
    CHECK(tsv.find("writing_id\tsent_no\tanchor_index\tpattern_name\tbound_vars") == 0);
    CHECK(tsv.find("QUANT2.MANY") != std::string::npos);
    CHECK(tsv.find("Q=1") != std::string::npos);
}

TEST_CASE("agreement reports on a two-sample fixture") {
    fs::path dir = work_dir() / "agree";
    fs::create_directories(dir);
    fs::path csv = dir / "annotations.csv";
    {
        std::ofstream out(csv);
        out << "ms,item,rater,label,sample\n";
        // sample 1: perfect three-way agreement on 12 items
        for (int i = 0; i < 12; ++i) {
            std::string label = (i % 2) ? "IT" : "none";
            for (const char* rater : {"r1", "r2", "r3"})
                out << "PRF,i" << i << ',' << rater << ',' << label << ",1\n";
        }
        // sample 2: r3 diverges on half the items
        for (int i = 12; i < 24; ++i) {
            std::string label = (i % 2) ? "IT" : "none";
            std::string other = (i % 2) ? "none" : "IT";
            out << "PRF,i" << i << ",r1," << label << ",2\n";
            out << "PRF,i" << i << ",r2," << label << ",2\n";
            out << "PRF,i" << i << ",r3," << ((i % 4 < 2) ? label : other) << ",2\n";
        }
    }
    auto r = run("agreement --annotations " + csv.string() + " --out " + dir.string() +
                 " --permutations 200 --seed 3");
    CHECK(r.exit_code == 0);
    std::string fleiss = slurp(dir / "agreement_fleiss.csv");
    CHECK(fleiss.find("Microsystems,N,Fleiss Kappa,z,p-value") == 0);
    CHECK(fleiss.find("PRF,24,") != std::string::npos);
    std::string pairwise = slurp(dir / "agreement_pairwise.csv");
    CHECK(pairwise.find("rater_a,rater_b,cohen_kappa") == 0);
    // r1 and r2 agree everywhere
    CHECK(pairwise.find("r1,r2,1.000") != std::string::npos);
}

TEST_CASE("reruns with one seed are byte-identical, different seeds differ") {
    fs::path a = work_dir() / "seed_a";
    fs::path b = work_dir() / "seed_b";
    fs::path c = work_dir() / "seed_c";
    for (const auto& dir : {a, b, c}) {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    CHECK(run("gen-synthetic --texts 25 --seed 5 --out " + a.string()).exit_code == 0);
    CHECK(run("gen-synthetic --texts 25 --seed 5 --out " + b.string()).exit_code == 0);
    CHECK(run("gen-synthetic --texts 25 --seed 6 --out " + c.string()).exit_code == 0);
    CHECK(slurp(a / "corpus.conllu") == slurp(b / "corpus.conllu"));
    CHECK(slurp(a / "truth_sites.tsv") == slurp(b / "truth_sites.tsv"));
    CHECK(slurp(a / "corpus.conllu") != slurp(c / "corpus.conllu"));
}
