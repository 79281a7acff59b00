#include <doctest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <sys/wait.h>

#include "synthetic.hpp"

namespace fs = std::filesystem;

namespace {

struct CommandResult {
    int exit_code = -1;
    std::string output;  // stdout and stderr combined
};

CommandResult run_cli(const std::string& args) {
    const std::string command = std::string("\"") + FMRADIO_CLI_PATH + "\" " + args + " 2>&1";
    CommandResult result;
    FILE* pipe = popen(command.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 4096> buffer{};
    std::size_t got;
    while ((got = fread(buffer.data(), 1, buffer.size(), pipe)) > 0) result.output.append(buffer.data(), got);
    const int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::map<std::string, std::string> directory_contents(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::directory_iterator(dir)) out[entry.path().filename().string()] = slurp(entry.path());
    return out;
}

}  // namespace

TEST_CASE("cli reports usage errors and failing stages") {
    CHECK(run_cli("").exit_code != 0);
    CHECK(run_cli("no-such-command").exit_code != 0);

    const auto dir = synthetic::scratch_dir("cli_errors");
    const auto missing = run_cli("pipeline --input " + (dir / "absent.csv").string() + " --out " + (dir / "o").string());
    CHECK(missing.exit_code == 2);
    CHECK(missing.output.find("ingest") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("cli pipeline is deterministic and guards existing artifacts") {
    const auto dir = synthetic::scratch_dir("cli_pipeline");
    synthetic::write_csv(dir / "data.csv", synthetic::make_survival_set(120, 30, 3, 0.7, 12));
    const std::string base = "pipeline --input " + (dir / "data.csv").string() + " --out " + (dir / "run").string() +
                             " --seed 5";
    const auto first = run_cli(base);
    REQUIRE(first.exit_code == 0);
    const auto before = directory_contents(dir / "run");
    CHECK(before.count("report.json") == 1);
    CHECK(before.count("brier_curve.csv") == 1);

    const auto refused = run_cli(base);
    CHECK(refused.exit_code != 0);
    CHECK(refused.output.find("--force") != std::string::npos);

    REQUIRE(run_cli(base + " --force").exit_code == 0);
    CHECK(directory_contents(dir / "run") == before);

    const auto validated = run_cli("validate --model " + (dir / "run").string() + " --input " +
                                   (dir / "data.csv").string() + " --out " + (dir / "valid").string());
    CHECK(validated.exit_code == 0);
    CHECK(fs::exists(dir / "valid" / "validation_brier.json"));
    fs::remove_all(dir);
}

TEST_CASE("cli simulate writes the results table") {
    const auto dir = synthetic::scratch_dir("cli_simulate");
    const auto run = run_cli("simulate --p 20 --m-true 2 --communality 0.9 --n 40 --replicates 2 --seed 1 --out " +
                             (dir / "sim").string());
    CHECK(run.exit_code == 0);
    for (const char* name : {"scenario.cfg", "table.csv", "table.txt", "histogram.csv", "timing.json"})
        CHECK(fs::exists(dir / "sim" / name));
    CHECK(slurp(dir / "sim" / "table.csv").rfind("method,n,", 0) == 0);
    fs::remove_all(dir);
}
