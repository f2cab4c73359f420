#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include <mrn/io.hpp>
#include <mrn/rng.hpp>
#include <mrn/spaces.hpp>
#include <mrn/triangle.hpp>
#include <mrn/unet.hpp>

using namespace mrn;

namespace {

std::string temp_file(const std::string& name) {
    static const std::filesystem::path dir = [] {
        const auto d = std::filesystem::temp_directory_path() /
                       ("mrn_cli_test_" + std::to_string(static_cast<long>(::getpid())));
        std::filesystem::create_directories(d);
        return d;
    }();
    return (dir / name).string();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(in.good(), "cannot open " << path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

// Runs the installed binary with the given argument string, capturing exit
// code and both streams. Output paths in `args` should come from temp_file.
CliResult run_cli(const std::string& args) {
    const std::string out_path = temp_file("run_stdout.txt");
    const std::string err_path = temp_file("run_stderr.txt");
    const std::string cmd =
        std::string(MRN_CLI_PATH) + " " + args + " >" + out_path + " 2>" + err_path;
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_file(out_path);
    r.err = read_file(err_path);
    return r;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        std::vector<std::string> row;
        std::istringstream cells(line);
        std::string cell;
        while (std::getline(cells, cell, ',')) row.push_back(cell);
        rows.push_back(row);
    }
    return rows;
}

bool starts_with(const std::string& text, const std::string& prefix) {
    return text.rfind(prefix, 0) == 0;
}

MultiResFunction random_function(Domain d, int resolution, int channels, std::uint64_t seed) {
    Rng rng(seed);
    MultiResFunction f = MultiResFunction::zeros(d, resolution, channels);
    for (Eigen::Index i = 0; i < f.coeffs.size(); ++i) f.coeffs[i] = rng.uniform(-2.0, 2.0);
    return f;
}

}  // namespace

TEST_CASE("help succeeds and lists the subcommands") {
    const CliResult r = run_cli("--help");
    CHECK(r.code == 0);
    for (const char* name : {"dwt", "pde", "tri", "unet-eval", "train-synth", "train-staged",
                             "loss-table", "spectrum", "consistency"})
        CHECK(r.out.find(name) != std::string::npos);
    CHECK(r.out.find("Exit codes") != std::string::npos);
}

TEST_CASE("an unknown flag exits 2 with a one-line usage error") {
    const CliResult r = run_cli("spectrum --bogus 1");
    CHECK(r.code == 2);
    CHECK(starts_with(r.err, "usage-error: "));
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
}

TEST_CASE("a stochastic command without --seed exits 2") {
    const CliResult r =
        run_cli("spectrum --resolution 2 --t 0.5 --samples 200 --out " + temp_file("s.json"));
    CHECK(r.code == 2);
    CHECK(starts_with(r.err, "usage-error: "));
}

TEST_CASE("a missing input file exits 3 with an io error") {
    const CliResult r = run_cli("dwt --input " + temp_file("nowhere.mrf") +
                                " --levels 1 --out " + temp_file("d.csv"));
    CHECK(r.code == 3);
    CHECK(starts_with(r.err, "io-error: "));
}

TEST_CASE("a transform that cannot fit the input exits 4 with a shape error") {
    const std::string in = temp_file("shape_in.mrf");
    save_function(MultiResFunction::constant(Domain::interval, 3, 1.0), in);
    const CliResult r =
        run_cli("dwt --input " + in + " --levels 9 --out " + temp_file("shape.csv"));
    CHECK(r.code == 4);
    CHECK(starts_with(r.err, "shape-error: "));
    // Validation precedes output: the failed run must not leave a file.
    CHECK_FALSE(std::filesystem::exists(temp_file("shape.csv")));
}

TEST_CASE("dwt of a constant kills every detail band and reruns byte-identically") {
    const std::string in = temp_file("dwt_in.mrf");
    const std::string out = temp_file("dwt_out.csv");
    save_function(MultiResFunction::constant(Domain::interval, 4, 0.75, 2), in);

    const std::string args = "dwt --input " + in + " --levels 3 --out " + out;
    REQUIRE(run_cli(args).code == 0);
    const std::string first = read_file(out);

    const auto rows = parse_csv(first);
    REQUIRE(rows.size() == 1 + 2 * 16);
    CHECK(rows[0] == std::vector<std::string>{"channel", "band", "index", "value"});
    int details = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i][1] == "coarse") continue;
        ++details;
        CHECK(rows[i][3] == "0");
    }
    CHECK(details == 2 * (8 + 4 + 2));

    REQUIRE(run_cli(args).code == 0);
    CHECK(read_file(out) == first);
}

TEST_CASE("pde on a constant load reproduces the analytic midpoint value") {
    const std::string rhs = temp_file("pde_rhs.mrf");
    const std::string out = temp_file("pde_u.mrf");
    save_function(MultiResFunction::constant(Domain::interval, 4, 1.0), rhs);

    REQUIRE(run_cli("pde --rhs " + rhs + " --resolution 1 --out " + out).code == 0);
    const MultiResFunction u = load_function(out);
    CHECK(u.basis == Basis::h01);
    CHECK(std::abs(h01_eval_function(u, 0.5) - (-0.125)) < 1e-12);
    CHECK(h01_eval_function(u, 0.0) == 0.0);
    CHECK(h01_eval_function(u, 1.0) == 0.0);
}

TEST_CASE("tri layout matches the in-process codespace grid") {
    const std::string out = temp_file("tri_layout.csv");
    REQUIRE(run_cli("tri layout --depth 2 --out " + out).code == 0);
    const auto rows = parse_csv(read_file(out));
    const auto grid = codespace_layout(2);
    REQUIRE(rows.size() == 1 + 16);
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const int r = std::stoi(rows[i][0]);
        const int c = std::stoi(rows[i][1]);
        CHECK(rows[i][2] == grid[r][c]);
        CHECK(std::stoi(rows[i][3]) == address_to_index(grid[r][c]));
    }
}

TEST_CASE("tri synth, pool and haar chain through files like the library calls") {
    const std::string synth = temp_file("tri_f.mrf");
    const std::string pooled = temp_file("tri_pooled.mrf");
    const std::string haar = temp_file("tri_haar.csv");

    REQUIRE(run_cli("tri synth --depth 3 --channels 2 --seed 11 --out " + synth).code == 0);
    const MultiResFunction f = load_function(synth);
    CHECK(f.domain == Domain::triangle);
    CHECK(f.resolution == 3);
    CHECK(f.channels == 2);

    REQUIRE(run_cli("tri pool --input " + synth + " --to 1 --out " + pooled).code == 0);
    const MultiResFunction expect_pool = project(f, 1);
    const MultiResFunction got_pool = load_function(pooled);
    REQUIRE(got_pool.coeffs.size() == expect_pool.coeffs.size());
    for (Eigen::Index k = 0; k < got_pool.coeffs.size(); ++k)
        CHECK(got_pool.coeffs[k] == expect_pool.coeffs[k]);

    REQUIRE(run_cli("tri haar --input " + synth + " --out " + haar).code == 0);
    const auto rows = parse_csv(read_file(haar));
    const MultiResFunction expect_haar = to_basis(f, Basis::haar);
    REQUIRE(rows.size() == 1 + static_cast<std::size_t>(expect_haar.coeffs.size()));
    for (std::size_t i = 1; i < rows.size(); ++i)
        CHECK(std::stod(rows[i][2]) ==
              doctest::Approx(expect_haar.coeffs[static_cast<Eigen::Index>(i - 1)])
                  .epsilon(1e-15));

    // Pooling under the triangle guard rejects non-triangle inputs.
    const std::string flat = temp_file("tri_flat.mrf");
    save_function(MultiResFunction::constant(Domain::interval, 2, 1.0), flat);
    const CliResult bad = run_cli("tri pool --input " + flat + " --to 1 --out " + pooled);
    CHECK(bad.code == 2);
}

TEST_CASE("spectrum reports the band staircase and reruns byte-identically") {
    const std::string out = temp_file("spec.json");
    const std::string args =
        "spectrum --resolution 4 --t 1.0 --samples 20000 --seed 7 --out " + out;
    REQUIRE(run_cli(args).code == 0);
    const std::string first_json = read_file(out);
    const std::string first_csv = read_file(temp_file("spec.csv"));

    const nlohmann::json doc = nlohmann::json::parse(first_json);
    CHECK(doc.at("resolution") == 4);
    CHECK(doc.at("samples") == 20000);
    REQUIRE(doc.at("bands").size() == 5);
    const double expected[5] = {1.0, 1.0, 2.0, 4.0, 8.0};
    for (int b = 0; b < 5; ++b) {
        const auto& band = doc.at("bands").at(b);
        CHECK(band.at("band") == b);
        CHECK(band.at("ratio").get<double>() ==
              doctest::Approx(expected[b]).epsilon(0.05));
    }

    const nlohmann::json manifest =
        nlohmann::json::parse(read_file(out + ".manifest.json"));
    CHECK(manifest.at("command") == "spectrum");
    CHECK(manifest.at("seed") == 7);
    CHECK(manifest.at("written").size() == 2);
    const auto& argv = manifest.at("argv");
    CHECK(std::find(argv.begin(), argv.end(), "--seed") != argv.end());

    REQUIRE(run_cli(args).code == 0);
    CHECK(read_file(out) == first_json);
    CHECK(read_file(temp_file("spec.csv")) == first_csv);
}

TEST_CASE("consistency finds the pooled and direct processes in agreement") {
    const std::string out = temp_file("cons.json");
    const std::string args =
        "consistency --fine 5 --coarse 4 --t 0.5 --samples 20000 --seed 3 --out " + out;
    REQUIRE(run_cli(args).code == 0);
    const std::string first = read_file(out);

    const nlohmann::json doc = nlohmann::json::parse(first);
    CHECK(doc.at("fine_resolution") == 5);
    CHECK(doc.at("coarse_resolution") == 4);
    CHECK(doc.at("variance_ratio").get<double>() == doctest::Approx(1.0).epsilon(0.05));
    CHECK(doc.at("max_mean_discrepancy_se").get<double>() < 3.0);

    REQUIRE(run_cli(args).code == 0);
    CHECK(read_file(out) == first);
}

TEST_CASE("train-synth writes a reproducible study report") {
    const std::string report = temp_file("synth.json");
    const std::string args =
        "train-synth --target square --pre abs --seed 1 --grid 16 --hidden 6 "
        "--applications 8 --steps 60 --report " + report;
    REQUIRE(run_cli(args).code == 0);
    const std::string first = read_file(report);

    const nlohmann::json doc = nlohmann::json::parse(first);
    CHECK(doc.at("target") == "square");
    CHECK(doc.at("pre") == "abs");
    CHECK(doc.at("seed") == 1);
    CHECK(doc.at("residual") == true);
    CHECK(doc.at("final_mse").get<double>() >= 0.0);
    CHECK(doc.at("max_weight_norm").get<double>() < 1.0);

    REQUIRE(run_cli(args).code == 0);
    CHECK(read_file(report) == first);
}

TEST_CASE("train-staged trains from a config and saves a loadable state") {
    const std::string config = temp_file("run.json");
    const std::string net = temp_file("net.uns");
    const std::string trace = temp_file("trace.csv");
    {
        nlohmann::json doc;
        doc["net"] = {{"levels", 2},       {"finest_resolution", 3}, {"channels", 1},
                      {"hidden_base", 4},  {"encoders", "resnet"},   {"seed", 42}};
        doc["train"] = {{"steps", 5}, {"lr", 1e-3}};
        doc["data"] = {{"task", "identity"}, {"samples", 8}, {"seed", 7}};
        save_text(doc.dump(2) + "\n", config);
    }

    const std::string args =
        "train-staged --config " + config + " --out " + net + " --trace " + trace;
    REQUIRE(run_cli(args).code == 0);
    const std::string first_net = read_file(net);
    const std::string first_trace = read_file(trace);

    const UNetState state = load_state(net);
    CHECK(state.spec.levels == 2);
    CHECK(state.spec.finest_resolution == 3);
    CHECK(state.frozen[1] == 1);  // the default schedule freezes finished levels
    bool has_adapters = false;
    for (const ParamSlot& p : state.params)
        if (p.name.rfind("head", 0) == 0) has_adapters = true;
    CHECK(has_adapters);

    const auto rows = parse_csv(first_trace);
    CHECK(rows.size() == 1 + 2 * 6);  // header + two stages of steps+1 losses
    CHECK(rows[0] == std::vector<std::string>{"stage", "step", "loss"});

    REQUIRE(run_cli(args).code == 0);
    CHECK(read_file(net) == first_net);
    CHECK(read_file(trace) == first_trace);

    // A truncated config is a malformed file, not a usage mistake.
    const std::string broken = temp_file("broken.json");
    save_text("{\"net\": {", broken);
    const CliResult bad =
        run_cli("train-staged --config " + broken + " --out " + net + " --trace " + trace);
    CHECK(bad.code == 3);
    CHECK(starts_with(bad.err, "io-error: "));
}

TEST_CASE("loss-table sweeps every resolution pair with both axes monotone") {
    const std::string config = temp_file("suite.json");
    const std::string out = temp_file("table.csv");
    {
        nlohmann::json doc;
        doc["data"] = {{"task", "square"}, {"resolution", 2}, {"samples", 50}, {"seed", 9}};
        save_text(doc.dump(2) + "\n", config);
    }

    const std::string args = "loss-table --config " + config + " --out " + out;
    REQUIRE(run_cli(args).code == 0);
    const std::string first = read_file(out);

    const auto rows = parse_csv(first);
    REQUIRE(rows.size() == 1 + 9);
    CHECK(rows[0] ==
          std::vector<std::string>{"target_resolution", "input_resolution", "loss"});
    double loss[3][3];
    for (std::size_t i = 1; i < rows.size(); ++i)
        loss[std::stoi(rows[i][0])][std::stoi(rows[i][1])] = std::stod(rows[i][2]);
    for (int t = 0; t < 3; ++t) {
        CHECK(loss[t][0] >= loss[t][1]);
        CHECK(loss[t][1] >= loss[t][2]);
        CHECK(loss[t][2] == 0.0);  // full-resolution inputs identify the sample
        CHECK(loss[t][0] > 0.0);
    }
    for (int r = 0; r < 2; ++r) CHECK(loss[2][r] >= loss[1][r]);

    REQUIRE(run_cli(args).code == 0);
    CHECK(read_file(out) == first);
}

TEST_CASE("unet-eval matches the in-process forward pass bit for bit") {
    UNetSpec spec;
    spec.domain = Domain::interval;
    spec.levels = 2;
    spec.finest_resolution = 3;
    spec.coarsest_resolution = 1;
    spec.channels = 1;
    spec.hidden_base = 4;
    const UNetState state = build_unet(spec, 5);
    const MultiResFunction v = random_function(Domain::interval, 3, 1, 21);

    const std::string net = temp_file("eval_net.uns");
    const std::string in = temp_file("eval_in.mrf");
    const std::string out = temp_file("eval_out.mrf");
    save_state(state, net);
    save_function(v, in);

    REQUIRE(run_cli("unet-eval --net " + net + " --input " + in + " --out " + out).code == 0);
    const MultiResFunction expect = unet_forward(state, v, spec.levels);
    const MultiResFunction got = load_function(out);
    REQUIRE(got.coeffs.size() == expect.coeffs.size());
    for (Eigen::Index k = 0; k < got.coeffs.size(); ++k)
        CHECK(got.coeffs[k] == expect.coeffs[k]);
}
