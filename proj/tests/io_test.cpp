#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <bit>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include <mrn/diffusion.hpp>
#include <mrn/errors.hpp>
#include <mrn/io.hpp>
#include <mrn/rng.hpp>
#include <mrn/training.hpp>
#include <mrn/unet.hpp>

using namespace mrn;

namespace {

std::string temp_file(const std::string& name) {
    static const std::filesystem::path dir = [] {
        const auto d = std::filesystem::temp_directory_path() /
                       ("mrn_io_test_" + std::to_string(static_cast<long>(::getpid())));
        std::filesystem::create_directories(d);
        return d;
    }();
    return (dir / name).string();
}

bool same_bits(double a, double b) {
    return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

MultiResFunction random_function(Domain d, int resolution, int channels, std::uint64_t seed) {
    Rng rng(seed);
    MultiResFunction f = MultiResFunction::zeros(d, resolution, channels);
    for (Eigen::Index i = 0; i < f.coeffs.size(); ++i) f.coeffs[i] = rng.uniform(-2.0, 2.0);
    return f;
}

void check_function_equal(const MultiResFunction& a, const MultiResFunction& b) {
    CHECK(a.domain == b.domain);
    CHECK(a.resolution == b.resolution);
    CHECK(a.channels == b.channels);
    CHECK(a.basis == b.basis);
    REQUIRE(a.coeffs.size() == b.coeffs.size());
    for (Eigen::Index k = 0; k < a.coeffs.size(); ++k)
        CHECK(same_bits(a.coeffs[k], b.coeffs[k]));
}

UNetSpec multiresnet_spec(int levels, int finest) {
    UNetSpec spec;
    spec.domain = Domain::interval;
    spec.levels = levels;
    spec.finest_resolution = finest;
    spec.coarsest_resolution = finest - levels;
    spec.channels = 1;
    spec.hidden_base = 4;
    spec.encoder_kinds.assign(static_cast<std::size_t>(levels), EncoderKind::identity);
    return spec;
}

Dataset identity_dataset(int resolution, int n, std::uint64_t seed) {
    Dataset data;
    for (int k = 0; k < n; ++k) {
        const MultiResFunction f =
            random_function(Domain::interval, resolution, 1, seed + static_cast<std::uint64_t>(k));
        data.inputs.push_back(f);
        data.targets.push_back(f);
    }
    return data;
}

// Corrupts one byte near the end of a binary file.
void flip_last_byte(const std::string& path) {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekg(0, std::ios::end);
    const auto size = f.tellg();
    f.seekg(-1, std::ios::end);
    char b = 0;
    f.read(&b, 1);
    f.seekp(size - std::streamoff{1});
    b = static_cast<char>(b ^ 0x5a);
    f.write(&b, 1);
}

}  // namespace

TEST_CASE("function files round-trip bit for bit") {
    MultiResFunction f = random_function(Domain::interval, 4, 3, 10);
    f.coeffs[0] = -0.0;
    f.coeffs[1] = 5e-324;
    f.coeffs[2] = 1.7976931348623157e308;
    f.coeffs[3] = 0.1;
    const std::string path = temp_file("roundtrip.mrf");
    save_function(f, path);
    check_function_equal(f, load_function(path));
}

TEST_CASE("every domain and basis serializes") {
    for (const MultiResFunction& f :
         {random_function(Domain::interval, 3, 1, 1),
          to_basis(random_function(Domain::interval, 3, 2, 2), Basis::haar),
          random_function(Domain::square, 2, 2, 3),
          random_function(Domain::rectangle, 2, 1, 4),
          random_function(Domain::triangle, 2, 1, 5),
          MultiResFunction::zeros(Domain::interval, 3, 1, Basis::h01)}) {
        const std::string path = temp_file("domain.mrf");
        save_function(f, path);
        check_function_equal(f, load_function(path));
    }
}

TEST_CASE("function loading rejects damaged files") {
    CHECK_THROWS_AS(load_function(temp_file("missing.mrf")), IoError);

    const MultiResFunction f = random_function(Domain::interval, 3, 1, 6);
    const std::string path = temp_file("damage.mrf");

    save_function(f, path);
    {
        std::fstream bad(path, std::ios::binary | std::ios::in | std::ios::out);
        bad.write("XYZ1", 4);
    }
    CHECK_THROWS_AS(load_function(path), IoError);

    save_function(f, path);
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 4);
    CHECK_THROWS_AS(load_function(path), IoError);

    save_function(f, path);
    {
        std::ofstream extra(path, std::ios::binary | std::ios::app);
        extra.write("junk", 4);
    }
    CHECK_THROWS_AS(load_function(path), IoError);

    // A domain tag outside the enum range.
    save_function(f, path);
    {
        std::fstream bad(path, std::ios::binary | std::ios::in | std::ios::out);
        bad.seekp(4);
        const char tag[4] = {9, 0, 0, 0};
        bad.write(tag, 4);
    }
    CHECK_THROWS_AS(load_function(path), IoError);
}

TEST_CASE("net files round-trip the architecture, flags, and tensors") {
    UNetSpec spec = multiresnet_spec(2, 3);
    spec.encoder_kinds.assign(2, EncoderKind::resnet);
    UNetState state = build_unet(spec, 77);

    // Staged training creates adapter slots and freeze flags, the parts of
    // the state beyond plain construction.
    TrainConfig cfg;
    cfg.steps = 1;
    cfg.freeze = true;
    std::vector<Dataset> stage_data = {identity_dataset(2, 2, 500), identity_dataset(3, 2, 600)};
    state = staged_train(state, stage_data, cfg).state;
    REQUIRE(state.frozen.size() == 3);
    CHECK(state.frozen[1] == 1);

    const std::string path = temp_file("roundtrip.uns");
    save_state(state, path);
    const UNetState loaded = load_state(path);

    CHECK(loaded.spec.domain == state.spec.domain);
    CHECK(loaded.spec.levels == state.spec.levels);
    CHECK(loaded.spec.finest_resolution == state.spec.finest_resolution);
    CHECK(loaded.spec.coarsest_resolution == state.spec.coarsest_resolution);
    CHECK(loaded.spec.channels == state.spec.channels);
    CHECK(loaded.spec.hidden_base == state.spec.hidden_base);
    CHECK(loaded.spec.encoder_kinds == state.spec.encoder_kinds);
    CHECK(loaded.spec.projection == state.spec.projection);
    CHECK(loaded.spec.bottleneck == state.spec.bottleneck);
    CHECK(loaded.spec.skip_mode == state.spec.skip_mode);
    CHECK(loaded.spec.multi_subspace == state.spec.multi_subspace);
    CHECK(loaded.frozen == state.frozen);
    REQUIRE(loaded.params.size() == state.params.size());
    for (std::size_t k = 0; k < state.params.size(); ++k) {
        CHECK(loaded.params[k].name == state.params[k].name);
        CHECK(loaded.params[k].level == state.params[k].level);
        CHECK(loaded.params[k].tensor.shape == state.params[k].tensor.shape);
        REQUIRE(loaded.params[k].tensor.data.size() == state.params[k].tensor.data.size());
        for (Eigen::Index v = 0; v < state.params[k].tensor.data.size(); ++v)
            CHECK(same_bits(loaded.params[k].tensor.data[v], state.params[k].tensor.data[v]));
    }

    // The loaded net computes the same function to the bit.
    const MultiResFunction v = random_function(Domain::interval, 3, 1, 901);
    const MultiResFunction out_a = unet_forward(state, v, 2);
    const MultiResFunction out_b = unet_forward(loaded, v, 2);
    for (Eigen::Index k = 0; k < out_a.coeffs.size(); ++k)
        CHECK(same_bits(out_a.coeffs[k], out_b.coeffs[k]));
}

TEST_CASE("net loading rejects damaged files") {
    CHECK_THROWS_AS(load_state(temp_file("missing.uns")), IoError);

    const UNetState state = build_unet(multiresnet_spec(2, 3), 5);
    const std::string path = temp_file("damage.uns");

    save_state(state, path);
    {
        std::fstream bad(path, std::ios::binary | std::ios::in | std::ios::out);
        bad.write("MRF1", 4);
    }
    CHECK_THROWS_AS(load_state(path), IoError);

    save_state(state, path);
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
    CHECK_THROWS_AS(load_state(path), IoError);

    save_state(state, path);
    flip_last_byte(path);
    // The payload ends with tensor values, so the flip lands in data bits
    // and must still load; the architecture checks live in the header.
    CHECK_NOTHROW(load_state(path));

    save_state(state, path);
    {
        std::ofstream extra(path, std::ios::binary | std::ios::app);
        extra.put('x');
    }
    CHECK_THROWS_AS(load_state(path), IoError);
}

TEST_CASE("doubles print in shortest round-trip form") {
    for (double v : {0.25, 0.1, 1.0 / 3.0, -0.0, 5e-324, 1.7976931348623157e308,
                     1.0, -17.5, 6.02e23}) {
        const std::string text = format_double(v);
        CHECK(same_bits(std::strtod(text.c_str(), nullptr), v));
    }
    CHECK(format_double(0.25) == "0.25");
    CHECK(format_double(1.0) == "1");
    CHECK(format_double(-0.0) == "-0");
}

TEST_CASE("csv text is deterministic and strict") {
    CsvTable table;
    table.header = {"a", "b"};
    table.rows = {{"1", "0.5"}, {"2", "-0"}};
    const std::string text = csv_text(table);
    CHECK(text == "a,b\n1,0.5\n2,-0\n");
    CHECK(csv_text(table) == text);

    CsvTable bad_cell = table;
    bad_cell.rows[0][0] = "1,5";
    CHECK_THROWS_AS(csv_text(bad_cell), ValueError);

    CsvTable bad_row = table;
    bad_row.rows[0].push_back("extra");
    CHECK_THROWS_AS(csv_text(bad_row), ValueError);

    const std::string path = temp_file("table.csv");
    save_csv(table, path);
    std::ifstream is(path, std::ios::binary);
    std::string readback((std::istreambuf_iterator<char>(is)),
                         std::istreambuf_iterator<char>());
    CHECK(readback == text);
}

TEST_CASE("report payloads serialize deterministically and parse back") {
    SpectrumReport rep;
    rep.resolution = 2;
    rep.t = 1.0;
    rep.samples = 1000;
    rep.bands = {{0, 0.25, 1.0, 0.01}, {1, 0.25, 1.0, 0.01}, {2, 0.5, 2.0, 0.02}};

    const std::string payload = to_json(rep);
    CHECK(to_json(rep) == payload);
    const nlohmann::json doc = nlohmann::json::parse(payload);
    CHECK(doc["resolution"] == 2);
    CHECK(doc["samples"] == 1000);
    CHECK(doc["bands"].size() == 3);
    CHECK(doc["bands"][2]["variance"] == 0.5);
    CHECK(doc["bands"][2]["ci"] == 0.02);

    const CsvTable mirror = spectrum_csv(rep);
    CHECK(mirror.header == std::vector<std::string>{"band", "variance", "ratio", "ci"});
    REQUIRE(mirror.rows.size() == 3);
    CHECK(mirror.rows[2] == std::vector<std::string>{"2", "0.5", "2", "0.02"});

    ConsistencyReport cons;
    cons.fine_resolution = 4;
    cons.coarse_resolution = 3;
    cons.t = 0.5;
    cons.samples = 1000;
    cons.max_mean_discrepancy = 0.001;
    cons.max_mean_discrepancy_se = 1.5;
    cons.pooled_variance = 0.5;
    cons.direct_variance = 0.49;
    cons.variance_ratio = 0.5 / 0.49;
    const nlohmann::json cdoc = nlohmann::json::parse(to_json(cons));
    CHECK(cdoc["fine_resolution"] == 4);
    CHECK(cdoc["variance_ratio"] == 0.5 / 0.49);
    const CsvTable cmirror = consistency_csv(cons);
    CHECK(cmirror.header == std::vector<std::string>{"metric", "value"});
    CHECK(cmirror.rows.size() == 9);
}

TEST_CASE("loss tables and traces mirror to long-form csv") {
    const std::vector<ConditionalLoss> table = {{1, 1, 0.5}, {1, 2, 0.25}, {2, 2, 0.75}};
    const CsvTable t = loss_table_csv(table);
    CHECK(t.header ==
          std::vector<std::string>{"target_resolution", "input_resolution", "loss"});
    REQUIRE(t.rows.size() == 3);
    CHECK(t.rows[1] == std::vector<std::string>{"1", "2", "0.25"});

    const std::vector<std::vector<double>> traces = {{1.0, 0.5}, {0.5, 0.25, 0.125}};
    const CsvTable tr = trace_csv(traces);
    CHECK(tr.header == std::vector<std::string>{"stage", "step", "loss"});
    REQUIRE(tr.rows.size() == 5);
    CHECK(tr.rows[0] == std::vector<std::string>{"1", "0", "1"});
    CHECK(tr.rows[4] == std::vector<std::string>{"2", "2", "0.125"});
}
