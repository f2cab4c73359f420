// mrn: command-line front end for the multiresolution network library.
//
// Every command validates its inputs before any output file is created,
// writes the artifacts named by its flags, then drops a small JSON manifest
// (<out>.manifest.json) recording the exact invocation. Report files are
// deterministic functions of the flags, so reruns are byte-identical; the
// manifest carries the only timestamp.
//
// Exit codes: 0 success, 2 usage or bad argument, 3 file error, 4 shape
// mismatch, 5 numeric failure, 1 anything else. Errors are a single line
// on stderr prefixed with the category.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mrn/diffusion.hpp"
#include "mrn/errors.hpp"
#include "mrn/io.hpp"
#include "mrn/rng.hpp"
#include "mrn/spaces.hpp"
#include "mrn/training.hpp"
#include "mrn/triangle.hpp"
#include "mrn/unet.hpp"
#include "mrn/wavelet.hpp"

namespace {

using namespace mrn;
using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

std::string single_line(std::string text) {
    std::replace(text.begin(), text.end(), '\n', ' ');
    std::replace(text.begin(), text.end(), '\r', ' ');
    return text;
}

std::string iso_timestamp() {
    const std::time_t now =
        std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
}

const std::string& require_extension(const std::string& path, const std::string& ext,
                                     const char* flag) {
    if (path.size() <= ext.size() || path.substr(path.size() - ext.size()) != ext)
        throw ValueError(std::string(flag) + " must end in " + ext + ", got '" + path + "'");
    return path;
}

// spectrum and consistency keep a CSV copy of the JSON report beside it.
std::string csv_mirror(const std::string& json_path) {
    return json_path.substr(0, json_path.size() - 5) + ".csv";
}

// The original argv, echoed into every manifest.
std::vector<std::string> g_argv;

void write_manifest(const std::string& primary_out, const std::string& command,
                    const std::vector<std::string>& written, const std::uint64_t* seed) {
    json doc;
    doc["command"] = command;
    doc["argv"] = g_argv;
    doc["version"] = kVersion;
    doc["written"] = written;
    doc["timestamp"] = iso_timestamp();
    if (seed != nullptr) doc["seed"] = *seed;
    save_text(doc.dump(2) + "\n", primary_out + ".manifest.json");
    for (const std::string& path : written) std::cout << "wrote " << path << "\n";
}

// --- flag and config value parsers -----------------------------------------

Domain parse_domain(const std::string& name) {
    for (Domain d : {Domain::interval, Domain::square, Domain::rectangle, Domain::triangle})
        if (name == domain_name(d)) return d;
    throw ValueError("unknown domain '" + name +
                     "' (have: interval, square, rectangle, triangle)");
}

EncoderKind parse_encoder(const std::string& name) {
    if (name == "resnet") return EncoderKind::resnet;
    if (name == "identity") return EncoderKind::identity;
    throw ValueError("unknown encoder kind '" + name + "' (have: resnet, identity)");
}

BottleneckKind parse_bottleneck(const std::string& name) {
    if (name == "resnet") return BottleneckKind::resnet;
    if (name == "identity") return BottleneckKind::identity;
    throw ValueError("unknown bottleneck kind '" + name + "' (have: resnet, identity)");
}

ProjectionOp::Kind parse_projection(const std::string& name) {
    if (name == "avg-pool") return ProjectionOp::Kind::avg_pool;
    if (name == "orthogonal-haar") return ProjectionOp::Kind::orthogonal_haar;
    throw ValueError("unknown projection '" + name + "' (have: avg-pool, orthogonal-haar)");
}

SkipMode parse_skip(const std::string& name) {
    if (name == "normal") return SkipMode::normal;
    if (name == "zeroed") return SkipMode::zeroed;
    throw ValueError("unknown skip mode '" + name + "' (have: normal, zeroed)");
}

SyntheticConfig::Target parse_target(const std::string& name) {
    if (name == "square") return SyntheticConfig::Target::square;
    if (name == "cube") return SyntheticConfig::Target::cube;
    throw ValueError("unknown target '" + name + "' (have: square, cube)");
}

SyntheticConfig::Preconditioner parse_preconditioner(const std::string& name) {
    if (name == "identity") return SyntheticConfig::Preconditioner::identity;
    if (name == "abs") return SyntheticConfig::Preconditioner::abs;
    throw ValueError("unknown preconditioner '" + name + "' (have: identity, abs)");
}

// --- config-driven construction ---------------------------------------------

UNetSpec spec_from_json(const json& net) {
    UNetSpec spec;
    spec.domain = parse_domain(net.value("domain", std::string("interval")));
    spec.levels = net.at("levels").get<int>();
    spec.finest_resolution = net.at("finest_resolution").get<int>();
    spec.coarsest_resolution = net.value(
        "coarsest_resolution", std::max(spec.finest_resolution - spec.levels, 0));
    spec.channels = net.value("channels", 1);
    spec.hidden_base = net.value("hidden_base", 4);
    if (net.contains("encoders")) {
        const json& enc = net.at("encoders");
        if (enc.is_string()) {
            spec.encoder_kinds.assign(static_cast<std::size_t>(std::max(spec.levels, 0)),
                                      parse_encoder(enc.get<std::string>()));
        } else {
            for (const json& e : enc) spec.encoder_kinds.push_back(parse_encoder(e.get<std::string>()));
        }
    }
    spec.projection = parse_projection(net.value("projection", std::string("avg-pool")));
    spec.bottleneck = parse_bottleneck(net.value("bottleneck", std::string("resnet")));
    spec.skip_mode = parse_skip(net.value("skip_mode", std::string("normal")));
    spec.multi_subspace = net.value("multi_subspace", true);
    validate_unet_spec(spec);
    return spec;
}

// Synthetic regression pairs with cell values in [-2, 2]: uniform draws, or
// half-integer lattice draws so pooled averages collide byte-for-byte and
// conditioning on a coarse projection is non-trivial. Targets per task:
// "identity" learns the input back, "square" the cellwise square, "detail"
// the component killed by projecting to detail_resolution.
Dataset make_task_dataset(const std::string& task, Domain domain, int resolution, int channels,
                          int samples, std::uint64_t seed, int detail_resolution, bool lattice) {
    if (samples < 1) throw ValueError("data.samples must be positive");
    if (task != "identity" && task != "square" && task != "detail")
        throw ValueError("unknown data task '" + task +
                         "' (have: identity, square, detail, files)");
    Dataset data;
    Rng rng(seed);
    for (int n = 0; n < samples; ++n) {
        MultiResFunction f = MultiResFunction::zeros(domain, resolution, channels);
        for (Eigen::Index k = 0; k < f.coeffs.size(); ++k)
            f.coeffs[k] = lattice ? static_cast<double>(rng.uniform_int(-4, 4)) / 2.0
                                  : rng.uniform(-2.0, 2.0);
        MultiResFunction w = f;
        if (task == "square") {
            w.coeffs = f.coeffs.square();
        } else if (task == "detail") {
            w.coeffs = f.coeffs - include(project(f, detail_resolution), resolution).coeffs;
        }
        data.inputs.push_back(std::move(f));
        data.targets.push_back(std::move(w));
    }
    return data;
}

Dataset dataset_from_file_lists(const json& stage) {
    Dataset data;
    for (const json& path : stage.at("inputs")) data.inputs.push_back(load_function(path.get<std::string>()));
    for (const json& path : stage.at("targets")) data.targets.push_back(load_function(path.get<std::string>()));
    data.check_consistent();
    return data;
}

// --- dwt --------------------------------------------------------------------

struct DwtArgs {
    std::string input;
    int levels = 1;
    std::string bank = "haar";
    std::string out;
};

void run_dwt(const DwtArgs& a) {
    const MultiResFunction f = load_function(a.input);
    if (f.domain != Domain::interval || f.basis != Basis::pixel)
        throw ValueError("dwt expects an interval-domain pixel-basis input, got " + f.describe());
    const FilterBank bank = filter_bank_by_name(a.bank);
    require_extension(a.out, ".csv", "--out");

    CsvTable table;
    table.header = {"channel", "band", "index", "value"};
    for (int c = 0; c < f.channels; ++c) {
        const vectord samples = f.channel(c).matrix();
        const WaveletPyramid1D pyr = multilevel_dwt(samples, a.levels, bank);
        for (Eigen::Index k = 0; k < pyr.coarse.size(); ++k)
            table.rows.push_back({std::to_string(c), "coarse", std::to_string(k),
                                  format_double(pyr.coarse[k])});
        for (std::size_t d = 0; d < pyr.details.size(); ++d) {
            const std::string band = "d" + std::to_string(d + 1);  // d1 is the finest
            for (Eigen::Index k = 0; k < pyr.details[d].size(); ++k)
                table.rows.push_back({std::to_string(c), band, std::to_string(k),
                                      format_double(pyr.details[d][k])});
        }
    }
    save_csv(table, a.out);
    write_manifest(a.out, "dwt", {a.out}, nullptr);
}

// --- pde --------------------------------------------------------------------

struct PdeArgs {
    std::string rhs;
    int resolution = 1;
    std::string out;
};

void run_pde(const PdeArgs& a) {
    const MultiResFunction rhs = load_function(a.rhs);
    require_extension(a.out, ".mrf", "--out");
    const MultiResFunction u = galerkin_solve_elliptic(rhs, a.resolution);
    save_function(u, a.out);
    write_manifest(a.out, "pde", {a.out}, nullptr);
}

// --- tri --------------------------------------------------------------------

struct TriLayoutArgs {
    int depth = 1;
    std::string out;
};

void run_tri_layout(const TriLayoutArgs& a) {
    require_extension(a.out, ".csv", "--out");
    const std::vector<std::vector<std::string>> grid = codespace_layout(a.depth);
    CsvTable table;
    table.header = {"row", "col", "address", "index"};
    for (std::size_t r = 0; r < grid.size(); ++r)
        for (std::size_t c = 0; c < grid[r].size(); ++c)
            table.rows.push_back({std::to_string(r), std::to_string(c), grid[r][c],
                                  std::to_string(address_to_index(grid[r][c]))});
    save_csv(table, a.out);
    write_manifest(a.out, "tri layout", {a.out}, nullptr);
}

struct TriSynthArgs {
    int depth = 1;
    int channels = 1;
    std::uint64_t seed = 0;
    std::string out;
};

void run_tri_synth(const TriSynthArgs& a) {
    require_extension(a.out, ".mrf", "--out");
    MultiResFunction f = MultiResFunction::zeros(Domain::triangle, a.depth, a.channels);
    Rng rng(a.seed);
    for (Eigen::Index k = 0; k < f.coeffs.size(); ++k) f.coeffs[k] = rng.uniform(-2.0, 2.0);
    save_function(f, a.out);
    write_manifest(a.out, "tri synth", {a.out}, &a.seed);
}

struct TriPoolArgs {
    std::string input;
    int to = 0;
    std::string out;
};

void run_tri_pool(const TriPoolArgs& a) {
    const MultiResFunction f = load_function(a.input);
    if (f.domain != Domain::triangle)
        throw ValueError("tri pool expects a triangle-domain input, got " + f.describe());
    require_extension(a.out, ".mrf", "--out");
    save_function(project(f, a.to), a.out);
    write_manifest(a.out, "tri pool", {a.out}, nullptr);
}

struct TriHaarArgs {
    std::string input;
    std::string out;
};

void run_tri_haar(const TriHaarArgs& a) {
    const MultiResFunction f = load_function(a.input);
    if (f.domain != Domain::triangle)
        throw ValueError("tri haar expects a triangle-domain input, got " + f.describe());
    require_extension(a.out, ".csv", "--out");
    const MultiResFunction h = to_basis(f, Basis::haar);
    CsvTable table;
    table.header = {"channel", "index", "value"};
    const Eigen::Index cells = static_cast<Eigen::Index>(h.cell_count());
    for (int c = 0; c < h.channels; ++c)
        for (Eigen::Index k = 0; k < cells; ++k)
            table.rows.push_back({std::to_string(c), std::to_string(k),
                                  format_double(h.coeffs[c * cells + k])});
    save_csv(table, a.out);
    write_manifest(a.out, "tri haar", {a.out}, nullptr);
}

// --- unet-eval ---------------------------------------------------------------

struct UnetEvalArgs {
    std::string net;
    std::string input;
    int level = -1;  // -1 means the full net
    std::string out;
};

void run_unet_eval(const UnetEvalArgs& a) {
    const UNetState state = load_state(a.net);
    const MultiResFunction v = load_function(a.input);
    require_extension(a.out, ".mrf", "--out");
    const int level = a.level < 0 ? state.spec.levels : a.level;
    save_function(unet_forward(state, v, level), a.out);
    write_manifest(a.out, "unet-eval", {a.out}, nullptr);
}

// --- train-synth --------------------------------------------------------------

struct TrainSynthArgs {
    std::string target = "square";
    std::string pre = "identity";
    std::uint64_t seed = 0;
    int grid = 50;
    int hidden = 20;
    int applications = 100;
    int steps = 2000;
    double lr = 1e-3;
    bool no_residual = false;
    std::string report;
};

void run_train_synth(const TrainSynthArgs& a) {
    SyntheticConfig cfg;
    cfg.target = parse_target(a.target);
    cfg.pre = parse_preconditioner(a.pre);
    cfg.grid_size = a.grid;
    cfg.hidden = a.hidden;
    cfg.applications = a.applications;
    cfg.steps = a.steps;
    cfg.adam.lr = a.lr;
    cfg.residual_enabled = !a.no_residual;
    require_extension(a.report, ".json", "--report");

    const SyntheticResult res = synthetic_experiment(cfg, a.seed);

    json doc;
    doc["target"] = a.target;
    doc["pre"] = a.pre;
    doc["seed"] = a.seed;
    doc["grid_size"] = cfg.grid_size;
    doc["hidden"] = cfg.hidden;
    doc["applications"] = cfg.applications;
    doc["steps"] = cfg.steps;
    doc["lr"] = cfg.adam.lr;
    doc["residual"] = cfg.residual_enabled;
    doc["final_mse"] = res.final_mse;
    doc["max_weight_norm"] = res.max_weight_norm;
    save_text(doc.dump(2) + "\n", a.report);
    write_manifest(a.report, "train-synth", {a.report}, &a.seed);
}

// --- train-staged --------------------------------------------------------------

struct TrainStagedArgs {
    std::string config;
    std::string out;
    std::string trace;
    bool freeze = true;
};

// Stage datasets from the "data" block: either one generated set replicated
// across stages (staged_train projects it down per stage) or explicit .mrf
// file lists per stage under "stages".
std::vector<Dataset> stage_datasets(const json& data, const UNetSpec& spec,
                                    std::size_t stage_count) {
    const std::string task = data.at("task").get<std::string>();
    if (task == "files") {
        const json& stages = data.at("stages");
        if (stages.size() != stage_count)
            throw ValueError("data.stages has " + std::to_string(stages.size()) +
                             " entries but the schedule has " + std::to_string(stage_count) +
                             " stages");
        std::vector<Dataset> sets;
        for (const json& stage : stages) sets.push_back(dataset_from_file_lists(stage));
        return sets;
    }
    const int resolution = data.value("resolution", spec.finest_resolution);
    const Dataset set = make_task_dataset(
        task, spec.domain, resolution, spec.channels, data.at("samples").get<int>(),
        data.at("seed").get<std::uint64_t>(), data.value("detail_resolution", resolution - 1),
        data.value("lattice", false));
    return std::vector<Dataset>(stage_count, set);
}

void run_train_staged(const TrainStagedArgs& a) {
    const json config = load_json(a.config);
    require_extension(a.out, ".uns", "--out");
    require_extension(a.trace, ".csv", "--trace");

    UNetSpec spec;
    std::uint64_t net_seed = 0;
    TrainConfig cfg;
    std::vector<Dataset> datasets;
    try {
        const json& net = config.at("net");
        spec = spec_from_json(net);
        net_seed = net.at("seed").get<std::uint64_t>();
        const json train = config.value("train", json::object());
        cfg.steps = train.value("steps", 500);
        cfg.adam.lr = train.value("lr", 1e-3);
        if (train.contains("stages")) cfg.stages = train.at("stages").get<std::vector<int>>();
        cfg.freeze = a.freeze;
        const std::size_t stage_count =
            cfg.stages.empty() ? static_cast<std::size_t>(spec.levels) : cfg.stages.size();
        datasets = stage_datasets(config.at("data"), spec, stage_count);
    } catch (const json::exception& e) {
        throw IoError(a.config + ": " + e.what());
    }

    const StagedResult result = staged_train(build_unet(spec, net_seed), datasets, cfg);
    save_state(result.state, a.out);
    save_csv(trace_csv(result.traces), a.trace);
    write_manifest(a.out, "train-staged", {a.out, a.trace}, &net_seed);
}

// --- loss-table -----------------------------------------------------------------

struct LossTableArgs {
    std::string config;
    std::string out;
};

void run_loss_table(const LossTableArgs& a) {
    const json config = load_json(a.config);
    require_extension(a.out, ".csv", "--out");

    Dataset set;
    std::vector<int> resolutions;
    std::uint64_t seed = 0;
    try {
        const json& data = config.at("data");
        const int resolution = data.at("resolution").get<int>();
        seed = data.at("seed").get<std::uint64_t>();
        set = make_task_dataset(data.at("task").get<std::string>(),
                                parse_domain(data.value("domain", std::string("interval"))),
                                resolution, data.value("channels", 1),
                                data.at("samples").get<int>(), seed,
                                data.value("detail_resolution", resolution - 1),
                                data.value("lattice", true));
        if (config.contains("resolutions")) {
            resolutions = config.at("resolutions").get<std::vector<int>>();
        } else {
            for (int i = 0; i <= resolution; ++i) resolutions.push_back(i);
        }
    } catch (const json::exception& e) {
        throw IoError(a.config + ": " + e.what());
    }

    save_csv(loss_table_csv(conditional_loss_table(set, resolutions)), a.out);
    write_manifest(a.out, "loss-table", {a.out}, &seed);
}

// --- spectrum ---------------------------------------------------------------------

struct SpectrumArgs {
    int resolution = -1;
    double t = 0.0;
    std::string schedule = "linear";
    long long samples = 0;
    std::uint64_t seed = 0;
    std::string input;
    std::string out;
};

MultiResFunction signal_or_zeros(const std::string& input, int resolution, Domain domain,
                                 const char* flag) {
    if (!input.empty()) {
        MultiResFunction x0 = load_function(input);
        if (resolution >= 0 && resolution != x0.resolution)
            throw ValueError(std::string(flag) + " " + std::to_string(resolution) +
                             " disagrees with the input's resolution " +
                             std::to_string(x0.resolution));
        return x0;
    }
    if (resolution < 0)
        throw ValueError(std::string("either ") + flag + " or --input is required");
    return MultiResFunction::zeros(domain, resolution);
}

void run_spectrum(const SpectrumArgs& a) {
    const DiffusionSchedule schedule = schedule_by_name(a.schedule);
    const MultiResFunction x0 =
        signal_or_zeros(a.input, a.resolution, Domain::interval, "--resolution");
    require_extension(a.out, ".json", "--out");

    const SpectrumReport report = spectrum_variance(x0, a.t, schedule, a.samples, a.seed);
    save_text(to_json(report), a.out);
    const std::string mirror = csv_mirror(a.out);
    save_csv(spectrum_csv(report), mirror);
    write_manifest(a.out, "spectrum", {a.out, mirror}, &a.seed);
}

// --- consistency -------------------------------------------------------------------

struct ConsistencyArgs {
    int fine = -1;
    int coarse = 0;
    double t = 0.0;
    std::string schedule = "linear";
    long long samples = 0;
    std::uint64_t seed = 0;
    std::string input;
    std::string out;
};

void run_consistency(const ConsistencyArgs& a) {
    const DiffusionSchedule schedule = schedule_by_name(a.schedule);
    const MultiResFunction x0 = signal_or_zeros(a.input, a.fine, Domain::interval, "--fine");
    require_extension(a.out, ".json", "--out");

    const ConsistencyReport report =
        cross_resolution_consistency(x0, a.t, a.coarse, schedule, a.samples, a.seed);
    save_text(to_json(report), a.out);
    const std::string mirror = csv_mirror(a.out);
    save_csv(consistency_csv(report), mirror);
    write_manifest(a.out, "consistency", {a.out, mirror}, &a.seed);
}

// --- wiring -----------------------------------------------------------------------

void setup_commands(CLI::App& app) {
    {
        auto args = std::make_shared<DwtArgs>();
        CLI::App* cmd = app.add_subcommand("dwt", "Multilevel wavelet transform to CSV");
        cmd->add_option("--input", args->input, "interval-domain pixel-basis .mrf")->required();
        cmd->add_option("--levels", args->levels, "decomposition depth")->required();
        cmd->add_option("--bank", args->bank, "filter bank: haar or db2 (default haar)");
        cmd->add_option("--out", args->out, "output .csv (channel,band,index,value)")->required();
        cmd->callback([args] { run_dwt(*args); });
    }
    {
        auto args = std::make_shared<PdeArgs>();
        CLI::App* cmd = app.add_subcommand(
            "pde", "Galerkin solve of u'' = f on (0,1) with zero boundary values");
        cmd->add_option("--rhs", args->rhs, "right-hand side .mrf (interval, pixel)")->required();
        cmd->add_option("--resolution", args->resolution, "solver resolution")->required();
        cmd->add_option("--out", args->out, "solution .mrf (hat-function basis)")->required();
        cmd->callback([args] { run_pde(*args); });
    }
    {
        CLI::App* tri = app.add_subcommand("tri", "Triangle-domain utilities");
        tri->require_subcommand(1);
        {
            auto args = std::make_shared<TriLayoutArgs>();
            CLI::App* cmd = tri->add_subcommand("layout", "Cell addresses on the square grid");
            cmd->add_option("--depth", args->depth, "subdivision depth")->required();
            cmd->add_option("--out", args->out, "output .csv (row,col,address,index)")->required();
            cmd->callback([args] { run_tri_layout(*args); });
        }
        {
            auto args = std::make_shared<TriSynthArgs>();
            CLI::App* cmd = tri->add_subcommand("synth", "Random triangle-domain function");
            cmd->add_option("--depth", args->depth, "subdivision depth")->required();
            cmd->add_option("--channels", args->channels, "channel count (default 1)");
            cmd->add_option("--seed", args->seed, "value stream seed")->required();
            cmd->add_option("--out", args->out, "output .mrf")->required();
            cmd->callback([args] { run_tri_synth(*args); });
        }
        {
            auto args = std::make_shared<TriPoolArgs>();
            CLI::App* cmd = tri->add_subcommand("pool", "Average-pool to a coarser depth");
            cmd->add_option("--input", args->input, "triangle-domain .mrf")->required();
            cmd->add_option("--to", args->to, "target depth")->required();
            cmd->add_option("--out", args->out, "output .mrf")->required();
            cmd->callback([args] { run_tri_pool(*args); });
        }
        {
            auto args = std::make_shared<TriHaarArgs>();
            CLI::App* cmd = tri->add_subcommand("haar", "Sibling-quadruple transform to CSV");
            cmd->add_option("--input", args->input, "triangle-domain .mrf")->required();
            cmd->add_option("--out", args->out, "output .csv (channel,index,value)")->required();
            cmd->callback([args] { run_tri_haar(*args); });
        }
    }
    {
        auto args = std::make_shared<UnetEvalArgs>();
        CLI::App* cmd = app.add_subcommand("unet-eval", "Apply a saved net to a saved function");
        cmd->add_option("--net", args->net, "network state .uns")->required();
        cmd->add_option("--input", args->input, "input function .mrf")->required();
        cmd->add_option("--level", args->level, "evaluate the sub-net at this level (default: all)");
        cmd->add_option("--out", args->out, "output .mrf")->required();
        cmd->callback([args] { run_unet_eval(*args); });
    }
    {
        auto args = std::make_shared<TrainSynthArgs>();
        CLI::App* cmd = app.add_subcommand(
            "train-synth", "Scalar preconditioning study on a synthetic target");
        cmd->add_option("--target", args->target, "target function: square or cube");
        cmd->add_option("--pre", args->pre, "preconditioner: identity or abs");
        cmd->add_option("--seed", args->seed, "initialization seed")->required();
        cmd->add_option("--grid", args->grid, "fit grid size (default 50)");
        cmd->add_option("--hidden", args->hidden, "perceptron width (default 20)");
        cmd->add_option("--applications", args->applications,
                        "weight-shared block applications (default 100)");
        cmd->add_option("--steps", args->steps, "optimizer steps (default 2000)");
        cmd->add_option("--lr", args->lr, "Adam learning rate (default 1e-3)");
        cmd->add_flag("--no-residual", args->no_residual,
                      "score the bare preconditioner instead of training");
        cmd->add_option("--report", args->report, "result .json")->required();
        cmd->callback([args] { run_train_synth(*args); });
    }
    {
        auto args = std::make_shared<TrainStagedArgs>();
        CLI::App* cmd = app.add_subcommand(
            "train-staged", "Coarse-to-fine training driven by a JSON config");
        cmd->add_option("--config", args->config, "run config .json (net/train/data)")->required();
        cmd->add_option("--out", args->out, "trained state .uns")->required();
        cmd->add_option("--trace", args->trace, "loss trace .csv (stage,step,loss)")->required();
        cmd->add_flag("--freeze,!--no-freeze", args->freeze,
                      "pin finished levels between stages (default on)");
        cmd->callback([args] { run_train_staged(*args); });
    }
    {
        auto args = std::make_shared<LossTableArgs>();
        CLI::App* cmd = app.add_subcommand(
            "loss-table", "Regression-oracle losses across resolution pairs");
        cmd->add_option("--config", args->config, "suite config .json (data/resolutions)")->required();
        cmd->add_option("--out", args->out,
                        "output .csv (target_resolution,input_resolution,loss)")->required();
        cmd->callback([args] { run_loss_table(*args); });
    }
    {
        auto args = std::make_shared<SpectrumArgs>();
        CLI::App* cmd = app.add_subcommand(
            "spectrum", "Per-band variances of the noised signal, with confidence half-widths");
        cmd->add_option("--resolution", args->resolution,
                        "dyadic resolution of the zero signal (or pass --input)");
        cmd->add_option("--t", args->t, "diffusion time in [0, 1]")->required();
        cmd->add_option("--schedule", args->schedule,
                        "noise schedule: linear or exponential-saturating (default linear)");
        cmd->add_option("--samples", args->samples, "Monte Carlo sample count")->required();
        cmd->add_option("--seed", args->seed, "noise stream seed")->required();
        cmd->add_option("--input", args->input, "optional .mrf signal (default: zeros)");
        cmd->add_option("--out", args->out, "report .json; a .csv copy lands beside it")->required();
        cmd->callback([args] { run_spectrum(*args); });
    }
    {
        auto args = std::make_shared<ConsistencyArgs>();
        CLI::App* cmd = app.add_subcommand(
            "consistency", "Pooled fine process against the direct coarse process");
        cmd->add_option("--fine", args->fine,
                        "fine resolution of the zero signal (or pass --input)");
        cmd->add_option("--coarse", args->coarse, "coarse resolution")->required();
        cmd->add_option("--t", args->t, "diffusion time in [0, 1]")->required();
        cmd->add_option("--schedule", args->schedule,
                        "noise schedule: linear or exponential-saturating (default linear)");
        cmd->add_option("--samples", args->samples, "Monte Carlo sample count")->required();
        cmd->add_option("--seed", args->seed, "noise stream seed")->required();
        cmd->add_option("--input", args->input, "optional fine .mrf signal (default: zeros)");
        cmd->add_option("--out", args->out, "report .json; a .csv copy lands beside it")->required();
        cmd->callback([args] { run_consistency(*args); });
    }
}

}  // namespace

int main(int argc, char** argv) {
    g_argv.assign(argv, argv + argc);

    CLI::App app{"Multiresolution networks: transforms, training and diffusion reports"};
    app.require_subcommand(1);
    app.footer(
        "Exit codes: 0 success, 2 usage or bad argument, 3 file error,\n"
        "4 shape mismatch, 5 numeric failure, 1 anything else.");
    setup_commands(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "usage-error: " << single_line(e.what()) << "\n";
        return 2;
    } catch (const ValueError& e) {
        std::cerr << "usage-error: " << single_line(e.what()) << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "io-error: " << single_line(e.what()) << "\n";
        return 3;
    } catch (const ShapeError& e) {
        std::cerr << "shape-error: " << single_line(e.what()) << "\n";
        return 4;
    } catch (const NumericError& e) {
        std::cerr << "numeric-error: " << single_line(e.what()) << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error: " << single_line(e.what()) << "\n";
        return 1;
    }
    return 0;
}
