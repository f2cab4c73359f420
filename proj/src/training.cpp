#include "mrn/training.hpp"

#include <cmath>
#include <cstring>
#include <map>
#include <string>

#include "mrn/errors.hpp"
#include "mrn/rng.hpp"

namespace mrn {

namespace {

void check_side(const std::vector<MultiResFunction>& side, const char* label) {
    for (std::size_t k = 0; k < side.size(); ++k) {
        side[k].check_consistent();
        if (k == 0) continue;
        const MultiResFunction& a = side[0];
        const MultiResFunction& b = side[k];
        if (b.domain != a.domain || b.resolution != a.resolution ||
            b.channels != a.channels || b.basis != a.basis)
            throw ValueError(std::string("dataset ") + label + " entry " + std::to_string(k) +
                             " (" + b.describe() + ") does not match entry 0 (" + a.describe() +
                             ")");
    }
}

// Squared L2 distance between two functions on the same grid, summed over
// channels: coefficient differences squared, weighted by the cell measure.
double pair_loss(const MultiResFunction& a, const MultiResFunction& b) {
    return ((a.coeffs - b.coeffs) * (a.coeffs - b.coeffs)).sum() * a.cell_measure();
}

bool is_adapter_slot(const ParamSlot& p) {
    return p.name.rfind("head", 0) == 0 || p.name.rfind("tail", 0) == 0;
}

// Appends identity-initialized head/tail channel adapters for a level, once.
void ensure_adapters(UNetState& st, int level) {
    const std::string head = "head" + std::to_string(level);
    const std::string tail = "tail" + std::to_string(level);
    for (const ParamSlot& p : st.params)
        if (p.name == head + ".W") return;

    const int M = st.spec.channels;
    Tensor W = Tensor::zeros({M, M});
    for (int i = 0; i < M; ++i) W.data[i * M + i] = 1.0;
    W.requires_grad = true;
    Tensor b = Tensor::zeros({M});
    b.requires_grad = true;
    st.params.push_back({head + ".W", level, W});
    st.params.push_back({head + ".b", level, b});
    st.params.push_back({tail + ".W", level, W});
    st.params.push_back({tail + ".b", level, b});
}

// Full-batch Adam at one level. The dataset must already sit at the level's
// resolution. Returns the loss before each step plus the final loss.
std::vector<double> run_train_loop(UNetState& st, const Dataset& data, int level,
                                   const TrainConfig& cfg) {
    if (cfg.steps < 0) throw ValueError("step count must be non-negative");
    if (data.size() == 0) throw ValueError("cannot train on an empty dataset");
    if (st.frozen.size() != static_cast<std::size_t>(st.spec.levels) + 1)
        st.frozen.assign(static_cast<std::size_t>(st.spec.levels) + 1, 0);

    UNetGraph ug = build_unet_graph(st, level, true);
    Graph& g = ug.graph;
    const UNetSpec& s = st.spec;
    const int r = level_resolution(s, level);
    ValueId target = g.constant(to_tensor(MultiResFunction::zeros(s.domain, r, s.channels)));
    ValueId loss = g.mse_loss(ug.output, target);

    // Slots the optimizer may move: bodies of the levels this graph spans
    // and the level's own adapters, minus frozen levels. Adapters of other
    // levels are not part of the formula at all.
    std::vector<std::size_t> live;
    for (std::size_t i = 0; i < st.params.size(); ++i) {
        const ParamSlot& p = st.params[i];
        const bool in_graph = is_adapter_slot(p) ? p.level == level : p.level <= level;
        if (in_graph && !st.frozen[static_cast<std::size_t>(p.level)]) live.push_back(i);
    }
    std::vector<Tensor*> params;
    params.reserve(live.size());
    for (std::size_t i : live) params.push_back(&st.params[i].tensor);

    // The traced loss is the mean over pairs of the channel-summed squared
    // L2 distance; the mse node averages over channels as well, hence the
    // rescale. The optimizer sees the mse mean, the same objective up to
    // that constant factor.
    const double rescale = static_cast<double>(s.channels);
    const double n = static_cast<double>(data.size());

    auto batch_loss = [&](bool with_grads, std::vector<Tensor>& grads) {
        double total = 0.0;
        for (std::size_t k = 0; k < data.size(); ++k) {
            g.set_value(ug.input, to_tensor(data.inputs[k]));
            g.set_value(target, to_tensor(data.targets[k]));
            g.eval(loss);
            total += g.value(loss).data[0] * rescale;
            if (!with_grads) continue;
            g.backward(loss);
            for (std::size_t t = 0; t < live.size(); ++t) {
                const ValueId id = ug.param_ids[live[t]];
                if (g.has_grad(id)) grads[t].data += g.grad(id).data;
            }
        }
        return total / n;
    };

    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(cfg.steps) + 1);
    AdamState adam;
    std::vector<Tensor> grads;
    for (int step = 0; step < cfg.steps; ++step) {
        grads.clear();
        for (std::size_t i : live) grads.push_back(Tensor::zeros(st.params[i].tensor.shape));
        trace.push_back(batch_loss(true, grads));
        if (params.empty()) continue;
        for (Tensor& gr : grads) gr.data /= n;
        adam_step(params, grads, adam, cfg.adam);
        ug.load_params(st);
    }
    trace.push_back(batch_loss(false, grads));
    return trace;
}

Dataset to_net_resolution(const Dataset& data, const UNetSpec& s, int level) {
    data.check_consistent();
    if (data.size() == 0) throw ValueError("cannot train on an empty dataset");
    const int r = level_resolution(s, level);
    if (data.inputs[0].resolution < r || data.targets[0].resolution < r)
        throw ValueError("dataset at resolution " + std::to_string(data.inputs[0].resolution) +
                         " is below the net's resolution " + std::to_string(r));
    return project_dataset(data, r, r);
}

}  // namespace

void Dataset::check_consistent() const {
    if (inputs.size() != targets.size())
        throw ValueError("dataset has " + std::to_string(inputs.size()) + " inputs but " +
                         std::to_string(targets.size()) + " targets");
    check_side(inputs, "input");
    check_side(targets, "target");
}

Dataset project_dataset(const Dataset& data, int input_resolution, int target_resolution) {
    data.check_consistent();
    Dataset out;
    out.inputs.reserve(data.size());
    out.targets.reserve(data.size());
    for (std::size_t k = 0; k < data.size(); ++k) {
        out.inputs.push_back(project(data.inputs[k], input_resolution));
        out.targets.push_back(project(data.targets[k], target_resolution));
    }
    return out;
}

TrainResult train(UNetState state, const Dataset& data, const TrainConfig& cfg) {
    const int level = state.spec.levels;
    Dataset at_res = to_net_resolution(data, state.spec, level);
    TrainResult out;
    out.trace = run_train_loop(state, at_res, level, cfg);
    out.state = std::move(state);
    return out;
}

StagedResult staged_train(UNetState state, const std::vector<Dataset>& stage_data,
                          const TrainConfig& cfg) {
    const int J = state.spec.levels;
    std::vector<int> stages = cfg.stages;
    if (stages.empty())
        for (int lv = 1; lv <= J; ++lv) stages.push_back(lv);
    for (std::size_t k = 0; k < stages.size(); ++k) {
        if (stages[k] < 1 || stages[k] > J)
            throw ValueError("stage level " + std::to_string(stages[k]) + " outside 1.." +
                             std::to_string(J));
        if (k > 0 && stages[k] <= stages[k - 1])
            throw ValueError("stage levels must be strictly increasing");
    }
    if (stage_data.size() != stages.size())
        throw ValueError("schedule has " + std::to_string(stages.size()) + " stages but " +
                         std::to_string(stage_data.size()) + " datasets were provided");

    StagedResult out;
    for (std::size_t k = 0; k < stages.size(); ++k) {
        const int lv = stages[k];
        ensure_adapters(state, lv);
        Dataset at_res = to_net_resolution(stage_data[k], state.spec, lv);
        out.traces.push_back(run_train_loop(state, at_res, lv, cfg));
        if (cfg.freeze)
            for (int l = 0; l <= lv; ++l) state.frozen[static_cast<std::size_t>(l)] = 1;
    }
    out.state = std::move(state);
    return out;
}

double evaluate_loss(const UNetState& state, const Dataset& data, int level) {
    Dataset at_res = to_net_resolution(data, state.spec, level);
    UNetGraph ug = build_unet_graph(state, level, true);
    Graph& g = ug.graph;
    const UNetSpec& s = state.spec;
    const int r = level_resolution(s, level);
    ValueId target = g.constant(to_tensor(MultiResFunction::zeros(s.domain, r, s.channels)));
    ValueId loss = g.mse_loss(ug.output, target);
    double total = 0.0;
    for (std::size_t k = 0; k < at_res.size(); ++k) {
        g.set_value(ug.input, to_tensor(at_res.inputs[k]));
        g.set_value(target, to_tensor(at_res.targets[k]));
        g.eval(loss);
        total += g.value(loss).data[0] * static_cast<double>(s.channels);
    }
    return total / static_cast<double>(at_res.size());
}

// --- Conditional-mean regression oracle -----------------------------------

namespace {

std::string coeff_key(const arrayd& a) {
    return std::string(reinterpret_cast<const char*>(a.data()),
                       sizeof(double) * static_cast<std::size_t>(a.size()));
}

// Grouping is bitwise on the coefficient bytes, so lookup must be too.
bool coeffs_identical(const arrayd& a, const arrayd& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

int RegressionOracle::find(const MultiResFunction& input) const {
    for (std::size_t i = 0; i < keys.size(); ++i) {
        const MultiResFunction& k = keys[i];
        if (k.domain != input.domain || k.resolution != input.resolution ||
            k.channels != input.channels || k.basis != input.basis)
            continue;
        if (coeffs_identical(k.coeffs, input.coeffs)) return static_cast<int>(i);
    }
    return -1;
}

const MultiResFunction& RegressionOracle::predict(const MultiResFunction& input) const {
    const int i = find(input);
    if (i < 0)
        throw ValueError("oracle has no group for this input (" + input.describe() + ")");
    return values[static_cast<std::size_t>(i)];
}

RegressionOracle regression_oracle(const Dataset& data, int target_resolution,
                                   int input_resolution) {
    data.check_consistent();
    if (data.size() == 0) throw ValueError("regression oracle needs a non-empty dataset");

    RegressionOracle o;
    o.target_resolution = target_resolution;
    o.input_resolution = input_resolution;

    std::map<std::string, int> group_of;
    std::vector<int> counts;
    std::vector<int> group(data.size());
    std::vector<MultiResFunction> projected_targets;
    projected_targets.reserve(data.size());
    for (std::size_t k = 0; k < data.size(); ++k) {
        MultiResFunction pv = project(data.inputs[k], input_resolution);
        MultiResFunction qw = project(data.targets[k], target_resolution);
        auto [it, fresh] = group_of.try_emplace(coeff_key(pv.coeffs),
                                                static_cast<int>(o.keys.size()));
        if (fresh) {
            o.keys.push_back(std::move(pv));
            o.values.push_back(qw);
            counts.push_back(1);
        } else {
            o.values[static_cast<std::size_t>(it->second)].coeffs += qw.coeffs;
            ++counts[static_cast<std::size_t>(it->second)];
        }
        group[k] = it->second;
        projected_targets.push_back(std::move(qw));
    }
    for (std::size_t b = 0; b < o.values.size(); ++b)
        o.values[b].coeffs /= static_cast<double>(counts[b]);

    double acc = 0.0;
    for (std::size_t k = 0; k < data.size(); ++k)
        acc += pair_loss(projected_targets[k], o.values[static_cast<std::size_t>(group[k])]);
    o.loss = acc / static_cast<double>(data.size());
    return o;
}

double oracle_empirical_loss(const RegressionOracle& oracle, const Dataset& data) {
    data.check_consistent();
    if (data.size() == 0) throw ValueError("cannot evaluate the oracle on an empty dataset");
    double acc = 0.0;
    for (std::size_t k = 0; k < data.size(); ++k) {
        MultiResFunction pv = project(data.inputs[k], oracle.input_resolution);
        MultiResFunction qw = project(data.targets[k], oracle.target_resolution);
        acc += pair_loss(qw, oracle.predict(pv));
    }
    return acc / static_cast<double>(data.size());
}

std::vector<ConditionalLoss> conditional_loss_table(const Dataset& data,
                                                    const std::vector<int>& resolutions) {
    if (resolutions.empty()) throw ValueError("loss table needs at least one resolution");
    for (std::size_t k = 0; k < resolutions.size(); ++k)
        if (k > 0 && resolutions[k] <= resolutions[k - 1])
            throw ValueError("loss table resolutions must be strictly increasing");

    const std::size_t m = resolutions.size();
    std::vector<ConditionalLoss> rows;
    rows.reserve(m * m);
    for (int i : resolutions)
        for (int j : resolutions)
            rows.push_back({i, j, regression_oracle(data, i, j).loss});

    // Any conditional mean obeys both orderings exactly; the slack only
    // absorbs floating-point rounding in the sums.
    const double slack = 1e-12;
    auto at = [&](std::size_t ti, std::size_t tj) { return rows[ti * m + tj].loss; };
    for (std::size_t tj = 0; tj < m; ++tj)
        for (std::size_t ti = 0; ti + 1 < m; ++ti)
            if (at(ti, tj) > at(ti + 1, tj) + slack)
                throw NumericError("coarsening the target from resolution " +
                                   std::to_string(resolutions[ti + 1]) + " to " +
                                   std::to_string(resolutions[ti]) +
                                   " increased the oracle loss at input resolution " +
                                   std::to_string(resolutions[tj]));
    for (std::size_t ti = 0; ti < m; ++ti)
        for (std::size_t tj = 0; tj + 1 < m; ++tj)
            if (at(ti, tj + 1) > at(ti, tj) + slack)
                throw NumericError("refining the inputs from resolution " +
                                   std::to_string(resolutions[tj]) + " to " +
                                   std::to_string(resolutions[tj + 1]) +
                                   " increased the oracle loss at target resolution " +
                                   std::to_string(resolutions[ti]));
    return rows;
}

// --- Scalar preconditioning study ------------------------------------------

namespace {

// Scales a weight matrix back below unit Frobenius norm.
void renormalize(Tensor& W) {
    const double nrm = std::sqrt((W.data * W.data).sum());
    if (nrm >= 1.0) W.data /= nrm * (1.0 + 1e-6);
}

double frobenius(const Tensor& W) { return std::sqrt((W.data * W.data).sum()); }

Tensor uniform_tensor(std::vector<int> shape, double bound, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] = rng.uniform(-bound, bound);
    t.requires_grad = true;
    return t;
}

}  // namespace

SyntheticResult synthetic_experiment(const SyntheticConfig& cfg, std::uint64_t seed) {
    if (cfg.grid_size < 2) throw ValueError("grid needs at least two points");
    if (cfg.hidden < 1) throw ValueError("hidden width must be positive");
    if (cfg.applications < 1) throw ValueError("block must be applied at least once");
    if (cfg.steps < 0) throw ValueError("step count must be non-negative");

    const int N = cfg.grid_size;
    const int h = cfg.hidden;
    Tensor grid = Tensor::zeros({1, 1, N});
    Tensor labels = Tensor::zeros({1, 1, N});
    Tensor precond = Tensor::zeros({1, 1, N});
    for (int i = 0; i < N; ++i) {
        const double v = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(N - 1);
        grid.data[i] = v;
        labels.data[i] = cfg.target == SyntheticConfig::Target::square ? v * v : v * v * v;
        precond.data[i] = cfg.pre == SyntheticConfig::Preconditioner::identity ? v : std::abs(v);
    }

    // Three affine layers drawn like every other parameter tensor here
    // (uniform within +-1/sqrt(fan_in)), weights clamped from the start so
    // the norm bound holds before the first step too.
    Rng rng(seed);
    std::vector<Tensor> theta;
    theta.push_back(uniform_tensor({h, 1}, 1.0, rng));
    theta.push_back(uniform_tensor({h}, 1.0, rng));
    theta.push_back(uniform_tensor({h, h}, 1.0 / std::sqrt(static_cast<double>(h)), rng));
    theta.push_back(uniform_tensor({h}, 1.0 / std::sqrt(static_cast<double>(h)), rng));
    theta.push_back(uniform_tensor({1, h}, 1.0 / std::sqrt(static_cast<double>(h)), rng));
    theta.push_back(uniform_tensor({1}, 1.0 / std::sqrt(static_cast<double>(h)), rng));
    renormalize(theta[0]);
    renormalize(theta[2]);
    renormalize(theta[4]);

    SyntheticResult out;
    out.max_weight_norm = std::max({frobenius(theta[0]), frobenius(theta[2]),
                                    frobenius(theta[4])});

    Graph g;
    ValueId loss;
    std::vector<ValueId> pids(theta.size());
    if (cfg.residual_enabled) {
        for (std::size_t i = 0; i < theta.size(); ++i) pids[i] = g.parameter(theta[i]);
        // An invertible-ResNet-style flow warm-started at the guess: the
        // perceptron is a bounded step applied repeatedly to its own state,
        // beginning from the preconditioner's values. Before training the
        // model is the preconditioner itself; afterwards it is the guess
        // refined by the accumulated steps. A flow started at |v| can only
        // ever produce even functions of v, which is what makes the guess
        // decisive on these targets.
        ValueId cur = g.constant(precond);
        for (int d = 0; d < cfg.applications; ++d) {
            ValueId step = g.relu(g.linear(cur, pids[0], pids[1]));
            step = g.relu(g.linear(step, pids[2], pids[3]));
            step = g.linear(step, pids[4], pids[5]);
            cur = g.add(cur, step);
        }
        loss = g.mse_loss(cur, g.constant(labels));
    } else {
        loss = g.mse_loss(g.constant(precond), g.constant(labels));
    }

    if (cfg.residual_enabled) {
        std::vector<Tensor*> params;
        for (Tensor& t : theta) params.push_back(&t);
        AdamState adam;
        std::vector<Tensor> grads;
        for (int step = 0; step < cfg.steps; ++step) {
            g.eval(loss);
            g.backward(loss);
            grads.clear();
            for (std::size_t i = 0; i < theta.size(); ++i) grads.push_back(g.grad(pids[i]));
            adam_step(params, grads, adam, cfg.adam);
            renormalize(theta[0]);
            renormalize(theta[2]);
            renormalize(theta[4]);
            out.max_weight_norm = std::max({out.max_weight_norm, frobenius(theta[0]),
                                            frobenius(theta[2]), frobenius(theta[4])});
            for (std::size_t i = 0; i < theta.size(); ++i) g.set_value(pids[i], theta[i]);
        }
    }
    out.final_mse = g.eval(loss).data[0];
    return out;
}

}  // namespace mrn
