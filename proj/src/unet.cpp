#include "mrn/unet.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <utility>

#include "mrn/errors.hpp"
#include "mrn/rng.hpp"

namespace mrn {

const char* encoder_kind_name(EncoderKind k) {
    return k == EncoderKind::resnet ? "resnet" : "identity";
}

const char* bottleneck_kind_name(BottleneckKind k) {
    return k == BottleneckKind::resnet ? "resnet" : "identity";
}

const char* skip_mode_name(SkipMode m) { return m == SkipMode::normal ? "normal" : "zeroed"; }

void validate_unet_spec(const UNetSpec& s) {
    if (s.levels < 1 || s.levels > 16)
        throw ValueError("levels must be in 1..16, got " + std::to_string(s.levels));
    if (s.channels < 1)
        throw ValueError("channels must be positive, got " + std::to_string(s.channels));
    if (s.hidden_base < 1)
        throw ValueError("hidden_base must be positive, got " + std::to_string(s.hidden_base));
    if (s.coarsest_resolution < 0 || s.coarsest_resolution > s.finest_resolution)
        throw ValueError("coarsest resolution " + std::to_string(s.coarsest_resolution) +
                         " must lie in 0.." + std::to_string(s.finest_resolution));
    if (s.finest_resolution - s.coarsest_resolution > s.levels)
        throw ValueError("resolution ladder " + std::to_string(s.coarsest_resolution) + ".." +
                         std::to_string(s.finest_resolution) + " does not fit in " +
                         std::to_string(s.levels) + " levels");
    domain_cells(s.domain, s.finest_resolution);  // range-checks the resolution
    if (!s.encoder_kinds.empty() && static_cast<int>(s.encoder_kinds.size()) != s.levels)
        throw ValueError("encoder kind list has " + std::to_string(s.encoder_kinds.size()) +
                         " entries for " + std::to_string(s.levels) + " levels");
}

EncoderKind encoder_kind_at(const UNetSpec& s, int level) {
    if (level < 1 || level > s.levels)
        throw ValueError("no encoder at level " + std::to_string(level));
    if (s.encoder_kinds.empty()) return EncoderKind::resnet;
    return s.encoder_kinds[static_cast<std::size_t>(level - 1)];
}

bool is_multiresnet(const UNetSpec& s) {
    for (int lvl = 1; lvl <= s.levels; ++lvl)
        if (encoder_kind_at(s, lvl) != EncoderKind::identity) return false;
    return true;
}

int level_resolution(const UNetSpec& s, int level) {
    if (level < 0 || level > s.levels)
        throw ValueError("level " + std::to_string(level) + " outside 0.." +
                         std::to_string(s.levels));
    if (!s.multi_subspace) return s.finest_resolution;
    return std::max(s.coarsest_resolution, s.finest_resolution - (s.levels - level));
}

int level_hidden(const UNetSpec& s, int level) {
    if (level < 0 || level > s.levels)
        throw ValueError("level " + std::to_string(level) + " outside 0.." +
                         std::to_string(s.levels));
    return s.hidden_base << (s.levels - level);
}

std::int64_t UNetState::parameter_count() const {
    std::int64_t n = 0;
    for (const ParamSlot& p : params) n += static_cast<std::int64_t>(p.tensor.size());
    return n;
}

std::int64_t UNetState::encoder_parameter_count() const {
    std::int64_t n = 0;
    for (const ParamSlot& p : params)
        if (p.name.rfind("enc", 0) == 0) n += static_cast<std::int64_t>(p.tensor.size());
    return n;
}

std::vector<Tensor*> UNetState::all_tensors() {
    std::vector<Tensor*> out;
    out.reserve(params.size());
    for (ParamSlot& p : params) out.push_back(&p.tensor);
    return out;
}

std::vector<Tensor*> UNetState::trainable_tensors() {
    std::vector<Tensor*> out;
    for (ParamSlot& p : params)
        if (!frozen[static_cast<std::size_t>(p.level)]) out.push_back(&p.tensor);
    return out;
}

namespace {

Tensor init_uniform(std::vector<int> shape, double bound, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (Eigen::Index i = 0; i < t.size(); ++i)
        t.data[i] = (2.0 * rng.uniform() - 1.0) * bound;
    t.requires_grad = true;
    return t;
}

// conv(in->hidden), relu, conv(hidden->out): the four tensors of one
// residual body, appended in a fixed order so initialization is a pure
// function of the seed.
void add_body(UNetState& st, Rng& rng, const std::string& base, int level, int in_ch, int hidden,
              int out_ch) {
    const double bound1 = 1.0 / std::sqrt(9.0 * in_ch);
    const double bound2 = 1.0 / std::sqrt(9.0 * hidden);
    st.params.push_back({base + ".k1", level, init_uniform({hidden, in_ch, 3, 3}, bound1, rng)});
    st.params.push_back({base + ".b1", level, init_uniform({hidden}, bound1, rng)});
    st.params.push_back({base + ".k2", level, init_uniform({out_ch, hidden, 3, 3}, bound2, rng)});
    st.params.push_back({base + ".b2", level, init_uniform({out_ch}, bound2, rng)});
}

}  // namespace

UNetState build_unet(const UNetSpec& spec, std::uint64_t seed) {
    validate_unet_spec(spec);
    UNetState st;
    st.spec = spec;
    st.frozen.assign(static_cast<std::size_t>(spec.levels) + 1, 0);
    Rng rng(seed);
    const int M = spec.channels;
    if (spec.bottleneck == BottleneckKind::resnet)
        add_body(st, rng, "bot", 0, M, level_hidden(spec, 0), M);
    for (int lvl = 1; lvl <= spec.levels; ++lvl) {
        const int h = level_hidden(spec, lvl);
        const std::string tag = std::to_string(lvl);
        if (encoder_kind_at(spec, lvl) == EncoderKind::resnet)
            add_body(st, rng, "enc" + tag, lvl, M, h, M);
        add_body(st, rng, "dec" + tag, lvl, 2 * M, h, M);
    }
    return st;
}

void zero_residual_init(UNetState& state) {
    for (ParamSlot& p : state.params) p.tensor.data.setZero();
}

void UNetGraph::load_params(const UNetState& state) {
    if (state.params.size() != param_ids.size())
        throw ValueError("graph was built for " + std::to_string(param_ids.size()) +
                         " parameter slots, state has " + std::to_string(state.params.size()));
    for (std::size_t i = 0; i < param_ids.size(); ++i)
        graph.set_value(param_ids[i], state.params[i].tensor);
}

UNetGraph build_unet_graph(const UNetState& state, int level, bool with_adapters) {
    const UNetSpec& s = state.spec;
    validate_unet_spec(s);
    if (level < 0 || level > s.levels)
        throw ValueError("resolution level " + std::to_string(level) + " exceeds net depth " +
                         std::to_string(s.levels));

    UNetGraph ug;
    ug.level = level;
    Graph& g = ug.graph;

    std::map<std::string, ValueId> pid;
    ug.param_ids.reserve(state.params.size());
    for (const ParamSlot& p : state.params) {
        ValueId id = g.parameter(p.tensor);
        ug.param_ids.push_back(id);
        pid[p.name] = id;
    }

    ug.input = g.leaf(to_tensor(MultiResFunction::zeros(s.domain, level_resolution(s, level),
                                                        s.channels)));

    auto body = [&](ValueId x, const std::string& base) {
        ValueId c1 = g.conv2d(x, pid.at(base + ".k1"), pid.at(base + ".b1"));
        return g.conv2d(g.relu(c1), pid.at(base + ".k2"), pid.at(base + ".b2"));
    };

    std::function<ValueId(int, ValueId)> apply = [&](int lvl, ValueId x) -> ValueId {
        if (lvl == 0) {
            if (s.bottleneck == BottleneckKind::identity) return x;
            return g.add(x, body(x, "bot"));
        }
        const std::string tag = std::to_string(lvl);
        ValueId vt = x;
        if (encoder_kind_at(s, lvl) == EncoderKind::resnet) vt = g.add(x, body(x, "enc" + tag));

        const int r_here = level_resolution(s, lvl);
        const int r_below = level_resolution(s, lvl - 1);
        ValueId down = vt;
        if (r_below < r_here) down = g.avg_pool_2x2(vt);

        ValueId w = apply(lvl - 1, down);

        ValueId up = w;
        if (r_below < r_here) {
            // Intervals live as 1 x N images; every other domain grows both
            // grid axes per resolution step.
            const bool dup_h = s.domain != Domain::interval;
            up = g.upsample_duplicate_2x(w, dup_h, true);
        }

        ValueId skip = vt;
        if (s.skip_mode == SkipMode::zeroed)
            skip = g.constant(to_tensor(MultiResFunction::zeros(s.domain, r_here, s.channels)));

        ValueId res = body(g.concat_channels(up, skip), "dec" + tag);
        if (lvl == level) {
            ug.pre_output = up;
            ug.residual_output = res;
        }
        return g.add(up, res);
    };

    const std::string head = "head" + std::to_string(level);
    const std::string tail = "tail" + std::to_string(level);
    ValueId entry = ug.input;
    if (with_adapters && pid.count(head + ".W"))
        entry = g.linear(ug.input, pid.at(head + ".W"), pid.at(head + ".b"));

    ValueId out = apply(level, entry);
    if (with_adapters && pid.count(tail + ".W"))
        out = g.linear(out, pid.at(tail + ".W"), pid.at(tail + ".b"));
    ug.output = out;
    return ug;
}

namespace {

void check_net_input(const UNetSpec& s, const MultiResFunction& v, int level) {
    if (level < 0 || level > s.levels)
        throw ValueError("resolution level " + std::to_string(level) + " exceeds net depth " +
                         std::to_string(s.levels));
    v.check_consistent();
    if (v.domain != s.domain)
        throw ShapeError(std::string("net is built on the ") + domain_name(s.domain) +
                         ", input lives on the " + domain_name(v.domain));
    if (v.basis != Basis::pixel)
        throw ValueError(std::string("net consumes pixel-basis functions, got ") +
                         basis_name(v.basis));
    if (v.channels != s.channels)
        throw ShapeError("net carries " + std::to_string(s.channels) + " channels, input has " +
                         std::to_string(v.channels));
    const int want = level_resolution(s, level);
    if (v.resolution != want)
        throw ShapeError("level " + std::to_string(level) + " expects resolution " +
                         std::to_string(want) + ", got " + std::to_string(v.resolution));
}

}  // namespace

MultiResFunction unet_forward(const UNetState& state, const MultiResFunction& v, int level) {
    check_net_input(state.spec, v, level);
    UNetGraph ug = build_unet_graph(state, level);
    ug.graph.set_value(ug.input, to_tensor(v));
    Tensor y = ug.graph.eval(ug.output);
    return from_tensor(y, state.spec.domain, v.resolution);
}

std::pair<MultiResFunction, MultiResFunction> precondition_split(const UNetState& state,
                                                                 const MultiResFunction& v,
                                                                 int level) {
    if (level == 0) throw ValueError("level 0 has no lower resolution to precondition on");
    check_net_input(state.spec, v, level);
    UNetGraph ug = build_unet_graph(state, level);
    ug.graph.set_value(ug.input, to_tensor(v));
    ug.graph.eval(ug.output);
    const Domain d = state.spec.domain;
    return {from_tensor(ug.graph.value(ug.pre_output), d, v.resolution),
            from_tensor(ug.graph.value(ug.residual_output), d, v.resolution)};
}

std::vector<MultiResFunction> multiresnet_skips(const MultiResFunction& v, int levels) {
    v.check_consistent();
    if (levels < 0) throw ValueError("skip pyramid depth must be non-negative");
    if (levels > v.resolution)
        throw ValueError("cannot pool resolution " + std::to_string(v.resolution) + " down " +
                         std::to_string(levels) + " steps");
    std::vector<MultiResFunction> out;
    out.reserve(static_cast<std::size_t>(levels) + 1);
    out.push_back(v);
    for (int k = 1; k <= levels; ++k) out.push_back(project(out.back(), v.resolution - k));
    return out;
}

Tensor resnet_apply(const ResNetOp& op, const Tensor& x) {
    Tensor pre;
    switch (op.pre) {
        case ResNetOp::Pre::identity_on_input:
            pre = x;
            break;
        case ResNetOp::Pre::custom_function:
            if (!op.custom_pre) throw ValueError("custom preconditioner is not set");
            pre = op.custom_pre(x);
            break;
        case ResNetOp::Pre::lower_resolution_unet: {
            if (op.unet == nullptr) throw ValueError("lower-resolution net is not set");
            const UNetSpec& s = op.unet->spec;
            const int r_hi = level_resolution(s, op.unet_level + 1);
            const int r_lo = level_resolution(s, op.unet_level);
            MultiResFunction f = from_tensor(x, s.domain, r_hi);
            MultiResFunction w = unet_forward(*op.unet, project(f, r_lo), op.unet_level);
            pre = to_tensor(include(w, r_hi));
            break;
        }
    }
    if (op.residual) {
        Tensor r = op.residual(x);
        if (!r.same_shape(pre))
            throw ShapeError("residual output shape " + r.shape_string() +
                             " does not match preconditioner shape " + pre.shape_string());
        pre.data += r.data;
    }
    pre.requires_grad = false;
    return pre;
}

}  // namespace mrn
