#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mrn/autodiff.hpp"
#include "mrn/spaces.hpp"

namespace mrn {

enum class EncoderKind : int { resnet = 0, identity = 1 };
enum class BottleneckKind : int { resnet = 0, identity = 1 };
enum class SkipMode : int { normal = 0, zeroed = 1 };

const char* encoder_kind_name(EncoderKind k);
const char* bottleneck_kind_name(BottleneckKind k);
const char* skip_mode_name(SkipMode m);

// Architecture of a U-Net over the nested grids of one domain. Levels are
// numbered 1..levels from coarse to fine, with the bottleneck as level 0.
// Level i works at resolution max(coarsest, finest - (levels - i)), so each
// step down the hierarchy pools once until the ladder bottoms out at
// coarsest_resolution; setting coarsest == finest collapses the ladder to a
// single grid. With multi_subspace off every level stays at the finest
// resolution and nothing is pooled, the plain-ResNet ablation.
struct UNetSpec {
    Domain domain = Domain::interval;
    int levels = 1;
    int finest_resolution = 1;
    int coarsest_resolution = 0;
    int channels = 1;
    // Residual-body width at the finest level; widths double per step down.
    int hidden_base = 4;
    // One entry per level 1..levels; empty means resnet everywhere. All
    // identity makes the net a Multi-ResNet: no encoder parameters, the
    // fixed projections alone carry information down the hierarchy.
    std::vector<EncoderKind> encoder_kinds;
    ProjectionOp::Kind projection = ProjectionOp::Kind::avg_pool;
    BottleneckKind bottleneck = BottleneckKind::resnet;
    SkipMode skip_mode = SkipMode::normal;
    bool multi_subspace = true;
};

void validate_unet_spec(const UNetSpec& spec);
EncoderKind encoder_kind_at(const UNetSpec& spec, int level);
bool is_multiresnet(const UNetSpec& spec);
// Grid resolution a level works at, for level in 0..levels.
int level_resolution(const UNetSpec& spec, int level);
// Residual-body channel width at a level.
int level_hidden(const UNetSpec& spec, int level);

// One named parameter tensor. level ties it to a rung of the hierarchy for
// freezing (0 = bottleneck); the name encodes the role, e.g. "dec2.k1".
struct ParamSlot {
    std::string name;
    int level = 0;
    Tensor tensor;
};

struct UNetState {
    UNetSpec spec;
    std::vector<ParamSlot> params;
    // One flag per level 0..levels; 1 means optimizers must leave every
    // tensor of that level untouched.
    std::vector<std::uint8_t> frozen;

    std::int64_t parameter_count() const;
    std::int64_t encoder_parameter_count() const;
    std::vector<Tensor*> all_tensors();
    std::vector<Tensor*> trainable_tensors();
};

// Allocates and deterministically initializes all parameters: uniform in
// +-1/sqrt(fan_in) per tensor, drawn in slot order from the seed.
UNetState build_unet(const UNetSpec& spec, std::uint64_t seed);

// Zeroes every residual body, so encoders act as the identity, decoders as
// the bare inclusion, and a resnet bottleneck as the identity.
void zero_residual_init(UNetState& state);

// The forward pass compiled onto a Graph: leaves for the input and every
// parameter slot, plus handles to the output and to the inclusion feeding
// the top-level decoder (the preconditioner half of the output) and the
// decoder body output (the residual half). Rebinding leaf values via
// load_params/set_value and re-evaluating lets a training loop reuse one
// graph across steps.
struct UNetGraph {
    Graph graph;
    int level = 0;
    ValueId input = -1;
    ValueId output = -1;
    ValueId pre_output = -1;       // -1 when level == 0
    ValueId residual_output = -1;  // -1 when level == 0
    std::vector<ValueId> param_ids;  // parallel to UNetState::params

    void load_params(const UNetState& state);
};

// with_adapters additionally wraps the recursion in the level's head/tail
// channel-mixing slots when the state carries them (staged training creates
// and trains these at each stage boundary). The pre/residual handles always
// refer to the raw recursion, so the exact inclusion-plus-body split of the
// output holds only without adapters.
UNetGraph build_unet_graph(const UNetState& state, int level, bool with_adapters = false);

// Evaluates the recursion at a level: encode, pool, recurse, decode against
// the skip. The input must be a pixel-basis function at the level's
// resolution.
MultiResFunction unet_forward(const UNetState& state, const MultiResFunction& v, int level);

// Splits the output at a level >= 1 into the included lower-level output and
// the decoder's learned correction; the two halves add back to the forward
// pass exactly.
std::pair<MultiResFunction, MultiResFunction> precondition_split(const UNetState& state,
                                                                 const MultiResFunction& v,
                                                                 int level);

// Parameter-free skip pyramid: entry k is v averaged down k resolution
// steps, so entry 0 is v itself.
std::vector<MultiResFunction> multiresnet_skips(const MultiResFunction& v, int levels);

// A map written as preconditioner plus residual correction. The
// preconditioner is the identity, a lower-level U-Net sandwiched between the
// projection down and the inclusion back up, or a caller-supplied function;
// the residual is any tensor map, typically a small parameterized graph.
struct ResNetOp {
    enum class Pre { identity_on_input, lower_resolution_unet, custom_function };
    Pre pre = Pre::identity_on_input;
    const UNetState* unet = nullptr;  // lower_resolution_unet: run at unet_level
    int unet_level = 0;
    std::function<Tensor(const Tensor&)> custom_pre;
    std::function<Tensor(const Tensor&)> residual;  // empty = zero residual
};

Tensor resnet_apply(const ResNetOp& op, const Tensor& x);

}  // namespace mrn
