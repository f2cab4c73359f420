#pragma once
// Full-batch regression training on multiresolution function pairs, the
// coarse-to-fine staged procedure with per-stage freezing and head/tail
// adapters, the brute-force conditional-mean regression oracle with its
// cross-resolution loss table, and the scalar preconditioning study.

#include <cstdint>
#include <vector>

#include "mrn/autodiff.hpp"
#include "mrn/spaces.hpp"
#include "mrn/unet.hpp"

namespace mrn {

// A supervised set of function pairs. Each side must be homogeneous in
// domain, resolution, channels and basis; the two sides may differ (the
// regression oracle predicts coarse targets from fine inputs, a net maps
// between equal resolutions).
struct Dataset {
    std::vector<MultiResFunction> inputs;
    std::vector<MultiResFunction> targets;

    std::size_t size() const { return inputs.size(); }
    // Throws when the sides disagree in length or either side mixes
    // domains, resolutions, channel counts or bases.
    void check_consistent() const;
};

// Projects every input to input_resolution and every target to
// target_resolution, preserving pair order. Resolutions above the stored
// ones are rejected by project().
Dataset project_dataset(const Dataset& data, int input_resolution, int target_resolution);

struct TrainConfig {
    AdamConfig adam;
    int steps = 500;  // optimizer steps per stage
    // Reserved for stochastic batching; the full-batch loops here are
    // deterministic functions of (state, data, config) alone.
    std::uint64_t seed = 0;
    // Staged training: pin every level up to the stage's one once the
    // stage finishes.
    bool freeze = true;
    // Staged training: levels to visit, strictly increasing. Empty means
    // every level 1..levels in order.
    std::vector<int> stages;
};

struct TrainResult {
    UNetState state;
    // steps + 1 entries: the loss before each step, then the loss of the
    // returned parameters.
    std::vector<double> trace;
};

// Full-batch Adam on the empirical loss: the mean over pairs of the
// squared measure-weighted L2 distance between net output and target,
// summed over channels. The dataset may sit at a finer resolution than
// the net's top level; it is projected down first. Frozen levels and, when
// the state carries stage adapters, the adapters of other levels stay
// untouched.
TrainResult train(UNetState state, const Dataset& data, const TrainConfig& cfg);

struct StagedResult {
    UNetState state;
    std::vector<std::vector<double>> traces;  // one trace per stage
};

// Coarse-to-fine schedule over the net's levels. Stage k trains the
// sub-net at level cfg.stages[k] on stage_data[k] (projected to the
// level's resolution), through identity-initialized head/tail channel
// adapters created for that level on first visit. With cfg.freeze, every
// level up to the stage's one is frozen when the stage ends, so later
// stages leave its parameters bitwise intact.
StagedResult staged_train(UNetState state, const std::vector<Dataset>& stage_data,
                          const TrainConfig& cfg);

// The training objective of the state at a level: mean squared
// measure-weighted L2 distance over the dataset, adapters included when
// present. Finer datasets are projected down.
double evaluate_loss(const UNetState& state, const Dataset& data, int level);

// --- Conditional-mean regression oracle -----------------------------------

// The exact empirical L2 minimizer among functions of the projected input:
// pairs are grouped by byte-identical projected input coefficients and the
// regressor outputs the per-group mean of the projected targets.
struct RegressionOracle {
    int input_resolution = 0;
    int target_resolution = 0;
    std::vector<MultiResFunction> keys;    // distinct projected inputs, first-appearance order
    std::vector<MultiResFunction> values;  // per-group mean of projected targets
    // Mean over pairs of the squared measure-weighted L2 distance between
    // projected target and the group mean.
    double loss = 0.0;

    // Index of the group whose key matches the input coefficientwise
    // (exact equality), or -1.
    int find(const MultiResFunction& input) const;
    // The group mean for a known key; throws ValueError for unseen inputs.
    const MultiResFunction& predict(const MultiResFunction& input) const;
};

RegressionOracle regression_oracle(const Dataset& data, int target_resolution,
                                   int input_resolution);

// Re-evaluates the oracle's objective against a dataset, using whatever
// values the oracle currently holds. Equals oracle.loss for the dataset it
// was fit on; perturbing any group mean strictly increases it.
double oracle_empirical_loss(const RegressionOracle& oracle, const Dataset& data);

struct ConditionalLoss {
    int target_resolution = 0;
    int input_resolution = 0;
    double loss = 0.0;
};

// Oracle losses for every (target, input) resolution pair from the given
// list (strictly increasing). Rows are emitted target-major in list order.
// Verifies the two orderings any conditional mean must satisfy, with a
// 1e-12 slack for rounding: for fixed inputs the loss grows with target
// resolution (coarse targets are easier, converging upward to the
// full-resolution loss), and for fixed targets it shrinks as the inputs
// refine (finer conditioning cannot hurt). Violations throw NumericError.
std::vector<ConditionalLoss> conditional_loss_table(const Dataset& data,
                                                    const std::vector<int>& resolutions);

// --- Scalar preconditioning study ------------------------------------------

// Fits target samples w(v) on a uniform grid over [-1, 1] with the
// endpoint of the flow x_0 = pre(v), x_{d+1} = x_d + B(x_d) taking
// D = `applications` steps of the shared scalar perceptron B
// (1 -> hidden -> hidden -> 1, ReLU between layers), every weight matrix
// renormalized below unit Frobenius norm after each optimizer step. The
// model starts out as the preconditioner and refines it with bounded
// steps, so the final error is dominated by how well that fixed guess
// matches the target's shape.
struct SyntheticConfig {
    enum class Target { square, cube };
    enum class Preconditioner { identity, abs };

    Target target = Target::square;
    Preconditioner pre = Preconditioner::identity;
    int grid_size = 50;
    int hidden = 20;
    int applications = 100;  // weight-shared applications of the block
    int steps = 2000;
    AdamConfig adam;
    // When false the tower is dropped and the returned error is the
    // closed-form grid MSE of the preconditioner alone.
    bool residual_enabled = true;
};

struct SyntheticResult {
    double final_mse = 0.0;
    // Largest Frobenius norm seen across the three weight matrices after
    // any optimizer step (post-renormalization); stays below 1.
    double max_weight_norm = 0.0;
};

SyntheticResult synthetic_experiment(const SyntheticConfig& cfg, std::uint64_t seed);

}  // namespace mrn
