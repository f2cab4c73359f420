#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mrn/spaces.hpp"

namespace mrn {

// Noise schedule of the forward diffusion process: a monotone map from time
// t in [0, 1] to a noise level alpha_t in [0, 1] with alpha_0 = 0.
enum class ScheduleKind : int { linear = 0, exponential_saturating = 1 };

struct DiffusionSchedule {
    ScheduleKind kind = ScheduleKind::linear;

    // linear: alpha = t. exponential_saturating: alpha = 1 - exp(-5t), which
    // front-loads the noise and saturates toward 1. Rejects t outside [0, 1].
    double alpha(double t) const;
};

const char* schedule_name(ScheduleKind kind);

// Accepts the names reported by schedule_name: "linear" and
// "exponential-saturating".
DiffusionSchedule schedule_by_name(const std::string& name);

// Forward noising at time t: per cell
//   sqrt(1 - alpha_t) * x0 + sqrt(alpha_t) * eps
// with independent standard normal eps drawn from Rng(seed) in coefficient
// storage order. Requires a pixel-basis input; t = 0 returns the input
// values unchanged.
MultiResFunction forward_sample(const MultiResFunction& x0, double t,
                                const DiffusionSchedule& schedule,
                                std::uint64_t seed);

// Noise statistics of the forward process per frequency band of the Haar
// transform. Band 0 is the father (mean) coefficient; band j >= 1 holds the
// 2^{j-1} detail coefficients of scale j. White noise of variance alpha_t in
// the cells lands in band j with per-coefficient variance alpha_t *
// 2^{-i+j-1} (father: alpha_t * 2^{-i}), so the ratios against the father
// band double from one band to the next.
struct SpectrumBand {
    int band = 0;
    double variance = 0.0;    // per-coefficient sample variance, band mean
    double ratio = 0.0;       // variance / father variance; 0 when silent
    double half_width = 0.0;  // three standard errors of `variance`
};

struct SpectrumReport {
    int resolution = 0;
    double t = 0.0;
    long long samples = 0;
    std::vector<SpectrumBand> bands;  // resolution + 1 entries, father first
};

// Draws `samples` forward samples of a 1D interval signal, transforms each
// to Haar coefficients, and estimates the per-coefficient variance over the
// sample index, averaged within each band. All bands share the one sample
// set. Sample n draws from the stream derive_seed(seed, n) and aggregation
// folds fixed-size index blocks in order, so the result does not depend on
// the worker count. Half-widths use the normal-theory variance of a sample
// variance, 2*sigma^4/(n-1), pooled over the band's coefficients. Rejects
// fewer than 100 samples as a meaningless estimate.
SpectrumReport spectrum_variance(const MultiResFunction& x0, double t,
                                 const DiffusionSchedule& schedule,
                                 long long samples, std::uint64_t seed);

// 2D analogue on square images via the separable transform: a coefficient
// carries a row band and a column band, and its white-noise variance is the
// product of the two 1D band variances.
struct SpectrumCell2D {
    int row_band = 0;
    int col_band = 0;
    double variance = 0.0;
    double ratio = 0.0;       // variance / (father, father) cell variance
    double half_width = 0.0;
};

struct SpectrumReport2D {
    int resolution = 0;
    double t = 0.0;
    long long samples = 0;
    std::vector<SpectrumCell2D> cells;  // (i+1)^2 entries, row band major
};

SpectrumReport2D spectrum_variance_2d(const MultiResFunction& x0, double t,
                                      const DiffusionSchedule& schedule,
                                      long long samples, std::uint64_t seed);

// Cross-resolution consistency of the noising processes: a fine-resolution
// process whose noise is scaled by 2^{(fine-coarse)/2} pools, by dyadic
// averaging, to the same law as the process run directly at the coarse
// resolution on the pooled initial data. The report compares per-cell means
// and variances of the two over a shared Monte Carlo budget.
struct ConsistencyReport {
    int fine_resolution = 0;
    int coarse_resolution = 0;
    double t = 0.0;
    long long samples = 0;
    double max_mean_discrepancy = 0.0;     // worst per-cell mean gap
    double max_mean_discrepancy_se = 0.0;  // the same gap in standard errors
    double pooled_variance = 0.0;          // per-cell variance, cell average
    double direct_variance = 0.0;
    double variance_ratio = 0.0;  // pooled / direct; 1 when both are silent
};

// x0_fine must be a pixel-basis interval signal; the direct process runs on
// its average-pooled values at coarse_resolution <= x0_fine.resolution.
// Sample n draws first the fine noise, then the coarse noise, from the
// stream derive_seed(seed, n); blockwise aggregation as above.
ConsistencyReport cross_resolution_consistency(const MultiResFunction& x0_fine,
                                               double t, int coarse_resolution,
                                               const DiffusionSchedule& schedule,
                                               long long samples,
                                               std::uint64_t seed);

// Scale on the per-band soft thresholds. Band j of a resolution-i signal is
// thresholded at
//   lambda_j = c * sqrt(alpha_t) * sqrt(2^{-i+j-1} * log(2^i)),
// the universal-threshold shape for the band's noise deviation. The father
// coefficient always passes through untouched.
struct ThresholdRule {
    double c = 1.0;
};

// L2 denoising of a noised interval signal by soft-thresholding its Haar
// detail coefficients: an estimate of the clean signal's low-frequency
// content, variance-reducing rather than optimal. With c = 0 or t = 0 this
// is the plain Haar round trip; for huge c only the cell average survives.
MultiResFunction denoise_soft_threshold(const MultiResFunction& x_t, double t,
                                        const DiffusionSchedule& schedule,
                                        const ThresholdRule& rule = {});

}  // namespace mrn
