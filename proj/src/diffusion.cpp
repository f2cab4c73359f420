#include "mrn/diffusion.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>
#include <vector>

#include "mrn/errors.hpp"
#include "mrn/rng.hpp"
#include "mrn/wavelet.hpp"

namespace mrn {

namespace {

constexpr long long kSampleBlock = 4096;

long long block_count(long long samples) {
    return (samples + kSampleBlock - 1) / kSampleBlock;
}

// Farms the sample indices [0, samples) out as fixed-size blocks claimed
// from a shared counter. block_fn(block, lo, hi) runs exactly once per
// block; callers keep one accumulator per block and fold them in block
// order afterwards, which makes the totals independent of the worker count.
template <class Fn>
void run_sample_blocks(long long samples, const Fn& block_fn) {
    const long long blocks = block_count(samples);
    const int workers = static_cast<int>(
        std::min<long long>(worker_count(), blocks));
    std::atomic<long long> next{0};
    auto drain = [&] {
        for (;;) {
            const long long b = next.fetch_add(1);
            if (b >= blocks) return;
            const long long lo = b * kSampleBlock;
            block_fn(b, lo, std::min(samples, lo + kSampleBlock));
        }
    };
    if (workers <= 1) {
        drain();
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers) - 1);
    for (int w = 1; w < workers; ++w) pool.emplace_back(drain);
    drain();
    for (auto& th : pool) th.join();
}

// Running first and second moments of a vector of observables.
struct MomentSums {
    arrayd sum;
    arrayd sumsq;

    void init(Eigen::Index n) {
        sum = arrayd::Zero(n);
        sumsq = arrayd::Zero(n);
    }
    void add(const arrayd& y) {
        sum += y;
        sumsq += y * y;
    }
    void fold(const MomentSums& other) {
        sum += other.sum;
        sumsq += other.sumsq;
    }
};

// Unbiased per-entry sample variance; the max guards the tiny negative
// results cancellation can leave behind.
arrayd sample_variance(const MomentSums& m, long long n) {
    const double dn = static_cast<double>(n);
    return ((m.sumsq - m.sum * m.sum / dn) / (dn - 1.0)).cwiseMax(0.0);
}

void require_pixel_interval(const MultiResFunction& f, const char* op) {
    f.check_consistent();
    if (f.domain != Domain::interval)
        throw ValueError(std::string(op) + " expects an interval signal, got " +
                         f.describe());
    if (f.basis != Basis::pixel)
        throw ValueError(std::string(op) + " expects a pixel-basis signal, got " +
                         f.describe());
}

// Three standard errors of a band-mean variance estimate pooled over
// `count` independent coefficients.
double variance_half_width(double variance, long long samples, long long count) {
    const double n = static_cast<double>(samples);
    return 3.0 * variance * std::sqrt(2.0 / ((n - 1.0) * static_cast<double>(count)));
}

}  // namespace

double DiffusionSchedule::alpha(double t) const {
    if (!(t >= 0.0 && t <= 1.0))
        throw ValueError("diffusion time " + std::to_string(t) +
                         " outside [0, 1]");
    switch (kind) {
        case ScheduleKind::linear:
            return t;
        case ScheduleKind::exponential_saturating:
            return 1.0 - std::exp(-5.0 * t);
    }
    throw ValueError("unknown schedule kind");
}

const char* schedule_name(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::linear:
            return "linear";
        case ScheduleKind::exponential_saturating:
            return "exponential-saturating";
    }
    throw ValueError("unknown schedule kind");
}

DiffusionSchedule schedule_by_name(const std::string& name) {
    if (name == "linear") return {ScheduleKind::linear};
    if (name == "exponential-saturating")
        return {ScheduleKind::exponential_saturating};
    throw ValueError("unknown noise schedule '" + name +
                     "' (have: linear, exponential-saturating)");
}

MultiResFunction forward_sample(const MultiResFunction& x0, double t,
                                const DiffusionSchedule& schedule,
                                std::uint64_t seed) {
    x0.check_consistent();
    if (x0.basis != Basis::pixel)
        throw ValueError("forward_sample expects a pixel-basis function, got " +
                         x0.describe());
    const double a = schedule.alpha(t);
    const double keep = std::sqrt(1.0 - a);
    const double add = std::sqrt(a);
    MultiResFunction out = x0;
    Rng rng(seed);
    for (Eigen::Index n = 0; n < out.coeffs.size(); ++n)
        out.coeffs[n] = keep * x0.coeffs[n] + add * rng.gaussian();
    return out;
}

SpectrumReport spectrum_variance(const MultiResFunction& x0, double t,
                                 const DiffusionSchedule& schedule,
                                 long long samples, std::uint64_t seed) {
    require_pixel_interval(x0, "spectrum_variance");
    if (samples < 100)
        throw ValueError("spectrum_variance needs at least 100 samples, got " +
                         std::to_string(samples));
    const double a = schedule.alpha(t);
    const int i = x0.resolution;
    const Eigen::Index cells = x0.cell_count();
    const int channels = x0.channels;
    const HaarTransform& tr = haar_matrix(i);
    const double noise = std::sqrt(a);

    // The deterministic part sqrt(1 - a) * T(x0) is constant over samples
    // and drops out of a mean-subtracted variance, so only the noise part
    // is accumulated; the estimate is identical and better conditioned.
    std::vector<MomentSums> partials(static_cast<std::size_t>(block_count(samples)));
    run_sample_blocks(samples, [&](long long b, long long lo, long long hi) {
        MomentSums& part = partials[static_cast<std::size_t>(b)];
        part.init(cells * channels);
        vectord eps(cells);
        arrayd row(cells * channels);
        for (long long n = lo; n < hi; ++n) {
            Rng rng(derive_seed(seed, static_cast<std::uint64_t>(n)));
            for (int c = 0; c < channels; ++c) {
                for (Eigen::Index k = 0; k < cells; ++k) eps[k] = rng.gaussian();
                const vectord h = tr.H * eps;
                row.segment(c * cells, cells) =
                    noise * (tr.lambda.array() * h.array());
            }
            part.add(row);
        }
    });
    MomentSums total;
    total.init(cells * channels);
    for (const MomentSums& p : partials) total.fold(p);
    const arrayd var = sample_variance(total, samples);

    SpectrumReport rep;
    rep.resolution = i;
    rep.t = t;
    rep.samples = samples;
    std::vector<double> acc(static_cast<std::size_t>(i) + 1, 0.0);
    std::vector<long long> count(static_cast<std::size_t>(i) + 1, 0);
    for (int c = 0; c < channels; ++c)
        for (Eigen::Index k = 0; k < cells; ++k) {
            const int j = haar_band(static_cast<int>(k));
            acc[static_cast<std::size_t>(j)] += var[c * cells + k];
            count[static_cast<std::size_t>(j)] += 1;
        }
    const double father = acc[0] / static_cast<double>(count[0]);
    rep.bands.resize(static_cast<std::size_t>(i) + 1);
    for (int j = 0; j <= i; ++j) {
        SpectrumBand& band = rep.bands[static_cast<std::size_t>(j)];
        band.band = j;
        band.variance = acc[static_cast<std::size_t>(j)] /
                        static_cast<double>(count[static_cast<std::size_t>(j)]);
        band.ratio = father > 0.0 ? band.variance / father : 0.0;
        band.half_width =
            variance_half_width(band.variance, samples, count[static_cast<std::size_t>(j)]);
    }
    return rep;
}

SpectrumReport2D spectrum_variance_2d(const MultiResFunction& x0, double t,
                                      const DiffusionSchedule& schedule,
                                      long long samples, std::uint64_t seed) {
    x0.check_consistent();
    if (x0.domain != Domain::square)
        throw ValueError("spectrum_variance_2d expects a square image, got " +
                         x0.describe());
    if (x0.basis != Basis::pixel)
        throw ValueError("spectrum_variance_2d expects a pixel-basis image, got " +
                         x0.describe());
    if (samples < 100)
        throw ValueError("spectrum_variance_2d needs at least 100 samples, got " +
                         std::to_string(samples));
    const double a = schedule.alpha(t);
    const int i = x0.resolution;
    const Eigen::Index side = x0.grid_rows();
    const Eigen::Index cells = side * side;
    const int channels = x0.channels;
    const double noise = std::sqrt(a);

    std::vector<MomentSums> partials(static_cast<std::size_t>(block_count(samples)));
    run_sample_blocks(samples, [&](long long b, long long lo, long long hi) {
        MomentSums& part = partials[static_cast<std::size_t>(b)];
        part.init(cells * channels);
        matrixd eps(side, side);
        arrayd row(cells * channels);
        for (long long n = lo; n < hi; ++n) {
            Rng rng(derive_seed(seed, static_cast<std::uint64_t>(n)));
            for (int c = 0; c < channels; ++c) {
                for (Eigen::Index r = 0; r < side; ++r)
                    for (Eigen::Index col = 0; col < side; ++col)
                        eps(r, col) = rng.gaussian();
                const matrixd h = pixel_to_haar(eps, i);
                for (Eigen::Index r = 0; r < side; ++r)
                    for (Eigen::Index col = 0; col < side; ++col)
                        row[c * cells + r * side + col] = noise * h(r, col);
            }
            part.add(row);
        }
    });
    MomentSums total;
    total.init(cells * channels);
    for (const MomentSums& p : partials) total.fold(p);
    const arrayd var = sample_variance(total, samples);

    SpectrumReport2D rep;
    rep.resolution = i;
    rep.t = t;
    rep.samples = samples;
    const int nb = i + 1;
    std::vector<double> acc(static_cast<std::size_t>(nb) * nb, 0.0);
    std::vector<long long> count(static_cast<std::size_t>(nb) * nb, 0);
    for (int c = 0; c < channels; ++c)
        for (Eigen::Index r = 0; r < side; ++r)
            for (Eigen::Index col = 0; col < side; ++col) {
                const std::size_t cell = static_cast<std::size_t>(
                    haar_band(static_cast<int>(r)) * nb +
                    haar_band(static_cast<int>(col)));
                acc[cell] += var[c * cells + r * side + col];
                count[cell] += 1;
            }
    const double father = acc[0] / static_cast<double>(count[0]);
    rep.cells.resize(acc.size());
    for (int jr = 0; jr < nb; ++jr)
        for (int jc = 0; jc < nb; ++jc) {
            const std::size_t idx = static_cast<std::size_t>(jr * nb + jc);
            SpectrumCell2D& cell = rep.cells[idx];
            cell.row_band = jr;
            cell.col_band = jc;
            cell.variance = acc[idx] / static_cast<double>(count[idx]);
            cell.ratio = father > 0.0 ? cell.variance / father : 0.0;
            cell.half_width = variance_half_width(cell.variance, samples, count[idx]);
        }
    return rep;
}

ConsistencyReport cross_resolution_consistency(const MultiResFunction& x0_fine,
                                               double t, int coarse_resolution,
                                               const DiffusionSchedule& schedule,
                                               long long samples,
                                               std::uint64_t seed) {
    require_pixel_interval(x0_fine, "cross_resolution_consistency");
    const int fine = x0_fine.resolution;
    if (coarse_resolution < 0 || coarse_resolution > fine)
        throw ValueError("coarse resolution " + std::to_string(coarse_resolution) +
                         " must lie in [0, " + std::to_string(fine) + "]");
    if (samples < 2)
        throw ValueError("cross_resolution_consistency needs at least 2 samples");
    const double a = schedule.alpha(t);
    const int gap = fine - coarse_resolution;
    const Eigen::Index children = Eigen::Index{1} << gap;
    const Eigen::Index coarse_cells = x0_fine.cell_count() >> gap;
    const int channels = x0_fine.channels;
    const Eigen::Index per_side = coarse_cells * channels;
    // Embedding scale: the fine noise deviation grows by sqrt(2) per level
    // so that its pooled variance matches the direct coarse process.
    const double fine_noise = std::sqrt(a) * std::pow(2.0, 0.5 * gap);
    const double direct_noise = std::sqrt(a);

    // The deterministic parts of the two processes agree by construction
    // (the direct process starts from the pooled values), so only the noise
    // parts are accumulated: pooled fine first, direct coarse second.
    std::vector<MomentSums> partials(static_cast<std::size_t>(block_count(samples)));
    run_sample_blocks(samples, [&](long long b, long long lo, long long hi) {
        MomentSums& part = partials[static_cast<std::size_t>(b)];
        part.init(2 * per_side);
        arrayd row(2 * per_side);
        for (long long n = lo; n < hi; ++n) {
            Rng rng(derive_seed(seed, static_cast<std::uint64_t>(n)));
            for (int c = 0; c < channels; ++c)
                for (Eigen::Index k = 0; k < coarse_cells; ++k) {
                    double acc = 0.0;
                    for (Eigen::Index child = 0; child < children; ++child)
                        acc += rng.gaussian();
                    row[c * coarse_cells + k] =
                        fine_noise * acc / static_cast<double>(children);
                }
            for (int c = 0; c < channels; ++c)
                for (Eigen::Index k = 0; k < coarse_cells; ++k)
                    row[per_side + c * coarse_cells + k] =
                        direct_noise * rng.gaussian();
            part.add(row);
        }
    });
    MomentSums total;
    total.init(2 * per_side);
    for (const MomentSums& p : partials) total.fold(p);
    const arrayd mean = total.sum / static_cast<double>(samples);
    const arrayd var = sample_variance(total, samples);

    ConsistencyReport rep;
    rep.fine_resolution = fine;
    rep.coarse_resolution = coarse_resolution;
    rep.t = t;
    rep.samples = samples;
    double pooled_sum = 0.0;
    double direct_sum = 0.0;
    for (Eigen::Index m = 0; m < per_side; ++m) {
        const double gap_mean = std::abs(mean[m] - mean[per_side + m]);
        const double se = std::sqrt((var[m] + var[per_side + m]) /
                                    static_cast<double>(samples));
        rep.max_mean_discrepancy = std::max(rep.max_mean_discrepancy, gap_mean);
        double in_se = 0.0;
        if (se > 0.0)
            in_se = gap_mean / se;
        else if (gap_mean > 0.0)
            in_se = std::numeric_limits<double>::infinity();
        rep.max_mean_discrepancy_se = std::max(rep.max_mean_discrepancy_se, in_se);
        pooled_sum += var[m];
        direct_sum += var[per_side + m];
    }
    rep.pooled_variance = pooled_sum / static_cast<double>(per_side);
    rep.direct_variance = direct_sum / static_cast<double>(per_side);
    if (rep.direct_variance > 0.0)
        rep.variance_ratio = rep.pooled_variance / rep.direct_variance;
    else
        rep.variance_ratio = rep.pooled_variance > 0.0
                                 ? std::numeric_limits<double>::infinity()
                                 : 1.0;
    return rep;
}

MultiResFunction denoise_soft_threshold(const MultiResFunction& x_t, double t,
                                        const DiffusionSchedule& schedule,
                                        const ThresholdRule& rule) {
    require_pixel_interval(x_t, "denoise_soft_threshold");
    if (rule.c < 0.0)
        throw ValueError("threshold scale must be nonnegative, got " +
                         std::to_string(rule.c));
    const double a = schedule.alpha(t);
    const int i = x_t.resolution;
    const double log_cells = std::log(2.0) * static_cast<double>(i);
    MultiResFunction out = x_t;
    for (int c = 0; c < x_t.channels; ++c) {
        const vectord values = x_t.channel(c).matrix();
        vectord coeff = pixel_to_haar(values, i);
        for (int j = 1; j <= i; ++j) {
            const Eigen::Index lo = Eigen::Index{1} << (j - 1);
            const double lam =
                rule.c * std::sqrt(a) *
                std::sqrt(haar_lambda(i, static_cast<int>(lo)) * log_cells);
            const vectord seg = coeff.segment(lo, lo);
            coeff.segment(lo, lo) = soft_threshold(seg, lam);
        }
        out.set_channel(c, haar_to_pixel(coeff, i).array());
    }
    return out;
}

}  // namespace mrn
