#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <string>
#include <vector>

#include <mrn/diffusion.hpp>
#include <mrn/errors.hpp>
#include <mrn/rng.hpp>
#include <mrn/spaces.hpp>
#include <mrn/wavelet.hpp>

using namespace mrn;

namespace {

MultiResFunction random_function(Domain d, int resolution, int channels, std::uint64_t seed) {
    Rng rng(seed);
    MultiResFunction f = MultiResFunction::zeros(d, resolution, channels);
    for (Eigen::Index i = 0; i < f.coeffs.size(); ++i) f.coeffs[i] = rng.uniform(-2.0, 2.0);
    return f;
}

double l2_distance(const MultiResFunction& a, const MultiResFunction& b) {
    MultiResFunction diff = a;
    diff.coeffs -= b.coeffs;
    return l2_norm(diff);
}

// Per-coefficient white-noise variance of band j at resolution i, computed
// from the transform rows themselves: (lambda_k^2) * (nonzero count). Kept
// independent of the haar_lambda shortcut so the law is cross-checked.
double band_noise_variance(int i, int j) {
    const HaarTransform& tr = haar_matrix(i);
    const int k = j == 0 ? 0 : 1 << (j - 1);
    const matrixd dense = tr.dense_h();
    double nonzero = 0.0;
    for (Eigen::Index c = 0; c < dense.cols(); ++c)
        if (dense(k, c) != 0.0) nonzero += 1.0;
    return tr.lambda[k] * tr.lambda[k] * nonzero;
}

struct ThreadCountGuard {
    std::string saved;
    bool had = false;
    ThreadCountGuard() {
        if (const char* env = std::getenv("MRN_THREADS")) {
            saved = env;
            had = true;
        }
    }
    ~ThreadCountGuard() {
        if (had)
            setenv("MRN_THREADS", saved.c_str(), 1);
        else
            unsetenv("MRN_THREADS");
    }
};

}  // namespace

TEST_CASE("noise schedules start silent and increase") {
    const DiffusionSchedule lin{ScheduleKind::linear};
    const DiffusionSchedule sat{ScheduleKind::exponential_saturating};
    CHECK(lin.alpha(0.0) == 0.0);
    CHECK(sat.alpha(0.0) == 0.0);
    CHECK(lin.alpha(1.0) == 1.0);
    CHECK(sat.alpha(1.0) == doctest::Approx(1.0 - std::exp(-5.0)).epsilon(1e-15));
    for (const DiffusionSchedule& s : {lin, sat}) {
        double prev = -1.0;
        for (int k = 0; k <= 20; ++k) {
            const double a = s.alpha(k / 20.0);
            CHECK(a >= prev);
            CHECK(a >= 0.0);
            CHECK(a <= 1.0);
            prev = a;
        }
    }
    CHECK_THROWS_AS(lin.alpha(-0.01), ValueError);
    CHECK_THROWS_AS(lin.alpha(1.01), ValueError);
    CHECK(schedule_by_name("linear").kind == ScheduleKind::linear);
    CHECK(schedule_by_name("exponential-saturating").kind ==
          ScheduleKind::exponential_saturating);
    CHECK(schedule_by_name(schedule_name(ScheduleKind::linear)).kind ==
          ScheduleKind::linear);
    CHECK_THROWS_AS(schedule_by_name("cosine"), ValueError);
}

TEST_CASE("forward sampling at time zero returns the input values") {
    const DiffusionSchedule lin{ScheduleKind::linear};
    const MultiResFunction x0 = random_function(Domain::interval, 5, 2, 11);
    const MultiResFunction noised = forward_sample(x0, 0.0, lin, 99);
    for (Eigen::Index k = 0; k < x0.coeffs.size(); ++k)
        CHECK(noised.coeffs[k] == x0.coeffs[k]);
    const MultiResFunction img = random_function(Domain::square, 3, 1, 12);
    const MultiResFunction img_noised = forward_sample(img, 0.0, lin, 99);
    for (Eigen::Index k = 0; k < img.coeffs.size(); ++k)
        CHECK(img_noised.coeffs[k] == img.coeffs[k]);
}

TEST_CASE("full noise wipes the signal and has unit variance") {
    const DiffusionSchedule lin{ScheduleKind::linear};
    const MultiResFunction x0 = MultiResFunction::constant(Domain::interval, 16, 3.0, 2);
    const MultiResFunction noised = forward_sample(x0, 1.0, lin, 4242);
    const double n = static_cast<double>(noised.coeffs.size());
    CHECK(n >= 1e5);
    const double mean = noised.coeffs.mean();
    const double var = (noised.coeffs - mean).square().sum() / (n - 1.0);
    CHECK(std::abs(mean) < 0.015);
    CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("forward sampling is deterministic per seed") {
    const DiffusionSchedule sat{ScheduleKind::exponential_saturating};
    const MultiResFunction x0 = random_function(Domain::interval, 6, 1, 7);
    const MultiResFunction a = forward_sample(x0, 0.5, sat, 123);
    const MultiResFunction b = forward_sample(x0, 0.5, sat, 123);
    for (Eigen::Index k = 0; k < a.coeffs.size(); ++k)
        CHECK(a.coeffs[k] == b.coeffs[k]);
    const MultiResFunction c = forward_sample(x0, 0.5, sat, 124);
    CHECK((a.coeffs != c.coeffs).any());
}

TEST_CASE("forward sampling validates basis and time") {
    const DiffusionSchedule lin{ScheduleKind::linear};
    const MultiResFunction x0 = random_function(Domain::interval, 4, 1, 3);
    CHECK_THROWS_AS(forward_sample(to_basis(x0, Basis::haar), 0.5, lin, 1), ValueError);
    CHECK_THROWS_AS(forward_sample(x0, 1.5, lin, 1), ValueError);
}

TEST_CASE("band variances of pure noise follow the dyadic law") {
    const DiffusionSchedule lin{ScheduleKind::linear};
    const MultiResFunction zero = MultiResFunction::zeros(Domain::interval, 2);
    const SpectrumReport rep = spectrum_variance(zero, 1.0, lin, 100000, 9);
    REQUIRE(rep.bands.size() == 3);
    CHECK(rep.resolution == 2);
    CHECK(rep.samples == 100000);
    CHECK(rep.bands[0].variance == doctest::Approx(0.25).epsilon(0.03));
    CHECK(rep.bands[1].variance == doctest::Approx(0.25).epsilon(0.03));
    CHECK(rep.bands[2].variance == doctest::Approx(0.5).epsilon(0.03));
    CHECK(rep.bands[1].ratio == doctest::Approx(1.0).epsilon(0.05));
    CHECK(rep.bands[2].ratio == doctest::Approx(2.0).epsilon(0.05));
    // The analytic values sit inside the reported confidence intervals, and
    // the row-count oracle agrees with the shortcut the report relies on.
    for (int j = 0; j <= 2; ++j) {
        const double analytic = band_noise_variance(2, j);
        CHECK(std::abs(rep.bands[j].variance - analytic) <= rep.bands[j].half_width);
        CHECK(analytic == haar_lambda(2, j == 0 ? 0 : 1 << (j - 1)));
    }
}

TEST_CASE("band ratios double per band at a deeper resolution") {
    const DiffusionSchedule lin{ScheduleKind::linear};
    const MultiResFunction zero = MultiResFunction::zeros(Domain::interval, 4);
    const SpectrumReport rep = spectrum_variance(zero, 1.0, lin, 30000, 17);
    REQUIRE(rep.bands.size() == 5);
    const double expected[] = {1.0, 1.0, 2.0, 4.0, 8.0};
    for (int j = 1; j <= 4; ++j)
        CHECK(rep.bands[j].ratio == doctest::Approx(expected[j]).epsilon(0.05));
}

TEST_CASE("a silent schedule yields a silent spectrum") {
    const DiffusionSchedule lin{ScheduleKind::linear};
    const MultiResFunction x0 = random_function(Domain::interval, 3, 1, 5);
    const SpectrumReport rep = spectrum_variance(x0, 0.0, lin, 500, 1);
    for (const SpectrumBand& band : rep.bands) {
        CHECK(band.variance == 0.0);
        CHECK(band.ratio == 0.0);
        CHECK(band.half_width == 0.0);
    }
}

TEST_CASE("the spectrum measures the noise, not the signal") {
    const DiffusionSchedule lin{ScheduleKind::linear};
    const MultiResFunction a = MultiResFunction::zeros(Domain::interval, 3, 2);
    const MultiResFunction b = random_function(Domain::interval, 3, 2, 88);
    const SpectrumReport ra = spectrum_variance(a, 0.7, lin, 2000, 33);
    const SpectrumReport rb = spectrum_variance(b, 0.7, lin, 2000, 33);
    REQUIRE(ra.bands.size() == rb.bands.size());
    // Same noise stream: the mean-subtracted variances coincide exactly.
    for (std::size_t j = 0; j < ra.bands.size(); ++j)
        CHECK(ra.bands[j].variance == rb.bands[j].variance);
    // Fresh noise stream: they still agree within the joint intervals.
    const SpectrumReport rc = spectrum_variance(b, 0.7, lin, 2000, 34);
    for (std::size_t j = 0; j < ra.bands.size(); ++j)
        CHECK(std::abs(ra.bands[j].variance - rc.bands[j].variance) <=
              ra.bands[j].half_width + rc.bands[j].half_width);
}

TEST_CASE("the spectrum rejects unusable inputs") {
    const DiffusionSchedule lin{ScheduleKind::linear};
    const MultiResFunction x0 = MultiResFunction::zeros(Domain::interval, 3);
    CHECK_THROWS_AS(spectrum_variance(x0, 1.0, lin, 99, 1), ValueError);
    CHECK_THROWS_AS(spectrum_variance(to_basis(x0, Basis::haar), 1.0, lin, 500, 1),
                    ValueError);
    const MultiResFunction img = MultiResFunction::zeros(Domain::square, 2);
    CHECK_THROWS_AS(spectrum_variance(img, 1.0, lin, 500, 1), ValueError);
    CHECK_THROWS_AS(spectrum_variance_2d(x0, 1.0, lin, 500, 1), ValueError);
    CHECK_THROWS_AS(spectrum_variance_2d(img, 1.0, lin, 99, 1), ValueError);
}

TEST_CASE("monte carlo totals do not depend on the worker count") {
    ThreadCountGuard guard;
    const DiffusionSchedule lin{ScheduleKind::linear};
    const MultiResFunction zero = MultiResFunction::zeros(Domain::interval, 3);
    setenv("MRN_THREADS", "1", 1);
    const SpectrumReport serial = spectrum_variance(zero, 1.0, lin, 9000, 77);
    const ConsistencyReport serial_cons =
        cross_resolution_consistency(zero, 0.5, 2, lin, 9000, 78);
    setenv("MRN_THREADS", "5", 1);
    const SpectrumReport parallel = spectrum_variance(zero, 1.0, lin, 9000, 77);
    const ConsistencyReport parallel_cons =
        cross_resolution_consistency(zero, 0.5, 2, lin, 9000, 78);
    REQUIRE(serial.bands.size() == parallel.bands.size());
    for (std::size_t j = 0; j < serial.bands.size(); ++j) {
        CHECK(serial.bands[j].variance == parallel.bands[j].variance);
        CHECK(serial.bands[j].ratio == parallel.bands[j].ratio);
    }
    CHECK(serial_cons.max_mean_discrepancy == parallel_cons.max_mean_discrepancy);
    CHECK(serial_cons.pooled_variance == parallel_cons.pooled_variance);
    CHECK(serial_cons.direct_variance == parallel_cons.direct_variance);
}

TEST_CASE("2d band cells multiply the two axis laws") {
    const DiffusionSchedule lin{ScheduleKind::linear};
    const MultiResFunction zero = MultiResFunction::zeros(Domain::square, 2);
    const SpectrumReport2D rep = spectrum_variance_2d(zero, 1.0, lin, 20000, 50);
    REQUIRE(rep.cells.size() == 9);
    for (const SpectrumCell2D& cell : rep.cells) {
        const double expected =
            band_noise_variance(2, cell.row_band) * band_noise_variance(2, cell.col_band);
        CHECK(cell.variance == doctest::Approx(expected).epsilon(0.06));
    }
    // Ratios against the doubly-smooth corner: the dyadic growth per band on
    // either axis.
    CHECK(rep.cells[0].ratio == 1.0);
    const SpectrumCell2D& hi = rep.cells.back();
    CHECK(hi.row_band == 2);
    CHECK(hi.col_band == 2);
    CHECK(hi.ratio == doctest::Approx(4.0).epsilon(0.06));
}

TEST_CASE("a scaled fine diffusion pools to the coarse one") {
    const DiffusionSchedule lin{ScheduleKind::linear};
    const MultiResFunction x0 = random_function(Domain::interval, 4, 1, 61);
    const ConsistencyReport rep =
        cross_resolution_consistency(x0, 0.64, 3, lin, 40000, 21);
    CHECK(rep.fine_resolution == 4);
    CHECK(rep.coarse_resolution == 3);
    // One-level gap: the pooled noise variance per coarse cell is
    // (2 * 2a) / 4 = a, matching the direct process exactly in law.
    CHECK(rep.pooled_variance == doctest::Approx(0.64).epsilon(0.05));
    CHECK(rep.direct_variance == doctest::Approx(0.64).epsilon(0.05));
    CHECK(rep.variance_ratio == doctest::Approx(1.0).epsilon(0.05));
    CHECK(rep.max_mean_discrepancy_se < 3.5);
}

TEST_CASE("the embedding scale carries across multiple levels") {
    const DiffusionSchedule sat{ScheduleKind::exponential_saturating};
    const double a = sat.alpha(0.3);
    const MultiResFunction x0 = random_function(Domain::interval, 5, 1, 62);
    const ConsistencyReport rep =
        cross_resolution_consistency(x0, 0.3, 3, sat, 40000, 22);
    CHECK(rep.pooled_variance == doctest::Approx(a).epsilon(0.05));
    CHECK(rep.direct_variance == doctest::Approx(a).epsilon(0.05));
    CHECK(rep.variance_ratio == doctest::Approx(1.0).epsilon(0.05));
    CHECK(rep.max_mean_discrepancy_se < 3.5);
}

TEST_CASE("equal resolutions share one law up to monte carlo noise") {
    const DiffusionSchedule lin{ScheduleKind::linear};
    const MultiResFunction x0 = random_function(Domain::interval, 3, 2, 63);
    const ConsistencyReport rep =
        cross_resolution_consistency(x0, 0.5, 3, lin, 40000, 23);
    CHECK(rep.variance_ratio == doctest::Approx(1.0).epsilon(0.05));
    CHECK(rep.max_mean_discrepancy_se < 3.5);
}

TEST_CASE("a silent schedule makes both processes identical") {
    const DiffusionSchedule lin{ScheduleKind::linear};
    const MultiResFunction x0 = random_function(Domain::interval, 4, 1, 64);
    const ConsistencyReport rep = cross_resolution_consistency(x0, 0.0, 2, lin, 500, 1);
    CHECK(rep.max_mean_discrepancy == 0.0);
    CHECK(rep.max_mean_discrepancy_se == 0.0);
    CHECK(rep.pooled_variance == 0.0);
    CHECK(rep.direct_variance == 0.0);
    CHECK(rep.variance_ratio == 1.0);
}

TEST_CASE("consistency rejects a coarse level above the fine one") {
    const DiffusionSchedule lin{ScheduleKind::linear};
    const MultiResFunction x0 = random_function(Domain::interval, 3, 1, 65);
    CHECK_THROWS_AS(cross_resolution_consistency(x0, 0.5, 4, lin, 500, 1), ValueError);
    CHECK_THROWS_AS(cross_resolution_consistency(x0, 0.5, -1, lin, 500, 1), ValueError);
}

TEST_CASE("soft thresholding reduces the error under heavy noise") {
    const DiffusionSchedule lin{ScheduleKind::linear};
    const MultiResFunction coarse = random_function(Domain::interval, 2, 1, 401);
    const MultiResFunction x0 = include(coarse, 6);
    const double t = 0.4;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const MultiResFunction x_t = forward_sample(x0, t, lin, seed);
        const MultiResFunction est = denoise_soft_threshold(x_t, t, lin, {1.0});
        CHECK(l2_distance(est, x0) < l2_distance(x_t, x0));
    }
}

TEST_CASE("a zero threshold is the identity round trip") {
    const DiffusionSchedule lin{ScheduleKind::linear};
    const MultiResFunction x0 = random_function(Domain::interval, 5, 2, 402);
    const MultiResFunction same = denoise_soft_threshold(x0, 0.0, lin, {0.0});
    for (Eigen::Index k = 0; k < x0.coeffs.size(); ++k)
        CHECK(same.coeffs[k] == doctest::Approx(x0.coeffs[k]).epsilon(1e-12));
    const MultiResFunction noised = forward_sample(x0, 0.6, lin, 8);
    const MultiResFunction still = denoise_soft_threshold(noised, 0.6, lin, {0.0});
    for (Eigen::Index k = 0; k < x0.coeffs.size(); ++k)
        CHECK(still.coeffs[k] == doctest::Approx(noised.coeffs[k]).epsilon(1e-12));
}

TEST_CASE("a huge threshold keeps only the cell average") {
    const DiffusionSchedule lin{ScheduleKind::linear};
    const MultiResFunction x_t = random_function(Domain::interval, 4, 2, 403);
    const MultiResFunction flat = denoise_soft_threshold(x_t, 1.0, lin, {1e18});
    const MultiResFunction want = include(project(x_t, 0), 4);
    for (Eigen::Index k = 0; k < flat.coeffs.size(); ++k)
        CHECK(flat.coeffs[k] == doctest::Approx(want.coeffs[k]).epsilon(1e-12));
    CHECK_THROWS_AS(denoise_soft_threshold(x_t, 1.0, lin, {-1.0}), ValueError);
}

TEST_CASE("noise drowns equal-energy bands at a geometric rate") {
    // A signal whose detail bands carry unit energy each: per-coefficient
    // noise variance doubles per band, so the measured band SNR halves.
    MultiResFunction haar = MultiResFunction::zeros(Domain::interval, 4, 1, Basis::haar);
    for (int j = 1; j <= 4; ++j) {
        const Eigen::Index lo = Eigen::Index{1} << (j - 1);
        for (Eigen::Index k = lo; k < 2 * lo; ++k)
            haar.coeffs[k] = 1.0 / std::sqrt(static_cast<double>(lo));
    }
    const MultiResFunction x0 = to_basis(haar, Basis::pixel);
    const DiffusionSchedule lin{ScheduleKind::linear};
    const SpectrumReport rep = spectrum_variance(x0, 0.5, lin, 20000, 91);
    const vectord coeff = pixel_to_haar(vectord(x0.channel(0).matrix()), 4);
    std::vector<double> snr;
    for (int j = 1; j <= 4; ++j) {
        const Eigen::Index lo = Eigen::Index{1} << (j - 1);
        const double energy = coeff.segment(lo, lo).squaredNorm();
        CHECK(energy == doctest::Approx(1.0).epsilon(1e-12));
        snr.push_back(energy / rep.bands[static_cast<std::size_t>(j)].variance);
    }
    for (std::size_t j = 0; j + 1 < snr.size(); ++j) {
        CHECK(snr[j + 1] < snr[j]);
        CHECK(snr[j] / snr[j + 1] == doctest::Approx(2.0).epsilon(0.2));
    }
}
