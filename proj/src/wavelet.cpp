#include "mrn/wavelet.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include "mrn/errors.hpp"

namespace mrn {

namespace {

constexpr int kMaxResolution = 16;

void check_resolution(int i) {
    if (i < 0) throw ValueError("haar: resolution must be nonnegative, got " + std::to_string(i));
    if (i > kMaxResolution)
        throw ValueError("haar: resolution " + std::to_string(i) + " exceeds limit " +
                         std::to_string(kMaxResolution));
}

void check_length(const char* what, Eigen::Index n, int i) {
    if (n != (Eigen::Index{1} << i))
        throw ShapeError(std::string(what) + ": length " + std::to_string(n) +
                         " does not match resolution " + std::to_string(i));
}

HaarTransform build_haar(int i) {
    const Eigen::Index n = Eigen::Index{1} << i;
    HaarTransform t;
    t.resolution = i;
    t.lambda.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) t.lambda[k] = haar_lambda(i, static_cast<int>(k));

    // Row k in band j is supported on one dyadic block of 2^{i-j+1} cells:
    // +1 on the first half, -1 on the second. The father row is all ones.
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(n * (i + 1)));
    for (Eigen::Index c = 0; c < n; ++c) trip.emplace_back(0, c, 1.0);
    for (Eigen::Index k = 1; k < n; ++k) {
        const int j = haar_band(static_cast<int>(k));
        const Eigen::Index block = Eigen::Index{1} << (i - j + 1);
        const Eigen::Index m = k - (Eigen::Index{1} << (j - 1));
        const Eigen::Index start = m * block;
        for (Eigen::Index c = 0; c < block / 2; ++c) {
            trip.emplace_back(k, start + c, 1.0);
            trip.emplace_back(k, start + block / 2 + c, -1.0);
        }
    }
    t.H.resize(n, n);
    t.H.setFromTriplets(trip.begin(), trip.end());
    t.H.makeCompressed();
    return t;
}

// One analysis step with periodic boundary: N samples -> N/2 approx + N/2
// detail coefficients.
void dwt_step(const vectord& x, const FilterBank& bank, vectord& approx, vectord& detail) {
    const Eigen::Index n = x.size();
    const Eigen::Index half = n / 2;
    const Eigen::Index taps = bank.lowpass.size();
    approx.resize(half);
    detail.resize(half);
    for (Eigen::Index k = 0; k < half; ++k) {
        double a = 0.0, d = 0.0;
        for (Eigen::Index m = 0; m < taps; ++m) {
            const double s = x[(2 * k + m) % n];
            a += bank.lowpass[m] * s;
            d += bank.highpass[m] * s;
        }
        approx[k] = a;
        detail[k] = d;
    }
}

// Synthesis step, the adjoint of the analysis step; exact for orthogonal
// banks.
vectord idwt_step(const vectord& approx, const vectord& detail, const FilterBank& bank) {
    const Eigen::Index half = approx.size();
    const Eigen::Index n = 2 * half;
    const Eigen::Index taps = bank.lowpass.size();
    vectord x = vectord::Zero(n);
    for (Eigen::Index k = 0; k < half; ++k)
        for (Eigen::Index m = 0; m < taps; ++m)
            x[(2 * k + m) % n] += bank.lowpass[m] * approx[k] + bank.highpass[m] * detail[k];
    return x;
}

bool is_power_of_two(Eigen::Index n) { return n > 0 && (n & (n - 1)) == 0; }

void check_dyadic(const char* what, Eigen::Index n, int levels) {
    if (!is_power_of_two(n))
        throw ShapeError(std::string(what) + ": size " + std::to_string(n) + " is not dyadic");
    if (n < (Eigen::Index{1} << levels))
        throw ShapeError(std::string(what) + ": size " + std::to_string(n) +
                         " is too small for " + std::to_string(levels) + " levels");
}

}  // namespace

int haar_band(int k) {
    if (k < 0) throw ValueError("haar: negative coefficient index");
    if (k == 0) return 0;
    int j = 0;
    while ((1 << j) <= k) ++j;
    return j;  // 2^{j-1} <= k < 2^j
}

double haar_lambda(int i, int k) {
    const int j = haar_band(k);
    if (k >= (1 << i)) throw ValueError("haar: coefficient index out of range");
    return j == 0 ? std::ldexp(1.0, -i) : std::ldexp(1.0, -i + j - 1);
}

const HaarTransform& haar_matrix(int i) {
    check_resolution(i);
    static std::map<int, HaarTransform> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(i);
    if (it == cache.end()) it = cache.emplace(i, build_haar(i)).first;
    return it->second;
}

vectord pixel_to_haar(const vectord& v, int i) {
    check_resolution(i);
    check_length("pixel_to_haar", v.size(), i);
    const HaarTransform& t = haar_matrix(i);
    return t.lambda.asDiagonal() * (t.H * v);
}

vectord haar_to_pixel(const vectord& c, int i) {
    check_resolution(i);
    check_length("haar_to_pixel", c.size(), i);
    const HaarTransform& t = haar_matrix(i);
    // Rows of H are orthogonal, so H^{-1} = H^T D^{-1} with D the row norms
    // squared (2^{i-j+1} in band j, 2^i for the father).
    vectord u = c.array() / t.lambda.array();
    for (Eigen::Index k = 0; k < u.size(); ++k) {
        const int j = haar_band(static_cast<int>(k));
        const double rownorm2 = j == 0 ? std::ldexp(1.0, i) : std::ldexp(1.0, i - j + 1);
        u[k] /= rownorm2;
    }
    return t.H.transpose() * u;
}

matrixd pixel_to_haar(const matrixd& img, int i) {
    check_resolution(i);
    check_length("pixel_to_haar", img.rows(), i);
    check_length("pixel_to_haar", img.cols(), i);
    matrixd out(img.rows(), img.cols());
    for (Eigen::Index c = 0; c < img.cols(); ++c) out.col(c) = pixel_to_haar(vectord(img.col(c)), i);
    for (Eigen::Index r = 0; r < img.rows(); ++r)
        out.row(r) = pixel_to_haar(vectord(out.row(r).transpose()), i).transpose();
    return out;
}

matrixd haar_to_pixel(const matrixd& c, int i) {
    check_resolution(i);
    check_length("haar_to_pixel", c.rows(), i);
    check_length("haar_to_pixel", c.cols(), i);
    matrixd out(c.rows(), c.cols());
    for (Eigen::Index r = 0; r < c.rows(); ++r)
        out.row(r) = haar_to_pixel(vectord(c.row(r).transpose()), i).transpose();
    for (Eigen::Index col = 0; col < c.cols(); ++col) out.col(col) = haar_to_pixel(vectord(out.col(col)), i);
    return out;
}

vectord avg_pool_downsample(const vectord& v, int from_i, int to_i) {
    check_resolution(from_i);
    check_resolution(to_i);
    if (to_i > from_i)
        throw ValueError("avg_pool_downsample: target resolution " + std::to_string(to_i) +
                         " exceeds source " + std::to_string(from_i));
    check_length("avg_pool_downsample", v.size(), from_i);
    const Eigen::Index out_n = Eigen::Index{1} << to_i;
    const Eigen::Index block = Eigen::Index{1} << (from_i - to_i);
    vectord out(out_n);
    for (Eigen::Index k = 0; k < out_n; ++k) out[k] = v.segment(k * block, block).mean();
    return out;
}

matrixd avg_pool_downsample(const matrixd& img, int from_i, int to_i) {
    check_resolution(from_i);
    check_resolution(to_i);
    if (to_i > from_i)
        throw ValueError("avg_pool_downsample: target resolution " + std::to_string(to_i) +
                         " exceeds source " + std::to_string(from_i));
    check_length("avg_pool_downsample", img.rows(), from_i);
    check_length("avg_pool_downsample", img.cols(), from_i);
    const Eigen::Index out_n = Eigen::Index{1} << to_i;
    const Eigen::Index block = Eigen::Index{1} << (from_i - to_i);
    matrixd out(out_n, out_n);
    for (Eigen::Index r = 0; r < out_n; ++r)
        for (Eigen::Index c = 0; c < out_n; ++c)
            out(r, c) = img.block(r * block, c * block, block, block).mean();
    return out;
}

vectord soft_threshold(const vectord& c, double lambda) {
    if (lambda < 0.0) throw ValueError("soft_threshold: negative threshold");
    vectord out(c.size());
    for (Eigen::Index k = 0; k < c.size(); ++k) {
        const double mag = std::abs(c[k]) - lambda;
        out[k] = mag > 0.0 ? (c[k] > 0.0 ? mag : -mag) : 0.0;
    }
    return out;
}

FilterBank haar_bank() {
    const double s = 1.0 / std::sqrt(2.0);
    FilterBank b;
    b.name = "haar";
    b.lowpass = (vectord(2) << s, s).finished();
    b.highpass = (vectord(2) << s, -s).finished();
    return b;
}

FilterBank db2_bank() {
    const double r3 = std::sqrt(3.0);
    const double s = 4.0 * std::sqrt(2.0);
    FilterBank b;
    b.name = "db2";
    b.lowpass = (vectord(4) << (1 + r3) / s, (3 + r3) / s, (3 - r3) / s, (1 - r3) / s).finished();
    b.highpass.resize(4);
    for (Eigen::Index k = 0; k < 4; ++k)
        b.highpass[k] = (k % 2 == 0 ? 1.0 : -1.0) * b.lowpass[3 - k];
    return b;
}

FilterBank filter_bank_by_name(const std::string& name) {
    if (name == "haar") return haar_bank();
    if (name == "db2") return db2_bank();
    throw ValueError("filter_bank: unknown bank '" + name + "' (expected haar or db2)");
}

void validate_filter_bank(const FilterBank& bank, double tol) {
    const Eigen::Index taps = bank.lowpass.size();
    if (taps == 0 || taps % 2 != 0)
        throw ValueError("filter_bank '" + bank.name + "': tap count must be even and positive");
    if (bank.highpass.size() != taps)
        throw ValueError("filter_bank '" + bank.name + "': lowpass/highpass length mismatch");
    if (std::abs(bank.lowpass.squaredNorm() - 1.0) > tol)
        throw ValueError("filter_bank '" + bank.name + "': lowpass is not unit norm");
    for (Eigen::Index shift = 2; shift < taps; shift += 2) {
        double acc = 0.0;
        for (Eigen::Index k = 0; k + shift < taps; ++k) acc += bank.lowpass[k] * bank.lowpass[k + shift];
        if (std::abs(acc) > tol)
            throw ValueError("filter_bank '" + bank.name + "': lowpass not orthogonal to shift " +
                             std::to_string(shift));
    }
    for (Eigen::Index k = 0; k < taps; ++k) {
        const double want = (k % 2 == 0 ? 1.0 : -1.0) * bank.lowpass[taps - 1 - k];
        if (std::abs(bank.highpass[k] - want) > tol)
            throw ValueError("filter_bank '" + bank.name +
                             "': highpass is not the alternating-sign reverse of lowpass");
    }
}

WaveletPyramid1D multilevel_dwt(const vectord& signal, int levels, const FilterBank& bank) {
    if (levels < 1) throw ValueError("multilevel_dwt: levels must be >= 1");
    check_dyadic("multilevel_dwt", signal.size(), levels);
    WaveletPyramid1D pyr;
    pyr.levels = levels;
    vectord current = signal;
    for (int l = 0; l < levels; ++l) {
        vectord approx, detail;
        dwt_step(current, bank, approx, detail);
        pyr.details.push_back(std::move(detail));
        current = std::move(approx);
    }
    pyr.coarse = std::move(current);
    return pyr;
}

vectord multilevel_idwt(const WaveletPyramid1D& pyr, const FilterBank& bank) {
    vectord current = pyr.coarse;
    for (int l = pyr.levels - 1; l >= 0; --l)
        current = idwt_step(current, pyr.details[static_cast<std::size_t>(l)], bank);
    return current;
}

namespace {

// Row-then-column single 2D level. Transforming each row splits columns into
// approx/detail halves; transforming columns of those splits rows.
void dwt_step_2d(const matrixd& x, const FilterBank& bank, matrixd& ll, DetailBands2D& bands) {
    const Eigen::Index rows = x.rows(), cols = x.cols();
    matrixd row_lo(rows, cols / 2), row_hi(rows, cols / 2);
    for (Eigen::Index r = 0; r < rows; ++r) {
        vectord a, d;
        dwt_step(vectord(x.row(r).transpose()), bank, a, d);
        row_lo.row(r) = a.transpose();
        row_hi.row(r) = d.transpose();
    }
    ll.resize(rows / 2, cols / 2);
    bands.lh.resize(rows / 2, cols / 2);
    bands.hl.resize(rows / 2, cols / 2);
    bands.hh.resize(rows / 2, cols / 2);
    for (Eigen::Index c = 0; c < cols / 2; ++c) {
        vectord a, d;
        dwt_step(vectord(row_lo.col(c)), bank, a, d);
        ll.col(c) = a;
        bands.lh.col(c) = d;
        dwt_step(vectord(row_hi.col(c)), bank, a, d);
        bands.hl.col(c) = a;
        bands.hh.col(c) = d;
    }
}

matrixd idwt_step_2d(const matrixd& ll, const DetailBands2D& bands, const FilterBank& bank) {
    const Eigen::Index rows = ll.rows() * 2, cols = ll.cols();
    matrixd row_lo(rows, cols), row_hi(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
        row_lo.col(c) = idwt_step(vectord(ll.col(c)), vectord(bands.lh.col(c)), bank);
        row_hi.col(c) = idwt_step(vectord(bands.hl.col(c)), vectord(bands.hh.col(c)), bank);
    }
    matrixd x(rows, cols * 2);
    for (Eigen::Index r = 0; r < rows; ++r)
        x.row(r) = idwt_step(vectord(row_lo.row(r).transpose()), vectord(row_hi.row(r).transpose()), bank)
                       .transpose();
    return x;
}

}  // namespace

WaveletPyramid2D multilevel_dwt(const matrixd& image, int levels, const FilterBank& bank) {
    if (levels < 1) throw ValueError("multilevel_dwt: levels must be >= 1");
    check_dyadic("multilevel_dwt", image.rows(), levels);
    check_dyadic("multilevel_dwt", image.cols(), levels);
    WaveletPyramid2D pyr;
    pyr.levels = levels;
    matrixd current = image;
    for (int l = 0; l < levels; ++l) {
        matrixd ll;
        DetailBands2D bands;
        dwt_step_2d(current, bank, ll, bands);
        pyr.details.push_back(std::move(bands));
        current = std::move(ll);
    }
    pyr.coarse = std::move(current);
    return pyr;
}

matrixd multilevel_idwt(const WaveletPyramid2D& pyr, const FilterBank& bank) {
    matrixd current = pyr.coarse;
    for (int l = pyr.levels - 1; l >= 0; --l)
        current = idwt_step_2d(current, pyr.details[static_cast<std::size_t>(l)], bank);
    return current;
}

}  // namespace mrn
