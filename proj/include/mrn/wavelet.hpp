#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <string>
#include <vector>

#include "mrn/tensor.hpp"

namespace mrn {

// Pixel-to-Haar change of basis on a dyadic grid of 2^i cells: T_i = Lambda*H.
// H carries the unnormalized Haar pattern (entries -1, 0, 1) and Lambda the
// per-band averaging weights, so the first output coefficient is the mean of
// the input. Stored sparse; each row only touches one dyadic block.
struct HaarTransform {
    int resolution = 0;
    Eigen::SparseMatrix<double> H;
    vectord lambda;

    matrixd dense_h() const { return matrixd(H); }
    matrixd dense_t() const { return lambda.asDiagonal() * matrixd(H); }
};

// Frequency band of coefficient index k (0-based): 0 for the father (mean)
// coefficient, else the unique j >= 1 with 2^{j-1} <= k < 2^j.
int haar_band(int k);

// Lambda entry for coefficient k at resolution i: 2^{-i} for the father,
// 2^{-i+j-1} for band j. Also the white-noise variance of coefficient k.
double haar_lambda(int i, int k);

// Builds (and caches) the transform for resolution i, 0 <= i <= 16.
const HaarTransform& haar_matrix(int i);

vectord pixel_to_haar(const vectord& v, int i);
vectord haar_to_pixel(const vectord& c, int i);

// Separable 2D variants on 2^i x 2^i images: the 1D map applied to columns
// and rows.
matrixd pixel_to_haar(const matrixd& img, int i);
matrixd haar_to_pixel(const matrixd& c, int i);

// Mean over dyadic blocks of 2^{from_i - to_i} cells (1D) or per-level 2x2
// blocks (2D).
vectord avg_pool_downsample(const vectord& v, int from_i, int to_i);
matrixd avg_pool_downsample(const matrixd& img, int from_i, int to_i);

// sign(c) * max(|c| - lambda, 0), elementwise.
vectord soft_threshold(const vectord& c, double lambda);

// --- Orthogonal filter banks ---------------------------------------------

struct FilterBank {
    std::string name;
    vectord lowpass;
    vectord highpass;
};

FilterBank haar_bank();  // taps 1/sqrt(2); orthonormal convention
FilterBank db2_bank();   // Daubechies-2 from the closed-form tap expressions
FilterBank filter_bank_by_name(const std::string& name);

// Checks sum h^2 = 1, even-shift orthogonality, and that the highpass is the
// alternating-sign reverse of the lowpass.
void validate_filter_bank(const FilterBank& bank, double tol = 1e-12);

// Multi-level DWT pyramids. details[0] is the first (finest) level; band
// sizes halve (1D) or quarter (2D) each level down.
struct WaveletPyramid1D {
    vectord coarse;
    std::vector<vectord> details;
    int levels = 0;
};

// Oriented bands per 2D level after transforming rows then columns:
// lh = row-lowpass/column-highpass, hl = row-highpass/column-lowpass,
// hh = highpass in both.
struct DetailBands2D {
    matrixd lh, hl, hh;
};

struct WaveletPyramid2D {
    matrixd coarse;
    std::vector<DetailBands2D> details;
    int levels = 0;
};

WaveletPyramid1D multilevel_dwt(const vectord& signal, int levels, const FilterBank& bank);
vectord multilevel_idwt(const WaveletPyramid1D& pyr, const FilterBank& bank);
WaveletPyramid2D multilevel_dwt(const matrixd& image, int levels, const FilterBank& bank);
matrixd multilevel_idwt(const WaveletPyramid2D& pyr, const FilterBank& bank);

}  // namespace mrn
