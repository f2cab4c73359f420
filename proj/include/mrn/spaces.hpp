#pragma once

#include <string>
#include <vector>

#include "mrn/tensor.hpp"

namespace mrn {

enum class Domain : int { interval = 0, square = 1, rectangle = 2, triangle = 3 };
enum class Basis : int { pixel = 0, haar = 1, h01 = 2 };

const char* domain_name(Domain d);
const char* basis_name(Basis b);

// Cells of the dyadic partition at a given resolution: 2^i on the interval,
// 4^i on the square and the triangle, 2^i x 2^{i+1} = 2^{2i+1} on the
// rectangle. All cells of one partition carry equal measure 1/cells.
Eigen::Index domain_cells(Domain d, int resolution);

// Piecewise-constant function on a dyadic partition (or, in the h01 basis, a
// piecewise-linear one), stored as channel-major flat coefficients.
//
// Pixel layout: interval left-to-right; square and rectangle row-major;
// triangle in lexicographic codespace order. Haar layout: the band order of
// the 1D transform, applied separably on square/rectangle; the recursive
// quadruple transform on the triangle. h01 layout (interval only): the hat
// with level k and shift j sits at index 2^k + j, index 0 is unused padding.
struct MultiResFunction {
    Domain domain = Domain::interval;
    int resolution = 0;
    int channels = 1;
    Basis basis = Basis::pixel;
    arrayd coeffs;

    static MultiResFunction zeros(Domain d, int resolution, int channels = 1,
                                  Basis basis = Basis::pixel);
    static MultiResFunction constant(Domain d, int resolution, double value, int channels = 1);

    Eigen::Index cell_count() const { return domain_cells(domain, resolution); }
    double cell_measure() const { return 1.0 / static_cast<double>(cell_count()); }

    arrayd channel(int c) const;
    void set_channel(int c, const arrayd& values);

    // Row/column extents of the pixel grid (triangle via the coding map).
    Eigen::Index grid_rows() const;
    Eigen::Index grid_cols() const;

    void check_consistent() const;
    std::string describe() const;
};

// pixel <-> haar conversion (h01 converts only to itself).
MultiResFunction to_basis(const MultiResFunction& f, Basis target);

// Downsampling projection: averaging in the pixel basis, coefficient
// truncation in the haar basis; the two paths agree. Rejects to_i above the
// function's resolution.
MultiResFunction project(const MultiResFunction& f, int to_i);

// Natural inclusion into a finer resolution: value duplication in the pixel
// basis, zero padding in the haar basis. project(include(f)) == f.
MultiResFunction include(const MultiResFunction& f, int to_i);

// Q_i as an explicit operator, with the complementary projector.
struct ProjectionOp {
    enum class Kind { avg_pool, orthogonal_haar };
    Kind kind = Kind::avg_pool;
    int from_resolution = 0;
    int to_resolution = 0;

    // f at from_resolution -> coarse function at to_resolution.
    MultiResFunction apply(const MultiResFunction& f) const;
    // Q f = include(apply(f)): same resolution, fine content removed.
    MultiResFunction smooth(const MultiResFunction& f) const;
    // (Id - Q) f.
    MultiResFunction complement(const MultiResFunction& f) const;
};

// --- Hierarchical hat basis of H^1_0(0,1) --------------------------------

// Levels k = 0 .. i-1, shifts j = 0 .. 2^k - 1; the (k, j) hat is supported
// on [j 2^{-k}, (j+1) 2^{-k}] with peak 1 at the midpoint. All functions
// vanish at 0 and 1.
struct H01Basis {
    struct Index {
        int k = 0, j = 0;
    };
    int resolution = 0;
    std::vector<Index> indices;

    static H01Basis make(int resolution);
};

double h01_eval(int k, int j, double x);

// Exact H^1_0 inner product: integral of the two piecewise-constant
// derivatives, computed on the common refinement (no quadrature error).
double h01_inner(int ka, int ja, int kb, int jb);

// Evaluates an h01-basis function at a point.
double h01_eval_function(const MultiResFunction& u, double x, int channel = 0);

// Galerkin solution of u'' = f on (0,1) with u(0) = u(1) = 0 in the
// hierarchical basis: the stiffness matrix is diagonal, so each coefficient
// is -(integral of phi_a f) / <phi_a, phi_a>. Load integrals are exact for
// piecewise-constant f.
MultiResFunction galerkin_solve_elliptic(const MultiResFunction& f, int resolution);

// --- Measure-weighted L2 -------------------------------------------------

// L2 norm of the function (not the coefficient vector): cell values weighted
// by cell measure, summed over channels.
double l2_norm(const MultiResFunction& f);

// Dataset loss: sqrt of the mean, over pairs, of squared L2 distances.
double l2_loss(const std::vector<MultiResFunction>& targets,
               const std::vector<MultiResFunction>& predictions);

// --- Bridges to the network tensors --------------------------------------

// Pixel-basis function -> (channels, rows, cols) tensor. Interval functions
// become (M, 1, 2^i); triangle functions pass through the coding map.
Tensor to_tensor(const MultiResFunction& f);
MultiResFunction from_tensor(const Tensor& t, Domain d, int resolution);

}  // namespace mrn
