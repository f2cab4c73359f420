#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mrn/tensor.hpp"

namespace mrn {

// Self-similar subdivision of the right triangle with vertices (0,0), (1,0),
// (0,1). Every cell is named by a base-4 address over {1,2,3,4}: digits 1,2,3
// are the corner children at the right angle, the x-extreme and the y-extreme
// corner; digit 4 is the central child, inverted by a point reflection. Cells
// are stored in lexicographic address order, which makes the four children of
// any parent contiguous.

struct CodespaceAddress {
    std::string digits;
    int depth() const { return static_cast<int>(digits.size()); }
};

// All 4^depth addresses in lexicographic order.
std::vector<std::string> codespace_addresses(int depth);

// Lexicographic cell index of an address.
int address_to_index(const std::string& digits);

// Grid position of an address under the quadrant pattern [[1,2],[3,4]]
// applied digit by digit.
std::pair<int, int> address_to_grid(const std::string& digits);
std::string grid_to_address(int row, int col, int depth);

// 2^depth x 2^depth grid of addresses; depth <= 8.
std::vector<std::vector<std::string>> codespace_layout(int depth);

// Centroid of a cell, obtained by chaining the child affine maps and pushing
// the root centroid (1/3, 1/3) through.
std::pair<double, double> tri_centroid(const std::string& digits);

struct TriFunction {
    int depth = 0;
    int channels = 1;
    arrayd values;  // channel-major: channel c occupies [c*4^depth, (c+1)*4^depth)

    Eigen::Index cell_count() const { return Eigen::Index{1} << (2 * depth); }
};

TriFunction tri_constant(int depth, double value, int channels = 1);

// One centroid sample per cell.
TriFunction tri_sample(const std::function<double(double, double)>& g, int depth);

// Parent value = mean of its four children, applied level by level.
TriFunction tri_avg_pool(const TriFunction& f, int to_depth);

// Recursive orthogonal transform on sibling quadruples with the 4-point rows
// (1,1,1,1), (1,1,-1,-1), (1,-1,1,-1), (1,-1,-1,1), averaging convention
// (father coefficient = mean). Output layout: index 0 is the global mean and
// level-l details occupy [4^{l-1}, 4^l), so truncating to 4^d coefficients is
// exactly the transform of the depth-d pooling.
arrayd tri_haar(const TriFunction& f);
TriFunction tri_haar_inverse(const arrayd& coeffs, int depth, int channels);

// Encoding map between lexicographic cell order and the square pixel grid.
matrixd tri_to_grid(const TriFunction& f, int channel = 0);
TriFunction tri_from_grid(const matrixd& grid);

}  // namespace mrn
