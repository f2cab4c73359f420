#include "mrn/triangle.hpp"

#include <cmath>

#include "mrn/errors.hpp"

namespace mrn {

namespace {

constexpr int kMaxLayoutDepth = 8;
constexpr int kMaxDepth = 10;

void check_depth(int depth, int limit = kMaxDepth) {
    if (depth < 0) throw ValueError("triangle: negative depth");
    if (depth > limit)
        throw ValueError("triangle: depth " + std::to_string(depth) + " exceeds limit " +
                         std::to_string(limit));
}

void check_digits(const std::string& digits) {
    for (char ch : digits)
        if (ch < '1' || ch > '4')
            throw ValueError("triangle: bad codespace digit in '" + digits + "'");
}

}  // namespace

std::vector<std::string> codespace_addresses(int depth) {
    check_depth(depth);
    std::vector<std::string> out;
    const Eigen::Index n = Eigen::Index{1} << (2 * depth);
    out.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index idx = 0; idx < n; ++idx) {
        std::string a(static_cast<std::size_t>(depth), '1');
        Eigen::Index rest = idx;
        for (int t = depth - 1; t >= 0; --t) {
            a[static_cast<std::size_t>(t)] = static_cast<char>('1' + rest % 4);
            rest /= 4;
        }
        out.push_back(std::move(a));
    }
    return out;
}

int address_to_index(const std::string& digits) {
    check_digits(digits);
    int idx = 0;
    for (char ch : digits) idx = idx * 4 + (ch - '1');
    return idx;
}

std::pair<int, int> address_to_grid(const std::string& digits) {
    check_digits(digits);
    const int depth = static_cast<int>(digits.size());
    int row = 0, col = 0;
    for (int t = 0; t < depth; ++t) {
        const int d = digits[static_cast<std::size_t>(t)] - '1';  // 0..3
        const int half = 1 << (depth - 1 - t);
        row += (d / 2) * half;
        col += (d % 2) * half;
    }
    return {row, col};
}

std::string grid_to_address(int row, int col, int depth) {
    check_depth(depth);
    const int side = 1 << depth;
    if (row < 0 || row >= side || col < 0 || col >= side)
        throw ValueError("triangle: grid position out of range");
    std::string a(static_cast<std::size_t>(depth), '1');
    for (int t = 0; t < depth; ++t) {
        const int half = 1 << (depth - 1 - t);
        const int qr = row / half, qc = col / half;
        a[static_cast<std::size_t>(t)] = static_cast<char>('1' + qr * 2 + qc);
        row -= qr * half;
        col -= qc * half;
    }
    return a;
}

std::vector<std::vector<std::string>> codespace_layout(int depth) {
    check_depth(depth, kMaxLayoutDepth);
    const int side = 1 << depth;
    std::vector<std::vector<std::string>> grid(
        static_cast<std::size_t>(side), std::vector<std::string>(static_cast<std::size_t>(side)));
    for (const std::string& a : codespace_addresses(depth)) {
        auto [r, c] = address_to_grid(a);
        grid[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = a;
    }
    return grid;
}

std::pair<double, double> tri_centroid(const std::string& digits) {
    check_digits(digits);
    // Child maps of the subdivision; digit 4 is the point-reflected center.
    double x = 1.0 / 3.0, y = 1.0 / 3.0;
    for (auto it = digits.rbegin(); it != digits.rend(); ++it) {
        switch (*it) {
            case '1': x = 0.5 * x;       y = 0.5 * y;       break;
            case '2': x = 0.5 + 0.5 * x; y = 0.5 * y;       break;
            case '3': x = 0.5 * x;       y = 0.5 + 0.5 * y; break;
            default:  x = 0.5 - 0.5 * x; y = 0.5 - 0.5 * y; break;
        }
    }
    return {x, y};
}

TriFunction tri_constant(int depth, double value, int channels) {
    check_depth(depth);
    if (channels < 1) throw ValueError("triangle: channels must be positive");
    TriFunction f;
    f.depth = depth;
    f.channels = channels;
    f.values = arrayd::Constant((Eigen::Index{1} << (2 * depth)) * channels, value);
    return f;
}

TriFunction tri_sample(const std::function<double(double, double)>& g, int depth) {
    TriFunction f = tri_constant(depth, 0.0);
    const auto addresses = codespace_addresses(depth);
    for (std::size_t i = 0; i < addresses.size(); ++i) {
        auto [x, y] = tri_centroid(addresses[i]);
        f.values[static_cast<Eigen::Index>(i)] = g(x, y);
    }
    return f;
}

TriFunction tri_avg_pool(const TriFunction& f, int to_depth) {
    check_depth(to_depth);
    if (to_depth > f.depth)
        throw ValueError("tri_avg_pool: target depth " + std::to_string(to_depth) +
                         " exceeds source depth " + std::to_string(f.depth));
    TriFunction out = tri_constant(to_depth, 0.0, f.channels);
    const Eigen::Index in_cells = f.cell_count();
    const Eigen::Index out_cells = out.cell_count();
    const Eigen::Index block = in_cells / out_cells;  // children stay contiguous
    for (int c = 0; c < f.channels; ++c)
        for (Eigen::Index k = 0; k < out_cells; ++k)
            out.values[c * out_cells + k] = f.values.segment(c * in_cells + k * block, block).mean();
    return out;
}

namespace {

// Forward step on one channel: n cells -> n/4 parent means plus 3n/4 detail
// coefficients written to the level's slot.
void tri_haar_channel(arrayd& work, arrayd& out, int depth) {
    Eigen::Index n = Eigen::Index{1} << (2 * depth);
    for (int level = depth; level >= 1; --level) {
        const Eigen::Index parents = n / 4;
        const Eigen::Index base = parents;  // level-l block starts at 4^{l-1}
        for (Eigen::Index p = 0; p < parents; ++p) {
            const double a = work[4 * p], b = work[4 * p + 1], c = work[4 * p + 2], d = work[4 * p + 3];
            work[p] = 0.25 * (a + b + c + d);
            out[base + 3 * p + 0] = 0.25 * (a + b - c - d);
            out[base + 3 * p + 1] = 0.25 * (a - b + c - d);
            out[base + 3 * p + 2] = 0.25 * (a - b - c + d);
        }
        n = parents;
    }
    out[0] = work[0];
}

void tri_haar_inverse_channel(const arrayd& coeffs, arrayd& out, int depth) {
    out[0] = coeffs[0];
    Eigen::Index parents = 1;
    for (int level = 1; level <= depth; ++level) {
        const Eigen::Index base = parents;  // 4^{l-1}
        // expand in place from the back so parent means are not clobbered
        for (Eigen::Index p = parents - 1; p >= 0; --p) {
            const double m = out[p];
            const double d1 = coeffs[base + 3 * p + 0];
            const double d2 = coeffs[base + 3 * p + 1];
            const double d3 = coeffs[base + 3 * p + 2];
            out[4 * p + 0] = m + d1 + d2 + d3;
            out[4 * p + 1] = m + d1 - d2 - d3;
            out[4 * p + 2] = m - d1 + d2 - d3;
            out[4 * p + 3] = m - d1 - d2 + d3;
        }
        parents *= 4;
    }
}

}  // namespace

arrayd tri_haar(const TriFunction& f) {
    if (f.depth < 1) throw ValueError("tri_haar: depth must be >= 1");
    const Eigen::Index cells = f.cell_count();
    arrayd out(cells * f.channels);
    for (int c = 0; c < f.channels; ++c) {
        arrayd work = f.values.segment(c * cells, cells);
        arrayd chan(cells);
        tri_haar_channel(work, chan, f.depth);
        out.segment(c * cells, cells) = chan;
    }
    return out;
}

TriFunction tri_haar_inverse(const arrayd& coeffs, int depth, int channels) {
    check_depth(depth);
    if (depth < 1) throw ValueError("tri_haar_inverse: depth must be >= 1");
    const Eigen::Index cells = Eigen::Index{1} << (2 * depth);
    if (coeffs.size() != cells * channels)
        throw ShapeError("tri_haar_inverse: got " + std::to_string(coeffs.size()) +
                         " coefficients for depth " + std::to_string(depth) + ", channels " +
                         std::to_string(channels));
    TriFunction f = tri_constant(depth, 0.0, channels);
    for (int c = 0; c < channels; ++c) {
        arrayd chan(cells);
        tri_haar_inverse_channel(arrayd(coeffs.segment(c * cells, cells)), chan, depth);
        f.values.segment(c * cells, cells) = chan;
    }
    return f;
}

matrixd tri_to_grid(const TriFunction& f, int channel) {
    if (channel < 0 || channel >= f.channels) throw ValueError("tri_to_grid: channel out of range");
    const int side = 1 << f.depth;
    matrixd grid(side, side);
    const auto addresses = codespace_addresses(f.depth);
    const Eigen::Index cells = f.cell_count();
    for (std::size_t i = 0; i < addresses.size(); ++i) {
        auto [r, c] = address_to_grid(addresses[i]);
        grid(r, c) = f.values[channel * cells + static_cast<Eigen::Index>(i)];
    }
    return grid;
}

TriFunction tri_from_grid(const matrixd& grid) {
    if (grid.rows() != grid.cols())
        throw ShapeError("tri_from_grid: grid must be square");
    int depth = 0;
    while ((Eigen::Index{1} << depth) < grid.rows()) ++depth;
    if ((Eigen::Index{1} << depth) != grid.rows())
        throw ShapeError("tri_from_grid: side " + std::to_string(grid.rows()) + " is not dyadic");
    TriFunction f = tri_constant(depth, 0.0);
    for (int r = 0; r < grid.rows(); ++r)
        for (int c = 0; c < grid.cols(); ++c)
            f.values[address_to_index(grid_to_address(r, c, depth))] = grid(r, c);
    return f;
}

}  // namespace mrn
