#include "mrn/spaces.hpp"

#include <cmath>

#include "mrn/errors.hpp"
#include "mrn/triangle.hpp"
#include "mrn/wavelet.hpp"

namespace mrn {

namespace {

void check_domain_resolution(Domain d, int i) {
    if (i < 0) throw ValueError("function: negative resolution");
    const int limit = d == Domain::interval ? 16 : 10;
    if (i > limit)
        throw ValueError(std::string("function: resolution ") + std::to_string(i) +
                         " exceeds limit for domain " + domain_name(d));
}

TriFunction as_tri(const MultiResFunction& f) {
    TriFunction t;
    t.depth = f.resolution;
    t.channels = f.channels;
    t.values = f.coeffs;
    return t;
}

// Row-major matrix view of one channel of a grid-shaped function.
matrixd channel_matrix(const MultiResFunction& f, int c) {
    matrixd m(f.grid_rows(), f.grid_cols());
    const arrayd chan = f.channel(c);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index col = 0; col < m.cols(); ++col) m(r, col) = chan[r * m.cols() + col];
    return m;
}

arrayd flatten_matrix(const matrixd& m) {
    arrayd out(m.rows() * m.cols());
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) out[r * m.cols() + c] = m(r, c);
    return out;
}

// Rectangle grids are 2^i x 2^{i+1}: rows transform at resolution i, columns
// of each row at i+1.
matrixd rect_pixel_to_haar(const matrixd& img, int i) {
    matrixd out(img.rows(), img.cols());
    for (Eigen::Index r = 0; r < img.rows(); ++r)
        out.row(r) = pixel_to_haar(vectord(img.row(r).transpose()), i + 1).transpose();
    for (Eigen::Index c = 0; c < img.cols(); ++c) out.col(c) = pixel_to_haar(vectord(out.col(c)), i);
    return out;
}

matrixd rect_haar_to_pixel(const matrixd& coeff, int i) {
    matrixd out(coeff.rows(), coeff.cols());
    for (Eigen::Index c = 0; c < coeff.cols(); ++c) out.col(c) = haar_to_pixel(vectord(coeff.col(c)), i);
    for (Eigen::Index r = 0; r < out.rows(); ++r)
        out.row(r) = haar_to_pixel(vectord(out.row(r).transpose()), i + 1).transpose();
    return out;
}

matrixd block_mean(const matrixd& m, Eigen::Index out_rows, Eigen::Index out_cols) {
    const Eigen::Index br = m.rows() / out_rows, bc = m.cols() / out_cols;
    matrixd out(out_rows, out_cols);
    for (Eigen::Index r = 0; r < out_rows; ++r)
        for (Eigen::Index c = 0; c < out_cols; ++c) out(r, c) = m.block(r * br, c * bc, br, bc).mean();
    return out;
}

matrixd block_duplicate(const matrixd& m, Eigen::Index out_rows, Eigen::Index out_cols) {
    const Eigen::Index br = out_rows / m.rows(), bc = out_cols / m.cols();
    matrixd out(out_rows, out_cols);
    for (Eigen::Index r = 0; r < out_rows; ++r)
        for (Eigen::Index c = 0; c < out_cols; ++c) out(r, c) = m(r / br, c / bc);
    return out;
}

}  // namespace

const char* domain_name(Domain d) {
    switch (d) {
        case Domain::interval: return "interval";
        case Domain::square: return "square";
        case Domain::rectangle: return "rectangle";
        case Domain::triangle: return "triangle";
    }
    return "?";
}

const char* basis_name(Basis b) {
    switch (b) {
        case Basis::pixel: return "pixel";
        case Basis::haar: return "haar";
        case Basis::h01: return "h01";
    }
    return "?";
}

Eigen::Index domain_cells(Domain d, int resolution) {
    check_domain_resolution(d, resolution);
    switch (d) {
        case Domain::interval: return Eigen::Index{1} << resolution;
        case Domain::square:
        case Domain::triangle: return Eigen::Index{1} << (2 * resolution);
        case Domain::rectangle: return Eigen::Index{1} << (2 * resolution + 1);
    }
    throw ValueError("function: unknown domain");
}

MultiResFunction MultiResFunction::zeros(Domain d, int resolution, int channels, Basis basis) {
    if (channels < 1) throw ValueError("function: channels must be positive");
    MultiResFunction f;
    f.domain = d;
    f.resolution = resolution;
    f.channels = channels;
    f.basis = basis;
    f.coeffs = arrayd::Zero(domain_cells(d, resolution) * channels);
    return f;
}

MultiResFunction MultiResFunction::constant(Domain d, int resolution, double value, int channels) {
    MultiResFunction f = zeros(d, resolution, channels);
    f.coeffs.setConstant(value);
    return f;
}

arrayd MultiResFunction::channel(int c) const {
    if (c < 0 || c >= channels) throw ValueError("function: channel out of range");
    const Eigen::Index n = cell_count();
    return coeffs.segment(c * n, n);
}

void MultiResFunction::set_channel(int c, const arrayd& values) {
    if (c < 0 || c >= channels) throw ValueError("function: channel out of range");
    const Eigen::Index n = cell_count();
    if (values.size() != n)
        throw ShapeError("function: channel data length " + std::to_string(values.size()) +
                         " does not match " + std::to_string(n) + " cells");
    coeffs.segment(c * n, n) = values;
}

Eigen::Index MultiResFunction::grid_rows() const {
    switch (domain) {
        case Domain::interval: return 1;
        case Domain::square:
        case Domain::triangle: return Eigen::Index{1} << resolution;
        case Domain::rectangle: return Eigen::Index{1} << resolution;
    }
    throw ValueError("function: unknown domain");
}

Eigen::Index MultiResFunction::grid_cols() const {
    switch (domain) {
        case Domain::interval: return Eigen::Index{1} << resolution;
        case Domain::square:
        case Domain::triangle: return Eigen::Index{1} << resolution;
        case Domain::rectangle: return Eigen::Index{1} << (resolution + 1);
    }
    throw ValueError("function: unknown domain");
}

void MultiResFunction::check_consistent() const {
    check_domain_resolution(domain, resolution);
    if (channels < 1) throw ValueError("function: channels must be positive");
    if (coeffs.size() != cell_count() * channels)
        throw ShapeError("function: " + std::to_string(coeffs.size()) + " coefficients for " +
                         describe());
}

std::string MultiResFunction::describe() const {
    return std::string(domain_name(domain)) + " resolution " + std::to_string(resolution) + ", " +
           std::to_string(channels) + " channel(s), basis " + basis_name(basis);
}

MultiResFunction to_basis(const MultiResFunction& f, Basis target) {
    f.check_consistent();
    if (f.basis == target) return f;
    if (f.basis == Basis::h01 || target == Basis::h01)
        throw ValueError("to_basis: h01 does not convert to other bases");

    MultiResFunction out = f;
    out.basis = target;
    const bool forward = target == Basis::haar;  // pixel -> haar
    for (int c = 0; c < f.channels; ++c) {
        switch (f.domain) {
            case Domain::interval: {
                const vectord v = f.channel(c).matrix();
                out.set_channel(c, forward ? pixel_to_haar(v, f.resolution).array()
                                           : haar_to_pixel(v, f.resolution).array());
                break;
            }
            case Domain::square: {
                const matrixd m = channel_matrix(f, c);
                out.set_channel(c, flatten_matrix(forward ? pixel_to_haar(m, f.resolution)
                                                          : haar_to_pixel(m, f.resolution)));
                break;
            }
            case Domain::rectangle: {
                const matrixd m = channel_matrix(f, c);
                out.set_channel(c, flatten_matrix(forward ? rect_pixel_to_haar(m, f.resolution)
                                                          : rect_haar_to_pixel(m, f.resolution)));
                break;
            }
            case Domain::triangle: {
                MultiResFunction single = MultiResFunction::zeros(f.domain, f.resolution, 1, f.basis);
                single.coeffs = f.channel(c);
                if (forward) {
                    out.set_channel(c, tri_haar(as_tri(single)));
                } else {
                    out.set_channel(c, tri_haar_inverse(single.coeffs, f.resolution, 1).values);
                }
                break;
            }
        }
    }
    return out;
}

MultiResFunction project(const MultiResFunction& f, int to_i) {
    f.check_consistent();
    if (to_i > f.resolution)
        throw ValueError("project: target resolution " + std::to_string(to_i) +
                         " is above the source; use include");
    if (f.basis == Basis::h01) throw ValueError("project: unsupported for the h01 basis");
    check_domain_resolution(f.domain, to_i);
    if (to_i == f.resolution) return f;

    MultiResFunction out = MultiResFunction::zeros(f.domain, to_i, f.channels, f.basis);
    for (int c = 0; c < f.channels; ++c) {
        if (f.basis == Basis::pixel) {
            switch (f.domain) {
                case Domain::interval:
                    out.set_channel(c, avg_pool_downsample(vectord(f.channel(c).matrix()),
                                                           f.resolution, to_i).array());
                    break;
                case Domain::square:
                    out.set_channel(c, flatten_matrix(avg_pool_downsample(channel_matrix(f, c),
                                                                          f.resolution, to_i)));
                    break;
                case Domain::rectangle:
                    out.set_channel(c, flatten_matrix(block_mean(channel_matrix(f, c),
                                                                 out.grid_rows(), out.grid_cols())));
                    break;
                case Domain::triangle: {
                    MultiResFunction single = MultiResFunction::zeros(f.domain, f.resolution, 1, f.basis);
                    single.coeffs = f.channel(c);
                    out.set_channel(c, tri_avg_pool(as_tri(single), to_i).values);
                    break;
                }
            }
        } else {
            // Haar basis: keep the coarse coefficients, drop the fine bands.
            switch (f.domain) {
                case Domain::interval:
                case Domain::triangle:
                    out.set_channel(c, arrayd(f.channel(c).head(out.cell_count())));
                    break;
                case Domain::square:
                case Domain::rectangle: {
                    const matrixd m = channel_matrix(f, c);
                    out.set_channel(c, flatten_matrix(
                                           matrixd(m.topLeftCorner(out.grid_rows(), out.grid_cols()))));
                    break;
                }
            }
        }
    }
    return out;
}

MultiResFunction include(const MultiResFunction& f, int to_i) {
    f.check_consistent();
    if (to_i < f.resolution)
        throw ValueError("include: target resolution " + std::to_string(to_i) +
                         " is below the source; use project");
    if (f.basis == Basis::h01) throw ValueError("include: unsupported for the h01 basis");
    check_domain_resolution(f.domain, to_i);
    if (to_i == f.resolution) return f;

    MultiResFunction out = MultiResFunction::zeros(f.domain, to_i, f.channels, f.basis);
    for (int c = 0; c < f.channels; ++c) {
        if (f.basis == Basis::pixel) {
            switch (f.domain) {
                case Domain::interval:
                case Domain::triangle: {
                    // children of one parent are contiguous in both layouts
                    const arrayd chan = f.channel(c);
                    const Eigen::Index block = out.cell_count() / f.cell_count();
                    arrayd up(out.cell_count());
                    for (Eigen::Index k = 0; k < chan.size(); ++k)
                        up.segment(k * block, block).setConstant(chan[k]);
                    out.set_channel(c, up);
                    break;
                }
                case Domain::square:
                case Domain::rectangle:
                    out.set_channel(c, flatten_matrix(block_duplicate(channel_matrix(f, c),
                                                                      out.grid_rows(), out.grid_cols())));
                    break;
            }
        } else {
            switch (f.domain) {
                case Domain::interval:
                case Domain::triangle: {
                    arrayd up = arrayd::Zero(out.cell_count());
                    up.head(f.cell_count()) = f.channel(c);
                    out.set_channel(c, up);
                    break;
                }
                case Domain::square:
                case Domain::rectangle: {
                    matrixd up = matrixd::Zero(out.grid_rows(), out.grid_cols());
                    up.topLeftCorner(f.grid_rows(), f.grid_cols()) = channel_matrix(f, c);
                    out.set_channel(c, flatten_matrix(up));
                    break;
                }
            }
        }
    }
    return out;
}

MultiResFunction ProjectionOp::apply(const MultiResFunction& f) const {
    if (f.resolution != from_resolution)
        throw ValueError("projection: function at resolution " + std::to_string(f.resolution) +
                         ", operator expects " + std::to_string(from_resolution));
    const Basis original = f.basis;
    const Basis work = kind == Kind::avg_pool ? Basis::pixel : Basis::haar;
    return to_basis(project(to_basis(f, work), to_resolution), original);
}

MultiResFunction ProjectionOp::smooth(const MultiResFunction& f) const {
    MultiResFunction coarse = apply(f);
    const Basis work = kind == Kind::avg_pool ? Basis::pixel : Basis::haar;
    return to_basis(include(to_basis(coarse, work), from_resolution), f.basis);
}

MultiResFunction ProjectionOp::complement(const MultiResFunction& f) const {
    MultiResFunction out = f;
    out.coeffs -= smooth(f).coeffs;
    return out;
}

// --- h01 -------------------------------------------------------------------

namespace {

void check_h01_index(int k, int j) {
    if (k < 0 || j < 0 || j >= (1 << k))
        throw ValueError("h01: bad basis index (k=" + std::to_string(k) + ", j=" + std::to_string(j) + ")");
}

}  // namespace

H01Basis H01Basis::make(int resolution) {
    check_domain_resolution(Domain::interval, resolution);
    H01Basis b;
    b.resolution = resolution;
    for (int k = 0; k < resolution; ++k)
        for (int j = 0; j < (1 << k); ++j) b.indices.push_back({k, j});
    return b;
}

double h01_eval(int k, int j, double x) {
    check_h01_index(k, j);
    if (x < 0.0 || x > 1.0) throw ValueError("h01: point outside [0,1]");
    const double t = std::ldexp(x, k) - j;  // position within the support
    if (t <= 0.0 || t >= 1.0) return 0.0;
    return t < 0.5 ? 2.0 * t : 2.0 - 2.0 * t;
}

double h01_inner(int ka, int ja, int kb, int jb) {
    check_h01_index(ka, ja);
    check_h01_index(kb, jb);
    // Both derivatives are constant on cells one level below the finer hat.
    const int level = std::max(ka, kb) + 1;
    const Eigen::Index n = Eigen::Index{1} << level;
    const double h = std::ldexp(1.0, -level);
    // restrict to the support of the finer function
    const int kf = std::max(ka, kb);
    const int jf = kf == ka ? ja : jb;
    const Eigen::Index lo = static_cast<Eigen::Index>(jf) << (level - kf);
    const Eigen::Index hi = static_cast<Eigen::Index>(jf + 1) << (level - kf);
    double acc = 0.0;
    for (Eigen::Index m = lo; m < hi && m < n; ++m) {
        const double s = m * h, e = (m + 1) * h;
        const double slope_a = (h01_eval(ka, ja, e) - h01_eval(ka, ja, s)) / h;
        const double slope_b = (h01_eval(kb, jb, e) - h01_eval(kb, jb, s)) / h;
        acc += slope_a * slope_b * h;
    }
    return acc;
}

double h01_eval_function(const MultiResFunction& u, double x, int channel) {
    u.check_consistent();
    if (u.basis != Basis::h01 || u.domain != Domain::interval)
        throw ValueError("h01_eval_function: expected an interval function in the h01 basis");
    const arrayd c = u.channel(channel);
    double acc = 0.0;
    for (int k = 0; k < u.resolution; ++k) {
        int j = static_cast<int>(std::ldexp(x, k));
        if (j >= (1 << k)) j = (1 << k) - 1;
        acc += c[(Eigen::Index{1} << k) + j] * h01_eval(k, j, x);
    }
    return acc;
}

MultiResFunction galerkin_solve_elliptic(const MultiResFunction& f, int resolution) {
    f.check_consistent();
    if (f.domain != Domain::interval)
        throw ValueError("galerkin: right-hand side must live on the interval");
    if (resolution < 1) throw ValueError("galerkin: resolution 0 has an empty basis");
    if (f.resolution < resolution)
        throw ValueError("galerkin: right-hand side resolution " + std::to_string(f.resolution) +
                         " is below the solver resolution " + std::to_string(resolution));
    const MultiResFunction rhs = to_basis(f, Basis::pixel);

    MultiResFunction u = MultiResFunction::zeros(Domain::interval, resolution, f.channels, Basis::h01);
    const int rf = rhs.resolution;
    for (int c = 0; c < f.channels; ++c) {
        const arrayd fv = rhs.channel(c);
        arrayd coeff = arrayd::Zero(u.cell_count());
        for (int k = 0; k < resolution; ++k) {
            // integrate on the common refinement of the hat and the rhs grid
            const int level = std::max(rf, k + 1);
            const double h = std::ldexp(1.0, -level);
            const double stiffness = std::ldexp(1.0, k + 2);  // <phi,phi> = 2^{k+2}
            for (int j = 0; j < (1 << k); ++j) {
                const Eigen::Index lo = static_cast<Eigen::Index>(j) << (level - k);
                const Eigen::Index hi = static_cast<Eigen::Index>(j + 1) << (level - k);
                double load = 0.0;
                for (Eigen::Index m = lo; m < hi; ++m) {
                    const double s = m * h, e = (m + 1) * h;
                    const double avg = 0.5 * (h01_eval(k, j, s) + h01_eval(k, j, e));
                    load += fv[m >> (level - rf)] * avg * h;
                }
                coeff[(Eigen::Index{1} << k) + j] = -load / stiffness;
            }
        }
        u.set_channel(c, coeff);
    }
    return u;
}

// --- L2 --------------------------------------------------------------------

double l2_norm(const MultiResFunction& f) {
    f.check_consistent();
    if (f.basis == Basis::h01) throw ValueError("l2_norm: unsupported for the h01 basis");
    const MultiResFunction p = to_basis(f, Basis::pixel);
    return std::sqrt((p.coeffs * p.coeffs).sum() * p.cell_measure());
}

double l2_loss(const std::vector<MultiResFunction>& targets,
               const std::vector<MultiResFunction>& predictions) {
    if (targets.empty()) throw ValueError("l2_loss: empty dataset");
    if (targets.size() != predictions.size())
        throw ValueError("l2_loss: " + std::to_string(targets.size()) + " targets vs " +
                         std::to_string(predictions.size()) + " predictions");
    double acc = 0.0;
    for (std::size_t s = 0; s < targets.size(); ++s) {
        const MultiResFunction& w = targets[s];
        const MultiResFunction& u = predictions[s];
        if (w.domain != u.domain || w.resolution != u.resolution || w.channels != u.channels)
            throw ShapeError("l2_loss: pair " + std::to_string(s) + " mismatched: " + w.describe() +
                             " vs " + u.describe());
        MultiResFunction diff = to_basis(w, Basis::pixel);
        diff.coeffs -= to_basis(u, Basis::pixel).coeffs;
        const double norm = l2_norm(diff);
        acc += norm * norm;
    }
    return std::sqrt(acc / static_cast<double>(targets.size()));
}

// --- tensor bridge ----------------------------------------------------------

Tensor to_tensor(const MultiResFunction& f) {
    f.check_consistent();
    if (f.basis == Basis::h01) throw ValueError("to_tensor: unsupported for the h01 basis");
    const MultiResFunction p = to_basis(f, Basis::pixel);
    const int rows = static_cast<int>(p.grid_rows());
    const int cols = static_cast<int>(p.grid_cols());
    Tensor t = Tensor::zeros({p.channels, rows, cols});
    for (int c = 0; c < p.channels; ++c) {
        if (p.domain == Domain::triangle) {
            MultiResFunction single = MultiResFunction::zeros(p.domain, p.resolution, 1, Basis::pixel);
            single.coeffs = p.channel(c);
            const matrixd grid = tri_to_grid(as_tri(single));
            for (int r = 0; r < rows; ++r)
                for (int w = 0; w < cols; ++w) t.at(c, r, w) = grid(r, w);
        } else {
            const arrayd chan = p.channel(c);
            for (int r = 0; r < rows; ++r)
                for (int w = 0; w < cols; ++w) t.at(c, r, w) = chan[r * cols + w];
        }
    }
    return t;
}

MultiResFunction from_tensor(const Tensor& t, Domain d, int resolution) {
    if (t.rank() != 3) throw ShapeError("from_tensor: expected rank 3, got " + t.shape_string());
    MultiResFunction f = MultiResFunction::zeros(d, resolution, t.dim(0), Basis::pixel);
    if (t.dim(1) != f.grid_rows() || t.dim(2) != f.grid_cols())
        throw ShapeError("from_tensor: tensor " + t.shape_string() + " does not match " + f.describe());
    for (int c = 0; c < f.channels; ++c) {
        if (d == Domain::triangle) {
            matrixd grid(f.grid_rows(), f.grid_cols());
            for (Eigen::Index r = 0; r < grid.rows(); ++r)
                for (Eigen::Index w = 0; w < grid.cols(); ++w)
                    grid(r, w) = t.at(c, static_cast<int>(r), static_cast<int>(w));
            f.set_channel(c, tri_from_grid(grid).values);
        } else {
            arrayd chan(f.cell_count());
            for (Eigen::Index r = 0; r < f.grid_rows(); ++r)
                for (Eigen::Index w = 0; w < f.grid_cols(); ++w)
                    chan[r * f.grid_cols() + w] = t.at(c, static_cast<int>(r), static_cast<int>(w));
            f.set_channel(c, chan);
        }
    }
    return f;
}

}  // namespace mrn
