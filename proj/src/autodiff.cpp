#include "mrn/autodiff.hpp"

#include <cmath>

#include "mrn/errors.hpp"

namespace mrn {

const char* op_name(Op op) {
    switch (op) {
        case Op::leaf: return "leaf";
        case Op::linear: return "linear";
        case Op::conv2d: return "conv2d";
        case Op::relu: return "relu";
        case Op::avg_pool_2x2: return "avg_pool_2x2";
        case Op::upsample_duplicate_2x: return "upsample_duplicate_2x";
        case Op::add: return "add";
        case Op::scale: return "scale";
        case Op::concat_channels: return "concat_channels";
        case Op::mse_loss: return "mse_loss";
        case Op::frobenius_norm: return "frobenius_norm";
    }
    return "?";
}

namespace {

[[noreturn]] void shape_fail(Op op, const std::string& detail) {
    throw ShapeError(std::string(op_name(op)) + ": " + detail);
}

void require_rank(Op op, const Tensor& t, int rank, const char* which) {
    if (t.rank() != rank)
        shape_fail(op, std::string(which) + " must have rank " + std::to_string(rank) +
                           ", got " + t.shape_string());
}

Tensor k_linear(const Tensor& x, const Tensor& W, const Tensor& b) {
    require_rank(Op::linear, W, 2, "weight");
    require_rank(Op::linear, b, 1, "bias");
    const int m = W.dim(0), n = W.dim(1);
    if (b.dim(0) != m)
        shape_fail(Op::linear, "bias " + b.shape_string() + " does not match weight " + W.shape_string());
    if (x.rank() == 1) {
        if (x.dim(0) != n)
            shape_fail(Op::linear, "input " + x.shape_string() + " does not match weight " + W.shape_string());
        Tensor y = Tensor::zeros({m});
        for (int i = 0; i < m; ++i) {
            double acc = b.at(i);
            for (int j = 0; j < n; ++j) acc += W.data[i * n + j] * x.at(j);
            y.at(i) = acc;
        }
        return y;
    }
    if (x.rank() == 3) {
        // Per-pixel channel mixing: a dense layer applied at every position.
        if (x.dim(0) != n)
            shape_fail(Op::linear, "input channels " + x.shape_string() + " do not match weight " + W.shape_string());
        const int H = x.dim(1), Wd = x.dim(2);
        Tensor y = Tensor::zeros({m, H, Wd});
        for (int i = 0; i < m; ++i)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < Wd; ++w) {
                    double acc = b.at(i);
                    for (int c = 0; c < n; ++c) acc += W.data[i * n + c] * x.at(c, h, w);
                    y.at(i, h, w) = acc;
                }
        return y;
    }
    shape_fail(Op::linear, "input must have rank 1 or 3, got " + x.shape_string());
}

Tensor k_conv2d(const Tensor& x, const Tensor& k, const Tensor& b) {
    require_rank(Op::conv2d, x, 3, "input");
    require_rank(Op::conv2d, b, 1, "bias");
    if (k.rank() != 4 || k.dim(2) != 3 || k.dim(3) != 3)
        shape_fail(Op::conv2d, "kernel must be (out,in,3,3), got " + k.shape_string());
    const int co = k.dim(0), ci = k.dim(1), H = x.dim(1), W = x.dim(2);
    if (x.dim(0) != ci)
        shape_fail(Op::conv2d, "input " + x.shape_string() + " does not match kernel " + k.shape_string());
    if (b.dim(0) != co)
        shape_fail(Op::conv2d, "bias " + b.shape_string() + " does not match kernel " + k.shape_string());
    Tensor y = Tensor::zeros({co, H, W});
    for (int o = 0; o < co; ++o)
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) {
                double acc = b.at(o);
                for (int c = 0; c < ci; ++c)
                    for (int dh = 0; dh < 3; ++dh) {
                        const int ih = h + dh - 1;
                        if (ih < 0 || ih >= H) continue;
                        for (int dw = 0; dw < 3; ++dw) {
                            const int iw = w + dw - 1;
                            if (iw < 0 || iw >= W) continue;
                            acc += x.at(c, ih, iw) * k.data[((o * ci + c) * 3 + dh) * 3 + dw];
                        }
                    }
                y.at(o, h, w) = acc;
            }
    return y;
}

Tensor k_relu(const Tensor& x) {
    Tensor y = x;
    y.requires_grad = false;
    y.data = x.data.max(0.0);
    return y;
}

// Pooling geometry shared by forward and backward: a spatial dim of size > 1
// must be even and is halved; a size-1 dim is left alone.
struct PoolDims {
    int oh, ow, fh, fw;  // output extents and per-axis window factors
};

PoolDims pool_dims(Op op, const Tensor& x) {
    require_rank(op, x, 3, "input");
    const int H = x.dim(1), W = x.dim(2);
    if ((H > 1 && H % 2 != 0) || (W > 1 && W % 2 != 0))
        shape_fail(op, "spatial dims must be even or 1, got " + x.shape_string());
    PoolDims d;
    d.fh = H > 1 ? 2 : 1;
    d.fw = W > 1 ? 2 : 1;
    d.oh = H / d.fh;
    d.ow = W / d.fw;
    return d;
}

Tensor k_avg_pool(const Tensor& x) {
    PoolDims d = pool_dims(Op::avg_pool_2x2, x);
    const int C = x.dim(0);
    const double inv = 1.0 / (d.fh * d.fw);
    Tensor y = Tensor::zeros({C, d.oh, d.ow});
    for (int c = 0; c < C; ++c)
        for (int h = 0; h < d.oh; ++h)
            for (int w = 0; w < d.ow; ++w) {
                double acc = 0.0;
                for (int a = 0; a < d.fh; ++a)
                    for (int b2 = 0; b2 < d.fw; ++b2)
                        acc += x.at(c, h * d.fh + a, w * d.fw + b2);
                y.at(c, h, w) = acc * inv;
            }
    return y;
}

Tensor k_upsample(const Tensor& x, int fh, int fw) {
    require_rank(Op::upsample_duplicate_2x, x, 3, "input");
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    Tensor y = Tensor::zeros({C, H * fh, W * fw});
    for (int c = 0; c < C; ++c)
        for (int h = 0; h < H * fh; ++h)
            for (int w = 0; w < W * fw; ++w)
                y.at(c, h, w) = x.at(c, h / fh, w / fw);
    return y;
}

Tensor k_add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        shape_fail(Op::add, a.shape_string() + " vs " + b.shape_string());
    Tensor y = a;
    y.requires_grad = false;
    y.data = a.data + b.data;
    return y;
}

Tensor k_concat(const Tensor& a, const Tensor& b) {
    require_rank(Op::concat_channels, a, 3, "lhs");
    require_rank(Op::concat_channels, b, 3, "rhs");
    if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
        shape_fail(Op::concat_channels, "spatial dims differ: " + a.shape_string() + " vs " + b.shape_string());
    Tensor y = Tensor::zeros({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
    y.data.head(a.size()) = a.data;
    y.data.tail(b.size()) = b.data;
    return y;
}

Tensor k_mse(const Tensor& p, const Tensor& t) {
    if (!p.same_shape(t))
        shape_fail(Op::mse_loss, p.shape_string() + " vs " + t.shape_string());
    const double n = static_cast<double>(p.size());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double d = p.data[i] - t.data[i];
        acc += d * d;
    }
    return Tensor::scalar(acc / n);
}

Tensor k_frob(const Tensor& x) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) acc += x.data[i] * x.data[i];
    return Tensor::scalar(std::sqrt(acc));
}

}  // namespace

const GraphNode& Graph::node(ValueId id) const {
    if (id < 0 || id >= size()) throw ValueError("graph: bad node id " + std::to_string(id));
    return nodes_[static_cast<std::size_t>(id)];
}

GraphNode& Graph::mutable_node(ValueId id) {
    return const_cast<GraphNode&>(node(id));
}

Tensor Graph::compute(const GraphNode& n) const {
    auto p = [&](int i) -> const Tensor& { return nodes_[static_cast<std::size_t>(n.parents[static_cast<std::size_t>(i)])].value; };
    switch (n.op) {
        case Op::leaf: return n.value;
        case Op::linear: return k_linear(p(0), p(1), p(2));
        case Op::conv2d: return k_conv2d(p(0), p(1), p(2));
        case Op::relu: return k_relu(p(0));
        case Op::avg_pool_2x2: return k_avg_pool(p(0));
        case Op::upsample_duplicate_2x: {
            // attr encodes caller-chosen factors as fh*10 + fw; 0 means infer
            // from the sizes (duplicate every dim of size > 1).
            int fh, fw;
            if (n.attr != 0.0) {
                fh = static_cast<int>(n.attr) / 10;
                fw = static_cast<int>(n.attr) % 10;
            } else {
                fh = p(0).dim(1) > 1 ? 2 : 1;
                fw = p(0).dim(2) > 1 ? 2 : 1;
            }
            return k_upsample(p(0), fh, fw);
        }
        case Op::add: return k_add(p(0), p(1));
        case Op::scale: {
            Tensor y = p(0);
            y.requires_grad = false;
            y.data *= n.attr;
            return y;
        }
        case Op::concat_channels: return k_concat(p(0), p(1));
        case Op::mse_loss: return k_mse(p(0), p(1));
        case Op::frobenius_norm: return k_frob(p(0));
    }
    throw ValueError("graph: unknown op");
}

ValueId Graph::push(GraphNode n) {
    if (n.op != Op::leaf) {
        n.requires_grad = false;
        for (ValueId pid : n.parents) n.requires_grad = n.requires_grad || node(pid).requires_grad;
        n.value = compute(n);
    }
    nodes_.push_back(std::move(n));
    return size() - 1;
}

ValueId Graph::leaf(Tensor v) {
    GraphNode n;
    n.op = Op::leaf;
    n.requires_grad = v.requires_grad;
    n.value = std::move(v);
    nodes_.push_back(std::move(n));
    return size() - 1;
}

ValueId Graph::constant(Tensor v) {
    v.requires_grad = false;
    return leaf(std::move(v));
}

ValueId Graph::parameter(Tensor v) {
    v.requires_grad = true;
    return leaf(std::move(v));
}

ValueId Graph::linear(ValueId x, ValueId W, ValueId b) { return push({Op::linear, {x, W, b}}); }
ValueId Graph::conv2d(ValueId x, ValueId k, ValueId b) { return push({Op::conv2d, {x, k, b}}); }
ValueId Graph::relu(ValueId x) { return push({Op::relu, {x}}); }
ValueId Graph::avg_pool_2x2(ValueId x) { return push({Op::avg_pool_2x2, {x}}); }
ValueId Graph::upsample_duplicate_2x(ValueId x) { return push({Op::upsample_duplicate_2x, {x}}); }

ValueId Graph::upsample_duplicate_2x(ValueId x, bool dup_h, bool dup_w) {
    GraphNode n{Op::upsample_duplicate_2x, {x}};
    n.attr = (dup_h ? 2 : 1) * 10 + (dup_w ? 2 : 1);
    return push(std::move(n));
}
ValueId Graph::add(ValueId a, ValueId b) { return push({Op::add, {a, b}}); }

ValueId Graph::scale(ValueId x, double factor) {
    GraphNode n{Op::scale, {x}};
    n.attr = factor;
    return push(std::move(n));
}

ValueId Graph::concat_channels(ValueId a, ValueId b) { return push({Op::concat_channels, {a, b}}); }
ValueId Graph::mse_loss(ValueId pred, ValueId target) { return push({Op::mse_loss, {pred, target}}); }
ValueId Graph::frobenius_norm(ValueId x) { return push({Op::frobenius_norm, {x}}); }

void Graph::set_value(ValueId id, Tensor v) {
    GraphNode& n = mutable_node(id);
    if (n.op != Op::leaf) throw ValueError("graph: set_value on non-leaf node");
    if (v.shape != n.value.shape)
        throw ShapeError("graph: set_value shape " + v.shape_string() + " vs " + n.value.shape_string());
    const bool rg = n.requires_grad;
    n.value = std::move(v);
    n.requires_grad = rg;
}

Tensor Graph::eval(ValueId root) {
    node(root);  // bounds check
    for (ValueId i = 0; i <= root; ++i) {
        GraphNode& n = nodes_[static_cast<std::size_t>(i)];
        if (n.op != Op::leaf) n.value = compute(n);
    }
    return nodes_[static_cast<std::size_t>(root)].value;
}

void Graph::backward(ValueId loss) {
    const GraphNode& root = node(loss);
    if (root.value.size() != 1)
        throw ShapeError("backward: loss must be scalar, got " + root.value.shape_string());

    for (auto& n : nodes_) n.has_grad = false;

    // Only nodes on a path from the loss matter.
    std::vector<char> reachable(nodes_.size(), 0);
    std::vector<ValueId> stack{loss};
    reachable[static_cast<std::size_t>(loss)] = 1;
    while (!stack.empty()) {
        ValueId id = stack.back();
        stack.pop_back();
        for (ValueId pid : nodes_[static_cast<std::size_t>(id)].parents)
            if (!reachable[static_cast<std::size_t>(pid)]) {
                reachable[static_cast<std::size_t>(pid)] = 1;
                stack.push_back(pid);
            }
    }

    auto ensure_grad = [&](ValueId id) -> Tensor& {
        GraphNode& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.has_grad) {
            n.grad = Tensor::zeros(n.value.shape);
            n.has_grad = true;
        }
        return n.grad;
    };

    if (!root.requires_grad) return;  // nothing trainable upstream
    ensure_grad(loss).data.setConstant(1.0);

    for (ValueId id = loss; id >= 0; --id) {
        GraphNode& n = nodes_[static_cast<std::size_t>(id)];
        if (!reachable[static_cast<std::size_t>(id)] || !n.has_grad || n.op == Op::leaf) continue;
        const Tensor& gy = n.grad;
        auto pv = [&](int i) -> const Tensor& { return nodes_[static_cast<std::size_t>(n.parents[static_cast<std::size_t>(i)])].value; };
        auto wants = [&](int i) { return nodes_[static_cast<std::size_t>(n.parents[static_cast<std::size_t>(i)])].requires_grad; };
        auto pg = [&](int i) -> Tensor& { return ensure_grad(n.parents[static_cast<std::size_t>(i)]); };

        switch (n.op) {
            case Op::leaf:
                break;
            case Op::linear: {
                const Tensor& x = pv(0);
                const Tensor& W = pv(1);
                const int m = W.dim(0), c = W.dim(1);
                if (x.rank() == 1) {
                    if (wants(0)) {
                        Tensor& gx = pg(0);
                        for (int j = 0; j < c; ++j)
                            for (int i = 0; i < m; ++i) gx.at(j) += W.data[i * c + j] * gy.at(i);
                    }
                    if (wants(1)) {
                        Tensor& gW = pg(1);
                        for (int i = 0; i < m; ++i)
                            for (int j = 0; j < c; ++j) gW.data[i * c + j] += gy.at(i) * x.at(j);
                    }
                    if (wants(2)) pg(2).data += gy.data;
                } else {
                    const int H = x.dim(1), Wd = x.dim(2);
                    if (wants(0)) {
                        Tensor& gx = pg(0);
                        for (int j = 0; j < c; ++j)
                            for (int h = 0; h < H; ++h)
                                for (int w = 0; w < Wd; ++w) {
                                    double acc = 0.0;
                                    for (int i = 0; i < m; ++i) acc += W.data[i * c + j] * gy.at(i, h, w);
                                    gx.at(j, h, w) += acc;
                                }
                    }
                    if (wants(1)) {
                        Tensor& gW = pg(1);
                        for (int i = 0; i < m; ++i)
                            for (int j = 0; j < c; ++j) {
                                double acc = 0.0;
                                for (int h = 0; h < H; ++h)
                                    for (int w = 0; w < Wd; ++w) acc += gy.at(i, h, w) * x.at(j, h, w);
                                gW.data[i * c + j] += acc;
                            }
                    }
                    if (wants(2)) {
                        Tensor& gb = pg(2);
                        for (int i = 0; i < m; ++i) {
                            double acc = 0.0;
                            for (int h = 0; h < H; ++h)
                                for (int w = 0; w < Wd; ++w) acc += gy.at(i, h, w);
                            gb.at(i) += acc;
                        }
                    }
                }
                break;
            }
            case Op::conv2d: {
                const Tensor& x = pv(0);
                const Tensor& k = pv(1);
                const int co = k.dim(0), ci = k.dim(1), H = x.dim(1), W = x.dim(2);
                for (int o = 0; o < co; ++o)
                    for (int h = 0; h < H; ++h)
                        for (int w = 0; w < W; ++w) {
                            const double g = gy.at(o, h, w);
                            if (wants(2)) pg(2).at(o) += g;
                            for (int c = 0; c < ci; ++c)
                                for (int dh = 0; dh < 3; ++dh) {
                                    const int ih = h + dh - 1;
                                    if (ih < 0 || ih >= H) continue;
                                    for (int dw = 0; dw < 3; ++dw) {
                                        const int iw = w + dw - 1;
                                        if (iw < 0 || iw >= W) continue;
                                        const std::size_t kidx = static_cast<std::size_t>(((o * ci + c) * 3 + dh) * 3 + dw);
                                        if (wants(1)) pg(1).data[static_cast<Eigen::Index>(kidx)] += g * x.at(c, ih, iw);
                                        if (wants(0)) pg(0).at(c, ih, iw) += g * k.data[static_cast<Eigen::Index>(kidx)];
                                    }
                                }
                        }
                break;
            }
            case Op::relu: {
                if (wants(0)) {
                    const Tensor& x = pv(0);
                    Tensor& gx = pg(0);
                    for (Eigen::Index i = 0; i < x.size(); ++i)
                        if (x.data[i] > 0.0) gx.data[i] += gy.data[i];
                }
                break;
            }
            case Op::avg_pool_2x2: {
                if (wants(0)) {
                    const Tensor& x = pv(0);
                    PoolDims d = pool_dims(Op::avg_pool_2x2, x);
                    const double inv = 1.0 / (d.fh * d.fw);
                    Tensor& gx = pg(0);
                    for (int c = 0; c < x.dim(0); ++c)
                        for (int h = 0; h < d.oh; ++h)
                            for (int w = 0; w < d.ow; ++w) {
                                const double g = gy.at(c, h, w) * inv;
                                for (int a = 0; a < d.fh; ++a)
                                    for (int b2 = 0; b2 < d.fw; ++b2)
                                        gx.at(c, h * d.fh + a, w * d.fw + b2) += g;
                            }
                }
                break;
            }
            case Op::upsample_duplicate_2x: {
                if (wants(0)) {
                    const Tensor& x = pv(0);
                    // The output/input extent ratios recover the duplication
                    // factors for both the inferred and the explicit variant.
                    const int fh = n.value.dim(1) / x.dim(1);
                    const int fw = n.value.dim(2) / x.dim(2);
                    Tensor& gx = pg(0);
                    for (int c = 0; c < n.value.dim(0); ++c)
                        for (int h = 0; h < n.value.dim(1); ++h)
                            for (int w = 0; w < n.value.dim(2); ++w)
                                gx.at(c, h / fh, w / fw) += gy.at(c, h, w);
                }
                break;
            }
            case Op::add:
                if (wants(0)) pg(0).data += gy.data;
                if (wants(1)) pg(1).data += gy.data;
                break;
            case Op::scale:
                if (wants(0)) pg(0).data += n.attr * gy.data;
                break;
            case Op::concat_channels: {
                const Eigen::Index na = pv(0).size();
                if (wants(0)) pg(0).data += gy.data.head(na);
                if (wants(1)) pg(1).data += gy.data.tail(gy.data.size() - na);
                break;
            }
            case Op::mse_loss: {
                const Tensor& p = pv(0);
                const Tensor& t = pv(1);
                const double g = gy.at(0) * 2.0 / static_cast<double>(p.size());
                if (wants(0)) pg(0).data += g * (p.data - t.data);
                if (wants(1)) pg(1).data -= g * (p.data - t.data);
                break;
            }
            case Op::frobenius_norm: {
                if (wants(0)) {
                    const double f = n.value.at(0);
                    if (f > 0.0) pg(0).data += (gy.at(0) / f) * pv(0).data;
                }
                break;
            }
        }
    }
}

const Tensor& Graph::grad(ValueId id) const {
    const GraphNode& n = node(id);
    if (!n.has_grad) throw ValueError("graph: node has no gradient (run backward first)");
    return n.grad;
}

double grad_check(const GraphBuilder& f, const Tensor& x, double eps) {
    Graph g;
    ValueId xid = g.parameter(x);
    ValueId loss = f(g, xid);
    if (g.value(loss).size() != 1)
        throw ShapeError("grad_check: builder must produce a scalar");
    g.backward(loss);
    Tensor analytic = g.has_grad(xid) ? g.grad(xid) : Tensor::zeros(x.shape);

    auto eval_at = [&](const Tensor& xv) {
        Graph g2;
        ValueId id = g2.constant(xv);
        ValueId r = f(g2, id);
        return g2.value(r).at(0);
    };

    double max_rel = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Tensor xp = x, xm = x;
        xp.data[i] += eps;
        xm.data[i] -= eps;
        const double numeric = (eval_at(xp) - eval_at(xm)) / (2.0 * eps);
        const double a = analytic.data[i];
        if (!std::isfinite(a) || !std::isfinite(numeric))
            throw NumericError("grad_check: non-finite gradient entry");
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
    }
    return max_rel;
}

void sgd_step(std::vector<Tensor*>& params, const std::vector<Tensor>& grads, const SgdConfig& cfg) {
    if (params.size() != grads.size())
        throw ValueError("sgd_step: " + std::to_string(params.size()) + " params vs " +
                         std::to_string(grads.size()) + " grads");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->shape != grads[i].shape)
            throw ShapeError("sgd_step: param/grad shape mismatch at slot " + std::to_string(i));
        params[i]->data -= cfg.lr * grads[i].data;
    }
}

void adam_step(std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
               AdamState& state, const AdamConfig& cfg) {
    if (params.size() != grads.size())
        throw ValueError("adam_step: " + std::to_string(params.size()) + " params vs " +
                         std::to_string(grads.size()) + " grads");
    if (state.m.empty()) {
        for (const Tensor* p : params) {
            state.m.push_back(arrayd::Zero(p->size()));
            state.v.push_back(arrayd::Zero(p->size()));
        }
    }
    if (state.m.size() != params.size())
        throw ValueError("adam_step: optimizer state does not match parameter list");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->shape != grads[i].shape)
            throw ShapeError("adam_step: param/grad shape mismatch at slot " + std::to_string(i));
        const arrayd& g = grads[i].data;
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g.square();
        const arrayd mhat = state.m[i] / bc1;
        const arrayd vhat = state.v[i] / bc2;
        params[i]->data -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
    }
}

}  // namespace mrn
