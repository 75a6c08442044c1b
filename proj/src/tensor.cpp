#include "advgrid/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace advgrid {

namespace detail {

// Accumulator access handed to backward closures: returns the mutable
// gradient buffer of an input node.
using AccumFn = std::function<std::vector<double>&(TensorNode*)>;

struct TensorNode {
    std::vector<int> shape;
    std::vector<double> data;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<TensorNode>> inputs;
    std::function<void(const std::vector<double>&, const AccumFn&)> backward;
};

}  // namespace detail

using detail::AccumFn;
using detail::TensorNode;

namespace {

std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

[[noreturn]] void fail(const std::string& op, const std::string& what) {
    throw std::runtime_error(op + ": " + what);
}

int shape_product(const char* op, const std::vector<int>& shape) {
    long long n = 1;
    for (int d : shape) {
        if (d <= 0) fail(op, "non-positive dimension in shape " + shape_str(shape));
        n *= d;
    }
    if (n > (1ll << 31)) fail(op, "tensor too large: " + shape_str(shape));
    return static_cast<int>(n);
}

void ensure_finite(const char* op, const std::vector<double>& data) {
    for (double v : data) {
        if (!std::isfinite(v)) fail(op, "non-finite value produced");
    }
}

}  // namespace

// Internal constructor hook shared by all ops.
struct OpAccess {
    static std::shared_ptr<TensorNode> node(const Tensor& t) {
        if (!t.node_) throw std::runtime_error("tensor: use of undefined tensor");
        return t.node_;
    }

    static Tensor make(const char* op, std::vector<int> shape, std::vector<double> data,
                       std::vector<std::shared_ptr<TensorNode>> inputs,
                       std::function<void(const std::vector<double>&, const AccumFn&)> backward) {
        ensure_finite(op, data);
        auto n = std::make_shared<TensorNode>();
        n->shape = std::move(shape);
        n->data = std::move(data);
        n->op = op;
        bool rg = false;
        for (const auto& in : inputs) rg = rg || in->requires_grad;
        n->requires_grad = rg;
        if (rg) {
            n->inputs = std::move(inputs);
            n->backward = std::move(backward);
        }
        Tensor t;
        t.node_ = std::move(n);
        return t;
    }
};

// ---- Tensor ----------------------------------------------------------------

Tensor::Tensor(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
    const int n = shape_product("tensor", shape);
    if (static_cast<size_t>(n) != data.size()) {
        fail("tensor", "data length " + std::to_string(data.size()) + " does not match shape " +
                           shape_str(shape));
    }
    ensure_finite("tensor", data);
    node_ = std::make_shared<TensorNode>();
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    const int n = shape_product("zeros", shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
    const int n = shape_product("full", shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor({1}, {value}, requires_grad);
}

const std::vector<int>& Tensor::shape() const { return OpAccess::node(*this)->shape; }
const std::vector<double>& Tensor::values() const { return OpAccess::node(*this)->data; }

int Tensor::size() const { return static_cast<int>(values().size()); }

double Tensor::value() const {
    const auto& v = values();
    if (v.size() != 1) fail("value", "tensor " + shape_str(shape()) + " is not a scalar");
    return v[0];
}

bool Tensor::requires_grad() const { return OpAccess::node(*this)->requires_grad; }

Tensor Tensor::detached() const { return Tensor(shape(), values(), false); }

// ---- GradTape ---------------------------------------------------------------

GradTape::GradTape(const Tensor& loss) {
    root_ = OpAccess::node(loss);
    if (root_->data.size() != 1) {
        fail("grad", "loss must be scalar, got shape " + shape_str(root_->shape));
    }
    // Iterative postorder DFS; each node enters the order exactly once.
    std::unordered_set<const TensorNode*> seen;
    std::vector<std::pair<TensorNode*, size_t>> stack;
    stack.emplace_back(root_.get(), 0);
    seen.insert(root_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            TensorNode* in = node->inputs[next++].get();
            if (in->requires_grad && !seen.count(in)) {
                seen.insert(in);
                stack.emplace_back(in, 0);
            }
        } else {
            order_.push_back(node);
            stack.pop_back();
        }
    }
}

void GradTape::backward() {
    if (ran_) return;
    ran_ = true;
    if (!root_->requires_grad) return;  // constant loss: all gradients stay zero
    grads_[root_.get()] = {1.0};
    AccumFn accum = [this](TensorNode* n) -> std::vector<double>& {
        auto it = grads_.find(n);
        if (it == grads_.end()) {
            it = grads_.emplace(n, std::vector<double>(n->data.size(), 0.0)).first;
        }
        return it->second;
    };
    // order_ is postorder, so reverse iteration is reverse-topological.
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        TensorNode* node = *it;
        if (!node->backward) continue;
        auto git = grads_.find(node);
        if (git == grads_.end()) continue;
        node->backward(git->second, accum);
    }
}

Tensor GradTape::gradient_of(const Tensor& t) const {
    auto node = OpAccess::node(t);
    if (!node->requires_grad) {
        fail("grad", "tensor is detached (requires_grad is false)");
    }
    auto it = grads_.find(node.get());
    if (it == grads_.end()) return Tensor::zeros(node->shape);
    return Tensor(node->shape, it->second, false);
}

std::vector<Tensor> grad(const Tensor& loss, const std::vector<Tensor>& wrt) {
    GradTape tape(loss);
    tape.backward();
    std::vector<Tensor> out;
    out.reserve(wrt.size());
    for (const auto& t : wrt) out.push_back(tape.gradient_of(t));
    return out;
}

// ---- primitives -------------------------------------------------------------

Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    auto xn = OpAccess::node(x), wn = OpAccess::node(weight), bn = OpAccess::node(bias);
    if (xn->shape.size() != 2 || wn->shape.size() != 2 || bn->shape.size() != 1) {
        fail("dense", "expected x [N,K], weight [K,M], bias [M]; got " + shape_str(xn->shape) +
                          ", " + shape_str(wn->shape) + ", " + shape_str(bn->shape));
    }
    const int n = xn->shape[0], k = xn->shape[1], m = wn->shape[1];
    if (wn->shape[0] != k || bn->shape[0] != m) {
        fail("dense", "shape mismatch: x " + shape_str(xn->shape) + " weight " +
                          shape_str(wn->shape) + " bias " + shape_str(bn->shape));
    }
    std::vector<double> out(static_cast<size_t>(n) * m);
    for (int i = 0; i < n; ++i) {
        const double* xi = xn->data.data() + static_cast<size_t>(i) * k;
        double* oi = out.data() + static_cast<size_t>(i) * m;
        for (int j = 0; j < m; ++j) oi[j] = bn->data[j];
        for (int kk = 0; kk < k; ++kk) {
            const double xv = xi[kk];
            const double* wrow = wn->data.data() + static_cast<size_t>(kk) * m;
            for (int j = 0; j < m; ++j) oi[j] += xv * wrow[j];
        }
    }
    auto backward = [xn, wn, bn, n, k, m](const std::vector<double>& g, const AccumFn& accum) {
        if (xn->requires_grad) {
            auto& gx = accum(xn.get());
            for (int i = 0; i < n; ++i)
                for (int kk = 0; kk < k; ++kk) {
                    double s = 0.0;
                    const double* gi = g.data() + static_cast<size_t>(i) * m;
                    const double* wrow = wn->data.data() + static_cast<size_t>(kk) * m;
                    for (int j = 0; j < m; ++j) s += gi[j] * wrow[j];
                    gx[static_cast<size_t>(i) * k + kk] += s;
                }
        }
        if (wn->requires_grad) {
            auto& gw = accum(wn.get());
            for (int kk = 0; kk < k; ++kk)
                for (int j = 0; j < m; ++j) {
                    double s = 0.0;
                    for (int i = 0; i < n; ++i)
                        s += xn->data[static_cast<size_t>(i) * k + kk] *
                             g[static_cast<size_t>(i) * m + j];
                    gw[static_cast<size_t>(kk) * m + j] += s;
                }
        }
        if (bn->requires_grad) {
            auto& gb = accum(bn.get());
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j) gb[j] += g[static_cast<size_t>(i) * m + j];
        }
    };
    return OpAccess::make("dense", {n, m}, std::move(out), {xn, wn, bn}, backward);
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias, int stride,
              int padding) {
    auto xn = OpAccess::node(x), kn = OpAccess::node(kernel), bn = OpAccess::node(bias);
    if (xn->shape.size() != 4 || kn->shape.size() != 4 || bn->shape.size() != 1) {
        fail("conv2d", "expected x [N,C,H,W], kernel [F,C,kh,kw], bias [F]; got " +
                           shape_str(xn->shape) + ", " + shape_str(kn->shape) + ", " +
                           shape_str(bn->shape));
    }
    const int n = xn->shape[0], c = xn->shape[1], h = xn->shape[2], w = xn->shape[3];
    const int f = kn->shape[0], kc = kn->shape[1], kh = kn->shape[2], kw = kn->shape[3];
    if (kc != c || bn->shape[0] != f) {
        fail("conv2d", "channel mismatch: input " + shape_str(xn->shape) + " kernel " +
                           shape_str(kn->shape) + " bias " + shape_str(bn->shape));
    }
    if (stride < 1 || padding < 0) fail("conv2d", "stride must be >= 1 and padding >= 0");
    const int ho = (h + 2 * padding - kh) / stride + 1;
    const int wo = (w + 2 * padding - kw) / stride + 1;
    if (h + 2 * padding < kh || w + 2 * padding < kw) {
        fail("conv2d", "kernel " + shape_str(kn->shape) + " larger than padded input " +
                           shape_str(xn->shape));
    }

    std::vector<double> out(static_cast<size_t>(n) * f * ho * wo);
    auto xat = [&](int ni, int ci, int hi, int wi) -> double {
        return xn->data[((static_cast<size_t>(ni) * c + ci) * h + hi) * w + wi];
    };
    for (int ni = 0; ni < n; ++ni)
        for (int fi = 0; fi < f; ++fi)
            for (int i = 0; i < ho; ++i)
                for (int j = 0; j < wo; ++j) {
                    double s = bn->data[fi];
                    const int h0 = i * stride - padding, w0 = j * stride - padding;
                    for (int ci = 0; ci < c; ++ci)
                        for (int u = 0; u < kh; ++u) {
                            const int hi = h0 + u;
                            if (hi < 0 || hi >= h) continue;
                            const double* krow =
                                kn->data.data() +
                                ((static_cast<size_t>(fi) * c + ci) * kh + u) * kw;
                            for (int v = 0; v < kw; ++v) {
                                const int wi = w0 + v;
                                if (wi < 0 || wi >= w) continue;
                                s += xat(ni, ci, hi, wi) * krow[v];
                            }
                        }
                    out[((static_cast<size_t>(ni) * f + fi) * ho + i) * wo + j] = s;
                }

    auto backward = [=](const std::vector<double>& g, const AccumFn& accum) {
        std::vector<double>* gx = xn->requires_grad ? &accum(xn.get()) : nullptr;
        std::vector<double>* gk = kn->requires_grad ? &accum(kn.get()) : nullptr;
        std::vector<double>* gb = bn->requires_grad ? &accum(bn.get()) : nullptr;
        for (int ni = 0; ni < n; ++ni)
            for (int fi = 0; fi < f; ++fi)
                for (int i = 0; i < ho; ++i)
                    for (int j = 0; j < wo; ++j) {
                        const double go =
                            g[((static_cast<size_t>(ni) * f + fi) * ho + i) * wo + j];
                        if (go == 0.0) continue;
                        if (gb) (*gb)[fi] += go;
                        const int h0 = i * stride - padding, w0 = j * stride - padding;
                        for (int ci = 0; ci < c; ++ci)
                            for (int u = 0; u < kh; ++u) {
                                const int hi = h0 + u;
                                if (hi < 0 || hi >= h) continue;
                                for (int v = 0; v < kw; ++v) {
                                    const int wi = w0 + v;
                                    if (wi < 0 || wi >= w) continue;
                                    const size_t xi =
                                        ((static_cast<size_t>(ni) * c + ci) * h + hi) * w + wi;
                                    const size_t ki =
                                        ((static_cast<size_t>(fi) * c + ci) * kh + u) * kw + v;
                                    if (gx) (*gx)[xi] += go * kn->data[ki];
                                    if (gk) (*gk)[ki] += go * xn->data[xi];
                                }
                            }
                    }
    };
    return OpAccess::make("conv2d", {n, f, ho, wo}, std::move(out), {xn, kn, bn}, backward);
}

Tensor relu(const Tensor& x) {
    auto xn = OpAccess::node(x);
    std::vector<double> out(xn->data.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = xn->data[i] > 0.0 ? xn->data[i] : 0.0;
    auto backward = [xn](const std::vector<double>& g, const AccumFn& accum) {
        auto& gx = accum(xn.get());
        for (size_t i = 0; i < g.size(); ++i)
            if (xn->data[i] > 0.0) gx[i] += g[i];
    };
    return OpAccess::make("relu", xn->shape, std::move(out), {xn}, backward);
}

Tensor max_pool2x2(const Tensor& x) {
    auto xn = OpAccess::node(x);
    if (xn->shape.size() != 4) fail("max_pool2x2", "expected [N,C,H,W], got " + shape_str(xn->shape));
    const int n = xn->shape[0], c = xn->shape[1], h = xn->shape[2], w = xn->shape[3];
    const int ho = h / 2, wo = w / 2;
    if (ho < 1 || wo < 1) fail("max_pool2x2", "input too small: " + shape_str(xn->shape));
    std::vector<double> out(static_cast<size_t>(n) * c * ho * wo);
    auto argmax = std::make_shared<std::vector<size_t>>(out.size());
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci)
            for (int i = 0; i < ho; ++i)
                for (int j = 0; j < wo; ++j) {
                    size_t best = 0;
                    double bv = -std::numeric_limits<double>::infinity();
                    for (int du = 0; du < 2; ++du)
                        for (int dv = 0; dv < 2; ++dv) {
                            const size_t xi =
                                ((static_cast<size_t>(ni) * c + ci) * h + 2 * i + du) * w +
                                2 * j + dv;
                            if (xn->data[xi] > bv) {
                                bv = xn->data[xi];
                                best = xi;
                            }
                        }
                    const size_t oi = ((static_cast<size_t>(ni) * c + ci) * ho + i) * wo + j;
                    out[oi] = bv;
                    (*argmax)[oi] = best;
                }
    auto backward = [xn, argmax](const std::vector<double>& g, const AccumFn& accum) {
        auto& gx = accum(xn.get());
        for (size_t oi = 0; oi < g.size(); ++oi) gx[(*argmax)[oi]] += g[oi];
    };
    return OpAccess::make("max_pool2x2", {n, c, ho, wo}, std::move(out), {xn}, backward);
}

Tensor global_avg_pool(const Tensor& x) {
    auto xn = OpAccess::node(x);
    if (xn->shape.size() != 4) {
        fail("global_avg_pool", "expected [N,C,H,W], got " + shape_str(xn->shape));
    }
    const int n = xn->shape[0], c = xn->shape[1], h = xn->shape[2], w = xn->shape[3];
    const double inv = 1.0 / (static_cast<double>(h) * w);
    std::vector<double> out(static_cast<size_t>(n) * c);
    for (int ni = 0; ni < n; ++ni)
        for (int ci = 0; ci < c; ++ci) {
            double s = 0.0;
            const double* base = xn->data.data() + (static_cast<size_t>(ni) * c + ci) * h * w;
            for (int i = 0; i < h * w; ++i) s += base[i];
            out[static_cast<size_t>(ni) * c + ci] = s * inv;
        }
    auto backward = [xn, n, c, h, w, inv](const std::vector<double>& g, const AccumFn& accum) {
        auto& gx = accum(xn.get());
        for (int ni = 0; ni < n; ++ni)
            for (int ci = 0; ci < c; ++ci) {
                const double gv = g[static_cast<size_t>(ni) * c + ci] * inv;
                double* base = gx.data() + (static_cast<size_t>(ni) * c + ci) * h * w;
                for (int i = 0; i < h * w; ++i) base[i] += gv;
            }
    };
    return OpAccess::make("global_avg_pool", {n, c}, std::move(out), {xn}, backward);
}

Tensor flatten(const Tensor& x) {
    auto xn = OpAccess::node(x);
    if (xn->shape.size() < 2) fail("flatten", "expected rank >= 2, got " + shape_str(xn->shape));
    const int n = xn->shape[0];
    const int rest = static_cast<int>(xn->data.size()) / n;
    auto backward = [xn](const std::vector<double>& g, const AccumFn& accum) {
        auto& gx = accum(xn.get());
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    };
    return OpAccess::make("flatten", {n, rest}, xn->data, {xn}, backward);
}

Tensor add(const Tensor& a, const Tensor& b) {
    auto an = OpAccess::node(a), bn = OpAccess::node(b);
    if (an->shape != bn->shape) {
        fail("add", "shape mismatch " + shape_str(an->shape) + " vs " + shape_str(bn->shape));
    }
    std::vector<double> out(an->data.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = an->data[i] + bn->data[i];
    auto backward = [an, bn](const std::vector<double>& g, const AccumFn& accum) {
        if (an->requires_grad) {
            auto& ga = accum(an.get());
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (bn->requires_grad) {
            auto& gb = accum(bn.get());
            for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
        }
    };
    return OpAccess::make("add", an->shape, std::move(out), {an, bn}, backward);
}

Tensor scale(const Tensor& x, double factor) {
    auto xn = OpAccess::node(x);
    std::vector<double> out(xn->data.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = xn->data[i] * factor;
    auto backward = [xn, factor](const std::vector<double>& g, const AccumFn& accum) {
        auto& gx = accum(xn.get());
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
    };
    return OpAccess::make("scale", xn->shape, std::move(out), {xn}, backward);
}

Tensor sum(const Tensor& x) {
    auto xn = OpAccess::node(x);
    double s = std::accumulate(xn->data.begin(), xn->data.end(), 0.0);
    auto backward = [xn](const std::vector<double>& g, const AccumFn& accum) {
        auto& gx = accum(xn.get());
        for (size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
    };
    return OpAccess::make("sum", {1}, {s}, {xn}, backward);
}

Tensor clamp(const Tensor& x, double lo, double hi) {
    if (lo > hi) fail("clamp", "lo > hi");
    auto xn = OpAccess::node(x);
    std::vector<double> out(xn->data.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::min(hi, std::max(lo, xn->data[i]));
    auto backward = [xn, lo, hi](const std::vector<double>& g, const AccumFn& accum) {
        auto& gx = accum(xn.get());
        for (size_t i = 0; i < g.size(); ++i)
            if (xn->data[i] > lo && xn->data[i] < hi) gx[i] += g[i];
    };
    return OpAccess::make("clamp", xn->shape, std::move(out), {xn}, backward);
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    auto ln = OpAccess::node(logits);
    if (ln->shape.size() != 2) {
        fail("softmax_cross_entropy", "expected logits [N,M], got " + shape_str(ln->shape));
    }
    const int n = ln->shape[0], m = ln->shape[1];
    if (static_cast<int>(labels.size()) != n) {
        fail("softmax_cross_entropy", "labels length " + std::to_string(labels.size()) +
                                          " does not match batch " + std::to_string(n));
    }
    for (int y : labels)
        if (y < 0 || y >= m) fail("softmax_cross_entropy", "label out of range");

    // Stable log-sum-exp; keep probabilities for the backward pass.
    auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(n) * m);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const double* row = ln->data.data() + static_cast<size_t>(i) * m;
        const double mx = *std::max_element(row, row + m);
        double se = 0.0;
        for (int j = 0; j < m; ++j) se += std::exp(row[j] - mx);
        const double lse = mx + std::log(se);
        for (int j = 0; j < m; ++j)
            (*probs)[static_cast<size_t>(i) * m + j] = std::exp(row[j] - lse);
        total += lse - row[labels[i]];
    }
    total /= n;

    auto labels_copy = std::make_shared<std::vector<int>>(labels);
    auto backward = [ln, probs, labels_copy, n, m](const std::vector<double>& g,
                                                   const AccumFn& accum) {
        auto& gx = accum(ln.get());
        const double gscale = g[0] / n;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) {
                double p = (*probs)[static_cast<size_t>(i) * m + j];
                gx[static_cast<size_t>(i) * m + j] +=
                    gscale * (p - (j == (*labels_copy)[i] ? 1.0 : 0.0));
            }
    };
    return OpAccess::make("softmax_cross_entropy", {1}, {total}, {ln}, backward);
}

std::vector<std::vector<double>> softmax_rows(const Tensor& logits) {
    const auto& shape = logits.shape();
    if (shape.size() != 2) fail("softmax_rows", "expected [N,M], got " + shape_str(shape));
    const int n = shape[0], m = shape[1];
    const auto& d = logits.values();
    std::vector<std::vector<double>> out(n, std::vector<double>(m));
    for (int i = 0; i < n; ++i) {
        const double* row = d.data() + static_cast<size_t>(i) * m;
        const double mx = *std::max_element(row, row + m);
        double se = 0.0;
        for (int j = 0; j < m; ++j) se += std::exp(row[j] - mx);
        for (int j = 0; j < m; ++j) out[i][j] = std::exp(row[j] - mx) / se;
    }
    return out;
}

}  // namespace advgrid
