#include "active/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace active {

double sigmoid_value(double x) {
    double y;
    if (x >= 0.0) {
        y = 1.0 / (1.0 + std::exp(-x));
    } else {
        const double e = std::exp(x);
        y = e / (1.0 + e);
    }
    // keep the output strictly inside (0,1) even for extreme inputs
    const double lo = std::numeric_limits<double>::min();
    const double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
    return std::min(std::max(y, lo), hi);
}

namespace {

bool should_record(std::initializer_list<const Tensor*> ins) {
    if (!grad_enabled()) return false;
    for (const Tensor* t : ins)
        if (t->defined() && t->wants_grad()) return true;
    return false;
}

void attach(Tensor& out, std::shared_ptr<OpNode> node) {
    out.impl()->producer = std::move(node);
}

// Input plane padded with zeros; borrows the original buffer when pad == 0.
struct Padded {
    std::vector<double> own;
    const double* ptr = nullptr;
    int hp = 0, wp = 0;
};

Padded pad_nchw(const double* x, int n, int c, int h, int w, int pad) {
    Padded p;
    p.hp = h + 2 * pad;
    p.wp = w + 2 * pad;
    if (pad == 0) {
        p.ptr = x;
        return p;
    }
    p.own.assign(static_cast<size_t>(n) * c * p.hp * p.wp, 0.0);
    for (long long img = 0; img < static_cast<long long>(n) * c; ++img) {
        const double* src = x + img * h * w;
        double* dst = p.own.data() + img * p.hp * p.wp + pad * p.wp + pad;
        for (int y = 0; y < h; ++y) std::memcpy(dst + y * p.wp, src + y * w, sizeof(double) * w);
    }
    p.ptr = p.own.data();
    return p;
}

int conv_extent(int in, int pad, int k, int stride) {
    return (in + 2 * pad - k) / stride + 1;
}

}  // namespace

// --- conv2d -----------------------------------------------------------------

namespace {

void conv2d_check(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    if (stride < 1) throw ShapeError("conv2d: stride must be positive, got " + std::to_string(stride));
    if (pad < 0) throw ShapeError("conv2d: pad must be non-negative, got " + std::to_string(pad));
    if (ws.c != xs.c)
        throw ShapeError("conv2d: weight expects " + std::to_string(ws.c) + " input channels, tensor has " +
                         std::to_string(xs.c) + " (x=" + xs.str() + ", w=" + ws.str() + ")");
    if (ws.h > xs.h + 2 * pad || ws.w > xs.w + 2 * pad)
        throw ShapeError("conv2d: kernel " + std::to_string(ws.h) + "x" + std::to_string(ws.w) +
                         " exceeds padded input " + xs.str() + " with pad " + std::to_string(pad));
    if (b.defined()) {
        const Shape want{1, ws.n, 1, 1};
        if (!(b.shape() == want))
            throw ShapeError("conv2d: bias shape " + b.shape().str() + " does not match " + want.str());
    }
}

struct ConvNode final : OpNode {
    int stride, pad;
    void backward(TensorImpl& out) override;
};

void conv2d_forward_into(double* y, const double* xp, int n, int cin, int hp, int wp, const double* w,
                         const double* b, int cout, int kh, int kw, int oh, int ow, int stride) {
    for (int img = 0; img < n; ++img) {
        for (int co = 0; co < cout; ++co) {
            double* yplane = y + (static_cast<long long>(img) * cout + co) * oh * ow;
            const double bias = b ? b[co] : 0.0;
            std::fill(yplane, yplane + static_cast<long long>(oh) * ow, bias);
            for (int ci = 0; ci < cin; ++ci) {
                const double* xplane = xp + (static_cast<long long>(img) * cin + ci) * hp * wp;
                const double* wplane = w + (static_cast<long long>(co) * cin + ci) * kh * kw;
                for (int ky = 0; ky < kh; ++ky) {
                    for (int kx = 0; kx < kw; ++kx) {
                        const double wv = wplane[ky * kw + kx];
                        const double* xbase = xplane + ky * wp + kx;
                        for (int oy = 0; oy < oh; ++oy) {
                            const double* __restrict__ xrow = xbase + static_cast<long long>(oy) * stride * wp;
                            double* __restrict__ yrow = yplane + static_cast<long long>(oy) * ow;
                            if (stride == 1) {
                                for (int ox = 0; ox < ow; ++ox) yrow[ox] += wv * xrow[ox];
                            } else {
                                for (int ox = 0; ox < ow; ++ox) yrow[ox] += wv * xrow[ox * stride];
                            }
                        }
                    }
                }
            }
        }
    }
}

void ConvNode::backward(TensorImpl& out) {
    Tensor& x = inputs[0];
    Tensor& w = inputs[1];
    Tensor* b = inputs.size() > 2 ? &inputs[2] : nullptr;
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    const Shape& os = out.shape;
    const int n = xs.n, cin = xs.c, cout = ws.n, kh = ws.h, kw = ws.w;
    const int oh = os.h, ow = os.w;
    const double* dy = out.grad.data();

    if (b && b->wants_grad()) {
        b->impl()->ensure_grad();
        double* db = b->impl()->grad.data();
        for (int img = 0; img < n; ++img)
            for (int co = 0; co < cout; ++co) {
                const double* dyp = dy + (static_cast<long long>(img) * cout + co) * oh * ow;
                double acc = 0.0;
                for (long long i = 0; i < static_cast<long long>(oh) * ow; ++i) acc += dyp[i];
                db[co] += acc;
            }
    }

    const bool need_dx = x.wants_grad();
    const bool need_dw = w.wants_grad();
    if (!need_dx && !need_dw) return;

    Padded xp;
    if (need_dw) xp = pad_nchw(x.data(), n, cin, xs.h, xs.w, pad);
    const int hp = xs.h + 2 * pad, wp = xs.w + 2 * pad;

    std::vector<double> gpad;
    if (need_dx) gpad.assign(static_cast<size_t>(n) * cin * hp * wp, 0.0);

    for (int img = 0; img < n; ++img) {
        for (int co = 0; co < cout; ++co) {
            const double* dyplane = dy + (static_cast<long long>(img) * cout + co) * oh * ow;
            for (int ci = 0; ci < cin; ++ci) {
                const long long woff = (static_cast<long long>(co) * cin + ci) * kh * kw;
                for (int ky = 0; ky < kh; ++ky) {
                    for (int kx = 0; kx < kw; ++kx) {
                        const long long base = (static_cast<long long>(img) * cin + ci) * hp * wp +
                                               static_cast<long long>(ky) * wp + kx;
                        if (need_dx) {
                            const double wv = w.data()[woff + ky * kw + kx];
                            double* gbase = gpad.data() + base;
                            for (int oy = 0; oy < oh; ++oy) {
                                const double* __restrict__ dyrow = dyplane + static_cast<long long>(oy) * ow;
                                double* __restrict__ grow = gbase + static_cast<long long>(oy) * stride * wp;
                                if (stride == 1) {
                                    for (int ox = 0; ox < ow; ++ox) grow[ox] += wv * dyrow[ox];
                                } else {
                                    for (int ox = 0; ox < ow; ++ox) grow[ox * stride] += wv * dyrow[ox];
                                }
                            }
                        }
                        if (need_dw) {
                            const double* xbase = xp.ptr + base;
                            double acc = 0.0;
                            for (int oy = 0; oy < oh; ++oy) {
                                const double* __restrict__ dyrow = dyplane + static_cast<long long>(oy) * ow;
                                const double* __restrict__ xrow = xbase + static_cast<long long>(oy) * stride * wp;
                                if (stride == 1) {
                                    for (int ox = 0; ox < ow; ++ox) acc += dyrow[ox] * xrow[ox];
                                } else {
                                    for (int ox = 0; ox < ow; ++ox) acc += dyrow[ox] * xrow[ox * stride];
                                }
                            }
                            w.impl()->ensure_grad();
                            w.impl()->grad[woff + ky * kw + kx] += acc;
                        }
                    }
                }
            }
        }
    }

    if (need_dx) {
        x.impl()->ensure_grad();
        double* dx = x.impl()->grad.data();
        if (pad == 0) {
            for (size_t i = 0; i < gpad.size(); ++i) dx[i] += gpad[i];
        } else {
            for (long long img = 0; img < static_cast<long long>(n) * cin; ++img) {
                const double* src = gpad.data() + img * hp * wp + pad * wp + pad;
                double* dst = dx + img * xs.h * xs.w;
                for (int yy = 0; yy < xs.h; ++yy)
                    for (int xx = 0; xx < xs.w; ++xx) dst[yy * xs.w + xx] += src[yy * wp + xx];
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    conv2d_check(x, w, b, stride, pad);
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    const int oh = conv_extent(xs.h, pad, ws.h, stride);
    const int ow = conv_extent(xs.w, pad, ws.w, stride);
    Tensor y = Tensor::zeros({xs.n, ws.n, oh, ow});

    Padded xp = pad_nchw(x.data(), xs.n, xs.c, xs.h, xs.w, pad);
    conv2d_forward_into(y.data(), xp.ptr, xs.n, xs.c, xp.hp, xp.wp, w.data(),
                        b.defined() ? b.data() : nullptr, ws.n, ws.h, ws.w, oh, ow, stride);

    if (should_record({&x, &w, &b})) {
        auto node = std::make_shared<ConvNode>();
        node->kind = "conv2d";
        node->inputs = {x, w};
        if (b.defined()) node->inputs.push_back(b);
        node->stride = stride;
        node->pad = pad;
        attach(y, std::move(node));
    }
    return y;
}

// --- depthwise conv ----------------------------------------------------------

namespace {

struct DepthwiseNode final : OpNode {
    int stride, pad;
    void backward(TensorImpl& out) override;
};

void DepthwiseNode::backward(TensorImpl& out) {
    Tensor& x = inputs[0];
    Tensor& w = inputs[1];
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    const int n = xs.n, c = xs.c, kh = ws.h, kw = ws.w;
    const int oh = out.shape.h, ow = out.shape.w;
    const int hp = xs.h + 2 * pad, wp = xs.w + 2 * pad;
    const double* dy = out.grad.data();

    const bool need_dx = x.wants_grad();
    const bool need_dw = w.wants_grad();
    if (!need_dx && !need_dw) return;

    Padded xp;
    if (need_dw) xp = pad_nchw(x.data(), n, c, xs.h, xs.w, pad);
    std::vector<double> gpad;
    if (need_dx) gpad.assign(static_cast<size_t>(n) * c * hp * wp, 0.0);

    for (int img = 0; img < n; ++img) {
        for (int ch = 0; ch < c; ++ch) {
            const double* dyplane = dy + (static_cast<long long>(img) * c + ch) * oh * ow;
            const long long base_plane = (static_cast<long long>(img) * c + ch) * hp * wp;
            for (int ky = 0; ky < kh; ++ky) {
                for (int kx = 0; kx < kw; ++kx) {
                    const long long base = base_plane + static_cast<long long>(ky) * wp + kx;
                    const long long woff = static_cast<long long>(ch) * kh * kw + ky * kw + kx;
                    if (need_dx) {
                        const double wv = w.data()[woff];
                        double* gbase = gpad.data() + base;
                        for (int oy = 0; oy < oh; ++oy) {
                            const double* dyrow = dyplane + static_cast<long long>(oy) * ow;
                            double* grow = gbase + static_cast<long long>(oy) * stride * wp;
                            for (int ox = 0; ox < ow; ++ox) grow[ox * stride] += wv * dyrow[ox];
                        }
                    }
                    if (need_dw) {
                        const double* xbase = xp.ptr + base;
                        double acc = 0.0;
                        for (int oy = 0; oy < oh; ++oy) {
                            const double* dyrow = dyplane + static_cast<long long>(oy) * ow;
                            const double* xrow = xbase + static_cast<long long>(oy) * stride * wp;
                            for (int ox = 0; ox < ow; ++ox) acc += dyrow[ox] * xrow[ox * stride];
                        }
                        w.impl()->ensure_grad();
                        w.impl()->grad[woff] += acc;
                    }
                }
            }
        }
    }

    if (need_dx) {
        x.impl()->ensure_grad();
        double* dx = x.impl()->grad.data();
        if (pad == 0) {
            for (size_t i = 0; i < gpad.size(); ++i) dx[i] += gpad[i];
        } else {
            for (long long img = 0; img < static_cast<long long>(n) * c; ++img) {
                const double* src = gpad.data() + img * hp * wp + pad * wp + pad;
                double* dst = dx + img * xs.h * xs.w;
                for (int yy = 0; yy < xs.h; ++yy)
                    for (int xx = 0; xx < xs.w; ++xx) dst[yy * xs.w + xx] += src[yy * wp + xx];
            }
        }
    }
}

}  // namespace

Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, int stride, int pad) {
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    if (stride < 1) throw ShapeError("depthwise_conv2d: stride must be positive");
    if (pad < 0) throw ShapeError("depthwise_conv2d: pad must be non-negative");
    if (ws.n != xs.c || ws.c != 1)
        throw ShapeError("depthwise_conv2d: weight " + ws.str() + " must be [C,1,kh,kw] with C=" +
                         std::to_string(xs.c) + " for input " + xs.str());
    if (ws.h > xs.h + 2 * pad || ws.w > xs.w + 2 * pad)
        throw ShapeError("depthwise_conv2d: kernel exceeds padded input " + xs.str());

    const int oh = conv_extent(xs.h, pad, ws.h, stride);
    const int ow = conv_extent(xs.w, pad, ws.w, stride);
    Tensor y = Tensor::zeros({xs.n, xs.c, oh, ow});

    Padded xp = pad_nchw(x.data(), xs.n, xs.c, xs.h, xs.w, pad);
    for (int img = 0; img < xs.n; ++img) {
        for (int ch = 0; ch < xs.c; ++ch) {
            const double* xplane = xp.ptr + (static_cast<long long>(img) * xs.c + ch) * xp.hp * xp.wp;
            const double* wplane = w.data() + static_cast<long long>(ch) * ws.h * ws.w;
            double* yplane = y.data() + (static_cast<long long>(img) * xs.c + ch) * oh * ow;
            for (int ky = 0; ky < ws.h; ++ky) {
                for (int kx = 0; kx < ws.w; ++kx) {
                    const double wv = wplane[ky * ws.w + kx];
                    const double* xbase = xplane + static_cast<long long>(ky) * xp.wp + kx;
                    for (int oy = 0; oy < oh; ++oy) {
                        const double* __restrict__ xrow = xbase + static_cast<long long>(oy) * stride * xp.wp;
                        double* __restrict__ yrow = yplane + static_cast<long long>(oy) * ow;
                        if (stride == 1) {
                            for (int ox = 0; ox < ow; ++ox) yrow[ox] += wv * xrow[ox];
                        } else {
                            for (int ox = 0; ox < ow; ++ox) yrow[ox] += wv * xrow[ox * stride];
                        }
                    }
                }
            }
        }
    }

    if (should_record({&x, &w})) {
        auto node = std::make_shared<DepthwiseNode>();
        node->kind = "depthwise_conv2d";
        node->inputs = {x, w};
        node->stride = stride;
        node->pad = pad;
        attach(y, std::move(node));
    }
    return y;
}

// --- elementwise -------------------------------------------------------------

namespace {

struct ActNode final : OpNode {
    Act act;
    double alpha;
    void backward(TensorImpl& out) override {
        Tensor& x = inputs[0];
        if (!x.wants_grad()) return;
        x.impl()->ensure_grad();
        const double* xd = x.data();
        const double* dy = out.grad.data();
        const double* yd = out.data.data();
        double* dx = x.impl()->grad.data();
        const long long n = x.numel();
        switch (act) {
            case Act::Sigmoid:
                for (long long i = 0; i < n; ++i) dx[i] += dy[i] * yd[i] * (1.0 - yd[i]);
                break;
            case Act::LeakyRelu:
                for (long long i = 0; i < n; ++i) dx[i] += dy[i] * (xd[i] > 0.0 ? 1.0 : alpha);
                break;
            case Act::Silu:
                for (long long i = 0; i < n; ++i) {
                    const double s = sigmoid_value(xd[i]);
                    dx[i] += dy[i] * s * (1.0 + xd[i] * (1.0 - s));
                }
                break;
        }
    }
};

}  // namespace

Tensor activation(const Tensor& x, Act kind, double alpha) {
    Tensor y = Tensor::zeros(x.shape());
    const double* xd = x.data();
    double* yd = y.data();
    const long long n = x.numel();
    switch (kind) {
        case Act::Sigmoid:
            for (long long i = 0; i < n; ++i) yd[i] = sigmoid_value(xd[i]);
            break;
        case Act::LeakyRelu:
            for (long long i = 0; i < n; ++i) yd[i] = xd[i] > 0.0 ? xd[i] : alpha * xd[i];
            break;
        case Act::Silu:
            for (long long i = 0; i < n; ++i) yd[i] = xd[i] * sigmoid_value(xd[i]);
            break;
    }
    if (should_record({&x})) {
        auto node = std::make_shared<ActNode>();
        node->kind = kind == Act::Sigmoid ? "sigmoid" : kind == Act::LeakyRelu ? "leaky_relu" : "silu";
        node->inputs = {x};
        node->act = kind;
        node->alpha = alpha;
        attach(y, std::move(node));
    }
    return y;
}

namespace {

struct AffineNode final : OpNode {
    double a;
    void backward(TensorImpl& out) override {
        Tensor& x = inputs[0];
        if (!x.wants_grad()) return;
        x.impl()->ensure_grad();
        double* dx = x.impl()->grad.data();
        const double* dy = out.grad.data();
        for (long long i = 0; i < x.numel(); ++i) dx[i] += a * dy[i];
    }
};

struct ExpNode final : OpNode {
    void backward(TensorImpl& out) override {
        Tensor& x = inputs[0];
        if (!x.wants_grad()) return;
        x.impl()->ensure_grad();
        double* dx = x.impl()->grad.data();
        const double* dy = out.grad.data();
        const double* xd = x.data();
        const double* yd = out.data.data();
        for (long long i = 0; i < x.numel(); ++i) dx[i] += dy[i] * (xd[i] < 40.0 ? yd[i] : 0.0);
    }
};

}  // namespace

Tensor affine(const Tensor& x, double a, double b) {
    Tensor y = Tensor::zeros(x.shape());
    const double* xd = x.data();
    double* yd = y.data();
    for (long long i = 0; i < x.numel(); ++i) yd[i] = a * xd[i] + b;
    if (should_record({&x})) {
        auto node = std::make_shared<AffineNode>();
        node->kind = "affine";
        node->inputs = {x};
        node->a = a;
        attach(y, std::move(node));
    }
    return y;
}

Tensor exp_clamped(const Tensor& x) {
    Tensor y = Tensor::zeros(x.shape());
    const double* xd = x.data();
    double* yd = y.data();
    for (long long i = 0; i < x.numel(); ++i) yd[i] = std::exp(std::min(xd[i], 40.0));
    if (should_record({&x})) {
        auto node = std::make_shared<ExpNode>();
        node->kind = "exp";
        node->inputs = {x};
        attach(y, std::move(node));
    }
    return y;
}

namespace {

struct AddNode final : OpNode {
    void backward(TensorImpl& out) override {
        const double* dy = out.grad.data();
        for (Tensor& x : inputs) {
            if (!x.wants_grad()) continue;
            x.impl()->ensure_grad();
            double* dx = x.impl()->grad.data();
            for (long long i = 0; i < x.numel(); ++i) dx[i] += dy[i];
        }
    }
};

enum class Bin { Sub, Mul, Div, Min, Max };

struct BinNode final : OpNode {
    Bin op;
    void backward(TensorImpl& out) override {
        Tensor& a = inputs[0];
        Tensor& b = inputs[1];
        const double* ad = a.data();
        const double* bd = b.data();
        const double* dy = out.grad.data();
        const long long n = a.numel();
        const bool need_a = a.wants_grad(), need_b = b.wants_grad();
        if (need_a) a.impl()->ensure_grad();
        if (need_b) b.impl()->ensure_grad();
        double* da = need_a ? a.impl()->grad.data() : nullptr;
        double* db = need_b ? b.impl()->grad.data() : nullptr;
        for (long long i = 0; i < n; ++i) {
            double ga = 0.0, gb = 0.0;
            switch (op) {
                case Bin::Sub: ga = 1.0; gb = -1.0; break;
                case Bin::Mul: ga = bd[i]; gb = ad[i]; break;
                case Bin::Div: ga = 1.0 / bd[i]; gb = -ad[i] / (bd[i] * bd[i]); break;
                // ties route to the first operand
                case Bin::Min: ga = ad[i] <= bd[i] ? 1.0 : 0.0; gb = 1.0 - ga; break;
                case Bin::Max: ga = ad[i] >= bd[i] ? 1.0 : 0.0; gb = 1.0 - ga; break;
            }
            if (da) da[i] += dy[i] * ga;
            if (db) db[i] += dy[i] * gb;
        }
    }
};

Tensor binary_op(const Tensor& a, const Tensor& b, Bin op, const char* name) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(name) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    Tensor y = Tensor::zeros(a.shape());
    const double* ad = a.data();
    const double* bd = b.data();
    double* yd = y.data();
    for (long long i = 0; i < a.numel(); ++i) {
        switch (op) {
            case Bin::Sub: yd[i] = ad[i] - bd[i]; break;
            case Bin::Mul: yd[i] = ad[i] * bd[i]; break;
            case Bin::Div: yd[i] = ad[i] / bd[i]; break;
            case Bin::Min: yd[i] = std::min(ad[i], bd[i]); break;
            case Bin::Max: yd[i] = std::max(ad[i], bd[i]); break;
        }
    }
    if (should_record({&a, &b})) {
        auto node = std::make_shared<BinNode>();
        node->kind = name;
        node->inputs = {a, b};
        node->op = op;
        attach(y, std::move(node));
    }
    return y;
}

}  // namespace

Tensor add(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw ShapeError("add: needs at least one input");
    const Shape& s = xs[0].shape();
    for (const Tensor& x : xs)
        if (x.shape() != s)
            throw ShapeError("add: shape mismatch " + x.shape().str() + " vs " + s.str());
    Tensor y = Tensor::zeros(s);
    double* yd = y.data();
    for (const Tensor& x : xs) {
        const double* xd = x.data();
        for (long long i = 0; i < y.numel(); ++i) yd[i] += xd[i];
    }
    bool rec = grad_enabled();
    if (rec) {
        rec = false;
        for (const Tensor& x : xs) rec = rec || x.wants_grad();
    }
    if (rec) {
        auto node = std::make_shared<AddNode>();
        node->kind = "add";
        node->inputs = xs;
        attach(y, std::move(node));
    }
    return y;
}

Tensor sub2(const Tensor& a, const Tensor& b) { return binary_op(a, b, Bin::Sub, "sub"); }
Tensor mul2(const Tensor& a, const Tensor& b) { return binary_op(a, b, Bin::Mul, "mul"); }
Tensor div2(const Tensor& a, const Tensor& b) { return binary_op(a, b, Bin::Div, "div"); }
Tensor min2(const Tensor& a, const Tensor& b) { return binary_op(a, b, Bin::Min, "min"); }
Tensor max2(const Tensor& a, const Tensor& b) { return binary_op(a, b, Bin::Max, "max"); }

// --- shape / broadcast -------------------------------------------------------

namespace {

struct ConcatNode final : OpNode {
    void backward(TensorImpl& out) override {
        const Shape& os = out.shape;
        const double* dy = out.grad.data();
        int coff = 0;
        for (Tensor& x : inputs) {
            const Shape& xs = x.shape();
            if (x.wants_grad()) {
                x.impl()->ensure_grad();
                double* dx = x.impl()->grad.data();
                const long long plane = static_cast<long long>(xs.h) * xs.w;
                for (int img = 0; img < xs.n; ++img) {
                    const double* src = dy + ((static_cast<long long>(img) * os.c) + coff) * plane;
                    double* dst = dx + static_cast<long long>(img) * xs.c * plane;
                    for (long long i = 0; i < xs.c * plane; ++i) dst[i] += src[i];
                }
            }
            coff += xs.c;
        }
    }
};

struct BiasAddNode final : OpNode {
    void backward(TensorImpl& out) override {
        Tensor& x = inputs[0];
        Tensor& b = inputs[1];
        const Shape& xs = x.shape();
        const double* dy = out.grad.data();
        if (x.wants_grad()) {
            x.impl()->ensure_grad();
            double* dx = x.impl()->grad.data();
            for (long long i = 0; i < x.numel(); ++i) dx[i] += dy[i];
        }
        if (b.wants_grad()) {
            b.impl()->ensure_grad();
            double* db = b.impl()->grad.data();
            const long long plane = static_cast<long long>(xs.h) * xs.w;
            for (int img = 0; img < xs.n; ++img)
                for (int c = 0; c < xs.c; ++c) {
                    const double* src = dy + (static_cast<long long>(img) * xs.c + c) * plane;
                    double acc = 0.0;
                    for (long long i = 0; i < plane; ++i) acc += src[i];
                    db[c] += acc;
                }
        }
    }
};

struct MulBroadcastNode final : OpNode {
    void backward(TensorImpl& out) override {
        Tensor& x = inputs[0];
        Tensor& s = inputs[1];
        const Shape& xs = x.shape();
        const double* dy = out.grad.data();
        const long long plane = static_cast<long long>(xs.h) * xs.w;
        if (x.wants_grad()) {
            x.impl()->ensure_grad();
            double* dx = x.impl()->grad.data();
            for (int img = 0; img < xs.n; ++img)
                for (int c = 0; c < xs.c; ++c) {
                    const double sv = s.data()[static_cast<long long>(img) * xs.c + c];
                    const long long off = (static_cast<long long>(img) * xs.c + c) * plane;
                    for (long long i = 0; i < plane; ++i) dx[off + i] += dy[off + i] * sv;
                }
        }
        if (s.wants_grad()) {
            s.impl()->ensure_grad();
            double* ds = s.impl()->grad.data();
            const double* xd = x.data();
            for (int img = 0; img < xs.n; ++img)
                for (int c = 0; c < xs.c; ++c) {
                    const long long off = (static_cast<long long>(img) * xs.c + c) * plane;
                    double acc = 0.0;
                    for (long long i = 0; i < plane; ++i) acc += dy[off + i] * xd[off + i];
                    ds[static_cast<long long>(img) * xs.c + c] += acc;
                }
        }
    }
};

struct GapNode final : OpNode {
    void backward(TensorImpl& out) override {
        Tensor& x = inputs[0];
        if (!x.wants_grad()) return;
        x.impl()->ensure_grad();
        const Shape& xs = x.shape();
        const double inv = 1.0 / (static_cast<double>(xs.h) * xs.w);
        const double* dy = out.grad.data();
        double* dx = x.impl()->grad.data();
        const long long plane = static_cast<long long>(xs.h) * xs.w;
        for (long long nc = 0; nc < static_cast<long long>(xs.n) * xs.c; ++nc) {
            const double g = dy[nc] * inv;
            for (long long i = 0; i < plane; ++i) dx[nc * plane + i] += g;
        }
    }
};

struct Up2xNode final : OpNode {
    void backward(TensorImpl& out) override {
        Tensor& x = inputs[0];
        if (!x.wants_grad()) return;
        x.impl()->ensure_grad();
        const Shape& xs = x.shape();
        const int oh = out.shape.h, ow = out.shape.w;
        const double* dy = out.grad.data();
        double* dx = x.impl()->grad.data();
        for (long long nc = 0; nc < static_cast<long long>(xs.n) * xs.c; ++nc) {
            const double* dyp = dy + nc * oh * ow;
            double* dxp = dx + nc * xs.h * xs.w;
            for (int y = 0; y < xs.h; ++y)
                for (int x2 = 0; x2 < xs.w; ++x2)
                    dxp[y * xs.w + x2] += (dyp[(2 * y) * ow + 2 * x2] + dyp[(2 * y) * ow + 2 * x2 + 1]) +
                                          (dyp[(2 * y + 1) * ow + 2 * x2] + dyp[(2 * y + 1) * ow + 2 * x2 + 1]);
        }
    }
};

struct Down2xNode final : OpNode {
    void backward(TensorImpl& out) override {
        Tensor& x = inputs[0];
        if (!x.wants_grad()) return;
        x.impl()->ensure_grad();
        const Shape& xs = x.shape();
        const int oh = out.shape.h, ow = out.shape.w;
        const double* dy = out.grad.data();
        double* dx = x.impl()->grad.data();
        for (long long nc = 0; nc < static_cast<long long>(xs.n) * xs.c; ++nc) {
            const double* dyp = dy + nc * oh * ow;
            double* dxp = dx + nc * xs.h * xs.w;
            for (int y = 0; y < oh; ++y)
                for (int x2 = 0; x2 < ow; ++x2) {
                    const double g = dyp[y * ow + x2] * 0.25;
                    dxp[(2 * y) * xs.w + 2 * x2] += g;
                    dxp[(2 * y) * xs.w + 2 * x2 + 1] += g;
                    dxp[(2 * y + 1) * xs.w + 2 * x2] += g;
                    dxp[(2 * y + 1) * xs.w + 2 * x2 + 1] += g;
                }
        }
    }
};

}  // namespace

Tensor concat_channels(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw ShapeError("concat_channels: needs at least one input");
    const Shape& s0 = xs[0].shape();
    int ctotal = 0;
    for (const Tensor& x : xs) {
        const Shape& s = x.shape();
        if (s.n != s0.n || s.h != s0.h || s.w != s0.w)
            throw ShapeError("concat_channels: spatial/batch mismatch " + s.str() + " vs " + s0.str());
        ctotal += s.c;
    }
    Tensor y = Tensor::zeros({s0.n, ctotal, s0.h, s0.w});
    const long long plane = static_cast<long long>(s0.h) * s0.w;
    int coff = 0;
    for (const Tensor& x : xs) {
        const Shape& s = x.shape();
        for (int img = 0; img < s.n; ++img) {
            const double* src = x.data() + static_cast<long long>(img) * s.c * plane;
            double* dst = y.data() + (static_cast<long long>(img) * ctotal + coff) * plane;
            std::memcpy(dst, src, sizeof(double) * s.c * plane);
        }
        coff += s.c;
    }
    bool rec = grad_enabled();
    if (rec) {
        rec = false;
        for (const Tensor& x : xs) rec = rec || x.wants_grad();
    }
    if (rec) {
        auto node = std::make_shared<ConcatNode>();
        node->kind = "concat_channels";
        node->inputs = xs;
        attach(y, std::move(node));
    }
    return y;
}

Tensor bias_add(const Tensor& x, const Tensor& b) {
    const Shape& xs = x.shape();
    const Shape want{1, xs.c, 1, 1};
    if (!(b.shape() == want))
        throw ShapeError("bias_add: bias " + b.shape().str() + " does not match " + want.str());
    Tensor y = Tensor::zeros(xs);
    const long long plane = static_cast<long long>(xs.h) * xs.w;
    for (int img = 0; img < xs.n; ++img)
        for (int c = 0; c < xs.c; ++c) {
            const double bv = b.data()[c];
            const long long off = (static_cast<long long>(img) * xs.c + c) * plane;
            const double* src = x.data() + off;
            double* dst = y.data() + off;
            for (long long i = 0; i < plane; ++i) dst[i] = src[i] + bv;
        }
    if (should_record({&x, &b})) {
        auto node = std::make_shared<BiasAddNode>();
        node->kind = "bias_add";
        node->inputs = {x, b};
        attach(y, std::move(node));
    }
    return y;
}

Tensor mul_broadcast(const Tensor& x, const Tensor& s) {
    const Shape& xs = x.shape();
    const Shape want{xs.n, xs.c, 1, 1};
    if (!(s.shape() == want))
        throw ShapeError("mul_broadcast: scale " + s.shape().str() + " does not match " + want.str());
    Tensor y = Tensor::zeros(xs);
    const long long plane = static_cast<long long>(xs.h) * xs.w;
    for (long long nc = 0; nc < static_cast<long long>(xs.n) * xs.c; ++nc) {
        const double sv = s.data()[nc];
        const double* src = x.data() + nc * plane;
        double* dst = y.data() + nc * plane;
        for (long long i = 0; i < plane; ++i) dst[i] = src[i] * sv;
    }
    if (should_record({&x, &s})) {
        auto node = std::make_shared<MulBroadcastNode>();
        node->kind = "mul_broadcast";
        node->inputs = {x, s};
        attach(y, std::move(node));
    }
    return y;
}

Tensor global_avg_pool(const Tensor& x) {
    const Shape& xs = x.shape();
    if (xs.h < 1 || xs.w < 1) throw ShapeError("global_avg_pool: empty spatial extents " + xs.str());
    Tensor y = Tensor::zeros({xs.n, xs.c, 1, 1});
    const long long plane = static_cast<long long>(xs.h) * xs.w;
    const double inv = 1.0 / static_cast<double>(plane);
    for (long long nc = 0; nc < static_cast<long long>(xs.n) * xs.c; ++nc) {
        const double* src = x.data() + nc * plane;
        double acc = 0.0;
        for (long long i = 0; i < plane; ++i) acc += src[i];
        y.data()[nc] = acc * inv;
    }
    if (should_record({&x})) {
        auto node = std::make_shared<GapNode>();
        node->kind = "global_avg_pool";
        node->inputs = {x};
        attach(y, std::move(node));
    }
    return y;
}

Tensor upsample2x(const Tensor& x) {
    const Shape& xs = x.shape();
    Tensor y = Tensor::zeros({xs.n, xs.c, xs.h * 2, xs.w * 2});
    const int ow = xs.w * 2;
    for (long long nc = 0; nc < static_cast<long long>(xs.n) * xs.c; ++nc) {
        const double* src = x.data() + nc * xs.h * xs.w;
        double* dst = y.data() + nc * 4 * xs.h * xs.w;
        for (int yy = 0; yy < xs.h; ++yy)
            for (int xx = 0; xx < xs.w; ++xx) {
                const double v = src[yy * xs.w + xx];
                double* d = dst + (2 * yy) * ow + 2 * xx;
                d[0] = v;
                d[1] = v;
                d[ow] = v;
                d[ow + 1] = v;
            }
    }
    if (should_record({&x})) {
        auto node = std::make_shared<Up2xNode>();
        node->kind = "upsample2x";
        node->inputs = {x};
        attach(y, std::move(node));
    }
    return y;
}

Tensor downsample2x(const Tensor& x) {
    const Shape& xs = x.shape();
    if (xs.h % 2 != 0 || xs.w % 2 != 0)
        throw ShapeError("downsample2x: odd spatial extents " + xs.str());
    Tensor y = Tensor::zeros({xs.n, xs.c, xs.h / 2, xs.w / 2});
    const int oh = xs.h / 2, ow = xs.w / 2;
    for (long long nc = 0; nc < static_cast<long long>(xs.n) * xs.c; ++nc) {
        const double* src = x.data() + nc * xs.h * xs.w;
        double* dst = y.data() + nc * oh * ow;
        for (int yy = 0; yy < oh; ++yy)
            for (int xx = 0; xx < ow; ++xx) {
                const double* s = src + (2 * yy) * xs.w + 2 * xx;
                // pairwise sum keeps down(up(x)) an exact identity
                dst[yy * ow + xx] = ((s[0] + s[1]) + (s[xs.w] + s[xs.w + 1])) * 0.25;
            }
    }
    if (should_record({&x})) {
        auto node = std::make_shared<Down2xNode>();
        node->kind = "downsample2x";
        node->inputs = {x};
        attach(y, std::move(node));
    }
    return y;
}

// --- gather / reductions -----------------------------------------------------

namespace {

struct GatherNode final : OpNode {
    std::vector<int64_t> indices;
    void backward(TensorImpl& out) override {
        Tensor& x = inputs[0];
        if (!x.wants_grad()) return;
        x.impl()->ensure_grad();
        double* dx = x.impl()->grad.data();
        const double* dy = out.grad.data();
        for (size_t k = 0; k < indices.size(); ++k) dx[indices[k]] += dy[k];
    }
};

struct SumNode final : OpNode {
    void backward(TensorImpl& out) override {
        Tensor& x = inputs[0];
        if (!x.wants_grad()) return;
        x.impl()->ensure_grad();
        double* dx = x.impl()->grad.data();
        const double g = out.grad[0];
        for (long long i = 0; i < x.numel(); ++i) dx[i] += g;
    }
};

struct BceNode final : OpNode {
    std::vector<double> target, weight;
    void backward(TensorImpl& out) override {
        Tensor& x = inputs[0];
        if (!x.wants_grad()) return;
        x.impl()->ensure_grad();
        double* dx = x.impl()->grad.data();
        const double* xd = x.data();
        const double g = out.grad[0];
        for (long long i = 0; i < x.numel(); ++i) {
            if (weight[i] == 0.0) continue;
            dx[i] += g * weight[i] * (sigmoid_value(xd[i]) - target[i]);
        }
    }
};

struct DropConnectNode final : OpNode {
    std::vector<double> scales;  // one per batch sample
    void backward(TensorImpl& out) override {
        Tensor& x = inputs[0];
        if (!x.wants_grad()) return;
        x.impl()->ensure_grad();
        const Shape& xs = x.shape();
        const long long per = static_cast<long long>(xs.c) * xs.h * xs.w;
        double* dx = x.impl()->grad.data();
        const double* dy = out.grad.data();
        for (int img = 0; img < xs.n; ++img) {
            const double sc = scales[img];
            if (sc == 0.0) continue;
            for (long long i = 0; i < per; ++i) dx[img * per + i] += dy[img * per + i] * sc;
        }
    }
};

}  // namespace

Tensor gather_flat(const Tensor& x, std::vector<int64_t> indices) {
    const long long n = x.numel();
    for (int64_t idx : indices)
        if (idx < 0 || idx >= n)
            throw ShapeError("gather_flat: index " + std::to_string(idx) + " out of range for " +
                             std::to_string(n) + " elements");
    Tensor y = Tensor::zeros({1, 1, 1, static_cast<int>(indices.size())});
    for (size_t k = 0; k < indices.size(); ++k) y.data()[k] = x.data()[indices[k]];
    if (should_record({&x})) {
        auto node = std::make_shared<GatherNode>();
        node->kind = "gather";
        node->inputs = {x};
        node->indices = std::move(indices);
        attach(y, std::move(node));
    }
    return y;
}

Tensor sum_all(const Tensor& x) {
    double acc = 0.0;
    const double* xd = x.data();
    for (long long i = 0; i < x.numel(); ++i) acc += xd[i];
    Tensor y = Tensor::scalar(acc);
    if (should_record({&x})) {
        auto node = std::make_shared<SumNode>();
        node->kind = "sum";
        node->inputs = {x};
        attach(y, std::move(node));
    }
    return y;
}

Tensor bce_with_logits(const Tensor& x, const std::vector<double>& target,
                       const std::vector<double>& weight) {
    const size_t n = static_cast<size_t>(x.numel());
    if (target.size() != n || weight.size() != n)
        throw ShapeError("bce_with_logits: target/weight size must match tensor (" + std::to_string(n) + ")");
    const double* xd = x.data();
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        if (weight[i] == 0.0) continue;
        const double v = xd[i];
        acc += weight[i] * (std::max(v, 0.0) - v * target[i] + std::log1p(std::exp(-std::abs(v))));
    }
    Tensor y = Tensor::scalar(acc);
    if (should_record({&x})) {
        auto node = std::make_shared<BceNode>();
        node->kind = "bce_with_logits";
        node->inputs = {x};
        node->target = target;
        node->weight = weight;
        attach(y, std::move(node));
    }
    return y;
}

Tensor drop_connect(const Tensor& x, double drop_prob, bool training, Rng& rng) {
    if (drop_prob < 0.0 || drop_prob >= 1.0)
        throw InputError("drop_connect: drop_prob must lie in [0,1), got " + std::to_string(drop_prob));
    if (!training || drop_prob == 0.0) return x;

    const Shape& xs = x.shape();
    std::vector<double> scales(xs.n);
    const double keep_scale = 1.0 / (1.0 - drop_prob);
    for (int img = 0; img < xs.n; ++img) scales[img] = rng.bernoulli(drop_prob) ? 0.0 : keep_scale;

    Tensor y = Tensor::zeros(xs);
    const long long per = static_cast<long long>(xs.c) * xs.h * xs.w;
    for (int img = 0; img < xs.n; ++img) {
        const double sc = scales[img];
        const double* src = x.data() + img * per;
        double* dst = y.data() + img * per;
        for (long long i = 0; i < per; ++i) dst[i] = src[i] * sc;
    }
    if (should_record({&x})) {
        auto node = std::make_shared<DropConnectNode>();
        node->kind = "drop_connect";
        node->inputs = {x};
        node->scales = std::move(scales);
        attach(y, std::move(node));
    }
    return y;
}

}  // namespace active
