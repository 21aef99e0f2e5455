#include "ocda/tinyseg.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "ocda/errors.hpp"
#include "ocda/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace ocda {

namespace {

constexpr double kLogGuard = 1e-12;

double guarded_log(double p) { return std::log(std::max(p, kLogGuard)); }

// Channel-major planes: plane c occupies [c*H*W, (c+1)*H*W).
using Planes = std::vector<double>;

struct LayerShapes {
    int in_ch, out_ch;
};

std::vector<LayerShapes> layer_shapes(const Architecture& arch) {
    std::vector<LayerShapes> shapes;
    int in = arch.in_channels;
    for (int h : arch.hidden) {
        shapes.push_back({in, h});
        in = h;
    }
    shapes.push_back({in, arch.num_classes});
    return shapes;
}

// z[o] += w * shifted a[i]; the shift bounds keep every access in range.
void conv_same_forward(const double* a, int in_ch, const double* w, const double* b, double* z,
                       int out_ch, int H, int W, int K) {
    const int pad = K / 2;
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    for (int o = 0; o < out_ch; ++o) {
        double* zo = z + o * hw;
        std::fill(zo, zo + hw, b[o]);
        for (int i = 0; i < in_ch; ++i) {
            const double* ai = a + i * hw;
            const double* wo = w + ((static_cast<std::size_t>(o) * in_ch + i) * K * K);
            for (int ky = 0; ky < K; ++ky) {
                const int dy = ky - pad;
                const int y_lo = std::max(0, -dy);
                const int y_hi = std::min(H, H - dy);
                for (int kx = 0; kx < K; ++kx) {
                    const int dx = kx - pad;
                    const int x_lo = std::max(0, -dx);
                    const int x_hi = std::min(W, W - dx);
                    const double wv = wo[ky * K + kx];
                    if (wv == 0.0) continue;
                    for (int y = y_lo; y < y_hi; ++y) {
                        double* zraw = zo + static_cast<std::size_t>(y) * W;
                        const double* araw = ai + static_cast<std::size_t>(y + dy) * W + dx;
                        for (int x = x_lo; x < x_hi; ++x) zraw[x] += wv * araw[x];
                    }
                }
            }
        }
    }
}

// da[i] += w * shifted dz[o]  (transposed convolution).
void conv_same_backward_data(const double* dz, int out_ch, const double* w, double* da, int in_ch,
                             int H, int W, int K) {
    const int pad = K / 2;
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    for (int i = 0; i < in_ch; ++i) {
        double* dai = da + i * hw;
        std::fill(dai, dai + hw, 0.0);
        for (int o = 0; o < out_ch; ++o) {
            const double* dzo = dz + o * hw;
            const double* wo = w + ((static_cast<std::size_t>(o) * in_ch + i) * K * K);
            for (int ky = 0; ky < K; ++ky) {
                const int dy = ky - pad;
                // a index (y+dy) contributes to z index y: da[y'] += w*dz[y'-dy]
                const int y_lo = std::max(0, dy);
                const int y_hi = std::min(H, H + dy);
                for (int kx = 0; kx < K; ++kx) {
                    const int dx = kx - pad;
                    const int x_lo = std::max(0, dx);
                    const int x_hi = std::min(W, W + dx);
                    const double wv = wo[ky * K + kx];
                    if (wv == 0.0) continue;
                    for (int y = y_lo; y < y_hi; ++y) {
                        double* draw = dai + static_cast<std::size_t>(y) * W;
                        const double* zraw = dzo + static_cast<std::size_t>(y - dy) * W - dx;
                        for (int x = x_lo; x < x_hi; ++x) draw[x] += wv * zraw[x];
                    }
                }
            }
        }
    }
}

void conv_same_backward_weights(const double* dz, int out_ch, const double* a, int in_ch,
                                double* dw, double* db, int H, int W, int K) {
    const int pad = K / 2;
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    for (int o = 0; o < out_ch; ++o) {
        const double* dzo = dz + o * hw;
        double bs = 0.0;
        for (std::size_t p = 0; p < hw; ++p) bs += dzo[p];
        db[o] += bs;
        for (int i = 0; i < in_ch; ++i) {
            const double* ai = a + i * hw;
            double* dwo = dw + ((static_cast<std::size_t>(o) * in_ch + i) * K * K);
            for (int ky = 0; ky < K; ++ky) {
                const int dy = ky - pad;
                const int y_lo = std::max(0, -dy);
                const int y_hi = std::min(H, H - dy);
                for (int kx = 0; kx < K; ++kx) {
                    const int dx = kx - pad;
                    const int x_lo = std::max(0, -dx);
                    const int x_hi = std::min(W, W - dx);
                    double s = 0.0;
                    for (int y = y_lo; y < y_hi; ++y) {
                        const double* zraw = dzo + static_cast<std::size_t>(y) * W;
                        const double* araw = ai + static_cast<std::size_t>(y + dy) * W + dx;
                        for (int x = x_lo; x < x_hi; ++x) s += zraw[x] * araw[x];
                    }
                    dwo[ky * K + kx] += s;
                }
            }
        }
    }
}

Planes image_to_planes(const Image& img) {
    const int H = img.height, W = img.width;
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    Planes planes(3 * hw);
    for (std::size_t p = 0; p < hw; ++p) {
        planes[0 * hw + p] = img.data[p * 3 + 0] / 255.0;
        planes[1 * hw + p] = img.data[p * 3 + 1] / 255.0;
        planes[2 * hw + p] = img.data[p * 3 + 2] / 255.0;
    }
    return planes;
}

struct ForwardCache {
    int H = 0, W = 0;
    Planes input;
    std::vector<Planes> zs;    // pre-activations, one per layer
    std::vector<Planes> acts;  // post-ReLU activations for hidden layers
    PredictionMap pred;
};

void check_input(const NetworkParams& params, const Image& img) {
    const int rf = params.arch.receptive_field();
    if (img.width < rf || img.height < rf) {
        throw DimensionMismatchError("forward: image smaller than the receptive field");
    }
}

ForwardCache run_forward(const NetworkParams& params, const Image& img) {
    check_input(params, img);
    const Architecture& arch = params.arch;
    const auto shapes = layer_shapes(arch);
    const int H = img.height, W = img.width, K = arch.kernel;
    const std::size_t hw = static_cast<std::size_t>(H) * W;

    ForwardCache cache;
    cache.H = H;
    cache.W = W;
    cache.input = image_to_planes(img);
    const Planes* a = &cache.input;
    for (std::size_t l = 0; l < shapes.size(); ++l) {
        Planes z(static_cast<std::size_t>(shapes[l].out_ch) * hw);
        conv_same_forward(a->data(), shapes[l].in_ch, params.tensors[2 * l].data.data(),
                          params.tensors[2 * l + 1].data.data(), z.data(), shapes[l].out_ch, H, W,
                          K);
        cache.zs.push_back(std::move(z));
        if (l + 1 < shapes.size()) {
            Planes act = cache.zs.back();
            for (double& v : act) v = std::max(v, 0.0);
            cache.acts.push_back(std::move(act));
            a = &cache.acts.back();
        }
    }

    // pixelwise softmax over the last layer's channels
    const int C = arch.num_classes;
    const Planes& logits = cache.zs.back();
    cache.pred = PredictionMap(W, H, C);
    for (std::size_t p = 0; p < hw; ++p) {
        double m = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < C; ++c) m = std::max(m, logits[c * hw + p]);
        double sum = 0.0;
        for (int c = 0; c < C; ++c) {
            const double e = std::exp(logits[c * hw + p] - m);
            cache.pred.data[p * C + c] = e;
            sum += e;
        }
        for (int c = 0; c < C; ++c) cache.pred.data[p * C + c] /= sum;
    }
    return cache;
}

// Backpropagates pixel-major dL/dlogits through the cached network.
std::vector<Tensor> backprop(const NetworkParams& params, const ForwardCache& cache,
                             const std::vector<double>& dlogits_pixel_major) {
    const Architecture& arch = params.arch;
    const auto shapes = layer_shapes(arch);
    const int H = cache.H, W = cache.W, K = arch.kernel, C = arch.num_classes;
    const std::size_t hw = static_cast<std::size_t>(H) * W;

    std::vector<Tensor> grads = zero_grads_like(params);

    Planes dz(static_cast<std::size_t>(C) * hw);
    for (std::size_t p = 0; p < hw; ++p) {
        for (int c = 0; c < C; ++c) dz[c * hw + p] = dlogits_pixel_major[p * C + c];
    }

    for (int l = static_cast<int>(shapes.size()) - 1; l >= 0; --l) {
        const Planes& a_in = l == 0 ? cache.input : cache.acts[l - 1];
        conv_same_backward_weights(dz.data(), shapes[l].out_ch, a_in.data(), shapes[l].in_ch,
                                   grads[2 * l].data.data(), grads[2 * l + 1].data.data(), H, W,
                                   K);
        if (l == 0) break;
        Planes da(static_cast<std::size_t>(shapes[l].in_ch) * hw);
        conv_same_backward_data(dz.data(), shapes[l].out_ch, params.tensors[2 * l].data.data(),
                                da.data(), shapes[l].in_ch, H, W, K);
        const Planes& z_prev = cache.zs[l - 1];
        for (std::size_t j = 0; j < da.size(); ++j) {
            if (z_prev[j] <= 0.0) da[j] = 0.0;
        }
        dz = std::move(da);
    }
    return grads;
}

void check_same_shape(const PredictionMap& a, const PredictionMap& b, const char* what) {
    if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
        throw DimensionMismatchError(std::string(what) + ": prediction shape mismatch");
    }
}

void check_label_shape(const PredictionMap& p, const LabelMap& l, const char* what) {
    if (p.width != l.width || p.height != l.height) {
        throw DimensionMismatchError(std::string(what) + ": label shape mismatch");
    }
}

// dL/dlogits for cross-entropy against hard labels.
std::vector<double> ce_dlogits(const PredictionMap& pred, const LabelMap& label,
                               std::size_t n_valid) {
    const int C = pred.channels;
    std::vector<double> d(pred.data.size(), 0.0);
    const std::size_t n = pred.pixel_count();
    for (std::size_t p = 0; p < n; ++p) {
        const std::uint8_t y = label.data[p];
        if (y == kIgnoreLabel) continue;
        for (int c = 0; c < C; ++c) {
            d[p * C + c] = (pred.data[p * C + c] - (c == y ? 1.0 : 0.0)) / n_valid;
        }
    }
    return d;
}

}  // namespace

void Architecture::validate() const {
    if (num_classes < 2) throw BadArchitectureError("architecture: needs num_classes >= 2");
    if (in_channels < 1) throw BadArchitectureError("architecture: needs in_channels >= 1");
    if (kernel < 1 || kernel % 2 == 0) {
        throw BadArchitectureError("architecture: kernel must be odd and >= 1");
    }
    for (int h : hidden) {
        if (h < 1) throw BadArchitectureError("architecture: hidden widths must be >= 1");
    }
}

std::size_t NetworkParams::parameter_count() const {
    std::size_t n = 0;
    for (const Tensor& t : tensors) n += t.size();
    return n;
}

NetworkParams init_network(const Architecture& arch, std::uint64_t seed) {
    arch.validate();
    NetworkParams params;
    params.arch = arch;
    RngEngine rng = make_stream(seed, 0x696e6974ULL);  // "init"
    const auto shapes = layer_shapes(arch);
    const int K = arch.kernel;
    for (std::size_t l = 0; l < shapes.size(); ++l) {
        Tensor w;
        w.name = "conv" + std::to_string(l) + ".weight";
        w.shape = {shapes[l].out_ch, shapes[l].in_ch, K, K};
        w.data.resize(static_cast<std::size_t>(shapes[l].out_ch) * shapes[l].in_ch * K * K);
        const double stddev = std::sqrt(2.0 / (static_cast<double>(shapes[l].in_ch) * K * K));
        for (double& v : w.data) v = stddev * gaussian(rng);
        Tensor b;
        b.name = "conv" + std::to_string(l) + ".bias";
        b.shape = {shapes[l].out_ch};
        b.data.assign(shapes[l].out_ch, 0.0);
        params.tensors.push_back(std::move(w));
        params.tensors.push_back(std::move(b));
    }
    return params;
}

std::vector<Tensor> zero_grads_like(const NetworkParams& params) {
    std::vector<Tensor> grads;
    grads.reserve(params.tensors.size());
    for (const Tensor& t : params.tensors) {
        Tensor g;
        g.name = t.name;
        g.shape = t.shape;
        g.data.assign(t.size(), 0.0);
        grads.push_back(std::move(g));
    }
    return grads;
}

void accumulate_grads(std::vector<Tensor>& dst, const std::vector<Tensor>& src, double scale) {
    if (dst.size() != src.size()) throw ShapeMismatchError("accumulate_grads: tensor count");
    for (std::size_t t = 0; t < dst.size(); ++t) {
        if (dst[t].shape != src[t].shape) throw ShapeMismatchError("accumulate_grads: shape");
        for (std::size_t j = 0; j < dst[t].data.size(); ++j) {
            dst[t].data[j] += scale * src[t].data[j];
        }
    }
}

PredictionMap forward(const NetworkParams& params, const Image& img) {
    return run_forward(params, img).pred;
}

double cross_entropy_loss(const PredictionMap& pred, const LabelMap& label) {
    check_label_shape(pred, label, "cross_entropy");
    const int C = pred.channels;
    double loss = 0.0;
    std::size_t n_valid = 0;
    const std::size_t n = pred.pixel_count();
    for (std::size_t p = 0; p < n; ++p) {
        const std::uint8_t y = label.data[p];
        if (y == kIgnoreLabel) continue;
        if (y >= C) throw DimensionMismatchError("cross_entropy: label class out of range");
        loss -= guarded_log(pred.data[p * C + y]);
        ++n_valid;
    }
    if (n_valid == 0) throw AllIgnoredError("cross_entropy: no valid pixels");
    return loss / static_cast<double>(n_valid);
}

LossGrads cross_entropy(const NetworkParams& params, const Image& img, const LabelMap& label) {
    ForwardCache cache = run_forward(params, img);
    LossGrads out;
    out.loss = cross_entropy_loss(cache.pred, label);  // throws AllIgnored if needed
    std::size_t n_valid = 0;
    for (std::uint8_t y : label.data) n_valid += (y != kIgnoreLabel);
    out.grads = backprop(params, cache, ce_dlogits(cache.pred, label, n_valid));
    return out;
}

double kl_loss(const PredictionMap& student, const PredictionMap& target, KlDirection dir) {
    check_same_shape(student, target, "kl_divergence");
    double loss = 0.0;
    const std::size_t n = student.pixel_count();
    for (std::size_t j = 0; j < student.data.size(); ++j) {
        const double s = student.data[j];
        const double t = target.data[j];
        if (dir == KlDirection::TargetToStudent) {
            if (t > 0.0) loss += t * (guarded_log(t) - guarded_log(s));
        } else {
            if (s > 0.0) loss += s * (guarded_log(s) - guarded_log(t));
        }
    }
    return std::max(loss, 0.0) / static_cast<double>(n);
}

LossGrads kl_divergence(const NetworkParams& params, const Image& img,
                        const PredictionMap& target, KlDirection dir) {
    ForwardCache cache = run_forward(params, img);
    check_same_shape(cache.pred, target, "kl_divergence");
    LossGrads out;
    out.loss = kl_loss(cache.pred, target, dir);

    const int C = cache.pred.channels;
    const std::size_t n = cache.pred.pixel_count();
    std::vector<double> dlogits(cache.pred.data.size(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(n);
    if (dir == KlDirection::TargetToStudent) {
        for (std::size_t j = 0; j < dlogits.size(); ++j) {
            dlogits[j] = (cache.pred.data[j] - target.data[j]) * inv_n;
        }
    } else {
        for (std::size_t p = 0; p < n; ++p) {
            double pixel_kl = 0.0;
            for (int c = 0; c < C; ++c) {
                const double s = cache.pred.data[p * C + c];
                if (s > 0.0) {
                    pixel_kl += s * (guarded_log(s) - guarded_log(target.data[p * C + c]));
                }
            }
            for (int c = 0; c < C; ++c) {
                const double s = cache.pred.data[p * C + c];
                const double r = guarded_log(s) - guarded_log(target.data[p * C + c]);
                dlogits[p * C + c] = s * (r - pixel_kl) * inv_n;
            }
        }
    }
    out.grads = backprop(params, cache, dlogits);
    return out;
}

double l1_loss(const PredictionMap& a, const PredictionMap& b) {
    check_same_shape(a, b, "l1_consistency");
    double s = 0.0;
    for (std::size_t j = 0; j < a.data.size(); ++j) s += std::abs(a.data[j] - b.data[j]);
    return s / static_cast<double>(a.data.size());
}

LossGrads l1_consistency(const NetworkParams& params, const Image& img_a, const Image& img_b,
                         bool grad_through_a, bool grad_through_b) {
    ForwardCache cache_a = run_forward(params, img_a);
    ForwardCache cache_b = run_forward(params, img_b);
    check_same_shape(cache_a.pred, cache_b.pred, "l1_consistency");
    LossGrads out;
    out.loss = l1_loss(cache_a.pred, cache_b.pred);
    out.grads = zero_grads_like(params);

    const int C = cache_a.pred.channels;
    const std::size_t n = cache_a.pred.pixel_count();
    const double inv = 1.0 / static_cast<double>(cache_a.pred.data.size());

    // d(mean|a-b|)/da chained through the softmax of each pass.
    auto head_dlogits = [&](const ForwardCache& cache, double side) {
        std::vector<double> dlogits(cache.pred.data.size(), 0.0);
        for (std::size_t p = 0; p < n; ++p) {
            double dot = 0.0;
            for (int c = 0; c < C; ++c) {
                const double diff = cache_a.pred.data[p * C + c] - cache_b.pred.data[p * C + c];
                const double g = side * inv * (diff > 0.0 ? 1.0 : diff < 0.0 ? -1.0 : 0.0);
                dlogits[p * C + c] = g;  // temporarily dL/dsoftmax
                dot += g * cache.pred.data[p * C + c];
            }
            for (int c = 0; c < C; ++c) {
                const double s = cache.pred.data[p * C + c];
                dlogits[p * C + c] = s * (dlogits[p * C + c] - dot);
            }
        }
        return dlogits;
    };

    if (grad_through_a) {
        accumulate_grads(out.grads, backprop(params, cache_a, head_dlogits(cache_a, 1.0)), 1.0);
    }
    if (grad_through_b) {
        accumulate_grads(out.grads, backprop(params, cache_b, head_dlogits(cache_b, -1.0)), 1.0);
    }
    return out;
}

double poly_lr(std::int64_t iter, const OptimizerState& state) {
    if (state.max_iter < 1) throw IterOutOfRangeError("poly_lr: max_iter must be >= 1");
    if (iter < 0 || iter > state.max_iter) {
        throw IterOutOfRangeError("poly_lr: iter outside [0, max_iter]");
    }
    const double frac = 1.0 - static_cast<double>(iter) / static_cast<double>(state.max_iter);
    return state.lr0 * std::pow(frac, state.poly_exponent);
}

void sgd_step(NetworkParams& params, const std::vector<Tensor>& grads, OptimizerState& state) {
    if (grads.size() != params.tensors.size()) {
        throw ShapeMismatchError("sgd_step: gradient tensor count mismatch");
    }
    if (state.velocity.empty()) state.velocity = zero_grads_like(params);
    const double lr = poly_lr(state.iter, state);
    for (std::size_t t = 0; t < params.tensors.size(); ++t) {
        Tensor& theta = params.tensors[t];
        const Tensor& g = grads[t];
        Tensor& v = state.velocity[t];
        if (g.shape != theta.shape) throw ShapeMismatchError("sgd_step: shape mismatch");
        for (std::size_t j = 0; j < theta.data.size(); ++j) {
            v.data[j] = state.momentum * v.data[j] + g.data[j];
            theta.data[j] -= lr * v.data[j] + lr * state.weight_decay * theta.data[j];
            if (!std::isfinite(theta.data[j])) {
                throw NonFiniteError("sgd_step: non-finite parameter update in " + theta.name);
            }
        }
    }
    ++state.iter;
}

void ema_update(NetworkParams& momentum_params, const NetworkParams& student_params,
                double lambda) {
    if (lambda < 0.0 || lambda > 1.0) throw BadLambdaError("ema_update: lambda outside [0,1]");
    if (momentum_params.tensors.size() != student_params.tensors.size()) {
        throw ShapeMismatchError("ema_update: tensor count mismatch");
    }
    for (std::size_t t = 0; t < momentum_params.tensors.size(); ++t) {
        Tensor& m = momentum_params.tensors[t];
        const Tensor& s = student_params.tensors[t];
        if (m.shape != s.shape) throw ShapeMismatchError("ema_update: shape mismatch");
        for (std::size_t j = 0; j < m.data.size(); ++j) {
            m.data[j] = lambda * m.data[j] + (1.0 - lambda) * s.data[j];
        }
    }
}

LabelMap argmax_label(const PredictionMap& pred) {
    LabelMap out(pred.width, pred.height);
    const int C = pred.channels;
    const std::size_t n = pred.pixel_count();
    for (std::size_t p = 0; p < n; ++p) {
        int best = 0;
        double best_v = pred.data[p * C];
        for (int c = 1; c < C; ++c) {
            if (pred.data[p * C + c] > best_v) {  // strict: ties keep the lower class
                best_v = pred.data[p * C + c];
                best = c;
            }
        }
        out.data[p] = static_cast<std::uint8_t>(best);
    }
    return out;
}

LabelMap pseudo_label(const NetworkParams& params, const Image& img) {
    return argmax_label(forward(params, img));
}

double prediction_confidence(const PredictionMap& pred) {
    double s = 0.0;
    for (double p : pred.data) {
        if (p > 0.0) s += p * guarded_log(p);
    }
    return std::min(s, 0.0);
}

namespace {

void write_raw(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}
template <typename T>
void write_pod(std::ostream& os, T v) {
    write_raw(os, &v, sizeof(v));
}
void write_tensor(std::ostream& os, const Tensor& t) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.name.size()));
    write_raw(os, t.name.data(), t.name.size());
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) write_pod<std::int32_t>(os, d);
    write_raw(os, t.data.data(), t.data.size() * sizeof(double));
}

void read_raw(std::istream& is, void* p, std::size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!is) throw IoError("checkpoint: truncated file");
}
template <typename T>
T read_pod(std::istream& is) {
    T v;
    read_raw(is, &v, sizeof(v));
    return v;
}
Tensor read_tensor(std::istream& is) {
    Tensor t;
    const auto name_len = read_pod<std::uint32_t>(is);
    t.name.resize(name_len);
    read_raw(is, t.name.data(), name_len);
    const auto ndim = read_pod<std::uint32_t>(is);
    t.shape.resize(ndim);
    std::size_t total = 1;
    for (std::uint32_t i = 0; i < ndim; ++i) {
        t.shape[i] = read_pod<std::int32_t>(is);
        total *= static_cast<std::size_t>(t.shape[i]);
    }
    t.data.resize(total);
    read_raw(is, t.data.data(), total * sizeof(double));
    return t;
}

constexpr char kMagic[8] = {'O', 'C', 'D', 'A', 'C', 'K', 'P', '1'};

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("checkpoint: cannot open for write: " + path);
    write_raw(os, kMagic, sizeof(kMagic));
    const Architecture& a = ckpt.params.arch;
    write_pod<std::int32_t>(os, a.in_channels);
    write_pod<std::int32_t>(os, a.kernel);
    write_pod<std::int32_t>(os, a.num_classes);
    write_pod<std::int32_t>(os, static_cast<std::int32_t>(a.hidden.size()));
    for (int h : a.hidden) write_pod<std::int32_t>(os, h);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.params.tensors.size()));
    for (const Tensor& t : ckpt.params.tensors) write_tensor(os, t);
    write_pod<double>(os, ckpt.opt.lr0);
    write_pod<double>(os, ckpt.opt.momentum);
    write_pod<double>(os, ckpt.opt.weight_decay);
    write_pod<double>(os, ckpt.opt.poly_exponent);
    write_pod<std::int64_t>(os, ckpt.opt.max_iter);
    write_pod<std::int64_t>(os, ckpt.opt.iter);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.opt.velocity.size()));
    for (const Tensor& t : ckpt.opt.velocity) write_tensor(os, t);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(ckpt.rng_state.size()));
    write_raw(os, ckpt.rng_state.data(), ckpt.rng_state.size());
    if (!os) throw IoError("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open for read: " + path);
    char magic[8];
    read_raw(is, magic, sizeof(magic));
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw IoError("checkpoint: bad magic in " + path);
    }
    Checkpoint ckpt;
    Architecture& a = ckpt.params.arch;
    a.in_channels = read_pod<std::int32_t>(is);
    a.kernel = read_pod<std::int32_t>(is);
    a.num_classes = read_pod<std::int32_t>(is);
    const auto nh = read_pod<std::int32_t>(is);
    a.hidden.resize(nh);
    for (std::int32_t i = 0; i < nh; ++i) a.hidden[i] = read_pod<std::int32_t>(is);
    const auto nt = read_pod<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < nt; ++i) ckpt.params.tensors.push_back(read_tensor(is));
    ckpt.opt.lr0 = read_pod<double>(is);
    ckpt.opt.momentum = read_pod<double>(is);
    ckpt.opt.weight_decay = read_pod<double>(is);
    ckpt.opt.poly_exponent = read_pod<double>(is);
    ckpt.opt.max_iter = read_pod<std::int64_t>(is);
    ckpt.opt.iter = read_pod<std::int64_t>(is);
    const auto nv = read_pod<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < nv; ++i) ckpt.opt.velocity.push_back(read_tensor(is));
    const auto nr = read_pod<std::uint32_t>(is);
    ckpt.rng_state.resize(nr);
    if (nr > 0) read_raw(is, ckpt.rng_state.data(), nr);
    return ckpt;
}

}  // namespace ocda
