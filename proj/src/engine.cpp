#include "plab/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace plab {

namespace {

std::vector<int> with_batch(const ActShape& s, int n) {
    if (s.spatial) return {n, s.h, s.w, s.c};
    return {n, s.d};
}

void dense_forward(const Tensor& x, const LayerParams& p, Tensor& y) {
    int n = x.shape[0], in = p.w.shape[0], out = p.w.shape[1];
    for (int i = 0; i < n; ++i) {
        const double* xr = &x.data[(std::size_t)i * in];
        double* yr = &y.data[(std::size_t)i * out];
        for (int o = 0; o < out; ++o) yr[o] = p.b[o];
        for (int j = 0; j < in; ++j) {
            double xv = xr[j];
            if (xv == 0.0) continue;
            const double* wr = &p.w.data[(std::size_t)j * out];
            for (int o = 0; o < out; ++o) yr[o] += xv * wr[o];
        }
    }
}

void dense_backward(const Tensor& x, const LayerParams& p, const Tensor& dy, Tensor& dx,
                    LayerParams& dp) {
    int n = x.shape[0], in = p.w.shape[0], out = p.w.shape[1];
    for (int i = 0; i < n; ++i) {
        const double* xr = &x.data[(std::size_t)i * in];
        const double* dyr = &dy.data[(std::size_t)i * out];
        double* dxr = &dx.data[(std::size_t)i * in];
        for (int o = 0; o < out; ++o) dp.b[o] += dyr[o];
        for (int j = 0; j < in; ++j) {
            const double* wr = &p.w.data[(std::size_t)j * out];
            double* dwr = &dp.w.data[(std::size_t)j * out];
            double acc = 0.0, xv = xr[j];
            for (int o = 0; o < out; ++o) {
                acc += wr[o] * dyr[o];
                dwr[o] += xv * dyr[o];
            }
            dxr[j] = acc;
        }
    }
}

void conv_forward(const Tensor& x, const LayerDesc& l, const LayerParams& p, Tensor& y) {
    int n = x.shape[0], h = x.shape[1], w = x.shape[2], ic = x.shape[3];
    int oh = y.shape[1], ow = y.shape[2], oc = y.shape[3];
    int k = l.ksize, st = l.stride, pad = l.pad;
    for (int i = 0; i < n; ++i) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double* yr = &y.data[y.idx4(i, oy, ox, 0)];
                for (int o = 0; o < oc; ++o) yr[o] = p.b[o];
            }
        }
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                // weight slice (ic, oc) at this kernel offset, gathered transposed
                // from (oc,ky,kx,ic) layout
                for (int oy = 0; oy < oh; ++oy) {
                    int iy = oy * st - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int ox = 0; ox < ow; ++ox) {
                        int ix = ox * st - pad + kx;
                        if (ix < 0 || ix >= w) continue;
                        const double* xr = &x.data[x.idx4(i, iy, ix, 0)];
                        double* yr = &y.data[y.idx4(i, oy, ox, 0)];
                        for (int o = 0; o < oc; ++o) {
                            const double* wr = &p.w.data[((std::size_t)o * k + ky) * k * ic +
                                                         (std::size_t)kx * ic];
                            double acc = 0.0;
                            for (int c = 0; c < ic; ++c) acc += xr[c] * wr[c];
                            yr[o] += acc;
                        }
                    }
                }
            }
        }
    }
}

void conv_backward(const Tensor& x, const LayerDesc& l, const LayerParams& p, const Tensor& dy,
                   Tensor& dx, LayerParams& dp) {
    int n = x.shape[0], h = x.shape[1], w = x.shape[2], ic = x.shape[3];
    int oh = dy.shape[1], ow = dy.shape[2], oc = dy.shape[3];
    int k = l.ksize, st = l.stride, pad = l.pad;
    for (int i = 0; i < n; ++i) {
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                const double* dyr = &dy.data[dy.idx4(i, oy, ox, 0)];
                for (int o = 0; o < oc; ++o) dp.b[o] += dyr[o];
            }
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                for (int oy = 0; oy < oh; ++oy) {
                    int iy = oy * st - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int ox = 0; ox < ow; ++ox) {
                        int ix = ox * st - pad + kx;
                        if (ix < 0 || ix >= w) continue;
                        const double* xr = &x.data[x.idx4(i, iy, ix, 0)];
                        double* dxr = &dx.data[dx.idx4(i, iy, ix, 0)];
                        const double* dyr = &dy.data[dy.idx4(i, oy, ox, 0)];
                        for (int o = 0; o < oc; ++o) {
                            double g = dyr[o];
                            if (g == 0.0) continue;
                            std::size_t wo = ((std::size_t)o * k + ky) * k * ic +
                                             (std::size_t)kx * ic;
                            const double* wr = &p.w.data[wo];
                            double* dwr = &dp.w.data[wo];
                            for (int c = 0; c < ic; ++c) {
                                dxr[c] += g * wr[c];
                                dwr[c] += g * xr[c];
                            }
                        }
                    }
                }
            }
        }
    }
}

void maxpool_forward(const Tensor& x, const LayerDesc& l, Tensor& y, std::vector<int>& argmax) {
    int n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3];
    int oh = y.shape[1], ow = y.shape[2];
    argmax.assign(y.numel(), 0);
    for (int i = 0; i < n; ++i)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                for (int ch = 0; ch < c; ++ch) {
                    double best = -1e300;
                    int best_idx = 0;
                    for (int py = 0; py < l.pool; ++py)
                        for (int px = 0; px < l.pool; ++px) {
                            int iy = oy * l.pool_stride + py;
                            int ix = ox * l.pool_stride + px;
                            if (iy >= h || ix >= w) continue;
                            std::size_t xi = x.idx4(i, iy, ix, ch);
                            if (x.data[xi] > best) {
                                best = x.data[xi];
                                best_idx = (int)xi;
                            }
                        }
                    std::size_t yi = y.idx4(i, oy, ox, ch);
                    y.data[yi] = best;
                    argmax[yi] = best_idx;
                }
}

void check_input(const NetworkSpec& spec, const Tensor& images) {
    auto shapes = spec.act_shapes();
    const ActShape& s0 = shapes[0];
    if (images.shape.empty()) throw Error("input: empty tensor");
    std::vector<int> expect = with_batch(s0, images.shape[0]);
    // a flat-input net also accepts (N,H,W,C) whose product matches
    if (images.shape != expect) {
        std::size_t per =
            images.numel() / static_cast<std::size_t>(images.shape[0]);
        if (s0.spatial || per != s0.numel())
            throw Error("input: shape " + images.shape_str() + " incompatible with network input");
    }
    if (!images.all_finite()) throw Error("input: non-finite value rejected");
}

} // namespace

Tensor forward(const NetworkSpec& spec, const ParameterSet& params, const Tensor& images,
               ForwardCache* cache) {
    check_input(spec, images);
    auto shapes = spec.act_shapes();
    int n = images.shape[0];

    ForwardCache local;
    ForwardCache& fc = cache ? *cache : local;
    fc.acts.clear();
    fc.pool_argmax.assign(spec.layers.size(), {});
    fc.acts.reserve(spec.layers.size() + 1);

    Tensor x = images;
    if (!shapes[0].spatial && images.ndim() != 2)
        x = Tensor({n, shapes[0].d}, images.data); // implicit flatten of spatial input
    fc.acts.push_back(x);

    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerDesc& l = spec.layers[i];
        const Tensor& in = fc.acts.back();
        Tensor out(with_batch(shapes[i + 1], n));
        switch (l.kind) {
            case LayerKind::Dense:
                dense_forward(in, params.layers[i], out);
                break;
            case LayerKind::Conv2d:
                conv_forward(in, l, params.layers[i], out);
                break;
            case LayerKind::Relu:
                for (std::size_t j = 0; j < in.numel(); ++j)
                    out.data[j] = in.data[j] > 0.0 ? in.data[j] : 0.0;
                break;
            case LayerKind::MaxPool:
                maxpool_forward(in, l, out, fc.pool_argmax[i]);
                break;
            case LayerKind::Flatten:
                out.data = in.data;
                break;
        }
        fc.acts.push_back(std::move(out));
    }
    return fc.acts.back();
}

namespace {

// softmax cross-entropy, mean over batch; fills dlogits = (softmax-onehot)/N
double xent_loss(const Tensor& logits, const std::vector<int>& labels, Tensor* dlogits) {
    int n = logits.shape[0], c = logits.shape[1];
    if ((int)labels.size() != n) throw Error("loss: label count != batch size");
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const double* lr = &logits.data[(std::size_t)i * c];
        int y = labels[i];
        if (y < 0 || y >= c) throw Error("loss: label out of range");
        double mx = lr[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, lr[j]);
        double se = 0.0;
        for (int j = 0; j < c; ++j) se += std::exp(lr[j] - mx);
        double lse = mx + std::log(se);
        total += lse - lr[y];
        if (dlogits) {
            double* dr = &dlogits->data[(std::size_t)i * c];
            for (int j = 0; j < c; ++j) dr[j] = std::exp(lr[j] - lse) / n;
            dr[y] -= 1.0 / n;
        }
    }
    return total / n;
}

} // namespace

EvalResult evaluate(const NetworkSpec& spec, const ParameterSet& params,
                    const LabeledBatch& batch) {
    if (batch.size() == 0) throw Error("evaluate: empty batch");
    Tensor logits = forward(spec, params, batch.images);
    double loss = xent_loss(logits, batch.labels, nullptr);
    return {loss, std::move(logits)};
}

BackpropResult backprop(const NetworkSpec& spec, const ParameterSet& params,
                        const LabeledBatch& batch, double logit_temperature) {
    if (batch.size() == 0) throw Error("backprop: empty batch");
    if (logit_temperature < 0.0) throw Error("backprop: logit_temperature must be >= 0");
    ForwardCache fc;
    Tensor logits = forward(spec, params, batch.images, &fc);
    Tensor dlogits(logits.shape);
    double loss;
    if (logit_temperature > 0.0) {
        Tensor soft = logits;
        for (double& v : soft.data) v /= logit_temperature;
        loss = xent_loss(soft, batch.labels, &dlogits);
        for (double& v : dlogits.data) v /= logit_temperature;
    } else {
        loss = xent_loss(logits, batch.labels, &dlogits);
    }

    GradientSet grads = params.zeros_like();
    Tensor dy = std::move(dlogits);
    for (int i = (int)spec.layers.size() - 1; i >= 0; --i) {
        const LayerDesc& l = spec.layers[i];
        const Tensor& in = fc.acts[i];
        const Tensor& out = fc.acts[i + 1];
        Tensor dx(in.shape);
        switch (l.kind) {
            case LayerKind::Dense:
                dense_backward(in, params.layers[i], dy, dx, grads.layers[i]);
                break;
            case LayerKind::Conv2d:
                conv_backward(in, l, params.layers[i], dy, dx, grads.layers[i]);
                break;
            case LayerKind::Relu:
                for (std::size_t j = 0; j < in.numel(); ++j)
                    dx.data[j] = out.data[j] > 0.0 ? dy.data[j] : 0.0;
                break;
            case LayerKind::MaxPool: {
                const std::vector<int>& am = fc.pool_argmax[i];
                for (std::size_t j = 0; j < dy.numel(); ++j)
                    dx.data[(std::size_t)am[j]] += dy.data[j];
                break;
            }
            case LayerKind::Flatten:
                dx.data = dy.data;
                break;
        }
        dy = std::move(dx);
    }
    return {loss, std::move(logits), std::move(grads)};
}

GradientSet gradients(const NetworkSpec& spec, const ParameterSet& params,
                      const LabeledBatch& batch, double logit_temperature) {
    return backprop(spec, params, batch, logit_temperature).grads;
}

Tensor bottleneck_activations(const NetworkSpec& spec, const ParameterSet& params,
                              const Tensor& images) {
    ForwardCache fc;
    forward(spec, params, images, &fc);
    const Tensor& a = fc.acts[spec.bottleneck + 1];
    int n = a.shape[0];
    int d = (int)(a.numel() / n);
    return Tensor({n, d}, a.data);
}

Tensor logit_grad_wrt_bottleneck(const NetworkSpec& spec, const ParameterSet& params,
                                 const Tensor& images, int k) {
    if (k < 0 || k >= spec.classes) throw Error("logit_grad: class out of range");
    ForwardCache fc;
    Tensor logits = forward(spec, params, images, &fc);
    int n = logits.shape[0];
    Tensor dy(logits.shape);
    for (int i = 0; i < n; ++i) dy.at2(i, k) = 1.0;

    GradientSet scratch = params.zeros_like();
    for (int i = (int)spec.layers.size() - 1; i > spec.bottleneck; --i) {
        const LayerDesc& l = spec.layers[i];
        const Tensor& in = fc.acts[i];
        const Tensor& out = fc.acts[i + 1];
        Tensor dx(in.shape);
        switch (l.kind) {
            case LayerKind::Dense:
                dense_backward(in, params.layers[i], dy, dx, scratch.layers[i]);
                break;
            case LayerKind::Conv2d:
                conv_backward(in, l, params.layers[i], dy, dx, scratch.layers[i]);
                break;
            case LayerKind::Relu:
                for (std::size_t j = 0; j < in.numel(); ++j)
                    dx.data[j] = out.data[j] > 0.0 ? dy.data[j] : 0.0;
                break;
            case LayerKind::MaxPool: {
                const std::vector<int>& am = fc.pool_argmax[i];
                for (std::size_t j = 0; j < dy.numel(); ++j)
                    dx.data[(std::size_t)am[j]] += dy.data[j];
                break;
            }
            case LayerKind::Flatten:
                dx.data = dy.data;
                break;
        }
        dy = std::move(dx);
    }
    int d = (int)(dy.numel() / n);
    return Tensor({n, d}, dy.data);
}

std::vector<double> hvp_fd(const FlatGradFn& grad, const std::vector<double>& theta,
                           const std::vector<double>& v, double eps) {
    if (theta.size() != v.size()) throw Error("hvp: v layout does not match parameters");
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) return std::vector<double>(v.size(), 0.0);
    if (eps < 0.0) {
        double tmax = 0.0;
        for (double x : theta) tmax = std::max(tmax, std::fabs(x));
        eps = 1e-4 * (1.0 + tmax);
    }
    std::vector<double> plus(theta), minus(theta);
    for (std::size_t i = 0; i < theta.size(); ++i) {
        double step = eps * v[i] / norm;
        plus[i] += step;
        minus[i] -= step;
    }
    std::vector<double> gp = grad(plus);
    std::vector<double> gm = grad(minus);
    if (gp.size() != theta.size() || gm.size() != theta.size())
        throw Error("hvp: gradient size mismatch");
    std::vector<double> out(theta.size());
    double scale = norm / (2.0 * eps);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = (gp[i] - gm[i]) * scale;
        if (!std::isfinite(out[i])) throw Error("hvp: non-finite intermediate");
    }
    return out;
}

GradientSet hessian_vector_product(const NetworkSpec& spec, const ParameterSet& params,
                                   const LabeledBatch& batch, const GradientSet& v, double eps,
                                   double logit_temperature) {
    std::vector<double> theta = params.flatten_all();
    std::vector<double> vf = v.flatten_all();
    ParameterSet scratch = params;
    FlatGradFn grad = [&](const std::vector<double>& t) {
        scratch.unflatten_all(t);
        return gradients(spec, scratch, batch, logit_temperature).flatten_all();
    };
    std::vector<double> hv = hvp_fd(grad, theta, vf, eps);
    GradientSet out = params.zeros_like();
    out.unflatten_all(hv);
    return out;
}

double test_accuracy(const NetworkSpec& spec, const ParameterSet& params, const Tensor& images,
                     const std::vector<int>& labels, int chunk) {
    int n = images.shape[0];
    int correct = 0;
    std::vector<int> rest(images.shape.begin() + 1, images.shape.end());
    std::size_t per = images.numel() / n;
    for (int start = 0; start < n; start += chunk) {
        int m = std::min(chunk, n - start);
        std::vector<int> s = {m};
        s.insert(s.end(), rest.begin(), rest.end());
        Tensor sub(s);
        std::copy(images.data.begin() + (std::size_t)start * per,
                  images.data.begin() + (std::size_t)(start + m) * per, sub.data.begin());
        Tensor logits = forward(spec, params, sub);
        int c = logits.shape[1];
        for (int i = 0; i < m; ++i) {
            const double* lr = &logits.data[(std::size_t)i * c];
            int best = 0;
            for (int j = 1; j < c; ++j)
                if (lr[j] > lr[best]) best = j;
            if (best == labels[start + i]) ++correct;
        }
    }
    return n ? (double)correct / n : 0.0;
}

} // namespace plab
