#include "plab/pruning.hpp"

#include "plab/datasets.hpp"
#include "plab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace plab {

const char* criterion_name(Criterion c) { return c == Criterion::Snip ? "snip" : "grasp"; }

Criterion criterion_from_name(const std::string& s) {
    if (s == "snip") return Criterion::Snip;
    if (s == "grasp") return Criterion::Grasp;
    throw Error("unknown criterion: " + s);
}

std::size_t ScoreMap::count() const {
    std::size_t n = 0;
    for (const auto& t : s) n += t.numel();
    return n;
}

std::vector<double> ScoreMap::flatten() const {
    std::vector<double> out;
    out.reserve(count());
    for (const auto& t : s) out.insert(out.end(), t.data.begin(), t.data.end());
    return out;
}

std::size_t SparsityTarget::resolve(std::size_t total) const {
    std::size_t k = kappa;
    if (k == 0) {
        if (sparsity < 0.0 || sparsity >= 1.0) throw Error("sparsity must be in [0,1)");
        k = (std::size_t)std::llround((1.0 - sparsity) * (double)total);
    }
    if (k < 1 || k > total) throw Error("kappa out of range: " + std::to_string(k));
    return k;
}

namespace {

ScoreMap empty_scores(const ParameterSet& params, Criterion tag) {
    ScoreMap sm;
    sm.tag = tag;
    sm.s.resize(params.layers.size());
    for (std::size_t i = 0; i < params.layers.size(); ++i)
        if (params.layers[i].present) sm.s[i] = Tensor(params.layers[i].w.shape);
    return sm;
}

void check_finite(const ScoreMap& sm) {
    for (const auto& t : sm.s)
        for (double v : t.data)
            if (!std::isfinite(v)) throw Error("scores: non-finite entry");
}

} // namespace

ScoreMap snip_scores(const NetworkSpec& spec, const ParameterSet& params,
                     const LabeledBatch& batch, double loss_scale) {
    if (loss_scale <= 0.0) throw Error("snip_scores: loss_scale must be positive");
    GradientSet g = gradients(spec, params, batch);
    ScoreMap sm = empty_scores(params, Criterion::Snip);
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        if (!params.layers[i].present) continue;
        const Tensor& w = params.layers[i].w;
        const Tensor& gw = g.layers[i].w;
        for (std::size_t j = 0; j < w.numel(); ++j)
            sm.s[i][j] = std::fabs(loss_scale * gw[j] * w[j]);
    }
    check_finite(sm);
    return sm;
}

ScoreMap grasp_scores(const NetworkSpec& spec, const ParameterSet& params,
                      const LabeledBatch& batch, double logit_temperature) {
    GradientSet g = gradients(spec, params, batch, logit_temperature);
    GradientSet hg = hessian_vector_product(spec, params, batch, g, -1.0, logit_temperature);
    ScoreMap sm = empty_scores(params, Criterion::Grasp);
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        if (!params.layers[i].present) continue;
        const Tensor& w = params.layers[i].w;
        const Tensor& hgw = hg.layers[i].w;
        for (std::size_t j = 0; j < w.numel(); ++j) sm.s[i][j] = -w[j] * hgw[j];
    }
    check_finite(sm);
    return sm;
}

ScoreMap accumulate_scores(const ScoreMap& a, const ScoreMap& b) {
    if (a.s.size() != b.s.size() || a.tag != b.tag) throw Error("accumulate_scores: mismatch");
    ScoreMap out = a;
    for (std::size_t i = 0; i < out.s.size(); ++i) {
        if (!out.s[i].same_shape(b.s[i])) throw Error("accumulate_scores: layout mismatch");
        for (std::size_t j = 0; j < out.s[i].numel(); ++j) out.s[i][j] += b.s[i][j];
    }
    return out;
}

MaskResult top_kappa_mask(const ScoreMap& scores, const SparsityTarget& target) {
    std::vector<double> flat = scores.flatten();
    std::size_t total = flat.size();
    std::size_t kappa = target.resolve(total);

    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), 0);
    // ties broken by ascending flat index: stable order on equal scores
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return flat[a] > flat[b]; });

    std::vector<char> keep(total, 0);
    for (std::size_t i = 0; i < kappa; ++i) keep[order[i]] = 1;
    double threshold = flat[order[kappa - 1]];

    MaskResult res;
    res.threshold = threshold;
    res.mask.kappa = kappa;
    res.mask.m.resize(scores.s.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < scores.s.size(); ++i) {
        if (scores.s[i].numel() == 0) continue;
        res.mask.m[i] = Tensor(scores.s[i].shape);
        for (std::size_t j = 0; j < scores.s[i].numel(); ++j)
            res.mask.m[i][j] = keep[k++] ? 1.0 : 0.0;
    }
    return res;
}

LayerStatsReport layer_stats(const Mask& mask, const NetworkSpec& spec) {
    LayerStatsReport rep;
    for (std::size_t i = 0; i < mask.m.size(); ++i) {
        if (mask.m[i].numel() == 0) continue;
        LayerStat st;
        st.layer = (int)i;
        st.kind = layer_kind_name(spec.layers[i].kind);
        st.total = mask.m[i].numel();
        for (double v : mask.m[i].data)
            if (v != 0.0) ++st.kept;
        st.collapsed = st.kept == 0;
        if (st.collapsed) ++rep.collapsed_count;
        rep.layers.push_back(st);
    }
    return rep;
}

namespace {

void zero_masked(GradientSet& g, const Mask& mask) {
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        if (!g.layers[i].present) continue;
        const Tensor& m = mask.m[i];
        Tensor& w = g.layers[i].w;
        for (std::size_t j = 0; j < w.numel(); ++j)
            if (m[j] == 0.0) w[j] = 0.0;
    }
}

} // namespace

ParameterSet finetune(const NetworkSpec& spec, const ParameterSet& params, const Mask& mask,
                      const LabeledImageSet& train, const TrainSchedule& schedule,
                      std::uint64_t seed) {
    ParameterSet theta = apply_mask(params, mask);
    if (schedule.epochs == 0) return theta;

    GradientSet vel = theta.zeros_like();
    int n = train.size();
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::size_t per = train.images.numel() / n;
    int h = train.height(), w = train.width(), c = train.channels();

    double lr = schedule.lr;
    long step = 0;
    for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
        if (std::find(schedule.decay_epochs.begin(), schedule.decay_epochs.end(), epoch) !=
            schedule.decay_epochs.end())
            lr *= schedule.decay_factor;
        Rng erng(Rng::derive(seed, 0xF17E + (std::uint64_t)epoch));
        erng.shuffle(order);
        for (int start = 0; start < n; start += schedule.batch, ++step) {
            int m = std::min(schedule.batch, n - start);
            LabeledBatch batch;
            batch.images = Tensor({m, h, w, c});
            batch.labels.resize(m);
            for (int i = 0; i < m; ++i) {
                int src = order[start + i];
                std::copy(train.images.data.begin() + src * per,
                          train.images.data.begin() + (src + 1) * per,
                          batch.images.data.begin() + (std::size_t)i * per);
                batch.labels[i] = train.labels[src];
            }
            if (schedule.augment) batch = augment(batch, erng);

            BackpropResult bp = backprop(spec, theta, batch);
            if (!std::isfinite(bp.loss))
                throw Error("finetune: non-finite loss at step " + std::to_string(step));
            zero_masked(bp.grads, mask);
            for (std::size_t li = 0; li < theta.layers.size(); ++li) {
                if (!theta.layers[li].present) continue;
                LayerParams& p = theta.layers[li];
                LayerParams& v = vel.layers[li];
                LayerParams& g = bp.grads.layers[li];
                for (std::size_t j = 0; j < p.w.numel(); ++j) {
                    double grad = g.w[j] + schedule.weight_decay * p.w[j];
                    v.w[j] = schedule.momentum * v.w[j] + grad;
                    p.w[j] -= lr * v.w[j];
                }
                for (std::size_t j = 0; j < p.b.numel(); ++j) {
                    double grad = g.b[j] + schedule.weight_decay * p.b[j];
                    v.b[j] = schedule.momentum * v.b[j] + grad;
                    p.b[j] -= lr * v.b[j];
                }
            }
            // pin masked weights to exact zero
            theta = apply_mask(theta, mask);
        }
    }
    return theta;
}

} // namespace plab
