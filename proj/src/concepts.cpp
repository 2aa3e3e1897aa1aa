#include "plab/concepts.hpp"

#include "plab/kmeans.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace plab {

DiscriminativePatch make_patch(const Tensor& image, const Segment& segment,
                               const std::vector<double>& mean) {
    if (image.ndim() != 3) throw Error("make_patch: image must be (H,W,C)");
    int h = image.shape[0], w = image.shape[1], c = image.shape[2];
    if (segment.mask.shape != std::vector<int>{h, w})
        throw Error("make_patch: segment mask does not fit image");
    if (segment.area == 0) throw Error("make_patch: empty segment mask");
    if ((int)mean.size() != c) throw Error("make_patch: mean channel count mismatch");

    DiscriminativePatch p;
    p.image = Tensor({h, w, c});
    p.validity = segment.mask;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            bool on = segment.mask.data[(std::size_t)y * w + x] != 0.0;
            for (int ch = 0; ch < c; ++ch)
                p.image.data[((std::size_t)y * w + x) * c + ch] =
                    on ? image.data[((std::size_t)y * w + x) * c + ch] : mean[ch];
        }
    p.klass = segment.klass;
    p.label = segment.klass;
    p.source_image_id = segment.image_id;
    p.coverage = (double)segment.area / ((double)h * w);
    return p;
}

Cav train_cav(const Tensor& concept_acts, const Tensor& random_acts, std::uint64_t seed) {
    (void)seed; // zero init + full-batch GD is already deterministic
    if (concept_acts.ndim() != 2 || random_acts.ndim() != 2)
        throw Error("train_cav: activations must be (N,D)");
    if (concept_acts.shape[0] == 0 || random_acts.shape[0] == 0)
        throw Error("train_cav: empty activation set");
    int d = concept_acts.shape[1];
    if (random_acts.shape[1] != d) throw Error("train_cav: dimension mismatch");
    int n1 = concept_acts.shape[0], n0 = random_acts.shape[0];
    int n = n1 + n0;

    std::vector<double> wv(d, 0.0);
    double b = 0.0;
    const double lr = 0.1, l2 = 1e-4;
    std::vector<double> gw(d);
    for (int step = 0; step < 500; ++step) {
        std::fill(gw.begin(), gw.end(), 0.0);
        double gb = 0.0;
        auto accum = [&](const Tensor& X, int rows, double y) {
            for (int i = 0; i < rows; ++i) {
                const double* xr = &X.data[(std::size_t)i * d];
                double z = b;
                for (int j = 0; j < d; ++j) z += wv[j] * xr[j];
                double p = 1.0 / (1.0 + std::exp(-z));
                double err = (p - y) / n;
                for (int j = 0; j < d; ++j) gw[j] += err * xr[j];
                gb += err;
            }
        };
        accum(concept_acts, n1, 1.0);
        accum(random_acts, n0, 0.0);
        for (int j = 0; j < d; ++j) wv[j] -= lr * (gw[j] + l2 * wv[j]);
        b -= lr * gb;
    }

    Cav cav;
    double norm = 0.0;
    for (double x : wv) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-12) {
        // identical classes leave nothing to separate; flag, don't throw
        cav.v.assign(d, 0.0);
        if (d > 0) cav.v[0] = 1.0;
        cav.degenerate = true;
    } else {
        cav.v.resize(d);
        for (int j = 0; j < d; ++j) cav.v[j] = wv[j] / norm;
    }

    int correct = 0;
    auto count = [&](const Tensor& X, int rows, int y) {
        for (int i = 0; i < rows; ++i) {
            const double* xr = &X.data[(std::size_t)i * d];
            double z = b;
            for (int j = 0; j < d; ++j) z += wv[j] * xr[j];
            if ((z > 0.0 ? 1 : 0) == y) ++correct;
        }
    };
    count(concept_acts, n1, 1);
    count(random_acts, n0, 0);
    cav.accuracy = (double)correct / n;
    if (cav.degenerate) cav.accuracy = std::min(cav.accuracy, 0.5);
    return cav;
}

namespace {

Tensor pack_images(const std::vector<const DiscriminativePatch*>& patches) {
    int n = (int)patches.size();
    const Tensor& first = patches[0]->image;
    Tensor out({n, first.shape[0], first.shape[1], first.shape[2]});
    std::size_t per = first.numel();
    for (int i = 0; i < n; ++i)
        std::copy(patches[i]->image.data.begin(), patches[i]->image.data.end(),
                  out.data.begin() + (std::size_t)i * per);
    return out;
}

} // namespace

double tcav_score(const NetworkSpec& spec, const ParameterSet& params, int k,
                  const std::vector<const DiscriminativePatch*>& patches, const Cav& cav) {
    if (patches.empty()) throw Error("tcav_score: no patches");
    for (const auto* p : patches)
        if (p->label != k) throw Error("tcav_score: patch label does not match class");
    Tensor imgs = pack_images(patches);
    Tensor grads = logit_grad_wrt_bottleneck(spec, params, imgs, k);
    int n = grads.shape[0], d = grads.shape[1];
    if ((int)cav.v.size() != d) throw Error("tcav_score: CAV dimension mismatch");
    int pos = 0;
    for (int i = 0; i < n; ++i) {
        double dot = 0.0;
        for (int j = 0; j < d; ++j) dot += grads.at2(i, j) * cav.v[j];
        if (dot > 0.0) ++pos; // ties at zero are excluded
    }
    return (double)pos / n;
}

namespace {

std::vector<Segment> collect_segments(const LabeledImageSet& data, const std::vector<int>& ids,
                                      const ExtractConfig& cfg) {
    std::vector<Segment> segs;
    for (int id : ids) {
        Tensor img = data.image(id);
        std::vector<Segment> per_image;
        for (int scale : cfg.slic_scales) {
            SlicResult sr = slic_segment(img, scale, cfg.slic_compactness);
            auto ss = segments_from_labels(sr, img.shape[0], img.shape[1], id, data.labels[id],
                                           cfg.min_segment_px);
            per_image.insert(per_image.end(), std::make_move_iterator(ss.begin()),
                             std::make_move_iterator(ss.end()));
        }
        per_image = dedup_segments(std::move(per_image), cfg.dedup_overlap);
        segs.insert(segs.end(), std::make_move_iterator(per_image.begin()),
                    std::make_move_iterator(per_image.end()));
    }
    return segs;
}

Tensor embed_patches(const NetworkSpec& spec, const ParameterSet& params,
                     const std::vector<DiscriminativePatch>& patches, int chunk = 128) {
    int n = (int)patches.size();
    std::vector<Tensor> parts;
    for (int start = 0; start < n; start += chunk) {
        int m = std::min(chunk, n - start);
        std::vector<const DiscriminativePatch*> ptrs(m);
        for (int i = 0; i < m; ++i) ptrs[i] = &patches[start + i];
        parts.push_back(bottleneck_activations(spec, params, pack_images(ptrs)));
    }
    int d = parts[0].shape[1];
    Tensor out({n, d});
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.data.begin(), p.data.end(), out.data.begin() + off);
        off += p.numel();
    }
    return out;
}

} // namespace

PatchStore extract_discriminative_patches(const NetworkSpec& spec, const ParameterSet& params,
                                          const LabeledImageSet& dataset,
                                          const ExtractConfig& cfg) {
    PatchStore store;
    store.classes = dataset.classes;
    store.height = dataset.height();
    store.width = dataset.width();
    store.channels = dataset.channels();
    store.channel_mean = dataset.channel_mean;

    Rng rng(Rng::derive(cfg.seed, 0xACE));

    // per-class image id lists
    std::vector<std::vector<int>> by_class(dataset.classes);
    for (int i = 0; i < dataset.size(); ++i) by_class[dataset.labels[i]].push_back(i);
    if (cfg.images_per_class > 0)
        for (auto& ids : by_class)
            if ((int)ids.size() > cfg.images_per_class) ids.resize(cfg.images_per_class);

    for (int k = 0; k < dataset.classes; ++k) {
        if (by_class[k].empty()) {
            store.warnings.push_back("class " + std::to_string(k) + ": no images");
            continue;
        }
        std::vector<Segment> segs = collect_segments(dataset, by_class[k], cfg);
        if ((int)segs.size() < cfg.clusters_per_class) {
            store.warnings.push_back("class " + std::to_string(k) + ": too few segments");
            continue;
        }
        std::vector<DiscriminativePatch> patches;
        patches.reserve(segs.size());
        for (const auto& s : segs)
            patches.push_back(make_patch(dataset.image(s.image_id), s, store.channel_mean));

        Tensor acts = embed_patches(spec, params, patches);
        KMeansResult km = kmeans(acts, cfg.clusters_per_class,
                                 Rng::derive(cfg.seed, 0xC1A55 + (std::uint64_t)k));

        // random counterexamples: segments drawn uniformly from other classes
        std::vector<DiscriminativePatch> random_patches;
        {
            std::vector<int> others;
            for (int i = 0; i < dataset.size(); ++i)
                if (dataset.labels[i] != k) others.push_back(i);
            int want = cfg.random_counterexamples;
            int guard = 0;
            while ((int)random_patches.size() < want && guard++ < want * 20 && !others.empty()) {
                int id = others[rng.below_int((int)others.size())];
                Tensor img = dataset.image(id);
                int scale = cfg.slic_scales[rng.below_int((int)cfg.slic_scales.size())];
                SlicResult sr = slic_segment(img, scale, cfg.slic_compactness);
                auto ss = segments_from_labels(sr, img.shape[0], img.shape[1], id,
                                               dataset.labels[id], cfg.min_segment_px);
                if (ss.empty()) continue;
                const Segment& s = ss[rng.below_int((int)ss.size())];
                random_patches.push_back(make_patch(img, s, store.channel_mean));
            }
        }
        if (random_patches.empty()) {
            store.warnings.push_back("class " + std::to_string(k) + ": no counterexamples");
            continue;
        }
        Tensor random_acts = embed_patches(spec, params, random_patches);

        // clusters above the population floor become concept candidates
        std::vector<ConceptCluster> clusters;
        for (int c = 0; c < cfg.clusters_per_class; ++c) {
            ConceptCluster cc;
            cc.klass = k;
            cc.concept_idx = c;
            for (int i = 0; i < (int)patches.size(); ++i)
                if (km.assignment[i] == c) cc.members.push_back(i);
            if ((int)cc.members.size() < cfg.min_cluster_population) continue;
            cc.centroid.assign(km.centroids.data.begin() + (std::size_t)c * acts.shape[1],
                               km.centroids.data.begin() + (std::size_t)(c + 1) * acts.shape[1]);
            clusters.push_back(std::move(cc));
        }
        if (clusters.empty()) {
            store.warnings.push_back("class " + std::to_string(k) + ": no viable clusters");
            continue;
        }

        for (auto& cc : clusters) {
            Tensor cacts({(int)cc.members.size(), acts.shape[1]});
            for (int i = 0; i < (int)cc.members.size(); ++i)
                std::copy(acts.data.begin() + (std::size_t)cc.members[i] * acts.shape[1],
                          acts.data.begin() + (std::size_t)(cc.members[i] + 1) * acts.shape[1],
                          cacts.data.begin() + (std::size_t)i * acts.shape[1]);
            Cav cav = train_cav(cacts, random_acts, Rng::derive(cfg.seed, 0xCA7 + cc.concept_idx));
            cc.cav_accuracy = cav.accuracy;
            std::vector<const DiscriminativePatch*> ptrs;
            for (int m : cc.members) ptrs.push_back(&patches[m]);
            cc.tcav = tcav_score(spec, params, k, ptrs, cav);
        }

        std::stable_sort(clusters.begin(), clusters.end(),
                         [](const ConceptCluster& a, const ConceptCluster& b) {
                             // equal scores happen often on small nets; prefer
                             // the more coherent concept (separator accuracy)
                             if (a.tcav != b.tcav) return a.tcav > b.tcav;
                             return a.cav_accuracy > b.cav_accuracy;
                         });
        int keep = std::min(cfg.top_concepts, (int)clusters.size());
        for (int p = 0; p < keep; ++p) {
            const ConceptCluster& cc = clusters[p];
            for (int q = 0; q < (int)cc.members.size(); ++q) {
                DiscriminativePatch patch = patches[cc.members[q]];
                patch.concept_idx = p;
                patch.segment_idx = q;
                patch.tcav = cc.tcav;
                store.patches.push_back(std::move(patch));
            }
        }
    }
    return store;
}

PatchStore random_segment_store(const LabeledImageSet& dataset, int count, std::uint64_t seed,
                                const ExtractConfig& cfg) {
    if (count < 1) throw Error("random_segment_store: count must be >= 1");
    PatchStore store;
    store.classes = dataset.classes;
    store.height = dataset.height();
    store.width = dataset.width();
    store.channels = dataset.channels();
    store.channel_mean = dataset.channel_mean;

    Rng rng(Rng::derive(seed, 0x5E6));
    int emitted = 0, guard = 0;
    std::vector<int> per_class_q(dataset.classes, 0);
    while (emitted < count && guard++ < count * 50) {
        int id = rng.below_int(dataset.size());
        Tensor img = dataset.image(id);
        int scale = cfg.slic_scales[rng.below_int((int)cfg.slic_scales.size())];
        SlicResult sr = slic_segment(img, scale, cfg.slic_compactness);
        auto ss = segments_from_labels(sr, img.shape[0], img.shape[1], id, dataset.labels[id],
                                       cfg.min_segment_px);
        if (ss.empty()) continue;
        const Segment& s = ss[rng.below_int((int)ss.size())];
        DiscriminativePatch p = make_patch(img, s, store.channel_mean);
        p.segment_idx = per_class_q[p.klass]++;
        store.patches.push_back(std::move(p));
        ++emitted;
    }
    if (emitted < count) throw Error("random_segment_store: could not draw enough segments");
    return store;
}

} // namespace plab
