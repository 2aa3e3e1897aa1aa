#include "plab/stitching.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace plab {

double coverage_from_mask(const Tensor& validity) {
    if (validity.numel() == 0) throw Error("coverage: empty validity mask");
    std::size_t on = 0;
    for (double v : validity.data)
        if (v != 0.0) ++on;
    return (double)on / (double)validity.numel();
}

double coverage(const DiscriminativePatch& patch) { return coverage_from_mask(patch.validity); }

double coverage_vs_mean(const Tensor& image, const std::vector<double>& mean) {
    if (image.ndim() != 3) throw Error("coverage: image must be (H,W,C)");
    int h = image.shape[0], w = image.shape[1], c = image.shape[2];
    if ((int)mean.size() != c) throw Error("coverage: mean channel count mismatch");
    std::size_t valid = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            bool differs = false;
            for (int ch = 0; ch < c; ++ch)
                if (image.data[((std::size_t)y * w + x) * c + ch] != mean[ch]) {
                    differs = true;
                    break;
                }
            if (differs) ++valid;
        }
    return (double)valid / ((double)h * w);
}

DiscriminativePatch super_stitch(const std::vector<ConceptPool>& concepts, int klass,
                                 double sigma, const std::vector<double>& mean, int height,
                                 int width, int channels, std::uint64_t seed, int sweep_cap) {
    if (sigma < 0.0 || sigma >= 1.0) throw Error("super_stitch: sigma must be in [0,1)");
    if (concepts.empty()) throw Error("super_stitch: no concepts");
    for (const auto& c : concepts)
        if (c.segments.empty()) throw Error("super_stitch: concept with empty segment pool");

    std::vector<const ConceptPool*> order;
    for (const auto& c : concepts) order.push_back(&c);
    std::stable_sort(order.begin(), order.end(),
                     [](const ConceptPool* a, const ConceptPool* b) { return a->tcav < b->tcav; });

    DiscriminativePatch out;
    out.image = Tensor({height, width, channels});
    out.validity = Tensor({height, width});
    out.klass = out.label = klass;
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int ch = 0; ch < channels; ++ch)
                out.image.data[((std::size_t)y * width + x) * channels + ch] = mean[ch];

    Rng rng(Rng::derive(seed, 0x571C));
    // per-concept waiting list of unused segment indices; refilled on empty
    std::vector<std::vector<int>> waiting(order.size());

    auto cov = [&]() { return coverage_from_mask(out.validity); };
    int sweeps = 0;
    while (cov() < sigma) {
        if (++sweeps > sweep_cap)
            throw Error("super_stitch: coverage " + std::to_string(cov()) +
                        " cannot reach sigma " + std::to_string(sigma) + " after " +
                        std::to_string(sweep_cap) + " sweeps");
        for (std::size_t ci = 0; ci < order.size(); ++ci) {
            const ConceptPool& pool = *order[ci];
            if (waiting[ci].empty()) {
                waiting[ci].resize(pool.segments.size());
                std::iota(waiting[ci].begin(), waiting[ci].end(), 0);
            }
            int pick = rng.below_int((int)waiting[ci].size());
            int seg_idx = waiting[ci][pick];
            waiting[ci].erase(waiting[ci].begin() + pick);
            const DiscriminativePatch& seg = *pool.segments[seg_idx];
            if (seg.validity.shape != out.validity.shape)
                throw Error("super_stitch: segment canvas size mismatch");
            // last writer wins; the ascending sweep puts important concepts on top
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x) {
                    if (seg.validity.data[(std::size_t)y * width + x] == 0.0) continue;
                    out.validity.data[(std::size_t)y * width + x] = 1.0;
                    for (int ch = 0; ch < channels; ++ch)
                        out.image.data[((std::size_t)y * width + x) * channels + ch] =
                            seg.image.data[((std::size_t)y * width + x) * channels + ch];
                }
            out.stitched_from.push_back({pool.concept_idx, seg.segment_idx});
        }
    }
    out.coverage = cov();
    out.tcav = 0.0;
    out.concept_idx = -2; // stitched marker
    return out;
}

PatchStore build_stitch_set(const PatchStore& source, const StitchConfig& cfg) {
    if (source.patches.empty()) throw Error("build_stitch_set: empty store");
    PatchStore out;
    out.classes = source.classes;
    out.height = source.height;
    out.width = source.width;
    out.channels = source.channels;
    out.channel_mean = source.channel_mean;

    // group by class -> concept pools
    for (int k = 0; k < source.classes; ++k) {
        std::map<int, ConceptPool> pools;
        for (const auto& p : source.patches) {
            if (p.klass != k || p.concept_idx < 0) continue;
            ConceptPool& pool = pools[p.concept_idx];
            pool.concept_idx = p.concept_idx;
            pool.tcav = p.tcav;
            pool.segments.push_back(&p);
        }
        if (pools.empty()) {
            out.warnings.push_back("class " + std::to_string(k) + " absent from store; skipped");
            continue;
        }
        std::vector<ConceptPool> concepts;
        for (auto& [idx, pool] : pools) concepts.push_back(std::move(pool));

        for (int i = 0; i < cfg.per_class_count; ++i) {
            std::uint64_t s = Rng::derive(cfg.seed, 0x100000ULL * (k + 1) + i);
            double sigma = cfg.sigma;
            if (cfg.mode == SigmaMode::SampleEndpoints) {
                Rng r(Rng::derive(s, 0x51));
                sigma = r.coin() ? 0.5 : 0.75;
            }
            out.patches.push_back(super_stitch(concepts, k, sigma, out.channel_mean, out.height,
                                               out.width, out.channels, s, cfg.sweep_cap));
        }
    }
    return out;
}

} // namespace plab
