#include "plab/stitching.hpp"

#include <doctest.h>

#include <set>

using namespace plab;

namespace {

// patch whose validity covers rows [y0, y0+rows) of an h x w canvas
DiscriminativePatch band_patch(int h, int w, int c, int y0, int rows, double value,
                               const std::vector<double>& mean) {
    DiscriminativePatch p;
    p.image = Tensor({h, w, c});
    p.validity = Tensor({h, w}, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch) p.image[(y * w + x) * c + ch] = mean[ch];
    for (int y = y0; y < y0 + rows; ++y)
        for (int x = 0; x < w; ++x) {
            p.validity[y * w + x] = 1.0;
            for (int ch = 0; ch < c; ++ch) p.image[(y * w + x) * c + ch] = value;
        }
    p.coverage = (double)rows / h;
    return p;
}

} // namespace

TEST_CASE("coverage helpers agree on hand-built masks") {
    std::vector<double> mean = {0.5};
    DiscriminativePatch p = band_patch(10, 4, 1, 0, 3, 0.9, mean);
    CHECK(coverage(p) == doctest::Approx(0.3));
    CHECK(coverage_from_mask(p.validity) == doctest::Approx(0.3));
    CHECK(coverage_vs_mean(p.image, mean) == doctest::Approx(0.3));

    Tensor empty({4, 4}, 0.0);
    CHECK(coverage_from_mask(empty) == 0.0);
    Tensor full({4, 4}, 1.0);
    CHECK(coverage_from_mask(full) == 1.0);
}

TEST_CASE("sigma zero stitches nothing") {
    std::vector<double> mean = {0.2, 0.4, 0.6};
    DiscriminativePatch seg = band_patch(8, 8, 3, 0, 4, 1.0, mean);
    ConceptPool pool{0, 0.9, {&seg}};
    DiscriminativePatch out = super_stitch({pool}, 2, 0.0, mean, 8, 8, 3, 1);
    CHECK(out.klass == 2);
    CHECK(out.concept_idx == -2);
    CHECK(coverage(out) == 0.0);
    CHECK(out.stitched_from.empty());
    for (int ch = 0; ch < 3; ++ch) CHECK(out.image[ch] == mean[ch]);
}

TEST_CASE("three disjoint bands reach target coverage in one sweep") {
    std::vector<double> mean = {0.5};
    DiscriminativePatch a = band_patch(10, 10, 1, 0, 2, 0.1, mean);
    DiscriminativePatch b = band_patch(10, 10, 1, 4, 2, 0.2, mean);
    DiscriminativePatch c = band_patch(10, 10, 1, 8, 2, 0.3, mean);
    std::vector<ConceptPool> pools = {{0, 0.2, {&a}}, {1, 0.5, {&b}}, {2, 0.8, {&c}}};
    DiscriminativePatch out = super_stitch(pools, 0, 0.5, mean, 10, 10, 1, 7);
    CHECK(coverage(out) == doctest::Approx(0.6));
    REQUIRE(out.stitched_from.size() == 3);
    // sweep order is ascending tcav: concepts 0, 1, 2
    CHECK(out.stitched_from[0].first == 0);
    CHECK(out.stitched_from[1].first == 1);
    CHECK(out.stitched_from[2].first == 2);
    // content landed where the validity says it did
    CHECK(out.image[0 * 10] == 0.1);
    CHECK(out.image[4 * 10] == 0.2);
    CHECK(out.image[8 * 10] == 0.3);
    CHECK(out.image[2 * 10] == 0.5); // untouched row keeps the mean
}

TEST_CASE("overlapping segments resolve to the higher-tcav writer") {
    std::vector<double> mean = {0.5};
    DiscriminativePatch lo = band_patch(6, 6, 1, 0, 4, 0.1, mean);
    DiscriminativePatch hi = band_patch(6, 6, 1, 2, 4, 0.9, mean);
    // ascending sweep writes lo first, hi second: hi wins rows 2-5
    std::vector<ConceptPool> pools = {{0, 0.3, {&lo}}, {1, 0.7, {&hi}}};
    DiscriminativePatch out = super_stitch(pools, 0, 0.9, mean, 6, 6, 1, 3);
    CHECK(out.image[0] == 0.1);
    CHECK(out.image[2 * 6] == 0.9);
    CHECK(out.image[5 * 6] == 0.9);
    CHECK(coverage(out) == doctest::Approx(1.0));
}

TEST_CASE("a concept pool is not reused until exhausted") {
    // one concept, three segments, sigma needing exactly three pulls;
    // all three distinct segments must appear before any repeat
    std::vector<double> mean = {0.5};
    DiscriminativePatch s0 = band_patch(9, 9, 1, 0, 3, 0.1, mean);
    DiscriminativePatch s1 = band_patch(9, 9, 1, 3, 3, 0.2, mean);
    DiscriminativePatch s2 = band_patch(9, 9, 1, 6, 3, 0.3, mean);
    s0.segment_idx = 0;
    s1.segment_idx = 1;
    s2.segment_idx = 2;
    ConceptPool pool{4, 0.5, {&s0, &s1, &s2}};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        DiscriminativePatch out = super_stitch({pool}, 0, 0.99, mean, 9, 9, 1, seed);
        REQUIRE(out.stitched_from.size() == 3);
        std::set<int> qs;
        for (auto [p, q] : out.stitched_from) {
            CHECK(p == 4);
            qs.insert(q);
        }
        CHECK(qs.size() == 3);
        CHECK(coverage(out) == doctest::Approx(1.0));
    }
}

TEST_CASE("unreachable sigma hits the sweep cap with a diagnostic") {
    std::vector<double> mean = {0.5};
    DiscriminativePatch tiny = band_patch(10, 10, 1, 0, 1, 0.7, mean);
    ConceptPool pool{0, 0.5, {&tiny}};
    CHECK_THROWS_AS((void)super_stitch({pool}, 0, 0.9, mean, 10, 10, 1, 1, 5), Error);
}

TEST_CASE("sigma outside [0,1) is rejected") {
    std::vector<double> mean = {0.5};
    DiscriminativePatch seg = band_patch(4, 4, 1, 0, 4, 0.1, mean);
    ConceptPool pool{0, 0.5, {&seg}};
    CHECK_THROWS_AS((void)super_stitch({pool}, 0, 1.0, mean, 4, 4, 1, 1), Error);
    CHECK_THROWS_AS((void)super_stitch({pool}, 0, -0.1, mean, 4, 4, 1, 1), Error);
}

TEST_CASE("build_stitch_set composes per class and meets the coverage floor") {
    PatchStore source;
    source.classes = 2;
    source.height = 8;
    source.width = 8;
    source.channels = 1;
    source.channel_mean = {0.5};
    for (int k = 0; k < 2; ++k)
        for (int concept_i = 0; concept_i < 2; ++concept_i)
            for (int seg = 0; seg < 3; ++seg) {
                DiscriminativePatch p =
                    band_patch(8, 8, 1, (seg * 3) % 6, 3, 0.1 * (k + 1), source.channel_mean);
                p.klass = k;
                p.label = k;
                p.concept_idx = concept_i;
                p.segment_idx = seg;
                p.tcav = 0.3 + 0.3 * concept_i;
                source.patches.push_back(p);
            }
    StitchConfig cfg;
    cfg.mode = SigmaMode::Fixed;
    cfg.sigma = 0.5;
    cfg.per_class_count = 4;
    cfg.seed = 11;
    PatchStore out = build_stitch_set(source, cfg);
    REQUIRE((int)out.patches.size() == 8);
    std::vector<int> per_class(2, 0);
    for (const auto& p : out.patches) {
        per_class[p.klass]++;
        CHECK(p.concept_idx == -2);
        CHECK(coverage(p) >= cfg.sigma);
        CHECK(!p.stitched_from.empty());
    }
    CHECK(per_class[0] == 4);
    CHECK(per_class[1] == 4);

    // deterministic per seed
    PatchStore again = build_stitch_set(source, cfg);
    REQUIRE(again.patches.size() == out.patches.size());
    for (std::size_t i = 0; i < out.patches.size(); ++i)
        CHECK(again.patches[i].image.data == out.patches[i].image.data);

    cfg.per_class_count = 0;
    CHECK(build_stitch_set(source, cfg).patches.empty());
}

TEST_CASE("sampled sigma endpoints stay within the configured pair") {
    PatchStore source;
    source.classes = 1;
    source.height = 8;
    source.width = 8;
    source.channels = 1;
    source.channel_mean = {0.5};
    for (int seg = 0; seg < 4; ++seg) {
        DiscriminativePatch p = band_patch(8, 8, 1, 2 * seg, 2, 0.9, source.channel_mean);
        p.klass = 0;
        p.concept_idx = 0;
        p.segment_idx = seg;
        p.tcav = 0.6;
        source.patches.push_back(p);
    }
    StitchConfig cfg;
    cfg.mode = SigmaMode::SampleEndpoints;
    cfg.per_class_count = 16;
    cfg.seed = 21;
    PatchStore out = build_stitch_set(source, cfg);
    REQUIRE((int)out.patches.size() == 16);
    // every patch covers at least the lower endpoint
    for (const auto& p : out.patches) CHECK(coverage(p) >= 0.5);
}
