#include "plab/datasets.hpp"
#include "plab/idx.hpp"

#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>

using namespace plab;

namespace {

std::string tmp_path(const char* name) {
    return std::string("/tmp/plab_test_") + name;
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
    std::ofstream f(path, std::ios::binary);
    f.write(reinterpret_cast<const char*>(bytes.data()), (std::streamsize)bytes.size());
}

} // namespace

TEST_CASE("hand-built ubyte idx file loads with exact scaling") {
    // magic 0x00000803, dims 1x2x2, payload 0,51,102,255
    std::vector<unsigned char> bytes = {0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2,
                                        0, 0, 0, 2, 0, 51, 102, 255};
    std::string p = tmp_path("hand.idx");
    write_bytes(p, bytes);
    Tensor t = load_idx(p);
    REQUIRE(t.shape == std::vector<int>({1, 2, 2}));
    CHECK(t[0] == 0.0);
    CHECK(t[1] == 51.0 / 255.0);
    CHECK(t[2] == 102.0 / 255.0);
    CHECK(t[3] == 1.0);
    std::remove(p.c_str());
}

TEST_CASE("double idx round-trip is bit exact") {
    Tensor t({2, 3});
    t.data = {0.1, -2.5, 1e300, 0.0, 3.141592653589793, -0.0};
    std::string p = tmp_path("rt.idx");
    save_idx_double(p, t);
    Tensor back = load_idx(p);
    CHECK(back.shape == t.shape);
    CHECK(back.data == t.data);
    std::remove(p.c_str());
}

TEST_CASE("ubyte idx round-trip quantizes to 1/255 steps") {
    Tensor t({4});
    t.data = {0.0, 1.0, 0.5, 100.0 / 255.0};
    std::string p = tmp_path("ub.idx");
    save_idx_ubyte(p, t);
    Tensor back = load_idx(p);
    CHECK(back[0] == 0.0);
    CHECK(back[1] == 1.0);
    CHECK(back[2] == doctest::Approx(0.5).epsilon(1.0 / 255.0));
    CHECK(back[3] == 100.0 / 255.0);
    std::remove(p.c_str());
}

TEST_CASE("label file round-trip") {
    std::vector<int> labels = {0, 3, 9, 1, 1, 7};
    std::string p = tmp_path("lab.idx");
    save_idx_labels(p, labels);
    CHECK(load_idx_labels(p) == labels);
    std::remove(p.c_str());
}

TEST_CASE("truncated idx file errors with expected and actual byte counts") {
    std::vector<unsigned char> bytes = {0, 0, 8, 2, 0, 0, 0, 2, 0, 0, 0, 3, 9, 9};
    std::string p = tmp_path("trunc.idx");
    write_bytes(p, bytes); // header says 6 payload bytes, only 2 present
    CHECK_THROWS_WITH_AS((void)load_idx(p), doctest::Contains("expected 18"), Error);
    CHECK_THROWS_WITH_AS((void)load_idx(p), doctest::Contains("got 14"), Error);
    std::remove(p.c_str());
}

TEST_CASE("unknown idx type code is rejected") {
    std::vector<unsigned char> bytes = {0, 0, 5, 1, 0, 0, 0, 1, 42};
    std::string p = tmp_path("badtype.idx");
    write_bytes(p, bytes);
    CHECK_THROWS_AS((void)load_idx(p), Error);
    std::remove(p.c_str());
}

TEST_CASE("synthetic shapes are deterministic per seed") {
    SyntheticSpec spec;
    spec.train_n = 20;
    spec.test_n = 8;
    spec.seed = 42;
    ShapesData a = generate_shapes(spec);
    ShapesData b = generate_shapes(spec);
    CHECK(a.train.images.data == b.train.images.data);
    CHECK(a.train.labels == b.train.labels);
    CHECK(a.test.images.data == b.test.images.data);
    spec.seed = 43;
    ShapesData c = generate_shapes(spec);
    CHECK(a.train.images.data != c.train.images.data);
}

TEST_CASE("synthetic shapes respect the configured area range and balance") {
    SyntheticSpec spec;
    spec.train_n = 30;
    spec.test_n = 10;
    spec.min_shape_px = 60;
    spec.max_shape_px = 200;
    spec.seed = 7;
    ShapesData d = generate_shapes(spec);
    REQUIRE((int)d.train_masks.size() == spec.train_n);
    std::vector<int> counts(spec.classes, 0);
    for (int i = 0; i < spec.train_n; ++i) {
        int area = 0;
        for (double v : d.train_masks[i].data) area += (v != 0.0);
        CHECK(area >= spec.min_shape_px);
        CHECK(area <= spec.max_shape_px);
        counts[d.train.labels[i]]++;
    }
    // train_n = 30, 10 classes: exactly 3 per class
    for (int c : counts) CHECK(c == 3);
    CHECK(d.train.channel_mean.size() == 3);
    CHECK(d.test.channel_mean == d.train.channel_mean);
    // pixels normalized
    for (double v : d.train.images.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("channel mean is the plain per-channel average") {
    Tensor imgs({1, 1, 2, 2});
    imgs.data = {1.0, 3.0, 5.0, 7.0}; // pixels (1,3) and (5,7)
    std::vector<double> m = compute_channel_mean(imgs);
    REQUIRE(m.size() == 2);
    CHECK(m[0] == 3.0);
    CHECK(m[1] == 5.0);
}

TEST_CASE("sample_minibatch draws without replacement and is deterministic") {
    LabeledImageSet set;
    set.images = Tensor({10, 1, 1, 1});
    for (int i = 0; i < 10; ++i) set.images[i] = i;
    set.labels = {0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
    set.classes = 2;
    LabeledBatch b = sample_minibatch(set, 6, 5);
    REQUIRE(b.size() == 6);
    std::set<double> seen(b.images.data.begin(), b.images.data.end());
    CHECK(seen.size() == 6); // distinct source rows
    LabeledBatch b2 = sample_minibatch(set, 6, 5);
    CHECK(b.images.data == b2.images.data);
    CHECK(b.labels == b2.labels);
    LabeledBatch b3 = sample_minibatch(set, 6, 6);
    CHECK(b.images.data != b3.images.data);
}

TEST_CASE("stratified minibatch takes floor(b/classes) per class") {
    LabeledImageSet set;
    set.images = Tensor({12, 1, 1, 1});
    set.labels.resize(12);
    for (int i = 0; i < 12; ++i) {
        set.images[i] = i;
        set.labels[i] = i % 3;
    }
    set.classes = 3;
    LabeledBatch b = sample_minibatch(set, 7, 2, true);
    REQUIRE(b.size() == 6); // floor(7/3)=2 per class
    std::vector<int> counts(3, 0);
    for (int l : b.labels) counts[l]++;
    for (int c : counts) CHECK(c == 2);
}

TEST_CASE("augment_image with no flip and no offset is the identity") {
    Tensor img({3, 3, 1});
    for (int i = 0; i < 9; ++i) img[i] = i;
    Tensor out = augment_image(img, false, 2, 2); // pad 2, crop origin (2,2) = centered
    CHECK(out.data == img.data);
}

TEST_CASE("augment_image flip mirrors horizontally") {
    Tensor img({1, 3, 1});
    img.data = {1, 2, 3};
    Tensor out = augment_image(img, true, 2, 2);
    CHECK(out.data == std::vector<double>({3, 2, 1}));
}

TEST_CASE("augment_image crop offset shifts content and zero-fills") {
    Tensor img({2, 2, 1});
    img.data = {1, 2, 3, 4};
    // crop origin (0,0) in the padded frame: content moves down-right by 2
    Tensor out = augment_image(img, false, 0, 0);
    CHECK(out.data == std::vector<double>({0, 0, 0, 0}));
    Tensor out2 = augment_image(img, false, 1, 1);
    CHECK(out2.data == std::vector<double>({0, 0, 0, 1}));
}

TEST_CASE("all_one_batch is exactly ones") {
    LabeledBatch b = all_one_batch({3, 2, 2, 1}, {0, 1, 2});
    REQUIRE(b.size() == 3);
    for (double v : b.images.data) CHECK(v == 1.0);
    CHECK(b.labels == std::vector<int>({0, 1, 2}));
}

TEST_CASE("synthetic spec hash is stable under field identity and changes with content") {
    SyntheticSpec a, b;
    CHECK(a.hash() == b.hash());
    b.train_n = 999;
    CHECK(a.hash() != b.hash());
    CHECK(a.hash().rfind("shapes-", 0) == 0);
}

TEST_CASE("idx dataset loader wires images and labels together") {
    Tensor imgs({3, 2, 2, 1});
    for (int i = 0; i < 12; ++i) imgs[i] = (i % 5) / 4.0;
    std::vector<int> labels = {2, 0, 1};
    std::string pi = tmp_path("ds_images.idx"), pl = tmp_path("ds_labels.idx");
    save_idx_ubyte(pi, imgs);
    save_idx_labels(pl, labels);
    LabeledImageSet set = load_idx_dataset(pi, pl, 3, "train");
    CHECK(set.size() == 3);
    CHECK(set.labels == labels);
    CHECK(set.classes == 3);
    CHECK(set.split == "train");
    CHECK(set.channel_mean.size() == 1);
    std::remove(pi.c_str());
    std::remove(pl.c_str());
}
