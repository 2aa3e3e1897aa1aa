#include "plab/datasets.hpp"

#include "plab/idx.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace plab {

Tensor LabeledImageSet::image(int i) const {
    std::size_t per = images.numel() / size();
    Tensor out({height(), width(), channels()});
    std::copy(images.data.begin() + (std::size_t)i * per,
              images.data.begin() + (std::size_t)(i + 1) * per, out.data.begin());
    return out;
}

std::vector<double> compute_channel_mean(const Tensor& images) {
    int c = images.shape.back();
    std::vector<double> mean(c, 0.0);
    std::size_t pixels = images.numel() / c;
    for (std::size_t i = 0; i < images.numel(); ++i) mean[i % c] += images.data[i];
    for (double& m : mean) m /= (double)pixels;
    return mean;
}

std::string SyntheticSpec::canonical() const {
    std::ostringstream os;
    os << "channels=" << channels << ";classes=" << classes
       << ";clutter_density=" << clutter_density << ";image_size=" << image_size
       << ";max_shape_px=" << max_shape_px << ";min_shape_px=" << min_shape_px
       << ";seed=" << seed << ";test_n=" << test_n << ";train_n=" << train_n;
    return os.str();
}

std::string SyntheticSpec::hash() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char ch : canonical()) {
        h ^= (unsigned char)ch;
        h *= 0x100000001B3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
    return std::string("shapes-") + buf;
}

namespace {

// 10 class shapes drawn as boolean predicates over a unit box [0,1)^2
bool shape_hit(int klass, double u, double v) {
    double cu = u - 0.5, cv = v - 0.5;
    switch (klass % 10) {
        case 0: // disc
            return cu * cu + cv * cv <= 0.25;
        case 1: // square
            return std::fabs(cu) <= 0.42 && std::fabs(cv) <= 0.42;
        case 2: // triangle (up)
            return v >= 0.12 && std::fabs(cu) <= (v - 0.08) * 0.52;
        case 3: // plus
            return std::fabs(cu) <= 0.16 || std::fabs(cv) <= 0.16;
        case 4: // ring
        {
            double r2 = cu * cu + cv * cv;
            return r2 <= 0.25 && r2 >= 0.09;
        }
        case 5: // diamond
            return std::fabs(cu) + std::fabs(cv) <= 0.48;
        case 6: // horizontal bar
            return std::fabs(cv) <= 0.18;
        case 7: // vertical bar
            return std::fabs(cu) <= 0.18;
        case 8: // X
            return std::fabs(cu - cv) <= 0.14 || std::fabs(cu + cv) <= 0.14;
        case 9: // L corner
            return (u <= 0.3 || v >= 0.7) && u <= 0.95 && v >= 0.05;
    }
    return false;
}

struct Rgb {
    double r, g, b;
};

// fixed palette; class k's shape uses palette[k]
const Rgb kPalette[10] = {
    {0.95, 0.25, 0.20}, {0.20, 0.85, 0.30}, {0.25, 0.40, 0.95}, {0.95, 0.85, 0.20},
    {0.85, 0.25, 0.90}, {0.20, 0.85, 0.85}, {0.95, 0.55, 0.15}, {0.55, 0.95, 0.60},
    {0.60, 0.60, 0.95}, {0.95, 0.95, 0.90},
};

void paint(Tensor& img, int y, int x, const Rgb& col, int channels) {
    if (channels == 3) {
        img.data[((std::size_t)y * img.shape[1] + x) * 3 + 0] = col.r;
        img.data[((std::size_t)y * img.shape[1] + x) * 3 + 1] = col.g;
        img.data[((std::size_t)y * img.shape[1] + x) * 3 + 2] = col.b;
    } else {
        img.data[(std::size_t)y * img.shape[1] + x] = (col.r + col.g + col.b) / 3.0;
    }
}

struct DrawnImage {
    Tensor img;
    Tensor mask;
};

DrawnImage draw_image(const SyntheticSpec& spec, int klass, Rng& rng) {
    int n = spec.image_size, c = spec.channels;
    Tensor img({n, n, c});
    Tensor mask({n, n});

    // dark noisy background
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            Rgb bg{0.06 + 0.08 * rng.uniform(), 0.06 + 0.08 * rng.uniform(),
                   0.06 + 0.08 * rng.uniform()};
            paint(img, y, x, bg, c);
        }

    // clutter: small dots and short bars in random palette colors
    int n_clutter = (int)std::lround(spec.clutter_density * 6.0);
    for (int i = 0; i < n_clutter; ++i) {
        const Rgb& col = kPalette[rng.below_int(10)];
        int cy = rng.below_int(n), cx = rng.below_int(n);
        if (rng.coin()) {
            int r = 1 + rng.below_int(2);
            for (int y = std::max(0, cy - r); y <= std::min(n - 1, cy + r); ++y)
                for (int x = std::max(0, cx - r); x <= std::min(n - 1, cx + r); ++x)
                    if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r) paint(img, y, x, col, c);
        } else {
            int len = 3 + rng.below_int(4);
            bool horiz = rng.coin();
            for (int t = 0; t < len; ++t) {
                int y = horiz ? cy : cy + t;
                int x = horiz ? cx + t : cx;
                if (y >= 0 && y < n && x >= 0 && x < n) paint(img, y, x, col, c);
            }
        }
    }

    // one label-determining shape; redraw until area lands in [min,max]
    const Rgb& col = kPalette[klass % 10];
    for (int attempt = 0;; ++attempt) {
        if (attempt > 200) throw Error("generate_shapes: cannot satisfy shape area range");
        // bounding box sized from the area range; thin shapes fill only a
        // fraction of box^2, so allow up to sqrt(2 * max_area)
        int lo = std::max(4, (int)std::ceil(std::sqrt((double)spec.min_shape_px)));
        int hi = std::max(lo, (int)std::floor(std::sqrt(2.0 * spec.max_shape_px)));
        int box = lo + rng.below_int(hi - lo + 1);
        if (box > n) box = n;
        int oy = rng.below_int(n - box + 1);
        int ox = rng.below_int(n - box + 1);
        std::vector<std::pair<int, int>> px;
        for (int y = 0; y < box; ++y)
            for (int x = 0; x < box; ++x)
                if (shape_hit(klass, (x + 0.5) / box, (y + 0.5) / box)) px.push_back({oy + y, ox + x});
        if ((int)px.size() < spec.min_shape_px || (int)px.size() > spec.max_shape_px) continue;
        for (auto [y, x] : px) {
            // slight per-pixel brightness jitter keeps SLIC honest
            double j = 0.9 + 0.1 * rng.uniform();
            paint(img, y, x, Rgb{col.r * j, col.g * j, col.b * j}, c);
            mask.data[(std::size_t)y * n + x] = 1.0;
        }
        break;
    }
    return {std::move(img), std::move(mask)};
}

void fill_split(const SyntheticSpec& spec, int count, std::uint64_t seed, LabeledImageSet& set,
                std::vector<Tensor>& masks) {
    int n = spec.image_size, c = spec.channels;
    set.images = Tensor({count, n, n, c});
    set.labels.resize(count);
    set.classes = spec.classes;
    masks.clear();
    masks.reserve(count);
    Rng rng(seed);
    std::size_t per = (std::size_t)n * n * c;
    for (int i = 0; i < count; ++i) {
        int klass = i % spec.classes; // exactly balanced when divisible
        DrawnImage d = draw_image(spec, klass, rng);
        std::copy(d.img.data.begin(), d.img.data.end(), set.images.data.begin() + i * per);
        set.labels[i] = klass;
        masks.push_back(std::move(d.mask));
    }
}

} // namespace

ShapesData generate_shapes(const SyntheticSpec& spec) {
    if (spec.classes < 1 || spec.classes > 10) throw Error("generate_shapes: classes must be 1..10");
    if (spec.image_size < 8) throw Error("generate_shapes: image too small");
    ShapesData out;
    fill_split(spec, spec.train_n, Rng::derive(spec.seed, 0xA11CE), out.train, out.train_masks);
    fill_split(spec, spec.test_n, Rng::derive(spec.seed, 0xBEEF), out.test, out.test_masks);
    out.train.split = "train";
    out.test.split = "test";
    out.train.provenance = out.test.provenance = spec.hash();
    out.train.channel_mean = compute_channel_mean(out.train.images);
    out.test.channel_mean = out.train.channel_mean; // train split is canonical
    return out;
}

LabeledImageSet load_idx_dataset(const std::string& images_path, const std::string& labels_path,
                                 int classes, const std::string& split) {
    LabeledImageSet set;
    Tensor imgs = load_idx(images_path);
    if (imgs.ndim() == 3) imgs = Tensor({imgs.shape[0], imgs.shape[1], imgs.shape[2], 1}, imgs.data);
    if (imgs.ndim() != 4) throw Error("idx dataset: images must be rank 3 or 4");
    set.images = std::move(imgs);
    set.labels = load_idx_labels(labels_path);
    if ((int)set.labels.size() != set.images.shape[0])
        throw Error("idx dataset: image/label count mismatch");
    set.classes = classes;
    for (int l : set.labels)
        if (l < 0 || l >= classes) throw Error("idx dataset: label out of range");
    set.split = split;
    set.provenance = images_path;
    set.channel_mean = compute_channel_mean(set.images);
    return set;
}

LabeledBatch sample_minibatch(const LabeledImageSet& source, int b, std::uint64_t seed,
                              bool stratified) {
    int n = source.size();
    if (n == 0) throw Error("sample_minibatch: empty source");
    if (b > n) throw Error("sample_minibatch: batch larger than source");
    Rng rng(Rng::derive(seed, 0x5A3B));
    std::vector<int> chosen;
    if (!stratified) {
        std::vector<int> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        rng.shuffle(idx);
        chosen.assign(idx.begin(), idx.begin() + b);
    } else {
        int per = b / source.classes;
        for (int k = 0; k < source.classes; ++k) {
            std::vector<int> pool;
            for (int i = 0; i < n; ++i)
                if (source.labels[i] == k) pool.push_back(i);
            if ((int)pool.size() < per)
                throw Error("sample_minibatch: class " + std::to_string(k) + " has too few samples");
            rng.shuffle(pool);
            chosen.insert(chosen.end(), pool.begin(), pool.begin() + per);
        }
    }
    LabeledBatch batch;
    std::size_t per_img = source.images.numel() / n;
    std::vector<int> s = source.images.shape;
    s[0] = (int)chosen.size();
    batch.images = Tensor(s);
    batch.labels.resize(chosen.size());
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        std::copy(source.images.data.begin() + chosen[i] * per_img,
                  source.images.data.begin() + (chosen[i] + 1) * per_img,
                  batch.images.data.begin() + i * per_img);
        batch.labels[i] = source.labels[chosen[i]];
    }
    return batch;
}

Tensor augment_image(const Tensor& img, bool flip, int dy, int dx, int pad) {
    int h = img.shape[0], w = img.shape[1], c = img.shape[2];
    Tensor out({h, w, c});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            int sx = flip ? (w - 1 - x) : x;
            int iy = y + dy - pad, ix = sx + dx - pad;
            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue; // zero pad
            for (int ch = 0; ch < c; ++ch)
                out.data[((std::size_t)y * w + x) * c + ch] =
                    img.data[((std::size_t)iy * w + ix) * c + ch];
        }
    return out;
}

LabeledBatch augment(const LabeledBatch& batch, Rng& rng) {
    int n = batch.size();
    if (batch.images.ndim() != 4) throw Error("augment: expects (N,H,W,C)");
    LabeledBatch out;
    out.images = Tensor(batch.images.shape);
    out.labels = batch.labels;
    int h = batch.images.shape[1], w = batch.images.shape[2], c = batch.images.shape[3];
    std::size_t per = (std::size_t)h * w * c;
    for (int i = 0; i < n; ++i) {
        bool flip = rng.coin();
        int dy = rng.below_int(5), dx = rng.below_int(5);
        Tensor img({h, w, c});
        std::copy(batch.images.data.begin() + i * per, batch.images.data.begin() + (i + 1) * per,
                  img.data.begin());
        Tensor aug = augment_image(img, flip, dy, dx);
        std::copy(aug.data.begin(), aug.data.end(), out.images.data.begin() + i * per);
    }
    return out;
}

LabeledBatch all_one_batch(const std::vector<int>& shape, const std::vector<int>& labels) {
    if (shape.empty() || shape[0] != (int)labels.size())
        throw Error("all_one_batch: shape/label mismatch");
    LabeledBatch b;
    b.images = Tensor(shape, 1.0);
    b.labels = labels;
    return b;
}

} // namespace plab
