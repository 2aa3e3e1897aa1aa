#include "plab/slic.hpp"

#include <algorithm>
#include <cmath>

namespace plab {

SlicResult slic_segment(const Tensor& image, int n_segments, double compactness) {
    if (image.ndim() != 3) throw Error("slic: image must be (H,W,C)");
    int h = image.shape[0], w = image.shape[1], c = image.shape[2];
    if (c != 1 && c != 3) throw Error("slic: channels must be 1 or 3");
    if (h < 2 || w < 2) throw Error("slic: degenerate image dimensions");
    if (n_segments < 1) throw Error("slic: n_segments must be >= 1");

    if (n_segments == 1) {
        SlicResult r;
        r.labels.assign((std::size_t)h * w, 0);
        r.n_labels = 1;
        return r;
    }

    double S = std::sqrt((double)h * w / n_segments);
    double color_w = compactness / S;

    // grid-seeded centroids; feature = (color * m/S, x, y)
    int gy = std::max(1, (int)std::lround(std::sqrt((double)n_segments * h / w)));
    int gx = std::max(1, (int)std::lround((double)n_segments / gy));
    while (gy * gx > n_segments) (gy >= gx ? gy : gx)--;
    int k = gy * gx;

    auto feature = [&](int y, int x, double* f) {
        for (int ch = 0; ch < c; ++ch)
            f[ch] = color_w * image.data[((std::size_t)y * w + x) * c + ch];
        f[c] = (double)x;
        f[c + 1] = (double)y;
    };

    int fd = c + 2;
    std::vector<double> cent((std::size_t)k * fd, 0.0);
    std::vector<double> cy(k), cx(k);
    int ci = 0;
    for (int iy = 0; iy < gy; ++iy)
        for (int ix = 0; ix < gx; ++ix, ++ci) {
            int y = (int)((iy + 0.5) * h / gy);
            int x = (int)((ix + 0.5) * w / gx);
            feature(y, x, &cent[(std::size_t)ci * fd]);
            cy[ci] = y;
            cx[ci] = x;
        }

    std::vector<int> labels((std::size_t)h * w, 0);
    std::vector<double> f(fd);
    double window = 2.0 * S;
    for (int iter = 0; iter < 10; ++iter) {
        // assignment; centroid fallback by full scan keeps every pixel labeled
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                feature(y, x, f.data());
                double best = 1e300;
                int bi = 0;
                bool any = false;
                for (int j = 0; j < k; ++j) {
                    if (std::fabs(cy[j] - y) > window || std::fabs(cx[j] - x) > window) continue;
                    double d = 0.0;
                    const double* cf = &cent[(std::size_t)j * fd];
                    for (int t = 0; t < fd; ++t) d += (f[t] - cf[t]) * (f[t] - cf[t]);
                    if (d < best) {
                        best = d;
                        bi = j;
                        any = true;
                    }
                }
                if (!any) {
                    for (int j = 0; j < k; ++j) {
                        double d = 0.0;
                        const double* cf = &cent[(std::size_t)j * fd];
                        for (int t = 0; t < fd; ++t) d += (f[t] - cf[t]) * (f[t] - cf[t]);
                        if (d < best) {
                            best = d;
                            bi = j;
                        }
                    }
                }
                labels[(std::size_t)y * w + x] = bi;
            }
        // update
        std::vector<double> sum((std::size_t)k * fd, 0.0);
        std::vector<int> count(k, 0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                int j = labels[(std::size_t)y * w + x];
                feature(y, x, f.data());
                for (int t = 0; t < fd; ++t) sum[(std::size_t)j * fd + t] += f[t];
                ++count[j];
            }
        double movement = 0.0;
        for (int j = 0; j < k; ++j) {
            if (count[j] == 0) continue;
            for (int t = 0; t < fd; ++t) {
                double nv = sum[(std::size_t)j * fd + t] / count[j];
                movement = std::max(movement, std::fabs(nv - cent[(std::size_t)j * fd + t]));
                cent[(std::size_t)j * fd + t] = nv;
            }
            cx[j] = cent[(std::size_t)j * fd + c];
            cy[j] = cent[(std::size_t)j * fd + c + 1];
        }
        if (movement < 1e-3) break;
    }

    // compact labels
    std::vector<int> remap(k, -1);
    int next = 0;
    SlicResult r;
    r.labels.resize((std::size_t)h * w);
    for (std::size_t i = 0; i < r.labels.size(); ++i) {
        int j = labels[i];
        if (remap[j] < 0) remap[j] = next++;
        r.labels[i] = remap[j];
    }
    r.n_labels = next;
    return r;
}

std::vector<Segment> segments_from_labels(const SlicResult& slic, int h, int w, int image_id,
                                          int klass, int min_px) {
    std::vector<Segment> out;
    for (int lbl = 0; lbl < slic.n_labels; ++lbl) {
        Segment s;
        s.image_id = image_id;
        s.klass = klass;
        s.mask = Tensor({h, w});
        s.y0 = h;
        s.x0 = w;
        s.y1 = -1;
        s.x1 = -1;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (slic.labels[(std::size_t)y * w + x] == lbl) {
                    s.mask.data[(std::size_t)y * w + x] = 1.0;
                    ++s.area;
                    s.y0 = std::min(s.y0, y);
                    s.x0 = std::min(s.x0, x);
                    s.y1 = std::max(s.y1, y);
                    s.x1 = std::max(s.x1, x);
                }
        if (s.area >= min_px) out.push_back(std::move(s));
    }
    return out;
}

std::vector<Segment> dedup_segments(std::vector<Segment> segs, double max_overlap) {
    std::vector<Segment> out;
    for (auto& s : segs) {
        bool dup = false;
        for (const auto& kept : out) {
            if (kept.image_id != s.image_id) continue;
            if (kept.y1 < s.y0 || s.y1 < kept.y0 || kept.x1 < s.x0 || s.x1 < kept.x0) continue;
            int inter = 0;
            for (std::size_t i = 0; i < s.mask.numel(); ++i)
                if (s.mask[i] != 0.0 && kept.mask[i] != 0.0) ++inter;
            if ((double)inter / std::min(s.area, kept.area) > max_overlap) {
                dup = true;
                break;
            }
        }
        if (!dup) out.push_back(std::move(s));
    }
    return out;
}

} // namespace plab
