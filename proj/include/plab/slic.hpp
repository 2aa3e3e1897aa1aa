#pragma once

#include "plab/tensor.hpp"

#include <vector>

namespace plab {

struct SlicResult {
    std::vector<int> labels; // H*W, row-major; compact labels [0, n_labels)
    int n_labels = 0;
};

// Superpixel segmentation: iterative k-means over (color * m/S, x, y)
// features, centroids seeded on a grid. Every pixel ends up with exactly one
// label and the label count never exceeds the request.
SlicResult slic_segment(const Tensor& image, int n_segments, double compactness = 10.0);

struct Segment {
    int image_id = 0;
    int klass = 0;
    Tensor mask; // (H,W) 0/1
    int y0 = 0, x0 = 0, y1 = 0, x1 = 0; // bounding box, inclusive
    int area = 0;
};

// Segments of one image from a SLIC label map; drops segments smaller than
// min_px.
std::vector<Segment> segments_from_labels(const SlicResult& slic, int h, int w, int image_id,
                                          int klass, int min_px = 8);

// Removes segments with > max_overlap pixel overlap (relative to the smaller
// one) against an earlier segment of the same image.
std::vector<Segment> dedup_segments(std::vector<Segment> segs, double max_overlap = 0.95);

} // namespace plab
