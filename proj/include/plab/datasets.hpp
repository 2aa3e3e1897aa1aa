#pragma once

#include "plab/engine.hpp"
#include "plab/rng.hpp"
#include "plab/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace plab {

struct LabeledImageSet {
    Tensor images;            // (N,H,W,C)
    std::vector<int> labels;  // in [0, classes)
    int classes = 0;
    std::vector<double> channel_mean; // per channel, from the train split
    std::string split;        // "train" | "test"
    std::string provenance;   // idx path or synthetic spec hash

    int size() const { return images.shape.empty() ? 0 : images.shape[0]; }
    int height() const { return images.shape[1]; }
    int width() const { return images.shape[2]; }
    int channels() const { return images.shape[3]; }

    Tensor image(int i) const; // (H,W,C) copy
};

std::vector<double> compute_channel_mean(const Tensor& images);

struct SyntheticSpec {
    int classes = 10;
    int image_size = 32;
    int channels = 3;
    int train_n = 1000;
    int test_n = 400;
    int min_shape_px = 60;
    int max_shape_px = 200;
    double clutter_density = 1.0;
    std::uint64_t seed = 1;

    std::string canonical() const; // key-sorted text record
    std::string hash() const;      // names the dataset
};

struct ShapesData {
    LabeledImageSet train;
    LabeledImageSet test;
    std::vector<Tensor> train_masks; // (H,W) 0/1 ground truth, train split
    std::vector<Tensor> test_masks;
};

// One label-determining shape per image plus palette-colored clutter;
// ground-truth shape masks are emitted alongside.
ShapesData generate_shapes(const SyntheticSpec& spec);

LabeledImageSet load_idx_dataset(const std::string& images_path, const std::string& labels_path,
                                 int classes, const std::string& split);

// Uniform sampling without replacement; stratified mode takes
// floor(b/classes) per class.
LabeledBatch sample_minibatch(const LabeledImageSet& source, int b, std::uint64_t seed,
                              bool stratified = false);

// Random horizontal flip (p=0.5) + random crop with 2 px zero pad.
LabeledBatch augment(const LabeledBatch& batch, Rng& rng);
Tensor augment_image(const Tensor& img, bool flip, int dy, int dx, int pad = 2);

LabeledBatch all_one_batch(const std::vector<int>& shape, const std::vector<int>& labels);

} // namespace plab
