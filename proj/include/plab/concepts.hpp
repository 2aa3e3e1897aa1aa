#pragma once

#include "plab/datasets.hpp"
#include "plab/slic.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace plab {

// Full-size canvas: segment pixels at their original positions, per-channel
// dataset mean everywhere else. Validity mask carries the coverage
// bookkeeping so mean-colored content is never miscounted.
struct DiscriminativePatch {
    Tensor image;    // (H,W,C)
    Tensor validity; // (H,W) 0/1
    int klass = 0;
    int concept_idx = -1; // p; -1 for unclustered (random-segment) patches
    int segment_idx = 0;  // q
    int label = 0;
    double tcav = 0.0;
    double coverage = 0.0;
    int source_image_id = -1;
    std::vector<std::pair<int, int>> stitched_from; // (p,q) list, stitch order
};

struct ConceptCluster {
    int klass = 0;
    int concept_idx = 0;
    std::vector<int> members; // indices into a patch list
    std::vector<double> centroid;
    double tcav = 0.0;
    double cav_accuracy = 0.0;
};

struct Cav {
    std::vector<double> v; // unit norm
    double accuracy = 0.0;
    bool degenerate = false;
};

struct PatchStore {
    std::vector<DiscriminativePatch> patches;
    std::vector<double> channel_mean; // canonical fill value, frozen at creation
    int classes = 0;
    int height = 0, width = 0, channels = 0;
    std::vector<std::string> warnings;
};

DiscriminativePatch make_patch(const Tensor& image, const Segment& segment,
                               const std::vector<double>& mean);

// Logistic-regression separator (500 full-batch GD steps, lr 0.1, L2 1e-4);
// the CAV is the unit weight vector oriented toward the concept set.
Cav train_cav(const Tensor& concept_acts, const Tensor& random_acts, std::uint64_t seed);

// Fraction of patches whose class-k logit directional derivative along the
// CAV is strictly positive.
double tcav_score(const NetworkSpec& spec, const ParameterSet& params, int k,
                  const std::vector<const DiscriminativePatch*>& patches, const Cav& cav);

struct ExtractConfig {
    std::vector<int> slic_scales = {15, 50};
    double slic_compactness = 10.0;
    int clusters_per_class = 10;   // K before TCAV filtering
    int min_cluster_population = 5;
    int top_concepts = 5;          // N kept per class
    int random_counterexamples = 200;
    int images_per_class = 0;      // 0 = all
    int min_segment_px = 8;
    double dedup_overlap = 0.95;
    std::uint64_t seed = 1;
};

// ACE-style extraction against a trained classifier. Per class: SLIC at the
// configured scales, mean-fill canvassing, bottleneck embedding, K-means,
// CAV training against random other-class segments, TCAV ranking, top-N keep.
PatchStore extract_discriminative_patches(const NetworkSpec& spec, const ParameterSet& params,
                                          const LabeledImageSet& dataset,
                                          const ExtractConfig& config);

// Ablation store: uniformly random SLIC segments, no clustering, no TCAV.
PatchStore random_segment_store(const LabeledImageSet& dataset, int count, std::uint64_t seed,
                                const ExtractConfig& config = {});

} // namespace plab
