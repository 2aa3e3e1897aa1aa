#pragma once

#include "plab/concepts.hpp"

#include <cstdint>
#include <vector>

namespace plab {

// Coverage of valid pixels, from the explicit validity mask.
double coverage(const DiscriminativePatch& patch);
double coverage_from_mask(const Tensor& validity);
// Value-comparison fallback for raw images without a mask.
double coverage_vs_mean(const Tensor& image, const std::vector<double>& mean);

// Segment pool for one concept: the patches, plus the concept's TCAV.
struct ConceptPool {
    int concept_idx = 0;
    double tcav = 0.0;
    std::vector<const DiscriminativePatch*> segments;
};

// Compose one stitched patch for a class: concepts swept in ascending TCAV
// order, one random unused segment popped per concept per sweep, later
// writes overwriting earlier, until coverage >= sigma (checked between
// sweeps). Exhausted pools refill from the full segment list.
DiscriminativePatch super_stitch(const std::vector<ConceptPool>& concepts, int klass,
                                 double sigma, const std::vector<double>& mean, int height,
                                 int width, int channels, std::uint64_t seed,
                                 int sweep_cap = 50);

enum class SigmaMode { Fixed, SampleEndpoints }; // endpoints: {0.5, 0.75}

struct StitchConfig {
    double sigma = 0.75;
    SigmaMode mode = SigmaMode::SampleEndpoints;
    int per_class_count = 10;
    std::uint64_t seed = 1;
    int sweep_cap = 50;
};

PatchStore build_stitch_set(const PatchStore& source, const StitchConfig& cfg);

} // namespace plab
