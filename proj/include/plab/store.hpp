#pragma once

#include "plab/concepts.hpp"

#include <string>

namespace plab {

// Patch store directory layout:
//   images.idx    double IDX (N,H,W,C)
//   masks.idx     ubyte IDX (N,H,W) validity
//   manifest.jsonl  one record per patch, store order:
//       {"class","concept","segment","tcav","coverage","source_image_id"}
//       stitched patches carry "concept":"stitched" and "stitched_from"
//   meta.json     channel mean, classes, dims
void save_patch_store(const std::string& dir, const PatchStore& store);
PatchStore load_patch_store(const std::string& dir);

} // namespace plab
