#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "passdoor/image.hpp"
#include "passdoor/manifest.hpp"

namespace passdoor {

/// Fake sample together with its artifact-free counterpart and the
/// artifact bounding box; used by tests to check the forgery is real
/// and stays inside its region.
struct SynthPair {
  Image real;
  Image fake;
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // artifact rect, half-open
};

/// Procedural face-like sample for class `label` (0 fake, 1 real) of the
/// named variant ("synthA" or "synthB"; the variants differ in artifact
/// style). Deterministic in (variant, seed, index, resolution).
Image synth_sample(const std::string& variant, std::uint64_t seed, int index, int label,
                   int resolution);

/// Paired mode: the fake sample at `index` plus its artifact-free base.
SynthPair synth_pair(const std::string& variant, std::uint64_t seed, int index,
                     int resolution);

/// Write n_per_class real and n_per_class fake PNGs under
/// out_dir/real and out_dir/fake and return the manifest (records
/// sorted by id, role clean, assigned = true label). n_per_class >= 50.
Manifest generate_synthetic_dataset(const std::string& variant, std::uint64_t seed,
                                    int n_per_class, int resolution,
                                    const std::filesystem::path& out_dir);

}  // namespace passdoor
