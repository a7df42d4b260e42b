#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "passdoor/evalsuite.hpp"
#include "passdoor/image.hpp"

namespace passdoor {

enum class DistortKind { blur, noise, jpeg, crop };

std::string distort_kind_name(DistortKind k);
DistortKind distort_kind_from_name(const std::string& s);

/// The documented level schedules. blur: Gaussian radius (kernel side
/// 2r+1); noise: sigma on the [0,255] scale; jpeg: quality factor;
/// crop: retained side fraction (the 512-based schedule 500..420
/// normalized so it transfers to any resolution).
std::vector<double> distortion_schedule(DistortKind k);

/// Applies one distortion. Output stays in [0,255] at the input shape
/// (crop resizes back). blur/jpeg/crop are deterministic; noise is
/// deterministic per seed. Degenerate levels (radius 0, sigma 0,
/// fraction 1) are the identity.
Image distort(const Image& x, DistortKind kind, double level, std::uint64_t seed = 0);

struct RobustnessCell {
  double level = 0.0;
  double asr = 0.0;
};

struct RobustnessTable {
  double base_asr = 0.0;  // trigger applied, no distortion
  std::map<std::string, std::vector<RobustnessCell>> cells;  // kind -> per-level

  std::string to_json() const;
  static RobustnessTable from_json(const std::string& text);
};

/// Full grid of the four distortion schedules; triggers are applied
/// first, the distortion second.
RobustnessTable robustness_sweep(DetectorModel& model, GeneratorBundle& bundle,
                                 const PoisonPlan& plan, const Manifest& test,
                                 std::uint64_t noise_seed);

}  // namespace passdoor
