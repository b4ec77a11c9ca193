// SPDX-License-Identifier: Apache-2.0
//
// Synthetic multichannel benchmark with five canonical anomaly types.
//
// Base process, channel c at time t:
//   sin(2 pi t / (L/4) + phi_c) + sin(2 pi t / (L/1.5) + psi_c) + noise * N(0, 1)
// with fixed per-channel offsets phi_c, psi_c and L = period_scale.
//
// Injection over a segment [start, start + length), sigma = noise:
//   point       +magnitude * sigma on one channel at every segment index
//   contextual  one channel moved magnitude * sigma toward the centre of its
//               range, clamped to the clean channel's global range
//   collective  all channels held at their onset value + magnitude * sigma
//   seasonal    both sinusoids phase-shifted by magnitude * pi
//   trend       all channels plus a ramp reaching magnitude * sigma at the end
// Labels are 1 exactly on the segments.
#pragma once

#include "pit/data.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pit {

enum class AnomalyType { kPoint, kContextual, kCollective, kSeasonal, kTrend };

std::string to_string(AnomalyType type);
AnomalyType anomaly_type_from_string(const std::string& name);

struct AnomalySegment {
  AnomalyType type = AnomalyType::kPoint;
  Index start = 0;
  Index length = 1;
  double magnitude = 10.0;
  Index channel = 0;  // used by point and contextual
};

struct SyntheticSpec {
  Index length = 4000;
  Index channels = 3;
  Index period_scale = 100;
  double noise = 0.1;
  AnomalyType type = AnomalyType::kPoint;
  std::vector<AnomalySegment> segments;
  std::uint64_t seed = 0;

  // Throws ConfigError for out-of-bounds or overlapping segments.
  void validate() const;
};

struct SyntheticData {
  Series train;
  Series test;
  Series clean_test;  // test before injection (same noise draw)
  Labels labels;
};

SyntheticData synth_generate(const SyntheticSpec& spec);

// Noise-free base value of channel c at time t, with an extra phase shift (in
// radians) applied to both sinusoids.
double synth_base_value(const SyntheticSpec& spec, Index channel, double t, double phase_shift = 0.0);

// One segment of the given type placed at 40% of the series, with a default
// magnitude and length.
AnomalySegment default_segment(AnomalyType type, Index length, Index period_scale);

// Spec from key = value text. Keys: length, channels, period_scale, noise,
// type, seed, segments. segments is a ';'-separated list of
// type:start:length:magnitude[:channel]. When no segments are given, the
// default segment of `type` is used.
SyntheticSpec parse_synthetic_spec(const std::string& text);
std::string format_synthetic_spec(const SyntheticSpec& spec);

}  // namespace pit
