// SPDX-License-Identifier: Apache-2.0
#include "pit/synth.hpp"

#include "pit/config.hpp"
#include "pit/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace pit {

std::string to_string(AnomalyType type) {
  switch (type) {
    case AnomalyType::kPoint:
      return "point";
    case AnomalyType::kContextual:
      return "contextual";
    case AnomalyType::kCollective:
      return "collective";
    case AnomalyType::kSeasonal:
      return "seasonal";
    case AnomalyType::kTrend:
      return "trend";
  }
  return "point";
}

AnomalyType anomaly_type_from_string(const std::string& name) {
  if (name == "point") return AnomalyType::kPoint;
  if (name == "contextual") return AnomalyType::kContextual;
  if (name == "collective") return AnomalyType::kCollective;
  if (name == "seasonal") return AnomalyType::kSeasonal;
  if (name == "trend") return AnomalyType::kTrend;
  throw ConfigError("unknown anomaly type '" + name +
                    "' (expected point, contextual, collective, seasonal, trend)");
}

void SyntheticSpec::validate() const {
  if (length <= 0 || channels <= 0 || period_scale <= 0) {
    throw ConfigError("synthetic spec: length, channels and period_scale must be positive");
  }
  if (!(noise >= 0.0)) throw ConfigError("synthetic spec: noise must be >= 0");
  std::vector<AnomalySegment> sorted = segments;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.start < b.start; });
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    const AnomalySegment& s = sorted[k];
    if (s.start < 0 || s.length <= 0 || s.start + s.length > length) {
      throw ConfigError("synthetic spec: segment at " + std::to_string(s.start) + " with length " +
                        std::to_string(s.length) + " is outside [0, " + std::to_string(length) +
                        ")");
    }
    if (s.channel < 0 || s.channel >= channels) {
      throw ConfigError("synthetic spec: segment channel " + std::to_string(s.channel) +
                        " out of range");
    }
    if (!std::isfinite(s.magnitude)) throw ConfigError("synthetic spec: non-finite magnitude");
    if (k > 0 && sorted[k - 1].start + sorted[k - 1].length > s.start) {
      throw ConfigError("synthetic spec: segments starting at " +
                        std::to_string(sorted[k - 1].start) + " and " + std::to_string(s.start) +
                        " overlap");
    }
  }
}

double synth_base_value(const SyntheticSpec& spec, Index channel, double t, double phase_shift) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double p1 = double(spec.period_scale) / 4.0;
  const double p2 = double(spec.period_scale) / 1.5;
  const double c = double(channel);
  const double n = double(spec.channels);
  const double phi = std::numbers::pi * c / n;
  const double psi = two_pi * c / n + 0.5;
  return std::sin(two_pi * t / p1 + phi + phase_shift) + std::sin(two_pi * t / p2 + psi + phase_shift);
}

namespace {

Series base_series(const SyntheticSpec& spec, double t0, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Series x(spec.length, spec.channels);
  for (Index t = 0; t < spec.length; ++t) {
    for (Index c = 0; c < spec.channels; ++c) {
      x(t, c) = synth_base_value(spec, c, t0 + double(t)) + spec.noise * gauss(rng);
    }
  }
  return x;
}

}  // namespace

SyntheticData synth_generate(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 train_rng(spec.seed);
  std::mt19937_64 test_rng(spec.seed ^ 0xa5a5a5a5deadbeefULL);
  SyntheticData out;
  out.train = base_series(spec, 0.0, train_rng);
  const double t0 = double(spec.length);
  out.clean_test = base_series(spec, t0, test_rng);
  out.test = out.clean_test;
  out.labels.assign(std::size_t(spec.length), 0);

  const double sigma = spec.noise;
  for (const AnomalySegment& s : spec.segments) {
    const Index end = s.start + s.length;
    for (Index t = s.start; t < end; ++t) out.labels[std::size_t(t)] = 1;
    switch (s.type) {
      case AnomalyType::kPoint:
        for (Index t = s.start; t < end; ++t) out.test(t, s.channel) += s.magnitude * sigma;
        break;
      case AnomalyType::kContextual: {
        const double lo = out.clean_test.col(s.channel).minCoeff();
        const double hi = out.clean_test.col(s.channel).maxCoeff();
        for (Index t = s.start; t < end; ++t) {
          const double seasonal = synth_base_value(spec, s.channel, t0 + double(t));
          const double toward_centre = seasonal >= 0.0 ? -1.0 : 1.0;
          const double moved = out.test(t, s.channel) + toward_centre * s.magnitude * sigma;
          out.test(t, s.channel) = std::clamp(moved, lo, hi);
        }
        break;
      }
      case AnomalyType::kCollective:
        for (Index c = 0; c < spec.channels; ++c) {
          const double level = synth_base_value(spec, c, t0 + double(s.start)) + s.magnitude * sigma;
          for (Index t = s.start; t < end; ++t) {
            const double noise = out.clean_test(t, c) - synth_base_value(spec, c, t0 + double(t));
            out.test(t, c) = level + noise;
          }
        }
        break;
      case AnomalyType::kSeasonal:
        for (Index c = 0; c < spec.channels; ++c) {
          for (Index t = s.start; t < end; ++t) {
            const double tt = t0 + double(t);
            out.test(t, c) += synth_base_value(spec, c, tt, s.magnitude * std::numbers::pi) -
                              synth_base_value(spec, c, tt);
          }
        }
        break;
      case AnomalyType::kTrend:
        for (Index c = 0; c < spec.channels; ++c) {
          for (Index t = s.start; t < end; ++t) {
            out.test(t, c) += s.magnitude * sigma * double(t - s.start + 1) / double(s.length);
          }
        }
        break;
    }
  }
  return out;
}

AnomalySegment default_segment(AnomalyType type, Index length, Index period_scale) {
  AnomalySegment s;
  s.type = type;
  s.start = static_cast<Index>(double(length) * 0.4);
  switch (type) {
    case AnomalyType::kPoint:
      s.length = 1;
      s.magnitude = 10.0;
      break;
    case AnomalyType::kContextual:
      s.length = std::max<Index>(1, period_scale / 2);
      s.magnitude = 8.0;
      break;
    case AnomalyType::kCollective:
      s.length = std::max<Index>(1, period_scale / 2);
      s.magnitude = 3.0;
      break;
    case AnomalyType::kSeasonal:
      s.length = period_scale;
      s.magnitude = 1.0;
      break;
    case AnomalyType::kTrend:
      s.length = period_scale;
      s.magnitude = 20.0;
      break;
  }
  s.length = std::min(s.length, length - s.start);
  return s;
}

SyntheticSpec parse_synthetic_spec(const std::string& text) {
  const KeyValueConfig kv = KeyValueConfig::parse(text);
  SyntheticSpec spec;
  spec.length = kv.get_int("length", spec.length);
  spec.channels = kv.get_int("channels", spec.channels);
  spec.period_scale = kv.get_int("period_scale", spec.period_scale);
  spec.noise = kv.get_double("noise", spec.noise);
  spec.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  spec.type = anomaly_type_from_string(kv.get_string("type", "point"));
  const std::string segs = kv.get_string("segments", "");
  std::istringstream list(segs);
  std::string item;
  while (std::getline(list, item, ';')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> parts;
    std::istringstream fields(item);
    std::string f;
    while (std::getline(fields, f, ':')) {
      const auto b = f.find_first_not_of(" \t");
      const auto e = f.find_last_not_of(" \t");
      parts.push_back(b == std::string::npos ? "" : f.substr(b, e - b + 1));
    }
    if (parts.size() < 4 || parts.size() > 5) {
      throw ConfigError("segments: '" + item + "' is not type:start:length:magnitude[:channel]");
    }
    AnomalySegment s;
    s.type = anomaly_type_from_string(parts[0]);
    s.start = parse_int("segments.start", parts[1]);
    s.length = parse_int("segments.length", parts[2]);
    s.magnitude = parse_double("segments.magnitude", parts[3]);
    if (parts.size() == 5) s.channel = parse_int("segments.channel", parts[4]);
    spec.segments.push_back(s);
  }
  if (!kv.has("segments")) {
    spec.segments.push_back(default_segment(spec.type, spec.length, spec.period_scale));
  }
  spec.validate();
  return spec;
}

std::string format_synthetic_spec(const SyntheticSpec& spec) {
  std::ostringstream os;
  os << "length = " << spec.length << '\n'
     << "channels = " << spec.channels << '\n'
     << "period_scale = " << spec.period_scale << '\n'
     << "noise = " << spec.noise << '\n'
     << "type = " << to_string(spec.type) << '\n'
     << "seed = " << spec.seed << '\n'
     << "segments = ";
  for (std::size_t k = 0; k < spec.segments.size(); ++k) {
    const AnomalySegment& s = spec.segments[k];
    os << (k ? ";" : "") << to_string(s.type) << ':' << s.start << ':' << s.length << ':'
       << s.magnitude << ':' << s.channel;
  }
  os << '\n';
  return os.str();
}

}  // namespace pit
