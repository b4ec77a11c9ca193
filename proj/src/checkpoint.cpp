// SPDX-License-Identifier: Apache-2.0
#include "pit/checkpoint.hpp"

#include "pit/error.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

namespace pit {

namespace {

constexpr char kMagic[8] = {'P', 'I', 'T', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& is, const std::string& what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ParseError("checkpoint truncated while reading " + what);
  return v;
}

void put_tensor(std::ostream& os, const std::string& name, const Matrix& m) {
  put<std::uint32_t>(os, std::uint32_t(name.size()));
  os.write(name.data(), std::streamsize(name.size()));
  put<std::int64_t>(os, m.rows());
  put<std::int64_t>(os, m.cols());
  os.write(reinterpret_cast<const char*>(m.data()), std::streamsize(m.size() * sizeof(double)));
}

Matrix column(const Vector& v) { return Matrix(v); }
Vector as_vector(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

// Non-finite doubles are stored as strings.
nlohmann::json number(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

double number(const nlohmann::json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf") return INFINITY;
    if (s == "-inf") return -INFINITY;
    return NAN;
  }
  return j.get<double>();
}

nlohmann::json robust_json(const RobustStats& s) {
  return {{"median", number(s.median)}, {"iqr", number(s.iqr)}, {"floored", s.floored}};
}

RobustStats robust_from(const nlohmann::json& j) {
  return {number(j.at("median")), number(j.at("iqr")), j.at("floored").get<bool>()};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck,
                     const RunConfig& config, const Calibration* calibration) {
  RunConfig cfg = config;
  cfg.model = ck.model.config();
  nlohmann::json header;
  header["config"] = to_key_values(cfg).values();
  header["epoch"] = ck.epoch;
  header["best_val"] = number(ck.best_val);
  header["hurst_target"] = number(ck.hurst_target);
  const OptimizerState& opt = ck.optimizer;
  header["optimizer"] = {{"learning_rate", opt.learning_rate}, {"beta1", opt.beta1},
                         {"beta2", opt.beta2},                 {"eps", opt.eps},
                         {"clip_norm", opt.clip_norm},         {"step", opt.step}};
  if (calibration != nullptr) {
    header["calibration"] = {{"energy", robust_json(calibration->norm.energy)},
                             {"mismatch", robust_json(calibration->norm.mismatch)},
                             {"threshold", number(calibration->threshold)}};
  }
  const std::string text = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint64_t>(os, text.size());
  os.write(text.data(), std::streamsize(text.size()));

  const auto& params = ck.model.parameters();
  const bool moments = opt.first_moment.size() == params.size();
  const std::uint64_t count = params.size() * (moments ? 3 : 1) + 2;
  put<std::uint64_t>(os, count);
  for (const Parameter& p : params) put_tensor(os, p.name, p.tensor.value());
  if (moments) {
    for (std::size_t k = 0; k < params.size(); ++k) {
      put_tensor(os, "adam.m." + params[k].name, opt.first_moment[k]);
      put_tensor(os, "adam.v." + params[k].name, opt.second_moment[k]);
    }
  }
  put_tensor(os, "standardizer.mean", column(ck.standardizer.mean));
  put_tensor(os, "standardizer.stddev", column(ck.standardizer.stddev));
  if (!os) throw ParseError("failed writing checkpoint " + path.string());
}

SavedRun load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open checkpoint " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError(path.string() + " is not a checkpoint file");
  }
  const auto version = take<std::uint32_t>(is, "version");
  if (version != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_bytes = take<std::uint64_t>(is, "header size");
  std::string text(header_bytes, '\0');
  is.read(text.data(), std::streamsize(header_bytes));
  if (!is) throw ParseError("checkpoint truncated while reading header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }

  std::map<std::string, Matrix> tensors;
  const auto count = take<std::uint64_t>(is, "tensor count");
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto name_bytes = take<std::uint32_t>(is, "tensor name size");
    std::string name(name_bytes, '\0');
    is.read(name.data(), name_bytes);
    const auto rows = take<std::int64_t>(is, "rows of " + name);
    const auto cols = take<std::int64_t>(is, "cols of " + name);
    if (rows < 0 || cols < 0) throw ParseError("checkpoint tensor " + name + " has a negative shape");
    Matrix m(rows, cols);
    is.read(reinterpret_cast<char*>(m.data()), std::streamsize(m.size() * sizeof(double)));
    if (!is) throw ParseError("checkpoint truncated while reading " + name);
    tensors.emplace(std::move(name), std::move(m));
  }

  try {
    KeyValueConfig kv;
    for (const auto& [key, value] : header.at("config").items()) kv.set(key, value.get<std::string>());
    RunConfig cfg = run_config_from(kv);

    auto fetch = [&](const std::string& name) -> const Matrix& {
      const auto it = tensors.find(name);
      if (it == tensors.end()) throw ParseError("checkpoint is missing tensor " + name);
      return it->second;
    };

    PiTransformer model(cfg.model);
    std::vector<Matrix> values;
    for (const Parameter& p : model.parameters()) values.push_back(fetch(p.name));
    model.restore(values);

    OptimizerState opt;
    const auto& o = header.at("optimizer");
    opt.learning_rate = o.at("learning_rate").get<double>();
    opt.beta1 = o.at("beta1").get<double>();
    opt.beta2 = o.at("beta2").get<double>();
    opt.eps = o.at("eps").get<double>();
    opt.clip_norm = o.at("clip_norm").get<double>();
    opt.step = o.at("step").get<std::int64_t>();
    if (tensors.count("adam.m." + model.parameters().front().name)) {
      for (const Parameter& p : model.parameters()) {
        opt.first_moment.push_back(fetch("adam.m." + p.name));
        opt.second_moment.push_back(fetch("adam.v." + p.name));
      }
    }

    StandardizerStats stats{as_vector(fetch("standardizer.mean")),
                            as_vector(fetch("standardizer.stddev"))};
    SavedRun run{Checkpoint{std::move(model), cfg.train, std::move(opt), std::move(stats),
                            header.at("epoch").get<Index>(), number(header.at("best_val")),
                            number(header.at("hurst_target"))},
                 cfg, std::nullopt};
    if (header.contains("calibration")) {
      const auto& c = header.at("calibration");
      run.calibration = Calibration{{robust_from(c.at("energy")), robust_from(c.at("mismatch"))},
                                    number(c.at("threshold"))};
    }
    return run;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }
}

}  // namespace pit
