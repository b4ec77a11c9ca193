// SPDX-License-Identifier: Apache-2.0
#include "pit/data.hpp"

#include "pit/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

namespace pit {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_cells(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

std::optional<double> parse_number(std::string_view cell) {
  if (cell.empty()) return std::nullopt;
  if (cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) return std::nullopt;
  return v;
}

std::string format_number(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return in;
}

}  // namespace

CsvMatrix read_csv_matrix(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  CsvMatrix out;
  std::vector<double> values;
  Index cols = -1;
  Index rows = 0;
  std::string line;
  Index line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_cells(line);
    if (first) {
      first = false;
      bool numeric = true;
      for (auto c : cells) numeric = numeric && parse_number(c).has_value();
      if (!numeric) {
        for (auto c : cells) out.header.emplace_back(c);
        cols = Index(cells.size());
        continue;
      }
    }
    if (cols < 0) cols = Index(cells.size());
    if (Index(cells.size()) != cols) {
      throw ParseError(path.string() + ": ragged row at line " + std::to_string(line_no) +
                       " (" + std::to_string(cells.size()) + " columns, expected " +
                       std::to_string(cols) + ")");
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const auto v = parse_number(cells[c]);
      if (!v) {
        throw ParseError(path.string() + ": non-numeric cell '" + std::string(cells[c]) +
                         "' at line " + std::to_string(line_no) + ", column " +
                         std::to_string(c + 1));
      }
      values.push_back(*v);
    }
    ++rows;
  }
  if (cols < 0) cols = 0;
  out.values = Series(rows, cols);
  for (Index i = 0; i < out.values.size(); ++i) out.values.data()[i] = values[std::size_t(i)];
  return out;
}

void write_csv_matrix(const std::filesystem::path& path, const Series& values,
                      const std::vector<std::string>& header) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  if (!header.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
    out << '\n';
  }
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) out << (j ? "," : "") << format_number(values(i, j));
    out << '\n';
  }
}

Labels read_labels(const std::filesystem::path& path) {
  const CsvMatrix m = read_csv_matrix(path);
  if (m.values.rows() > 0 && m.values.cols() != 1) {
    throw ParseError(path.string() + ": label file must have a single column, found " +
                     std::to_string(m.values.cols()));
  }
  Labels labels;
  labels.reserve(std::size_t(m.values.rows()));
  for (Index i = 0; i < m.values.rows(); ++i) {
    const double v = m.values(i, 0);
    if (v != 0.0 && v != 1.0) {
      throw ParseError(path.string() + ": label at row " + std::to_string(i + 1) +
                       " is not 0 or 1");
    }
    labels.push_back(v == 1.0 ? 1 : 0);
  }
  return labels;
}

void write_labels(const std::filesystem::path& path, const Labels& labels) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << "label\n";
  for (auto l : labels) out << int(l) << '\n';
}

RawDataset load_csv_dataset(const std::filesystem::path& train, const std::filesystem::path& test,
                            const std::filesystem::path& labels) {
  CsvMatrix tr = read_csv_matrix(train);
  CsvMatrix te = read_csv_matrix(test);
  RawDataset ds;
  ds.test_labels = read_labels(labels);
  if (tr.values.cols() != te.values.cols()) {
    throw ParseError("channel mismatch: train has " + std::to_string(tr.values.cols()) +
                     " columns, test has " + std::to_string(te.values.cols()));
  }
  if (Index(ds.test_labels.size()) != te.values.rows()) {
    throw ParseError("length mismatch: " + std::to_string(ds.test_labels.size()) +
                     " labels for " + std::to_string(te.values.rows()) + " test rows");
  }
  ds.channel_names = !tr.header.empty() ? tr.header : te.header;
  if (ds.channel_names.empty()) {
    for (Index c = 0; c < tr.values.cols(); ++c) ds.channel_names.push_back("ch" + std::to_string(c));
  }
  ds.train = std::move(tr.values);
  ds.test = std::move(te.values);
  return ds;
}

StandardizerStats fit_standardizer(const Series& train) {
  if (train.rows() == 0) throw ContractError("fit_standardizer: empty series");
  StandardizerStats s;
  const double n = double(train.rows());
  s.mean = train.colwise().sum().transpose() / n;
  s.stddev.resize(train.cols());
  for (Index c = 0; c < train.cols(); ++c) {
    const double var = (train.col(c).array() - s.mean(c)).square().sum() / n;
    s.stddev(c) = std::max(std::sqrt(var), kStdFloor);
  }
  return s;
}

Series standardize(const Series& data, const StandardizerStats& stats) {
  if (data.cols() != stats.mean.size()) {
    throw DimensionError("standardize: data has " + std::to_string(data.cols()) +
                         " channels, stats cover " + std::to_string(stats.mean.size()));
  }
  Series out = data;
  for (Index c = 0; c < data.cols(); ++c) {
    out.col(c) = (data.col(c).array() - stats.mean(c)) / stats.stddev(c);
  }
  return out;
}

Series destandardize(const Series& data, const StandardizerStats& stats) {
  if (data.cols() != stats.mean.size()) {
    throw DimensionError("destandardize: data has " + std::to_string(data.cols()) +
                         " channels, stats cover " + std::to_string(stats.mean.size()));
  }
  Series out = data;
  for (Index c = 0; c < data.cols(); ++c) {
    out.col(c) = data.col(c).array() * stats.stddev(c) + stats.mean(c);
  }
  return out;
}

Index window_count(Index series_length, Index window_length, Index stride) {
  if (window_length <= 0 || stride <= 0) throw ContractError("window_count: non-positive size");
  if (series_length < window_length) {
    throw ContractError("series of length " + std::to_string(series_length) +
                        " is shorter than the window length " + std::to_string(window_length));
  }
  return (series_length - window_length) / stride + 1;
}

std::vector<Matrix> windows(const Series& series, Index window_length, Index stride) {
  const Index count = window_count(series.rows(), window_length, stride);
  std::vector<Matrix> out;
  out.reserve(std::size_t(count));
  for (Index k = 0; k < count; ++k) out.emplace_back(window_view(series, k * stride, window_length));
  return out;
}

TrainValSplit split_train_val(const Series& series, double val_fraction, Index window_length) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ContractError("split_train_val: fraction must be in (0, 1)");
  }
  const Index n = series.rows();
  const Index n_val = static_cast<Index>(std::llround(double(n) * val_fraction));
  const Index n_train = n - n_val;
  if (n_val < window_length || n_train < window_length) {
    throw ContractError("split_train_val: fraction " + std::to_string(val_fraction) + " of " +
                        std::to_string(n) + " rows leaves " + std::to_string(n_train) + "/" +
                        std::to_string(n_val) + ", shorter than the window length " +
                        std::to_string(window_length));
  }
  return TrainValSplit{series.topRows(n_train), series.bottomRows(n_val)};
}

}  // namespace pit
