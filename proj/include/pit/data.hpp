// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "pit/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace pit {

// Rows are time steps, columns are channels.
using Series = Matrix;
using Labels = std::vector<std::uint8_t>;

struct RawDataset {
  Series train;
  Series test;
  Labels test_labels;
  std::vector<std::string> channel_names;
};

// Numeric matrix CSV. A first row containing any non-numeric cell is taken as
// a header. Throws ParseError naming row/column for ragged rows and
// non-numeric cells.
struct CsvMatrix {
  Series values;
  std::vector<std::string> header;  // empty when the file has none
};
CsvMatrix read_csv_matrix(const std::filesystem::path& path);
void write_csv_matrix(const std::filesystem::path& path, const Series& values,
                      const std::vector<std::string>& header = {});

// Single 0/1 column, optional header.
Labels read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const Labels& labels);

// Throws ParseError on ragged or non-numeric content and on label/test length
// or train/test channel mismatches.
RawDataset load_csv_dataset(const std::filesystem::path& train, const std::filesystem::path& test,
                            const std::filesystem::path& labels);

struct StandardizerStats {
  Vector mean;
  Vector stddev;  // population, floored at kStdFloor
};
inline constexpr double kStdFloor = 1e-8;

StandardizerStats fit_standardizer(const Series& train);
Series standardize(const Series& data, const StandardizerStats& stats);
Series destandardize(const Series& data, const StandardizerStats& stats);

// Rows [start, start + length) as a view.
inline auto window_view(const Series& series, Index start, Index length) {
  return series.middleRows(start, length);
}
Index window_count(Index series_length, Index window_length, Index stride = 1);
// Materialized stride windows; window k covers rows [k*stride, k*stride + L).
std::vector<Matrix> windows(const Series& series, Index window_length, Index stride = 1);

struct TrainValSplit {
  Series train;
  Series val;
};
// Chronological split; the validation part is the final round(N * fraction)
// rows. Throws ContractError when either side would be shorter than
// window_length.
TrainValSplit split_train_val(const Series& series, double val_fraction, Index window_length);

}  // namespace pit
