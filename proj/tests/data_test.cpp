// SPDX-License-Identifier: Apache-2.0
#include "op_cases.hpp"

#include "pit/data.hpp"
#include "pit/error.hpp"
#include "pit/synth.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace pit {
namespace {

namespace fs = std::filesystem;

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("pit_data_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& text) const {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p;
  }

  fs::path dir_;
};

using Csv = TempDir;

TEST_F(Csv, ReadsNumericMatrix) {
  const CsvMatrix m = read_csv_matrix(write("a.csv", "1,2\n3,4\n"));
  EXPECT_TRUE(m.header.empty());
  EXPECT_EQ(m.values, (Matrix(2, 2) << 1, 2, 3, 4).finished());
}

TEST_F(Csv, DetectsHeader) {
  const CsvMatrix m = read_csv_matrix(write("a.csv", "temp, load\n1.5,-2e3\n"));
  EXPECT_EQ(m.header, (std::vector<std::string>{"temp", "load"}));
  EXPECT_EQ(m.values.rows(), 1);
  EXPECT_EQ(m.values(0, 1), -2000.0);
}

TEST_F(Csv, RaggedRowNamesTheLine) {
  try {
    read_csv_matrix(write("a.csv", "1,2\n3\n"));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST_F(Csv, NonNumericCellIsRejected) {
  EXPECT_THROW(read_csv_matrix(write("a.csv", "1,2\n3,x\n")), ParseError);
}

TEST_F(Csv, RoundTrip) {
  const Matrix m = testing::random_matrix(5, 3, 1);
  const fs::path p = dir_ / "m.csv";
  write_csv_matrix(p, m, {"a", "b", "c"});
  const CsvMatrix back = read_csv_matrix(p);
  EXPECT_EQ(back.values, m);
  EXPECT_EQ(back.header, (std::vector<std::string>{"a", "b", "c"}));
}

TEST_F(Csv, Labels) {
  EXPECT_EQ(read_labels(write("l.csv", "label\n0\n1\n1\n")), (Labels{0, 1, 1}));
  EXPECT_THROW(read_labels(write("bad.csv", "0\n2\n")), ParseError);
  EXPECT_THROW(read_labels(write("wide.csv", "0,1\n")), ParseError);
  const fs::path p = dir_ / "out.csv";
  write_labels(p, {1, 0});
  EXPECT_EQ(read_labels(p), (Labels{1, 0}));
}

TEST_F(Csv, MissingFile) {
  EXPECT_THROW(read_csv_matrix(dir_ / "none.csv"), ParseError);
}

using Dataset = TempDir;

TEST_F(Dataset, LoadsAllThreeFiles) {
  const RawDataset d = load_csv_dataset(write("tr.csv", "a,b\n1,2\n3,4\n"), write("te.csv", "5,6\n"),
                                        write("l.csv", "1\n"));
  EXPECT_EQ(d.train.rows(), 2);
  EXPECT_EQ(d.test.rows(), 1);
  EXPECT_EQ(d.test_labels, Labels{1});
  EXPECT_EQ(d.channel_names, (std::vector<std::string>{"a", "b"}));
}

TEST_F(Dataset, LabelLengthMismatchNamesBothLengths) {
  try {
    load_csv_dataset(write("tr.csv", "1,2\n"), write("te.csv", "1,2\n3,4\n5,6\n"), write("l.csv", "0\n1\n"));
    FAIL();
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find('2'), std::string::npos) << msg;
    EXPECT_NE(msg.find('3'), std::string::npos) << msg;
  }
}

TEST_F(Dataset, ChannelMismatch) {
  EXPECT_THROW(load_csv_dataset(write("tr.csv", "1,2\n"), write("te.csv", "1\n"), write("l.csv", "0\n")),
               ParseError);
}

TEST(Standardizer, ZeroMeanUnitVariance) {
  const Series s = testing::random_matrix(200, 3, 2, -4.0, 9.0);
  const StandardizerStats stats = fit_standardizer(s);
  const Series z = standardize(s, stats);
  for (Index c = 0; c < 3; ++c) {
    EXPECT_NEAR(z.col(c).mean(), 0.0, 1e-12);
    EXPECT_NEAR(std::sqrt(z.col(c).squaredNorm() / 200.0), 1.0, 1e-12);
  }
}

TEST(Standardizer, ConstantChannelMapsToZero) {
  Series s = testing::random_matrix(50, 2, 3);
  s.col(1).setConstant(4.0);
  const StandardizerStats stats = fit_standardizer(s);
  EXPECT_EQ(stats.stddev(1), kStdFloor);
  EXPECT_EQ(standardize(s, stats).col(1), Vector::Zero(50));
}

TEST(Standardizer, RoundTrip) {
  const Series s = testing::random_matrix(40, 3, 4, -100.0, 100.0);
  const StandardizerStats stats = fit_standardizer(s);
  EXPECT_LT((destandardize(standardize(s, stats), stats) - s).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Standardizer, Errors) {
  EXPECT_THROW(fit_standardizer(Series(0, 2)), ContractError);
  const StandardizerStats stats = fit_standardizer(testing::random_matrix(5, 2, 5));
  EXPECT_THROW(standardize(Series::Zero(5, 3), stats), DimensionError);
}

TEST(Windows, Counts) {
  EXPECT_EQ(window_count(10, 10), 1);
  EXPECT_EQ(window_count(12, 10), 3);
  EXPECT_EQ(window_count(12, 10, 2), 2);
  EXPECT_THROW(window_count(9, 10), ContractError);
}

TEST(Windows, Contents) {
  Series s(5, 1);
  s << 0, 1, 2, 3, 4;
  const std::vector<Matrix> w = windows(s, 3);
  ASSERT_EQ(w.size(), 3u);
  EXPECT_EQ(w[2], (Matrix(3, 1) << 2, 3, 4).finished());
  EXPECT_EQ(window_view(s, 1, 3), w[1]);
}

TEST(Split, ChronologicalTail) {
  Series s(1000, 1);
  std::iota(s.data(), s.data() + 1000, 0.0);
  const TrainValSplit split = split_train_val(s, 0.2, 100);
  EXPECT_EQ(split.train.rows(), 800);
  EXPECT_EQ(split.val.rows(), 200);
  EXPECT_EQ(split.val(0, 0), 800.0);
}

TEST(Split, ShortValidationIsAnError) {
  EXPECT_THROW(split_train_val(Series::Zero(300, 1), 0.2, 100), ContractError);
  EXPECT_THROW(split_train_val(Series::Zero(300, 1), 1.0, 10), ContractError);
}

SyntheticSpec small_spec(AnomalyType type) {
  SyntheticSpec spec;
  spec.length = 800;
  spec.channels = 3;
  spec.period_scale = 40;
  spec.type = type;
  spec.seed = 7;
  return spec;
}

TEST(Synth, NoSegmentsMeansNoLabels) {
  const SyntheticData d = synth_generate(small_spec(AnomalyType::kPoint));
  EXPECT_EQ(std::accumulate(d.labels.begin(), d.labels.end(), 0), 0);
  EXPECT_EQ(d.test, d.clean_test);
  EXPECT_EQ(d.train.rows(), 800);
}

TEST(Synth, IsBitReproducible) {
  SyntheticSpec spec = small_spec(AnomalyType::kTrend);
  spec.segments = {default_segment(AnomalyType::kTrend, spec.length, spec.period_scale)};
  const SyntheticData a = synth_generate(spec);
  const SyntheticData b = synth_generate(spec);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  EXPECT_EQ(a.labels, b.labels);
  spec.seed = 8;
  EXPECT_NE(synth_generate(spec).train, a.train);
}

TEST(Synth, PointShiftsOneChannel) {
  SyntheticSpec spec = small_spec(AnomalyType::kPoint);
  spec.segments = {{AnomalyType::kPoint, 300, 1, 10.0, 1}};
  const SyntheticData d = synth_generate(spec);
  const Matrix diff = d.test - d.clean_test;
  EXPECT_NEAR(diff(300, 1), 10.0 * spec.noise, 1e-12);
  EXPECT_EQ(diff.cwiseAbs().sum(), std::abs(diff(300, 1)));
  EXPECT_EQ(d.labels[300], 1);
  EXPECT_EQ(std::accumulate(d.labels.begin(), d.labels.end(), 0), 1);
}

TEST(Synth, SeasonalHalfPeriodShiftInvertsTheBase) {
  SyntheticSpec spec = small_spec(AnomalyType::kSeasonal);
  spec.segments = {{AnomalyType::kSeasonal, 200, 80, 1.0, 0}};
  const SyntheticData d = synth_generate(spec);
  for (Index t = 200; t < 280; ++t) {
    for (Index c = 0; c < 3; ++c) {
      const double base = synth_base_value(spec, c, double(spec.length + t));
      EXPECT_NEAR(d.test(t, c) - d.clean_test(t, c), -2.0 * base, 1e-9) << t << "," << c;
    }
  }
  EXPECT_EQ(d.test.row(199), d.clean_test.row(199));
  EXPECT_EQ(d.test.row(280), d.clean_test.row(280));
}

TEST(Synth, TrendRampsToItsMagnitude) {
  SyntheticSpec spec = small_spec(AnomalyType::kTrend);
  spec.segments = {{AnomalyType::kTrend, 100, 50, 20.0, 0}};
  const SyntheticData d = synth_generate(spec);
  const Matrix diff = d.test - d.clean_test;
  EXPECT_NEAR(diff(149, 2), 20.0 * spec.noise, 1e-12);
  EXPECT_LT(diff(100, 0), diff(120, 0));
  EXPECT_EQ(diff(150, 0), 0.0);
}

TEST(Synth, CollectiveHoldsTheOnsetLevel) {
  SyntheticSpec spec = small_spec(AnomalyType::kCollective);
  spec.noise = 0.0;
  spec.segments = {{AnomalyType::kCollective, 100, 30, 3.0, 0}};
  const SyntheticData d = synth_generate(spec);
  for (Index t = 100; t < 130; ++t) EXPECT_DOUBLE_EQ(d.test(t, 0), d.test(100, 0));
}

TEST(Synth, ContextualStaysWithinTheCleanRange) {
  SyntheticSpec spec = small_spec(AnomalyType::kContextual);
  spec.segments = {{AnomalyType::kContextual, 100, 40, 8.0, 2}};
  const SyntheticData d = synth_generate(spec);
  EXPECT_GE(d.test.col(2).minCoeff(), d.clean_test.col(2).minCoeff());
  EXPECT_LE(d.test.col(2).maxCoeff(), d.clean_test.col(2).maxCoeff());
  EXPECT_GT((d.test - d.clean_test).cwiseAbs().sum(), 0.0);
}

TEST(Synth, InvalidSegments) {
  SyntheticSpec spec = small_spec(AnomalyType::kPoint);
  spec.segments = {{AnomalyType::kPoint, 790, 20, 10.0, 0}};
  EXPECT_THROW(spec.validate(), ConfigError);
  spec.segments = {{AnomalyType::kPoint, 10, 20, 10.0, 0}, {AnomalyType::kTrend, 25, 20, 1.0, 0}};
  EXPECT_THROW(spec.validate(), ConfigError);
  spec.segments = {{AnomalyType::kPoint, 10, 2, 10.0, 5}};
  EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(Synth, SpecTextRoundTrip) {
  const SyntheticSpec spec = parse_synthetic_spec(
      "length = 900\nchannels = 2\ntype = seasonal\nseed = 4\nsegments = point:10:1:10:1;trend:100:20:5\n");
  EXPECT_EQ(spec.length, 900);
  ASSERT_EQ(spec.segments.size(), 2u);
  EXPECT_EQ(spec.segments[0].channel, 1);
  EXPECT_EQ(spec.segments[1].type, AnomalyType::kTrend);
  const SyntheticSpec back = parse_synthetic_spec(format_synthetic_spec(spec));
  EXPECT_EQ(format_synthetic_spec(back), format_synthetic_spec(spec));
}

TEST(Synth, DefaultSegmentWhenNoneGiven) {
  const SyntheticSpec spec = parse_synthetic_spec("type = trend\n");
  ASSERT_EQ(spec.segments.size(), 1u);
  EXPECT_EQ(spec.segments[0].type, AnomalyType::kTrend);
  EXPECT_EQ(spec.segments[0].start, Index(0.4 * double(spec.length)));
}

TEST(Synth, TypeNames) {
  for (AnomalyType t : {AnomalyType::kPoint, AnomalyType::kContextual, AnomalyType::kCollective,
                        AnomalyType::kSeasonal, AnomalyType::kTrend}) {
    EXPECT_EQ(anomaly_type_from_string(to_string(t)), t);
  }
  EXPECT_THROW(anomaly_type_from_string("spike"), ConfigError);
}

}  // namespace
}  // namespace pit
