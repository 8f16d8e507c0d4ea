#include <gtest/gtest.h>

#include <filesystem>

#include "fdrecon/io.hpp"
#include "properties.hpp"
#include "support.hpp"

using namespace fdrecon;
namespace fs = std::filesystem;
namespace ft = fdrecon::testing;

namespace {

class IoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("fdrecon_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
            "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write(const std::string& name, const std::string& text) {
    const auto p = (dir_ / name).string();
    io::write_file(p, text);
    return p;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(IoTest, EmptyFileIsParseError) {
  io::DatasetFileSet f;
  f.target = write("t.csv", "");
  EXPECT_THROW(io::load_dataset(f), ParseError);
  f.target = write("blank.csv", "\n\n");
  EXPECT_THROW(io::load_dataset(f), ParseError);
  f.target = (dir_ / "absent.csv").string();
  EXPECT_THROW(io::load_dataset(f), ParseError);
}

TEST_F(IoTest, ShapeAndCellErrors) {
  io::DatasetFileSet f;
  f.target = write("ragged.csv", "1,2,3\n4,5\n");
  EXPECT_THROW(io::load_dataset(f), ParseError);
  f.target = write("text.csv", "1,2,3\n4,abc,6\n");
  EXPECT_THROW(io::load_dataset(f), ParseError);
  f.target = write("partial.csv", "1,2,3\n4,5x,6\n");
  EXPECT_THROW(io::load_dataset(f), ParseError);
  f.target = write("ok.csv", "1,2,3\n4,5,6\n");
  f.covariates = {write("short.csv", "1,2,3\n")};
  EXPECT_THROW(io::load_dataset(f), ParseError);
}

TEST_F(IoTest, MissingTokensInTarget) {
  std::string text;
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 6; ++c) {
      if (c > 0) text += ',';
      if (r == 3 && c == 4) text += "NA";
      else if (r == 1 && c == 0) text += "";
      else if (r == 2 && c == 5) text += "NaN";
      else text += std::to_string(r * 10 + c);
    }
    text += '\n';
  }
  io::DatasetFileSet f;
  f.target = write("t.csv", text);
  const FunctionalDataset d = io::load_dataset(f);
  EXPECT_FALSE(d.mask()(3, 4));
  EXPECT_FALSE(d.mask()(1, 0));
  EXPECT_FALSE(d.mask()(2, 5));
  EXPECT_EQ(d.mask().count(), 27);
  EXPECT_EQ(d.target()(4, 5), 45.0);
  f.missing_token = "-999";
  f.target = write("t2.csv", "1,-999,3\n4,5,6\n");
  EXPECT_FALSE(io::load_dataset(f).mask()(0, 1));
}

TEST_F(IoTest, CovariateMissingIsHardError) {
  io::DatasetFileSet f;
  f.target = write("t.csv", "1,2,3\n4,5,6\n");
  f.covariates = {write("c.csv", "1,2,3\n4,NA,6\n")};
  try {
    io::load_dataset(f);
    FAIL();
  } catch (const CovariateMissingError& e) {
    EXPECT_EQ(e.code(), "io_cli.covariate_missing");
  }
}

TEST_F(IoTest, Fig2ToyRoundTrips) {
  const FunctionalDataset toy = ft::fig2_toy();
  io::DatasetFileSet f;
  f.target = write("t.csv", io::to_csv(toy.target(), &toy.mask()));
  f.covariates = {write("c.csv", io::to_csv(toy.covariate(0)))};
  const FunctionalDataset back = io::load_dataset(f);
  EXPECT_EQ(back.target(), toy.target());
  EXPECT_TRUE((back.mask() == toy.mask()).all());
  EXPECT_EQ(back.covariate(0), toy.covariate(0));
  EXPECT_EQ(complete_indices(back), (std::vector<Index>{0, 1}));
}

TEST_F(IoTest, TemperatureShapedDataset) {
  Matrix target = ft::random_matrix(76, 48, 1);
  Mask mask = Mask::Constant(76, 48, true);
  for (Index k = 0; k < 10; ++k) {
    const Index row = 5 + 7 * k;
    for (Index i = 20 + k; i < 30 + k; ++i) mask(row, i) = false;
  }
  io::DatasetFileSet f;
  f.target = write("east.csv", io::to_csv(target, &mask));
  f.covariates = {write("west.csv", io::to_csv(ft::random_matrix(76, 48, 2)))};
  const FunctionalDataset d = io::load_dataset(f);
  EXPECT_EQ(d.n_curves(), 76);
  EXPECT_EQ(d.n_points(), 48);
  EXPECT_EQ(complete_indices(d).size(), 66u);
}

TEST_F(IoTest, GridHeaderAndDelimiter) {
  const Grid g = Grid::equispaced(4);
  const Matrix v = ft::random_matrix(3, 4, 3);
  io::DatasetFileSet f;
  f.delimiter = ';';
  f.grid_header = true;
  f.target = write("t.csv", io::to_csv(v, nullptr, &g, ';'));
  const FunctionalDataset d = io::load_dataset(f);
  EXPECT_EQ(d.target(), v);
  EXPECT_EQ(d.grid(), g);
  f.target = write("bad.csv", "0;0.5;0.6;1\n1;2;3;4\n5;6;7;8\n");
  EXPECT_THROW(io::load_dataset(f), DatasetError);
  f.target = write("narrow.csv", "0;1\n1;2;3;4\n");
  EXPECT_THROW(io::load_dataset(f), ParseError);
}

TEST(Csv, ByteExactRoundTrip) { EXPECT_EQ(ft::csv_round_trip(), ""); }

TEST(Csv, ShortestRoundTripFormatting) {
  EXPECT_EQ(io::format_double(0.1), "0.1");
  EXPECT_EQ(io::format_double(2.0), "2");
  EXPECT_EQ(io::format_double(-1.5e-300), "-1.5e-300");
  const double third = 1.0 / 3.0;
  EXPECT_EQ(std::stod(io::format_double(third)), third);
}

TEST(Json, RunReportSchema) {
  sim::RunReport r;
  r.config.n_runs = 2;
  r.config.alphas = {0.05};
  r.mae_per_run = {0.2, 0.3};
  r.mean_rank_per_run = {4.0, 5.0};
  r.mae_mean = 0.25;
  r.mae_sd = 0.05;
  r.coverage.push_back({0.05, {0.9, 1.0}, 0.95, 0.05});
  const auto j = io::to_json(r);
  EXPECT_TRUE(j.contains("config"));
  EXPECT_EQ(j["per_run"].size(), 2u);
  EXPECT_EQ(j["per_run"][1]["mae"], 0.3);
  EXPECT_EQ(j["aggregates"]["mae_mean"], 0.25);
  EXPECT_EQ(j["aggregates"]["coverage_mean"], 0.95);
  EXPECT_EQ(j["aggregates"]["coverage_sd"], 0.05);
  EXPECT_EQ(j["config"]["setting"], "A");
  EXPECT_EQ(io::per_run_csv(r), "run,seed,mae,mean_rank,coverage_0.05\n0,1,0.2,4,0.9\n1,2,0.3,5,1\n");
}
