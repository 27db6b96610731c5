#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <filesystem>
#include <fstream>

#include "qadb/data.hpp"

using namespace qadb;

namespace {

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("qadb_data_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::filesystem::path dir_;
};

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

using Idx = TempDir;

TEST_F(Idx, ImageRoundTripIsExact) {
  std::vector<std::uint8_t> pixels(3 * 28 * 28);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<std::uint8_t>((i * 37) % 256);
  write_idx_images(dir_ / "img", pixels, 3, 28, 28);
  const Tensor t = load_idx_images(dir_ / "img");
  ASSERT_EQ(t.dims(), (Shape{3, 1, 28, 28}));
  for (std::size_t i = 0; i < pixels.size(); ++i) ASSERT_EQ(t[static_cast<Index>(i)], pixels[i] / 255.0);
}

TEST_F(Idx, HeaderIsBigEndian) {
  write_idx_images(dir_ / "img", std::vector<std::uint8_t>(2 * 28 * 28), 2, 28, 28);
  std::ifstream in(dir_ / "img", std::ios::binary);
  std::uint8_t head[8];
  in.read(reinterpret_cast<char*>(head), 8);
  EXPECT_EQ(head[2], 0x08);
  EXPECT_EQ(head[3], 0x03);
  EXPECT_EQ(head[7], 2);
}

TEST_F(Idx, WrongMagicIsRejected) {
  write_bytes(dir_ / "bad", std::vector<std::uint8_t>(16 + 784, 0));
  try {
    load_idx_images(dir_ / "bad");
    FAIL() << "expected a magic-number error";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("magic"), std::string::npos);
  }
  EXPECT_THROW(load_idx_labels(dir_ / "bad"), FormatError);
}

TEST_F(Idx, TruncatedImagesAreRejected) {
  std::vector<std::uint8_t> bytes = {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 28, 0, 0, 0, 28};
  bytes.resize(16 + 784);  // one image of two
  write_bytes(dir_ / "short", bytes);
  EXPECT_THROW(load_idx_images(dir_ / "short"), FormatError);
  write_bytes(dir_ / "header", {0, 0, 8});
  EXPECT_THROW(load_idx_images(dir_ / "header"), FormatError);
}

TEST_F(Idx, NonStandardSizeLoadsWithWarning) {
  write_idx_images(dir_ / "img", std::vector<std::uint8_t>(2 * 5 * 4, 255), 2, 5, 4);
  const Tensor t = load_idx_images(dir_ / "img");
  EXPECT_EQ(t.dims(), (Shape{2, 1, 5, 4}));
  EXPECT_EQ(t[0], 1.0);
}

TEST_F(Idx, LabelsRoundTripAndEmptySection) {
  write_idx_labels(dir_ / "lab", {3, 1, 4});
  EXPECT_EQ(load_idx_labels(dir_ / "lab"), (std::vector<int>{3, 1, 4}));
  write_idx_labels(dir_ / "empty", {});
  EXPECT_TRUE(load_idx_labels(dir_ / "empty").empty());
}

TEST_F(Idx, CountMismatchNamesBothCounts) {
  write_idx_images(dir_ / "img", std::vector<std::uint8_t>(3 * 784), 3, 28, 28);
  write_idx_labels(dir_ / "lab", {1, 2});
  try {
    load_idx_dataset(dir_ / "img", dir_ / "lab");
    FAIL() << "expected a count mismatch";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find('3'), std::string::npos);
    EXPECT_NE(msg.find('2'), std::string::npos);
  }
}

TEST(Dataset, MakeDatasetChecksPixelRange) {
  EXPECT_THROW(make_dataset(Tensor::full({1, 1, 28, 28}, 1.01), {0}), ValidationError);
  EXPECT_NO_THROW(make_dataset(Tensor::full({1, 1, 28, 28}, 1.0), {0}));
}

TEST(Dataset, CheckLabels) {
  const Dataset d = synthetic_digits(1, 4, 3);
  EXPECT_NO_THROW(check_labels(d, 3));
  EXPECT_THROW(check_labels(d, 2), ValidationError);
}

TEST(Filter, KeepsOrderAndRelabels) {
  Dataset d = synthetic_digits(1, 6, 3);  // labels 0,1,2,0,1,2
  const Dataset f = filter_classes(d, {2, 0});
  EXPECT_EQ(f.labels, (std::vector<int>{1, 0, 1, 0}));
  EXPECT_EQ(f.images.slice_rows(0, 1), d.images.slice_rows(0, 1));
  EXPECT_EQ(f.images.slice_rows(1, 2), d.images.slice_rows(2, 3));
}

TEST(Filter, AllClassesIsIdentity) {
  const Dataset d = synthetic_digits(2, 9, 3);
  const Dataset f = filter_classes(d, {0, 1, 2});
  EXPECT_EQ(f.labels, d.labels);
  EXPECT_EQ(f.images, d.images);
}

TEST(Filter, EmptyClassSetGivesEmptyDataset) {
  EXPECT_TRUE(filter_classes(synthetic_digits(2, 9, 3), {}).empty());
  EXPECT_THROW(filter_classes(synthetic_digits(2, 9, 3), {1, 1}), ValidationError);
}

TEST(Subsample, KeepsProportionsAndOrder) {
  const Dataset d = filter_classes(synthetic_digits(3, 300, 3), {0, 1, 2});
  const Dataset s = stratified_subsample(d, 31, 5);
  ASSERT_EQ(s.size(), 31);
  int counts[3] = {0, 0, 0};
  for (int l : s.labels) ++counts[l];
  for (int c : counts) EXPECT_TRUE(c == 10 || c == 11);
  EXPECT_EQ(stratified_subsample(d, 31, 5).images, s.images);
  EXPECT_EQ(stratified_subsample(d, 1000, 5).size(), 300);
}

TEST(Synthetic, DeterministicAndBalanced) {
  const Dataset a = synthetic_digits(9, 100, 2), b = synthetic_digits(9, 100, 2);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(std::count(a.labels.begin(), a.labels.end(), 0), 50);
  EXPECT_GE(a.images.data().minCoeff(), 0.0);
  EXPECT_LE(a.images.data().maxCoeff(), 1.0);
}

TEST(Synthetic, LinearlySeparable) {
  // Logistic regression by plain gradient descent.
  const Dataset train = synthetic_digits(1, 200, 2), test = synthetic_digits(2, 200, 2);
  const Eigen::MatrixXd X = train.images.rows();
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXi>(train.labels.data(), 200).cast<double>();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(784);
  double b = 0;
  for (int it = 0; it < 300; ++it) {
    const Eigen::VectorXd prob = (1.0 / (1.0 + (-(X * w).array() - b).exp())).matrix();
    const Eigen::VectorXd r = prob - y;
    w -= 0.05 * X.transpose() * r / 200.0;
    b -= 0.05 * r.mean();
  }
  const Eigen::MatrixXd Xt = test.images.rows();
  const Eigen::VectorXd score = (Xt * w).array() + b;
  int correct = 0;
  for (Index i = 0; i < 200; ++i) correct += (score[i] > 0) == (test.labels[static_cast<std::size_t>(i)] == 1);
  EXPECT_GE(correct / 200.0, 0.9);
}
