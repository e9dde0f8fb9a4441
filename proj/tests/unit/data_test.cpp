#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "pmat/data.hpp"
#include "pmat/errors.hpp"
#include "pmat/trainer.hpp"

namespace pmat {
namespace {

namespace fs = std::filesystem;

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("pmat_data_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  fs::path write_text(const std::string& name, const std::string& text) {
    const fs::path p = dir / name;
    std::ofstream(p) << text;
    return p;
  }
  fs::path write_bytes(const std::string& name, const std::vector<std::uint8_t>& bytes) {
    const fs::path p = dir / name;
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    return p;
  }

  fs::path dir;
};

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::vector<std::uint8_t> idx_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols) {
  std::vector<std::uint8_t> out;
  put_be32(out, 0x803);
  put_be32(out, n);
  put_be32(out, rows);
  put_be32(out, cols);
  for (std::uint32_t k = 0; k < n * rows * cols; ++k) out.push_back(static_cast<std::uint8_t>(k * 17));
  return out;
}

std::vector<std::uint8_t> idx_labels(std::vector<std::uint8_t> labels) {
  std::vector<std::uint8_t> out;
  put_be32(out, 0x801);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  return out;
}

TEST(Generate, ZeroNoiseBlobsSitOnClassMeans) {
  SyntheticSpec spec{SyntheticKind::kGaussianBlobs, 20, 0.0, 3, 4};
  const Dataset data = generate(spec);
  ASSERT_EQ(data.size(), 80u);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t first = static_cast<std::size_t>(data.labels[i]) * 20;
    EXPECT_EQ(data.inputs(i, 0), data.inputs(first, 0));
    EXPECT_EQ(data.inputs(i, 1), data.inputs(first, 1));
  }
}

TEST(Generate, DeterministicAndBalanced) {
  for (SyntheticKind kind : {SyntheticKind::kGaussianBlobs, SyntheticKind::kTwoMoons,
                             SyntheticKind::kConcentricRings}) {
    SyntheticSpec spec{kind, 50, 0.1, 9, 2};
    const Dataset a = generate(spec);
    const Dataset b = generate(spec);
    EXPECT_EQ(a.inputs, b.inputs);
    EXPECT_EQ(a.labels, b.labels);
    std::vector<int> counts(2, 0);
    for (int y : a.labels) ++counts[static_cast<std::size_t>(y)];
    EXPECT_EQ(counts[0], 50);
    EXPECT_EQ(counts[1], 50);
    spec.seed = 10;
    EXPECT_NE(generate(spec).inputs, a.inputs);
  }
}

TEST(Generate, RejectsNegativeNoise) {
  SyntheticSpec spec;
  spec.noise = -0.1;
  EXPECT_THROW(generate(spec), ConfigError);
}

double train_accuracy(const std::vector<std::size_t>& hidden, const Dataset& data) {
  TrainConfig cfg = TrainConfig::desk(ObjectiveKind::kNatural);
  cfg.hidden_layers = hidden;
  cfg.epochs = 60;
  cfg.lr_drops = {{45, 10.0}};
  cfg.weight_decay = 0.0;
  cfg.seed = 2;
  const TrainState state = train(cfg, data);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    correct += static_cast<int>(forward(state.params, data.input(i)).prediction()) == data.labels[i];
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
}

TEST(Generate, MoonsNeedANonlinearModel) {
  const Dataset data = generate(SyntheticSpec{SyntheticKind::kTwoMoons, 500, 0.1, 1, 2});
  EXPECT_LT(train_accuracy({}, data), 100.0);
  EXPECT_GT(train_accuracy({16, 16}, data), 99.0);
}

TEST_F(TempDir, CsvSingleRow) {
  const Dataset data = load_csv(write_text("one.csv", "0.1,0.2,1\n"), CsvSchema{2, 2, false, std::nullopt});
  ASSERT_EQ(data.size(), 1u);
  EXPECT_EQ(data.inputs(0, 0), 0.1);
  EXPECT_EQ(data.inputs(0, 1), 0.2);
  EXPECT_EQ(data.labels[0], 1);
}

TEST_F(TempDir, CsvHeaderIsDetected) {
  const Dataset data = load_csv(write_text("h.csv", "a,b,label\n0.1,0.2,1\n0.3,0.4,0\n"));
  EXPECT_EQ(data.size(), 2u);
  EXPECT_EQ(data.num_classes, 2u);
}

TEST_F(TempDir, CsvErrors) {
  EXPECT_THROW(load_csv(write_text("bad.csv", "0.1,0.2,1\n0.1,x,0\n")), ParseError);
  EXPECT_THROW(load_csv(write_text("short.csv", "0.1,0.2,1\n0.1,0\n")), ParseError);
  EXPECT_THROW(load_csv(write_text("k.csv", "0.1,0.2,3\n"), CsvSchema{2, 2, false, std::nullopt}), SchemaError);
  EXPECT_THROW(load_csv(dir / "missing.csv"), InputError);
  try {
    load_csv(write_text("off.csv", "0.1,0.2,1\n0.1,x,0\n"));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 10u);
  }
}

TEST_F(TempDir, CsvRoundTrip) {
  const Dataset data = generate(SyntheticSpec{SyntheticKind::kConcentricRings, 40, 0.07, 5, 2});
  const fs::path p = dir / "rings.csv";
  save_csv(p, data);
  const Dataset back = load_csv(p);
  EXPECT_EQ(back.inputs, data.inputs);
  EXPECT_EQ(back.labels, data.labels);
}

TEST_F(TempDir, IdxFlattensAndScales) {
  const Dataset data = load_idx(write_bytes("img.idx", idx_images(3, 4, 4)),
                                write_bytes("lab.idx", idx_labels({0, 1, 2})), 3);
  EXPECT_EQ(data.size(), 3u);
  EXPECT_EQ(data.dim(), 16u);
  ASSERT_TRUE(data.domain_box.has_value());
  EXPECT_EQ(data.inputs(0, 15), 255.0 / 255.0);
  for (double v : data.inputs.data) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST_F(TempDir, IdxFullBrightnessIsOne) {
  auto images = idx_images(1, 1, 1);
  images.back() = 255;
  const Dataset data = load_idx(write_bytes("img.idx", images), write_bytes("lab.idx", idx_labels({0})), 2);
  EXPECT_EQ(data.inputs(0, 0), 1.0);
}

TEST_F(TempDir, IdxErrors) {
  auto images = idx_images(2, 2, 2);
  images[3] = 0x01;
  try {
    load_idx(write_bytes("bad.idx", images), write_bytes("lab.idx", idx_labels({0, 1})), 2);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  auto truncated = idx_images(2, 2, 2);
  truncated.resize(truncated.size() - 1);
  EXPECT_THROW(load_idx(write_bytes("t.idx", truncated), write_bytes("lab.idx", idx_labels({0, 1})), 2),
               ParseError);
  EXPECT_THROW(load_idx(write_bytes("ok.idx", idx_images(2, 2, 2)), write_bytes("l3.idx", idx_labels({0})), 2),
               ParseError);
  EXPECT_THROW(load_idx(write_bytes("ok.idx", idx_images(2, 2, 2)), write_bytes("l9.idx", idx_labels({0, 9})), 2),
               SchemaError);
}

TEST(Splits, DeterministicFraction) {
  Dataset data = generate(SyntheticSpec{SyntheticKind::kTwoMoons, 500, 0.1, 1, 2});
  assign_splits(data, 0.2, 7);
  Dataset again = generate(SyntheticSpec{SyntheticKind::kTwoMoons, 500, 0.1, 1, 2});
  assign_splits(again, 0.2, 7);
  EXPECT_EQ(data.splits, again.splits);
  const auto test = data.only(Split::kTest);
  EXPECT_GT(test.size(), 150u);
  EXPECT_LT(test.size(), 250u);
  EXPECT_EQ(test.size() + data.only(Split::kTrain).size(), data.size());
}

}  // namespace
}  // namespace pmat
