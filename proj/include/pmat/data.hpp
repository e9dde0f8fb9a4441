#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "pmat/matrix.hpp"
#include "pmat/objectives.hpp"

namespace pmat {

enum class Split : std::uint8_t { kTrain, kTest };

struct Dataset {
  Matrix inputs;                  // n x d
  std::vector<int> labels;        // n entries in [0, num_classes)
  std::size_t num_classes = 0;
  std::optional<std::pair<double, double>> domain_box;
  std::vector<Split> splits;      // empty, or one tag per row

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return inputs.cols; }
  std::span<const double> input(std::size_t i) const { return inputs.row(i); }

  // n > 0, labels < K, inputs finite, shapes consistent.
  void validate() const;

  Dataset subset(std::span<const std::size_t> rows) const;
  Dataset only(Split split) const;
  Batch batch(std::span<const std::size_t> rows) const;
};

enum class SyntheticKind { kGaussianBlobs, kTwoMoons, kConcentricRings };

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::kTwoMoons;
  std::size_t n_per_class = 500;
  double noise = 0.1;
  std::uint64_t seed = 0;
  std::size_t num_classes = 2;  // blobs only; moons and rings are binary

  void validate() const;
};

// Class-balanced and deterministic in the seed. Rows are grouped by class.
Dataset generate(const SyntheticSpec& spec);

struct CsvSchema {
  std::size_t num_features = 0;   // 0 infers from the first row
  std::size_t num_classes = 0;    // 0 infers max label + 1
  bool has_header = false;        // a non-numeric first row is also treated as a header
  std::optional<std::pair<double, double>> domain_box;
};

// Rows are features followed by an integer label.
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
void save_csv(const std::filesystem::path& path, const Dataset& data);

// IDX image (magic 0x00000803) and label (0x00000801) files. Pixels are
// scaled by 1/255 and the domain box is [0, 1].
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t num_classes = 10);

// Tags each row by a hash of (seed, row); about test_fraction of rows become test.
void assign_splits(Dataset& data, double test_fraction, std::uint64_t seed);

}  // namespace pmat
