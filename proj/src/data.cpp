#include "pmat/data.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "pmat/errors.hpp"
#include "pmat/file_util.hpp"
#include "pmat/rng.hpp"

namespace pmat {

void Dataset::validate() const {
  if (labels.empty()) throw InputError("dataset is empty");
  if (inputs.rows != labels.size()) throw InputError("input rows and labels differ in count");
  if (inputs.data.size() != inputs.rows * inputs.cols) throw InputError("input matrix is malformed");
  if (num_classes < 2) throw SchemaError("dataset needs at least two classes");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw SchemaError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                        " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
  if (!inputs.all_finite()) throw InputError("dataset contains non-finite inputs");
  if (!splits.empty() && splits.size() != labels.size()) {
    throw InputError("split tags do not cover every row");
  }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.inputs = Matrix(rows.size(), inputs.cols);
  out.num_classes = num_classes;
  out.domain_box = domain_box;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto src = input(rows[r]);
    std::copy(src.begin(), src.end(), out.inputs.row(r).begin());
    out.labels.push_back(labels[rows[r]]);
    if (!splits.empty()) out.splits.push_back(splits[rows[r]]);
  }
  return out;
}

Dataset Dataset::only(Split split) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < size(); ++i) {
    if (splits.empty() ? split == Split::kTrain : splits[i] == split) rows.push_back(i);
  }
  Dataset out = subset(rows);
  out.splits.clear();
  return out;
}

Batch Dataset::batch(std::span<const std::size_t> rows) const {
  Batch b;
  b.inputs.reserve(rows.size());
  b.labels.reserve(rows.size());
  for (std::size_t r : rows) {
    b.inputs.push_back(input(r));
    b.labels.push_back(labels[r]);
  }
  return b;
}

void SyntheticSpec::validate() const {
  if (!(noise >= 0.0)) throw ConfigError("noise must be non-negative");
  if (n_per_class == 0) throw ConfigError("need at least one point per class");
  if (kind == SyntheticKind::kGaussianBlobs && num_classes < 2) {
    throw ConfigError("blobs need at least two classes");
  }
}

Dataset generate(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t classes = spec.kind == SyntheticKind::kGaussianBlobs ? spec.num_classes : 2;
  const std::size_t n = spec.n_per_class;
  Dataset data;
  data.num_classes = classes;
  data.inputs = Matrix(n * classes, 2);
  data.labels.resize(n * classes);
  Engine engine(spec.seed);
  const double pi = std::numbers::pi;

  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t row = c * n + i;
      double px = 0.0;
      double py = 0.0;
      switch (spec.kind) {
        case SyntheticKind::kGaussianBlobs: {
          // Class means evenly spaced on a circle of radius 2.
          const double angle = 2.0 * pi * static_cast<double>(c) / static_cast<double>(classes);
          px = 2.0 * std::cos(angle);
          py = 2.0 * std::sin(angle);
          break;
        }
        case SyntheticKind::kTwoMoons: {
          const double t = n == 1 ? 0.0 : pi * static_cast<double>(i) / static_cast<double>(n - 1);
          if (c == 0) {
            px = std::cos(t);
            py = std::sin(t);
          } else {
            px = 1.0 - std::cos(t);
            py = 0.5 - std::sin(t);
          }
          break;
        }
        case SyntheticKind::kConcentricRings: {
          const double t = 2.0 * pi * static_cast<double>(i) / static_cast<double>(n);
          const double radius = c == 0 ? 1.0 : 0.5;
          px = radius * std::cos(t);
          py = radius * std::sin(t);
          break;
        }
      }
      if (spec.noise > 0.0) {
        px += spec.noise * standard_normal(engine);
        py += spec.noise * standard_normal(engine);
      }
      data.inputs(row, 0) = px;
      data.inputs(row, 1) = py;
      data.labels[row] = static_cast<int>(c);
    }
  }
  return data;
}

namespace {

bool parse_double(std::string_view field, double& out) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) {
    field.remove_suffix(1);
  }
  if (field.empty()) return false;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), out);
  return ec == std::errc() && ptr == field.data() + field.size();
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  Dataset data;
  data.domain_box = schema.domain_box;
  std::size_t features = schema.num_features;
  std::vector<double> values;
  std::string line;
  std::size_t offset = 0;
  std::size_t line_no = 0;
  int max_label = -1;
  while (std::getline(in, line)) {
    const std::size_t line_start = offset;
    offset += line.size() + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto fields = split_commas(line);
    std::vector<double> row(fields.size());
    bool numeric = true;
    for (std::size_t f = 0; f < fields.size(); ++f) numeric &= parse_double(fields[f], row[f]);
    if (line_no == 1 && (schema.has_header || !numeric)) continue;
    if (!numeric) throw ParseError("non-numeric field on line " + std::to_string(line_no), line_start);
    if (features == 0) {
      if (fields.size() < 2) throw ParseError("row needs features and a label", line_start);
      features = fields.size() - 1;
    }
    if (fields.size() != features + 1) {
      throw ParseError("expected " + std::to_string(features + 1) + " fields on line " +
                           std::to_string(line_no) + ", found " + std::to_string(fields.size()),
                       line_start);
    }
    const double label = row.back();
    if (label < 0 || label != std::floor(label) || label > 1e9) {
      throw ParseError("label on line " + std::to_string(line_no) + " is not a class index",
                       line_start);
    }
    const int y = static_cast<int>(label);
    if (schema.num_classes != 0 && static_cast<std::size_t>(y) >= schema.num_classes) {
      throw SchemaError("label " + std::to_string(y) + " on line " + std::to_string(line_no) +
                        " exceeds the schema's " + std::to_string(schema.num_classes) + " classes");
    }
    max_label = std::max(max_label, y);
    values.insert(values.end(), row.begin(), row.end() - 1);
    data.labels.push_back(y);
  }
  data.inputs.rows = data.labels.size();
  data.inputs.cols = features;
  data.inputs.data = std::move(values);
  data.num_classes = schema.num_classes != 0 ? schema.num_classes
                                             : std::max<std::size_t>(2, static_cast<std::size_t>(max_label + 1));
  data.validate();
  return data;
}

void save_csv(const std::filesystem::path& path, const Dataset& data) {
  write_atomic(path, false, [&](std::ostream& out) {
    std::array<char, 64> buf{};
    for (std::size_t i = 0; i < data.size(); ++i) {
      for (double v : data.input(i)) {
        const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
        out.write(buf.data(), res.ptr - buf.data());
        out.put(',');
      }
      out << data.labels[i] << '\n';
    }
  });
}

namespace {

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& bytes, std::size_t at, const char* what) {
  if (at + 4 > bytes.size()) throw ParseError(std::string("truncated IDX header: ") + what, at);
  return (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) |
         (std::uint32_t{bytes[at + 2]} << 8) | std::uint32_t{bytes[at + 3]};
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t num_classes) {
  const auto img = read_all(images);
  const auto lab = read_all(labels);

  if (be32(img, 0, "image magic") != 0x00000803) throw ParseError("bad IDX image magic", 0);
  const std::uint32_t count = be32(img, 4, "image count");
  const std::uint32_t rows = be32(img, 8, "row count");
  const std::uint32_t cols = be32(img, 12, "column count");
  const std::size_t pixels = std::size_t{rows} * cols;
  const std::size_t expected = 16 + std::size_t{count} * pixels;
  if (img.size() != expected) {
    throw ParseError("IDX image payload has " + std::to_string(img.size()) + " bytes, expected " +
                         std::to_string(expected),
                     std::min(img.size(), expected));
  }

  if (be32(lab, 0, "label magic") != 0x00000801) throw ParseError("bad IDX label magic", 0);
  const std::uint32_t label_count = be32(lab, 4, "label count");
  if (label_count != count) throw ParseError("label count disagrees with image count", 4);
  if (lab.size() != 8 + std::size_t{count}) {
    throw ParseError("IDX label payload has wrong length", std::min<std::size_t>(lab.size(), 8 + count));
  }

  Dataset data;
  data.num_classes = num_classes;
  data.domain_box = std::pair{0.0, 1.0};
  data.inputs = Matrix(count, pixels);
  for (std::size_t i = 0; i < data.inputs.data.size(); ++i) {
    data.inputs.data[i] = static_cast<double>(img[16 + i]) / 255.0;
  }
  data.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned value = lab[8 + i];
    if (value >= num_classes) {
      throw SchemaError("label " + std::to_string(value) + " at byte offset " +
                        std::to_string(8 + i) + " exceeds " + std::to_string(num_classes) +
                        " classes");
    }
    data.labels[i] = static_cast<int>(value);
  }
  data.validate();
  return data;
}

void assign_splits(Dataset& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) {
    throw ConfigError("test fraction must lie in [0, 1]");
  }
  data.splits.resize(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double u = static_cast<double>(derive_seed(seed, {i}) >> 11) * 0x1.0p-53;
    data.splits[i] = u < test_fraction ? Split::kTest : Split::kTrain;
  }
}

}  // namespace pmat
