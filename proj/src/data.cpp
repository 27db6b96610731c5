#include "qadb/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <numbers>
#include <random>

namespace qadb {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset, const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) throw FormatError(path.string() + ": truncated IDX header");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  out.write(b, 4);
}

void check_magic(std::uint32_t magic, std::uint32_t expected, const std::filesystem::path& path) {
  if (magic != expected) {
    char buf[96];
    std::snprintf(buf, sizeof buf, ": bad IDX magic number 0x%08X (expected 0x%08X)", magic, expected);
    throw FormatError(path.string() + buf);
  }
}

}  // namespace

Dataset Dataset::slice(Index begin, Index end) const {
  Dataset out;
  out.images = images.slice_rows(begin, end);
  out.labels.assign(labels.begin() + begin, labels.begin() + end);
  return out;
}

Dataset Dataset::gather(const std::vector<Index>& indices) const {
  Shape dims = images.dims();
  dims[0] = static_cast<Index>(indices.size());
  Dataset out;
  out.images = Tensor(dims);
  const Index stride = shape_size(Shape(dims.begin() + 1, dims.end()));
  auto dst = out.images.matrix(dims[0], stride);
  const auto src = images.matrix(images.dim(0), stride);
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    dst.row(static_cast<Index>(i)) = src.row(indices[i]);
    out.labels.push_back(labels[static_cast<std::size_t>(indices[i])]);
  }
  return out;
}

Dataset make_dataset(Tensor images, std::vector<int> labels) {
  if (images.rank() != 4) throw ShapeError("dataset images must be [N,C,H,W], got " + shape_str(images.dims()));
  if (images.dim(0) != static_cast<Index>(labels.size())) {
    throw ValidationError("image count " + std::to_string(images.dim(0)) + " does not match label count " +
                          std::to_string(labels.size()));
  }
  if (images.size() > 0 && (images.data().minCoeff() < 0.0 || images.data().maxCoeff() > 1.0)) {
    throw ValidationError("dataset pixels must lie in [0,1]");
  }
  for (int l : labels) {
    if (l < 0) throw ValidationError("negative label " + std::to_string(l));
  }
  return Dataset{std::move(images), std::move(labels)};
}

void check_labels(const Dataset& data, int n_classes) {
  for (int l : data.labels) {
    if (l < 0 || l >= n_classes) {
      throw ValidationError("label " + std::to_string(l) + " outside [0, " + std::to_string(n_classes) + ")");
    }
  }
}

Tensor load_idx_images(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  check_magic(read_be32(bytes, 0, path), kIdxImageMagic, path);
  const std::uint32_t count = read_be32(bytes, 4, path);
  const std::uint32_t rows = read_be32(bytes, 8, path);
  const std::uint32_t cols = read_be32(bytes, 12, path);
  const std::size_t payload = std::size_t{count} * rows * cols;
  if (bytes.size() < 16 + payload) {
    throw FormatError(path.string() + ": truncated IDX image data (" + std::to_string(bytes.size() - 16) + " of " +
                      std::to_string(payload) + " bytes)");
  }
  if (rows != 28 || cols != 28) {
    std::cerr << "warning: " << path.string() << " holds " << rows << "x" << cols << " images, expected 28x28\n";
  }
  Tensor out({static_cast<Index>(count), 1, static_cast<Index>(rows), static_cast<Index>(cols)});
  for (std::size_t i = 0; i < payload; ++i) out[static_cast<Index>(i)] = bytes[16 + i] / 255.0;
  return out;
}

std::vector<int> load_idx_labels(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  check_magic(read_be32(bytes, 0, path), kIdxLabelMagic, path);
  const std::uint32_t count = read_be32(bytes, 4, path);
  if (bytes.size() < 8 + std::size_t{count}) {
    throw FormatError(path.string() + ": truncated IDX label data");
  }
  return std::vector<int>(bytes.begin() + 8, bytes.begin() + 8 + count);
}

void write_idx_images(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels, std::uint32_t count,
                      std::uint32_t rows, std::uint32_t cols) {
  if (pixels.size() != std::size_t{count} * rows * cols) throw ValidationError("IDX pixel count mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  put_be32(out, kIdxImageMagic);
  put_be32(out, count);
  put_be32(out, rows);
  put_be32(out, cols);
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  put_be32(out, kIdxLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels) {
  return make_dataset(load_idx_images(images), load_idx_labels(labels));
}

Dataset filter_classes(const Dataset& data, const std::vector<int>& classes) {
  std::map<int, int> relabel;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (!relabel.emplace(classes[i], static_cast<int>(i)).second) {
      throw ValidationError("duplicate class " + std::to_string(classes[i]) + " in filter");
    }
  }
  if (classes.empty()) std::cerr << "warning: empty class filter yields an empty dataset\n";
  std::vector<Index> keep;
  std::vector<int> labels;
  for (Index i = 0; i < data.size(); ++i) {
    auto it = relabel.find(data.labels[static_cast<std::size_t>(i)]);
    if (it == relabel.end()) continue;
    keep.push_back(i);
    labels.push_back(it->second);
  }
  Dataset out = data.gather(keep);
  out.labels = std::move(labels);
  return out;
}

Dataset stratified_subsample(const Dataset& data, Index n, std::uint64_t seed) {
  if (n < 0) throw ValidationError("subsample size must be non-negative");
  if (n >= data.size()) return data;
  std::map<int, std::vector<Index>> by_class;
  for (Index i = 0; i < data.size(); ++i) by_class[data.labels[static_cast<std::size_t>(i)]].push_back(i);

  // Largest-remainder apportionment, remainders tie-broken by class id.
  std::vector<std::pair<int, Index>> quota;
  std::vector<std::pair<double, int>> remainders;
  Index assigned = 0;
  for (const auto& [label, idx] : by_class) {
    const double exact = static_cast<double>(n) * static_cast<double>(idx.size()) / static_cast<double>(data.size());
    const auto base = static_cast<Index>(std::floor(exact));
    quota.emplace_back(label, base);
    remainders.emplace_back(exact - static_cast<double>(base), label);
    assigned += base;
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (Index k = 0; k < n - assigned; ++k) {
    const int label = remainders[static_cast<std::size_t>(k)].second;
    for (auto& q : quota) {
      if (q.first == label) ++q.second;
    }
  }

  std::mt19937_64 rng(seed);
  std::vector<Index> keep;
  for (const auto& [label, count] : quota) {
    auto idx = by_class[label];
    std::shuffle(idx.begin(), idx.end(), rng);
    keep.insert(keep.end(), idx.begin(), idx.begin() + count);
  }
  std::sort(keep.begin(), keep.end());
  return data.gather(keep);
}

Dataset synthetic_digits(std::uint64_t seed, Index n, int n_classes) {
  if (n < 0) throw ValidationError("synthetic dataset size must be non-negative");
  if (n_classes < 1) throw ValidationError("synthetic dataset needs at least one class");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-2.0, 2.0);
  std::normal_distribution<double> noise(0.0, 0.08);
  Dataset out;
  out.images = Tensor({n, 1, 28, 28});
  out.labels.resize(static_cast<std::size_t>(n));
  const double sigma = 3.0;
  for (Index i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % n_classes);
    out.labels[static_cast<std::size_t>(i)] = label;
    const double angle = 2 * std::numbers::pi * label / n_classes;
    const double cy = 13.5 + 7.0 * std::sin(angle) + jitter(rng);
    const double cx = 13.5 + 7.0 * std::cos(angle) + jitter(rng);
    double* px = out.images.data().data() + i * 28 * 28;
    for (int y = 0; y < 28; ++y) {
      for (int x = 0; x < 28; ++x) {
        const double r2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        const double v = 0.9 * std::exp(-r2 / (2 * sigma * sigma)) + noise(rng);
        px[y * 28 + x] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return out;
}

}  // namespace qadb
