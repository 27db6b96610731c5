#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "qadb/tensor.hpp"

namespace qadb {

struct Dataset {
  Tensor images = Tensor({0, 1, 28, 28});  // [N,1,H,W], pixels in [0,1]
  std::vector<int> labels;

  Index size() const { return static_cast<Index>(labels.size()); }
  bool empty() const { return labels.empty(); }

  // Rows [begin, end) in order.
  Dataset slice(Index begin, Index end) const;
  Dataset gather(const std::vector<Index>& indices) const;
};

// Checks count agreement and pixel range; the error for a count mismatch
// names both counts.
Dataset make_dataset(Tensor images, std::vector<int> labels);

// Throws unless every label is in [0, n_classes).
void check_labels(const Dataset& data, int n_classes);

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// Uncompressed IDX image file -> [N,1,rows,cols] scaled by 1/255. Images that
// are not 28x28 load with a warning on stderr.
Tensor load_idx_images(const std::filesystem::path& path);
std::vector<int> load_idx_labels(const std::filesystem::path& path);

void write_idx_images(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels, std::uint32_t count,
                      std::uint32_t rows, std::uint32_t cols);
void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels);

Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels);

// Keeps samples whose label is in `classes` (original order) and relabels
// them to their position in `classes`.
Dataset filter_classes(const Dataset& data, const std::vector<int>& classes);

// Seeded subsample of n items keeping class proportions (largest remainder);
// selected samples keep their original relative order. n >= size() returns
// the input unchanged.
Dataset stratified_subsample(const Dataset& data, Index n, std::uint64_t seed);

// Class-dependent Gaussian blobs with seeded jitter and noise, balanced
// labels (sample i has label i mod n_classes).
Dataset synthetic_digits(std::uint64_t seed, Index n, int n_classes);

}  // namespace qadb
