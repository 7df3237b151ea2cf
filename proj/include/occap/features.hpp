#pragma once

#include <filesystem>
#include <vector>

#include "occap/manifest.hpp"
#include "occap/tensor.hpp"

namespace occap::corpus {

// On-disk tensor format: magic "OCF1", u8 rank, rank x u32 little-endian
// dims, then product(dims) x f32 little-endian values.
num::Tensor read_ocf(const std::filesystem::path& path);
num::Tensor read_ocf(const std::filesystem::path& path, const std::vector<int>& expected_shape);
void write_ocf(const std::filesystem::path& path, const num::Tensor& t);

struct ImageFeatures {
    num::Tensor fc;      // [d_fc]
    num::Tensor spatial; // [N x d_loc]
};

ImageFeatures load_image_features(const ImageEntry& entry, const std::filesystem::path& base_dir, int d_fc,
                                  int grid_n, int d_loc);

} // namespace occap::corpus
