#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "svae/tensor.hpp"

namespace svae {

/// Unsigned-byte image stack as stored in an IDX file, row-major N x H x W.
struct RawImages {
    std::size_t count = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> pixels;
};

RawImages parse_idx_images(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_idx_images(const RawImages& images);
std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels);

RawImages load_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path);

/// N x (H*W) matrix with every byte divided by 255.
Tensor normalize(const RawImages& raw);

struct Dataset {
    Tensor images;  // N x P, values in [0, 1]
    std::vector<std::size_t> labels;
    std::size_t num_classes = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t size() const { return labels.size(); }
    std::size_t input_dim() const { return height * width; }
    std::span<const double> image(std::size_t i) const { return images.row_span(i); }
    void validate() const;
    /// Rows [begin, end).
    Dataset slice(std::size_t begin, std::size_t end) const;
    Dataset select(std::span<const std::size_t> indices) const;
};

Dataset make_dataset(Tensor images, std::vector<std::size_t> labels, std::size_t num_classes, std::size_t height,
                     std::size_t width);

enum class MnistPart { train, test };

/// Reads `train-*` or `t10k-*` IDX files from dir and keeps rows [offset, offset + limit).
/// limit = 0 keeps everything from offset on.
Dataset load_mnist(const std::filesystem::path& dir, MnistPart part, std::size_t offset = 0, std::size_t limit = 0);

/// Class c lights one quadrant (0.9) over a dark background (0.1), plus
/// N(0, 0.05^2) pixel noise clipped to [0, 1]. Labels cycle 0, 1, ..., C-1.
Dataset synth_toy_dataset(std::uint64_t seed, std::size_t n_per_class, std::size_t num_classes = 4,
                          std::size_t height = 8, std::size_t width = 8);

/// Noise-free template of class c in the toy dataset.
std::vector<double> toy_template(std::size_t label, std::size_t height = 8, std::size_t width = 8);

/// Shuffled index batches for one epoch; the last batch may be short.
std::vector<std::vector<std::size_t>> batches(const Dataset& d, std::size_t batch_size, std::uint64_t seed,
                                              std::uint64_t epoch);

/// Gathers the listed rows.
Tensor gather_rows(const Tensor& t, std::span<const std::size_t> rows);

}  // namespace svae
