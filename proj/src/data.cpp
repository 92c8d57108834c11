#include "svae/data.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>

#include "svae/errors.hpp"
#include "svae/rng.hpp"

namespace svae {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
    return (std::uint32_t(b[at]) << 24) | (std::uint32_t(b[at + 1]) << 16) | (std::uint32_t(b[at + 2]) << 8) |
           std::uint32_t(b[at + 3]);
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(std::uint8_t(v >> 24));
    out.push_back(std::uint8_t(v >> 16));
    out.push_back(std::uint8_t(v >> 8));
    out.push_back(std::uint8_t(v));
}

std::uint32_t header(std::span<const std::uint8_t> bytes, std::size_t header_len, std::uint32_t expected,
                     const char* what) {
    if (bytes.size() < 4) throw LengthError(std::string(what) + " file is too short to hold a magic number");
    const std::uint32_t magic = read_be32(bytes, 0);
    if (magic != expected) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "bad magic 0x%08x (expected 0x%08x)", magic, expected);
        throw FormatError(std::string(what) + " file: " + buf);
    }
    if (bytes.size() < header_len) throw LengthError(std::string(what) + " file header is truncated");
    return magic;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

RawImages parse_idx_images(std::span<const std::uint8_t> bytes) {
    header(bytes, 16, kImageMagic, "IDX image");
    RawImages r;
    r.count = read_be32(bytes, 4);
    r.height = read_be32(bytes, 8);
    r.width = read_be32(bytes, 12);
    const std::size_t n = r.count * r.height * r.width;
    if (bytes.size() - 16 < n) {
        throw LengthError("IDX image payload truncated: expected " + std::to_string(n) + " bytes, found " +
                          std::to_string(bytes.size() - 16));
    }
    r.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(n));
    return r;
}

std::vector<std::uint8_t> parse_idx_labels(std::span<const std::uint8_t> bytes) {
    header(bytes, 8, kLabelMagic, "IDX label");
    const std::size_t n = read_be32(bytes, 4);
    if (bytes.size() - 8 < n) {
        throw LengthError("IDX label payload truncated: expected " + std::to_string(n) + " bytes, found " +
                          std::to_string(bytes.size() - 8));
    }
    return {bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(n)};
}

std::vector<std::uint8_t> encode_idx_images(const RawImages& images) {
    std::vector<std::uint8_t> out;
    out.reserve(16 + images.pixels.size());
    write_be32(out, kImageMagic);
    write_be32(out, std::uint32_t(images.count));
    write_be32(out, std::uint32_t(images.height));
    write_be32(out, std::uint32_t(images.width));
    out.insert(out.end(), images.pixels.begin(), images.pixels.end());
    return out;
}

std::vector<std::uint8_t> encode_idx_labels(std::span<const std::uint8_t> labels) {
    std::vector<std::uint8_t> out;
    write_be32(out, kLabelMagic);
    write_be32(out, std::uint32_t(labels.size()));
    out.insert(out.end(), labels.begin(), labels.end());
    return out;
}

RawImages load_idx_images(const std::filesystem::path& path) { return parse_idx_images(read_file(path)); }

std::vector<std::uint8_t> load_idx_labels(const std::filesystem::path& path) {
    return parse_idx_labels(read_file(path));
}

Tensor normalize(const RawImages& raw) {
    Tensor t = Tensor::zeros({raw.count, raw.height * raw.width});
    for (std::size_t i = 0; i < raw.pixels.size(); ++i) t[i] = double(raw.pixels[i]) / 255.0;
    return t;
}

void Dataset::validate() const {
    if (images.rows() != labels.size()) {
        throw DimensionError("dataset has " + std::to_string(images.rows()) + " images but " +
                             std::to_string(labels.size()) + " labels");
    }
    if (images.cols() != input_dim()) throw DimensionError("image width does not match height x width");
    for (std::size_t y : labels) {
        if (y >= num_classes) throw DomainError("label " + std::to_string(y) + " is out of range");
    }
    for (double v : images.values()) {
        if (!(v >= 0.0 && v <= 1.0)) throw DomainError("dataset pixel outside [0, 1]");
    }
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
    end = std::min(end, size());
    if (begin > end) throw DimensionError("empty or inverted dataset slice");
    std::vector<std::size_t> idx(end - begin);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
    return select(idx);
}

Dataset Dataset::select(std::span<const std::size_t> indices) const {
    Dataset d;
    d.num_classes = num_classes;
    d.height = height;
    d.width = width;
    d.labels.reserve(indices.size());
    for (std::size_t i : indices) d.labels.push_back(labels.at(i));
    d.images = indices.empty() ? Tensor() : gather_rows(images, indices);
    return d;
}

Dataset make_dataset(Tensor images, std::vector<std::size_t> labels, std::size_t num_classes, std::size_t height,
                     std::size_t width) {
    Dataset d{std::move(images), std::move(labels), num_classes, height, width};
    d.validate();
    return d;
}

Dataset load_mnist(const std::filesystem::path& dir, MnistPart part, std::size_t offset, std::size_t limit) {
    const std::string prefix = part == MnistPart::train ? "train" : "t10k";
    const RawImages raw = load_idx_images(dir / (prefix + "-images-idx3-ubyte"));
    const auto raw_labels = load_idx_labels(dir / (prefix + "-labels-idx1-ubyte"));
    if (raw_labels.size() != raw.count) throw DimensionError("MNIST image and label counts differ");
    if (offset >= raw.count) throw DimensionError("MNIST offset beyond the end of the file");
    const std::size_t end = limit == 0 ? raw.count : std::min(raw.count, offset + limit);
    const std::size_t p = raw.height * raw.width;

    RawImages part_raw{end - offset, raw.height, raw.width, {}};
    part_raw.pixels.assign(raw.pixels.begin() + static_cast<std::ptrdiff_t>(offset * p),
                           raw.pixels.begin() + static_cast<std::ptrdiff_t>(end * p));
    std::vector<std::size_t> labels(raw_labels.begin() + static_cast<std::ptrdiff_t>(offset),
                                    raw_labels.begin() + static_cast<std::ptrdiff_t>(end));
    return make_dataset(normalize(part_raw), std::move(labels), 10, raw.height, raw.width);
}

std::vector<double> toy_template(std::size_t label, std::size_t height, std::size_t width) {
    if (label >= 4) throw DomainError("toy dataset has four quadrant classes");
    std::vector<double> img(height * width, 0.1);
    const std::size_t r0 = (label / 2) * (height / 2), c0 = (label % 2) * (width / 2);
    const std::size_t r1 = label / 2 ? height : height / 2, c1 = label % 2 ? width : width / 2;
    for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) img[r * width + c] = 0.9;
    return img;
}

Dataset synth_toy_dataset(std::uint64_t seed, std::size_t n_per_class, std::size_t num_classes, std::size_t height,
                          std::size_t width) {
    if (n_per_class == 0) throw ConfigError("toy dataset needs at least one image per class");
    if (num_classes < 2 || num_classes > 4) throw ConfigError("toy dataset supports 2 to 4 classes");
    if (height < 2 || width < 2) throw ConfigError("toy images must be at least 2 x 2");
    const std::size_t n = n_per_class * num_classes, p = height * width;
    Rng rng(seed);
    Tensor images = Tensor::zeros({n, p});
    std::vector<std::size_t> labels(n);
    std::vector<std::vector<double>> templates;
    for (std::size_t c = 0; c < num_classes; ++c) templates.push_back(toy_template(c, height, width));
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = i % num_classes;
        auto row = images.row_span(i);
        for (std::size_t j = 0; j < p; ++j) {
            row[j] = std::clamp(templates[labels[i]][j] + 0.05 * rng.normal(), 0.0, 1.0);
        }
    }
    return make_dataset(std::move(images), std::move(labels), num_classes, height, width);
}

std::vector<std::vector<std::size_t>> batches(const Dataset& d, std::size_t batch_size, std::uint64_t seed,
                                              std::uint64_t epoch) {
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    Rng rng = Rng::derive(seed, 0xba7c, epoch);
    const auto perm = rng.permutation(d.size());
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t b = 0; b < perm.size(); b += batch_size) {
        out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(b),
                         perm.begin() + static_cast<std::ptrdiff_t>(std::min(perm.size(), b + batch_size)));
    }
    return out;
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> rows) {
    const std::size_t cols = t.cols();
    Tensor out = Tensor::zeros({rows.size(), cols});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= t.rows()) throw DimensionError("row index out of range");
        std::copy_n(t.data() + rows[i] * cols, cols, out.data() + i * cols);
    }
    return out;
}

}  // namespace svae
