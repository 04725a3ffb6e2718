#include "kcr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "kcr/errors.hpp"

namespace kcr {

void Dataset::validate() const {
    if (static_cast<int>(labels.size()) != images.rows) {
        throw_dimension("dataset: " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(images.rows) + " images");
    }
    if (image_side < 1 || images.cols != image_side * image_side) {
        throw_dimension("dataset: rows of length " + std::to_string(images.cols) +
                        " are not " + std::to_string(image_side) + "x" +
                        std::to_string(image_side) + " images");
    }
    if (classes < 1) throw_argument("dataset: class count must be positive");
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= classes) {
            throw_argument("dataset: label " + std::to_string(labels[i]) + " at row " +
                           std::to_string(i) + " outside [0, " + std::to_string(classes) + ")");
        }
    }
}

namespace {

double quantize_pixel(double v) {
    const double b = std::floor(v * 255.0 + 0.5);
    return std::clamp(b, 0.0, 255.0) / 255.0;
}

void fill_sample(double* dst, const double* tmpl, int pixels, double noise, Rng& rng) {
    for (int p = 0; p < pixels; ++p) {
        dst[p] = quantize_pixel(tmpl[p] + noise * rng.normal());
    }
}

} // namespace

std::pair<Dataset, Dataset> gen_split(const GenSpec& spec, uint64_t seed) {
    if (spec.classes < 1) throw_argument("gen_split: class count must be positive");
    if (spec.n_train < spec.classes) {
        throw_argument("gen_split: need at least one training sample per class");
    }
    if (spec.n_val < 0) throw_argument("gen_split: negative validation size");
    if (spec.image_side < 1) throw_argument("gen_split: image side must be positive");
    if (spec.noise < 0.0) throw_argument("gen_split: negative noise scale");

    Rng rng(seed, 4);
    const int pixels = spec.image_side * spec.image_side;
    const int total = spec.n_train + spec.n_val;

    Matrix templates(spec.classes, pixels);
    for (int c = 0; c < spec.classes; ++c) {
        double* row = templates.row(c);
        for (int p = 0; p < pixels; ++p) {
            row[p] = std::clamp(0.5 + spec.class_scale * rng.normal(), 0.05, 0.95);
        }
    }

    std::vector<int> labels(static_cast<size_t>(total));
    for (int i = 0; i < total; ++i) labels[static_cast<size_t>(i)] = i % spec.classes;
    rng.shuffle(labels);

    Matrix images(total, pixels);
    for (int i = 0; i < total; ++i) {
        fill_sample(images.row(i), templates.row(labels[static_cast<size_t>(i)]),
                    pixels, spec.noise, rng);
    }

    auto take = [&](int start, int count) {
        Dataset ds;
        ds.images = Matrix(count, pixels);
        ds.labels.assign(labels.begin() + start, labels.begin() + start + count);
        for (int i = 0; i < count; ++i) {
            const double* src = images.row(start + i);
            std::copy(src, src + pixels, ds.images.row(i));
        }
        ds.image_side = spec.image_side;
        ds.classes = spec.classes;
        return ds;
    };
    return {take(0, spec.n_train), take(spec.n_train, spec.n_val)};
}

namespace {

constexpr uint32_t kImageMagic = 0x00000803;
constexpr uint32_t kLabelMagic = 0x00000801;

void write_u32_be(std::ofstream& out, uint32_t v) {
    const unsigned char b[4] = {
        static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32_be(std::ifstream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw_io("unexpected end of file in " + path);
    }
    return (static_cast<uint32_t>(b[0]) << 24) | (static_cast<uint32_t>(b[1]) << 16) |
           (static_cast<uint32_t>(b[2]) << 8) | static_cast<uint32_t>(b[3]);
}

unsigned char pixel_byte(double v) {
    const double b = std::floor(v * 255.0 + 0.5);
    return static_cast<unsigned char>(std::clamp(b, 0.0, 255.0));
}

} // namespace

void write_idx(const Dataset& ds, const std::string& images_path,
               const std::string& labels_path) {
    ds.validate();
    {
        std::ofstream out(images_path, std::ios::binary);
        if (!out) throw_io("cannot open " + images_path + " for writing");
        write_u32_be(out, kImageMagic);
        write_u32_be(out, static_cast<uint32_t>(ds.images.rows));
        write_u32_be(out, static_cast<uint32_t>(ds.image_side));
        write_u32_be(out, static_cast<uint32_t>(ds.image_side));
        std::vector<unsigned char> buf(static_cast<size_t>(ds.images.cols));
        for (int i = 0; i < ds.images.rows; ++i) {
            const double* row = ds.images.row(i);
            for (int p = 0; p < ds.images.cols; ++p) buf[static_cast<size_t>(p)] = pixel_byte(row[p]);
            out.write(reinterpret_cast<const char*>(buf.data()),
                      static_cast<std::streamsize>(buf.size()));
        }
        if (!out) throw_io("write failed for " + images_path);
    }
    {
        std::ofstream out(labels_path, std::ios::binary);
        if (!out) throw_io("cannot open " + labels_path + " for writing");
        write_u32_be(out, kLabelMagic);
        write_u32_be(out, static_cast<uint32_t>(ds.labels.size()));
        for (int label : ds.labels) {
            const unsigned char b = static_cast<unsigned char>(label);
            out.write(reinterpret_cast<const char*>(&b), 1);
        }
        if (!out) throw_io("write failed for " + labels_path);
    }
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    Dataset ds;
    {
        std::ifstream in(images_path, std::ios::binary);
        if (!in) throw_io("cannot open " + images_path);
        const uint32_t magic = read_u32_be(in, images_path);
        if (magic != kImageMagic) {
            throw_io(images_path + ": bad image magic " + std::to_string(magic));
        }
        const uint32_t n = read_u32_be(in, images_path);
        const uint32_t rows = read_u32_be(in, images_path);
        const uint32_t cols = read_u32_be(in, images_path);
        if (rows != cols || rows == 0) {
            throw_io(images_path + ": only square images are supported, got " +
                     std::to_string(rows) + "x" + std::to_string(cols));
        }
        ds.image_side = static_cast<int>(rows);
        const int pixels = static_cast<int>(rows * cols);
        ds.images = Matrix(static_cast<int>(n), pixels);
        std::vector<unsigned char> buf(static_cast<size_t>(pixels));
        for (uint32_t i = 0; i < n; ++i) {
            if (!in.read(reinterpret_cast<char*>(buf.data()),
                         static_cast<std::streamsize>(buf.size()))) {
                throw_io(images_path + ": truncated at image " + std::to_string(i));
            }
            double* row = ds.images.row(static_cast<int>(i));
            for (int p = 0; p < pixels; ++p) row[p] = buf[static_cast<size_t>(p)] / 255.0;
        }
    }
    {
        std::ifstream in(labels_path, std::ios::binary);
        if (!in) throw_io("cannot open " + labels_path);
        const uint32_t magic = read_u32_be(in, labels_path);
        if (magic != kLabelMagic) {
            throw_io(labels_path + ": bad label magic " + std::to_string(magic));
        }
        const uint32_t n = read_u32_be(in, labels_path);
        if (static_cast<int>(n) != ds.images.rows) {
            throw_io(labels_path + ": " + std::to_string(n) + " labels for " +
                     std::to_string(ds.images.rows) + " images");
        }
        ds.labels.resize(n);
        int max_label = 0;
        for (uint32_t i = 0; i < n; ++i) {
            unsigned char b = 0;
            if (!in.read(reinterpret_cast<char*>(&b), 1)) {
                throw_io(labels_path + ": truncated at label " + std::to_string(i));
            }
            ds.labels[i] = static_cast<int>(b);
            max_label = std::max(max_label, static_cast<int>(b));
        }
        ds.classes = max_label + 1;
    }
    ds.validate();
    return ds;
}

} // namespace kcr
