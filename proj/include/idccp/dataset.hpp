#pragma once

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "idccp/config.hpp"
#include "idccp/error.hpp"
#include "idccp/group_d4.hpp"
#include "idccp/image.hpp"
#include "idccp/rng.hpp"

namespace idccp {

struct Sample {
    ImageTensor image;
    std::size_t label = 0; // 0-based
};

struct Dataset {
    std::vector<Sample> samples;
    std::vector<std::string> class_names;
    std::size_t skipped_files = 0;

    std::size_t classes() const noexcept { return class_names.size(); }
    std::size_t size() const noexcept { return samples.size(); }
    bool empty() const noexcept { return samples.empty(); }
};

// Class k is the sum of k + 1 oriented sinusoidal gratings at class-specific
// frequencies and orientations, with random phases, Gaussian noise (0.05), and
// a uniformly random D4 pose per sample.
inline Dataset generate_synthetic_dataset(const TrainConfig& config, std::size_t n_per_class) {
    if (config.classes > 16) throw ConfigError("synthetic data supports at most 16 classes");
    if (config.image_size < 16) throw ConfigError("synthetic data needs image_size >= 16");
    Dataset ds;
    for (std::size_t k = 0; k < config.classes; ++k) ds.class_names.push_back("class" + std::to_string(k));
    const std::size_t n = config.image_size;
    const double two_pi = 2.0 * std::numbers::pi;
    Rng master = Rng(config.seed).fork(0x5eed5);
    for (std::size_t k = 0; k < config.classes; ++k) {
        const double freq = 0.05 + 0.02 * static_cast<double>(k); // cycles per pixel
        const std::size_t gratings = k + 1;
        std::vector<double> cos_t(gratings), sin_t(gratings);
        for (std::size_t j = 0; j < gratings; ++j) {
            const double theta = std::numbers::pi * (static_cast<double>(j) / static_cast<double>(gratings)) +
                                 0.3 * static_cast<double>(k);
            cos_t[j] = std::cos(theta);
            sin_t[j] = std::sin(theta);
        }
        const double amp = 0.4 / std::sqrt(static_cast<double>(gratings));
        for (std::size_t i = 0; i < n_per_class; ++i) {
            Rng rng = master.fork(k * 1000003 + i);
            std::vector<double> phase(gratings);
            for (double& p : phase) p = rng.uniform(0.0, two_pi);
            ImageTensor img(1, n, n);
            for (std::size_t y = 0; y < n; ++y)
                for (std::size_t x = 0; x < n; ++x) {
                    double v = 0.0;
                    for (std::size_t j = 0; j < gratings; ++j) {
                        const double t = static_cast<double>(x) * cos_t[j] + static_cast<double>(y) * sin_t[j];
                        v += std::sin(two_pi * freq * t + phase[j]);
                    }
                    img.at(0, y, x) = 0.5 + amp * v + rng.normal(0.0, 0.05);
                }
            const auto pose = d4::kElements[rng.below(d4::kOrder)];
            ds.samples.push_back({d4::act_on_image(pose, img), k});
        }
    }
    return ds;
}

namespace detail {

struct RawImage {
    std::size_t width = 0, height = 0, channels = 0;
    std::vector<double> values; // row-major, interleaved, in [0, 1]
};

inline RawImage read_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::string magic;
    in >> magic;
    auto next_int = [&]() {
        long v = -1;
        while (in >> std::ws && in.peek() == '#') {
            std::string skip;
            std::getline(in, skip);
        }
        if (!(in >> v) || v < 0) throw DataError("malformed header in " + path.string());
        return static_cast<std::size_t>(v);
    };
    RawImage img;
    bool binary = false;
    if (magic == "P2" || magic == "P5") img.channels = 1;
    else if (magic == "P3" || magic == "P6") img.channels = 3;
    else throw DataError("unsupported PNM magic in " + path.string());
    binary = magic == "P5" || magic == "P6";
    img.width = next_int();
    img.height = next_int();
    const std::size_t maxval = next_int();
    if (img.width == 0 || img.height == 0 || maxval == 0 || maxval > 65535) {
        throw DataError("invalid dimensions in " + path.string());
    }
    const std::size_t count = img.width * img.height * img.channels;
    img.values.resize(count);
    if (binary) {
        in.get(); // single whitespace after maxval
        const std::size_t bytes = maxval < 256 ? 1 : 2;
        std::vector<unsigned char> buf(count * bytes);
        if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
            throw DataError("truncated pixel data in " + path.string());
        }
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t v = bytes == 1 ? buf[i] : (std::size_t{buf[2 * i]} << 8) | buf[2 * i + 1];
            img.values[i] = static_cast<double>(v) / static_cast<double>(maxval);
        }
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            img.values[i] = static_cast<double>(std::min(next_int(), maxval)) / static_cast<double>(maxval);
        }
    }
    return img;
}

inline RawImage read_png(const std::filesystem::path& path) {
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
    if (!fp) throw DataError("cannot open " + path.string());
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_stdio(&image, fp.get())) {
        throw DataError("invalid PNG " + path.string() + ": " + image.message);
    }
    const bool colour = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
    image.format = colour ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw DataError("corrupt PNG " + path.string() + ": " + msg);
    }
    RawImage img;
    img.width = image.width;
    img.height = image.height;
    img.channels = colour ? 3 : 1;
    img.values.resize(buf.size());
    for (std::size_t i = 0; i < buf.size(); ++i) img.values[i] = buf[i] / 255.0;
    return img;
}

// Center crop to the shorter side, bilinear resize to size x size, channel
// conversion (luminance or replication) to `channels`.
inline ImageTensor to_tensor(const RawImage& raw, std::size_t size, std::size_t channels) {
    const std::size_t side = std::min(raw.width, raw.height);
    const std::size_t x0 = (raw.width - side) / 2;
    const std::size_t y0 = (raw.height - side) / 2;
    auto pixel = [&](std::size_t c, std::size_t y, std::size_t x) {
        const std::size_t base = ((y0 + y) * raw.width + (x0 + x)) * raw.channels;
        if (raw.channels == channels) return raw.values[base + c];
        if (raw.channels == 1) return raw.values[base];
        return 0.299 * raw.values[base] + 0.587 * raw.values[base + 1] + 0.114 * raw.values[base + 2];
    };
    ImageTensor out(channels, size, size);
    const double scale = static_cast<double>(side) / static_cast<double>(size);
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x) {
                // Pixel-center alignment.
                const double sy = std::clamp((static_cast<double>(y) + 0.5) * scale - 0.5, 0.0,
                                             static_cast<double>(side - 1));
                const double sx = std::clamp((static_cast<double>(x) + 0.5) * scale - 0.5, 0.0,
                                             static_cast<double>(side - 1));
                const auto iy = static_cast<std::size_t>(sy);
                const auto ix = static_cast<std::size_t>(sx);
                const std::size_t iy1 = std::min(iy + 1, side - 1);
                const std::size_t ix1 = std::min(ix + 1, side - 1);
                const double fy = sy - static_cast<double>(iy);
                const double fx = sx - static_cast<double>(ix);
                out.at(c, y, x) = (1 - fy) * ((1 - fx) * pixel(c, iy, ix) + fx * pixel(c, iy, ix1)) +
                                  fy * ((1 - fx) * pixel(c, iy1, ix) + fx * pixel(c, iy1, ix1));
            }
    return out;
}

inline bool is_image_file(const std::filesystem::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    return ext == ".pgm" || ext == ".ppm" || ext == ".pnm" || ext == ".png";
}

} // namespace detail

inline ImageTensor load_image(const std::filesystem::path& path, std::size_t size, std::size_t channels) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    const auto raw = ext == ".png" ? detail::read_png(path) : detail::read_pnm(path);
    return detail::to_tensor(raw, size, channels);
}

// One subdirectory per class, labels by sorted directory name. Unreadable
// images are skipped and counted in skipped_files.
inline Dataset load_image_folder(const std::filesystem::path& root, std::size_t image_size,
                                 std::size_t channels) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw DataError("dataset folder not found: " + root.string());
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    if (dirs.empty()) throw DataError("no class subdirectories in " + root.string());
    Dataset ds;
    for (std::size_t label = 0; label < dirs.size(); ++label) {
        ds.class_names.push_back(dirs[label].filename().string());
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(dirs[label]))
            if (e.is_regular_file() && detail::is_image_file(e.path())) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        std::size_t loaded = 0;
        for (const auto& f : files) {
            try {
                ds.samples.push_back({load_image(f, image_size, channels), label});
                ++loaded;
            } catch (const DataError&) {
                ++ds.skipped_files;
            }
        }
        if (loaded == 0) throw DataError("class '" + ds.class_names.back() + "' has no readable images");
    }
    return ds;
}

inline Dataset load_dataset(const TrainConfig& config) {
    if (config.dataset == "synthetic") return generate_synthetic_dataset(config, config.n_per_class);
    return load_image_folder(config.dataset, config.image_size, config.channels);
}

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

// Seeded per-class shuffle; round(ratio * n_k) samples of each class go to
// training, keeping at least one on each side when n_k >= 2.
inline Split stratified_split(const Dataset& ds, double train_ratio, std::uint64_t seed) {
    if (!(train_ratio > 0.0 && train_ratio < 1.0)) throw ConfigError("train_ratio must be in (0, 1)");
    Split s;
    Rng master = Rng(seed).fork(0x5b1177);
    for (std::size_t k = 0; k < ds.classes(); ++k) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < ds.size(); ++i)
            if (ds.samples[i].label == k) idx.push_back(i);
        Rng rng = master.fork(k);
        for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
        auto n_train = static_cast<std::size_t>(std::llround(train_ratio * static_cast<double>(idx.size())));
        if (idx.size() >= 2) n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
        s.train.insert(s.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
        s.test.insert(s.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

// Random D4 pose and/or a random shift of up to 2 pixels with zero fill.
inline ImageTensor augment(const ImageTensor& img, bool flip, bool crop, Rng& rng) {
    ImageTensor out = img;
    if (flip) out = d4::act_on_image(d4::kElements[rng.below(d4::kOrder)], out);
    if (crop) {
        const long dy = static_cast<long>(rng.below(5)) - 2;
        const long dx = static_cast<long>(rng.below(5)) - 2;
        ImageTensor shifted(out.channels(), out.height(), out.width());
        const long h = static_cast<long>(out.height());
        const long w = static_cast<long>(out.width());
        for (std::size_t c = 0; c < out.channels(); ++c)
            for (long y = 0; y < h; ++y)
                for (long x = 0; x < w; ++x) {
                    const long sy = y + dy, sx = x + dx;
                    if (sy >= 0 && sy < h && sx >= 0 && sx < w) {
                        shifted.at(c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
                            out.at(c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
                    }
                }
        out = std::move(shifted);
    }
    return out;
}

} // namespace idccp
