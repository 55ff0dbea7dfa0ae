#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "idccp/error.hpp"

namespace idccp {

// Channel-major (C, H, W) image or feature map.
class ImageTensor {
public:
    ImageTensor() = default;

    ImageTensor(std::size_t channels, std::size_t height, std::size_t width, double fill = 0.0)
        : channels_(channels), height_(height), width_(width),
          data_(channels * height * width, fill) {}

    ImageTensor(std::size_t channels, std::size_t height, std::size_t width,
                std::vector<double> data)
        : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
        if (data_.size() != channels_ * height_ * width_) {
            throw ShapeError("ImageTensor: data length does not match " + shape_string());
        }
    }

    std::size_t channels() const noexcept { return channels_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t plane_size() const noexcept { return height_ * width_; }
    bool square() const noexcept { return height_ == width_; }

    double& at(std::size_t c, std::size_t y, std::size_t x) noexcept {
        return data_[(c * height_ + y) * width_ + x];
    }
    double at(std::size_t c, std::size_t y, std::size_t x) const noexcept {
        return data_[(c * height_ + y) * width_ + x];
    }

    std::span<double> plane(std::size_t c) noexcept {
        return {data_.data() + c * plane_size(), plane_size()};
    }
    std::span<const double> plane(std::size_t c) const noexcept {
        return {data_.data() + c * plane_size(), plane_size()};
    }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    std::string shape_string() const {
        return std::to_string(channels_) + "x" + std::to_string(height_) + "x" +
               std::to_string(width_);
    }

    bool same_shape(const ImageTensor& o) const noexcept {
        return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_;
    }

    friend bool operator==(const ImageTensor&, const ImageTensor&) = default;

private:
    std::size_t channels_ = 0;
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<double> data_;
};

} // namespace idccp
