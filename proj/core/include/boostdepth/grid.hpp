#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "boostdepth/error.hpp"

namespace boostdepth {

/// Dense row-major W×H×C grid with interleaved channels.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, int channels = 1, T fill = T{})
      : width_(width), height_(height), channels_(channels) {
    if (width < 0 || height < 0 || channels < 1) {
      throw ConfigError("grid dimensions must be non-negative with at least one channel");
    }
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }
  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  T& operator()(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
  const T& operator()(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* raw() { return data_.data(); }
  const T* raw() const { return data_.data(); }

  template <typename U>
  bool same_extent(const Grid<U>& other) const {
    return width_ == other.width() && height_ == other.height();
  }
  template <typename U>
  bool same_shape(const Grid<U>& other) const {
    return same_extent(other) && channels_ == other.channels();
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.channels_ == b.channels_ &&
           a.data_ == b.data_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<T> data_;
};

/// Intensities in [0,1], one or three channels.
using ImageBuffer = Grid<double>;
/// Per-pixel boolean stored as bytes (0 or 1).
using Mask = Grid<std::uint8_t>;

/// Metric depth with an explicit validity mask.
struct DepthMap {
  Grid<double> values;
  Mask valid;

  DepthMap() = default;
  DepthMap(Grid<double> v, Mask m) : values(std::move(v)), valid(std::move(m)) {
    if (!values.same_extent(valid) || values.channels() != 1 || valid.channels() != 1) {
      throw DataError("depth map and validity mask must be single-channel and equally sized");
    }
  }

  static DepthMap constant(int width, int height, double depth) {
    return DepthMap(Grid<double>(width, height, 1, depth), Mask(width, height, 1, 1));
  }
  /// Validity derived from the values: finite and strictly positive.
  static DepthMap from_values(Grid<double> v);

  int width() const { return values.width(); }
  int height() const { return values.height(); }
  bool is_valid(int x, int y) const { return valid(x, y) != 0; }
  std::size_t valid_count() const;
};

}  // namespace boostdepth
