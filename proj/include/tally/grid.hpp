#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "tally/error.hpp"

namespace tally {

/// Row-major 2-D raster.
template <class T>
class Grid {
public:
    Grid() = default;
    Grid(int rows, int cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {
        if (rows < 0 || cols < 0) fail(ErrorKind::InvalidInput, "negative grid dimensions");
    }

    int rows() const noexcept { return rows_; }
    int cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    bool inside(int r, int c) const noexcept { return r >= 0 && c >= 0 && r < rows_ && c < cols_; }

    T& operator()(int r, int c) noexcept { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    const T& operator()(int r, int c) const noexcept {
        return data_[static_cast<std::size_t>(r) * cols_ + c];
    }
    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    std::vector<T>& data() noexcept { return data_; }
    const std::vector<T>& data() const noexcept { return data_; }

    bool same_shape(const Grid& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
    template <class U>
    bool same_shape(const Grid<U>& o) const noexcept { return rows_ == o.rows() && cols_ == o.cols(); }

    friend bool operator==(const Grid& a, const Grid& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<T> data_;
};

using GrayImage = Grid<std::uint8_t>;
/// Binary mask; every entry is 0 or 1.
using Mask = Grid<std::uint8_t>;
using Field = Grid<double>;
using LevelImage = Grid<int>;
using LabelImage = Grid<int>;

/// Planar 8-bit RGB image.
struct RgbImage {
    GrayImage red, green, blue;

    RgbImage() = default;
    RgbImage(int rows, int cols) : red(rows, cols), green(rows, cols), blue(rows, cols) {}

    int rows() const noexcept { return red.rows(); }
    int cols() const noexcept { return red.cols(); }

    GrayImage& channel(int i) { return i == 0 ? red : (i == 1 ? green : blue); }
    const GrayImage& channel(int i) const { return i == 0 ? red : (i == 1 ? green : blue); }

    friend bool operator==(const RgbImage& a, const RgbImage& b) {
        return a.red == b.red && a.green == b.green && a.blue == b.blue;
    }
};

enum class Channel { Red = 0, Green = 1, Blue = 2 };

inline std::size_t count_set(const Mask& m) {
    std::size_t n = 0;
    for (auto v : m.data()) n += v ? 1 : 0;
    return n;
}

}  // namespace tally
