#pragma once

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fhl/common.hpp"

namespace fhl {

/// Row-major 2D array of samples on the lattice h*Z^2. Node (r, c) sits at
/// position (c*h, r*h) in the frame the grid was created for.
template <class T>
class Grid {
 public:
  Grid() = default;
  Grid(int rows, int cols, double h, T fill = T{})
      : rows_(rows), cols_(cols), h_(h), data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill) {
    if (rows <= 0 || cols <= 0) throw ParameterError("grid dimensions must be positive");
    if (!(h > 0.0)) throw ParameterError("grid spacing must be positive");
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double h() const { return h_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  int index(int r, int c) const { return r * cols_ + c; }
  int row_of(int idx) const { return idx / cols_; }
  int col_of(int idx) const { return idx % cols_; }
  bool inside(int r, int c) const { return r >= 0 && r < rows_ && c >= 0 && c < cols_; }

  T& operator()(int r, int c) { return data_[static_cast<std::size_t>(index(r, c))]; }
  const T& operator()(int r, int c) const { return data_[static_cast<std::size_t>(index(r, c))]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  Vec2 position(int idx) const { return {col_of(idx) * h_, row_of(idx) * h_}; }

  bool operator==(const Grid&) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  double h_ = 1.0;
  std::vector<T> data_;
};

using GridD = Grid<double>;

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  std::array<unsigned char, 4> b{};
  for (int i = 0; i < 4; ++i) b[static_cast<std::size_t>(i)] = static_cast<unsigned char>((v >> (8 * i)) & 0xFFu);
  os.write(reinterpret_cast<const char*>(b.data()), 4);
}

inline void put_f64(std::ostream& os, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  std::array<unsigned char, 8> b{};
  for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFFu);
  os.write(reinterpret_cast<const char*>(b.data()), 8);
}

inline std::uint32_t get_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 4)) throw FormatError("FHL1: truncated header");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
  return v;
}

inline double get_f64(std::istream& is) {
  std::array<unsigned char, 8> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 8)) throw FormatError("FHL1: truncated payload");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
  return std::bit_cast<double>(v);
}

}  // namespace detail

inline constexpr std::array<char, 4> kFhlMagic{'F', 'H', 'L', '1'};

// FHL1 layout: "FHL1", u32 rows, u32 cols, f64 cell_h, rows*cols f64 values,
// all little-endian, row-major. Infinity is stored as IEEE infinity.
inline void write_fhl1(std::ostream& os, const GridD& g) {
  os.write(kFhlMagic.data(), 4);
  detail::put_u32(os, static_cast<std::uint32_t>(g.rows()));
  detail::put_u32(os, static_cast<std::uint32_t>(g.cols()));
  detail::put_f64(os, g.h());
  for (double v : g.values()) detail::put_f64(os, v);
  if (!os) throw FormatError("FHL1: write failed");
}

inline GridD read_fhl1(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), 4) || magic != kFhlMagic) throw FormatError("FHL1: bad magic");
  const auto rows = detail::get_u32(is);
  const auto cols = detail::get_u32(is);
  const double h = detail::get_f64(is);
  if (rows == 0 || cols == 0 || rows > (1u << 20) || cols > (1u << 20)) throw FormatError("FHL1: bad dimensions");
  GridD g(static_cast<int>(rows), static_cast<int>(cols), h);
  for (auto& v : g.values()) v = detail::get_f64(is);
  return g;
}

inline void save_fhl1(const std::string& path, const GridD& g) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  write_fhl1(os, g);
}

inline GridD load_fhl1(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  return read_fhl1(is);
}

/// Bilinear interpolation at a point given in node-index units (col, row).
/// Caller guarantees the four surrounding nodes exist.
inline double bilinear(const GridD& g, double cx, double ry) {
  int c0 = static_cast<int>(std::floor(cx));
  int r0 = static_cast<int>(std::floor(ry));
  c0 = std::clamp(c0, 0, std::max(g.cols() - 2, 0));
  r0 = std::clamp(r0, 0, std::max(g.rows() - 2, 0));
  const double fx = cx - c0;
  const double fy = ry - r0;
  const int c1 = std::min(c0 + 1, g.cols() - 1);
  const int r1 = std::min(r0 + 1, g.rows() - 1);
  const double v00 = g(r0, c0), v01 = g(r0, c1), v10 = g(r1, c0), v11 = g(r1, c1);
  return (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
}

}  // namespace fhl
