#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace polyprobe {

/// Non-owning row-major view over a rows x cols block of scalars.
template <class T>
class RowMatrixView {
 public:
  using value_type = T;

  RowMatrixView() = default;
  RowMatrixView(std::span<const T> data, std::size_t rows, std::size_t cols)
      : data_(data), rows_(rows), cols_(cols) {
    if (data.size() != rows * cols) {
      throw std::invalid_argument("RowMatrixView: data size does not match rows*cols");
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::span<const T> data() const noexcept { return data_; }

  std::span<const T> row(std::size_t i) const { return data_.subspan(i * cols_, cols_); }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

 private:
  std::span<const T> data_;
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
};

/// Owning row-major matrix; mostly used for gathered token subsets and test inputs.
template <class T>
struct RowMatrix {
  std::vector<T> values;
  std::size_t rows = 0;
  std::size_t cols = 0;

  RowMatrix() = default;
  RowMatrix(std::size_t r, std::size_t c, T fill = T{}) : values(r * c, fill), rows(r), cols(c) {}

  T& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }

  std::span<T> row(std::size_t i) { return std::span<T>(values).subspan(i * cols, cols); }
  std::span<const T> row(std::size_t i) const {
    return std::span<const T>(values).subspan(i * cols, cols);
  }

  RowMatrixView<T> view() const { return RowMatrixView<T>(values, rows, cols); }
  operator RowMatrixView<T>() const { return view(); }  // NOLINT(google-explicit-constructor)
};

}  // namespace polyprobe
