#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace tassnet {

/// Dense tensor laid out as (batch, channels, depth, height, width); the last index
/// varies fastest. 2D data uses depth 1.
template <typename T>
struct BasicTensor {
  std::array<int, 5> dims{0, 0, 0, 0, 0};
  std::vector<T> data;

  BasicTensor() = default;
  BasicTensor(int n, int c, int d, int h, int w, T fill = T(0))
      : dims{n, c, d, h, w},
        data(static_cast<std::size_t>(n) * c * d * h * w, fill) {}

  int batch() const { return dims[0]; }
  int channels() const { return dims[1]; }
  int depth() const { return dims[2]; }
  int height() const { return dims[3]; }
  int width() const { return dims[4]; }
  std::size_t spatial_size() const {
    return static_cast<std::size_t>(dims[2]) * dims[3] * dims[4];
  }
  std::size_t size() const { return data.size(); }
  std::array<int, 3> spatial() const { return {dims[2], dims[3], dims[4]}; }

  T* channel_ptr(int n, int c) {
    return data.data() + (static_cast<std::size_t>(n) * dims[1] + c) * spatial_size();
  }
  const T* channel_ptr(int n, int c) const {
    return data.data() + (static_cast<std::size_t>(n) * dims[1] + c) * spatial_size();
  }
  T& at(int n, int c, int z, int y, int x) {
    return data[((static_cast<std::size_t>(n) * dims[1] + c) * dims[2] + z) * dims[3] * dims[4] +
                static_cast<std::size_t>(y) * dims[4] + x];
  }
  T at(int n, int c, int z, int y, int x) const {
    return data[((static_cast<std::size_t>(n) * dims[1] + c) * dims[2] + z) * dims[3] * dims[4] +
                static_cast<std::size_t>(y) * dims[4] + x];
  }

  bool same_shape(const BasicTensor& o) const { return dims == o.dims; }
};

using Tensor = BasicTensor<float>;

inline std::string shape_string(const std::array<int, 5>& d) {
  return std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]) + "x" +
         std::to_string(d[3]) + "x" + std::to_string(d[4]);
}

}  // namespace tassnet
