#pragma once

#include <cstdint>
#include <vector>

#include "planpaint/error.hpp"

namespace planpaint {

// Dense channel-major 3-D tensor (C, H, W); the canonical layout for plan
// tensors and network feature maps. data[(c*h + y)*w + x].
template <typename S>
struct Tensor3 {
  int c = 0, h = 0, w = 0;
  std::vector<S> data;

  Tensor3() = default;
  Tensor3(int c_, int h_, int w_, S fill = S(0))
      : c(c_), h(h_), w(w_),
        data(static_cast<size_t>(c_) * h_ * w_, fill) {
    PP_CHECK(c_ >= 0 && h_ >= 0 && w_ >= 0);
  }

  size_t size() const { return data.size(); }
  int plane() const { return h * w; }

  S& operator()(int ch, int y, int x) {
    return data[(static_cast<size_t>(ch) * h + y) * w + x];
  }
  S operator()(int ch, int y, int x) const {
    return data[(static_cast<size_t>(ch) * h + y) * w + x];
  }

  S& at(int ch, int y, int x) {
    PP_CHECK(ch >= 0 && ch < c && y >= 0 && y < h && x >= 0 && x < w);
    return (*this)(ch, y, x);
  }
  S at(int ch, int y, int x) const {
    PP_CHECK(ch >= 0 && ch < c && y >= 0 && y < h && x >= 0 && x < w);
    return (*this)(ch, y, x);
  }

  S* channel(int ch) { return data.data() + static_cast<size_t>(ch) * plane(); }
  const S* channel(int ch) const {
    return data.data() + static_cast<size_t>(ch) * plane();
  }

  bool same_shape(const Tensor3& o) const {
    return c == o.c && h == o.h && w == o.w;
  }

  template <typename T>
  Tensor3<T> cast() const {
    Tensor3<T> out(c, h, w);
    for (size_t i = 0; i < data.size(); ++i)
      out.data[i] = static_cast<T>(data[i]);
    return out;
  }
};

using Tensor3f = Tensor3<float>;
using Tensor3d = Tensor3<double>;

// A grid cell addressed as (row, col); row 0 is the top row.
struct Cell {
  int r = 0;
  int c = 0;
  friend bool operator==(const Cell& a, const Cell& b) = default;
};

}  // namespace planpaint
