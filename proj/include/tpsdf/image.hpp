#pragma once

// Row-major interleaved image container used for all pixel buffers.

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace tpsdf {

template <typename T>
struct Image {
  int width = 0, height = 0, channels = 0;
  std::vector<T> data;  // size = width*height*channels, row-major, interleaved

  Image() = default;
  Image(int w, int h, int c, T fill = T(0))
      : width(w), height(h), channels(c), data(size_t(w) * size_t(h) * size_t(c), fill) {}

  bool empty() const { return data.empty(); }
  size_t pixel_count() const { return size_t(width) * size_t(height); }

  T* at(int x, int y) { return data.data() + (size_t(y) * width + x) * channels; }
  const T* at(int x, int y) const { return data.data() + (size_t(y) * width + x) * channels; }

  T& at(int x, int y, int c) { return at(x, y)[c]; }
  T at(int x, int y, int c) const { return at(x, y)[c]; }

  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

using ImageF = Image<float>;
using ImageU8 = Image<uint8_t>;

inline ImageU8 quantize_unit(const ImageF& img) {
  ImageU8 out(img.width, img.height, img.channels);
  for (size_t i = 0; i < img.data.size(); ++i) {
    float v = img.data[i];
    v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
    out.data[i] = uint8_t(v * 255.0f + 0.5f);
  }
  return out;
}

inline ImageF to_unit_float(const ImageU8& img) {
  ImageF out(img.width, img.height, img.channels);
  for (size_t i = 0; i < img.data.size(); ++i) out.data[i] = float(img.data[i]) / 255.0f;
  return out;
}

}  // namespace tpsdf
