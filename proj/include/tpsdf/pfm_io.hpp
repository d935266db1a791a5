#pragma once

// PFM float maps ("Pf" one channel, "PF" three). Little-endian, scale
// header -1.0, rows stored bottom-to-top per the format convention.
// Round trips are bit-exact.

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>

#include "tpsdf/image.hpp"

namespace tpsdf {

inline void write_pfm(const std::filesystem::path& path, const ImageF& img) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("PFM supports 1 or 3 channels");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
  f << (img.channels == 1 ? "Pf" : "PF") << "\n" << img.width << " " << img.height << "\n-1.0\n";
  for (int y = img.height - 1; y >= 0; --y)
    f.write(reinterpret_cast<const char*>(img.at(0, y)),
            std::streamsize(sizeof(float)) * img.width * img.channels);
  if (!f) throw std::runtime_error("short write: " + path.string());
}

inline ImageF read_pfm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path.string());
  std::string magic;
  f >> magic;
  int channels;
  if (magic == "Pf") channels = 1;
  else if (magic == "PF") channels = 3;
  else throw std::runtime_error("not a PFM file: " + path.string());
  int w, h;
  double scale;
  f >> w >> h >> scale;
  if (!f || w <= 0 || h <= 0) throw std::runtime_error("bad PFM header: " + path.string());
  if (scale >= 0) throw std::runtime_error("big-endian PFM unsupported: " + path.string());
  f.get();  // single whitespace after the scale
  ImageF img(w, h, channels);
  for (int y = h - 1; y >= 0; --y)
    f.read(reinterpret_cast<char*>(img.at(0, y)), std::streamsize(sizeof(float)) * w * channels);
  if (!f) throw std::runtime_error("truncated PFM payload: " + path.string());
  return img;
}

}  // namespace tpsdf
