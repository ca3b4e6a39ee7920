#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace xmodal {

// H x W x 3 byte image, row-major RGB. Used both for synthetic photos and
// for text rendered as an image.
struct Canvas {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;  // size height * width * 3

  Canvas() = default;
  Canvas(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, 0) {}

  std::uint8_t& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }

  bool operator==(const Canvas&) const = default;
};

// Binary PPM (P6, maxval 255). The writer emits the canonical header
// `P6\n<w> <h>\n255\n`, so identical canvases give bit-identical files.
void write_ppm(const Canvas& canvas, const std::filesystem::path& path);
Canvas read_ppm(const std::filesystem::path& path);

}  // namespace xmodal
