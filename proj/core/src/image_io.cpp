#include "accnn/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace accnn {

void write_ppm(const std::string& path, const Tensor<float>& image) {
  if (image.rank() != 3 || image.shape()[2] != 3) {
    throw std::invalid_argument("write_ppm: expected (H, W, 3) image, got " +
                                shape_str(image.shape()));
  }
  const std::size_t H = image.shape()[0], W = image.shape()[1];
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_ppm: cannot open " + path);
  os << "P6\n" << W << " " << H << "\n255\n";
  std::vector<unsigned char> row(W * 3);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const float v = std::clamp(image[image.at3(y, x, c)], 0.0f, 1.0f);
        row[x * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0f));
      }
    }
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw std::runtime_error("write_ppm: write failed for " + path);
}

Tensor<float> read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_ppm: cannot open " + path);
  std::string magic;
  is >> magic;
  if (magic != "P6") throw std::runtime_error("read_ppm: " + path + " is not P6");
  std::size_t w = 0, h = 0, maxval = 0;
  is >> w >> h >> maxval;
  if (!is || w == 0 || h == 0 || maxval != 255) {
    throw std::runtime_error("read_ppm: bad header in " + path);
  }
  is.get();  // single whitespace after maxval
  Tensor<float> image({h, w, 3});
  std::vector<unsigned char> buf(w * h * 3);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!is) throw std::runtime_error("read_ppm: truncated file " + path);
  for (std::size_t i = 0; i < buf.size(); ++i) {
    image[i] = static_cast<float>(buf[i]) / 255.0f;
  }
  return image;
}

void write_pgm(const std::string& path, const std::vector<std::uint8_t>& gray, std::size_t width,
               std::size_t height) {
  if (gray.size() != width * height) {
    throw std::invalid_argument("write_pgm: buffer does not match extents");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_pgm: cannot open " + path);
  os << "P5\n" << width << " " << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(gray.data()), static_cast<std::streamsize>(gray.size()));
  if (!os) throw std::runtime_error("write_pgm: write failed for " + path);
}

}  // namespace accnn
