#include "owdetr/data/raster.hpp"

#include <cctype>
#include <fstream>
#include <string>

#include "owdetr/errors.hpp"

namespace owdetr::data {

void write_ppm(const Raster& raster, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P6\n" << raster.width << " " << raster.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(raster.rgb.data()),
            static_cast<std::streamsize>(raster.rgb.size()));
  if (!out) throw IoError("short write to " + path.string());
}

namespace {

// Next header token, skipping whitespace and '#' comments.
std::string header_token(std::istream& in) {
  std::string token;
  while (in) {
    int c = in.peek();
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  while (in && !std::isspace(in.peek()) && in.peek() != EOF) {
    token.push_back(static_cast<char>(in.get()));
  }
  return token;
}

}  // namespace

Raster read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  if (header_token(in) != "P6") throw ParseError(path.string() + ": not a binary PPM");
  Raster r;
  try {
    r.width = std::stoi(header_token(in));
    r.height = std::stoi(header_token(in));
    if (std::stoi(header_token(in)) != 255) {
      throw ParseError(path.string() + ": only maxval 255 is supported");
    }
  } catch (const std::logic_error&) {
    throw ParseError(path.string() + ": malformed PPM header");
  }
  in.get();  // single whitespace before the pixel block
  r.rgb.resize(static_cast<std::size_t>(r.width) * r.height * 3);
  in.read(reinterpret_cast<char*>(r.rgb.data()),
          static_cast<std::streamsize>(r.rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(r.rgb.size())) {
    throw ParseError(path.string() + ": truncated pixel data");
  }
  return r;
}

numerics::Tensor to_tensor(const Raster& raster) {
  const auto w = static_cast<std::size_t>(raster.width);
  const auto h = static_cast<std::size_t>(raster.height);
  std::vector<double> planar(3 * w * h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        planar[(c * h + y) * w + x] = raster.rgb[(y * w + x) * 3 + c] / 255.0;
      }
    }
  }
  return numerics::Tensor::from({3, h, w}, std::move(planar));
}

}  // namespace owdetr::data
