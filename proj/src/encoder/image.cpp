#include "objnav/encoder/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "objnav/common/errors.hpp"

namespace objnav::encoder {

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  char c = 0;
  while (in.get(c)) {
    if (c == '#') {
      std::string rest;
      std::getline(in, rest);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), 0, "cannot open image");
  const std::string magic = header_token(in);
  if (magic != "P6" && magic != "P3") throw ParseError(path.string(), 1, "not a PPM image (magic " + magic + ")");
  int width = 0;
  int height = 0;
  int maxval = 0;
  try {
    width = std::stoi(header_token(in));
    height = std::stoi(header_token(in));
    maxval = std::stoi(header_token(in));
  } catch (const std::exception&) {
    throw ParseError(path.string(), 1, "malformed PPM header");
  }
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 255) throw ParseError(path.string(), 1, "unsupported PPM header");

  Image img(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        int v = 0;
        if (magic == "P6") {
          char byte = 0;
          if (!in.get(byte)) throw ParseError(path.string(), 1, "truncated pixel data");
          v = static_cast<unsigned char>(byte);
        } else {
          const std::string tok = header_token(in);
          if (tok.empty()) throw ParseError(path.string(), 1, "truncated pixel data");
          v = std::stoi(tok);
        }
        img.at(c, y, x) = static_cast<double>(v) / static_cast<double>(maxval);
      }
    }
  }
  return img;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractError("cannot open " + path.string() + " for writing");
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
        out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
      }
    }
  }
}

ad::Matrix patchify(const Image& image, int patch_size) {
  if (patch_size <= 0 || image.height % patch_size != 0 || image.width % patch_size != 0) {
    std::ostringstream os;
    os << "image " << image.height << "x" << image.width << " is not divisible into " << patch_size << "-pixel patches";
    throw ContractError(os.str());
  }
  const int rows = image.height / patch_size;
  const int cols = image.width / patch_size;
  ad::Matrix out(rows * cols, 3 * patch_size * patch_size);
  for (int pr = 0; pr < rows; ++pr) {
    for (int pc = 0; pc < cols; ++pc) {
      const int token = pr * cols + pc;
      int k = 0;
      for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < patch_size; ++y) {
          for (int x = 0; x < patch_size; ++x) out(token, k++) = image.at(c, pr * patch_size + y, pc * patch_size + x);
        }
      }
    }
  }
  return out;
}

}  // namespace objnav::encoder
