#include "boostdepth/io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cctype>
#include <cstdio>
#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>

#include "boostdepth/error.hpp"

namespace boostdepth::io {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path.string());
  return in;
}

// Next whitespace-separated header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  int ch = 0;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

int header_int(std::istream& in, const std::filesystem::path& path) {
  const std::string tok = header_token(in);
  try {
    std::size_t pos = 0;
    const int v = std::stoi(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw DataError("malformed header in " + path.string());
  }
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const ImageBuffer& image) {
  if (image.channels() != 1 && image.channels() != 3) {
    throw DataError("write_ppm: image must have 1 or 3 channels");
  }
  auto out = open_out(path);
  out << "P6\n" << image.width() << ' ' << image.height() << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(image.width()) * 3);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = image(x, y, image.channels() == 3 ? c : 0);
        const double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
        row[static_cast<std::size_t>(x) * 3 + c] = static_cast<unsigned char>(q);
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw DataError("write failed: " + path.string());
}

ImageBuffer read_ppm(const std::filesystem::path& path) {
  auto in = open_in(path);
  if (header_token(in) != "P6") throw DataError("not a binary PPM (P6): " + path.string());
  const int w = header_int(in, path);
  const int h = header_int(in, path);
  const int maxval = header_int(in, path);
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
    throw DataError("unsupported PPM geometry or depth: " + path.string());
  }
  ImageBuffer image(w, h, 3);
  std::vector<unsigned char> buf(image.size());
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw DataError("truncated PPM: " + path.string());
  }
  for (std::size_t i = 0; i < buf.size(); ++i) image[i] = buf[i] / static_cast<double>(maxval);
  return image;
}

void write_pfm(const std::filesystem::path& path, const Grid<double>& grid) {
  if (grid.channels() != 1 && grid.channels() != 3) {
    throw DataError("write_pfm: grid must have 1 or 3 channels");
  }
  auto out = open_out(path);
  out << (grid.channels() == 3 ? "PF" : "Pf") << '\n'
      << grid.width() << ' ' << grid.height() << "\n-1.0\n";
  const std::size_t row_len = static_cast<std::size_t>(grid.width()) * grid.channels();
  std::vector<std::uint32_t> row(row_len);
  for (int y = grid.height() - 1; y >= 0; --y) {
    const double* src = grid.raw() + grid.index(0, y);
    for (std::size_t i = 0; i < row_len; ++i) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(src[i]));
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
      row[i] = bits;
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(std::uint32_t)));
  }
  if (!out) throw DataError("write failed: " + path.string());
}

Grid<double> read_pfm(const std::filesystem::path& path) {
  auto in = open_in(path);
  const std::string magic = header_token(in);
  int channels = 0;
  if (magic == "PF") {
    channels = 3;
  } else if (magic == "Pf") {
    channels = 1;
  } else {
    throw DataError("not a PFM file: " + path.string());
  }
  const int w = header_int(in, path);
  const int h = header_int(in, path);
  const std::string scale_tok = header_token(in);
  double scale = 0.0;
  try {
    scale = std::stod(scale_tok);
  } catch (const std::exception&) {
    throw DataError("malformed PFM scale in " + path.string());
  }
  if (w <= 0 || h <= 0 || scale == 0.0) throw DataError("bad PFM header: " + path.string());
  const bool little = scale < 0.0;
  Grid<double> grid(w, h, channels);
  const std::size_t row_len = static_cast<std::size_t>(w) * channels;
  std::vector<std::uint32_t> row(row_len);
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row_len * sizeof(std::uint32_t)));
    if (in.gcount() != static_cast<std::streamsize>(row_len * sizeof(std::uint32_t))) {
      throw DataError("truncated PFM: " + path.string());
    }
    double* dst = grid.raw() + grid.index(0, y);
    for (std::size_t i = 0; i < row_len; ++i) {
      std::uint32_t bits = row[i];
      const bool native_little = std::endian::native == std::endian::little;
      if (little != native_little) bits = __builtin_bswap32(bits);
      dst[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
  }
  return grid;
}

void write_depth(const std::filesystem::path& path, const DepthMap& depth) {
  Grid<double> values = depth.values;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!depth.valid[i]) values[i] = 0.0;
  }
  write_pfm(path, values);
}

DepthMap read_depth(const std::filesystem::path& path) {
  Grid<double> values = read_pfm(path);
  if (values.channels() != 1) throw DataError("depth PFM must be single-channel: " + path.string());
  return DepthMap::from_values(std::move(values));
}

void write_ply(const std::filesystem::path& path, const std::vector<Eigen::Vector3d>& points) {
  auto out = open_out(path);
  out << "ply\nformat ascii 1.0\nelement vertex " << points.size()
      << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
  char buf[96];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    out << buf;
  }
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<Eigen::Vector3d> read_ply(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  std::getline(in, line);
  if (line != "ply") throw DataError("not a PLY file: " + path.string());
  std::size_t count = 0;
  bool ascii = false;
  std::vector<std::string> props;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format") {
      std::string fmt;
      ls >> fmt;
      ascii = fmt == "ascii";
    } else if (key == "element") {
      std::string name;
      ls >> name >> count;
      if (name != "vertex") throw DataError("PLY: only vertex elements are supported");
    } else if (key == "property") {
      std::string type, name;
      ls >> type >> name;
      props.push_back(name);
    } else if (key == "end_header") {
      break;
    }
  }
  if (!ascii) throw DataError("PLY: only ASCII format is supported: " + path.string());
  if (props.size() < 3 || props[0] != "x" || props[1] != "y" || props[2] != "z") {
    throw DataError("PLY: expected leading x, y, z properties: " + path.string());
  }
  std::vector<Eigen::Vector3d> points;
  points.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw DataError("PLY: truncated vertex list: " + path.string());
    std::istringstream ls(line);
    Eigen::Vector3d p;
    if (!(ls >> p.x() >> p.y() >> p.z())) throw DataError("PLY: bad vertex line: " + path.string());
    points.push_back(p);
  }
  return points;
}

}  // namespace boostdepth::io
