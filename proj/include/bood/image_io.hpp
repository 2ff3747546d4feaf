#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "bood/tensor.hpp"

namespace bood {

/// Decoded raster: grayscale doubles in [0,1], row-major.
struct GrayImage {
  int height = 0, width = 0;
  std::vector<double> pixels;
};

namespace detail {

inline double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

// PNM (P2/P3 ascii, P5/P6 binary), 8- or 16-bit.
inline bool read_pnm(std::istream& in, GrayImage& out) {
  std::string magic;
  in >> magic;
  if (magic != "P2" && magic != "P3" && magic != "P5" && magic != "P6") return false;
  auto next_int = [&](long& v) -> bool {
    // skip whitespace and '#' comments
    for (;;) {
      int c = in.peek();
      if (c == '#') {
        std::string line;
        std::getline(in, line);
      } else if (std::isspace(c)) {
        in.get();
      } else {
        break;
      }
      if (!in.good()) return false;
    }
    return static_cast<bool>(in >> v);
  };
  long w, h, maxval;
  if (!next_int(w) || !next_int(h) || !next_int(maxval)) return false;
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535) return false;
  const bool color = (magic == "P3" || magic == "P6");
  const bool binary = (magic == "P5" || magic == "P6");
  const std::size_t samples = static_cast<std::size_t>(w) * h * (color ? 3 : 1);
  std::vector<double> raw(samples);
  if (binary) {
    in.get();  // single whitespace after maxval
    const int bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> buf(samples * bytes);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size())) return false;
    for (std::size_t i = 0; i < samples; ++i)
      raw[i] = bytes == 1 ? buf[i] : (buf[2 * i] << 8 | buf[2 * i + 1]);
  } else {
    for (std::size_t i = 0; i < samples; ++i) {
      long v;
      if (!(in >> v)) return false;
      raw[i] = static_cast<double>(v);
    }
  }
  out.width = static_cast<int>(w);
  out.height = static_cast<int>(h);
  out.pixels.resize(static_cast<std::size_t>(w) * h);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    double v = color ? luma(raw[3 * i], raw[3 * i + 1], raw[3 * i + 2]) : raw[i];
    out.pixels[i] = clamp01(v / static_cast<double>(maxval));
  }
  return true;
}

// Uncompressed BMP, 8 (palette/grayscale), 24 or 32 bpp.
inline bool read_bmp(std::istream& in, GrayImage& out) {
  auto rd_u = [&](int n) -> std::uint32_t {
    std::uint32_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint32_t>(in.get() & 0xFF) << (8 * i);
    return v;
  };
  if (in.get() != 'B' || in.get() != 'M') return false;
  rd_u(4);  // file size
  rd_u(4);  // reserved
  const std::uint32_t data_offset = rd_u(4);
  const std::uint32_t hdr_size = rd_u(4);
  if (hdr_size < 40) return false;
  const std::int32_t w = static_cast<std::int32_t>(rd_u(4));
  const std::int32_t h_raw = static_cast<std::int32_t>(rd_u(4));
  rd_u(2);  // planes
  const std::uint32_t bpp = rd_u(2);
  const std::uint32_t compression = rd_u(4);
  if (w <= 0 || h_raw == 0 || compression != 0) return false;
  if (bpp != 8 && bpp != 24 && bpp != 32) return false;
  const bool bottom_up = h_raw > 0;
  const int h = bottom_up ? h_raw : -h_raw;
  rd_u(4);  // image size
  rd_u(4);  // x pixels per meter
  rd_u(4);  // y pixels per meter
  const std::uint32_t colors_field = rd_u(4);
  rd_u(4);  // important colors
  if (hdr_size > 40) in.ignore(hdr_size - 40);

  std::vector<std::array<double, 3>> palette;
  if (bpp == 8) {
    const std::uint32_t ncolors = colors_field ? colors_field : 256;
    palette.resize(ncolors);
    for (std::uint32_t i = 0; i < ncolors; ++i) {
      double b = in.get(), g = in.get(), r = in.get();
      in.get();
      palette[i] = {r, g, b};
    }
  }
  in.seekg(data_offset, std::ios::beg);
  if (!in.good()) return false;
  const std::size_t row_bytes = ((static_cast<std::size_t>(w) * bpp + 31) / 32) * 4;
  std::vector<unsigned char> row(row_bytes);
  out.width = w;
  out.height = h;
  out.pixels.assign(static_cast<std::size_t>(w) * h, 0.0);
  for (int ry = 0; ry < h; ++ry) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row_bytes));
    if (in.gcount() != static_cast<std::streamsize>(row_bytes)) return false;
    const int y = bottom_up ? h - 1 - ry : ry;
    for (int x = 0; x < w; ++x) {
      double v;
      if (bpp == 8) {
        unsigned idx = row[x];
        if (idx >= palette.size()) return false;
        v = luma(palette[idx][0], palette[idx][1], palette[idx][2]);
      } else {
        const unsigned char* p = row.data() + static_cast<std::size_t>(x) * (bpp / 8);
        v = luma(p[2], p[1], p[0]);
      }
      out.pixels[static_cast<std::size_t>(y) * w + x] = clamp01(v / 255.0);
    }
  }
  return true;
}

// Exact area-average resampling along one axis (box filter with fractional
// end segments); separable, so rows then columns gives 2-D box pooling.
inline std::vector<double> resample_axis(const std::vector<double>& in, int n_in, int rows,
                                         int n_out) {
  std::vector<double> out(static_cast<std::size_t>(rows) * n_out, 0.0);
  const double scale = static_cast<double>(n_in) / n_out;
  for (int r = 0; r < rows; ++r) {
    const double* src = in.data() + static_cast<std::size_t>(r) * n_in;
    double* dst = out.data() + static_cast<std::size_t>(r) * n_out;
    for (int o = 0; o < n_out; ++o) {
      const double lo = o * scale, hi = (o + 1) * scale;
      double acc = 0.0;
      int i0 = static_cast<int>(lo);
      int i1 = std::min(static_cast<int>(std::ceil(hi)), n_in);
      for (int i = i0; i < i1; ++i) {
        const double seg = std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
        if (seg > 0) acc += src[i] * seg;
      }
      dst[o] = acc / scale;
    }
  }
  return out;
}

inline std::vector<double> transpose(const std::vector<double>& in, int rows, int cols) {
  std::vector<double> out(in.size());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      out[static_cast<std::size_t>(c) * rows + r] = in[static_cast<std::size_t>(r) * cols + c];
  return out;
}

}  // namespace detail

/// Box-average downsample (exact fractional-area weights) to target size.
inline GrayImage box_downsample(const GrayImage& in, int out_h, int out_w) {
  detail::require(in.height > 0 && in.width > 0, "downsample: empty image");
  auto rows_done = detail::resample_axis(in.pixels, in.width, in.height, out_w);
  auto t = detail::transpose(rows_done, in.height, out_w);
  auto cols_done = detail::resample_axis(t, in.height, out_w, out_h);
  GrayImage out;
  out.height = out_h;
  out.width = out_w;
  out.pixels = detail::transpose(cols_done, out_w, out_h);
  return out;
}

inline bool read_raster(const std::filesystem::path& path, GrayImage& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) return false;
  int c0 = in.peek();
  if (c0 == 'P') return detail::read_pnm(in, out);
  if (c0 == 'B') return detail::read_bmp(in, out);
  return false;
}

/// Load every readable raster (PGM/PPM/BMP) under a directory, convert to
/// grayscale (luma 0.299/0.587/0.114), box-average to out_h x out_w, values
/// in [0,1]. Unreadable files are skipped with a warning; an empty result is
/// an error. Paths are sorted so the corpus order is reproducible.
inline std::vector<std::vector<float>> ingest_external_images(const std::string& directory,
                                                              int out_h = 40, int out_w = 40) {
  namespace fs = std::filesystem;
  detail::require(fs::is_directory(directory), "ingest: not a directory: " + directory);
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(directory))
    if (e.is_regular_file()) paths.push_back(e.path());
  std::sort(paths.begin(), paths.end());
  std::vector<std::vector<float>> out;
  for (const auto& p : paths) {
    GrayImage img;
    if (!read_raster(p, img)) {
      std::cerr << "warning: skipping unreadable image " << p.string() << "\n";
      continue;
    }
    GrayImage small = box_downsample(img, out_h, out_w);
    std::vector<float> plane(small.pixels.size());
    for (std::size_t i = 0; i < plane.size(); ++i)
      plane[i] = static_cast<float>(clamp01(small.pixels[i]));
    out.push_back(std::move(plane));
  }
  if (out.empty()) throw std::runtime_error("ingest: no readable images in " + directory);
  return out;
}

/// Write a binary PGM (handy for emitting corpora and previews).
inline void write_pgm(const std::string& path, const std::vector<float>& pixels, int h, int w) {
  std::ofstream outf(path, std::ios::binary);
  detail::require(outf.good(), "cannot open " + path);
  outf << "P5\n" << w << " " << h << "\n255\n";
  for (float p : pixels) outf.put(static_cast<char>(static_cast<int>(clamp01(p) * 255.0f + 0.5f)));
}

}  // namespace bood
