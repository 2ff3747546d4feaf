#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "bood/rng.hpp"
#include "bood/tensor.hpp"

namespace bood {

/// One 40x40 grayscale sample. Pixels are clamped to [0,1]; amplitude is 0
/// iff the image carries no event. Center coordinates are metadata only —
/// the regression label is the amplitude alone.
struct AmplitudeImage {
  int height = 40, width = 40;
  std::vector<float> pixels;
  float amplitude = 0.0f;
  float cx = -1.0f, cy = -1.0f;
  float noise_level = 0.0f;
};

struct DatasetHeader {
  std::uint32_t count = 0;
  int height = 40, width = 40;
  double event_fraction = 0.5;
  double amp_shape = 4.0, amp_scale = 3.0, amp_max = 30.0;
  double noise_min = 512.0, noise_max = 512.0;
  std::uint64_t seed = 0;
  int format_version = 1;
  std::string kind = "amplitudes";
};

/// Event brightness profile. Peak grows as (A/8)^2 and the spatial extent as
/// 1.5 + 0.97*A, so a centered event saturates the full grid from A ~= 21
/// and any event centered in the central 20x20 region saturates everything
/// once A >= 21. Values above 1 are clamped downstream (sensor saturation).
inline double psf_value(double amplitude, double dist) {
  if (amplitude <= 0.0) return 0.0;
  const double peak = (amplitude / 8.0) * (amplitude / 8.0);
  const double width = 1.5 + 0.97 * amplitude;
  return peak * std::exp(-dist * dist / (2.0 * width * width));
}

/// Per-pixel background noise scale for a level in [1, 2048].
inline double noise_sigma(double noise_level) { return 0.25 * noise_level / 2048.0; }

/// Right-skewed amplitude law: Gamma(shape 4, scale 3) truncated to (0, 30].
/// Bulk sits in [5,20] with roughly 7% of the mass past the saturation knee.
inline double sample_amplitude(Rng& rng) {
  for (;;) {
    double a = rng.gamma_int(4, 3.0);
    if (a <= 30.0) return a;
  }
}

inline AmplitudeImage generate_amplitude_image(Rng& rng, bool event, double noise_level,
                                               int height = 40, int width = 40) {
  detail::require(noise_level >= 1.0 && noise_level <= 2048.0, "noise_level must be in [1, 2048]");
  AmplitudeImage img;
  img.height = height;
  img.width = width;
  img.pixels.resize(static_cast<std::size_t>(height) * width);
  img.noise_level = static_cast<float>(noise_level);
  double amp = 0.0, cx = 0.0, cy = 0.0;
  if (event) {
    amp = sample_amplitude(rng);
    cx = rng.uniform(0.0, static_cast<double>(width));
    cy = rng.uniform(0.0, static_cast<double>(height));
    img.amplitude = static_cast<float>(amp);
    img.cx = static_cast<float>(cx);
    img.cy = static_cast<float>(cy);
  }
  const double sigma = noise_sigma(noise_level);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double v = std::abs(rng.normal()) * sigma;
      if (event) {
        const double dx = x - cx, dy = y - cy;
        v += psf_value(amp, std::sqrt(dx * dx + dy * dy));
      }
      img.pixels[static_cast<std::size_t>(y) * width + x] = static_cast<float>(clamp01(v));
    }
  }
  return img;
}

struct Dataset {
  DatasetHeader header;
  std::vector<AmplitudeImage> images;
  std::vector<float> labels;
};

/// Regenerable from the header alone: image i draws from stream
/// Rng(header.seed).split(i).
inline Dataset generate_amplitude_dataset(const DatasetHeader& header) {
  detail::require(header.count > 0, "dataset count must be positive");
  detail::require(header.event_fraction >= 0.0 && header.event_fraction <= 1.0,
                  "event fraction must be in [0,1]");
  Dataset ds;
  ds.header = header;
  Rng master(header.seed);
  ds.images.reserve(header.count);
  ds.labels.reserve(header.count);
  for (std::uint32_t i = 0; i < header.count; ++i) {
    Rng r = master.split(i);
    const bool event = r.uniform() < header.event_fraction;
    const double level = (header.noise_min == header.noise_max)
                             ? header.noise_min
                             : r.uniform(header.noise_min, header.noise_max);
    ds.images.push_back(generate_amplitude_image(r, event, level, header.height, header.width));
    ds.labels.push_back(ds.images.back().amplitude);
  }
  return ds;
}

/// Overwrite round(p * npixels) positions, chosen without replacement, with
/// 0 or 1 at equal probability; remaining pixels untouched.
inline std::vector<float> salt_pepper(const std::vector<float>& pixels, double p, Rng& rng) {
  detail::require(p >= 0.0 && p <= 1.0, "salt_pepper: p must be in [0,1]");
  std::vector<float> out = pixels;
  const std::size_t n = pixels.size();
  const std::size_t k = static_cast<std::size_t>(std::llround(p * static_cast<double>(n)));
  auto idx = rng.sample_without_replacement(n, k);
  for (std::size_t i : idx) out[i] = rng.coin() ? 1.0f : 0.0f;
  return out;
}

/// Pixelwise convex combination (1-lambda)*id + lambda*ood.
inline std::vector<float> blend(const std::vector<float>& id_pixels,
                                const std::vector<float>& ood_pixels, double lambda) {
  detail::require(lambda >= 0.0 && lambda <= 1.0, "blend: lambda must be in [0,1]");
  detail::require(id_pixels.size() == ood_pixels.size(), "blend: shape mismatch");
  std::vector<float> out(id_pixels.size());
  const float l = static_cast<float>(lambda);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (1.0f - l) * id_pixels[i] + l * ood_pixels[i];
  return out;
}

/// Random iD -> OoD assignment, fixed once so the match stays consistent
/// across all blend levels.
inline std::vector<int> make_blend_pairing(std::size_t n_id, std::size_t n_ood, Rng& rng) {
  detail::require(n_ood > 0, "blend pairing needs a nonempty OoD corpus");
  std::vector<int> pair(n_id);
  for (std::size_t i = 0; i < n_id; ++i)
    pair[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_ood)));
  return pair;
}

/// 2x2 image with i.i.d. Beta(2,2) pixels; joint_density is the product of
/// the four per-pixel pdf values 6x(1-x).
struct BetaImage {
  std::array<float, 4> pixels{};  // row-major [ [0],[1] ; [2],[3] ]
  float label = 0.0f;
  double joint_density = 0.0;
};

inline double beta22_pdf(double x) {
  if (x <= 0.0 || x >= 1.0) return 0.0;
  return 6.0 * x * (1.0 - x);
}

inline double beta22_joint_density(const std::array<float, 4>& pixels) {
  double d = 1.0;
  for (float p : pixels) d *= beta22_pdf(static_cast<double>(p));
  return d;
}

inline float beta_label(const std::array<float, 4>& p, double noise) {
  return static_cast<float>(-2.0 * p[0] + 3.0 * p[1] - 4.0 * p[2] + 8.0 * p[3] + noise);
}

inline std::vector<BetaImage> generate_beta_dataset(Rng& rng, int n) {
  detail::require(n >= 1, "beta dataset needs n >= 1");
  std::vector<BetaImage> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng r = rng.split(static_cast<std::uint64_t>(i));
    BetaImage& im = out[i];
    for (int k = 0; k < 4; ++k) im.pixels[k] = static_cast<float>(r.beta22());
    im.label = beta_label(im.pixels, 0.5 * r.normal());
    im.joint_density = beta22_joint_density(im.pixels);
  }
  return out;
}

/// Equally spaced interior grid on [0,1]^4 — points at (k+0.5)/ppa so every
/// grid point has strictly positive density — uniformly subsampled.
inline std::vector<BetaImage> grid_beta_testset(int points_per_axis, int sample, Rng& rng) {
  detail::require(points_per_axis >= 2, "grid needs points_per_axis >= 2");
  const std::size_t total = static_cast<std::size_t>(points_per_axis) * points_per_axis *
                            points_per_axis * points_per_axis;
  detail::require(static_cast<std::size_t>(sample) <= total, "sample exceeds grid size");
  auto picks = rng.sample_without_replacement(total, static_cast<std::size_t>(sample));
  std::sort(picks.begin(), picks.end());
  std::vector<BetaImage> out(picks.size());
  for (std::size_t i = 0; i < picks.size(); ++i) {
    std::size_t code = picks[i];
    BetaImage& im = out[i];
    for (int k = 3; k >= 0; --k) {
      const int idx = static_cast<int>(code % points_per_axis);
      code /= points_per_axis;
      im.pixels[k] = static_cast<float>((idx + 0.5) / points_per_axis);
    }
    im.label = beta_label(im.pixels, 0.0);
    im.joint_density = beta22_joint_density(im.pixels);
  }
  return out;
}

/// Stack [n, H, W, 1] training tensor out of image pixel planes.
template <class T>
Tensor<T> stack_images(const std::vector<AmplitudeImage>& images) {
  detail::require(!images.empty(), "stack_images: empty set");
  const int h = images[0].height, w = images[0].width;
  Tensor<T> x({static_cast<int>(images.size()), h, w, 1});
  std::size_t o = 0;
  for (const auto& im : images) {
    detail::require(im.height == h && im.width == w, "stack_images: mixed sizes");
    for (float p : im.pixels) x.data[o++] = static_cast<T>(p);
  }
  return x;
}

template <class T>
Tensor<T> stack_pixel_planes(const std::vector<std::vector<float>>& planes, int h, int w) {
  detail::require(!planes.empty(), "stack_pixel_planes: empty set");
  Tensor<T> x({static_cast<int>(planes.size()), h, w, 1});
  std::size_t o = 0;
  for (const auto& plane : planes) {
    detail::require(plane.size() == static_cast<std::size_t>(h) * w, "plane size mismatch");
    for (float p : plane) x.data[o++] = static_cast<T>(p);
  }
  return x;
}

template <class T>
Tensor<T> stack_beta_images(const std::vector<BetaImage>& images) {
  detail::require(!images.empty(), "stack_beta_images: empty set");
  Tensor<T> x({static_cast<int>(images.size()), 2, 2, 1});
  std::size_t o = 0;
  for (const auto& im : images)
    for (float p : im.pixels) x.data[o++] = static_cast<T>(p);
  return x;
}

template <class T>
std::vector<T> labels_of(const std::vector<BetaImage>& images) {
  std::vector<T> y(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) y[i] = static_cast<T>(images[i].label);
  return y;
}

}  // namespace bood
