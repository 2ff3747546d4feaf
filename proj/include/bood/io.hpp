#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bood/bnn.hpp"
#include "bood/datagen.hpp"
#include "bood/nn.hpp"

namespace bood {

using json = nlohmann::json;

/// CRC-32 (reflected, poly 0xEDB88320; the zlib/PNG checksum).
inline std::uint32_t crc32(const unsigned char* data, std::size_t n, std::uint32_t crc = 0) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc ^= 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

inline std::uint32_t crc32_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  detail::require(in.good(), "cannot open " + path);
  std::uint32_t crc = 0;
  std::vector<unsigned char> buf(1 << 16);
  while (in) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() == 0) break;
    crc = crc32(buf.data(), static_cast<std::size_t>(in.gcount()), crc);
  }
  return crc;
}

namespace detail {

// Little-endian buffer writer/reader; payload bytes feed the trailing CRC.
class ByteWriter {
 public:
  void u16(std::uint16_t v) { raw(&v, 2); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void f32(float v) { raw(&v, 4); }
  void f32s(const float* p, std::size_t n) { raw(p, 4 * n); }
  void bytes(const void* p, std::size_t n) { raw(p, n); }
  const std::vector<unsigned char>& buffer() const { return buf_; }

 private:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  std::vector<unsigned char> buf_;
};

class ByteReader {
 public:
  ByteReader(const unsigned char* p, std::size_t n) : p_(p), n_(n) {}
  std::uint16_t u16() {
    const unsigned char* b = take(2, "u16");
    return static_cast<std::uint16_t>(b[0] | b[1] << 8);
  }
  std::uint32_t u32() {
    const unsigned char* b = take(4, "u32");
    return b[0] | b[1] << 8 | b[2] << 16 | static_cast<std::uint32_t>(b[3]) << 24;
  }
  float f32() {
    float v;
    std::memcpy(&v, take(4, "f32"), 4);
    return v;
  }
  void f32s(float* out, std::size_t n) { std::memcpy(out, take(4 * n, "f32 block"), 4 * n); }
  const unsigned char* take(std::size_t n, const char* what) {
    if (pos_ + n > n_) throw std::runtime_error(std::string("truncated payload reading ") + what);
    const unsigned char* at = p_ + pos_;
    pos_ += n;
    return at;
  }
  std::size_t remaining() const { return n_ - pos_; }
  std::size_t pos() const { return pos_; }

 private:
  const unsigned char* p_;
  std::size_t n_, pos_ = 0;
};

inline std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  require(in.good(), "cannot open " + path);
  std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<unsigned char> buf(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(buf.data()), size);
  require(in.gcount() == size, "short read on " + path);
  return buf;
}

inline void write_file(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), "cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), "short write on " + path);
}

/// Container framing shared by datasets and checkpoints:
/// magic | u16 version | u32 json length | json | payload | u32 crc(json+payload).
inline std::vector<unsigned char> frame_container(const char magic[4], std::uint16_t version,
                                                  const std::string& header_json,
                                                  const std::vector<unsigned char>& payload) {
  ByteWriter w;
  w.bytes(magic, 4);
  w.u16(version);
  w.u32(static_cast<std::uint32_t>(header_json.size()));
  w.bytes(header_json.data(), header_json.size());
  w.bytes(payload.data(), payload.size());
  std::uint32_t crc = crc32(reinterpret_cast<const unsigned char*>(header_json.data()),
                            header_json.size());
  crc = crc32(payload.data(), payload.size(), crc);
  ByteWriter tail;
  tail.u32(crc);
  auto out = w.buffer();
  out.insert(out.end(), tail.buffer().begin(), tail.buffer().end());
  return out;
}

struct ContainerView {
  std::uint16_t version;
  std::string header_json;
  const unsigned char* payload;
  std::size_t payload_size;
};

inline ContainerView open_container(const std::vector<unsigned char>& bytes, const char magic[4],
                                    std::uint16_t expected_version) {
  if (bytes.size() < 14) throw std::runtime_error("truncated payload: file too small");
  if (std::memcmp(bytes.data(), magic, 4) != 0)
    throw std::runtime_error(std::string("bad magic, expected ") + std::string(magic, 4));
  ByteReader r(bytes.data() + 4, bytes.size() - 4);
  ContainerView v;
  v.version = r.u16();
  if (v.version != expected_version)
    throw std::runtime_error("format version mismatch: file has " + std::to_string(v.version) +
                             ", expected " + std::to_string(expected_version));
  const std::uint32_t jlen = r.u32();
  const unsigned char* j = r.take(jlen, "header json");
  v.header_json.assign(reinterpret_cast<const char*>(j), jlen);
  if (r.remaining() < 4) throw std::runtime_error("truncated payload: missing checksum");
  v.payload = bytes.data() + 4 + r.pos();
  v.payload_size = r.remaining() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, v.payload + v.payload_size, 4);
  std::uint32_t crc = crc32(j, jlen);
  crc = crc32(v.payload, v.payload_size, crc);
  if (crc != stored) throw std::runtime_error("checksum failure");
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Dataset container ("BOOD")
// ---------------------------------------------------------------------------

inline void to_json(json& j, const DatasetHeader& h) {
  j = json{{"count", h.count},
           {"height", h.height},
           {"width", h.width},
           {"event_fraction", h.event_fraction},
           {"amp_shape", h.amp_shape},
           {"amp_scale", h.amp_scale},
           {"amp_max", h.amp_max},
           {"noise_min", h.noise_min},
           {"noise_max", h.noise_max},
           {"seed", h.seed},
           {"format_version", h.format_version},
           {"kind", h.kind}};
}

inline void from_json(const json& j, DatasetHeader& h) {
  j.at("count").get_to(h.count);
  j.at("height").get_to(h.height);
  j.at("width").get_to(h.width);
  j.at("event_fraction").get_to(h.event_fraction);
  j.at("amp_shape").get_to(h.amp_shape);
  j.at("amp_scale").get_to(h.amp_scale);
  j.at("amp_max").get_to(h.amp_max);
  j.at("noise_min").get_to(h.noise_min);
  j.at("noise_max").get_to(h.noise_max);
  j.at("seed").get_to(h.seed);
  j.at("format_version").get_to(h.format_version);
  j.at("kind").get_to(h.kind);
}

inline constexpr std::uint16_t kDatasetVersion = 1;

inline void save_dataset(const std::string& path, const DatasetHeader& header,
                         const std::vector<AmplitudeImage>& images,
                         const std::vector<float>& labels) {
  detail::require(header.count == images.size() && header.count == labels.size(),
                  "save_dataset: header count does not match images/labels");
  detail::require(header.count > 0, "save_dataset: empty dataset");
  detail::ByteWriter payload;
  for (const auto& im : images) {
    detail::require(im.height == header.height && im.width == header.width,
                    "save_dataset: image size does not match header");
    payload.f32s(im.pixels.data(), im.pixels.size());
  }
  payload.f32s(labels.data(), labels.size());
  detail::write_file(path, detail::frame_container("BOOD", kDatasetVersion, json(header).dump(),
                                                   payload.buffer()));
}

inline void save_dataset(const std::string& path, const Dataset& ds) {
  save_dataset(path, ds.header, ds.images, ds.labels);
}

inline Dataset load_dataset(const std::string& path) {
  auto bytes = detail::read_file(path);
  auto view = detail::open_container(bytes, "BOOD", kDatasetVersion);
  Dataset ds;
  ds.header = json::parse(view.header_json).get<DatasetHeader>();
  const std::size_t plane = static_cast<std::size_t>(ds.header.height) * ds.header.width;
  const std::size_t need = (plane * ds.header.count + ds.header.count) * 4;
  if (view.payload_size != need)
    throw std::runtime_error("truncated payload: expected " + std::to_string(need) +
                             " bytes, found " + std::to_string(view.payload_size));
  detail::ByteReader r(view.payload, view.payload_size);
  ds.images.resize(ds.header.count);
  for (auto& im : ds.images) {
    im.height = ds.header.height;
    im.width = ds.header.width;
    im.noise_level = 0.0f;  // per-image metadata is not persisted
    im.pixels.resize(plane);
    r.f32s(im.pixels.data(), plane);
  }
  ds.labels.resize(ds.header.count);
  r.f32s(ds.labels.data(), ds.labels.size());
  for (std::size_t i = 0; i < ds.labels.size(); ++i) ds.images[i].amplitude = ds.labels[i];
  return ds;
}

// ---------------------------------------------------------------------------
// Checkpoint container ("BNNW"): BNN posteriors and GAN weight stacks
// ---------------------------------------------------------------------------

inline json layer_to_json(const LayerSpec& l) {
  switch (l.kind) {
    case LayerSpec::Kind::Conv2D:
      return json{{"type", "conv2d"},
                  {"filters", l.filters},
                  {"kernel", l.kernel},
                  {"stride", l.stride},
                  {"pad", l.pad == Pad::Same ? "same" : "valid"},
                  {"act", l.act == Activation::Relu      ? "relu"
                          : l.act == Activation::Softplus ? "softplus"
                          : l.act == Activation::Sigmoid  ? "sigmoid"
                                                          : "none"}};
    case LayerSpec::Kind::Dense:
      return json{{"type", "dense"},
                  {"units", l.units},
                  {"act", l.act == Activation::Relu      ? "relu"
                          : l.act == Activation::Softplus ? "softplus"
                          : l.act == Activation::Sigmoid  ? "sigmoid"
                                                          : "none"}};
    case LayerSpec::Kind::Flatten:
      return json{{"type", "flatten"}};
    case LayerSpec::Kind::Reshape:
      return json{{"type", "reshape"}, {"shape", l.target_shape}};
    case LayerSpec::Kind::Upsample2x:
      return json{{"type", "upsample2x"}};
  }
  throw std::logic_error("unreachable layer kind");
}

inline Activation act_from_string(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "softplus") return Activation::Softplus;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "none") return Activation::None;
  throw std::runtime_error("unknown activation: " + s);
}

inline LayerSpec layer_from_json(const json& j) {
  const std::string type = j.at("type");
  if (type == "conv2d")
    return LayerSpec::conv2d(j.at("filters"), j.at("kernel"), j.at("stride"),
                             act_from_string(j.at("act")),
                             j.at("pad") == "same" ? Pad::Same : Pad::Valid);
  if (type == "dense") return LayerSpec::dense(j.at("units"), act_from_string(j.at("act")));
  if (type == "flatten") return LayerSpec::flatten();
  if (type == "reshape") return LayerSpec::reshape(j.at("shape").get<std::vector<int>>());
  if (type == "upsample2x") return LayerSpec::upsample2x();
  throw std::runtime_error("unknown layer type: " + type);
}

inline void to_json(json& j, const NetworkSpec& s) {
  j = json{{"input", s.input_shape},
           {"mode", s.mode == SamplingMode::Flipout ? "flipout" : "reparameterization"},
           {"layers", json::array()}};
  for (const auto& l : s.layers) j["layers"].push_back(layer_to_json(l));
}

inline void from_json(const json& j, NetworkSpec& s) {
  s.input_shape = j.at("input").get<std::vector<int>>();
  s.mode = j.at("mode") == "flipout" ? SamplingMode::Flipout : SamplingMode::Reparameterization;
  s.layers.clear();
  for (const auto& lj : j.at("layers")) s.layers.push_back(layer_from_json(lj));
}

inline constexpr std::uint16_t kCheckpointVersion = 1;

namespace detail {

template <class T>
void write_tensor_f32(ByteWriter& w, const Tensor<T>& t) {
  for (const T& v : t.data) w.f32(static_cast<float>(v));
}

template <class T>
void read_tensor_f32(ByteReader& r, Tensor<T>& t) {
  for (T& v : t.data) v = static_cast<T>(r.f32());
}

}  // namespace detail

/// Hex CRC32 of a checkpoint's tensor payload; identifies the source model
/// in detectors and manifests.
inline std::string fingerprint_of(const std::vector<unsigned char>& payload) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%08x", crc32(payload.data(), payload.size()));
  return buf;
}

template <class T>
void save_bnn(const std::string& path, const BayesNet<T>& net) {
  detail::ByteWriter payload;
  for (std::size_t i = 0; i < net.kernels.size(); ++i) {
    detail::write_tensor_f32(payload, net.kernels[i].mu);
    detail::write_tensor_f32(payload, net.kernels[i].rho);
    detail::write_tensor_f32(payload, net.biases[i].mu);
    detail::write_tensor_f32(payload, net.biases[i].rho);
  }
  json header{{"kind", "bnn"}, {"spec", json(net.spec)}, {"fingerprint", fingerprint_of(payload.buffer())}};
  detail::write_file(path, detail::frame_container("BNNW", kCheckpointVersion, header.dump(),
                                                   payload.buffer()));
}

template <class T>
BayesNet<T> load_bnn(const std::string& path, std::string* fingerprint = nullptr) {
  auto bytes = detail::read_file(path);
  auto view = detail::open_container(bytes, "BNNW", kCheckpointVersion);
  json header = json::parse(view.header_json);
  if (header.at("kind") != "bnn") throw std::runtime_error("checkpoint is not a bnn: " + path);
  NetworkSpec spec = header.at("spec").get<NetworkSpec>();
  Rng dummy(0);
  BayesNet<T> net = BayesNet<T>::init(spec, dummy);
  detail::ByteReader r(view.payload, view.payload_size);
  for (std::size_t i = 0; i < net.kernels.size(); ++i) {
    detail::read_tensor_f32(r, net.kernels[i].mu);
    detail::read_tensor_f32(r, net.kernels[i].rho);
    detail::read_tensor_f32(r, net.biases[i].mu);
    detail::read_tensor_f32(r, net.biases[i].rho);
  }
  if (r.remaining() != 0) throw std::runtime_error("checkpoint has trailing bytes: " + path);
  if (fingerprint) *fingerprint = header.value("fingerprint", "");
  return net;
}

template <class T>
void save_gan(const std::string& path, const PlainNet<T>& generator,
              const PlainNet<T>& discriminator) {
  detail::ByteWriter payload;
  for (std::size_t i = 0; i < generator.kernels.size(); ++i) {
    detail::write_tensor_f32(payload, generator.kernels[i]);
    detail::write_tensor_f32(payload, generator.biases[i]);
  }
  for (std::size_t i = 0; i < discriminator.kernels.size(); ++i) {
    detail::write_tensor_f32(payload, discriminator.kernels[i]);
    detail::write_tensor_f32(payload, discriminator.biases[i]);
  }
  json header{{"kind", "gan"},
              {"generator", json(generator.spec)},
              {"discriminator", json(discriminator.spec)},
              {"fingerprint", fingerprint_of(payload.buffer())}};
  detail::write_file(path, detail::frame_container("BNNW", kCheckpointVersion, header.dump(),
                                                   payload.buffer()));
}

template <class T>
void load_gan(const std::string& path, PlainNet<T>& generator, PlainNet<T>& discriminator,
              std::string* fingerprint = nullptr) {
  auto bytes = detail::read_file(path);
  auto view = detail::open_container(bytes, "BNNW", kCheckpointVersion);
  json header = json::parse(view.header_json);
  if (header.at("kind") != "gan") throw std::runtime_error("checkpoint is not a gan: " + path);
  Rng dummy(0);
  generator = PlainNet<T>::init(header.at("generator").get<NetworkSpec>(), dummy);
  discriminator = PlainNet<T>::init(header.at("discriminator").get<NetworkSpec>(), dummy);
  detail::ByteReader r(view.payload, view.payload_size);
  for (std::size_t i = 0; i < generator.kernels.size(); ++i) {
    detail::read_tensor_f32(r, generator.kernels[i]);
    detail::read_tensor_f32(r, generator.biases[i]);
  }
  for (std::size_t i = 0; i < discriminator.kernels.size(); ++i) {
    detail::read_tensor_f32(r, discriminator.kernels[i]);
    detail::read_tensor_f32(r, discriminator.biases[i]);
  }
  if (r.remaining() != 0) throw std::runtime_error("checkpoint has trailing bytes: " + path);
  if (fingerprint) *fingerprint = header.value("fingerprint", "");
}

inline std::string format_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

/// Loss-history CSV: epoch, mean_loss, mean_nll, mean_kl.
inline void write_loss_history_csv(const std::string& path, const std::vector<EpochStats>& hist) {
  std::ofstream out(path, std::ios::trunc);
  detail::require(out.good(), "cannot open " + path);
  out << "epoch,mean_loss,mean_nll,mean_kl\n";
  for (std::size_t e = 0; e < hist.size(); ++e)
    out << e << "," << format_g(hist[e].mean_loss) << "," << format_g(hist[e].mean_nll) << ","
        << format_g(hist[e].mean_kl) << "\n";
}

}  // namespace bood
