#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "splatkit/depth_align.hpp"
#include "splatkit/gaussians.hpp"
#include "splatkit/geometry.hpp"
#include "splatkit/visibility.hpp"

// File formats. Binary payloads are little-endian and round-trip
// byte-exactly; values are stored as float32 (dtype tag 0). Camera and
// sparse-depth files are line-based text for inspectability.
//
//   raster   "WSRF": version u16, width u32, height u32, channels u16,
//            dtype u16 (0 = float32), row-major channel-interleaved payload
//   gaussian "WSGS": version u16, count u64, sh_degree u16, per primitive
//            center(3) opacity(1) rotation wxyz(4) scale(3) sh(3*(deg+1)^2)
//   embed    "WSEM": version u16, count u32, dim u32, payload count*dim
//   weights  "WSCW": version u16, activation u16, n_layers u16 = 2, then per
//            layer out u32, in u32, kernel u16, padding u16, kernel, bias

namespace splatkit {

inline constexpr std::uint16_t kFormatVersion = 1;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace io_detail {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are unsupported");

template <typename T>
inline void put(std::vector<std::uint8_t>& buf, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(raw, raw + sizeof(T));
  buf.insert(buf.end(), raw, raw + sizeof(T));
}

class Reader {
 public:
  Reader(std::span<const std::uint8_t> data, std::string name)
      : data_(data), name_(std::move(name)) {}

  template <typename T>
  T get() {
    static_assert(std::is_trivially_copyable_v<T>);
    if (pos_ + sizeof(T) > data_.size())
      throw FormatError(name_ + ": truncated file");
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, data_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big)
      std::reverse(raw, raw + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }

  void expect_magic(const char magic[4]) {
    if (data_.size() < 4) throw FormatError(name_ + ": truncated file");
    if (std::memcmp(data_.data(), magic, 4) != 0)
      throw FormatError(name_ + ": bad magic");
    pos_ = 4;
  }

  void expect_version() {
    const auto version = get<std::uint16_t>();
    if (version != kFormatVersion)
      throw FormatError(name_ + ": unsupported version " +
                        std::to_string(version));
  }

  void expect_end() const {
    if (pos_ != data_.size())
      throw FormatError(name_ + ": trailing bytes after payload");
  }

  size_t remaining() const { return data_.size() - pos_; }

 private:
  std::span<const std::uint8_t> data_;
  std::string name_;
  size_t pos_ = 0;
};

inline void write_file(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            std::streamsize(bytes.size()));
  if (!out) throw FormatError("write failed: " + path.string());
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

}  // namespace io_detail

// ---------------------------------------------------------------------------
// Raster files

/// I/O-level raster: arbitrary (possibly zero) dimensions, float32 payload
/// widened to double in memory. Domain types impose their own constraints on
/// conversion.
struct RawRaster {
  std::uint32_t width = 0, height = 0;
  std::uint16_t channels = 0;
  std::vector<double> values;

  size_t index(int x, int y, int c) const {
    return (size_t(y) * width + x) * channels + c;
  }
};

inline constexpr std::uint64_t kMaxRasterElements = 1u << 28;

inline void write_raster(const std::filesystem::path& path,
                         const RawRaster& raster) {
  const std::uint64_t n =
      std::uint64_t(raster.width) * raster.height * raster.channels;
  if (n != raster.values.size())
    throw FormatError("write_raster: payload size mismatch");
  if (n > kMaxRasterElements) throw FormatError("write_raster: raster too large");
  std::vector<std::uint8_t> buf;
  buf.reserve(18 + n * 4);
  buf.insert(buf.end(), {'W', 'S', 'R', 'F'});
  io_detail::put<std::uint16_t>(buf, kFormatVersion);
  io_detail::put<std::uint32_t>(buf, raster.width);
  io_detail::put<std::uint32_t>(buf, raster.height);
  io_detail::put<std::uint16_t>(buf, raster.channels);
  io_detail::put<std::uint16_t>(buf, 0);  // dtype float32
  for (double v : raster.values) {
    if (!std::isfinite(v)) throw FormatError("write_raster: non-finite value");
    io_detail::put<float>(buf, float(v));
  }
  io_detail::write_file(path, buf);
}

inline RawRaster read_raster(const std::filesystem::path& path) {
  const auto bytes = io_detail::read_file(path);
  io_detail::Reader r(bytes, path.string());
  r.expect_magic("WSRF");
  r.expect_version();
  RawRaster raster;
  raster.width = r.get<std::uint32_t>();
  raster.height = r.get<std::uint32_t>();
  raster.channels = r.get<std::uint16_t>();
  const auto dtype = r.get<std::uint16_t>();
  if (dtype != 0)
    throw FormatError(path.string() + ": unknown dtype tag " +
                      std::to_string(dtype));
  const std::uint64_t n =
      std::uint64_t(raster.width) * raster.height * raster.channels;
  if (n > kMaxRasterElements)
    throw FormatError(path.string() + ": raster dimensions overflow");
  raster.values.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const float v = r.get<float>();
    if (!std::isfinite(v))
      throw FormatError(path.string() + ": non-finite raster value");
    raster.values.push_back(double(v));
  }
  r.expect_end();
  return raster;
}

// Conversions between domain rasters and RawRaster. Invalid depth pixels are
// stored as 0 and recovered from the positivity invariant on load.

inline RawRaster to_raster(const DepthMap& d) {
  RawRaster r{std::uint32_t(d.width), std::uint32_t(d.height), 1, {}};
  r.values.resize(d.values.size());
  for (size_t i = 0; i < d.values.size(); ++i)
    r.values[i] = d.validity[i] ? d.values[i] : 0.0;
  return r;
}

inline DepthMap depth_from_raster(const RawRaster& r) {
  if (r.width == 0 || r.height == 0 || r.channels != 1)
    throw FormatError("depth raster must be non-empty 1-channel");
  DepthMap d(int(r.width), int(r.height));
  for (int y = 0; y < d.height; ++y)
    for (int x = 0; x < d.width; ++x) d.set(x, y, r.values[r.index(x, y, 0)]);
  return d;
}

inline RawRaster to_raster(const ImageBuffer& img) {
  return RawRaster{std::uint32_t(img.width), std::uint32_t(img.height),
                   std::uint16_t(img.channels), img.values};
}

inline ImageBuffer image_from_raster(const RawRaster& r) {
  if (r.width == 0 || r.height == 0 || (r.channels != 1 && r.channels != 3))
    throw FormatError("image raster must be non-empty with 1 or 3 channels");
  ImageBuffer img(int(r.width), int(r.height), int(r.channels));
  img.values = r.values;
  return img;
}

inline RawRaster to_raster(const FeatureMap& f) {
  return RawRaster{std::uint32_t(f.width), std::uint32_t(f.height),
                   std::uint16_t(f.channels), f.values};
}

inline FeatureMap features_from_raster(const RawRaster& r) {
  if (r.width == 0 || r.height == 0 || r.channels == 0)
    throw FormatError("feature raster must be non-empty");
  FeatureMap f(int(r.width), int(r.height), int(r.channels));
  f.values = r.values;
  return f;
}

inline RawRaster to_raster(const VisibilityMask& m) {
  RawRaster r{std::uint32_t(m.width), std::uint32_t(m.height), 1, {}};
  r.values.resize(m.bits.size());
  for (size_t i = 0; i < m.bits.size(); ++i) r.values[i] = m.bits[i] ? 1.0 : 0.0;
  return r;
}

inline VisibilityMask mask_from_raster(const RawRaster& r) {
  if (r.width == 0 || r.height == 0 || r.channels != 1)
    throw FormatError("mask raster must be non-empty 1-channel");
  VisibilityMask m(int(r.width), int(r.height));
  for (size_t i = 0; i < m.bits.size(); ++i) m.bits[i] = r.values[i] > 0.5;
  return m;
}

inline RawRaster to_raster(const SkyProbability& s) {
  return RawRaster{std::uint32_t(s.width), std::uint32_t(s.height), 1, s.values};
}

inline SkyProbability sky_from_raster(const RawRaster& r) {
  if (r.width == 0 || r.height == 0 || r.channels != 1)
    throw FormatError("sky raster must be non-empty 1-channel");
  SkyProbability s(int(r.width), int(r.height));
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x) {
      const double v = r.values[r.index(x, y, 0)];
      if (!(v >= 0.0 && v <= 1.0))
        throw FormatError("sky raster value outside [0,1]");
      s.set(x, y, v);
    }
  return s;
}

inline RawRaster to_raster(const RayMap& rays) {
  RawRaster r{std::uint32_t(rays.width), std::uint32_t(rays.height), 6, {}};
  r.values.resize(rays.origins.size() * 6);
  for (size_t i = 0; i < rays.origins.size(); ++i)
    for (int c = 0; c < 3; ++c) {
      r.values[i * 6 + c] = rays.origins[i][c];
      r.values[i * 6 + 3 + c] = rays.directions[i][c];
    }
  return r;
}

inline RayMap rays_from_raster(const RawRaster& r) {
  if (r.width == 0 || r.height == 0 || r.channels != 6)
    throw FormatError("ray raster must be non-empty 6-channel");
  RayMap rays(int(r.width), int(r.height));
  for (size_t i = 0; i < rays.origins.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      rays.origins[i][c] = r.values[i * 6 + c];
      rays.directions[i][c] = r.values[i * 6 + 3 + c];
    }
  }
  if (!rays.has_unit_directions())
    throw FormatError("ray raster has non-unit directions");
  return rays;
}

// ---------------------------------------------------------------------------
// Gaussian files

// float32 quantization guards: keep opacity strictly inside (0,1) and scales
// strictly positive after narrowing.
inline constexpr double kOpacityWriteMin = 1e-7;
inline constexpr double kOpacityWriteMax = 1.0 - 1e-7;
inline constexpr double kScaleWriteMin = 1e-30;

inline void write_gaussians(const std::filesystem::path& path,
                            const GaussianSet& set) {
  set.validate();
  std::vector<std::uint8_t> buf;
  buf.reserve(16 + set.size() * (11 + set.sh_stride()) * 4);
  buf.insert(buf.end(), {'W', 'S', 'G', 'S'});
  io_detail::put<std::uint16_t>(buf, kFormatVersion);
  io_detail::put<std::uint64_t>(buf, set.size());
  io_detail::put<std::uint16_t>(buf, std::uint16_t(set.sh_degree));
  for (size_t i = 0; i < set.size(); ++i) {
    for (int c = 0; c < 3; ++c) io_detail::put<float>(buf, float(set.centers[i][c]));
    io_detail::put<float>(
        buf, float(std::clamp(set.opacities[i], kOpacityWriteMin,
                              kOpacityWriteMax)));
    for (int c = 0; c < 4; ++c)
      io_detail::put<float>(buf, float(set.rotations[i][c]));
    for (int c = 0; c < 3; ++c)
      io_detail::put<float>(buf, float(std::max(set.scales[i][c], kScaleWriteMin)));
    const auto sh = set.sh_of(i);
    for (double v : sh) io_detail::put<float>(buf, float(v));
  }
  io_detail::write_file(path, buf);
}

inline GaussianSet read_gaussians(const std::filesystem::path& path) {
  const auto bytes = io_detail::read_file(path);
  io_detail::Reader r(bytes, path.string());
  r.expect_magic("WSGS");
  r.expect_version();
  const auto count = r.get<std::uint64_t>();
  const auto degree = r.get<std::uint16_t>();
  if (degree > kMaxShDegree)
    throw FormatError(path.string() + ": unsupported SH degree");
  GaussianSet set;
  set.sh_degree = int(degree);
  const size_t stride = set.sh_stride();
  if (count > kMaxRasterElements)
    throw FormatError(path.string() + ": primitive count overflow");
  if (r.remaining() != count * (11 + stride) * 4)
    throw FormatError(path.string() + ": payload size mismatch");
  set.centers.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Vec3 center;
    for (int c = 0; c < 3; ++c) center[c] = r.get<float>();
    set.centers.push_back(center);
    set.opacities.push_back(r.get<float>());
    Vec4 q;
    for (int c = 0; c < 4; ++c) q[c] = r.get<float>();
    set.rotations.push_back(q);
    Vec3 scale;
    for (int c = 0; c < 3; ++c) scale[c] = r.get<float>();
    set.scales.push_back(scale);
    for (size_t k = 0; k < stride; ++k) set.sh.push_back(r.get<float>());
  }
  r.expect_end();
  set.validate();
  return set;
}

// ---------------------------------------------------------------------------
// Embedding files

inline void write_embeddings(const std::filesystem::path& path,
                             const std::vector<AppearanceEmbedding>& embeddings) {
  if (embeddings.empty())
    throw FormatError("write_embeddings: need at least one embedding");
  const int dim = embeddings.front().dim();
  for (const auto& e : embeddings)
    if (e.dim() != dim)
      throw FormatError("write_embeddings: inconsistent dimensions");
  std::vector<std::uint8_t> buf;
  buf.insert(buf.end(), {'W', 'S', 'E', 'M'});
  io_detail::put<std::uint16_t>(buf, kFormatVersion);
  io_detail::put<std::uint32_t>(buf, std::uint32_t(embeddings.size()));
  io_detail::put<std::uint32_t>(buf, std::uint32_t(dim));
  for (const auto& e : embeddings)
    for (int c = 0; c < dim; ++c) io_detail::put<float>(buf, float(e.values[c]));
  io_detail::write_file(path, buf);
}

inline std::vector<AppearanceEmbedding> read_embeddings(
    const std::filesystem::path& path) {
  const auto bytes = io_detail::read_file(path);
  io_detail::Reader r(bytes, path.string());
  r.expect_magic("WSEM");
  r.expect_version();
  const auto count = r.get<std::uint32_t>();
  const auto dim = r.get<std::uint32_t>();
  if (count == 0 || dim == 0 || std::uint64_t(count) * dim > kMaxRasterElements)
    throw FormatError(path.string() + ": bad embedding dimensions");
  std::vector<AppearanceEmbedding> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Eigen::VectorXd v(dim);
    for (std::uint32_t c = 0; c < dim; ++c) v[c] = r.get<float>();
    out.emplace_back(std::move(v));
  }
  r.expect_end();
  return out;
}

// ---------------------------------------------------------------------------
// Convolution head weight files

inline void write_conv_weights(const std::filesystem::path& path,
                               const ConvHeadWeights& weights) {
  weights.validate();
  std::vector<std::uint8_t> buf;
  buf.insert(buf.end(), {'W', 'S', 'C', 'W'});
  io_detail::put<std::uint16_t>(buf, kFormatVersion);
  io_detail::put<std::uint16_t>(
      buf, weights.inter_activation == Activation::ReLU ? 0 : 1);
  io_detail::put<std::uint16_t>(buf, 2);
  for (const ConvLayer* layer : {&weights.layer1, &weights.layer2}) {
    io_detail::put<std::uint32_t>(buf, std::uint32_t(layer->out_channels));
    io_detail::put<std::uint32_t>(buf, std::uint32_t(layer->in_channels));
    io_detail::put<std::uint16_t>(buf, std::uint16_t(layer->kernel_size));
    io_detail::put<std::uint16_t>(buf, std::uint16_t(layer->padding));
    for (double v : layer->kernel) io_detail::put<float>(buf, float(v));
    for (double v : layer->bias) io_detail::put<float>(buf, float(v));
  }
  io_detail::write_file(path, buf);
}

inline ConvHeadWeights read_conv_weights(const std::filesystem::path& path) {
  const auto bytes = io_detail::read_file(path);
  io_detail::Reader r(bytes, path.string());
  r.expect_magic("WSCW");
  r.expect_version();
  const auto activation = r.get<std::uint16_t>();
  if (activation > 1)
    throw FormatError(path.string() + ": unknown activation tag");
  const auto n_layers = r.get<std::uint16_t>();
  if (n_layers != 2)
    throw FormatError(path.string() + ": expected exactly 2 layers");
  ConvHeadWeights weights;
  weights.inter_activation = activation == 0 ? Activation::ReLU
                                             : Activation::Identity;
  for (ConvLayer* layer : {&weights.layer1, &weights.layer2}) {
    layer->out_channels = int(r.get<std::uint32_t>());
    layer->in_channels = int(r.get<std::uint32_t>());
    layer->kernel_size = int(r.get<std::uint16_t>());
    layer->padding = int(r.get<std::uint16_t>());
    const std::uint64_t kn = std::uint64_t(layer->out_channels) *
                             layer->in_channels * layer->kernel_size *
                             layer->kernel_size;
    if (layer->out_channels <= 0 || layer->in_channels <= 0 ||
        layer->kernel_size <= 0 || kn > kMaxRasterElements)
      throw FormatError(path.string() + ": bad layer dimensions");
    layer->kernel.resize(kn);
    for (auto& v : layer->kernel) v = r.get<float>();
    layer->bias.resize(layer->out_channels);
    for (auto& v : layer->bias) v = r.get<float>();
  }
  r.expect_end();
  weights.validate();
  return weights;
}

// ---------------------------------------------------------------------------
// Camera text files

inline void write_camera_text(const std::filesystem::path& path,
                              const PinholeCamera& cam) {
  std::ostringstream out;
  out.precision(17);
  out << "width " << cam.width << "\n";
  out << "height " << cam.height << "\n";
  out << "fx " << cam.fx << "\nfy " << cam.fy << "\n";
  out << "cx " << cam.cx << "\ncy " << cam.cy << "\n";
  out << "rotation";
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out << " " << cam.pose.rotation(i, j);
  out << "\ntranslation";
  for (int i = 0; i < 3; ++i) out << " " << cam.pose.translation[i];
  out << "\n";
  std::ofstream file(path, std::ios::trunc);
  if (!file) throw FormatError("cannot open for writing: " + path.string());
  file << out.str();
}

inline PinholeCamera read_camera_text(const std::filesystem::path& path) {
  std::ifstream file(path);
  if (!file) throw FormatError("cannot open: " + path.string());
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  Pose pose;
  bool saw_rotation = false, saw_translation = false;
  std::string line;
  while (std::getline(file, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    auto fail = [&] {
      throw FormatError(path.string() + ": malformed '" + key + "' line");
    };
    if (key == "width") {
      if (!(ls >> width)) fail();
    } else if (key == "height") {
      if (!(ls >> height)) fail();
    } else if (key == "fx") {
      if (!(ls >> fx)) fail();
    } else if (key == "fy") {
      if (!(ls >> fy)) fail();
    } else if (key == "cx") {
      if (!(ls >> cx)) fail();
    } else if (key == "cy") {
      if (!(ls >> cy)) fail();
    } else if (key == "rotation") {
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
          if (!(ls >> pose.rotation(i, j))) fail();
      saw_rotation = true;
    } else if (key == "translation") {
      for (int i = 0; i < 3; ++i)
        if (!(ls >> pose.translation[i])) fail();
      saw_translation = true;
    } else {
      throw FormatError(path.string() + ": unknown key '" + key + "'");
    }
  }
  if (!saw_rotation || !saw_translation)
    throw FormatError(path.string() + ": missing pose");
  try {
    return PinholeCamera(fx, fy, cx, cy, width, height, pose);
  } catch (const std::invalid_argument& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Sparse depth text files: one "x y depth" triple per line.

inline void write_sparse_depth(const std::filesystem::path& path,
                               const SparseDepth& sparse) {
  std::ofstream file(path, std::ios::trunc);
  if (!file) throw FormatError("cannot open for writing: " + path.string());
  file.precision(17);
  for (const auto& s : sparse.samples)
    file << s.pixel.x() << " " << s.pixel.y() << " " << s.depth << "\n";
}

inline SparseDepth read_sparse_depth(const std::filesystem::path& path) {
  std::ifstream file(path);
  if (!file) throw FormatError("cannot open: " + path.string());
  SparseDepth sparse;
  std::string line;
  int line_no = 0;
  while (std::getline(file, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    SparseDepthSample s;
    int x, y;
    if (!(ls >> x)) continue;  // blank line
    if (!(ls >> y >> s.depth) || !(s.depth > 0))
      throw FormatError(path.string() + ": malformed sample at line " +
                        std::to_string(line_no));
    s.pixel = {x, y};
    sparse.samples.push_back(s);
  }
  return sparse;
}

}  // namespace splatkit
