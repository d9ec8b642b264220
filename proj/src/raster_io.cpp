#include "albalance/raster_io.hpp"

#include <png.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace albalance {

namespace {

constexpr std::uint8_t kMagic[4] = {'A', 'L', 'R', 'T'};
constexpr std::uint8_t kVersion = 1;
// Largest payload a reader accepts (1 TiB); beyond that dims are treated as corrupt.
constexpr std::uint64_t kMaxPayloadBytes = std::uint64_t{1} << 40;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw IoError(IoErrorKind::Truncated, std::string("file ends inside ") + what);
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return bytes_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(bits);
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint64_t element_count(const std::vector<std::uint32_t>& dims) {
  std::uint64_t n = 1;
  for (auto d : dims) {
    if (d == 0) throw IoError(IoErrorKind::BadDims, "zero-length dimension");
    if (n > kMaxPayloadBytes / d) throw IoError(IoErrorKind::DimOverflow, "dimensions too large");
    n *= d;
  }
  return n;
}

}  // namespace

const char* to_string(IoErrorKind kind) {
  switch (kind) {
    case IoErrorKind::Open: return "cannot open";
    case IoErrorKind::Truncated: return "truncated";
    case IoErrorKind::BadMagic: return "bad magic";
    case IoErrorKind::BadVersion: return "unsupported version";
    case IoErrorKind::UnknownDtype: return "unknown dtype";
    case IoErrorKind::BadDims: return "bad dims";
    case IoErrorKind::DimOverflow: return "dim overflow";
    case IoErrorKind::WrongType: return "wrong tensor type";
    case IoErrorKind::TrailingBytes: return "trailing bytes";
    case IoErrorKind::Png: return "png";
  }
  return "io";
}

std::vector<std::uint8_t> encode_alrt(const AlrtTensor& t) {
  if (t.dims.size() != 2 && t.dims.size() != 3) {
    throw IoError(IoErrorKind::BadDims, "ndim must be 2 or 3");
  }
  const auto n = element_count(t.dims);
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(t.dtype));
  out.push_back(static_cast<std::uint8_t>(t.dims.size()));
  for (auto d : t.dims) put_u32(out, d);
  if (t.dtype == Dtype::U8) {
    if (t.u8.size() < n || (t.u8.size() - n) % (std::uint64_t{t.dims[0]} * t.dims[1]) != 0) {
      throw IoError(IoErrorKind::WrongType, "u8 payload length does not match dims");
    }
    out.insert(out.end(), t.u8.begin(), t.u8.end());
  } else {
    if (t.f64.size() != n) throw IoError(IoErrorKind::WrongType, "f64 payload length does not match dims");
    out.reserve(out.size() + n * 8);
    for (double v : t.f64) put_f64(out, v);
  }
  return out;
}

AlrtTensor decode_alrt(std::span<const std::uint8_t> bytes, int extra_planes) {
  Reader in(bytes);
  in.need(4, "magic");
  if (std::memcmp(in.take(4).data(), kMagic, 4) != 0) {
    throw IoError(IoErrorKind::BadMagic, "not an ALRT file");
  }
  const auto version = in.u8("version");
  if (version != kVersion) {
    throw IoError(IoErrorKind::BadVersion, "version " + std::to_string(version));
  }
  const auto dtype = in.u8("dtype");
  if (dtype > 1) throw IoError(IoErrorKind::UnknownDtype, "dtype code " + std::to_string(dtype));
  const auto ndim = in.u8("ndim");
  if (ndim != 2 && ndim != 3) throw IoError(IoErrorKind::BadDims, "ndim " + std::to_string(ndim));

  AlrtTensor t;
  t.dtype = static_cast<Dtype>(dtype);
  for (int i = 0; i < ndim; ++i) t.dims.push_back(in.u32("dims"));
  const auto n = element_count(t.dims);
  const std::uint64_t plane = std::uint64_t{t.dims[0]} * t.dims[1];
  if (t.dtype == Dtype::U8) {
    const auto total = n + plane * static_cast<std::uint64_t>(extra_planes);
    in.need(total, "payload");
    auto payload = in.take(total);
    t.u8.assign(payload.begin(), payload.end());
  } else {
    if (extra_planes != 0) throw IoError(IoErrorKind::WrongType, "f64 tensors carry no extra planes");
    if (n > kMaxPayloadBytes / 8) throw IoError(IoErrorKind::DimOverflow, "dimensions too large");
    in.need(n * 8, "payload");
    t.f64.resize(n);
    for (auto& v : t.f64) v = in.f64();
  }
  if (in.remaining() != 0) {
    throw IoError(IoErrorKind::TrailingBytes, std::to_string(in.remaining()) + " bytes after payload");
  }
  return t;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(IoErrorKind::Open, path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(IoErrorKind::Open, path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError(IoErrorKind::Open, "write failed: " + path.string());
}

std::vector<std::uint8_t> encode_probability_map(const ProbabilityMap& pm) {
  AlrtTensor t;
  t.dtype = Dtype::F64;
  t.dims = {static_cast<std::uint32_t>(pm.height()), static_cast<std::uint32_t>(pm.width()),
            static_cast<std::uint32_t>(pm.num_classes())};
  t.f64 = pm.data();
  return encode_alrt(t);
}

ProbabilityMap decode_probability_map(std::span<const std::uint8_t> bytes) {
  auto t = decode_alrt(bytes);
  if (t.dtype != Dtype::F64 || t.dims.size() != 3) {
    throw IoError(IoErrorKind::WrongType, "probability map must be a 3-d f64 tensor");
  }
  if (t.dims[0] > std::numeric_limits<int>::max() || t.dims[1] > std::numeric_limits<int>::max() ||
      t.dims[2] > static_cast<std::uint32_t>(kMaxClasses)) {
    throw IoError(IoErrorKind::DimOverflow, "probability map dims out of range");
  }
  return ProbabilityMap(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]),
                        static_cast<int>(t.dims[2]), std::move(t.f64));
}

std::vector<std::uint8_t> encode_label_mask(const LabelMask& lm) {
  AlrtTensor t;
  t.dtype = Dtype::U8;
  t.dims = {static_cast<std::uint32_t>(lm.height()), static_cast<std::uint32_t>(lm.width())};
  t.u8 = lm.labels();
  for (auto p : lm.provenance()) t.u8.push_back(static_cast<std::uint8_t>(p));
  return encode_alrt(t);
}

LabelMask decode_label_mask(std::span<const std::uint8_t> bytes) {
  auto t = decode_alrt(bytes, 1);
  if (t.dtype != Dtype::U8 || t.dims.size() != 2) {
    throw IoError(IoErrorKind::WrongType, "label mask must be a 2-d u8 tensor");
  }
  if (t.dims[0] > std::numeric_limits<int>::max() || t.dims[1] > std::numeric_limits<int>::max()) {
    throw IoError(IoErrorKind::DimOverflow, "label mask dims out of range");
  }
  const std::size_t n = std::size_t{t.dims[0]} * t.dims[1];
  std::vector<std::uint8_t> labels(t.u8.begin(), t.u8.begin() + static_cast<std::ptrdiff_t>(n));
  std::vector<Provenance> prov(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto code = t.u8[n + i];
    if (code > 2) throw IoError(IoErrorKind::WrongType, "provenance code " + std::to_string(code));
    prov[i] = static_cast<Provenance>(code);
  }
  return LabelMask(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), std::move(labels),
                   std::move(prov));
}

void write_probability_map(const std::filesystem::path& path, const ProbabilityMap& pm) {
  write_file_bytes(path, encode_probability_map(pm));
}

ProbabilityMap read_probability_map(const std::filesystem::path& path) {
  return decode_probability_map(read_file_bytes(path));
}

void write_label_mask(const std::filesystem::path& path, const LabelMask& lm) {
  write_file_bytes(path, encode_label_mask(lm));
}

LabelMask read_label_mask(const std::filesystem::path& path) {
  return decode_label_mask(read_file_bytes(path));
}

// PNG goes through libpng's simplified API.

RasterImage decode_png(std::span<const std::uint8_t> bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw IoError(IoErrorKind::Png, image.message);
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int channels = color ? 3 : 1;
  std::vector<std::uint8_t> data(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, data.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError(IoErrorKind::Png, msg);
  }
  return RasterImage(static_cast<int>(image.height), static_cast<int>(image.width), channels,
                     std::move(data));
}

std::vector<std::uint8_t> encode_png(const RasterImage& img) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.data().data(), 0, nullptr)) {
    throw IoError(IoErrorKind::Png, image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.data().data(), 0, nullptr)) {
    throw IoError(IoErrorKind::Png, image.message);
  }
  out.resize(size);
  return out;
}

RasterImage read_png(const std::filesystem::path& path) { return decode_png(read_file_bytes(path)); }

void write_png(const std::filesystem::path& path, const RasterImage& img) {
  write_file_bytes(path, encode_png(img));
}

}  // namespace albalance
