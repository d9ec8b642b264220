#include <doctest.h>

#include <filesystem>
#include <random>

#include "albalance/raster_io.hpp"
#include "../support/oracles.hpp"

using namespace albalance;

namespace {

IoErrorKind kind_of(std::span<const std::uint8_t> bytes, int extra = 0) {
  try {
    decode_alrt(bytes, extra);
  } catch (const IoError& e) {
    return e.kind();
  }
  FAIL("decode succeeded");
  return IoErrorKind::Open;
}

std::vector<std::uint8_t> header(std::uint8_t version, std::uint8_t dtype, std::vector<std::uint32_t> dims) {
  std::vector<std::uint8_t> out = {'A', 'L', 'R', 'T', version, dtype, static_cast<std::uint8_t>(dims.size())};
  for (auto d : dims) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(d >> (8 * i)));
  }
  return out;
}

}  // namespace

TEST_CASE("ALRT byte layout") {
  AlrtTensor t;
  t.dims = {2, 3};
  t.u8 = {1, 2, 3, 4, 5, 6};
  const auto bytes = encode_alrt(t);
  auto want = header(1, 0, {2, 3});
  want.insert(want.end(), t.u8.begin(), t.u8.end());
  CHECK(bytes == want);
}

TEST_CASE("probability map round trip is exact") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const auto pm = oracle::random_prob_map(rng, 1 + trial % 4, 2 + trial % 3, 2 + trial % 5);
    const auto back = decode_probability_map(encode_probability_map(pm));
    CHECK(back.height() == pm.height());
    CHECK(back.num_classes() == pm.num_classes());
    CHECK(back.data() == pm.data());
  }
}

TEST_CASE("label mask round trip keeps provenance") {
  std::mt19937_64 rng(2);
  auto lm = oracle::random_labels(rng, 5, 4, 6, 0.3);
  lm.set(0, 3, Provenance::Pseudo);
  CHECK(decode_label_mask(encode_label_mask(lm)) == lm);

  const auto dir = std::filesystem::temp_directory_path() / "albalance_io_test";
  std::filesystem::create_directories(dir);
  write_label_mask(dir / "m.alrt", lm);
  CHECK(read_label_mask(dir / "m.alrt") == lm);
  std::filesystem::remove_all(dir);
}

TEST_CASE("ALRT error kinds") {
  const auto good = encode_probability_map(ProbabilityMap::uniform(1, 1, 2));
  CHECK(kind_of(std::span(good).first(3)) == IoErrorKind::Truncated);
  CHECK(kind_of(std::span(good).first(good.size() - 1)) == IoErrorKind::Truncated);

  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK(kind_of(bad_magic) == IoErrorKind::BadMagic);

  auto bad_version = good;
  bad_version[4] = 2;
  CHECK(kind_of(bad_version) == IoErrorKind::BadVersion);

  auto bad_dtype = good;
  bad_dtype[5] = 7;
  CHECK(kind_of(bad_dtype) == IoErrorKind::UnknownDtype);

  CHECK(kind_of(header(1, 0, {2, 2, 2, 2})) == IoErrorKind::BadDims);
  CHECK(kind_of(header(1, 0, {0, 2})) == IoErrorKind::BadDims);
  CHECK(kind_of(header(1, 1, {0xffffffffu, 0xffffffffu, 0xffffffffu})) == IoErrorKind::DimOverflow);

  auto trailing = good;
  trailing.push_back(0);
  CHECK(kind_of(trailing) == IoErrorKind::TrailingBytes);

  AlrtTensor u8;
  u8.dims = {1, 2};
  u8.u8 = {0, 0};
  try {
    decode_probability_map(encode_alrt(u8));
    FAIL("expected WrongType");
  } catch (const IoError& e) {
    CHECK(e.kind() == IoErrorKind::WrongType);
  }

  auto mask = encode_label_mask(LabelMask(1, 2));
  mask.back() = 9;
  CHECK_THROWS_AS(decode_label_mask(mask), IoError);
  CHECK_THROWS_AS(read_file_bytes("/nonexistent/albalance.alrt"), IoError);
}

TEST_CASE("PNG round trip") {
  std::vector<std::uint8_t> rgb_data(36), gray_data(10);
  for (std::size_t i = 0; i < rgb_data.size(); ++i) rgb_data[i] = static_cast<std::uint8_t>(i * 7);
  for (std::size_t i = 0; i < gray_data.size(); ++i) gray_data[i] = static_cast<std::uint8_t>(i * 25);
  const RasterImage rgb(3, 4, 3, rgb_data);
  const RasterImage gray(2, 5, 1, gray_data);
  CHECK(decode_png(encode_png(rgb)) == rgb);
  CHECK(decode_png(encode_png(gray)) == gray);
  const std::vector<std::uint8_t> junk = {1, 2, 3};
  CHECK_THROWS_AS(decode_png(junk), IoError);
}
