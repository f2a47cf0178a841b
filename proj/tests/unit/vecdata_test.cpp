#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <random>

#include "ndsim/error.hpp"
#include "ndsim/io.hpp"
#include "ndsim/vecdata.hpp"
#include "test_support.hpp"

namespace ndsim {
namespace {

std::vector<std::uint8_t> fvecs_bytes(const std::vector<std::vector<float>>& rows) {
  std::vector<std::uint8_t> out;
  for (const auto& r : rows) {
    const std::int32_t d = static_cast<std::int32_t>(r.size());
    const auto* p = reinterpret_cast<const std::uint8_t*>(&d);
    out.insert(out.end(), p, p + 4);
    const auto* f = reinterpret_cast<const std::uint8_t*>(r.data());
    out.insert(out.end(), f, f + 4 * r.size());
  }
  return out;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no ndsim::Error thrown";
  return ErrorKind::Io;
}

TEST(VecData, DecodesTwoRecords) {
  auto bytes = fvecs_bytes({{1, 2, 3, 4}, {5, 6, 7, 8}});
  VectorSet v = parse_vectors(bytes, VecFileFormat::Fvecs);
  EXPECT_EQ(v.count(), 2u);
  EXPECT_EQ(v.dim(), 4u);
  EXPECT_FLOAT_EQ(std::get<std::span<const float>>(v.row(1))[2], 7.0f);
}

TEST(VecData, EmptyFileIsFlagged) {
  VectorSet v = parse_vectors({}, VecFileFormat::Fvecs);
  EXPECT_EQ(v.count(), 0u);
  EXPECT_EQ(v.dim(), 0u);
  EXPECT_TRUE(v.loaded_empty());
}

TEST(VecData, InconsistentDimensionNamesRecord) {
  auto bytes = fvecs_bytes({{1, 2, 3, 4}, {1, 2, 3, 4, 5, 6, 7, 8}});
  try {
    parse_vectors(bytes, VecFileFormat::Fvecs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Format);
    EXPECT_NE(std::string(e.what()).find("record 1"), std::string::npos) << e.what();
  }
}

TEST(VecData, TruncatedFileIsParseError) {
  auto bytes = fvecs_bytes({{1, 2, 3, 4}});
  bytes.pop_back();
  try {
    parse_vectors(bytes, VecFileFormat::Fvecs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Parse);
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos) << e.what();
  }
}

TEST(VecData, FileRoundTripBothFormats) {
  const auto dir = std::filesystem::temp_directory_path() / "ndsim_vecdata_test";
  std::filesystem::create_directories(dir);
  VectorSet f = testing::random_vectors(17, 5, 3);
  save_vectors(f, dir / "a.fvecs");
  EXPECT_EQ(load_vectors(dir / "a.fvecs", VecFileFormat::Fvecs), f);

  std::vector<std::uint8_t> raw(6 * 3);
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<std::uint8_t>(i * 37);
  VectorSet b = VectorSet::from_u8(3, raw);
  save_vectors(b, dir / "b.bvecs");
  EXPECT_EQ(load_vectors(dir / "b.bvecs", VecFileFormat::Bvecs), b);
  std::filesystem::remove_all(dir);
}

TEST(VecData, MissingFileIsIoError) {
  EXPECT_EQ(kind_of([] { load_vectors("/nonexistent/x.fvecs", VecFileFormat::Fvecs); }),
            ErrorKind::Io);
}

float dist(DistanceKind kind, const std::vector<float>& a, const std::vector<float>& b) {
  return distance(kind, std::span<const float>(a), std::span<const float>(b));
}

TEST(Distance, WorkedValues) {
  const std::vector<float> a{1, 2, 3}, b{1, 2, 3};
  EXPECT_EQ(dist(DistanceKind::SquaredL2, a, b), 0.0f);
  const std::vector<float> z{0, 0}, p{3, 4};
  EXPECT_EQ(dist(DistanceKind::SquaredL2, z, p), 25.0f);
  const std::vector<float> x{1, 0}, y{0, 1};
  EXPECT_FLOAT_EQ(dist(DistanceKind::Angular, x, y), 1.0f);
  EXPECT_FLOAT_EQ(dist(DistanceKind::InnerProduct, p, p), -25.0f);
}

TEST(Distance, Errors) {
  const std::vector<float> a{1, 2}, b{1, 2, 3}, z{0, 0};
  EXPECT_EQ(kind_of([&] { dist(DistanceKind::SquaredL2, a, b); }), ErrorKind::Dimension);
  EXPECT_EQ(kind_of([&] { dist(DistanceKind::Angular, a, z); }), ErrorKind::Domain);
}

TEST(Distance, Uint8MatchesWideIntegerOracle) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> byte(0, 255);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::uint8_t> a(128), b(128);
    for (auto& x : a) x = static_cast<std::uint8_t>(byte(rng));
    for (auto& x : b) x = static_cast<std::uint8_t>(byte(rng));
    std::int64_t l2 = 0, dot = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const std::int64_t d = std::int64_t{a[i]} - b[i];
      l2 += d * d;
      dot += std::int64_t{a[i]} * b[i];
    }
    const VectorRef ra = std::span<const std::uint8_t>(a), rb = std::span<const std::uint8_t>(b);
    EXPECT_EQ(distance(DistanceKind::SquaredL2, ra, rb), static_cast<float>(l2));
    EXPECT_EQ(distance(DistanceKind::InnerProduct, ra, rb), -static_cast<float>(dot));
  }
}

TEST(Distance, CodeThreeIsReserved) {
  EXPECT_EQ(distance_kind_from_code(0), DistanceKind::SquaredL2);
  EXPECT_EQ(distance_kind_from_code(2), DistanceKind::Angular);
  EXPECT_EQ(kind_of([] { distance_kind_from_code(3); }), ErrorKind::Parameter);
}

// Lays slices out byte by byte and counts neighbor-ID bytes of every slice a
// single-vector read does not need.
double overhead_by_page_walk(std::uint64_t r, std::uint64_t id_bytes, std::uint64_t vec_bytes,
                             std::uint64_t page_bytes) {
  const std::uint64_t slice = vec_bytes + r * id_bytes;
  std::vector<int> owner;  // -1 vector byte, k >= 0 id byte of slice k
  for (std::uint64_t s = 0; (s + 1) * slice <= page_bytes; ++s) {
    for (std::uint64_t i = 0; i < vec_bytes; ++i) owner.push_back(-1);
    for (std::uint64_t i = 0; i < r * id_bytes; ++i) owner.push_back(static_cast<int>(s));
  }
  const std::uint64_t used = owner.size();
  std::uint64_t unneeded = 0;
  for (int o : owner) unneeded += o > 0;
  return static_cast<double>(unneeded) / static_cast<double>(used);
}

TEST(LayoutOverhead, PageFigure) {
  EXPECT_DOUBLE_EQ(layout_overhead(32, 4, 128, 4096), 0.46875);
  EXPECT_DOUBLE_EQ(layout_overhead(4, 4, 16, 64), 0.25);
  EXPECT_DOUBLE_EQ(layout_overhead(32, 4, 3968, 4096), 0.0);
}

TEST(LayoutOverhead, MatchesPageWalk) {
  for (std::uint64_t r : {1, 4, 16, 32, 64}) {
    for (std::uint64_t vec : {16, 128, 384, 512}) {
      for (std::uint64_t page : {1024, 4096, 16384}) {
        if (vec + r * 4 > page) continue;
        EXPECT_DOUBLE_EQ(layout_overhead(r, 4, vec, page), overhead_by_page_walk(r, 4, vec, page))
            << r << " " << vec << " " << page;
      }
    }
  }
}

TEST(LayoutOverhead, SliceLargerThanPage) {
  EXPECT_EQ(kind_of([] { layout_overhead(32, 4, 4096, 4096); }), ErrorKind::Geometry);
}

TEST(GaussianMixture, Deterministic) {
  GaussianMixtureSpec spec;
  spec.count = 500;
  spec.dim = 8;
  spec.clusters = 4;
  EXPECT_EQ(make_gaussian_mixture(spec), make_gaussian_mixture(spec));
  spec.seed = 2;
  VectorSet other = make_gaussian_mixture(spec);
  spec.seed = 1;
  EXPECT_NE(make_gaussian_mixture(spec), other);
}

TEST(Io, Crc32KnownValue) {
  const std::string s = "123456789";
  EXPECT_EQ(crc32({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}), 0xCBF43926u);
}

}  // namespace
}  // namespace ndsim
