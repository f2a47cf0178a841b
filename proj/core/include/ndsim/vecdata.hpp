#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

namespace ndsim {

enum class ElemType : std::uint8_t { Float32, UInt8 };

enum class VecFileFormat { Fvecs, Bvecs };

/// Distance selector carried in the 2-bit "Distance" field of a Search Page
/// command. Smaller values always mean closer.
enum class DistanceKind : std::uint8_t {
  SquaredL2 = 0,
  InnerProduct = 1,  // negated dot product
  Angular = 2,       // 1 - cosine similarity
};

/// Decodes a 2-bit distance code. Code 3 is reserved and rejected.
DistanceKind distance_kind_from_code(unsigned code);
DistanceKind distance_kind_from_name(std::string_view name);
std::string_view to_string(DistanceKind kind) noexcept;
constexpr unsigned code_of(DistanceKind kind) noexcept { return static_cast<unsigned>(kind); }

/// Read-only view of one vector of either element type.
using VectorRef = std::variant<std::span<const float>, std::span<const std::uint8_t>>;

std::size_t dim_of(const VectorRef& v) noexcept;

/// Dense row-major vectors sharing one dimension and element type.
class VectorSet {
 public:
  VectorSet() = default;

  static VectorSet from_f32(std::size_t dim, std::vector<float> data);
  static VectorSet from_u8(std::size_t dim, std::vector<std::uint8_t> data);

  std::size_t count() const noexcept { return count_; }
  std::size_t dim() const noexcept { return dim_; }
  ElemType elem() const noexcept { return elem_; }
  std::size_t elem_bytes() const noexcept { return elem_ == ElemType::Float32 ? 4 : 1; }
  /// Bytes one stored vector occupies in a NAND page.
  std::size_t record_bytes() const noexcept { return dim_ * elem_bytes(); }

  VectorRef row(std::size_t i) const;
  std::span<const float> f32_data() const noexcept { return f32_; }
  std::span<const std::uint8_t> u8_data() const noexcept { return u8_; }

  /// Set when the set came from an empty file; such a set is valid but the
  /// caller usually wants to warn about it.
  bool loaded_empty() const noexcept { return loaded_empty_; }
  void mark_loaded_empty() noexcept { loaded_empty_ = true; }

  /// Selects rows by index, in the given order.
  VectorSet gather(std::span<const std::uint32_t> rows) const;

  friend bool operator==(const VectorSet&, const VectorSet&) = default;

 private:
  std::size_t count_ = 0;
  std::size_t dim_ = 0;
  ElemType elem_ = ElemType::Float32;
  std::vector<float> f32_;
  std::vector<std::uint8_t> u8_;
  bool loaded_empty_ = false;
};

VectorSet load_vectors(const std::filesystem::path& path, VecFileFormat format);
void save_vectors(const VectorSet& vectors, const std::filesystem::path& path);
VectorSet parse_vectors(std::span<const std::uint8_t> bytes, VecFileFormat format);
std::vector<std::uint8_t> encode_vectors(const VectorSet& vectors);

/// Distance between two vectors of equal length. uint8 inputs accumulate in
/// 64-bit integers; float inputs accumulate in float with a fixed
/// summation order so results are reproducible bit-for-bit.
float distance(DistanceKind kind, const VectorRef& a, const VectorRef& b);
float distance(DistanceKind kind, std::span<const float> a, std::span<const float> b);

/// Fraction of a page spent on neighbor-ID bytes that a search does not need
/// when vectors and their neighbor IDs are interleaved in fixed-size slices.
double layout_overhead(std::uint64_t max_neighbors, std::uint64_t id_bytes,
                       std::uint64_t vec_bytes, std::uint64_t page_bytes);

struct GaussianMixtureSpec {
  std::size_t count = 100'000;
  std::size_t dim = 96;
  std::size_t clusters = 64;
  float center_range = 2.0f;   // centers uniform in [0, center_range)^dim
  float sigma = 1.0f;          // isotropic per-cluster spread
  std::uint64_t seed = 1;
};

/// Points drawn from a Gaussian mixture with the cluster of each point chosen
/// independently, so row order carries no locality. The default centers sit
/// close enough that clusters overlap, which keeps a randomly entered search
/// able to cross between them.
VectorSet make_gaussian_mixture(const GaussianMixtureSpec& spec);

}  // namespace ndsim
