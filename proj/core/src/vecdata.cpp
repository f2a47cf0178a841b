#include "ndsim/vecdata.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <string>

#include "binio.hpp"
#include "ndsim/error.hpp"
#include "ndsim/io.hpp"

namespace ndsim {

DistanceKind distance_kind_from_code(unsigned code) {
  switch (code) {
    case 0: return DistanceKind::SquaredL2;
    case 1: return DistanceKind::InnerProduct;
    case 2: return DistanceKind::Angular;
    case 3: throw Error(ErrorKind::Parameter, "distance code 3 is reserved");
    default:
      throw Error(ErrorKind::Parameter,
                  "distance code " + std::to_string(code) + " does not fit in 2 bits");
  }
}

DistanceKind distance_kind_from_name(std::string_view name) {
  if (name == "l2" || name == "euclidean" || name == "squared_l2") return DistanceKind::SquaredL2;
  if (name == "ip" || name == "inner_product") return DistanceKind::InnerProduct;
  if (name == "angular" || name == "cosine") return DistanceKind::Angular;
  throw Error(ErrorKind::Parameter, "unknown distance '" + std::string(name) + "'");
}

std::string_view to_string(DistanceKind kind) noexcept {
  switch (kind) {
    case DistanceKind::SquaredL2: return "l2";
    case DistanceKind::InnerProduct: return "ip";
    case DistanceKind::Angular: return "angular";
  }
  return "?";
}

std::size_t dim_of(const VectorRef& v) noexcept {
  return std::visit([](auto s) { return s.size(); }, v);
}

VectorSet VectorSet::from_f32(std::size_t dim, std::vector<float> data) {
  if (dim == 0 ? !data.empty() : data.size() % dim != 0) {
    throw Error(ErrorKind::Dimension, "float data length " + std::to_string(data.size()) +
                                          " is not a multiple of dim " + std::to_string(dim));
  }
  VectorSet s;
  s.dim_ = dim;
  s.count_ = dim == 0 ? 0 : data.size() / dim;
  s.elem_ = ElemType::Float32;
  s.f32_ = std::move(data);
  return s;
}

VectorSet VectorSet::from_u8(std::size_t dim, std::vector<std::uint8_t> data) {
  if (dim == 0 ? !data.empty() : data.size() % dim != 0) {
    throw Error(ErrorKind::Dimension, "uint8 data length " + std::to_string(data.size()) +
                                          " is not a multiple of dim " + std::to_string(dim));
  }
  VectorSet s;
  s.dim_ = dim;
  s.count_ = dim == 0 ? 0 : data.size() / dim;
  s.elem_ = ElemType::UInt8;
  s.u8_ = std::move(data);
  return s;
}

VectorRef VectorSet::row(std::size_t i) const {
  if (i >= count_) {
    throw Error(ErrorKind::Range,
                "vector row " + std::to_string(i) + " out of range (count " + std::to_string(count_) + ")");
  }
  if (elem_ == ElemType::Float32) {
    return std::span<const float>(f32_).subspan(i * dim_, dim_);
  }
  return std::span<const std::uint8_t>(u8_).subspan(i * dim_, dim_);
}

VectorSet VectorSet::gather(std::span<const std::uint32_t> rows) const {
  if (elem_ == ElemType::Float32) {
    std::vector<float> out;
    out.reserve(rows.size() * dim_);
    for (auto r : rows) {
      auto v = std::get<std::span<const float>>(row(r));
      out.insert(out.end(), v.begin(), v.end());
    }
    return from_f32(dim_, std::move(out));
  }
  std::vector<std::uint8_t> out;
  out.reserve(rows.size() * dim_);
  for (auto r : rows) {
    auto v = std::get<std::span<const std::uint8_t>>(row(r));
    out.insert(out.end(), v.begin(), v.end());
  }
  return from_u8(dim_, std::move(out));
}

VectorSet parse_vectors(std::span<const std::uint8_t> bytes, VecFileFormat format) {
  const std::size_t elem_bytes = format == VecFileFormat::Fvecs ? 4 : 1;
  detail::ByteReader in(bytes, format == VecFileFormat::Fvecs ? "fvecs" : "bvecs");
  if (bytes.empty()) {
    VectorSet empty = format == VecFileFormat::Fvecs ? VectorSet::from_f32(0, {})
                                                      : VectorSet::from_u8(0, {});
    empty.mark_loaded_empty();
    return empty;
  }

  std::vector<float> f32;
  std::vector<std::uint8_t> u8;
  std::size_t dim = 0;
  for (std::size_t record = 0; in.remaining() > 0; ++record) {
    const auto declared = static_cast<std::int32_t>(in.u32());
    if (declared <= 0) {
      std::ostringstream msg;
      msg << "record " << record << " declares non-positive dimension " << declared;
      throw Error(ErrorKind::Format, msg.str());
    }
    if (record == 0) {
      dim = static_cast<std::size_t>(declared);
    } else if (static_cast<std::size_t>(declared) != dim) {
      std::ostringstream msg;
      msg << "record " << record << " declares dimension " << declared << " but record 0 has "
          << dim;
      throw Error(ErrorKind::Format, msg.str());
    }
    auto payload = in.raw(dim * elem_bytes);
    if (format == VecFileFormat::Fvecs) {
      detail::ByteReader floats(payload, "fvecs");
      for (std::size_t j = 0; j < dim; ++j) f32.push_back(floats.f32());
    } else {
      u8.insert(u8.end(), payload.begin(), payload.end());
    }
  }
  return format == VecFileFormat::Fvecs ? VectorSet::from_f32(dim, std::move(f32))
                                        : VectorSet::from_u8(dim, std::move(u8));
}

VectorSet load_vectors(const std::filesystem::path& path, VecFileFormat format) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorKind::Io, "dataset file not found: '" + path.string() + "'");
  }
  return parse_vectors(read_file_bytes(path), format);
}

std::vector<std::uint8_t> encode_vectors(const VectorSet& vectors) {
  detail::ByteWriter out;
  for (std::size_t i = 0; i < vectors.count(); ++i) {
    out.u32(static_cast<std::uint32_t>(vectors.dim()));
    std::visit(
        [&](auto row) {
          using T = typename decltype(row)::element_type;
          if constexpr (std::is_same_v<std::remove_const_t<T>, float>) {
            for (float x : row) out.f32(x);
          } else {
            out.raw(row);
          }
        },
        vectors.row(i));
  }
  return std::move(out.bytes());
}

void save_vectors(const VectorSet& vectors, const std::filesystem::path& path) {
  write_file_atomic(path, encode_vectors(vectors));
}

namespace {

// Four interleaved partial sums; fixed order keeps results bit-reproducible.
template <class A, class B, class Acc, class Op>
Acc reduce4(std::span<const A> a, std::span<const B> b, Op op) {
  Acc s0{}, s1{}, s2{}, s3{};
  const std::size_t n = a.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += op(a[i], b[i]);
    s1 += op(a[i + 1], b[i + 1]);
    s2 += op(a[i + 2], b[i + 2]);
    s3 += op(a[i + 3], b[i + 3]);
  }
  for (; i < n; ++i) s0 += op(a[i], b[i]);
  return (s0 + s1) + (s2 + s3);
}

template <class A, class B>
float typed_distance(DistanceKind kind, std::span<const A> a, std::span<const B> b) {
  constexpr bool integral = std::is_integral_v<A> && std::is_integral_v<B>;
  using Acc = std::conditional_t<integral, std::int64_t, float>;
  auto sq = [](A x, B y) {
    const Acc d = static_cast<Acc>(x) - static_cast<Acc>(y);
    return d * d;
  };
  auto dot = [](A x, B y) { return static_cast<Acc>(x) * static_cast<Acc>(y); };
  switch (kind) {
    case DistanceKind::SquaredL2:
      return static_cast<float>(reduce4<A, B, Acc>(a, b, sq));
    case DistanceKind::InnerProduct:
      return -static_cast<float>(reduce4<A, B, Acc>(a, b, dot));
    case DistanceKind::Angular: {
      auto self_a = [](A x, A y) { return static_cast<double>(x) * static_cast<double>(y); };
      auto self_b = [](B x, B y) { return static_cast<double>(x) * static_cast<double>(y); };
      auto cross = [](A x, B y) { return static_cast<double>(x) * static_cast<double>(y); };
      const double na = reduce4<A, A, double>(a, a, self_a);
      const double nb = reduce4<B, B, double>(b, b, self_b);
      if (na == 0.0 || nb == 0.0) {
        throw Error(ErrorKind::Domain, "angular distance undefined for a zero vector");
      }
      const double ab = reduce4<A, B, double>(a, b, cross);
      return static_cast<float>(1.0 - ab / (std::sqrt(na) * std::sqrt(nb)));
    }
  }
  throw Error(ErrorKind::Parameter, "unknown distance kind");
}

}  // namespace

float distance(DistanceKind kind, const VectorRef& a, const VectorRef& b) {
  const std::size_t na = dim_of(a);
  const std::size_t nb = dim_of(b);
  if (na != nb || na == 0) {
    throw Error(ErrorKind::Dimension, "distance between vectors of length " + std::to_string(na) +
                                          " and " + std::to_string(nb));
  }
  return std::visit(
      [&](auto x, auto y) {
        using A = std::remove_const_t<typename decltype(x)::element_type>;
        using B = std::remove_const_t<typename decltype(y)::element_type>;
        return typed_distance<A, B>(kind, x, y);
      },
      a, b);
}

float distance(DistanceKind kind, std::span<const float> a, std::span<const float> b) {
  return distance(kind, VectorRef(a), VectorRef(b));
}

double layout_overhead(std::uint64_t max_neighbors, std::uint64_t id_bytes,
                       std::uint64_t vec_bytes, std::uint64_t page_bytes) {
  if (max_neighbors == 0 || id_bytes == 0 || vec_bytes == 0 || page_bytes == 0) {
    throw Error(ErrorKind::Parameter, "layout_overhead inputs must be positive");
  }
  const std::uint64_t ids = max_neighbors * id_bytes;
  const std::uint64_t slice = vec_bytes + ids;
  if (slice > page_bytes) {
    throw Error(ErrorKind::Geometry, "slice of " + std::to_string(slice) +
                                         " bytes does not fit a page of " +
                                         std::to_string(page_bytes) + " bytes");
  }
  const std::uint64_t slices = page_bytes / slice;
  return static_cast<double>((slices - 1) * ids) / static_cast<double>(slices * slice);
}

VectorSet make_gaussian_mixture(const GaussianMixtureSpec& spec) {
  if (spec.dim == 0 || spec.clusters == 0) {
    throw Error(ErrorKind::Parameter, "gaussian mixture needs dim >= 1 and clusters >= 1");
  }
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<float> uni(0.0f, spec.center_range);
  std::vector<float> centers(spec.clusters * spec.dim);
  for (auto& c : centers) c = uni(rng);

  std::uniform_int_distribution<std::size_t> pick(0, spec.clusters - 1);
  std::normal_distribution<float> noise(0.0f, spec.sigma);
  std::vector<float> data(spec.count * spec.dim);
  for (std::size_t i = 0; i < spec.count; ++i) {
    const float* center = &centers[pick(rng) * spec.dim];
    for (std::size_t j = 0; j < spec.dim; ++j) data[i * spec.dim + j] = center[j] + noise(rng);
  }
  return VectorSet::from_f32(spec.dim, std::move(data));
}

}  // namespace ndsim
