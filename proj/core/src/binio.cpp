#include "binio.hpp"

#include <zlib.h>

#include <fstream>
#include <iterator>
#include <sstream>
#include <system_error>

#include "ndsim/io.hpp"

namespace ndsim {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Format: return "format error";
    case ErrorKind::Dimension: return "dimension error";
    case ErrorKind::Domain: return "domain error";
    case ErrorKind::Geometry: return "geometry error";
    case ErrorKind::Parameter: return "parameter error";
    case ErrorKind::Load: return "load error";
    case ErrorKind::Range: return "range error";
    case ErrorKind::Refresh: return "refresh error";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Io: return "io error";
    case ErrorKind::Artifact: return "artifact mismatch";
    case ErrorKind::Simulation: return "simulation fault";
  }
  return "error";
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) noexcept {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks.
  const std::uint8_t* p = bytes.data();
  std::size_t left = bytes.size();
  while (left > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(left, 1u << 30));
    crc = ::crc32(crc, p, chunk);
    p += chunk;
    left -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw Error(ErrorKind::Io, "cannot write '" + tmp.string() + "'");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      throw Error(ErrorKind::Io, "short write to '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw Error(ErrorKind::Io, "cannot rename '" + tmp.string() + "' to '" +
                                   path.string() + "': " + ec.message());
  }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                                    text.size()));
}

namespace detail {

void ByteWriter::crc_trailer() { u32(ndsim::crc32(bytes_)); }

void ByteReader::need(std::size_t n) {
  if (remaining() < n) {
    std::ostringstream msg;
    msg << what_ << ": truncated at byte offset " << pos_ << " (need " << n
        << " bytes, have " << remaining() << ")";
    throw Error(ErrorKind::Parse, msg.str());
  }
}

void ByteReader::expect_magic(std::string_view tag, ErrorKind mismatch_kind) {
  need(tag.size());
  if (std::string_view(reinterpret_cast<const char*>(data_.data() + pos_), tag.size()) != tag) {
    throw Error(mismatch_kind, what_ + ": bad magic, expected '" + std::string(tag) + "'");
  }
  pos_ += tag.size();
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t{data_[pos_ + i]} << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{data_[pos_ + i]} << (8 * i);
  pos_ += 8;
  return v;
}

std::span<const std::uint8_t> ByteReader::raw(std::size_t n) {
  need(n);
  auto out = data_.subspan(pos_, n);
  pos_ += n;
  return out;
}

void ByteReader::verify_crc_trailer() {
  const std::size_t body = pos_;
  const std::uint32_t stored = u32();
  if (remaining() != 0) {
    throw Error(ErrorKind::Load, what_ + ": " + std::to_string(remaining()) +
                                     " trailing bytes after checksum");
  }
  const std::uint32_t actual = ndsim::crc32(data_.first(body));
  if (stored != actual) {
    throw Error(ErrorKind::Load, what_ + ": checksum mismatch");
  }
}

}  // namespace detail
}  // namespace ndsim
