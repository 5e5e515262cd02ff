#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "amkalign/encoder.hpp"
#include "amkalign/io.hpp"

namespace amkalign {

/// Layout, all integers and floats little-endian:
///   "AMKC" | u32 version | u32 tensor count
///   per tensor: u32 name length | name bytes | u32 rows | u32 cols
///   payload: every tensor's f64 values in table order, row-major.
inline constexpr char kCheckpointMagic[4] = {'A', 'M', 'K', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorShape {
  std::string name;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;

  friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

inline std::vector<TensorShape> tensor_shapes(const EncoderParams& p) {
  std::vector<TensorShape> out;
  auto affine = [&](const std::string& name, const Affine& a) {
    out.push_back({name + ".weight", static_cast<std::uint32_t>(a.weight.rows()),
                   static_cast<std::uint32_t>(a.weight.cols())});
    out.push_back({name + ".bias", 1, static_cast<std::uint32_t>(a.bias.cols())});
  };
  auto branch = [&](const std::string& name, const BranchNet& b) {
    affine(name + ".l1", b.l1);
    affine(name + ".l2", b.l2);
    out.push_back({name + ".gem_p", 1, 1});
  };
  branch("global", p.global);
  branch("part", p.part);
  affine("intra_head", p.intra_head);
  affine("cross_head", p.cross_head);
  affine("hier_head", p.hier_head);
  affine("classifier", p.classifier);
  return out;
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline void put_f64(std::string& out, double v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : b_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(byte()) << (8 * i);
    double v = 0.0;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw ParseError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  unsigned char byte() { return static_cast<unsigned char>(b_[pos_++]); }
  const std::string& b_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const EncoderParams& p) {
  std::string out(kCheckpointMagic, 4);
  detail::put_u32(out, kCheckpointVersion);
  const auto shapes = tensor_shapes(p);
  detail::put_u32(out, static_cast<std::uint32_t>(shapes.size()));
  for (const auto& s : shapes) {
    detail::put_u32(out, static_cast<std::uint32_t>(s.name.size()));
    out += s.name;
    detail::put_u32(out, s.rows);
    detail::put_u32(out, s.cols);
  }
  for_each_tensor(p, [&](const std::string&, std::span<const double> v, bool) {
    for (double x : v) detail::put_f64(out, x);
  });
  return out;
}

/// Fills a parameter set shaped like `like`. A different version or shape table is a
/// version error; short or malformed input is a parse error.
inline EncoderParams decode_checkpoint(const std::string& bytes, const EncoderParams& like) {
  detail::Reader r(bytes);
  if (r.str(4) != std::string(kCheckpointMagic, 4)) throw ParseError("not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + ", expected " +
                       std::to_string(kCheckpointVersion));
  }
  const std::uint32_t count = r.u32();
  std::vector<TensorShape> shapes;
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorShape s;
    s.name = r.str(r.u32());
    s.rows = r.u32();
    s.cols = r.u32();
    shapes.push_back(std::move(s));
  }
  const auto expected = tensor_shapes(like);
  if (shapes != expected) {
    throw VersionError("checkpoint tensor table does not match the configured encoder");
  }
  EncoderParams p = like;
  for_each_tensor(p, [&](const std::string&, std::span<double> v, bool) {
    for (double& x : v) x = r.f64();
  });
  if (!r.done()) throw ParseError("checkpoint has trailing bytes");
  p.revision = 0;
  return p;
}

inline void save_checkpoint(const std::string& path, const EncoderParams& p) {
  write_file_atomic(path, encode_checkpoint(p));
}

inline EncoderParams load_checkpoint(const std::string& path, const EncoderParams& like) {
  return decode_checkpoint(read_file(path), like);
}

}  // namespace amkalign
