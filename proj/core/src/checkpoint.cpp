#include "medcore/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace medcore {

namespace {

constexpr char kMagic[4] = {'M', 'C', 'K', 'P'};
constexpr std::uint32_t kMaxRank = 8;

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}

  std::size_t remaining() const { return in_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw CheckpointError(CheckpointError::Code::truncated,
                            std::string("checkpoint truncated while reading ") + what);
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_entries(const TensorEntries& entries) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.u64(entries.size());
  for (const auto& [name, t] : entries) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.dims()) w.u64(static_cast<std::uint64_t>(d));
    for (double v : t.data()) w.f64(v);
  }
  return w.take();
}

TensorEntries decode_entries(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError(CheckpointError::Code::bad_magic, "bad magic: not an MCKP tensor file");
  }
  Reader r(bytes);
  r.str(4, "magic");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Code::version_mismatch,
                          "version mismatch: file has " + std::to_string(version) + ", reader supports " +
                              std::to_string(kCheckpointVersion));
  }
  const std::uint64_t count = r.u64("entry count");
  TensorEntries out;
  for (std::uint64_t e = 0; e < count; ++e) {
    const std::uint32_t name_len = r.u32("name length");
    std::string name = r.str(name_len, "tensor name");
    const std::uint32_t rank = r.u32("rank");
    if (rank > kMaxRank) {
      throw CheckpointError(CheckpointError::Code::dim_overflow,
                            "dim overflow: tensor '" + name + "' declares rank " + std::to_string(rank));
    }
    Shape dims;
    std::uint64_t numel = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const std::uint64_t d = r.u64("dims");
      if (d == 0 || d > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()) ||
          numel > std::numeric_limits<std::uint64_t>::max() / d) {
        throw CheckpointError(CheckpointError::Code::dim_overflow,
                              "dim overflow: tensor '" + name + "' has invalid dimension " + std::to_string(d));
      }
      numel *= d;
      dims.push_back(static_cast<std::int64_t>(d));
    }
    if (numel > r.remaining() / 8) {
      if (numel > (std::numeric_limits<std::uint64_t>::max() >> 4)) {
        throw CheckpointError(CheckpointError::Code::dim_overflow,
                              "dim overflow: tensor '" + name + "' element count overflows");
      }
      throw CheckpointError(CheckpointError::Code::truncated,
                            "checkpoint truncated while reading payload of '" + name + "'");
    }
    std::vector<double> data(static_cast<std::size_t>(numel));
    for (auto& v : data) v = r.f64("payload");
    out.emplace_back(std::move(name), Tensor(std::move(dims), std::move(data)));
  }
  return out;
}

void save_entries(const std::filesystem::path& path, const TensorEntries& entries) {
  const auto bytes = encode_entries(entries);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError(CheckpointError::Code::unreadable, "cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError(CheckpointError::Code::unreadable, "write to '" + path.string() + "' failed");
}

TensorEntries load_entries(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError(CheckpointError::Code::unreadable, "cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_entries(bytes);
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params) {
  save_entries(path, params.entries());
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  ParamStore params;
  for (auto& [name, t] : load_entries(path)) params.add(std::move(name), std::move(t));
  return params;
}

}  // namespace medcore
