#include "aegis/params.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace aegis {

namespace {

constexpr char kMagic[4] = {'A', 'E', 'G', 'W'};
constexpr uint32_t kVersion = 1;

[[noreturn]] void corrupt(const std::string& path, int64_t offset, const std::string& what) {
  fail(ErrorKind::format, path + ": " + what + " at byte " + std::to_string(offset));
}

struct Reader {
  std::ifstream& in;
  const std::string& path;
  int64_t offset = 0;

  void bytes(void* dst, size_t n, const char* what) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n) corrupt(path, offset, std::string("truncated ") + what);
    offset += static_cast<int64_t>(n);
  }
  uint16_t u16(const char* what) {
    uint16_t v;
    bytes(&v, 2, what);
    return v;
  }
  uint32_t u32(const char* what) {
    uint32_t v;
    bytes(&v, 4, what);
    return v;
  }
  uint8_t u8(const char* what) {
    uint8_t v;
    bytes(&v, 1, what);
    return v;
  }
};

struct Writer {
  std::ofstream& out;

  void bytes(const void* src, size_t n) { out.write(reinterpret_cast<const char*>(src), static_cast<std::streamsize>(n)); }
  void u16(uint16_t v) { bytes(&v, 2); }
  void u32(uint32_t v) { bytes(&v, 4); }
  void u8(uint8_t v) { bytes(&v, 1); }
};

}  // namespace

Parameter& ParamStore::create(const std::string& name, Tensor init, bool trainable) {
  if (index_.count(name)) fail(ErrorKind::usage, "parameter registered twice: " + name);
  items_.push_back(std::make_unique<Parameter>(name, std::move(init), trainable));
  index_[name] = items_.size() - 1;
  return *items_.back();
}

Parameter& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) fail(ErrorKind::usage, "unknown parameter: " + name);
  return *items_[it->second];
}

const Parameter& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) fail(ErrorKind::usage, "unknown parameter: " + name);
  return *items_[it->second];
}

std::vector<Parameter*> ParamStore::all() {
  std::vector<Parameter*> out;
  out.reserve(items_.size());
  for (auto& p : items_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParamStore::all() const {
  std::vector<const Parameter*> out;
  out.reserve(items_.size());
  for (auto& p : items_) out.push_back(p.get());
  return out;
}

std::vector<Parameter*> ParamStore::with_prefix(const std::string& prefix) {
  std::vector<Parameter*> out;
  for (auto& p : items_)
    if (p->name.rfind(prefix, 0) == 0) out.push_back(p.get());
  return out;
}

void ParamStore::zero_grads() {
  for (auto& p : items_) p->zero_grad();
}

void ParamStore::save(const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot open " + path + " for writing");
  Writer w{out};
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<uint32_t>(items_.size()));
  for (auto& p : items_) {
    if (p->name.size() > 0xffff) fail(ErrorKind::usage, "parameter name too long: " + p->name);
    w.u16(static_cast<uint16_t>(p->name.size()));
    w.bytes(p->name.data(), p->name.size());
    w.u8(static_cast<uint8_t>(p->value.rank()));
    for (int d : p->value.shape) w.u32(static_cast<uint32_t>(d));
    for (int64_t i = 0; i < p->value.numel(); ++i) {
      float f = static_cast<float>(p->value[i]);
      w.bytes(&f, 4);
      p->value[i] = static_cast<double>(f);  // snap so memory equals the file
    }
  }
  out.flush();
  if (!out) fail(ErrorKind::io, "write failed for " + path);
}

void ParamStore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path);
  Reader r{in, path};

  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) corrupt(path, 0, "bad magic, not an AEGW file");
  uint32_t version = r.u32("version");
  if (version != kVersion) corrupt(path, 4, "unsupported version " + std::to_string(version));
  uint32_t count = r.u32("parameter count");
  if (count != items_.size())
    fail(ErrorKind::format, path + ": file holds " + std::to_string(count) + " parameters, store expects " +
                                std::to_string(items_.size()));

  std::vector<bool> seen(items_.size(), false);
  for (uint32_t pi = 0; pi < count; ++pi) {
    int64_t entry_at = r.offset;
    uint16_t name_len = r.u16("name length");
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len, "name");
    auto it = index_.find(name);
    if (it == index_.end()) corrupt(path, entry_at, "unknown parameter '" + name + "'");
    if (seen[it->second]) corrupt(path, entry_at, "duplicate parameter '" + name + "'");
    seen[it->second] = true;
    Parameter& p = *items_[it->second];

    uint8_t rank = r.u8("rank");
    if (rank != p.value.rank()) corrupt(path, entry_at, "rank mismatch for '" + name + "'");
    Shape shape(rank);
    for (int d = 0; d < rank; ++d) {
      uint32_t dim = r.u32("dimension");
      if (dim == 0 || dim > (1u << 28)) corrupt(path, entry_at, "implausible dimension for '" + name + "'");
      shape[d] = static_cast<int>(dim);
    }
    if (shape != p.value.shape)
      corrupt(path, entry_at,
              "shape mismatch for '" + name + "': file " + shape_str(shape) + ", store " +
                  shape_str(p.value.shape));
    for (int64_t i = 0; i < p.value.numel(); ++i) {
      float f;
      r.bytes(&f, 4, "values");
      if (!std::isfinite(f)) corrupt(path, r.offset - 4, "non-finite value in '" + name + "'");
      p.value[i] = static_cast<double>(f);
    }
  }
  // Trailing garbage means the writer and reader disagree about content.
  char extra;
  in.read(&extra, 1);
  if (in.gcount() != 0) corrupt(path, r.offset, "trailing bytes after last parameter");
}

Tensor he_uniform(const Shape& shape, int fan_in, Rng& rng) {
  if (fan_in <= 0) fail(ErrorKind::usage, "he_uniform: fan_in must be positive");
  double bound = std::sqrt(6.0 / fan_in);
  Tensor t(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

}  // namespace aegis
