#include "aegis/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace aegis {

namespace {

constexpr char kMagic[4] = {'A', 'E', 'G', 'D'};
constexpr uint32_t kVersion = 1;

[[noreturn]] void corrupt(const std::string& path, int64_t offset, const std::string& what) {
  fail(ErrorKind::format, path + ": " + what + " at byte " + std::to_string(offset));
}

}  // namespace

void DescriptorDatabase::add(DescriptorEntry e) {
  if (static_cast<int>(e.desc.size()) != kDescriptorDim)
    fail(ErrorKind::dimension, "descriptor must have " + std::to_string(kDescriptorDim) + " values, got " +
                                   std::to_string(e.desc.size()));
  for (const auto& prev : entries_)
    if (prev.id == e.id) fail(ErrorKind::usage, "duplicate descriptor id " + std::to_string(e.id));
  entries_.push_back(std::move(e));
}

bool DescriptorDatabase::has_id(uint32_t id) const {
  for (const auto& e : entries_)
    if (e.id == id) return true;
  return false;
}

void DescriptorDatabase::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot open " + path + " for writing");
  out.write(kMagic, 4);
  uint32_t v = kVersion, n = static_cast<uint32_t>(entries_.size());
  out.write(reinterpret_cast<const char*>(&v), 4);
  out.write(reinterpret_cast<const char*>(&n), 4);
  for (const auto& e : entries_) {
    out.write(reinterpret_cast<const char*>(&e.id), 4);
    uint16_t len = static_cast<uint16_t>(e.room.size());
    out.write(reinterpret_cast<const char*>(&len), 2);
    out.write(e.room.data(), len);
    out.write(reinterpret_cast<const char*>(e.centroid.data()), 12);
    out.write(reinterpret_cast<const char*>(e.desc.data()), 4 * kDescriptorDim);
  }
  out.flush();
  if (!out) fail(ErrorKind::io, "write failed for " + path);
}

DescriptorDatabase DescriptorDatabase::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path);
  int64_t offset = 0;
  auto read = [&](void* dst, size_t n, const char* what) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n) corrupt(path, offset, std::string("truncated ") + what);
    offset += static_cast<int64_t>(n);
  };

  char magic[4];
  read(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) corrupt(path, 0, "bad magic, not an AEGD file");
  uint32_t version, count;
  read(&version, 4, "version");
  if (version != kVersion) corrupt(path, 4, "unsupported version " + std::to_string(version));
  read(&count, 4, "entry count");

  DescriptorDatabase db;
  for (uint32_t i = 0; i < count; ++i) {
    int64_t entry_at = offset;
    DescriptorEntry e;
    read(&e.id, 4, "id");
    uint16_t len;
    read(&len, 2, "room length");
    e.room.resize(len);
    read(e.room.data(), len, "room");
    read(e.centroid.data(), 12, "centroid");
    e.desc.resize(kDescriptorDim);
    read(e.desc.data(), 4 * kDescriptorDim, "descriptor");
    for (float f : e.desc)
      if (!std::isfinite(f)) corrupt(path, entry_at, "non-finite descriptor value");
    db.add(std::move(e));
  }
  char extra;
  in.read(&extra, 1);
  if (in.gcount() != 0) corrupt(path, offset, "trailing bytes after last entry");
  return db;
}

std::vector<Match> query_knn(const DescriptorDatabase& db, const std::vector<float>& desc, int k,
                             int64_t exclude_id) {
  if (static_cast<int>(desc.size()) != kDescriptorDim)
    fail(ErrorKind::dimension, "query descriptor must have " + std::to_string(kDescriptorDim) + " values");
  if (k < 1) fail(ErrorKind::usage, "query_knn: k must be positive");

  std::vector<Match> all;
  all.reserve(db.size());
  for (int i = 0; i < db.size(); ++i) {
    const DescriptorEntry& e = db.entry(i);
    if (exclude_id >= 0 && e.id == static_cast<uint32_t>(exclude_id)) continue;
    double d2 = 0.0;
    for (int j = 0; j < kDescriptorDim; ++j) {
      double d = static_cast<double>(desc[j]) - e.desc[j];
      d2 += d * d;
    }
    all.push_back({d2, i});
  }
  if (all.empty()) fail(ErrorKind::usage, "query_knn: no candidates to search");
  std::sort(all.begin(), all.end(), [&](const Match& a, const Match& b) {
    if (a.sq_dist != b.sq_dist) return a.sq_dist < b.sq_dist;
    return db.entry(a.index).id < db.entry(b.index).id;
  });
  if (static_cast<int>(all.size()) > k) all.resize(k);
  return all;
}

std::string RecallReport::machine_line() const {
  std::ostringstream os;
  for (size_t i = 0; i < ks.size(); ++i) os << recall[i] << ",";
  os << n_queries;
  return os.str();
}

std::string RecallReport::table() const {
  std::ostringstream os;
  os << "  k   recall\n";
  for (size_t i = 0; i < ks.size(); ++i) {
    os << "  " << ks[i];
    for (int pad = static_cast<int>(std::to_string(ks[i]).size()); pad < 3; ++pad) os << ' ';
    os << " " << recall[i] * 100.0 << "%\n";
  }
  os << "  queries: " << n_queries << "\n";
  return os.str();
}

RecallReport evaluate(const DescriptorDatabase& db, const DescriptorDatabase& queries,
                      const std::vector<int>& ks) {
  if (ks.empty()) fail(ErrorKind::usage, "evaluate: no k values");
  for (int k : ks)
    if (k < 1) fail(ErrorKind::usage, "evaluate: k must be positive");
  if (queries.size() == 0) fail(ErrorKind::usage, "evaluate: empty query set");

  int kmax = *std::max_element(ks.begin(), ks.end());
  std::vector<int64_t> hits(ks.size(), 0);
  for (int qi = 0; qi < queries.size(); ++qi) {
    const DescriptorEntry& q = queries.entry(qi);
    if (!db.has_id(q.id))
      fail(ErrorKind::usage, "evaluate: query id " + std::to_string(q.id) + " missing from database");
    auto matches = query_knn(db, q.desc, kmax, q.id);
    // First rank (1-based) at which the right room shows up.
    int first_good = 0;
    for (size_t r = 0; r < matches.size(); ++r)
      if (db.entry(matches[r].index).room == q.room) {
        first_good = static_cast<int>(r) + 1;
        break;
      }
    for (size_t i = 0; i < ks.size(); ++i)
      if (first_good > 0 && first_good <= ks[i]) ++hits[i];
  }

  RecallReport rep;
  rep.ks = ks;
  rep.n_queries = queries.size();
  for (size_t i = 0; i < ks.size(); ++i)
    rep.recall.push_back(static_cast<double>(hits[i]) / queries.size());
  return rep;
}

}  // namespace aegis
