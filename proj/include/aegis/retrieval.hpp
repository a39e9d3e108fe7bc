#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aegis/geometry.hpp"
#include "aegis/tensor.hpp"

namespace aegis {

inline constexpr int kDescriptorDim = 256;

struct DescriptorEntry {
  uint32_t id = 0;
  std::string room;
  Vec3f centroid{0.f, 0.f, 0.f};
  std::vector<float> desc;  // kDescriptorDim values
};

// Flat descriptor index with exact search.
class DescriptorDatabase {
 public:
  void add(DescriptorEntry e);
  int size() const { return static_cast<int>(entries_.size()); }
  const DescriptorEntry& entry(int i) const { return entries_[i]; }
  const std::vector<DescriptorEntry>& entries() const { return entries_; }
  bool has_id(uint32_t id) const;

  void save(const std::string& path) const;
  static DescriptorDatabase load(const std::string& path);

 private:
  std::vector<DescriptorEntry> entries_;
};

struct Match {
  double sq_dist = 0.0;
  int index = -1;  // row in the database
};

// Exact k nearest entries by squared L2, ordered by (distance, id). Entries
// whose id equals exclude_id are skipped; pass a value not in the database
// to keep everything.
std::vector<Match> query_knn(const DescriptorDatabase& db, const std::vector<float>& desc, int k,
                             int64_t exclude_id = -1);

struct RecallReport {
  std::vector<int> ks;
  std::vector<double> recall;  // aligned with ks
  int n_queries = 0;

  std::string machine_line() const;  // r@k values then n_queries, comma separated
  std::string table() const;
};

// Leave-self-out place recognition: each query entry is looked up in the
// database with its own id excluded, and counts as a hit at k when any of
// the top k belongs to the same room. Every query id must be present in the
// database, and excluding a query must leave at least one candidate.
RecallReport evaluate(const DescriptorDatabase& db, const DescriptorDatabase& queries,
                      const std::vector<int>& ks);

}  // namespace aegis
