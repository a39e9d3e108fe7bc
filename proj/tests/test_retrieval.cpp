#include <algorithm>
#include <string>
#include <vector>

#include "aegis/retrieval.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace aegis;
using testutil::TempDir;
using testutil::read_bytes;
using testutil::write_bytes;

namespace {

DescriptorEntry entry(uint32_t id, const std::string& room, std::vector<float> head) {
  DescriptorEntry e;
  e.id = id;
  e.room = room;
  e.desc.assign(kDescriptorDim, 0.f);
  std::copy(head.begin(), head.end(), e.desc.begin());
  return e;
}

std::vector<float> random_desc(Rng& rng) {
  std::vector<float> d(kDescriptorDim);
  for (auto& v : d) v = static_cast<float>(rng.normal());
  return d;
}

double sq_dist(const std::vector<float>& a, const std::vector<float>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

TEST_CASE("query_knn agrees with a sorted linear scan") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 2 + rng.uniform_int(30);
    DescriptorDatabase db;
    std::vector<std::vector<float>> raw;
    for (int i = 0; i < n; ++i) {
      auto e = entry(static_cast<uint32_t>(i), "room" + std::to_string(i % 5), {});
      e.desc = random_desc(rng);
      raw.push_back(e.desc);
      db.add(std::move(e));
    }
    auto q = random_desc(rng);
    int k = 1 + rng.uniform_int(n + 2);  // deliberately allows k > n
    int64_t exclude = rng.uniform_int(2) ? rng.uniform_int(n) : -1;

    std::vector<std::pair<double, int>> want;
    for (int i = 0; i < n; ++i) {
      if (exclude >= 0 && i == exclude) continue;
      want.push_back({sq_dist(q, raw[i]), i});
    }
    std::sort(want.begin(), want.end());
    if (static_cast<int>(want.size()) > k) want.resize(k);

    auto got = query_knn(db, q, k, exclude);
    REQUIRE(got.size() == want.size());
    for (size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].index == want[i].second);
      CHECK(got[i].sq_dist == doctest::Approx(want[i].first).epsilon(1e-9));
    }
  }
}

TEST_CASE("distance ties break toward the lower id") {
  DescriptorDatabase db;
  db.add(entry(7, "a", {1.f}));
  db.add(entry(3, "b", {1.f}));
  db.add(entry(5, "c", {1.f}));
  auto got = query_knn(db, std::vector<float>(kDescriptorDim, 0.f), 3);
  REQUIRE(got.size() == 3);
  CHECK(db.entry(got[0].index).id == 3);
  CHECK(db.entry(got[1].index).id == 5);
  CHECK(db.entry(got[2].index).id == 7);
}

TEST_CASE("recall is computed leave-self-out and grows with k") {
  // Two rooms, descriptors arranged so room x queries rank: own copy (excluded),
  // a room y imposter, then the true room x neighbor.
  DescriptorDatabase db;
  db.add(entry(0, "x", {0.0f}));
  db.add(entry(1, "x", {0.3f}));
  db.add(entry(2, "y", {0.1f}));
  db.add(entry(3, "y", {1.0f}));

  DescriptorDatabase queries;
  queries.add(entry(0, "x", {0.0f}));

  auto report = evaluate(db, queries, {1, 2, 3});
  REQUIRE(report.ks == std::vector<int>{1, 2, 3});
  CHECK(report.n_queries == 1);
  CHECK(report.recall[0] == 0.0);  // nearest after exclusion is the y imposter
  CHECK(report.recall[1] == 1.0);
  CHECK(report.recall[2] == 1.0);
  CHECK(report.machine_line() == "0,1,1,1");

  // Monotone by construction on a larger random instance.
  Rng rng(5);
  DescriptorDatabase big;
  for (int i = 0; i < 40; ++i) {
    auto e = entry(static_cast<uint32_t>(i), "room" + std::to_string(i % 8), {});
    e.desc = random_desc(rng);
    big.add(std::move(e));
  }
  auto rep = evaluate(big, big, {1, 2, 3, 5, 10});
  for (size_t i = 1; i < rep.recall.size(); ++i) CHECK(rep.recall[i] >= rep.recall[i - 1]);
}

TEST_CASE("evaluation rejects queries missing from the database") {
  DescriptorDatabase db;
  db.add(entry(0, "x", {0.0f}));
  db.add(entry(1, "x", {1.0f}));
  DescriptorDatabase queries;
  queries.add(entry(9, "x", {0.0f}));
  try {
    evaluate(db, queries, {1});
    FAIL("missing query id was accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::usage);
  }

  // Excluding the only entry leaves nothing to rank.
  DescriptorDatabase solo;
  solo.add(entry(0, "x", {0.0f}));
  CHECK_THROWS_AS(evaluate(solo, solo, {1}), Error);
}

TEST_CASE("descriptor databases round trip bit for bit") {
  TempDir tmp;
  Rng rng(8);
  DescriptorDatabase db;
  for (int i = 0; i < 7; ++i) {
    auto e = entry(static_cast<uint32_t>(i * 3), "room" + std::to_string(i), {});
    e.desc = random_desc(rng);
    e.centroid = {static_cast<float>(rng.normal()), static_cast<float>(rng.normal()),
                  static_cast<float>(rng.normal())};
    db.add(std::move(e));
  }
  auto path = tmp.file("db.aegd");
  db.save(path);
  auto loaded = DescriptorDatabase::load(path);
  REQUIRE(loaded.size() == db.size());
  for (int i = 0; i < db.size(); ++i) {
    CHECK(loaded.entry(i).id == db.entry(i).id);
    CHECK(loaded.entry(i).room == db.entry(i).room);
    CHECK(loaded.entry(i).centroid == db.entry(i).centroid);
    CHECK(loaded.entry(i).desc == db.entry(i).desc);
  }

  auto path2 = tmp.file("db2.aegd");
  loaded.save(path2);
  CHECK(read_bytes(path) == read_bytes(path2));
}

TEST_CASE("corrupt descriptor files fail closed") {
  TempDir tmp;
  DescriptorDatabase db;
  db.add(entry(0, "x", {0.5f}));
  auto path = tmp.file("db.aegd");
  db.save(path);

  auto bytes = read_bytes(path);
  auto bad = bytes;
  bad[1] = 'X';
  write_bytes(path, bad);
  CHECK_THROWS_AS(DescriptorDatabase::load(path), Error);

  auto truncated = bytes;
  truncated.resize(truncated.size() - 5);
  write_bytes(path, truncated);
  try {
    DescriptorDatabase::load(path);
    FAIL("truncated file was accepted");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::format);
    CHECK(std::string(e.what()).find("byte") != std::string::npos);
  }

  auto trailing = bytes;
  trailing.push_back(0);
  write_bytes(path, trailing);
  CHECK_THROWS_AS(DescriptorDatabase::load(path), Error);
}
