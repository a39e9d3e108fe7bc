#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "aegis/metric.hpp"
#include "doctest.h"

using namespace aegis;

namespace {

PlaceRecord rec(uint32_t id, const std::string& room, double x, double y) {
  PlaceRecord r;
  r.id = id;
  r.room = room;
  r.centroid = {x, y, 0.0};
  return r;
}

// Ten rooms on a line, four keyframes each in a 1.2 m cluster, so every
// same-room pair is positive and every cross-room pair is at least 7 m out.
std::vector<PlaceRecord> grid_records() {
  std::vector<PlaceRecord> rs;
  uint32_t id = 0;
  for (int r = 0; r < 10; ++r)
    for (int k = 0; k < 4; ++k)
      rs.push_back(rec(id++, "room" + std::to_string(r), 10.0 * r + 0.4 * k, 0.0));
  return rs;
}

double ref_distance(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// Plain loop reference for the loss: max over pairs of both hinge terms.
double ref_loss(const Tensor& a, const std::vector<Tensor>& pos, const std::vector<Tensor>& neg,
                const Tensor& star, double alpha, double beta) {
  double h1 = 0.0, h2 = 0.0;
  for (const auto& p : pos) {
    for (const auto& n : neg)
      h1 = std::max(h1, alpha + ref_distance(a, p) - ref_distance(a, n));
    for (const auto& n : neg)
      h2 = std::max(h2, beta + ref_distance(a, p) - ref_distance(n, star));
  }
  return h1 + h2;
}

Tensor unit_desc(int hot, double scale = 1.0) {
  Tensor t({1, 8});
  t.v[hot] = scale;
  return t;
}

Tensor random_desc(Rng& rng) {
  Tensor t({1, 8});
  double norm = 0.0;
  for (auto& e : t.v) e = rng.normal(), norm += e * e;
  norm = std::sqrt(norm);
  for (auto& e : t.v) e /= norm;
  return t;
}

}  // namespace

TEST_CASE("the positive and negative rules leave a dead band") {
  MarginConfig m;
  auto a = rec(0, "kitchen", 0, 0);

  CHECK(is_positive(a, rec(1, "kitchen", 1.9, 0), m));
  CHECK_FALSE(is_negative(a, rec(1, "kitchen", 1.9, 0), m));

  // Same room at exactly pos_radius is already outside the positive set.
  CHECK_FALSE(is_positive(a, rec(2, "kitchen", 2.0, 0), m));
  CHECK_FALSE(is_negative(a, rec(2, "kitchen", 2.0, 0), m));

  // The band ends at neg_radius, inclusive.
  CHECK_FALSE(is_positive(a, rec(3, "kitchen", 3.99, 0), m));
  CHECK_FALSE(is_negative(a, rec(3, "kitchen", 3.99, 0), m));
  CHECK(is_negative(a, rec(4, "kitchen", 4.0, 0), m));

  // A different room is negative no matter how close.
  CHECK(is_negative(a, rec(5, "hall", 0.1, 0), m));
  CHECK_FALSE(is_positive(a, rec(5, "hall", 0.1, 0), m));
}

TEST_CASE("mined tuples respect the membership rules") {
  auto records = grid_records();
  MarginConfig m;

  for (int anchor = 0; anchor < 40; anchor += 3) {
    auto t = mine_tuple(records, anchor, 2, 6, m, 1000 + anchor);
    CHECK(t.anchor == anchor);
    REQUIRE(t.positives.size() == 2);
    REQUIRE(t.negatives.size() == 6);
    REQUIRE(t.distractor >= 0);

    std::set<int> seen = {anchor};
    for (int p : t.positives) {
      CHECK(is_positive(records[anchor], records[p], m));
      CHECK(seen.insert(p).second);  // no repeats anywhere in the tuple
    }
    for (int n : t.negatives) {
      CHECK(is_negative(records[anchor], records[n], m));
      CHECK(seen.insert(n).second);
    }
    CHECK(seen.insert(t.distractor).second);
    for (int other : seen)
      if (other != t.distractor) CHECK(records[other].room != records[t.distractor].room);
  }
}

TEST_CASE("records in the band are never mined") {
  // One room with a positive cluster plus band members at 3 m, and two more
  // rooms supplying negatives and the distractor.
  std::vector<PlaceRecord> rs;
  rs.push_back(rec(0, "a", 0, 0));
  rs.push_back(rec(1, "a", 1.0, 0));
  rs.push_back(rec(2, "a", 3.0, 0));    // band: same room, between the radii
  rs.push_back(rec(3, "a", 3.5, 0));    // band
  rs.push_back(rec(4, "a", 20.0, 0));   // same room but far: negative
  for (int k = 0; k < 4; ++k) rs.push_back(rec(5 + k, "b", 100.0 + k, 0));
  for (int k = 0; k < 4; ++k) rs.push_back(rec(9 + k, "c", 200.0 + k, 0));

  MarginConfig m;
  for (uint64_t seed = 0; seed < 50; ++seed) {
    auto t = mine_tuple(rs, 0, 1, 3, m, seed);
    CHECK(t.positives[0] == 1);  // the only valid positive
    for (int n : t.negatives) {
      CHECK(n != 2);
      CHECK(n != 3);
    }
    CHECK(t.distractor != 2);
    CHECK(t.distractor != 3);
  }
}

TEST_CASE("mining failures name the anchor") {
  auto records = grid_records();
  MarginConfig m;
  try {
    mine_tuple(records, 5, 4, 6, m, 1);  // only 3 positives exist per room
    FAIL("mining accepted an infeasible request");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::mining);
    CHECK(std::string(e.what()).find("5") != std::string::npos);
  }
}

TEST_CASE("mining is deterministic in the seed") {
  auto records = grid_records();
  MarginConfig m;
  auto t1 = mine_tuple(records, 12, 2, 6, m, 77);
  auto t2 = mine_tuple(records, 12, 2, 6, m, 77);
  CHECK(t1.positives == t2.positives);
  CHECK(t1.negatives == t2.negatives);
  CHECK(t1.distractor == t2.distractor);
}

TEST_CASE("descriptor distance is euclidean") {
  Graph g;
  Tensor a({1, 2}, {0.0, 0.0});
  Tensor b({1, 2}, {3.0, 4.0});
  auto* d = descriptor_distance(g, g.input(a), g.input(b));
  CHECK(d->val.scalar_value() == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("equal distances collapse the loss to exactly the two margins") {
  MarginConfig m;
  // Unit one-hot descriptors: every pairwise distance is sqrt(2).
  Tensor a = unit_desc(0);
  std::vector<Tensor> pos = {unit_desc(1), unit_desc(2)};
  std::vector<Tensor> neg = {unit_desc(3), unit_desc(4), unit_desc(5)};
  Tensor star = unit_desc(6);

  double loss = lazy_quadruplet_loss_value(a, pos, neg, star, m.alpha, m.beta);
  CHECK(loss == m.alpha + m.beta);  // exact, not approximate
}

TEST_CASE("well separated tuples cost nothing") {
  Tensor a = unit_desc(0);
  std::vector<Tensor> pos = {unit_desc(0), unit_desc(0)};  // distance zero
  std::vector<Tensor> neg = {unit_desc(1, 10.0), unit_desc(2, 10.0)};
  Tensor star = unit_desc(3, -10.0);
  CHECK(lazy_quadruplet_loss_value(a, pos, neg, star, 0.5, 0.2) == 0.0);
}

TEST_CASE("the loss matches a plain loop over pairs") {
  Rng rng(31);
  for (int trial = 0; trial < 25; ++trial) {
    Tensor a = random_desc(rng);
    std::vector<Tensor> pos = {random_desc(rng), random_desc(rng)};
    std::vector<Tensor> neg;
    for (int k = 0; k < 4; ++k) neg.push_back(random_desc(rng));
    Tensor star = random_desc(rng);

    double want = ref_loss(a, pos, neg, star, 0.5, 0.2);
    double got = lazy_quadruplet_loss_value(a, pos, neg, star, 0.5, 0.2);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));

    // Member order inside the candidate lists is irrelevant down to the bit.
    std::swap(pos[0], pos[1]);
    std::reverse(neg.begin(), neg.end());
    CHECK(lazy_quadruplet_loss_value(a, pos, neg, star, 0.5, 0.2) == got);
  }
}

TEST_CASE("graph and value forms of the loss agree") {
  Rng rng(32);
  Tensor a = random_desc(rng);
  std::vector<Tensor> pos = {random_desc(rng), random_desc(rng)};
  std::vector<Tensor> neg = {random_desc(rng), random_desc(rng), random_desc(rng)};
  Tensor star = random_desc(rng);

  Graph g;
  std::vector<Node*> pn, nn;
  auto* an = g.input(a, true);
  for (auto& p : pos) pn.push_back(g.input(p, true));
  for (auto& n : neg) nn.push_back(g.input(n, true));
  auto* loss = lazy_quadruplet_loss(g, an, pn, nn, g.input(star, true), 0.5, 0.2);
  CHECK(loss->val.scalar_value() ==
        doctest::Approx(lazy_quadruplet_loss_value(a, pos, neg, star, 0.5, 0.2)).epsilon(1e-12));

  // An active hinge pulls on the anchor through d(anchor, positive).
  g.backward(loss);
  if (loss->val.scalar_value() > 0.0) {
    REQUIRE(an->has_grad());
    double mag = 0.0;
    for (double v : an->grad.v) mag += std::abs(v);
    CHECK(mag > 0.0);
  }
}
