#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "aegis/optim.hpp"
#include "aegis/params.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace aegis;
using testutil::TempDir;
using testutil::read_bytes;
using testutil::write_bytes;

namespace {

void put_u32(std::vector<char>& b, uint32_t v) {
  char raw[4];
  std::memcpy(raw, &v, 4);
  b.insert(b.end(), raw, raw + 4);
}

void put_f32(std::vector<char>& b, float v) {
  char raw[4];
  std::memcpy(raw, &v, 4);
  b.insert(b.end(), raw, raw + 4);
}

void put_entry(std::vector<char>& b, const std::string& name, const std::vector<int>& dims,
               const std::vector<float>& vals) {
  uint16_t len = static_cast<uint16_t>(name.size());
  char raw[2];
  std::memcpy(raw, &len, 2);
  b.insert(b.end(), raw, raw + 2);
  b.insert(b.end(), name.begin(), name.end());
  b.push_back(static_cast<char>(dims.size()));
  for (int d : dims) put_u32(b, static_cast<uint32_t>(d));
  for (float v : vals) put_f32(b, v);
}

std::vector<char> aegw_file(int count) {
  std::vector<char> b = {'A', 'E', 'G', 'W'};
  put_u32(b, 1);
  put_u32(b, static_cast<uint32_t>(count));
  return b;
}

ParamStore two_param_store() {
  ParamStore s;
  s.create("w", tensor2d({{1.5, -2.25}, {0.5, 3.0}}));
  s.create("b", Tensor({2}, {0.125, -1.0}));
  return s;
}

}  // namespace

TEST_CASE("checkpoints round trip bit for bit") {
  TempDir tmp;
  auto path = tmp.file("w.aegw");

  ParamStore a = two_param_store();
  a.get("w").value[0] = 1.0 / 3.0;  // not representable in f32
  a.save(path);

  // save() snaps memory to the f32 the file holds.
  CHECK(a.get("w").value[0] == static_cast<double>(static_cast<float>(1.0 / 3.0)));

  ParamStore b = two_param_store();
  b.load(path);
  for (auto* p : a.all()) {
    const auto& q = b.get(p->name);
    CHECK(q.value.shape == p->value.shape);
    CHECK(q.value.v == p->value.v);
  }

  // A second save of the loaded store produces identical bytes.
  auto path2 = tmp.file("w2.aegw");
  b.save(path2);
  CHECK(read_bytes(path) == read_bytes(path2));
}

TEST_CASE("corrupt checkpoints fail closed with a byte offset") {
  TempDir tmp;
  auto path = tmp.file("bad.aegw");

  auto expect_load_failure = [&](const std::vector<char>& bytes, const char* needle) {
    write_bytes(path, bytes);
    ParamStore s = two_param_store();
    try {
      s.load(path);
      FAIL("load accepted a corrupt file: ", needle);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::format);
      INFO("message: ", e.what());
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
      CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }
  };

  auto good = aegw_file(2);
  put_entry(good, "w", {2, 2}, {1.5f, -2.25f, 0.5f, 3.0f});
  put_entry(good, "b", {2}, {0.125f, -1.0f});
  {
    write_bytes(path, good);
    ParamStore s = two_param_store();
    s.load(path);  // the baseline file itself is fine
    CHECK(s.get("w").value.at(1, 1) == 3.0);
  }

  auto bad_magic = good;
  bad_magic[0] = 'X';
  expect_load_failure(bad_magic, "magic");

  auto truncated = good;
  truncated.resize(truncated.size() - 3);
  expect_load_failure(truncated, "truncated");

  auto trailing = good;
  trailing.push_back(0);
  expect_load_failure(trailing, "trailing");

  auto unknown = aegw_file(2);
  put_entry(unknown, "nope", {2, 2}, {1, 2, 3, 4});
  put_entry(unknown, "b", {2}, {0.125f, -1.0f});
  expect_load_failure(unknown, "unknown parameter");

  auto dup = aegw_file(2);
  put_entry(dup, "b", {2}, {0.125f, -1.0f});
  put_entry(dup, "b", {2}, {0.125f, -1.0f});
  expect_load_failure(dup, "duplicate");

  auto wrong_shape = aegw_file(2);
  put_entry(wrong_shape, "w", {4, 1}, {1, 2, 3, 4});
  put_entry(wrong_shape, "b", {2}, {0.125f, -1.0f});
  expect_load_failure(wrong_shape, "shape mismatch");

  auto non_finite = aegw_file(2);
  put_entry(non_finite, "w", {2, 2}, {1.0f, std::numeric_limits<float>::infinity(), 3.0f, 4.0f});
  put_entry(non_finite, "b", {2}, {0.125f, -1.0f});
  expect_load_failure(non_finite, "non-finite");

  // Missing parameter: count says one entry, the store expects two.
  auto missing = aegw_file(1);
  put_entry(missing, "w", {2, 2}, {1.5f, -2.25f, 0.5f, 3.0f});
  write_bytes(path, missing);
  ParamStore s = two_param_store();
  CHECK_THROWS_AS(s.load(path), Error);
}

TEST_CASE("he_uniform stays inside its fan-in bound") {
  Rng rng(6);
  auto t = he_uniform({64, 32}, 32, rng);
  double bound = std::sqrt(6.0 / 32.0);
  double lo = 0.0, hi = 0.0;
  for (double v : t.v) {
    CHECK(std::abs(v) <= bound);
    lo = std::min(lo, v), hi = std::max(hi, v);
  }
  // Both tails are actually reached.
  CHECK(lo < -0.5 * bound);
  CHECK(hi > 0.5 * bound);

  Rng rng2(6);
  CHECK(he_uniform({64, 32}, 32, rng2).v == t.v);
}

TEST_CASE("sgd with momentum and decoupled decay steps by hand") {
  ParamStore s;
  auto& p = s.create("p", Tensor::scalar(1.0));
  SgdOptimizer opt({&p}, 0.1, 0.5, 0.01, 0.5);

  p.grad[0] = 2.0;
  opt.step();
  // velocity = 2, value = (1 - 0.1*0.01) - 0.1*2
  double v1 = 1.0 * (1.0 - 0.1 * 0.01) - 0.1 * 2.0;
  CHECK(p.value[0] == doctest::Approx(v1).epsilon(1e-12));

  p.grad[0] = 1.0;
  opt.step();
  // velocity = 0.5*2 + 1 = 2, decay applies to the pre-step value
  double v2 = v1 * (1.0 - 0.1 * 0.01) - 0.1 * 2.0;
  CHECK(p.value[0] == doctest::Approx(v2).epsilon(1e-12));

  opt.end_epoch();
  CHECK(opt.lr() == doctest::Approx(0.05));
}

TEST_CASE("adam's first step moves by roughly the learning rate") {
  ParamStore s;
  auto& p = s.create("p", Tensor::scalar(0.0));
  AdamOptimizer opt({&p}, 1e-3, 0.9, 0.999, 1e-8, 0.0, 1.0);
  p.grad[0] = 3.5;
  opt.step();
  // Bias correction makes the first update lr * g/|g| regardless of scale.
  CHECK(p.value[0] == doctest::Approx(-1e-3).epsilon(1e-6));
}

TEST_CASE("frozen parameters are never stepped") {
  ParamStore s;
  auto& p = s.create("stat", Tensor::scalar(5.0), false);
  SgdOptimizer sgd({&p}, 0.1, 0.0, 0.5, 1.0);
  AdamOptimizer adam({&p}, 0.1, 0.9, 0.999, 1e-8, 0.5, 1.0);
  p.grad[0] = 100.0;
  sgd.step();
  adam.step();
  CHECK(p.value[0] == 5.0);
}

TEST_CASE("duplicate registration is rejected") {
  ParamStore s;
  s.create("p", Tensor::scalar(1.0));
  CHECK_THROWS_AS(s.create("p", Tensor::scalar(2.0)), Error);
  CHECK_THROWS_AS(s.get("missing"), Error);
}

TEST_CASE("with_prefix selects by name") {
  ParamStore s;
  s.create("enc.w", Tensor::scalar(1.0));
  s.create("enc.b", Tensor::scalar(1.0));
  s.create("dec.w", Tensor::scalar(1.0));
  CHECK(s.with_prefix("enc.").size() == 2);
  CHECK(s.with_prefix("dec.").size() == 1);
  CHECK(s.with_prefix("emb.").empty());
}
