#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "pat/rng.hpp"

using namespace pat;

TEST_CASE("rng streams are reproducible per key") {
  Rng a(42, 7, "phantom");
  Rng b(42, 7, "phantom");
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("rng keys separate streams") {
  Rng base(42, 7, "phantom");
  Rng other_seed(43, 7, "phantom");
  Rng other_index(42, 8, "phantom");
  Rng other_tag(42, 7, "noise");
  uint64_t v = base.next_u64();
  CHECK(v != other_seed.next_u64());
  CHECK(v != other_index.next_u64());
  CHECK(v != other_tag.next_u64());
}

TEST_CASE("rng split matches direct construction and costs no draws") {
  Rng parent(9, 1, "root");
  Rng child = parent.split(3, "leaf");
  Rng parent2(9, 1, "root");
  CHECK(parent.next_u64() == parent2.next_u64());

  // Draw order around the split must not matter.
  Rng parent3(9, 1, "root");
  parent3.next_u64();
  Rng child2 = parent3.split(3, "leaf");
  for (int i = 0; i < 10; ++i) CHECK(child.next_u64() == child2.next_u64());
}

TEST_CASE("uniform stays in [0,1) and fills the range") {
  Rng rng(1);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 100000; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
  }
  CHECK(lo < 0.001);
  CHECK(hi > 0.999);
}

TEST_CASE("uniform(lo,hi) respects the bounds") {
  Rng rng(2);
  for (int i = 0; i < 10000; ++i) {
    double u = rng.uniform(-3.0, 5.0);
    CHECK(u >= -3.0);
    CHECK(u <= 5.0);
  }
}

TEST_CASE("uniform_int is inclusive on both endpoints") {
  Rng rng(3);
  std::set<int64_t> seen;
  for (int i = 0; i < 2000; ++i) {
    int64_t v = rng.uniform_int(2, 6);
    CHECK(v >= 2);
    CHECK(v <= 6);
    seen.insert(v);
  }
  CHECK(seen.size() == 5);

  for (int i = 0; i < 100; ++i) CHECK(rng.uniform_int(4, 4) == 4);
}

TEST_CASE("normal moments over a large sample") {
  Rng rng(4);
  int n = 200000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = rng.normal();
    sum += x;
    sum2 += x * x;
  }
  double mean = sum / n;
  double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);

  Rng rng2(4);
  double y = rng2.normal(10.0, 0.5);
  Rng rng3(4);
  CHECK(y == doctest::Approx(10.0 + 0.5 * rng3.normal()).epsilon(1e-15));
}
