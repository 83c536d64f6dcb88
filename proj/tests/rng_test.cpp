#include <set>
#include <vector>

#include "doctest.h"
#include "tsc/rng.hpp"

using namespace tsc;

TEST_SUITE("rng") {

TEST_CASE("fnv1a64 matches the published test vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("splitmix64 matches the reference sequence from seed 0") {
  CHECK(splitmix64(0) == 0xe220a8397b1dcdafULL);
}

TEST_CASE("identical seeds reproduce identical draws") {
  RngStream a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds diverge") {
  RngStream a(1), b(2);
  int same = 0;
  for (int i = 0; i < 64; ++i)
    if (a.next_u64() == b.next_u64()) ++same;
  CHECK(same == 0);
}

TEST_CASE("substreams are deterministic functions of root seed and name") {
  const RngStream root(7);
  RngStream s1 = root.substream("simulation");
  RngStream s2 = root.substream("simulation");
  RngStream other = root.substream("exploration");
  CHECK(s1.seed() == s2.seed());
  CHECK(s1.seed() != other.seed());
  CHECK(s1.next_u64() == s2.next_u64());
  CHECK(RngStream(7, "simulation").seed() == s1.seed());
}

TEST_CASE("substreams of substreams stay distinct") {
  const RngStream root(3);
  std::set<std::uint64_t> seeds;
  for (const char* a : {"sim", "explore", "estimate"}) {
    const RngStream s = root.substream(a);
    seeds.insert(s.seed());
    for (const char* b : {"x", "y"}) seeds.insert(s.substream(b).seed());
  }
  CHECK(seeds.size() == 9);
}

TEST_CASE("uniform01 stays in [0, 1)") {
  RngStream rng(11);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("uniform_int covers both inclusive endpoints and nothing else") {
  RngStream rng(13);
  std::set<int> seen;
  for (int i = 0; i < 2000; ++i) {
    const int v = rng.uniform_int(-2, 3);
    CHECK(v >= -2);
    CHECK(v <= 3);
    seen.insert(v);
  }
  CHECK(seen.size() == 6);
  CHECK(rng.uniform_int(5, 5) == 5);
}

TEST_CASE("the engine is named so manifests can pin it") {
  CHECK(RngStream::algorithm == "mt19937_64");
}

}  // TEST_SUITE
