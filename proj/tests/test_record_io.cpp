#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "planpaint/record_io.hpp"
#include "planpaint/rng.hpp"

namespace pp = planpaint;

namespace {

pp::Record sample_record(uint64_t seed) {
  pp::Rng rng(seed);
  std::vector<float> f(24);
  for (float& x : f) x = static_cast<float>(rng.next_normal());
  std::vector<int32_t> i(7);
  for (int32_t& x : i) x = static_cast<int32_t>(rng.next_below(1000));
  pp::Record r;
  r.arrays.push_back(pp::ArrayData::make_f32("weights", {4, 6}, f));
  r.arrays.push_back(pp::ArrayData::make_i32("ids", {7}, i));
  return r;
}

}  // namespace

TEST_SUITE("unit") {
  TEST_CASE("records round-trip losslessly") {
    const std::string path = "records_tmp.bin";
    std::vector<pp::Record> records;
    for (uint64_t s = 0; s < 5; ++s) records.push_back(sample_record(s));
    pp::write_records(path, records);
    const std::vector<pp::Record> back = pp::read_records(path);
    REQUIRE(back.size() == records.size());
    for (size_t i = 0; i < records.size(); ++i) {
      const pp::ArrayData& w = back[i].get("weights");
      CHECK(w.dtype == "f32");
      CHECK(w.shape == std::vector<int64_t>{4, 6});
      CHECK(w.f32 == records[i].get("weights").f32);  // bit-exact floats
      CHECK(back[i].get("ids").i32 == records[i].get("ids").i32);
      CHECK(back[i].has("weights"));
      CHECK(!back[i].has("nonexistent"));
    }
    std::filesystem::remove(path);
  }

  TEST_CASE("corruption is detected by the checksum") {
    const std::string path = "records_corrupt_tmp.bin";
    pp::write_records(path, {sample_record(1)});
    // Flip one payload byte near the middle of the file.
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(0, std::ios::end);
    const auto size = static_cast<long>(f.tellg());
    REQUIRE(size > 40);
    f.seekp(size / 2);
    char b;
    f.seekg(size / 2);
    f.read(&b, 1);
    b = static_cast<char>(b ^ 0x5a);
    f.seekp(size / 2);
    f.write(&b, 1);
    f.close();
    CHECK_THROWS_AS(pp::read_records(path), pp::Error);
    std::filesystem::remove(path);
  }

  TEST_CASE("truncated files are rejected") {
    const std::string path = "records_trunc_tmp.bin";
    pp::write_records(path, {sample_record(2)});
    const auto size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, size - 3);
    CHECK_THROWS_AS(pp::read_records(path), pp::Error);
    std::filesystem::remove(path);
  }

  TEST_CASE("rng is stateless, splittable and reproducible") {
    pp::Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    // Distinct purposes decorrelate streams derived from one root.
    CHECK(pp::derive_seed(7, "noise", 1, 2) !=
          pp::derive_seed(7, "noise", 2, 1));
    CHECK(pp::derive_seed(7, "noise") != pp::derive_seed(7, "shuffle"));
    CHECK(pp::derive_seed(7, "noise") == pp::derive_seed(7, "noise"));

    // Box-Muller normals have sane first moments.
    pp::Rng n(123);
    double sum = 0.0, sum2 = 0.0;
    const int N = 20000;
    for (int i = 0; i < N; ++i) {
      const double x = n.next_normal();
      sum += x;
      sum2 += x * x;
    }
    CHECK(std::abs(sum / N) < 0.03);
    CHECK(std::abs(sum2 / N - 1.0) < 0.05);

    // next_below covers the range without bias at the edges.
    pp::Rng u(9);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 7000; ++i) ++counts[u.next_below(7)];
    for (const int c : counts) CHECK(c > 800);
  }
}
