#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "wwm/dataset.hpp"
#include "wwm/rng.hpp"

using namespace wwm;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

Sample make_sample(Rng& rng) {
  Sample s;
  s.csi = TensorF::randn({2, 4, 8, 8}, rng);
  s.pc.resize(32);
  for (auto& p : s.pc)
    p = {float(rng.normal()), float(rng.normal()), float(rng.normal())};
  s.traj = TensorF::randn({4, 3}, rng);
  s.pos2d = {float(rng.normal()), float(rng.normal())};
  s.raw = TensorF::randn({4, 8, 8, 2}, rng);
  s.u6g = TensorF::randn({8, 8, 2}, rng);
  s.los = rng.below(2) == 1;
  return s;
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("container: write/read round trip is bitwise exact") {
  const std::string path = temp_path("wwm_roundtrip.wwmd");
  Rng rng(77);
  std::vector<Sample> samples;
  for (int i = 0; i < 5; ++i) samples.push_back(make_sample(rng));
  write_scenario_file(path, samples);
  auto back = read_scenario_file(path, {.with_raw = true, .with_u6g = true});
  REQUIRE(back.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(back[i].csi.v == samples[i].csi.v);
    CHECK(back[i].csi.shape == samples[i].csi.shape);
    CHECK(back[i].pc == samples[i].pc);
    CHECK(back[i].traj.v == samples[i].traj.v);
    CHECK(back[i].pos2d == samples[i].pos2d);
    CHECK(back[i].raw.v == samples[i].raw.v);
    CHECK(back[i].u6g.v == samples[i].u6g.v);
    CHECK(back[i].los == samples[i].los);
  }
  std::filesystem::remove(path);
}

TEST_CASE("container: selective load skips label channels") {
  const std::string path = temp_path("wwm_selective.wwmd");
  Rng rng(78);
  std::vector<Sample> samples{make_sample(rng), make_sample(rng)};
  write_scenario_file(path, samples);
  auto lean = read_scenario_file(path);  // defaults: no raw, no u6g
  REQUIRE(lean.size() == 2);
  CHECK(lean[0].raw.numel() == 0);
  CHECK(lean[0].u6g.numel() == 0);
  CHECK(lean[0].csi.v == samples[0].csi.v);
  std::filesystem::remove(path);
}

TEST_CASE("container: corrupt magic is rejected") {
  const std::string path = temp_path("wwm_badmagic.wwmd");
  Rng rng(79);
  write_scenario_file(path, {make_sample(rng)});
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('X');
  }
  CHECK_THROWS_WITH_AS(read_scenario_file(path),
                       doctest::Contains("bad magic"), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("container: version mismatch is rejected") {
  const std::string path = temp_path("wwm_badver.wwmd");
  Rng rng(80);
  write_scenario_file(path, {make_sample(rng)});
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    const uint32_t v = 9;
    f.write(reinterpret_cast<const char*>(&v), 4);
  }
  CHECK_THROWS_WITH_AS(read_scenario_file(path),
                       doctest::Contains("version"), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("container: truncation is rejected") {
  const std::string path = temp_path("wwm_trunc.wwmd");
  Rng rng(81);
  write_scenario_file(path, {make_sample(rng), make_sample(rng)});
  auto bytes = slurp(path);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_WITH_AS(read_scenario_file(path, {.with_raw = true, .with_u6g = true}),
                       doctest::Contains("truncated"), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("container: header count matches the iterated record count") {
  const std::string path = temp_path("wwm_count.wwmd");
  Rng rng(82);
  std::vector<Sample> samples;
  for (int i = 0; i < 17; ++i) samples.push_back(make_sample(rng));
  write_scenario_file(path, samples);
  const uint32_t count = io::container_tensor_count(path);
  CHECK(count == 1 + kTensorsPerSample * 17);
  auto recs = io::read_container(path);
  CHECK(recs.size() == count);
  std::filesystem::remove(path);
}

TEST_CASE("container: identical writes produce identical bytes") {
  const std::string p1 = temp_path("wwm_det1.wwmd");
  const std::string p2 = temp_path("wwm_det2.wwmd");
  Rng rng(83);
  std::vector<Sample> samples{make_sample(rng), make_sample(rng)};
  write_scenario_file(p1, samples);
  write_scenario_file(p2, samples);
  CHECK(slurp(p1) == slurp(p2));
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}
