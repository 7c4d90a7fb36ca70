#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>

#include "doctest.h"
#include "fp/ckpt.hpp"
#include "fp/util.hpp"

using namespace fp;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const char* tag) {
  std::string d = cat("/tmp/fp_ckpt_", tag, "_", ::getpid());
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

Checkpoint sample_state(uint64_t seed) {
  Checkpoint c;
  c.bb.preset = "mlp-4x64";
  c.bb.input_shape = {12};
  c.bb.classes = 5;
  c.bb.atoms = make_preset_atoms("mlp-4x64", {12}, derive_seed(seed, Stream::ParamInit));
  install_modules(c.bb, {{0, 1}, {2, 3}}, derive_seed(seed, Stream::AuxInit));
  c.bb.module(1).frozen = true;
  c.round = 17;
  c.stage = 2;
  c.stage_start = 9;
  c.finished = false;
  c.schedule.alpha = 0.7;
  c.schedule.epsilon = 1.0 / 3.0;
  c.schedule.mean_dstar = 0.4761904761904762;
  c.schedule.ref_clean = 0.875;
  c.schedule.ref_adv = 5e-324;  // smallest denormal still round-trips
  c.schedule.delta = 0.015625;
  c.schedule.has_reference = true;
  return c;
}

std::vector<Tensor> all_tensors(Backbone& bb) {
  std::vector<Tensor> out;
  for (Atom& a : bb.atoms)
    for (const Tensor& p : a.params()) out.push_back(p);
  for (ModuleSpec& m : bb.modules) {
    out.push_back(m.aux.W);
    out.push_back(m.aux.b);
  }
  return out;
}

}  // namespace

TEST_CASE("checkpoint round trip is bitwise") {
  std::string dir = fresh_dir("rt");
  Checkpoint c = sample_state(3);
  CHECK_FALSE(checkpoint_exists(dir));
  save_checkpoint(dir, c);
  CHECK(checkpoint_exists(dir));

  Checkpoint back = load_checkpoint(dir);
  CHECK(back.round == c.round);
  CHECK(back.stage == c.stage);
  CHECK(back.stage_start == c.stage_start);
  CHECK(back.finished == c.finished);
  CHECK(back.schedule.alpha == c.schedule.alpha);
  CHECK(back.schedule.epsilon == c.schedule.epsilon);
  CHECK(back.schedule.mean_dstar == c.schedule.mean_dstar);
  CHECK(back.schedule.ref_clean == c.schedule.ref_clean);
  CHECK(back.schedule.ref_adv == c.schedule.ref_adv);
  CHECK(back.schedule.delta == c.schedule.delta);
  CHECK(back.schedule.has_reference == c.schedule.has_reference);
  CHECK(back.bb.preset == c.bb.preset);
  CHECK(back.bb.input_shape == c.bb.input_shape);
  CHECK(back.bb.classes == c.bb.classes);
  REQUIRE(back.bb.M() == 2);
  CHECK(back.bb.module(1).frozen);
  CHECK_FALSE(back.bb.module(2).frozen);
  CHECK(back.bb.module(1).atom_lo == 0);
  CHECK(back.bb.module(2).atom_lo == 2);
  CHECK(back.bb.module(2).atom_hi == 3);

  auto got = all_tensors(back.bb);
  auto want = all_tensors(c.bb);
  REQUIRE(got.size() == want.size());
  for (size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i].shape() == want[i].shape());
    CHECK(got[i].values() == want[i].values());
  }
}

TEST_CASE("saving twice overwrites cleanly") {
  std::string dir = fresh_dir("ow");
  Checkpoint a = sample_state(3);
  save_checkpoint(dir, a);
  Checkpoint b = sample_state(4);
  b.round = 99;
  b.finished = true;
  save_checkpoint(dir, b);
  Checkpoint back = load_checkpoint(dir);
  CHECK(back.round == 99);
  CHECK(back.finished);
  CHECK(all_tensors(back.bb)[0].values() == all_tensors(b.bb)[0].values());
}

TEST_CASE("loader rejects a torn or tampered directory") {
  std::string dir = fresh_dir("bad");
  Checkpoint c = sample_state(5);
  save_checkpoint(dir, c);
  std::string manifest = read_text_file(dir + "/manifest.txt");

  SUBCASE("missing manifest") {
    fs::remove(dir + "/manifest.txt");
    CHECK_FALSE(checkpoint_exists(dir));
    CHECK_THROWS(load_checkpoint(dir));
  }
  SUBCASE("missing blob") {
    fs::remove(dir + "/t0003.bin");
    CHECK_THROWS(load_checkpoint(dir));
  }
  SUBCASE("truncated blob") {
    auto sz = fs::file_size(dir + "/t0002.bin");
    fs::resize_file(dir + "/t0002.bin", sz - 8);
    CHECK_THROWS_WITH_AS(load_checkpoint(dir), doctest::Contains("bytes"),
                         std::invalid_argument);
  }
  SUBCASE("oversized blob") {
    std::string blob = read_text_file(dir + "/t0002.bin");
    write_text_file(dir + "/t0002.bin", blob + "12345678");
    CHECK_THROWS(load_checkpoint(dir));
  }
  SUBCASE("tensor name swapped") {
    std::string hacked = manifest;
    size_t pos = hacked.find("atom0.W");
    REQUIRE(pos != std::string::npos);
    hacked.replace(pos, 7, "atom9.W");
    write_text_file(dir + "/manifest.txt", hacked);
    CHECK_THROWS(load_checkpoint(dir));
  }
  SUBCASE("shape edited") {
    std::string hacked = manifest;
    size_t pos = hacked.find("atom0.W 12 64");
    REQUIRE(pos != std::string::npos);
    hacked.replace(pos, 13, "atom0.W 13 64");
    write_text_file(dir + "/manifest.txt", hacked);
    CHECK_THROWS(load_checkpoint(dir));
  }
  SUBCASE("unsupported format version") {
    std::string hacked = manifest;
    REQUIRE(hacked.rfind("format 1", 0) == 0);
    hacked[7] = '2';
    write_text_file(dir + "/manifest.txt", hacked);
    CHECK_THROWS_WITH_AS(load_checkpoint(dir), doctest::Contains("format"),
                         std::invalid_argument);
  }
  SUBCASE("garbage manifest") {
    write_text_file(dir + "/manifest.txt", "hello\n");
    CHECK_THROWS(load_checkpoint(dir));
  }
}

TEST_CASE("blob bytes are raw little-endian doubles in declared order") {
  std::string dir = fresh_dir("raw");
  Checkpoint c = sample_state(6);
  Tensor first = all_tensors(c.bb)[0];
  first.values()[0] = 1.0;  // 0x3FF0000000000000
  save_checkpoint(dir, c);
  std::string blob = read_text_file(dir + "/t0000.bin");
  REQUIRE(blob.size() == first.values().size() * 8);
  const unsigned char* b = (const unsigned char*)blob.data();
  CHECK(b[0] == 0x00);
  CHECK(b[6] == 0xF0);
  CHECK(b[7] == 0x3F);
}
