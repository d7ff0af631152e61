#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ddp/checkpoint.hpp"
#include "ddp/rng.hpp"

namespace {

namespace fs = std::filesystem;

std::string tmp_path(const std::string& name) {
  return (fs::temp_directory_path() / name).string();
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ddp::Model make_model(std::uint64_t seed) {
  ddp::DenoiserConfig cfg;
  cfg.arch = ddp::ArchKind::kTemporalUnet;
  cfg.horizon = 8;
  cfg.dims = 3;
  cfg.widths = {8, 16};
  cfg.step_embed = 8;
  cfg.cond_embed = 8;
  cfg.kernel = 3;
  cfg.groups = 4;
  ddp::Model m(cfg, ddp::NoiseSchedule::cosine(20, 0.008));
  ddp::Rng rng(seed);
  m.net.init_params(m.params, rng);
  m.norm.mean = Eigen::Vector3d(0.05, -0.02, 0.5);
  m.norm.std = Eigen::Vector3d(0.21, 0.2, 0.28);
  m.rscale = {-7.5, -1e-4};
  m.reward = {ddp::RewardKind::kDense, 46.0, 0.99};
  m.train_step = 1234;
  m.ema = true;
  return m;
}

}  // namespace

TEST_CASE("checkpoint round trip preserves predictions bitwise", "[checkpoint]") {
  const ddp::Model m = make_model(3);
  const std::string path = tmp_path("ddp_ckpt_roundtrip.ddpc");
  ddp::save_checkpoint(m, path);
  const ddp::Model loaded = ddp::load_checkpoint(path);

  REQUIRE(loaded.params == m.params);
  REQUIRE(loaded.cfg.widths == m.cfg.widths);
  REQUIRE(loaded.cfg.horizon == m.cfg.horizon);
  REQUIRE(loaded.sched.K == m.sched.K);
  REQUIRE(loaded.sched.alpha_bar == m.sched.alpha_bar);
  REQUIRE(loaded.norm.mean == m.norm.mean);
  REQUIRE(loaded.norm.std == m.norm.std);
  REQUIRE(loaded.rscale.min == m.rscale.min);
  REQUIRE(loaded.rscale.max == m.rscale.max);
  REQUIRE(loaded.reward.kind == m.reward.kind);
  REQUIRE(loaded.reward.a == m.reward.a);
  REQUIRE(loaded.reward.gamma == m.reward.gamma);
  REQUIRE(loaded.train_step == 1234);
  REQUIRE(loaded.ema);

  ddp::Rng rng(9);
  Eigen::MatrixXf x(8, 3);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 3; ++c) x(r, c) = static_cast<float>(rng.normal());
  ddp::Denoiser<float>::Workspace ws;
  const Eigen::MatrixXf a = m.net.forward(m.params, x, 5, ddp::Condition::returns(0.3), ws);
  const Eigen::MatrixXf b =
      loaded.net.forward(loaded.params, x, 5, ddp::Condition::returns(0.3), ws);
  REQUIRE(a == b);

  fs::remove(path);
}

TEST_CASE("saving the same model twice is byte identical", "[checkpoint]") {
  const ddp::Model m = make_model(4);
  const std::string p1 = tmp_path("ddp_ckpt_bytes_1.ddpc");
  const std::string p2 = tmp_path("ddp_ckpt_bytes_2.ddpc");
  ddp::save_checkpoint(m, p1);
  ddp::save_checkpoint(m, p2);
  REQUIRE(slurp(p1) == slurp(p2));
  fs::remove(p1);
  fs::remove(p2);
}

TEST_CASE("checkpoint corruption is reported by failure mode", "[checkpoint]") {
  const ddp::Model m = make_model(5);
  const std::string path = tmp_path("ddp_ckpt_corrupt.ddpc");
  ddp::save_checkpoint(m, path);
  const std::vector<char> good = slurp(path);

  SECTION("bad magic") {
    std::vector<char> bytes = good;
    bytes[0] = 'X';
    spit(path, bytes);
    REQUIRE_THROWS_AS(ddp::load_checkpoint(path), ddp::BadMagicError);
  }
  SECTION("truncated payload") {
    std::vector<char> bytes = good;
    bytes.resize(bytes.size() - 12);
    spit(path, bytes);
    REQUIRE_THROWS_AS(ddp::load_checkpoint(path), ddp::TruncatedFileError);
  }
  SECTION("oversized payload") {
    std::vector<char> bytes = good;
    bytes.insert(bytes.end(), {0, 0, 0, 0});
    spit(path, bytes);
    REQUIRE_THROWS_AS(ddp::load_checkpoint(path), ddp::PayloadSizeError);
  }
  SECTION("header json is malformed") {
    std::vector<char> bytes = good;
    // First header byte sits right after the 8-byte magic and 8-byte length.
    bytes[16] = '?';
    spit(path, bytes);
    REQUIRE_THROWS_AS(ddp::load_checkpoint(path), ddp::FormatError);
  }
  SECTION("missing file") {
    REQUIRE_THROWS_AS(ddp::load_checkpoint(tmp_path("ddp_ckpt_nonexistent.ddpc")),
                      ddp::IoError);
  }

  fs::remove(path);
}

TEST_CASE("header and payload disagreement is a format error", "[checkpoint]") {
  // A header that declares a different parameter count than the architecture
  // implies is a config mismatch, reported distinctly from byte corruption.
  const ddp::Model m = make_model(6);
  const std::string path = tmp_path("ddp_ckpt_mismatch.ddpc");
  ddp::save_checkpoint(m, path);
  std::vector<char> bytes = slurp(path);

  const std::string needle = "\"param_count\":";
  std::string text(bytes.begin(), bytes.end());
  const auto pos = text.find(needle);
  REQUIRE(pos != std::string::npos);

  // Patch one digit of the declared count without changing the header length.
  const auto digit = pos + needle.size();
  bytes[digit] = bytes[digit] == '1' ? '2' : '1';
  spit(path, bytes);
  try {
    ddp::load_checkpoint(path);
    FAIL("expected a format error");
  } catch (const ddp::FormatError& e) {
    // A count mismatch must not masquerade as byte-level truncation.
    REQUIRE(dynamic_cast<const ddp::TruncatedFileError*>(&e) == nullptr);
    REQUIRE(dynamic_cast<const ddp::PayloadSizeError*>(&e) == nullptr);
  }
  fs::remove(path);
}

TEST_CASE("return scaling clamps to the training range", "[checkpoint]") {
  ddp::ReturnScale rs{-2.0, -1.0};
  REQUIRE(rs.scale(-2.0) == 0.0);
  REQUIRE(rs.scale(-1.0) == 1.0);
  REQUIRE(rs.scale(-1.5) == 0.5);
  REQUIRE(rs.scale(-5.0) == 0.0);
  REQUIRE(rs.scale(0.0) == 1.0);

  ddp::ReturnScale degenerate{-1.0, -1.0};
  REQUIRE(degenerate.scale(-1.0) == 0.5);
}
