#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support/gradcheck.hpp"
#include "wwm/pointcloud.hpp"
#include "wwm/tokenizers.hpp"

using namespace wwm;
using ad::Var;

TEST_CASE("embed_csi: default geometry gives 512 tokens") {
  CsiPatchConfig cfg;  // 16,32,32 with (2,4,4)
  Rng rng(1);
  CsiEmbed<float> embed(cfg, rng);
  TensorF csi = TensorF::randn({2, 16, 32, 32}, rng);
  auto tokens = embed.forward(ad::constant(csi));
  CHECK(tokens->val.rows() == 512);
  CHECK(tokens->val.cols() == 96);
  CHECK(cfg.n_tokens() == 512);
  CHECK(cfg.grid_t() == 8);
}

TEST_CASE("embed_csi: full-tensor patch gives one token") {
  CsiPatchConfig cfg;
  cfg.t = 4;
  cfg.h = 4;
  cfg.w = 4;
  cfg.t_p = 4;
  cfg.h_p = 4;
  cfg.w_p = 4;
  cfg.d = 12;
  Rng rng(2);
  CsiEmbed<float> embed(cfg, rng);
  auto tokens = embed.forward(ad::constant(TensorF::randn({2, 4, 4, 4}, rng)));
  CHECK(tokens->val.rows() == 1);
}

TEST_CASE("embed_csi: indivisible shape is rejected") {
  CsiPatchConfig cfg;
  cfg.t = 15;  // not divisible by t_p=2
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("embed_csi: token order is time-major then H then W") {
  CsiPatchConfig cfg;
  cfg.t = 4;
  cfg.h = 4;
  cfg.w = 4;
  cfg.t_p = 2;
  cfg.h_p = 2;
  cfg.w_p = 2;
  auto idx = csi_patch_indices(cfg);
  // first tube starts at flat index 0 (c=0,t=0,h=0,w=0)
  CHECK(idx[0] == 0);
  // second token (t=0,h=0,w=1) starts at w offset 2
  CHECK(idx[cfg.tube_volume()] == 2);
  // token (t=1,...) starts at t offset 2 rows of H*W=16 -> 32
  CHECK(idx[cfg.tube_volume() * 4] == 32);
}

TEST_CASE("embed_csi: gradient w.r.t. input matches finite differences") {
  CsiPatchConfig cfg;
  cfg.t = 4;
  cfg.h = 4;
  cfg.w = 4;
  cfg.t_p = 2;
  cfg.h_p = 2;
  cfg.w_p = 2;
  cfg.d = 12;
  Rng rng(3);
  CsiEmbed<double> embed(cfg, rng);
  auto input = ad::leaf(TensorD::randn({2, 4, 4, 4}, rng), true);
  auto res = testsupport::grad_check({input, embed.proj.w, embed.proj.b}, [&] {
    auto t = embed.forward(input);
    return ad::sum_all(ad::mul(t, t));
  });
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("fps: selecting all points returns every index") {
  std::vector<Point3f> pts;
  Rng rng(4);
  for (int i = 0; i < 10; ++i)
    pts.push_back({float(rng.normal()), float(rng.normal()), float(rng.normal())});
  auto centers = farthest_point_sampling(pts, 10, 0);
  std::vector<std::size_t> sorted = centers;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 10; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("fps: collinear points pick the extremes") {
  std::vector<Point3f> pts;
  for (int i = 0; i < 10; ++i) pts.push_back({float(i), 0.f, 0.f});
  auto centers = farthest_point_sampling(pts, 2, 0);
  CHECK(centers[0] == 0);
  CHECK(centers[1] == 9);
}

TEST_CASE("fps: more centers than points is rejected") {
  std::vector<Point3f> pts{{0, 0, 0}};
  CHECK_THROWS(farthest_point_sampling(pts, 2, 0));
}

TEST_CASE("fps: beats random subsets on min pairwise distance (MC oracle)") {
  Rng rng(5);
  std::vector<Point3f> pts;
  for (int i = 0; i < 200; ++i)
    pts.push_back({float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1)),
                   float(rng.uniform(-1, 1))});
  auto min_pair = [&](const std::vector<std::size_t>& sel) {
    double best = 1e300;
    for (std::size_t i = 0; i < sel.size(); ++i)
      for (std::size_t j = i + 1; j < sel.size(); ++j) {
        const auto &a = pts[sel[i]], &b = pts[sel[j]];
        const double d2 = (a[0] - b[0]) * (a[0] - b[0]) +
                          (a[1] - b[1]) * (a[1] - b[1]) +
                          (a[2] - b[2]) * (a[2] - b[2]);
        best = std::min(best, d2);
      }
    return std::sqrt(best);
  };
  auto centers = farthest_point_sampling(pts, 16, 0);
  const double fps_min = min_pair(centers);
  std::vector<double> random_mins;
  for (int trial = 0; trial < 101; ++trial) {
    std::vector<std::size_t> sel;
    while (sel.size() < 16) {
      const std::size_t c = rng.below(200);
      if (std::find(sel.begin(), sel.end(), c) == sel.end()) sel.push_back(c);
    }
    random_mins.push_back(min_pair(sel));
  }
  std::sort(random_mins.begin(), random_mins.end());
  CHECK(fps_min >= random_mins[random_mins.size() / 2]);
}

TEST_CASE("fps: same multiset and start give the same index set") {
  Rng rng(6);
  std::vector<Point3f> pts;
  for (int i = 0; i < 64; ++i)
    pts.push_back({float(rng.normal()), float(rng.normal()), float(rng.normal())});
  auto a = farthest_point_sampling(pts, 8, 3);
  auto b = farthest_point_sampling(pts, 8, 3);
  CHECK(a == b);
}

TEST_CASE("knn groups: with replacement when points are scarce") {
  std::vector<Point3f> pts{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  auto groups = knn_groups(pts, {0}, 7);
  REQUIRE(groups[0].size() == 7);
  // cycles over the 3 available points
  CHECK(groups[0][0] == 0);
  CHECK(groups[0][3] == groups[0][0]);
  CHECK(groups[0][4] == groups[0][1]);
}

namespace {
PcTokenizerConfig tiny_pc_cfg() {
  PcTokenizerConfig cfg;
  cfg.n_centers = 4;
  cfg.k_neighbors = 3;
  cfg.codebook_size = 8;
  cfg.d = 12;
  cfg.point_hidden = 6;
  cfg.local_feat = 10;
  return cfg;
}

std::vector<Point3f> random_cloud(std::size_t n, Rng& rng, float shift = 0.f) {
  std::vector<Point3f> pts;
  for (std::size_t i = 0; i < n; ++i)
    pts.push_back({float(rng.uniform(-50, 50)) + shift, float(rng.uniform(-50, 50)),
                   float(rng.uniform(0, 20))});
  return pts;
}
}  // namespace

TEST_CASE("pc_tokenize: eval mode is a one-hot argmax lookup") {
  auto cfg = tiny_pc_cfg();
  Rng rng(7);
  PcTokenizer<float> tok(cfg, rng);
  auto pts = random_cloud(32, rng);
  auto groups = build_pc_groups(pts, cfg);
  auto a = tok.forward(groups, 1.0, nullptr);
  auto b = tok.forward(groups, 0.01, nullptr);  // tau has no effect at eval
  CHECK(a->val.v == b->val.v);
  CHECK(a->val.rows() == 4);
}

TEST_CASE("pc_tokenize: 256 tokens for any crop with at least 256 points") {
  PcTokenizerConfig cfg;  // defaults: 256 centers
  Rng rng(8);
  PcTokenizer<float> tok(cfg, rng);
  auto pts = random_cloud(300, rng);
  auto groups = build_pc_groups(pts, cfg);
  auto t = tok.forward(groups, 1.0, nullptr);
  CHECK(t->val.rows() == 256);
  CHECK(t->val.cols() == 96);
}

TEST_CASE("pc_tokenize: translation moves only the center projection") {
  auto cfg = tiny_pc_cfg();
  Rng rng(9);
  PcTokenizer<float> tok(cfg, rng);
  Rng cloud_rng(10);
  auto pts = random_cloud(32, cloud_rng);
  auto groups_a = build_pc_groups(pts, cfg);
  std::vector<Point3f> shifted = pts;
  for (auto& p : shifted) p[0] += 25.0f;
  auto groups_b = build_pc_groups(shifted, cfg);
  // group-local (re-centered) coordinates are unchanged up to f32 rounding
  REQUIRE(groups_a.group_coords.numel() == groups_b.group_coords.numel());
  for (std::size_t i = 0; i < groups_a.group_coords.numel(); ++i)
    CHECK(groups_a.group_coords.v[i] ==
          doctest::Approx(groups_b.group_coords.v[i]).epsilon(1e-4));
  auto ta = tok.forward(groups_a, 1.0, nullptr);
  auto tb = tok.forward(groups_b, 1.0, nullptr);
  // difference equals the center-projection delta alone
  auto ca = tok.center_proj.forward(ad::constant(groups_a.center_xyz.cast<float>()));
  auto cb = tok.center_proj.forward(ad::constant(groups_b.center_xyz.cast<float>()));
  for (std::size_t i = 0; i < ta->val.numel(); ++i)
    CHECK(tb->val.v[i] - ta->val.v[i] ==
          doctest::Approx(cb->val.v[i] - ca->val.v[i]).epsilon(1e-3));
}

TEST_CASE("pc_tokenize: training mode selections live on the simplex vertices") {
  auto cfg = tiny_pc_cfg();
  Rng rng(11);
  PcTokenizer<float> tok(cfg, rng);
  auto pts = random_cloud(40, rng);
  auto groups = build_pc_groups(pts, cfg);
  Rng gumbel(12);
  auto t = tok.forward(groups, 0.7, &gumbel);
  CHECK(t->val.rows() == 4);
  Rng gumbel2(12);
  auto t2 = tok.forward(groups, 0.7, &gumbel2);
  CHECK(t->val.v == t2->val.v);  // deterministic given the gumbel stream
}

TEST_CASE("embed_trajectory: 16 tokens, PE distinguishes identical inputs") {
  Rng rng(13);
  TrajEmbed<float> embed(16, 24, rng);
  TensorF traj({16, 3});
  for (std::size_t t = 0; t < 16; ++t) {
    traj.at(t, 0) = 1.5f;
    traj.at(t, 1) = -2.f;
    traj.at(t, 2) = 0.5f;
  }
  auto tokens = embed.forward(ad::constant(traj));
  CHECK(tokens->val.rows() == 16);
  // identical positions: token difference equals the PE row difference
  for (std::size_t t = 1; t < 16; ++t)
    for (std::size_t j = 0; j < 24; ++j)
      CHECK(tokens->val.at(t, j) - tokens->val.at(0, j) ==
            doctest::Approx(embed.pe.at(t, j) - embed.pe.at(0, j)).epsilon(1e-4));
  CHECK_THROWS(embed.forward(ad::constant(TensorF::zeros({8, 3}))));
}

TEST_CASE("embed_trajectory: gradient check") {
  Rng rng(14);
  TrajEmbed<double> embed(4, 10, rng);
  auto input = ad::leaf(TensorD::randn({4, 3}, rng), true);
  auto res = testsupport::grad_check(
      {input, embed.mlp.fc1.w, embed.mlp.fc1.b, embed.mlp.fc2.w, embed.mlp.fc2.b},
      [&] {
        auto t = embed.forward(input);
        return ad::sum_all(ad::mul(t, t));
      });
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("build_unified_sequence: default sizes sum to 784") {
  Rng rng(15);
  auto csi = ad::constant(TensorF::randn({512, 96}, rng));
  auto pc = ad::constant(TensorF::randn({256, 96}, rng));
  auto pos = ad::constant(TensorF::randn({16, 96}, rng));
  auto seq = build_unified_sequence(csi, pc, pos);
  CHECK(seq.tokens->val.rows() == 784);
  CHECK(seq.seg.csi == 512);
  CHECK(seq.seg.pc == 256);
  CHECK(seq.seg.pos == 16);
}

TEST_CASE("build_unified_sequence: empty PC segment is recorded as zero") {
  Rng rng(16);
  auto csi = ad::constant(TensorF::randn({8, 12}, rng));
  auto pos = ad::constant(TensorF::randn({4, 12}, rng));
  auto seq = build_unified_sequence<float>(csi, nullptr, pos);
  CHECK(seq.tokens->val.rows() == 12);
  CHECK(seq.seg.pc == 0);
}

TEST_CASE("build_unified_sequence: dim mismatch rejected; split round-trips") {
  Rng rng(17);
  auto csi = ad::constant(TensorF::randn({8, 12}, rng));
  auto pc = ad::constant(TensorF::randn({4, 10}, rng));
  CHECK_THROWS(build_unified_sequence<float>(csi, pc, nullptr));

  auto pc_ok = ad::constant(TensorF::randn({4, 12}, rng));
  auto pos = ad::constant(TensorF::randn({2, 12}, rng));
  auto seq = build_unified_sequence(csi, pc_ok, pos);
  auto back_csi = ad::slice_rows(seq.tokens, 0, seq.seg.csi);
  auto back_pc = ad::slice_rows(seq.tokens, seq.seg.csi, seq.seg.csi + seq.seg.pc);
  auto back_pos = ad::slice_rows(seq.tokens, seq.seg.csi + seq.seg.pc, seq.seg.total());
  CHECK(back_csi->val.v == csi->val.v);
  CHECK(back_pc->val.v == pc_ok->val.v);
  CHECK(back_pos->val.v == pos->val.v);
}

TEST_CASE("token counts are content-independent") {
  auto cfg = tiny_pc_cfg();
  Rng rng(18);
  PcTokenizer<float> tok(cfg, rng);
  for (int trial = 0; trial < 3; ++trial) {
    Rng crng(100 + trial);
    auto pts = random_cloud(20 + 30 * trial, crng);
    auto groups = build_pc_groups(pts, cfg);
    CHECK(tok.forward(groups, 1.0, nullptr)->val.rows() == cfg.n_centers);
  }
}
