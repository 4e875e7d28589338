#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "accnn/detection_head.hpp"
#include "accnn/global_attention.hpp"
#include "accnn/grad_check.hpp"
#include "accnn/local_context.hpp"
#include "test_util.hpp"

using namespace accnn;

namespace {

HeadConfig head3() {
  HeadConfig cfg;
  cfg.num_classes = 3;
  return cfg;
}

}  // namespace

TEST_CASE("classify with zero parameters scores uniformly") {
  HeadConfig cfg = head3();
  std::mt19937_64 rng(1);
  ParamStore<double> params;
  init_head_params(params, cfg, 5, 4, rng);
  for (auto& v : params.at("head.cls.w").values()) v = 0.0;

  Tape<double> tape;
  auto fl = test::random_tensor({5}, rng, -1.0, 1.0, false);
  auto fg = test::random_tensor({4}, rng, -1.0, 1.0, false);
  auto scores = classify(tape, fl, std::optional<Tensor<double>>{fg}, params);
  REQUIRE(scores.shape() == Shape{4});
  for (std::size_t i = 0; i < 4; ++i) CHECK(scores[i] == 0.0);
  auto probs = softmax(tape, scores);
  for (std::size_t i = 0; i < 4; ++i) CHECK(probs[i] == 0.25);
}

TEST_CASE("classification gradients reach both feature branches") {
  HeadConfig cfg = head3();
  std::mt19937_64 rng(2);
  ParamStore<double> params;
  init_head_params(params, cfg, 5, 4, rng);
  auto fl = test::random_tensor({5}, rng);
  auto fg = test::random_tensor({4}, rng);
  Tape<double> tape;
  auto scores = classify(tape, fl, std::optional<Tensor<double>>{fg}, params);
  auto loss = cross_entropy_logits(tape, scores, 1);
  tape.backward(loss);
  double nl = 0, ng = 0;
  for (double v : fl.grad()) nl += v * v;
  for (double v : fg.grad()) ng += v * v;
  CHECK(nl > 0.0);
  CHECK(ng > 0.0);
}

TEST_CASE("regress output shape and zero-parameter behavior") {
  HeadConfig cfg = head3();
  std::mt19937_64 rng(3);
  ParamStore<double> params;
  init_head_params(params, cfg, 5, 4, rng);
  for (auto& v : params.at("head.reg.w").values()) v = 0.0;
  Tape<double> tape;
  auto fl = test::random_tensor({5}, rng, -1.0, 1.0, false);
  auto deltas = regress(tape, fl, params);
  REQUIRE(deltas.shape() == Shape{12});
  for (std::size_t i = 0; i < 12; ++i) CHECK(deltas[i] == 0.0);
}

TEST_CASE("smooth_l1 is continuous with continuous derivative at |x| = 1") {
  CHECK(smooth_l1(0.0) == 0.0);
  CHECK(smooth_l1(1.0) == 0.5);
  CHECK(smooth_l1(2.0) == 1.5);
  CHECK(smooth_l1(-1.0) == 0.5);
  const double eps = 1e-6;
  for (double x0 : {1.0, -1.0}) {
    const double inner = (smooth_l1(x0) - smooth_l1(x0 - eps)) / eps;
    const double outer = (smooth_l1(x0 + eps) - smooth_l1(x0)) / eps;
    CHECK(std::abs(inner - outer) < 1e-6);
    CHECK(std::abs(smooth_l1(x0 + eps) - smooth_l1(x0 - eps)) < 3 * eps);
  }
}

TEST_CASE("multitask loss for background is exactly the cross-entropy term") {
  HeadConfig cfg = head3();
  std::mt19937_64 rng(4);
  auto fl = test::random_tensor({5}, rng);
  ParamStore<double> p2;
  std::mt19937_64 rng2(4);
  init_head_params(p2, cfg, 5, 0, rng2);
  Tape<double> t2;
  auto s2 = classify(t2, fl, std::optional<Tensor<double>>{}, p2);
  auto deltas = regress(t2, fl, p2);
  RoiTarget bg;
  bg.label = 0;
  auto terms = multitask_loss(t2, s2, deltas, bg, cfg);
  CHECK(terms.total.id() == terms.cls.id());
  CHECK_FALSE(terms.reg.defined());

  p2.zero_grad();
  fl.zero_grad();
  Tensor<double> total = terms.total;
  t2.backward(total);
  for (double v : p2.at("head.reg.w").grad()) CHECK(v == 0.0);
  for (double v : p2.at("head.reg.b").grad()) CHECK(v == 0.0);
}

TEST_CASE("uniform scores over 4 classes cost ln 4") {
  HeadConfig cfg = head3();
  Tape<double> tape;
  auto scores = Tensor<double>::zeros({4});
  auto deltas = Tensor<double>::zeros({12});
  RoiTarget t;
  t.label = 2;
  t.target = {0, 0, 0, 0};
  auto terms = multitask_loss(tape, scores, deltas, t, cfg);
  CHECK(terms.cls[0] == doctest::Approx(1.386294).epsilon(1e-6));
}

TEST_CASE("multitask loss matches an independent scalar-loop oracle") {
  std::mt19937_64 rng(5);
  HeadConfig cfg = head3();
  for (int trial = 0; trial < 50; ++trial) {
    auto scores = test::random_tensor({4}, rng, -2.0, 2.0, false);
    auto deltas = test::random_tensor({12}, rng, -2.0, 2.0, false);
    RoiTarget t;
    t.label = 1 + static_cast<int>(rng() % 3);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    for (auto& v : t.target) v = u(rng);

    Tape<double> tape;
    auto terms = multitask_loss(tape, scores, deltas, t, cfg);

    // oracle: direct softmax cross-entropy + piecewise penalty
    double mx = scores[0];
    for (std::size_t i = 1; i < 4; ++i) mx = std::max(mx, scores[i]);
    double denom = 0;
    for (std::size_t i = 0; i < 4; ++i) denom += std::exp(scores[i] - mx);
    const double ce = -std::log(std::exp(scores[static_cast<std::size_t>(t.label)] - mx) / denom);
    double reg = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      const double d = deltas[4 * static_cast<std::size_t>(t.label - 1) + i] - t.target[i];
      reg += std::abs(d) < 1 ? 0.5 * d * d : std::abs(d) - 0.5;
    }
    CHECK(terms.total[0] == doctest::Approx(ce + reg).epsilon(1e-12));
    CHECK(terms.cls[0] == doctest::Approx(ce).epsilon(1e-12));
    CHECK(terms.reg[0] == doctest::Approx(reg).epsilon(1e-12));
  }
}

TEST_CASE("multitask loss rejects out-of-range labels") {
  HeadConfig cfg = head3();
  Tape<double> tape;
  auto scores = Tensor<double>::zeros({4});
  auto deltas = Tensor<double>::zeros({12});
  RoiTarget t;
  t.label = 4;
  CHECK_THROWS_AS(multitask_loss(tape, scores, deltas, t, cfg), std::invalid_argument);
}

TEST_CASE("classify / regress / multitask_loss pass finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    HeadConfig cfg = head3();
    ParamStore<double> params;
    init_head_params(params, cfg, 5, 4, rng);
    auto fl = test::random_tensor({5}, rng);
    auto fg = test::random_tensor({4}, rng);
    RoiTarget t;
    t.label = 1 + static_cast<int>(seed % 3);
    t.target = {0.1, -0.2, 0.05, 0.3};

    auto f = [&](Tape<double>& tp, const Tensor<double>&) {
      auto scores = classify(tp, fl, std::optional<Tensor<double>>{fg}, params);
      auto deltas = regress(tp, fl, params);
      return multitask_loss(tp, scores, deltas, t, cfg).total;
    };
    CHECK(grad_check(f, params.at("head.cls.w")) < 1e-4);
    CHECK(grad_check(f, params.at("head.reg.w")) < 1e-4);
    CHECK(grad_check(f, fl) < 1e-4);
    CHECK(grad_check(f, fg) < 1e-4);
  }
}

TEST_CASE("regression loss cannot touch global-branch parameters") {
  // Full two-branch wiring over a shared cube: J_reg backward leaves every
  // global parameter gradient bitwise zero, J_cls does not.
  std::mt19937_64 rng(6);
  LocalContextConfig lcfg;
  lcfg.scales = {0.8, 1.2, 1.8};
  lcfg.pool_size = 2;
  lcfg.reduced_depth = 2;
  lcfg.fc_dims = {4, 4};
  lcfg.norm_scale_init = 1.0;
  GlobalConfig gcfg;
  gcfg.k = 2;
  gcfg.t_steps = 2;
  gcfg.hidden = 2;
  gcfg.layers = 2;
  gcfg.fc_dims = {4, 4};
  HeadConfig hcfg = head3();

  ParamStore<double> params;
  init_local_params(params, lcfg, 2, rng);
  init_global_params(params, gcfg, 2, rng);
  init_head_params(params, hcfg, 4, 4, rng);
  auto cube_data = test::random_tensor({6, 6, 2}, rng, 0.1, 1.0, false);
  FeatureCube<double> cube{cube_data, 8, 48, 48};
  const BBox box{24, 24, 20, 16};
  RoiTarget t;
  t.label = 2;
  t.target = {0.2, -0.1, 0.1, 0.05};

  auto forward = [&](Tape<double>& tp) {
    auto local = local_feature(tp, cube, box, lcfg, params);
    auto global = global_feature(tp, cube, gcfg, params);
    auto scores = classify(tp, local.f_local, std::optional<Tensor<double>>{global.f_global},
                           params);
    auto deltas = regress(tp, local.f_local, params);
    return multitask_loss(tp, scores, deltas, t, hcfg);
  };

  {
    Tape<double> tape;
    auto terms = forward(tape);
    params.zero_grad();
    Tensor<double> reg = terms.reg;
    tape.backward(reg);
    for (const auto& [name, p] : params) {
      if (name.rfind("global.", 0) == 0) {
        for (double v : p.grad()) CHECK(v == 0.0);
      }
    }
    // local branch must still learn from regression
    double nl = 0;
    for (double v : params.at("local.fc2.w").grad()) nl += v * v;
    CHECK(nl > 0.0);
  }
  {
    Tape<double> tape;
    auto terms = forward(tape);
    params.zero_grad();
    Tensor<double> cls = terms.cls;
    tape.backward(cls);
    double ng = 0;
    for (double v : params.at("global.attn.w_loc").grad()) ng += v * v;
    for (double v : params.at("global.fc1.w").grad()) ng += v * v;
    CHECK(ng > 0.0);
  }
}

TEST_CASE("encode_target basics and the inverse pair") {
  const BBox p{40, 40, 20, 10};
  auto t0 = encode_target(p, p);
  for (double v : t0) CHECK(v == 0.0);

  const BBox wide{40, 40, 40, 10};
  auto tw = encode_target(p, wide);
  CHECK(tw[2] == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  CHECK(apply_deltas(p, {0, 0, 0, 0}).w == doctest::Approx(20.0));
  CHECK(apply_deltas(p, {0, 0, std::log(2.0), 0}).w == doctest::Approx(40.0).epsilon(1e-12));

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const BBox a{10 + u(rng) * 80, 10 + u(rng) * 80, 2 + u(rng) * 40, 2 + u(rng) * 40};
    const BBox b{10 + u(rng) * 80, 10 + u(rng) * 80, 2 + u(rng) * 40, 2 + u(rng) * 40};
    const BBox back = apply_deltas(a, encode_target(a, b));
    CHECK(std::abs(back.cx - b.cx) <= 1e-9);
    CHECK(std::abs(back.cy - b.cy) <= 1e-9);
    CHECK(std::abs(back.w - b.w) <= 1e-9);
    CHECK(std::abs(back.h - b.h) <= 1e-9);
  }
}

TEST_CASE("nms keeps the higher-scored of two overlapping boxes") {
  std::vector<Detection> dets{
      {1, 0.9, {0, 0, 10, 10}, 0},
      {1, 0.8, {1, 0, 11, 10}, 0},  // IoU with the first ~0.8
  };
  auto kept = nms(dets, 0.3);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].score == 0.9);

  std::vector<Detection> disjoint{
      {1, 0.9, {0, 0, 10, 10}, 0},
      {1, 0.8, {50, 50, 60, 60}, 0},
  };
  CHECK(nms(disjoint, 0.3).size() == 2);
}

TEST_CASE("nms is idempotent over random detection sets") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int seed = 0; seed < 100; ++seed) {
    std::vector<Detection> dets;
    const int n = 3 + static_cast<int>(rng() % 12);
    for (int i = 0; i < n; ++i) {
      const double x = u(rng) * 80, y = u(rng) * 80;
      const double w = 5 + u(rng) * 30, h = 5 + u(rng) * 30;
      dets.push_back({1, u(rng), {x, y, x + w, y + h}, 0});
    }
    auto once = nms(dets, 0.3);
    auto twice = nms(once, 0.3);
    REQUIRE(once.size() == twice.size());
    for (std::size_t i = 0; i < once.size(); ++i) {
      CHECK(once[i].score == twice[i].score);
      CHECK(once[i].box == twice[i].box);
    }
  }
}
