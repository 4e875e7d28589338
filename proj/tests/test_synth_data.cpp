#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <map>

#include "accnn/synth_data.hpp"

using namespace accnn;

namespace {

SceneSpec default_spec() { return SceneSpec{}; }

}  // namespace

TEST_CASE("generate_image is bitwise deterministic per seed") {
  const SceneSpec spec = default_spec();
  const Sample a = generate_image(1234, spec);
  const Sample b = generate_image(1234, spec);
  REQUIRE(a.image.numel() == b.image.numel());
  for (std::size_t i = 0; i < a.image.numel(); ++i) CHECK(a.image[i] == b.image[i]);
  REQUIRE(a.gts.size() == b.gts.size());
  for (std::size_t i = 0; i < a.gts.size(); ++i) {
    CHECK(a.gts[i].class_id == b.gts[i].class_id);
    CHECK(a.gts[i].box.cx == b.gts[i].box.cx);
    CHECK(a.gts[i].box.w == b.gts[i].box.w);
  }
  const Sample c = generate_image(1235, spec);
  bool same = a.gts.size() == c.gts.size();
  for (std::size_t i = 0; same && i < a.image.numel(); ++i) same = a.image[i] == c.image[i];
  CHECK_FALSE(same);
}

TEST_CASE("single-object spec yields exactly one ground truth") {
  SceneSpec spec = default_spec();
  spec.min_objects = 1;
  spec.max_objects = 1;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CHECK(generate_image(seed, spec).gts.size() == 1);
  }
}

TEST_CASE("ground-truth boxes stay within bounds and above 8 px") {
  const SceneSpec spec = default_spec();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Sample s = generate_image(seed, spec);
    REQUIRE(!s.gts.empty());
    for (const GtBox& g : s.gts) {
      CHECK(g.box.w >= 8.0);
      CHECK(g.box.h >= 8.0);
      CHECK(g.box.x1() >= -1e-9);
      CHECK(g.box.y1() >= -1e-9);
      CHECK(g.box.x2() <= spec.width + 1e-9);
      CHECK(g.box.y2() <= spec.height + 1e-9);
    }
  }
}

TEST_CASE("500-image corpus has a near-uniform class histogram") {
  const SceneSpec spec = default_spec();
  std::map<int, int> histogram;
  int total = 0;
  const auto corpus = generate_corpus(2024, 500, spec);
  for (const Sample& s : corpus) {
    for (const GtBox& g : s.gts) {
      ++histogram[g.class_id];
      ++total;
    }
  }
  REQUIRE(total > 500);
  for (int c = 1; c <= 3; ++c) {
    const double frac = static_cast<double>(histogram[c]) / total;
    CHECK(frac > (1.0 / 3.0) * 0.8);
    CHECK(frac < (1.0 / 3.0) * 1.2);
  }
}

TEST_CASE("proposals cover the tight and distractor IoU bands per GT") {
  const SceneSpec spec = default_spec();
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const Sample s = generate_sample(seed, spec);
    REQUIRE(static_cast<int>(s.proposals.size()) == spec.proposals_per_image);
    for (const GtBox& g : s.gts) {
      bool tight = false, distractor = false;
      for (const BBox& p : s.proposals) {
        const double v = iou(p, g.box);
        tight = tight || v >= 0.7;
        distractor = distractor || (v >= 0.1 && v < 0.5);
      }
      CHECK(tight);
      CHECK(distractor);
    }
    for (const BBox& p : s.proposals) {
      CHECK(p.x1() >= -1e-9);
      CHECK(p.y1() >= -1e-9);
      CHECK(p.x2() <= spec.width + 1e-9);
      CHECK(p.y2() <= spec.height + 1e-9);
    }
  }
}

TEST_CASE("generate_proposals requires n at least twice the GT count") {
  const SceneSpec spec = default_spec();
  const Sample s = generate_image(7, spec);
  CHECK_THROWS_AS(generate_proposals(s.gts, 7, static_cast<int>(s.gts.size()), spec),
                  std::invalid_argument);
}

TEST_CASE("flip_augment is an exact involution") {
  const SceneSpec spec = default_spec();
  const Sample s = generate_sample(99, spec);
  const Sample once = flip_augment(s, 1);
  const Sample twice = flip_augment(once, 1);
  for (std::size_t i = 0; i < s.image.numel(); ++i) CHECK(twice.image[i] == s.image[i]);
  REQUIRE(twice.gts.size() == s.gts.size());
  for (std::size_t i = 0; i < s.gts.size(); ++i) {
    CHECK(twice.gts[i].box.cx == s.gts[i].box.cx);
    CHECK(twice.gts[i].box.cy == s.gts[i].box.cy);
    CHECK(twice.gts[i].box.w == s.gts[i].box.w);
    CHECK(twice.gts[i].box.h == s.gts[i].box.h);
  }
  for (std::size_t i = 0; i < s.proposals.size(); ++i) {
    CHECK(twice.proposals[i].cx == s.proposals[i].cx);
  }
  // coin = 0 is the identity
  const Sample same = flip_augment(s, 0);
  for (std::size_t i = 0; i < s.image.numel(); ++i) CHECK(same.image[i] == s.image[i]);
}

TEST_CASE("flip arithmetic: centered and edge boxes") {
  const BBox centered{50, 30, 10, 10};
  const BBox f = flip_horizontal(centered, 100);
  CHECK(f.cx == 50.0);
  CHECK(f.cy == 30.0);

  const BBox edge = BBox::from_corners(0, 0, 10, 10);
  const BBox fe = flip_horizontal(edge, 100);
  CHECK(fe.x1() == doctest::Approx(90.0));
  CHECK(fe.x2() == doctest::Approx(100.0));
}

TEST_CASE("minibatch composition is 32 foreground / 96 background") {
  const SceneSpec spec = default_spec();
  const auto corpus = generate_corpus(5, 8, spec);
  SamplerConfig cfg;
  std::mt19937_64 rng(11);
  const MiniBatch batch = sample_minibatch(corpus, cfg, rng);
  REQUIRE(batch.images.size() == 2);
  int fg = 0, bg = 0;
  for (const ImageRois& img : batch.images) {
    CHECK(img.rois.size() == 64);
    const Sample view = flip_augment(corpus[img.corpus_index], img.flipped ? 1 : 0);
    for (const RoiSample& r : img.rois) {
      if (r.target.label > 0) {
        ++fg;
        double best = 0;
        for (const GtBox& g : view.gts) {
          if (g.class_id == r.target.label) best = std::max(best, iou(r.box, g.box));
        }
        CHECK(best > cfg.fg_iou);
      } else {
        ++bg;
        double best = 0;
        for (const GtBox& g : view.gts) best = std::max(best, iou(r.box, g.box));
        CHECK(best < cfg.bg_iou_hi);
      }
    }
  }
  CHECK(fg == 32);
  CHECK(bg == 96);
}

TEST_CASE("minibatch sampling is deterministic per seed") {
  const SceneSpec spec = default_spec();
  const auto corpus = generate_corpus(5, 6, spec);
  SamplerConfig cfg;
  std::mt19937_64 r1(3), r2(3);
  const MiniBatch a = sample_minibatch(corpus, cfg, r1);
  const MiniBatch b = sample_minibatch(corpus, cfg, r2);
  REQUIRE(a.images.size() == b.images.size());
  for (std::size_t i = 0; i < a.images.size(); ++i) {
    CHECK(a.images[i].corpus_index == b.images[i].corpus_index);
    CHECK(a.images[i].flipped == b.images[i].flipped);
    REQUIRE(a.images[i].rois.size() == b.images[i].rois.size());
    for (std::size_t k = 0; k < a.images[i].rois.size(); ++k) {
      CHECK(a.images[i].rois[k].box.cx == b.images[i].rois[k].box.cx);
      CHECK(a.images[i].rois[k].target.label == b.images[i].rois[k].target.label);
    }
  }
}

TEST_CASE("foreground/background bands are exclusive and exhaustive") {
  const SceneSpec spec = default_spec();
  SamplerConfig cfg;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Sample s = generate_sample(seed, spec);
    for (const BBox& p : s.proposals) {
      double best = 0;
      for (const GtBox& g : s.gts) best = std::max(best, iou(p, g.box));
      if (best == cfg.fg_iou) continue;  // measure-zero boundary excluded
      const bool is_fg = best > cfg.fg_iou;
      const bool is_bg = best >= cfg.bg_iou_lo && best < cfg.bg_iou_hi;
      CHECK(is_fg != is_bg);
    }
  }
}

TEST_CASE("corpus persists and reloads exactly") {
  namespace fs = std::filesystem;
  const SceneSpec spec = default_spec();
  const auto corpus = generate_corpus(31, 4, spec, 100);
  const std::string dir = (fs::temp_directory_path() / "accnn_corpus_test").string();
  fs::remove_all(dir);
  save_corpus(dir, corpus);
  const auto loaded = load_corpus(dir);
  REQUIRE(loaded.size() == corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    CHECK(loaded[i].image_id == corpus[i].image_id);
    REQUIRE(loaded[i].image.numel() == corpus[i].image.numel());
    // image round-trips through the 8-bit quantization used at save time
    for (std::size_t k = 0; k < corpus[i].image.numel(); ++k) {
      const float q = std::round(std::clamp(corpus[i].image[k], 0.0f, 1.0f) * 255.0f) / 255.0f;
      CHECK(loaded[i].image[k] == doctest::Approx(q).epsilon(1e-7));
    }
    REQUIRE(loaded[i].gts.size() == corpus[i].gts.size());
    for (std::size_t k = 0; k < corpus[i].gts.size(); ++k) {
      CHECK(loaded[i].gts[k].class_id == corpus[i].gts[k].class_id);
      CHECK(loaded[i].gts[k].box.cx == corpus[i].gts[k].box.cx);
      CHECK(loaded[i].gts[k].box.w == corpus[i].gts[k].box.w);
    }
    REQUIRE(loaded[i].proposals.size() == corpus[i].proposals.size());
    for (std::size_t k = 0; k < corpus[i].proposals.size(); ++k) {
      CHECK(loaded[i].proposals[k].cx == corpus[i].proposals[k].cx);
      CHECK(loaded[i].proposals[k].h == corpus[i].proposals[k].h);
    }
  }
  fs::remove_all(dir);
}

TEST_CASE("infeasible scene specs are rejected") {
  SceneSpec spec = default_spec();
  spec.max_objects = 500;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  SceneSpec tiny = default_spec();
  tiny.min_size = 4;
  CHECK_THROWS_AS(tiny.validate(), std::invalid_argument);
}

TEST_CASE("parallel corpus generation is bitwise identical to sequential") {
  SceneSpec spec = default_spec();
  const auto seq = generate_corpus(55, 12, spec, 0, 1);
  const auto par = generate_corpus(55, 12, spec, 0, 4);
  REQUIRE(par.size() == seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    CHECK(par[i].image_id == seq[i].image_id);
    REQUIRE(par[i].image.numel() == seq[i].image.numel());
    for (std::size_t k = 0; k < seq[i].image.numel(); ++k) {
      CHECK(par[i].image[k] == seq[i].image[k]);
    }
    REQUIRE(par[i].proposals.size() == seq[i].proposals.size());
    for (std::size_t k = 0; k < seq[i].proposals.size(); ++k) {
      CHECK(par[i].proposals[k].cx == seq[i].proposals[k].cx);
    }
  }
}
