#include "accnn/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "accnn/image_io.hpp"

namespace accnn {

namespace fs = std::filesystem;
using nlohmann::json;

void SceneSpec::validate() const {
  if (width < 32 || height < 32) throw std::invalid_argument("SceneSpec: canvas too small");
  if (num_classes < 1 || num_classes > 3) {
    throw std::invalid_argument("SceneSpec: num_classes must be 1..3");
  }
  if (min_objects < 1 || max_objects < min_objects) {
    throw std::invalid_argument("SceneSpec: need at least one object per image");
  }
  if (min_size < 8.0) throw std::invalid_argument("SceneSpec: min_size must be >= 8 px");
  if (max_size < min_size || max_size > std::min(width, height)) {
    throw std::invalid_argument("SceneSpec: bad size range");
  }
  // A loose feasibility bound: objects at min size must fit side by side.
  const double cells = (width / min_size) * (height / min_size);
  if (max_objects > cells / 4) {
    throw std::invalid_argument("SceneSpec: too many objects for the canvas");
  }
  if (proposals_per_image < 64) {
    throw std::invalid_argument("SceneSpec: proposals_per_image must be >= 64");
  }
}

const char* class_name(int class_id) {
  switch (class_id) {
    case 1: return "circle";
    case 2: return "triangle";
    case 3: return "square";
    default: return "background";
  }
}

double quantize_coord(double v) { return std::round(v * 256.0) / 256.0; }

namespace {

BBox quantize_box(const BBox& b) {
  return BBox::from_corners(quantize_coord(b.x1()), quantize_coord(b.y1()),
                            quantize_coord(b.x2()), quantize_coord(b.y2()));
}

struct Rgb {
  float r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) { r = c; g = x; }
  else if (hp < 2) { r = x; g = c; }
  else if (hp < 3) { g = c; b = x; }
  else if (hp < 4) { g = x; b = c; }
  else if (hp < 5) { r = x; b = c; }
  else { r = c; b = x; }
  const double m = v - c;
  return {static_cast<float>(r + m), static_cast<float>(g + m), static_cast<float>(b + m)};
}

enum class BgKind { noise, gradient };

void paint_noise_background(Tensor<float>& img, std::mt19937_64& rng) {
  const std::size_t H = img.shape()[0], W = img.shape()[1];
  // Value noise: a coarse grid of muted colors, bilinearly interpolated,
  // plus per-pixel jitter.
  constexpr int G = 9;
  std::uniform_real_distribution<double> cell(0.35, 0.7);
  std::uniform_real_distribution<double> jitter(-0.02, 0.02);
  float grid[G][G][3];
  for (int gy = 0; gy < G; ++gy)
    for (int gx = 0; gx < G; ++gx)
      for (int c = 0; c < 3; ++c) grid[gy][gx][c] = static_cast<float>(cell(rng));
  for (std::size_t y = 0; y < H; ++y) {
    const double fy = static_cast<double>(y) / (H - 1) * (G - 1);
    const int y0 = std::min(static_cast<int>(fy), G - 2);
    const double ty = fy - y0;
    for (std::size_t x = 0; x < W; ++x) {
      const double fx = static_cast<double>(x) / (W - 1) * (G - 1);
      const int x0 = std::min(static_cast<int>(fx), G - 2);
      const double tx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double v00 = grid[y0][x0][c], v01 = grid[y0][x0 + 1][c];
        const double v10 = grid[y0 + 1][x0][c], v11 = grid[y0 + 1][x0 + 1][c];
        const double v = (1 - ty) * ((1 - tx) * v00 + tx * v01) +
                         ty * ((1 - tx) * v10 + tx * v11) + jitter(rng);
        img[img.at3(y, x, static_cast<std::size_t>(c))] =
            static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
}

void paint_gradient_background(Tensor<float>& img, std::mt19937_64& rng) {
  const std::size_t H = img.shape()[0], W = img.shape()[1];
  std::uniform_real_distribution<double> chan(0.3, 0.75);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * 3.14159265358979323846);
  std::uniform_real_distribution<double> jitter(-0.01, 0.01);
  double c0[3], c1[3];
  for (int c = 0; c < 3; ++c) {
    c0[c] = chan(rng);
    c1[c] = chan(rng);
  }
  const double th = angle(rng);
  const double dx = std::cos(th), dy = std::sin(th);
  const double diag = std::sqrt(static_cast<double>(H * H + W * W));
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      const double t =
          ((static_cast<double>(x) - W / 2.0) * dx + (static_cast<double>(y) - H / 2.0) * dy) /
              diag +
          0.5;
      for (int c = 0; c < 3; ++c) {
        const double v = c0[c] + (c1[c] - c0[c]) * std::clamp(t, 0.0, 1.0) + jitter(rng);
        img[img.at3(y, x, static_cast<std::size_t>(c))] =
            static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
}

bool inside_shape(int class_id, const BBox& box, double px, double py) {
  const double dx = px - box.cx, dy = py - box.cy;
  switch (class_id) {
    case 1: {  // circle inscribed in the box
      const double r = box.w / 2;
      return dx * dx + dy * dy <= r * r;
    }
    case 2: {  // isoceles triangle, apex up
      if (dy < -box.h / 2 || dy > box.h / 2) return false;
      const double frac = (dy + box.h / 2) / box.h;  // 0 at apex, 1 at base
      return std::abs(dx) <= frac * box.w / 2;
    }
    case 3:  // axis-aligned square / rectangle fill
      return std::abs(dx) <= box.w / 2 && std::abs(dy) <= box.h / 2;
    default:
      return false;
  }
}

void draw_shape(Tensor<float>& img, int class_id, const BBox& box, const Rgb& color) {
  const std::size_t H = img.shape()[0], W = img.shape()[1];
  const std::size_t y0 = static_cast<std::size_t>(std::max(0.0, std::floor(box.y1())));
  const std::size_t y1 = std::min(H, static_cast<std::size_t>(std::max(0.0, std::ceil(box.y2()))));
  const std::size_t x0 = static_cast<std::size_t>(std::max(0.0, std::floor(box.x1())));
  const std::size_t x1 = std::min(W, static_cast<std::size_t>(std::max(0.0, std::ceil(box.x2()))));
  for (std::size_t y = y0; y < y1; ++y) {
    for (std::size_t x = x0; x < x1; ++x) {
      if (inside_shape(class_id, box, x + 0.5, y + 0.5)) {
        img[img.at3(y, x, 0)] = color.r;
        img[img.at3(y, x, 1)] = color.g;
        img[img.at3(y, x, 2)] = color.b;
      }
    }
  }
}

int draw_class_for_background(BgKind kind, std::mt19937_64& rng, int num_classes) {
  if (num_classes < 3) {
    std::uniform_int_distribution<int> pick(1, num_classes);
    return pick(rng);
  }
  // Co-occurrence rule: gradient -> triangle 2/3, square 1/3;
  // noise -> circle 2/3, square 1/3. Marginals are uniform over classes.
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = u(rng);
  if (kind == BgKind::gradient) return r < 2.0 / 3.0 ? 2 : 3;
  return r < 2.0 / 3.0 ? 1 : 3;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 over the combined word
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Sample generate_image(std::uint64_t seed, const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(seed);
  Sample sample;
  sample.image = Tensor<float>({static_cast<std::size_t>(spec.height),
                                static_cast<std::size_t>(spec.width), 3});

  std::uniform_real_distribution<double> u(0.0, 1.0);
  const BgKind kind = u(rng) < 0.5 ? BgKind::noise : BgKind::gradient;
  if (kind == BgKind::noise) {
    paint_noise_background(sample.image, rng);
  } else {
    paint_gradient_background(sample.image, rng);
  }

  std::uniform_int_distribution<int> count_dist(spec.min_objects, spec.max_objects);
  const int count = count_dist(rng);
  std::uniform_real_distribution<double> size_dist(spec.min_size, spec.max_size);
  std::uniform_real_distribution<double> hue(0.0, 1.0);
  std::uniform_real_distribution<double> val(0.7, 0.95);

  for (int k = 0; k < count; ++k) {
    const int class_id = draw_class_for_background(kind, rng, spec.num_classes);
    double w = size_dist(rng), h = size_dist(rng);
    if (class_id == 1 || class_id == 3) h = w;  // circles and squares stay 1:1
    BBox box;
    const bool occlude = k > 0 && u(rng) < spec.occlusion_prob;
    bool placed = false;
    for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
      std::uniform_real_distribution<double> cx_dist(w / 2, spec.width - w / 2);
      std::uniform_real_distribution<double> cy_dist(h / 2, spec.height - h / 2);
      if (occlude) {
        // Drop the new shape partially over an existing one.
        const BBox& anchor = sample.gts[static_cast<std::size_t>(k - 1)].box;
        std::uniform_real_distribution<double> off(-0.7, 0.7);
        box = BBox{anchor.cx + off(rng) * anchor.w, anchor.cy + off(rng) * anchor.h, w, h};
        if (box.x1() < 0 || box.y1() < 0 || box.x2() > spec.width || box.y2() > spec.height) {
          continue;
        }
        const double overlap = iou(box, anchor);
        if (overlap < 0.1 || overlap > 0.6) continue;
        placed = true;
      } else {
        box = BBox{cx_dist(rng), cy_dist(rng), w, h};
        placed = true;
        for (const GtBox& g : sample.gts) {
          if (iou(box, g.box) > 0.25) {
            placed = false;
            break;
          }
        }
      }
    }
    if (!placed) continue;  // crowded canvas; keep the image with fewer shapes
    box = quantize_box(box);
    const Rgb color = hsv_to_rgb(hue(rng), 0.85, val(rng));
    draw_shape(sample.image, class_id, box, color);
    sample.gts.push_back({class_id, box});
  }

  if (sample.gts.empty()) {
    // Guaranteed fallback so every image carries at least one object.
    const int class_id = draw_class_for_background(kind, rng, spec.num_classes);
    const double s = spec.min_size;
    BBox box = quantize_box(BBox{spec.width / 2.0, spec.height / 2.0, s, s});
    draw_shape(sample.image, class_id, box, hsv_to_rgb(hue(rng), 0.85, val(rng)));
    sample.gts.push_back({class_id, box});
  }
  return sample;
}

std::vector<BBox> generate_proposals(const std::vector<GtBox>& gts, std::uint64_t seed, int n,
                                     const SceneSpec& spec) {
  if (n < 2 * static_cast<int>(gts.size())) {
    throw std::invalid_argument("generate_proposals: n must be at least twice the GT count");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double W = spec.width, H = spec.height;
  std::vector<BBox> out;

  auto clip_quantize = [&](const BBox& b) -> BBox {
    const double x1 = std::clamp(b.x1(), 0.0, W - 1.0);
    const double y1 = std::clamp(b.y1(), 0.0, H - 1.0);
    const double x2 = std::clamp(b.x2(), x1 + 1.0, W);
    const double y2 = std::clamp(b.y2(), y1 + 1.0, H);
    return quantize_box(BBox::from_corners(x1, y1, x2, y2));
  };

  for (const GtBox& g : gts) {
    // Tight bucket: guaranteed IoU >= 0.7 matches.
    for (int k = 0; k < 8; ++k) {
      BBox cand = g.box;
      for (int attempt = 0; attempt < 20; ++attempt) {
        BBox j{g.box.cx + (u(rng) - 0.5) * 0.1 * g.box.w,
               g.box.cy + (u(rng) - 0.5) * 0.1 * g.box.h,
               g.box.w * std::exp((u(rng) - 0.5) * 0.2),
               g.box.h * std::exp((u(rng) - 0.5) * 0.2)};
        j = clip_quantize(j);
        if (iou(j, g.box) >= 0.7) {
          cand = j;
          break;
        }
      }
      out.push_back(clip_quantize(cand));
    }
    // Medium bucket: foreground-band matches that still need refinement.
    for (int k = 0; k < 8; ++k) {
      BBox cand = g.box;
      for (int attempt = 0; attempt < 30; ++attempt) {
        BBox j{g.box.cx + (u(rng) - 0.5) * 0.4 * g.box.w,
               g.box.cy + (u(rng) - 0.5) * 0.4 * g.box.h,
               g.box.w * std::exp((u(rng) - 0.5) * 0.5),
               g.box.h * std::exp((u(rng) - 0.5) * 0.5)};
        j = clip_quantize(j);
        const double v = iou(j, g.box);
        if (v > 0.5 && v <= 0.85) {
          cand = j;
          break;
        }
      }
      out.push_back(clip_quantize(cand));
    }
    // Distractor bucket: IoU in [0.1, 0.5).
    for (int k = 0; k < 4; ++k) {
      bool found = false;
      for (int attempt = 0; attempt < 50 && !found; ++attempt) {
        BBox j{g.box.cx + (u(rng) - 0.5) * 1.4 * g.box.w,
               g.box.cy + (u(rng) - 0.5) * 1.4 * g.box.h,
               g.box.w * std::exp((u(rng) - 0.5) * 1.0),
               g.box.h * std::exp((u(rng) - 0.5) * 1.0)};
        j = clip_quantize(j);
        const double v = iou(j, g.box);
        if (v >= 0.1 && v < 0.5) {
          out.push_back(j);
          found = true;
        }
      }
      if (!found) {
        // Deterministic fallback: slide by 0.6 w in each direction and take
        // the first shift landing in the band.
        for (const auto& [dx, dy] : std::initializer_list<std::pair<double, double>>{
                 {0.6, 0.0}, {-0.6, 0.0}, {0.0, 0.6}, {0.0, -0.6}}) {
          BBox j{g.box.cx + dx * g.box.w, g.box.cy + dy * g.box.h, g.box.w, g.box.h};
          j = clip_quantize(j);
          const double v = iou(j, g.box);
          if (v >= 0.1 && v < 0.5) {
            out.push_back(j);
            found = true;
            break;
          }
        }
      }
    }
  }

  std::uniform_real_distribution<double> log_size(std::log(8.0),
                                                  std::log(0.9 * std::min(W, H)));
  while (static_cast<int>(out.size()) < n) {
    const double w = std::exp(log_size(rng));
    const double h = std::exp(log_size(rng));
    BBox b{u(rng) * W, u(rng) * H, w, h};
    if (!b.intersects_image(W, H)) continue;
    out.push_back(clip_quantize(b));
  }
  out.resize(static_cast<std::size_t>(n));
  return out;
}

Sample generate_sample(std::uint64_t seed, const SceneSpec& spec) {
  Sample s = generate_image(seed, spec);
  s.proposals = generate_proposals(s.gts, mix_seed(seed, 0x70726f70ULL),
                                   spec.proposals_per_image, spec);
  return s;
}

std::vector<Sample> generate_corpus(std::uint64_t master_seed, int count, const SceneSpec& spec,
                                    int id_offset, int threads) {
  std::vector<Sample> corpus(static_cast<std::size_t>(count));
  auto fill = [&](int begin, int step) {
    for (int i = begin; i < count; i += step) {
      Sample s = generate_sample(mix_seed(master_seed, static_cast<std::uint64_t>(i)), spec);
      s.image_id = id_offset + i;
      corpus[static_cast<std::size_t>(i)] = std::move(s);
    }
  };
  if (threads <= 1) {
    fill(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(fill, t, threads);
    for (auto& th : pool) th.join();
  }
  return corpus;
}

Sample flip_augment(const Sample& sample, int coin) {
  if (coin == 0) return sample;
  Sample out;
  out.image_id = sample.image_id;
  const std::size_t H = sample.image.shape()[0], W = sample.image.shape()[1];
  out.image = Tensor<float>({H, W, 3});
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        out.image[out.image.at3(y, x, c)] = sample.image[sample.image.at3(y, W - 1 - x, c)];
  const double w = static_cast<double>(W);
  out.gts.reserve(sample.gts.size());
  for (const GtBox& g : sample.gts) out.gts.push_back({g.class_id, flip_horizontal(g.box, w)});
  out.proposals.reserve(sample.proposals.size());
  for (const BBox& p : sample.proposals) out.proposals.push_back(flip_horizontal(p, w));
  return out;
}

namespace {

struct Matched {
  double best_iou = 0.0;
  int gt_index = -1;
};

std::vector<Matched> match_proposals(const Sample& s) {
  std::vector<Matched> m(s.proposals.size());
  for (std::size_t p = 0; p < s.proposals.size(); ++p) {
    for (std::size_t g = 0; g < s.gts.size(); ++g) {
      const double v = iou(s.proposals[p], s.gts[g].box);
      if (v > m[p].best_iou) {
        m[p].best_iou = v;
        m[p].gt_index = static_cast<int>(g);
      }
    }
  }
  return m;
}

}  // namespace

MiniBatch sample_minibatch(const std::vector<Sample>& corpus, const SamplerConfig& cfg,
                           std::mt19937_64& rng) {
  if (corpus.size() < 2) throw std::invalid_argument("sample_minibatch: need >= 2 images");
  MiniBatch batch;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<std::size_t> picks;
  std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);
  while (picks.size() < static_cast<std::size_t>(cfg.images_per_batch)) {
    const std::size_t i = pick(rng);
    if (std::find(picks.begin(), picks.end(), i) == picks.end()) picks.push_back(i);
  }

  const int fg_quota = static_cast<int>(std::lround(cfg.fg_fraction * cfg.rois_per_image));
  for (std::size_t idx : picks) {
    const int coin = u(rng) < cfg.flip_prob ? 1 : 0;
    Sample view = flip_augment(corpus[idx], coin);
    auto matches = match_proposals(view);

    std::vector<std::size_t> fg, bg;
    for (std::size_t p = 0; p < view.proposals.size(); ++p) {
      if (matches[p].best_iou > cfg.fg_iou) {
        fg.push_back(p);
      } else if (matches[p].best_iou >= cfg.bg_iou_lo && matches[p].best_iou < cfg.bg_iou_hi) {
        bg.push_back(p);
      }
    }
    std::shuffle(fg.begin(), fg.end(), rng);
    std::shuffle(bg.begin(), bg.end(), rng);

    ImageRois rois;
    rois.corpus_index = idx;
    rois.flipped = coin == 1;
    rois.image = view.image;

    auto push_fg = [&](const BBox& box, const GtBox& gt) {
      RoiSample r;
      r.box = box;
      r.target.label = gt.class_id;
      r.target.target = encode_target(box, gt.box);
      rois.rois.push_back(r);
    };

    int need_fg = std::min<int>(fg_quota, static_cast<int>(fg.size()));
    for (int i = 0; i < need_fg; ++i) {
      const std::size_t p = fg[static_cast<std::size_t>(i)];
      push_fg(view.proposals[p], view.gts[static_cast<std::size_t>(matches[p].gt_index)]);
    }
    // Refill missing foreground from fresh tight jitters around GTs.
    int missing_fg = fg_quota - need_fg;
    if (missing_fg > 0) ++batch.refill_warnings;
    std::uniform_int_distribution<std::size_t> gt_pick(0, view.gts.size() - 1);
    int guard = 0;
    while (missing_fg > 0 && guard++ < 1000) {
      const GtBox& gt = view.gts[gt_pick(rng)];
      BBox j{gt.box.cx + (u(rng) - 0.5) * 0.15 * gt.box.w,
             gt.box.cy + (u(rng) - 0.5) * 0.15 * gt.box.h,
             gt.box.w * std::exp((u(rng) - 0.5) * 0.25),
             gt.box.h * std::exp((u(rng) - 0.5) * 0.25)};
      const double x1 = std::clamp(j.x1(), 0.0, view.image.shape()[1] - 1.0);
      const double y1 = std::clamp(j.y1(), 0.0, view.image.shape()[0] - 1.0);
      const double x2 = std::clamp(j.x2(), x1 + 1.0, static_cast<double>(view.image.shape()[1]));
      const double y2 = std::clamp(j.y2(), y1 + 1.0, static_cast<double>(view.image.shape()[0]));
      j = BBox::from_corners(quantize_coord(x1), quantize_coord(y1), quantize_coord(x2),
                             quantize_coord(y2));
      if (iou(j, gt.box) > cfg.fg_iou) {
        push_fg(j, gt);
        --missing_fg;
      }
    }

    const int bg_quota = cfg.rois_per_image - static_cast<int>(rois.rois.size());
    int need_bg = std::min<int>(bg_quota, static_cast<int>(bg.size()));
    for (int i = 0; i < need_bg; ++i) {
      RoiSample r;
      r.box = view.proposals[bg[static_cast<std::size_t>(i)]];
      r.target.label = 0;
      rois.rois.push_back(r);
    }
    int missing_bg = bg_quota - need_bg;
    if (missing_bg > 0) ++batch.refill_warnings;
    guard = 0;
    const double W = static_cast<double>(view.image.shape()[1]);
    const double H = static_cast<double>(view.image.shape()[0]);
    while (missing_bg > 0 && guard++ < 2000) {
      BBox b{u(rng) * W, u(rng) * H, 8.0 + u(rng) * (W / 2 - 8.0), 8.0 + u(rng) * (H / 2 - 8.0)};
      if (!b.intersects_image(W, H)) continue;
      b = BBox::from_corners(quantize_coord(std::max(0.0, b.x1())),
                             quantize_coord(std::max(0.0, b.y1())),
                             quantize_coord(std::min(W, b.x2())),
                             quantize_coord(std::min(H, b.y2())));
      if (b.w < 1 || b.h < 1) continue;
      double best = 0.0;
      for (const GtBox& g : view.gts) best = std::max(best, iou(b, g.box));
      if (best >= cfg.bg_iou_lo && best < cfg.bg_iou_hi) {
        RoiSample r;
        r.box = b;
        r.target.label = 0;
        rois.rois.push_back(r);
        --missing_bg;
      }
    }

    batch.images.push_back(std::move(rois));
  }
  return batch;
}

namespace {

json box_to_json(const BBox& b) {
  const auto c = b.corners();
  return json::array({c[0], c[1], c[2], c[3]});
}

BBox box_from_json(const json& j) {
  return BBox::from_corners(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(),
                            j.at(3).get<double>());
}

}  // namespace

void save_corpus(const std::string& dir, const std::vector<Sample>& corpus) {
  fs::create_directories(fs::path(dir) / "images");
  std::ofstream ann(fs::path(dir) / "annotations.jsonl");
  std::ofstream prop(fs::path(dir) / "proposals.jsonl");
  if (!ann || !prop) throw std::runtime_error("save_corpus: cannot write under " + dir);
  for (const Sample& s : corpus) {
    char name[32];
    std::snprintf(name, sizeof(name), "img_%05d.ppm", s.image_id);
    write_ppm((fs::path(dir) / "images" / name).string(), s.image);
    json a{{"image_id", s.image_id},
           {"width", s.image.shape()[1]},
           {"height", s.image.shape()[0]},
           {"gts", json::array()}};
    for (const GtBox& g : s.gts) {
      a["gts"].push_back({{"class_id", g.class_id}, {"box", box_to_json(g.box)}});
    }
    ann << a.dump() << "\n";
    json p{{"image_id", s.image_id}, {"boxes", json::array()}};
    for (const BBox& b : s.proposals) p["boxes"].push_back(box_to_json(b));
    prop << p.dump() << "\n";
  }
}

std::vector<Sample> load_corpus(const std::string& dir) {
  std::ifstream ann(fs::path(dir) / "annotations.jsonl");
  std::ifstream prop(fs::path(dir) / "proposals.jsonl");
  if (!ann || !prop) throw std::runtime_error("load_corpus: missing jsonl files in " + dir);
  std::vector<Sample> corpus;
  std::string aline, pline;
  while (std::getline(ann, aline)) {
    if (!std::getline(prop, pline)) {
      throw std::runtime_error("load_corpus: proposals.jsonl shorter than annotations.jsonl");
    }
    const json a = json::parse(aline);
    const json p = json::parse(pline);
    Sample s;
    s.image_id = a.at("image_id").get<int>();
    if (p.at("image_id").get<int>() != s.image_id) {
      throw std::runtime_error("load_corpus: annotation/proposal image_id mismatch");
    }
    char name[32];
    std::snprintf(name, sizeof(name), "img_%05d.ppm", s.image_id);
    s.image = read_ppm((fs::path(dir) / "images" / name).string());
    for (const json& g : a.at("gts")) {
      s.gts.push_back({g.at("class_id").get<int>(), box_from_json(g.at("box"))});
    }
    for (const json& b : p.at("boxes")) s.proposals.push_back(box_from_json(b));
    corpus.push_back(std::move(s));
  }
  return corpus;
}

}  // namespace accnn
