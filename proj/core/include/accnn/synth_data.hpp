#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "accnn/bbox.hpp"
#include "accnn/detection_head.hpp"
#include "accnn/tensor.hpp"

namespace accnn {

/// Synthetic shapes corpus. Class ids: 1 = circle, 2 = triangle, 3 = square.
/// Backgrounds are either smooth noise or a linear gradient, and classes
/// co-occur with background kind (triangles only on gradients, circles only
/// on noise, squares on both) so global context carries real signal.
struct SceneSpec {
  int width = 128;
  int height = 128;
  int num_classes = 3;
  int min_objects = 1;
  int max_objects = 3;
  double min_size = 12.0;
  double max_size = 48.0;
  double occlusion_prob = 0.3;
  int proposals_per_image = 128;

  void validate() const;
};

struct GtBox {
  int class_id = 0;
  BBox box;
};

struct Sample {
  int image_id = 0;
  Tensor<float> image;  // (H, W, 3) floats in [0, 1]
  std::vector<GtBox> gts;
  std::vector<BBox> proposals;
};

const char* class_name(int class_id);

/// All box coordinates are quantized to a 1/256-pixel grid so that mirroring
/// and corner/center conversions are exact in floating point.
double quantize_coord(double v);

/// Renders one image with ground truth; deterministic per seed.
Sample generate_image(std::uint64_t seed, const SceneSpec& spec);

/// Jittered-proposal generator: per GT, a bucket of tight jitters (IoU >=
/// 0.7), a bucket of localization distractors (IoU in [0.1, 0.5)), and
/// uniform random boxes to fill n. All boxes lie within the image.
std::vector<BBox> generate_proposals(const std::vector<GtBox>& gts, std::uint64_t seed, int n,
                                     const SceneSpec& spec);

/// generate_image plus proposals from a derived seed.
Sample generate_sample(std::uint64_t seed, const SceneSpec& spec);

/// Deterministic corpus; image_id runs from id_offset. Each image depends
/// only on its own derived seed, so generation may run on several threads
/// without changing a single byte of the result.
std::vector<Sample> generate_corpus(std::uint64_t master_seed, int count, const SceneSpec& spec,
                                    int id_offset = 0, int threads = 1);

/// Horizontal mirror of image, ground truth, and proposals when coin is 1;
/// exact involution on every field.
Sample flip_augment(const Sample& sample, int coin);

struct SamplerConfig {
  int images_per_batch = 2;
  int rois_per_image = 64;
  double fg_fraction = 0.25;
  double fg_iou = 0.5;
  double bg_iou_lo = 0.0;
  double bg_iou_hi = 0.5;
  double flip_prob = 0.5;
};

struct RoiSample {
  BBox box;
  RoiTarget target;
};

struct ImageRois {
  std::size_t corpus_index = 0;
  bool flipped = false;
  Tensor<float> image;
  std::vector<RoiSample> rois;
};

struct MiniBatch {
  std::vector<ImageRois> images;
  int refill_warnings = 0;
};

/// Fast-RCNN style minibatch: images_per_batch images, rois_per_image RoIs
/// each, fg_fraction of them foreground (max IoU with a GT > fg_iou, labeled
/// with that GT's class and encoded target), the rest background from
/// IoU in [bg_iou_lo, bg_iou_hi). Quota shortfalls refill from fresh GT
/// jitters and are counted in refill_warnings.
MiniBatch sample_minibatch(const std::vector<Sample>& corpus, const SamplerConfig& cfg,
                           std::mt19937_64& rng);

/// Corpus persistence: images as binary P6 pixmaps under <dir>/images, plus
/// annotations.jsonl and proposals.jsonl with one line per image.
void save_corpus(const std::string& dir, const std::vector<Sample>& corpus);
std::vector<Sample> load_corpus(const std::string& dir);

}  // namespace accnn
