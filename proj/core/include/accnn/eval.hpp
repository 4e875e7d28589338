#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "accnn/detection_head.hpp"
#include "accnn/synth_data.hpp"

namespace accnn {

struct GroundTruth {
  int image_id = 0;
  int class_id = 0;
  std::array<double, 4> box{0, 0, 0, 0};  // corner form
};

enum class ApMode { all_points, eleven_point };

ApMode parse_ap_mode(const std::string& s);
std::string ap_mode_name(ApMode mode);

struct PRPoint {
  double recall = 0;
  double precision = 0;
  double score = 0;
};

/// PASCAL-protocol AP for one class: detections sorted by score (stable on
/// ties), each matched greedily to the max-IoU unmatched GT of its image,
/// TP iff IoU >= iou_thr. Returns NaN when the class has no ground truth.
/// The PR sweep is exposed for reporting.
double average_precision(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                         int class_id, double iou_thr = 0.5, ApMode mode = ApMode::all_points,
                         std::vector<PRPoint>* curve = nullptr);

/// Unweighted mean over classes with defined AP; classes that have no GT are
/// reported in skipped.
double mean_ap(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
               const std::vector<int>& classes, double iou_thr = 0.5,
               ApMode mode = ApMode::all_points, std::map<int, double>* per_class = nullptr,
               std::vector<int>* skipped = nullptr);

enum class FPCategory { Cor = 0, Loc = 1, Sim = 2, Oth = 3, BG = 4 };

/// Per-class counts over {Cor, Loc, Sim, Oth, BG} of the top-N scored
/// detections, N = number of GT objects of the class. Cor = matched true
/// positive at IoU 0.5; Loc = unmatched with same-class IoU >= 0.1 (poor
/// localization or duplicate); Sim / Oth = confusions with similar / other
/// classes at IoU >= 0.1; BG = max IoU < 0.1 with everything.
std::map<int, std::array<int, 5>> categorize_false_positives(
    const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
    const std::map<int, std::vector<int>>& similar_classes);

/// Writes <stem>.csv (the K x K grid) and <stem>.pgm (grayscale, max
/// rescaled to 255, nearest-neighbor upsampled to upsample x upsample).
void export_attention_map(const std::vector<double>& map, int K, const std::string& stem,
                          int upsample);

std::vector<double> parse_attention_csv(const std::string& path);

// JSON-lines serialization shared by the CLI and the evaluator.
void write_detections_jsonl(const std::string& path, const std::vector<Detection>& dets);
std::vector<Detection> read_detections_jsonl(const std::string& path);

std::vector<GroundTruth> ground_truth_from_corpus(const std::vector<Sample>& corpus);
std::vector<GroundTruth> read_ground_truth_jsonl(const std::string& path);

}  // namespace accnn
