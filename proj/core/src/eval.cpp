#include "accnn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "accnn/image_io.hpp"

namespace accnn {

using nlohmann::json;

ApMode parse_ap_mode(const std::string& s) {
  if (s == "all-points" || s == "all_points") return ApMode::all_points;
  if (s == "11-point" || s == "eleven_point") return ApMode::eleven_point;
  throw std::invalid_argument("unknown AP mode: " + s + " (use all-points or 11-point)");
}

std::string ap_mode_name(ApMode mode) {
  return mode == ApMode::all_points ? "all-points" : "11-point";
}

namespace {

BBox det_box(const std::array<double, 4>& c) {
  return BBox::from_corners(c[0], c[1], c[2], c[3]);
}

struct MatchResult {
  std::vector<bool> tp;    // per sorted detection
  std::vector<std::size_t> order;
  std::size_t npos = 0;
};

/// Greedy matching shared by AP and the error categorizer: walk detections by
/// descending score and claim the max-IoU unmatched GT of the same image.
MatchResult greedy_match(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                         int class_id, double iou_thr) {
  MatchResult res;
  std::vector<std::size_t> det_idx;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (dets[i].class_id == class_id) det_idx.push_back(i);
  }
  std::stable_sort(det_idx.begin(), det_idx.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });
  std::vector<std::size_t> gt_idx;
  for (std::size_t i = 0; i < gts.size(); ++i) {
    if (gts[i].class_id == class_id) gt_idx.push_back(i);
  }
  res.npos = gt_idx.size();
  std::vector<bool> taken(gt_idx.size(), false);
  res.order = det_idx;
  res.tp.assign(det_idx.size(), false);
  for (std::size_t k = 0; k < det_idx.size(); ++k) {
    const Detection& d = dets[det_idx[k]];
    double best = 0.0;
    std::size_t best_g = gt_idx.size();
    for (std::size_t g = 0; g < gt_idx.size(); ++g) {
      const GroundTruth& gt = gts[gt_idx[g]];
      if (gt.image_id != d.image_id) continue;
      const double v = iou(det_box(d.box), det_box(gt.box));
      if (v > best) {
        best = v;
        best_g = g;
      }
    }
    if (best >= iou_thr && best_g < gt_idx.size() && !taken[best_g]) {
      taken[best_g] = true;
      res.tp[k] = true;
    }
  }
  return res;
}

}  // namespace

double average_precision(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
                         int class_id, double iou_thr, ApMode mode,
                         std::vector<PRPoint>* curve) {
  const MatchResult m = greedy_match(dets, gts, class_id, iou_thr);
  if (m.npos == 0) return std::nan("");
  std::vector<double> precision, recall;
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < m.order.size(); ++k) {
    if (m.tp[k]) ++tp; else ++fp;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(m.npos));
    if (curve) {
      curve->push_back({recall.back(), precision.back(), dets[m.order[k]].score});
    }
  }
  if (precision.empty()) return 0.0;

  // Interpolated precision: running max from the right.
  std::vector<double> interp = precision;
  for (std::size_t k = interp.size() - 1; k-- > 0;) {
    interp[k] = std::max(interp[k], interp[k + 1]);
  }

  if (mode == ApMode::eleven_point) {
    double acc = 0.0;
    for (int i = 0; i <= 10; ++i) {
      const double r = i / 10.0;
      double p = 0.0;
      for (std::size_t k = 0; k < recall.size(); ++k) {
        if (recall[k] >= r - 1e-12) {
          p = interp[k];
          break;
        }
      }
      acc += p;
    }
    return acc / 11.0;
  }

  // All-points: area under the step curve of interpolated precision.
  double ap = 0.0;
  double prev_r = 0.0;
  for (std::size_t k = 0; k < recall.size(); ++k) {
    if (recall[k] > prev_r) {
      ap += (recall[k] - prev_r) * interp[k];
      prev_r = recall[k];
    }
  }
  return ap;
}

double mean_ap(const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
               const std::vector<int>& classes, double iou_thr, ApMode mode,
               std::map<int, double>* per_class, std::vector<int>* skipped) {
  double sum = 0.0;
  int defined = 0;
  for (int c : classes) {
    const double ap = average_precision(dets, gts, c, iou_thr, mode);
    if (std::isnan(ap)) {
      if (skipped) skipped->push_back(c);
      continue;
    }
    if (per_class) (*per_class)[c] = ap;
    sum += ap;
    ++defined;
  }
  if (defined == 0) {
    throw std::runtime_error("mean_ap: no class has ground truth");
  }
  return sum / defined;
}

std::map<int, std::array<int, 5>> categorize_false_positives(
    const std::vector<Detection>& dets, const std::vector<GroundTruth>& gts,
    const std::map<int, std::vector<int>>& similar_classes) {
  std::map<int, std::array<int, 5>> out;
  std::vector<int> classes;
  for (const GroundTruth& g : gts) {
    if (std::find(classes.begin(), classes.end(), g.class_id) == classes.end()) {
      classes.push_back(g.class_id);
    }
  }
  std::sort(classes.begin(), classes.end());

  for (int c : classes) {
    const MatchResult m = greedy_match(dets, gts, c, 0.5);
    if (m.npos == 0) continue;
    std::array<int, 5> counts{0, 0, 0, 0, 0};
    const std::size_t top_n = std::min(m.order.size(), m.npos);
    std::vector<int> sim;
    if (auto it = similar_classes.find(c); it != similar_classes.end()) sim = it->second;

    for (std::size_t k = 0; k < top_n; ++k) {
      const Detection& d = dets[m.order[k]];
      FPCategory cat;
      if (m.tp[k]) {
        cat = FPCategory::Cor;
      } else {
        double same = 0.0, similar = 0.0, other = 0.0;
        for (const GroundTruth& g : gts) {
          if (g.image_id != d.image_id) continue;
          const double v = iou(det_box(d.box), det_box(g.box));
          if (g.class_id == c) {
            same = std::max(same, v);
          } else if (std::find(sim.begin(), sim.end(), g.class_id) != sim.end()) {
            similar = std::max(similar, v);
          } else {
            other = std::max(other, v);
          }
        }
        if (same >= 0.1) cat = FPCategory::Loc;
        else if (similar >= 0.1) cat = FPCategory::Sim;
        else if (other >= 0.1) cat = FPCategory::Oth;
        else cat = FPCategory::BG;
      }
      ++counts[static_cast<std::size_t>(cat)];
    }
    out[c] = counts;
  }
  return out;
}

void export_attention_map(const std::vector<double>& map, int K, const std::string& stem,
                          int upsample) {
  const std::size_t kk = static_cast<std::size_t>(K) * static_cast<std::size_t>(K);
  if (map.size() != kk) {
    throw std::invalid_argument("export_attention_map: map size does not match K");
  }
  double sum = 0.0;
  for (double v : map) {
    if (v < 0) throw std::invalid_argument("export_attention_map: negative map entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-4) {
    throw std::invalid_argument("export_attention_map: map does not sum to 1");
  }

  std::ofstream csv(stem + ".csv");
  if (!csv) throw std::runtime_error("export_attention_map: cannot open " + stem + ".csv");
  csv.precision(17);
  for (int y = 0; y < K; ++y) {
    for (int x = 0; x < K; ++x) {
      if (x) csv << ",";
      csv << map[static_cast<std::size_t>(y * K + x)];
    }
    csv << "\n";
  }
  if (!csv) throw std::runtime_error("export_attention_map: csv write failed");

  double maxv = 0.0;
  for (double v : map) maxv = std::max(maxv, v);
  const int up = std::max(upsample, K);
  std::vector<std::uint8_t> gray(static_cast<std::size_t>(up) * up, 0);
  for (int y = 0; y < up; ++y) {
    const int sy = y * K / up;
    for (int x = 0; x < up; ++x) {
      const int sx = x * K / up;
      const double v = map[static_cast<std::size_t>(sy * K + sx)];
      gray[static_cast<std::size_t>(y) * up + x] =
          maxv > 0 ? static_cast<std::uint8_t>(std::lround(v / maxv * 255.0)) : 0;
    }
  }
  write_pgm(stem + ".pgm", gray, static_cast<std::size_t>(up), static_cast<std::size_t>(up));
}

std::vector<double> parse_attention_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("parse_attention_csv: cannot open " + path);
  std::vector<double> out;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) out.push_back(std::stod(cell));
  }
  return out;
}

void write_detections_jsonl(const std::string& path, const std::vector<Detection>& dets) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_detections_jsonl: cannot open " + path);
  for (const Detection& d : dets) {
    json j{{"image_id", d.image_id},
           {"class_id", d.class_id},
           {"score", d.score},
           {"box", json::array({d.box[0], d.box[1], d.box[2], d.box[3]})}};
    os << j.dump() << "\n";
  }
}

std::vector<Detection> read_detections_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_detections_jsonl: cannot open " + path);
  std::vector<Detection> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    Detection d;
    d.image_id = j.at("image_id").get<int>();
    d.class_id = j.at("class_id").get<int>();
    d.score = j.at("score").get<double>();
    const auto& b = j.at("box");
    d.box = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
             b.at(3).get<double>()};
    out.push_back(d);
  }
  return out;
}

std::vector<GroundTruth> ground_truth_from_corpus(const std::vector<Sample>& corpus) {
  std::vector<GroundTruth> out;
  for (const Sample& s : corpus) {
    for (const GtBox& g : s.gts) {
      out.push_back({s.image_id, g.class_id, g.box.corners()});
    }
  }
  return out;
}

std::vector<GroundTruth> read_ground_truth_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_ground_truth_jsonl: cannot open " + path);
  std::vector<GroundTruth> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    const int image_id = j.at("image_id").get<int>();
    for (const json& g : j.at("gts")) {
      const auto& b = g.at("box");
      out.push_back({image_id, g.at("class_id").get<int>(),
                     {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                      b.at(3).get<double>()}});
    }
  }
  return out;
}

}  // namespace accnn
