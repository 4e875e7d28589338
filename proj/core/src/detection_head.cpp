#include "accnn/detection_head.hpp"

#include <algorithm>
#include <numeric>

namespace accnn {

std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_thr) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  std::vector<Detection> kept;
  for (std::size_t idx : order) {
    const BBox cand = BBox::from_corners(dets[idx].box[0], dets[idx].box[1], dets[idx].box[2],
                                         dets[idx].box[3]);
    bool suppressed = false;
    for (const Detection& k : kept) {
      const BBox kb = BBox::from_corners(k.box[0], k.box[1], k.box[2], k.box[3]);
      if (iou(cand, kb) >= iou_thr) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(dets[idx]);
  }
  return kept;
}

}  // namespace accnn
