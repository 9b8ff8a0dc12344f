#include "flowcut/eval.hpp"

#include <fstream>
#include <stdexcept>

namespace flowcut {

double iou(const BinaryMask& pred, const BinaryMask& gt) {
  if (pred.height != gt.height || pred.width != gt.width)
    throw std::invalid_argument("iou: dimensions differ");
  size_t inter = 0, uni = 0;
  for (size_t i = 0; i < pred.values.size(); ++i) {
    bool p = pred.values[i] != 0, g = gt.values[i] != 0;
    inter += p && g;
    uni += p || g;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

EvalReport evaluate_sequence(const std::vector<BinaryMask>& preds,
                             const std::vector<BinaryMask>& gts,
                             const std::string& name) {
  if (preds.size() != gts.size() || preds.empty())
    throw std::invalid_argument("evaluate_sequence: need equal nonzero counts");
  EvalReport report;
  report.sequence_name = name;
  double sum = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) {
    double v = iou(preds[i], gts[i]);
    report.per_frame_iou.push_back(v);
    sum += v;
  }
  report.sequence_miou = sum / static_cast<double>(preds.size());
  return report;
}

void write_eval_csv(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << "frame_index,iou\n";
  char buf[64];
  for (size_t i = 0; i < report.per_frame_iou.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f\n", i, report.per_frame_iou[i]);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "miou,%.6f\n", report.sequence_miou);
  out << buf;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace flowcut
