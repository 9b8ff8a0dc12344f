#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "flowcut/image.hpp"

namespace flowcut {

struct EvalReport {
  std::string sequence_name;
  std::vector<double> per_frame_iou;
  double sequence_miou = 0.0;
};

// Jaccard index. Both masks empty counts as a correct prediction (1).
double iou(const BinaryMask& pred, const BinaryMask& gt);

EvalReport evaluate_sequence(const std::vector<BinaryMask>& preds,
                             const std::vector<BinaryMask>& gts,
                             const std::string& name);

// CSV rows `frame_index,iou` followed by a final `miou,<value>` row.
void write_eval_csv(const EvalReport& report, const std::filesystem::path& path);

}  // namespace flowcut
