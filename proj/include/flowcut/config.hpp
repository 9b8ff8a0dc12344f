#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "flowcut/flow.hpp"
#include "flowcut/graphcut.hpp"
#include "flowcut/seghead.hpp"

namespace flowcut {

// One configuration document for the whole pipeline. Unknown keys are
// rejected so typos fail loudly.
struct PipelineConfig {
  uint64_t seed = 0;
  // Default sequence/output locations; command-line positionals win.
  std::optional<std::filesystem::path> seq_dir;
  std::optional<std::filesystem::path> out_dir;
  GraphCutConfig graphcut;
  HSConfig flow;
  // External .flo directories per stage. When set, the stage reads flows
  // from files only and a missing file is an error.
  std::optional<std::filesystem::path> graphcut_flow_dir;
  std::optional<std::filesystem::path> warp_flow_dir;
  // Directory of FGRD tensors (%05d_img.fgrd / %05d_flow.fgrd) replacing the
  // built-in featurizer in the graph-cut stage.
  std::optional<std::filesystem::path> features_dir;
  TrainConfig train;
  double eval_threshold = 0.5;  // binarization of inferred soft masks

  static PipelineConfig from_json_file(const std::filesystem::path& path);
  static PipelineConfig from_json_text(const std::string& text);
  std::string to_json_text() const;  // schema with current values

  void validate() const;
};

}  // namespace flowcut
