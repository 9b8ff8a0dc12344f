#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "flowcut/config.hpp"
#include "flowcut/eval.hpp"
#include "flowcut/image.hpp"
#include "flowcut/seghead.hpp"

namespace flowcut {

// Flow file naming for consecutive pair i: %05d_fw.flo is the flow from
// frame i to i+1, %05d_bw.flo the flow from i+1 back to i.
std::string flow_filename(int pair_index, bool forward);

// Writes both flow directions for every consecutive pair, plus optional
// flow-RGB renderings. Requires at least two frames.
void run_flow_stage(const VideoSequence& seq, const HSConfig& cfg,
                    const std::filesystem::path& out_dir, bool write_rgb);

// Per-frame pseudo masks (%05d.pgm) plus a diagnostics JSON. Frame t is cut
// with its forward flow t -> t+1; the last frame uses its backward pair flow.
// With flow_dir set, .flo files are read from it (missing file = error);
// otherwise flows are computed on the fly.
std::vector<BinaryMask> run_graphcut_stage(
    const VideoSequence& seq, const PipelineConfig& cfg,
    const std::optional<std::filesystem::path>& flow_dir,
    const std::filesystem::path& out_dir, bool write_diagnostics);

// Trains the head on the pseudo masks and writes the checkpoint plus
// per-frame inferred masks.
SegHead run_refine_stage(const VideoSequence& seq,
                         const std::vector<BinaryMask>& pseudo,
                         const PipelineConfig& cfg,
                         const std::optional<std::filesystem::path>& flow_dir,
                         const std::filesystem::path& out_dir);

EvalReport run_eval_stage(const std::vector<BinaryMask>& preds,
                          const std::vector<BinaryMask>& gts,
                          const std::string& name,
                          const std::filesystem::path& out_csv);

struct PipelineResult {
  bool evaluated = false;
  double pseudo_miou = 0.0;
  double refined_miou = 0.0;
};

// flow -> graphcut -> refine -> eval (eval only when ground truth exists).
// Stage outputs land in out_dir/{flow,graphcut,refine} and out_dir/eval.csv.
PipelineResult run_pipeline(const std::filesystem::path& seq_dir,
                            const std::filesystem::path& out_dir,
                            const PipelineConfig& cfg);

// Directory of masks named like the frames ("%05d.pgm"), sorted.
std::vector<BinaryMask> load_mask_dir(const std::filesystem::path& dir);

}  // namespace flowcut
