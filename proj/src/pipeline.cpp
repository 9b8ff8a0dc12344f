#include "flowcut/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "flowcut/flow.hpp"
#include "flowcut/graphcut.hpp"
#include "flowcut/parallel.hpp"
#include "json.hpp"

namespace flowcut {

namespace fs = std::filesystem;

std::string flow_filename(int pair_index, bool forward) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05d_%s.flo", pair_index, forward ? "fw" : "bw");
  return buf;
}

namespace {

std::string frame_filename(int index, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05d.%s", index, ext);
  return buf;
}

// Graph-cut flow for frame t: forward pair flow for all but the last frame,
// which reuses its backward pair flow.
FlowField graphcut_flow_for_frame(
    const VideoSequence& seq, int t, const HSConfig& cfg,
    const std::optional<fs::path>& flow_dir) {
  int len = static_cast<int>(seq.frames.size());
  bool last = t == len - 1;
  if (flow_dir) {
    fs::path p = *flow_dir / (last ? flow_filename(t - 1, false) : flow_filename(t, true));
    if (!fs::exists(p))
      throw std::runtime_error("missing flow file: " + p.string());
    return read_flo(p);
  }
  return last ? horn_schunck(seq.frames[t], seq.frames[t - 1], cfg)
              : horn_schunck(seq.frames[t], seq.frames[t + 1], cfg);
}

// Consecutive-pair flows come from .flo files when a directory is given (a
// missing file is an error); non-consecutive neighbor pairs are computed
// with Horn-Schunck. Without a directory everything is computed.
class DirOrComputeFlowProvider : public FlowProvider {
 public:
  DirOrComputeFlowProvider(const VideoSequence& seq, const HSConfig& cfg,
                           std::optional<fs::path> dir)
      : seq_(seq), cfg_(cfg), dir_(std::move(dir)) {}

  const FlowField& backward_flow(int from_idx, int to_idx) override {
    uint64_t key = (static_cast<uint64_t>(static_cast<uint32_t>(from_idx)) << 32) |
                   static_cast<uint32_t>(to_idx);
    for (const auto& [k, f] : cache_)
      if (k == key) return f;

    bool consecutive = std::abs(from_idx - to_idx) == 1;
    if (dir_ && consecutive) {
      fs::path p = to_idx == from_idx + 1 ? *dir_ / flow_filename(from_idx, true)
                                          : *dir_ / flow_filename(to_idx, false);
      if (!fs::exists(p))
        throw std::runtime_error("missing flow file: " + p.string());
      cache_.emplace_back(key, read_flo(p));
    } else {
      cache_.emplace_back(
          key, horn_schunck(seq_.frames[from_idx], seq_.frames[to_idx], cfg_));
    }
    return cache_.back().second;
  }

 private:
  const VideoSequence& seq_;
  HSConfig cfg_;
  std::optional<fs::path> dir_;
  std::vector<std::pair<uint64_t, FlowField>> cache_;
};

}  // namespace

void run_flow_stage(const VideoSequence& seq, const HSConfig& cfg,
                    const fs::path& out_dir, bool write_rgb) {
  int len = static_cast<int>(seq.frames.size());
  if (len < 2) throw std::runtime_error("flow stage needs at least 2 frames");
  fs::create_directories(out_dir);

  parallel_for(len - 1, [&](int i) {
    FlowField fw = horn_schunck(seq.frames[i], seq.frames[i + 1], cfg);
    FlowField bw = horn_schunck(seq.frames[i + 1], seq.frames[i], cfg);
    write_flo(fw, out_dir / flow_filename(i, true));
    write_flo(bw, out_dir / flow_filename(i, false));
    if (write_rgb) {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%05d_fw_rgb.ppm", i);
      write_ppm(flow_to_rgb(fw), out_dir / buf);
      std::snprintf(buf, sizeof buf, "%05d_bw_rgb.ppm", i);
      write_ppm(flow_to_rgb(bw), out_dir / buf);
    }
  });
}

std::vector<BinaryMask> run_graphcut_stage(
    const VideoSequence& seq, const PipelineConfig& cfg,
    const std::optional<fs::path>& flow_dir, const fs::path& out_dir,
    bool write_diagnostics) {
  int len = static_cast<int>(seq.frames.size());
  if (len < 2) throw std::runtime_error("graphcut stage needs at least 2 frames");
  fs::create_directories(out_dir);

  int h = seq.frames.front().height, w = seq.frames.front().width;
  PatchGrid grid = PatchGrid::for_frame(h, w, cfg.graphcut.patch_size);

  std::vector<BinaryMask> masks(len);
  std::vector<CutResult> cuts(len);
  parallel_for(len, [&](int t) {
    BinaryMask mask;
    CutResult cut;
    if (cfg.features_dir) {
      // Externally computed embeddings stand in for the featurizer.
      char img_name[32], flow_name[32];
      std::snprintf(img_name, sizeof img_name, "%05d_img.fgrd", t);
      std::snprintf(flow_name, sizeof flow_name, "%05d_flow.fgrd", t);
      FeatureGrid fi = read_fgrd(*cfg.features_dir / img_name);
      FeatureGrid ff = read_fgrd(*cfg.features_dir / flow_name);
      std::tie(mask, cut) =
          graphcut_from_features(fi, ff, grid, h, w, cfg.graphcut);
    } else {
      FlowField flow = graphcut_flow_for_frame(seq, t, cfg.flow, flow_dir);
      std::tie(mask, cut) = graphcut_frame(seq.frames[t], flow, cfg.graphcut);
    }
    write_pgm(mask, out_dir / frame_filename(t, "pgm"));
    masks[t] = std::move(mask);
    cuts[t] = std::move(cut);
  });

  if (write_diagnostics) {
    nlohmann::json records = nlohmann::json::array();
    for (int t = 0; t < len; ++t) {
      const CutResult& c = cuts[t];
      size_t n_a = std::accumulate(c.labels.begin(), c.labels.end(), size_t{0});
      size_t fg_patches =
          std::accumulate(c.patch_mask.begin(), c.patch_mask.end(), size_t{0});
      size_t border_a = 0, border_b = 0;
      for (int r = 0; r < c.rows; ++r)
        for (int col = 0; col < c.cols; ++col) {
          bool border = r == 0 || r == c.rows - 1 || col == 0 || col == c.cols - 1;
          if (!border) continue;
          if (c.labels[static_cast<size_t>(r) * c.cols + col]) ++border_a;
          else ++border_b;
        }
      size_t n_b = c.labels.size() - n_a;
      records.push_back({
          {"frame", t},
          {"eigval", c.eigval},
          {"partition_a", n_a},
          {"partition_b", n_b},
          {"border_fraction_a", n_a ? static_cast<double>(border_a) / n_a : 0.0},
          {"border_fraction_b", n_b ? static_cast<double>(border_b) / n_b : 0.0},
          {"fg_is_a", c.fg_is_a},
          {"fg_patches", fg_patches},
      });
    }
    std::ofstream out(out_dir / "diagnostics.json");
    out << records.dump(2) << "\n";
  }
  return masks;
}

SegHead run_refine_stage(const VideoSequence& seq,
                         const std::vector<BinaryMask>& pseudo,
                         const PipelineConfig& cfg,
                         const std::optional<fs::path>& flow_dir,
                         const fs::path& out_dir) {
  fs::create_directories(out_dir);

  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, "refine");

  DirOrComputeFlowProvider flows(seq, cfg.flow, flow_dir);
  SegHead head = train(seq, pseudo, flows, tc);

  save_checkpoint(head, out_dir / "seghead.segh");
  for (int t = 0; t < static_cast<int>(seq.frames.size()); ++t) {
    SoftMask soft = seghead_forward(head, seq.frames[t]);
    write_pgm(binarize(soft, cfg.eval_threshold), out_dir / frame_filename(t, "pgm"));
  }
  return head;
}

EvalReport run_eval_stage(const std::vector<BinaryMask>& preds,
                          const std::vector<BinaryMask>& gts,
                          const std::string& name, const fs::path& out_csv) {
  EvalReport report = evaluate_sequence(preds, gts, name);
  write_eval_csv(report, out_csv);
  return report;
}

std::vector<BinaryMask> load_mask_dir(const fs::path& dir) {
  if (!fs::is_directory(dir))
    throw std::runtime_error("missing mask directory: " + dir.string());
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".pgm")
      paths.push_back(entry.path());
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw std::runtime_error("no .pgm masks in " + dir.string());
  std::vector<BinaryMask> masks;
  masks.reserve(paths.size());
  for (const auto& p : paths) masks.push_back(read_pgm(p));
  return masks;
}

PipelineResult run_pipeline(const fs::path& seq_dir, const fs::path& out_dir,
                            const PipelineConfig& cfg) {
  VideoSequence seq = load_sequence(seq_dir, fs::is_directory(seq_dir / "gt"));

  fs::path flow_out = out_dir / "flow";
  run_flow_stage(seq, cfg.flow, flow_out, false);

  // Later stages read the flows this run just produced unless the config
  // points at external ones.
  std::optional<fs::path> gc_flows =
      cfg.graphcut_flow_dir ? cfg.graphcut_flow_dir : std::optional<fs::path>(flow_out);
  std::optional<fs::path> warp_flows =
      cfg.warp_flow_dir ? cfg.warp_flow_dir : std::optional<fs::path>(flow_out);

  std::vector<BinaryMask> pseudo =
      run_graphcut_stage(seq, cfg, gc_flows, out_dir / "graphcut", true);
  run_refine_stage(seq, pseudo, cfg, warp_flows, out_dir / "refine");

  PipelineResult result;
  if (seq.has_gt()) {
    std::vector<BinaryMask> refined = load_mask_dir(out_dir / "refine");
    EvalReport report =
        run_eval_stage(refined, seq.gt_masks, seq.name, out_dir / "eval.csv");
    result.evaluated = true;
    result.refined_miou = report.sequence_miou;
    result.pseudo_miou = evaluate_sequence(pseudo, seq.gt_masks, seq.name).sequence_miou;
  }
  return result;
}

}  // namespace flowcut
