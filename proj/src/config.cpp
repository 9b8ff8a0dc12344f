#include "flowcut/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace flowcut {

namespace {

using nlohmann::json;

void require_keys(const json& j, std::initializer_list<const char*> known,
                  const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) { ok = true; break; }
    if (!ok)
      throw std::runtime_error("unknown key '" + it.key() + "' in " + where + " config");
  }
}

}  // namespace

PipelineConfig PipelineConfig::from_json_text(const std::string& text) {
  json j = json::parse(text);
  require_keys(j, {"seed", "paths", "graphcut", "flow", "train", "eval"}, "pipeline");

  PipelineConfig cfg;
  cfg.seed = j.value("seed", 0ull);

  if (j.contains("paths")) {
    const json& p = j.at("paths");
    require_keys(p, {"seq_dir", "out_dir"}, "paths");
    if (p.contains("seq_dir")) cfg.seq_dir = p.at("seq_dir").get<std::string>();
    if (p.contains("out_dir")) cfg.out_dir = p.at("out_dir").get<std::string>();
  }

  if (j.contains("graphcut")) {
    const json& g = j.at("graphcut");
    require_keys(g, {"alpha", "tau", "epsilon", "patch_size", "eigen_mode",
                     "eigen_tol", "eigen_max_iters", "features_dir"},
                 "graphcut");
    if (g.contains("features_dir"))
      cfg.features_dir = g.at("features_dir").get<std::string>();
    cfg.graphcut.alpha = g.value("alpha", cfg.graphcut.alpha);
    cfg.graphcut.tau = g.value("tau", cfg.graphcut.tau);
    cfg.graphcut.epsilon = g.value("epsilon", cfg.graphcut.epsilon);
    cfg.graphcut.patch_size = g.value("patch_size", cfg.graphcut.patch_size);
    if (g.contains("eigen_mode")) {
      std::string m = g.at("eigen_mode").get<std::string>();
      if (m == "ncut") cfg.graphcut.eigen_mode = EigenMode::kNcut;
      else if (m == "raw_w") cfg.graphcut.eigen_mode = EigenMode::kRawW;
      else throw std::runtime_error("unknown eigen_mode '" + m + "'");
    }
    cfg.graphcut.eigen_tol = g.value("eigen_tol", cfg.graphcut.eigen_tol);
    cfg.graphcut.eigen_max_iters = g.value("eigen_max_iters", cfg.graphcut.eigen_max_iters);
  }

  if (j.contains("flow")) {
    const json& f = j.at("flow");
    require_keys(f, {"smoothness", "n_iters", "n_levels", "warps_per_level",
                     "graphcut_flow_dir", "warp_flow_dir"},
                 "flow");
    cfg.flow.smoothness = f.value("smoothness", cfg.flow.smoothness);
    cfg.flow.n_iters = f.value("n_iters", cfg.flow.n_iters);
    cfg.flow.n_levels = f.value("n_levels", cfg.flow.n_levels);
    cfg.flow.warps_per_level = f.value("warps_per_level", cfg.flow.warps_per_level);
    if (f.contains("graphcut_flow_dir"))
      cfg.graphcut_flow_dir = f.at("graphcut_flow_dir").get<std::string>();
    if (f.contains("warp_flow_dir"))
      cfg.warp_flow_dir = f.at("warp_flow_dir").get<std::string>();
  }

  if (j.contains("train")) {
    const json& t = j.at("train");
    require_keys(t, {"n_epochs", "neighbor_offsets", "warp_branch_prob"}, "train");
    cfg.train.n_epochs = t.value("n_epochs", cfg.train.n_epochs);
    if (t.contains("neighbor_offsets"))
      cfg.train.neighbor_offsets = t.at("neighbor_offsets").get<std::vector<int>>();
    cfg.train.warp_branch_prob = t.value("warp_branch_prob", cfg.train.warp_branch_prob);
  }

  if (j.contains("eval")) {
    const json& e = j.at("eval");
    require_keys(e, {"binarize_threshold"}, "eval");
    cfg.eval_threshold = e.value("binarize_threshold", cfg.eval_threshold);
  }

  cfg.validate();
  return cfg;
}

PipelineConfig PipelineConfig::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string PipelineConfig::to_json_text() const {
  json j;
  j["seed"] = seed;
  if (seq_dir || out_dir) {
    j["paths"] = json::object();
    if (seq_dir) j["paths"]["seq_dir"] = seq_dir->string();
    if (out_dir) j["paths"]["out_dir"] = out_dir->string();
  }
  j["graphcut"] = {
      {"alpha", graphcut.alpha},
      {"tau", graphcut.tau},
      {"epsilon", graphcut.epsilon},
      {"patch_size", graphcut.patch_size},
      {"eigen_mode", graphcut.eigen_mode == EigenMode::kNcut ? "ncut" : "raw_w"},
      {"eigen_tol", graphcut.eigen_tol},
      {"eigen_max_iters", graphcut.eigen_max_iters},
  };
  if (features_dir) j["graphcut"]["features_dir"] = features_dir->string();
  j["flow"] = {
      {"smoothness", flow.smoothness},
      {"n_iters", flow.n_iters},
      {"n_levels", flow.n_levels},
      {"warps_per_level", flow.warps_per_level},
  };
  if (graphcut_flow_dir) j["flow"]["graphcut_flow_dir"] = graphcut_flow_dir->string();
  if (warp_flow_dir) j["flow"]["warp_flow_dir"] = warp_flow_dir->string();
  j["train"] = {
      {"n_epochs", train.n_epochs},
      {"neighbor_offsets", train.neighbor_offsets},
      {"warp_branch_prob", train.warp_branch_prob},
  };
  j["eval"] = {{"binarize_threshold", eval_threshold}};
  return j.dump(2);
}

void PipelineConfig::validate() const {
  graphcut.validate();
  flow.validate();
  train.validate();
  if (!(eval_threshold > 0.0 && eval_threshold < 1.0))
    throw std::runtime_error("eval.binarize_threshold must lie in (0,1)");
}

}  // namespace flowcut
