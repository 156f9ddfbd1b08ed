// Copyright 2026 The semtex Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "semtex/app.hpp"

#include "semtex/io.hpp"
#include "semtex/pipeline.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

namespace semtex {
namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;

  int stage = 0;
  bool conditional = false, unconditional = false;
  std::string mesh, labels, style, segs, textures, checkpoint;
};

struct Run {
  PipelineConfig cfg;
  fs::path dir;
  std::ostream& out;

  fs::path checkpoint(int stage) const { return dir / "checkpoints" / ("stage" + std::to_string(stage) + ".ckpt"); }
};

Run open_run(const Options& o, std::ostream& out) {
  PipelineConfig cfg = load_config(o.config_path);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out_dir.empty()) cfg.output_dir = o.out_dir;
  cfg.validate();
  Run run{cfg, cfg.output_dir, out};
  fs::create_directories(run.dir);
  std::ofstream f(run.dir / "config.resolved", std::ios::binary);
  f << cfg.resolved();
  if (!f) throw std::runtime_error("cannot write " + (run.dir / "config.resolved").string());
  return run;
}

TrainState load_stage(const Run& run, int stage, const std::string& explicit_path, const std::string& what) {
  const fs::path path = explicit_path.empty() ? run.checkpoint(stage) : fs::path(explicit_path);
  if (!fs::exists(path))
    throw std::runtime_error(what + " needs a stage-" + std::to_string(stage) + " checkpoint, " + path.string() +
                             " does not exist (run `semtex train --stage " + std::to_string(stage) + "` first)");
  TrainState st = TrainState::load(path);
  if (st.stage < stage)
    throw std::runtime_error(path.string() + " is a stage-" + std::to_string(st.stage) + " checkpoint, " + what +
                             " needs stage " + std::to_string(stage));
  return st;
}

std::pair<Dataset, Dataset> split_dataset(const PipelineConfig& cfg) {
  const Dataset all = load_dataset(cfg.dataset_dir, cfg.num_classes);
  const std::size_t hold = std::min<std::size_t>(static_cast<std::size_t>(cfg.holdout), all.size());
  return {all.slice(0, all.size() - hold), all.slice(all.size() - hold, all.size())};
}

ReconExtractors recon_extractors(const PipelineConfig& cfg) {
  return {resolve_extractor(cfg.perceptual, make_perceptual_extractor<float>()),
          resolve_extractor(cfg.embedding, make_embedding_extractor<float>())};
}

void cmd_synth(const Options& o, std::ostream& out) {
  PipelineConfig cfg = load_config(o.config_path);
  if (o.seed) cfg.synth_seed = *o.seed;
  cfg.validate();
  const fs::path dir = o.out_dir.empty() ? fs::path(cfg.dataset_dir) : fs::path(o.out_dir);
  write_synthetic_dataset(cfg.synthetic_spec(), dir);
  out << "wrote " << cfg.synth_count << " images and " << cfg.synth_meshes << " meshes to " << dir.string() << '\n';
}

void cmd_train(const Options& o, std::ostream& out) {
  Run run = open_run(o, out);
  const auto& cfg = run.cfg;
  const int stage = o.stage;
  // Extractors are resolved before any work so a bad plugin fails at startup.
  const ReconExtractors ex = recon_extractors(cfg);
  TrainState st = stage == 1 ? TrainState::create(cfg.generator, cfg.seed)
                             : load_stage(run, stage - 1, o.checkpoint, "stage " + std::to_string(stage));
  if (fs::exists(run.checkpoint(stage)) && o.checkpoint.empty()) {
    TrainState previous = TrainState::load(run.checkpoint(stage));
    if (previous.stage == stage) st = std::move(previous);
  }
  const auto [train, heldout] = split_dataset(cfg);
  std::ofstream log_file(run.dir / "train.log", std::ios::app);
  const LogSink log = [&](const LogEntry& e) {
    const std::string line = e.format();
    out << line << '\n' << std::flush;
    log_file << line << '\n' << std::flush;
  };
  const TrainConfig tc = cfg.train_config(stage);
  if (stage == 1) train_stage1(st, train, tc, log);
  if (stage == 2) train_stage2(st, train, tc, cfg.encoder_config(), ex, log);
  if (stage == 3) train_stage3(st, train, tc, cfg.encoder_config(), ex, log);
  fs::create_directories(run.dir / "checkpoints");
  st.save(run.checkpoint(stage));
  out << "saved " << run.checkpoint(stage).string() << '\n';

  fs::create_directories(run.dir / "samples");
  if (stage == 1) {
    const auto samples = sample_generator(*st.generator_ema, 8, derive_seed(cfg.seed, 500));
    for (std::size_t i = 0; i < samples.size(); ++i)
      write_png(run.dir / "samples" / ("stage1_" + std::to_string(i) + ".png"), samples[i]);
  } else if (heldout.size() > 0) {
    const Dataset probe = heldout.slice(0, std::min<std::size_t>(heldout.size(), static_cast<std::size_t>(cfg.eval_count)));
    const double loss = evaluate_reconstruction(st, stage, probe, ex, cfg.loss_weights);
    out << "held-out reconstruction loss " << loss << '\n';
    log_file << "stage=" << stage << " heldout_recon=" << loss << '\n';
  }
}

Mesh read_mesh(const Options& o, int num_classes) {
  if (o.mesh.empty()) throw std::runtime_error("--mesh is required");
  Mesh mesh = o.labels.empty() ? load_labeled_mesh(o.mesh) : load_mesh(o.mesh, o.labels);
  if (!mesh.has_labels()) throw std::runtime_error(o.mesh + " has no face labels (expected a .labels file next to it)");
  mesh.validate(num_classes);
  return mesh;
}

SegmentationMapSet read_segs(const std::string& dir, int num_classes) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  SegmentationMapSet segs;
  segs.num_classes = num_classes;
  for (const auto& f : files) segs.maps.push_back(read_label_png(f));
  return segs;
}

void cmd_parametrize(const Options& o, std::ostream& out) {
  Run run = open_run(o, out);
  const Mesh mesh = read_mesh(o, run.cfg.num_classes);
  const UVAtlas atlas = build_uv_atlas(mesh, run.cfg.view_specs(), run.cfg.generator.resolution);
  const SegmentationMapSet segs = rasterize_segmentation(mesh, atlas, run.cfg.num_classes);
  const fs::path dir = run.dir / "parametrize" / fs::path(o.mesh).stem();
  fs::create_directories(dir);
  for (std::size_t i = 0; i < segs.maps.size(); ++i)
    write_label_png(dir / (std::to_string(i) + "_" + atlas.views[i].name + ".png"), segs.maps[i]);
  out << "wrote " << segs.maps.size() << " segmentation maps to " << dir.string() << '\n';
}

void cmd_generate(const Options& o, std::ostream& out) {
  Run run = open_run(o, out);
  const auto& cfg = run.cfg;
  const TrainState st = load_stage(run, 3, o.checkpoint, "generate");
  const Mesh mesh = read_mesh(o, cfg.num_classes);
  const UVAtlas atlas = build_uv_atlas(mesh, cfg.view_specs(), cfg.generator.resolution);
  const SegmentationMapSet segs =
      o.segs.empty() ? rasterize_segmentation(mesh, atlas, cfg.num_classes) : read_segs(o.segs, cfg.num_classes);
  TextureMapSet textures;
  if (o.conditional) {
    if (o.style.empty()) throw std::runtime_error("--conditional needs --style IMAGE");
    textures = conditional_generate(st, segs, read_png(o.style), cfg.seed);
  } else {
    textures = unconditional_generate(st, segs, cfg.seed);
  }
  const fs::path dir = run.dir / "samples" /
                       (fs::path(o.mesh).stem().string() + (o.conditional ? "_conditional" : "_unconditional"));
  const GenerationFiles files = write_generation(mesh, atlas, textures, dir, cfg.render_size);
  out << "wrote " << files.textures.size() << " textures, " << files.mesh.obj.filename().string() << " and "
      << files.renders.size() << " renders to " << dir.string() << '\n';
}

void cmd_evaluate(const Options& o, std::ostream& out) {
  Run run = open_run(o, out);
  const auto& cfg = run.cfg;
  const FeatureExtractor<float> metric = resolve_extractor(cfg.metric, make_metric_extractor<float>());
  const TrainState st = load_stage(run, 3, o.checkpoint, "evaluate");
  auto [train, heldout] = split_dataset(cfg);
  const Dataset& pool = heldout.size() >= 2 ? heldout : train;
  const Dataset data = pool.slice(0, std::min<std::size_t>(pool.size(), static_cast<std::size_t>(cfg.eval_count)));
  if (data.size() == 0) throw std::runtime_error("evaluation set is empty");
  std::optional<Palette> palette;
  if (fs::exists(fs::path(cfg.dataset_dir) / "palette.txt"))
    palette = load_palette(fs::path(cfg.dataset_dir) / "palette.txt");
  const EvalReport report = evaluate(st, data, o.conditional ? GenerationMode::conditional : GenerationMode::unconditional,
                                     metric, palette ? &*palette : nullptr, cfg.seed);
  std::ofstream f(run.dir / "report.txt", std::ios::binary);
  f << report.format();
  if (!f) throw std::runtime_error("cannot write " + (run.dir / "report.txt").string());
  out << report.format();
}

void cmd_export(const Options& o, std::ostream& out) {
  Run run = open_run(o, out);
  const auto& cfg = run.cfg;
  const Mesh mesh = read_mesh(o, cfg.num_classes);
  const UVAtlas atlas = build_uv_atlas(mesh, cfg.view_specs(), cfg.generator.resolution);
  TextureMapSet textures;
  for (const auto& v : atlas.views) {
    const fs::path p = fs::path(o.textures) / ("texture_" + v.name + ".png");
    if (!fs::exists(p)) throw std::runtime_error("missing texture " + p.string());
    textures.maps.push_back(read_png(p));
  }
  const fs::path dir = run.dir / "export" / fs::path(o.mesh).stem();
  const GenerationFiles files = write_generation(mesh, atlas, textures, dir, cfg.render_size);
  out << "wrote " << files.mesh.obj.string() << '\n';
}

}  // namespace

int run_cli(int argc, char** argv) { return run_cli(argc, argv, std::cout, std::cerr); }

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semantic-guided texture generation for 3D meshes", "semtex"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config_path, "Configuration file (key = value lines)");
  app.add_option("--seed", o.seed, "Seed overriding the configuration");
  app.add_option("--out", o.out_dir, "Run directory (dataset directory for synth-data)");

  auto* synth = app.add_subcommand("synth-data", "Write the procedural toy dataset");
  auto* param = app.add_subcommand("parametrize", "Project a labeled mesh onto the views and write segmentation maps");
  auto* train = app.add_subcommand("train", "Run one training stage");
  auto* gen = app.add_subcommand("generate", "Texture a mesh");
  auto* eval = app.add_subcommand("evaluate", "Score generated textures against held-out images");
  auto* exp = app.add_subcommand("export", "Write a textured OBJ from per-view textures");

  train->add_option("--stage", o.stage, "1: generator, 2: style encoder, 3: structure encoder")
      ->required()
      ->check(CLI::Range(1, 3));
  for (auto* sub : {train, gen, eval})
    sub->add_option("--checkpoint", o.checkpoint, "Checkpoint to start from instead of the run directory's");
  for (auto* sub : {param, gen, exp}) {
    sub->add_option("--mesh", o.mesh, "OBJ mesh")->required();
    sub->add_option("--labels", o.labels, "Face labels (default: <mesh stem>.labels)");
  }
  for (auto* sub : {gen, eval}) {
    auto* c = sub->add_flag("--conditional", o.conditional, "Style from an image");
    auto* u = sub->add_flag("--unconditional", o.unconditional, "Style sampled from N(0, I)");
    c->excludes(u);
  }
  gen->add_option("--style", o.style, "Style image (conditional)");
  gen->add_option("--segs", o.segs, "Directory of per-view segmentation PNGs (default: rasterized from the mesh)");
  exp->add_option("--textures", o.textures, "Directory holding texture_<view>.png")->required();

  try {
    app.parse(argc, argv);
    if ((gen->parsed() || eval->parsed()) && o.conditional == o.unconditional)
      throw CLI::ValidationError("exactly one of --conditional and --unconditional is required");
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) cmd_synth(o, out);
    if (param->parsed()) cmd_parametrize(o, out);
    if (train->parsed()) cmd_train(o, out);
    if (gen->parsed()) cmd_generate(o, out);
    if (eval->parsed()) cmd_evaluate(o, out);
    if (exp->parsed()) cmd_export(o, out);
  } catch (const std::exception& e) {
    err << "semtex: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace semtex
