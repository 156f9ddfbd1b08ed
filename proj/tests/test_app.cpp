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

#include <doctest.h>

#include "semtex/app.hpp"
#include "semtex/extractor_io.hpp"
#include "semtex/io.hpp"
#include "semtex/pipeline.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

using namespace semtex;
namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"(# tiny end-to-end run
generator.resolution = 16
generator.latent_dim = 8
generator.split_index = 3
generator.channel_base = 64
generator.channel_max = 8
generator.mapping_layers = 2
encoder.channels = 8
stage1.max_steps = 2
stage1.batch_size = 2
stage2.max_steps = 2
stage2.batch_size = 2
stage3.max_steps = 2
stage3.batch_size = 2
synth.count = 12
synth.meshes = 1
data.holdout = 4
eval.count = 4
render.size = 24
)";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("semtex_app_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

PipelineConfig tiny_config() {
  PipelineConfig c;
  c.apply(parse_config_text(kTinyConfig));
  return c;
}

struct Cli {
  int code = -1;
  std::string out, err;
};

Cli cli(std::vector<std::string> args) {
  args.insert(args.begin(), "semtex");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  Cli r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// A stage-3 state for the tiny configuration, trained for a couple of steps.
const TrainState& tiny_state() {
  static const TrainState st = [] {
    const PipelineConfig c = tiny_config();
    SyntheticSpec spec = c.synthetic_spec();
    const Dataset data = generate_synthetic_images(spec);
    TrainState s = TrainState::create(c.generator, 1);
    const ReconExtractors ex;
    train_stage1(s, data, c.train_config(1));
    train_stage2(s, data, c.train_config(2), c.encoder_config(), ex);
    train_stage3(s, data, c.train_config(3), c.encoder_config(), ex);
    return s;
  }();
  return st;
}

SegmentationMapSet mesh_segs(UVAtlas* atlas_out = nullptr, Mesh* mesh_out = nullptr) {
  const PipelineConfig c = tiny_config();
  const Mesh mesh = generate_synthetic_meshes(c.synthetic_spec()).front();
  const UVAtlas atlas = build_uv_atlas(mesh, c.view_specs(), c.generator.resolution);
  if (atlas_out) *atlas_out = atlas;
  if (mesh_out) *mesh_out = mesh;
  return rasterize_segmentation(mesh, atlas, c.num_classes);
}

}  // namespace

TEST_CASE("config text parsing") {
  const auto kv = parse_config_text("a = 1\n# comment\n  b.c=two words  # trailing\n\n");
  CHECK(kv.size() == 2);
  CHECK(kv.at("a") == "1");
  CHECK(kv.at("b.c") == "two words");
  CHECK_THROWS_AS(parse_config_text("a = 1\na = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("just words\n"), ConfigError);
  try {
    parse_config_text("ok = 1\nbroken\n", "x.cfg");
    FAIL("no error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("x.cfg:2") != std::string::npos);
  }
}

TEST_CASE("resolved config echoes bit-exactly") {
  PipelineConfig c;
  c.apply({{"stage1.learning_rate", "0.0001"}, {"seed", "12"}, {"loss.similarity", "0.1"}});
  const std::string text = c.resolved();
  PipelineConfig again;
  again.apply(parse_config_text(text));
  CHECK(again.resolved() == text);
  CHECK(again.stage1.learning_rate == 1e-4);
  CHECK(again.seed == 12);
  CHECK(text.find("generator.resolution = 32\n") != std::string::npos);
  CHECK(c.keys().size() == parse_config_text(text).size());
}

TEST_CASE("config errors") {
  PipelineConfig c;
  CHECK_THROWS_AS(c.apply({{"generator.resolutoin", "32"}}), ConfigError);
  CHECK_THROWS_AS(c.apply({{"generator.resolution", "3x"}}), ConfigError);
  CHECK_THROWS_AS(c.apply({{"stage1.aug.enabled", "yes"}}), ConfigError);
  CHECK_THROWS_AS(c.apply({{"encoder.structure_input", "outline"}}), ConfigError);
  CHECK_THROWS_AS(c.apply({{"views", "car8"}}), ConfigError);

  PipelineConfig bad;
  bad.generator.split_index = 99;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = PipelineConfig();
  bad.generator.num_views = 5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = PipelineConfig();
  bad.num_classes = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = PipelineConfig();
  bad.stage2.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_NOTHROW(PipelineConfig().validate());
}

TEST_CASE("view presets and custom views") {
  PipelineConfig c;
  c.apply({{"views", "face1"}});
  CHECK(c.generator.num_views == 1);
  c.apply({{"views", "custom"}, {"views.custom", "a:0,0,-1:0,1,0; b:1,0,0:0,1,0"}});
  REQUIRE(c.view_specs().size() == 2);
  CHECK(c.view_specs()[1].name == "b");
  CHECK(c.generator.num_views == 2);
  CHECK_THROWS_AS(c.apply({{"views.custom", "a:0,0,-1:0,0,1"}}), ConfigError);
}

TEST_CASE("synthetic dataset contract") {
  SyntheticSpec spec;
  spec.count = 1000;
  spec.resolution = 32;
  spec.num_classes = 4;
  const Dataset d = generate_synthetic_images(spec);
  REQUIRE(d.size() == 1000);
  REQUIRE(d.labels.size() == 1000);
  CHECK_NOTHROW(d.validate());
  std::vector<long> counts(4, 0);
  for (const auto& l : d.labels) {
    CHECK(l.minCoeff() >= 0);
    CHECK(l.maxCoeff() < 4);
    CHECK((l == 0).count() > 0);
    for (int c = 0; c < 4; ++c) counts[c] += (l == c).count();
  }
  for (long n : counts) CHECK(n > 0);

  // Oracle segmentation of the clean images recovers the labels.
  const Palette palette = synthetic_palette(4);
  for (int i = 0; i < 20; ++i) CHECK(pixel_accuracy(oracle_segment(d.images[i], palette), d.labels[i]) == 1.0);

  for (int c : {2, 3, 10}) {
    spec.num_classes = c;
    spec.count = 5;
    const Dataset small = generate_synthetic_images(spec);
    CHECK_NOTHROW(small.validate());
    for (const auto& m : generate_synthetic_meshes(spec)) CHECK_NOTHROW(m.validate(c));
  }
  spec.num_classes = 1;
  CHECK_THROWS(generate_synthetic_images(spec));
}

TEST_CASE("written dataset is byte-identical for a seed and loads back") {
  SyntheticSpec spec;
  spec.count = 6;
  spec.resolution = 16;
  spec.num_meshes = 2;
  const fs::path a = scratch("ds_a"), b = scratch("ds_b");
  write_synthetic_dataset(spec, a);
  write_synthetic_dataset(spec, b);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++files;
    CHECK(slurp(e.path()) == slurp(b / fs::relative(e.path(), a)));
  }
  CHECK(files == 6 * 2 + 2 * 2 + 1);
  const Dataset d = load_dataset(a, 4);
  CHECK(d.size() == 6);
  const Dataset fresh = generate_synthetic_images(spec);
  for (std::size_t i = 0; i < d.size(); ++i) CHECK((d.labels[i] == fresh.labels[i]).all());
  CHECK(load_palette(a / "palette.txt") == synthetic_palette(4));
  const Mesh m = load_labeled_mesh(a / "meshes" / "vehicle0.obj");
  CHECK(m.has_labels());
}

TEST_CASE("extractor files round trip and identifiers are checked") {
  const fs::path dir = scratch("extractor");
  const auto f = make_embedding_extractor<float>(9, 12);
  save_extractor(f, dir / "m.ckpt");
  const auto g = load_extractor<float>(dir / "m.ckpt", f.id());
  CHECK(g.id() == f.id());
  CHECK(g.params().hash() == f.params().hash());
  Rng rng(1);
  const auto x = Var<float>::constant(rng.normal_tensor<float>({2, 3, 16, 16}));
  CHECK(g.embed(x).value() == f.embed(x).value());
  CHECK_THROWS_AS(load_extractor<float>(dir / "m.ckpt", "other"), CheckpointError);
  CHECK_THROWS_AS(load_extractor<float>(dir / "missing.ckpt"), CheckpointError);
  CHECK_THROWS(resolve_extractor({(dir / "missing.ckpt").string(), ""}, make_perceptual_extractor<float>()));
  CHECK_THROWS(resolve_extractor({"builtin", "wrong-id"}, make_perceptual_extractor<float>()));
}

TEST_CASE("style codes are shared bitwise across views") {
  const TrainState& st = tiny_state();
  const SegmentationMapSet segs = mesh_segs();
  REQUIRE(segs.maps.size() == 6);
  const Index n = st.generator_config.split_index;
  for (bool conditional : {true, false}) {
    std::vector<StyleCodes<float>> seen;
    const CodeObserver obs = [&](int, const StyleCodes<float>& c) { seen.push_back(c); };
    const Image style = generate_synthetic_images(tiny_config().synthetic_spec()).images[0];
    const TextureMapSet t =
        conditional ? conditional_generate(st, segs, style, 5, obs) : unconditional_generate(st, segs, 5, obs);
    REQUIRE(seen.size() == 6);
    CHECK(t.maps.size() == 6);
    const Tensor<float> first = split_codes(seen[0]).second;
    for (const auto& c : seen) {
      CHECK(c.split_index == n);
      const Tensor<float> sty = split_codes(c).second;
      CHECK(std::memcmp(sty.data(), first.data(), sizeof(float) * static_cast<std::size_t>(sty.numel())) == 0);
    }
  }
}

TEST_CASE("conditional and unconditional differ only in the style source") {
  const TrainState& st = tiny_state();
  const SegmentationMapSet segs = mesh_segs();
  const Image style = generate_synthetic_images(tiny_config().synthetic_spec()).images[1];
  const TextureMapSet cond = conditional_generate(st, segs, style, 3);
  const TextureMapSet injected = synthesize_views(st, segs, encode_style(st, style), 3);
  for (int i = 0; i < 6; ++i) CHECK(cond.maps[i] == injected.maps[i]);
  const TextureMapSet uncond = unconditional_generate(st, segs, 3);
  const TextureMapSet injected_u = synthesize_views(st, segs, sample_style(st.generator_config, derive_seed(3, 1000)), 3);
  for (int i = 0; i < 6; ++i) CHECK(uncond.maps[i] == injected_u.maps[i]);

  const TextureMapSet again = unconditional_generate(st, segs, 3);
  for (int i = 0; i < 6; ++i) CHECK(uncond.maps[i] == again.maps[i]);
  const TextureMapSet other = unconditional_generate(st, segs, 4);
  CHECK((other.maps[0].array() - uncond.maps[0].array()).abs().maxCoeff() > 0);
}

TEST_CASE("generation preconditions") {
  const TrainState& st = tiny_state();
  SegmentationMapSet five = mesh_segs();
  five.maps.pop_back();
  const Image style = generate_synthetic_images(tiny_config().synthetic_spec()).images[0];
  CHECK_THROWS_AS(conditional_generate(st, five, style, 0), PipelineError);
  CHECK_THROWS_AS(unconditional_generate(st, five, 0), PipelineError);
  TrainState stage1 = TrainState::create(tiny_config().generator, 0);
  CHECK_THROWS_AS(unconditional_generate(stage1, mesh_segs(), 0), PipelineError);
  CHECK_THROWS_AS(encode_style(st, Image({3, 8, 8})), PipelineError);
}

TEST_CASE("unconditional style samples are standard normal") {
  GeneratorConfig g = tiny_config().generator;
  double sum = 0, sq = 0;
  long count = 0;
  for (std::uint64_t s = 0; count < 10000; ++s) {
    const Tensor<float> w = sample_style(g, derive_seed(s, 1000));
    sum += w.array().cast<double>().sum();
    sq += w.array().cast<double>().square().sum();
    count += w.numel();
  }
  const double mean = sum / count, var = sq / count - mean * mean;
  CHECK(std::abs(mean) < 0.05);
  CHECK(std::abs(var - 1) < 0.1);
}

TEST_CASE("write_generation emits textures, OBJ/MTL/PNG and renders") {
  const TrainState& st = tiny_state();
  UVAtlas atlas;
  Mesh mesh;
  const SegmentationMapSet segs = mesh_segs(&atlas, &mesh);
  const TextureMapSet t = unconditional_generate(st, segs, 1);
  const fs::path dir = scratch("generation");
  const GenerationFiles files = write_generation(mesh, atlas, t, dir, 24);
  CHECK(files.textures.size() == 6);
  CHECK(files.renders.size() == 6);
  CHECK(fs::exists(files.mesh.obj));
  CHECK(fs::exists(files.mesh.mtl));
  CHECK(fs::exists(files.mesh.texture));
  CHECK(image_height(read_png(files.renders[0])) == 24);
}

TEST_CASE("evaluation report schema and self-consistency") {
  const TrainState& st = tiny_state();
  const Dataset data = generate_synthetic_images(tiny_config().synthetic_spec()).slice(0, 6);
  const auto metric = make_metric_extractor<float>();
  const Palette palette = synthetic_palette(4);
  const EvalReport r = evaluate(st, data, GenerationMode::conditional, metric, &palette, 2);
  std::vector<std::string> keys;
  for (const auto& [k, _] : r.values) keys.push_back(k);
  CHECK(keys == std::vector<std::string>{"fid", "kid", "miou", "n_fake", "n_real", "pixel_accuracy"});
  CHECK(r.extractor_id == metric.id());
  CHECK(r.values.at("n_real") == 6);
  CHECK(r.format() == evaluate(st, data, GenerationMode::conditional, metric, &palette, 2).format());
  const EvalReport u = evaluate(st, data, GenerationMode::unconditional, metric, nullptr, 2);
  CHECK(u.values.count("miou") == 0);
  CHECK(u.format().find("extractor_id = " + metric.id()) != std::string::npos);

  const FeatureStats real = extract_stats(data.images, metric);
  CHECK(fid(real, real) < 1e-6);
  CHECK_THROWS_AS(evaluate(st, data.slice(0, 1), GenerationMode::conditional, metric, nullptr, 0), PipelineError);
}

TEST_CASE("command line") {
  const fs::path root = scratch("cli");
  const fs::path cfg = root / "tiny.cfg";
  std::ofstream(cfg) << kTinyConfig << "dataset_dir = " << (root / "data").string() << "\n";
  const std::string run = (root / "run").string();

  CHECK(cli({"--help"}).code == 0);
  CHECK(cli({"train", "--help"}).code == 0);
  CHECK(cli({}).code == 1);
  CHECK(cli({"train", "--bogus"}).code == 1);
  CHECK(cli({"train", "--stage", "4"}).code == 1);
  CHECK(cli({"generate", "--mesh", "x.obj"}).code == 1);

  REQUIRE(cli({"synth-data", "--config", cfg.string()}).code == 0);
  CHECK(fs::exists(root / "data" / "images" / "00011.png"));

  const Cli early = cli({"train", "--stage", "2", "--config", cfg.string(), "--out", run});
  CHECK(early.code == 2);
  CHECK(early.err.find("stage-1 checkpoint") != std::string::npos);

  const Cli s1 = cli({"train", "--stage", "1", "--config", cfg.string(), "--out", run, "--seed", "4"});
  REQUIRE(s1.code == 0);
  CHECK(fs::exists(fs::path(run) / "checkpoints" / "stage1.ckpt"));
  CHECK(fs::exists(fs::path(run) / "samples" / "stage1_0.png"));
  PipelineConfig echoed;
  echoed.apply(parse_config_text(slurp(fs::path(run) / "config.resolved")));
  CHECK(echoed.seed == 4);
  CHECK(echoed.resolved() == slurp(fs::path(run) / "config.resolved"));

  REQUIRE(cli({"train", "--stage", "2", "--config", cfg.string(), "--out", run, "--seed", "4"}).code == 0);
  REQUIRE(cli({"train", "--stage", "3", "--config", cfg.string(), "--out", run, "--seed", "4"}).code == 0);

  const std::string mesh = (root / "data" / "meshes" / "vehicle0.obj").string();
  REQUIRE(cli({"parametrize", "--config", cfg.string(), "--out", run, "--mesh", mesh}).code == 0);
  const fs::path seg_dir = fs::path(run) / "parametrize" / "vehicle0";
  CHECK(std::distance(fs::directory_iterator(seg_dir), fs::directory_iterator{}) == 6);

  const std::string style = (root / "data" / "images" / "00000.png").string();
  const Cli gen = cli({"generate", "--conditional", "--config", cfg.string(), "--out", run, "--mesh", mesh, "--style",
                       style, "--segs", seg_dir.string()});
  REQUIRE(gen.code == 0);
  const fs::path sample = fs::path(run) / "samples" / "vehicle0_conditional";
  CHECK(fs::exists(sample / "textured.obj"));
  const std::string texture_bytes = slurp(sample / "texture_front.png");
  REQUIRE(cli({"generate", "--conditional", "--config", cfg.string(), "--out", run, "--mesh", mesh, "--style", style})
              .code == 0);
  CHECK(slurp(sample / "texture_front.png") == texture_bytes);

  fs::remove(seg_dir / "5_bottom.png");
  const Cli five = cli({"generate", "--conditional", "--config", cfg.string(), "--out", run, "--mesh", mesh, "--style",
                        style, "--segs", seg_dir.string()});
  CHECK(five.code == 2);
  CHECK(five.err.find("expected 6 segmentation maps") != std::string::npos);
  CHECK(cli({"generate", "--conditional", "--config", cfg.string(), "--out", run, "--mesh", mesh}).code == 2);

  REQUIRE(cli({"evaluate", "--unconditional", "--config", cfg.string(), "--out", run}).code == 0);
  const std::string report = slurp(fs::path(run) / "report.txt");
  for (const char* key : {"fid = ", "kid = ", "miou = ", "pixel_accuracy = ", "n_real = 4", "n_fake = 4",
                          "extractor_id = toy-metric-303"})
    CHECK(report.find(key) != std::string::npos);
  REQUIRE(cli({"evaluate", "--unconditional", "--config", cfg.string(), "--out", run}).code == 0);
  CHECK(slurp(fs::path(run) / "report.txt") == report);

  REQUIRE(cli({"export", "--config", cfg.string(), "--out", run, "--mesh", mesh, "--textures", sample.string()})
              .code == 0);
  CHECK(fs::exists(fs::path(run) / "export" / "vehicle0" / "textured.mtl"));

  std::ofstream(root / "bad.cfg") << kTinyConfig << "extractor.perceptual = " << (root / "nope.ckpt").string() << "\n";
  CHECK(cli({"train", "--stage", "1", "--config", (root / "bad.cfg").string(), "--out", run}).code == 2);
  std::ofstream(root / "typo.cfg") << "stage1.maxsteps = 3\n";
  CHECK(cli({"train", "--stage", "1", "--config", (root / "typo.cfg").string(), "--out", run}).code == 2);
}
