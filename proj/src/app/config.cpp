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

#include "semtex/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace semtex {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty())
    throw ConfigError("invalid value '" + text + "' for " + key);
  return value;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

struct Binding {
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

template <typename T>
Binding integer(T& field) {
  return {[&field] { return std::to_string(field); },
          [&field](const std::string& v) { field = parse_number<T>("", v); }};
}

Binding real(double& field) {
  return {[&field] { return format_double(field); },
          [&field](const std::string& v) { field = parse_number<double>("", v); }};
}

Binding text(std::string& field) {
  return {[&field] { return field; }, [&field](const std::string& v) { field = v; }};
}

Binding boolean(bool& field) {
  return {[&field] { return std::string(field ? "true" : "false"); },
          [&field](const std::string& v) {
            if (v != "true" && v != "false") throw ConfigError("expected true or false, got '" + v + "'");
            field = v == "true";
          }};
}

Binding encoder_kind(StructureEncoderKind& field) {
  return {[&field] {
            return std::string(field == StructureEncoderKind::coarse_to_fine ? "coarse_to_fine" : "pyramid_baseline");
          },
          [&field](const std::string& v) {
            if (v == "coarse_to_fine") field = StructureEncoderKind::coarse_to_fine;
            else if (v == "pyramid_baseline") field = StructureEncoderKind::pyramid_baseline;
            else throw ConfigError("expected coarse_to_fine or pyramid_baseline, got '" + v + "'");
          }};
}

Binding input_kind(StructureInputKind& field) {
  return {[&field] { return std::string(field == StructureInputKind::segmentation ? "segmentation" : "silhouette"); },
          [&field](const std::string& v) {
            if (v == "segmentation") field = StructureInputKind::segmentation;
            else if (v == "silhouette") field = StructureInputKind::silhouette;
            else throw ConfigError("expected segmentation or silhouette, got '" + v + "'");
          }};
}

std::map<std::string, Binding> bindings(PipelineConfig& c) {
  std::map<std::string, Binding> b;
  b["seed"] = integer(c.seed);
  b["num_classes"] = integer(c.num_classes);
  b["dataset_dir"] = text(c.dataset_dir);
  b["output_dir"] = text(c.output_dir);
  b["views"] = text(c.views);
  b["views.custom"] = text(c.custom_views);
  b["generator.resolution"] = integer(c.generator.resolution);
  b["generator.latent_dim"] = integer(c.generator.latent_dim);
  b["generator.split_index"] = integer(c.generator.split_index);
  b["generator.channel_base"] = integer(c.generator.channel_base);
  b["generator.channel_max"] = integer(c.generator.channel_max);
  b["generator.mapping_layers"] = integer(c.generator.mapping_layers);
  b["encoder.channels"] = integer(c.encoder_channels);
  b["encoder.structure_encoder"] = encoder_kind(c.structure_encoder_kind);
  b["encoder.structure_input"] = input_kind(c.structure_input_kind);
  for (auto [name, t] : {std::pair{"stage1", &c.stage1}, {"stage2", &c.stage2}, {"stage3", &c.stage3}}) {
    const std::string s = name;
    b[s + ".batch_size"] = integer(t->batch_size);
    b[s + ".learning_rate"] = real(t->learning_rate);
    b[s + ".max_steps"] = integer(t->max_steps);
    b[s + ".log_interval"] = integer(t->log_interval);
  }
  b["stage1.ema_decay"] = real(c.stage1.ema_decay);
  b["stage1.ema_rampup"] = real(c.stage1.ema_rampup);
  b["stage1.r1_gamma"] = real(c.stage1.r1_gamma);
  b["stage1.r1_interval"] = integer(c.stage1.r1_interval);
  b["stage1.style_mixing"] = real(c.stage1.style_mixing);
  b["stage1.w_avg_beta"] = real(c.stage1.w_avg_beta);
  b["stage1.aug.enabled"] = boolean(c.stage1.aug.enabled);
  b["stage1.aug.p_init"] = real(c.stage1.aug.p_init);
  b["stage1.aug.target"] = real(c.stage1.aug.target);
  b["stage1.aug.adjust_step"] = real(c.stage1.aug.adjust_step);
  b["stage1.aug.adjust_interval"] = integer(c.stage1.aug.adjust_interval);
  b["loss.pixel"] = real(c.loss_weights.pixel);
  b["loss.perceptual"] = real(c.loss_weights.perceptual);
  b["loss.similarity"] = real(c.loss_weights.similarity);
  b["extractor.perceptual"] = text(c.perceptual.source);
  b["extractor.perceptual_id"] = text(c.perceptual.id);
  b["extractor.embedding"] = text(c.embedding.source);
  b["extractor.embedding_id"] = text(c.embedding.id);
  b["extractor.metric"] = text(c.metric.source);
  b["extractor.metric_id"] = text(c.metric.id);
  b["synth.count"] = integer(c.synth_count);
  b["synth.meshes"] = integer(c.synth_meshes);
  b["synth.seed"] = integer(c.synth_seed);
  b["data.holdout"] = integer(c.holdout);
  b["eval.count"] = integer(c.eval_count);
  b["render.size"] = integer(c.render_size);
  return b;
}

Eigen::Vector3d parse_vector(const std::string& s, const std::string& where) {
  std::istringstream is(s);
  Eigen::Vector3d v;
  std::string part;
  for (int i = 0; i < 3; ++i) {
    if (!std::getline(is, part, ',')) throw ConfigError("expected three components in '" + s + "' (" + where + ")");
    v[i] = parse_number<double>(where, trim(part));
  }
  if (std::getline(is, part, ',')) throw ConfigError("expected three components in '" + s + "' (" + where + ")");
  return v;
}

}  // namespace

std::map<std::string, std::string> parse_config_text(const std::string& text, const std::string& source) {
  std::map<std::string, std::string> out;
  std::istringstream is(text);
  std::string line;
  for (int number = 1; std::getline(is, line); ++number) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(number);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (!out.emplace(key, trim(line.substr(eq + 1))).second) throw ConfigError(where + ": repeated key " + key);
  }
  return out;
}

PipelineConfig::PipelineConfig() {
  generator.resolution = 32;
  generator.latent_dim = 64;
  generator.split_index = 6;
  generator.channel_base = 512;
  generator.channel_max = 64;
  generator.mapping_layers = 4;
  generator.num_views = 6;

  stage1.stage = 1;
  stage1.learning_rate = 2e-3;
  stage1.max_steps = 2000;
  stage1.ema_decay = 0.995;
  stage1.r1_gamma = 1.0;
  stage1.r1_interval = 16;
  stage1.style_mixing = 0.5;
  stage1.aug.adjust_interval = 64;
  stage1.aug.adjust_step = 0.02;
  stage1.log_interval = 100;
  stage2.stage = 2;
  stage2.learning_rate = 1e-3;
  stage2.max_steps = 3000;
  stage3.stage = 3;
  stage3.learning_rate = 1e-3;
  stage3.max_steps = 1800;
}

std::vector<std::string> PipelineConfig::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : bindings(const_cast<PipelineConfig&>(*this))) out.push_back(k);
  return out;
}

void PipelineConfig::apply(const std::map<std::string, std::string>& values) {
  auto b = bindings(*this);
  for (const auto& [key, value] : values) {
    const auto it = b.find(key);
    if (it == b.end()) throw ConfigError("unknown configuration key '" + key + "'");
    try {
      it->second.set(value);
    } catch (const ConfigError& e) {
      throw ConfigError(key + ": " + e.what());
    }
  }
  generator.num_views = static_cast<int>(view_specs().size());
}

std::string PipelineConfig::resolved() const {
  std::ostringstream os;
  for (const auto& [key, binding] : bindings(const_cast<PipelineConfig&>(*this)))
    os << key << " = " << binding.get() << '\n';
  return os.str();
}

std::vector<ViewSpec> PipelineConfig::view_specs() const {
  if (views != "custom") {
    try {
      return view_preset(views);
    } catch (const std::exception& e) {
      throw ConfigError("views: " + std::string(e.what()));
    }
  }
  std::vector<ViewSpec> out;
  std::istringstream is(custom_views);
  for (std::string entry; std::getline(is, entry, ';');) {
    entry = trim(entry);
    if (entry.empty()) continue;
    const auto a = entry.find(':'), b = entry.rfind(':');
    if (a == std::string::npos || a == b) throw ConfigError("views.custom: expected name:fx,fy,fz:ux,uy,uz, got '" +
                                                            entry + "'");
    try {
      out.emplace_back(trim(entry.substr(0, a)), parse_vector(entry.substr(a + 1, b - a - 1), "views.custom"),
                       parse_vector(entry.substr(b + 1), "views.custom"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError("views.custom: " + std::string(e.what()));
    }
  }
  if (out.empty()) throw ConfigError("views = custom needs at least one entry in views.custom");
  return out;
}

void PipelineConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  try {
    generator.validate();
  } catch (const std::invalid_argument& e) {
    fail(std::string("generator: ") + e.what());
  }
  const int R = generator.resolution;
  if (R < 8 || (R & (R - 1)) != 0) fail("generator.resolution must be a power of two >= 8");
  if (num_classes < 2) fail("num_classes must be >= 2");
  const auto vs = view_specs();
  if (generator.num_views != static_cast<int>(vs.size()))
    fail("generator has " + std::to_string(generator.num_views) + " views, the view preset has " +
         std::to_string(vs.size()));
  const EncoderConfig e = encoder_config();
  if (e.input_resolution != R || e.latent_dim != generator.latent_dim || e.split_index != generator.split_index ||
      e.num_layers() != generator.num_layers())
    fail("encoder and generator disagree on R, D, n or L");
  try {
    e.validate();
    for (int s = 1; s <= 3; ++s) train_config(s).validate();
  } catch (const std::invalid_argument& ex) {
    fail(ex.what());
  }
  if (synth_count < 1) fail("synth.count must be >= 1");
  if (holdout < 0) fail("data.holdout must be >= 0");
  if (eval_count < 2) fail("eval.count must be >= 2");
  if (render_size < 1) fail("render.size must be >= 1");
  for (const auto* x : {&perceptual, &embedding, &metric})
    if (x->source.empty()) fail("extractor sources must be 'builtin' or a path");
}

EncoderConfig PipelineConfig::encoder_config() const {
  EncoderConfig e = EncoderConfig::matching(generator, num_classes, encoder_channels);
  e.structure_encoder_kind = structure_encoder_kind;
  e.structure_input_kind = structure_input_kind;
  return e;
}

TrainConfig PipelineConfig::train_config(int stage) const {
  TrainConfig t = stage == 1 ? stage1 : stage == 2 ? stage2 : stage3;
  t.stage = stage;
  t.seed = seed;
  t.loss_weights = loss_weights;
  return t;
}

SyntheticSpec PipelineConfig::synthetic_spec() const {
  SyntheticSpec s;
  s.count = synth_count;
  s.resolution = generator.resolution;
  s.num_classes = num_classes;
  s.num_meshes = synth_meshes;
  s.seed = synth_seed;
  return s;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  PipelineConfig c;
  if (!path.empty()) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    c.apply(parse_config_text(ss.str(), path.string()));
  }
  c.generator.num_views = static_cast<int>(c.view_specs().size());
  return c;
}

}  // namespace semtex
