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

#include "semtex/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace semtex {
namespace {

using Clock = std::chrono::steady_clock;

std::string kind_name(StructureEncoderKind k) {
  return k == StructureEncoderKind::pyramid_baseline ? "pyramid_baseline" : "coarse_to_fine";
}
std::string kind_name(StructureInputKind k) {
  return k == StructureInputKind::silhouette ? "silhouette" : "segmentation";
}
StructureEncoderKind encoder_kind(const std::string& s) {
  if (s == "coarse_to_fine") return StructureEncoderKind::coarse_to_fine;
  if (s == "pyramid_baseline") return StructureEncoderKind::pyramid_baseline;
  throw CheckpointError("unknown structure encoder kind " + s);
}
StructureInputKind input_kind(const std::string& s) {
  if (s == "segmentation") return StructureInputKind::segmentation;
  if (s == "silhouette") return StructureInputKind::silhouette;
  throw CheckpointError("unknown structure input kind " + s);
}

Tensor<double> scalar_array(double v) { return Tensor<double>::constant({1}, v); }

void check_images(const Dataset& data, int resolution) {
  if (data.size() == 0) throw TrainingError("empty dataset");
  for (std::size_t i = 0; i < data.size(); ++i)
    if (data.images[i].dim(1) != resolution || data.images[i].dim(2) != resolution)
      throw TrainingError("image " + std::to_string(i) + " is " + std::to_string(data.images[i].dim(1)) + "x" +
                          std::to_string(data.images[i].dim(2)) + ", generator resolution is " +
                          std::to_string(resolution));
}

std::vector<std::size_t> sample_indices(std::size_t n, int batch, Rng& rng) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(batch));
  for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(n) - 1));
  return idx;
}

Tensor<float> gather_images(const Dataset& data, const std::vector<std::size_t>& idx) {
  std::vector<Image> picked;
  for (auto i : idx) picked.push_back(data.images[i]);
  return stack_images<float>(picked);
}

Adam<float>& optimizer_for(TrainState& st, const std::string& key, ParamStore<float>& params,
                           const AdamOptions& options) {
  auto& slot = st.optimizers[key];
  if (!slot) slot = std::make_unique<Adam<float>>(params, options);
  slot->set_options(options);
  return *slot;
}

std::vector<AugmentParams> draw_augment(Index n, double p, int resolution, Rng& rng) {
  std::vector<AugmentParams> out(static_cast<std::size_t>(n));
  const int max_shift = resolution / 8;
  for (auto& a : out) {
    if (!rng.bernoulli(p)) continue;
    a.flip = rng.bernoulli(0.5);
    a.shift_x = rng.uniform_int(-max_shift, max_shift);
    a.shift_y = rng.uniform_int(-max_shift, max_shift);
    a.brightness = rng.uniform(-0.2, 0.2);
  }
  return out;
}

bool is_identity(const std::vector<AugmentParams>& ps) {
  for (const auto& a : ps)
    if (a.flip || a.shift_x || a.shift_y || a.brightness != 0.0) return false;
  return true;
}

Var<float> maybe_augment(const Var<float>& x, const std::vector<AugmentParams>& ps) {
  return is_identity(ps) ? x : augment(x, ps);
}

struct Latents {
  Var<float> w;   // [N, D], first code
  Var<float> ws;  // [N, L, D]
};

Latents draw_latents(const Generator<float>& g, int batch, double mixing, Rng& rng) {
  const Index D = g.config().latent_dim, L = g.config().num_layers();
  Latents out;
  out.w = g.map(Var<float>::constant(rng.normal_tensor<float>({batch, D})));
  out.ws = g.broadcast(out.w);
  if (mixing > 0 && rng.bernoulli(mixing)) {
    const Index cutoff = rng.uniform_int(1, static_cast<int>(L) - 1);
    const Var<float> w2 = g.map(Var<float>::constant(rng.normal_tensor<float>({batch, D})));
    out.ws = concat<float>({slice(out.ws, 1, 0, cutoff), slice(g.broadcast(w2), 1, cutoff, L)}, 1);
  }
  return out;
}

double ema_beta(const TrainConfig& cfg, long step, int batch) {
  if (cfg.ema_decay <= 0) return 0.0;
  if (cfg.ema_rampup <= 0) return cfg.ema_decay;
  const double half_life = batch * std::log(0.5) / std::log(cfg.ema_decay);
  const double seen = static_cast<double>(step + 1) * batch;
  return std::min(cfg.ema_decay, std::pow(0.5, batch / std::max(std::min(half_life, seen * cfg.ema_rampup), 1e-8)));
}

void maybe_log(const LogSink& log, const TrainConfig& cfg, const TrainState& st, Clock::time_point start,
               std::map<std::string, double> values) {
  if (!log || cfg.log_interval <= 0) return;
  if (st.step % cfg.log_interval != 0 && st.step != cfg.max_steps) return;
  LogEntry e;
  e.stage = st.stage;
  e.step = st.step;
  e.values = std::move(values);
  e.aug_p = st.aug_p;
  e.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  log(e);
}

EncoderConfig matched(const EncoderConfig& e, const GeneratorConfig& g) {
  EncoderConfig out = e;
  out.input_resolution = g.resolution;
  out.latent_dim = g.latent_dim;
  out.split_index = g.split_index;
  out.validate();
  return out;
}

void put_generator(Checkpoint& ck, const std::string& group, const Generator<float>& g) {
  ck.put_params(group, g.params());
  ck.put(group + ".buffers/w_avg", g.w_avg());
  for (std::size_t i = 0; i < g.fixed_noise().size(); ++i)
    ck.put(group + ".buffers/noise" + std::to_string(i), g.fixed_noise()[i]);
}

std::unique_ptr<Generator<float>> get_generator(const Checkpoint& ck, const std::string& group,
                                                const GeneratorConfig& cfg) {
  auto g = std::make_unique<Generator<float>>(cfg, 0);
  ck.load_params(group, g->params());
  g->w_avg() = ck.array<float>(group + ".buffers/w_avg");
  for (std::size_t i = 0; i < g->fixed_noise().size(); ++i)
    g->fixed_noise()[i] = ck.array<float>(group + ".buffers/noise" + std::to_string(i));
  return g;
}

void put_optimizer(Checkpoint& ck, const std::string& key, Adam<float>& opt, const ParamStore<float>& params) {
  ck.set("optimizer." + key + ".steps", std::to_string(opt.steps()));
  const auto& entries = params.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    ck.put("optimizer." + key + ".m/" + entries[i].name, opt.first_moments()[i]);
    ck.put("optimizer." + key + ".v/" + entries[i].name, opt.second_moments()[i]);
  }
}

void get_optimizer(const Checkpoint& ck, TrainState& st, const std::string& key, ParamStore<float>& params) {
  if (!ck.has("optimizer." + key + ".steps")) return;
  auto opt = std::make_unique<Adam<float>>(params, AdamOptions{});
  opt->set_steps(ck.get_int("optimizer." + key + ".steps"));
  const auto& entries = params.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    opt->first_moments()[i] = ck.array<float>("optimizer." + key + ".m/" + entries[i].name);
    opt->second_moments()[i] = ck.array<float>("optimizer." + key + ".v/" + entries[i].name);
  }
  st.optimizers[key] = std::move(opt);
}

ParamStore<float>* params_of(TrainState& st, const std::string& key) {
  if (key == "generator" && st.generator) return &st.generator->params();
  if (key == "discriminator" && st.discriminator) return &st.discriminator->params();
  if (key == "style_encoder" && st.style_encoder) return &st.style_encoder->params();
  if (key == "structure_encoder" && st.structure_encoder) return &st.structure_encoder->params();
  return nullptr;
}

}  // namespace

AdamOptions TrainConfig::optimizer() const {
  AdamOptions o;
  o.learning_rate = learning_rate;
  if (stage == 1) {
    o.beta1 = 0.0;
    o.beta2 = 0.99;
  } else {
    o.beta1 = 0.9;
    o.beta2 = 0.999;
  }
  return o;
}

void TrainConfig::validate() const {
  if (stage < 1 || stage > 3) throw std::invalid_argument("stage must be 1, 2 or 3");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(learning_rate > 0)) throw std::invalid_argument("learning_rate must be > 0");
  if (max_steps < 0) throw std::invalid_argument("max_steps must be >= 0");
  if (ema_decay < 0 || ema_decay >= 1) throw std::invalid_argument("ema_decay must be in [0, 1)");
  if (aug.p_init < 0 || aug.p_init > 1) throw std::invalid_argument("aug.p_init must be in [0, 1]");
  if (r1_interval < 1) throw std::invalid_argument("r1_interval must be >= 1");
  if (style_mixing < 0 || style_mixing > 1) throw std::invalid_argument("style_mixing must be in [0, 1]");
}

std::string LogEntry::format() const {
  std::ostringstream os;
  os << "stage=" << stage << " step=" << step;
  char buf[64];
  for (const auto& [k, v] : values) {
    std::snprintf(buf, sizeof buf, "%.6g", v);
    os << ' ' << k << '=' << buf;
  }
  std::snprintf(buf, sizeof buf, " p=%.3f time=%.1fs", aug_p, seconds);
  os << buf;
  return os.str();
}

TrainState TrainState::create(const GeneratorConfig& config, std::uint64_t seed) {
  config.validate();
  TrainState st;
  st.generator_config = config;
  st.encoder_config = EncoderConfig::matching(config, st.encoder_config.num_classes);
  st.generator = std::make_unique<Generator<float>>(config, derive_seed(seed, 0));
  st.generator_ema = std::make_unique<Generator<float>>(config, derive_seed(seed, 0));
  st.discriminator = std::make_unique<Discriminator<float>>(config, derive_seed(seed, 1));
  st.rng = Rng(derive_seed(seed, 11));
  return st;
}

Checkpoint TrainState::to_checkpoint() const {
  Checkpoint ck;
  const auto& g = generator_config;
  ck.set("stage", std::to_string(stage));
  ck.set("step", std::to_string(step));
  ck.set("rng", rng.state());
  ck.set("ada.count", std::to_string(ada_count));
  ck.put("ada.p", scalar_array(aug_p));
  ck.put("ada.sign_sum", scalar_array(ada_sign_sum));
  ck.set("generator.resolution", std::to_string(g.resolution));
  ck.set("generator.latent_dim", std::to_string(g.latent_dim));
  ck.set("generator.split_index", std::to_string(g.split_index));
  ck.set("generator.channel_base", std::to_string(g.channel_base));
  ck.set("generator.channel_max", std::to_string(g.channel_max));
  ck.set("generator.mapping_layers", std::to_string(g.mapping_layers));
  ck.set("generator.num_views", std::to_string(g.num_views));
  const auto& e = encoder_config;
  ck.set("encoder.num_classes", std::to_string(e.num_classes));
  ck.set("encoder.channels", std::to_string(e.channels));
  ck.set("encoder.structure_encoder_kind", kind_name(e.structure_encoder_kind));
  ck.set("encoder.structure_input_kind", kind_name(e.structure_input_kind));

  if (generator) put_generator(ck, "generator", *generator);
  if (generator_ema) put_generator(ck, "generator_ema", *generator_ema);
  if (discriminator) ck.put_params("discriminator", discriminator->params());
  if (style_encoder) {
    ck.put_params("style_encoder", style_encoder->params());
    ck.put("style_encoder.buffers/w_avg", style_encoder->w_avg());
  }
  if (structure_encoder) {
    ck.put_params("structure_encoder", structure_encoder->params());
    ck.put("structure_encoder.buffers/w_avg", static_cast<const Tensor<float>&>(structure_encoder->w_avg()));
  }
  auto& self = const_cast<TrainState&>(*this);
  for (const auto& [key, opt] : optimizers)
    if (auto* params = params_of(self, key)) put_optimizer(ck, key, *opt, *params);
  return ck;
}

TrainState TrainState::from_checkpoint(const Checkpoint& ck) {
  TrainState st;
  auto& g = st.generator_config;
  g.resolution = static_cast<int>(ck.get_int("generator.resolution"));
  g.latent_dim = static_cast<int>(ck.get_int("generator.latent_dim"));
  g.split_index = static_cast<int>(ck.get_int("generator.split_index"));
  g.channel_base = static_cast<int>(ck.get_int("generator.channel_base"));
  g.channel_max = static_cast<int>(ck.get_int("generator.channel_max"));
  g.mapping_layers = static_cast<int>(ck.get_int("generator.mapping_layers"));
  g.num_views = static_cast<int>(ck.get_int("generator.num_views"));
  g.validate();
  auto& e = st.encoder_config;
  e = EncoderConfig::matching(g, static_cast<int>(ck.get_int("encoder.num_classes")),
                              static_cast<int>(ck.get_int("encoder.channels")));
  e.structure_encoder_kind = encoder_kind(ck.get("encoder.structure_encoder_kind"));
  e.structure_input_kind = input_kind(ck.get("encoder.structure_input_kind"));
  st.stage = static_cast<int>(ck.get_int("stage"));
  st.step = ck.get_int("step");
  st.rng.set_state(ck.get("rng"));
  st.ada_count = ck.get_int("ada.count");
  st.aug_p = ck.array<double>("ada.p")[0];
  st.ada_sign_sum = ck.array<double>("ada.sign_sum")[0];

  if (ck.has_group("generator")) st.generator = get_generator(ck, "generator", g);
  if (ck.has_group("generator_ema")) st.generator_ema = get_generator(ck, "generator_ema", g);
  if (ck.has_group("discriminator")) {
    st.discriminator = std::make_unique<Discriminator<float>>(g, 0);
    ck.load_params("discriminator", st.discriminator->params());
  }
  if (ck.has_group("style_encoder")) {
    st.style_encoder = std::make_unique<StyleEncoder<float>>(e, 0);
    ck.load_params("style_encoder", st.style_encoder->params());
    st.style_encoder->w_avg() = ck.array<float>("style_encoder.buffers/w_avg");
  }
  if (ck.has_group("structure_encoder")) {
    st.structure_encoder = make_structure_encoder<float>(e, 0);
    ck.load_params("structure_encoder", st.structure_encoder->params());
    st.structure_encoder->w_avg() = ck.array<float>("structure_encoder.buffers/w_avg");
  }
  for (const std::string key : {"generator", "discriminator", "style_encoder", "structure_encoder"})
    if (auto* params = params_of(st, key)) get_optimizer(ck, st, key, *params);
  return st;
}

void train_stage1(TrainState& st, const Dataset& data, const TrainConfig& cfg, const LogSink& log) {
  cfg.validate();
  if (!st.generator || !st.generator_ema || !st.discriminator)
    throw TrainingError("stage 1 needs a generator, its EMA copy and a discriminator");
  if (st.stage > 1) throw TrainingError("state has already completed stage " + std::to_string(st.stage));
  const int R = st.generator_config.resolution;
  check_images(data, R);
  if (st.stage == 0) {
    st.stage = 1;
    st.step = 0;
    st.aug_p = cfg.aug.p_init;
    st.ada_sign_sum = 0;
    st.ada_count = 0;
    st.rng = Rng(derive_seed(cfg.seed, 11));
  }
  auto& G = *st.generator;
  auto& D = *st.discriminator;
  auto& Gema = *st.generator_ema;
  Adam<float>& opt_g = optimizer_for(st, "generator", G.params(), cfg.optimizer());
  Adam<float>& opt_d = optimizer_for(st, "discriminator", D.params(), cfg.optimizer());
  const int B = cfg.batch_size;
  Critic<float> critic = [&D](const Var<float>& x) { return D(x); };
  const auto start = Clock::now();

  while (st.step < cfg.max_steps) {
    std::map<std::string, double> values;
    // Discriminator.
    const Tensor<float> real = gather_images(data, sample_indices(data.size(), B, st.rng));
    Tensor<float> fake;
    {
      NoGradGuard guard;
      const Latents lat = draw_latents(G, B, cfg.style_mixing, st.rng);
      fake = G.synthesize(lat.ws, NoiseMode::random, &st.rng).value();
    }
    const auto aug_real = draw_augment(B, st.aug_p, R, st.rng);
    const auto aug_fake = draw_augment(B, st.aug_p, R, st.rng);
    D.params().zero_grad();
    const Var<float> real_in = maybe_augment(Var<float>::constant(real), aug_real);
    const Var<float> d_real = D(real_in);
    const Var<float> d_fake = D(maybe_augment(Var<float>::constant(fake), aug_fake));
    const GanLosses<float> dl = gan_losses(d_real, d_fake);
    values["loss_d"] = dl.discriminator.item();
    if (!std::isfinite(values["loss_d"]))
      throw TrainingError("discriminator loss is not finite at stage 1 step " + std::to_string(st.step));
    backward(dl.discriminator);
    if (cfg.r1_gamma > 0 && st.step % cfg.r1_interval == 0)
      values["r1"] = accumulate_r1_gradient<float>(critic, D.params(), real_in.value(), static_cast<float>(cfg.r1_gamma),
                                                   static_cast<float>(cfg.r1_interval));
    opt_d.step();
    for (Index i = 0; i < B; ++i) st.ada_sign_sum += (d_real.value()[i] > 0) - (d_real.value()[i] < 0);
    st.ada_count += B;

    // Generator.
    D.params().set_requires_grad(false);
    G.params().zero_grad();
    const Latents lat = draw_latents(G, B, cfg.style_mixing, st.rng);
    const Var<float> img = G.synthesize(lat.ws, NoiseMode::random, &st.rng);
    const auto aug_gen = draw_augment(B, st.aug_p, R, st.rng);
    const Var<float> loss_g = mean(softplus(-D(maybe_augment(img, aug_gen))));
    backward(loss_g);
    opt_g.step();
    D.params().set_requires_grad(true);
    values["loss_g"] = loss_g.item();

    G.track_w_avg(lat.w.value(), static_cast<float>(cfg.w_avg_beta));
    Gema.params().lerp_towards(G.params(), static_cast<float>(ema_beta(cfg, st.step, B)));
    Gema.w_avg() = G.w_avg();
    ++st.step;

    if (cfg.aug.enabled && cfg.aug.adjust_interval > 0 && st.step % cfg.aug.adjust_interval == 0) {
      const double rt = st.ada_sign_sum / static_cast<double>(std::max<long>(st.ada_count, 1));
      const double dir = (rt > cfg.aug.target) - (rt < cfg.aug.target);
      st.aug_p = std::clamp(st.aug_p + cfg.aug.adjust_step * dir, 0.0, 1.0);
      st.ada_sign_sum = 0;
      st.ada_count = 0;
    }
    maybe_log(log, cfg, st, start, std::move(values));
  }
}

namespace {

// Shared loop of the two encoder stages.
void train_encoder_stage(TrainState& st, int stage, const Dataset& data, const TrainConfig& cfg,
                         ParamStore<float>& trained, const ReconExtractors& ex, const LogSink& log) {
  Adam<float>& opt = optimizer_for(st, stage == 2 ? "style_encoder" : "structure_encoder", trained, cfg.optimizer());
  st.generator_ema->params().set_requires_grad(false);
  if (st.style_encoder && stage == 3) st.style_encoder->params().set_requires_grad(false);
  const auto start = Clock::now();
  while (st.step < cfg.max_steps) {
    const auto idx = sample_indices(data.size(), cfg.batch_size, st.rng);
    const Tensor<float> images = gather_images(data, idx);
    std::vector<LabelImage> segs;
    if (stage == 3)
      for (auto i : idx) segs.push_back(data.labels[i]);
    trained.zero_grad();
    const Var<float> codes = reconstruction_codes(st, stage, images, stage == 3 ? &segs : nullptr);
    const Var<float> out = st.generator_ema->synthesize(codes, NoiseMode::zero);
    const ReconLoss<float> loss =
        recon_loss(out, Var<float>::constant(images), ex.perceptual, ex.embedding, cfg.loss_weights);
    if (!std::isfinite(loss.total.item()))
      throw TrainingError("reconstruction loss is not finite at stage " + std::to_string(stage) + " step " +
                          std::to_string(st.step));
    backward(loss.total);
    opt.step();
    ++st.step;
    maybe_log(log, cfg, st, start,
              {{"recon", loss.total.item()},
               {"pixel", loss.pixel},
               {"perceptual", loss.perceptual},
               {"similarity", loss.similarity}});
  }
  st.generator_ema->params().set_requires_grad(true);
  if (st.style_encoder) st.style_encoder->params().set_requires_grad(true);
}

}  // namespace

void train_stage2(TrainState& st, const Dataset& data, const TrainConfig& cfg, const EncoderConfig& encoder_config,
                  const ReconExtractors& extractors, const LogSink& log) {
  cfg.validate();
  if (st.stage < 1 || !st.generator_ema) throw TrainingError("stage 2 needs a stage-1 checkpoint");
  if (st.stage > 2) throw TrainingError("state has already completed stage " + std::to_string(st.stage));
  check_images(data, st.generator_config.resolution);
  if (st.stage == 1) {
    st.encoder_config = matched(encoder_config, st.generator_config);
    st.style_encoder = std::make_unique<StyleEncoder<float>>(st.encoder_config, derive_seed(cfg.seed, 2));
    st.style_encoder->w_avg() = st.generator_ema->w_avg();
    st.stage = 2;
    st.step = 0;
    st.rng = Rng(derive_seed(cfg.seed, 12));
  }
  train_encoder_stage(st, 2, data, cfg, st.style_encoder->params(), extractors, log);
}

void train_stage3(TrainState& st, const Dataset& data, const TrainConfig& cfg, const EncoderConfig& encoder_config,
                  const ReconExtractors& extractors, const LogSink& log) {
  cfg.validate();
  if (st.stage < 2 || !st.style_encoder) throw TrainingError("stage 3 needs a stage-2 checkpoint");
  check_images(data, st.generator_config.resolution);
  if (!data.has_labels()) throw TrainingError("stage 3 needs segmentation labels");
  data.validate();
  if (st.stage == 2) {
    EncoderConfig e = st.encoder_config;
    e.num_classes = encoder_config.num_classes;
    e.structure_encoder_kind = encoder_config.structure_encoder_kind;
    e.structure_input_kind = encoder_config.structure_input_kind;
    st.encoder_config = matched(e, st.generator_config);
    st.structure_encoder = make_structure_encoder<float>(st.encoder_config, derive_seed(cfg.seed, 3));
    st.structure_encoder->w_avg() = st.generator_ema->w_avg();
    st.stage = 3;
    st.step = 0;
    st.rng = Rng(derive_seed(cfg.seed, 13));
  }
  train_encoder_stage(st, 3, data, cfg, st.structure_encoder->params(), extractors, log);
}

Tensor<float> structure_input(const std::vector<LabelImage>& segs, const EncoderConfig& config) {
  if (config.structure_input_kind == StructureInputKind::silhouette) {
    std::vector<LabelImage> sil;
    for (const auto& s : segs) sil.push_back(make_silhouette(s));
    return onehot_batch<float>(sil, 2);
  }
  return onehot_batch<float>(segs, config.num_classes);
}

Var<float> reconstruction_codes(const TrainState& st, int stage, const Tensor<float>& images,
                                const std::vector<LabelImage>* segs) {
  if (!st.style_encoder) throw TrainingError("no style encoder");
  if (stage == 2) return (*st.style_encoder)(Var<float>::constant(images));
  if (!st.structure_encoder || !segs) throw TrainingError("stage 3 codes need a structure encoder and labels");
  const Index n = st.generator_config.split_index, L = st.generator_config.num_layers();
  if (static_cast<Index>(segs->size()) != images.dim(0))
    throw TrainingError("segmentation count differs from image count");
  for (const auto& s : *segs)
    if (s.rows() != images.dim(2) || s.cols() != images.dim(3))
      throw TrainingError("segmentation is " + std::to_string(s.rows()) + "x" + std::to_string(s.cols()) +
                          ", image is " + std::to_string(images.dim(2)) + "x" + std::to_string(images.dim(3)));
  Var<float> style;
  {
    NoGradGuard guard;
    style = slice((*st.style_encoder)(Var<float>::constant(images)), 1, n, L);
  }
  const Var<float> structure = (*st.structure_encoder)(Var<float>::constant(structure_input(*segs, st.encoder_config)));
  return concat<float>({structure, style}, 1);
}

double evaluate_reconstruction(const TrainState& st, int stage, const Dataset& data, const ReconExtractors& ex,
                               const LossWeights& weights, int batch_size) {
  if (data.size() == 0) throw TrainingError("empty evaluation set");
  NoGradGuard guard;
  double total = 0;
  for (std::size_t begin = 0; begin < data.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(data.size(), begin + static_cast<std::size_t>(batch_size));
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
    const Tensor<float> images = gather_images(data, idx);
    std::vector<LabelImage> segs;
    if (stage == 3)
      for (auto i : idx) segs.push_back(data.labels.at(i));
    const Var<float> codes = reconstruction_codes(st, stage, images, stage == 3 ? &segs : nullptr);
    const Var<float> out = st.generator_ema->synthesize(codes, NoiseMode::zero);
    total += recon_loss(out, Var<float>::constant(images), ex.perceptual, ex.embedding, weights).total.item() *
             static_cast<double>(end - begin);
  }
  return total / static_cast<double>(data.size());
}

std::vector<Image> sample_generator(const Generator<float>& g, int count, std::uint64_t seed, int batch_size) {
  NoGradGuard guard;
  Rng rng(seed);
  std::vector<Image> out;
  const Index D = g.config().latent_dim;
  while (static_cast<int>(out.size()) < count) {
    const int b = std::min(batch_size, count - static_cast<int>(out.size()));
    const Var<float> w = g.map(Var<float>::constant(rng.normal_tensor<float>({b, D})));
    const Tensor<float> imgs = g.synthesize(g.broadcast(w), NoiseMode::random, &rng).value();
    for (int i = 0; i < b; ++i) out.push_back(batch_item(imgs, i));
  }
  return out;
}

}  // namespace semtex
