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

// Three-stage training.
//
//   1. G and D, adversarially, with lazy R1, adaptive augmentation and an
//      exponential moving average of G.
//   2. The style encoder, reconstructing images through the frozen EMA G.
//   3. The structure encoder, with G and the style encoder frozen.
//
// All randomness comes from TrainState::rng, so a run is a function of the
// configuration, the dataset and the seed.

#pragma once

#include "semtex/checkpoint.hpp"
#include "semtex/core/adam.hpp"
#include "semtex/dataset.hpp"
#include "semtex/encoders.hpp"
#include "semtex/losses.hpp"

#include <functional>
#include <map>
#include <memory>
#include <string>

namespace semtex {

struct AugmentConfig {
  bool enabled = true;
  double p_init = 0.0;
  double target = 0.6;
  double adjust_step = 0.01;
  int adjust_interval = 256;
};

struct TrainConfig {
  int stage = 1;
  int batch_size = 8;
  double learning_rate = 1e-4;
  long max_steps = 1000;
  double ema_decay = 0.999;
  /// Caps the EMA half-life at this fraction of the images seen so far; 0 disables.
  double ema_rampup = 0.0;
  double r1_gamma = 1.0;
  int r1_interval = 16;
  double style_mixing = 0.0;
  double w_avg_beta = 0.995;
  AugmentConfig aug;
  LossWeights loss_weights;
  std::uint64_t seed = 0;
  int log_interval = 100;

  /// Adam with beta = (0, 0.99) in stage 1 and (0.9, 0.999) afterwards.
  AdamOptions optimizer() const;
  void validate() const;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Frozen extractors of the reconstruction loss.
struct ReconExtractors {
  FeatureExtractor<float> perceptual = make_perceptual_extractor<float>();
  FeatureExtractor<float> embedding = make_embedding_extractor<float>();
};

struct TrainState {
  int stage = 0;  // last completed or running stage
  long step = 0;  // steps taken in the current stage
  GeneratorConfig generator_config;
  EncoderConfig encoder_config;

  std::unique_ptr<Generator<float>> generator, generator_ema;
  std::unique_ptr<Discriminator<float>> discriminator;
  std::unique_ptr<StyleEncoder<float>> style_encoder;
  std::unique_ptr<StructureEncoder<float>> structure_encoder;
  std::map<std::string, std::unique_ptr<Adam<float>>> optimizers;

  double aug_p = 0.0;
  double ada_sign_sum = 0.0;
  long ada_count = 0;
  Rng rng;

  /// Untrained G, EMA G and D.
  static TrainState create(const GeneratorConfig& config, std::uint64_t seed);

  Checkpoint to_checkpoint() const;
  static TrainState from_checkpoint(const Checkpoint& ck);
  void save(const std::filesystem::path& path) const { to_checkpoint().save(path); }
  static TrainState load(const std::filesystem::path& path) { return from_checkpoint(Checkpoint::load(path)); }
};

struct LogEntry {
  int stage = 0;
  long step = 0;
  std::map<std::string, double> values;
  double aug_p = 0;
  double seconds = 0;

  /// "stage=1 step=100 loss_d=... p=... time=...s".
  std::string format() const;
};

using LogSink = std::function<void(const LogEntry&)>;

/// Runs stage 1 until state.step == cfg.max_steps.
void train_stage1(TrainState& state, const Dataset& data, const TrainConfig& cfg, const LogSink& log = {});

/// Stage 2. Requires a state that completed stage 1; creates the style
/// encoder from `encoder_config` when absent.
void train_stage2(TrainState& state, const Dataset& data, const TrainConfig& cfg,
                  const EncoderConfig& encoder_config, const ReconExtractors& extractors = {},
                  const LogSink& log = {});

/// Stage 3. Requires labels and a state that completed stage 2; the
/// structure encoder follows `encoder_config` (kind and input kind).
void train_stage3(TrainState& state, const Dataset& data, const TrainConfig& cfg,
                  const EncoderConfig& encoder_config, const ReconExtractors& extractors = {},
                  const LogSink& log = {});

/// One-hot structure input for the configured input kind, [N, C', R, R].
Tensor<float> structure_input(const std::vector<LabelImage>& segs, const EncoderConfig& config);

/// Codes [N, L, D] for reconstructing `images` (stage 2: style encoder
/// only; stage 3: structure codes from `segs` + style codes).
Var<float> reconstruction_codes(const TrainState& state, int stage, const Tensor<float>& images,
                                const std::vector<LabelImage>* segs);

/// Mean reconstruction loss over `data` (no gradients).
double evaluate_reconstruction(const TrainState& state, int stage, const Dataset& data,
                               const ReconExtractors& extractors, const LossWeights& weights = {},
                               int batch_size = 16);

/// Unconditional samples from the EMA generator.
std::vector<Image> sample_generator(const Generator<float>& g, int count, std::uint64_t seed, int batch_size = 16);

}  // namespace semtex
