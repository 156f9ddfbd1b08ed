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

#include "semtex/training.hpp"

#include <filesystem>
#include <fstream>

using namespace semtex;

namespace {

GeneratorConfig tiny_generator() {
  GeneratorConfig g;
  g.resolution = 8;
  g.latent_dim = 8;
  g.split_index = 2;
  g.channel_base = 64;
  g.channel_max = 8;
  g.mapping_layers = 2;
  g.num_views = 1;
  return g;
}

Dataset tiny_data(int count = 12, std::uint64_t seed = 0) {
  SyntheticSpec spec;
  spec.count = count;
  spec.resolution = 8;
  spec.seed = seed;
  return generate_synthetic_images(spec);
}

TrainConfig stage1_config(long steps) {
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.max_steps = steps;
  cfg.learning_rate = 2e-3;
  cfg.r1_interval = 2;
  cfg.style_mixing = 0.5;
  cfg.aug.p_init = 0.5;
  cfg.aug.adjust_interval = 2;
  cfg.seed = 7;
  cfg.log_interval = 0;
  return cfg;
}

TrainConfig encoder_config(int stage, long steps) {
  TrainConfig cfg;
  cfg.stage = stage;
  cfg.batch_size = 4;
  cfg.max_steps = steps;
  cfg.learning_rate = 1e-3;
  cfg.seed = 7;
  cfg.log_interval = 0;
  return cfg;
}

EncoderConfig tiny_encoder(StructureInputKind input = StructureInputKind::segmentation) {
  EncoderConfig e = EncoderConfig::matching(tiny_generator(), 4, 8);
  e.structure_input_kind = input;
  return e;
}

const ReconExtractors& extractors() {
  static const ReconExtractors ex;
  return ex;
}

TrainState stage1_state(long steps) {
  TrainState st = TrainState::create(tiny_generator(), 3);
  train_stage1(st, tiny_data(), stage1_config(steps));
  return st;
}

}  // namespace

TEST_CASE("stage 1 is deterministic and resumable") {
  const std::string a = stage1_state(6).to_checkpoint().serialize();
  const std::string b = stage1_state(6).to_checkpoint().serialize();
  CHECK(a == b);

  TrainState resumed = TrainState::from_checkpoint(Checkpoint::deserialize(stage1_state(4).to_checkpoint().serialize()));
  train_stage1(resumed, tiny_data(), stage1_config(6));
  CHECK(resumed.to_checkpoint().serialize() == a);

  TrainState other = TrainState::create(tiny_generator(), 3);
  TrainConfig cfg = stage1_config(6);
  cfg.seed = 8;
  train_stage1(other, tiny_data(), cfg);
  CHECK(other.to_checkpoint().serialize() != a);
}

TEST_CASE("stage 1 updates G and D and keeps p in range") {
  TrainState st = TrainState::create(tiny_generator(), 3);
  const auto g0 = st.generator->params().hash(), d0 = st.discriminator->params().hash();
  TrainConfig cfg = stage1_config(8);
  cfg.aug.adjust_step = 0.4;
  std::vector<double> ps;
  train_stage1(st, tiny_data(), cfg, [&](const LogEntry& e) { ps.push_back(e.aug_p); });
  CHECK(st.generator->params().hash() != g0);
  CHECK(st.discriminator->params().hash() != d0);
  CHECK(st.step == 8);
  CHECK(st.aug_p >= 0.0);
  CHECK(st.aug_p <= 1.0);
}

TEST_CASE("augmentation probability is constant when adaptation is disabled") {
  TrainState st = TrainState::create(tiny_generator(), 3);
  TrainConfig cfg = stage1_config(6);
  cfg.aug.enabled = false;
  cfg.aug.p_init = 0.3;
  cfg.log_interval = 1;
  std::vector<double> ps;
  train_stage1(st, tiny_data(), cfg, [&](const LogEntry& e) { ps.push_back(e.aug_p); });
  REQUIRE(ps.size() == 6);
  for (double p : ps) CHECK(p == 0.3);
}

TEST_CASE("EMA equals the raw generator at decay 0") {
  TrainState st = TrainState::create(tiny_generator(), 3);
  TrainConfig cfg = stage1_config(3);
  cfg.ema_decay = 0.0;
  train_stage1(st, tiny_data(), cfg);
  CHECK(st.generator_ema->params().hash() == st.generator->params().hash());

  TrainState smoothed = stage1_state(3);
  CHECK(smoothed.generator_ema->params().hash() != smoothed.generator->params().hash());
}

TEST_CASE("log lines carry step, losses, p and time") {
  TrainState st = TrainState::create(tiny_generator(), 3);
  TrainConfig cfg = stage1_config(2);
  cfg.log_interval = 2;
  std::vector<std::string> lines;
  train_stage1(st, tiny_data(), cfg, [&](const LogEntry& e) { lines.push_back(e.format()); });
  REQUIRE(lines.size() == 1);
  CHECK(lines[0].rfind("stage=1 step=2 ", 0) == 0);
  CHECK(lines[0].find("loss_d=") != std::string::npos);
  CHECK(lines[0].find("loss_g=") != std::string::npos);
  CHECK(lines[0].find(" p=") != std::string::npos);
  CHECK(lines[0].find("time=") != std::string::npos);
}

TEST_CASE("stage 1 errors") {
  TrainState st = TrainState::create(tiny_generator(), 3);
  CHECK_THROWS_AS(train_stage1(st, Dataset{}, stage1_config(1)), TrainingError);
  SyntheticSpec spec;
  spec.count = 4;
  spec.resolution = 16;
  CHECK_THROWS_AS(train_stage1(st, generate_synthetic_images(spec), stage1_config(1)), TrainingError);
  TrainConfig bad = stage1_config(1);
  bad.batch_size = 0;
  CHECK_THROWS_AS(train_stage1(st, tiny_data(), bad), std::invalid_argument);
  bad = stage1_config(1);
  bad.learning_rate = 0;
  CHECK_THROWS_AS(train_stage1(st, tiny_data(), bad), std::invalid_argument);
}

TEST_CASE("stages 2 and 3 touch only their encoder") {
  TrainState st = stage1_state(2);
  const auto g = st.generator->params().hash(), gema = st.generator_ema->params().hash();
  const auto d = st.discriminator->params().hash();

  train_stage2(st, tiny_data(), encoder_config(2, 3), tiny_encoder(), extractors());
  CHECK(st.stage == 2);
  CHECK(st.generator->params().hash() == g);
  CHECK(st.generator_ema->params().hash() == gema);
  CHECK(st.discriminator->params().hash() == d);
  const auto sty = st.style_encoder->params().hash();

  TrainState copy = TrainState::from_checkpoint(st.to_checkpoint());
  train_stage3(st, tiny_data(), encoder_config(3, 3), tiny_encoder(), extractors());
  CHECK(st.stage == 3);
  CHECK(st.generator->params().hash() == g);
  CHECK(st.generator_ema->params().hash() == gema);
  CHECK(st.discriminator->params().hash() == d);
  CHECK(st.style_encoder->params().hash() == sty);

  train_stage3(copy, tiny_data(), encoder_config(3, 3), tiny_encoder(), extractors());
  CHECK(copy.to_checkpoint().serialize() == st.to_checkpoint().serialize());
}

TEST_CASE("encoder stages reduce reconstruction loss on a tiny set") {
  TrainState st = stage1_state(2);
  const Dataset data = tiny_data(8);
  train_stage2(st, data, encoder_config(2, 0), tiny_encoder(), extractors());
  const double before = evaluate_reconstruction(st, 2, data, extractors());
  train_stage2(st, data, encoder_config(2, 40), tiny_encoder(), extractors());
  const double after = evaluate_reconstruction(st, 2, data, extractors());
  CHECK(after < before);
}

TEST_CASE("stage ordering and input checks") {
  TrainState fresh = TrainState::create(tiny_generator(), 3);
  CHECK_THROWS_AS(train_stage2(fresh, tiny_data(), encoder_config(2, 1), tiny_encoder(), extractors()),
                  TrainingError);
  CHECK_THROWS_AS(train_stage3(fresh, tiny_data(), encoder_config(3, 1), tiny_encoder(), extractors()),
                  TrainingError);

  TrainState st = stage1_state(1);
  train_stage2(st, tiny_data(), encoder_config(2, 1), tiny_encoder(), extractors());
  Dataset unlabeled = tiny_data();
  unlabeled.labels.clear();
  CHECK_THROWS_AS(train_stage3(st, unlabeled, encoder_config(3, 1), tiny_encoder(), extractors()), TrainingError);

  const Dataset data = tiny_data(4);
  std::vector<LabelImage> wrong(4, LabelImage::Zero(6, 6));
  train_stage3(st, data, encoder_config(3, 0), tiny_encoder(), extractors());
  CHECK_THROWS_AS(reconstruction_codes(st, 3, stack_images(data.images), &wrong), TrainingError);
}

TEST_CASE("silhouette input uses two channels") {
  const Dataset data = tiny_data(2);
  const auto t = structure_input(data.labels, tiny_encoder(StructureInputKind::silhouette));
  CHECK(t.shape() == Shape{2, 2, 8, 8});
  CHECK(structure_input(data.labels, tiny_encoder()).shape() == Shape{2, 4, 8, 8});
}

TEST_CASE("checkpoint round trip and refusal") {
  TrainState st = stage1_state(2);
  train_stage2(st, tiny_data(), encoder_config(2, 1), tiny_encoder(), extractors());
  const auto dir = std::filesystem::temp_directory_path() / "semtex_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto a = dir / "a.ckpt", b = dir / "b.ckpt";
  st.save(a);
  TrainState loaded = TrainState::load(a);
  loaded.save(b);
  auto bytes = [](const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
  };
  const std::string raw = bytes(a);
  CHECK(raw == bytes(b));
  CHECK(loaded.rng == st.rng);
  CHECK(loaded.aug_p == st.aug_p);
  CHECK(loaded.step == st.step);

  {
    std::ofstream f(b, std::ios::binary);
    f.write(raw.data(), static_cast<std::streamsize>(raw.size() / 2));
  }
  CHECK_THROWS_AS(TrainState::load(b), CheckpointError);

  std::string future = raw;
  future[8] = static_cast<char>(kCheckpointVersion + 1);
  try {
    Checkpoint::deserialize(future);
    FAIL("future version accepted");
  } catch (const CheckpointError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(std::to_string(kCheckpointVersion + 1)) != std::string::npos);
    CHECK(msg.find(std::to_string(kCheckpointVersion)) != std::string::npos);
  }

  std::string flipped = raw;
  flipped[raw.size() / 2] ^= 1;
  CHECK_THROWS_AS(Checkpoint::deserialize(flipped), CheckpointError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("samples are deterministic") {
  TrainState st = stage1_state(1);
  const auto a = sample_generator(*st.generator_ema, 3, 5);
  const auto b = sample_generator(*st.generator_ema, 3, 5);
  REQUIRE(a.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(a[i] == b[i]);
  CHECK(!(sample_generator(*st.generator_ema, 1, 6)[0] == a[0]));
}
