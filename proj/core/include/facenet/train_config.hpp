#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "facenet/backbone.hpp"
#include "facenet/config.hpp"
#include "facenet/fce.hpp"
#include "facenet/losses.hpp"
#include "facenet/mfmp.hpp"

namespace facenet::train {

/// Component switches mirroring the ablation rows:
/// baseline (all off), +MFMP, +MFMP w/o FMI, +FCE, +IC.
struct AblationFlags {
  bool use_mfmp = true;
  bool use_fmi = true;
  bool use_fce = true;
  bool use_ic = true;
};

struct TrainConfig {
  int epochs = 120;
  double lr = 3.5e-4;
  std::vector<int> lr_decay_epochs{40, 70};
  double lr_decay_factor = 0.1;
  int P = 8;
  int K = 4;
  double margin = loss::kDefaultMargin;
  int plug_layer = 4;
  AblationFlags ablation;
  std::uint64_t seed = 0;
  fce::MaskMode fce_mask_mode = fce::MaskMode::binary;
  loss::IcReduction ic_reduction = loss::IcReduction::per_sample;

  nn::BackboneVariant variant = nn::BackboneVariant::tiny;
  int embedding_dim = 64;
  int input_height = 256;
  int input_width = 128;
  mfmp::MaskMode mask_mode = mfmp::MaskMode::channel;
  double flare_bar = 0.10;
  double flip_probability = 0.5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  loss::LossWeights weights;
  /// Steps per epoch; 0 means ceil(train samples / (P*K)).
  int steps_per_epoch = 0;
  /// Evaluate (and checkpoint) every N epochs, plus after the final epoch.
  int eval_every = 10;
  /// Optional weight file loaded before training (pre-trained initialisation hook).
  std::string init_weights;

  void validate() const;
  nn::BackboneConfig backbone() const { return {variant, plug_layer, embedding_dim}; }
};

TrainConfig parse_train_config(const KeyValueFile& kv);
TrainConfig load_train_config(const std::filesystem::path& path);
/// Every field as key=value; parse_train_config(to_key_values(c)) == c.
KeyValueFile to_key_values(const TrainConfig& config);

/// Step schedule: lr divided by (1/factor)^n, n = number of decay epochs <= epoch.
double lr_at(int epoch, const TrainConfig& config);

}  // namespace facenet::train
