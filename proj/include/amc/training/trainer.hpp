// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "amc/model/transformer.hpp"
#include "amc/signals/dataset.hpp"

namespace amc::training {

enum class RecipeKind { kNt, kAt, kArd, kIad, kAkd, kRslad, kAtard };

std::string recipe_name(RecipeKind k);
/// "nt", "at", "ard", "iad", "akd", "rslad" or "atard"; ConfigError otherwise.
RecipeKind parse_recipe(const std::string& name);
bool needs_teacher(RecipeKind k);
bool needs_standard_teacher(RecipeKind k);
bool needs_adversary(RecipeKind k);

struct Recipe {
  RecipeKind kind = RecipeKind::kNt;
  double alpha = 0.5;
  double temperature = 1.0;
  double lambda1 = 0.5;
  double lambda2 = 0.25;
  double beta = 0.1;
  /// Checkpoint paths; the robust teacher serves every distillation recipe,
  /// the standard one only AKD.
  std::optional<std::string> teacher;
  std::optional<std::string> standard_teacher;

  /// Throws ConfigError on out-of-range weights or when a teacher path is
  /// present or missing contrary to the recipe.
  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults.
  static Recipe from_json(const nlohmann::json& j);
};

struct TrainOptions {
  std::size_t epochs = 30;
  std::size_t batch_size = 128;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  /// Budget of the inner adversary, relative to each record's SNR tag.
  double adversary_pnr_db = -10.0;
  double adversary_step_fraction = 0.5;
  std::size_t adversary_steps = 3;
  /// Directory for checkpoints and the loss log; nothing is written when
  /// empty.
  std::string out_dir;
  /// Save epoch_NNN.ckpt every this many epochs (0: only final.ckpt).
  std::size_t checkpoint_every = 1;
  /// Fill the wall_ms column; off by default so reruns are byte-identical.
  bool record_wall_time = false;
};

struct Teachers {
  const model::TransformerModel* robust = nullptr;
  const model::TransformerModel* standard = nullptr;
};

struct LossLogEntry {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  double loss_total = 0.0;
  double loss1 = 0.0;
  double loss2 = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  std::vector<LossLogEntry> log;
  std::vector<std::string> checkpoints;
};

/// Called after every epoch with the epoch number (1-based) and its mean loss.
using EpochCallback = std::function<void(std::size_t, double)>;

/// Trains `student` in place on the dataset's training split. A fresh
/// adversary is generated for every mini-batch against the current student.
/// A non-finite loss aborts with NumericalError after saving the parameters
/// from before that step to last_good.ckpt. Teachers are verified to be
/// bit-identical at the end.
TrainResult train(model::TransformerModel& student, const Recipe& recipe, const Teachers& teachers,
                  const signals::Dataset& data, const TrainOptions& opts,
                  const EpochCallback& on_epoch = {});

/// Columns: epoch, batch, loss_total, loss1, loss2, wall_ms.
std::string loss_log_csv(std::span<const LossLogEntry> log);

/// Packs records[indices] into a batch [B, 2, 128] plus labels.
ad::Tensor make_batch(std::span<const signals::SignalRecord> records,
                      std::span<const std::size_t> indices, std::vector<int>& labels);

/// Fraction of records the model classifies correctly.
double accuracy(const model::TransformerModel& m, std::span<const signals::SignalRecord> records,
                std::size_t batch_size = 256);

}  // namespace amc::training
