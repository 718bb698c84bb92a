// SPDX-License-Identifier: Apache-2.0
#include "amc/training/trainer.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <random>
#include <sstream>

#include "amc/attacks/attacks.hpp"
#include "amc/autodiff/ops.hpp"
#include "amc/error.hpp"
#include "amc/io/binary.hpp"
#include "amc/model/checkpoint.hpp"
#include "amc/training/losses.hpp"
#include "amc/training/optimizer.hpp"

namespace amc::training {

using ad::Tensor;
using model::TransformerModel;

namespace {

constexpr std::array<std::pair<RecipeKind, const char*>, 7> kRecipeNames{{
    {RecipeKind::kNt, "nt"},
    {RecipeKind::kAt, "at"},
    {RecipeKind::kArd, "ard"},
    {RecipeKind::kIad, "iad"},
    {RecipeKind::kAkd, "akd"},
    {RecipeKind::kRslad, "rslad"},
    {RecipeKind::kAtard, "atard"},
}};

// Tolerated rounding below zero for a sum of nonnegative CE/KL terms.
constexpr double kNegativeLossSlack = 1e-4;

std::string epoch_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03zu.ckpt", epoch);
  return buf;
}

std::vector<std::size_t> shuffled(std::vector<std::size_t> idx, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
  return idx;
}

}  // namespace

std::string recipe_name(RecipeKind k) {
  for (const auto& [kind, name] : kRecipeNames)
    if (kind == k) return name;
  throw ConfigError("unknown recipe kind");
}

RecipeKind parse_recipe(const std::string& name) {
  for (const auto& [kind, n] : kRecipeNames)
    if (name == n) return kind;
  throw ConfigError("unknown recipe '" + name + "' (expected nt, at, ard, iad, akd, rslad or atard)");
}

bool needs_teacher(RecipeKind k) { return k != RecipeKind::kNt && k != RecipeKind::kAt; }
bool needs_standard_teacher(RecipeKind k) { return k == RecipeKind::kAkd; }
bool needs_adversary(RecipeKind k) { return k != RecipeKind::kNt; }

void Recipe::validate() const {
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must lie in [0, 1]");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (lambda1 < 0.0 || lambda2 < 0.0 || lambda1 + lambda2 > 1.0) {
    throw ConfigError("lambda1, lambda2 must be >= 0 with lambda1 + lambda2 <= 1");
  }
  if (!(beta > 0.0)) throw ConfigError("beta must be positive");
  const std::string name = recipe_name(kind);
  if (needs_teacher(kind) != teacher.has_value()) {
    throw ConfigError(needs_teacher(kind) ? "recipe " + name + " requires a teacher checkpoint"
                                          : "recipe " + name + " takes no teacher");
  }
  if (needs_standard_teacher(kind) != standard_teacher.has_value()) {
    throw ConfigError(needs_standard_teacher(kind) ? "recipe akd requires a standard teacher checkpoint"
                                                   : "recipe " + name + " takes no standard teacher");
  }
}

nlohmann::json Recipe::to_json() const {
  nlohmann::ordered_json j;
  j["kind"] = recipe_name(kind);
  j["alpha"] = alpha;
  j["temperature"] = temperature;
  j["lambda1"] = lambda1;
  j["lambda2"] = lambda2;
  j["beta"] = beta;
  j["teacher"] = teacher ? nlohmann::json(*teacher) : nlohmann::json(nullptr);
  j["standard_teacher"] = standard_teacher ? nlohmann::json(*standard_teacher) : nlohmann::json(nullptr);
  return j;
}

Recipe Recipe::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("recipe must be a JSON object");
  Recipe r;
  try {
    if (j.contains("kind")) r.kind = parse_recipe(j.at("kind").get<std::string>());
    if (j.contains("alpha")) r.alpha = j.at("alpha").get<double>();
    if (j.contains("temperature")) r.temperature = j.at("temperature").get<double>();
    if (j.contains("lambda1")) r.lambda1 = j.at("lambda1").get<double>();
    if (j.contains("lambda2")) r.lambda2 = j.at("lambda2").get<double>();
    if (j.contains("beta")) r.beta = j.at("beta").get<double>();
    if (j.contains("teacher") && !j.at("teacher").is_null()) r.teacher = j.at("teacher").get<std::string>();
    if (j.contains("standard_teacher") && !j.at("standard_teacher").is_null()) {
      r.standard_teacher = j.at("standard_teacher").get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("recipe: ") + e.what());
  }
  return r;
}

Tensor make_batch(std::span<const signals::SignalRecord> records, std::span<const std::size_t> indices,
                  std::vector<int>& labels) {
  std::vector<float> x(indices.size() * signals::kIqSize);
  labels.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& r = records[indices[i]];
    std::copy(r.iq.begin(), r.iq.end(), x.begin() + i * signals::kIqSize);
    labels[i] = r.label;
  }
  return Tensor::from({indices.size(), 2, signals::kIqLength}, std::move(x));
}

double accuracy(const TransformerModel& m, std::span<const signals::SignalRecord> records,
                std::size_t batch_size) {
  if (records.empty()) throw ContractError("accuracy of an empty record set");
  ad::NoGradGuard no_grad;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  std::vector<int> y;
  for (std::size_t start = 0; start < records.size(); start += batch_size) {
    const std::size_t end = std::min(records.size(), start + batch_size);
    idx.resize(end - start);
    for (std::size_t i = start; i < end; ++i) idx[i - start] = i;
    const Tensor logits = m.logits(make_batch(records, idx, y));
    const std::size_t k = logits.dim(1);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto row = logits.data().subspan(i * k, k);
      const auto best = std::size_t(std::max_element(row.begin(), row.end()) - row.begin());
      if (int(best) == y[i]) ++correct;
    }
  }
  return double(correct) / double(records.size());
}

namespace {

// Inner adversary of one mini-batch: training-mode sphere PGD against the
// current student, on CE or (RSLAD) on KL to the teacher's clean output.
Tensor adversary(const TransformerModel& student, const Recipe& recipe, const Teachers& teachers,
                 const Tensor& x, std::span<const int> y, std::span<const signals::SignalRecord> records,
                 std::span<const std::size_t> idx, const TrainOptions& opts, std::uint64_t seed) {
  attacks::AttackBudget budget;
  budget.pnr_db = opts.adversary_pnr_db;
  budget.mode = attacks::AttackMode::kTraining;
  budget.training_steps = opts.adversary_steps;
  budget.step_fraction = opts.adversary_step_fraction;
  std::vector<double> eps(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& r = records[idx[i]];
    eps[i] = budget.epsilon(r.iq, r.snr_db);
  }
  std::vector<int> labels(y.begin(), y.end());
  attacks::InputObjective objective;
  if (recipe.kind == RecipeKind::kRslad) {
    const Tensor t = teacher_probabilities(*teachers.robust, x);
    objective = [&student, t](const Tensor& xi) {
      return ad::sum(ad::kl_rows(tempered_softmax(student.logits(xi), 1.0), t));
    };
  } else {
    objective = [&student, labels](const Tensor& xi) {
      return ad::sum(ad::cross_entropy_rows(student.logits(xi), labels));
    };
  }
  return attacks::sphere_pgd(objective, x, eps, budget, seed);
}

LossTerms batch_loss(const TransformerModel& student, const Recipe& recipe, const Teachers& teachers,
                     const Tensor& x, const Tensor& x_adv, std::span<const int> y) {
  switch (recipe.kind) {
    case RecipeKind::kNt: {
      const Tensor ce = ad::cross_entropy(student.logits(x), y);
      return {ce, ce.item(), 0.0};
    }
    case RecipeKind::kAt: return loss_at(student, x, x_adv, y, recipe.alpha);
    case RecipeKind::kArd:
      return loss_ard(student, *teachers.robust, x, x_adv, y, recipe.alpha, recipe.temperature);
    case RecipeKind::kIad:
      return loss_iad(student, *teachers.robust, x, x_adv, y, recipe.beta, recipe.temperature);
    case RecipeKind::kAkd:
      return loss_akd(student, *teachers.robust, *teachers.standard, x, x_adv, y, recipe.lambda1,
                      recipe.lambda2);
    case RecipeKind::kRslad: return loss_rslad(student, *teachers.robust, x, x_adv, recipe.alpha);
    case RecipeKind::kAtard: return loss_atard(student, *teachers.robust, x_adv, y);
  }
  throw ConfigError("unknown recipe kind");
}

void check_teachers(const Recipe& recipe, const Teachers& teachers, const TransformerModel& student) {
  if (needs_teacher(recipe.kind) && teachers.robust == nullptr) {
    throw ConfigError("recipe " + recipe_name(recipe.kind) + " requires a teacher model");
  }
  if (needs_standard_teacher(recipe.kind) && teachers.standard == nullptr) {
    throw ConfigError("recipe akd requires a standard teacher model");
  }
  for (const auto* t : {teachers.robust, teachers.standard}) {
    if (t == nullptr) continue;
    if (t == &student) throw ConfigError("the student cannot be its own teacher");
    if (t->config().classes != student.config().classes ||
        t->input_shape(1) != student.input_shape(1)) {
      throw ConfigError("teacher and student disagree on input shape or class count");
    }
  }
  if (recipe.kind == RecipeKind::kAtard) {
    atard_layer_pairs(teachers.robust->config().layers, student.config().layers);
  }
}

}  // namespace

TrainResult train(TransformerModel& student, const Recipe& recipe, const Teachers& teachers,
                  const signals::Dataset& data, const TrainOptions& opts, const EpochCallback& on_epoch) {
  if (opts.epochs == 0 || opts.batch_size == 0) throw ConfigError("epochs and batch size must be positive");
  if (opts.adversary_steps == 0) throw ConfigError("adversary steps must be positive");
  if (student.config().classes < data.class_count()) {
    throw ConfigError("model has " + std::to_string(student.config().classes) + " classes, dataset " +
                      std::to_string(data.class_count()));
  }
  check_teachers(recipe, teachers, student);
  const auto train_idx = data.indices(signals::Split::kTrain);
  if (train_idx.empty()) throw ContractError("dataset has no training records");

  const std::uint64_t robust_sum = teachers.robust ? teachers.robust->checksum() : 0;
  const std::uint64_t standard_sum = teachers.standard ? teachers.standard->checksum() : 0;

  std::vector<Tensor> params;
  for (const auto& p : student.parameters()) params.push_back(p.tensor);
  Adam adam(params, AdamConfig{.lr = opts.lr});

  const bool write = !opts.out_dir.empty();
  if (write) std::filesystem::create_directories(opts.out_dir);
  const auto path = [&](const std::string& name) {
    return (std::filesystem::path(opts.out_dir) / name).string();
  };

  TrainResult result;
  const auto started = std::chrono::steady_clock::now();
  std::vector<int> y;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
    const auto order = shuffled(train_idx, signals::mix_seed(opts.seed, epoch));
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size, ++step) {
      const std::span<const std::size_t> idx(order.data() + start,
                                             std::min(opts.batch_size, order.size() - start));
      const Tensor x = make_batch(data.records, idx, y);
      Tensor x_adv;
      if (needs_adversary(recipe.kind)) {
        x_adv = adversary(student, recipe, teachers, x, y, data.records, idx, opts,
                          signals::mix_seed(opts.seed ^ 0xadu, step));
      }
      const LossTerms loss = batch_loss(student, recipe, teachers, x, x_adv, y);
      const double total = loss.total.item();
      if (!std::isfinite(total) || !std::isfinite(loss.loss1) || !std::isfinite(loss.loss2)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << " batch " << batches << " (total " << total
            << ", loss1 " << loss.loss1 << ", loss2 " << loss.loss2 << ")";
        if (write) {
          model::save_checkpoint(student, path("last_good.ckpt"));
          io::write_text(path("loss_log.csv"), loss_log_csv(result.log));
          msg << "; parameters before this step saved to " << path("last_good.ckpt");
        }
        throw NumericalError(msg.str());
      }
      if (total < -kNegativeLossSlack) {
        throw ContractError("negative loss " + std::to_string(total) + " at epoch " + std::to_string(epoch));
      }
      adam.zero_grad();
      loss.total.backward();
      adam.step();

      LossLogEntry e{epoch, batches, total, loss.loss1, loss.loss2, 0.0};
      if (opts.record_wall_time) {
        e.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
      }
      result.log.push_back(e);
      epoch_loss += total;
      ++batches;
    }
    if (write && opts.checkpoint_every != 0 && epoch % opts.checkpoint_every == 0) {
      result.checkpoints.push_back(path(epoch_name(epoch)));
      model::save_checkpoint(student, result.checkpoints.back());
    }
    if (on_epoch) on_epoch(epoch, epoch_loss / double(batches));
  }
  adam.zero_grad();

  if ((teachers.robust && teachers.robust->checksum() != robust_sum) ||
      (teachers.standard && teachers.standard->checksum() != standard_sum)) {
    throw ContractError("teacher parameters changed during training");
  }
  if (write) {
    result.checkpoints.push_back(path("final.ckpt"));
    model::save_checkpoint(student, result.checkpoints.back());
    io::write_text(path("loss_log.csv"), loss_log_csv(result.log));
  }
  return result;
}

std::string loss_log_csv(std::span<const LossLogEntry> log) {
  std::ostringstream os;
  os << "epoch,batch,loss_total,loss1,loss2,wall_ms\n" << std::setprecision(9);
  for (const auto& e : log) {
    os << e.epoch << ',' << e.batch << ',' << e.loss_total << ',' << e.loss1 << ',' << e.loss2 << ','
       << e.wall_ms << '\n';
  }
  return os.str();
}

}  // namespace amc::training
