// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "amc/autodiff/tensor.hpp"
#include "amc/model/transformer.hpp"
#include "amc/signals/record.hpp"

namespace amc::attacks {

using signals::Iq;

enum class AttackKind { kFgm, kPgd };
enum class AttackMode { kTraining, kEvaluation };
/// kPnr: budget relative to the Gaussian noise power.
/// kPgnr: the given ratio is measured against alpha-stable noise of the same
/// power as the Gaussian noise, so against total noise it is halved.
enum class BudgetMode { kPnr, kPgnr };

std::string attack_name(AttackKind k);
/// "fgm" or "pgd"; throws ConfigError otherwise.
AttackKind parse_attack(const std::string& name);

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

/// PNR budget: eps = sqrt(pnr_lin * ||x0||^2 / (snr_lin + 1)). A PNR of -inf
/// gives 0.
double perturbation_budget(double x0_squared_norm, double pnr_db, double snr_db,
                           BudgetMode mode = BudgetMode::kPnr);
double perturbation_budget(std::span<const float> x0, double pnr_db, double snr_db,
                           BudgetMode mode = BudgetMode::kPnr);
/// Inverse of perturbation_budget in dB, for auditing a produced perturbation.
double achieved_pnr_db(double perturbation_norm, double x0_squared_norm, double snr_db,
                       BudgetMode mode = BudgetMode::kPnr);

/// Sphere projection: x0 + eps * (x_star - x0) / ||x_star - x0||. When x_star == x0 the
/// direction is a unit vector drawn from `seed`. eps == 0 returns x0.
std::vector<float> project_onto_sphere(std::span<const float> x_star, std::span<const float> x0,
                                       double epsilon, std::uint64_t seed);

struct AttackBudget {
  double pnr_db = -10.0;
  /// When set, overrides each record's own SNR tag in the budget.
  std::optional<double> snr_db;
  BudgetMode budget_mode = BudgetMode::kPnr;
  AttackMode mode = AttackMode::kEvaluation;
  /// PGD step eta0 = step_fraction * eps.
  double step_fraction = 0.5;
  /// Step the normalised gradient (an l2 steepest-ascent step of length
  /// eta0). When false the raw gradient is scaled by eta0.
  bool normalize_step = true;
  /// Evaluation-mode cap; training mode always runs training_steps.
  std::size_t max_steps = 50;
  std::size_t training_steps = 3;
  /// Seeds the random direction used when a step leaves x exactly at x0.
  std::uint64_t seed = 0;

  double epsilon(std::span<const float> x0, double record_snr_db) const;
  std::size_t steps() const { return mode == AttackMode::kTraining ? training_steps : max_steps; }
};

struct AttackOutcome {
  Iq adversarial{};
  bool success = false;
  std::size_t steps_used = 0;
  double perturbation_norm = 0.0;
  double epsilon = 0.0;
  int predicted_label = -1;
};

/// Maps a batch [B, 2, 128] to logits [B, K]; must be differentiable with
/// respect to its input and safe to call from several threads.
using Classifier = std::function<ad::Tensor(const ad::Tensor&)>;
Classifier classifier(const model::TransformerModel& m);

/// FGM step direction for every row: the negated,
/// normalised input gradient of CE(f(x0), target). Rows whose gradient
/// vanishes come back all zero.
std::vector<Iq> fgm_directions(const Classifier& f, std::span<const Iq> x0, int target);

struct Target {
  Iq x0;
  int label;
  double epsilon;
  std::uint64_t seed;
};

/// Targeted FGM over a batch. Targets are tried in ascending class order,
/// skipping the true label; the first misclassified candidate wins. With
/// no success the candidate of lowest true-class probability is returned.
std::vector<AttackOutcome> fgm_batch(const Classifier& f, std::span<const Target> targets);
/// PGD with sphere projection over a batch. Evaluation mode stops a record as soon as it is
/// misclassified; training mode runs exactly budget.steps() steps.
std::vector<AttackOutcome> pgd_batch(const Classifier& f, std::span<const Target> targets,
                                     const AttackBudget& budget);

/// Single-record conveniences.
AttackOutcome fgm_attack(const Classifier& f, const Iq& x0, int y, double record_snr_db,
                         const AttackBudget& budget);
AttackOutcome pgd_attack(const Classifier& f, const Iq& x0, int y, double record_snr_db,
                         const AttackBudget& budget);

/// Attacks every record; chunked so the result does not depend on `jobs`.
std::vector<AttackOutcome> attack_records(AttackKind kind, const Classifier& f,
                                          std::span<const signals::SignalRecord> records,
                                          const AttackBudget& budget, std::size_t jobs = 1);

/// Scalar objective of a batch, summed over rows so each row's input
/// gradient is its own. Used by training-mode adversaries.
using InputObjective = std::function<ad::Tensor(const ad::Tensor&)>;
/// Runs budget.training_steps sphere-projected ascent steps on `objective`
/// starting from x0 [B, 2, 128]; eps has one entry per row. Model
/// parameters are frozen for the duration. Returns a detached tensor.
ad::Tensor sphere_pgd(const InputObjective& objective, const ad::Tensor& x0,
                      std::span<const double> epsilon, const AttackBudget& budget,
                      std::uint64_t seed);

struct AttackCsvRow {
  std::size_t record_index;
  double pnr_db;
  AttackKind kind;
  AttackOutcome outcome;
};
/// Columns: record_index, pnr_db, attack, steps_used, perturbation_norm,
/// success, predicted_label.
std::string attack_csv(std::span<const AttackCsvRow> rows);

/// Chunk size for record-level fan-out; fixed so results ignore --jobs.
inline constexpr std::size_t kAttackChunk = 100;

}  // namespace amc::attacks
