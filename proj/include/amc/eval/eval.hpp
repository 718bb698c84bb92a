// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "amc/attacks/attacks.hpp"
#include "amc/model/transformer.hpp"
#include "amc/signals/record.hpp"

namespace amc::eval {

struct CurvePoint {
  double pnr_db = 0.0;
  double accuracy = 0.0;
  std::size_t sample_count = 0;
};

struct RobustnessCurve {
  attacks::AttackKind kind = attacks::AttackKind::kPgd;
  attacks::BudgetMode budget_mode = attacks::BudgetMode::kPnr;
  std::string model_id;
  /// Set for transfer curves: the model the attacks were crafted on.
  std::optional<std::string> surrogate_id;
  std::uint64_t seed = 0;
  std::vector<CurvePoint> points;
};

struct SmoothnessReport {
  std::string model_id;
  std::uint64_t seed = 0;
  double mean_gradient_norm = 0.0;
  std::size_t n = 0;
};

/// -30, -25, -20, -15, -10 dB.
std::vector<double> default_pnr_grid();

/// Fraction of records whose attacked prediction equals the label, at every
/// grid PNR. `budget` supplies everything except pnr_db; attacks run in
/// evaluation mode. Records must share one SNR tag and the grid must be
/// strictly increasing (-inf allowed, meaning no perturbation).
RobustnessCurve accuracy_under_attack(const model::TransformerModel& m, const std::string& model_id,
                                      std::span<const signals::SignalRecord> records,
                                      attacks::AttackKind kind, std::span<const double> pnr_grid,
                                      const attacks::AttackBudget& budget, std::size_t jobs = 1);

/// Attacks crafted white-box on `surrogate`, scored on `target`.
RobustnessCurve transferability_eval(const model::TransformerModel& surrogate,
                                     const std::string& surrogate_id,
                                     const model::TransformerModel& target, const std::string& target_id,
                                     std::span<const signals::SignalRecord> records,
                                     attacks::AttackKind kind, std::span<const double> pnr_grid,
                                     const attacks::AttackBudget& budget, std::size_t jobs = 1);

/// Per-record l2 norm of the input gradient of CE(f(x), y).
std::vector<double> input_gradient_norms(const model::TransformerModel& m,
                                         std::span<const signals::SignalRecord> records,
                                         std::size_t jobs = 1);

/// Mean input-gradient norm over n records drawn without replacement with
/// `seed` (all records when fewer than n).
SmoothnessReport gradient_norm_smoothness(const model::TransformerModel& m, const std::string& model_id,
                                          std::span<const signals::SignalRecord> records,
                                          std::size_t n = 1000, std::uint64_t seed = 0,
                                          std::size_t jobs = 1);

/// Picks n distinct indices from [0, size) deterministically from seed, in
/// ascending order; all indices when n >= size.
std::vector<std::size_t> sample_indices(std::size_t size, std::size_t n, std::uint64_t seed);

/// Curves of one (model, attack) pair over several seeds, sharing a grid.
struct CurveSet {
  std::string name;
  std::vector<RobustnessCurve> per_seed;

  /// Mean accuracy per grid point.
  std::vector<double> mean() const;
  /// Throws ContractError when seeds disagree on grid, attack or model.
  void validate() const;
};

struct Report {
  std::vector<CurveSet> curves;
  std::vector<SmoothnessReport> smoothness;
  nlohmann::ordered_json config_echo = nlohmann::ordered_json::object();
  std::vector<std::uint64_t> seeds;
};

/// Columns: pnr_db, accuracy_mean, accuracy_seed_<s> per seed, n_records.
std::string curve_csv(const CurveSet& set);
/// {models, curves, smoothness, config_echo, seeds} with a fixed key order.
nlohmann::ordered_json report_json(const Report& r);
Report parse_report(const nlohmann::ordered_json& j);
/// Writes <name>.csv per curve set and summary.json into `dir`.
void emit_report(const Report& r, const std::string& dir);

}  // namespace amc::eval
