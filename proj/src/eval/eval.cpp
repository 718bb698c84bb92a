// SPDX-License-Identifier: Apache-2.0
#include "amc/eval/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

#include "amc/autodiff/ops.hpp"
#include "amc/error.hpp"
#include "amc/io/binary.hpp"
#include "amc/signals/dataset.hpp"
#include "amc/training/trainer.hpp"
#include "amc/util/parallel.hpp"

namespace amc::eval {

using attacks::AttackKind;
using attacks::BudgetMode;
using signals::SignalRecord;

namespace {

void check_inputs(std::span<const SignalRecord> records, std::span<const double> grid) {
  if (records.empty()) throw ContractError("evaluation needs at least one record");
  if (grid.empty()) throw ContractError("PNR grid is empty");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw ConfigError("PNR grid must be strictly increasing");
  }
  for (const auto& r : records) {
    if (r.snr_db != records.front().snr_db) {
      throw ContractError("records passed to an attack curve must share one SNR tag");
    }
  }
}

void check_labels(const model::TransformerModel& m, std::span<const SignalRecord> records) {
  for (const auto& r : records) {
    if (r.label >= m.config().classes) {
      throw ConfigError("record label " + std::to_string(r.label) + " exceeds the model's " +
                        std::to_string(m.config().classes) + " classes");
    }
  }
}

// Predicted class per row, scored in the same fixed chunks as the attacks.
std::vector<int> predict(const model::TransformerModel& m, std::span<const signals::Iq> inputs, std::size_t jobs) {
  std::vector<int> out(inputs.size());
  parallel_chunks(inputs.size(), attacks::kAttackChunk, jobs, [&](std::size_t begin, std::size_t end) {
    ad::NoGradGuard no_grad;
    std::vector<float> x((end - begin) * signals::kIqSize);
    for (std::size_t i = begin; i < end; ++i)
      std::copy(inputs[i].begin(), inputs[i].end(), x.begin() + (i - begin) * signals::kIqSize);
    const ad::Tensor logits = m.logits(ad::Tensor::from(m.input_shape(end - begin), std::move(x)));
    const std::size_t k = logits.dim(1);
    for (std::size_t i = begin; i < end; ++i) {
      const auto row = logits.data().subspan((i - begin) * k, k);
      out[i] = int(std::max_element(row.begin(), row.end()) - row.begin());
    }
  });
  return out;
}

std::string budget_mode_name(BudgetMode m) { return m == BudgetMode::kPgnr ? "pgnr" : "pnr"; }

BudgetMode parse_budget_mode(const std::string& s) {
  if (s == "pnr") return BudgetMode::kPnr;
  if (s == "pgnr") return BudgetMode::kPgnr;
  throw FormatError("unknown budget mode '" + s + "'", 0);
}

// JSON has no infinities; the clean point -inf is stored as null.
nlohmann::ordered_json pnr_to_json(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}
double pnr_from_json(const nlohmann::ordered_json& j) {
  return j.is_null() ? -std::numeric_limits<double>::infinity() : j.get<double>();
}

}  // namespace

std::vector<double> default_pnr_grid() { return {-30.0, -25.0, -20.0, -15.0, -10.0}; }

RobustnessCurve accuracy_under_attack(const model::TransformerModel& m, const std::string& model_id,
                                      std::span<const SignalRecord> records, AttackKind kind,
                                      std::span<const double> pnr_grid, const attacks::AttackBudget& budget,
                                      std::size_t jobs) {
  check_inputs(records, pnr_grid);
  check_labels(m, records);
  RobustnessCurve curve{kind, budget.budget_mode, model_id, std::nullopt, budget.seed, {}};
  const auto f = attacks::classifier(m);
  for (double pnr : pnr_grid) {
    attacks::AttackBudget b = budget;
    b.pnr_db = pnr;
    b.mode = attacks::AttackMode::kEvaluation;
    const auto outcomes = attacks::attack_records(kind, f, records, b, jobs);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < records.size(); ++i) correct += outcomes[i].predicted_label == records[i].label;
    curve.points.push_back({pnr, double(correct) / double(records.size()), records.size()});
  }
  return curve;
}

RobustnessCurve transferability_eval(const model::TransformerModel& surrogate, const std::string& surrogate_id,
                                     const model::TransformerModel& target, const std::string& target_id,
                                     std::span<const SignalRecord> records, AttackKind kind,
                                     std::span<const double> pnr_grid, const attacks::AttackBudget& budget,
                                     std::size_t jobs) {
  if (surrogate.input_shape(1) != target.input_shape(1)) {
    throw ConfigError("surrogate and target expect different input shapes");
  }
  if (surrogate.config().classes != target.config().classes) {
    throw ConfigError("surrogate and target have different class counts");
  }
  check_inputs(records, pnr_grid);
  check_labels(target, records);
  RobustnessCurve curve{kind, budget.budget_mode, target_id, surrogate_id, budget.seed, {}};
  const auto f = attacks::classifier(surrogate);
  for (double pnr : pnr_grid) {
    attacks::AttackBudget b = budget;
    b.pnr_db = pnr;
    b.mode = attacks::AttackMode::kEvaluation;
    const auto outcomes = attacks::attack_records(kind, f, records, b, jobs);
    std::vector<signals::Iq> adv(outcomes.size());
    for (std::size_t i = 0; i < adv.size(); ++i) adv[i] = outcomes[i].adversarial;
    const auto pred = predict(target, adv, jobs);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < records.size(); ++i) correct += pred[i] == records[i].label;
    curve.points.push_back({pnr, double(correct) / double(records.size()), records.size()});
  }
  return curve;
}

std::vector<double> input_gradient_norms(const model::TransformerModel& m, std::span<const SignalRecord> records,
                                         std::size_t jobs) {
  check_labels(m, records);
  std::vector<double> norms(records.size());
  parallel_chunks(records.size(), attacks::kAttackChunk, jobs, [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> idx(end - begin);
    for (std::size_t i = begin; i < end; ++i) idx[i - begin] = i;
    std::vector<int> y;
    const ad::Tensor batch = training::make_batch(records, idx, y);
    ad::FreezeParameters freeze;
    ad::Tensor x = ad::Tensor::from(batch.shape(), {batch.data().begin(), batch.data().end()}, true);
    // Summing per-row losses keeps each row's gradient its own.
    ad::sum(ad::cross_entropy_rows(m.logits(x), y)).backward();
    const auto g = x.grad();
    for (std::size_t i = begin; i < end; ++i) {
      double s = 0.0;
      if (!g.empty())
        for (std::size_t k = 0; k < signals::kIqSize; ++k) {
          const double v = g[(i - begin) * signals::kIqSize + k];
          s += v * v;
        }
      norms[i] = std::sqrt(s);
    }
  });
  return norms;
}

std::vector<std::size_t> sample_indices(std::size_t size, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(size);
  for (std::size_t i = 0; i < size; ++i) idx[i] = i;
  if (n >= size) return idx;
  std::mt19937_64 rng(signals::mix_seed(seed, 0x5a3b1e));
  for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + rng() % (size - i)]);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  return idx;
}

SmoothnessReport gradient_norm_smoothness(const model::TransformerModel& m, const std::string& model_id,
                                          std::span<const SignalRecord> records, std::size_t n,
                                          std::uint64_t seed, std::size_t jobs) {
  if (records.empty() || n == 0) throw ContractError("smoothness needs at least one record");
  std::vector<SignalRecord> picked;
  for (std::size_t i : sample_indices(records.size(), n, seed)) picked.push_back(records[i]);
  const auto norms = input_gradient_norms(m, picked, jobs);
  double total = 0.0;
  for (double v : norms) total += v;
  return {model_id, seed, total / double(norms.size()), norms.size()};
}

std::vector<double> CurveSet::mean() const {
  validate();
  std::vector<double> out(per_seed.front().points.size(), 0.0);
  for (const auto& c : per_seed)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c.points[i].accuracy;
  for (auto& v : out) v /= double(per_seed.size());
  return out;
}

void CurveSet::validate() const {
  if (per_seed.empty()) throw ContractError("curve set '" + name + "' has no curves");
  const auto& ref = per_seed.front();
  for (const auto& c : per_seed) {
    if (c.kind != ref.kind || c.model_id != ref.model_id || c.surrogate_id != ref.surrogate_id ||
        c.budget_mode != ref.budget_mode || c.points.size() != ref.points.size()) {
      throw ContractError("curve set '" + name + "' mixes attacks, models or grids");
    }
    for (std::size_t i = 0; i < c.points.size(); ++i) {
      const double a = c.points[i].pnr_db, b = ref.points[i].pnr_db;
      if (!(a == b)) throw ContractError("curve set '" + name + "' mixes PNR grids");
      if (c.points[i].accuracy < 0.0 || c.points[i].accuracy > 1.0) throw ContractError("accuracy outside [0, 1]");
    }
  }
}

std::string curve_csv(const CurveSet& set) {
  const auto mean = set.mean();
  std::ostringstream os;
  os << "pnr_db,accuracy_mean";
  for (const auto& c : set.per_seed) os << ",accuracy_seed_" << c.seed;
  os << ",n_records\n" << std::setprecision(9);
  const auto& ref = set.per_seed.front().points;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    os << ref[i].pnr_db << ',' << mean[i];
    for (const auto& c : set.per_seed) os << ',' << c.points[i].accuracy;
    os << ',' << ref[i].sample_count << '\n';
  }
  return os.str();
}

nlohmann::ordered_json report_json(const Report& r) {
  using J = nlohmann::ordered_json;
  std::vector<std::string> models;
  const auto add_model = [&](const std::string& id) {
    if (std::find(models.begin(), models.end(), id) == models.end()) models.push_back(id);
  };
  J curves = J::array();
  for (const auto& set : r.curves) {
    const auto mean = set.mean();
    const auto& ref = set.per_seed.front();
    add_model(ref.model_id);
    if (ref.surrogate_id) add_model(*ref.surrogate_id);
    J c;
    c["name"] = set.name;
    c["attack"] = attacks::attack_name(ref.kind);
    c["budget_mode"] = budget_mode_name(ref.budget_mode);
    c["model_id"] = ref.model_id;
    c["surrogate_id"] = ref.surrogate_id ? J(*ref.surrogate_id) : J(nullptr);
    J grid = J::array(), n = J::array();
    for (const auto& p : ref.points) {
      grid.push_back(pnr_to_json(p.pnr_db));
      n.push_back(p.sample_count);
    }
    c["pnr_db"] = grid;
    c["n_records"] = n;
    c["accuracy_mean"] = mean;
    J seeds = J::array();
    for (const auto& s : set.per_seed) {
      J acc = J::array();
      for (const auto& p : s.points) acc.push_back(p.accuracy);
      seeds.push_back(J{{"seed", s.seed}, {"accuracy", acc}});
    }
    c["per_seed"] = seeds;
    curves.push_back(c);
  }
  J smooth = J::array();
  for (const auto& s : r.smoothness) {
    add_model(s.model_id);
    smooth.push_back(J{{"model_id", s.model_id}, {"seed", s.seed}, {"mean_gradient_norm", s.mean_gradient_norm}, {"n", s.n}});
  }
  J out;
  out["models"] = models;
  out["curves"] = curves;
  out["smoothness"] = smooth;
  out["config_echo"] = r.config_echo;
  out["seeds"] = r.seeds;
  return out;
}

Report parse_report(const nlohmann::ordered_json& j) {
  Report r;
  try {
    for (const auto& c : j.at("curves")) {
      CurveSet set;
      set.name = c.at("name").get<std::string>();
      const auto& grid = c.at("pnr_db");
      const auto& n = c.at("n_records");
      for (const auto& s : c.at("per_seed")) {
        RobustnessCurve curve;
        curve.kind = attacks::parse_attack(c.at("attack").get<std::string>());
        curve.budget_mode = parse_budget_mode(c.at("budget_mode").get<std::string>());
        curve.model_id = c.at("model_id").get<std::string>();
        if (!c.at("surrogate_id").is_null()) curve.surrogate_id = c.at("surrogate_id").get<std::string>();
        curve.seed = s.at("seed").get<std::uint64_t>();
        const auto& acc = s.at("accuracy");
        if (acc.size() != grid.size() || n.size() != grid.size()) throw FormatError("curve length mismatch", 0);
        for (std::size_t i = 0; i < grid.size(); ++i) {
          curve.points.push_back({pnr_from_json(grid[i]), acc[i].get<double>(), n[i].get<std::size_t>()});
        }
        set.per_seed.push_back(std::move(curve));
      }
      set.validate();
      r.curves.push_back(std::move(set));
    }
    for (const auto& s : j.at("smoothness")) {
      r.smoothness.push_back({s.at("model_id").get<std::string>(), s.at("seed").get<std::uint64_t>(),
                              s.at("mean_gradient_norm").get<double>(), s.at("n").get<std::size_t>()});
    }
    r.config_echo = j.at("config_echo");
    r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report: ") + e.what(), 0);
  }
  return r;
}

void emit_report(const Report& r, const std::string& dir) {
  if (r.curves.empty() && r.smoothness.empty()) throw ContractError("empty report");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  for (const auto& set : r.curves) {
    io::write_text((std::filesystem::path(dir) / (set.name + ".csv")).string(), curve_csv(set));
  }
  io::write_text((std::filesystem::path(dir) / "summary.json").string(), report_json(r).dump(2) + "\n");
}

}  // namespace amc::eval
