// SPDX-License-Identifier: Apache-2.0
#include "amc/attacks/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

#include "amc/autodiff/ops.hpp"
#include "amc/error.hpp"
#include "amc/signals/dataset.hpp"
#include "amc/util/parallel.hpp"

namespace amc::attacks {

using signals::kIqLength;
using signals::kIqSize;

std::string attack_name(AttackKind k) { return k == AttackKind::kFgm ? "fgm" : "pgd"; }

AttackKind parse_attack(const std::string& name) {
  if (name == "fgm") return AttackKind::kFgm;
  if (name == "pgd") return AttackKind::kPgd;
  throw ConfigError("unknown attack '" + name + "' (expected fgm or pgd)");
}

namespace {

double pnr_linear(double pnr_db, BudgetMode mode) {
  const double lin = db_to_linear(pnr_db);
  return mode == BudgetMode::kPgnr ? lin / 2.0 : lin;
}

double squared(std::span<const float> v) {
  double s = 0.0;
  for (float x : v) s += double(x) * x;
  return s;
}

ad::Tensor to_batch(std::span<const Iq> xs) {
  std::vector<float> values(xs.size() * kIqSize);
  for (std::size_t i = 0; i < xs.size(); ++i) std::copy(xs[i].begin(), xs[i].end(), values.begin() + i * kIqSize);
  return ad::Tensor::from({xs.size(), 2, kIqLength}, std::move(values));
}

struct Evaluation {
  std::vector<float> logits;  // [B, K]
  std::size_t classes = 0;
  std::vector<Iq> gradients;  // empty when not requested

  int argmax(std::size_t row) const {
    const float* r = logits.data() + row * classes;
    return static_cast<int>(std::max_element(r, r + classes) - r);
  }
  double probability(std::size_t row, int label) const {
    const float* r = logits.data() + row * classes;
    const double mx = *std::max_element(r, r + classes);
    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) total += std::exp(double(r[c]) - mx);
    return std::exp(double(r[label]) - mx) / total;
  }
};

// Logits at xs and, when `labels` is given, the input gradient of the summed
// per-row cross entropy.
Evaluation evaluate(const Classifier& f, std::span<const Iq> xs, const std::vector<int>* labels) {
  Evaluation e;
  if (xs.empty()) return e;
  ad::Tensor x = to_batch(xs);
  if (!labels) {
    ad::NoGradGuard no_grad;
    ad::Tensor logits = f(x);
    e.classes = logits.dim(1);
    e.logits.assign(logits.data().begin(), logits.data().end());
    return e;
  }
  ad::FreezeParameters freeze;
  x = ad::Tensor::from(x.shape(), {x.data().begin(), x.data().end()}, true);
  ad::Tensor logits = f(x);
  e.classes = logits.dim(1);
  e.logits.assign(logits.data().begin(), logits.data().end());
  ad::sum(ad::cross_entropy_rows(logits, *labels)).backward();
  e.gradients.resize(xs.size());
  const auto g = x.grad();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::copy(g.begin() + i * kIqSize, g.begin() + (i + 1) * kIqSize, e.gradients[i].begin());
  }
  return e;
}

Iq to_iq(const std::vector<float>& v) {
  Iq out;
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

double distance(const Iq& a, const Iq& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < kIqSize; ++i) s += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
  return std::sqrt(s);
}

void finish(AttackOutcome& o, const Target& t, const Iq& x, int predicted) {
  o.adversarial = x;
  o.predicted_label = predicted;
  o.success = predicted != t.label;
  o.perturbation_norm = distance(x, t.x0);
}

}  // namespace

double perturbation_budget(double x0_squared_norm, double pnr_db, double snr_db, BudgetMode mode) {
  if (std::isinf(pnr_db) && pnr_db < 0) return 0.0;
  return std::sqrt(pnr_linear(pnr_db, mode) * x0_squared_norm / (db_to_linear(snr_db) + 1.0));
}

double perturbation_budget(std::span<const float> x0, double pnr_db, double snr_db, BudgetMode mode) {
  return perturbation_budget(squared(x0), pnr_db, snr_db, mode);
}

double achieved_pnr_db(double perturbation_norm, double x0_squared_norm, double snr_db, BudgetMode mode) {
  const double lin = perturbation_norm * perturbation_norm * (db_to_linear(snr_db) + 1.0) / x0_squared_norm;
  return 10.0 * std::log10(mode == BudgetMode::kPgnr ? 2.0 * lin : lin);
}

std::vector<float> project_onto_sphere(std::span<const float> x_star, std::span<const float> x0,
                                       double epsilon, std::uint64_t seed) {
  if (x_star.size() != x0.size()) throw DimensionError("project_onto_sphere: size mismatch");
  if (epsilon < 0.0) throw ContractError("project_onto_sphere: negative epsilon");
  std::vector<float> out(x0.begin(), x0.end());
  if (epsilon == 0.0) return out;
  std::vector<double> d(x0.size());
  double norm = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i] = double(x_star[i]) - x0[i];
    norm += d[i] * d[i];
  }
  if (norm == 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    while (norm == 0.0) {
      norm = 0.0;
      for (auto& v : d) {
        v = normal(rng);
        norm += v * v;
      }
    }
  }
  const double k = epsilon / std::sqrt(norm);
  for (std::size_t i = 0; i < d.size(); ++i) out[i] = static_cast<float>(x0[i] + k * d[i]);
  return out;
}

double AttackBudget::epsilon(std::span<const float> x0, double record_snr_db) const {
  return perturbation_budget(x0, pnr_db, snr_db.value_or(record_snr_db), budget_mode);
}

Classifier classifier(const model::TransformerModel& m) {
  return [&m](const ad::Tensor& x) { return m.logits(x); };
}

std::vector<Iq> fgm_directions(const Classifier& f, std::span<const Iq> x0, int target) {
  std::vector<int> labels(x0.size(), target);
  auto e = evaluate(f, x0, &labels);
  for (auto& g : e.gradients) {
    double n = 0.0;
    for (float v : g) n += double(v) * v;
    n = std::sqrt(n);
    for (float& v : g) v = n > 0.0 ? static_cast<float>(-v / n) : 0.0f;
  }
  return e.gradients;
}

std::vector<AttackOutcome> fgm_batch(const Classifier& f, std::span<const Target> targets) {
  const std::size_t b = targets.size();
  std::vector<AttackOutcome> out(b);
  if (b == 0) return out;
  std::vector<Iq> x0(b);
  for (std::size_t i = 0; i < b; ++i) {
    x0[i] = targets[i].x0;
    out[i].epsilon = targets[i].epsilon;
  }
  const Evaluation clean = evaluate(f, x0, nullptr);
  const std::size_t classes = clean.classes;

  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < b; ++i) {
    if (targets[i].label < 0 || std::size_t(targets[i].label) >= classes) {
      throw IndexError("fgm: label out of range");
    }
    if (targets[i].epsilon == 0.0) {
      finish(out[i], targets[i], x0[i], clean.argmax(i));
    } else {
      active.push_back(i);
    }
  }
  std::vector<double> best_prob(b, std::numeric_limits<double>::infinity());
  std::vector<std::optional<std::pair<Iq, int>>> best(b);

  for (std::size_t t = 0; t < classes && !active.empty(); ++t) {
    std::vector<std::size_t> rows;
    for (auto i : active) {
      if (targets[i].label != int(t)) rows.push_back(i);
    }
    if (rows.empty()) continue;
    std::vector<Iq> xs;
    for (auto i : rows) xs.push_back(x0[i]);
    const auto dirs = fgm_directions(f, xs, int(t));
    std::vector<Iq> candidates;
    std::vector<std::size_t> owners;
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const auto& d = dirs[j];
      if (std::all_of(d.begin(), d.end(), [](float v) { return v == 0.0f; })) continue;
      const auto i = rows[j];
      std::vector<float> star(kIqSize);
      for (std::size_t k = 0; k < kIqSize; ++k) star[k] = x0[i][k] + d[k];
      candidates.push_back(to_iq(project_onto_sphere(star, x0[i], targets[i].epsilon, targets[i].seed)));
      owners.push_back(i);
    }
    const Evaluation e = evaluate(f, candidates, nullptr);
    std::vector<bool> done(b, false);
    for (std::size_t j = 0; j < owners.size(); ++j) {
      const auto i = owners[j];
      const int pred = e.argmax(j);
      if (pred != targets[i].label) {
        finish(out[i], targets[i], candidates[j], pred);
        out[i].steps_used = 1;
        done[i] = true;
        continue;
      }
      const double p = e.probability(j, targets[i].label);
      if (p < best_prob[i]) {
        best_prob[i] = p;
        best[i] = std::pair{candidates[j], pred};
      }
    }
    std::erase_if(active, [&](std::size_t i) { return done[i]; });
  }
  for (auto i : active) {
    if (best[i]) {
      finish(out[i], targets[i], best[i]->first, best[i]->second);
    } else {
      // Every targeted gradient vanished: fall back to a seeded direction.
      const Iq x = to_iq(project_onto_sphere(x0[i], x0[i], targets[i].epsilon, targets[i].seed));
      finish(out[i], targets[i], x, evaluate(f, std::span<const Iq>(&x, 1), nullptr).argmax(0));
    }
    out[i].steps_used = 1;
  }
  return out;
}

std::vector<AttackOutcome> pgd_batch(const Classifier& f, std::span<const Target> targets,
                                     const AttackBudget& budget) {
  const std::size_t b = targets.size();
  std::vector<AttackOutcome> out(b);
  if (b == 0) return out;
  const bool evaluation = budget.mode == AttackMode::kEvaluation;
  const std::size_t steps = budget.steps();
  if (steps == 0) throw ConfigError("pgd needs at least one step");

  std::vector<Iq> x(b);
  std::vector<std::size_t> active;
  std::vector<std::size_t> zero_budget;
  for (std::size_t i = 0; i < b; ++i) {
    x[i] = targets[i].x0;
    out[i].epsilon = targets[i].epsilon;
    (targets[i].epsilon == 0.0 ? zero_budget : active).push_back(i);
  }
  if (!zero_budget.empty()) {
    std::vector<Iq> xs;
    for (auto i : zero_budget) xs.push_back(x[i]);
    const auto e = evaluate(f, xs, nullptr);
    for (std::size_t j = 0; j < zero_budget.size(); ++j) {
      finish(out[zero_budget[j]], targets[zero_budget[j]], xs[j], e.argmax(j));
    }
  }

  // Pass s evaluates x_s (x_0 = x0); the gradient drives step s + 1, and the
  // logits decide whether x_s, s >= 1, already fools the model.
  for (std::size_t s = 0; s <= steps && !active.empty(); ++s) {
    std::vector<Iq> xs;
    std::vector<int> labels;
    for (auto i : active) {
      xs.push_back(x[i]);
      labels.push_back(targets[i].label);
    }
    const Evaluation e = evaluate(f, xs, s < steps ? &labels : nullptr);
    std::vector<std::size_t> next;
    for (std::size_t j = 0; j < active.size(); ++j) {
      const auto i = active[j];
      const int pred = e.argmax(j);
      if (s == steps || (evaluation && s > 0 && pred != targets[i].label)) {
        finish(out[i], targets[i], x[i], pred);
        out[i].steps_used = s;
        continue;
      }
      const auto& g = e.gradients[j];
      const double eta = budget.step_fraction * targets[i].epsilon;
      double scale = eta;
      if (budget.normalize_step) {
        double n = 0.0;
        for (float v : g) n += double(v) * v;
        scale = n > 0.0 ? eta / std::sqrt(n) : 0.0;
      }
      std::vector<float> star(kIqSize);
      for (std::size_t k = 0; k < kIqSize; ++k) star[k] = static_cast<float>(x[i][k] + scale * g[k]);
      x[i] = to_iq(project_onto_sphere(star, targets[i].x0, targets[i].epsilon,
                                       signals::mix_seed(targets[i].seed, s)));
      next.push_back(i);
    }
    active = std::move(next);
  }
  return out;
}

namespace {
Target make_target(const Iq& x0, int y, double snr_db, const AttackBudget& budget, std::uint64_t seed) {
  return {x0, y, budget.epsilon(x0, snr_db), seed};
}
}  // namespace

AttackOutcome fgm_attack(const Classifier& f, const Iq& x0, int y, double record_snr_db,
                         const AttackBudget& budget) {
  const Target t = make_target(x0, y, record_snr_db, budget, budget.seed);
  return fgm_batch(f, std::span<const Target>(&t, 1))[0];
}

AttackOutcome pgd_attack(const Classifier& f, const Iq& x0, int y, double record_snr_db,
                         const AttackBudget& budget) {
  const Target t = make_target(x0, y, record_snr_db, budget, budget.seed);
  return pgd_batch(f, std::span<const Target>(&t, 1), budget)[0];
}

std::vector<AttackOutcome> attack_records(AttackKind kind, const Classifier& f,
                                          std::span<const signals::SignalRecord> records,
                                          const AttackBudget& budget, std::size_t jobs) {
  if (records.empty()) throw ContractError("attack_records: empty record set");
  std::vector<AttackOutcome> out(records.size());
  parallel_chunks(records.size(), kAttackChunk, jobs, [&](std::size_t lo, std::size_t hi) {
    std::vector<Target> targets;
    for (std::size_t i = lo; i < hi; ++i) {
      targets.push_back(make_target(records[i].iq, records[i].label, records[i].snr_db, budget,
                                    signals::mix_seed(budget.seed, i)));
    }
    const auto res = kind == AttackKind::kFgm ? fgm_batch(f, targets) : pgd_batch(f, targets, budget);
    std::copy(res.begin(), res.end(), out.begin() + lo);
  });
  return out;
}

ad::Tensor sphere_pgd(const InputObjective& objective, const ad::Tensor& x0,
                      std::span<const double> epsilon, const AttackBudget& budget, std::uint64_t seed) {
  const std::size_t b = x0.dim(0);
  const std::size_t width = x0.numel() / b;
  if (epsilon.size() != b) throw DimensionError("sphere_pgd: one epsilon per row required");
  std::vector<float> x(x0.data().begin(), x0.data().end());
  const auto base = x0.data();
  for (std::size_t s = 0; s < budget.training_steps; ++s) {
    std::vector<float> grad;
    {
      ad::FreezeParameters freeze;
      ad::Tensor xt = ad::Tensor::from(x0.shape(), x, true);
      objective(xt).backward();
      if (xt.has_grad()) grad.assign(xt.grad().begin(), xt.grad().end());
      else grad.assign(x.size(), 0.0f);
    }
    for (std::size_t i = 0; i < b; ++i) {
      if (epsilon[i] == 0.0) continue;
      float* xi = x.data() + i * width;
      const float* gi = grad.data() + i * width;
      const double eta = budget.step_fraction * epsilon[i];
      double scale = eta;
      if (budget.normalize_step) {
        double n = 0.0;
        for (std::size_t k = 0; k < width; ++k) n += double(gi[k]) * gi[k];
        scale = n > 0.0 ? eta / std::sqrt(n) : 0.0;
      }
      std::vector<float> star(width);
      for (std::size_t k = 0; k < width; ++k) star[k] = static_cast<float>(xi[k] + scale * gi[k]);
      const auto p = project_onto_sphere(star, base.subspan(i * width, width), epsilon[i],
                                         signals::mix_seed(seed, s * b + i));
      std::copy(p.begin(), p.end(), xi);
    }
  }
  return ad::Tensor::from(x0.shape(), std::move(x));
}

std::string attack_csv(std::span<const AttackCsvRow> rows) {
  std::ostringstream os;
  os << "record_index,pnr_db,attack,steps_used,perturbation_norm,success,predicted_label\n";
  os << std::setprecision(9);
  for (const auto& r : rows) {
    os << r.record_index << ',' << r.pnr_db << ',' << attack_name(r.kind) << ','
       << r.outcome.steps_used << ',' << r.outcome.perturbation_norm << ','
       << (r.outcome.success ? 1 : 0) << ',' << r.outcome.predicted_label << '\n';
  }
  return os.str();
}

}  // namespace amc::attacks
