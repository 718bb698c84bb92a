// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails. Trained models are cached under
// --cache so that reruns skip training; the cache is keyed on the training
// settings and rebuilt when they change.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "amc/attacks/attacks.hpp"
#include "amc/eval/eval.hpp"
#include "amc/model/checkpoint.hpp"
#include "amc/model/transformer.hpp"
#include "amc/signals/dataset.hpp"
#include "amc/training/losses.hpp"
#include "amc/training/trainer.hpp"
#include "amc/util/parallel.hpp"

namespace fs = std::filesystem;
using namespace amc;

namespace {

struct Verdict {
  int id;
  bool pass;
  std::string summary;
};

class Clock {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Everything printed also goes to the report file, since ctest hides the
// output of passing tests.
std::FILE* g_report = nullptr;

void emit(const std::string& line) {
  std::fputs(line.c_str(), stdout);
  std::fflush(stdout);
  if (g_report != nullptr) {
    std::fputs(line.c_str(), g_report);
    std::fflush(g_report);
  }
}

std::string fmt(const char* f, auto... args) {
  char buf[1024];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void note(const char* f, auto... args) { emit("  " + fmt(f, args...) + "\n"); }

std::vector<signals::SignalRecord> pick(const std::vector<signals::SignalRecord>& pool, std::size_t n,
                                        std::uint64_t seed) {
  std::vector<signals::SignalRecord> out;
  for (auto i : eval::sample_indices(pool.size(), n, seed)) out.push_back(pool[i]);
  return out;
}

// ---------------------------------------------------------------- criterion 1

Verdict parameter_counts() {
  struct Row {
    const char* name;
    model::TransformerConfig cfg;
    std::uint64_t expected;
  };
  const Row rows[] = {{"teacher", model::TransformerConfig::teacher(11), 801675},
                      {"student", model::TransformerConfig::student(11), 230699},
                      {"model1", model::TransformerConfig::surrogate_small(11), 102603}};
  bool ok = true;
  std::string s;
  for (const auto& r : rows) {
    const auto formula = model::count_parameters(r.cfg);
    const model::TransformerModel m(r.cfg, 1);
    std::uint64_t enumerated = 0;
    for (const auto& p : m.parameters()) enumerated += p.tensor.numel();
    const bool row_ok = formula == r.expected && enumerated == r.expected;
    ok = ok && row_ok;
    note("%-8s count_parameters %llu, enumerated %llu, expected %llu", r.name,
         (unsigned long long)formula, (unsigned long long)enumerated, (unsigned long long)r.expected);
    s += fmt("%s %llu ", r.name, (unsigned long long)enumerated);
  }
  return {1, ok, "parameter counts: " + s};
}

// ---------------------------------------------------------------- criterion 2

Verdict gradient_suite(const std::map<std::string, std::string>& binaries) {
  // The unit-test binaries hold the finite-difference checks and their
  // double-precision oracles; run exactly those tests here.
  const std::vector<std::pair<std::string, std::string>> runs = {
      {"autodiff_test", "*Gradient*"},
      {"model_test", "Gradient.*"},
      {"training_test", "LossGradient.*"},
  };
  bool ok = true;
  std::string s;
  for (const auto& [name, filter] : runs) {
    const auto it = binaries.find(name);
    if (it == binaries.end() || !fs::exists(it->second)) {
      note("%s: binary not found", name.c_str());
      ok = false;
      continue;
    }
    // A filter that matches nothing also exits 0, so require a positive
    // count of passed tests as well.
    const std::string cmd = "\"" + it->second + "\" --gtest_filter='" + filter + "' 2>&1";
    std::string output;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (pipe == nullptr) throw std::runtime_error("cannot run " + name);
    char buf[4096];
    while (std::fgets(buf, sizeof buf, pipe) != nullptr) output += buf;
    const int rc = pclose(pipe);
    std::size_t passed = 0;
    const auto at = output.find("[  PASSED  ] ");
    if (at != std::string::npos) passed = std::stoul(output.substr(at + 13));
    const bool run_ok = rc == 0 && passed > 0;
    note("%s --gtest_filter=%s: %zu passed%s", name.c_str(), filter.c_str(), passed, run_ok ? "" : ", FAILED");
    ok = ok && run_ok;
    s += fmt("%s %zu%s ", name.c_str(), passed, run_ok ? "" : " failed");
  }
  return {2, ok, "finite-difference gradient checks: " + s};
}

// ---------------------------------------------------------------- criterion 3

Verdict budget_exactness(std::size_t jobs) {
  signals::DatasetSpec spec;
  spec.records = 1000;
  spec.snr_db = {10};
  spec.seed = 11;
  const auto data = signals::generate_dataset(spec);
  const model::TransformerModel m(model::TransformerConfig::student(data.class_count()), 3);
  const auto f = attacks::classifier(m);

  double worst_rel = 0.0, worst_db = 0.0;
  std::size_t checked = 0;
  for (auto kind : {attacks::AttackKind::kFgm, attacks::AttackKind::kPgd}) {
    for (double pnr : {-30.0, -20.0, -10.0}) {
      attacks::AttackBudget b;
      b.pnr_db = pnr;
      b.seed = 5;
      const auto out = attacks::attack_records(kind, f, data.records, b, jobs);
      for (std::size_t i = 0; i < out.size(); ++i) {
        const auto& x0 = data.records[i].iq;
        double x0sq = 0.0, d2 = 0.0;
        for (std::size_t k = 0; k < x0.size(); ++k) {
          x0sq += double(x0[k]) * x0[k];
          const double d = double(out[i].adversarial[k]) - x0[k];
          d2 += d * d;
        }
        const double snr_lin = std::pow(10.0, data.records[i].snr_db / 10.0);
        const double eps = std::sqrt(std::pow(10.0, pnr / 10.0) * x0sq / (snr_lin + 1.0));
        const double norm = std::sqrt(d2);
        const double back = 10.0 * std::log10(d2 * (snr_lin + 1.0) / x0sq);
        worst_rel = std::max(worst_rel, std::abs(norm - eps) / eps);
        worst_db = std::max(worst_db, std::abs(back - pnr));
        ++checked;
      }
    }
  }
  const bool ok = worst_rel <= 1e-5 && worst_db <= 0.01;
  return {3, ok,
          fmt("budget exactness over %zu outputs: max |norm-eps|/eps %.2e (<= 1e-5), max PNR error %.2e dB (<= 0.01)",
              checked, worst_rel, worst_db)};
}

// ---------------------------------------------------------------- criterion 4

Verdict attention_invariants() {
  signals::DatasetSpec spec;
  spec.records = 64;
  spec.seed = 4;
  const auto data = signals::generate_dataset(spec);
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<int> labels;
  const auto x = training::make_batch(data.records, idx, labels);

  const model::TransformerModel teacher(model::TransformerConfig::teacher(11), 21);
  const model::TransformerModel student(model::TransformerConfig::student(11), 22);
  const auto tm = teacher.attention_maps(x);
  const auto sm = student.attention_maps(x);

  double worst = 0.0;
  for (const auto* maps : {&tm, &sm}) {
    for (const auto& a : *maps) {
      for (std::size_t b = 0; b < a.batch; ++b) {
        for (std::size_t i = 0; i < a.tokens; ++i) {
          double row = 0.0;
          for (std::size_t j = 0; j < a.tokens; ++j) row += a.at(b, i, j);
          worst = std::max(worst, std::abs(row - 4.0));
        }
      }
    }
  }
  const bool rows_ok = worst <= 1e-5;
  const bool shape_ok = tm.size() == 4 && sm.size() == 2 && tm[0].tokens == 5 && sm[0].tokens == 5;
  note("row sums: max |sum - 4| = %.2e; teacher %zu maps of %zux%zu, student %zu maps of %zux%zu", worst, tm.size(),
       tm[0].tokens, tm[0].tokens, sm.size(), sm[0].tokens, sm[0].tokens);

  // Self-distillation: a student that is an exact copy of the teacher.
  const auto copy = teacher.clone();
  const auto self = training::loss_atard(copy, teacher, x, labels);
  const bool self_ok = self.loss2 == 0.0;
  note("self-distillation Loss2 = %.3g", self.loss2);

  // Two tokens, one record, teacher 4 layers, student 2. Teacher rows are
  // one-hot or uniform, so every distance is hand-computable.
  auto map2 = [](std::size_t layer, std::vector<float> v) {
    model::AttentionMap a;
    a.layer = layer;
    a.batch = 1;
    a.tokens = 2;
    a.values = std::move(v);
    return a;
  };
  const std::vector<model::AttentionMap> t2 = {map2(0, {4, 0, 0, 4}), map2(1, {4, 0, 4, 0}),
                                               map2(2, {2, 2, 2, 2}), map2(3, {0, 4, 0, 4})};
  const std::vector<model::AttentionMap> s2 = {map2(0, {4, 0, 0, 4}), map2(1, {2, 2, 2, 2})};
  // Pairs (teacher k, student j): (0,0) (1,0) (2,0) (1,1) (2,1) (3,1).
  // Teacher minus student: (0,0) zero; (1,0) [0,0;4,-4] -> 4*sqrt2;
  // (2,0) [-2,2;2,-2] -> 4; (1,1) [2,-2;2,-2] -> 4; (2,1) zero;
  // (3,1) [-2,2;-2,2] -> 4.
  const double expected = 4.0 * std::sqrt(2.0) + 12.0;
  double got = 0.0;
  {
    const ad::NoGradGuard guard;
    std::vector<ad::Tensor> tt, st;
    for (const auto& a : t2) tt.push_back(ad::Tensor::from({1, 2, 2}, a.values));
    for (const auto& a : s2) st.push_back(ad::Tensor::from({1, 2, 2}, a.values));
    got = training::attention_matching_loss(tt, st).item();
  }
  const bool hand_ok = std::abs(got - expected) <= 1e-5 * expected;
  note("hand-computed 2-token Loss2: expected %.6f, got %.6f", expected, got);

  return {4, rows_ok && shape_ok && self_ok && hand_ok,
          fmt("attention invariants: row-sum error %.1e, shapes %s, self Loss2 %.1g, 2-token Loss2 %.6f vs %.6f", worst,
              shape_ok ? "5x5" : "mismatch", self.loss2, got, expected)};
}

// ---------------------------------------------------------------- criterion 9

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

Verdict determinism(const std::string& amc, const fs::path& work) {
  const std::vector<std::string> steps = {
      "gen-data --seed 5 --records 240 --schemes digital --snr-db 10 --out data",
      "convert-verify data/dataset.amc > verify.txt",
      "params --preset student --classes 8 > params.txt",
      "train --seed 5 --data data/dataset.amc --recipe at --model teacher --epochs 1 --checkpoint-every 0 --out teacher",
      "train --seed 6 --data data/dataset.amc --recipe atard --model student --teacher teacher/final.ckpt --epochs 2 "
      "--out student",
      "train --seed 7 --data data/dataset.amc --recipe nt --model model1 --epochs 1 --out m1",
      "attack --seed 8 --data data/dataset.amc --model student/final.ckpt --kind pgd --pnr-db -10 --records 30 --out attack",
      "eval --seed 9 --data data/dataset.amc --model s=student/final.ckpt --attack both --pnr-grid -20 -10 --records 40 "
      "--seeds 2 --smoothness --smoothness-records 20 --out eval",
      "transfer --seed 10 --data data/dataset.amc --surrogate m1=m1/final.ckpt --model s=student/final.ckpt "
      "--pnr-grid -10 --records 40 --out transfer",
      "smoothness --seed 11 --data data/dataset.amc --model s=student/final.ckpt --records 40 --out smooth",
  };
  std::vector<std::map<std::string, std::string>> runs;
  for (const char* run : {"run_a", "run_b"}) {
    const fs::path dir = work / run;
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (const auto& s : steps) {
      const std::string cmd = "cd \"" + dir.string() + "\" && \"" + amc + "\" " + s + " > /dev/null 2>&1";
      const std::string shown = s.substr(0, s.find(' '));
      // convert-verify and params print to stdout; keep that output.
      const std::string full = s.find('>') != std::string::npos
                                   ? "cd \"" + dir.string() + "\" && \"" + amc + "\" " + s
                                   : cmd;
      if (std::system(full.c_str()) != 0) {
        note("%s: `amc %s` failed", run, shown.c_str());
        return {9, false, "determinism: CLI step failed: amc " + shown};
      }
    }
    runs.push_back(tree(dir));
  }
  std::size_t same = 0;
  std::vector<std::string> diffs;
  for (const auto& [name, bytes] : runs[0]) {
    const auto it = runs[1].find(name);
    if (it != runs[1].end() && it->second == bytes) {
      ++same;
    } else {
      diffs.push_back(name);
    }
  }
  for (const auto& [name, _] : runs[1]) {
    if (!runs[0].count(name)) diffs.push_back(name);
  }
  for (const auto& d : diffs) note("differs: %s", d.c_str());
  return {9, diffs.empty() && same > 0,
          fmt("determinism: %zu output files from %zu CLI steps, %zu bitwise identical across two runs", runs[0].size(),
              steps.size(), same)};
}

// ---------------------------------------------------------------- criteria 5-8

struct Zoo {
  signals::Dataset data;
  std::vector<signals::SignalRecord> test;
  std::optional<model::TransformerModel> teacher;
  std::vector<std::uint64_t> seeds;
  std::map<std::string, std::vector<model::TransformerModel>> students;  // nt, at, atard
  std::vector<model::TransformerModel> surrogates;
};

constexpr std::uint64_t kTeacherSeed = 1000;
constexpr double kTrainPnrDb = -20.0;
constexpr std::size_t kEpochs = 30;

std::string cache_key() {
  return fmt("v1 data=digital8/8000/snr10/seed1 epochs=%zu train_pnr=%.1f teacher_seed=%llu", kEpochs, kTrainPnrDb,
             (unsigned long long)kTeacherSeed);
}

model::TransformerModel obtain(const fs::path& cache, const std::string& name, const model::TransformerConfig& cfg,
                               training::RecipeKind kind, const model::TransformerModel* teacher, std::uint64_t seed,
                               const signals::Dataset& data, const Clock& clock) {
  const auto path = cache / (name + ".ckpt");
  if (fs::exists(path)) {
    note("%-10s loaded from cache", name.c_str());
    return model::load_checkpoint(path.string());
  }
  model::TransformerModel m(cfg, seed);
  training::Recipe r;
  r.kind = kind;
  if (training::needs_teacher(kind)) r.teacher = "teacher";
  training::TrainOptions o;
  o.epochs = kEpochs;
  o.seed = seed;
  o.adversary_pnr_db = kTrainPnrDb;
  o.checkpoint_every = 0;
  const double t0 = clock.seconds();
  training::train(m, r, {teacher, nullptr}, data, o);
  model::save_checkpoint(m, path.string());
  note("%-10s trained in %.0f s", name.c_str(), clock.seconds() - t0);
  return m;
}

Zoo build_zoo(const fs::path& cache, const std::vector<std::uint64_t>& seeds, const Clock& clock) {
  fs::create_directories(cache);
  const auto key_file = cache / "key.txt";
  if (!fs::exists(key_file) || slurp(key_file) != cache_key()) {
    for (const auto& e : fs::directory_iterator(cache)) {
      if (e.path().extension() == ".ckpt") fs::remove(e.path());
    }
    std::ofstream(key_file, std::ios::binary) << cache_key();
  }

  signals::DatasetSpec spec;
  for (auto s : signals::digital_schemes()) spec.schemes.push_back(std::string(signals::scheme_name(s)));
  spec.records = 8000;
  spec.snr_db = {10};
  spec.seed = 1;
  Zoo z{signals::generate_dataset(spec), {}, {}, seeds, {}, {}};
  for (auto i : z.data.indices(signals::Split::kTest)) z.test.push_back(z.data.records[i]);
  note("dataset: %zu records, %zu classes, %zu test", z.data.size(), z.data.class_count(), z.test.size());

  const auto k = z.data.class_count();
  z.teacher = obtain(cache, "teacher", model::TransformerConfig::teacher(k), training::RecipeKind::kAt, nullptr,
                     kTeacherSeed, z.data, clock);
  for (auto s : seeds) {
    const auto tag = std::to_string(s);
    const auto scfg = model::TransformerConfig::student(k);
    z.students["nt"].push_back(obtain(cache, "nt_" + tag, scfg, training::RecipeKind::kNt, nullptr, s, z.data, clock));
    z.students["at"].push_back(obtain(cache, "at_" + tag, scfg, training::RecipeKind::kAt, nullptr, s, z.data, clock));
    z.students["atard"].push_back(
        obtain(cache, "atard_" + tag, scfg, training::RecipeKind::kAtard, &*z.teacher, s, z.data, clock));
    z.surrogates.push_back(obtain(cache, "model1_" + tag, model::TransformerConfig::surrogate_small(k),
                                  training::RecipeKind::kNt, nullptr, s + 500, z.data, clock));
  }
  return z;
}

attacks::AttackBudget budget(std::uint64_t seed) {
  attacks::AttackBudget b;
  b.seed = seed;
  return b;
}

std::size_t gaps_at_least(const std::vector<double>& hi, const std::vector<double>& lo, double gap) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < hi.size(); ++i) n += hi[i] - lo[i] >= gap ? 1 : 0;
  return n;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

std::string join(const std::vector<double>& v, const char* f = "%.3f") {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + fmt(f, x);
  return s;
}

struct Curves {
  eval::RobustnessCurve pgd, fgm;
};

// Curves on every trained model; criterion 5 reads its -10 dB point from these.
std::map<std::string, Curves> attack_curves(const Zoo& z, std::size_t jobs, const Clock& clock) {
  std::map<std::string, Curves> out;
  const auto grid = eval::default_pnr_grid();
  auto run = [&](const std::string& id, const model::TransformerModel& m, std::uint64_t seed) {
    const auto records = pick(z.test, 500, seed);
    const double t0 = clock.seconds();
    out[id] = {eval::accuracy_under_attack(m, id, records, attacks::AttackKind::kPgd, grid, budget(seed), jobs),
               eval::accuracy_under_attack(m, id, records, attacks::AttackKind::kFgm, grid, budget(seed), jobs)};
    std::vector<double> p, f;
    for (const auto& pt : out[id].pgd.points) p.push_back(pt.accuracy);
    for (const auto& pt : out[id].fgm.points) f.push_back(pt.accuracy);
    note("%-10s accuracy PGD [%s] FGM [%s] (%.0f s)", id.c_str(), join(p).c_str(), join(f).c_str(),
         clock.seconds() - t0);
  };
  run("teacher", *z.teacher, 0);
  for (std::size_t i = 0; i < z.seeds.size(); ++i) {
    const auto tag = std::to_string(z.seeds[i]);
    for (const char* kind : {"nt", "at", "atard"}) run(std::string(kind) + "_" + tag, z.students.at(kind)[i], z.seeds[i]);
    run("model1_" + tag, z.surrogates[i], z.seeds[i]);
  }
  return out;
}

double point(const eval::RobustnessCurve& c, double pnr) {
  for (const auto& p : c.points) {
    if (p.pnr_db == pnr) return p.accuracy;
  }
  throw std::runtime_error("grid point missing");
}

Verdict robustness_ordering(const Zoo& z, const std::map<std::string, Curves>& curves) {
  std::map<std::string, std::vector<double>> acc;
  for (const char* kind : {"nt", "at", "atard"}) {
    for (auto s : z.seeds) acc[kind].push_back(point(curves.at(std::string(kind) + "_" + std::to_string(s)).pgd, -10.0));
    note("%-5s PGD accuracy at -10 dB per seed [%s], mean %.4f", kind, join(acc[kind]).c_str(), mean(acc[kind]));
  }
  const auto g1 = gaps_at_least(acc["atard"], acc["at"], 0.02);
  const auto g2 = gaps_at_least(acc["at"], acc["nt"], 0.02);
  const bool ok = mean(acc["atard"]) > mean(acc["at"]) && mean(acc["at"]) > mean(acc["nt"]) && g1 >= 4 && g2 >= 4;
  return {5, ok,
          fmt("robustness ordering at -10 dB PGD: mean ATARD %.4f, AT %.4f, NT %.4f; ATARD-AT >= 0.02 in %zu/5, "
              "AT-NT >= 0.02 in %zu/5",
              mean(acc["atard"]), mean(acc["at"]), mean(acc["nt"]), g1, g2)};
}

Verdict smoothness_ordering(const Zoo& z, std::size_t jobs) {
  std::map<std::string, std::vector<double>> g;
  for (std::size_t i = 0; i < z.seeds.size(); ++i) {
    for (const char* kind : {"nt", "at", "atard"}) {
      g[kind].push_back(
          eval::gradient_norm_smoothness(z.students.at(kind)[i], kind, z.test, 1000, z.seeds[i], jobs).mean_gradient_norm);
    }
  }
  std::size_t ordered = 0;
  for (std::size_t i = 0; i < z.seeds.size(); ++i) {
    ordered += g["atard"][i] < g["at"][i] && g["at"][i] < g["nt"][i] ? 1 : 0;
  }
  for (const char* kind : {"nt", "at", "atard"}) note("%-5s mean input-gradient norm per seed [%s]", kind, join(g[kind], "%.4f").c_str());
  return {6, ordered >= 4,
          fmt("smoothness ordering ATARD < AT < NT in %zu/5 seeds (means ATARD %.4f, AT %.4f, NT %.4f)", ordered,
              mean(g["atard"]), mean(g["at"]), mean(g["nt"]))};
}

Verdict attack_strength(const std::map<std::string, Curves>& curves) {
  std::size_t cells = 0, held = 0;
  double worst = 0.0;
  std::string worst_at;
  for (const auto& [id, c] : curves) {
    for (std::size_t i = 0; i < c.pgd.points.size(); ++i) {
      // Success rate is 1 - accuracy, so PGD >= FGM success means PGD <= FGM accuracy.
      const double excess = c.pgd.points[i].accuracy - c.fgm.points[i].accuracy;
      ++cells;
      if (excess <= 0.0) {
        ++held;
      } else {
        note("PGD weaker than FGM: %s at %.0f dB by %.3f", id.c_str(), c.pgd.points[i].pnr_db, excess);
      }
      if (excess > worst) {
        worst = excess;
        worst_at = fmt("%s at %.0f dB", id.c_str(), c.pgd.points[i].pnr_db);
      }
    }
  }
  return {7, held == cells,
          fmt("attack strength: PGD success >= FGM success in %zu/%zu (model, PNR) cells over %zu models%s", held, cells,
              curves.size(), worst > 0.0 ? (", worst " + worst_at + fmt(" by %.3f", worst)).c_str() : "")};
}

Verdict transfer_ordering(const Zoo& z, std::size_t jobs) {
  std::vector<double> deg_nt, deg_atard, acc_nt, acc_atard;
  for (std::size_t i = 0; i < z.seeds.size(); ++i) {
    const auto s = z.seeds[i];
    const auto records = pick(z.test, 500, s);
    const std::vector<double> grid{-10.0};
    for (const char* kind : {"nt", "atard"}) {
      const auto& target = z.students.at(kind)[i];
      const double clean = training::accuracy(target, records);
      const auto c = eval::transferability_eval(z.surrogates[i], "model1", target, kind, records,
                                                attacks::AttackKind::kPgd, grid, budget(s), jobs);
      const double attacked = c.points[0].accuracy;
      (std::string(kind) == "nt" ? deg_nt : deg_atard).push_back(clean - attacked);
      (std::string(kind) == "nt" ? acc_nt : acc_atard).push_back(attacked);
    }
  }
  note("NT    transferred accuracy [%s], degradation [%s]", join(acc_nt).c_str(), join(deg_nt).c_str());
  note("ATARD transferred accuracy [%s], degradation [%s]", join(acc_atard).c_str(), join(deg_atard).c_str());
  const auto g = gaps_at_least(deg_nt, deg_atard, 0.02);
  return {8, g >= 4,
          fmt("transfer ordering: Model-1 PGD at -10 dB degrades NT more than ATARD by >= 0.02 in %zu/5 seeds "
              "(mean degradation NT %.4f, ATARD %.4f)",
              g, mean(deg_nt), mean(deg_atard))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance"};
  std::string cache = "acceptance_cache";
  std::string amc_bin;
  std::vector<std::string> unit_tests;
  std::vector<int> only;
  std::size_t jobs = 0;
  app.add_option("--cache", cache, "Model cache and scratch directory");
  app.add_option("--amc", amc_bin, "Path to the amc CLI")->required();
  app.add_option("--unit-tests", unit_tests, "name=path of unit-test binaries");
  app.add_option("--only", only, "Run only these criteria");
  app.add_option("--jobs", jobs, "Worker threads (0: all cores)");
  std::string report;
  app.add_option("--report", report, "Also write the output to this file");
  CLI11_PARSE(app, argc, argv);
  std::map<std::string, std::string> binaries;
  for (const auto& u : unit_tests) {
    const auto eq = u.find('=');
    if (eq != std::string::npos) binaries[u.substr(0, eq)] = u.substr(eq + 1);
  }

  configure_allocator();
  if (!report.empty()) g_report = std::fopen(report.c_str(), "w");
  const Clock clock;
  const fs::path root = fs::absolute(cache);
  fs::create_directories(root);
  auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };

  std::vector<Verdict> verdicts;
  auto record = [&](const Verdict& v, double t0) {
    emit(fmt("criterion %d: %s - %s (%.0f s)\n", v.id, v.pass ? "PASS" : "FAIL", v.summary.c_str(),
             clock.seconds() - t0));
    verdicts.push_back(v);
  };
  auto guarded = [&](int id, const std::function<Verdict()>& body) {
    if (!wanted(id)) return;
    const double t0 = clock.seconds();
    try {
      record(body(), t0);
    } catch (const std::exception& e) {
      record({id, false, std::string("exception: ") + e.what()}, t0);
    }
  };

  guarded(1, parameter_counts);
  guarded(2, [&] { return gradient_suite(binaries); });
  guarded(3, [&] { return budget_exactness(jobs); });
  guarded(4, attention_invariants);
  guarded(9, [&] { return determinism(fs::absolute(amc_bin).string(), root / "cli"); });

  if (wanted(5) || wanted(6) || wanted(7) || wanted(8)) {
    const double t0 = clock.seconds();
    try {
      const Zoo z = build_zoo(root / "models", {1, 2, 3, 4, 5}, clock);
      note("models ready after %.0f s", clock.seconds() - t0);
      std::map<std::string, Curves> curves;
      if (wanted(5) || wanted(7)) curves = attack_curves(z, jobs, clock);
      guarded(5, [&] { return robustness_ordering(z, curves); });
      guarded(6, [&] { return smoothness_ordering(z, jobs); });
      guarded(7, [&] { return attack_strength(curves); });
      guarded(8, [&] { return transfer_ordering(z, jobs); });
    } catch (const std::exception& e) {
      for (int id : {5, 6, 7, 8}) {
        if (wanted(id)) record({id, false, std::string("model preparation failed: ") + e.what()}, t0);
      }
    }
  }

  std::sort(verdicts.begin(), verdicts.end(), [](const Verdict& a, const Verdict& b) { return a.id < b.id; });
  std::size_t passed = 0;
  emit("\nsummary:\n");
  for (const auto& v : verdicts) {
    emit(fmt("  criterion %d %s\n", v.id, v.pass ? "PASS" : "FAIL"));
    passed += v.pass ? 1 : 0;
  }
  emit(fmt("%zu/%zu criteria passed in %.0f s\n", passed, verdicts.size(), clock.seconds()));
  return passed == verdicts.size() ? 0 : 1;
}
