// SPDX-License-Identifier: Apache-2.0
// Command-line front end. Every subcommand resolves its settings as
// defaults < JSON config file < command-line flags, writes the resolved
// settings to <out>/config.json, and is deterministic for a fixed seed.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include "amc/attacks/attacks.hpp"
#include "amc/error.hpp"
#include "amc/eval/eval.hpp"
#include "amc/io/binary.hpp"
#include "amc/model/checkpoint.hpp"
#include "amc/model/transformer.hpp"
#include "amc/signals/dataset.hpp"
#include "amc/training/trainer.hpp"
#include "amc/util/parallel.hpp"

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace amc::cli {
namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kFormat = 3, kNumerical = 4 };

// Flat key/value settings of one subcommand. Each option remembers whether
// it was given so only explicit flags override the config file.
class Settings {
 public:
  explicit Settings(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "JSON file with settings; flags override it");
    app_->add_option("--seed", seed_, "Seed (falls back to the config file, then AMC_SEED, then 0)");
    app_->add_option("--out", out_, "Output directory (default runs/<timestamp>-seed<N>)");
  }

  template <class T>
  void option(const std::string& flag, const std::string& key, T def, const std::string& help) {
    defaults_[key] = def;
    auto value = std::make_shared<T>(def);
    CLI::Option* opt = app_->add_option(flag, *value, help);
    apply_.push_back([opt, value, key](Json& j) {
      if (opt->count() > 0) j[key] = *value;
    });
  }

  void flag(const std::string& flag, const std::string& key, bool def, const std::string& help) {
    defaults_[key] = def;
    auto value = std::make_shared<bool>(def);
    CLI::Option* opt = app_->add_flag(flag, *value, help);
    apply_.push_back([opt, value, key](Json& j) {
      if (opt->count() > 0) j[key] = *value;
    });
  }

  /// A key only the config file can set (structured values).
  void file_only(const std::string& key, Json def) { defaults_[key] = std::move(def); }

  Json resolve() const {
    Json j = defaults_;
    if (!config_path_.empty()) {
      const auto bytes = io::read_file(config_path_);
      Json file;
      try {
        file = Json::parse(bytes.begin(), bytes.end());
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(config_path_ + ": " + e.what());
      }
      if (!file.is_object()) throw ConfigError(config_path_ + ": expected a JSON object");
      for (const auto& [key, value] : file.items()) {
        if (key == "seed" || key == "out") continue;
        if (!defaults_.contains(key)) throw ConfigError(config_path_ + ": unknown setting '" + key + "'");
        j[key] = value;
      }
      if (file.contains("seed") && !file["seed"].is_null()) j["seed"] = file["seed"];
      if (file.contains("out") && !file["out"].is_null()) j["out"] = file["out"];
    }
    for (const auto& f : apply_) f(j);
    if (seed_) {
      j["seed"] = *seed_;
    } else if (!j.contains("seed")) {
      const char* env = std::getenv("AMC_SEED");
      std::uint64_t s = 0;
      if (env != nullptr && *env != '\0') {
        try {
          std::size_t used = 0;
          s = std::stoull(env, &used);
          if (env[used] != '\0') throw std::invalid_argument(env);
        } catch (const std::exception&) {
          throw ConfigError(std::string("AMC_SEED is not an unsigned integer: ") + env);
        }
      }
      j["seed"] = s;
    }
    if (!out_.empty()) j["out"] = out_;
    if (!j.contains("out")) j["out"] = default_run_dir(j["seed"].get<std::uint64_t>());
    return j;
  }

 private:
  static std::string default_run_dir(std::uint64_t seed) {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    localtime_r(&now, &tm);
    std::ostringstream os;
    os << "runs/" << std::put_time(&tm, "%Y%m%d-%H%M%S") << "-seed" << seed;
    return os.str();
  }

  CLI::App* app_;
  std::string config_path_;
  std::optional<std::uint64_t> seed_;
  std::string out_;
  Json defaults_ = Json::object();
  std::vector<std::function<void(Json&)>> apply_;
};

template <class T>
T get(const Json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("setting '" + key + "': " + e.what());
  }
}

std::string out_dir(const Json& j) { return get<std::string>(j, "out"); }
std::uint64_t seed_of(const Json& j) { return get<std::uint64_t>(j, "seed"); }

fs::path prepare_out(const Json& j) {
  const fs::path dir = out_dir(j);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  // The location is not part of the run's identity; leaving it out keeps
  // reruns into different directories byte-identical.
  Json echo = j;
  echo.erase("out");
  io::write_text((dir / "config.json").string(), echo.dump(2) + "\n");
  return dir;
}

std::size_t jobs_of(const Json& j) {
  const auto n = get<std::size_t>(j, "jobs");
  return n == 0 ? default_jobs() : n;
}

void log(const std::string& msg) { std::cerr << msg << std::endl; }

// --- Record selection ----------------------------------------------------------

signals::Split parse_split(const std::string& s) {
  if (s == "train") return signals::Split::kTrain;
  if (s == "test") return signals::Split::kTest;
  throw ConfigError("split must be train, test or all");
}

/// Records of the requested split, optionally restricted to one SNR tag,
/// together with their indices in the dataset.
struct Pool {
  std::vector<signals::SignalRecord> records;
  std::vector<std::size_t> index;
};

Pool select_pool(const signals::Dataset& ds, const Json& j, bool require_single_snr) {
  const auto split = get<std::string>(j, "split");
  std::vector<std::size_t> idx;
  if (split == "all") {
    for (std::size_t i = 0; i < ds.size(); ++i) idx.push_back(i);
  } else {
    idx = ds.indices(parse_split(split));
  }
  Pool p;
  const Json& snr = j.at("snr_db");
  for (std::size_t i : idx) {
    if (!snr.is_null() && ds.records[i].snr_db != snr.get<int>()) continue;
    p.records.push_back(ds.records[i]);
    p.index.push_back(i);
  }
  if (p.records.empty()) throw ConfigError("no records match the requested split/SNR");
  if (require_single_snr) {
    for (const auto& r : p.records)
      if (r.snr_db != p.records.front().snr_db) {
        throw ConfigError("records span several SNR levels; choose one with --snr-db");
      }
  }
  return p;
}

Pool subsample(const Pool& pool, std::size_t n, std::uint64_t seed) {
  Pool out;
  for (std::size_t i : eval::sample_indices(pool.records.size(), n, seed)) {
    out.records.push_back(pool.records[i]);
    out.index.push_back(pool.index[i]);
  }
  return out;
}

void selection_options(Settings& s, std::size_t default_records) {
  s.option<std::string>("--data", "data", "", "Dataset container");
  s.option<std::string>("--split", "split", "test", "train, test or all");
  s.file_only("snr_db", nullptr);
  s.option<std::size_t>("--records", "records", default_records, "Records drawn per seed (0: all)");
  s.option<std::size_t>("--jobs", "jobs", 0, "Worker threads (0: all cores); results do not depend on it");
}

// The SNR filter is nullable, so it is parsed by hand.
void snr_filter_option(CLI::App* app, std::shared_ptr<std::optional<int>> snr) {
  app->add_option_function<int>("--snr-db", [snr](const int& v) { *snr = v; }, "Use only records with this SNR tag");
}

signals::Dataset load_data(const Json& j) {
  const auto path = get<std::string>(j, "data");
  if (path.empty()) throw ConfigError("--data is required");
  return signals::load_container(path);
}

// --- Models --------------------------------------------------------------------

struct NamedModel {
  std::string id;
  model::TransformerModel model;
};

/// "id=path" or "path". Without an id the file stem is used, or for a
/// training run's final.ckpt the run directory's name.
NamedModel load_named(const std::string& spec) {
  const auto eq = spec.find('=');
  const std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
  std::string id = eq == std::string::npos ? fs::path(path).stem().string() : spec.substr(0, eq);
  if (eq == std::string::npos && id == "final") {
    const auto parent = fs::absolute(path).parent_path().filename().string();
    if (!parent.empty()) id = parent;
  }
  if (id.empty() || path.empty()) throw ConfigError("model spec must be path or id=path: " + spec);
  return {id, model::load_checkpoint(path)};
}

attacks::AttackBudget budget_from(const Json& j, std::uint64_t seed) {
  attacks::AttackBudget b;
  const auto mode = get<std::string>(j, "budget_mode");
  if (mode == "pnr") b.budget_mode = attacks::BudgetMode::kPnr;
  else if (mode == "pgnr") b.budget_mode = attacks::BudgetMode::kPgnr;
  else throw ConfigError("budget mode must be pnr or pgnr");
  b.step_fraction = get<double>(j, "step_fraction");
  b.max_steps = get<std::size_t>(j, "max_steps");
  b.normalize_step = get<bool>(j, "normalize_step");
  if (!(b.step_fraction > 0.0)) throw ConfigError("step fraction must be positive");
  if (b.max_steps == 0) throw ConfigError("max steps must be positive");
  b.seed = seed;
  return b;
}

void budget_options(Settings& s) {
  s.option<std::string>("--budget-mode", "budget_mode", "pnr", "pnr or pgnr (alpha-stable noise reference)");
  s.option<double>("--step-fraction", "step_fraction", 0.5, "PGD step eta0 as a fraction of eps");
  s.option<std::size_t>("--max-steps", "max_steps", 50, "PGD evaluation step cap");
  s.option<bool>("--normalize-step", "normalize_step", true, "Step along the normalised gradient");
}

std::vector<attacks::AttackKind> attack_kinds(const std::string& s) {
  if (s == "both") return {attacks::AttackKind::kFgm, attacks::AttackKind::kPgd};
  return {attacks::parse_attack(s)};
}

// --- Subcommands ---------------------------------------------------------------

int cmd_gen_data(const Json& j) {
  Json spec_json;
  const auto& schemes = j.at("schemes");
  if (schemes.is_string()) {
    const auto s = schemes.get<std::string>();
    if (s == "all" || s == "digital") {
      spec_json["schemes"] = s;
    } else {
      std::vector<std::string> list;
      std::stringstream ss(s);
      for (std::string item; std::getline(ss, item, ',');) list.push_back(item);
      spec_json["schemes"] = list;
    }
  } else {
    spec_json["schemes"] = schemes;
  }
  spec_json["records"] = j.at("records");
  spec_json["snr_db"] = j.at("snr_db");
  Json channel{{"kind", j.at("channel")}, {"rician_k", j.at("rician_k")}};
  if (!j.at("alpha_stable").is_null()) {
    channel["alpha_stable"] = Json{{"alpha", j.at("alpha_stable")}, {"power_match", j.at("power_match")}};
  }
  spec_json["channel"] = channel;
  spec_json["samples_per_symbol"] = j.at("samples_per_symbol");
  spec_json["rolloff"] = j.at("rolloff");
  spec_json["train_fraction"] = j.at("train_fraction");
  spec_json["seed"] = j.at("seed");
  const auto spec = signals::DatasetSpec::from_json(spec_json);
  const auto dir = prepare_out(j);
  const auto ds = signals::generate_dataset(spec);
  const auto path = (dir / "dataset.amc").string();
  signals::save_container(ds, path);
  std::cout << path << ": " << ds.size() << " records, " << ds.class_count() << " classes\n";
  return kOk;
}

int cmd_convert_verify(const std::string& path) {
  signals::Dataset ds;
  try {
    ds = signals::load_container(path);
  } catch (const FormatError& e) {
    std::cout << "INVALID " << path << ": " << e.what() << "\n";
    throw;
  }
  const auto bytes = io::read_file(path);
  std::cout << "file: " << path << "\n";
  std::cout << "records: " << ds.size() << "\n";
  std::cout << "classes: " << ds.class_count() << "\n";
  std::cout << "checksum_fnv1a: " << std::hex << std::setw(16) << std::setfill('0') << signals::fnv1a(bytes)
            << std::dec << std::setfill(' ') << "\n";
  std::vector<std::size_t> per_class(ds.class_count(), 0);
  std::map<int, std::size_t> per_snr;
  for (const auto& r : ds.records) {
    ++per_class[r.label];
    ++per_snr[r.snr_db];
  }
  std::cout << "class_histogram:\n";
  for (std::size_t c = 0; c < ds.class_count(); ++c) std::cout << "  " << ds.class_names[c] << " " << per_class[c] << "\n";
  std::cout << "snr_histogram:\n";
  for (const auto& [snr, n] : per_snr) std::cout << "  " << snr << " " << n << "\n";
  std::cout << "split: train " << ds.indices(signals::Split::kTrain).size() << " test "
            << ds.indices(signals::Split::kTest).size() << "\n";
  std::cout << "OK\n";
  return kOk;
}

model::TransformerConfig model_config(const Json& j, std::size_t classes) {
  const auto& m = j.at("model");
  Json cfg = m.is_string() ? Json{{"preset", m}} : m;
  if (!cfg.contains("classes")) cfg["classes"] = classes;
  return model::TransformerConfig::from_json(nlohmann::json(cfg));
}

int cmd_train(const Json& j) {
  training::Recipe recipe;
  recipe.kind = training::parse_recipe(get<std::string>(j, "recipe"));
  recipe.alpha = get<double>(j, "alpha");
  recipe.temperature = get<double>(j, "temperature");
  recipe.lambda1 = get<double>(j, "lambda1");
  recipe.lambda2 = get<double>(j, "lambda2");
  recipe.beta = get<double>(j, "beta");
  if (const auto t = get<std::string>(j, "teacher"); !t.empty()) recipe.teacher = t;
  if (const auto t = get<std::string>(j, "standard_teacher"); !t.empty()) recipe.standard_teacher = t;
  recipe.validate();

  training::TrainOptions opts;
  opts.epochs = get<std::size_t>(j, "epochs");
  opts.batch_size = get<std::size_t>(j, "batch_size");
  opts.lr = get<double>(j, "lr");
  opts.seed = seed_of(j);
  opts.adversary_pnr_db = get<double>(j, "train_pnr_db");
  opts.adversary_step_fraction = get<double>(j, "step_fraction");
  opts.adversary_steps = get<std::size_t>(j, "adversary_steps");
  opts.checkpoint_every = get<std::size_t>(j, "checkpoint_every");
  opts.record_wall_time = get<bool>(j, "wall_time");

  const auto data = load_data(j);
  const auto cfg = model_config(j, data.class_count());
  std::optional<model::TransformerModel> teacher, standard;
  if (recipe.teacher) teacher = model::load_checkpoint(*recipe.teacher);
  if (recipe.standard_teacher) standard = model::load_checkpoint(*recipe.standard_teacher);

  const auto dir = prepare_out(j);
  opts.out_dir = dir.string();
  model::TransformerModel student(cfg, opts.seed);
  log("training " + training::recipe_name(recipe.kind) + ": " + std::to_string(student.parameter_count()) +
      " parameters, " + std::to_string(data.indices(signals::Split::kTrain).size()) + " training records");
  const auto result = training::train(student, recipe, {teacher ? &*teacher : nullptr, standard ? &*standard : nullptr},
                                      data, opts, [](std::size_t epoch, double loss) {
                                        std::ostringstream os;
                                        os << "epoch " << epoch << " mean loss " << std::setprecision(6) << loss;
                                        log(os.str());
                                      });
  std::cout << result.checkpoints.back() << "\n";
  return kOk;
}

int cmd_attack(const Json& j) {
  const auto data = load_data(j);
  const auto target = load_named(get<std::string>(j, "model"));
  const auto seed = seed_of(j);
  auto budget = budget_from(j, seed);
  budget.pnr_db = get<double>(j, "pnr_db");
  budget.mode = attacks::AttackMode::kEvaluation;
  const auto kind = attacks::parse_attack(get<std::string>(j, "kind"));
  const auto pool = select_pool(data, j, false);
  const auto n = get<std::size_t>(j, "records");
  const auto picked = n == 0 ? pool : subsample(pool, n, seed);
  const auto dir = prepare_out(j);
  const auto outcomes =
      attacks::attack_records(kind, attacks::classifier(target.model), picked.records, budget, jobs_of(j));
  std::vector<attacks::AttackCsvRow> rows;
  signals::Dataset adv;
  adv.class_names = data.class_names;
  adv.seed = seed;
  std::size_t fooled = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    rows.push_back({picked.index[i], budget.pnr_db, kind, outcomes[i]});
    auto r = picked.records[i];
    r.iq = outcomes[i].adversarial;
    adv.records.push_back(r);
    adv.split.push_back(signals::Split::kTest);
    fooled += outcomes[i].success;
  }
  io::write_text((dir / "attacks.csv").string(), attacks::attack_csv(rows));
  signals::save_container(adv, (dir / "adversarial.amc").string());
  std::cout << attacks::attack_name(kind) << " at " << budget.pnr_db << " dB: " << fooled << "/" << outcomes.size()
            << " misclassified\n";
  return kOk;
}

eval::CurveSet curve_set(std::string name) { return {std::move(name), {}}; }

int cmd_eval(const Json& j, bool transfer) {
  const auto data = load_data(j);
  const auto base_seed = seed_of(j);
  const auto n_seeds = get<std::size_t>(j, "seeds");
  if (n_seeds == 0) throw ConfigError("--seeds must be at least 1");
  const auto grid = get<std::vector<double>>(j, "pnr_grid");
  const auto kinds = attack_kinds(get<std::string>(j, "attack"));
  const auto n = get<std::size_t>(j, "records");
  const auto jobs = jobs_of(j);
  std::vector<NamedModel> models;
  for (const auto& spec : get<std::vector<std::string>>(j, "model")) models.push_back(load_named(spec));
  if (models.empty()) throw ConfigError("at least one --model is required");
  std::optional<NamedModel> surrogate;
  if (transfer) {
    const auto spec = get<std::string>(j, "surrogate");
    if (spec.empty()) throw ConfigError("--surrogate is required");
    surrogate = load_named(spec);
  }
  const auto pool = select_pool(data, j, true);
  const bool smoothness = !transfer && get<bool>(j, "smoothness");
  const auto dir = prepare_out(j);

  eval::Report report;
  report.config_echo = j;
  report.config_echo.erase("out");
  for (const auto& m : models) {
    for (auto kind : kinds) {
      const std::string name = transfer ? m.id + "_from_" + surrogate->id + "_" + attacks::attack_name(kind)
                                        : m.id + "_" + attacks::attack_name(kind);
      auto set = curve_set(name);
      for (std::size_t s = 0; s < n_seeds; ++s) {
        const auto seed = base_seed + s;
        const auto picked = n == 0 ? pool : subsample(pool, n, seed);
        const auto budget = budget_from(j, seed);
        set.per_seed.push_back(transfer ? eval::transferability_eval(surrogate->model, surrogate->id, m.model, m.id,
                                                                     picked.records, kind, grid, budget, jobs)
                                        : eval::accuracy_under_attack(m.model, m.id, picked.records, kind, grid,
                                                                      budget, jobs));
        log(name + " seed " + std::to_string(seed) + " done");
      }
      std::cout << name << ":";
      for (double a : set.mean()) std::cout << " " << std::fixed << std::setprecision(4) << a;
      std::cout << std::defaultfloat << "\n";
      report.curves.push_back(std::move(set));
    }
    if (smoothness) {
      for (std::size_t s = 0; s < n_seeds; ++s) {
        report.smoothness.push_back(eval::gradient_norm_smoothness(m.model, m.id, pool.records,
                                                                   get<std::size_t>(j, "smoothness_records"),
                                                                   base_seed + s, jobs));
      }
    }
  }
  for (std::size_t s = 0; s < n_seeds; ++s) report.seeds.push_back(base_seed + s);
  eval::emit_report(report, dir.string());
  return kOk;
}

int cmd_smoothness(const Json& j) {
  const auto data = load_data(j);
  const auto base_seed = seed_of(j);
  const auto n_seeds = get<std::size_t>(j, "seeds");
  if (n_seeds == 0) throw ConfigError("--seeds must be at least 1");
  const auto pool = select_pool(data, j, false);
  const auto n = get<std::size_t>(j, "records");
  const auto dir = prepare_out(j);
  eval::Report report;
  report.config_echo = j;
  report.config_echo.erase("out");
  for (const auto& spec : get<std::vector<std::string>>(j, "model")) {
    const auto m = load_named(spec);
    double total = 0.0;
    for (std::size_t s = 0; s < n_seeds; ++s) {
      report.smoothness.push_back(eval::gradient_norm_smoothness(m.model, m.id, pool.records,
                                                                 n == 0 ? pool.records.size() : n, base_seed + s,
                                                                 jobs_of(j)));
      total += report.smoothness.back().mean_gradient_norm;
    }
    std::cout << m.id << ": " << std::setprecision(6) << total / double(n_seeds) << "\n";
  }
  if (report.smoothness.empty()) throw ConfigError("at least one --model is required");
  for (std::size_t s = 0; s < n_seeds; ++s) report.seeds.push_back(base_seed + s);
  eval::emit_report(report, dir.string());
  return kOk;
}

int cmd_params(const std::string& config, const std::string& preset, const std::string& checkpoint,
               std::size_t classes) {
  const int given = !config.empty() + !preset.empty() + !checkpoint.empty();
  if (given != 1) throw ConfigError("params needs exactly one of --config, --preset, --checkpoint");
  if (!checkpoint.empty()) {
    const auto m = model::load_checkpoint(checkpoint);
    if (m.parameter_count() != model::count_parameters(m.config())) {
      throw ContractError("checkpoint tensor sizes disagree with its config");
    }
    std::cout << m.parameter_count() << "\n";
    return kOk;
  }
  model::TransformerConfig cfg;
  if (!preset.empty()) {
    cfg = model::TransformerConfig::preset(preset, classes);
  } else {
    const auto bytes = io::read_file(config);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(config + ": " + e.what());
    }
    cfg = model::TransformerConfig::from_json(j);
  }
  const auto formula = model::count_parameters(cfg);
  const model::TransformerModel m(cfg, 0);
  if (m.parameter_count() != formula) throw ContractError("runtime parameter enumeration disagrees with the formula");
  std::cout << formula << "\n";
  return kOk;
}

int run(int argc, char** argv) {
  CLI::App app{"Adversarially robust transformer modulation classifiers"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "amc 1.0.0");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Synthesise a labelled I/Q dataset container");
  Settings gen_s(gen);
  gen_s.option<std::size_t>("--records", "records", 2000, "Number of records");
  gen_s.option<std::vector<int>>("--snr-db", "snr_db", {10}, "SNR levels in dB, cycled over records");
  gen_s.option<std::string>("--schemes", "schemes", "all", "all, digital or a comma-separated list");
  gen_s.option<std::string>("--channel", "channel", "awgn", "awgn, rayleigh or rician");
  gen_s.option<double>("--rician-k", "rician_k", 4.0, "Rician K-factor (linear)");
  gen_s.file_only("alpha_stable", nullptr);
  auto alpha = std::make_shared<std::optional<double>>();
  gen->add_option_function<double>("--alpha-stable", [alpha](const double& v) { *alpha = v; },
                                   "Add symmetric alpha-stable noise with this index");
  gen_s.option<bool>("--power-match", "power_match", true, "Match alpha-stable power to the Gaussian noise");
  gen_s.option<std::size_t>("--sps", "samples_per_symbol", 8, "Samples per symbol");
  gen_s.option<double>("--rolloff", "rolloff", 0.35, "RRC roll-off");
  gen_s.option<double>("--train-fraction", "train_fraction", 0.5, "Stratified training share");

  // convert-verify
  auto* verify = app.add_subcommand("convert-verify", "Validate a dataset container and print histograms");
  std::string verify_path;
  verify->add_option("file", verify_path, "Container to check")->required();

  // train
  auto* train = app.add_subcommand("train", "Train a model with one of the robust recipes");
  Settings train_s(train);
  train_s.option<std::string>("--data", "data", "", "Dataset container");
  train_s.option<std::string>("--recipe", "recipe", "nt", "nt, at, ard, iad, akd, rslad or atard");
  train_s.option<std::string>("--model", "model", "student", "Preset name (teacher, student, model1, model2)");
  train_s.option<std::string>("--teacher", "teacher", "", "Robust teacher checkpoint");
  train_s.option<std::string>("--standard-teacher", "standard_teacher", "", "Standard teacher checkpoint (akd)");
  train_s.option<double>("--alpha", "alpha", 0.5, "Mixing weight alpha");
  train_s.option<double>("--temperature", "temperature", 1.0, "Distillation temperature");
  train_s.option<double>("--lambda1", "lambda1", 0.5, "AKD robust-teacher weight");
  train_s.option<double>("--lambda2", "lambda2", 0.25, "AKD standard-teacher weight");
  train_s.option<double>("--beta", "beta", 0.1, "IAD sharpening exponent");
  train_s.option<std::size_t>("--epochs", "epochs", 30, "Epochs");
  train_s.option<std::size_t>("--batch-size", "batch_size", 128, "Mini-batch size");
  train_s.option<double>("--lr", "lr", 1e-3, "Adam learning rate");
  train_s.option<double>("--train-pnr-db", "train_pnr_db", -10.0, "Inner adversary budget (PNR, dB)");
  train_s.option<double>("--step-fraction", "step_fraction", 0.5, "Inner adversary step as a fraction of eps");
  train_s.option<std::size_t>("--adversary-steps", "adversary_steps", 3, "Inner adversary PGD steps");
  train_s.option<std::size_t>("--checkpoint-every", "checkpoint_every", 1, "Epoch checkpoint period (0: final only)");
  train_s.flag("--wall-time", "wall_time", false, "Record wall-clock times in the loss log");

  // attack
  auto* attack = app.add_subcommand("attack", "Craft adversarial examples and report each outcome");
  Settings attack_s(attack);
  selection_options(attack_s, 500);
  attack_s.option<std::string>("--model", "model", "", "Target checkpoint");
  attack_s.option<std::string>("--kind", "kind", "pgd", "fgm or pgd");
  attack_s.option<double>("--pnr-db", "pnr_db", -10.0, "Perturbation-to-noise ratio in dB");
  budget_options(attack_s);

  // eval / transfer
  const auto curve_options = [](Settings& s, CLI::App* app, std::vector<std::string>* models) {
    selection_options(s, 500);
    s.file_only("model", Json::array());
    app->add_option("--model", *models, "Checkpoint, optionally id=path; repeatable");
    s.option<std::string>("--attack", "attack", "pgd", "fgm, pgd or both");
    s.option<std::vector<double>>("--pnr-grid", "pnr_grid", eval::default_pnr_grid(), "PNR grid in dB");
    s.option<std::size_t>("--seeds", "seeds", 5, "Repetitions; seed i draws its own records and attack seed");
    budget_options(s);
  };
  auto* ev = app.add_subcommand("eval", "Accuracy under attack over a PNR grid");
  Settings eval_s(ev);
  std::vector<std::string> eval_models;
  curve_options(eval_s, ev, &eval_models);
  eval_s.flag("--smoothness", "smoothness", false, "Also report the input-gradient norm");
  eval_s.option<std::size_t>("--smoothness-records", "smoothness_records", 1000, "Records for --smoothness");

  auto* tr = app.add_subcommand("transfer", "Attacks crafted on a surrogate, scored on targets");
  Settings transfer_s(tr);
  std::vector<std::string> transfer_models;
  curve_options(transfer_s, tr, &transfer_models);
  transfer_s.option<std::string>("--surrogate", "surrogate", "", "Surrogate checkpoint (id=path allowed)");

  // smoothness
  auto* sm = app.add_subcommand("smoothness", "Mean l2 norm of the input gradient of the loss");
  Settings smooth_s(sm);
  std::vector<std::string> smooth_models;
  selection_options(smooth_s, 1000);
  smooth_s.file_only("model", Json::array());
  sm->add_option("--model", smooth_models, "Checkpoint, optionally id=path; repeatable");
  smooth_s.option<std::size_t>("--seeds", "seeds", 1, "Repetitions with different record draws");

  // params
  auto* params = app.add_subcommand("params", "Print a configuration's parameter count");
  std::string params_config, params_preset, params_ckpt;
  std::size_t params_classes = 11;
  params->add_option("--config", params_config, "Transformer config JSON");
  params->add_option("--preset", params_preset, "teacher, student, model1 or model2");
  params->add_option("--checkpoint", params_ckpt, "Checkpoint to inspect");
  params->add_option("--classes", params_classes, "Classes for --preset");

  // Nullable SNR filters on the record-selecting subcommands.
  std::map<CLI::App*, std::shared_ptr<std::optional<int>>> snr_filters;
  for (auto* sub : {attack, ev, tr, sm}) {
    snr_filters[sub] = std::make_shared<std::optional<int>>();
    snr_filter_option(sub, snr_filters[sub]);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  const auto with = [&](Settings& s, CLI::App* sub, const std::vector<std::string>* models = nullptr) {
    Json j = s.resolve();
    if (auto it = snr_filters.find(sub); it != snr_filters.end() && it->second->has_value()) j["snr_db"] = **it->second;
    if (models != nullptr && !models->empty()) j["model"] = *models;
    if (sub == gen && alpha->has_value()) j["alpha_stable"] = **alpha;
    return j;
  };

  if (gen->parsed()) return cmd_gen_data(with(gen_s, gen));
  if (verify->parsed()) return cmd_convert_verify(verify_path);
  if (train->parsed()) return cmd_train(with(train_s, train));
  if (attack->parsed()) return cmd_attack(with(attack_s, attack));
  if (ev->parsed()) return cmd_eval(with(eval_s, ev, &eval_models), false);
  if (tr->parsed()) return cmd_eval(with(transfer_s, tr, &transfer_models), true);
  if (sm->parsed()) return cmd_smoothness(with(smooth_s, sm, &smooth_models));
  if (params->parsed()) return cmd_params(params_config, params_preset, params_ckpt, params_classes);
  return kConfig;
}

}  // namespace
}  // namespace amc::cli

int main(int argc, char** argv) {
  amc::configure_allocator();
  try {
    return amc::cli::run(argc, argv);
  } catch (const amc::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return amc::cli::kConfig;
  } catch (const amc::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return amc::cli::kFormat;
  } catch (const amc::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return amc::cli::kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return amc::cli::kFailure;
  }
}
