#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pmat/config.hpp"
#include "pmat/data.hpp"
#include "pmat/errors.hpp"
#include "pmat/experiments.hpp"
#include "pmat/file_util.hpp"
#include "pmat/mlp.hpp"
#include "pmat/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct DataOptions {
  std::string synthetic = "moons";
  std::size_t n_per_class = 500;
  double noise = 0.1;
  std::uint64_t seed = 1;
  std::size_t classes = 2;
  std::string csv;
  std::string idx_images;
  std::string idx_labels;

  void add_to(CLI::App& app) {
    app.add_option("--dataset", synthetic, "Synthetic family: moons, blobs or rings")->capture_default_str();
    app.add_option("--n-per-class", n_per_class, "Synthetic points per class")->capture_default_str();
    app.add_option("--noise", noise, "Synthetic noise scale")->capture_default_str();
    app.add_option("--data-seed", seed, "Synthetic data seed")->capture_default_str();
    app.add_option("--num-classes", classes, "Classes (blobs, CSV and IDX)")->capture_default_str();
    app.add_option("--csv", csv, "Load rows of features followed by a label from CSV");
    app.add_option("--idx-images", idx_images, "IDX image file");
    app.add_option("--idx-labels", idx_labels, "IDX label file");
  }

  pmat::Dataset load() const {
    if (!idx_images.empty() || !idx_labels.empty()) {
      if (idx_images.empty() || idx_labels.empty()) {
        throw pmat::ConfigError("--idx-images and --idx-labels go together");
      }
      return pmat::load_idx(idx_images, idx_labels, classes);
    }
    if (!csv.empty()) {
      pmat::CsvSchema schema;
      schema.num_classes = classes;
      return pmat::load_csv(csv, schema);
    }
    pmat::SyntheticSpec spec;
    spec.kind = pmat::parse_synthetic_kind(synthetic);
    spec.n_per_class = n_per_class;
    spec.noise = noise;
    spec.seed = seed;
    spec.num_classes = classes;
    return pmat::generate(spec);
  }

  json describe() const {
    if (!idx_images.empty()) return {{"idx_images", idx_images}, {"idx_labels", idx_labels}};
    if (!csv.empty()) return {{"csv", csv}};
    return {{"synthetic", synthetic}, {"n_per_class", n_per_class}, {"noise", noise},
            {"seed", seed}, {"num_classes", classes}};
  }
};

// Flags that mirror the training config keys; only the ones given on the
// command line end up in the override document.
struct TrainFlags {
  std::string preset = "desk";
  std::string config_path;
  std::optional<int> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<double> lr;
  std::vector<std::string> lr_drops;
  std::optional<double> momentum;
  std::optional<double> weight_decay;
  std::optional<std::uint64_t> seed;
  std::vector<std::size_t> hidden_layers;
  bool no_hidden = false;
  std::optional<double> epsilon;
  std::vector<double> clamp_domain;
  bool no_clamp = false;
  std::optional<int> steps;
  std::optional<double> step_size;
  std::optional<bool> rand_init;
  std::string generation;
  std::string assignment;
  std::optional<double> slope;
  std::optional<double> bias;
  std::optional<double> step_alpha;
  std::optional<int> burn_in_epochs;
  std::string margin_kind;
  std::string objective;
  std::optional<double> tradeoff;

  void add_to(CLI::App& app) {
    app.add_option("--preset", preset, "Base schedule: desk or full")->capture_default_str();
    app.add_option("--config", config_path, "JSON training config applied over the preset");
    app.add_option("--epochs", epochs);
    app.add_option("--batch-size", batch_size);
    app.add_option("--lr", lr);
    app.add_option("--lr-drops", lr_drops, "EPOCH:DIVISOR pairs")->delimiter(',');
    app.add_option("--momentum", momentum);
    app.add_option("--weight-decay", weight_decay);
    app.add_option("--seed", seed);
    app.add_option("--hidden-layers", hidden_layers)->delimiter(',');
    app.add_flag("--linear", no_hidden, "No hidden layers");
    app.add_option("--epsilon", epsilon);
    app.add_option("--clamp-domain", clamp_domain, "LO,HI")->delimiter(',')->expected(2);
    app.add_flag("--no-clamp", no_clamp);
    app.add_option("--steps", steps);
    app.add_option("--step-size", step_size);
    app.add_option("--rand-init", rand_init);
    app.add_option("--generation", generation, "auto, ce, cw or kl");
    app.add_option("--assignment", assignment, "sigmoid, hinge or step");
    app.add_option("--slope", slope);
    app.add_option("--bias", bias);
    app.add_option("--step-alpha", step_alpha);
    app.add_option("--burn-in-epochs", burn_in_epochs);
    app.add_option("--margin-kind", margin_kind, "pm_adv, pm_nat, pm_dif or mm");
    app.add_option("--objective", objective,
                   "natural, at, trades, mart, mail_at, mail_trades or mail_mart");
    app.add_option("--tradeoff", tradeoff);
  }

  json overrides() const {
    json j = json::object();
    auto set = [&](const char* key, const auto& v) {
      if (v) j[key] = *v;
    };
    auto set_in = [&](const char* group, const char* key, const auto& v) {
      if (v) j[group][key] = *v;
    };
    set("epochs", epochs);
    set("batch_size", batch_size);
    set("lr", lr);
    set("momentum", momentum);
    set("weight_decay", weight_decay);
    set("seed", seed);
    if (!lr_drops.empty()) {
      json drops = json::array();
      for (const auto& d : lr_drops) {
        const auto colon = d.find(':');
        if (colon == std::string::npos) throw pmat::ConfigError("--lr-drops expects EPOCH:DIVISOR, got " + d);
        try {
          drops.push_back({std::stoi(d.substr(0, colon)), std::stod(d.substr(colon + 1))});
        } catch (const std::logic_error&) {
          throw pmat::ConfigError("--lr-drops expects EPOCH:DIVISOR, got " + d);
        }
      }
      j["lr_drops"] = drops;
    }
    if (no_hidden) j["hidden_layers"] = json::array();
    if (!hidden_layers.empty()) j["hidden_layers"] = hidden_layers;
    set_in("threat", "epsilon", epsilon);
    if (no_clamp) j["threat"]["clamp_domain"] = nullptr;
    if (!clamp_domain.empty()) j["threat"]["clamp_domain"] = clamp_domain;
    set_in("attack", "steps", steps);
    set_in("attack", "step_size", step_size);
    set_in("attack", "rand_init", rand_init);
    if (!generation.empty()) j["generation"] = generation;
    if (!assignment.empty()) j["weight"]["assignment"] = assignment;
    set_in("weight", "slope", slope);
    set_in("weight", "bias", bias);
    set_in("weight", "step_alpha", step_alpha);
    set_in("weight", "burn_in_epochs", burn_in_epochs);
    if (!margin_kind.empty()) j["weight"]["margin_kind"] = margin_kind;
    if (!objective.empty()) j["objective"]["kind"] = objective;
    set_in("objective", "tradeoff", tradeoff);
    return j;
  }

  pmat::TrainConfig resolve() const {
    json file = json::object();
    if (!config_path.empty()) file = read_json(config_path);
    const json flags = overrides();

    // The objective picks the slope/bias/trade-off defaults, so find it first.
    std::string kind = "mail_at";
    if (file.contains("objective") && file["objective"].contains("kind")) kind = file["objective"]["kind"];
    if (!objective.empty()) kind = objective;
    const auto parsed = pmat::parse_objective_kind(kind);

    pmat::TrainConfig base;
    if (preset == "desk") {
      base = pmat::TrainConfig::desk(parsed);
    } else if (preset == "full") {
      base = pmat::TrainConfig::full(parsed);
    } else {
      throw pmat::ConfigError("unknown preset '" + preset + "'");
    }
    pmat::TrainConfig cfg = pmat::train_config_from_json(file, base);
    cfg = pmat::train_config_from_json(flags, cfg);
    cfg.validate();
    return cfg;
  }

  static json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw pmat::InputError("cannot open " + path.string());
    return json::parse(in);
  }
};

struct AttackFlags {
  double epsilon = 0.15;
  int steps = 20;
  double step_size = 0.03;
  bool rand_init = true;
  std::uint64_t seed = 0;
  std::vector<double> clamp_domain;

  void add_to(CLI::App& app, int default_steps) {
    steps = default_steps;
    app.add_option("--epsilon", epsilon)->capture_default_str();
    app.add_option("--steps", steps)->capture_default_str();
    app.add_option("--step-size", step_size)->capture_default_str();
    app.add_option("--rand-init", rand_init)->capture_default_str();
    app.add_option("--seed", seed)->capture_default_str();
    app.add_option("--clamp-domain", clamp_domain, "LO,HI")->delimiter(',')->expected(2);
  }

  pmat::ThreatModel threat() const {
    pmat::ThreatModel t;
    t.epsilon = epsilon;
    if (!clamp_domain.empty()) t.clamp_domain = std::pair{clamp_domain[0], clamp_domain[1]};
    t.validate();
    return t;
  }

  pmat::AttackConfig attack() const {
    pmat::AttackConfig a;
    a.steps = steps;
    a.step_size = step_size;
    a.rand_init = rand_init;
    a.seed = seed;
    a.validate();
    return a;
  }

  json describe() const {
    return {{"epsilon", epsilon}, {"steps", steps}, {"step_size", step_size}, {"rand_init", rand_init},
            {"seed", seed}};
  }
};

void write_file(const fs::path& path, const std::string& text) {
  pmat::write_atomic(path, false, [&](std::ostream& out) { out << text; });
  std::cout << "wrote " << path.string() << "\n";
}

std::string metrics_csv(const pmat::MetricRow& row, int steps) {
  auto cell = [](double v) { return std::isnan(v) ? std::string() : std::to_string(v); };
  return "method,nat,pgd_" + std::to_string(steps) + ",cw\n" + row.method + "," + cell(row.nat) + "," +
         cell(row.pgd) + "," + cell(row.cw) + "\n";
}

int run_train(const TrainFlags& flags, const DataOptions& data_opts, const fs::path& out,
              const std::string& resume, int eval_steps) {
  const pmat::TrainConfig cfg = flags.resolve();
  const pmat::Dataset data = data_opts.load();
  fs::create_directories(out);
  write_file(out / "config.json", json{{"train", pmat::to_json(cfg)}, {"data", data_opts.describe()}}.dump(2) + "\n");

  pmat::TrainState state = resume.empty() ? pmat::init_state(cfg, data.dim(), data.num_classes)
                                          : pmat::restore(resume, [&] {
                                              std::vector<std::size_t> dims{data.dim()};
                                              dims.insert(dims.end(), cfg.hidden_layers.begin(),
                                                          cfg.hidden_layers.end());
                                              dims.push_back(data.num_classes);
                                              return dims;
                                            }());
  while (state.epoch < cfg.epochs) {
    state = pmat::train_epoch(std::move(state), cfg, data);
    const auto& r = state.history.back();
    std::cout << "epoch " << r.epoch << " lr " << r.lr << " loss " << r.mean_loss << " nat " << r.natural_acc
              << " adv " << r.robust_acc << " w[" << r.weights.min << ", " << r.weights.max << "]\n";
    pmat::checkpoint(state, out / "checkpoint.ckpt");
  }
  write_file(out / "training_log.csv", pmat::training_log_csv(state.history));
  pmat::save_model(out / "model.pmat", state.params);
  std::cout << "wrote " << (out / "model.pmat").string() << "\n";

  if (eval_steps > 0) {
    pmat::EvalConfig ec;
    ec.threat = cfg.threat;
    ec.steps = eval_steps;
    ec.step_size = cfg.attack.step_size;
    ec.seed = pmat::derive_seed(cfg.seed, {7});
    const auto row = pmat::eval_robustness(state.params, data, ec, std::string(pmat::to_string(cfg.objective.kind)));
    write_file(out / "train_metrics.csv", metrics_csv(row, eval_steps));
  }
  return 0;
}

int run_eval(const std::string& model, const DataOptions& data_opts, const AttackFlags& af, const fs::path& out,
             const std::string& method) {
  const auto params = pmat::load_model(model);
  const auto data = data_opts.load();
  pmat::EvalConfig ec;
  ec.threat = af.threat();
  ec.steps = af.steps;
  ec.step_size = af.step_size;
  ec.rand_init = af.rand_init;
  ec.seed = af.seed;
  const auto row = pmat::eval_robustness(params, data, ec, method);
  std::cout << metrics_csv(row, af.steps);
  fs::create_directories(out);
  write_file(out / "metrics.csv", metrics_csv(row, af.steps));
  return 0;
}

int run_measure_lps(const std::string& model, const DataOptions& data_opts, const AttackFlags& af,
                    const fs::path& out) {
  const auto params = pmat::load_model(model);
  const auto data = data_opts.load();
  const auto hist = pmat::lps_histogram(params, data, af.threat(), af.attack());
  std::cout << hist.csv();
  fs::create_directories(out);
  write_file(out / "lps_histogram.csv", hist.csv());
  return 0;
}

int run_measure_boxplot(const std::string& model, const DataOptions& data_opts, const AttackFlags& af,
                        const fs::path& out) {
  const auto params = pmat::load_model(model);
  const auto data = data_opts.load();
  const auto plot = pmat::pm_vs_lps_boxplot(params, data, af.threat(), af.attack());
  std::cout << plot.csv();
  fs::create_directories(out);
  write_file(out / "pm_vs_lps.csv", plot.csv());
  return 0;
}

int run_demo_path(const std::string& model, const DataOptions& data_opts, const AttackFlags& af,
                  const fs::path& out) {
  const auto params = pmat::load_model(model);
  const auto data = data_opts.load();
  pmat::PathDemoConfig cfg;
  cfg.threat = af.threat();
  cfg.max_steps = af.steps;
  cfg.pgd_step_size = af.step_size;
  cfg.lm = pmat::LmPgdConfig::demo(af.epsilon, af.steps);
  const auto report = pmat::path_dependence_demo(data, params, cfg);
  fs::create_directories(out);
  write_file(out / "demo_path.json", report.to_json().dump(2) + "\n");
  if (report.found) {
    write_file(out / "trace_pgd.csv", pmat::trace_csv(report.instance, report.pgd_attack));
    write_file(out / "trace_lm_pgd.csv", pmat::trace_csv(report.instance, report.lm_attack));
    std::cout << "instance " << report.instance << ": PGD LPS " << report.pgd_lps << ", LM-PGD LPS "
              << report.lm_lps << "\n";
  } else {
    std::cout << "no exemplar: " << report.stuck << " of " << report.candidates
              << " correctly classified instances never crossed under PGD, none crossed under LM-PGD\n";
  }
  return 0;
}

int run_ablate(const TrainFlags& flags, const std::vector<std::uint64_t>& seeds, int eval_steps,
               const std::vector<std::string>& objectives, const fs::path& out) {
  pmat::AblationConfig cfg = pmat::AblationConfig::desk();
  cfg.base = flags.resolve();
  cfg.eval.threat = cfg.base.threat;
  cfg.eval.step_size = cfg.base.attack.step_size;
  cfg.eval.steps = eval_steps;
  if (!seeds.empty()) cfg.seeds = seeds;
  if (!objectives.empty()) {
    cfg.objectives.clear();
    for (const auto& o : objectives) cfg.objectives.push_back(pmat::parse_objective_kind(o));
  }
  const auto result = pmat::ablation_suite(cfg);
  for (const auto& r : result.reports) std::cout << r.table.text() << "\n";
  std::vector<fs::path> written;
  pmat::write_ablation(result, out, &written);
  for (const auto& p : written) std::cout << "wrote " << p.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Margin-aware instance reweighting for adversarial training"};
  app.require_subcommand(1);
  std::string out = "out";

  TrainFlags train_flags;
  DataOptions train_data;
  std::string resume;
  int train_eval_steps = 0;
  auto* train = app.add_subcommand("train", "Train a model and write log, checkpoint and model");
  train_flags.add_to(*train);
  train_data.add_to(*train);
  train->add_option("--resume", resume, "Continue from a checkpoint");
  train->add_option("--eval-steps", train_eval_steps, "Evaluate on the training data with PGD-k afterwards");
  train->add_option("--out", out)->capture_default_str();

  std::string model;
  std::string method = "model";
  DataOptions eval_data;
  AttackFlags eval_attack;
  auto* eval = app.add_subcommand("eval", "NAT, PGD-k and CW accuracy of a saved model");
  eval->add_option("--model", model)->required();
  eval->add_option("--method", method);
  eval_data.add_to(*eval);
  eval_attack.add_to(*eval, 20);
  eval->add_option("--out", out)->capture_default_str();

  DataOptions lps_data;
  AttackFlags lps_attack;
  auto* lps = app.add_subcommand("measure-lps", "Histogram of least PGD steps");
  lps->add_option("--model", model)->required();
  lps_data.add_to(*lps);
  lps_attack.add_to(*lps, 10);
  lps->add_option("--out", out)->capture_default_str();

  DataOptions box_data;
  AttackFlags box_attack;
  auto* box = app.add_subcommand("measure-boxplot", "Natural PM grouped by least PGD steps");
  box->add_option("--model", model)->required();
  box_data.add_to(*box);
  box_attack.add_to(*box, 10);
  box->add_option("--out", out)->capture_default_str();

  DataOptions demo_data;
  AttackFlags demo_attack;
  auto* demo = app.add_subcommand("demo-path", "Search for an instance where PGD stalls and LM-PGD crosses");
  demo->add_option("--model", model)->required();
  demo_data.add_to(*demo);
  demo_attack.add_to(*demo, 50);
  demo->add_option("--out", out)->capture_default_str();

  TrainFlags ablate_flags;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> objectives;
  int ablate_eval_steps = 20;
  auto* ablate = app.add_subcommand("ablate", "Margin, assignment and generation ablation tables");
  ablate_flags.objective = "mail_trades";
  ablate_flags.add_to(*ablate);
  ablate->add_option("--seeds", seeds)->delimiter(',');
  ablate->add_option("--objectives", objectives, "Objective column groups")->delimiter(',');
  ablate->add_option("--eval-steps", ablate_eval_steps)->capture_default_str();
  ablate->add_option("--out", out)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (train->parsed()) return run_train(train_flags, train_data, out, resume, train_eval_steps);
    if (eval->parsed()) return run_eval(model, eval_data, eval_attack, out, method);
    if (lps->parsed()) return run_measure_lps(model, lps_data, lps_attack, out);
    if (box->parsed()) return run_measure_boxplot(model, box_data, box_attack, out);
    if (demo->parsed()) return run_demo_path(model, demo_data, demo_attack, out);
    if (ablate->parsed()) return run_ablate(ablate_flags, seeds, ablate_eval_steps, objectives, out);
  } catch (const pmat::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const pmat::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
