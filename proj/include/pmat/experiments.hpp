#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pmat/attacks.hpp"
#include "pmat/data.hpp"
#include "pmat/margins.hpp"
#include "pmat/trainer.hpp"

namespace pmat {

// White-box evaluation. CW is PGD ascent on the logit margin with the same
// steps as the PGD column. An instance counts as robust only when the clean
// point and every attack iterate are classified correctly.
struct EvalConfig {
  ThreatModel threat;
  int steps = 20;
  double step_size = 0.03;
  bool rand_init = true;
  std::uint64_t seed = 0;
  bool nat = true;
  bool pgd = true;
  bool cw = true;
};

struct MetricRow {
  std::string method;
  double nat = 0.0;  // percent; NaN when not part of the suite
  double pgd = 0.0;
  double cw = 0.0;
};

MetricRow eval_robustness(const ModelParams& params, const Dataset& data, const EvalConfig& cfg,
                          std::string method = "model");

// Per-instance PGD run used by the measurement commands; instance i draws its
// random start from derive_seed(cfg.seed, {i}).
Perturbation measure_attack(const ModelParams& params, const Dataset& data, std::size_t i,
                            const ThreatModel& threat, const AttackConfig& cfg);

struct LpsHistogram {
  std::vector<std::size_t> count;     // bins 0..T
  std::vector<std::size_t> critical;  // instances in the bin with pm_adv < 0
  std::string csv() const;            // lps,count,critical
};

LpsHistogram lps_histogram(const ModelParams& params, const Dataset& data,
                           const ThreatModel& threat, const AttackConfig& cfg);

struct BoxStats {
  int lps = 0;
  std::size_t count = 0;
  double whisker_low = 0.0;   // 5th percentile
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double whisker_high = 0.0;  // 95th percentile
  std::vector<double> outliers;
};

// Quartiles and 5%/95% whiskers of `values` (linear interpolation between order statistics).
BoxStats box_stats(std::vector<double> values);

struct BoxPlot {
  std::vector<BoxStats> groups;  // ascending LPS, empty groups omitted
  std::string csv() const;  // lps,count,whisker_low,q1,median,q3,whisker_high,n_outliers,outliers
};

// PM^nat grouped by LPS.
BoxPlot pm_vs_lps_boxplot(const ModelParams& params, const Dataset& data,
                          const ThreatModel& threat, const AttackConfig& cfg);

struct PathDemoConfig {
  ThreatModel threat;
  int max_steps = 50;
  double pgd_step_size = 0.03;
  LmPgdConfig lm;
  AttackLoss loss = AttackLoss::kCrossEntropy;
};

struct PathDemoReport {
  bool found = false;
  std::size_t candidates = 0;  // correctly classified instances searched
  std::size_t stuck = 0;       // of those, PGD never crossed
  std::size_t instance = 0;
  int pgd_lps = 0;
  int lm_lps = 0;
  double pm_adv_pgd = 0.0;
  double pm_adv_lm = 0.0;
  Perturbation pgd_attack;
  Perturbation lm_attack;

  nlohmann::json to_json() const;
};

// Searches for an instance where PGD never crosses within max_steps but
// LM-PGD does; picks the one LM-PGD crosses earliest (lowest index on ties).
PathDemoReport path_dependence_demo(const Dataset& data, const ModelParams& params,
                                    const PathDemoConfig& cfg);

// CSV with columns instance_id,step,loss,predicted_class,crossed.
std::string trace_csv(std::size_t instance_id, const Perturbation& attack);

struct Cell {
  double mean = 0.0;
  double std = 0.0;
};

struct Table {
  std::string name;
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  std::vector<std::vector<Cell>> cells;  // [row][col]

  std::string csv() const;
  std::string text() const;
};

struct ExperimentReport {
  nlohmann::json config;
  Table table;
  std::vector<std::filesystem::path> artifacts;
};

struct AblationConfig {
  TrainConfig base = TrainConfig::desk(ObjectiveKind::kMailTrades);
  SyntheticSpec train_data;
  SyntheticSpec test_data;
  EvalConfig eval;
  std::vector<std::uint64_t> seeds = {0};
  std::vector<MarginKind> margins = {MarginKind::kMm, MarginKind::kPmAdv};
  std::vector<Assignment> assignments = {Assignment::kHinge, Assignment::kStep, Assignment::kSigmoid};
  std::vector<AttackLoss> generations = {AttackLoss::kCrossEntropy, AttackLoss::kCwMargin,
                                         AttackLoss::kKl};
  std::vector<ObjectiveKind> objectives = {ObjectiveKind::kMailAt, ObjectiveKind::kMailTrades};

  static AblationConfig desk();
};

struct AblationCellResult {
  ObjectiveKind objective;
  MarginKind margin;
  Assignment assignment;
  AttackLoss generation;
  std::uint64_t seed;
  MetricRow metrics;
  std::vector<EpochRecord> history;
};

struct AblationResult {
  std::vector<AblationCellResult> cells;  // full cross product
  std::vector<ExperimentReport> reports;  // margin, assignment, generation tables
};

// Trains every cell of objectives x margins x assignments x generations x
// seeds and slices three tables out of the cross product: margin kind
// (MAIL-TRADES, sigmoid, objective-matched generation), assignment function
// (MAIL-TRADES, pm_adv, objective-matched generation) and perturbation
// generation (rows) for the AT and TRADES families (column groups).
AblationResult ablation_suite(const AblationConfig& cfg);

// Writes cells.csv plus one CSV and text file per table into `dir`.
void write_ablation(const AblationResult& result, const std::filesystem::path& dir,
                    std::vector<std::filesystem::path>* written = nullptr);

}  // namespace pmat
