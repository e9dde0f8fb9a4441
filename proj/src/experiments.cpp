#include "pmat/experiments.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>

#include "pmat/config.hpp"
#include "pmat/errors.hpp"
#include "pmat/file_util.hpp"

namespace pmat {
namespace {

std::string fmt(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::string fixed2(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  os << v;
  return os.str();
}

// Robust when the clean point and every iterate are classified correctly.
bool survives(const ModelParams& params, const Dataset& data, std::size_t i, AttackLoss loss,
              const EvalConfig& cfg) {
  AttackConfig attack;
  attack.steps = cfg.steps;
  attack.step_size = cfg.step_size;
  attack.loss_kind = loss;
  attack.rand_init = cfg.rand_init;
  attack.seed = derive_seed(cfg.seed, {i});
  const Perturbation p = pgd(params, data.input(i), data.labels[i], cfg.threat, attack);
  return !p.crossed_at.has_value();
}

void write_text(const std::filesystem::path& path, const std::string& text,
                std::vector<std::filesystem::path>* written) {
  write_atomic(path, false, [&](std::ostream& out) { out << text; });
  if (written != nullptr) written->push_back(path);
}

double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

MetricRow eval_robustness(const ModelParams& params, const Dataset& data, const EvalConfig& cfg,
                          std::string method) {
  data.validate();
  cfg.threat.validate();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  MetricRow row{std::move(method), nan, nan, nan};
  std::size_t nat = 0;
  std::size_t pgd_ok = 0;
  std::size_t cw_ok = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const bool clean = forward(params, data.input(i)).prediction() == data.labels[i];
    if (!clean) continue;
    ++nat;
    if (cfg.pgd && survives(params, data, i, AttackLoss::kCrossEntropy, cfg)) ++pgd_ok;
    if (cfg.cw && survives(params, data, i, AttackLoss::kCwMargin, cfg)) ++cw_ok;
  }
  const double n = static_cast<double>(data.size());
  if (cfg.nat) row.nat = 100.0 * static_cast<double>(nat) / n;
  if (cfg.pgd) row.pgd = 100.0 * static_cast<double>(pgd_ok) / n;
  if (cfg.cw) row.cw = 100.0 * static_cast<double>(cw_ok) / n;
  return row;
}

Perturbation measure_attack(const ModelParams& params, const Dataset& data, std::size_t i,
                            const ThreatModel& threat, const AttackConfig& cfg) {
  AttackConfig attack = cfg;
  attack.seed = derive_seed(cfg.seed, {i});
  return pgd(params, data.input(i), data.labels[i], threat, attack);
}

std::string LpsHistogram::csv() const {
  std::string out = "lps,count,critical\n";
  for (std::size_t b = 0; b < count.size(); ++b) {
    out += std::to_string(b) + "," + std::to_string(count[b]) + "," + std::to_string(critical[b]) + "\n";
  }
  return out;
}

LpsHistogram lps_histogram(const ModelParams& params, const Dataset& data,
                           const ThreatModel& threat, const AttackConfig& cfg) {
  data.validate();
  LpsHistogram hist;
  hist.count.assign(static_cast<std::size_t>(cfg.steps) + 1, 0);
  hist.critical.assign(hist.count.size(), 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Perturbation p = measure_attack(params, data, i, threat, cfg);
    const auto bin = static_cast<std::size_t>(lps(p.trace, i).value);
    ++hist.count[bin];
    if (pm_adv(params, data.input(i), p.delta, data.labels[i]).value < 0.0) ++hist.critical[bin];
  }
  return hist;
}

BoxStats box_stats(std::vector<double> values) {
  if (values.empty()) throw InputError("box statistics need at least one value");
  std::sort(values.begin(), values.end());
  BoxStats s;
  s.count = values.size();
  s.whisker_low = quantile(values, 0.05);
  s.q1 = quantile(values, 0.25);
  s.median = quantile(values, 0.5);
  s.q3 = quantile(values, 0.75);
  s.whisker_high = quantile(values, 0.95);
  for (double v : values) {
    if (v < s.whisker_low || v > s.whisker_high) s.outliers.push_back(v);
  }
  return s;
}

std::string BoxPlot::csv() const {
  std::string out = "lps,count,whisker_low,q1,median,q3,whisker_high,n_outliers,outliers\n";
  for (const auto& g : groups) {
    out += std::to_string(g.lps) + "," + std::to_string(g.count) + "," + fmt(g.whisker_low) + "," +
           fmt(g.q1) + "," + fmt(g.median) + "," + fmt(g.q3) + "," + fmt(g.whisker_high) + "," +
           std::to_string(g.outliers.size()) + ",";
    for (std::size_t k = 0; k < g.outliers.size(); ++k) {
      if (k > 0) out += ';';
      out += fmt(g.outliers[k]);
    }
    out += "\n";
  }
  return out;
}

BoxPlot pm_vs_lps_boxplot(const ModelParams& params, const Dataset& data,
                          const ThreatModel& threat, const AttackConfig& cfg) {
  data.validate();
  std::map<int, std::vector<double>> groups;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Perturbation p = measure_attack(params, data, i, threat, cfg);
    const int bin = static_cast<int>(lps(p.trace, i).value);
    groups[bin].push_back(pm_nat(params, data.input(i), data.labels[i]).value);
  }
  BoxPlot plot;
  for (auto& [bin, values] : groups) {
    BoxStats s = box_stats(std::move(values));
    s.lps = bin;
    plot.groups.push_back(std::move(s));
  }
  return plot;
}

nlohmann::json PathDemoReport::to_json() const {
  nlohmann::json j;
  j["found"] = found;
  j["candidates_searched"] = candidates;
  j["pgd_stuck"] = stuck;
  if (found) {
    j["instance_id"] = instance;
    j["pgd_lps"] = pgd_lps;
    j["lm_pgd_lps"] = lm_lps;
    j["pm_adv_pgd"] = pm_adv_pgd;
    j["pm_adv_lm_pgd"] = pm_adv_lm;
    auto losses = [](const Perturbation& p) {
      std::vector<double> v;
      for (const auto& e : p.trace) v.push_back(e.loss);
      return v;
    };
    j["pgd_loss_trace"] = losses(pgd_attack);
    j["lm_pgd_loss_trace"] = losses(lm_attack);
  } else {
    j["message"] = "no instance where PGD stays stuck and LM-PGD crosses";
  }
  return j;
}

PathDemoReport path_dependence_demo(const Dataset& data, const ModelParams& params,
                                    const PathDemoConfig& cfg) {
  data.validate();
  AttackConfig pgd_cfg;
  pgd_cfg.steps = cfg.max_steps;
  pgd_cfg.step_size = cfg.pgd_step_size;
  pgd_cfg.loss_kind = cfg.loss;
  pgd_cfg.rand_init = false;
  LmPgdConfig lm_cfg = cfg.lm;
  lm_cfg.loss_kind = cfg.loss;
  lm_cfg.rand_init = false;

  PathDemoReport report;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = data.input(i);
    const int y = data.labels[i];
    if (forward(params, x).prediction() != y) continue;
    ++report.candidates;
    Perturbation plain = pgd(params, x, y, cfg.threat, pgd_cfg);
    if (plain.crossed_at) continue;
    ++report.stuck;
    Perturbation lm = lm_pgd(params, x, y, cfg.threat, lm_cfg, cfg.max_steps);
    if (!lm.crossed_at) continue;
    if (report.found && *lm.crossed_at >= report.lm_lps) continue;
    report.found = true;
    report.instance = i;
    report.pgd_lps = static_cast<int>(lps(plain.trace).value);
    report.lm_lps = *lm.crossed_at;
    report.pm_adv_pgd = pm_adv(params, x, plain.delta, y).value;
    report.pm_adv_lm = pm_adv(params, x, lm.delta, y).value;
    report.pgd_attack = std::move(plain);
    report.lm_attack = std::move(lm);
  }
  return report;
}

std::string trace_csv(std::size_t instance_id, const Perturbation& attack) {
  std::string out = "instance_id,step,loss,predicted_class,crossed\n";
  for (const auto& e : attack.trace) {
    out += std::to_string(instance_id) + "," + std::to_string(e.step) + "," + fmt(e.loss) + "," +
           std::to_string(e.predicted) + "," + (e.crossed ? "1" : "0") + "\n";
  }
  return out;
}

std::string Table::csv() const {
  std::string out = "metric";
  for (const auto& c : col_labels) out += "," + c + "_mean," + c + "_std";
  out += "\n";
  for (std::size_t r = 0; r < row_labels.size(); ++r) {
    out += row_labels[r];
    for (const auto& cell : cells[r]) out += "," + fmt(cell.mean) + "," + fmt(cell.std);
    out += "\n";
  }
  return out;
}

std::string Table::text() const {
  std::ostringstream os;
  os << name << "\n";
  os << "        ";
  for (const auto& c : col_labels) os << " | " << c;
  os << "\n";
  for (std::size_t r = 0; r < row_labels.size(); ++r) {
    os << row_labels[r];
    for (const auto& cell : cells[r]) os << " | " << fixed2(cell.mean) << " +- " << fixed2(cell.std);
    os << "\n";
  }
  return os.str();
}

AblationConfig AblationConfig::desk() {
  AblationConfig cfg;
  cfg.train_data = {SyntheticKind::kTwoMoons, 500, 0.1, 1, 2};
  cfg.test_data = {SyntheticKind::kTwoMoons, 250, 0.1, 2, 2};
  cfg.eval.threat = cfg.base.threat;
  cfg.eval.step_size = cfg.base.attack.step_size;
  cfg.eval.steps = 20;
  return cfg;
}

namespace {

using CellKey = std::tuple<ObjectiveKind, MarginKind, Assignment, AttackLoss>;

Cell summarize(const std::vector<double>& v) {
  Cell c;
  for (double x : v) c.mean += x;
  c.mean /= static_cast<double>(v.size());
  for (double x : v) c.std += (x - c.mean) * (x - c.mean);
  c.std = std::sqrt(c.std / static_cast<double>(v.size()));
  return c;
}

template <typename T>
T prefer(const std::vector<T>& available, T wanted) {
  if (available.empty()) throw ConfigError("ablation axis is empty");
  return std::find(available.begin(), available.end(), wanted) != available.end() ? wanted
                                                                                    : available.front();
}

AttackLoss matched_generation(ObjectiveKind kind) {
  ObjectiveConfig oc{kind, 1.0};
  return loss_for_style(oc.generation_style());
}

std::string objective_label(ObjectiveKind kind) {
  switch (ObjectiveConfig{kind, 1.0}.baseline()) {
    case ObjectiveKind::kAt: return "AT";
    case ObjectiveKind::kTrades: return "TRADES";
    case ObjectiveKind::kMart: return "MART";
    default: return std::string(to_string(kind));
  }
}

std::string margin_label(MarginKind kind) {
  switch (kind) {
    case MarginKind::kMm: return "MM";
    case MarginKind::kPmAdv: return "PM";
    default: return std::string(to_string(kind));
  }
}

std::string generation_label(AttackLoss g) {
  switch (g) {
    case AttackLoss::kCrossEntropy: return "PGD";
    case AttackLoss::kCwMargin: return "CW";
    case AttackLoss::kKl: return "KL";
  }
  return "?";
}

}  // namespace

AblationResult ablation_suite(const AblationConfig& cfg) {
  const Dataset train_set = generate(cfg.train_data);
  const Dataset test_set = generate(cfg.test_data);
  if (cfg.seeds.empty()) throw ConfigError("ablation needs at least one seed");

  AblationResult result;
  std::map<CellKey, std::array<std::vector<double>, 3>> metrics;
  for (ObjectiveKind objective : cfg.objectives) {
    for (MarginKind margin : cfg.margins) {
      for (Assignment assignment : cfg.assignments) {
        for (AttackLoss generation : cfg.generations) {
          for (std::uint64_t seed : cfg.seeds) {
            TrainConfig tc = cfg.base;
            tc.apply_objective_defaults(objective);
            tc.weight.margin_kind = margin;
            tc.weight.assignment = assignment;
            tc.generation = generation;
            tc.seed = seed;
            TrainState state = train(tc, train_set);
            EvalConfig ec = cfg.eval;
            ec.seed = derive_seed(seed, {7});
            MetricRow row = eval_robustness(state.params, test_set, ec,
                                            std::string(to_string(objective)));
            auto& m = metrics[{objective, margin, assignment, generation}];
            m[0].push_back(row.nat);
            m[1].push_back(row.pgd);
            m[2].push_back(row.cw);
            result.cells.push_back({objective, margin, assignment, generation, seed, row,
                                    std::move(state.history)});
          }
        }
      }
    }
  }

  const std::vector<std::string> metric_rows = {"NAT", "PGD-" + std::to_string(cfg.eval.steps), "CW"};
  const ObjectiveKind trades = prefer(cfg.objectives, ObjectiveKind::kMailTrades);
  const MarginKind pm = prefer(cfg.margins, MarginKind::kPmAdv);
  const Assignment sigmoid = prefer(cfg.assignments, Assignment::kSigmoid);
  const nlohmann::json snapshot = {{"base", to_json(cfg.base)},
                                   {"train_data", to_json(cfg.train_data)},
                                   {"test_data", to_json(cfg.test_data)},
                                   {"seeds", cfg.seeds},
                                   {"eval_steps", cfg.eval.steps}};

  {
    Table t;
    t.name = "margin: MM vs PM (" + objective_label(trades) + ")";
    t.row_labels = metric_rows;
    const AttackLoss gen = prefer(cfg.generations, matched_generation(trades));
    for (MarginKind margin : cfg.margins) t.col_labels.push_back(margin_label(margin));
    t.cells.assign(3, {});
    for (std::size_t r = 0; r < 3; ++r) {
      for (MarginKind margin : cfg.margins) {
        t.cells[r].push_back(summarize(metrics[{trades, margin, sigmoid, gen}][r]));
      }
    }
    result.reports.push_back({snapshot, std::move(t), {}});
  }
  {
    Table t;
    t.name = "assignment: hinge / step / sigmoid (" + objective_label(trades) + ")";
    t.row_labels = metric_rows;
    const AttackLoss gen = prefer(cfg.generations, matched_generation(trades));
    for (Assignment a : cfg.assignments) t.col_labels.emplace_back(to_string(a));
    t.cells.assign(3, {});
    for (std::size_t r = 0; r < 3; ++r) {
      for (Assignment a : cfg.assignments) {
        t.cells[r].push_back(summarize(metrics[{trades, pm, a, gen}][r]));
      }
    }
    result.reports.push_back({snapshot, std::move(t), {}});
  }
  {
    Table t;
    t.name = "generation: PGD / CW / KL perturbations";
    for (AttackLoss g : cfg.generations) t.row_labels.push_back(generation_label(g));
    for (ObjectiveKind o : cfg.objectives) {
      for (const auto& m : metric_rows) t.col_labels.push_back(objective_label(o) + "/" + m);
    }
    for (AttackLoss g : cfg.generations) {
      std::vector<Cell> row;
      for (ObjectiveKind o : cfg.objectives) {
        for (std::size_t r = 0; r < 3; ++r) row.push_back(summarize(metrics[{o, pm, sigmoid, g}][r]));
      }
      t.cells.push_back(std::move(row));
    }
    result.reports.push_back({snapshot, std::move(t), {}});
  }
  return result;
}

void write_ablation(const AblationResult& result, const std::filesystem::path& dir,
                    std::vector<std::filesystem::path>* written) {
  std::filesystem::create_directories(dir);
  std::string cells = "objective,margin,assignment,generation,seed,nat,pgd,cw\n";
  for (const auto& c : result.cells) {
    cells += std::string(to_string(c.objective)) + "," + std::string(to_string(c.margin)) + "," +
             std::string(to_string(c.assignment)) + "," + std::string(to_string(c.generation)) + "," +
             std::to_string(c.seed) + "," + fmt(c.metrics.nat) + "," + fmt(c.metrics.pgd) + "," +
             fmt(c.metrics.cw) + "\n";
  }
  write_text(dir / "ablation_cells.csv", cells, written);
  const std::array<const char*, 3> names = {"ablation_margin", "ablation_assignment",
                                            "ablation_generation"};
  for (std::size_t k = 0; k < result.reports.size() && k < names.size(); ++k) {
    write_text(dir / (std::string(names[k]) + ".csv"), result.reports[k].table.csv(), written);
    write_text(dir / (std::string(names[k]) + ".txt"), result.reports[k].table.text(), written);
  }
}

}  // namespace pmat
