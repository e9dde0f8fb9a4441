#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "pmat/attacks.hpp"
#include "pmat/config.hpp"
#include "pmat/data.hpp"
#include "pmat/errors.hpp"
#include "pmat/experiments.hpp"
#include "pmat/margins.hpp"
#include "pmat/mlp.hpp"
#include "pmat/objectives.hpp"
#include "pmat/reweighting.hpp"
#include "pmat/trainer.hpp"

namespace py = pybind11;
using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Labels = py::array_t<int, py::array::c_style | py::array::forcecast>;

namespace {

std::vector<double> to_vector(const Array& a) {
  if (a.ndim() != 1) throw pmat::InputError("expected a 1-D array");
  return {a.data(), a.data() + a.size()};
}

Array to_array(std::span<const double> v) {
  Array out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

pmat::Dataset to_dataset(const Array& x, const Labels& y, std::size_t num_classes) {
  if (x.ndim() != 2 || y.ndim() != 1 || x.shape(0) != y.shape(0)) {
    throw pmat::InputError("expected X of shape (n, d) and y of shape (n,)");
  }
  pmat::Dataset d;
  d.inputs = pmat::Matrix(static_cast<std::size_t>(x.shape(0)), static_cast<std::size_t>(x.shape(1)));
  std::copy(x.data(), x.data() + x.size(), d.inputs.data.begin());
  d.labels.assign(y.data(), y.data() + y.size());
  if (num_classes == 0) {
    for (int label : d.labels) num_classes = std::max<std::size_t>(num_classes, static_cast<std::size_t>(label) + 1);
  }
  d.num_classes = num_classes;
  d.validate();
  return d;
}

py::tuple from_dataset(const pmat::Dataset& d) {
  Array x({static_cast<py::ssize_t>(d.size()), static_cast<py::ssize_t>(d.dim())});
  std::copy(d.inputs.data.begin(), d.inputs.data.end(), x.mutable_data());
  py::array_t<int> y(static_cast<py::ssize_t>(d.size()));
  std::copy(d.labels.begin(), d.labels.end(), y.mutable_data());
  return py::make_tuple(x, y);
}

pmat::ThreatModel threat(double epsilon, std::optional<std::pair<double, double>> clamp) {
  pmat::ThreatModel t{epsilon, clamp};
  t.validate();
  return t;
}

py::dict perturbation_dict(const pmat::Perturbation& p) {
  py::list trace;
  for (const auto& e : p.trace) {
    trace.append(py::dict(py::arg("step") = e.step, py::arg("loss") = e.loss, py::arg("predicted") = e.predicted,
                          py::arg("crossed") = e.crossed));
  }
  py::dict out;
  out["delta"] = to_array(p.delta);
  out["trace"] = trace;
  out["crossed_at"] = p.crossed_at ? py::cast(*p.crossed_at) : py::none();
  out["lps"] = static_cast<int>(pmat::lps(p.trace).value);
  return out;
}

pmat::TrainConfig resolve_config(const std::string& objective, const std::string& preset, const std::string& overrides) {
  const auto kind = pmat::parse_objective_kind(objective);
  pmat::TrainConfig base;
  if (preset == "desk") {
    base = pmat::TrainConfig::desk(kind);
  } else if (preset == "full") {
    base = pmat::TrainConfig::full(kind);
  } else {
    throw pmat::ConfigError("unknown preset '" + preset + "'");
  }
  pmat::TrainConfig cfg = pmat::train_config_from_json(nlohmann::json::parse(overrides.empty() ? "{}" : overrides), base);
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_pmat, m) {
  m.doc() = "Margin-aware instance reweighting for adversarial training";

  auto error = py::register_exception<pmat::Error>(m, "Error");
  py::register_exception<pmat::ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<pmat::InputError>(m, "InputError", error.ptr());
  py::register_exception<pmat::NumericError>(m, "NumericError", error.ptr());
  py::register_exception<pmat::ParseError>(m, "ParseError", error.ptr());

  py::class_<pmat::ModelParams>(m, "Model")
      .def_static("random", &pmat::ModelParams::random_init, py::arg("dims"), py::arg("seed") = 0)
      .def_static("load", [](const std::string& path) { return pmat::load_model(path); })
      .def("save", [](const pmat::ModelParams& p, const std::string& path) { pmat::save_model(path, p); })
      .def_property_readonly("dims", &pmat::ModelParams::dims)
      .def_property_readonly("num_params", &pmat::ModelParams::num_params)
      .def_property(
          "values", [](const pmat::ModelParams& p) { return to_array(p.values()); },
          [](pmat::ModelParams& p, const Array& v) {
            if (static_cast<std::size_t>(v.size()) != p.num_params()) throw pmat::InputError("parameter count mismatch");
            std::copy(v.data(), v.data() + v.size(), p.values().begin());
          })
      .def("forward",
           [](const pmat::ModelParams& p, const Array& x) {
             const auto r = pmat::forward(p, to_vector(x));
             return py::make_tuple(to_array(r.logits), to_array(r.probs));
           })
      .def("predict", [](const pmat::ModelParams& p, const Array& x) {
        if (x.ndim() != 2) throw pmat::InputError("expected X of shape (n, d)");
        py::array_t<int> out(x.shape(0));
        const auto d = static_cast<std::size_t>(x.shape(1));
        for (py::ssize_t i = 0; i < x.shape(0); ++i) {
          out.mutable_at(i) = static_cast<int>(
              pmat::forward(p, std::span<const double>(x.data() + i * x.shape(1), d)).prediction());
        }
        return out;
      });

  m.def("pm", [](const Array& probs, int y) { return pmat::pm(to_vector(probs), y); }, py::arg("probs"),
        py::arg("y"), "True-class probability minus the largest other class probability.");
  m.def("mm", [](const Array& logits, int y) { return pmat::mm(to_vector(logits), y); }, py::arg("logits"),
        py::arg("y"), "Logit margin.");

  m.def(
      "pgd",
      [](const pmat::ModelParams& p, const Array& x, int y, double epsilon, int steps, double step_size,
         const std::string& loss, bool rand_init, std::uint64_t seed,
         std::optional<std::pair<double, double>> clamp) {
        pmat::AttackConfig cfg;
        cfg.steps = steps;
        cfg.step_size = step_size;
        cfg.loss_kind = pmat::parse_attack_loss(loss);
        cfg.rand_init = rand_init;
        cfg.seed = seed;
        return perturbation_dict(pmat::pgd(p, to_vector(x), y, threat(epsilon, clamp), cfg));
      },
      py::arg("model"), py::arg("x"), py::arg("y"), py::arg("epsilon"), py::arg("steps") = 10,
      py::arg("step_size") = 2.0 / 255.0, py::arg("loss") = "ce", py::arg("rand_init") = true, py::arg("seed") = 0,
      py::arg("clamp") = py::none());

  m.def(
      "lm_pgd",
      [](const pmat::ModelParams& p, const Array& x, int y, double epsilon, int steps, std::optional<std::pair<double, double>> clamp) {
        return perturbation_dict(
            pmat::lm_pgd(p, to_vector(x), y, threat(epsilon, clamp), pmat::LmPgdConfig::demo(epsilon, steps), steps));
      },
      py::arg("model"), py::arg("x"), py::arg("y"), py::arg("epsilon"), py::arg("steps") = 50,
      py::arg("clamp") = py::none());

  m.def(
      "assign_weights",
      [](const Array& margins, const std::string& assignment, double slope, double bias, double step_alpha) {
        pmat::WeightConfig cfg;
        cfg.assignment = pmat::parse_assignment(assignment);
        cfg.slope = slope;
        cfg.bias = bias;
        cfg.step_alpha = step_alpha;
        cfg.validate();
        std::vector<double> w;
        for (double v : to_vector(margins)) w.push_back(pmat::assign_unnormalized(v, cfg));
        return to_array(w);
      },
      py::arg("margins"), py::arg("assignment") = "sigmoid", py::arg("slope") = 10.0, py::arg("bias") = -0.5,
      py::arg("step_alpha") = 0.2, "Unnormalized instance weights.");

  m.def(
      "normalize_weights", [](const Array& w) { return to_array(pmat::normalize(to_vector(w)).weights); },
      py::arg("weights"), "Scale weights to mean one.");

  m.def(
      "make_dataset",
      [](const std::string& kind, std::size_t n_per_class, double noise, std::uint64_t seed, std::size_t num_classes) {
        return from_dataset(pmat::generate(
            pmat::SyntheticSpec{pmat::parse_synthetic_kind(kind), n_per_class, noise, seed, num_classes}));
      },
      py::arg("kind") = "moons", py::arg("n_per_class") = 500, py::arg("noise") = 0.1, py::arg("seed") = 0,
      py::arg("num_classes") = 2);

  m.def(
      "objective_loss",
      [](const pmat::ModelParams& p, const Array& x, const Labels& y, const Array& deltas, const Array& weights,
         const std::string& kind, double tradeoff) {
        const pmat::Dataset d = to_dataset(x, y, p.num_classes());
        if (deltas.ndim() != 2 || deltas.shape(0) != x.shape(0) || deltas.shape(1) != x.shape(1)) {
          throw pmat::InputError("deltas must match X in shape");
        }
        std::vector<std::size_t> rows(d.size());
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
        const pmat::Batch batch = d.batch(rows);
        std::vector<std::vector<double>> ds;
        for (std::size_t i = 0; i < d.size(); ++i) {
          ds.emplace_back(deltas.data() + i * d.dim(), deltas.data() + (i + 1) * d.dim());
        }
        const pmat::WeightVector w{to_vector(weights), true, false};
        const pmat::ObjectiveConfig cfg{pmat::parse_objective_kind(kind), tradeoff};
        const auto report = pmat::evaluate_objective(p, cfg, batch, ds, w, true);
        return py::make_tuple(report.total, to_array(report.per_instance), to_array(report.param_grads->values()));
      },
      py::arg("model"), py::arg("X"), py::arg("y"), py::arg("deltas"), py::arg("weights"), py::arg("kind") = "mail_at",
      py::arg("tradeoff") = 5.0, "Batch loss, per-instance terms and parameter gradient.");

  m.def(
      "train",
      [](const Array& x, const Labels& y, const std::string& objective, const std::string& preset,
         const std::string& overrides) {
        const pmat::TrainConfig cfg = resolve_config(objective, preset, overrides);
        const pmat::Dataset d = to_dataset(x, y, 0);
        pmat::TrainState state;
        {
          py::gil_scoped_release release;
          state = pmat::train(cfg, d);
        }
        return py::make_tuple(state.params, pmat::training_log_csv(state.history));
      },
      py::arg("X"), py::arg("y"), py::arg("objective") = "mail_at", py::arg("preset") = "desk",
      py::arg("config_json") = "", "Train a model; returns (model, training log CSV).");

  m.def(
      "resolve_config",
      [](const std::string& objective, const std::string& preset, const std::string& overrides) {
        return pmat::to_json(resolve_config(objective, preset, overrides)).dump();
      },
      py::arg("objective") = "mail_at", py::arg("preset") = "desk", py::arg("config_json") = "");

  m.def(
      "eval_robustness",
      [](const pmat::ModelParams& p, const Array& x, const Labels& y, double epsilon, int steps, double step_size,
         std::uint64_t seed) {
        pmat::EvalConfig cfg;
        cfg.threat = threat(epsilon, std::nullopt);
        cfg.steps = steps;
        cfg.step_size = step_size;
        cfg.seed = seed;
        const auto row = pmat::eval_robustness(p, to_dataset(x, y, p.num_classes()), cfg);
        return py::dict(py::arg("nat") = row.nat, py::arg("pgd") = row.pgd, py::arg("cw") = row.cw);
      },
      py::arg("model"), py::arg("X"), py::arg("y"), py::arg("epsilon") = 0.15, py::arg("steps") = 20,
      py::arg("step_size") = 0.03, py::arg("seed") = 0, "Accuracy in percent: clean, PGD-k and CW-k.");
}
