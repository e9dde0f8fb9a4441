#include "pmat/losses.hpp"

#include <cmath>
#include <string>

#include "pmat/errors.hpp"

namespace pmat {
namespace {

void check_label(std::size_t classes, int y) {
  if (y < 0 || static_cast<std::size_t>(y) >= classes) {
    throw InputError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
  }
}

void check_same_length(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw InputError("probability vectors differ in length (" + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()) + ")");
  }
}

// Index of the largest entry other than y (first one on ties).
std::size_t runner_up(std::span<const double> v, int y) {
  std::size_t best = v.size();
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (static_cast<int>(k) == y) continue;
    if (best == v.size() || v[k] > v[best]) best = k;
  }
  return best;
}

// d/dz of -log max(p_y, floor) where p = softmax(z).
void add_ce_grad(std::span<const double> p, int y, double coef, std::vector<double>& dz) {
  if (p[y] < kProbFloor) return;
  for (std::size_t k = 0; k < p.size(); ++k) dz[k] += coef * p[k];
  dz[y] -= coef;
}

// Gradients of KL(p || q) with p = softmax(z), q = softmax(u).
void add_kl_grad(std::span<const double> p, std::span<const double> q, double coef,
                 std::vector<double>* dz, std::vector<double>* du) {
  const double kl = kl_divergence(p, q);
  if (dz != nullptr) {
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (p[j] == 0.0) continue;
      const double a = std::log(p[j]) - std::log(std::max(q[j], kProbFloor));
      (*dz)[j] += coef * p[j] * (a - kl);
    }
  }
  if (du != nullptr) {
    // Clamped q_k are constant in u.
    double live_mass = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (q[k] >= kProbFloor) live_mass += p[k];
    }
    for (std::size_t j = 0; j < p.size(); ++j) {
      double g = q[j] * live_mass;
      if (q[j] >= kProbFloor) g -= p[j];
      (*du)[j] += coef * g;
    }
  }
}

}  // namespace

double cross_entropy(std::span<const double> probs, int y) {
  check_label(probs.size(), y);
  return -std::log(std::max(probs[y], kProbFloor));
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  check_same_length(p, q);
  double sum = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] == 0.0) continue;
    sum += p[k] * (std::log(p[k]) - std::log(std::max(q[k], kProbFloor)));
  }
  // Rounding can leave tiny negative values when p and q nearly coincide.
  return sum > 0.0 ? sum : 0.0;
}

double boosted_cross_entropy(std::span<const double> probs, int y) {
  check_label(probs.size(), y);
  const std::size_t j = runner_up(probs, y);
  double rest = 0.0;  // 1 - p_j without cancellation
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (k != j) rest += probs[k];
  }
  return -std::log(std::max(probs[y], kProbFloor)) - std::log(std::max(rest, kProbFloor));
}

double misclassification_aware_kl(std::span<const double> p_adv, std::span<const double> p_nat,
                                  int y) {
  check_label(p_nat.size(), y);
  return kl_divergence(p_adv, p_nat) * (1.0 - p_nat[y]);
}

double cw_margin_loss(std::span<const double> logits, int y) {
  check_label(logits.size(), y);
  return logits[runner_up(logits, y)] - logits[y];
}

LossEvaluation evaluate_loss(const ModelParams& params, std::span<const double> x,
                             std::span<const double> delta, int y, const LossDefinition& loss,
                             GradRequest request) {
  check_label(params.num_classes(), y);
  if (!delta.empty() && delta.size() != x.size()) {
    throw InputError("perturbation length does not match input");
  }
  bool need_nat = false;
  for (const auto& t : loss) {
    need_nat |= t.term == LossTerm::kCrossEntropyNat || t.term == LossTerm::kKlAdvNat ||
                t.term == LossTerm::kMisclassAwareKl;
  }

  std::vector<double> shifted(x.begin(), x.end());
  for (std::size_t i = 0; i < delta.size(); ++i) shifted[i] += delta[i];

  ForwardTape adv_tape = forward_recorded(params, shifted);
  std::optional<ForwardTape> nat_tape;
  if (need_nat) nat_tape = forward_recorded(params, x);

  const std::size_t classes = params.num_classes();
  std::vector<double> dz(classes, 0.0);
  std::vector<double> du(classes, 0.0);
  const auto& p = adv_tape.out.probs;
  LossEvaluation result;

  for (const auto& [term, coef] : loss) {
    switch (term) {
      case LossTerm::kCrossEntropyAdv:
        result.value += coef * cross_entropy(p, y);
        add_ce_grad(p, y, coef, dz);
        break;
      case LossTerm::kCrossEntropyNat:
        result.value += coef * cross_entropy(nat_tape->out.probs, y);
        add_ce_grad(nat_tape->out.probs, y, coef, du);
        break;
      case LossTerm::kKlAdvNat:
        result.value += coef * kl_divergence(p, nat_tape->out.probs);
        add_kl_grad(p, nat_tape->out.probs, coef, &dz, &du);
        break;
      case LossTerm::kCwMarginAdv: {
        const auto& z = adv_tape.out.logits;
        const std::size_t j = runner_up(z, y);
        result.value += coef * (z[j] - z[y]);
        dz[j] += coef;
        dz[y] -= coef;
        break;
      }
      case LossTerm::kBoostedCrossEntropyAdv: {
        result.value += coef * boosted_cross_entropy(p, y);
        add_ce_grad(p, y, coef, dz);
        const std::size_t j = runner_up(p, y);
        double rest = 0.0;
        for (std::size_t k = 0; k < classes; ++k) {
          if (k != j) rest += p[k];
        }
        if (rest >= kProbFloor) {
          // d/dz_i of -log(1 - p_j) = p_j (delta_ij - p_i) / (1 - p_j)
          const double scale = coef * p[j] / rest;
          for (std::size_t i = 0; i < classes; ++i) dz[i] -= scale * p[i];
          dz[j] += scale;
        }
        break;
      }
      case LossTerm::kMisclassAwareKl: {
        const auto& q = nat_tape->out.probs;
        const double kl = kl_divergence(p, q);
        const double factor = 1.0 - q[y];
        result.value += coef * kl * factor;
        add_kl_grad(p, q, coef * factor, &dz, &du);
        // d(1 - q_y)/du_i = -q_y (delta_iy - q_i)
        for (std::size_t i = 0; i < classes; ++i) du[i] += coef * kl * q[y] * q[i];
        du[y] -= coef * kl * q[y];
        break;
      }
      case LossTerm::kConstant:
        result.value += coef;
        break;
    }
  }

  if (!std::isfinite(result.value)) throw NumericError("non-finite loss value");

  if (request.params) result.grads.param_grads = ModelParams(params.dims(), params.hidden_activation());
  if (request.params || request.input) {
    ModelParams* pg = request.params ? &result.grads.param_grads : nullptr;
    std::vector<double>* ig = request.input ? &result.grads.input_grad : nullptr;
    if (ig != nullptr) ig->assign(x.size(), 0.0);
    backprop(params, adv_tape, dz, pg, ig);
    if (nat_tape && pg != nullptr) backprop(params, *nat_tape, du, pg, nullptr);
  }

  result.adv = std::move(adv_tape.out);
  if (nat_tape) result.nat = std::move(nat_tape->out);
  return result;
}

GradBundle backward(const ModelParams& params, std::span<const double> x,
                    std::span<const double> delta, int y, const LossDefinition& loss) {
  return std::move(evaluate_loss(params, x, delta, y, loss, {true, true}).grads);
}

}  // namespace pmat
