// SPDX-License-Identifier: Apache-2.0
#include "amc/training/losses.hpp"

#include <cmath>

#include "amc/autodiff/ops.hpp"
#include "amc/error.hpp"

namespace amc::training {

using ad::Tensor;

namespace {

Tensor weighted(const Tensor& a, double w) { return ad::scale(a, static_cast<float>(w)); }

}  // namespace

Tensor tempered_softmax(const Tensor& logits, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  const Tensor z = temperature == 1.0 ? logits : ad::scale(logits, static_cast<float>(1.0 / temperature));
  return ad::softmax(z, z.rank() - 1);
}

Tensor teacher_probabilities(const model::TransformerModel& teacher, const Tensor& x, double temperature) {
  ad::NoGradGuard no_grad;
  return tempered_softmax(teacher.logits(x), temperature);
}

LossTerms loss_at(const model::TransformerModel& m, const Tensor& x, const Tensor& x_adv,
                  std::span<const int> y, double alpha) {
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must lie in [0, 1]");
  Tensor total;
  if (alpha == 1.0) {
    total = ad::cross_entropy(m.logits(x), y);
  } else if (alpha == 0.0) {
    total = ad::cross_entropy(m.logits(x_adv), y);
  } else {
    total = ad::add(weighted(ad::cross_entropy(m.logits(x), y), alpha),
                    weighted(ad::cross_entropy(m.logits(x_adv), y), 1.0 - alpha));
  }
  return {total, total.item(), 0.0};
}

LossTerms loss_ard(const model::TransformerModel& student, const model::TransformerModel& teacher,
                   const Tensor& x, const Tensor& x_adv, std::span<const int> y, double alpha,
                   double temperature) {
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must lie in [0, 1]");
  const Tensor t = teacher_probabilities(teacher, x, temperature);
  const Tensor s_adv = tempered_softmax(student.logits(x_adv), temperature);
  const Tensor kl = ad::kl_divergence(s_adv, t);
  const Tensor ce = ad::cross_entropy(student.logits(x), y);
  const Tensor total =
      ad::add(weighted(kl, alpha * temperature * temperature), weighted(ce, 1.0 - alpha));
  return {total, total.item(), 0.0};
}

std::vector<double> iad_trust(const model::TransformerModel& teacher, const Tensor& x_adv,
                              std::span<const int> y, double beta) {
  if (!(beta > 0.0)) throw ConfigError("IAD beta must be positive");
  const Tensor p = teacher_probabilities(teacher, x_adv);
  const std::size_t k = p.dim(1);
  if (y.size() != p.dim(0)) throw DimensionError("iad_trust: one label per row required");
  std::vector<double> alpha(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0 || std::size_t(y[i]) >= k) throw IndexError("iad_trust: label out of range");
    alpha[i] = std::pow(double(p.data()[i * k + y[i]]), beta);
  }
  return alpha;
}

LossTerms loss_iad(const model::TransformerModel& student, const model::TransformerModel& teacher,
                   const Tensor& x, const Tensor& x_adv, std::span<const int> y, double beta,
                   double temperature) {
  const auto alpha = iad_trust(teacher, x_adv, y, beta);
  const std::size_t b = alpha.size();
  const Tensor t = teacher_probabilities(teacher, x, temperature);
  const Tensor s_adv = tempered_softmax(student.logits(x_adv), temperature);
  const Tensor s_nat = tempered_softmax(student.logits(x), temperature);
  std::vector<float> a(b), one_minus(b);
  for (std::size_t i = 0; i < b; ++i) {
    a[i] = static_cast<float>(alpha[i] / double(b));
    one_minus[i] = static_cast<float>((1.0 - alpha[i]) / double(b));
  }
  const Tensor total =
      ad::add(ad::sum(ad::mul(ad::kl_rows(s_adv, t), Tensor::from({b}, a))),
              ad::sum(ad::mul(ad::kl_rows(s_adv, s_nat), Tensor::from({b}, one_minus))));
  return {total, total.item(), 0.0};
}

LossTerms loss_akd(const model::TransformerModel& student, const model::TransformerModel& teacher_at,
                   const model::TransformerModel& teacher_std, const Tensor& x, const Tensor& x_adv,
                   std::span<const int> y, double lambda1, double lambda2) {
  if (lambda1 < 0.0 || lambda2 < 0.0 || lambda1 + lambda2 > 1.0) {
    throw ConfigError("AKD needs lambda1, lambda2 >= 0 with lambda1 + lambda2 <= 1");
  }
  const Tensor logits_adv = student.logits(x_adv);
  const Tensor s_adv = tempered_softmax(logits_adv, 1.0);
  Tensor total = weighted(ad::cross_entropy(logits_adv, y), 1.0 - lambda1 - lambda2);
  if (lambda1 > 0.0) {
    total = ad::add(total, weighted(ad::kl_divergence(s_adv, teacher_probabilities(teacher_at, x)), lambda1));
  }
  if (lambda2 > 0.0) {
    total = ad::add(total, weighted(ad::kl_divergence(s_adv, teacher_probabilities(teacher_std, x)), lambda2));
  }
  return {total, total.item(), 0.0};
}

LossTerms loss_rslad(const model::TransformerModel& student, const model::TransformerModel& teacher,
                     const Tensor& x, const Tensor& x_adv, double alpha) {
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must lie in [0, 1]");
  const Tensor t = teacher_probabilities(teacher, x);
  const Tensor adv = ad::kl_divergence(tempered_softmax(student.logits(x_adv), 1.0), t);
  const Tensor nat = ad::kl_divergence(tempered_softmax(student.logits(x), 1.0), t);
  const Tensor total = ad::add(weighted(adv, alpha), weighted(nat, 1.0 - alpha));
  return {total, total.item(), 0.0};
}

std::vector<std::pair<std::size_t, std::size_t>> atard_layer_pairs(std::size_t teacher_layers,
                                                                   std::size_t student_layers) {
  if (student_layers == 0 || student_layers > teacher_layers) {
    throw ConfigError("ATARD needs 1 <= student layers <= teacher layers");
  }
  const std::size_t window = teacher_layers - student_layers;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t j = 0; j < student_layers; ++j)
    for (std::size_t k = j; k <= j + window; ++k) pairs.emplace_back(k, j);
  return pairs;
}

Tensor attention_matching_loss(std::span<const Tensor> teacher_maps, std::span<const Tensor> student_maps) {
  const auto pairs = atard_layer_pairs(teacher_maps.size(), student_maps.size());
  const auto& shape = student_maps.front().shape();
  if (shape.size() != 3) throw DimensionError("attention maps must be [B, T, T]");
  const std::size_t b = shape[0], cells = shape[1] * shape[2];
  for (const auto& m : teacher_maps) {
    if (m.shape() != shape) {
      throw ConfigError("teacher and student attention maps differ in shape (" + ad::to_string(m.shape()) +
                        " vs " + ad::to_string(shape) + "); token counts must match");
    }
  }
  Tensor total;
  for (const auto& [t, s] : pairs) {
    const Tensor diff = ad::reshape(ad::sub(teacher_maps[t], student_maps[s]), {b, cells});
    const Tensor norms = ad::sum(ad::row_norms(diff));
    total = total.defined() ? ad::add(total, norms) : norms;
  }
  return ad::scale(total, static_cast<float>(1.0 / double(b)));
}

LossTerms loss_atard(const model::TransformerModel& student, const model::TransformerModel& teacher,
                     const Tensor& x_adv, std::span<const int> y) {
  if (student.config().token_count() != teacher.config().token_count()) {
    throw ConfigError("ATARD teacher and student token counts differ");
  }
  std::vector<Tensor> teacher_maps;
  {
    ad::NoGradGuard no_grad;
    teacher_maps = teacher.forward(x_adv).attention;
  }
  const auto out = student.forward(x_adv);
  const Tensor loss1 = ad::cross_entropy(out.logits, y);
  const Tensor loss2 = attention_matching_loss(teacher_maps, out.attention);
  return {ad::add(loss1, loss2), loss1.item(), loss2.item()};
}

}  // namespace amc::training
