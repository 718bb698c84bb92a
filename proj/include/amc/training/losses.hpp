// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <utility>
#include <vector>

#include "amc/autodiff/tensor.hpp"
#include "amc/model/transformer.hpp"

namespace amc::training {

/// A loss split into its supervised part (Loss1) and, for ATARD, the
/// attention-matching part (Loss2). `total` carries the graph.
struct LossTerms {
  ad::Tensor total;
  double loss1 = 0.0;
  double loss2 = 0.0;
};

/// Temperature-scaled softmax of logits [B,K].
ad::Tensor tempered_softmax(const ad::Tensor& logits, double temperature);

/// Frozen teacher outputs: evaluated without recording a graph.
ad::Tensor teacher_probabilities(const model::TransformerModel& teacher, const ad::Tensor& x,
                                 double temperature = 1.0);

/// Adversarial training: alpha CE(f(x), y) + (1 - alpha) CE(f(x_adv), y).
LossTerms loss_at(const model::TransformerModel& m, const ad::Tensor& x, const ad::Tensor& x_adv,
                  std::span<const int> y, double alpha);

/// ARD: alpha t^2 KL(S^t(x_adv), T^t(x)) + (1 - alpha) CE(S(x), y).
LossTerms loss_ard(const model::TransformerModel& student, const model::TransformerModel& teacher,
                   const ad::Tensor& x, const ad::Tensor& x_adv, std::span<const int> y,
                   double alpha, double temperature);

/// Per-sample trust in the teacher: P_T(x_adv)[y]^beta.
std::vector<double> iad_trust(const model::TransformerModel& teacher, const ad::Tensor& x_adv,
                              std::span<const int> y, double beta);

/// IAD, ARD with a per-sample alpha from iad_trust:
///   alpha KL(S^t(x_adv), T^t(x)) + (1 - alpha) KL(S^t(x_adv), S^t(x)), batch mean.
LossTerms loss_iad(const model::TransformerModel& student, const model::TransformerModel& teacher,
                   const ad::Tensor& x, const ad::Tensor& x_adv, std::span<const int> y,
                   double beta, double temperature);

/// AKD: (1 - l1 - l2) CE(S(x_adv), y) + l1 KL(S(x_adv), T_at(x))
///        + l2 KL(S(x_adv), T_std(x)).
LossTerms loss_akd(const model::TransformerModel& student, const model::TransformerModel& teacher_at,
                   const model::TransformerModel& teacher_std, const ad::Tensor& x,
                   const ad::Tensor& x_adv, std::span<const int> y, double lambda1, double lambda2);

/// RSLAD: alpha KL(S(x_adv), T(x)) + (1 - alpha) KL(S(x), T(x)).
LossTerms loss_rslad(const model::TransformerModel& student, const model::TransformerModel& teacher,
                     const ad::Tensor& x, const ad::Tensor& x_adv, double alpha);

/// Student layer j (0-based) is matched against teacher layers
/// j .. j + (teacher_layers - student_layers). For 4 and 2 layers this pairs
/// S1 with T1..T3 and S2 with T2..T4.
std::vector<std::pair<std::size_t, std::size_t>> atard_layer_pairs(std::size_t teacher_layers,
                                                                   std::size_t student_layers);

/// ATARD attention term (Loss2): for every matched (teacher, student) layer pair, the
/// Frobenius norm of the map difference per record, summed over pairs and
/// averaged over the batch. Maps are [B, T, T]; teacher maps are constants.
ad::Tensor attention_matching_loss(std::span<const ad::Tensor> teacher_maps,
                                   std::span<const ad::Tensor> student_maps);

/// ATARD: CE(S(x_adv), y) + Loss2, both networks fed the same x_adv.
LossTerms loss_atard(const model::TransformerModel& student, const model::TransformerModel& teacher,
                     const ad::Tensor& x_adv, std::span<const int> y);

}  // namespace amc::training
