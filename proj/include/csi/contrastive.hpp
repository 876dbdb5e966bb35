#pragma once

// Temperature-scaled cosine discriminator and in-batch contrastive losses.

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <string>
#include <string_view>

#include "csi/autodiff.hpp"
#include "csi/error.hpp"

namespace csi::con {

struct Temperature {
  double tau = 0.07;

  explicit Temperature(double t = 0.07) : tau(t) {
    if (!(t > 0.0) || !std::isfinite(t)) {
      throw Error(ErrorKind::ConfigError, "temperature must be positive, got " + std::to_string(t));
    }
  }
};

/// Exclusive sums over m != n only; IncludePositive adds the congruent term.
enum class Denominator { Exclusive, IncludePositive };

std::string_view to_string(Denominator d);
/// "exclusive" or "include-positive"; anything else is a ConfigError.
Denominator parse_denominator(std::string_view name);

/// exp(cos(z1, z2) / tau).
template <typename A, typename B>
double discriminator(const Eigen::MatrixBase<A>& z1, const Eigen::MatrixBase<B>& z2, Temperature t) {
  if (z1.size() != z2.size()) {
    throw Error(ErrorKind::ShapeMismatch, "discriminator on lengths " + std::to_string(z1.size()) + " and " +
                                              std::to_string(z2.size()));
  }
  const double n1 = z1.norm();
  const double n2 = z2.norm();
  if (n1 == 0.0 || n2 == 0.0) throw Error(ErrorKind::ZeroNormEmbedding, "discriminator input has zero norm");
  double dot = 0.0;
  for (Eigen::Index i = 0; i < z1.size(); ++i) dot += z1(i) * z2(i);
  return std::exp(dot / (n1 * n2) / t.tau);
}

/// (1/k) sum_n -log(h(z1_n, z2_n) / sum_m h(z1_n, z2_m)). Rows of z1 and z2
/// are aligned congruent pairs.
ad::Var directional_loss(ad::Var z1, ad::Var z2, Temperature t, Denominator d = Denominator::Exclusive);
/// directional(z1, z2) + directional(z2, z1).
ad::Var total_loss(ad::Var z1, ad::Var z2, Temperature t, Denominator d = Denominator::Exclusive);
/// Sum of total_loss over every view pair i < j.
ad::Var multiview_loss(std::span<const ad::Var> views, Temperature t, Denominator d = Denominator::Exclusive);

double directional_loss(const ad::Matrix& z1, const ad::Matrix& z2, Temperature t,
                        Denominator d = Denominator::Exclusive);
double total_loss(const ad::Matrix& z1, const ad::Matrix& z2, Temperature t, Denominator d = Denominator::Exclusive);
double multiview_loss(std::span<const ad::Matrix> views, Temperature t, Denominator d = Denominator::Exclusive);

}  // namespace csi::con
