#include "csi/contrastive.hpp"

#include <vector>

namespace csi::con {

using ad::Matrix;
using ad::Var;

std::string_view to_string(Denominator d) {
  return d == Denominator::Exclusive ? "exclusive" : "include-positive";
}

Denominator parse_denominator(std::string_view name) {
  if (name == "exclusive") return Denominator::Exclusive;
  if (name == "include-positive") return Denominator::IncludePositive;
  throw Error(ErrorKind::ConfigError,
              "unknown denominator '" + std::string(name) + "' (valid: exclusive, include-positive)");
}

Var directional_loss(Var z1, Var z2, Temperature t, Denominator d) {
  if (z1.rows() != z2.rows() || z1.cols() != z2.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "contrastive views are " + std::to_string(z1.rows()) + "x" +
                                              std::to_string(z1.cols()) + " and " + std::to_string(z2.rows()) + "x" +
                                              std::to_string(z2.cols()));
  }
  const auto k = z1.rows();
  if (k < 2) throw Error(ErrorKind::DegenerateBatch, "contrastive batch needs k >= 2, got " + std::to_string(k));

  Var n1 = ad::l2_norm(z1);
  Var n2 = ad::l2_norm(z2);
  if ((n1.value().array() == 0.0).any() || (n2.value().array() == 0.0).any()) {
    throw Error(ErrorKind::ZeroNormEmbedding, "an embedding row has zero norm");
  }
  Var cosine = ad::div(ad::matmul(z1, ad::transpose(z2)), ad::matmul(n1, ad::transpose(n2)));
  Var logits = ad::scale(cosine, 1.0 / t.tau);
  const Matrix eye = Matrix::Identity(k, k);
  Var positive = ad::row_sum(ad::mul_constant(logits, eye));
  Var expo = ad::exp(logits);
  Var denominator = d == Denominator::Exclusive ? ad::row_sum(ad::mul_constant(expo, Matrix::Ones(k, k) - eye))
                                                : ad::row_sum(expo);
  return ad::scale(ad::sum(ad::sub(ad::log(denominator), positive)), 1.0 / static_cast<double>(k));
}

Var total_loss(Var z1, Var z2, Temperature t, Denominator d) {
  return ad::add(directional_loss(z1, z2, t, d), directional_loss(z2, z1, t, d));
}

Var multiview_loss(std::span<const Var> views, Temperature t, Denominator d) {
  if (views.size() < 2) throw Error(ErrorKind::ShapeMismatch, "multiview loss needs at least two views");
  Var total;
  bool first = true;
  for (std::size_t i = 0; i < views.size(); ++i) {
    for (std::size_t j = i + 1; j < views.size(); ++j) {
      Var term = total_loss(views[i], views[j], t, d);
      total = first ? term : ad::add(total, term);
      first = false;
    }
  }
  return total;
}

double directional_loss(const Matrix& z1, const Matrix& z2, Temperature t, Denominator d) {
  ad::Tape tape;
  return directional_loss(tape.constant(z1), tape.constant(z2), t, d).item();
}

double total_loss(const Matrix& z1, const Matrix& z2, Temperature t, Denominator d) {
  ad::Tape tape;
  return total_loss(tape.constant(z1), tape.constant(z2), t, d).item();
}

double multiview_loss(std::span<const Matrix> views, Temperature t, Denominator d) {
  ad::Tape tape;
  std::vector<Var> vars;
  for (const auto& v : views) vars.push_back(tape.constant(v));
  return multiview_loss(vars, t, d).item();
}

}  // namespace csi::con
