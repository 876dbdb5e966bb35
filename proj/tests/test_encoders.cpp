#include <gtest/gtest.h>

#include "csi/chemio.hpp"
#include "csi/encoders.hpp"

using namespace csi;
using namespace csi::enc;

namespace {

GcnShape small_gcn() { return {chemio::kAtomFeatureWidth, 6, 3, 5, 4}; }
CnnShape small_cnn() { return {chemio::kAlphabetSize, 4, 5, 3, 20, 4}; }

Matrix embed(const GcnEncoder& e, const GraphInput& g) {
  ad::Tape t;
  auto enc = e;
  const GraphInput* in[] = {&g};
  return gcn_encode(enc, bind(t, enc.group, false), in).value();
}

Matrix embed(const CnnEncoder& e, const std::vector<int>& codes) {
  ad::Tape t;
  auto enc = e;
  const std::vector<int>* in[] = {&codes};
  return cnn_encode(enc, bind(t, enc.group, false), in).value();
}

std::vector<int> codes_with(const std::string& motif, std::size_t at, std::size_t length) {
  std::vector<int> c(length, 0);
  for (std::size_t i = 0; i < motif.size(); ++i) c[at + i] = chemio::residue_code(motif[i]);
  return c;
}

}  // namespace

TEST(Gcn, OutputShapeAndBatchConsistency) {
  Rng rng(1);
  auto gcn = make_gcn("g", small_gcn(), rng);
  const auto a = graph_input(chemio::parse_smiles("CCO")), b = graph_input(chemio::parse_smiles("c1ccccc1N"));
  ad::Tape t;
  const GraphInput* both[] = {&a, &b};
  const Matrix batch = gcn_encode(gcn, bind(t, gcn.group), both).value();
  ASSERT_EQ(batch.rows(), 2);
  ASSERT_EQ(batch.cols(), 4);
  EXPECT_TRUE(batch.row(0).isApprox(embed(gcn, a), 1e-12));
  EXPECT_TRUE(batch.row(1).isApprox(embed(gcn, b), 1e-12));
}

TEST(Gcn, AtomPermutationInvariance) {
  Rng rng(2);
  const auto gcn = make_gcn("g", small_gcn(), rng);
  const std::pair<const char*, const char*> pairs[] = {
      {"CCO", "OCC"}, {"CC(=O)N", "NC(C)=O"}, {"c1ccccc1O", "Oc1ccccc1"}, {"CC(C)(C)Cl", "ClC(C)(C)C"}};
  for (auto [x, y] : pairs) {
    const Matrix ex = embed(gcn, graph_input(chemio::parse_smiles(x)));
    const Matrix ey = embed(gcn, graph_input(chemio::parse_smiles(y)));
    EXPECT_LT((ex - ey).cwiseAbs().maxCoeff(), 1e-12) << x << " vs " << y;
  }
}

TEST(Gcn, ZeroWeightsLeaveOnlyBiases) {
  Rng rng(3);
  auto gcn = make_gcn("g", small_gcn(), rng);
  for (auto& p : gcn.group.params) p.value.setZero();
  gcn.group.at("fc1.bias").value.setConstant(0.25);
  const Matrix e = embed(gcn, graph_input(chemio::parse_smiles("CCN")));
  EXPECT_TRUE(e.isApprox(Matrix::Constant(1, 4, 0.25)));
}

TEST(Cnn, PaddingAndMotifShift) {
  Rng rng(4);
  const auto cnn = make_cnn("s", small_cnn(), rng);
  EXPECT_EQ(embed(cnn, codes_with("MKV", 0, 20)).cols(), 4);
  // Width 3 filters: with at least two padding rows on both sides every
  // window seen by one placement is seen by the other.
  const Matrix early = embed(cnn, codes_with("MKVW", 2, 20));
  const Matrix late = embed(cnn, codes_with("MKVW", 12, 20));
  EXPECT_EQ(early, late);
  const Matrix other = embed(cnn, codes_with("WVKM", 2, 20));
  EXPECT_NE(early, other);
  // Sequences that differ only in padding encode identically.
  const auto p = chemio::encode_fasta("ACDEF", 20).codes;
  EXPECT_EQ(embed(cnn, p), embed(cnn, codes_with("ACDEF", 0, 20)));
}

TEST(Cnn, AllPaddingIsBiasPath) {
  Rng rng(5);
  auto cnn = make_cnn("s", small_cnn(), rng);
  cnn.group.at("conv.bias").value.setConstant(0.5);
  cnn.group.at("fc.bias").value.setConstant(-1.0);
  const Matrix expected = (Matrix::Constant(1, 5, 0.5) * cnn.group.at("fc.weight").value).array() - 1.0;
  EXPECT_TRUE(embed(cnn, std::vector<int>(20, 0)).isApprox(expected, 1e-12));
}

TEST(Cnn, PaddingRowNeverReceivesGradient) {
  Rng rng(6);
  auto cnn = make_cnn("s", small_cnn(), rng);
  EXPECT_TRUE(cnn.group.at("embedding").value.row(0).isZero());
  const auto codes = codes_with("MKVWAC", 3, 20);
  const std::vector<int>* in[] = {&codes};
  ad::Tape t;
  t.backward(ad::sum(cnn_encode(cnn, bind(t, cnn.group), in)));
  EXPECT_TRUE(cnn.group.at("embedding").grad.row(0).isZero());
  EXPECT_FALSE(cnn.group.at("embedding").grad.isZero());
  const auto short_codes = std::vector<int>(19, 1);
  const std::vector<int>* bad[] = {&short_codes};
  ad::Tape u;
  EXPECT_THROW(cnn_encode(cnn, bind(u, cnn.group), bad), Error);
}

TEST(Siamese, SharedWeights) {
  Rng rng(7);
  auto cnn = make_cnn("s", small_cnn(), rng);
  const auto a = codes_with("MKVW", 1, 20), b = codes_with("CDEF", 4, 20);
  const std::vector<int>* first[] = {&a, &a};
  const std::vector<int>* second[] = {&a, &b};
  ad::Tape t;
  const Matrix pair = siamese_pair(cnn, bind(t, cnn.group), std::span<const std::vector<int>* const>(first),
                                   std::span<const std::vector<int>* const>(second))
                          .value();
  ASSERT_EQ(pair.cols(), 8);
  EXPECT_EQ(pair.row(0).head(4), pair.row(0).tail(4));
  const std::vector<int>* swapped_first[] = {&b};
  const std::vector<int>* swapped_second[] = {&a};
  ad::Tape u;
  const Matrix swapped = siamese_pair(cnn, bind(u, cnn.group), std::span<const std::vector<int>* const>(swapped_first),
                                      std::span<const std::vector<int>* const>(swapped_second))
                             .value();
  EXPECT_EQ(swapped.row(0).head(4), pair.row(1).tail(4));
  EXPECT_EQ(swapped.row(0).tail(4), pair.row(1).head(4));
}

TEST(Siamese, GradientIsSumOfBranches) {
  Rng rng(8);
  auto gcn = make_gcn("g", small_gcn(), rng);
  const auto a = graph_input(chemio::parse_smiles("CC(=O)O")), b = graph_input(chemio::parse_smiles("c1ccncc1"));
  const Matrix head = Eigen::RowVectorXd::LinSpaced(8, -1.0, 1.0);
  const GraphInput* first[] = {&a};
  const GraphInput* second[] = {&b};
  {
    ad::Tape t;
    const Var z = siamese_pair(gcn, bind(t, gcn.group), std::span<const GraphInput* const>(first),
                               std::span<const GraphInput* const>(second));
    t.backward(ad::dot(z, t.constant(head)));
  }
  std::vector<Matrix> joint;
  for (auto& p : gcn.group.params) {
    joint.push_back(p.grad);
    p.zero_grad();
  }
  {
    ad::Tape t;
    t.backward(ad::dot(gcn_encode(gcn, bind(t, gcn.group), first), t.constant(head.leftCols(4))));
  }
  {
    ad::Tape t;
    t.backward(ad::dot(gcn_encode(gcn, bind(t, gcn.group), second), t.constant(head.rightCols(4))));
  }
  for (std::size_t i = 0; i < joint.size(); ++i) {
    EXPECT_LT((joint[i] - gcn.group.params[i].grad).cwiseAbs().maxCoeff(), 1e-12) << gcn.group.params[i].name;
  }
}

TEST(Predictor, WidthsAndZeroInput) {
  Rng rng(9);
  auto p = make_predictor("p", 16, rng);
  EXPECT_EQ(p.widths, (std::vector<int>{16, 8, 4, 1}));
  ad::Tape t;
  const Var out = predict(p, bind(t, p.group), t.constant(Matrix::Zero(3, 16)));
  EXPECT_TRUE(out.value().isZero());
  ad::Tape u;
  EXPECT_THROW(predict(p, bind(u, p.group), u.constant(Matrix::Zero(1, 15))), Error);
}

TEST(Predictor, HandSetLayers) {
  Rng rng(10);
  auto p = make_predictor("p", std::vector<int>{1, 1, 1, 1}, rng);
  p.group.at("dense0.weight").value.setConstant(2.0);
  p.group.at("dense0.bias").value.setConstant(1.0);
  p.group.at("dense1.weight").value.setConstant(0.5);
  p.group.at("dense1.bias").value.setConstant(-1.0);
  p.group.at("dense2.weight").value.setConstant(4.0);
  p.group.at("dense2.bias").value.setConstant(0.5);
  ad::Tape t;
  // relu(2*3+1) = 7, relu(0.5*7-1) = 2.5, 4*2.5+0.5 = 10.5; a negative input
  // is clipped by the first relu: relu(2*-3+1) = 0, relu(-1) = 0, 0.5.
  const Var out = predict(p, bind(t, p.group), t.constant((Matrix(2, 1) << 3.0, -3.0).finished()));
  EXPECT_DOUBLE_EQ(out.value()(0, 0), 10.5);
  EXPECT_DOUBLE_EQ(out.value()(1, 0), 0.5);
}

TEST(Baseline, ShapesAndPurity) {
  Rng rng(11);
  auto gcn = make_gcn("g", small_gcn(), rng);
  auto cnn = make_cnn("s", small_cnn(), rng);
  auto p = make_predictor("p", 8, rng);
  const auto g = graph_input(chemio::parse_smiles("CCO"));
  const auto s = chemio::encode_fasta("MKVWA", 20).codes;
  const GraphInput* cs[] = {&g, &g};
  const std::vector<int>* ss[] = {&s, &s};
  ad::Tape t;
  const Matrix out = baseline_forward(gcn, bind(t, gcn.group), cnn, bind(t, cnn.group), p, bind(t, p.group), cs, ss).value();
  ASSERT_EQ(out.rows(), 2);
  ASSERT_EQ(out.cols(), 1);
  EXPECT_EQ(out(0, 0), out(1, 0));
  const std::vector<int>* one[] = {&s};
  ad::Tape u;
  EXPECT_THROW(baseline_forward(gcn, bind(u, gcn.group), cnn, bind(u, cnn.group), p, bind(u, p.group), cs, one), Error);
}

TEST(GradCheck, Encoders) {
  Rng rng(12);
  for (int point = 0; point < 20; ++point) {
    auto gcn = make_gcn("g", small_gcn(), rng);
    auto cnn = make_cnn("s", small_cnn(), rng);
    // Nonzero biases keep relu inputs away from exact kinks.
    for (auto* group : {&gcn.group, &cnn.group}) {
      for (auto& prm : group->params) {
        if (prm.name.ends_with("bias")) prm.value = Matrix::Random(prm.value.rows(), prm.value.cols()) * 0.1;
      }
    }
    const auto g = graph_input(chemio::parse_smiles("CC(=O)Nc1ccccc1"));
    const auto s = codes_with("MKVWACDE", static_cast<std::size_t>(point % 10), 20);
    const GraphInput* gi[] = {&g};
    const std::vector<int>* si[] = {&s};
    const Matrix head = Matrix::Random(1, 4);
    auto gp = gcn.group.pointers();
    EXPECT_LT(ad::grad_check([&](ad::Tape& t) { return ad::dot(gcn_encode(gcn, bind(t, gcn.group), gi), t.constant(head)); },
                             gp),
              1e-4);
    auto cp = cnn.group.pointers();
    EXPECT_LT(ad::grad_check([&](ad::Tape& t) { return ad::dot(cnn_encode(cnn, bind(t, cnn.group), si), t.constant(head)); },
                             cp),
              1e-4);
  }
}
