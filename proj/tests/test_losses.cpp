#include <gtest/gtest.h>

#include <cmath>

#include "finite_difference.hpp"
#include "model_gradients.hpp"
#include "rtkd/errors.hpp"
#include "rtkd/losses.hpp"

namespace rtkd {
namespace {

using testing::random_tensor;

Tensor<double> box_tensor(const BBox& b, bool grad = true) {
  return Tensor<double>::from_values({1, 4}, {b.x, b.y, b.w, b.h}, grad);
}

TEST(Losses, GiouExamples) {
  const BBox unit{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(1.0 - giou(unit, unit), 0.0);
  EXPECT_DOUBLE_EQ(1.0 - giou(unit, BBox{1, 1, 1, 1}), 1.5);
  EXPECT_DOUBLE_EQ(1.0 - giou(BBox{0, 0, 2, 1}, BBox{0, 0, 2, 2}), 0.5);
  EXPECT_DOUBLE_EQ(giou_loss(box_tensor(unit), BBox{1, 1, 1, 1}).item(), 1.5);
  EXPECT_DOUBLE_EQ(giou_loss(box_tensor(BBox{0, 0, 2, 1}), BBox{0, 0, 2, 2}).item(), 0.5);
}

// Oracle: area arithmetic on explicit corner coordinates.
double giou_oracle(const BBox& a, const BBox& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  const double cw = std::max(a.x + a.w, b.x + b.w) - std::min(a.x, b.x);
  const double ch = std::max(a.y + a.h, b.y + b.h) - std::min(a.y, b.y);
  return inter / uni - (cw * ch - uni) / (cw * ch);
}

TEST(Losses, GiouPropertiesOnRandomBoxes) {
  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    const BBox a{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.1, 3), rng.uniform(0.1, 3)};
    const BBox b{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(0.1, 3), rng.uniform(0.1, 3)};
    const double la = giou_loss(box_tensor(a), b).item();
    EXPECT_NEAR(la, 1.0 - giou_oracle(a, b), 1e-12);
    EXPECT_NEAR(la, giou_loss(box_tensor(b), a).item(), 1e-12);
    EXPECT_LT(la, 2.0);
    EXPECT_GE(la, 0.0);
    const bool disjoint = giou_oracle(a, b) < 0.0;
    if (la > 1.0) {
      EXPECT_TRUE(disjoint);
    }
    EXPECT_NEAR(giou_loss(box_tensor(a), a).item(), 0.0, 1e-12);
  }
}

TEST(Losses, DegenerateGroundTruthIsDomainError) {
  EXPECT_THROW(giou_loss(box_tensor(BBox{0, 0, 1, 1}), BBox{0, 0, 0, 1}), DomainError);
}

TEST(Losses, BoxLossGradients) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const BBox gt{rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0.2, 1), rng.uniform(0.2, 1)};
    auto pred = box_tensor(BBox{rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0.2, 1), rng.uniform(0.2, 1)});
    worst = std::max(worst, testing::directional_check([&] { return giou_loss(pred, gt); }, {pred}, rng, 1e-6).rel_error);
    worst = std::max(worst,
                     testing::directional_check([&] { return l1_box_loss(pred, gt); }, {pred}, rng, 1e-6).rel_error);
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(Losses, L1IsMeanAbsoluteError) {
  const auto l = l1_box_loss(box_tensor(BBox{0.1, 0.2, 0.3, 0.4}), BBox{0.2, 0.2, 0.1, 0.8});
  EXPECT_NEAR(l.item(), (0.1 + 0.0 + 0.2 + 0.4) / 4.0, 1e-15);
}

TEST(Losses, HeatmapShape) {
  const BBox gt = BBox::from_center(14, 10, 8, 8);  // centre cell (2, 3)
  const auto heat = build_gt_heatmap<double>(gt, 8, 4);
  ASSERT_EQ(heat.size(), 64);
  EXPECT_EQ(heat[2 * 8 + 3], 1.0);
  EXPECT_EQ((heat == 1.0).count(), 1);
  EXPECT_TRUE((heat >= 0.0).all() && (heat <= 1.0).all());
  EXPECT_LT(heat[7 * 8 + 7], 1e-4);
  // symmetric about the centre cell
  EXPECT_DOUBLE_EQ(heat[1 * 8 + 3], heat[3 * 8 + 3]);
  EXPECT_DOUBLE_EQ(heat[2 * 8 + 2], heat[2 * 8 + 4]);
  EXPECT_DOUBLE_EQ(heat[1 * 8 + 2], heat[3 * 8 + 4]);
  EXPECT_THROW(build_gt_heatmap<double>(BBox::from_center(40, 10, 4, 4), 8, 4), DomainError);
}

TEST(Losses, FocalUniformHalfOracle) {
  auto score = Tensor<double>::from_values({2, 2}, {0.5, 0.5, 0.5, 0.5});
  Buffer<double> heat(4);
  heat << 1.0, 0.0, 0.0, 0.0;
  const double pos = -std::pow(0.5, 2) * std::log(0.5);
  const double neg = -std::pow(1.0, 4) * std::pow(0.5, 2) * std::log(0.5);
  EXPECT_NEAR(focal_loss_gt(score, heat).item(), pos + 3 * neg, 1e-12);
}

TEST(Losses, FocalPerfectPredictionVanishes) {
  Buffer<double> heat = Buffer<double>::Zero(9);
  heat[4] = 1.0;
  Buffer<double> p = Buffer<double>::Constant(9, 1e-9);
  p[4] = 1.0 - 1e-9;
  EXPECT_LT(focal_loss_gt(Tensor<double>({3, 3}, p), heat).item(), 1e-12);
}

TEST(Losses, FocalGradient) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    Buffer<double> p(16);
    for (Index i = 0; i < 16; ++i) p[i] = rng.uniform(0.05, 0.95);
    auto score = Tensor<double>({4, 4}, p, true);
    const auto heat = build_gt_heatmap<double>(BBox::from_center(rng.uniform(1, 15), rng.uniform(1, 15), 6, 6), 4, 4);
    worst = std::max(worst, testing::directional_check([&] { return focal_loss_gt(score, heat); }, {score}, rng, 1e-6)
                                .rel_error);
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(Losses, ResponseKdExamples) {
  Rng rng(2);
  Buffer<double> r(16);
  for (Index i = 0; i < 16; ++i) r[i] = rng.uniform(0.01, 0.99);
  const Tensor<double> rt({4, 4}, r);
  EXPECT_EQ(response_kd_loss(rt, Tensor<double>({4, 4}, r), 2.0).item(), 0.0);

  // One cell, tau 1: t = 0.4, p = 0.1.
  const double t = 0.4;
  const double p = 0.1;
  const double expected = std::pow(t - p, 2) * (-t * std::log(p) - (1 - t) * std::log(1 - p));
  const auto one = response_kd_loss(Tensor<double>::from_values({1, 1}, {0.4}),
                                    Tensor<double>::from_values({1, 1}, {0.1}), 1.0);
  EXPECT_NEAR(one.item(), expected, 1e-12);
  // Same tempered values through tau = 2.
  const auto tempered = response_kd_loss(Tensor<double>::from_values({1, 1}, {0.8}),
                                         Tensor<double>::from_values({1, 1}, {0.2}), 2.0);
  EXPECT_NEAR(tempered.item(), expected, 1e-12);
}

TEST(Losses, ResponseKdGradientVanishesAtTeacher) {
  auto rs = Tensor<double>::from_values({1, 2}, {0.3, 0.6}, true);
  const auto rt = Tensor<double>::from_values({1, 2}, {0.3, 0.6});
  response_kd_loss(rt, rs, 2.0).backward();
  EXPECT_EQ(rs.grad().abs().maxCoeff(), 0.0);
  // Near the teacher the gradient shrinks linearly with the gap.
  auto near = [](double gap) {
    auto s = Tensor<double>::from_values({1, 1}, {0.3}, true);
    response_kd_loss(Tensor<double>::from_values({1, 1}, {0.3 + gap}), s, 2.0).backward();
    return s.grad()[0];
  };
  EXPECT_NEAR(near(1e-4) / near(1e-5), 10.0, 1e-2);
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    Buffer<double> a(9), b(9);
    for (Index i = 0; i < 9; ++i) {
      a[i] = rng.uniform(0.05, 0.95);
      b[i] = rng.uniform(0.05, 0.95);
    }
    auto s = Tensor<double>({3, 3}, a, true);
    const Tensor<double> t({3, 3}, b);
    worst = std::max(worst,
                     testing::directional_check([&] { return response_kd_loss(t, s, 2.0); }, {s}, rng, 1e-6).rel_error);
    EXPECT_GE(response_kd_loss(t, s, 2.0).item(), 0.0);
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(Losses, FeatureKdLayerSelection) {
  EXPECT_EQ(select_feature_layers(4, FeatureLayers::kEven), (std::vector<Index>{2, 4}));
  EXPECT_EQ(select_feature_layers(12, FeatureLayers::kEven).size(), 6u);
  EXPECT_EQ(select_feature_layers(4, FeatureLayers::kFirst), (std::vector<Index>{1, 2}));
  EXPECT_EQ(select_feature_layers(4, FeatureLayers::kLast), (std::vector<Index>{3, 4}));
  EXPECT_EQ(select_feature_layers(4, FeatureLayers::kAll), (std::vector<Index>{1, 2, 3, 4}));
}

TEST(Losses, FeatureKdClosedForms) {
  Rng rng(3);
  std::vector<LayerPair<double>> teacher;
  std::vector<Tensor<double>> student;
  for (int l = 0; l < 4; ++l) {
    auto rgb = random_tensor({5, 3}, rng, 1.0, false);
    auto tir = random_tensor({5, 3}, rng, 1.0, false);
    teacher.push_back({rgb, tir});
    student.push_back(concat<double>({rgb, tir}, 0));
  }
  EXPECT_EQ(feature_kd_loss(teacher, student).item(), 0.0);

  // Layer 2 (compared) shifted by c contributes c^2; layer 3 (skipped) is ignored.
  const double c = 0.3;
  student[1] = add_scalar(student[1], c);
  student[2] = add_scalar(student[2], 5.0);
  EXPECT_NEAR(feature_kd_loss(teacher, student).item(), c * c, 1e-12);
  FeatureKdOptions linear;
  linear.weighting = FeatureWeighting::kLinear;  // weights 2, 4 on layers 2, 4
  EXPECT_NEAR(feature_kd_loss(teacher, student, linear).item(), 2.0 * c * c, 1e-12);
  student.pop_back();
  EXPECT_THROW(feature_kd_loss(teacher, student), DimensionError);
}

TEST(Losses, TotalsWithUnitComponents) {
  LossTerms<double> unit;
  for (Tensor<double>* t : {&unit.focal, &unit.giou, &unit.l1, &unit.rm, &unit.mf}) {
    *t = Tensor<double>::from_values({1}, {1.0});
  }
  EXPECT_EQ(teacher_total(unit, LossWeights{}).item(), 8.0);
  EXPECT_EQ(student_total(unit, LossWeights{}).item(), 8.735);
  LossTerms<float> unit_f;
  for (Tensor<float>* t : {&unit_f.focal, &unit_f.giou, &unit_f.l1, &unit_f.rm, &unit_f.mf}) {
    *t = Tensor<float>::from_values({1}, {1.0f});
  }
  EXPECT_EQ(teacher_total(unit_f, LossWeights{}).item(), 8.0f);
  EXPECT_EQ(student_total(unit_f, LossWeights{}).item(), 8.735f);

  LossTerms<double> zero;
  for (Tensor<double>* t : {&zero.focal, &zero.giou, &zero.l1}) *t = Tensor<double>::from_values({1}, {0.0});
  EXPECT_EQ(teacher_total(zero, LossWeights{}).item(), 0.0);
  LossWeights no_kd;
  no_kd.rm = 0.0;
  no_kd.mf = 0.0;
  EXPECT_EQ(student_total(unit, no_kd).item(), teacher_total(unit, LossWeights{}).item());
}

TEST(Losses, WeightValidation) {
  LossWeights w;
  w.tau = 0.0;
  EXPECT_THROW(w.validate(), ValidationError);
  w = LossWeights{};
  w.l1 = -1.0;
  EXPECT_THROW(w.validate(), ValidationError);
}

TEST(Losses, TeacherObjectiveGradient) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) worst = std::max(worst, testing::teacher_loss_check(seed).rel_error);
  EXPECT_LT(worst, 2e-3);
}

TEST(Losses, StudentObjectiveGradient) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) worst = std::max(worst, testing::student_loss_check(seed).rel_error);
  EXPECT_LT(worst, 2e-3);
}

TEST(Losses, TeacherReceivesNoGradientFromDistillation) {
  const ModelConfig cfg = testing::small_config();
  TeacherModel<double> teacher(cfg, 1);
  StudentModel<double> student(cfg, 2);
  Rng rng(3);
  testing::randomize(teacher.parameters(), rng);
  teacher.parameters().set_requires_grad(false);
  const SampleImages in = testing::random_sample(cfg, rng);
  const auto t = teacher.forward(in);
  const auto s = student.forward(in);
  LossTerms<double> terms = ground_truth_losses(s.head, testing::random_search_box(cfg, rng), cfg);
  terms.rm = response_kd_loss(t.head.score, s.head.score, 2.0);
  terms.mf = feature_kd_loss(t.features, s.features);
  student_total(terms, LossWeights{}).backward();
  for (const auto& p : teacher.parameters().entries()) {
    EXPECT_TRUE(!p.tensor.has_grad() || (p.tensor.grad() == 0.0).all()) << p.name;
  }
  bool student_moved = false;
  for (const auto& p : student.parameters().entries()) student_moved |= p.tensor.has_grad() && (p.tensor.grad() != 0.0).any();
  EXPECT_TRUE(student_moved);
}

}  // namespace
}  // namespace rtkd
