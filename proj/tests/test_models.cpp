#include <gtest/gtest.h>

#include <cstring>
#include <numeric>
#include <set>

#include "fixtures.hpp"
#include "rtkd/errors.hpp"
#include "rtkd/models.hpp"

namespace rtkd {
namespace {

using testing::random_sample;
using testing::small_config;

template <typename S>
bool bit_equal(const Tensor<S>& a, const Tensor<S>& b) {
  return a.shape() == b.shape() && std::memcmp(a.values().data(), b.values().data(), sizeof(S) * a.numel()) == 0;
}

template <typename S>
bool same_head(const HeadOutput<S>& a, const HeadOutput<S>& b) {
  return bit_equal(a.score, b.score) && bit_equal(a.offset, b.offset) && bit_equal(a.size, b.size) &&
         a.peak == b.peak && a.bbox == b.bbox;
}

TEST(Models, TeacherStructure) {
  const ModelConfig cfg;
  const TeacherModel<float> t(cfg, 1);
  EXPECT_EQ(t.mmmp_rgb.size() + t.mmmp_tir.size(), std::size_t(2 * (cfg.layers + 1)));
  EXPECT_EQ(t.layers.size(), std::size_t(cfg.layers));
  Rng rng(2);
  const auto out = t.forward(random_sample(cfg, rng));
  ASSERT_EQ(out.features.size(), std::size_t(cfg.layers));
  for (const auto& f : out.features) {
    EXPECT_EQ(f.rgb.shape(), (Shape{cfg.tokens(), cfg.dim}));
    EXPECT_EQ(f.tir.shape(), (Shape{cfg.tokens(), cfg.dim}));
  }
  EXPECT_EQ(out.prompts.size(), std::size_t(cfg.layers + 1));
  EXPECT_EQ(out.head.score.shape(), (Shape{8, 8}));
}

TEST(Models, ParameterNamesAndGroups) {
  const ModelConfig cfg;
  const TeacherModel<float> t(cfg, 1);
  const StudentModel<float> s(cfg, 1);
  std::set<std::string> names;
  for (const auto& p : t.parameters().entries()) {
    EXPECT_TRUE(names.insert(p.name).second) << p.name;
    EXPECT_NO_THROW(parameter_group(p.name)) << p.name;
  }
  EXPECT_TRUE(t.parameters().contains("teacher/layer3/mmmp_rgb/g_s2/weight"));
  EXPECT_TRUE(t.parameters().contains("teacher/layer0/mmmp_tir/g_t/bias"));
  EXPECT_EQ(parameter_group("teacher/layer2/attn/q/weight"), ParamGroup::kBackbone);
  EXPECT_EQ(parameter_group("teacher/embed/pos_search"), ParamGroup::kBackbone);
  EXPECT_EQ(parameter_group("teacher/layer2/mmmp_tir/g_s1/bias"), ParamGroup::kOther);
  EXPECT_EQ(parameter_group("student/head/score/conv1/weight"), ParamGroup::kOther);
  EXPECT_EQ(parameter_group("student/dr/weight"), ParamGroup::kOther);
  EXPECT_THROW(parameter_group("student/mystery/weight"), ValidationError);
  for (const auto& p : s.parameters().entries()) {
    EXPECT_EQ(p.name.rfind("student/", 0), 0u);
    EXPECT_EQ(p.name.find("mmmp"), std::string::npos);
  }
  // The student has the teacher's layout minus the prompters.
  Index prompter_elements = 0;
  for (const auto& p : t.parameters().entries()) {
    if (p.name.find("mmmp") != std::string::npos) prompter_elements += p.tensor.numel();
  }
  EXPECT_EQ(t.parameters().total_elements() - prompter_elements, s.parameters().total_elements());
}

TEST(Models, InitializationFollowsNames) {
  const TeacherModel<double> t(ModelConfig{}, 3);
  for (const auto& p : t.parameters().entries()) {
    const auto& v = p.tensor.values();
    const std::string& n = p.name;
    if (n.find("/g_s2/") != std::string::npos || n.ends_with("/g_t/weight")) {
      EXPECT_TRUE((v == 0.0).all()) << n;
    } else if (n.ends_with("/g_t/bias") || n.ends_with("/gamma")) {
      EXPECT_TRUE((v == 1.0).all()) << n;
    } else if (n.ends_with("/beta") || (n.ends_with("/bias") && n != "teacher/head/score/conv3/bias")) {
      EXPECT_TRUE((v == 0.0).all()) << n;
    } else if (n == "teacher/head/score/conv3/bias") {
      EXPECT_NEAR(1.0 / (1.0 + std::exp(-v[0])), 0.1, 1e-12);
    } else {
      EXPECT_LE(v.abs().maxCoeff(), 0.04 + 1e-12) << n;
      EXPECT_GT(v.abs().maxCoeff(), 0.0) << n;
    }
  }
}

TEST(Models, SameSeedSameParameters) {
  const StudentModel<float> a(ModelConfig{}, 9);
  const StudentModel<float> b(ModelConfig{}, 9);
  const StudentModel<float> c(ModelConfig{}, 10);
  bool differs = false;
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    EXPECT_TRUE(bit_equal(a.parameters().entries()[i].tensor, b.parameters().entries()[i].tensor));
    differs |= !bit_equal(a.parameters().entries()[i].tensor, c.parameters().entries()[i].tensor);
  }
  EXPECT_TRUE(differs);
}

TEST(Models, ZeroInitTeacherMatchesDecoupledReferenceExactly) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ModelConfig cfg;
    const TeacherModel<float> t(cfg, seed);
    Rng rng(100 + seed);
    const SampleImages s = random_sample(cfg, rng);
    const auto out = t.forward(s);
    for (const auto& p : out.prompts) {
      EXPECT_TRUE((p.rgb.values() == 0.0f).all());
      EXPECT_TRUE((p.tir.values() == 0.0f).all());
    }
    EXPECT_TRUE(same_head(out.head, decoupled_reference_forward(t, s)));
  }
}

TEST(Models, ZeroInitHoldsForEveryAblation) {
  const ModelConfig base;
  for (int variant = 0; variant < 3; ++variant) {
    ModelConfig cfg = base;
    cfg.prompter.spatial = variant != 0;
    cfg.prompter.token = variant != 1;
    cfg.prompter.history = variant != 2;
    const TeacherModel<float> t(cfg, 4);
    Rng rng(5);
    const SampleImages s = random_sample(cfg, rng);
    EXPECT_TRUE(same_head(t.forward(s).head, decoupled_reference_forward(t, s))) << "variant " << variant;
  }
}

TEST(Models, TrainedPromptersChangeTheOutput) {
  const ModelConfig cfg;
  TeacherModel<float> t(cfg, 6);
  Rng rng(7);
  const SampleImages s = random_sample(cfg, rng);
  const auto before = t.forward(s).head;
  t.mmmp_rgb[1].g_s2.weight.mutable_values().setConstant(0.05f);
  const auto after = t.forward(s);
  EXPECT_FALSE(bit_equal(before.score, after.head.score));
  EXPECT_FALSE((after.prompts[1].rgb.values() == 0.0f).all());
}

TEST(Models, EncoderWeightsAreSharedAcrossStreams) {
  const ModelConfig cfg;
  TeacherModel<float> t(cfg, 8);
  Rng rng(9);
  const SampleImages s = random_sample(cfg, rng);
  const auto before = t.forward(s);
  t.layers[0].fc1.weight.mutable_values()[0] += 0.5f;
  const auto after = t.forward(s);
  EXPECT_FALSE(bit_equal(before.features[0].rgb, after.features[0].rgb));
  EXPECT_FALSE(bit_equal(before.features[0].tir, after.features[0].tir));
}

TEST(Models, ModalitySwapSymmetry) {
  const ModelConfig cfg = small_config();
  TeacherModel<double> a(cfg, 10);
  TeacherModel<double> b(cfg, 10);
  Rng prng(11);
  testing::randomize(a.parameters(), prng, 0.2);
  b.parameters().copy_values_from(a.parameters());
  // b is a with the modality roles exchanged.
  b.embed.modality_rgb.mutable_values() = a.embed.modality_tir.values();
  b.embed.modality_tir.mutable_values() = a.embed.modality_rgb.values();
  for (std::size_t l = 0; l < a.mmmp_rgb.size(); ++l) {
    for (Index k = 0; k < 2; ++k) {
      const auto& src = k == 0 ? a.mmmp_rgb[l] : a.mmmp_tir[l];
      auto& dst = k == 0 ? b.mmmp_tir[l] : b.mmmp_rgb[l];
      dst.g_s1.weight.mutable_values() = src.g_s1.weight.values();
      dst.g_s1.bias.mutable_values() = src.g_s1.bias.values();
      dst.g_s2.weight.mutable_values() = src.g_s2.weight.values();
      dst.g_s2.bias.mutable_values() = src.g_s2.bias.values();
      dst.g_t_weight.mutable_values() = src.g_t_weight.values();
      dst.g_t_bias.mutable_values() = src.g_t_bias.values();
    }
  }
  const Index d = cfg.dim;
  b.dr.weight.mutable_matrix().topRows(d) = a.dr.weight.matrix().bottomRows(d);
  b.dr.weight.mutable_matrix().bottomRows(d) = a.dr.weight.matrix().topRows(d);

  Rng rng(12);
  const SampleImages s = random_sample(cfg, rng);
  SampleImages swapped = s;
  std::swap(swapped.template_rgb, swapped.template_tir);
  std::swap(swapped.search_rgb, swapped.search_tir);
  const auto oa = a.forward(s);
  const auto ob = b.forward(swapped);
  for (Index l = 0; l < cfg.layers; ++l) {
    EXPECT_TRUE(bit_equal(oa.features[l].rgb, ob.features[l].tir));
    EXPECT_TRUE(bit_equal(oa.features[l].tir, ob.features[l].rgb));
  }
  for (Index i = 0; i < oa.head.score.numel(); ++i) EXPECT_NEAR(oa.head.score[i], ob.head.score[i], 1e-12);
  EXPECT_EQ(oa.head.peak, ob.head.peak);
  EXPECT_NEAR(oa.head.bbox.x, ob.head.bbox.x, 1e-9);
  EXPECT_NEAR(oa.head.bbox.w, ob.head.bbox.w, 1e-9);
}

TEST(Models, StudentFeaturesSpanBothModalities) {
  const ModelConfig cfg;
  const StudentModel<float> s(cfg, 13);
  Rng rng(14);
  const auto out = s.forward(random_sample(cfg, rng));
  ASSERT_EQ(out.features.size(), std::size_t(cfg.layers));
  for (const auto& f : out.features) EXPECT_EQ(f.shape(), (Shape{2 * cfg.tokens(), cfg.dim}));
  EXPECT_EQ(out.head.score.shape(), (Shape{cfg.search_grid(), cfg.search_grid()}));
}

TEST(Models, StudentSegmentsAgreeForIdenticalModalities) {
  const ModelConfig cfg;
  StudentModel<double> s(cfg, 15);
  Rng prng(16);
  testing::randomize(s.parameters(), prng, 0.1);
  s.embed.modality_rgb.mutable_values().setZero();
  s.embed.modality_tir.mutable_values().setZero();
  Rng rng(17);
  SampleImages in = random_sample(cfg, rng);
  in.template_tir = in.template_rgb;
  in.search_tir = in.search_rgb;
  const auto out = s.forward(in);
  const Index n = cfg.tokens();
  for (const auto& f : out.features) {
    for (Index i = 0; i < n; ++i) {
      for (Index c = 0; c < cfg.dim; ++c) EXPECT_NEAR(f.matrix()(i, c), f.matrix()(n + i, c), 1e-12);
    }
  }
}

// Moves patch blocks of the search image: token j of the result is token
// perm[j] of the input.
ImagePlane permute_patches(const ImagePlane& img, const std::vector<Index>& perm, Index patch) {
  ImagePlane out = img;
  const Index g = img.width / patch;
  for (Index j = 0; j < Index(perm.size()); ++j) {
    const Index src = perm[j];
    for (Index dy = 0; dy < patch; ++dy) {
      for (Index dx = 0; dx < patch; ++dx) {
        for (Index c = 0; c < img.channels; ++c) {
          out.at((j / g) * patch + dy, (j % g) * patch + dx, c) =
              img.at((src / g) * patch + dy, (src % g) * patch + dx, c);
        }
      }
    }
  }
  return out;
}

TEST(Models, SearchTokenPermutationIsEquivariant) {
  const ModelConfig cfg;
  StudentModel<double> a(cfg, 18);
  StudentModel<double> b(cfg, 18);
  Rng prng(19);
  testing::randomize(a.parameters(), prng, 0.1);
  b.parameters().copy_values_from(a.parameters());
  const Index nx = cfg.search_tokens();
  std::vector<Index> perm(static_cast<std::size_t>(nx));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(20);
  for (Index i = nx - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(static_cast<std::uint64_t>(i + 1))]);
  for (Index j = 0; j < nx; ++j) b.embed.pos_search.mutable_matrix().row(j) = a.embed.pos_search.matrix().row(perm[j]);

  const SampleImages s = random_sample(cfg, rng);
  SampleImages ps = s;
  ps.search_rgb = permute_patches(s.search_rgb, perm, cfg.patch);
  ps.search_tir = permute_patches(s.search_tir, perm, cfg.patch);
  const auto oa = a.forward(s);
  const auto ob = b.forward(ps);
  const Index n = cfg.tokens();
  const Index nz = cfg.template_tokens();
  for (Index l = 0; l < cfg.layers; ++l) {
    const auto fa = oa.features[l].matrix();
    const auto fb = ob.features[l].matrix();
    for (Index seg : {Index(0), n}) {
      for (Index i = 0; i < nz; ++i) EXPECT_NEAR((fa.row(seg + i) - fb.row(seg + i)).cwiseAbs().maxCoeff(), 0.0, 1e-10);
      for (Index j = 0; j < nx; ++j) {
        EXPECT_NEAR((fb.row(seg + nz + j) - fa.row(seg + nz + perm[j])).cwiseAbs().maxCoeff(), 0.0, 1e-10);
      }
    }
  }
}

TEST(Models, FostForwardEqualsStudentForward) {
  const ModelConfig cfg;
  const StudentModel<float> s(cfg, 21);
  Rng rng(22);
  const SampleImages in = random_sample(cfg, rng);
  EXPECT_TRUE(same_head(s.forward(in).head, fost_forward(s, in).head));
}

TEST(Models, OutputsStayInRange) {
  const ModelConfig cfg;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    StudentModel<float> s(cfg, seed);
    Rng prng(seed + 50);
    testing::randomize(s.parameters(), prng, 0.5);
    Rng rng(seed + 60);
    const auto out = s.forward(random_sample(cfg, rng)).head;
    EXPECT_TRUE((out.score.values() >= 0.0f).all() && (out.score.values() <= 1.0f).all());
    const BBox& b = out.bbox;
    EXPECT_GE(b.x, 0.0);
    EXPECT_GE(b.y, 0.0);
    EXPECT_LE(b.x + b.w, double(cfg.search_size) + 1e-9);
    EXPECT_LE(b.y + b.h, double(cfg.search_size) + 1e-9);
  }
}

TEST(Models, ResponseMapsShareShape) {
  const ModelConfig cfg = small_config();
  const TeacherModel<float> t(cfg, 1);
  const StudentModel<float> s(cfg, 1);
  Rng rng(2);
  const SampleImages in = random_sample(cfg, rng);
  EXPECT_EQ(t.forward(in).head.score.shape(), s.forward(in).head.score.shape());
}

TEST(Models, WrongInputSizeIsDimensionError) {
  const ModelConfig cfg;
  const TeacherModel<float> t(cfg, 1);
  Rng rng(2);
  SampleImages in = random_sample(cfg, rng);
  in.search_tir = ImagePlane(16, 16, 3);
  EXPECT_THROW(t.forward(in), DimensionError);
}

TEST(Models, ModelKindNames) {
  EXPECT_EQ(parse_model_kind("fost"), ModelKind::kFost);
  EXPECT_EQ(parameter_prefix(ModelKind::kFost), parameter_prefix(ModelKind::kStudent));
  EXPECT_THROW(parse_model_kind("teacherish"), UsageError);
}

TEST(Head, DecodeArithmetic) {
  const ModelConfig cfg;  // G = 8, P = 4, search 32
  const Index g = 8;
  Buffer<float> offset = Buffer<float>::Constant(g * g * 2, 0.5f);
  Buffer<float> size = Buffer<float>::Constant(g * g * 2, 0.25f);
  const BBox b = decode_box(2 * g + 3, offset, size, cfg);
  EXPECT_DOUBLE_EQ(b.cx(), 14.0);
  EXPECT_DOUBLE_EQ(b.cy(), 10.0);
  EXPECT_DOUBLE_EQ(b.w, 8.0);
  EXPECT_DOUBLE_EQ(b.h, 8.0);
}

TEST(Head, DecodeClipsToSearchFrame) {
  const ModelConfig cfg;
  Buffer<float> offset = Buffer<float>::Constant(128, 0.9f);
  Buffer<float> size = Buffer<float>::Constant(128, 0.5f);
  const BBox b = decode_box(63, offset, size, cfg);
  EXPECT_LE(b.x + b.w, 32.0);
  EXPECT_LE(b.y + b.h, 32.0);
  EXPECT_GT(b.w, 0.0);
}

TEST(Head, ArgmaxTiesGoToLowestIndex) {
  Buffer<float> v(6);
  v << 0.1f, 0.7f, 0.3f, 0.7f, 0.2f, 0.7f;
  EXPECT_EQ(argmax_lowest(v), 1);
  EXPECT_EQ(argmax_lowest(Buffer<double>(Buffer<double>::Constant(64, 0.3))), 0);
}

}  // namespace
}  // namespace rtkd
