#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include <json.hpp>

#include "latentce/counterfactual.hpp"
#include "latentce/error.hpp"
#include "latentce/synthcorpus.hpp"
#include "test_support.hpp"

namespace latentce {
namespace {

using nlohmann::json;
using testing::TempDir;

double max_diff(const Image& a, const Image& b) {
  double w = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) w = std::max(w, static_cast<double>(std::abs(a.pixels[i] - b.pixels[i])));
  return w;
}

Calibration linear_cal() {
  // s(d) = 1.5 + 0.5 d on d in [-3, 3].
  return fit_calibration({-3.0, -3.0, 3.0, 3.0, 0.0}, {0, 0, 3, 3, 1}, CalibrationMode::MeansOfExtremes);
}

TEST(Reflect, MirrorsAcrossPlane) {
  const Hyperplane h{{0.0, 2.0}, -2.0};  // y = 1
  const Vector r = reflect({3.0, 4.0}, h);
  EXPECT_NEAR(r[0], 3.0, 1e-12);
  EXPECT_NEAR(r[1], -2.0, 1e-12);
}

TEST(Reflect, NegatesDistanceAndIsAnInvolution) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int k = 0; k < 50; ++k) {
    const Hyperplane h{{u(rng), u(rng), u(rng), u(rng)}, u(rng)};
    const Vector w = {u(rng), u(rng), u(rng), u(rng)};
    const Vector r = reflect(w, h);
    EXPECT_NEAR(signed_distance(r, h), -signed_distance(w, h), 1e-12);
    const Vector back = reflect(r, h);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(back[i], w[i], 1e-12);
    // Only the normal component changes.
    const Vector un = unit_normal(h);
    double tangential = 0.0;
    for (int i = 0; i < 4; ++i) tangential += (r[i] - w[i]) * un[i];
    double moved = 0.0;
    for (int i = 0; i < 4; ++i) moved += (r[i] - w[i]) * (r[i] - w[i]);
    EXPECT_NEAR(std::abs(tangential), std::sqrt(moved), 1e-12);
  }
}

TEST(ShiftToGrade, HitsTargetScore) {
  const Calibration cal = linear_cal();
  const Hyperplane h{{1.0, 1.0}, 0.5};
  const Vector w = {0.3, -0.8};
  for (double g : {0.0, 0.5, 1.0, 2.0, 3.0}) {
    const Vector s = shift_to_grade(w, h, cal, g);
    EXPECT_NEAR(calibrated_score(cal, signed_distance(s, h)), g, 1e-12) << g;
    EXPECT_NEAR(s[0] - w[0], s[1] - w[1], 1e-12);
  }
  EXPECT_THROW(shift_to_grade(w, h, cal, 3.5), OutOfRangeError);
  const Vector far = shift_to_grade(w, h, cal, 4.5, true);
  EXPECT_NEAR(calibrated_score(cal, signed_distance(far, h)), 4.5, 1e-12);
}

TEST(ShiftByDistance, MovesAlongUnitNormal) {
  const Hyperplane h{{3.0, 4.0}, 1.0};
  const Vector w = {1.0, 1.0};
  const Vector s = shift_by_distance(w, h, 2.0);
  EXPECT_NEAR(s[0], 1.0 + 1.2, 1e-12);
  EXPECT_NEAR(s[1], 1.0 + 1.6, 1e-12);
  EXPECT_NEAR(signed_distance(s, h) - signed_distance(w, h), 2.0, 1e-12);
  EXPECT_THROW(shift_by_distance({1.0}, h, 1.0), ShapeError);
}

TEST(Sweep, FramesAreCollinearAndOrdered) {
  const Calibration cal = linear_cal();
  const Hyperplane h{{0.5, -1.0, 2.0}, 0.1};
  const Vector w = {0.2, 0.4, -0.9};
  const std::vector<double> grades = {0.0, 1.0, 2.0, 3.0};
  const auto frames = sweep(w, h, cal, grades);
  ASSERT_EQ(frames.size(), 4u);
  const Vector un = unit_normal(h);
  double prev = -1e9;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const double d = signed_distance(frames[k], h);
    EXPECT_GT(d, prev);
    prev = d;
    const double step = d - signed_distance(w, h);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(frames[k][i], w[i] + step * un[i], 1e-12);
  }
}

TEST(Sweep, ClampsOutOfRangeGradesUnlessExtrapolating) {
  const Calibration cal = linear_cal();
  const Hyperplane h{{1.0}, 0.0};
  const std::vector<double> grades = {-1.0, 4.0};
  const auto clamped = sweep({0.0}, h, cal, grades);
  EXPECT_NEAR(clamped[0][0], -3.0, 1e-12);
  EXPECT_NEAR(clamped[1][0], 3.0, 1e-12);
  const auto free = sweep({0.0}, h, cal, grades, true);
  EXPECT_NEAR(free[0][0], -5.0, 1e-12);
  EXPECT_NEAR(free[1][0], 5.0, 1e-12);
}

TEST(Requests, Validation) {
  CounterfactualRequest r;
  EXPECT_NO_THROW(validate_request(r, 3.0));
  r.mode = CeMode::TargetGrade;
  EXPECT_THROW(validate_request(r, 3.0), DomainError);
  r.grades = {2.0};
  EXPECT_NO_THROW(validate_request(r, 3.0));
  r.grades = {7.0};
  EXPECT_THROW(validate_request(r, 3.0), DomainError);
  r.allow_extrapolation = true;
  EXPECT_NO_THROW(validate_request(r, 3.0));
  r.mode = CeMode::Sweep;
  EXPECT_THROW(validate_request(r, 3.0), DomainError);
  r.grades = {-1.0, 5.0};
  r.allow_extrapolation = false;
  EXPECT_NO_THROW(validate_request(r, 3.0));
  r.grades = {0.0, NAN};
  EXPECT_THROW(validate_request(r, 3.0), DomainError);
  r.mode = CeMode::Offsets;
  r.offsets = {1.0};
  EXPECT_THROW(validate_request(r, 3.0), DomainError);
  r.offsets = {-1.0, 1.0};
  EXPECT_NO_THROW(validate_request(r, 3.0));
  r.decode_steps = 0;
  EXPECT_THROW(validate_request(r, 3.0), DomainError);
}

TEST(Requests, ModeNames) {
  for (auto m : {CeMode::Reflect, CeMode::TargetGrade, CeMode::Sweep, CeMode::Offsets})
    EXPECT_EQ(parse_ce_mode(ce_mode_name(m)), m);
  EXPECT_THROW(parse_ce_mode("warp"), DomainError);
}

class GenerateTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    std::vector<Image> imgs;
    for (int i = 0; i < 4; ++i) imgs.push_back(quantized(render_sample(mix_seed(2, i), i / 3.0)));
    std::vector<const Image*> ptrs;
    for (const auto& i : imgs) ptrs.push_back(&i);
    TrainConfig cfg;
    cfg.total_steps = 6;
    cfg.batch_size = 4;
    cfg.latent_dim = 4;
    cfg.horizon = 40;
    cfg.seed = 3;
    model_ = new DaeModel(train(ptrs, cfg).model);
    source_ = new Image(imgs[1]);
  }
  static void TearDownTestSuite() {
    delete model_;
    delete source_;
  }

  Probe probe() const {
    Probe p;
    p.plane = Hyperplane{{0.5, -0.25, 0.1, 0.3}, 0.05};
    p.cal = fit_calibration({-1.0, 1.0, 0.0}, {0, 3, 1}, CalibrationMode::MeansOfExtremes);
    return p;
  }
  CounterfactualRequest request(CeMode mode) const {
    CounterfactualRequest r;
    r.mode = mode;
    r.encode_steps = 8;
    r.decode_steps = 5;
    return r;
  }

  static DaeModel* model_;
  static Image* source_;
};
DaeModel* GenerateTest::model_ = nullptr;
Image* GenerateTest::source_ = nullptr;

TEST_F(GenerateTest, ReusesSourceStochasticLatent) {
  CounterfactualRequest req = request(CeMode::Sweep);
  req.grades = {0.0, 1.5, 3.0};
  const CounterfactualResult r = generate_ce(*model_, probe(), *source_, req);
  const Image* src = source_;
  const Encoding enc = encode(*model_, std::span<const Image* const>(&src, 1), 8);
  EXPECT_EQ(r.x_T, enc.x_T);
  ASSERT_EQ(r.frames.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    nn::Tensor z({1, 4});
    for (int i = 0; i < 4; ++i) z[i] = static_cast<float>(r.frames[k].latent[i]);
    EXPECT_LE(max_diff(decode(*model_, z, enc.x_T, 5).front(), r.frames[k].image), 1e-5) << k;
    EXPECT_NEAR(r.frames[k].score, req.grades[k], 1e-9);
  }
  nn::Tensor z({1, 4});
  for (int i = 0; i < 4; ++i) z[i] = static_cast<float>(r.latent[i]);
  EXPECT_LE(max_diff(decode(*model_, z, enc.x_T, 5).front(), r.reconstruction), 1e-5);
}

TEST_F(GenerateTest, ReflectNegatesDistance) {
  const CounterfactualResult r = generate_ce(*model_, probe(), *source_, request(CeMode::Reflect));
  ASSERT_EQ(r.frames.size(), 1u);
  EXPECT_NEAR(r.frames[0].distance, -r.distance, 1e-9);
  EXPECT_EQ(r.frames[0].target, -r.distance);
}

TEST_F(GenerateTest, BatchMatchesSingle) {
  CounterfactualRequest req = request(CeMode::Offsets);
  req.offsets = {-0.5, 0.5};
  const Image other = quantized(render_sample(9, 0.8));
  const std::vector<const Image*> both = {&other, source_};
  const auto batch = generate_ce(*model_, probe(), both, req);
  const auto single = generate_ce(*model_, probe(), *source_, req);
  ASSERT_EQ(batch.size(), 2u);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(batch[1].latent[i], single.latent[i], 1e-5);
  for (std::size_t k = 0; k < 2; ++k) {
    EXPECT_LE(max_diff(batch[1].frames[k].image, single.frames[k].image), 1e-4);
  }
}

TEST_F(GenerateTest, RejectsMismatchedOrUncalibratedProbe) {
  Probe p = probe();
  p.cal.reset();
  EXPECT_THROW(generate_ce(*model_, p, *source_, request(CeMode::Reflect)), ConfigError);
  p = probe();
  p.plane.n.push_back(1.0);
  EXPECT_THROW(generate_ce(*model_, p, *source_, request(CeMode::Reflect)), ConfigError);
  CounterfactualRequest bad = request(CeMode::TargetGrade);
  bad.grades = {9.0};
  EXPECT_THROW(generate_ce(*model_, probe(), *source_, bad), DomainError);
}

TEST_F(GenerateTest, JsonDocumentAndFiles) {
  CounterfactualRequest req = request(CeMode::Sweep);
  req.grades = {0.0, 3.0};
  const CounterfactualResult r = generate_ce(*model_, probe(), *source_, req);
  const json j = json::parse(ce_result_json(r, 42, false));
  for (const char* key : {"id", "mode", "latent_original", "distance_original", "score_original", "grade_original",
                          "distance_edited", "score_edited", "x_T_fnv", "frames"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["id"], 42);
  EXPECT_EQ(j["mode"], "sweep");
  EXPECT_EQ(j["distance_edited"].size(), 2u);
  EXPECT_FALSE(j.contains("reconstruction"));
  EXPECT_TRUE(json::parse(ce_result_json(r, 42, true)).contains("reconstruction"));

  TempDir dir("ce");
  const auto files = write_ce_outputs(r, 42, dir.path());
  std::vector<std::string> names;
  for (const auto& f : files) names.push_back(f.filename().string());
  EXPECT_EQ(names, (std::vector<std::string>{"ce_42.json", "ce_42_recon.pgm", "ce_42_0.pgm", "ce_42_3.pgm"}));
  EXPECT_EQ(read_pgm(dir / "ce_42_3.pgm"), quantized(r.frames[1].image));
}

}  // namespace
}  // namespace latentce
