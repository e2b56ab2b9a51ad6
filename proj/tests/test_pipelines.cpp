#include <gtest/gtest.h>

#include <filesystem>
#include <memory>
#include <thread>

#include "rrto/pipelines.hpp"
#include "tiny_models.hpp"

using namespace rrto;
using namespace rrto::pipelines;
using namespace rrto::testing;

// ---------------------------------------------------------------------------
// FEM verification

TEST(FemVerify, ReproducesStoredStressOfDatasetDesigns) {
  const auto& d = models().data;
  const auto simp = simp_of(*models().geo);
  for (std::size_t j = 0; j < d.train.size(); j += 5) {
    const FemReport r = fem_verify(d.train.X[j], simp);
    for (std::size_t e = 0; e < r.vm.size(); ++e)
      EXPECT_NEAR(r.vm.values[e], d.train.s_2d[j].values[e], 1e-9 * d.train.s_scalar[j]);
    EXPECT_NEAR(r.vm_max, d.train.s_scalar[j], 1e-9 * d.train.s_scalar[j]);
    EXPECT_NEAR(r.compliance, d.train.compliance[j], 1e-9 * d.train.compliance[j]);
    EXPECT_EQ(r.vm_diag, r.vm.diagonal());
  }
}

TEST(FemVerify, RejectsDensitiesOutsideUnitRange) {
  Grid g(8, 8, 0.5);
  g(2, 3) = 1.2;
  EXPECT_THROW(fem_verify(g), ContractError);
  EXPECT_THROW(fem_verify(Grid()), ContractError);
}

// ---------------------------------------------------------------------------
// Latent interpolation

TEST(LatentInterpolate, EndpointsAndSymmetry) {
  Eigen::RowVectorXd a(2), b(2);
  a << 0.3, -1.7;
  b << 2.9, 0.1;
  EXPECT_EQ(latent_interpolate(a, b, 0.0), a);
  EXPECT_EQ(latent_interpolate(a, b, 1.0), b);
  EXPECT_EQ(latent_interpolate(a, a, 0.5), a);
  const Eigen::RowVectorXd m = latent_interpolate(a, b, 0.25);
  EXPECT_NEAR(m(0), 0.3 + 0.25 * 2.6, 1e-15);
  EXPECT_NEAR(m(1), -1.7 + 0.25 * 1.8, 1e-15);
}

TEST(LatentInterpolate, RejectsExtrapolation) {
  const Eigen::RowVectorXd a = Eigen::RowVectorXd::Zero(2), b = Eigen::RowVectorXd::Ones(2);
  EXPECT_THROW(latent_interpolate(a, b, -1e-9), ContractError);
  EXPECT_THROW(latent_interpolate(a, b, 1.0 + 1e-9), ContractError);
  EXPECT_THROW(latent_interpolate(a, b, std::nan("")), ContractError);
  EXPECT_THROW(latent_interpolate(a, Eigen::RowVectorXd::Ones(3), 0.5), ContractError);
}

// ---------------------------------------------------------------------------
// Pipelines

TEST(Pipeline, DirectOutputShapes) {
  const Tensor x = geometries("test");
  EXPECT_EQ(make(Qoi::scalar).geo2sol(x).shape, (nn::Shape{4, 1}));
  EXPECT_EQ(make(Qoi::d1).geo2sol(x).shape, (nn::Shape{4, 16}));
  EXPECT_EQ(make(Qoi::d2).geo2sol(x).shape, (nn::Shape{4, 1, 16, 16}));
  for (Qoi q : {Qoi::scalar, Qoi::d1, Qoi::d2}) {
    const Tensor s = make(q).geo2sol(x);
    EXPECT_TRUE(std::all_of(s.data.begin(), s.data.end(), [](double v) { return std::isfinite(v); }));
  }
}

TEST(Pipeline, DirectIsStepwiseComposition) {
  const Pipeline p = make(Qoi::d1);
  const Tensor x = geometries("train");
  const RowMat alpha = models().geo->encode_project(x);
  const Tensor by_hand = models().sol1d->decode(p.direct_map()->predict(alpha));
  EXPECT_EQ(p.geo2sol(x), by_hand);
}

TEST(Pipeline, InverseGeometriesAreClampedToUnitRange) {
  for (Qoi q : {Qoi::scalar, Qoi::d1, Qoi::d2}) {
    const Pipeline p = make(q);
    const InverseResult r = p.sol2geo(qoi_data(models().data, q, "train"));
    EXPECT_EQ(r.x.shape, (nn::Shape{12, 1, 16, 16}));
    EXPECT_TRUE(std::all_of(r.x.data.begin(), r.x.data.end(), [](double v) { return v >= 0.0 && v <= 1.0; }));
    EXPECT_EQ(r.alpha.cols(), 2);
  }
}

TEST(Pipeline, ScalarOutOfRangeGuard) {
  const Pipeline p = make(Qoi::scalar);
  const auto& s = models().data.train.s_scalar;
  const double lo = *std::min_element(s.begin(), s.end()), hi = *std::max_element(s.begin(), s.end());
  const Tensor req({4, 1}, std::vector<double>{lo, hi, 2.0 * hi, 0.5 * lo});
  const InverseResult r = p.sol2geo(req);
  EXPECT_EQ(r.out_of_range, (std::vector<bool>{false, false, true, true}));
}

TEST(Pipeline, TrainCurvesAreInRangeAndZeroRequestIsFlagged) {
  const Pipeline p = make(Qoi::d1);
  const InverseResult train = p.sol2geo(qoi_data(models().data, Qoi::d1, "train"));
  for (bool f : train.out_of_range) EXPECT_FALSE(f);
  const InverseResult zero = p.sol2geo(Tensor({1, 16}, 0.0));
  EXPECT_TRUE(zero.out_of_range[0]);
}

TEST(Pipeline, RoundtripSkipsFemWhenOutOfRange) {
  const Roundtrip r = make(Qoi::d1).roundtrip_verify(std::vector<double>(16, 0.0));
  EXPECT_TRUE(r.out_of_range);
  EXPECT_TRUE(r.s_fem.empty());
  EXPECT_TRUE(std::isnan(r.discrepancy));
}

TEST(Pipeline, RoundtripSharesFemPathWithVerify) {
  const Pipeline p = make(Qoi::d1);
  const auto& s = models().data.train.s_1d[6];
  const Roundtrip r = p.roundtrip_verify(s);
  ASSERT_FALSE(r.out_of_range);
  EXPECT_EQ(r.s_fem, fem_verify(r.x, p.simp()).vm_diag);
  EXPECT_DOUBLE_EQ(r.discrepancy, relative_l2(s, r.s_fem));
  EXPECT_THROW(make(Qoi::d2).roundtrip_verify(s), ContractError);
}

TEST(Pipeline, EvaluationMatchesDirectComputation) {
  const Pipeline p = make(Qoi::scalar);
  Tensor pred;
  const DirectMetrics m = evaluate_direct(p, models().data, "test", &pred);
  const auto& s = models().data.test.s_scalar;
  EXPECT_DOUBLE_EQ(m.r2, latentmap::r_squared(s, std::vector<double>(pred.data.begin(), pred.data.end())));
  const InverseMetrics inv = evaluate_inverse(make(Qoi::d1), models().data, "train");
  EXPECT_GE(inv.loss, 0.0);
  EXPECT_LE(inv.max_volume_fraction_gap, 1.0);
  EXPECT_EQ(inv.out_of_range, 0);
}

TEST(Pipeline, ModelPairMismatchIsRejected) {
  const Models& m = models();
  const auto d1 = m.maps.at({Qoi::d1, Direction::direct});
  const auto i1 = m.maps.at({Qoi::d1, Direction::inverse});
  EXPECT_THROW(Pipeline(Qoi::d2, m.geo, m.sol1d, d1, i1), ConfigError);
  EXPECT_THROW(Pipeline(Qoi::scalar, m.geo, m.sol1d, d1, i1), ConfigError);
  EXPECT_THROW(Pipeline(Qoi::d1, m.geo, nullptr, d1, i1), ConfigError);
  EXPECT_THROW(Pipeline(Qoi::d1, m.sol2d, m.sol1d, d1, i1), ConfigError);
  EXPECT_THROW(Pipeline(Qoi::d1, m.geo, m.sol1d, i1, d1), ConfigError);
  const Pipeline only_direct(Qoi::d1, m.geo, m.sol1d, d1, nullptr);
  EXPECT_THROW(only_direct.sol2geo(Tensor({1, 16}, 1.0)), StateError);
}

TEST(Pipeline, ShapeMismatchIsRejected) {
  const Pipeline p = make(Qoi::d1);
  EXPECT_THROW(p.geo2sol(Tensor({1, 1, 8, 8})), ContractError);
  EXPECT_THROW(p.sol2geo(Tensor({1, 15})), ContractError);
  EXPECT_THROW(make(Qoi::scalar).sol2geo(Tensor({1, 2})), ContractError);
}

TEST(Pipeline, ConcurrentCallsAgree) {
  const Pipeline p = make(Qoi::d2);
  const Tensor x = geometries("train");
  const Tensor ref = p.geo2sol(x);
  Tensor a, b;
  std::thread ta([&] { a = p.geo2sol(x); });
  std::thread tb([&] { b = p.geo2sol(x); });
  ta.join();
  tb.join();
  EXPECT_EQ(a, ref);
  EXPECT_EQ(b, ref);
}

TEST(ModelSet, SaveLoadRoundTrip) {
  const Models& m = models();
  const auto dir = std::filesystem::temp_directory_path() / "rrto_test_modelset";
  std::filesystem::remove_all(dir);
  m.geo->save(dir / "geometry");
  m.sol1d->save(dir / "sol1d");
  for (Direction d : {Direction::direct, Direction::inverse}) m.maps.at({Qoi::d1, d})->save(dir / map_dir_name(Qoi::d1, d));
  const ModelSet set = ModelSet::load(dir);
  EXPECT_FALSE(set.pipeline(Qoi::d2).has_value());
  EXPECT_FALSE(set.pipeline(Qoi::scalar).has_value());
  const auto p = set.pipeline(Qoi::d1);
  ASSERT_TRUE(p.has_value());
  const Tensor x = geometries("test");
  EXPECT_EQ(p->geo2sol(x), make(Qoi::d1).geo2sol(x));
  EXPECT_EQ(p->simp().filter_radius, 1.5);
}
