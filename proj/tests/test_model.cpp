#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>

#include "dgseg/encoder.hpp"
#include "dgseg/error.hpp"
#include "dgseg/features.hpp"
#include "dgseg/prototypes.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace dgseg;

namespace {

std::vector<Label> random_labels(std::size_t n, Rng& rng, bool with_ignore = false) {
  std::vector<Label> out(n);
  for (auto& l : out) {
    const std::size_t r = uniform_index(rng, with_ignore ? 9 : 8);
    l = r == 8 ? kIgnoreLabel : static_cast<Label>(r);
  }
  return out;
}

Eigen::MatrixXd random_matrix(int rows, int cols, Rng& rng, double sigma = 1.0) {
  return Eigen::MatrixXd::NullaryExpr(rows, cols, [&] { return normal(rng, sigma); });
}

PrototypeBank random_bank(int k, int dim, Rng& rng, int skip_class = -1) {
  PrototypeBank bank(kNumClasses, k, dim);
  for (int c = 0; c < kNumClasses; ++c) {
    if (c == skip_class) continue;
    bank.prototypes[static_cast<std::size_t>(c)] = oracle::random_unit_rows(k, dim, rng);
    bank.initialized[static_cast<std::size_t>(c)] = true;
  }
  return bank;
}

Eigen::MatrixXd row_sums(const Eigen::MatrixXd& q) { return q.rowwise().sum(); }
Eigen::MatrixXd col_sums(const Eigen::MatrixXd& q) { return q.colwise().sum(); }

}  // namespace

TEST_SUITE("features") {

TEST_CASE("single point has zero neighbourhood statistics") {
  PointCloud pc;
  pc.push_back({1, 2, 3}, kChair);
  const PointFeatures f = extract_point_features(pc, 16);
  REQUIRE(f.rows() == 1);
  CHECK(f(0, 3) == doctest::Approx(3 - estimate_floor_height(pc)));
  for (int c = 4; c < kFeatureDim; ++c) CHECK(f(0, c) == 0.0);
}

TEST_CASE("horizontal translation leaves features unchanged") {
  Rng rng(1);
  PointCloud pc = testutil::random_cloud(500, rng, 2.0);
  const PointFeatures a = extract_point_features(pc, 8);
  for (auto& p : pc.positions) {
    p[0] += 3.0;
    p[1] -= 7.0;
  }
  const PointFeatures b = extract_point_features(pc, 8);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("planar patch has a vanishing smallest eigenvalue") {
  Rng rng(2);
  PointCloud pc;
  for (int i = 0; i < 400; ++i) pc.push_back({uniform(rng, 0, 1), uniform(rng, 0, 1), 0.4}, kFloor);
  const PointFeatures f = extract_point_features(pc, 16);
  CHECK(f.col(9).cwiseAbs().maxCoeff() < 1e-6);
  // Normal is vertical and the patch reads as planar.
  CHECK(f.col(13).minCoeff() == doctest::Approx(1.0));
  CHECK(f.col(12).maxCoeff() < 1e-6);
}

TEST_CASE("eigenvalue descriptors are descending and finite") {
  Rng rng(3);
  const PointCloud pc = testutil::random_cloud(800, rng, 1.0);
  const PointFeatures f = extract_point_features(pc, 16);
  CHECK(f.allFinite());
  for (Eigen::Index r = 0; r < f.rows(); ++r) {
    CHECK(f(r, 7) >= f(r, 8));
    CHECK(f(r, 8) >= f(r, 9));
  }
}

TEST_CASE("row subset equals full extraction") {
  Rng rng(4);
  const PointCloud pc = testutil::random_cloud(300, rng, 1.0);
  const PointFeatures full = extract_point_features(pc, 10);
  const std::vector<std::size_t> rows{5, 0, 299, 42};
  const PointFeatures part = extract_point_features(pc, 10, rows);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(part.row(static_cast<Eigen::Index>(i)) == full.row(static_cast<Eigen::Index>(rows[i])));
  }
}

TEST_CASE("k is clamped and errors are reported") {
  PointCloud pc;
  pc.push_back({0, 0, 0}, kWall);
  pc.push_back({1, 0, 0}, kWall);
  CHECK(extract_point_features(pc, 100).rows() == 2);
  CHECK_THROWS_AS(extract_point_features(pc, 0), Error);
  CHECK_THROWS_AS(extract_point_features(PointCloud{}, 4), Error);
}

TEST_CASE("voxel downsample maps every point to its voxel representative") {
  Rng rng(5);
  const PointCloud pc = testutil::random_cloud(2000, rng, 1.0);
  const VoxelSample vs = voxel_downsample(pc, 0.2);
  CHECK(vs.cloud.size() < pc.size());
  for (std::size_t i = 0; i < pc.size(); ++i) {
    const Vec3& rep = vs.cloud.positions[vs.voxel_of_point[i]];
    for (int a = 0; a < 3; ++a) CHECK(std::floor(rep[a] / 0.2) == std::floor(pc.positions[i][a] / 0.2));
  }
  CHECK(voxel_downsample(pc, 0.0).cloud.size() == pc.size());
}

}  // TEST_SUITE

TEST_SUITE("encoder") {

TEST_CASE("embeddings are unit rows") {
  Rng rng(10);
  const EncoderModel m = EncoderModel::random(kFeatureDim, 16, 16, 8, kNumClasses, rng);
  const ForwardPass f = forward(m, random_matrix(50, kFeatureDim, rng));
  for (Eigen::Index r = 0; r < 50; ++r) CHECK(f.embeddings.row(r).norm() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS(forward(m, random_matrix(5, 3, rng)), Error);
}

TEST_CASE("zero-weight model yields the bias as logits") {
  EncoderModel m(kFeatureDim, 4, 4, 4, kNumClasses);
  for (int c = 0; c < kNumClasses; ++c) m[EncoderModel::kPhiBias](0, c) = 0.1 * c;
  Rng rng(11);
  const ForwardPass f = forward(m, random_matrix(6, kFeatureDim, rng));
  for (Eigen::Index r = 0; r < 6; ++r) CHECK(f.logits.row(r) == m[EncoderModel::kPhiBias].row(0));
}

TEST_CASE("forward is row-permutation equivariant") {
  Rng rng(12);
  const EncoderModel m = EncoderModel::random(kFeatureDim, 8, 8, 4, kNumClasses, rng);
  const Eigen::MatrixXd x = random_matrix(20, kFeatureDim, rng);
  Eigen::VectorXi perm(20);
  std::iota(perm.data(), perm.data() + 20, 0);
  std::shuffle(perm.data(), perm.data() + 20, rng);
  const Eigen::PermutationMatrix<Eigen::Dynamic> p(perm);
  const ForwardPass a = forward(m, p * x), b = forward(m, x);
  CHECK((a.logits - p * b.logits).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((a.embeddings - p * b.embeddings).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cross entropy examples") {
  EncoderModel m(kFeatureDim, 4, 4, 4, kNumClasses);
  Rng rng(13);
  const Eigen::MatrixXd x = random_matrix(10, kFeatureDim, rng);
  const auto labels = random_labels(10, rng);
  CHECK(combined_loss(m, x, labels, nullptr).loss == doctest::Approx(std::log(8.0)));

  // Huge bias on the true class drives CE to zero.
  const std::vector<Label> ones(10, kChair);
  m[EncoderModel::kPhiBias](0, kChair) = 50.0;
  CHECK(combined_loss(m, x, ones, nullptr).ce < 1e-12);

  const std::vector<Label> ignored(10, kIgnoreLabel);
  try {
    combined_loss(m, x, ignored, nullptr);
    FAIL("expected EmptyBatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyBatch);
  }
}

TEST_CASE("gradients match central differences") {
  Rng rng(14);
  for (int trial = 0; trial < 4; ++trial) {
    const EncoderModel m = oracle::random_small_model(rng);
    const Eigen::MatrixXd x = random_matrix(12, kFeatureDim, rng);
    const auto labels = random_labels(12, rng, true);
    const PrototypeBank bank = random_bank(3, 4, rng, 5);
    CHECK(oracle::max_gradient_error(m, x, labels, nullptr) < 1e-4);
    CHECK(oracle::max_gradient_error(m, x, labels, &bank) < 1e-4);
    CHECK(oracle::max_gradient_error(m, x, labels, &bank, {false, 1.0}) < 1e-4);
  }
}

TEST_CASE("ignored points contribute nothing") {
  Rng rng(15);
  const EncoderModel m = EncoderModel::random(kFeatureDim, 6, 5, 4, kNumClasses, rng);
  const PrototypeBank bank = random_bank(2, 4, rng);
  const Eigen::MatrixXd x = random_matrix(8, kFeatureDim, rng);
  std::vector<Label> labels = random_labels(8, rng);
  Eigen::MatrixXd extended(12, kFeatureDim);
  extended << x, random_matrix(4, kFeatureDim, rng);
  std::vector<Label> ext_labels = labels;
  ext_labels.insert(ext_labels.end(), 4, kIgnoreLabel);
  const LossResult a = combined_loss(m, x, labels, &bank), b = combined_loss(m, extended, ext_labels, &bank);
  CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
  for (int p = 0; p < EncoderModel::kNumParams; ++p) {
    const auto param = static_cast<EncoderModel::Param>(p);
    CHECK((a.grad[param] - b.grad[param]).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("learning-rate schedule") {
  CHECK(poly_lr(6e-4, 0, 100, 0.9) == 6e-4);
  CHECK(poly_lr(6e-4, 100, 100, 0.9) == 0.0);
  for (long s = 0; s <= 100; ++s) {
    CHECK(poly_lr(6e-4, s, 100, 0.9) == doctest::Approx(6e-4 * std::pow(1.0 - s / 100.0, 0.9)));
  }
  EncoderModel m(2, 1, 1, 1, 2);
  OptimState opt = OptimState::for_model(m, 3);
  CHECK(opt.current_lr() == 6e-4);
  for (int i = 0; i < 3; ++i) optimizer_step(m, EncoderModel::zeros_like(m), opt);
  CHECK(opt.current_lr() == 0.0);
  CHECK_THROWS_AS(optimizer_step(m, EncoderModel::zeros_like(m), opt), Error);
}

TEST_CASE("zero gradients without weight decay leave parameters unchanged") {
  Rng rng(16);
  EncoderModel m = EncoderModel::random(kFeatureDim, 4, 4, 4, kNumClasses, rng);
  const EncoderModel before = m;
  OptimState opt = OptimState::for_model(m, 10);
  opt.weight_decay = 0.0;
  for (int i = 0; i < 5; ++i) optimizer_step(m, EncoderModel::zeros_like(m), opt);
  for (int p = 0; p < EncoderModel::kNumParams; ++p) CHECK(m.params()[p] == before.params()[p]);
}

TEST_CASE("single-parameter quadratic converges") {
  EncoderModel m(1, 1, 1, 1, 1);
  OptimState opt = OptimState::for_model(m, 500);
  opt.base_lr = 0.05;
  opt.weight_decay = 0.0;
  for (int i = 0; i < 500; ++i) {
    EncoderModel g = EncoderModel::zeros_like(m);
    g[EncoderModel::kW1](0, 0) = 2.0 * (m[EncoderModel::kW1](0, 0) - 3.0);
    optimizer_step(m, g, opt);
  }
  CHECK(std::abs(m[EncoderModel::kW1](0, 0) - 3.0) < 1e-3);
}

TEST_CASE("model file round trip") {
  testutil::TempDir dir;
  Rng rng(17);
  const EncoderModel m = EncoderModel::random(kFeatureDim, 8, 8, 4, kNumClasses, rng);
  save_model(m, dir / "m.bin");
  const EncoderModel back = load_model(dir / "m.bin");
  CHECK(back.embed_dim() == 4);
  for (int p = 0; p < EncoderModel::kNumParams; ++p) {
    CHECK((back.params()[p] - m.params()[p]).cwiseAbs().maxCoeff() < 1e-6);
  }
  {
    std::ofstream(dir / "bad.bin") << "junk";
  }
  CHECK_THROWS_AS(load_model(dir / "bad.bin"), Error);
}

}  // TEST_SUITE

TEST_SUITE("prototypes") {

TEST_CASE("class mean feature") {
  Eigen::MatrixXd e(3, 2);
  e << 1, 0, -1, 0, 0.5, 0.5;
  const std::vector<Label> labels{kChair, kChair, kSofa};
  CHECK(class_mean_feature(e, labels, kChair).isZero());
  CHECK(class_mean_feature(e, labels, kSofa) == Eigen::Vector2d(0.5, 0.5));
  try {
    class_mean_feature(e, labels, kTable);
    FAIL("expected ClassAbsentInScene");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::ClassAbsentInScene);
  }

  Rng rng(20);
  const Eigen::MatrixXd r = random_matrix(100, 5, rng);
  const auto rl = random_labels(100, rng);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(5);
  int n = 0;
  for (int i = 0; i < 100; ++i) {
    if (rl[static_cast<std::size_t>(i)] != kWall) continue;
    sum += r.row(i).transpose();
    ++n;
  }
  CHECK((class_mean_feature(r, rl, kWall) - sum / n).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("bank initialization") {
  Rng rng(21);
  std::vector<Eigen::MatrixXd> means(kNumClasses);
  Eigen::RowVectorXd v(4);
  v << 1, 2, 0, 0;
  means[kChair] = v.replicate(3, 1);
  // Two tight clusters for sofa.
  means[kSofa].resize(20, 4);
  for (int r = 0; r < 20; ++r) {
    Eigen::RowVectorXd base(4);
    base << (r < 10 ? 1.0 : 0.0), (r < 10 ? 0.0 : 1.0), 0, 0;
    means[kSofa].row(r) = base + 0.01 * random_matrix(1, 4, rng);
  }
  const PrototypeBank bank = init_bank(means, 2, rng);
  CHECK(bank.initialized[kChair]);
  CHECK(bank.initialized[kSofa]);
  CHECK_FALSE(bank.initialized[kWall]);
  CHECK(bank.prototypes[kChair].row(0) == bank.prototypes[kChair].row(1));
  CHECK_FALSE(bank.warnings.empty());
  const Eigen::MatrixXd& s = bank.prototypes[kSofa];
  const double best = std::max(s(0, 0) * s(1, 1), s(0, 1) * s(1, 0));
  CHECK(best > 0.99);
  for (const auto& p : bank.prototypes) {
    if (p.isZero()) continue;
    for (Eigen::Index r = 0; r < p.rows(); ++r) CHECK(p.row(r).norm() == doctest::Approx(1.0).epsilon(1e-9));
  }
  const Eigen::MatrixXd sim = proto_similarity(oracle::random_unit_rows(3, 4, rng), bank);
  CHECK(sim.col(kWall).isConstant(-1.0));
}

TEST_CASE("sinkhorn examples") {
  Rng rng(22);
  const Eigen::MatrixXd x = oracle::random_unit_rows(7, 5, rng);
  const TransportPlan q1 = sinkhorn_assign(x, oracle::random_unit_rows(1, 5, rng), 20, 3);
  CHECK((q1.array() - 1.0).abs().maxCoeff() < 1e-12);

  Eigen::MatrixXd p = Eigen::MatrixXd::Identity(3, 3);
  const TransportPlan q = sinkhorn_assign(p, p, 20, 3);
  CHECK((q - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-3);
  const auto best = oracle::best_permutation(p * p.transpose());
  CHECK(best == std::vector<int>{0, 1, 2});

  Eigen::MatrixXd bad = x;
  bad(0, 0) = std::nan("");
  CHECK_THROWS_AS(sinkhorn_assign(bad, x.topRows(2), 20, 3), Error);
  CHECK_THROWS_AS(sinkhorn_assign(x, x.topRows(2), 20, 0), Error);
}

TEST_CASE("sinkhorn marginals on random inputs") {
  Rng rng(23);
  for (int t = 0; t < 50; ++t) {
    const int n = 1 + static_cast<int>(uniform_index(rng, 200)), k = 1 + static_cast<int>(uniform_index(rng, 8));
    const double lambda = uniform(rng, 0.0, 100.0);
    const TransportPlan q = sinkhorn_assign(oracle::random_unit_rows(n, 6, rng), oracle::random_unit_rows(k, 6, rng),
                                            lambda, 3);
    CHECK(q.allFinite());
    CHECK(q.minCoeff() >= 0.0);
    CHECK((row_sums(q).array() - 1.0).abs().maxCoeff() < 1e-5);
    const TransportPlan c = normalize_columns(q);
    CHECK((col_sums(c).array() - static_cast<double>(n) / k).abs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("momentum update") {
  Rng rng(24);
  PrototypeBank bank = random_bank(3, 5, rng);
  const Eigen::MatrixXd x = oracle::random_unit_rows(10, 5, rng);
  const TransportPlan q = sinkhorn_assign(x, bank.prototypes[kChair], 20, 3);

  bank.momentum = 1.0;
  const Eigen::MatrixXd before = bank.prototypes[kChair];
  momentum_update(bank, kChair, q, x);
  CHECK(bank.prototypes[kChair] == before);

  bank.momentum = 0.999;
  momentum_update(bank, kChair, q, x);
  Eigen::MatrixXd expect = 0.999 * before + 0.001 * (3.0 / 10.0) * q.transpose() * x;
  for (Eigen::Index r = 0; r < 3; ++r) {
    CHECK((before.row(r) - (0.999 * before.row(r) + 0.001 * 0.3 * (q.transpose() * x).row(r))).norm() <= 0.002 + 1e-12);
    expect.row(r).normalize();
  }
  CHECK((bank.prototypes[kChair] - expect).cwiseAbs().maxCoeff() < 1e-9);

  PrototypeBank one = random_bank(1, 5, rng);
  one.momentum = 0.0;
  momentum_update(one, kSofa, Eigen::MatrixXd::Ones(10, 1), x);
  const Eigen::RowVectorXd mean = x.colwise().mean().normalized();
  CHECK((one.prototypes[kSofa].row(0) - mean).cwiseAbs().maxCoeff() < 1e-12);

  PrototypeBank partial = random_bank(3, 5, rng, kDoor);
  try {
    momentum_update(partial, kDoor, q, x);
    FAIL("expected UninitializedClass");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UninitializedClass);
  }
}

TEST_CASE("similarity") {
  Rng rng(25);
  const PrototypeBank bank = random_bank(3, 6, rng);
  const Eigen::MatrixXd e = bank.prototypes[kTable].row(2);
  CHECK(proto_similarity(e, bank)(0, kTable) == doctest::Approx(1.0).epsilon(1e-9));

  const Eigen::MatrixXd x = oracle::random_unit_rows(40, 6, rng);
  const Eigen::MatrixXd s = proto_similarity(x, bank);
  for (int j = 0; j < 40; ++j) {
    for (int c = 0; c < kNumClasses; ++c) {
      double best = -2;
      for (int k = 0; k < 3; ++k) best = std::max(best, x.row(j).dot(bank.prototypes[c].row(k)));
      CHECK(s(j, c) == doctest::Approx(best));
    }
  }

  PrototypeBank dup = bank;
  Eigen::MatrixXd extra(4, 6);
  extra << bank.prototypes[kWall], bank.prototypes[kWall].row(1);
  dup.k = 4;
  for (int c = 0; c < kNumClasses; ++c) {
    Eigen::MatrixXd m(4, 6);
    m << bank.prototypes[c], bank.prototypes[c].row(1);
    dup.prototypes[c] = m;
  }
  CHECK(proto_similarity(x, dup) == s);

  const PrototypeBank k1 = random_bank(1, 6, rng);
  const Eigen::MatrixXd s1 = proto_similarity(x, k1);
  for (int c = 0; c < kNumClasses; ++c) CHECK((s1.col(c) - x * k1.prototypes[c].row(0).transpose()).isZero(1e-12));
}

TEST_CASE("prototypical loss") {
  Eigen::MatrixXd s = Eigen::MatrixXd::Constant(1, kNumClasses, -1.0);
  s(0, kChair) = 1.0;
  const std::vector<Label> chair{kChair};
  const double expect = -std::log(std::exp(1.0) / (std::exp(1.0) + 7 * std::exp(-1.0)));
  CHECK(proto_loss(s, chair) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(proto_loss(s, chair) == doctest::Approx(0.66647).epsilon(1e-4));
  CHECK(proto_loss(Eigen::MatrixXd::Zero(3, kNumClasses), std::vector<Label>{0, 1, 2}) ==
        doctest::Approx(std::log(8.0)));

  Rng rng(26);
  const Eigen::MatrixXd r = random_matrix(30, kNumClasses, rng);
  const auto labels = random_labels(30, rng, true);
  std::vector<int> perm(30);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Eigen::MatrixXd rp(30, kNumClasses);
  std::vector<Label> lp(30);
  for (int i = 0; i < 30; ++i) {
    rp.row(i) = r.row(perm[i]);
    lp[i] = labels[perm[i]];
  }
  CHECK(proto_loss(r, labels) == doctest::Approx(proto_loss(rp, lp)).epsilon(1e-12));
  try {
    proto_loss(s, std::vector<Label>{kIgnoreLabel});
    FAIL("expected AllIgnored");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AllIgnored);
  }
}

TEST_CASE("rectification") {
  Eigen::MatrixXd probs = Eigen::MatrixXd::Zero(1, kNumClasses);
  probs(0, kChair) = 0.55;
  probs(0, kSofa) = 0.45;
  // Similarities whose softmax puts 0.2 on chair and 0.8 on sofa.
  Eigen::MatrixXd s = Eigen::MatrixXd::Constant(1, kNumClasses, -1e3);
  s(0, kChair) = std::log(0.2);
  s(0, kSofa) = std::log(0.8);
  const Eigen::MatrixXd r = rectify(probs, s);
  CHECK(r(0, kChair) == doctest::Approx(0.11));
  CHECK(r(0, kSofa) == doctest::Approx(0.36));
  Eigen::Index arg = 0;
  r.row(0).maxCoeff(&arg);
  CHECK(arg == kSofa);

  Rng rng(27);
  const Eigen::MatrixXd p = row_softmax(random_matrix(200, kNumClasses, rng, 3.0));
  const Eigen::MatrixXd rr = rectify(p, random_matrix(200, kNumClasses, rng));
  CHECK((rr.array() <= p.array()).all());
  const Eigen::MatrixXd ru = rectify(p, Eigen::MatrixXd::Constant(200, kNumClasses, 0.3));
  for (int j = 0; j < 200; ++j) {
    Eigen::Index a = 0, b = 0;
    p.row(j).maxCoeff(&a);
    ru.row(j).maxCoeff(&b);
    CHECK(a == b);
  }
  CHECK_THROWS_AS(rectify(p, Eigen::MatrixXd::Zero(3, 3)), Error);
}

TEST_CASE("bank file round trip") {
  testutil::TempDir dir;
  Rng rng(28);
  const PrototypeBank bank = random_bank(3, 6, rng, kWindow);
  save_bank(bank, dir / "bank.bin");
  const PrototypeBank back = load_bank(dir / "bank.bin");
  CHECK(back.initialized == bank.initialized);
  for (int c = 0; c < kNumClasses; ++c) CHECK((back.prototypes[c] - bank.prototypes[c]).cwiseAbs().maxCoeff() < 1e-6);
  CHECK_THROWS_AS(load_bank(dir / "missing.bin"), Error);
}

}  // TEST_SUITE
