#include <doctest.h>

#include <cmath>
#include <vector>

#include "codesearch/grad_check.hpp"
#include "codesearch/losses.hpp"
#include "codesearch/objective.hpp"
#include "helpers.hpp"

using namespace codesearch;

namespace {

MatD normalized_rows(std::vector<std::vector<double>> rows) {
  MatD m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  m.rowwise().normalize();
  return m;
}

const MatD kNl = normalized_rows({{0.3, -1.2, 0.5, 2.0}, {1.1, 0.4, -0.7, 0.2}, {-0.6, 0.9, 1.5, -0.3}});
const MatD kPl = normalized_rows({{0.8, -0.9, 0.1, 1.7}, {0.2, 1.3, -0.4, 0.6}, {-1.0, 0.5, 0.9, 0.4}});

MatD random_unit_rows(Rng& rng, Eigen::Index b, Eigen::Index d) {
  std::normal_distribution<double> n;
  MatD m(b, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  m.rowwise().normalize();
  return m;
}

}  // namespace

TEST_SUITE("losses") {
  TEST_CASE("infoNCE of identical embeddings is log B") {
    for (Eigen::Index b : {2, 4, 8, 16}) {
      MatD same = MatD::Constant(b, 5, 0.0);
      same.col(0).setOnes();
      CHECK(std::abs(info_nce_loss<double>(same, same, 0.07).loss - std::log(static_cast<double>(b))) < 1e-12);
      CHECK(std::abs(info_nce_loss<double>(same, same, 0.07, true).loss - std::log(static_cast<double>(b))) < 1e-12);
    }
  }

  TEST_CASE("BCE at probability one half is 2 log 2") {
    const std::vector<double> zeros(6, 0.0), halves(6, 0.5);
    CHECK(std::abs(bce_loss<double>(zeros, zeros).loss - 2 * std::log(2.0)) < 1e-12);
    CHECK(std::abs(bce_loss_from_probabilities<double>(halves, halves) - 2 * std::log(2.0)) < 1e-12);
  }

  TEST_CASE("frozen values from the arbitrary-precision oracle") {
    CHECK(std::abs(info_nce_loss<double>(kNl, kPl, 0.07).loss - 0.0063640407536326468) < 1e-12);
    CHECK(std::abs(info_nce_loss<double>(kNl, kPl, 0.07, true).loss - 0.0034564516182916378) < 1e-12);
    const std::vector<double> pos{0.7, -1.3, 2.2}, neg{-0.4, 0.9, -2.5};
    CHECK(std::abs(bce_loss<double>(pos, neg).loss - 1.2941122279705787) < 1e-12);
  }

  TEST_CASE("dominant diagonal with B = 2 approaches zero") {
    const MatD e = MatD::Identity(2, 2);
    const double loss = info_nce_loss<double>(e, e, 0.07).loss;
    CHECK(loss == doctest::Approx(3.9046870432007586e-13).epsilon(1e-6));
  }

  TEST_CASE("BCE stays finite at extreme logits") {
    const std::vector<double> pos{800.0, -800.0}, neg{-800.0, 800.0};
    const auto r = bce_loss<double>(pos, neg);
    CHECK(std::isfinite(r.loss));
    CHECK(r.loss == doctest::Approx(800.0));
  }

  TEST_CASE("BCE decomposes into its positive and negative parts") {
    Rng rng(8);
    std::normal_distribution<double> n(0, 2);
    for (int t = 0; t < 50; ++t) {
      std::vector<double> pos(5), neg(5);
      for (auto& v : pos) v = n(rng);
      for (auto& v : neg) v = n(rng);
      double want = 0;
      for (int i = 0; i < 5; ++i) want += -std::log(sigmoid(pos[i])) - std::log(1 - sigmoid(neg[i]));
      CHECK(bce_loss<double>(pos, neg).loss == doctest::Approx(want / 5).epsilon(1e-10));
    }
  }

  TEST_CASE("BCE with several negatives averages over them") {
    const std::vector<double> pos{0.5, -0.2}, neg{1.0, -1.0, 0.3, 0.0};
    const double want =
        (softplus(-0.5) + 0.5 * (softplus(1.0) + softplus(-1.0)) + softplus(0.2) + 0.5 * (softplus(0.3) + softplus(0.0))) / 2;
    CHECK(bce_loss<double>(pos, neg).loss == doctest::Approx(want).epsilon(1e-12));
    CHECK_THROWS_AS(bce_loss<double>(pos, std::vector<double>{1.0, 2.0, 3.0}), std::invalid_argument);
  }

  TEST_CASE("loss argument validation") {
    CHECK_THROWS_AS(info_nce_loss<double>(kNl.topRows(1), kPl.topRows(1), 0.07), std::invalid_argument);
    CHECK_THROWS_AS(info_nce_loss<double>(kNl, kPl.topRows(2), 0.07), std::invalid_argument);
    CHECK_THROWS_AS(info_nce_loss<double>(kNl, kPl, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(bce_loss<double>(std::vector<double>{}, std::vector<double>{}), std::invalid_argument);
    CHECK_THROWS_AS(bce_loss_from_probabilities<double>(std::vector<double>{1.0}, std::vector<double>{0.5}),
                    std::invalid_argument);
  }

  TEST_CASE("infoNCE gradient matches finite differences on the embeddings") {
    Rng rng(31);
    for (bool symmetric : {false, true}) {
      MatD nl = random_unit_rows(rng, 4, 6), pl = random_unit_rows(rng, 4, 6);
      const auto r = info_nce_loss<double>(nl, pl, 0.2, symmetric);
      const auto rep = grad_check({{"nl", &nl, &r.d_nl}, {"pl", &pl, &r.d_pl}},
                                  [&] { return info_nce_loss<double>(nl, pl, 0.2, symmetric).loss; }, 1e-6);
      CHECK(rep.max_rel_error() < 1e-7);
    }
  }

  TEST_CASE("BCE gradient matches finite differences on the logits") {
    MatD pos(1, 3), neg(1, 6);
    pos << 0.7, -1.3, 2.2;
    neg << -0.4, 0.9, -2.5, 0.1, 1.7, -0.8;
    auto eval = [&] {
      return bce_loss<double>(std::span<const double>(pos.data(), 3), std::span<const double>(neg.data(), 6));
    };
    const auto r = eval();
    MatD dpos(1, 3), dneg(1, 6);
    for (int i = 0; i < 3; ++i) dpos(0, i) = r.d_pos[i];
    for (int i = 0; i < 6; ++i) dneg(0, i) = r.d_neg[i];
    const auto rep = grad_check({{"pos", &pos, &dpos}, {"neg", &neg, &dneg}}, [&] { return eval().loss; }, 1e-6);
    CHECK(rep.max_rel_error() < 1e-7);
  }

  TEST_CASE("joint objective is the weighted sum of its parts") {
    const auto model = testutil::tiny_model_d(Variant::shared, 5);
    const auto batch = testutil::random_batch(4, 17);
    ObjectiveOptions nce, ce, joint;
    nce.mode = LossMode::fast_only;
    ce.mode = LossMode::slow_only;
    joint.mode = LossMode::joint;

    auto g_nce = model.params().zeros_like(), g_ce = g_nce, g_joint = g_nce;
    const auto l_nce = batch_objective(model, batch, nce, &g_nce);
    const auto l_ce = batch_objective(model, batch, ce, &g_ce);
    const auto l_joint = batch_objective(model, batch, joint, &g_joint);
    CHECK(l_joint.total == doctest::Approx(0.5 * l_nce.total + 0.5 * l_ce.total).epsilon(1e-12));
    CHECK(l_joint.nce == doctest::Approx(l_nce.nce).epsilon(1e-12));
    CHECK(l_joint.ce == doctest::Approx(l_ce.ce).epsilon(1e-12));

    auto combined = g_nce;
    combined.for_each([](const std::string&, MatD& t) { t *= 0.5; });
    axpy(combined, 0.5, g_ce);
    auto diff = g_joint;
    axpy(diff, -1.0, combined);
    CHECK(global_norm(diff) < 1e-6 * std::max(1.0, global_norm(g_joint)));

    joint.w_nce = 0.8;
    joint.w_ce = 0.2;
    CHECK(batch_objective<double>(model, batch, joint, nullptr).total ==
          doctest::Approx(0.8 * l_nce.total + 0.2 * l_ce.total).epsilon(1e-12));
  }

  TEST_CASE("loss modes are checked against the variant") {
    const auto batch = testutil::random_batch(3, 2);
    ObjectiveOptions joint;
    CHECK_THROWS_AS(batch_objective<double>(testutil::tiny_model_d(Variant::separate), batch, joint, nullptr),
                    std::invalid_argument);
    ObjectiveOptions slow;
    slow.mode = LossMode::slow_only;
    CHECK_THROWS_AS(batch_objective<double>(testutil::tiny_model_d(Variant::fast_only), batch, slow, nullptr),
                    std::invalid_argument);
    CHECK(parse_loss_mode(to_string(LossMode::slow_only)) == LossMode::slow_only);
    CHECK_THROWS(parse_loss_mode("bogus"));
  }

  TEST_CASE("objective gradients pass the finite-difference check") {
    const auto model = testutil::tiny_model_d(Variant::shared, 6);
    const auto batch = testutil::random_batch(3, 23);
    ObjectiveOptions opt;
    opt.mode = LossMode::joint;
    opt.all_negatives = true;
    opt.symmetric_nce = true;
    CHECK(grad_check_objective(model, batch, opt).max_rel_error() < 1e-4);
  }
}
