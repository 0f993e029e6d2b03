#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "test_support.hpp"
#include "uctrl/io.hpp"
#include "uctrl/trainer.hpp"

using namespace uctrl;
using rate::FeatureBatch;
using rate::RateParams;
using trainer::ObjectiveVariant;
using trainer::VariantTag;

namespace {

const RateParams kParams{0.2};

struct Fixture {
  FeatureBatch z, za, zhat;
};

Fixture random_fixture(Rng& rng, int d = 4, int n = 6) {
  Fixture f;
  f.z = FeatureBatch(test::unit_column_matrix(rng, d, n), true);
  f.za = FeatureBatch(test::unit_column_matrix(rng, d, n), true);
  f.zhat = FeatureBatch(test::unit_column_matrix(rng, d, n), true);
  return f;
}

ObjectiveVariant variant(VariantTag tag) {
  ObjectiveVariant v;
  v.tag = tag;
  v.lambda1 = 3.0;
  v.lambda2 = 5.0;
  return v;
}

const VariantTag kAllTags[] = {VariantTag::I,  VariantTag::II, VariantTag::III,
                               VariantTag::IV, VariantTag::V,  VariantTag::VI,
                               VariantTag::no_mcr2};

}  // namespace

TEST_CASE("variant VI objective vanishes when Zhat equals Z") {
  Rng rng(1);
  Fixture f = random_fixture(rng);
  auto obj = trainer::encoder_objective(f.z, f.za, f.z, variant(VariantTag::VI), kParams);
  CHECK(std::abs(obj.value) < 1e-9);
}

TEST_CASE("variant I with zero lambdas equals variant V exactly") {
  Rng rng(2);
  Fixture f = random_fixture(rng);
  ObjectiveVariant v1 = variant(VariantTag::I);
  v1.lambda1 = 0.0;
  v1.lambda2 = 0.0;
  ObjectiveVariant v5 = variant(VariantTag::V);
  auto a = trainer::encoder_objective(f.z, f.za, f.zhat, v1, kParams);
  auto b = trainer::encoder_objective(f.z, f.za, f.zhat, v5, kParams);
  CHECK(a.value == b.value);
}

TEST_CASE("objective value recomposes exactly from exported terms") {
  Rng rng(3);
  Fixture f = random_fixture(rng);
  for (VariantTag tag : kAllTags) {
    ObjectiveVariant v = variant(tag);
    auto enc = trainer::encoder_objective(f.z, f.za, f.zhat, v, kParams);
    double enc_sum = v.coef_expansion() * enc.terms.expansion +
                     v.coef_pair() * enc.terms.pair_dr - v.eff_lambda1() * enc.terms.aug_mean -
                     v.eff_lambda2() * enc.terms.selfc_mean;
    CHECK(std::abs(enc.value - enc_sum) <= 1e-12);

    auto dec = trainer::decoder_objective(f.z, f.za, f.zhat, v, kParams);
    double dec_sum = v.coef_expansion() * dec.terms.expansion +
                     v.coef_pair() * dec.terms.pair_dr + v.eff_lambda1() * dec.terms.aug_mean +
                     v.eff_lambda2() * dec.terms.selfc_mean;
    CHECK(std::abs(dec.value - dec_sum) <= 1e-12);
  }
}

TEST_CASE("objective matches an independent recomposition of rate calls") {
  Rng rng(4);
  Fixture f = random_fixture(rng);
  for (VariantTag tag : kAllTags) {
    ObjectiveVariant v = variant(tag);
    auto enc = trainer::encoder_objective(f.z, f.za, f.zhat, v, kParams);
    double aug = 0.0, selfc = 0.0;
    for (int i = 0; i < f.z.count(); ++i) {
      aug += rate::sample_distance(f.z.z.col(i), f.za.z.col(i), v.distance_mode, kParams);
      selfc += rate::sample_distance(f.z.z.col(i), f.zhat.z.col(i), v.distance_mode, kParams);
    }
    aug /= f.z.count();
    selfc /= f.z.count();
    double want = v.coef_expansion() * rate::coding_rate(f.z, kParams) +
                  v.coef_pair() * rate::pair_rate_reduction(f.z, f.zhat, kParams) -
                  v.eff_lambda1() * aug - v.eff_lambda2() * selfc;
    CHECK_THAT(enc.value, Catch::Matchers::WithinAbs(want, 1e-12));
  }
}

TEST_CASE("encoder objective gradients match finite differences for every variant") {
  Rng rng(5);
  for (VariantTag tag : kAllTags) {
    Fixture f = random_fixture(rng, 3, 5);
    ObjectiveVariant v = variant(tag);
    auto obj = trainer::encoder_objective(f.z, f.za, f.zhat, v, kParams);

    auto value_with = [&](const Matrix& z, const Matrix& za, const Matrix& zh) {
      return trainer::encoder_objective(FeatureBatch(z), FeatureBatch(za), FeatureBatch(zh), v,
                                        kParams)
          .value;
    };
    Matrix fd_z = test::finite_difference(
        [&](const Matrix& m) { return value_with(m, f.za.z, f.zhat.z); }, f.z.z, 1e-6);
    Matrix fd_za = test::finite_difference(
        [&](const Matrix& m) { return value_with(f.z.z, m, f.zhat.z); }, f.za.z, 1e-6);
    Matrix fd_zh = test::finite_difference(
        [&](const Matrix& m) { return value_with(f.z.z, f.za.z, m); }, f.zhat.z, 1e-6);
    CHECK(test::max_abs_diff(obj.grad_z, fd_z) < 1e-6);
    CHECK(test::max_abs_diff(obj.grad_za, fd_za) < 1e-6);
    CHECK(test::max_abs_diff(obj.grad_zhat, fd_zh) < 1e-6);
  }
}

TEST_CASE("decoder objective gradient matches finite differences") {
  Rng rng(6);
  for (VariantTag tag : {VariantTag::I, VariantTag::VI, VariantTag::no_mcr2}) {
    Fixture f = random_fixture(rng, 3, 5);
    ObjectiveVariant v = variant(tag);
    auto obj = trainer::decoder_objective(f.z, f.za, f.zhat, v, kParams);
    Matrix fd = test::finite_difference(
        [&](const Matrix& m) {
          return trainer::decoder_objective(f.z, f.za, FeatureBatch(m), v, kParams).value;
        },
        f.zhat.z, 1e-6);
    CHECK(test::max_abs_diff(obj.grad_zhat, fd) < 1e-6);
  }
}

TEST_CASE("decoder gradient at Zhat = Z matches the pair grads' second output") {
  Rng rng(7);
  Fixture f = random_fixture(rng);
  ObjectiveVariant v = variant(VariantTag::VI);  // pure pair term
  auto obj = trainer::decoder_objective(f.z, f.za, f.z, v, kParams);
  auto pg = rate::pair_rate_reduction_grads(f.z, f.z, kParams);
  CHECK(test::max_abs_diff(obj.grad_zhat, pg.wrt_zhat) < 1e-12);
}

TEST_CASE("variant VI decoder value is the pair term alone") {
  Rng rng(8);
  Fixture f = random_fixture(rng);
  auto obj =
      trainer::decoder_objective(f.z, f.za, f.zhat, variant(VariantTag::VI), kParams);
  CHECK_THAT(obj.value,
             Catch::Matchers::WithinAbs(rate::pair_rate_reduction(f.z, f.zhat, kParams), 1e-12));
}

// ---------------------------------------------------------------------------
// train_step / run_training
// ---------------------------------------------------------------------------

namespace {

struct TrainFixture {
  data::Dataset ds;
  trainer::ModelDims dims;
  data::AugmentationSpec aug;
  trainer::TrainSettings cfg;
};

TrainFixture small_training_setup(uint64_t seed = 11) {
  TrainFixture t;
  Rng rng(mix_seed(seed, "dataset"));
  t.ds = data::gen_subspace_mixture(rng, 8, 2, 1, 16, 0.01);
  t.dims.input_dim = 8;
  t.dims.feature_dim = 4;
  t.dims.hidden = {10};
  t.cfg.batch_size = 8;
  t.cfg.iterations = 10;
  t.cfg.seed = seed;
  t.cfg.variant.lambda1 = 30.0;
  t.cfg.variant.lambda2 = 30.0;
  return t;
}

}  // namespace

TEST_CASE("ten steps produce bit-identical telemetry across runs") {
  TrainFixture t = small_training_setup();
  auto run = [&]() {
    trainer::TrainState st = trainer::init_train_state(t.dims, t.cfg.seed);
    trainer::run_training(st, data::TrainingView(t.ds), t.aug, t.cfg);
    return io::strip_wall_column(io::telemetry_csv(st.telemetry));
  };
  CHECK(run() == run());
}

TEST_CASE("alternation hygiene: eta untouched by the max step, theta by the min step") {
  TrainFixture t = small_training_setup();
  trainer::TrainState st = trainer::init_train_state(t.dims, t.cfg.seed);
  data::BatchIterator batches(data::TrainingView(t.ds), t.aug, t.cfg.seed, t.cfg.batch_size);
  data::Batch b = batches.at(0);

  model::Network dec_before = st.decoder;
  auto mx = trainer::max_step_gradients(st.encoder, st.decoder, b.x, b.x_aug, t.cfg.variant,
                                        t.cfg.rate_params, false);
  model::adam_step(st.encoder, mx.encoder_grads, st.opt_encoder, t.cfg.adam, true);
  for (size_t l = 0; l < st.decoder.layers.size(); ++l)
    REQUIRE(test::max_abs_diff(st.decoder.layers[l].w, dec_before.layers[l].w) == 0.0);

  model::Network enc_after_max = st.encoder;
  auto mn = trainer::min_step_gradients(st.encoder, st.decoder, b.x, b.x_aug, t.cfg.variant,
                                        t.cfg.rate_params);
  model::adam_step(st.decoder, mn.decoder_grads, st.opt_decoder, t.cfg.adam, false);
  for (size_t l = 0; l < st.encoder.layers.size(); ++l)
    REQUIRE(test::max_abs_diff(st.encoder.layers[l].w, enc_after_max.layers[l].w) == 0.0);
}

TEST_CASE("iteration counter advances once per alternation round") {
  TrainFixture t = small_training_setup();
  trainer::TrainState st = trainer::init_train_state(t.dims, t.cfg.seed);
  data::BatchIterator batches(data::TrainingView(t.ds), t.aug, t.cfg.seed, t.cfg.batch_size);
  trainer::train_step(st, batches.at(0), t.cfg);
  CHECK(st.iteration == 1);
  CHECK(st.telemetry.size() == 1);
}

TEST_CASE("zero iterations return the initialized state unchanged") {
  TrainFixture t = small_training_setup();
  t.cfg.iterations = 0;
  trainer::TrainState st = trainer::init_train_state(t.dims, t.cfg.seed);
  trainer::TrainState fresh = trainer::init_train_state(t.dims, t.cfg.seed);
  trainer::run_training(st, data::TrainingView(t.ds), t.aug, t.cfg);
  CHECK(st.iteration == 0);
  CHECK(st.telemetry.empty());
  for (size_t l = 0; l < st.encoder.layers.size(); ++l)
    REQUIRE(test::max_abs_diff(st.encoder.layers[l].w, fresh.encoder.layers[l].w) == 0.0);
}

TEST_CASE("telemetry length equals the iteration count") {
  TrainFixture t = small_training_setup();
  t.cfg.iterations = 7;
  trainer::TrainState st = trainer::init_train_state(t.dims, t.cfg.seed);
  trainer::run_training(st, data::TrainingView(t.ds), t.aug, t.cfg);
  CHECK(st.telemetry.size() == 7);
}

TEST_CASE("labels cannot influence training: permuting them changes nothing") {
  TrainFixture t = small_training_setup();
  auto run = [&](const data::Dataset& ds) {
    trainer::TrainState st = trainer::init_train_state(t.dims, t.cfg.seed);
    trainer::run_training(st, data::TrainingView(ds), t.aug, t.cfg);
    return io::strip_wall_column(io::telemetry_csv(st.telemetry));
  };
  data::Dataset permuted = t.ds;
  for (auto& lab : permuted.labels) lab = (lab + 1) % 2;
  CHECK(run(t.ds) == run(permuted));
}

TEST_CASE("non-finite objectives raise NonFiniteLoss with a diagnostic") {
  TrainFixture t = small_training_setup();
  trainer::TrainState st = trainer::init_train_state(t.dims, t.cfg.seed);
  st.encoder.layers[0].w(0, 0) = std::numeric_limits<double>::quiet_NaN();
  data::BatchIterator batches(data::TrainingView(t.ds), t.aug, t.cfg.seed, t.cfg.batch_size);
  CHECK_THROWS_AS(trainer::train_step(st, batches.at(0), t.cfg), NonFiniteLoss);
}

TEST_CASE("stop_grad_through_decoder changes the encoder gradient, not the value") {
  TrainFixture t = small_training_setup();
  trainer::TrainState st = trainer::init_train_state(t.dims, t.cfg.seed);
  data::BatchIterator batches(data::TrainingView(t.ds), t.aug, t.cfg.seed, t.cfg.batch_size);
  data::Batch b = batches.at(0);
  auto with_chain = trainer::max_step_gradients(st.encoder, st.decoder, b.x, b.x_aug,
                                                t.cfg.variant, t.cfg.rate_params, false);
  auto without = trainer::max_step_gradients(st.encoder, st.decoder, b.x, b.x_aug,
                                             t.cfg.variant, t.cfg.rate_params, true);
  CHECK(test::max_abs_diff(with_chain.encoder_grads, without.encoder_grads) > 1e-12);
  CHECK(with_chain.value == without.value);
}
