#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "uctrl/data.hpp"
#include "uctrl/network.hpp"
#include "uctrl/rate.hpp"

namespace uctrl::trainer {

enum class VariantTag { I, II, III, IV, V, VI, no_mcr2 };

inline VariantTag variant_from_string(const std::string& s) {
  if (s == "I") return VariantTag::I;
  if (s == "II") return VariantTag::II;
  if (s == "III") return VariantTag::III;
  if (s == "IV") return VariantTag::IV;
  if (s == "V") return VariantTag::V;
  if (s == "VI") return VariantTag::VI;
  if (s == "no_mcr2") return VariantTag::no_mcr2;
  throw InvalidConfig("unknown objective variant: " + s);
}

inline const char* to_string(VariantTag t) {
  switch (t) {
    case VariantTag::I: return "I";
    case VariantTag::II: return "II";
    case VariantTag::III: return "III";
    case VariantTag::IV: return "IV";
    case VariantTag::V: return "V";
    case VariantTag::VI: return "VI";
    case VariantTag::no_mcr2: return "no_mcr2";
  }
  return "?";
}

// Objective selection. Variants drop terms by zeroing their coefficients:
//   I   : R + dR - l1*A - l2*S        (full)
//   II  : R + dR        - l2*S        (no augmentation constraint)
//   III : R + dR - l1*A               (no self-consistency constraint)
//   IV  :     dR - l1*A - l2*S        (no expansion term)
//   V   : R + dR                      (no constraints)
//   VI  :     dR                      (binary game)
//   no_mcr2: R  - l1*A - l2*S         (no batch-level dR)
// The decoder objective uses the same coefficients with +l1/+l2.
struct ObjectiveVariant {
  VariantTag tag = VariantTag::I;
  double lambda1 = 30.0;
  double lambda2 = 30.0;
  rate::DistanceMode distance_mode = rate::DistanceMode::cosine;

  double coef_expansion() const {
    switch (tag) {
      case VariantTag::IV:
      case VariantTag::VI: return 0.0;
      default: return 1.0;
    }
  }
  double coef_pair() const { return tag == VariantTag::no_mcr2 ? 0.0 : 1.0; }
  double eff_lambda1() const {
    switch (tag) {
      case VariantTag::II:
      case VariantTag::V:
      case VariantTag::VI: return 0.0;
      default: return lambda1;
    }
  }
  double eff_lambda2() const {
    switch (tag) {
      case VariantTag::III:
      case VariantTag::V:
      case VariantTag::VI: return 0.0;
      default: return lambda2;
    }
  }
};

// The four measured quantities, each in nats (distances are the per-sample
// means; the spec divides the constraint sums by N).
struct ObjectiveTerms {
  double expansion = 0.0;   // R(Z)
  double pair_dr = 0.0;     // dR(Z, Zhat)
  double aug_mean = 0.0;    // mean_i dist(z_i, z_a_i)
  double selfc_mean = 0.0;  // mean_i dist(z_i, zhat_i)

  bool finite() const {
    return std::isfinite(expansion) && std::isfinite(pair_dr) && std::isfinite(aug_mean) &&
           std::isfinite(selfc_mean);
  }
};

struct EncoderObjective {
  double value = 0.0;
  ObjectiveTerms terms;
  Matrix grad_z, grad_za, grad_zhat;
};

struct DecoderObjective {
  double value = 0.0;
  ObjectiveTerms terms;
  Matrix grad_zhat;
};

namespace detail {

inline ObjectiveTerms measure_terms(const rate::FeatureBatch& z, const rate::FeatureBatch& za,
                                    const rate::FeatureBatch& zhat, const ObjectiveVariant& v,
                                    const rate::RateParams& p) {
  if (z.dim() != za.dim() || z.dim() != zhat.dim() || z.count() != za.count() ||
      z.count() != zhat.count())
    throw DimensionMismatch("objective: batches must align sample-wise");
  ObjectiveTerms t;
  t.expansion = rate::coding_rate(z, p);
  t.pair_dr = rate::pair_rate_reduction(z, zhat, p);
  const int n = z.count();
  for (int i = 0; i < n; ++i) {
    t.aug_mean += rate::sample_distance(z.z.col(i), za.z.col(i), v.distance_mode, p);
    t.selfc_mean += rate::sample_distance(z.z.col(i), zhat.z.col(i), v.distance_mode, p);
  }
  t.aug_mean /= n;
  t.selfc_mean /= n;
  return t;
}

// Accumulates c/N * per-sample distance gradients into ga (wrt first
// argument columns) and gb.
inline void accumulate_distance_grads(const rate::FeatureBatch& a, const rate::FeatureBatch& b,
                                      rate::DistanceMode mode, const rate::RateParams& p,
                                      double coef, Matrix& ga, Matrix& gb) {
  if (coef == 0.0) return;
  const int n = a.count();
  const double c = coef / n;
  for (int i = 0; i < n; ++i) {
    auto g = rate::sample_distance_grads(a.z.col(i), b.z.col(i), mode, p);
    for (int r = 0; r < a.dim(); ++r) {
      ga(r, i) += c * g.wrt_z[r];
      gb(r, i) += c * g.wrt_zhat[r];
    }
  }
}

}  // namespace detail

// Maximized over theta: cR*R(Z) + cP*dR(Z,Zhat) - l1*aug_mean - l2*selfc_mean.
inline EncoderObjective encoder_objective(const rate::FeatureBatch& z,
                                          const rate::FeatureBatch& za,
                                          const rate::FeatureBatch& zhat,
                                          const ObjectiveVariant& v, const rate::RateParams& p) {
  EncoderObjective out;
  out.terms = detail::measure_terms(z, za, zhat, v, p);
  const double cR = v.coef_expansion(), cP = v.coef_pair();
  const double l1 = v.eff_lambda1(), l2 = v.eff_lambda2();
  out.value = cR * out.terms.expansion + cP * out.terms.pair_dr - l1 * out.terms.aug_mean -
              l2 * out.terms.selfc_mean;

  out.grad_z = Matrix(z.dim(), z.count());
  out.grad_za = Matrix(za.dim(), za.count());
  out.grad_zhat = Matrix(zhat.dim(), zhat.count());
  if (cR != 0.0) axpy_in_place(out.grad_z, cR, rate::coding_rate_grad(z, p));
  if (cP != 0.0) {
    auto pg = rate::pair_rate_reduction_grads(z, zhat, p);
    axpy_in_place(out.grad_z, cP, pg.wrt_z);
    axpy_in_place(out.grad_zhat, cP, pg.wrt_zhat);
  }
  detail::accumulate_distance_grads(z, za, v.distance_mode, p, -l1, out.grad_z, out.grad_za);
  detail::accumulate_distance_grads(z, zhat, v.distance_mode, p, -l2, out.grad_z, out.grad_zhat);
  return out;
}

// Minimized over eta: cR*R(Z) + cP*dR(Z,Zhat) + l1*aug_mean + l2*selfc_mean.
// Z and Z_a do not depend on eta, so only the Zhat gradient is returned; the
// constant terms are still measured for telemetry.
inline DecoderObjective decoder_objective(const rate::FeatureBatch& z,
                                          const rate::FeatureBatch& za,
                                          const rate::FeatureBatch& zhat,
                                          const ObjectiveVariant& v, const rate::RateParams& p) {
  DecoderObjective out;
  out.terms = detail::measure_terms(z, za, zhat, v, p);
  const double cR = v.coef_expansion(), cP = v.coef_pair();
  const double l1 = v.eff_lambda1(), l2 = v.eff_lambda2();
  out.value = cR * out.terms.expansion + cP * out.terms.pair_dr + l1 * out.terms.aug_mean +
              l2 * out.terms.selfc_mean;

  out.grad_zhat = Matrix(zhat.dim(), zhat.count());
  Matrix unused_z(z.dim(), z.count());
  if (cP != 0.0) {
    auto pg = rate::pair_rate_reduction_grads(z, zhat, p);
    axpy_in_place(out.grad_zhat, cP, pg.wrt_zhat);
  }
  detail::accumulate_distance_grads(z, zhat, v.distance_mode, p, l2, unused_z, out.grad_zhat);
  return out;
}

// ---------------------------------------------------------------------------
// Step gradients through the transcription chain X -> Z -> Xhat -> Zhat.
// ---------------------------------------------------------------------------

struct MaxStepResult {
  double value = 0.0;
  ObjectiveTerms terms;
  model::NetGrads encoder_grads;
  model::NetGrads decoder_grads;  // produced by the chain; never applied
};

// Encoder (max) step: gradients of the encoder objective w.r.t. theta,
// accumulated over the three encoder passes (Z, Z_a, Zhat). Unless
// stop_grad_through_decoder is set, the Zhat path flows through the frozen
// decoder back into Z.
inline MaxStepResult max_step_gradients(const model::Network& encoder,
                                        const model::Network& decoder, const Matrix& x,
                                        const Matrix& x_aug, const ObjectiveVariant& v,
                                        const rate::RateParams& p,
                                        bool stop_grad_through_decoder = false) {
  auto [z, tape_z] = model::encode(encoder, x);
  auto [za, tape_za] = model::encode(encoder, x_aug);
  auto [xhat, tape_dec] = model::forward(decoder, z.z);
  auto [zhat, tape_zhat] = model::encode(encoder, xhat);

  EncoderObjective obj = encoder_objective(z, za, zhat, v, p);

  MaxStepResult out;
  out.value = obj.value;
  out.terms = obj.terms;

  auto [g_enc_hat, g_xhat] = model::backward(encoder, tape_zhat, obj.grad_zhat);
  Matrix grad_z_total = obj.grad_z;
  if (stop_grad_through_decoder) {
    out.decoder_grads = model::zero_grads(decoder);
  } else {
    auto [g_dec, g_z_chain] = model::backward(decoder, tape_dec, g_xhat);
    out.decoder_grads = std::move(g_dec);
    add_in_place(grad_z_total, g_z_chain);
  }
  auto [g_enc_z, g_x] = model::backward(encoder, tape_z, grad_z_total);
  auto [g_enc_za, g_xa] = model::backward(encoder, tape_za, obj.grad_za);
  (void)g_x;
  (void)g_xa;

  out.encoder_grads = std::move(g_enc_z);
  out.encoder_grads.accumulate(g_enc_za);
  out.encoder_grads.accumulate(g_enc_hat);
  return out;
}

struct MinStepResult {
  double value = 0.0;
  ObjectiveTerms terms;
  model::NetGrads decoder_grads;
};

// Decoder (min) step on a fresh forward pass; theta is frozen, gradients
// flow from Zhat through the encoder into Xhat and then into eta.
inline MinStepResult min_step_gradients(const model::Network& encoder,
                                        const model::Network& decoder, const Matrix& x,
                                        const Matrix& x_aug, const ObjectiveVariant& v,
                                        const rate::RateParams& p) {
  auto [z, tape_z] = model::encode(encoder, x);
  auto [za, tape_za] = model::encode(encoder, x_aug);
  auto [xhat, tape_dec] = model::forward(decoder, z.z);
  auto [zhat, tape_zhat] = model::encode(encoder, xhat);

  DecoderObjective obj = decoder_objective(z, za, zhat, v, p);

  MinStepResult out;
  out.value = obj.value;
  out.terms = obj.terms;
  auto [g_enc_unused, g_xhat] = model::backward(encoder, tape_zhat, obj.grad_zhat);
  (void)g_enc_unused;  // theta frozen in the min step
  auto [g_dec, g_z_unused] = model::backward(decoder, tape_dec, g_xhat);
  (void)g_z_unused;
  out.decoder_grads = std::move(g_dec);
  return out;
}

// ---------------------------------------------------------------------------
// Training state and loop
// ---------------------------------------------------------------------------

struct TelemetryRecord {
  uint64_t iteration = 0;
  VariantTag variant = VariantTag::I;
  double expansion = 0.0;  // terms from the min-step (post-encoder-update) pass
  double pair_dr = 0.0;
  double aug_mean = 0.0;
  double selfc_mean = 0.0;
  double enc_value = 0.0;
  double dec_value = 0.0;
  double wall_ms = 0.0;  // isolated wall-clock column
};

struct TrainSettings {
  ObjectiveVariant variant;
  rate::RateParams rate_params;
  model::AdamParams adam;
  int batch_size = 128;
  uint64_t iterations = 2000;
  uint64_t seed = 1;
  bool stop_grad_through_decoder = false;
};

struct TrainState {
  model::Network encoder;
  model::Network decoder;
  model::AdamState opt_encoder;
  model::AdamState opt_decoder;
  uint64_t iteration = 0;
  std::vector<TelemetryRecord> telemetry;
};

inline std::string diagnostic_dump(uint64_t iter, const ObjectiveTerms& t, double value) {
  std::ostringstream os;
  os << "non-finite objective at iteration " << iter << ": value=" << value
     << " expansion=" << t.expansion << " pair_dr=" << t.pair_dr << " aug_mean=" << t.aug_mean
     << " selfc_mean=" << t.selfc_mean;
  return os.str();
}

// One alternation round: Adam ascent on theta, then a fresh pass and Adam
// descent on eta. Decoder parameters are untouched by the max step and
// encoder parameters by the min step.
inline void train_step(TrainState& state, const data::Batch& batch, const TrainSettings& cfg) {
  auto t0 = std::chrono::steady_clock::now();

  MaxStepResult mx;
  MinStepResult mn;
  try {
    mx = max_step_gradients(state.encoder, state.decoder, batch.x, batch.x_aug, cfg.variant,
                            cfg.rate_params, cfg.stop_grad_through_decoder);
    if (!mx.terms.finite() || !std::isfinite(mx.value))
      throw NonFiniteLoss(diagnostic_dump(state.iteration, mx.terms, mx.value));
    model::adam_step(state.encoder, mx.encoder_grads, state.opt_encoder, cfg.adam,
                     /*maximize=*/true);

    mn = min_step_gradients(state.encoder, state.decoder, batch.x, batch.x_aug, cfg.variant,
                            cfg.rate_params);
    if (!mn.terms.finite() || !std::isfinite(mn.value))
      throw NonFiniteLoss(diagnostic_dump(state.iteration, mn.terms, mn.value));
    model::adam_step(state.decoder, mn.decoder_grads, state.opt_decoder, cfg.adam,
                     /*maximize=*/false);
  } catch (const NonFiniteValue& e) {
    throw NonFiniteLoss("non-finite values in the transcription chain at iteration " +
                        std::to_string(state.iteration) + ": " + e.what());
  }

  auto t1 = std::chrono::steady_clock::now();
  TelemetryRecord rec;
  rec.iteration = state.iteration;
  rec.variant = cfg.variant.tag;
  rec.expansion = mn.terms.expansion;
  rec.pair_dr = mn.terms.pair_dr;
  rec.aug_mean = mn.terms.aug_mean;
  rec.selfc_mean = mn.terms.selfc_mean;
  rec.enc_value = mx.value;
  rec.dec_value = mn.value;
  rec.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  state.telemetry.push_back(rec);
  state.iteration += 1;
}

struct ModelDims {
  int input_dim = 0;
  int feature_dim = 0;
  std::vector<int> hidden = {64, 64};
};

// Encoder D -> hidden -> d with leaky ReLU hiddens and a linear head (the
// unit-sphere projection happens in encode); decoder d -> hidden -> D with
// ReLU hiddens and a tanh output.
inline TrainState init_train_state(const ModelDims& dims, uint64_t seed) {
  TrainState st;
  {
    std::vector<int> d = {dims.input_dim};
    d.insert(d.end(), dims.hidden.begin(), dims.hidden.end());
    d.push_back(dims.feature_dim);
    std::vector<model::Activation> a(dims.hidden.size(), model::Activation::leaky_relu);
    a.push_back(model::Activation::linear);
    Rng rng(mix_seed(seed, "enc"));
    st.encoder = model::make_mlp(d, a, rng);
  }
  {
    std::vector<int> d = {dims.feature_dim};
    d.insert(d.end(), dims.hidden.begin(), dims.hidden.end());
    d.push_back(dims.input_dim);
    std::vector<model::Activation> a(dims.hidden.size(), model::Activation::relu);
    a.push_back(model::Activation::tanh_act);
    Rng rng(mix_seed(seed, "dec"));
    st.decoder = model::make_mlp(d, a, rng);
  }
  st.opt_encoder = model::make_adam_state(st.encoder);
  st.opt_decoder = model::make_adam_state(st.decoder);
  return st;
}

using CheckpointHook = std::function<void(const TrainState&)>;

// Runs the alternating game for cfg.iterations steps (resuming from
// state.iteration). Batches and augmentations are keyed by (seed, iter), so
// a resumed run replays the exact schedule of a straight run.
inline void run_training(TrainState& state, const data::TrainingView& view,
                         const data::AugmentationSpec& aug, const TrainSettings& cfg,
                         const CheckpointHook& hook = nullptr, uint64_t hook_every = 0) {
  data::BatchIterator batches(view, aug, cfg.seed, cfg.batch_size);
  while (state.iteration < cfg.iterations) {
    data::Batch b = batches.at(state.iteration);
    train_step(state, b, cfg);
    if (hook && hook_every > 0 && state.iteration % hook_every == 0) hook(state);
  }
}

}  // namespace uctrl::trainer
