#pragma once

#include <array>
#include <filesystem>
#include <span>

#include <Eigen/Dense>

#include "dgseg/prototypes.hpp"
#include "dgseg/rng.hpp"
#include "dgseg/scene.hpp"

namespace dgseg {

// Per-point MLP encoder f (in -> h1 -> h2 -> D, ReLU) with L2-normalized
// output, followed by the global linear classifier (C x D weights + bias).
class EncoderModel {
 public:
  enum Param { kW1, kB1, kW2, kB2, kW3, kB3, kPhi, kPhiBias, kNumParams };

  EncoderModel() = default;
  EncoderModel(int in_dim, int hidden1, int hidden2, int embed_dim, int num_classes);

  // He-initialized weights, zero biases.
  static EncoderModel random(int in_dim, int hidden1, int hidden2, int embed_dim, int num_classes, Rng& rng);
  static EncoderModel zeros_like(const EncoderModel& other);

  int in_dim() const { return static_cast<int>(params_[kW1].rows()); }
  int hidden1() const { return static_cast<int>(params_[kW1].cols()); }
  int hidden2() const { return static_cast<int>(params_[kW2].cols()); }
  int embed_dim() const { return static_cast<int>(params_[kW3].cols()); }
  int num_classes() const { return static_cast<int>(params_[kPhi].rows()); }

  Eigen::MatrixXd& operator[](Param p) { return params_[p]; }
  const Eigen::MatrixXd& operator[](Param p) const { return params_[p]; }
  std::array<Eigen::MatrixXd, kNumParams>& params() { return params_; }
  const std::array<Eigen::MatrixXd, kNumParams>& params() const { return params_; }

  bool all_finite() const;

 private:
  // w1: in x h1, b1: 1 x h1, w2: h1 x h2, b2, w3: h2 x D, b3, phi: C x D, phi_bias: 1 x C
  std::array<Eigen::MatrixXd, kNumParams> params_;
};

struct ForwardPass {
  Eigen::MatrixXd a1, a2;        // pre-activations
  Eigen::MatrixXd h1, h2;
  Eigen::VectorXd norms;         // |z| per row
  Eigen::MatrixXd embeddings;    // N x D, unit rows
  Eigen::MatrixXd logits;        // N x C
};

ForwardPass forward(const EncoderModel& model, const Eigen::MatrixXd& features);

struct LossOptions {
  bool use_ce = true;            // false: prototypes are the only classifier
  double proto_weight = 1.0;
};

struct LossResult {
  double loss = 0.0;
  double ce = 0.0;
  double proto = 0.0;
  bool has_proto = false;
  EncoderModel grad;
  ForwardPass pass;
};

// Cross entropy over non-ignored points plus, when `bank` has initialized
// classes, the prototypical similarity loss. Gradients are exact for the
// model; the bank receives none.
LossResult combined_loss(const EncoderModel& model, const Eigen::MatrixXd& features, std::span<const Label> labels,
                         const PrototypeBank* bank, const LossOptions& opts = {});

struct OptimState {
  EncoderModel m;
  EncoderModel v;
  long step = 0;
  long total_steps = 1;
  double base_lr = 6e-4;
  double weight_decay = 0.01;
  double power = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static OptimState for_model(const EncoderModel& model, long total_steps);
  double current_lr() const;
};

// base_lr * (1 - step / total)^power
double poly_lr(double base_lr, long step, long total_steps, double power);

// AdamW with decoupled weight decay; advances opt.step.
void optimizer_step(EncoderModel& model, const EncoderModel& grad, OptimState& opt);

void save_model(const EncoderModel& model, const std::filesystem::path& path);
EncoderModel load_model(const std::filesystem::path& path);

}  // namespace dgseg
