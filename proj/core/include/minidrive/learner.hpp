#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "minidrive/dataset.hpp"
#include "minidrive/rng.hpp"

namespace minidrive {

enum class TapLocation { post_linear, post_norm, post_activation };

std::string tap_name(TapLocation loc);

struct PolicySpec {
  int input_dim = 32;
  std::vector<int> hidden = {64, 32};
  bool use_norm = false;
  double dropout_p = 0.2;

  int embedding_dim() const { return hidden.back(); }
  bool operator==(const PolicySpec&) const = default;
};

PolicySpec single_frame_spec(int ray_count);  // [64, 32], no norm
PolicySpec multi_frame_spec(int ray_count);   // [128, 64], feature norm

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  int batch_size = 64;
  int max_epochs = 100;
  int patience = 5;
  std::uint64_t seed = 0;
  enum class Optimizer { adam, sgd };
  Optimizer optimizer = Optimizer::adam;  // sgd exists for the monotone-descent check
};

// Feed-forward steering regressor. Hidden layers are
// linear -> (feature norm) -> relu -> dropout; the output is a single
// unbounded scalar (clipped only at actuation). Immutable when shared.
class Policy {
 public:
  struct Layer {
    int in = 0, out = 0;
    std::vector<double> w;  // row-major [out][in]
    std::vector<double> b;
    // Present when spec.use_norm: learned scale/shift plus running stats
    // (momentum 0.99) used at inference.
    std::vector<double> gamma, beta, run_mean, run_var;
  };

  Policy() = default;
  Policy(PolicySpec spec, std::uint64_t init_seed);

  const PolicySpec& spec() const { return spec_; }
  int input_dim() const { return spec_.input_dim; }
  int embedding_dim() const { return spec_.embedding_dim(); }

  // Inference-mode prediction (running stats, no dropout).
  double predict(const std::vector<double>& input) const;

  struct Taps {
    std::vector<double> post_linear;
    std::vector<double> post_norm;        // empty unless use_norm
    std::vector<double> post_activation;
  };
  double predict_with_taps(const std::vector<double>& input, Taps& taps) const;

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<double>& out_w() { return out_w_; }
  const std::vector<double>& out_w() const { return out_w_; }
  double& out_b() { return out_b_; }
  double out_b() const { return out_b_; }

  std::string to_json_text() const;
  static Policy from_json_text(std::string_view text);
  void save(const std::filesystem::path& file) const;
  static Policy load(const std::filesystem::path& file);
  std::uint64_t content_hash() const;

 private:
  PolicySpec spec_;
  std::vector<Layer> layers_;
  std::vector<double> out_w_;
  double out_b_ = 0.0;
};

// Subset view over a ShiftedDataset.
struct DataView {
  const std::vector<std::vector<double>>* inputs = nullptr;
  const std::vector<double>* labels = nullptr;
  std::vector<int> idx;

  static DataView all(const ShiftedDataset& ds);
  // validation=true selects fold==fold_id; false selects every other
  // non-dropped index.
  static DataView fold(const ShiftedDataset& ds, const std::vector<int>& assignment, int fold_id,
                       bool validation);
  std::size_t size() const { return idx.size(); }
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  int best_epoch = -1;  // 0-based index into the loss arrays
};

// MSE + (Adam with decoupled weight decay | plain SGD), early stopping on
// validation loss, weights restored from the best epoch. Deterministic in
// (spec, data, config.seed). Throws on NaN loss.
Policy train_policy(const PolicySpec& spec, const DataView& train, const DataView& val,
                    const TrainConfig& config, TrainHistory* history = nullptr);

// Mean |prediction - label| over the view; optionally keeps residuals.
double evaluate_mae(const Policy& policy, const DataView& data,
                    std::vector<double>* residuals = nullptr);

// One embedding row per view index (inference mode, order preserving).
std::vector<std::vector<double>> extract_embeddings(const Policy& policy, const DataView& data,
                                                    TapLocation location);

// Early-stopping bookkeeping: stop after `patience` consecutive epochs
// without a new best validation loss.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}
  // Returns true when training should stop after this epoch.
  bool update(double val_loss) {
    if (val_loss < best_) {
      best_ = val_loss;
      best_epoch_ = epoch_;
      bad_ = 0;
    } else {
      ++bad_;
    }
    ++epoch_;
    return bad_ >= patience_;
  }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_; }

 private:
  int patience_;
  int epoch_ = 0;
  int bad_ = 0;
  int best_epoch_ = -1;
  double best_ = 1e300;
};

// Exposed for the finite-difference oracle: full forward/backward over a
// small batch with dropout masks drawn from `dropout_rng`. Returns the MSE
// loss; fills `grad_out` (flat, matching flatten_params layout). Running
// statistics are only advanced when update_running_stats is set.
double batch_loss_and_grad(Policy& policy, const std::vector<const std::vector<double>*>& inputs,
                           const std::vector<double>& labels, Rng& dropout_rng,
                           std::vector<double>* grad_out, bool update_running_stats);

std::vector<double> flatten_params(const Policy& policy);
void unflatten_params(Policy& policy, const std::vector<double>& flat);
// Parallel to flatten_params: true where the entry is a weight-matrix
// element (the only entries weight decay touches).
std::vector<char> param_is_weight(const Policy& policy);

}  // namespace minidrive
