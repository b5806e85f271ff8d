#pragma once
#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "asvplan/topology.hpp"

namespace asvplan::classifier {

// Ego-centric per-timestep features: relative position, range, obstacle
// heading encoded as sin/cos, LOS bearing (clockwise from north) as sin/cos.
struct FeatureVector {
  double dx{0}, dy{0}, range{0};
  double sin_psi{0}, cos_psi{0};
  double sin_los{0}, cos_los{0};
};

inline constexpr int kNumFeatures = 7;

// Sliding window of noisy fixes for one obstacle with the matching ego
// states. Fix timestamps are strictly increasing and span at most the
// monitoring horizon.
struct ObservationWindow {
  int obstacle_id{0};
  std::vector<topology::VesselState> fixes;
  std::vector<topology::VesselState> ego;
};

// Coincident-position fixes are dropped rather than fabricating a LOS angle;
// throws EmptyWindow when nothing usable remains.
std::vector<FeatureVector> extract_features(const ObservationWindow& window);

struct PassingBelief {
  double p_l{0.5};
  double p_r{0.5};
};

struct LstmLayerWeights {
  Eigen::MatrixXd w_x;  // 4H x input, gate blocks ordered [i; f; g; o]
  Eigen::MatrixXd w_h;  // 4H x H
  Eigen::VectorXd b;    // 4H
};

// Two stacked recurrent layers plus the affine head, with the per-feature
// normalization statistics frozen from the training set.
struct ModelWeights {
  int format_version{1};
  std::vector<LstmLayerWeights> layers;
  Eigen::MatrixXd fc_w;  // 2 x H
  Eigen::VectorXd fc_b;  // 2
  Eigen::VectorXd norm_mean;  // input size
  Eigen::VectorXd norm_std;

  int input_size() const { return layers.empty() ? 0 : static_cast<int>(layers[0].w_x.cols()); }
  int hidden_size() const { return layers.empty() ? 0 : static_cast<int>(layers[0].w_h.cols()); }
};

inline constexpr int kDefaultHidden = 128;
inline constexpr int kNumLayers = 2;

ModelWeights make_weights(int input_size, int hidden_size, std::uint64_t seed);
ModelWeights zero_weights(int input_size, int hidden_size);

PassingBelief lstm_forward(const ModelWeights& w, const std::vector<FeatureVector>& seq);
PassingBelief lstm_forward(const ModelWeights& w, const Eigen::MatrixXd& seq);  // input x T

// Beliefs for several windows in one pass; equal-length windows share GEMMs.
std::vector<PassingBelief> lstm_forward_batch(const ModelWeights& w,
                                              const std::vector<Eigen::MatrixXd>& seqs);

struct LabeledEncounter {
  int encounter_id{0};
  std::vector<FeatureVector> features;
  topology::PassingSide label{topology::PassingSide::kLeft};  // never UNDETERMINED
};

struct Hyperparameters {
  int hidden_size{kDefaultHidden};
  int epochs{40};
  int batch_size{64};
  double learning_rate{1e-3};
  double lr_decay{0.5};
  int lr_step_epochs{20};
  double adam_beta1{0.9};
  double adam_beta2{0.999};
  double adam_eps{1e-8};
  double validation_fraction{0.15};
};

struct EpochStats {
  int epoch{0};
  double learning_rate{0};
  double train_loss{0};
  double val_loss{0};
  double val_f1{0};
};

struct TrainingReport {
  std::vector<EpochStats> epochs;
  double final_val_f1{0};
  double wall_seconds{0};
};

// Full-sequence backpropagation through time, deterministic for a fixed
// seed. Throws DivergedLoss with the epoch index on non-finite loss.
ModelWeights lstm_train(const std::vector<LabeledEncounter>& data,
                        const Hyperparameters& hp, std::uint64_t seed,
                        TrainingReport* report = nullptr);

struct EvalMetrics {
  double accuracy{0}, precision{0}, recall{0}, f1{0};
  int count{0};
};

// Binary metrics with LEFT as the positive class; ties at p_l = 0.5 resolve
// to LEFT.
EvalMetrics evaluate(const ModelWeights& w, const std::vector<LabeledEncounter>& test);

void save_weights(const ModelWeights& w, const std::string& path);
ModelWeights load_weights(const std::string& path);

// Randomized encounter generator mirroring the AIS preprocessing recipe at
// desk scale: constant-velocity and turning motions, 1 Hz resampling,
// TCPA/DCPA validity gates, winding-sign labels, exact 50/50 class balance.
struct SyntheticConfig {
  int count{2000};
  double ego_speed_min{0.5}, ego_speed_max{2.5};
  double obs_speed_min{0.0}, obs_speed_max{2.0};
  double obs_length_min{1.0}, obs_length_max{4.0};
  double turn_fraction{0.3};
  double max_turn_rate_dps{3.0};
  double zero_speed_fraction{0.1};
  double gate_dcpa_m{100.0};
  double gate_tcpa_s{120.0};
  double horizon_s{10.0};
  double sensor_range_m{100.0};
  bool noisy{true};
  // Earliest window end as a fraction of the clearance time; 1.0 restricts
  // the set to windows ending at clearance, where the side is unambiguous.
  double window_end_min_fraction{0.35};
};

std::vector<LabeledEncounter> generate_synthetic_dataset(const SyntheticConfig& cfg,
                                                         std::uint64_t seed);

void save_dataset_csv(const std::vector<LabeledEncounter>& data, const std::string& path);
std::vector<LabeledEncounter> load_dataset_csv(const std::string& path);

// Internal surface shared with the tests' finite-difference oracles.
Eigen::VectorXd flatten_params(const ModelWeights& w);
void unflatten_params(const Eigen::VectorXd& flat, ModelWeights* w);
double batch_loss(const ModelWeights& w, const std::vector<const LabeledEncounter*>& batch);
double batch_loss_and_grad(const ModelWeights& w,
                           const std::vector<const LabeledEncounter*>& batch,
                           Eigen::VectorXd* grad);
Eigen::MatrixXd features_to_matrix(const std::vector<FeatureVector>& seq);

}  // namespace asvplan::classifier
