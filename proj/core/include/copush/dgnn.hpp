#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "copush/motion_synth.hpp"
#include "copush/rng.hpp"
#include "copush/skeleton.hpp"
#include "copush/tensor.hpp"

namespace copush {

// Architecture description. Three graph-temporal blocks, global average
// pooling over frames and nodes, dropout, then a two-layer head with one
// output per intention class.
struct ModelConfig {
  std::vector<int> channels = {32, 64, 64};
  int temporal_kernel = 5;  // odd
  int fc_hidden = 64;
  int input_channels = 3;
  double dropout_p = 0.3;
};

// Parameters of one graph-temporal block. The spatial stage updates vertex
// attributes from [v, A_s e, A_t e] and edge attributes from
// [e, A_s^T v', A_t^T v']; both streams then pass through a temporal
// convolution with symmetric zero padding.
struct DgnBlockParams {
  Tensor vertex_weight;         // (3*C_in) x C_out
  Tensor vertex_bias;           // C_out
  Tensor edge_weight;           // (C_in + 2*C_out) x C_out
  Tensor edge_bias;             // C_out
  Tensor temporal_vertex;       // K x C_out x C_out
  Tensor temporal_vertex_bias;  // C_out
  Tensor temporal_edge;         // K x C_out x C_out
  Tensor temporal_edge_bias;    // C_out
};

struct ModelParams {
  ModelConfig config;
  std::vector<DgnBlockParams> blocks;  // exactly 3
  Tensor fc1_weight;  // 2*C_last x H
  Tensor fc1_bias;    // H
  Tensor fc2_weight;  // H x 3
  Tensor fc2_bias;    // 3

  template <typename F>
  void for_each_named(F&& f) {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string p = "block" + std::to_string(i) + "/";
      f(p + "vertex_weight", blocks[i].vertex_weight);
      f(p + "vertex_bias", blocks[i].vertex_bias);
      f(p + "edge_weight", blocks[i].edge_weight);
      f(p + "edge_bias", blocks[i].edge_bias);
      f(p + "temporal_vertex", blocks[i].temporal_vertex);
      f(p + "temporal_vertex_bias", blocks[i].temporal_vertex_bias);
      f(p + "temporal_edge", blocks[i].temporal_edge);
      f(p + "temporal_edge_bias", blocks[i].temporal_edge_bias);
    }
    f("fc1/weight", fc1_weight);
    f("fc1/bias", fc1_bias);
    f("fc2/weight", fc2_weight);
    f("fc2/bias", fc2_bias);
  }
  template <typename F>
  void for_each_named(F&& f) const {
    const_cast<ModelParams*>(this)->for_each_named(
        [&f](const std::string& n, Tensor& t) { f(n, const_cast<const Tensor&>(t)); });
  }
};

// zero-filled parameters with the shapes implied by the config
ModelParams make_params(const ModelConfig& config);
// Glorot-uniform weights, zero biases
ModelParams init_params(const ModelConfig& config, Rng& rng);

enum class RunMode { Train, Eval };

// Batched node-outer feature layout: row ((b*N + n)*T + t).
struct ModelInput {
  int batch = 0, T = 0, J = 0, B = 0, channels = 0;
  MatRM vertex;  // (batch*J*T) x C
  MatRM edge;    // (batch*B*T) x C
};

ModelInput input_from_windows(const std::vector<const FeatureWindow*>& windows);
ModelInput input_from_window(const FeatureWindow& window);

struct BlockCache {
  const MatRM* in_v = nullptr;
  const MatRM* in_e = nullptr;
  MatRM as_e, at_e;      // incidence-aggregated edge features
  MatRM v1;              // spatial vertex output (post relu)
  MatRM ast_v1, att_v1;  // incidence-aggregated updated vertices
  MatRM e1;              // spatial edge output
  MatRM v1pad, e1pad;    // zero-padded temporal inputs
  MatRM v2, e2;          // block outputs (post temporal conv + relu)
};

struct ForwardCache {
  std::vector<BlockCache> blocks;
  Eigen::MatrixXd pooled;   // batch x 2*C_last
  MatRM mask;               // dropout mask, empty in eval mode
  Eigen::MatrixXd dropped;  // batch x 2*C_last
  Eigen::MatrixXd fc1;      // batch x H (post relu)
  Eigen::MatrixXd logits;   // batch x 3
};

MatRM sample_dropout_mask(int batch, int dim, double p, Rng& rng);

// One graph-temporal block on node-outer features ((batch*N*T) x C rows).
// Returns the vertex and edge outputs; `cache` keeps the intermediates needed
// by the backward pass.
void dgn_block_forward(const MatRM& vertex_feats, const MatRM& edge_feats, int batch, int T,
                       const IncidencePair& inc, const DgnBlockParams& params, BlockCache& cache);

// Returns batch x 3 logits (order pull, idle, push). Train mode requires a
// dropout mask of shape batch x 2*C_last.
Eigen::MatrixXd model_forward_batch(const ModelInput& input, const ModelParams& params,
                                    const IncidencePair& inc, RunMode mode,
                                    const MatRM* dropout_mask, ForwardCache* cache);

Eigen::Vector3d model_forward(const FeatureWindow& window, const ModelParams& params,
                              const IncidencePair& inc, RunMode mode = RunMode::Eval,
                              Rng* rng = nullptr);

// argmax with ties broken toward idle, then pull
IntentionClass select_class(const Eigen::Vector3d& logits);

// mean softmax cross-entropy over the batch (no weight-decay term)
double batch_loss(const Eigen::MatrixXd& logits, const std::vector<IntentionClass>& labels);

// Forward + manual backward; grads must be shaped like params (make_params)
// and are overwritten.
double loss_and_grad(const ModelInput& input, const std::vector<IntentionClass>& labels,
                     const ModelParams& params, const IncidencePair& inc,
                     const MatRM* dropout_mask, ModelParams& grads);

double loss_and_grad(const std::vector<std::pair<const FeatureWindow*, IntentionClass>>& batch,
                     const ModelParams& params, const IncidencePair& inc, Rng& rng,
                     ModelParams& grads);

struct TrainConfig {
  double learning_rate = 0.02;
  double weight_decay = 0.005;
  double momentum = 0.9;
  int batch_size = 16;
  int epochs = 6;
  std::uint64_t seed = 7;
  int prediction_offset = 25;  // frames between window end and the target label
  int train_stride = 5;
  int val_stride = 5;
  double stop_balanced_accuracy = 0.965;  // early stop threshold, <= 0 disables
  double max_grad_norm = 2.0;             // global-norm gradient clip, <= 0 disables
  ModelConfig model;
};

// scales the gradients in place so their global norm is at most max_norm;
// returns the pre-clip norm
double clip_gradients(ModelParams& grads, double max_norm);

struct SgdState {
  ModelParams velocity;
};

// velocity = momentum*velocity - lr*(grad + weight_decay*param); param += velocity
void sgd_step(ModelParams& params, const ModelParams& grads, const TrainConfig& cfg,
              SgdState& state);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  double val_balanced_accuracy = 0.0;
};

struct Checkpoint {
  std::string version = "copush-checkpoint-v1";
  ModelParams params;
  TrainConfig train_config;
  std::vector<EpochMetrics> history;
  std::string manifest_hash;
  std::vector<std::string> warnings;
};

void save_checkpoint(const Checkpoint& cp, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Recordings expanded to node-outer pelvis-relative features for fast window
// gathering.
struct RecordingFeatures {
  int frames = 0;
  MatRM vertex;  // (J*F) x 3, row j*F + f
  MatRM edge;    // (B*F) x 3
  std::vector<IntentionClass> labels;
};

struct TrainingSet {
  std::vector<RecordingFeatures> recordings;
  int J = 0, B = 0;
};

TrainingSet load_training_set(const DatasetManifest& manifest, const std::string& base_dir,
                              const DirectedSkeletonGraph& graph);

struct SampleRef {
  int recording = 0;
  int end_frame = 0;
  IntentionClass label = IntentionClass::Idle;
};

std::vector<SampleRef> make_samples(const TrainingSet& set, int window_length, int offset,
                                    int stride);

void gather_input(const TrainingSet& set, const std::vector<SampleRef>& refs, int window_length,
                  ModelInput& out);

// Trains on the manifests and returns the checkpoint of the epoch with the
// best validation balanced accuracy. Prints one metrics line per epoch.
Checkpoint train(const std::string& train_manifest_path, const std::string& val_manifest_path,
                 const TrainConfig& cfg);

// Central-difference verification on a 3-joint, 4-frame, 2-channel model.
// Returns max over parameters of |analytic - numeric| / max(|a|, |n|, 1e-8).
// corrupt_edge_gradient doubles one analytic gradient tensor first (negative
// control for the check itself).
double grad_check(std::uint64_t params_seed, double epsilon = 1e-5,
                  bool corrupt_edge_gradient = false);

}  // namespace copush
