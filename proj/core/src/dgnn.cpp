#include "copush/dgnn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "copush/error.hpp"
#include "copush/eval.hpp"
#include "copush/sequence_io.hpp"

namespace copush {

namespace {

std::size_t su(int v) { return static_cast<std::size_t>(v); }

void relu_inplace(MatRM& m) { m = m.cwiseMax(0.0); }

// dX := dY masked by (Y > 0)
void relu_backward(const MatRM& y, MatRM& dy) {
  dy.array() *= (y.array() > 0.0).cast<double>();
}

// Per-sample block-diagonal application of A (R_out x R_in) on node-outer
// features: out rows ((b*R_out + r)*T) = sum_q A(r, q) * in rows ((b*R_in + q)*T).
void apply_incidence(const Eigen::MatrixXd& A, const MatRM& in, int batch, int T, MatRM& out) {
  const int C = static_cast<int>(in.cols());
  const int r_in = static_cast<int>(A.cols());
  const int r_out = static_cast<int>(A.rows());
  out.resize(static_cast<Eigen::Index>(batch) * r_out * T, C);
  for (int b = 0; b < batch; ++b) {
    CMapRM in_view(in.data() + static_cast<std::size_t>(b) * r_in * T * C, r_in,
                   static_cast<Eigen::Index>(T) * C);
    MapRM out_view(out.data() + static_cast<std::size_t>(b) * r_out * T * C, r_out,
                   static_cast<Eigen::Index>(T) * C);
    out_view.noalias() = A * in_view;
  }
}

void add_incidence(const Eigen::MatrixXd& A, const MatRM& in, int batch, int T, MatRM& out) {
  const int C = static_cast<int>(in.cols());
  const int r_in = static_cast<int>(A.cols());
  const int r_out = static_cast<int>(A.rows());
  for (int b = 0; b < batch; ++b) {
    CMapRM in_view(in.data() + static_cast<std::size_t>(b) * r_in * T * C, r_in,
                   static_cast<Eigen::Index>(T) * C);
    MapRM out_view(out.data() + static_cast<std::size_t>(b) * r_out * T * C, r_out,
                   static_cast<Eigen::Index>(T) * C);
    out_view.noalias() += A * in_view;
  }
}

// Temporal convolution along t within each (sample, node) group. Kernel tap k
// pairs output frame t with input frame t + k - P, P = (K-1)/2; zero padding.
// `pad` is filled with the padded input ((groups*S) x C, S = T + 2P) for reuse
// in the backward pass.
void temporal_forward(const MatRM& in, int groups, int T, const Tensor& kernel,
                      const Tensor& bias, MatRM& pad, MatRM& out_pre) {
  const int K = static_cast<int>(kernel.dim(0));
  const int P = (K - 1) / 2;
  const int S = T + 2 * P;
  const int Ci = static_cast<int>(in.cols());
  const int Co = static_cast<int>(kernel.dim(2));
  const Eigen::Index H = static_cast<Eigen::Index>(groups) * S;

  pad.setZero(H, Ci);
  for (int g = 0; g < groups; ++g) {
    pad.middleRows(static_cast<Eigen::Index>(g) * S + P, T) =
        in.middleRows(static_cast<Eigen::Index>(g) * T, T);
  }
  // full[g*S + t] = sum_k pad[g*S + t + k] * W_k; rows t >= T are scratch
  MatRM full = MatRM::Zero(H, Co);
  for (int k = 0; k < K; ++k) {
    full.topRows(H - k).noalias() += pad.bottomRows(H - k) * kernel.slice(su(k));
  }
  out_pre.resize(static_cast<Eigen::Index>(groups) * T, Co);
  for (int g = 0; g < groups; ++g) {
    out_pre.middleRows(static_cast<Eigen::Index>(g) * T, T) =
        full.middleRows(static_cast<Eigen::Index>(g) * S, T);
  }
  out_pre.rowwise() += bias.vec().transpose();
}

void temporal_backward(const MatRM& pad, const MatRM& d_pre, int groups, int T,
                       const Tensor& kernel, Tensor& d_kernel, Tensor& d_bias, MatRM& d_in) {
  const int K = static_cast<int>(kernel.dim(0));
  const int P = (K - 1) / 2;
  const int S = T + 2 * P;
  const int Ci = static_cast<int>(pad.cols());
  const int Co = static_cast<int>(d_pre.cols());
  const Eigen::Index H = static_cast<Eigen::Index>(groups) * S;

  d_bias.vec() += d_pre.colwise().sum().transpose();

  // scatter d_pre into padded frame positions; tail rows (t in [T, S)) stay 0
  MatRM d_pre_pad = MatRM::Zero(H, Co);
  for (int g = 0; g < groups; ++g) {
    d_pre_pad.middleRows(static_cast<Eigen::Index>(g) * S, T) =
        d_pre.middleRows(static_cast<Eigen::Index>(g) * T, T);
  }
  MatRM d_pad = MatRM::Zero(H, Ci);
  for (int k = 0; k < K; ++k) {
    d_kernel.slice(su(k)).noalias() +=
        pad.bottomRows(H - k).transpose() * d_pre_pad.topRows(H - k);
    d_pad.bottomRows(H - k).noalias() += d_pre_pad.topRows(H - k) * kernel.slice(su(k)).transpose();
  }
  d_in.resize(static_cast<Eigen::Index>(groups) * T, Ci);
  for (int g = 0; g < groups; ++g) {
    d_in.middleRows(static_cast<Eigen::Index>(g) * T, T) =
        d_pad.middleRows(static_cast<Eigen::Index>(g) * S + P, T);
  }
}

CMapRM weight_rows(const Tensor& w, int row0, int rows) {
  const int cols = static_cast<int>(w.dim(1));
  return CMapRM(w.data.data() + static_cast<std::size_t>(row0) * cols, rows, cols);
}

MapRM weight_rows(Tensor& w, int row0, int rows) {
  const int cols = static_cast<int>(w.dim(1));
  return MapRM(w.data.data() + static_cast<std::size_t>(row0) * cols, rows, cols);
}

}  // namespace

ModelParams make_params(const ModelConfig& config) {
  if (config.channels.size() != 3) throw ValidationError("model config: expected 3 blocks");
  if (config.temporal_kernel % 2 == 0 || config.temporal_kernel < 1) {
    throw ValidationError("model config: temporal kernel must be odd");
  }
  ModelParams p;
  p.config = config;
  int ci = config.input_channels;
  for (int i = 0; i < 3; ++i) {
    const int co = config.channels[su(i)];
    const auto k = su(config.temporal_kernel);
    DgnBlockParams b;
    b.vertex_weight = Tensor({su(3 * ci), su(co)});
    b.vertex_bias = Tensor({su(co)});
    b.edge_weight = Tensor({su(ci + 2 * co), su(co)});
    b.edge_bias = Tensor({su(co)});
    b.temporal_vertex = Tensor({k, su(co), su(co)});
    b.temporal_vertex_bias = Tensor({su(co)});
    b.temporal_edge = Tensor({k, su(co), su(co)});
    b.temporal_edge_bias = Tensor({su(co)});
    p.blocks.push_back(std::move(b));
    ci = co;
  }
  const int c_last = config.channels.back();
  p.fc1_weight = Tensor({su(2 * c_last), su(config.fc_hidden)});
  p.fc1_bias = Tensor({su(config.fc_hidden)});
  p.fc2_weight = Tensor({su(config.fc_hidden), 3});
  p.fc2_bias = Tensor({3});
  return p;
}

namespace {

// Uniform(+-sqrt(6/fan_in)): keeps activation variance roughly constant
// through the relu stack. Symmetric-fan scaling shrinks the signal by ~0.7x
// per stage here, which leaves the pooled features (and the gradients) orders
// of magnitude too small for the 0.02 learning rate.
void he_uniform_fill(Tensor& t, double fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / fan_in);
  for (auto& v : t.data) v = rng.uniform(-limit, limit);
}

}  // namespace

ModelParams init_params(const ModelConfig& config, Rng& rng) {
  ModelParams p = make_params(config);
  for (auto& b : p.blocks) {
    he_uniform_fill(b.vertex_weight, static_cast<double>(b.vertex_weight.dim(0)), rng);
    he_uniform_fill(b.edge_weight, static_cast<double>(b.edge_weight.dim(0)), rng);
    const double k = static_cast<double>(b.temporal_vertex.dim(0));
    const double c = static_cast<double>(b.temporal_vertex.dim(1));
    he_uniform_fill(b.temporal_vertex, c * k, rng);
    he_uniform_fill(b.temporal_edge, c * k, rng);
  }
  he_uniform_fill(p.fc1_weight, static_cast<double>(p.fc1_weight.dim(0)), rng);
  he_uniform_fill(p.fc2_weight, static_cast<double>(p.fc2_weight.dim(0)), rng);
  return p;
}

ModelInput input_from_windows(const std::vector<const FeatureWindow*>& windows) {
  if (windows.empty()) throw ValidationError("input_from_windows: empty batch");
  const auto& w0 = *windows.front();
  ModelInput in;
  in.batch = static_cast<int>(windows.size());
  in.T = w0.window_length;
  in.J = static_cast<int>(w0.joints.dim(1));
  in.B = static_cast<int>(w0.bones.dim(1));
  in.channels = 3;
  in.vertex.resize(static_cast<Eigen::Index>(in.batch) * in.J * in.T, 3);
  in.edge.resize(static_cast<Eigen::Index>(in.batch) * in.B * in.T, 3);
  for (int b = 0; b < in.batch; ++b) {
    const auto& w = *windows[su(b)];
    if (w.window_length != in.T || static_cast<int>(w.joints.dim(1)) != in.J) {
      throw ValidationError("input_from_windows: inconsistent window shapes");
    }
    for (int t = 0; t < in.T; ++t) {
      for (int j = 0; j < in.J; ++j) {
        const double* src = w.joints.data.data() + (su(t) * su(in.J) + su(j)) * 3;
        double* dst = in.vertex.data() + ((su(b) * su(in.J) + su(j)) * su(in.T) + su(t)) * 3;
        std::copy(src, src + 3, dst);
      }
      for (int e = 0; e < in.B; ++e) {
        const double* src = w.bones.data.data() + (su(t) * su(in.B) + su(e)) * 3;
        double* dst = in.edge.data() + ((su(b) * su(in.B) + su(e)) * su(in.T) + su(t)) * 3;
        std::copy(src, src + 3, dst);
      }
    }
  }
  return in;
}

ModelInput input_from_window(const FeatureWindow& window) {
  return input_from_windows({&window});
}

MatRM sample_dropout_mask(int batch, int dim, double p, Rng& rng) {
  MatRM mask(batch, dim);
  for (int i = 0; i < batch; ++i) {
    for (int j = 0; j < dim; ++j) mask(i, j) = rng.uniform() >= p ? 1.0 : 0.0;
  }
  return mask;
}

void dgn_block_forward(const MatRM& vertex_feats, const MatRM& edge_feats, int batch, int T,
                       const IncidencePair& inc, const DgnBlockParams& params, BlockCache& bc) {
  const int ci = static_cast<int>(params.vertex_weight.dim(0)) / 3;
  const int co = static_cast<int>(params.vertex_weight.dim(1));
  const int J = static_cast<int>(inc.source.rows());
  const int B = static_cast<int>(inc.source.cols());
  if (static_cast<int>(vertex_feats.cols()) != ci || static_cast<int>(edge_feats.cols()) != ci ||
      vertex_feats.rows() != static_cast<Eigen::Index>(batch) * J * T ||
      edge_feats.rows() != static_cast<Eigen::Index>(batch) * B * T) {
    throw ValidationError("dgn_block_forward: feature shapes inconsistent with graph/params");
  }
  bc.in_v = &vertex_feats;
  bc.in_e = &edge_feats;

  // spatial vertex update from [v, A_s e, A_t e]
  apply_incidence(inc.source, edge_feats, batch, T, bc.as_e);
  apply_incidence(inc.target, edge_feats, batch, T, bc.at_e);
  bc.v1.resize(vertex_feats.rows(), co);
  bc.v1.noalias() = vertex_feats * weight_rows(params.vertex_weight, 0, ci);
  bc.v1.noalias() += bc.as_e * weight_rows(params.vertex_weight, ci, ci);
  bc.v1.noalias() += bc.at_e * weight_rows(params.vertex_weight, 2 * ci, ci);
  bc.v1.rowwise() += params.vertex_bias.vec().transpose();
  relu_inplace(bc.v1);

  // spatial edge update from [e, A_s^T v', A_t^T v']
  apply_incidence(inc.source.transpose(), bc.v1, batch, T, bc.ast_v1);
  apply_incidence(inc.target.transpose(), bc.v1, batch, T, bc.att_v1);
  bc.e1.resize(edge_feats.rows(), co);
  bc.e1.noalias() = edge_feats * weight_rows(params.edge_weight, 0, ci);
  bc.e1.noalias() += bc.ast_v1 * weight_rows(params.edge_weight, ci, co);
  bc.e1.noalias() += bc.att_v1 * weight_rows(params.edge_weight, ci + co, co);
  bc.e1.rowwise() += params.edge_bias.vec().transpose();
  relu_inplace(bc.e1);

  // temporal stage, each stream independently
  temporal_forward(bc.v1, batch * J, T, params.temporal_vertex, params.temporal_vertex_bias,
                   bc.v1pad, bc.v2);
  relu_inplace(bc.v2);
  temporal_forward(bc.e1, batch * B, T, params.temporal_edge, params.temporal_edge_bias,
                   bc.e1pad, bc.e2);
  relu_inplace(bc.e2);

  if (!bc.v2.allFinite() || !bc.e2.allFinite()) {
    throw NumericalError("non-finite activation");
  }
}

Eigen::MatrixXd model_forward_batch(const ModelInput& input, const ModelParams& params,
                                    const IncidencePair& inc, RunMode mode,
                                    const MatRM* dropout_mask, ForwardCache* cache) {
  if (input.channels != params.config.input_channels) {
    throw ValidationError("model_forward: input channel mismatch");
  }
  if (inc.source.rows() != input.J || inc.source.cols() != input.B) {
    throw ValidationError("model_forward: incidence shape mismatch");
  }
  const int batch = input.batch;
  const int T = input.T;

  ForwardCache local;
  ForwardCache& c = cache != nullptr ? *cache : local;
  c.blocks.assign(3, BlockCache{});

  const MatRM* v_in = &input.vertex;
  const MatRM* e_in = &input.edge;
  for (int i = 0; i < 3; ++i) {
    BlockCache& bc = c.blocks[su(i)];
    const DgnBlockParams& bp = params.blocks[su(i)];
    const int ci = static_cast<int>(bp.vertex_weight.dim(0)) / 3;
    if (static_cast<int>(v_in->cols()) != ci) {
      throw ValidationError("model_forward: channel plan mismatch at block " + std::to_string(i));
    }
    try {
      dgn_block_forward(*v_in, *e_in, batch, T, inc, bp, bc);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " in block " + std::to_string(i));
    }
    v_in = &bc.v2;
    e_in = &bc.e2;
  }

  // global average pooling over frames and nodes
  const int c_last = params.config.channels.back();
  c.pooled.resize(batch, 2 * c_last);
  const auto& v_out = c.blocks[2].v2;
  const auto& e_out = c.blocks[2].e2;
  for (int b = 0; b < batch; ++b) {
    c.pooled.row(b).head(c_last) =
        v_out.middleRows(static_cast<Eigen::Index>(b) * input.J * T, input.J * T).colwise().mean();
    c.pooled.row(b).tail(c_last) =
        e_out.middleRows(static_cast<Eigen::Index>(b) * input.B * T, input.B * T).colwise().mean();
  }

  if (mode == RunMode::Train) {
    if (dropout_mask == nullptr || dropout_mask->rows() != batch ||
        dropout_mask->cols() != 2 * c_last) {
      throw ValidationError("model_forward: train mode requires a batch x 2C dropout mask");
    }
    c.mask = *dropout_mask;
    c.dropped = c.pooled.cwiseProduct(c.mask) / (1.0 - params.config.dropout_p);
  } else {
    c.mask.resize(0, 0);
    c.dropped = c.pooled;
  }

  c.fc1.noalias() = c.dropped * params.fc1_weight.mat();
  c.fc1.rowwise() += params.fc1_bias.vec().transpose();
  c.fc1 = c.fc1.cwiseMax(0.0);
  c.logits.noalias() = c.fc1 * params.fc2_weight.mat();
  c.logits.rowwise() += params.fc2_bias.vec().transpose();
  if (!c.logits.allFinite()) throw NumericalError("non-finite logits");
  return c.logits;
}

Eigen::Vector3d model_forward(const FeatureWindow& window, const ModelParams& params,
                              const IncidencePair& inc, RunMode mode, Rng* rng) {
  const ModelInput in = input_from_window(window);
  MatRM mask;
  const MatRM* mask_ptr = nullptr;
  if (mode == RunMode::Train) {
    if (rng == nullptr) throw ValidationError("model_forward: train mode requires an rng");
    mask = sample_dropout_mask(1, 2 * params.config.channels.back(), params.config.dropout_p,
                               *rng);
    mask_ptr = &mask;
  }
  const Eigen::MatrixXd logits = model_forward_batch(in, params, inc, mode, mask_ptr, nullptr);
  return logits.row(0).transpose();
}

IntentionClass select_class(const Eigen::Vector3d& logits) {
  if (!logits.allFinite()) throw ValidationError("select_class: non-finite logits");
  int best = 1;  // idle
  if (logits(0) > logits(best)) best = 0;  // pull
  if (logits(2) > logits(best)) best = 2;  // push
  return class_from_index(best);
}

double batch_loss(const Eigen::MatrixXd& logits, const std::vector<IntentionClass>& labels) {
  if (static_cast<std::size_t>(logits.rows()) != labels.size() || labels.empty()) {
    throw ValidationError("batch_loss: logits/labels size mismatch");
  }
  double loss = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    const double lse = std::log((logits.row(i).array() - m).exp().sum()) + m;
    loss += lse - logits(i, class_index(labels[su(static_cast<int>(i))]));
  }
  loss /= static_cast<double>(logits.rows());
  if (!std::isfinite(loss)) throw NumericalError("loss overflow");
  return loss;
}

namespace {

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p = logits;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double m = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

}  // namespace

double loss_and_grad(const ModelInput& input, const std::vector<IntentionClass>& labels,
                     const ModelParams& params, const IncidencePair& inc,
                     const MatRM* dropout_mask, ModelParams& grads) {
  if (labels.size() != su(input.batch) || labels.empty()) {
    throw ValidationError("loss_and_grad: empty or mismatched batch");
  }
  ForwardCache cache;
  const Eigen::MatrixXd logits =
      model_forward_batch(input, params, inc, RunMode::Train, dropout_mask, &cache);
  const double loss = batch_loss(logits, labels);

  grads.for_each_named([](const std::string&, Tensor& t) { t.set_zero(); });

  const int batch = input.batch;
  const int T = input.T;
  const int c_last = params.config.channels.back();

  Eigen::MatrixXd dlogits = softmax_rows(logits);
  for (int i = 0; i < batch; ++i) dlogits(i, class_index(labels[su(i)])) -= 1.0;
  dlogits /= static_cast<double>(batch);

  // head
  grads.fc2_weight.mat().noalias() += cache.fc1.transpose() * dlogits;
  grads.fc2_bias.vec() += dlogits.colwise().sum().transpose();
  Eigen::MatrixXd dfc1 = dlogits * params.fc2_weight.mat().transpose();
  dfc1.array() *= (cache.fc1.array() > 0.0).cast<double>();
  grads.fc1_weight.mat().noalias() += cache.dropped.transpose() * dfc1;
  grads.fc1_bias.vec() += dfc1.colwise().sum().transpose();
  Eigen::MatrixXd dpool = dfc1 * params.fc1_weight.mat().transpose();
  dpool = dpool.cwiseProduct(cache.mask) / (1.0 - params.config.dropout_p);

  // unpool
  MatRM dv(static_cast<Eigen::Index>(batch) * input.J * T, c_last);
  MatRM de(static_cast<Eigen::Index>(batch) * input.B * T, c_last);
  for (int b = 0; b < batch; ++b) {
    dv.middleRows(static_cast<Eigen::Index>(b) * input.J * T, input.J * T).rowwise() =
        dpool.row(b).head(c_last) / static_cast<double>(input.J * T);
    de.middleRows(static_cast<Eigen::Index>(b) * input.B * T, input.B * T).rowwise() =
        dpool.row(b).tail(c_last) / static_cast<double>(input.B * T);
  }

  const Eigen::MatrixXd source_t = inc.source.transpose();
  const Eigen::MatrixXd target_t = inc.target.transpose();

  for (int i = 2; i >= 0; --i) {
    const BlockCache& bc = cache.blocks[su(i)];
    const DgnBlockParams& bp = params.blocks[su(i)];
    DgnBlockParams& bg = grads.blocks[su(i)];
    const int ci = static_cast<int>(bp.vertex_weight.dim(0)) / 3;
    const int co = static_cast<int>(bp.vertex_weight.dim(1));

    // temporal backward (relu at the block output first)
    relu_backward(bc.v2, dv);
    relu_backward(bc.e2, de);
    MatRM dv1, de1;
    temporal_backward(bc.v1pad, dv, batch * input.J, T, bp.temporal_vertex, bg.temporal_vertex,
                      bg.temporal_vertex_bias, dv1);
    temporal_backward(bc.e1pad, de, batch * input.B, T, bp.temporal_edge, bg.temporal_edge,
                      bg.temporal_edge_bias, de1);

    // edge spatial backward (feeds additional gradient into v1)
    relu_backward(bc.e1, de1);
    weight_rows(bg.edge_weight, 0, ci).noalias() += bc.in_e->transpose() * de1;
    weight_rows(bg.edge_weight, ci, co).noalias() += bc.ast_v1.transpose() * de1;
    weight_rows(bg.edge_weight, ci + co, co).noalias() += bc.att_v1.transpose() * de1;
    bg.edge_bias.vec() += de1.colwise().sum().transpose();
    MatRM de_direct = de1 * weight_rows(bp.edge_weight, 0, ci).transpose();
    const MatRM d_ast = de1 * weight_rows(bp.edge_weight, ci, co).transpose();
    const MatRM d_att = de1 * weight_rows(bp.edge_weight, ci + co, co).transpose();
    add_incidence(inc.source, d_ast, batch, T, dv1);
    add_incidence(inc.target, d_att, batch, T, dv1);

    // vertex spatial backward
    relu_backward(bc.v1, dv1);
    weight_rows(bg.vertex_weight, 0, ci).noalias() += bc.in_v->transpose() * dv1;
    weight_rows(bg.vertex_weight, ci, ci).noalias() += bc.as_e.transpose() * dv1;
    weight_rows(bg.vertex_weight, 2 * ci, ci).noalias() += bc.at_e.transpose() * dv1;
    bg.vertex_bias.vec() += dv1.colwise().sum().transpose();

    if (i > 0) {
      dv.resize(bc.in_v->rows(), ci);
      dv.noalias() = dv1 * weight_rows(bp.vertex_weight, 0, ci).transpose();
      const MatRM d_as = dv1 * weight_rows(bp.vertex_weight, ci, ci).transpose();
      const MatRM d_at = dv1 * weight_rows(bp.vertex_weight, 2 * ci, ci).transpose();
      de = de_direct;
      add_incidence(source_t, d_as, batch, T, de);
      add_incidence(target_t, d_at, batch, T, de);
    }
  }
  return loss;
}

double loss_and_grad(const std::vector<std::pair<const FeatureWindow*, IntentionClass>>& batch,
                     const ModelParams& params, const IncidencePair& inc, Rng& rng,
                     ModelParams& grads) {
  if (batch.empty()) throw ValidationError("loss_and_grad: empty batch");
  std::vector<const FeatureWindow*> windows;
  std::vector<IntentionClass> labels;
  for (const auto& [w, l] : batch) {
    windows.push_back(w);
    labels.push_back(l);
  }
  const ModelInput input = input_from_windows(windows);
  const MatRM mask = sample_dropout_mask(input.batch, 2 * params.config.channels.back(),
                                         params.config.dropout_p, rng);
  return loss_and_grad(input, labels, params, inc, &mask, grads);
}

double clip_gradients(ModelParams& grads, double max_norm) {
  double sq = 0.0;
  grads.for_each_named([&sq](const std::string&, Tensor& t) { sq += t.vec().squaredNorm(); });
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    grads.for_each_named([scale](const std::string&, Tensor& t) { t.vec() *= scale; });
  }
  return norm;
}

void sgd_step(ModelParams& params, const ModelParams& grads, const TrainConfig& cfg,
              SgdState& state) {
  if (state.velocity.blocks.empty()) state.velocity = make_params(params.config);
  auto step_tensor = [&cfg](Tensor& p, const Tensor& g, Tensor& v) {
    if (p.size() != g.size() || p.size() != v.size()) {
      throw ValidationError("sgd_step: shape mismatch");
    }
    v.vec() = cfg.momentum * v.vec() - cfg.learning_rate * (g.vec() + cfg.weight_decay * p.vec());
    p.vec() += v.vec();
  };
  for (std::size_t i = 0; i < params.blocks.size(); ++i) {
    auto& pb = params.blocks[i];
    const auto& gb = grads.blocks[i];
    auto& vb = state.velocity.blocks[i];
    step_tensor(pb.vertex_weight, gb.vertex_weight, vb.vertex_weight);
    step_tensor(pb.vertex_bias, gb.vertex_bias, vb.vertex_bias);
    step_tensor(pb.edge_weight, gb.edge_weight, vb.edge_weight);
    step_tensor(pb.edge_bias, gb.edge_bias, vb.edge_bias);
    step_tensor(pb.temporal_vertex, gb.temporal_vertex, vb.temporal_vertex);
    step_tensor(pb.temporal_vertex_bias, gb.temporal_vertex_bias, vb.temporal_vertex_bias);
    step_tensor(pb.temporal_edge, gb.temporal_edge, vb.temporal_edge);
    step_tensor(pb.temporal_edge_bias, gb.temporal_edge_bias, vb.temporal_edge_bias);
  }
  step_tensor(params.fc1_weight, grads.fc1_weight, state.velocity.fc1_weight);
  step_tensor(params.fc1_bias, grads.fc1_bias, state.velocity.fc1_bias);
  step_tensor(params.fc2_weight, grads.fc2_weight, state.velocity.fc2_weight);
  step_tensor(params.fc2_bias, grads.fc2_bias, state.velocity.fc2_bias);
}

// ---------------------------------------------------------------------------
// checkpoint io

namespace {

nlohmann::ordered_json train_config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["learning_rate"] = c.learning_rate;
  j["weight_decay"] = c.weight_decay;
  j["momentum"] = c.momentum;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["prediction_offset"] = c.prediction_offset;
  j["train_stride"] = c.train_stride;
  j["val_stride"] = c.val_stride;
  j["stop_balanced_accuracy"] = c.stop_balanced_accuracy;
  j["max_grad_norm"] = c.max_grad_norm;
  j["model"] = {{"channels", c.model.channels},
                {"temporal_kernel", c.model.temporal_kernel},
                {"fc_hidden", c.model.fc_hidden},
                {"input_channels", c.model.input_channels},
                {"dropout_p", c.model.dropout_p}};
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.momentum = j.at("momentum").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.prediction_offset = j.at("prediction_offset").get<int>();
  c.train_stride = j.at("train_stride").get<int>();
  c.val_stride = j.at("val_stride").get<int>();
  c.stop_balanced_accuracy = j.at("stop_balanced_accuracy").get<double>();
  c.max_grad_norm = j.value("max_grad_norm", 2.0);
  const auto& m = j.at("model");
  c.model.channels = m.at("channels").get<std::vector<int>>();
  c.model.temporal_kernel = m.at("temporal_kernel").get<int>();
  c.model.fc_hidden = m.at("fc_hidden").get<int>();
  c.model.input_channels = m.at("input_channels").get<int>();
  c.model.dropout_p = m.at("dropout_p").get<double>();
  return c;
}

constexpr const char* kCheckpointVersion = "copush-checkpoint-v1";

}  // namespace

void save_checkpoint(const Checkpoint& cp, const std::string& path) {
  nlohmann::ordered_json j;
  j["version"] = cp.version;
  j["train_config"] = train_config_to_json(cp.train_config);
  j["manifest_hash"] = cp.manifest_hash;
  j["warnings"] = cp.warnings;
  j["history"] = nlohmann::ordered_json::array();
  for (const auto& h : cp.history) {
    j["history"].push_back({{"epoch", h.epoch},
                            {"train_loss", h.train_loss},
                            {"val_accuracy", h.val_accuracy},
                            {"val_balanced_accuracy", h.val_balanced_accuracy}});
  }
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
  cp.params.for_each_named([&params](const std::string& name, const Tensor& t) {
    nlohmann::ordered_json entry;
    entry["shape"] = t.shape;
    entry["data"] = t.data;
    params[name] = std::move(entry);
  });
  j["params"] = std::move(params);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump() << "\n";
  if (!out) throw IoError("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint " + path + ": " + e.what());
  }
  Checkpoint cp;
  cp.version = j.at("version").get<std::string>();
  if (cp.version != kCheckpointVersion) {
    throw ValidationError("checkpoint version mismatch: got '" + cp.version + "', expected '" +
                          kCheckpointVersion + "'");
  }
  cp.train_config = train_config_from_json(j.at("train_config"));
  cp.manifest_hash = j.at("manifest_hash").get<std::string>();
  cp.warnings = j.at("warnings").get<std::vector<std::string>>();
  for (const auto& h : j.at("history")) {
    cp.history.push_back({h.at("epoch").get<int>(), h.at("train_loss").get<double>(),
                          h.at("val_accuracy").get<double>(),
                          h.at("val_balanced_accuracy").get<double>()});
  }
  cp.params = make_params(cp.train_config.model);
  const auto& params = j.at("params");
  cp.params.for_each_named([&params, &path](const std::string& name, Tensor& t) {
    if (!params.contains(name)) throw IoError("corrupt checkpoint " + path + ": missing " + name);
    const auto& entry = params.at(name);
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (shape != t.shape) throw IoError("corrupt checkpoint " + path + ": bad shape for " + name);
    const auto data = entry.at("data").get<std::vector<double>>();
    if (data.size() != t.data.size()) {
      throw IoError("corrupt checkpoint " + path + ": bad data size for " + name);
    }
    t.data = data;
  });
  return cp;
}

// ---------------------------------------------------------------------------
// training

TrainingSet load_training_set(const DatasetManifest& manifest, const std::string& base_dir,
                              const DirectedSkeletonGraph& graph) {
  TrainingSet set;
  set.J = graph.joint_count;
  set.B = graph.bone_count;
  for (const auto& rec : manifest.recordings) {
    const LoadedSequence seq = load_sequence_jsonl(base_dir + "/" + rec.path);
    RecordingFeatures rf;
    const int F = static_cast<int>(seq.frames.size());
    rf.frames = F;
    rf.labels = seq.labels;
    rf.vertex.resize(static_cast<Eigen::Index>(set.J) * F, 3);
    rf.edge.resize(static_cast<Eigen::Index>(set.B) * F, 3);
    for (int f = 0; f < F; ++f) {
      const SkeletonFrame rel = to_pelvis_frame(seq.frames[su(f)], graph);
      const auto bones = bones_from_joints(rel, graph);
      for (int jj = 0; jj < set.J; ++jj) {
        rf.vertex.row(static_cast<Eigen::Index>(jj) * F + f) = rel.joint_positions.row(jj);
      }
      for (int e = 0; e < set.B; ++e) {
        rf.edge.row(static_cast<Eigen::Index>(e) * F + f) = bones.row(e);
      }
    }
    set.recordings.push_back(std::move(rf));
  }
  return set;
}

std::vector<SampleRef> make_samples(const TrainingSet& set, int window_length, int offset,
                                    int stride) {
  std::vector<SampleRef> refs;
  for (std::size_t r = 0; r < set.recordings.size(); ++r) {
    const auto& rec = set.recordings[r];
    for (int end = window_length - 1; end + offset < rec.frames; end += stride) {
      refs.push_back({static_cast<int>(r), end, rec.labels[su(end + offset)]});
    }
  }
  return refs;
}

void gather_input(const TrainingSet& set, const std::vector<SampleRef>& refs, int window_length,
                  ModelInput& out) {
  const int T = window_length;
  out.batch = static_cast<int>(refs.size());
  out.T = T;
  out.J = set.J;
  out.B = set.B;
  out.channels = 3;
  out.vertex.resize(static_cast<Eigen::Index>(out.batch) * set.J * T, 3);
  out.edge.resize(static_cast<Eigen::Index>(out.batch) * set.B * T, 3);
  for (int b = 0; b < out.batch; ++b) {
    const auto& rec = set.recordings[su(refs[su(b)].recording)];
    const int start = refs[su(b)].end_frame - T + 1;
    for (int j = 0; j < set.J; ++j) {
      out.vertex.middleRows((static_cast<Eigen::Index>(b) * set.J + j) * T, T) =
          rec.vertex.middleRows(static_cast<Eigen::Index>(j) * rec.frames + start, T);
    }
    for (int e = 0; e < set.B; ++e) {
      out.edge.middleRows((static_cast<Eigen::Index>(b) * set.B + e) * T, T) =
          rec.edge.middleRows(static_cast<Eigen::Index>(e) * rec.frames + start, T);
    }
  }
}

namespace {

std::string dir_of(const std::string& path) {
  const auto p = std::filesystem::path(path).parent_path();
  return p.empty() ? std::string(".") : p.string();
}

struct ValMetrics {
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
};

ValMetrics evaluate(const TrainingSet& set, const std::vector<SampleRef>& refs,
                    const ModelParams& params, const IncidencePair& inc, int window_length) {
  std::vector<int> predictions, truths;
  predictions.reserve(refs.size());
  constexpr int kEvalBatch = 64;
  ModelInput input;
  for (std::size_t i = 0; i < refs.size(); i += kEvalBatch) {
    const std::vector<SampleRef> chunk(refs.begin() + static_cast<std::ptrdiff_t>(i),
                                       refs.begin() + static_cast<std::ptrdiff_t>(std::min(
                                                          i + kEvalBatch, refs.size())));
    gather_input(set, chunk, window_length, input);
    const Eigen::MatrixXd logits =
        model_forward_batch(input, params, inc, RunMode::Eval, nullptr, nullptr);
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      predictions.push_back(static_cast<int>(select_class(logits.row(r).transpose())));
      truths.push_back(static_cast<int>(chunk[su(static_cast<int>(r))].label));
    }
  }
  const ClassificationMetrics m = classification_metrics(predictions, truths);
  return {m.accuracy, m.balanced_accuracy};
}

}  // namespace

Checkpoint train(const std::string& train_manifest_path, const std::string& val_manifest_path,
                 const TrainConfig& cfg) {
  if (cfg.learning_rate <= 0.0 || cfg.batch_size < 1 || cfg.epochs < 1 ||
      cfg.prediction_offset < 0 || cfg.train_stride < 1 || cfg.val_stride < 1) {
    throw ValidationError("train: invalid config");
  }
  const DirectedSkeletonGraph graph = build_topology();
  const IncidencePair inc = incidence_matrices(graph);

  const DatasetManifest train_manifest = load_manifest(train_manifest_path);
  const DatasetManifest val_manifest = load_manifest(val_manifest_path);
  if (train_manifest.recordings.empty()) throw ValidationError("train: empty training split");
  if (val_manifest.recordings.empty()) throw ValidationError("train: empty validation split");

  const TrainingSet train_set =
      load_training_set(train_manifest, dir_of(train_manifest_path), graph);
  const TrainingSet val_set = load_training_set(val_manifest, dir_of(val_manifest_path), graph);

  std::vector<SampleRef> samples =
      make_samples(train_set, kWindowLength, cfg.prediction_offset, cfg.train_stride);
  const std::vector<SampleRef> val_samples =
      make_samples(val_set, kWindowLength, cfg.prediction_offset, cfg.val_stride);
  if (samples.empty() || val_samples.empty()) {
    throw ValidationError("train: no usable windows in a split");
  }

  Checkpoint cp;
  cp.train_config = cfg;
  {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a_file(train_manifest_path) ^
                                                  (fnv1a_file(val_manifest_path) * 0x100000001b3ULL)));
    cp.manifest_hash = buf;
  }
  std::array<std::size_t, 3> class_counts = {0, 0, 0};
  for (const auto& s : samples) ++class_counts[su(class_index(s.label))];
  for (int c = 0; c < 3; ++c) {
    if (class_counts[su(c)] == 0) {
      cp.warnings.push_back("class " + std::to_string(c - 1) + " absent from training data");
    }
  }

  Rng rng(cfg.seed);
  ModelParams params = init_params(cfg.model, rng);
  ModelParams grads = make_params(cfg.model);
  SgdState opt;
  ModelParams best = params;
  double best_balanced = -1.0;

  std::printf("training: %zu windows, %zu validation windows\n", samples.size(),
              val_samples.size());
  ModelInput input;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    rng.shuffle(samples);
    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t i = 0; i < samples.size(); i += su(cfg.batch_size)) {
      const std::vector<SampleRef> chunk(
          samples.begin() + static_cast<std::ptrdiff_t>(i),
          samples.begin() +
              static_cast<std::ptrdiff_t>(std::min(i + su(cfg.batch_size), samples.size())));
      gather_input(train_set, chunk, kWindowLength, input);
      std::vector<IntentionClass> labels;
      labels.reserve(chunk.size());
      for (const auto& s : chunk) labels.push_back(s.label);
      const MatRM mask = sample_dropout_mask(input.batch, 2 * cfg.model.channels.back(),
                                             cfg.model.dropout_p, rng);
      loss_sum += loss_and_grad(input, labels, params, inc, &mask, grads);
      clip_gradients(grads, cfg.max_grad_norm);
      sgd_step(params, grads, cfg, opt);
      ++n_batches;
    }
    const ValMetrics vm = evaluate(val_set, val_samples, params, inc, kWindowLength);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = loss_sum / static_cast<double>(n_batches);
    em.val_accuracy = vm.accuracy;
    em.val_balanced_accuracy = vm.balanced_accuracy;
    cp.history.push_back(em);
    std::printf("epoch %d: loss %.4f, val acc %.4f, val balanced acc %.4f (%.1f s)\n", epoch,
                em.train_loss, em.val_accuracy, em.val_balanced_accuracy, secs);
    std::fflush(stdout);
    if (em.val_balanced_accuracy >= best_balanced) {
      best_balanced = em.val_balanced_accuracy;
      best = params;
    }
    if (cfg.stop_balanced_accuracy > 0.0 && em.val_balanced_accuracy >= cfg.stop_balanced_accuracy) {
      break;
    }
  }
  cp.params = best;
  return cp;
}

// ---------------------------------------------------------------------------
// gradient verification

double grad_check(std::uint64_t params_seed, double epsilon, bool corrupt_edge_gradient) {
  if (epsilon <= 0.0) throw ValidationError("grad_check: epsilon must be positive");

  // 3-joint micro graph: 0 -> 1, 0 -> 2
  DirectedSkeletonGraph graph;
  graph.joint_count = 3;
  graph.bone_count = 2;
  graph.root_joint = 0;
  graph.bones = {{0, 1}, {0, 2}};
  const IncidencePair inc = incidence_matrices(graph);

  ModelConfig mc;
  mc.channels = {2, 2, 2};
  mc.temporal_kernel = 3;
  mc.fc_hidden = 4;
  mc.input_channels = 2;
  mc.dropout_p = 0.3;

  Rng rng(params_seed);
  ModelParams params = init_params(mc, rng);
  // Random biases keep pre-activations away from the relu kinks, where a
  // central difference straddles the nondifferentiable point.
  params.for_each_named([&rng](const std::string& name, Tensor& t) {
    if (name.find("bias") != std::string::npos) {
      for (auto& v : t.data) v = rng.uniform(-0.3, 0.3);
    }
  });

  ModelInput input;
  input.batch = 2;
  input.T = 4;
  input.J = 3;
  input.B = 2;
  input.channels = 2;
  input.vertex.resize(input.batch * input.J * input.T, 2);
  input.edge.resize(input.batch * input.B * input.T, 2);
  for (Eigen::Index i = 0; i < input.vertex.size(); ++i) {
    input.vertex.data()[i] = rng.uniform(-2.0, 2.0);
  }
  for (Eigen::Index i = 0; i < input.edge.size(); ++i) {
    input.edge.data()[i] = rng.uniform(-2.0, 2.0);
  }
  const std::vector<IntentionClass> labels = {IntentionClass::Pull, IntentionClass::Push};
  const MatRM mask = sample_dropout_mask(input.batch, 2 * mc.channels.back(), mc.dropout_p, rng);

  ModelParams grads = make_params(mc);
  loss_and_grad(input, labels, params, inc, &mask, grads);
  if (corrupt_edge_gradient) {
    grads.blocks[0].edge_weight.vec() *= 2.0;
  }

  auto loss_at = [&]() {
    const Eigen::MatrixXd logits =
        model_forward_batch(input, params, inc, RunMode::Train, &mask, nullptr);
    return batch_loss(logits, labels);
  };

  double max_rel = 0.0;
  std::vector<std::pair<Tensor*, const Tensor*>> pairs;
  params.for_each_named([&](const std::string& name, Tensor& t) {
    const Tensor* g = nullptr;
    grads.for_each_named([&](const std::string& gname, Tensor& gt) {
      if (gname == name) g = &gt;
    });
    pairs.emplace_back(&t, g);
  });
  for (auto& [t, g] : pairs) {
    for (std::size_t k = 0; k < t->data.size(); ++k) {
      const double saved = t->data[k];
      t->data[k] = saved + epsilon;
      const double lp = loss_at();
      t->data[k] = saved - epsilon;
      const double lm = loss_at();
      t->data[k] = saved;
      const double numeric = (lp - lm) / (2.0 * epsilon);
      const double analytic = g->data[k];
      const double rel =
          std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace copush
