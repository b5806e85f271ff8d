#include "asvplan/classifier.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <map>
#include <numeric>
#include <sstream>

#include "asvplan/errors.hpp"
#include "asvplan/rng.hpp"
#include "asvplan/strfmt.hpp"

namespace asvplan::classifier {

using topology::PassingSide;
using json = nlohmann::json;

std::vector<FeatureVector> extract_features(const ObservationWindow& window) {
  if (window.fixes.empty() || window.fixes.size() != window.ego.size()) {
    throw EmptyWindow("extract_features: empty or mismatched window");
  }
  std::vector<FeatureVector> out;
  out.reserve(window.fixes.size());
  for (std::size_t i = 0; i < window.fixes.size(); ++i) {
    const Vec2 lambda = window.fixes[i].pos - window.ego[i].pos;
    const double range = norm(lambda);
    if (range == 0.0) continue;  // coincident fix carries no LOS direction
    FeatureVector f;
    f.dx = lambda.x;
    f.dy = lambda.y;
    f.range = range;
    const double psi = window.fixes[i].heading_deg * kDegToRad;
    f.sin_psi = std::sin(psi);
    f.cos_psi = std::cos(psi);
    const double los = bearing_deg(lambda) * kDegToRad;
    f.sin_los = std::sin(los);
    f.cos_los = std::cos(los);
    out.push_back(f);
  }
  if (out.empty()) throw EmptyWindow("extract_features: all fixes coincident");
  return out;
}

Eigen::MatrixXd features_to_matrix(const std::vector<FeatureVector>& seq) {
  Eigen::MatrixXd m(kNumFeatures, static_cast<int>(seq.size()));
  for (int t = 0; t < static_cast<int>(seq.size()); ++t) {
    const FeatureVector& f = seq[static_cast<std::size_t>(t)];
    m.col(t) << f.dx, f.dy, f.range, f.sin_psi, f.cos_psi, f.sin_los, f.cos_los;
  }
  return m;
}

namespace {

Eigen::ArrayXXd sigmoid(const Eigen::ArrayXXd& z) {
  return 1.0 / (1.0 + (-z).exp());
}

// Forward tape for one equal-length group; everything the backward pass
// needs to avoid recomputation.
struct LayerTape {
  std::vector<Eigen::ArrayXXd> i, f, g, o, c, tanh_c;
  std::vector<Eigen::MatrixXd> h;  // h[t] is the state after step t
  std::vector<Eigen::MatrixXd> x;  // layer inputs per step
};

struct ForwardTape {
  std::vector<LayerTape> layers;
  Eigen::MatrixXd probs;   // 2 x B
  Eigen::MatrixXd logits;  // 2 x B
};

Eigen::MatrixXd normalize_inputs(const ModelWeights& w, const Eigen::MatrixXd& x) {
  if (x.rows() != w.input_size()) {
    throw DimensionMismatch("lstm_forward: feature dimension mismatch");
  }
  if (w.norm_mean.size() != x.rows() || w.norm_std.size() != x.rows()) {
    return x;
  }
  Eigen::MatrixXd out = x;
  for (int r = 0; r < out.rows(); ++r) {
    const double s = std::max(w.norm_std(r), 1e-9);
    out.row(r) = (out.row(r).array() - w.norm_mean(r)) / s;
  }
  return out;
}

// Batched forward over B sequences of shared length T. xs[t] is input x B.
ForwardTape forward_group(const ModelWeights& w,
                          const std::vector<Eigen::MatrixXd>& xs, bool keep_tape) {
  const int tlen = static_cast<int>(xs.size());
  const int batch = static_cast<int>(xs[0].cols());
  const int hidden = w.hidden_size();

  ForwardTape tape;
  tape.layers.resize(w.layers.size());

  std::vector<Eigen::MatrixXd> input = xs;
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    const LstmLayerWeights& lw = w.layers[l];
    LayerTape& lt = tape.layers[l];
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(hidden, batch);
    Eigen::ArrayXXd c = Eigen::ArrayXXd::Zero(hidden, batch);
    std::vector<Eigen::MatrixXd> next_input(static_cast<std::size_t>(tlen));
    for (int t = 0; t < tlen; ++t) {
      Eigen::MatrixXd z = lw.w_x * input[static_cast<std::size_t>(t)] + lw.w_h * h;
      z.colwise() += lw.b;
      const Eigen::ArrayXXd zi = z.topRows(hidden).array();
      const Eigen::ArrayXXd zf = z.middleRows(hidden, hidden).array();
      const Eigen::ArrayXXd zg = z.middleRows(2 * hidden, hidden).array();
      const Eigen::ArrayXXd zo = z.bottomRows(hidden).array();
      const Eigen::ArrayXXd gi = sigmoid(zi);
      const Eigen::ArrayXXd gf = sigmoid(zf);
      const Eigen::ArrayXXd gg = zg.tanh();
      const Eigen::ArrayXXd go = sigmoid(zo);
      c = gf * c + gi * gg;
      const Eigen::ArrayXXd tc = c.tanh();
      const Eigen::MatrixXd h_new = (go * tc).matrix();
      if (keep_tape) {
        lt.i.push_back(gi);
        lt.f.push_back(gf);
        lt.g.push_back(gg);
        lt.o.push_back(go);
        lt.c.push_back(c);
        lt.tanh_c.push_back(tc);
        lt.h.push_back(h_new);
        lt.x.push_back(input[static_cast<std::size_t>(t)]);
      }
      h = h_new;
      next_input[static_cast<std::size_t>(t)] = h;
    }
    input = std::move(next_input);
  }

  tape.logits = w.fc_w * input.back();
  tape.logits.colwise() += w.fc_b;
  tape.probs.resize(2, batch);
  for (int b = 0; b < batch; ++b) {
    const double m = tape.logits.col(b).maxCoeff();
    const Eigen::Vector2d e = (tape.logits.col(b).array() - m).exp();
    tape.probs.col(b) = e / e.sum();
  }
  return tape;
}

struct Gradients {
  std::vector<LstmLayerWeights> layers;
  Eigen::MatrixXd fc_w;
  Eigen::VectorXd fc_b;
};

Gradients zero_gradients(const ModelWeights& w) {
  Gradients g;
  g.layers.resize(w.layers.size());
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    g.layers[l].w_x = Eigen::MatrixXd::Zero(w.layers[l].w_x.rows(), w.layers[l].w_x.cols());
    g.layers[l].w_h = Eigen::MatrixXd::Zero(w.layers[l].w_h.rows(), w.layers[l].w_h.cols());
    g.layers[l].b = Eigen::VectorXd::Zero(w.layers[l].b.size());
  }
  g.fc_w = Eigen::MatrixXd::Zero(w.fc_w.rows(), w.fc_w.cols());
  g.fc_b = Eigen::VectorXd::Zero(w.fc_b.size());
  return g;
}

// BPTT over one equal-length group. dlogits already carries the 1/N batch
// normalization. Accumulates into grads.
void backward_group(const ModelWeights& w, const ForwardTape& tape,
                    const Eigen::MatrixXd& dlogits, Gradients* grads) {
  const int tlen = static_cast<int>(tape.layers[0].h.size());
  const int batch = static_cast<int>(dlogits.cols());
  const int hidden = w.hidden_size();

  grads->fc_w += dlogits * tape.layers.back().h.back().transpose();
  grads->fc_b += dlogits.rowwise().sum();

  // dh injected from above per step; top layer receives only the head term.
  std::vector<Eigen::MatrixXd> dh_inject(static_cast<std::size_t>(tlen),
                                         Eigen::MatrixXd::Zero(hidden, batch));
  dh_inject.back() = w.fc_w.transpose() * dlogits;

  for (int l = static_cast<int>(w.layers.size()) - 1; l >= 0; --l) {
    const LstmLayerWeights& lw = w.layers[static_cast<std::size_t>(l)];
    const LayerTape& lt = tape.layers[static_cast<std::size_t>(l)];
    LstmLayerWeights& gl = grads->layers[static_cast<std::size_t>(l)];

    const int in_size = static_cast<int>(lw.w_x.cols());
    std::vector<Eigen::MatrixXd> dx(static_cast<std::size_t>(tlen));

    Eigen::ArrayXXd dh = Eigen::ArrayXXd::Zero(hidden, batch);
    Eigen::ArrayXXd dc = Eigen::ArrayXXd::Zero(hidden, batch);
    for (int t = tlen - 1; t >= 0; --t) {
      const auto ts = static_cast<std::size_t>(t);
      dh += dh_inject[ts].array();
      const Eigen::ArrayXXd& gi = lt.i[ts];
      const Eigen::ArrayXXd& gf = lt.f[ts];
      const Eigen::ArrayXXd& gg = lt.g[ts];
      const Eigen::ArrayXXd& go = lt.o[ts];
      const Eigen::ArrayXXd& tc = lt.tanh_c[ts];
      const Eigen::ArrayXXd c_prev =
          t > 0 ? lt.c[ts - 1] : Eigen::ArrayXXd::Zero(hidden, batch);

      const Eigen::ArrayXXd do_ = dh * tc;
      dc += dh * go * (1.0 - tc * tc);
      const Eigen::ArrayXXd di = dc * gg;
      const Eigen::ArrayXXd df = dc * c_prev;
      const Eigen::ArrayXXd dg = dc * gi;

      Eigen::MatrixXd dz(4 * hidden, batch);
      dz.topRows(hidden) = (di * gi * (1.0 - gi)).matrix();
      dz.middleRows(hidden, hidden) = (df * gf * (1.0 - gf)).matrix();
      dz.middleRows(2 * hidden, hidden) = (dg * (1.0 - gg * gg)).matrix();
      dz.bottomRows(hidden) = (do_ * go * (1.0 - go)).matrix();

      gl.w_x += dz * lt.x[ts].transpose();
      if (t > 0) gl.w_h += dz * lt.h[ts - 1].transpose();
      gl.b += dz.rowwise().sum();

      dx[ts] = lw.w_x.transpose() * dz;
      dh = (lw.w_h.transpose() * dz).array();
      dc *= gf;
    }
    (void)in_size;
    dh_inject = std::move(dx);
  }
}

// Groups encounter indices by sequence length so each group shares GEMMs.
std::map<int, std::vector<const LabeledEncounter*>> group_by_length(
    const std::vector<const LabeledEncounter*>& batch) {
  std::map<int, std::vector<const LabeledEncounter*>> groups;
  for (const LabeledEncounter* e : batch) {
    groups[static_cast<int>(e->features.size())].push_back(e);
  }
  return groups;
}

std::vector<Eigen::MatrixXd> build_group_inputs(
    const ModelWeights& w, const std::vector<const LabeledEncounter*>& group) {
  const int tlen = static_cast<int>(group[0]->features.size());
  const int batch = static_cast<int>(group.size());
  std::vector<Eigen::MatrixXd> xs(static_cast<std::size_t>(tlen),
                                  Eigen::MatrixXd(w.input_size(), batch));
  for (int b = 0; b < batch; ++b) {
    const Eigen::MatrixXd m =
        normalize_inputs(w, features_to_matrix(group[static_cast<std::size_t>(b)]->features));
    for (int t = 0; t < tlen; ++t) xs[static_cast<std::size_t>(t)].col(b) = m.col(t);
  }
  return xs;
}

double group_loss(const ForwardTape& tape,
                  const std::vector<const LabeledEncounter*>& group) {
  double loss = 0.0;
  for (int b = 0; b < static_cast<int>(group.size()); ++b) {
    const int cls = group[static_cast<std::size_t>(b)]->label == PassingSide::kLeft ? 0 : 1;
    loss -= std::log(std::max(tape.probs(cls, b), 1e-300));
  }
  return loss;
}

void flatten_into(const Gradients& g, Eigen::VectorXd* out) {
  std::size_t n = 0;
  for (const auto& l : g.layers) {
    n += static_cast<std::size_t>(l.w_x.size() + l.w_h.size() + l.b.size());
  }
  n += static_cast<std::size_t>(g.fc_w.size() + g.fc_b.size());
  out->resize(static_cast<Eigen::Index>(n));
  Eigen::Index at = 0;
  auto put = [&](const Eigen::MatrixXd& m) {
    out->segment(at, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
    at += m.size();
  };
  for (const auto& l : g.layers) {
    put(l.w_x);
    put(l.w_h);
    put(l.b);
  }
  put(g.fc_w);
  put(g.fc_b);
}

}  // namespace

ModelWeights zero_weights(int input_size, int hidden_size) {
  ModelWeights w;
  w.layers.resize(kNumLayers);
  for (int l = 0; l < kNumLayers; ++l) {
    const int in = l == 0 ? input_size : hidden_size;
    w.layers[static_cast<std::size_t>(l)].w_x = Eigen::MatrixXd::Zero(4 * hidden_size, in);
    w.layers[static_cast<std::size_t>(l)].w_h = Eigen::MatrixXd::Zero(4 * hidden_size, hidden_size);
    w.layers[static_cast<std::size_t>(l)].b = Eigen::VectorXd::Zero(4 * hidden_size);
  }
  w.fc_w = Eigen::MatrixXd::Zero(2, hidden_size);
  w.fc_b = Eigen::VectorXd::Zero(2);
  w.norm_mean = Eigen::VectorXd::Zero(input_size);
  w.norm_std = Eigen::VectorXd::Ones(input_size);
  return w;
}

ModelWeights make_weights(int input_size, int hidden_size, std::uint64_t seed) {
  ModelWeights w = zero_weights(input_size, hidden_size);
  Rng rng(seed);
  auto fill = [&](Eigen::MatrixXd& m, double scale) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        m(r, c) = rng.uniform(-scale, scale);
      }
    }
  };
  for (auto& l : w.layers) {
    const double s = 1.0 / std::sqrt(static_cast<double>(hidden_size));
    fill(l.w_x, s);
    fill(l.w_h, s);
    // forget-gate bias starts open so early gradients flow through time
    l.b.segment(hidden_size, hidden_size).setConstant(1.0);
  }
  fill(w.fc_w, 1.0 / std::sqrt(static_cast<double>(hidden_size)));
  return w;
}

PassingBelief lstm_forward(const ModelWeights& w, const Eigen::MatrixXd& seq) {
  if (seq.cols() == 0) throw EmptyWindow("lstm_forward: empty sequence");
  std::vector<Eigen::MatrixXd> xs;
  const Eigen::MatrixXd n = normalize_inputs(w, seq);
  xs.reserve(static_cast<std::size_t>(n.cols()));
  for (Eigen::Index t = 0; t < n.cols(); ++t) xs.push_back(n.col(t));
  const ForwardTape tape = forward_group(w, xs, false);
  return {tape.probs(0, 0), tape.probs(1, 0)};
}

PassingBelief lstm_forward(const ModelWeights& w, const std::vector<FeatureVector>& seq) {
  if (seq.empty()) throw EmptyWindow("lstm_forward: empty sequence");
  return lstm_forward(w, features_to_matrix(seq));
}

std::vector<PassingBelief> lstm_forward_batch(const ModelWeights& w,
                                              const std::vector<Eigen::MatrixXd>& seqs) {
  std::vector<PassingBelief> out(seqs.size());
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    groups[static_cast<int>(seqs[i].cols())].push_back(i);
  }
  for (const auto& [tlen, idx] : groups) {
    if (tlen == 0) throw EmptyWindow("lstm_forward_batch: empty sequence");
    std::vector<Eigen::MatrixXd> xs(static_cast<std::size_t>(tlen),
                                    Eigen::MatrixXd(w.input_size(), idx.size()));
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const Eigen::MatrixXd n = normalize_inputs(w, seqs[idx[b]]);
      for (int t = 0; t < tlen; ++t) xs[static_cast<std::size_t>(t)].col(static_cast<Eigen::Index>(b)) = n.col(t);
    }
    const ForwardTape tape = forward_group(w, xs, false);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      out[idx[b]] = {tape.probs(0, static_cast<Eigen::Index>(b)),
                     tape.probs(1, static_cast<Eigen::Index>(b))};
    }
  }
  return out;
}

Eigen::VectorXd flatten_params(const ModelWeights& w) {
  Gradients g;
  g.layers = w.layers;
  g.fc_w = w.fc_w;
  g.fc_b = w.fc_b;
  Eigen::VectorXd out;
  flatten_into(g, &out);
  return out;
}

void unflatten_params(const Eigen::VectorXd& flat, ModelWeights* w) {
  Eigen::Index at = 0;
  auto take = [&](Eigen::MatrixXd& m) {
    m = Eigen::Map<const Eigen::MatrixXd>(flat.data() + at, m.rows(), m.cols());
    at += m.size();
  };
  for (auto& l : w->layers) {
    take(l.w_x);
    take(l.w_h);
    Eigen::MatrixXd b = l.b;
    take(b);
    l.b = b;
  }
  take(w->fc_w);
  Eigen::MatrixXd fb = w->fc_b;
  take(fb);
  w->fc_b = fb;
  if (at != flat.size()) throw DimensionMismatch("unflatten_params: size mismatch");
}

double batch_loss(const ModelWeights& w, const std::vector<const LabeledEncounter*>& batch) {
  double total = 0.0;
  for (const auto& [tlen, group] : group_by_length(batch)) {
    (void)tlen;
    const auto xs = build_group_inputs(w, group);
    const ForwardTape tape = forward_group(w, xs, false);
    total += group_loss(tape, group);
  }
  return total / static_cast<double>(batch.size());
}

double batch_loss_and_grad(const ModelWeights& w,
                           const std::vector<const LabeledEncounter*>& batch,
                           Eigen::VectorXd* grad) {
  Gradients grads = zero_gradients(w);
  double total = 0.0;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const auto& [tlen, group] : group_by_length(batch)) {
    (void)tlen;
    const auto xs = build_group_inputs(w, group);
    const ForwardTape tape = forward_group(w, xs, true);
    total += group_loss(tape, group);
    Eigen::MatrixXd dlogits = tape.probs;
    for (int b = 0; b < static_cast<int>(group.size()); ++b) {
      const int cls = group[static_cast<std::size_t>(b)]->label == PassingSide::kLeft ? 0 : 1;
      dlogits(cls, b) -= 1.0;
    }
    dlogits *= inv_n;
    backward_group(w, tape, dlogits, &grads);
  }
  flatten_into(grads, grad);
  return total * inv_n;
}

namespace {

EvalMetrics metrics_from_beliefs(const std::vector<PassingBelief>& beliefs,
                                 const std::vector<LabeledEncounter>& data) {
  EvalMetrics m;
  int tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const bool pred_left = beliefs[i].p_l >= 0.5;  // tie resolves to LEFT
    const bool is_left = data[i].label == PassingSide::kLeft;
    if (pred_left && is_left) ++tp;
    else if (pred_left && !is_left) ++fp;
    else if (!pred_left && !is_left) ++tn;
    else ++fn;
  }
  m.count = static_cast<int>(data.size());
  m.accuracy = m.count > 0 ? static_cast<double>(tp + tn) / m.count : 0.0;
  m.precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  m.recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  m.f1 = m.precision + m.recall > 0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

}  // namespace

EvalMetrics evaluate(const ModelWeights& w, const std::vector<LabeledEncounter>& test) {
  std::vector<Eigen::MatrixXd> seqs;
  seqs.reserve(test.size());
  for (const auto& e : test) seqs.push_back(features_to_matrix(e.features));
  return metrics_from_beliefs(lstm_forward_batch(w, seqs), test);
}

ModelWeights lstm_train(const std::vector<LabeledEncounter>& data,
                        const Hyperparameters& hp, std::uint64_t seed,
                        TrainingReport* report) {
  if (data.empty()) throw InfeasibleConfig("lstm_train: empty dataset");
  bool has_left = false, has_right = false;
  for (const auto& e : data) {
    if (e.label == PassingSide::kLeft) has_left = true;
    if (e.label == PassingSide::kRight) has_right = true;
  }
  if (!has_left || !has_right) {
    throw InfeasibleConfig("lstm_train: both classes must be present");
  }
  const auto t_start = std::chrono::steady_clock::now();

  // Deterministic validation split.
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(seed, 1));
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[split_rng.uniform_index(i)]);
  }
  std::size_t val_n = static_cast<std::size_t>(
      std::llround(hp.validation_fraction * static_cast<double>(data.size())));
  if (val_n >= data.size()) val_n = data.size() / 5;
  std::vector<const LabeledEncounter*> train, val;
  std::vector<LabeledEncounter> val_copy;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i < val_n) {
      val.push_back(&data[order[i]]);
      val_copy.push_back(data[order[i]]);
    } else {
      train.push_back(&data[order[i]]);
    }
  }
  if (train.empty()) throw InfeasibleConfig("lstm_train: no training rows left");

  // Normalization statistics over every timestep of the training split.
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(kNumFeatures);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(kNumFeatures);
  std::int64_t steps = 0;
  for (const LabeledEncounter* e : train) {
    for (const FeatureVector& f : e->features) {
      const Eigen::MatrixXd col = features_to_matrix({f});
      mean += col.col(0);
      sq += col.col(0).cwiseProduct(col.col(0));
      ++steps;
    }
  }
  mean /= static_cast<double>(steps);
  Eigen::VectorXd var = sq / static_cast<double>(steps) - mean.cwiseProduct(mean);
  Eigen::VectorXd stddev = var.cwiseMax(1e-12).cwiseSqrt();

  ModelWeights w = make_weights(kNumFeatures, hp.hidden_size, derive_seed(seed, 2));
  w.norm_mean = mean;
  w.norm_std = stddev;

  // Adam state on the flattened parameter vector.
  Eigen::VectorXd params = flatten_params(w);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(params.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(params.size());
  std::int64_t step = 0;

  if (report != nullptr) report->epochs.clear();

  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    const double lr =
        hp.learning_rate * std::pow(hp.lr_decay, epoch / std::max(1, hp.lr_step_epochs));
    Rng shuffle_rng(derive_seed(seed, 100 + static_cast<std::uint64_t>(epoch)));
    std::vector<std::size_t> idx(train.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = idx.size(); i > 1; --i) {
      std::swap(idx[i - 1], idx[shuffle_rng.uniform_index(i)]);
    }

    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t at = 0; at < idx.size(); at += static_cast<std::size_t>(hp.batch_size)) {
      std::vector<const LabeledEncounter*> batch;
      for (std::size_t i = at; i < std::min(idx.size(), at + static_cast<std::size_t>(hp.batch_size)); ++i) {
        batch.push_back(train[idx[i]]);
      }
      Eigen::VectorXd grad;
      const double loss = batch_loss_and_grad(w, batch, &grad);
      if (!std::isfinite(loss)) {
        throw DivergedLoss("lstm_train: non-finite loss", epoch);
      }
      epoch_loss += loss;
      ++batches;

      ++step;
      m = hp.adam_beta1 * m + (1.0 - hp.adam_beta1) * grad;
      v = hp.adam_beta2 * v.array().matrix() +
          (1.0 - hp.adam_beta2) * grad.cwiseProduct(grad);
      const double bc1 = 1.0 - std::pow(hp.adam_beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(hp.adam_beta2, static_cast<double>(step));
      params -= (lr / bc1) *
                (m.array() / ((v.array() / bc2).sqrt() + hp.adam_eps)).matrix();
      unflatten_params(params, &w);
    }

    EpochStats es;
    es.epoch = epoch;
    es.learning_rate = lr;
    es.train_loss = batches > 0 ? epoch_loss / batches : 0.0;
    if (!val.empty()) {
      es.val_loss = batch_loss(w, val);
      es.val_f1 = evaluate(w, val_copy).f1;
    }
    if (report != nullptr) report->epochs.push_back(es);
  }

  if (report != nullptr) {
    report->final_val_f1 = report->epochs.empty() ? 0.0 : report->epochs.back().val_f1;
    report->wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  }
  return w;
}

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> data(static_cast<std::size_t>(m.size()));
  Eigen::Map<Eigen::MatrixXd>(data.data(), m.rows(), m.cols()) = m;
  j["data"] = data;
  return j;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
  const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
  const std::vector<double> data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw CorruptFile("weight matrix payload does not match declared shape");
  }
  return Eigen::Map<const Eigen::MatrixXd>(data.data(), rows, cols);
}

}  // namespace

void save_weights(const ModelWeights& w, const std::string& path) {
  json j;
  j["format_version"] = w.format_version;
  j["input_size"] = w.input_size();
  j["hidden_size"] = w.hidden_size();
  j["num_layers"] = w.layers.size();
  j["layers"] = json::array();
  for (const auto& l : w.layers) {
    json lj;
    lj["w_x"] = matrix_to_json(l.w_x);
    lj["w_h"] = matrix_to_json(l.w_h);
    lj["b"] = matrix_to_json(l.b);
    j["layers"].push_back(lj);
  }
  j["fc_w"] = matrix_to_json(w.fc_w);
  j["fc_b"] = matrix_to_json(w.fc_b);
  j["norm_mean"] = matrix_to_json(w.norm_mean);
  j["norm_std"] = matrix_to_json(w.norm_std);
  std::ofstream out(path, std::ios::binary);
  out << j.dump();
  out << "\n";
}

ModelWeights load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptFile("cannot open weights file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw CorruptFile(std::string("weights parse failure: ") + e.what());
  }
  try {
    const int version = j.at("format_version").get<int>();
    if (version != 1) {
      throw VersionMismatch("unsupported weights format_version " + std::to_string(version));
    }
    ModelWeights w;
    w.format_version = version;
    for (const auto& lj : j.at("layers")) {
      LstmLayerWeights l;
      l.w_x = matrix_from_json(lj.at("w_x"));
      l.w_h = matrix_from_json(lj.at("w_h"));
      l.b = matrix_from_json(lj.at("b"));
      w.layers.push_back(std::move(l));
    }
    w.fc_w = matrix_from_json(j.at("fc_w"));
    w.fc_b = matrix_from_json(j.at("fc_b"));
    w.norm_mean = matrix_from_json(j.at("norm_mean"));
    w.norm_std = matrix_from_json(j.at("norm_std"));

    if (w.layers.empty()) throw CorruptFile("weights have no recurrent layers");
    const int hidden = w.hidden_size();
    for (std::size_t l = 0; l < w.layers.size(); ++l) {
      const auto& lw = w.layers[l];
      const int in = l == 0 ? w.input_size() : hidden;
      if (lw.w_x.rows() != 4 * hidden || lw.w_x.cols() != in ||
          lw.w_h.rows() != 4 * hidden || lw.w_h.cols() != hidden ||
          lw.b.size() != 4 * hidden) {
        throw CorruptFile("inconsistent recurrent layer dimensions");
      }
      if (!lw.w_x.allFinite() || !lw.w_h.allFinite() || !lw.b.allFinite()) {
        throw CorruptFile("non-finite weight entries");
      }
    }
    if (w.fc_w.rows() != 2 || w.fc_w.cols() != hidden || w.fc_b.size() != 2 ||
        w.norm_mean.size() != w.input_size() || w.norm_std.size() != w.input_size()) {
      throw CorruptFile("inconsistent head or normalization dimensions");
    }
    return w;
  } catch (const json::exception& e) {
    throw CorruptFile(std::string("weights structure failure: ") + e.what());
  }
}

namespace {

struct TruthState {
  Vec2 pos;
  double heading_deg;
  double speed;
  double turn_rate_dps;
};

TruthState step_truth(TruthState s, double dt) {
  // Sub-stepped so turning arcs stay accurate at the 1 Hz sample rate.
  const int sub = 10;
  const double h = dt / sub;
  for (int k = 0; k < sub; ++k) {
    s.pos += heading_to_unit(s.heading_deg) * (s.speed * h);
    s.heading_deg = wrap360(s.heading_deg + s.turn_rate_dps * h);
  }
  return s;
}

}  // namespace

std::vector<LabeledEncounter> generate_synthetic_dataset(const SyntheticConfig& cfg,
                                                         std::uint64_t seed) {
  if (cfg.count <= 0) throw InfeasibleConfig("generate_synthetic_dataset: count must be positive");
  const int want_left = cfg.count / 2;
  const int want_right = cfg.count - want_left;
  int n_left = 0, n_right = 0;

  std::vector<LabeledEncounter> out;
  out.reserve(static_cast<std::size_t>(cfg.count));

  const std::int64_t max_attempts = 400LL * cfg.count + 4000;
  for (std::int64_t attempt = 0; attempt < max_attempts; ++attempt) {
    if (n_left == want_left && n_right == want_right) break;
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));

    TruthState ego;
    ego.pos = {rng.uniform(-40, 40), rng.uniform(-40, 40)};
    ego.heading_deg = rng.uniform(0, 360);
    ego.speed = rng.uniform(cfg.ego_speed_min, cfg.ego_speed_max);
    ego.turn_rate_dps = rng.uniform() < cfg.turn_fraction
                            ? rng.uniform(-cfg.max_turn_rate_dps, cfg.max_turn_rate_dps)
                            : 0.0;

    TruthState obs;
    const double bearing = rng.uniform(0, 360);
    const double range = rng.uniform(15, 90);
    obs.pos = ego.pos + heading_to_unit(bearing) * range;
    obs.heading_deg = rng.uniform(0, 360);
    obs.speed = rng.uniform() < cfg.zero_speed_fraction
                    ? 0.0
                    : rng.uniform(cfg.obs_speed_min, cfg.obs_speed_max);
    obs.turn_rate_dps = obs.speed > 0 && rng.uniform() < cfg.turn_fraction
                            ? rng.uniform(-cfg.max_turn_rate_dps, cfg.max_turn_rate_dps)
                            : 0.0;
    const double obs_len = rng.uniform(cfg.obs_length_min, cfg.obs_length_max);
    const double obs_beam = obs_len * rng.uniform(0.3, 0.6);

    // Validity gates on the initial constant-velocity extrapolation.
    topology::VesselState e0, o0;
    e0.pos = ego.pos;
    e0.heading_deg = ego.heading_deg;
    e0.speed_mps = ego.speed;
    o0.pos = obs.pos;
    o0.heading_deg = obs.heading_deg;
    o0.speed_mps = obs.speed;
    const auto gate = topology::cpa_metrics(e0, o0);
    if (gate.tcpa_s < 3.0 || gate.tcpa_s > cfg.gate_tcpa_s) continue;
    if (gate.dcpa_m > cfg.gate_dcpa_m) continue;

    // Truth rollout resampled at 1 Hz.
    topology::TrackPair pair;
    pair.dt = 1.0;
    const int max_steps = static_cast<int>(cfg.gate_tcpa_s) + 60;
    TruthState e = ego, o = obs;
    for (int t = 0; t <= max_steps; ++t) {
      topology::VesselState es, os;
      es.t = t;
      es.pos = e.pos;
      es.heading_deg = e.heading_deg;
      es.speed_mps = e.speed;
      es.id = 0;
      os.t = t;
      os.pos = o.pos;
      os.heading_deg = o.heading_deg;
      os.speed_mps = o.speed;
      os.id = 1;
      os.length_m = obs_len;
      os.beam_m = obs_beam;
      pair.ego.push_back(es);
      pair.obs.push_back(os);
      e = step_truth(e, 1.0);
      o = step_truth(o, 1.0);
    }

    topology::ClearanceConfig ccfg;
    ccfg.sensor_range_m = cfg.sensor_range_m;
    const std::size_t k_clear = topology::clearance_index(pair, ccfg);
    if (k_clear < 4) continue;
    topology::PassingLabel label;
    try {
      label = topology::label_passing(pair, ccfg);
    } catch (const ZeroLosVector&) {
      continue;  // exact overlap in the rollout
    }
    if (label.side == PassingSide::kUndetermined) continue;
    if (label.side == PassingSide::kLeft && n_left >= want_left) continue;
    if (label.side == PassingSide::kRight && n_right >= want_right) continue;

    // Window end uniformly inside the approach so both early ambiguous and
    // late evident phases appear in training.
    const auto lo = static_cast<std::size_t>(
        std::ceil(cfg.window_end_min_fraction() * static_cast<double>(k_clear)));
    const std::size_t k_lo = std::max<std::size_t>(2, lo);
    const std::size_t k_end =
        k_lo >= k_clear ? k_clear
                        : k_lo + rng.uniform_index(static_cast<std::uint64_t>(k_clear - k_lo + 1));
    const int win = static_cast<int>(std::llround(cfg.horizon_s));
    const std::size_t k_start =
        k_end >= static_cast<std::size_t>(win) ? k_end - static_cast<std::size_t>(win) : 0;

    const double sx = cfg.noisy ? rng.uniform(0.0, 0.3) : 0.0;
    const double sy = cfg.noisy ? rng.uniform(0.0, 0.3) : 0.0;
    const double sth = cfg.noisy ? rng.uniform(0.0, 0.3) : 0.0;
    const double sv = cfg.noisy ? rng.uniform(0.0, 0.5) : 0.0;

    ObservationWindow window;
    window.obstacle_id = 1;
    for (std::size_t k = k_start; k <= k_end; ++k) {
      topology::VesselState fix = pair.obs[k];
      fix.pos.x += rng.gaussian(0.0, sx);
      fix.pos.y += rng.gaussian(0.0, sy);
      fix.heading_deg = wrap360(fix.heading_deg + rng.gaussian(0.0, sth) * kRadToDeg);
      fix.speed_mps = std::max(0.0, fix.speed_mps + rng.gaussian(0.0, sv));
      window.fixes.push_back(fix);
      window.ego.push_back(pair.ego[k]);
    }

    LabeledEncounter enc;
    enc.encounter_id = static_cast<int>(out.size());
    enc.label = label.side;
    try {
      enc.features = extract_features(window);
    } catch (const EmptyWindow&) {
      continue;
    }
    if (enc.features.size() < 3) continue;

    if (label.side == PassingSide::kLeft) ++n_left;
    else ++n_right;
    out.push_back(std::move(enc));
  }

  if (n_left != want_left || n_right != want_right) {
    throw InfeasibleConfig("generate_synthetic_dataset: class balance unreachable");
  }
  return out;
}

void save_dataset_csv(const std::vector<LabeledEncounter>& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  out << "encounter_id,t,dx,dy,range,sin_psi,cos_psi,sin_los,cos_los,label\n";
  for (const auto& e : data) {
    for (std::size_t t = 0; t < e.features.size(); ++t) {
      const FeatureVector& f = e.features[t];
      out << e.encounter_id << ',' << t << ',' << format_double(f.dx) << ','
          << format_double(f.dy) << ',' << format_double(f.range) << ','
          << format_double(f.sin_psi) << ',' << format_double(f.cos_psi) << ','
          << format_double(f.sin_los) << ',' << format_double(f.cos_los) << ','
          << (e.label == PassingSide::kLeft ? "LEFT" : "RIGHT") << '\n';
    }
  }
}

std::vector<LabeledEncounter> load_dataset_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MalformedCsv("cannot open dataset: " + path);
  std::string line;
  if (!std::getline(in, line)) throw MalformedCsv("dataset has no header");
  std::vector<LabeledEncounter> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto sv = trim(std::string_view(line));
    if (sv.empty()) continue;
    const auto parts = split(sv, ',');
    if (parts.size() != 10) {
      throw MalformedCsv("dataset line " + std::to_string(line_no) + ": expected 10 fields");
    }
    int id = 0;
    FeatureVector f;
    bool ok = parse_int(parts[0], &id);
    double tmp;
    ok = ok && parse_double(parts[1], &tmp);
    ok = ok && parse_double(parts[2], &f.dx) && parse_double(parts[3], &f.dy) &&
         parse_double(parts[4], &f.range) && parse_double(parts[5], &f.sin_psi) &&
         parse_double(parts[6], &f.cos_psi) && parse_double(parts[7], &f.sin_los) &&
         parse_double(parts[8], &f.cos_los);
    if (!ok) throw MalformedCsv("dataset line " + std::to_string(line_no) + ": bad number");
    PassingSide side;
    if (parts[9] == "LEFT") side = PassingSide::kLeft;
    else if (parts[9] == "RIGHT") side = PassingSide::kRight;
    else throw MalformedCsv("dataset line " + std::to_string(line_no) + ": bad label");

    if (out.empty() || out.back().encounter_id != id) {
      LabeledEncounter e;
      e.encounter_id = id;
      e.label = side;
      out.push_back(std::move(e));
    }
    out.back().features.push_back(f);
    if (out.back().label != side) {
      throw MalformedCsv("dataset line " + std::to_string(line_no) + ": label flips mid-encounter");
    }
  }
  return out;
}

}  // namespace asvplan::classifier
