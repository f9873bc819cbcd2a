#include "minidrive/learner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "minidrive/hash.hpp"

namespace minidrive {

namespace {
using nlohmann::json;
constexpr double kNormEps = 1e-5;
constexpr double kRunningMomentum = 0.99;
}  // namespace

std::string tap_name(TapLocation loc) {
  switch (loc) {
    case TapLocation::post_linear: return "dense";
    case TapLocation::post_norm: return "norm";
    case TapLocation::post_activation: return "relu";
  }
  return "?";
}

PolicySpec single_frame_spec(int ray_count) {
  PolicySpec s;
  s.input_dim = ray_count;
  s.hidden = {64, 32};
  s.use_norm = false;
  s.dropout_p = 0.1;
  return s;
}

PolicySpec multi_frame_spec(int ray_count) {
  PolicySpec s;
  s.input_dim = 3 * ray_count;
  s.hidden = {128, 64};
  s.use_norm = true;
  s.dropout_p = 0.2;
  return s;
}

Policy::Policy(PolicySpec spec, std::uint64_t init_seed) : spec_(std::move(spec)) {
  if (spec_.input_dim <= 0 || spec_.hidden.empty()) {
    throw std::invalid_argument("Policy: bad spec");
  }
  Rng rng(derive_seed(init_seed, 0x171));
  int fan_in = spec_.input_dim;
  for (const int width : spec_.hidden) {
    Layer layer;
    layer.in = fan_in;
    layer.out = width;
    layer.w.resize(static_cast<std::size_t>(width) * fan_in);
    layer.b.assign(static_cast<std::size_t>(width), 0.0);
    const double bound = std::sqrt(6.0 / fan_in);
    for (auto& w : layer.w) w = rng.uniform(-bound, bound);
    if (spec_.use_norm) {
      layer.gamma.assign(static_cast<std::size_t>(width), 1.0);
      layer.beta.assign(static_cast<std::size_t>(width), 0.0);
      layer.run_mean.assign(static_cast<std::size_t>(width), 0.0);
      layer.run_var.assign(static_cast<std::size_t>(width), 1.0);
    }
    layers_.push_back(std::move(layer));
    fan_in = width;
  }
  out_w_.resize(static_cast<std::size_t>(fan_in));
  const double bound = std::sqrt(6.0 / fan_in);
  for (auto& w : out_w_) w = rng.uniform(-bound, bound);
  out_b_ = 0.0;
}

namespace {

// Inference-mode forward; fills taps for the last hidden layer if requested.
double forward_infer(const Policy& policy, const std::vector<double>& input, Policy::Taps* taps) {
  if (static_cast<int>(input.size()) != policy.input_dim()) {
    throw std::invalid_argument("forward: input has dim " + std::to_string(input.size()) +
                                ", policy expects " + std::to_string(policy.input_dim()));
  }
  const auto& layers = policy.layers();
  thread_local std::vector<double> x_buf, z_buf;
  std::vector<double>& x = x_buf;
  std::vector<double>& z = z_buf;
  x.assign(input.begin(), input.end());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    z.assign(static_cast<std::size_t>(L.out), 0.0);
    for (int o = 0; o < L.out; ++o) {
      double acc = L.b[static_cast<std::size_t>(o)];
      const double* wrow = &L.w[static_cast<std::size_t>(o) * L.in];
      for (int i = 0; i < L.in; ++i) acc += wrow[i] * x[static_cast<std::size_t>(i)];
      z[static_cast<std::size_t>(o)] = acc;
    }
    const bool last = l + 1 == layers.size();
    if (last && taps) taps->post_linear = z;
    if (!L.gamma.empty()) {
      for (int o = 0; o < L.out; ++o) {
        const auto u = static_cast<std::size_t>(o);
        z[u] = (z[u] - L.run_mean[u]) / std::sqrt(L.run_var[u] + kNormEps) * L.gamma[u] + L.beta[u];
      }
      if (last && taps) taps->post_norm = z;
    }
    for (auto& v : z) v = v > 0.0 ? v : 0.0;
    if (last && taps) taps->post_activation = z;
    std::swap(x, z);
  }
  double pred = policy.out_b();
  const auto& ow = policy.out_w();
  for (std::size_t i = 0; i < ow.size(); ++i) pred += ow[i] * x[i];
  return pred;
}

}  // namespace

double Policy::predict(const std::vector<double>& input) const {
  return forward_infer(*this, input, nullptr);
}

double Policy::predict_with_taps(const std::vector<double>& input, Taps& taps) const {
  return forward_infer(*this, input, &taps);
}

std::vector<double> flatten_params(const Policy& policy) {
  std::vector<double> flat;
  for (const auto& L : policy.layers()) {
    flat.insert(flat.end(), L.w.begin(), L.w.end());
    flat.insert(flat.end(), L.b.begin(), L.b.end());
    flat.insert(flat.end(), L.gamma.begin(), L.gamma.end());
    flat.insert(flat.end(), L.beta.begin(), L.beta.end());
  }
  flat.insert(flat.end(), policy.out_w().begin(), policy.out_w().end());
  flat.push_back(policy.out_b());
  return flat;
}

void unflatten_params(Policy& policy, const std::vector<double>& flat) {
  std::size_t pos = 0;
  const auto take = [&](std::vector<double>& dst) {
    std::copy(flat.begin() + static_cast<long>(pos), flat.begin() + static_cast<long>(pos + dst.size()),
              dst.begin());
    pos += dst.size();
  };
  for (auto& L : policy.layers()) {
    take(L.w);
    take(L.b);
    take(L.gamma);
    take(L.beta);
  }
  take(policy.out_w());
  policy.out_b() = flat[pos++];
  if (pos != flat.size()) throw std::invalid_argument("unflatten_params: size mismatch");
}

std::vector<char> param_is_weight(const Policy& policy) {
  std::vector<char> mask;
  for (const auto& L : policy.layers()) {
    mask.insert(mask.end(), L.w.size(), 1);
    mask.insert(mask.end(), L.b.size(), 0);
    mask.insert(mask.end(), L.gamma.size(), 0);
    mask.insert(mask.end(), L.beta.size(), 0);
  }
  mask.insert(mask.end(), policy.out_w().size(), 1);
  mask.push_back(0);
  return mask;
}

double batch_loss_and_grad(Policy& policy, const std::vector<const std::vector<double>*>& inputs,
                           const std::vector<double>& labels, Rng& dropout_rng,
                           std::vector<double>* grad_out, bool update_running_stats) {
  const std::size_t n = inputs.size();
  if (n == 0 || labels.size() != n) throw std::invalid_argument("batch_loss_and_grad: empty batch");
  auto& layers = policy.layers();
  const std::size_t nl = layers.size();
  const double p_drop = policy.spec().dropout_p;
  const double keep = 1.0 - p_drop;

  // Per-layer activations, batch-major flat buffers.
  std::vector<std::vector<double>> zs(nl), zhats(nl), ys(nl), as(nl), masks(nl);
  std::vector<std::vector<double>> mus(nl), istds(nl);

  const std::vector<double>* xprev = nullptr;  // previous layer activations
  for (std::size_t l = 0; l < nl; ++l) {
    auto& L = layers[l];
    const std::size_t out = static_cast<std::size_t>(L.out);
    const std::size_t in = static_cast<std::size_t>(L.in);
    zs[l].assign(n * out, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      const double* x = l == 0 ? inputs[s]->data() : &(*xprev)[s * in];
      double* z = &zs[l][s * out];
      for (std::size_t o = 0; o < out; ++o) {
        double acc = L.b[o];
        const double* wrow = &L.w[o * in];
        for (std::size_t i = 0; i < in; ++i) acc += wrow[i] * x[i];
        z[o] = acc;
      }
    }
    if (!L.gamma.empty()) {
      mus[l].assign(out, 0.0);
      istds[l].assign(out, 0.0);
      zhats[l].assign(n * out, 0.0);
      ys[l].assign(n * out, 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        double mu = 0.0;
        for (std::size_t s = 0; s < n; ++s) mu += zs[l][s * out + o];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
          const double d = zs[l][s * out + o] - mu;
          var += d * d;
        }
        var /= static_cast<double>(n);
        const double istd = 1.0 / std::sqrt(var + kNormEps);
        mus[l][o] = mu;
        istds[l][o] = istd;
        for (std::size_t s = 0; s < n; ++s) {
          const double zh = (zs[l][s * out + o] - mu) * istd;
          zhats[l][s * out + o] = zh;
          ys[l][s * out + o] = L.gamma[o] * zh + L.beta[o];
        }
        if (update_running_stats) {
          L.run_mean[o] = kRunningMomentum * L.run_mean[o] + (1.0 - kRunningMomentum) * mu;
          L.run_var[o] = kRunningMomentum * L.run_var[o] + (1.0 - kRunningMomentum) * var;
        }
      }
    } else {
      ys[l] = zs[l];
    }
    // ReLU then inverted dropout (masks carry the 1/keep scale).
    as[l].assign(n * out, 0.0);
    masks[l].assign(n * out, 1.0);
    if (p_drop > 0.0) {
      for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t o = 0; o < out; ++o) {
          masks[l][s * out + o] = dropout_rng.uniform() < keep ? 1.0 / keep : 0.0;
        }
      }
    }
    for (std::size_t i = 0; i < n * out; ++i) {
      const double r = ys[l][i] > 0.0 ? ys[l][i] : 0.0;
      as[l][i] = r * masks[l][i];
    }
    xprev = &as[l];
  }

  // Output head and loss.
  const std::size_t emb = static_cast<std::size_t>(layers.back().out);
  std::vector<double> preds(n, 0.0);
  double loss = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    double acc = policy.out_b();
    const double* a = &as[nl - 1][s * emb];
    for (std::size_t i = 0; i < emb; ++i) acc += policy.out_w()[i] * a[i];
    preds[s] = acc;
    const double r = acc - labels[s];
    loss += r * r;
  }
  loss /= static_cast<double>(n);
  if (!grad_out) return loss;

  // Gradient buffers, mirroring flatten_params layout.
  std::vector<std::vector<double>> gw(nl), gb(nl), ggamma(nl), gbeta(nl);
  for (std::size_t l = 0; l < nl; ++l) {
    gw[l].assign(layers[l].w.size(), 0.0);
    gb[l].assign(layers[l].b.size(), 0.0);
    ggamma[l].assign(layers[l].gamma.size(), 0.0);
    gbeta[l].assign(layers[l].beta.size(), 0.0);
  }
  std::vector<double> gout_w(emb, 0.0);
  double gout_b = 0.0;

  std::vector<double> da(n * emb, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    const double dpred = 2.0 * (preds[s] - labels[s]) / static_cast<double>(n);
    gout_b += dpred;
    const double* a = &as[nl - 1][s * emb];
    for (std::size_t i = 0; i < emb; ++i) {
      gout_w[i] += dpred * a[i];
      da[s * emb + i] = dpred * policy.out_w()[i];
    }
  }

  for (std::size_t li = nl; li-- > 0;) {
    auto& L = layers[li];
    const std::size_t out = static_cast<std::size_t>(L.out);
    const std::size_t in = static_cast<std::size_t>(L.in);

    // Dropout and ReLU backward.
    std::vector<double> dy(n * out, 0.0);
    for (std::size_t i = 0; i < n * out; ++i) {
      const double g = da[i] * masks[li][i];
      dy[i] = ys[li][i] > 0.0 ? g : 0.0;
    }

    std::vector<double> dz;
    if (!L.gamma.empty()) {
      dz.assign(n * out, 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        double sum_dzh = 0.0;
        double sum_dzh_zh = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
          const double dyv = dy[s * out + o];
          ggamma[li][o] += dyv * zhats[li][s * out + o];
          gbeta[li][o] += dyv;
          const double dzh = dyv * L.gamma[o];
          sum_dzh += dzh;
          sum_dzh_zh += dzh * zhats[li][s * out + o];
        }
        const double istd = istds[li][o];
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t s = 0; s < n; ++s) {
          const double dzh = dy[s * out + o] * L.gamma[o];
          dz[s * out + o] =
              istd * (dzh - inv_n * sum_dzh - zhats[li][s * out + o] * inv_n * sum_dzh_zh);
        }
      }
    } else {
      dz = std::move(dy);
    }

    std::vector<double> dx(li == 0 ? 0 : n * in, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      const double* x = li == 0 ? inputs[s]->data() : &as[li - 1][s * in];
      const double* dzrow = &dz[s * out];
      for (std::size_t o = 0; o < out; ++o) {
        const double g = dzrow[o];
        gb[li][o] += g;
        double* gwrow = &gw[li][o * in];
        const double* wrow = &L.w[o * in];
        if (li == 0) {
          for (std::size_t i = 0; i < in; ++i) gwrow[i] += g * x[i];
        } else {
          double* dxrow = &dx[s * in];
          for (std::size_t i = 0; i < in; ++i) {
            gwrow[i] += g * x[i];
            dxrow[i] += g * wrow[i];
          }
        }
      }
    }
    da = std::move(dx);
  }

  grad_out->clear();
  for (std::size_t l = 0; l < nl; ++l) {
    grad_out->insert(grad_out->end(), gw[l].begin(), gw[l].end());
    grad_out->insert(grad_out->end(), gb[l].begin(), gb[l].end());
    grad_out->insert(grad_out->end(), ggamma[l].begin(), ggamma[l].end());
    grad_out->insert(grad_out->end(), gbeta[l].begin(), gbeta[l].end());
  }
  grad_out->insert(grad_out->end(), gout_w.begin(), gout_w.end());
  grad_out->push_back(gout_b);
  return loss;
}

DataView DataView::all(const ShiftedDataset& ds) {
  DataView v;
  v.inputs = &ds.inputs;
  v.labels = &ds.labels;
  v.idx.resize(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) v.idx[i] = static_cast<int>(i);
  return v;
}

DataView DataView::fold(const ShiftedDataset& ds, const std::vector<int>& assignment, int fold_id,
                        bool validation) {
  if (assignment.size() != ds.size()) {
    throw std::invalid_argument("DataView::fold: assignment size mismatch");
  }
  DataView v;
  v.inputs = &ds.inputs;
  v.labels = &ds.labels;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] < 0) continue;
    if (validation == (assignment[i] == fold_id)) v.idx.push_back(static_cast<int>(i));
  }
  return v;
}

Policy train_policy(const PolicySpec& spec, const DataView& train, const DataView& val,
                    const TrainConfig& config, TrainHistory* history) {
  if (train.size() == 0 || val.size() == 0) {
    throw std::invalid_argument("train_policy: empty train or validation set");
  }
  Policy policy(spec, derive_seed(config.seed, 0x11117));
  Rng shuffle_rng(derive_seed(config.seed, 0x5481FF));
  Rng dropout_rng(derive_seed(config.seed, 0xD207));

  std::vector<double> flat = flatten_params(policy);
  const std::vector<char> is_weight = param_is_weight(policy);
  std::vector<double> m(flat.size(), 0.0), v(flat.size(), 0.0), grad;
  long adam_t = 0;

  std::vector<int> order = train.idx;
  EarlyStopper stopper(config.patience);
  Policy best = policy;
  TrainHistory hist;

  const auto val_mse = [&]() {
    double acc = 0.0;
    for (const int i : val.idx) {
      const double r = policy.predict((*val.inputs)[static_cast<std::size_t>(i)]) -
                       (*val.labels)[static_cast<std::size_t>(i)];
      acc += r * r;
    }
    return acc / static_cast<double>(val.size());
  };

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double sq_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<const std::vector<double>*> batch_x;
      std::vector<double> batch_y;
      batch_x.reserve(end - start);
      batch_y.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) {
        batch_x.push_back(&(*train.inputs)[static_cast<std::size_t>(order[k])]);
        batch_y.push_back((*train.labels)[static_cast<std::size_t>(order[k])]);
      }
      const double loss = batch_loss_and_grad(policy, batch_x, batch_y, dropout_rng, &grad, true);
      if (!std::isfinite(loss)) {
        throw std::runtime_error("train_policy: NaN/inf loss at epoch " + std::to_string(epoch) +
                                 " (learning rate or data overflow)");
      }
      sq_sum += loss * static_cast<double>(end - start);

      flat = flatten_params(policy);
      if (config.optimizer == TrainConfig::Optimizer::adam) {
        ++adam_t;
        const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(adam_t));
        const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(adam_t));
        for (std::size_t j = 0; j < flat.size(); ++j) {
          m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * grad[j];
          v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * grad[j] * grad[j];
          flat[j] -= config.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + config.eps);
          if (is_weight[j]) flat[j] -= config.lr * config.weight_decay * flat[j];
        }
      } else {
        for (std::size_t j = 0; j < flat.size(); ++j) {
          flat[j] -= config.lr * grad[j];
          if (is_weight[j]) flat[j] -= config.lr * config.weight_decay * flat[j];
        }
      }
      unflatten_params(policy, flat);
    }
    hist.train_loss.push_back(sq_sum / static_cast<double>(order.size()));
    const double vl = val_mse();
    hist.val_loss.push_back(vl);
    const bool had_improvement = vl < stopper.best_loss();
    const bool stop = stopper.update(vl);
    if (had_improvement) best = policy;
    if (stop) break;
  }
  hist.best_epoch = stopper.best_epoch();
  if (history) *history = std::move(hist);
  return best;
}

double evaluate_mae(const Policy& policy, const DataView& data, std::vector<double>* residuals) {
  if (data.size() == 0) throw std::invalid_argument("evaluate_mae: empty dataset");
  if (residuals) residuals->clear();
  double acc = 0.0;
  for (const int i : data.idx) {
    const double r = policy.predict((*data.inputs)[static_cast<std::size_t>(i)]) -
                     (*data.labels)[static_cast<std::size_t>(i)];
    acc += std::fabs(r);
    if (residuals) residuals->push_back(r);
  }
  return acc / static_cast<double>(data.size());
}

std::vector<std::vector<double>> extract_embeddings(const Policy& policy, const DataView& data,
                                                    TapLocation location) {
  if (location == TapLocation::post_norm && !policy.spec().use_norm) {
    throw std::invalid_argument("extract_embeddings: post_norm tap undefined without feature norm");
  }
  std::vector<std::vector<double>> rows;
  rows.reserve(data.size());
  Policy::Taps taps;
  for (const int i : data.idx) {
    policy.predict_with_taps((*data.inputs)[static_cast<std::size_t>(i)], taps);
    switch (location) {
      case TapLocation::post_linear: rows.push_back(taps.post_linear); break;
      case TapLocation::post_norm: rows.push_back(taps.post_norm); break;
      case TapLocation::post_activation: rows.push_back(taps.post_activation); break;
    }
  }
  return rows;
}

namespace {
json layer_to_json(const Policy::Layer& L) {
  json j;
  j["in"] = L.in;
  j["out"] = L.out;
  j["w"] = L.w;
  j["b"] = L.b;
  j["gamma"] = L.gamma;
  j["beta"] = L.beta;
  j["run_mean"] = L.run_mean;
  j["run_var"] = L.run_var;
  return j;
}
}  // namespace

std::string Policy::to_json_text() const {
  json j;
  j["spec"] = {{"input_dim", spec_.input_dim},
               {"hidden", spec_.hidden},
               {"use_norm", spec_.use_norm},
               {"dropout_p", spec_.dropout_p}};
  j["layers"] = json::array();
  for (const auto& L : layers_) j["layers"].push_back(layer_to_json(L));
  j["out_w"] = out_w_;
  j["out_b"] = out_b_;
  j["content_hash"] = hash_hex(fnv1a64(j.dump()));
  return j.dump(2);
}

Policy Policy::from_json_text(std::string_view text) {
  json j = json::parse(text);
  const json hash_field = j.at("content_hash");
  j.erase("content_hash");
  if (hash_field.get<std::string>() != hash_hex(fnv1a64(j.dump()))) {
    throw std::runtime_error("Policy: content hash mismatch (corrupt or edited file)");
  }
  Policy p;
  p.spec_.input_dim = j.at("spec").at("input_dim").get<int>();
  p.spec_.hidden = j.at("spec").at("hidden").get<std::vector<int>>();
  p.spec_.use_norm = j.at("spec").at("use_norm").get<bool>();
  p.spec_.dropout_p = j.at("spec").at("dropout_p").get<double>();
  for (const auto& lj : j.at("layers")) {
    Policy::Layer L;
    L.in = lj.at("in").get<int>();
    L.out = lj.at("out").get<int>();
    L.w = lj.at("w").get<std::vector<double>>();
    L.b = lj.at("b").get<std::vector<double>>();
    L.gamma = lj.at("gamma").get<std::vector<double>>();
    L.beta = lj.at("beta").get<std::vector<double>>();
    L.run_mean = lj.at("run_mean").get<std::vector<double>>();
    L.run_var = lj.at("run_var").get<std::vector<double>>();
    if (L.w.size() != static_cast<std::size_t>(L.in) * static_cast<std::size_t>(L.out)) {
      throw std::runtime_error("Policy: layer weight shape mismatch");
    }
    p.layers_.push_back(std::move(L));
  }
  p.out_w_ = j.at("out_w").get<std::vector<double>>();
  p.out_b_ = j.at("out_b").get<double>();
  for (const double w : flatten_params(p)) {
    if (!std::isfinite(w)) throw std::runtime_error("Policy: non-finite weight in file");
  }
  return p;
}

void Policy::save(const std::filesystem::path& file) const {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("Policy::save: cannot write " + file.string());
  out << to_json_text() << '\n';
}

Policy Policy::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("Policy::load: cannot read " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::uint64_t Policy::content_hash() const { return fnv1a64(to_json_text()); }

}  // namespace minidrive
