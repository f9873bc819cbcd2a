#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "minidrive/learner.hpp"

using namespace minidrive;

namespace {

// Small synthetic regression sets.
ShiftedDataset toy_dataset(int n, int dim, std::uint64_t seed, bool linear = false) {
  ShiftedDataset ds;
  ds.input_dim = dim;
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    std::vector<double> x(static_cast<std::size_t>(dim));
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    double y;
    if (linear) {
      y = 0.3 * x[0] - 0.5 * x[static_cast<std::size_t>(dim - 1)];
    } else {
      y = std::tanh(x[0] - 0.7 * x[1]) * 0.5;
    }
    ds.inputs.push_back(std::move(x));
    ds.labels.push_back(y);
    ds.source_index.push_back(i);
    ds.newest_frame_times.push_back(i * 0.05);
    ds.label_times.push_back(i * 0.05);
  }
  return ds;
}

}  // namespace

TEST_CASE("analytic gradients match central finite differences on every layer type") {
  for (const bool use_norm : {false, true}) {
    CAPTURE(use_norm);
    PolicySpec spec;
    spec.input_dim = 5;
    spec.hidden = {4, 3};
    spec.use_norm = use_norm;
    spec.dropout_p = 0.2;
    Policy policy(spec, 77);

    const ShiftedDataset ds = toy_dataset(3, 5, 3);
    std::vector<const std::vector<double>*> xs;
    for (const auto& x : ds.inputs) xs.push_back(&x);

    // Fixed dropout masks: every evaluation replays the same rng.
    const Rng mask_rng(555);
    std::vector<double> grad;
    {
      Rng rng = mask_rng;
      batch_loss_and_grad(policy, xs, ds.labels, rng, &grad, false);
    }

    std::vector<double> flat = flatten_params(policy);
    REQUIRE(grad.size() == flat.size());
    const double h = 1e-5;
    int checked = 0;
    for (std::size_t j = 0; j < flat.size(); ++j) {
      const double keep = flat[j];
      flat[j] = keep + h;
      unflatten_params(policy, flat);
      Rng rp = mask_rng;
      const double lp = batch_loss_and_grad(policy, xs, ds.labels, rp, nullptr, false);
      flat[j] = keep - h;
      unflatten_params(policy, flat);
      Rng rm = mask_rng;
      const double lm = batch_loss_and_grad(policy, xs, ds.labels, rm, nullptr, false);
      flat[j] = keep;
      unflatten_params(policy, flat);
      const double fd = (lp - lm) / (2.0 * h);
      const double denom = std::fmax(1e-8, std::fmax(std::fabs(fd), std::fabs(grad[j])));
      if (std::fabs(fd) > 1e-10 || std::fabs(grad[j]) > 1e-10) {
        CHECK(std::fabs(fd - grad[j]) / denom < 1e-4);
        ++checked;
      }
    }
    CHECK(checked > 20);
  }
}

TEST_CASE("constant-label data converges to the constant") {
  ShiftedDataset ds = toy_dataset(256, 4, 9);
  for (auto& y : ds.labels) y = 0.37;
  PolicySpec spec;
  spec.input_dim = 4;
  spec.hidden = {8, 4};
  spec.dropout_p = 0.0;
  TrainConfig tc;
  tc.seed = 5;
  tc.max_epochs = 60;
  const DataView all = DataView::all(ds);
  const Policy p = train_policy(spec, all, all, tc);
  for (int i = 0; i < 10; ++i) {
    CHECK(p.predict(ds.inputs[static_cast<std::size_t>(i)]) == doctest::Approx(0.37).epsilon(0.03));
  }
}

TEST_CASE("early stopping: patience rule and best-epoch bookkeeping") {
  EarlyStopper stopper(5);
  const double losses[] = {0.5, 0.4, 0.41, 0.42, 0.43, 0.44, 0.45};
  bool stopped = false;
  int stop_epoch = -1;
  for (int e = 0; e < 7; ++e) {
    if (stopper.update(losses[e])) {
      stopped = true;
      stop_epoch = e;
      break;
    }
  }
  CHECK(stopped);
  CHECK(stop_epoch == 6);          // stops after the 7th epoch
  CHECK(stopper.best_epoch() == 1);  // returns the 2nd epoch's weights
  CHECK(stopper.best_loss() == doctest::Approx(0.4));
}

TEST_CASE("zero output head predicts zero; inference is deterministic") {
  PolicySpec spec;
  spec.input_dim = 6;
  spec.hidden = {5, 4};
  spec.dropout_p = 0.2;
  Policy p(spec, 3);
  for (auto& w : p.out_w()) w = 0.0;
  p.out_b() = 0.0;
  const std::vector<double> x{0.4, -1.0, 2.0, 0.0, 0.3, -0.2};
  CHECK(p.predict(x) == 0.0);

  Policy q(spec, 4);
  CHECK(q.predict(x) == q.predict(x));  // no dropout stochasticity at inference
  CHECK_THROWS(q.predict({1.0, 2.0}));  // dimension mismatch
}

TEST_CASE("taps: post_activation = relu(post_norm), nonnegative rows") {
  PolicySpec spec;
  spec.input_dim = 6;
  spec.hidden = {5, 4};
  spec.use_norm = true;
  Policy p(spec, 11);
  Policy::Taps taps;
  p.predict_with_taps({0.5, -0.2, 1.0, 0.1, -0.9, 0.25}, taps);
  REQUIRE(taps.post_norm.size() == 4);
  REQUIRE(taps.post_activation.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(taps.post_activation[i] == doctest::Approx(std::fmax(0.0, taps.post_norm[i])));
    CHECK(taps.post_activation[i] >= 0.0);
  }

  // Without feature norm the post_norm tap is undefined.
  PolicySpec plain = spec;
  plain.use_norm = false;
  Policy p2(plain, 11);
  ShiftedDataset ds = toy_dataset(4, 6, 2);
  CHECK_THROWS(extract_embeddings(p2, DataView::all(ds), TapLocation::post_norm));
  const auto rows = extract_embeddings(p2, DataView::all(ds), TapLocation::post_activation);
  CHECK(rows.size() == 4);
  CHECK(rows[0].size() == 4);
  const auto rows2 = extract_embeddings(p2, DataView::all(ds), TapLocation::post_activation);
  CHECK(rows == rows2);
}

TEST_CASE("dropout expectation: train-mode mean matches inference (inverted scaling)") {
  PolicySpec spec;
  spec.input_dim = 4;
  spec.hidden = {6};
  spec.dropout_p = 0.2;
  Policy p(spec, 21);
  const ShiftedDataset ds = toy_dataset(1, 4, 6);
  std::vector<const std::vector<double>*> xs{&ds.inputs[0]};
  const std::vector<double> label{0.0};

  // Train-mode prediction mean over many masks. batch_loss gives the loss,
  // (pred - y)^2 with y=0 -> pred^2; recover |pred| is lossy, so instead
  // average the signed prediction via a labels trick: loss with y and -y.
  // Simpler: expectation of relu-masked sums is linear, so compare the
  // train-mode loss mean against the inference prediction directly.
  const double infer_pred = p.predict(ds.inputs[0]);

  Rng rng(303);
  const int trials = 10000;
  double mean_sq = 0.0;
  for (int i = 0; i < trials; ++i) {
    mean_sq += batch_loss_and_grad(p, xs, label, rng, nullptr, false);  // = pred^2
  }
  mean_sq /= trials;
  // E[pred] = infer_pred under inverted dropout; Var adds on top, so check
  // the first moment through a linear functional instead: loss with labels
  // +c and -c gives E[(p-c)^2]-E[(p+c)^2] = -4c E[p].
  const double c = 1.0;
  double loss_plus = 0.0, loss_minus = 0.0;
  Rng rng_p(404), rng_m(404);  // identical masks pairwise
  for (int i = 0; i < trials; ++i) {
    loss_plus += batch_loss_and_grad(p, xs, {c}, rng_p, nullptr, false);
    loss_minus += batch_loss_and_grad(p, xs, {-c}, rng_m, nullptr, false);
  }
  const double mean_pred = (loss_minus - loss_plus) / (4.0 * c * trials);
  // 3 sigma Monte-Carlo band using the sample variance of pred.
  const double var_pred = std::fmax(0.0, mean_sq - mean_pred * mean_pred);
  const double band = 3.0 * std::sqrt(var_pred / trials);
  CHECK(std::fabs(mean_pred - infer_pred) <= band + 1e-6);
}

TEST_CASE("full-batch gradient descent is monotone on a noise-free linear problem") {
  ShiftedDataset ds = toy_dataset(64, 4, 13, true);
  PolicySpec spec;
  spec.input_dim = 4;
  spec.hidden = {8};
  spec.dropout_p = 0.0;
  TrainConfig tc;
  tc.optimizer = TrainConfig::Optimizer::sgd;
  tc.lr = 0.05;
  tc.weight_decay = 0.0;
  tc.batch_size = 64;  // = dataset size: full-batch mode
  tc.max_epochs = 40;
  tc.patience = 40;
  tc.seed = 17;
  TrainHistory hist;
  const DataView all = DataView::all(ds);
  train_policy(spec, all, all, tc, &hist);
  REQUIRE(hist.train_loss.size() >= 10);
  for (std::size_t e = 1; e < hist.train_loss.size(); ++e) {
    CHECK(hist.train_loss[e] <= hist.train_loss[e - 1] + 1e-12);
  }
}

TEST_CASE("training is bit-deterministic in (config, data, seed)") {
  const ShiftedDataset ds = toy_dataset(200, 5, 23);
  PolicySpec spec;
  spec.input_dim = 5;
  spec.hidden = {8, 4};
  spec.use_norm = true;
  TrainConfig tc;
  tc.seed = 99;
  tc.max_epochs = 8;
  const auto assign = split_block(ds.size(), 5);
  const DataView train = DataView::fold(ds, assign, 4, false);
  const DataView val = DataView::fold(ds, assign, 4, true);
  const Policy a = train_policy(spec, train, val, tc);
  const Policy b = train_policy(spec, train, val, tc);
  CHECK(flatten_params(a) == flatten_params(b));
  CHECK(a.to_json_text() == b.to_json_text());

  TrainConfig tc2 = tc;
  tc2.seed = 100;
  const Policy c = train_policy(spec, train, val, tc2);
  CHECK(flatten_params(a) != flatten_params(c));
}

TEST_CASE("NaN loss aborts with a diagnostic") {
  ShiftedDataset ds = toy_dataset(64, 3, 31);
  for (auto& y : ds.labels) y *= 1e150;  // force overflow
  PolicySpec spec;
  spec.input_dim = 3;
  spec.hidden = {4};
  TrainConfig tc;
  tc.lr = 1e120;
  const DataView all = DataView::all(ds);
  CHECK_THROWS_AS(train_policy(spec, all, all, tc), std::runtime_error);
}

TEST_CASE("evaluate_mae: exact arithmetic and the empty-set error") {
  ShiftedDataset ds = toy_dataset(2, 3, 41);
  PolicySpec spec;
  spec.input_dim = 3;
  spec.hidden = {4};
  Policy p(spec, 1);
  for (auto& w : p.out_w()) w = 0.0;

  ds.labels = {0.1, -0.3};
  std::vector<double> residuals;
  const double mae = evaluate_mae(p, DataView::all(ds), &residuals);
  CHECK(mae == doctest::Approx(0.2));
  REQUIRE(residuals.size() == 2);
  CHECK(residuals[0] == doctest::Approx(-0.1));
  CHECK(residuals[1] == doctest::Approx(0.3));

  // Predictions equal to labels give zero MAE.
  ds.labels = {0.0, 0.0};
  CHECK(evaluate_mae(p, DataView::all(ds)) == 0.0);

  DataView empty;
  empty.inputs = &ds.inputs;
  empty.labels = &ds.labels;
  CHECK_THROWS(evaluate_mae(p, empty));
}

TEST_CASE("policy file round trip with content hash verification") {
  PolicySpec spec;
  spec.input_dim = 7;
  spec.hidden = {6, 5};
  spec.use_norm = true;
  const Policy p(spec, 8);
  const std::string text = p.to_json_text();
  const Policy q = Policy::from_json_text(text);
  CHECK(flatten_params(p) == flatten_params(q));
  CHECK(q.spec() == spec);

  // Tampering breaks the hash check.
  std::string bad = text;
  const auto pos = bad.find("0.");
  bad[pos + 2] = bad[pos + 2] == '1' ? '2' : '1';
  CHECK_THROWS(Policy::from_json_text(bad));

  const auto file = std::filesystem::temp_directory_path() / "minidrive_policy.json";
  p.save(file);
  const Policy r = Policy::load(file);
  CHECK(flatten_params(p) == flatten_params(r));
}
