#include "asvkit/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "asvkit/nn/layers.hpp"
#include "asvkit/nn/ops.hpp"
#include "asvkit/rng.hpp"

namespace asv::nn {

double GradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_error);
  return worst;
}

GradCheckReport gradient_check(const std::function<Tensor()>& loss_fn,
                               std::vector<NamedTensor> wrt, double step,
                               std::size_t max_per_tensor) {
  for (auto& p : wrt) {
    p.tensor.set_requires_grad(true);
    p.tensor.zero_grad();
  }
  backward(loss_fn());

  GradCheckReport report;
  for (auto& p : wrt) {
    const std::vector<double> analytic(p.tensor.grad().begin(), p.tensor.grad().end());
    auto values = p.tensor.mutable_data();
    const std::size_t n = values.size();
    const std::size_t count = max_per_tensor == 0 ? n : std::min(n, max_per_tensor);

    GradCheckEntry entry{p.name, 0.0, 0.0, 0};
    NoGradGuard no_grad;
    for (std::size_t s = 0; s < count; ++s) {
      const std::size_t i = count == n ? s : (s * n) / count;
      const double original = values[i];
      values[i] = original + step;
      const double plus = loss_fn().item();
      values[i] = original - step;
      const double minus = loss_fn().item();
      values[i] = original;
      const double numeric = (plus - minus) / (2.0 * step);
      const double abs_err = std::abs(analytic[i] - numeric);
      const double denom =
          std::max({std::abs(analytic[i]), std::abs(numeric), kGradCheckFloor});
      entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
      entry.max_rel_error = std::max(entry.max_rel_error, abs_err / denom);
      ++entry.checked;
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}

/// Contracts an output with fixed random weights so every element matters.
Tensor probe(const Tensor& out, const Tensor& weights) {
  return sum(mul(out, weights));
}

}  // namespace

std::vector<GradCheckReport> run_layer_gradchecks(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradCheckReport> reports;
  auto record = [&](std::string label, GradCheckReport r) {
    r.label = std::move(label);
    reports.push_back(std::move(r));
  };

  {
    Dense layer = Dense::init(5, 4, rng);
    Tensor x = random_tensor({5}, rng);
    Tensor w = random_tensor({4}, rng);
    record("dense", gradient_check([&] { return probe(tanh(layer(x)), w); },
                                   {{"weight", layer.weight}, {"bias", layer.bias}, {"x", x}}));
  }
  {
    Conv2d conv = Conv2d::init(2, 3, 3, 1, rng);
    Tensor x = random_tensor({2, 6, 5}, rng);
    Tensor w = random_tensor({3, 6, 5}, rng);
    record("conv2d", gradient_check([&] { return probe(conv(x), w); },
                                    {{"weight", conv.weight}, {"bias", conv.bias}, {"x", x}}));
    Conv2d strided = Conv2d::init(2, 2, 3, 2, rng);
    Tensor ws = random_tensor({2, 3, 3}, rng);
    record("conv2d_stride2", gradient_check([&] { return probe(strided(x), ws); },
                                            {{"weight", strided.weight}, {"x", x}}));
  }
  {
    // Distinct values keep the argmax away from ties.
    std::vector<double> v(2 * 4 * 4);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sin(1.7 * i + 0.3) * (1.0 + 0.01 * i);
    Tensor x = Tensor::from({2, 4, 4}, v);
    Tensor w = random_tensor({2, 2, 2}, rng);
    record("maxpool2d", gradient_check([&] { return probe(maxpool2d(x, 2, 2), w); }, {{"x", x}}));
  }
  {
    ResidualBlock same = ResidualBlock::init(2, 2, 1, rng);
    ResidualBlock proj = ResidualBlock::init(2, 3, 2, rng);
    Tensor x = random_tensor({2, 5, 5}, rng);
    Tensor w1 = random_tensor({2, 5, 5}, rng);
    Tensor w2 = random_tensor({3, 3, 3}, rng);
    std::vector<NamedTensor> params{{"x", x}};
    same.collect(params, "same");
    proj.collect(params, "proj");
    record("residual_block", gradient_check(
                                 [&] { return add(probe(same(x), w1), probe(proj(x), w2)); },
                                 params));
  }
  {
    auto p = LstmCellParams::init(2, 3, rng);
    Tensor xs = random_tensor({3, 2}, rng);
    Tensor w = random_tensor({3}, rng);
    std::vector<NamedTensor> params{{"x", xs}};
    p.collect(params, "cell");
    record("lstm_cell_3_steps", gradient_check(
                                    [&] {
                                      LstmState s{Tensor::zeros({3}), Tensor::zeros({3})};
                                      for (std::size_t t = 0; t < 3; ++t) {
                                        s = lstm_cell_step(p, row(xs, t), s.h, s.c);
                                      }
                                      return add(probe(s.h, w), probe(s.c, w));
                                    },
                                    params));
  }
  {
    auto p = LstmCellParams::init(3, 4, rng);
    Tensor xs = random_tensor({5, 3}, rng);
    Tensor w = random_tensor({5, 4}, rng);
    std::vector<NamedTensor> params{{"x", xs}};
    p.collect(params, "lstm");
    record("lstm_sequence", gradient_check([&] { return probe(lstm_sequence(p, xs, true), w); },
                                           params));
  }
  {
    BiLstm layer = BiLstm::init(3, 2, rng);
    Tensor xs = random_tensor({4, 3}, rng);
    Tensor w = random_tensor({4, 4}, rng);
    std::vector<NamedTensor> params{{"x", xs}};
    layer.collect(params, "bilstm");
    record("bilstm", gradient_check([&] { return probe(bilstm_forward(layer, xs), w); }, params));
  }
  {
    auto p = AttentionParams::init(4, 3, rng, 5, 6);
    Tensor states = random_tensor({4, 3}, rng);
    Tensor query = random_tensor({6}, rng);
    Tensor w = random_tensor({5}, rng);
    std::vector<NamedTensor> params{{"H", states}, {"h_x", query}};
    p.collect(params, "attn");
    record("attention", gradient_check(
                            [&] { return probe(attention_forward(p, states, query).h_star, w); },
                            params));
  }
  {
    Tensor logits = random_tensor({5}, rng, -2.0, 2.0);
    record("softmax_cross_entropy",
           gradient_check([&] { return cross_entropy(logits, 2); }, {{"logits", logits}}));
    Tensor w = random_tensor({5}, rng);
    record("softmax", gradient_check([&] { return probe(softmax(logits), w); },
                                     {{"logits", logits}}));
  }
  return reports;
}

}  // namespace asv::nn
