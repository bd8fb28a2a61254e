#include "asvkit/nn/layers.hpp"

#include <Eigen/Core>
#include <cmath>

#include "asvkit/error.hpp"

namespace asv::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using ConstMatMap = Eigen::Map<const RowMat>;
using MatMap = Eigen::Map<RowMat>;
using ConstVecMap = Eigen::Map<const Vec>;
using VecMap = Eigen::Map<Vec>;

double sigm(double v) { return 1.0 / (1.0 + std::exp(-v)); }

void check_lstm_input(const LstmCellParams& p, const Tensor& seq) {
  if (seq.rank() != 2 || seq.dim(1) != p.input()) {
    fail(Errc::ShapeMismatch, "lstm: expected [T x " + std::to_string(p.input()) +
                                  "] input, got " + to_string(seq.shape()));
  }
  if (seq.dim(0) == 0) fail(Errc::ShapeMismatch, "lstm: empty sequence");
}

}  // namespace

void xavier_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out,
                    Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.mutable_data()) v = rng.uniform(-a, a);
}

LstmCellParams LstmCellParams::zeros(std::size_t input, std::size_t hidden) {
  LstmCellParams p;
  for (Tensor* w : {&p.w_forget, &p.w_input, &p.w_output, &p.w_cell}) {
    *w = Tensor::zeros({hidden, hidden + input}, true);
  }
  for (Tensor* b : {&p.b_forget, &p.b_input, &p.b_output, &p.b_cell}) {
    *b = Tensor::zeros({hidden}, true);
  }
  return p;
}

LstmCellParams LstmCellParams::init(std::size_t input, std::size_t hidden,
                                    Rng& rng) {
  auto p = zeros(input, hidden);
  for (Tensor* w : {&p.w_forget, &p.w_input, &p.w_output, &p.w_cell}) {
    xavier_uniform(*w, hidden + input, hidden, rng);
  }
  for (double& v : p.b_forget.mutable_data()) v = 1.0;
  return p;
}

void LstmCellParams::collect(std::vector<NamedTensor>& out,
                             const std::string& prefix) const {
  out.push_back({prefix + ".w_forget", w_forget});
  out.push_back({prefix + ".w_input", w_input});
  out.push_back({prefix + ".w_output", w_output});
  out.push_back({prefix + ".w_cell", w_cell});
  out.push_back({prefix + ".b_forget", b_forget});
  out.push_back({prefix + ".b_input", b_input});
  out.push_back({prefix + ".b_output", b_output});
  out.push_back({prefix + ".b_cell", b_cell});
}

LstmState lstm_cell_step(const LstmCellParams& p, const Tensor& x,
                         const Tensor& h_prev, const Tensor& c_prev) {
  if (x.rank() != 1 || x.size() != p.input() || h_prev.size() != p.hidden() ||
      c_prev.size() != p.hidden()) {
    fail(Errc::ShapeMismatch, "lstm_cell_step: dimensions inconsistent with params");
  }
  const Tensor z = concat({h_prev, x});
  const Tensor f = sigmoid(add(matmul(p.w_forget, z), p.b_forget));
  const Tensor i = sigmoid(add(matmul(p.w_input, z), p.b_input));
  const Tensor o = sigmoid(add(matmul(p.w_output, z), p.b_output));
  const Tensor candidate = tanh(add(matmul(p.w_cell, z), p.b_cell));
  Tensor c = add(mul(f, c_prev), mul(i, candidate));
  Tensor h = mul(o, tanh(c));
  return {std::move(h), std::move(c)};
}

Tensor lstm_sequence_stepwise(const LstmCellParams& p, const Tensor& seq,
                              bool reverse) {
  check_lstm_input(p, seq);
  const std::size_t steps = seq.dim(0);
  LstmState state{Tensor::zeros({p.hidden()}), Tensor::zeros({p.hidden()})};
  std::vector<Tensor> outputs(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    state = lstm_cell_step(p, row(seq, t), state.h, state.c);
    outputs[t] = state.h;
  }
  return stack_rows(outputs);
}

Tensor lstm_sequence(const LstmCellParams& p, const Tensor& seq, bool reverse) {
  check_lstm_input(p, seq);
  const std::size_t steps = seq.dim(0);
  const std::size_t hid = p.hidden();
  const std::size_t in = p.input();
  const std::size_t zdim = hid + in;

  // Per-step caches, laid out [steps x dim] in processing order.
  struct Cache {
    RowMat z, f, i, o, g, c, tanh_c;
  };
  Cache cache{RowMat(steps, zdim), RowMat(steps, hid), RowMat(steps, hid),
              RowMat(steps, hid),  RowMat(steps, hid), RowMat(steps, hid),
              RowMat(steps, hid)};

  ConstMatMap wf(p.w_forget.data().data(), hid, zdim);
  ConstMatMap wi(p.w_input.data().data(), hid, zdim);
  ConstMatMap wo(p.w_output.data().data(), hid, zdim);
  ConstMatMap wc(p.w_cell.data().data(), hid, zdim);
  ConstVecMap bf(p.b_forget.data().data(), hid);
  ConstVecMap bi(p.b_input.data().data(), hid);
  ConstVecMap bo(p.b_output.data().data(), hid);
  ConstVecMap bc(p.b_cell.data().data(), hid);

  std::vector<double> out(steps * hid);
  Vec h = Vec::Zero(hid), c = Vec::Zero(hid), z(zdim), a(hid);
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    z.head(hid) = h;
    z.tail(in) = ConstVecMap(seq.data().data() + t * in, in);
    cache.z.row(s) = z.transpose();
    a.noalias() = wf * z + bf;
    auto f = cache.f.row(s);
    for (std::size_t k = 0; k < hid; ++k) f(k) = sigm(a(k));
    a.noalias() = wi * z + bi;
    auto i = cache.i.row(s);
    for (std::size_t k = 0; k < hid; ++k) i(k) = sigm(a(k));
    a.noalias() = wo * z + bo;
    auto o = cache.o.row(s);
    for (std::size_t k = 0; k < hid; ++k) o(k) = sigm(a(k));
    a.noalias() = wc * z + bc;
    auto g = cache.g.row(s);
    for (std::size_t k = 0; k < hid; ++k) g(k) = std::tanh(a(k));
    for (std::size_t k = 0; k < hid; ++k) {
      c(k) = f(k) * c(k) + i(k) * g(k);
      cache.c(s, k) = c(k);
      cache.tanh_c(s, k) = std::tanh(c(k));
      h(k) = o(k) * cache.tanh_c(s, k);
      out[t * hid + k] = h(k);
    }
  }

  return make_result(
      {steps, hid}, std::move(out),
      {seq, p.w_forget, p.w_input, p.w_output, p.w_cell, p.b_forget, p.b_input,
       p.b_output, p.b_cell},
      [cache = std::move(cache), steps, hid, in, zdim, reverse](detail::Node& self) {
        auto grad_ptr = [&self](std::size_t k) -> double* {
          auto& n = *self.parents[k];
          return n.requires_grad ? n.grad.data() : nullptr;
        };
        ConstMatMap wf(self.parents[1]->data.data(), hid, zdim);
        ConstMatMap wi(self.parents[2]->data.data(), hid, zdim);
        ConstMatMap wo(self.parents[3]->data.data(), hid, zdim);
        ConstMatMap wc(self.parents[4]->data.data(), hid, zdim);

        RowMat dwf = RowMat::Zero(hid, zdim), dwi = RowMat::Zero(hid, zdim);
        RowMat dwo = RowMat::Zero(hid, zdim), dwc = RowMat::Zero(hid, zdim);
        Vec dbf = Vec::Zero(hid), dbi = Vec::Zero(hid), dbo = Vec::Zero(hid),
            dbc = Vec::Zero(hid);
        Vec dh_next = Vec::Zero(hid), dc_next = Vec::Zero(hid);
        Vec daf(hid), dai(hid), dao(hid), dag(hid), dz(zdim);
        double* dseq = grad_ptr(0);

        for (std::size_t s = steps; s-- > 0;) {
          const std::size_t t = reverse ? steps - 1 - s : s;
          for (std::size_t k = 0; k < hid; ++k) {
            const double dh = self.grad[t * hid + k] + dh_next(k);
            const double f = cache.f(s, k), i = cache.i(s, k), o = cache.o(s, k);
            const double g = cache.g(s, k), tc = cache.tanh_c(s, k);
            const double c_prev = s > 0 ? cache.c(s - 1, k) : 0.0;
            const double dc = dh * o * (1.0 - tc * tc) + dc_next(k);
            dao(k) = dh * tc * o * (1.0 - o);
            daf(k) = dc * c_prev * f * (1.0 - f);
            dai(k) = dc * g * i * (1.0 - i);
            dag(k) = dc * i * (1.0 - g * g);
            dc_next(k) = dc * f;
          }
          const auto z = cache.z.row(s);
          dwf.noalias() += daf * z;
          dwi.noalias() += dai * z;
          dwo.noalias() += dao * z;
          dwc.noalias() += dag * z;
          dbf += daf;
          dbi += dai;
          dbo += dao;
          dbc += dag;
          dz.noalias() = wf.transpose() * daf;
          dz.noalias() += wi.transpose() * dai;
          dz.noalias() += wo.transpose() * dao;
          dz.noalias() += wc.transpose() * dag;
          dh_next = dz.head(hid);
          if (dseq) {
            for (std::size_t k = 0; k < in; ++k) dseq[t * in + k] += dz(hid + k);
          }
        }

        const RowMat* dw[] = {&dwf, &dwi, &dwo, &dwc};
        for (std::size_t q = 0; q < 4; ++q) {
          if (double* g = grad_ptr(1 + q)) MatMap(g, hid, zdim) += *dw[q];
        }
        const Vec* db[] = {&dbf, &dbi, &dbo, &dbc};
        for (std::size_t q = 0; q < 4; ++q) {
          if (double* g = grad_ptr(5 + q)) VecMap(g, hid) += *db[q];
        }
      });
}

BiLstm BiLstm::init(std::size_t input, std::size_t hidden, Rng& rng) {
  BiLstm layer;
  layer.forward = LstmCellParams::init(input, hidden, rng);
  layer.backward = LstmCellParams::init(input, hidden, rng);
  return layer;
}

void BiLstm::collect(std::vector<NamedTensor>& out,
                     const std::string& prefix) const {
  forward.collect(out, prefix + ".fwd");
  backward.collect(out, prefix + ".bwd");
}

Tensor bilstm_forward(const LstmCellParams& fwd, const LstmCellParams& bwd,
                      const Tensor& seq) {
  return concat_cols(lstm_sequence(fwd, seq, false),
                     lstm_sequence(bwd, seq, true));
}

AttentionParams AttentionParams::init(std::size_t d, std::size_t attn,
                                      Rng& rng, std::size_t out,
                                      std::size_t query) {
  if (out == 0) out = d;
  if (query == 0) query = d;
  AttentionParams p;
  p.w_h = Tensor::zeros({attn, d}, true);
  p.w = Tensor::zeros({attn}, true);
  p.w_m = Tensor::zeros({out, d}, true);
  p.w_n = Tensor::zeros({out, query}, true);
  xavier_uniform(p.w_h, d, attn, rng);
  xavier_uniform(p.w, attn, 1, rng);
  xavier_uniform(p.w_m, d, out, rng);
  xavier_uniform(p.w_n, query, out, rng);
  return p;
}

void AttentionParams::collect(std::vector<NamedTensor>& out,
                              const std::string& prefix) const {
  out.push_back({prefix + ".w_h", w_h});
  out.push_back({prefix + ".w", w});
  out.push_back({prefix + ".w_m", w_m});
  out.push_back({prefix + ".w_n", w_n});
}

AttentionOutput attention_forward(const AttentionParams& p,
                                  const Tensor& states, const Tensor& query) {
  const std::size_t d = p.input_size();
  if (states.rank() != 2 || states.dim(0) != d || states.dim(1) == 0 ||
      query.rank() != 1 || query.size() != p.query_size()) {
    fail(Errc::ShapeMismatch, "attention: states " + to_string(states.shape()) +
                                  " / query " + to_string(query.shape()) +
                                  " do not match d=" + std::to_string(d) +
                                  ", query=" + std::to_string(p.query_size()));
  }
  const std::size_t steps = states.dim(1);
  const Tensor projected = tanh(matmul(p.w_h, states));                 // [a x T]
  const Tensor scores = matmul(reshape(p.w, {1, p.w.size()}), projected);  // [1 x T]
  Tensor alpha = softmax(reshape(scores, {steps}));
  const Tensor weighted = matmul(states, alpha);                        // [d]
  Tensor h_star = tanh(add(matmul(p.w_m, weighted), matmul(p.w_n, query)));
  return {std::move(h_star), std::move(alpha)};
}

Dense Dense::init(std::size_t in, std::size_t out, Rng& rng) {
  Dense d{Tensor::zeros({out, in}, true), Tensor::zeros({out}, true)};
  xavier_uniform(d.weight, in, out, rng);
  return d;
}

Tensor Dense::operator()(const Tensor& x) const {
  return add(matmul(weight, x), bias);
}

void Dense::collect(std::vector<NamedTensor>& out,
                    const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

Conv2d Conv2d::init(std::size_t in, std::size_t out, std::size_t kernel,
                    std::size_t stride, Rng& rng) {
  if (kernel % 2 == 0) fail(Errc::InvalidArgument, "conv kernel must be odd");
  Conv2d conv{Tensor::zeros({out, in, kernel, kernel}, true),
              Tensor::zeros({out}, true), stride, kernel / 2};
  xavier_uniform(conv.weight, in * kernel * kernel, out * kernel * kernel, rng);
  return conv;
}

Tensor Conv2d::operator()(const Tensor& x) const {
  return conv2d(x, weight, bias, stride, padding);
}

void Conv2d::collect(std::vector<NamedTensor>& out,
                     const std::string& prefix) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

ResidualBlock ResidualBlock::init(std::size_t in, std::size_t out,
                                  std::size_t stride, Rng& rng) {
  ResidualBlock block{Conv2d::init(in, out, 3, stride, rng),
                      Conv2d::init(out, out, 3, 1, rng), std::nullopt};
  if (in != out || stride != 1) {
    block.projection = Conv2d::init(in, out, 1, stride, rng);
  }
  return block;
}

Tensor ResidualBlock::operator()(const Tensor& x) const {
  const Tensor inner = conv2(relu(conv1(x)));
  const Tensor shortcut = projection ? (*projection)(x) : x;
  return relu(add(inner, shortcut));
}

void ResidualBlock::collect(std::vector<NamedTensor>& out,
                            const std::string& prefix) const {
  conv1.collect(out, prefix + ".conv1");
  conv2.collect(out, prefix + ".conv2");
  if (projection) projection->collect(out, prefix + ".proj");
}

}  // namespace asv::nn
