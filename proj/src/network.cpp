// SPDX-License-Identifier: Apache-2.0
#include "rotdcf/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "rotdcf/error.hpp"
#include "rotdcf/kernels.hpp"

namespace rotdcf {

using kernels::Op;

// Fixed per-layer data for the decomposed convolutions. The angular
// transform rows are [1, cos t, sin t, ..., cos F t, sin F t] with F the
// highest frequency among the K_alpha angular basis rows, so J = 2F + 1.
struct ConvPlan {
  LayerType type = LayerType::Lift;
  int L = 0, Mp = 0, M = 0, K = 0, Ka = 1, N = 1, J = 1, H = 0, W = 0;
  double radius_px = 1.0;
  std::optional<SpatialBasisSet> spatial;
  std::optional<AngularBasisSet> angular;
  std::vector<double> psi_h;  // K x L^2, samples times the quadrature weight h^2
  std::vector<double> phi_n;  // J x N, transform rows divided by N
  std::vector<Tensor> steer;  // S(2 pi s / N), K x K
  std::vector<Tensor> shift;  // P_s: phi_m(b - s) = sum_j P_s(m, j) row_j(b), Ka x J

  int planes() const { return Mp * J; }
  int Q() const { return K * Mp * J; }
  std::size_t HW() const { return static_cast<std::size_t>(H) * W; }
};

namespace {

double trig_row(int j, int a, int N) {
  if (j == 0) return 1.0;
  const int f = (j + 1) / 2;
  const double t = 2.0 * std::numbers::pi * ((static_cast<long>(f) * a) % N) / N;
  return j % 2 ? std::cos(t) : std::sin(t);
}

std::shared_ptr<const ConvPlan> make_plan(const LayerSpec& l, const Shape& in, int n_theta, double radius) {
  auto p = std::make_shared<ConvPlan>();
  p->type = l.type;
  p->L = l.L;
  p->Mp = static_cast<int>(in[0]);
  p->M = l.M;
  p->H = static_cast<int>(in[2]);
  p->W = static_cast<int>(in[3]);
  p->radius_px = radius;
  if (l.type == LayerType::ConvPlain) return p;

  p->K = l.K;
  p->N = n_theta;
  p->spatial = build_fb_basis(l.L, l.K);
  const double h2 = p->spatial->grid.h * p->spatial->grid.h;
  p->psi_h.assign(p->spatial->samples.values().begin(), p->spatial->samples.values().end());
  for (double& v : p->psi_h) v *= h2;
  for (int s = 0; s < p->N; ++s) p->steer.push_back(steering_matrix(*p->spatial, 2.0 * std::numbers::pi * s / p->N));

  if (l.type == LayerType::Joint) {
    p->Ka = l.K_alpha;
    p->angular = build_angular_basis(l.K_alpha, n_theta);
    p->J = 2 * p->angular->max_freq() + 1;
    const int N = p->N, J = p->J;
    p->phi_n.resize(static_cast<std::size_t>(J) * N);
    for (int j = 0; j < J; ++j)
      for (int a = 0; a < N; ++a) p->phi_n[static_cast<std::size_t>(j) * N + a] = trig_row(j, a, N) / N;
    for (int s = 0; s < N; ++s) {
      Tensor P({static_cast<std::size_t>(p->Ka), static_cast<std::size_t>(J)});
      for (int m = 0; m < p->Ka; ++m) {
        const int f = p->angular->freq[m];
        const auto par = p->angular->parity[m];
        if (par == AngularParity::Constant) {
          P(m, 0) = 1.0;
          continue;
        }
        const double c = trig_row(2 * f - 1, s, N), sn = trig_row(2 * f, s, N);
        const int jc = angular_row(f, AngularParity::Cosine), js = angular_row(f, AngularParity::Sine);
        if (par == AngularParity::Cosine) {
          P(m, jc) = c;
          P(m, js) = sn;
        } else {
          P(m, js) = c;
          P(m, jc) = -sn;
        }
      }
      p->shift.push_back(std::move(P));
    }
  } else {
    for (int s = 0; s < p->N; ++s) p->shift.push_back(Tensor({1, 1}, 1.0));
  }
  return p;
}

// atilde[s][lambda][(k' * Mp + lambda') * J + j]
//   = sum_{k, m} S_s(k', k) a[lambda'][lambda][k][m] P_s(m, j)
std::vector<double> mix_coeffs(const ConvPlan& p, const double* a) {
  const int Q = p.Q();
  std::vector<double> out(static_cast<std::size_t>(p.N) * p.M * Q);
  std::vector<double> T(static_cast<std::size_t>(p.K) * p.Ka);
  for (int s = 0; s < p.N; ++s) {
    const Tensor& S = p.steer[s];
    const Tensor& P = p.shift[s];
    for (int i = 0; i < p.Mp; ++i) {
      for (int o = 0; o < p.M; ++o) {
        const double* blk = a + (static_cast<std::size_t>(i) * p.M + o) * p.K * p.Ka;
        for (int kp = 0; kp < p.K; ++kp)
          for (int m = 0; m < p.Ka; ++m) {
            double v = 0.0;
            for (int k = 0; k < p.K; ++k) v += S(kp, k) * blk[static_cast<std::size_t>(k) * p.Ka + m];
            T[static_cast<std::size_t>(kp) * p.Ka + m] = v;
          }
        double* row = out.data() + (static_cast<std::size_t>(s) * p.M + o) * Q;
        for (int kp = 0; kp < p.K; ++kp)
          for (int j = 0; j < p.J; ++j) {
            double v = 0.0;
            for (int m = 0; m < p.Ka; ++m) v += T[static_cast<std::size_t>(kp) * p.Ka + m] * P(m, j);
            row[(static_cast<std::size_t>(kp) * p.Mp + i) * p.J + j] = v;
          }
      }
    }
  }
  return out;
}

// Adjoint of mix_coeffs: da += d/da <datilde, mix(a)>.
void mix_coeffs_adjoint(const ConvPlan& p, const std::vector<double>& dmix, double* da) {
  const int Q = p.Q();
  std::vector<double> U(static_cast<std::size_t>(p.K) * p.Ka);
  for (int s = 0; s < p.N; ++s) {
    const Tensor& S = p.steer[s];
    const Tensor& P = p.shift[s];
    for (int i = 0; i < p.Mp; ++i) {
      for (int o = 0; o < p.M; ++o) {
        const double* row = dmix.data() + (static_cast<std::size_t>(s) * p.M + o) * Q;
        for (int kp = 0; kp < p.K; ++kp)
          for (int m = 0; m < p.Ka; ++m) {
            double v = 0.0;
            for (int j = 0; j < p.J; ++j) v += row[(static_cast<std::size_t>(kp) * p.Mp + i) * p.J + j] * P(m, j);
            U[static_cast<std::size_t>(kp) * p.Ka + m] = v;
          }
        double* blk = da + (static_cast<std::size_t>(i) * p.M + o) * p.K * p.Ka;
        for (int k = 0; k < p.K; ++k)
          for (int m = 0; m < p.Ka; ++m) {
            double v = 0.0;
            for (int kp = 0; kp < p.K; ++kp) v += S(kp, k) * U[static_cast<std::size_t>(kp) * p.Ka + m];
            blk[static_cast<std::size_t>(k) * p.Ka + m] += v;
          }
      }
    }
  }
}

// Lift / joint forward. x: B x Mp x A x H x W; y: B x M x N x H x W; Z
// (cached for backward): B x (K * Mp * J) x H*W.
void decomposed_forward(const ConvPlan& p, const Tensor& x, const double* a, const double* bias, Tensor& y, Tensor& Z) {
  const std::size_t B = x.dim(0), HW = p.HW();
  const int P = p.planes(), Q = p.Q(), L2 = p.L * p.L;
  const long ld = static_cast<long>(P) * static_cast<long>(HW);
  y = Tensor({B, static_cast<std::size_t>(p.M), static_cast<std::size_t>(p.N), static_cast<std::size_t>(p.H),
              static_cast<std::size_t>(p.W)});
  Z = Tensor({B, static_cast<std::size_t>(Q), HW});
  const auto mixed = mix_coeffs(p, a);
  std::vector<double> X(p.type == LayerType::Joint ? static_cast<std::size_t>(ld) : 0);
  std::vector<double> col(static_cast<std::size_t>(L2) * ld);
  const int n = static_cast<int>(HW);
  for (std::size_t b = 0; b < B; ++b) {
    const double* xb = x.data() + b * x.size() / B;
    const double* planes = xb;
    if (p.type == LayerType::Joint) {
      for (int i = 0; i < p.Mp; ++i)
        kernels::gemm(Op::N, Op::N, p.J, n, p.N, p.phi_n.data(), p.N, xb + static_cast<std::size_t>(i) * p.N * HW, n,
                      false, X.data() + static_cast<std::size_t>(i) * p.J * HW, n);
      planes = X.data();
    }
    for (int q = 0; q < P; ++q) kernels::im2col(planes + q * HW, p.H, p.W, p.L, col.data() + q * HW, ld);
    double* zb = Z.data() + b * static_cast<std::size_t>(Q) * HW;
    kernels::gemm(Op::N, Op::N, p.K, static_cast<int>(ld), L2, p.psi_h.data(), L2, col.data(), static_cast<int>(ld),
                  false, zb, static_cast<int>(ld));
    double* yb = y.data() + b * static_cast<std::size_t>(p.M) * p.N * HW;
    for (int s = 0; s < p.N; ++s)
      kernels::gemm(Op::N, Op::N, p.M, n, Q, mixed.data() + static_cast<std::size_t>(s) * p.M * Q, Q, zb, n, false,
                    yb + s * HW, p.N * n);
    for (int o = 0; o < p.M; ++o) {
      double* yo = yb + static_cast<std::size_t>(o) * p.N * HW;
      for (std::size_t u = 0; u < p.N * HW; ++u) yo[u] += bias[o];
    }
  }
}

void decomposed_backward(const ConvPlan& p, const Tensor& dy, const Tensor& Z, const double* a, double* da, double* db,
                         Tensor* dx) {
  const std::size_t B = dy.dim(0), HW = p.HW();
  const int P = p.planes(), Q = p.Q(), L2 = p.L * p.L;
  const long ld = static_cast<long>(P) * static_cast<long>(HW);
  const int n = static_cast<int>(HW);
  std::vector<double> dmix(static_cast<std::size_t>(p.N) * p.M * Q);
  std::vector<double> mixed, dZ, dcol, dX;
  if (dx) {
    mixed = mix_coeffs(p, a);
    dZ.resize(static_cast<std::size_t>(Q) * HW);
    dcol.resize(static_cast<std::size_t>(L2) * ld);
    dX.resize(static_cast<std::size_t>(ld));
    *dx = Tensor({B, static_cast<std::size_t>(p.Mp), p.type == LayerType::Joint ? static_cast<std::size_t>(p.N) : 1u,
                  static_cast<std::size_t>(p.H), static_cast<std::size_t>(p.W)});
  }
  for (std::size_t b = 0; b < B; ++b) {
    const double* dyb = dy.data() + b * static_cast<std::size_t>(p.M) * p.N * HW;
    const double* zb = Z.data() + b * static_cast<std::size_t>(Q) * HW;
    for (int o = 0; o < p.M; ++o) {
      const double* d = dyb + static_cast<std::size_t>(o) * p.N * HW;
      double s = 0.0;
      for (std::size_t u = 0; u < p.N * HW; ++u) s += d[u];
      db[o] += s;
    }
    for (int s = 0; s < p.N; ++s)
      kernels::gemm(Op::N, Op::T, p.M, Q, n, dyb + s * HW, p.N * n, zb, n, true,
                    dmix.data() + static_cast<std::size_t>(s) * p.M * Q, Q);
    if (!dx) continue;
    for (int s = 0; s < p.N; ++s)
      kernels::gemm(Op::T, Op::N, Q, n, p.M, mixed.data() + static_cast<std::size_t>(s) * p.M * Q, Q, dyb + s * HW,
                    p.N * n, s > 0, dZ.data(), n);
    kernels::gemm(Op::T, Op::N, L2, static_cast<int>(ld), p.K, p.psi_h.data(), L2, dZ.data(), static_cast<int>(ld), false,
                  dcol.data(), static_cast<int>(ld));
    std::fill(dX.begin(), dX.end(), 0.0);
    for (int q = 0; q < P; ++q) kernels::col2im_add(dcol.data() + q * HW, p.H, p.W, p.L, ld, dX.data() + q * HW);
    double* dxb = dx->data() + b * dx->size() / B;
    if (p.type == LayerType::Joint) {
      for (int i = 0; i < p.Mp; ++i)
        kernels::gemm(Op::T, Op::N, p.N, n, p.J, p.phi_n.data(), p.N, dX.data() + static_cast<std::size_t>(i) * p.J * HW,
                      n, false, dxb + static_cast<std::size_t>(i) * p.N * HW, n);
    } else {
      std::copy(dX.begin(), dX.end(), dxb);
    }
  }
  mix_coeffs_adjoint(p, dmix, da);
}

void plain_forward(const ConvPlan& p, const Tensor& x, const double* w, const double* bias, Tensor& y) {
  const std::size_t B = x.dim(0), HW = p.HW();
  const int L2 = p.L * p.L, n = static_cast<int>(HW), kdim = p.Mp * L2;
  y = Tensor({B, static_cast<std::size_t>(p.M), 1, static_cast<std::size_t>(p.H), static_cast<std::size_t>(p.W)});
  std::vector<double> col(static_cast<std::size_t>(kdim) * HW);
  for (std::size_t b = 0; b < B; ++b) {
    const double* xb = x.data() + b * p.Mp * HW;
    for (int i = 0; i < p.Mp; ++i)
      kernels::im2col(xb + i * HW, p.H, p.W, p.L, col.data() + static_cast<std::size_t>(i) * L2 * HW, n);
    double* yb = y.data() + b * p.M * HW;
    kernels::gemm(Op::N, Op::N, p.M, n, kdim, w, kdim, col.data(), n, false, yb, n);
    for (int o = 0; o < p.M; ++o)
      for (std::size_t u = 0; u < HW; ++u) yb[o * HW + u] += bias[o];
  }
}

void plain_backward(const ConvPlan& p, const Tensor& x, const Tensor& dy, const double* w, double* dw, double* db,
                    Tensor* dx) {
  const std::size_t B = x.dim(0), HW = p.HW();
  const int L2 = p.L * p.L, n = static_cast<int>(HW), kdim = p.Mp * L2;
  std::vector<double> col(static_cast<std::size_t>(kdim) * HW), dcol;
  if (dx) {
    *dx = Tensor(x.shape());
    dcol.resize(col.size());
  }
  for (std::size_t b = 0; b < B; ++b) {
    const double* xb = x.data() + b * p.Mp * HW;
    const double* dyb = dy.data() + b * p.M * HW;
    for (int o = 0; o < p.M; ++o) {
      double s = 0.0;
      for (std::size_t u = 0; u < HW; ++u) s += dyb[o * HW + u];
      db[o] += s;
    }
    for (int i = 0; i < p.Mp; ++i)
      kernels::im2col(xb + i * HW, p.H, p.W, p.L, col.data() + static_cast<std::size_t>(i) * L2 * HW, n);
    kernels::gemm(Op::N, Op::T, p.M, kdim, n, dyb, n, col.data(), n, true, dw, kdim);
    if (!dx) continue;
    kernels::gemm(Op::T, Op::N, kdim, n, p.M, w, kdim, dyb, n, false, dcol.data(), n);
    double* dxb = dx->data() + b * p.Mp * HW;
    for (int i = 0; i < p.Mp; ++i)
      kernels::col2im_add(dcol.data() + static_cast<std::size_t>(i) * L2 * HW, p.H, p.W, p.L, n, dxb + i * HW);
  }
}

Shape with_batch(std::size_t B, const Shape& s) {
  Shape out{B};
  out.insert(out.end(), s.begin(), s.end());
  return out;
}

}  // namespace

Network::Network(ArchSpec arch) : arch_(std::move(arch)) { build(); }

void Network::build() {
  shapes_ = infer_shapes(arch_);
  const auto radii = filter_radii(arch_);
  plans_.assign(arch_.layers.size(), nullptr);
  param_index_.assign(arch_.layers.size(), 0);
  params_.clear();
  auto add = [&](std::size_t layer, const std::string& what, Shape shape) {
    Param p;
    p.name = "l" + std::to_string(layer) + "." + what;
    p.layer = layer;
    p.value = Tensor(shape);
    p.grad = Tensor(std::move(shape));
    params_.push_back(std::move(p));
  };
  for (std::size_t i = 1; i < arch_.layers.size(); ++i) {
    const auto& l = arch_.layers[i];
    const Shape& in = shapes_[i - 1];
    param_index_[i] = params_.size();
    const std::size_t Mp = in.empty() ? 0 : in[0];
    const std::size_t M = static_cast<std::size_t>(l.M);
    switch (l.type) {
      case LayerType::Lift:
        plans_[i] = make_plan(l, in, arch_.n_theta, radii[i]);
        add(i, "coeffs", {Mp, M, static_cast<std::size_t>(l.K)});
        add(i, "bias", {M});
        break;
      case LayerType::Joint:
        plans_[i] = make_plan(l, in, arch_.n_theta, radii[i]);
        add(i, "coeffs", {Mp, M, static_cast<std::size_t>(l.K), static_cast<std::size_t>(l.K_alpha)});
        add(i, "bias", {M});
        break;
      case LayerType::ConvPlain:
        plans_[i] = make_plan(l, in, arch_.n_theta, radii[i]);
        add(i, "weight", {M, Mp, static_cast<std::size_t>(l.L), static_cast<std::size_t>(l.L)});
        add(i, "bias", {M});
        break;
      case LayerType::Dense:
        add(i, "weight", {in[0], static_cast<std::size_t>(l.n)});
        add(i, "bias", {static_cast<std::size_t>(l.n)});
        break;
      case LayerType::GroupNorm:
        add(i, "gamma", {in[0]});
        add(i, "beta", {in[0]});
        params_.back().value.fill(0.0);
        params_[params_.size() - 2].value.fill(1.0);
        break;
      default:
        break;
    }
  }
}

void Network::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = 1; i < arch_.layers.size(); ++i) {
    const auto& l = arch_.layers[i];
    const Shape& in = shapes_[i - 1];
    double fan_in = 0.0;
    switch (l.type) {
      case LayerType::Lift: fan_in = static_cast<double>(in[0]) * l.K; break;
      case LayerType::Joint: fan_in = static_cast<double>(in[0]) * l.K * l.K_alpha; break;
      case LayerType::ConvPlain: fan_in = static_cast<double>(in[0]) * l.L * l.L; break;
      case LayerType::Dense: fan_in = static_cast<double>(in[0]); break;
      case LayerType::GroupNorm:
        params_[first_param(i)].value.fill(1.0);
        params_[first_param(i) + 1].value.fill(0.0);
        continue;
      default: continue;
    }
    const double s = std::sqrt(3.0 / fan_in);
    std::uniform_real_distribution<double> dist(-s, s);
    for (double& v : params_[first_param(i)].value.values()) v = dist(rng);
    params_[first_param(i) + 1].value.fill(0.0);
  }
  zero_grad();
}

Param& Network::param(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw Error(ErrorKind::Config, "no parameter named '" + name + "'");
}

const Param& Network::param(const std::string& name) const {
  return const_cast<Network*>(this)->param(name);
}

std::size_t Network::param_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void Network::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0);
}

FilterCoeffs Network::coeffs(std::size_t layer) const {
  const auto& l = arch_.layers.at(layer);
  if (l.type != LayerType::Lift && l.type != LayerType::Joint)
    throw Error(ErrorKind::Config, "layer " + std::to_string(layer) + " has no decomposed filters");
  FilterCoeffs c;
  c.kind = l.type == LayerType::Lift ? LayerKind::Lift : LayerKind::Joint;
  c.a = params_[first_param(layer)].value;
  c.bias = params_[first_param(layer) + 1].value;
  c.radius_px = plans_[layer]->radius_px;
  return c;
}

void Network::set_coeffs(std::size_t layer, const FilterCoeffs& c) {
  const auto cur = coeffs(layer);
  if (!c.a.same_shape(cur.a) || !c.bias.same_shape(cur.bias))
    throw Error(ErrorKind::Shape, "coefficient shape " + shape_to_string(c.a.shape()) + " does not match layer " +
                                      std::to_string(layer) + " (" + shape_to_string(cur.a.shape()) + ")");
  params_[first_param(layer)].value = c.a;
  params_[first_param(layer) + 1].value = c.bias;
}

const SpatialBasisSet& Network::spatial_basis(std::size_t layer) const {
  const auto& plan = plans_.at(layer);
  if (!plan || !plan->spatial) throw Error(ErrorKind::Config, "layer " + std::to_string(layer) + " has no spatial basis");
  return *plan->spatial;
}

const AngularBasisSet* Network::angular_basis(std::size_t layer) const {
  const auto& plan = plans_.at(layer);
  return plan && plan->angular ? &*plan->angular : nullptr;
}

std::vector<std::size_t> Network::block_outputs() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < arch_.layers.size(); ++i) {
    if (!arch_.layers[i].is_conv()) continue;
    std::size_t j = i;
    while (j + 1 < arch_.layers.size() &&
           (arch_.layers[j + 1].type == LayerType::Relu || arch_.layers[j + 1].type == LayerType::GroupNorm))
      ++j;
    out.push_back(j);
  }
  return out;
}

Tensor Network::forward(const Tensor& x, Trace* trace) const {
  std::size_t last = arch_.layers.size() - 1;
  if (arch_.layers[last].type == LayerType::SoftmaxLoss) --last;
  Trace local;
  Trace& t = trace ? *trace : local;
  t.outputs.assign(last + 1, Tensor());
  t.aux.assign(last + 1, Tensor());
  t.argmax.assign(last + 1, {});
  t.inv_std.assign(last + 1, Tensor());

  const auto& in = arch_.layers[0];
  const Shape want{static_cast<std::size_t>(in.C), static_cast<std::size_t>(in.H), static_cast<std::size_t>(in.W)};
  if (x.rank() == 4 && Shape(x.shape().begin() + 1, x.shape().end()) == want) {
    t.outputs[0] = x.reshaped({x.dim(0), want[0], 1, want[1], want[2]});
  } else if (x.rank() == 5 && x.dim(2) == 1 && x.dim(1) == want[0] && x.dim(3) == want[1] && x.dim(4) == want[2]) {
    t.outputs[0] = x;
  } else {
    throw Error(ErrorKind::Shape, "input " + shape_to_string(x.shape()) + " does not match input(" + std::to_string(in.C) +
                                      "," + std::to_string(in.H) + "," + std::to_string(in.W) + ")");
  }
  for (std::size_t i = 1; i <= last; ++i) forward_layer(i, t.outputs[i - 1], t.outputs[i], t);
  return t.outputs[last];
}

Tensor Network::apply_layer(std::size_t i, const Tensor& x) const {
  if (i == 0 || i >= arch_.layers.size() || arch_.layers[i].type == LayerType::SoftmaxLoss)
    throw Error(ErrorKind::Config, "layer " + std::to_string(i) + " cannot be applied on its own");
  Shape want = with_batch(x.dim(0), shapes_[i - 1]);
  if (x.shape() != want)
    throw Error(ErrorKind::Shape, "layer " + std::to_string(i) + " expects " + shape_to_string(want) + ", got " +
                                      shape_to_string(x.shape()));
  Trace t;
  t.outputs.resize(i + 1);
  t.aux.resize(i + 1);
  t.argmax.resize(i + 1);
  t.inv_std.resize(i + 1);
  Tensor y;
  forward_layer(i, x, y, t);
  return y;
}

void Network::forward_layer(std::size_t i, const Tensor& xin, Tensor& y, Trace& t) const {
  const auto& l = arch_.layers[i];
  const std::size_t B = xin.dim(0);
  switch (l.type) {
    case LayerType::Lift:
    case LayerType::Joint:
      decomposed_forward(*plans_[i], xin, params_[first_param(i)].value.data(), params_[first_param(i) + 1].value.data(),
                         y, t.aux[i]);
      break;
    case LayerType::ConvPlain:
      plain_forward(*plans_[i], xin, params_[first_param(i)].value.data(), params_[first_param(i) + 1].value.data(), y);
      break;
    case LayerType::Relu:
      y = xin;
      if (!linear_)
        for (double& v : y.values()) v = v < 0.0 ? 0.0 : v;  // NaN passes through
      break;
    case LayerType::AvgPool:
    case LayerType::MaxPool: {
      const Shape& so = shapes_[i];
      const std::size_t Hi = xin.dim(3), Wi = xin.dim(4), Ho = so[2], Wo = so[3];
      const std::size_t planes = B * so[0] * so[1];
      const int pw = l.p;
      y = Tensor(with_batch(B, so));
      const bool avg = l.type == LayerType::AvgPool;
      if (!avg) t.argmax[i].resize(y.size());
      const double inv = 1.0 / (pw * pw);
      for (std::size_t q = 0; q < planes; ++q) {
        const double* src = xin.data() + q * Hi * Wi;
        double* dst = y.data() + q * Ho * Wo;
        for (std::size_t oy = 0; oy < Ho; ++oy)
          for (std::size_t ox = 0; ox < Wo; ++ox) {
            double acc = avg ? 0.0 : -std::numeric_limits<double>::infinity();
            std::uint32_t best = 0;
            for (int dy = 0; dy < pw; ++dy)
              for (int dx = 0; dx < pw; ++dx) {
                const std::size_t idx = (oy * pw + dy) * Wi + ox * pw + dx;
                if (avg) {
                  acc += src[idx];
                } else if (src[idx] > acc || std::isnan(src[idx])) {
                  acc = src[idx];
                  best = static_cast<std::uint32_t>(idx);
                }
              }
            dst[oy * Wo + ox] = avg ? acc * inv : acc;
            if (!avg) t.argmax[i][q * Ho * Wo + oy * Wo + ox] = best;
          }
      }
      break;
    }
    case LayerType::GroupNorm: {
      // Statistics per (sample, channel) over alpha and u, so the layer is
      // independent of batch composition and commutes with T_rho.
      const std::size_t C = xin.dim(1), inner = xin.size() / (B * C);
      const double* gamma = params_[first_param(i)].value.data();
      const double* beta = params_[first_param(i) + 1].value.data();
      y = Tensor(xin.shape());
      t.aux[i] = Tensor(xin.shape());
      t.inv_std[i] = Tensor({B, C});
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
          const double* xs = xin.data() + (b * C + c) * inner;
          double mean = 0.0;
          for (std::size_t u = 0; u < inner; ++u) mean += xs[u];
          mean /= static_cast<double>(inner);
          double var = 0.0;
          for (std::size_t u = 0; u < inner; ++u) var += (xs[u] - mean) * (xs[u] - mean);
          var /= static_cast<double>(inner);
          const double is = 1.0 / std::sqrt(var + 1e-5);
          t.inv_std[i](b, c) = is;
          double* xh = t.aux[i].data() + (b * C + c) * inner;
          double* ys = y.data() + (b * C + c) * inner;
          for (std::size_t u = 0; u < inner; ++u) {
            xh[u] = (xs[u] - mean) * is;
            ys[u] = gamma[c] * xh[u] + beta[c];
          }
        }
      break;
    }
    case LayerType::Flatten:
      y = xin.reshaped({B, xin.size() / B});
      break;
    case LayerType::Dense: {
      const int nin = static_cast<int>(xin.dim(1)), nout = l.n;
      y = Tensor({B, static_cast<std::size_t>(nout)});
      kernels::gemm(Op::N, Op::N, static_cast<int>(B), nout, nin, xin.data(), nin, params_[first_param(i)].value.data(),
                    nout, false, y.data(), nout);
      const double* bias = params_[first_param(i) + 1].value.data();
      for (std::size_t b = 0; b < B; ++b)
        for (int o = 0; o < nout; ++o) y[b * nout + o] += bias[o];
      break;
    }
    case LayerType::Input:
    case LayerType::SoftmaxLoss:
      break;
  }
}

std::vector<Tensor> Network::forward_all(const Tensor& x, std::size_t upto) const {
  Trace t;
  forward(x, &t);
  if (upto >= t.outputs.size()) throw Error(ErrorKind::Config, "layer index " + std::to_string(upto) + " out of range");
  t.outputs.resize(upto + 1);
  return std::move(t.outputs);
}

void Network::backward(const Trace& trace, const Tensor& dout, Tensor* input_grad) {
  const std::size_t last = trace.outputs.size() - 1;
  if (!dout.same_shape(trace.outputs[last]))
    throw Error(ErrorKind::Shape, "upstream gradient " + shape_to_string(dout.shape()) + " does not match output " +
                                      shape_to_string(trace.outputs[last].shape()));
  const std::size_t B = dout.dim(0);
  // First layer whose input gradient is needed.
  std::size_t first_trainable = last + 1;
  for (std::size_t i = 1; i <= last; ++i)
    if (param_index_[i] < params_.size() && params_[param_index_[i]].layer == i) {
      first_trainable = i;
      break;
    }

  Tensor grad = dout;
  for (std::size_t i = last; i >= 1; --i) {
    const auto& l = arch_.layers[i];
    const Tensor& xin = trace.outputs[i - 1];
    const bool need_dx = i > first_trainable || input_grad != nullptr;
    Tensor dx;
    switch (l.type) {
      case LayerType::Lift:
      case LayerType::Joint:
        decomposed_backward(*plans_[i], grad, trace.aux[i], params_[first_param(i)].value.data(),
                            params_[first_param(i)].grad.data(), params_[first_param(i) + 1].grad.data(),
                            need_dx ? &dx : nullptr);
        break;
      case LayerType::ConvPlain:
        plain_backward(*plans_[i], xin, grad, params_[first_param(i)].value.data(), params_[first_param(i)].grad.data(),
                       params_[first_param(i) + 1].grad.data(), need_dx ? &dx : nullptr);
        break;
      case LayerType::Relu:
        dx = grad;
        if (!linear_)
          for (std::size_t k = 0; k < dx.size(); ++k)
            if (!(xin[k] > 0.0)) dx[k] = 0.0;
        break;
      case LayerType::AvgPool:
      case LayerType::MaxPool: {
        dx = Tensor(xin.shape());
        const std::size_t Hi = xin.dim(3), Wi = xin.dim(4), Ho = grad.dim(3), Wo = grad.dim(4);
        const std::size_t planes = B * grad.dim(1) * grad.dim(2);
        const int pw = l.p;
        const double inv = 1.0 / (pw * pw);
        for (std::size_t q = 0; q < planes; ++q) {
          const double* g = grad.data() + q * Ho * Wo;
          double* d = dx.data() + q * Hi * Wi;
          for (std::size_t oy = 0; oy < Ho; ++oy)
            for (std::size_t ox = 0; ox < Wo; ++ox) {
              const double v = g[oy * Wo + ox];
              if (l.type == LayerType::MaxPool) {
                d[trace.argmax[i][q * Ho * Wo + oy * Wo + ox]] += v;
              } else {
                for (int dy = 0; dy < pw; ++dy)
                  for (int ddx = 0; ddx < pw; ++ddx) d[(oy * pw + dy) * Wi + ox * pw + ddx] += v * inv;
              }
            }
        }
        break;
      }
      case LayerType::GroupNorm: {
        const std::size_t C = xin.dim(1), inner = xin.size() / (B * C);
        const double* gamma = params_[first_param(i)].value.data();
        double* dgamma = params_[first_param(i)].grad.data();
        double* dbeta = params_[first_param(i) + 1].grad.data();
        dx = Tensor(xin.shape());
        const double n = static_cast<double>(inner);
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t c = 0; c < C; ++c) {
            const std::size_t off = (b * C + c) * inner;
            const double* g = grad.data() + off;
            const double* xh = trace.aux[i].data() + off;
            double sg = 0.0, sgx = 0.0;
            for (std::size_t u = 0; u < inner; ++u) {
              sg += g[u];
              sgx += g[u] * xh[u];
            }
            dgamma[c] += sgx;
            dbeta[c] += sg;
            const double k = gamma[c] * trace.inv_std[i](b, c) / n;
            for (std::size_t u = 0; u < inner; ++u) dx[off + u] = k * (n * g[u] - sg - xh[u] * sgx);
          }
        break;
      }
      case LayerType::Flatten:
        dx = grad.reshaped(xin.shape());
        break;
      case LayerType::Dense: {
        const int nin = static_cast<int>(xin.dim(1)), nout = l.n, b = static_cast<int>(B);
        kernels::gemm(Op::T, Op::N, nin, nout, b, xin.data(), nin, grad.data(), nout, true,
                      params_[first_param(i)].grad.data(), nout);
        double* db = params_[first_param(i) + 1].grad.data();
        for (std::size_t r = 0; r < B; ++r)
          for (int o = 0; o < nout; ++o) db[o] += grad[r * nout + o];
        if (need_dx) {
          dx = Tensor(xin.shape());
          kernels::gemm(Op::N, Op::T, b, nin, nout, grad.data(), nout, params_[first_param(i)].value.data(), nout, false,
                        dx.data(), nin);
        }
        break;
      }
      case LayerType::Input:
      case LayerType::SoftmaxLoss:
        break;
    }
    if (!need_dx) return;
    grad = std::move(dx);
  }
  if (input_grad) {
    const auto& in = arch_.layers[0];
    *input_grad = grad.reshaped({B, static_cast<std::size_t>(in.C), static_cast<std::size_t>(in.H),
                                 static_cast<std::size_t>(in.W)});
  }
}

double Network::softmax_loss(const Tensor& logits, std::span<const int> labels, Tensor* dlogits) {
  if (logits.rank() != 2) throw Error(ErrorKind::Shape, "logits must be B x n, got " + shape_to_string(logits.shape()));
  const std::size_t B = logits.dim(0), n = logits.dim(1);
  if (labels.size() != B)
    throw Error(ErrorKind::Shape, std::to_string(labels.size()) + " labels for a batch of " + std::to_string(B));
  if (dlogits) *dlogits = Tensor(logits.shape());
  double loss = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= n)
      throw Error(ErrorKind::Domain, "label " + std::to_string(labels[b]) + " outside [0, " + std::to_string(n) + ")");
    const double* z = logits.data() + b * n;
    const double zmax = *std::max_element(z, z + n);
    double se = 0.0;
    for (std::size_t c = 0; c < n; ++c) se += std::exp(z[c] - zmax);
    const double lse = zmax + std::log(se);
    loss += lse - z[labels[b]];
    if (dlogits) {
      for (std::size_t c = 0; c < n; ++c) (*dlogits)[b * n + c] = std::exp(z[c] - lse) / B;
      (*dlogits)[b * n + labels[b]] -= 1.0 / B;
    }
  }
  return loss / B;
}

}  // namespace rotdcf
