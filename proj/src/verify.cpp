// SPDX-License-Identifier: Apache-2.0
#include "rotdcf/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <random>

#include "rotdcf/error.hpp"

namespace rotdcf {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

Tensor diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw Error(ErrorKind::Shape, "cannot compare " + shape_to_string(a.shape()) + " with " + shape_to_string(b.shape()));
  Tensor d = a;
  d.axpy(-1.0, b);
  return d;
}

// Product of the pooling windows up to and including layer i.
int output_pool_factor(const ArchSpec& arch, std::size_t i) {
  int f = 1;
  for (std::size_t k = 0; k <= i && k < arch.layers.size(); ++k) {
    const auto& l = arch.layers[k];
    if (l.type == LayerType::AvgPool || l.type == LayerType::MaxPool) f *= l.p;
  }
  return f;
}

std::vector<std::size_t> conv_layers(const Network& net) {
  std::vector<std::size_t> c;
  for (std::size_t i = 0; i < net.num_layers(); ++i)
    if (net.arch().layers[i].is_conv()) c.push_back(i);
  return c;
}

std::size_t block_of(const Network& net, std::size_t conv) {
  const auto convs = conv_layers(net);
  const auto blocks = net.block_outputs();
  for (std::size_t k = 0; k < convs.size(); ++k)
    if (convs[k] == conv) return blocks[k];
  throw Error(ErrorKind::Verification, "layer " + std::to_string(conv) + " is not a convolution");
}

void require_feature_map(const Tensor& f, std::size_t layer) {
  if (f.rank() != 5)
    throw Error(ErrorKind::Verification, "layer " + std::to_string(layer) + " output " + shape_to_string(f.shape()) +
                                             " is not a feature map");
}

// T_rho on a feature map; maps without an angular axis only rotate in space.
// Cubic on the comparison side so the measured error is dominated by the
// bilinear input rotation, not by resampling the feature maps.
Tensor act(const Tensor& f, double t) {
  return f.dim(2) == 1 ? rotate_image(f, RigidRotation{t, {}, {}, Interp::Cubic}) : apply_Trho(f, t, Interp::Cubic);
}

int default_margin(const Network& net, std::size_t layer, double t) {
  return grid_exact_angle(t) ? 0 : receptive_margin(net, layer);
}

Tensor zeros_like_input(const Network& net, std::size_t batch) {
  const Shape& s = net.shapes()[0];
  return Tensor({batch, s[0], s[2], s[3]});
}

}  // namespace

bool grid_exact_angle(double t) {
  const double q = t / (std::numbers::pi / 2);
  return std::abs(q - std::round(q)) < 1e-12;
}

int receptive_margin(const Network& net, std::size_t layer) {
  const auto& arch = net.arch();
  const auto radii = filter_radii(arch);
  double r = 0.0;
  for (std::size_t k = 1; k <= layer && k < arch.layers.size(); ++k)
    if (arch.layers[k].is_conv()) r += radii[k];
  return static_cast<int>(std::ceil(r / output_pool_factor(arch, layer) - 1e-12));
}

double equivariance_error(const Network& net, const Tensor& image, double t, std::size_t layer,
                          std::optional<int> margin) {
  const Tensor f = net.forward_all(image, layer)[layer];
  require_feature_map(f, layer);
  const Tensor g = net.forward_all(rotate_image(image, t), layer)[layer];
  const int m = margin.value_or(default_margin(net, layer, t));
  const double den = feature_norm_cropped(f, m);
  const double num = feature_norm_cropped(diff(g, act(f, t)), m);
  if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return num / den;
}

ZeroResponse zero_input_response(const Network& net, std::size_t batch) {
  ZeroResponse z;
  std::size_t last = net.num_layers() - 1;
  if (net.arch().layers[last].type == LayerType::SoftmaxLoss) --last;
  z.outputs = net.forward_all(zeros_like_input(net, batch), last);
  for (std::size_t i = 0; i < z.outputs.size(); ++i) {
    const Tensor& f = z.outputs[i];
    double worst = -1.0;
    const int m = i == 0 ? 0 : receptive_margin(net, i);
    if (f.rank() == 5 && 2 * static_cast<std::size_t>(m) < std::min(f.dim(3), f.dim(4))) {
      worst = 0.0;
      const std::size_t C = f.dim(1), A = f.dim(2), H = f.dim(3), W = f.dim(4);
      for (std::size_t b = 0; b < f.dim(0); ++b)
        for (std::size_t c = 0; c < C; ++c) {
          auto interior = [&](auto&& g) {
            for (std::size_t a = 0; a < A; ++a)
              for (std::size_t y = m; y < H - m; ++y)
                for (std::size_t x = m; x < W - m; ++x) g(f(b, c, a, y, x));
          };
          double s = 0.0, n = 0.0, var = 0.0;
          interior([&](double v) { s += v, n += 1.0; });
          const double mean = s / n;
          interior([&](double v) { var += (v - mean) * (v - mean); });
          worst = std::max(worst, std::sqrt(var / n));
        }
    }
    z.interior_std.push_back(worst);
  }
  return z;
}

void rescale_network(Network& net) {
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    const auto t = net.arch().layers[i].type;
    if (t != LayerType::Lift && t != LayerType::Joint) continue;
    net.set_coeffs(i, rescale_to_unit_Al(net.coeffs(i), net.spatial_basis(i).mu));
  }
}

NonexpansiveResult nonexpansiveness(const Network& net, const Tensor& x1, const Tensor& x2) {
  NonexpansiveResult r;
  const auto convs = conv_layers(net);
  if (convs.empty()) return r;
  const std::size_t last = block_of(net, convs.back());
  const auto o1 = net.forward_all(x1, last), o2 = net.forward_all(x2, last);
  const auto o0 = net.forward_all(zeros_like_input(net, x1.dim(0)), last);
  auto ratio = [](double num, double den) { return den == 0.0 ? 0.0 : num / den; };
  const double d0 = feature_norm(diff(o1[0], o2[0]));
  for (std::size_t c : convs) {
    const std::size_t j = block_of(net, c);
    const double dout = feature_norm(diff(o1[j], o2[j]));
    r.layers.push_back(j);
    r.layer_ratio.push_back(ratio(dout, feature_norm(diff(o1[c - 1], o2[c - 1]))));
    r.total_ratio.push_back(ratio(dout, d0));
    const double c1 = ratio(feature_norm(diff(o1[j], o0[j])), feature_norm(diff(o1[c - 1], o0[c - 1])));
    const double c2 = ratio(feature_norm(diff(o2[j], o0[j])), feature_norm(diff(o2[c - 1], o0[c - 1])));
    r.centered_ratio.push_back(std::max(c1, c2));
    r.worst = std::max({r.worst, r.layer_ratio.back(), r.total_ratio.back()});
    r.worst_centered = std::max(r.worst_centered, r.centered_ratio.back());
  }
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    const auto t = net.arch().layers[i].type;
    if (t == LayerType::Lift || t == LayerType::Joint)
      r.max_Al = std::max(r.max_Al, compute_Al(net.coeffs(i), net.spatial_basis(i).mu));
  }
  r.hypothesis_ok = r.max_Al <= 1.0 + 1e-9;
  r.pass = r.hypothesis_ok && r.worst <= 1.0 + kNonexpansiveSlack && r.worst_centered <= 1.0 + kNonexpansiveSlack;
  return r;
}

StabilityResult stability_bound(const Network& net, const Tensor& image, int s, const DeformationField& tau) {
  StabilityResult r;
  const auto convs = conv_layers(net);
  if (convs.empty()) throw Error(ErrorKind::Verification, "network has no convolution");
  const double t = kTwoPi * s / net.arch().n_theta;
  r.hypothesis_ok = tau.satisfies_A3();
  const std::size_t last = block_of(net, convs.back());
  const auto ox = net.forward_all(image, last);
  const auto od = net.forward_all(rotate_image(apply_deformation(image, tau), t), last);
  const double x0 = feature_norm(ox[0]);
  const auto radii = filter_radii(net.arch());

  for (std::size_t l = 0; l < convs.size(); ++l) {
    const std::size_t j = block_of(net, convs[l]);
    const Tensor& f = ox[j];
    const auto tau_l = pool_deformation(tau, output_pool_factor(net.arch(), j), static_cast<int>(f.dim(3)),
                                        static_cast<int>(f.dim(4)));
    const int m = default_margin(net, j, t);
    r.layer_lhs.push_back(feature_norm_cropped(diff(od[j], act(apply_deformation(f, tau_l), t)), m));
    r.layer_rhs.push_back(2.0 * kC1 * static_cast<double>(l + 1) * tau.grad_sup * x0);
  }
  const int m = default_margin(net, last, t);
  r.lhs = feature_norm_cropped(diff(od[last], act(ox[last], t)), m);
  r.rhs = (2.0 * kC1 * static_cast<double>(convs.size()) * tau.grad_sup + kC2 * tau.sup / radii[convs.back()]) * x0;
  // Rounding floor: with tau = 0 the bound is 0 and the rotated forward pass
  // still sums in a different order.
  const double floor = 1e-12 * x0;
  r.pass = r.hypothesis_ok && r.lhs <= r.rhs + floor;
  for (std::size_t l = 0; l < r.layer_lhs.size(); ++l) r.pass = r.pass && r.layer_lhs[l] <= r.layer_rhs[l] + floor;
  return r;
}

GradCheckResult gradient_check(Network& net, const Tensor& x, std::span<const int> labels, const GradCheckOptions& opts) {
  if (opts.stencil != 2 && opts.stencil != 4) throw Error(ErrorKind::Domain, "stencil must be 2 or 4");
  std::mt19937_64 rng(opts.seed);
  Tensor r;
  auto objective = [&](const Tensor& logits, Tensor* d) {
    if (!opts.linear_objective) return Network::softmax_loss(logits, labels, d);
    double v = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) v += r[k] * logits[k];
    if (d) *d = r;
    return v;
  };

  Trace base;
  const Tensor logits = net.forward(x, &base);
  if (opts.linear_objective) {
    std::normal_distribution<double> n01;
    r = Tensor(logits.shape());
    for (double& v : r.values()) v = n01(rng);
  }
  Tensor d;
  objective(logits, &d);
  net.zero_grad();
  net.backward(base, d);
  std::vector<Tensor> analytic;
  for (const auto& p : net.params()) analytic.push_back(p.grad);

  // Same activation pattern as the base pass at every relu and max pool.
  auto same_pattern = [&](const Trace& t) {
    for (std::size_t i = 1; i < base.outputs.size(); ++i) {
      const auto type = net.arch().layers[i].type;
      if (type == LayerType::Relu && !net.linear_activation()) {
        const Tensor &a = base.outputs[i - 1], &b = t.outputs[i - 1];
        for (std::size_t k = 0; k < a.size(); ++k)
          if ((a[k] > 0.0) != (b[k] > 0.0)) return false;
      }
      if (type == LayerType::MaxPool && base.argmax[i] != t.argmax[i]) return false;
    }
    return true;
  };

  GradCheckResult res;
  auto& params = net.params();
  std::vector<bool> covered(params.size(), false);
  const double h = opts.step;
  for (std::size_t n = 0; n < opts.samples; ++n) {
    const std::size_t p = n % params.size();
    if (params[p].value.size() == 0) continue;
    std::uniform_int_distribution<std::size_t> pick(0, params[p].value.size() - 1);
    const std::size_t k = pick(rng);
    const double v0 = params[p].value[k];
    bool kink = false;
    auto eval = [&](double delta) {
      params[p].value[k] = v0 + delta;
      Trace t;
      const double f = objective(net.forward(x, &t), nullptr);
      kink = kink || !same_pattern(t);
      return f;
    };
    // A step that crosses a kink is retried at h/10 and h/100 before the
    // sample is excluded.
    double fd = 0.0;
    for (double step = h; step >= h / 100 * (1 - 1e-9); step /= 10) {
      kink = false;
      if (opts.stencil == 2) {
        fd = (eval(step) - eval(-step)) / (2 * step);
      } else {
        fd = (-eval(2 * step) + 8 * eval(step) - 8 * eval(-step) + eval(-2 * step)) / (12 * step);
      }
      if (!kink) break;
    }
    params[p].value[k] = v0;
    if (kink) {
      ++res.excluded;
      continue;
    }
    const double ga = analytic[p][k];
    const double rel = std::abs(ga - fd) / std::max({std::abs(ga), std::abs(fd), opts.floor});
    ++res.compared;
    covered[p] = true;
    if (rel > res.max_rel_error) {
      res.max_rel_error = rel;
      res.worst_param = params[p].name;
    }
  }
  for (std::size_t p = 0; p < params.size(); ++p)
    if (covered[p]) res.covered.push_back(params[p].name);
  // Leave the analytic gradients in place for the caller.
  for (std::size_t p = 0; p < params.size(); ++p) params[p].grad = analytic[p];
  return res;
}

Tensor circular_align(const Tensor& f, std::vector<int>* shifts) {
  if (f.rank() != 5) throw Error(ErrorKind::Shape, "circular_align expects B x C x A x H x W, got " + shape_to_string(f.shape()));
  const std::size_t B = f.dim(0), C = f.dim(1), A = f.dim(2), HW = f.dim(3) * f.dim(4);
  Tensor out(f.shape());
  if (shifts) shifts->assign(B, 0);
  std::vector<double> energy(A);
  for (std::size_t b = 0; b < B; ++b) {
    std::fill(energy.begin(), energy.end(), 0.0);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t a = 0; a < A; ++a) {
        const double* p = f.data() + ((b * C + c) * A + a) * HW;
        for (std::size_t u = 0; u < HW; ++u) energy[a] += std::abs(p[u]);
      }
    const double top = *std::max_element(energy.begin(), energy.end());
    std::size_t best = 0;
    while (energy[best] < top * (1.0 - 1e-12)) ++best;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t a = 0; a < A; ++a)
        std::copy_n(f.data() + ((b * C + c) * A + (a + best) % A) * HW, HW, out.data() + ((b * C + c) * A + a) * HW);
    if (shifts) (*shifts)[b] = static_cast<int>(best);
  }
  return out;
}

Tensor spatial_mean(const Tensor& f, int margin) {
  if (f.rank() != 5) throw Error(ErrorKind::Shape, "spatial_mean expects B x C x A x H x W, got " + shape_to_string(f.shape()));
  const std::size_t planes = f.dim(0) * f.dim(1) * f.dim(2), H = f.dim(3), W = f.dim(4);
  if (margin < 0 || 2 * static_cast<std::size_t>(margin) >= std::min(H, W))
    throw Error(ErrorKind::Verification, "crop margin " + std::to_string(margin) + " leaves nothing of a " +
                                             std::to_string(H) + "x" + std::to_string(W) + " map");
  const std::size_t m = static_cast<std::size_t>(margin);
  const double n = static_cast<double>((H - 2 * m) * (W - 2 * m));
  Tensor out({f.dim(0), f.dim(1), f.dim(2), 1, 1});
  for (std::size_t p = 0; p < planes; ++p) {
    double s = 0.0;
    for (std::size_t i = m; i < H - m; ++i)
      for (std::size_t j = m; j < W - m; ++j) s += f[(p * H + i) * W + j];
    out[p] = s / n;
  }
  return out;
}

double alignment_error(const Network& net, const Tensor& image, int s, std::size_t layer, double tie_band) {
  const double t = kTwoPi * s / net.arch().n_theta;
  const Tensor f = net.forward_all(image, layer)[layer];
  require_feature_map(f, layer);
  if (f.dim(0) != 1) throw Error(ErrorKind::Shape, "alignment_error expects a single image");
  const Tensor g = net.forward_all(rotate_image(image, t), layer)[layer];
  const int m = default_margin(net, layer, t);
  const Tensor a = circular_align(spatial_mean(f, m));
  const Tensor gm = spatial_mean(g, m);
  const std::size_t A = gm.dim(2);
  std::vector<double> energy(A, 0.0);
  for (std::size_t c = 0; c < gm.dim(1); ++c)
    for (std::size_t k = 0; k < A; ++k) energy[k] += std::abs(gm(0, c, k, 0, 0));
  const double top = *std::max_element(energy.begin(), energy.end());
  const double den = feature_norm(a);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < A; ++r) {
    if (energy[r] < top * (1.0 - std::max(tie_band, 1e-12))) continue;
    const Tensor b = roll_alpha(gm, -static_cast<int>(r));
    best = std::min(best, den == 0.0 ? feature_norm(b) : feature_norm(diff(b, a)) / den);
  }
  return best;
}

CheckRecord filter_bound_check(const FilterCoeffs& c, const SpatialBasisSet& sp, const AngularBasisSet& an,
                               double slack, int quad_factor) {
  CheckRecord rec;
  rec.check = "filter_bounds";
  const double A = compute_Al(c, sp.mu);
  const auto I = compute_BCD(c, sp, an, quad_factor);
  rec.params = {{"L", sp.L()}, {"K", c.K()}, {"K_alpha", c.K_alpha()}, {"M_prev", c.M_prev()}, {"M", c.M()},
                {"B", I.B},    {"C", I.C},    {"D_scaled", I.D_scaled}};
  rec.lhs = std::max({I.B, I.C, I.D_scaled});
  rec.rhs = A;
  rec.tolerance = slack;
  rec.pass = rec.lhs <= slack * A;
  return rec;
}

}  // namespace rotdcf
