// SPDX-License-Identifier: Apache-2.0
#include "rotdcf/suites.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "rotdcf/basis.hpp"
#include "rotdcf/data.hpp"
#include "rotdcf/error.hpp"

namespace rotdcf {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Every layer type, small enough for exhaustive finite differences.
constexpr const char* kGradNets[] = {
    "ntheta=4 input(1,12,12) lift(5,2,3) groupnorm relu maxpool(2) joint(3,2,1,3) relu avgpool(3) flatten dense(4) "
    "relu dense(3) softmax_loss",
    "ntheta=1 input(2,8,8) conv_plain(3,3) relu maxpool(2) conv_plain(3,2) groupnorm relu avgpool(2) flatten dense(3) "
    "softmax_loss",
    "ntheta=8 input(1,28,28) lift(5,2,3) groupnorm relu avgpool(2) joint(5,2,3,5) groupnorm relu avgpool(2) "
    "joint(5,2,3,5) relu avgpool(7) flatten dense(10) softmax_loss",
};
// The same rotdcf stack without activations or normalization.
constexpr const char* kLinearNet =
    "ntheta=4 input(1,12,12) lift(5,2,3) avgpool(2) joint(3,2,1,3) avgpool(3) flatten dense(4) dense(3) softmax_loss";

PresetOptions preset_options(const SuiteOptions& o) {
  PresetOptions p;
  p.n_theta = o.n_theta;
  p.K = o.K;
  p.K_alpha = o.K_alpha;
  return p;
}

// init() leaves biases at zero. Random biases make the zero-input response
// and the centring nontrivial, but they also give every feature map a
// constant background that the zero-filled corners of an interpolated T_rho
// cannot reproduce, so the rotation checks keep the zero init.
void randomize_biases(Network& net, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01;
  for (auto& p : net.params())
    if (p.name.ends_with("bias") || p.name.ends_with("beta"))
      for (double& v : p.value.values()) v = 0.1 * n01(rng);
}

Network random_net(const ArchSpec& arch, std::uint64_t seed, bool biases = false) {
  Network net(arch);
  net.init(seed);
  if (biases) randomize_biases(net, seed ^ 0x9e3779b97f4a7c15ull);
  return net;
}

// The network up to and including layer `last`.
ArchSpec truncated(const ArchSpec& arch, std::size_t last) {
  ArchSpec a = arch;
  a.layers.resize(last + 1);
  return a;
}

bool crop_ok(const Network& net, std::size_t layer, int margin) {
  const Shape& s = net.shapes()[layer];
  return 2 * static_cast<std::size_t>(margin) < std::min(s[2], s[3]);
}

CheckRecord skipped(std::string check, nlohmann::json params) {
  CheckRecord r;
  r.check = std::move(check);
  r.params = std::move(params);
  r.status = "skipped";
  return r;
}

}  // namespace

void SuiteOptions::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorKind::Config, std::string("suite option: ") + what);
  };
  need(nets >= 1 && pairs >= 1 && filter_draws >= 1 && stability_seeds >= 1 && grad_samples >= 1,
       "counts must be positive");
  need(grid_tol > 0 && interp_tol > 0 && control_min > 0 && slack >= 0 && grad_tol > 0 && linear_grad_tol > 0,
       "tolerances must be positive");
  need(tau_grad > 0 && tau_grad < 0.2, "tau_grad must satisfy |grad tau| < 1/5");
  need(n_theta >= 4 && n_theta % 4 == 0, "n_theta must be a multiple of 4 so grid-exact rotations exist");
}

nlohmann::json SuiteOptions::to_json() const {
  return {{"seed", seed},         {"nets", nets},
          {"pairs", pairs},       {"filter_draws", filter_draws},
          {"stability_seeds", stability_seeds}, {"grad_samples", grad_samples},
          {"grid_tol", grid_tol}, {"interp_tol", interp_tol},
          {"control_min", control_min}, {"slack", slack},
          {"grad_tol", grad_tol}, {"linear_grad_tol", linear_grad_tol},
          {"tau_grad", tau_grad}, {"n_theta", n_theta},
          {"K", K},               {"K_alpha", K_alpha}};
}

SuiteOptions SuiteOptions::from_json(const nlohmann::json& j) {
  SuiteOptions o;
  const nlohmann::json ref = o.to_json();
  for (const auto& [k, v] : j.items())
    if (!ref.contains(k)) throw Error(ErrorKind::Config, "unknown verify option '" + k + "'");
  auto get = [&](const char* k, auto& field) {
    if (j.contains(k)) field = j.at(k).get<std::remove_reference_t<decltype(field)>>();
  };
  get("seed", o.seed);
  get("nets", o.nets);
  get("pairs", o.pairs);
  get("filter_draws", o.filter_draws);
  get("stability_seeds", o.stability_seeds);
  get("grad_samples", o.grad_samples);
  get("grid_tol", o.grid_tol);
  get("interp_tol", o.interp_tol);
  get("control_min", o.control_min);
  get("slack", o.slack);
  get("grad_tol", o.grad_tol);
  get("linear_grad_tol", o.linear_grad_tol);
  get("tau_grad", o.tau_grad);
  get("n_theta", o.n_theta);
  get("K", o.K);
  get("K_alpha", o.K_alpha);
  o.validate();
  return o;
}

Tensor smooth_test_image(std::uint64_t seed, std::size_t side) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Tensor x({1, 1, side, side});
  const double c = (static_cast<double>(side) - 1) / 2.0, spread = 6.0 * static_cast<double>(side) / 28.0;
  for (int g = 0; g < 6; ++g) {
    const double r = spread * std::sqrt(U(rng)), th = kTwoPi * U(rng);
    const double cy = c + r * std::sin(th), cx = c + r * std::cos(th);
    const double s = 2.5 + 1.5 * U(rng), a = 2.0 * U(rng) - 0.5;
    for (std::size_t i = 0; i < side; ++i)
      for (std::size_t j = 0; j < side; ++j)
        x(0, 0, i, j) += a * std::exp(-((i - cy) * (i - cy) + (j - cx) * (j - cx)) / (2 * s * s));
  }
  return x;
}

std::vector<CheckRecord> equivariance_suite(const SuiteOptions& o) {
  o.validate();
  std::vector<CheckRecord> out;
  const ArchSpec rot = make_preset("conv3", Variant::RotDcf, preset_options(o));
  const ArchSpec cnn = make_preset("conv3", Variant::Cnn);
  for (int k = 0; k < o.nets; ++k) {
    const std::uint64_t seed = o.seed + k;
    const Network net = random_net(rot, seed), control = random_net(cnn, seed);
    const Tensor x = smooth_test_image(seed);
    for (int s = 1; s < o.n_theta; ++s) {
      const double t = kTwoPi * s / o.n_theta;
      const bool exact = grid_exact_angle(t);
      double control_err = 0.0;
      for (std::size_t b : net.block_outputs()) {
        const int m = exact ? 0 : receptive_margin(net, b);
        nlohmann::json params = {{"net_seed", seed}, {"s", s}, {"layer", b}, {"margin", m}, {"grid_exact", exact}};
        if (!crop_ok(net, b, m)) {
          out.push_back(skipped("equivariance", params));
          continue;
        }
        CheckRecord r;
        r.check = "equivariance";
        r.params = params;
        r.lhs = equivariance_error(net, x, t, b, m);
        r.rhs = exact ? o.grid_tol : o.interp_tol;
        r.tolerance = r.rhs;
        r.pass = r.lhs < r.rhs;
        out.push_back(r);
        control_err = std::max(control_err, equivariance_error(control, x, t, b, m));
      }
      CheckRecord c;
      c.check = "equivariance_control";
      c.params = {{"net_seed", seed}, {"s", s}, {"grid_exact", exact}, {"measure", "largest error over blocks"}};
      c.lhs = control_err;
      c.rhs = o.control_min;
      c.tolerance = o.control_min;
      c.pass = c.lhs > c.rhs;
      out.push_back(c);
    }
  }
  return out;
}

std::vector<CheckRecord> gradient_suite(const SuiteOptions& o) {
  o.validate();
  std::vector<CheckRecord> out;
  auto run = [&](const std::string& text, bool linear, std::uint64_t seed) {
    Network net = random_net(ArchSpec::parse(text), seed, true);
    const Shape& in = net.shapes()[0];
    std::mt19937_64 rng(seed + 100);
    std::normal_distribution<double> n01;
    // One sample: fewer pre-activations that a perturbation can push across a kink.
    Tensor x({1, in[0], in[2], in[3]});
    for (double& v : x.values()) v = n01(rng);
    const std::vector<int> labels{static_cast<int>(net.shapes()[net.num_layers() - 2][0]) - 1};
    GradCheckOptions g;
    g.samples = static_cast<std::size_t>(o.grad_samples);
    g.seed = seed;
    if (linear) {
      g.linear_objective = true;
      g.stencil = 4;
      g.step = 1e-3;
    }
    const auto res = gradient_check(net, x, labels, g);
    nlohmann::json uncovered = nlohmann::json::array();
    for (const auto& p : net.params())
      if (std::find(res.covered.begin(), res.covered.end(), p.name) == res.covered.end()) uncovered.push_back(p.name);
    CheckRecord r;
    r.check = linear ? "gradient_linear" : "gradient";
    r.params = {{"arch", text},
                {"compared", res.compared},
                {"excluded_at_kinks", res.excluded},
                {"worst_param", res.worst_param},
                {"uncovered", uncovered}};
    r.lhs = res.max_rel_error;
    r.rhs = linear ? o.linear_grad_tol : o.grad_tol;
    r.tolerance = r.rhs;
    r.pass = r.lhs < r.rhs && uncovered.empty() && res.compared > 0;
    out.push_back(r);
  };
  std::uint64_t seed = o.seed;
  for (const char* text : kGradNets) run(text, false, seed++);
  run(kLinearNet, true, seed);
  return out;
}

std::vector<CheckRecord> stability_suite(const SuiteOptions& o) {
  o.validate();
  std::vector<CheckRecord> out;
  const ArchSpec rot = make_preset("conv3", Variant::RotDcf, preset_options(o));

  // Non-expansiveness over random glyph pairs.
  {
    Network net = random_net(rot, o.seed, true);
    rescale_network(net);
    const Dataset d = make_synthetic(2 * static_cast<std::size_t>(o.pairs), o.seed);
    CheckRecord r;
    r.check = "nonexpansive";
    double worst = 0.0, worst_c = 0.0, max_Al = 0.0;
    bool ok = true;
    for (int p = 0; p < o.pairs; ++p) {
      const auto res = nonexpansiveness(net, d.slice(2 * p, 1).images, d.slice(2 * p + 1, 1).images);
      worst = std::max(worst, res.worst);
      worst_c = std::max(worst_c, res.worst_centered);
      max_Al = std::max(max_Al, res.max_Al);
      ok = ok && res.hypothesis_ok;
    }
    r.params = {{"pairs", o.pairs}, {"worst_ratio", worst}, {"worst_centered_ratio", worst_c}, {"max_Al", max_Al}};
    r.lhs = std::max(worst, worst_c);
    r.rhs = 1.0 + o.slack;
    r.tolerance = o.slack;
    r.status = ok ? "ok" : "hypothesis violated";
    r.pass = ok && r.lhs <= r.rhs;
    out.push_back(r);

    // One layer scaled by 10 must be reported.
    const std::size_t victim = net.block_outputs()[1] - 1;
    auto c = net.coeffs(victim);
    c.a.scale(10.0);
    net.set_coeffs(victim, c);
    const auto bad = nonexpansiveness(net, d.slice(0, 1).images, d.slice(1, 1).images);
    CheckRecord g;
    g.check = "nonexpansive_detects_scaling";
    g.params = {{"layer", victim}, {"max_Al", bad.max_Al}, {"reported_status", bad.hypothesis_ok ? "ok" : "hypothesis violated"}};
    g.lhs = bad.max_Al;
    g.rhs = 1.0;
    g.pass = !bad.pass;
    out.push_back(g);
  }

  // Filter bounds on random coefficient draws.
  {
    std::mt19937_64 rng(o.seed + 7);
    std::normal_distribution<double> n01;
    std::uniform_int_distribution<int> pick(0, 3), width(1, 4);
    double worst = 0.0;
    for (int k = 0; k < o.filter_draws; ++k) {
      const int K = pick(rng) < 2 ? 3 : 5, Ka = pick(rng) < 2 ? 3 : 5;
      const bool joint = pick(rng) != 0;
      FilterCoeffs c = joint ? FilterCoeffs::joint(width(rng), width(rng), K, Ka) : FilterCoeffs::lift(width(rng), width(rng), K);
      for (double& v : c.a.values()) v = n01(rng);
      const auto rec = filter_bound_check(c, build_fb_basis(5, K), build_angular_basis(joint ? Ka : 1, o.n_theta), 1.0 + o.slack);
      worst = std::max(worst, rec.lhs / rec.rhs);
    }
    CheckRecord r;
    r.check = "filter_bounds";
    r.params = {{"draws", o.filter_draws}, {"measure", "max(B, C, 2^j D) / A_l"}};
    r.lhs = worst;
    r.rhs = 1.0 + o.slack;
    r.tolerance = o.slack;
    r.pass = r.lhs <= r.rhs;
    out.push_back(r);
  }

  // Deformation stability. At interpolated angles the last 7x7 block has no
  // interior left after the crop, so those seeds stop at the deepest block
  // that still has one.
  const Network probe(rot);
  std::size_t deepest = 0;
  for (std::size_t b : probe.block_outputs())
    if (crop_ok(probe, b, receptive_margin(probe, b))) deepest = b;
  const ArchSpec rot_interp = truncated(rot, deepest);
  for (int k = 0; k < o.stability_seeds; ++k) {
    const std::uint64_t seed = o.seed + k;
    const int s = 1 + k % (o.n_theta - 1);
    const bool exact = grid_exact_angle(kTwoPi * s / o.n_theta);
    Network net = random_net(exact ? rot : rot_interp, seed);
    rescale_network(net);
    const auto tau = make_deformation(DeformationKind::SmoothRandom, o.tau_grad, seed, 28, 28);
    const auto res = stability_bound(net, smooth_test_image(seed), s, tau);
    CheckRecord r;
    r.check = "stability";
    r.params = {{"net_seed", seed},
                {"s", s},
                {"blocks", res.layer_lhs.size()},
                {"grad_tau", tau.grad_sup},
                {"sup_tau_px", tau.sup},
                {"layer_lhs", res.layer_lhs},
                {"layer_rhs", res.layer_rhs}};
    r.lhs = res.lhs;
    r.rhs = res.rhs;
    r.status = res.hypothesis_ok ? "ok" : "hypothesis violated";
    r.pass = res.pass;
    out.push_back(r);
  }
  {
    const Network net = random_net(rot_interp, o.seed);
    const auto steep = make_deformation(DeformationKind::SmoothRandom, 0.3, o.seed, 28, 28);
    const auto res = stability_bound(net, smooth_test_image(o.seed), 2, steep);
    CheckRecord r;
    r.check = "stability_detects_A3";
    r.params = {{"grad_tau", steep.grad_sup}, {"reported_status", res.hypothesis_ok ? "ok" : "hypothesis violated"}};
    r.lhs = steep.grad_sup;
    r.rhs = 0.2;
    r.pass = !res.hypothesis_ok && !res.pass;
    out.push_back(r);
  }
  return out;
}

std::vector<CheckRecord> alignment_suite(const SuiteOptions& o) {
  o.validate();
  std::vector<CheckRecord> out;
  const ArchSpec rot = make_preset("conv3", Variant::RotDcf, preset_options(o));
  for (int k = 0; k < o.nets; ++k) {
    const std::uint64_t seed = o.seed + k;
    const Network net = random_net(rot, seed);
    const Tensor x = smooth_test_image(seed);
    for (int s = 0; s < o.n_theta; ++s) {
      const double t = kTwoPi * s / o.n_theta;
      const bool exact = grid_exact_angle(t);
      for (std::size_t b : net.block_outputs()) {
        const int m = exact ? 0 : receptive_margin(net, b);
        nlohmann::json params = {{"net_seed", seed}, {"s", s}, {"layer", b}, {"grid_exact", exact}};
        if (!crop_ok(net, b, m)) {
          out.push_back(skipped("alignment", params));
          continue;
        }
        CheckRecord r;
        r.check = "alignment";
        r.params = params;
        r.rhs = exact ? o.grid_tol : o.interp_tol;
        r.lhs = alignment_error(net, x, s, b, r.rhs);
        r.tolerance = r.rhs;
        r.pass = r.lhs < r.rhs;
        out.push_back(r);
      }
    }
  }
  return out;
}

bool counted(const CheckRecord& r) { return r.status != "skipped"; }

bool all_pass(const std::vector<CheckRecord>& records) {
  return std::all_of(records.begin(), records.end(), [](const CheckRecord& r) { return !counted(r) || r.pass; });
}

nlohmann::json to_json(const CheckRecord& r) {
  return {{"check", r.check}, {"params", r.params}, {"lhs", r.lhs},       {"rhs", r.rhs},
          {"tolerance", r.tolerance}, {"pass", r.pass}, {"status", r.status}};
}

nlohmann::json suite_report(const std::vector<CheckRecord>& records, const SuiteOptions& o) {
  nlohmann::json j;
  j["options"] = o.to_json();
  j["checks"] = nlohmann::json::array();
  int passed = 0, failed = 0, skipped_n = 0;
  for (const auto& r : records) {
    j["checks"].push_back(to_json(r));
    if (!counted(r)) ++skipped_n;
    else if (r.pass) ++passed;
    else ++failed;
  }
  j["passed"] = passed;
  j["failed"] = failed;
  j["skipped"] = skipped_n;
  j["all_pass"] = failed == 0;
  return j;
}

}  // namespace rotdcf
