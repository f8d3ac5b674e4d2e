// SPDX-License-Identifier: Apache-2.0
#include "rotdcf/accounting.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "rotdcf/error.hpp"

namespace rotdcf {

FlopEstimate flops_regular(double M_in, double M_out, double W, double L) {
  FlopEstimate f;
  f.total = M_in * M_out * W * W * (1 + 2 * L * L);
  f.basis = f.total;
  return f;
}

FlopEstimate flops_rotdcf(double M_in, double M_out, double W, double L, double K, double K_alpha, double n_theta) {
  FlopEstimate f;
  const double pre = 2 * M_in * W * W * K_alpha;
  f.angular = pre * n_theta;
  f.basis = pre * L * L * K;
  f.contraction = pre * M_out * n_theta * K;
  f.total = pre * (n_theta + L * L * K + M_out * n_theta * K);
  return f;
}

FlopEstimate flops_rotdcf_lift(double M_in, double M_out, double W, double L, double K, double n_theta) {
  FlopEstimate f;
  const double pre = 2 * M_in * W * W;
  f.basis = pre * L * L * K;
  f.contraction = pre * M_out * n_theta * K;
  f.total = pre * (L * L * K + M_out * n_theta * K);
  return f;
}

FlopEstimate flops_nobasis(double M_in, double M_out, double W, double L, double n_theta) {
  FlopEstimate f;
  f.total = 2 * M_in * M_out * W * W * L * L * n_theta * n_theta;
  f.basis = f.total;
  f.estimate = true;
  return f;
}

FlopEstimate flops_nobasis_lift(double M_in, double M_out, double W, double L, double n_theta) {
  FlopEstimate f;
  f.total = 2 * M_in * M_out * W * W * L * L * n_theta;
  f.basis = f.total;
  f.estimate = true;
  return f;
}

CostReport param_count(const ArchSpec& arch, Variant variant) {
  const auto shapes = infer_shapes(arch);
  CostReport r;
  r.variant = variant;
  r.name = to_string(variant);
  const double N = arch.n_theta;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const auto& l = arch.layers[i];
    if (l.type == LayerType::Dense) {
      std::size_t in = 1;
      for (auto d : shapes[i - 1]) in *= d;
      r.head_params += static_cast<std::int64_t>(in) * l.n + l.n;
      continue;
    }
    if (!l.is_conv()) continue;
    auto bad = [&](const std::string& why) {
      return Error(ErrorKind::Config, "layer " + std::to_string(i) + " (" + l.to_string() + ") cannot be counted as " +
                                          to_string(variant) + ": " + why);
    };
    const bool plain = l.type == LayerType::ConvPlain;
    if ((variant == Variant::Cnn) != plain) throw bad(plain ? "plain convolution" : "decomposed layer");
    if (variant == Variant::Dcf && l.type != LayerType::Lift) throw bad("dcf has no angular axis");
    const bool decomposed = variant == Variant::Dcf || variant == Variant::RotDcf;
    if (decomposed && l.K <= 0) throw bad("missing K");
    if (decomposed && l.type == LayerType::Joint && l.K_alpha <= 0) throw bad("missing K_alpha");

    LayerCost c;
    c.layer = i;
    c.kind = plain ? "conv" : l.type == LayerType::Lift ? "lift" : "joint";
    c.M_in = static_cast<int>(shapes[i - 1][0]);
    c.M_out = l.M;
    c.W = static_cast<int>(shapes[i][3]);
    const std::int64_t io = static_cast<std::int64_t>(c.M_in) * c.M_out, L2 = static_cast<std::int64_t>(l.L) * l.L;
    const double Mi = c.M_in, Mo = c.M_out, W = c.W, L = l.L;
    c.biases = c.M_out;
    switch (variant) {
      case Variant::Cnn:
        c.weights = L2 * io;
        c.flops = flops_regular(Mi, Mo, W, L);
        break;
      case Variant::Dcf:
        c.weights = static_cast<std::int64_t>(l.K) * io;
        c.flops = flops_rotdcf_lift(Mi, Mo, W, L, l.K, 1);
        break;
      case Variant::RotDcf:
        if (l.type == LayerType::Lift) {
          c.weights = static_cast<std::int64_t>(l.K) * io;
          c.flops = flops_rotdcf_lift(Mi, Mo, W, L, l.K, N);
        } else {
          c.weights = static_cast<std::int64_t>(l.K) * l.K_alpha * io;
          c.flops = flops_rotdcf(Mi, Mo, W, L, l.K, l.K_alpha, N);
        }
        break;
      case Variant::RotNoBasis:
        if (l.type == LayerType::Lift) {
          c.weights = L2 * io;
          c.flops = flops_nobasis_lift(Mi, Mo, W, L, N);
        } else {
          c.weights = L2 * arch.n_theta * io;
          c.flops = flops_nobasis(Mi, Mo, W, L, N);
        }
        break;
    }
    r.total_params += c.params();
    r.total_flops += c.flops.total;
    r.layers.push_back(std::move(c));
  }
  return r;
}

void set_baseline(CostReport& r, const CostReport& baseline) {
  r.baseline = baseline.name;
  r.ratio = baseline.total_params ? static_cast<double>(r.total_params) / baseline.total_params : 0.0;
}

std::string TableRow::label() const {
  std::string s = family + "-" + to_string(variant) + " M=" + std::to_string(opts.M);
  if (variant != Variant::Cnn && variant != Variant::RotNoBasis) s += " K=" + std::to_string(opts.K);
  if (variant == Variant::RotDcf) s += " Ka=" + std::to_string(opts.K_alpha);
  return s;
}

std::vector<TableRow> table_rows(const std::string& family, std::optional<Variant> variant) {
  auto row = [&](Variant v, int M, int K = 0, int Ka = 0) {
    PresetOptions o;
    o.M = M;
    o.K = K;
    o.K_alpha = Ka;
    return TableRow{family, v, o};
  };
  std::vector<TableRow> all;
  if (family == "conv3") {
    all = {row(Variant::Cnn, 32),          row(Variant::Dcf, 32, 5),         row(Variant::Dcf, 32, 3),
           row(Variant::RotDcf, 16, 14, 8), row(Variant::RotDcf, 16, 5, 8),  row(Variant::RotDcf, 16, 3, 8),
           row(Variant::RotDcf, 16, 5, 5),  row(Variant::RotDcf, 16, 3, 5),  row(Variant::RotDcf, 8, 5, 5),
           row(Variant::RotDcf, 8, 3, 5),   row(Variant::RotNoBasis, 16),    row(Variant::RotNoBasis, 8)};
  } else if (family == "vgg16") {
    all = {row(Variant::Cnn, 64), row(Variant::RotDcf, 32, 3, 7), row(Variant::RotDcf, 32, 3, 5),
           row(Variant::RotNoBasis, 32)};
  } else {
    throw Error(ErrorKind::Config, "unknown preset family '" + family + "'");
  }
  if (!variant) return all;
  std::vector<TableRow> out;
  for (const auto& r : all)
    if (r.variant == *variant) out.push_back(r);
  return out;
}

std::vector<CostReport> count_table(const std::string& family, std::optional<Variant> variant) {
  const auto base_row = table_rows(family, Variant::Cnn).front();
  const CostReport base = param_count(make_preset(family, Variant::Cnn, base_row.opts), Variant::Cnn);
  std::vector<CostReport> out;
  for (const auto& row : table_rows(family, variant)) {
    CostReport r = param_count(make_preset(family, row.variant, row.opts), row.variant);
    r.name = row.label();
    set_baseline(r, base);
    out.push_back(std::move(r));
  }
  return out;
}

std::string format_sig(double n, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*e", digits - 1, n);
  // 9.680e+03 -> 9.680e3
  std::string s(buf);
  const auto e = s.find('e');
  return s.substr(0, e + 1) + std::to_string(std::stoi(s.substr(e + 1)));
}

nlohmann::json to_json(const CostReport& r) {
  nlohmann::json j;
  j["name"] = r.name;
  j["variant"] = to_string(r.variant);
  j["total_params"] = r.total_params;
  j["total_flops"] = r.total_flops;
  j["head_params"] = r.head_params;
  j["ratio"] = r.ratio ? nlohmann::json(*r.ratio) : nlohmann::json();
  j["baseline"] = r.baseline;
  j["layers"] = nlohmann::json::array();
  for (const auto& c : r.layers)
    j["layers"].push_back({{"layer", c.layer},
                           {"kind", c.kind},
                           {"W", c.W},
                           {"M_in", c.M_in},
                           {"M_out", c.M_out},
                           {"weights", c.weights},
                           {"biases", c.biases},
                           {"params", c.params()},
                           {"flops", c.flops.total},
                           {"flops_angular", c.flops.angular},
                           {"flops_basis", c.flops.basis},
                           {"flops_contraction", c.flops.contraction},
                           {"flops_estimate", c.flops.estimate}});
  return j;
}

void write_cost_csv(std::ostream& os, const std::vector<CostReport>& reports) {
  os << "name,variant,layer,kind,W,M_in,M_out,weights,biases,params,flops,flops_estimate\n";
  for (const auto& r : reports)
    for (const auto& c : r.layers)
      os << r.name << ',' << to_string(r.variant) << ',' << c.layer << ',' << c.kind << ',' << c.W << ',' << c.M_in
         << ',' << c.M_out << ',' << c.weights << ',' << c.biases << ',' << c.params() << ','
         << static_cast<std::int64_t>(c.flops.total) << ',' << (c.flops.estimate ? 1 : 0) << '\n';
}

void print_cost_table(std::ostream& os, const std::vector<CostReport>& reports) {
  char line[256];
  std::snprintf(line, sizeof line, "%-36s %12s %10s %7s %14s\n", "network", "# param.", "", "ratio", "flops");
  os << line;
  for (const auto& r : reports) {
    const std::string ratio = r.ratio ? [&] {
      char b[16];
      std::snprintf(b, sizeof b, "%.2f", *r.ratio);
      return std::string(b);
    }() : std::string("-");
    std::snprintf(line, sizeof line, "%-36s %12lld %10s %7s %14s%s\n", r.name.c_str(),
                  static_cast<long long>(r.total_params), format_sig(static_cast<double>(r.total_params)).c_str(),
                  ratio.c_str(), format_sig(r.total_flops).c_str(),
                  r.variant == Variant::RotNoBasis ? " (estimate)" : "");
    os << line;
  }
}

}  // namespace rotdcf
