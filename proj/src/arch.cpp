// SPDX-License-Identifier: Apache-2.0
#include "rotdcf/arch.hpp"

#include <charconv>
#include <sstream>

#include "rotdcf/error.hpp"

namespace rotdcf {

namespace {

struct TypeName {
  LayerType type;
  const char* name;
  int arity;
};

constexpr TypeName kTypes[] = {
    {LayerType::Input, "input", 3},         {LayerType::Lift, "lift", 3},
    {LayerType::Joint, "joint", 4},         {LayerType::ConvPlain, "conv_plain", 2},
    {LayerType::Relu, "relu", 0},           {LayerType::AvgPool, "avgpool", 1},
    {LayerType::MaxPool, "maxpool", 1},     {LayerType::GroupNorm, "groupnorm", 0},
    {LayerType::Flatten, "flatten", 0},     {LayerType::Dense, "dense", 1},
    {LayerType::SoftmaxLoss, "softmax_loss", 0},
};

const TypeName& info(LayerType t) {
  for (const auto& e : kTypes)
    if (e.type == t) return e;
  throw Error(ErrorKind::Config, "unknown layer type");
}

int parse_int(const std::string& s, const std::string& token) {
  int v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw Error(ErrorKind::Config, "bad integer '" + s + "' in '" + token + "'");
  return v;
}

std::vector<int> args_of(const LayerSpec& l) {
  switch (l.type) {
    case LayerType::Input: return {l.C, l.H, l.W};
    case LayerType::Lift: return {l.L, l.M, l.K};
    case LayerType::Joint: return {l.L, l.M, l.K, l.K_alpha};
    case LayerType::ConvPlain: return {l.L, l.M};
    case LayerType::AvgPool:
    case LayerType::MaxPool: return {l.p};
    case LayerType::Dense: return {l.n};
    default: return {};
  }
}

LayerSpec from_args(LayerType t, const std::vector<int>& a) {
  LayerSpec l;
  l.type = t;
  switch (t) {
    case LayerType::Input: l.C = a[0], l.H = a[1], l.W = a[2]; break;
    case LayerType::Lift: l.L = a[0], l.M = a[1], l.K = a[2]; break;
    case LayerType::Joint: l.L = a[0], l.M = a[1], l.K = a[2], l.K_alpha = a[3]; break;
    case LayerType::ConvPlain: l.L = a[0], l.M = a[1]; break;
    case LayerType::AvgPool:
    case LayerType::MaxPool: l.p = a[0]; break;
    case LayerType::Dense: l.n = a[0]; break;
    default: break;
  }
  return l;
}

[[noreturn]] void bad(std::size_t index, const LayerSpec& l, const std::string& why) {
  throw Error(ErrorKind::Config, "layer " + std::to_string(index) + " (" + l.to_string() + "): " + why);
}

}  // namespace

std::string LayerSpec::to_string() const {
  const auto& t = info(type);
  std::string s = t.name;
  if (t.arity == 0) return s;
  s += '(';
  const auto a = args_of(*this);
  for (std::size_t i = 0; i < a.size(); ++i) s += (i ? "," : "") + std::to_string(a[i]);
  return s + ')';
}

std::string ArchSpec::to_string() const {
  std::string s = "ntheta=" + std::to_string(n_theta);
  for (const auto& l : layers) s += ' ' + l.to_string();
  return s;
}

ArchSpec ArchSpec::parse(const std::string& text) {
  ArchSpec arch;
  std::istringstream in(text);
  std::string tok;
  bool saw_ntheta = false;
  while (in >> tok) {
    if (tok.rfind("ntheta=", 0) == 0) {
      if (saw_ntheta) throw Error(ErrorKind::Config, "ntheta given twice");
      arch.n_theta = parse_int(tok.substr(7), tok);
      saw_ntheta = true;
      continue;
    }
    const auto open = tok.find('(');
    const std::string name = tok.substr(0, open);
    const TypeName* t = nullptr;
    for (const auto& e : kTypes)
      if (name == e.name) t = &e;
    if (!t) throw Error(ErrorKind::Config, "unknown layer '" + name + "'");
    std::vector<int> args;
    if (open != std::string::npos) {
      if (tok.back() != ')') throw Error(ErrorKind::Config, "unterminated argument list in '" + tok + "'");
      std::string body = tok.substr(open + 1, tok.size() - open - 2);
      std::size_t start = 0;
      while (start <= body.size()) {
        const auto comma = body.find(',', start);
        args.push_back(parse_int(body.substr(start, comma - start), tok));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
    }
    if (static_cast<int>(args.size()) != t->arity)
      throw Error(ErrorKind::Config, "'" + name + "' takes " + std::to_string(t->arity) + " arguments, got '" + tok + "'");
    arch.layers.push_back(from_args(t->type, args));
  }
  infer_shapes(arch);
  return arch;
}

std::vector<Shape> infer_shapes(const ArchSpec& arch) {
  if (arch.n_theta < 1) throw Error(ErrorKind::Config, "ntheta must be >= 1");
  if (arch.layers.empty() || arch.layers.front().type != LayerType::Input)
    throw Error(ErrorKind::Config, "architecture must start with input(C,H,W)");
  std::vector<Shape> shapes;
  bool lifted = false;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const auto& l = arch.layers[i];
    const Shape in = shapes.empty() ? Shape{} : shapes.back();
    const bool feat = in.size() == 4;
    auto need_features = [&] {
      if (!feat) bad(i, l, "expects a feature map, got a flat vector");
    };
    auto need_conv = [&] {
      need_features();
      if (l.L < 3 || l.L % 2 == 0) bad(i, l, "patch size must be odd and >= 3");
      if (l.M < 1) bad(i, l, "needs at least one output channel");
    };
    switch (l.type) {
      case LayerType::Input:
        if (i != 0) bad(i, l, "input may only appear first");
        if (l.C < 1 || l.H < 1 || l.W < 1) bad(i, l, "dimensions must be positive");
        shapes.push_back({static_cast<std::size_t>(l.C), 1, static_cast<std::size_t>(l.H), static_cast<std::size_t>(l.W)});
        continue;
      case LayerType::Lift:
        need_conv();
        if (in[1] != 1) bad(i, l, "lift expects an input without an angular axis");
        if (l.K < 1) bad(i, l, "K must be >= 1");
        lifted = true;
        shapes.push_back({static_cast<std::size_t>(l.M), static_cast<std::size_t>(arch.n_theta), in[2], in[3]});
        continue;
      case LayerType::Joint:
        need_conv();
        if (!lifted) bad(i, l, "joint layers must follow a lift layer");
        if (arch.n_theta < 2) bad(i, l, "joint layers need ntheta >= 2");
        if (in[1] != static_cast<std::size_t>(arch.n_theta)) bad(i, l, "input has no angular axis");
        if (l.K < 1) bad(i, l, "K must be >= 1");
        if (l.K_alpha < 1 || l.K_alpha > arch.n_theta) bad(i, l, "K_alpha must lie in [1, ntheta]");
        shapes.push_back({static_cast<std::size_t>(l.M), in[1], in[2], in[3]});
        continue;
      case LayerType::ConvPlain:
        need_conv();
        if (in[1] != 1) bad(i, l, "conv_plain expects an input without an angular axis");
        shapes.push_back({static_cast<std::size_t>(l.M), 1, in[2], in[3]});
        continue;
      case LayerType::Relu:
        shapes.push_back(in);
        continue;
      case LayerType::GroupNorm:
        need_features();
        shapes.push_back(in);
        continue;
      case LayerType::AvgPool:
      case LayerType::MaxPool:
        need_features();
        if (l.p < 1) bad(i, l, "window must be >= 1");
        if (static_cast<std::size_t>(l.p) > in[2] || static_cast<std::size_t>(l.p) > in[3])
          bad(i, l, "window larger than the " + std::to_string(in[2]) + "x" + std::to_string(in[3]) + " feature map");
        shapes.push_back({in[0], in[1], in[2] / l.p, in[3] / l.p});
        continue;
      case LayerType::Flatten:
        need_features();
        shapes.push_back({shape_size(in)});
        continue;
      case LayerType::Dense:
        if (feat) bad(i, l, "dense expects a flat vector; insert flatten");
        if (l.n < 1) bad(i, l, "needs at least one output");
        shapes.push_back({static_cast<std::size_t>(l.n)});
        continue;
      case LayerType::SoftmaxLoss:
        if (feat) bad(i, l, "softmax_loss expects logits");
        if (i + 1 != arch.layers.size()) bad(i, l, "softmax_loss must be the last layer");
        shapes.push_back(in);
        continue;
    }
  }
  return shapes;
}

std::vector<int> pooling_factors(const ArchSpec& arch) {
  std::vector<int> f;
  int cur = 1;
  for (const auto& l : arch.layers) {
    f.push_back(cur);
    if (l.type == LayerType::AvgPool || l.type == LayerType::MaxPool) cur *= l.p;
  }
  return f;
}

std::vector<double> filter_radii(const ArchSpec& arch) {
  const auto pf = pooling_factors(arch);
  std::vector<double> r(arch.layers.size(), 0.0);
  for (std::size_t i = 0; i < arch.layers.size(); ++i)
    if (arch.layers[i].is_conv()) r[i] = (arch.layers[i].L - 1) / 2.0 * pf[i];
  return r;
}

Variant parse_variant(const std::string& name) {
  if (name == "cnn") return Variant::Cnn;
  if (name == "dcf") return Variant::Dcf;
  if (name == "rot-nobasis") return Variant::RotNoBasis;
  if (name == "rotdcf") return Variant::RotDcf;
  throw Error(ErrorKind::Config, "unknown variant '" + name + "' (expected cnn, dcf, rot-nobasis or rotdcf)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Cnn: return "cnn";
    case Variant::Dcf: return "dcf";
    case Variant::RotNoBasis: return "rot-nobasis";
    case Variant::RotDcf: return "rotdcf";
  }
  return "?";
}

ArchSpec make_preset(const std::string& family, Variant variant, const PresetOptions& opts) {
  const bool conv3 = family == "conv3";
  if (!conv3 && family != "vgg16") throw Error(ErrorKind::Config, "unknown preset family '" + family + "'");
  if (opts.gap && !conv3) throw Error(ErrorKind::Config, "the gap option applies to conv3 presets only");
  const bool rot = variant == Variant::RotDcf || variant == Variant::RotNoBasis;
  int M = opts.M;
  if (M == 0) M = conv3 ? (rot ? 8 : 32) : (rot ? 32 : 64);
  const int K = opts.K ? opts.K : 3;
  const int Ka = opts.K_alpha ? opts.K_alpha : 5;
  const int L = conv3 ? 5 : 3;

  ArchSpec a;
  a.n_theta = rot ? opts.n_theta : 1;
  auto add = [&](LayerSpec l) { a.layers.push_back(l); };
  auto simple = [](LayerType t, int p = 0) {
    LayerSpec l;
    l.type = t;
    l.p = p;
    return l;
  };
  bool first = true;
  auto conv = [&](int out) {
    LayerSpec l;
    l.L = L;
    l.M = out;
    if (variant == Variant::Cnn) {
      l.type = LayerType::ConvPlain;
    } else if (variant == Variant::Dcf || first) {
      l.type = LayerType::Lift;
      l.K = K;
    } else {
      l.type = LayerType::Joint;
      l.K = K;
      l.K_alpha = Ka;
    }
    first = false;
    add(l);
    if (opts.norm) add(simple(LayerType::GroupNorm));
    add(simple(LayerType::Relu));
  };

  LayerSpec in;
  in.type = LayerType::Input;
  in.C = conv3 ? 1 : 3;
  in.H = in.W = conv3 ? 28 : 32;
  add(in);
  if (conv3) {
    for (int mult : {1, 2, 4}) {
      conv(mult * M);
      add(simple(LayerType::AvgPool, mult == 4 && opts.gap ? 7 : 2));
    }
  } else {
    for (int i = 0; i < 5; ++i) conv(M);
    add(simple(LayerType::MaxPool, 2));
    for (int i = 0; i < 4; ++i) conv(2 * M);
    add(simple(LayerType::MaxPool, 2));
    for (int i = 0; i < 4; ++i) conv(4 * M);
    add(simple(LayerType::MaxPool, 2));
  }
  add(simple(LayerType::Flatten));
  LayerSpec fc;
  fc.type = LayerType::Dense;
  fc.n = conv3 ? 64 : 128;
  add(fc);
  add(simple(LayerType::Relu));
  fc.n = 10;
  add(fc);
  add(simple(LayerType::SoftmaxLoss));
  infer_shapes(a);
  return a;
}

ArchSpec make_preset(const std::string& name, const PresetOptions& opts) {
  const auto dash = name.find('-');
  if (dash == std::string::npos) throw Error(ErrorKind::Config, "preset '" + name + "' needs a variant suffix, e.g. conv3-rotdcf");
  return make_preset(name.substr(0, dash), parse_variant(name.substr(dash + 1)), opts);
}

}  // namespace rotdcf
