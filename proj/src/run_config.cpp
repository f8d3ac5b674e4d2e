// SPDX-License-Identifier: Apache-2.0
#include "rotdcf/run_config.hpp"

#include <chrono>
#include <fstream>
#include <numbers>
#include <sstream>

#include "rotdcf/error.hpp"

namespace rotdcf {

namespace {

using nlohmann::json;

constexpr double kDeg = std::numbers::pi / 180.0;

void config_error(const std::string& msg) { throw Error(ErrorKind::Config, msg); }

// Rejects keys the section does not know, then copies the known ones.
template <class F>
void read_section(const json& j, const json& defaults, const std::string& where, F&& assign) {
  if (!j.is_object()) config_error(where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (!defaults.contains(k)) config_error("unknown key '" + k + "' in " + where);
  try {
    assign();
  } catch (const json::exception& e) {
    config_error(where + ": " + e.what());
  }
}

template <class T>
void get(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

json data_json(const DataConfig& d) {
  return {{"source", d.source},
          {"train_size", d.train_size},
          {"test_size", d.test_size},
          {"train_max_rot_deg", d.train_max_rot_deg},
          {"test_max_rot_deg", d.test_max_rot_deg}};
}

json train_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},       {"batch_size", t.batch_size}, {"lr_start", t.lr_start},
          {"lr_end", t.lr_end},       {"momentum", t.momentum},     {"target_test_acc", t.target_test_acc}};
}

json transfer_json(const TransferConfig& t) {
  return {{"seeds", t.seeds},
          {"train_size", t.train_size},
          {"test_size", t.test_size},
          {"test_max_rot_deg", t.test_max_rot_deg},
          {"epochs", t.epochs},
          {"baseline", t.baseline},
          {"min_gap", t.min_gap}};
}

bool is_inline(const std::string& arch) { return arch.find('(') != std::string::npos; }

double max_rot_rad(double deg) { return deg >= 360.0 ? 2.0 * std::numbers::pi : deg * kDeg; }

}  // namespace

void RunConfig::validate() const {
  if (arch.empty()) config_error("arch must not be empty");
  if (!variant.empty() && variant != "all") parse_variant(variant);
  if (M < 0 || K < 0 || K_alpha < 0) config_error("M, K and K_alpha must be non-negative");
  if (n_theta < 1) config_error("n_theta must be positive");
  if (out.empty()) config_error("out must not be empty");
  if (data.source.empty()) config_error("data.source must be 'synthetic' or a directory");
  if (data.train_size < 1 || data.test_size < 1) config_error("data sizes must be positive");
  for (double d : {data.train_max_rot_deg, data.test_max_rot_deg, transfer.test_max_rot_deg})
    if (!(d >= 0.0 && d <= 360.0)) config_error("rotation ranges must lie in [0, 360] degrees");
  train.validate();
  verify.validate();
  if (transfer.seeds.empty()) config_error("transfer.seeds must not be empty");
  if (transfer.train_size < 1 || transfer.test_size < 1 || transfer.epochs < 1)
    config_error("transfer sizes and epochs must be positive");
}

json RunConfig::to_json() const {
  json v = verify.to_json();
  v.erase("seed");  // follows the run seed
  return {{"arch", arch},       {"variant", variant},   {"M", M},
          {"K", K},             {"K_alpha", K_alpha},   {"n_theta", n_theta},
          {"norm", norm},       {"seed", seed},         {"out", out},
          {"checkpoint", checkpoint}, {"strict", strict}, {"data", data_json(data)},
          {"train", train_json(train)}, {"verify", v},  {"transfer", transfer_json(transfer)}};
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  const json ref = c.to_json();
  read_section(j, ref, "config", [&] {
    get(j, "arch", c.arch);
    get(j, "variant", c.variant);
    get(j, "M", c.M);
    get(j, "K", c.K);
    get(j, "K_alpha", c.K_alpha);
    get(j, "n_theta", c.n_theta);
    get(j, "norm", c.norm);
    get(j, "seed", c.seed);
    get(j, "out", c.out);
    get(j, "checkpoint", c.checkpoint);
    get(j, "strict", c.strict);
  });
  if (j.contains("data")) {
    const json& d = j.at("data");
    read_section(d, ref.at("data"), "data", [&] {
      get(d, "source", c.data.source);
      get(d, "train_size", c.data.train_size);
      get(d, "test_size", c.data.test_size);
      get(d, "train_max_rot_deg", c.data.train_max_rot_deg);
      get(d, "test_max_rot_deg", c.data.test_max_rot_deg);
    });
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    read_section(t, ref.at("train"), "train", [&] {
      get(t, "epochs", c.train.epochs);
      get(t, "batch_size", c.train.batch_size);
      get(t, "lr_start", c.train.lr_start);
      get(t, "lr_end", c.train.lr_end);
      get(t, "momentum", c.train.momentum);
      get(t, "target_test_acc", c.train.target_test_acc);
    });
  }
  if (j.contains("verify")) {
    json v = j.at("verify");
    if (!v.is_object()) config_error("verify must be an object");
    if (v.contains("seed")) config_error("verify.seed follows the run seed; set 'seed' instead");
    c.verify = SuiteOptions::from_json(v);
  }
  if (j.contains("transfer")) {
    const json& t = j.at("transfer");
    read_section(t, ref.at("transfer"), "transfer", [&] {
      get(t, "seeds", c.transfer.seeds);
      get(t, "train_size", c.transfer.train_size);
      get(t, "test_size", c.transfer.test_size);
      get(t, "test_max_rot_deg", c.transfer.test_max_rot_deg);
      get(t, "epochs", c.transfer.epochs);
      get(t, "baseline", c.transfer.baseline);
      get(t, "min_gap", c.transfer.min_gap);
    });
  }
  c.train.seed = c.seed;
  c.verify.seed = c.seed;
  c.validate();
  return c;
}

std::string RunConfig::canonical() const { return to_json().dump(2) + "\n"; }

PresetOptions RunConfig::preset_options() const {
  PresetOptions p;
  p.M = M;
  p.K = K;
  p.K_alpha = K_alpha;
  p.n_theta = n_theta;
  p.norm = norm;
  return p;
}

ArchSpec RunConfig::resolve_arch() const {
  if (is_inline(arch)) return ArchSpec::parse(arch);
  if (variant == "all") config_error("variant 'all' is only meaningful for count");
  if (arch.find('-') == std::string::npos) {
    if (variant.empty()) config_error("arch '" + arch + "' is a family; give a variant");
    return make_preset(arch, parse_variant(variant), preset_options());
  }
  return make_preset(arch, preset_options());
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config, "config '" + path + "' is not valid JSON: " + e.what());
  }
  return RunConfig::from_json(j);
}

Dataset load_split(const DataConfig& data, bool train_split, std::size_t n, double max_rot_deg, std::uint64_t seed) {
  Dataset base;
  if (data.source == "synthetic") {
    // Disjoint streams for the two splits.
    base = make_synthetic(n, seed * 2 + (train_split ? 0 : 1));
  } else {
    const Dataset full = load_mnist_dir(data.source, train_split);
    if (full.size() < n)
      throw Error(ErrorKind::Config, "requested " + std::to_string(n) + " items but " + data.source + " holds " +
                                         std::to_string(full.size()));
    base = full.slice(0, n);
  }
  if (max_rot_deg == 0.0) return base;
  return make_rotmnist(base, max_rot_rad(max_rot_deg), seed + (train_split ? 101 : 202));
}

std::vector<TransferRow> run_transfer(const RunConfig& cfg, const TransferLog& log) {
  cfg.validate();
  const auto& t = cfg.transfer;
  RunConfig base = cfg;
  base.arch = t.baseline;
  base.variant.clear();
  base.M = base.K = base.K_alpha = 0;
  const std::vector<std::pair<std::string, ArchSpec>> models{{is_inline(cfg.arch) ? "inline" : cfg.arch, cfg.resolve_arch()},
                                                             {t.baseline, base.resolve_arch()}};
  std::vector<TransferRow> rows;
  for (std::uint64_t seed : t.seeds) {
    const Dataset train_set = load_split(cfg.data, true, t.train_size, 0.0, seed);
    const Dataset upright = load_split(cfg.data, false, t.test_size, 0.0, seed);
    const Dataset rotated = load_split(cfg.data, false, t.test_size, t.test_max_rot_deg, seed);
    for (std::size_t k = 0; k < models.size(); ++k) {
      const auto& [name, arch] = models[k];
      const auto t0 = std::chrono::steady_clock::now();
      Network net(arch);
      net.init(seed);
      TrainConfig tc = cfg.train;
      tc.epochs = t.epochs;
      tc.seed = seed;
      tc.target_test_acc = 0.0;
      const auto m = train(net, train_set, nullptr, tc);
      TransferRow r;
      r.model = name;
      r.baseline = k == 1;
      r.seed = seed;
      r.epochs_run = static_cast<int>(m.size());
      r.train_acc = m.back().train_acc;
      r.upright_acc = evaluate(net, upright);
      r.rotated_acc = evaluate(net, rotated);
      r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      rows.push_back(r);
      if (log) log(r);
    }
  }
  return rows;
}

std::vector<double> transfer_gaps(const RunConfig& cfg, const std::vector<TransferRow>& rows) {
  std::vector<double> gaps;
  for (std::uint64_t seed : cfg.transfer.seeds) {
    std::optional<double> a, b;
    for (const auto& r : rows) {
      if (r.seed != seed) continue;
      (r.baseline ? b : a) = r.rotated_acc;
    }
    if (!a || !b) throw Error(ErrorKind::Domain, "transfer rows lack seed " + std::to_string(seed));
    gaps.push_back(*a - *b);
  }
  return gaps;
}

void write_transfer_csv(const RunConfig& cfg, const std::vector<TransferRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path + "'");
  out << "model,baseline,seed,train_size,test_size,test_max_rot_deg,epochs,train_acc,upright_acc,rotated_acc,seconds\n";
  for (const auto& r : rows)
    out << r.model << ',' << (r.baseline ? 1 : 0) << ',' << r.seed << ',' << cfg.transfer.train_size << ',' << cfg.transfer.test_size << ','
        << cfg.transfer.test_max_rot_deg << ',' << r.epochs_run << ',' << r.train_acc << ',' << r.upright_acc << ','
        << r.rotated_acc << ',' << r.seconds << '\n';
  if (!out) throw Error(ErrorKind::Io, "write to '" + path + "' failed");
}

}  // namespace rotdcf
