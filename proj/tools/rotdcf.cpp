// SPDX-License-Identifier: Apache-2.0
// rotdcf: train, eval, verify, count, transfer.
#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "rotdcf/accounting.hpp"
#include "rotdcf/checkpoint.hpp"
#include "rotdcf/error.hpp"
#include "rotdcf/run_config.hpp"

namespace fs = std::filesystem;
using namespace rotdcf;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kConfig = 3, kData = 4, kUnverified = 5 };

struct Flags {
  std::string config, preset, variant, data, out, checkpoint;
  int ntheta = 0, k = -1, kalpha = -1;
  std::uint64_t seed = 0;
  bool strict = false;
};

void add_flags(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "JSON run configuration");
  sub->add_option("--preset,--arch", f.preset, "preset (conv3-rotdcf, vgg16-cnn, ...), family, or inline arch text");
  sub->add_option("--variant", f.variant, "cnn, dcf, rot-nobasis, rotdcf (count also takes 'all')");
  sub->add_option("--ntheta", f.ntheta, "rotation samples N_theta");
  sub->add_option("--k", f.k, "Fourier-Bessel modes K");
  sub->add_option("--kalpha", f.kalpha, "angular modes K_alpha");
  sub->add_option("--seed", f.seed, "run seed");
  sub->add_option("--data", f.data, "MNIST directory or 'synthetic' (default $ROTDCF_DATA, else synthetic)");
  sub->add_option("--out", f.out, "output directory");
  sub->add_flag("--strict", f.strict, "fail when a verification fails");
}

RunConfig build_config(const Flags& f, const CLI::App& sub) {
  json j = json::object();
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw Error(ErrorKind::Io, "cannot open config '" + f.config + "'");
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw Error(ErrorKind::Config, "config '" + f.config + "' is not valid JSON: " + e.what());
    }
  }
  if (!j.is_object()) throw Error(ErrorKind::Config, "config must be a JSON object");
  if (const char* env = std::getenv("ROTDCF_DATA"); env && *env && !(j.contains("data") && j["data"].contains("source")))
    j["data"]["source"] = env;
  if (sub.count("--preset")) j["arch"] = f.preset;
  if (sub.count("--variant")) j["variant"] = f.variant;
  if (sub.count("--ntheta")) j["n_theta"] = f.ntheta;
  if (sub.count("--k")) j["K"] = f.k;
  if (sub.count("--kalpha")) j["K_alpha"] = f.kalpha;
  if (sub.count("--seed")) j["seed"] = f.seed;
  if (sub.count("--data")) j["data"]["source"] = f.data;
  if (sub.count("--out")) j["out"] = f.out;
  if (sub.count("--strict")) j["strict"] = f.strict;
  RunConfig c = RunConfig::from_json(j);
  // Flags that pick the network also pick the one under verification.
  if (c.K > 0) c.verify.K = c.K;
  if (c.K_alpha > 0) c.verify.K_alpha = c.K_alpha;
  c.verify.n_theta = c.n_theta;
  c.validate();
  return c;
}

fs::path prepare_out(const RunConfig& c) {
  const fs::path out(c.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create '" + c.out + "': " + ec.message());
  std::ofstream cfg(out / "config.json");
  cfg << c.canonical();
  if (!cfg) throw Error(ErrorKind::Io, "cannot write " + (out / "config.json").string());
  return out;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

int cmd_train(const RunConfig& c) {
  const ArchSpec arch = c.resolve_arch();
  const fs::path out = prepare_out(c);
  const Dataset tr = load_split(c.data, true, c.data.train_size, c.data.train_max_rot_deg, c.seed);
  const Dataset te = load_split(c.data, false, c.data.test_size, c.data.test_max_rot_deg, c.seed);
  std::cout << "data " << to_string(tr.provenance) << " train " << tr.size() << " test " << te.size() << "\n";
  Network net(arch);
  net.init(c.seed);
  const auto m = train(net, tr, &te, c.train, [](const EpochMetrics& e) {
    std::cout << "epoch " << e.epoch << " lr " << e.lr << " loss " << fixed(e.train_loss) << " train_acc "
              << fixed(e.train_acc) << " test_acc " << fixed(e.test_acc) << std::endl;
  });
  write_metrics_csv(m, (out / "metrics.csv").string());
  save_checkpoint(net, (out / "model.ckpt").string(),
                  {{"seed", std::to_string(c.seed)},
                   {"epochs_run", std::to_string(m.size())},
                   {"test_acc", fixed(m.back().test_acc)},
                   {"data", to_string(tr.provenance)}});
  std::cout << "wrote " << (out / "metrics.csv").string() << " and " << (out / "model.ckpt").string() << "\n";
  return kOk;
}

int cmd_eval(const RunConfig& c) {
  const fs::path out = prepare_out(c);
  const std::string path = c.checkpoint.empty() ? (out / "model.ckpt").string() : c.checkpoint;
  const auto ck = load_checkpoint(path);
  const Dataset te = load_split(c.data, false, c.data.test_size, c.data.test_max_rot_deg, c.seed);
  std::cout << "accuracy " << fixed(evaluate(ck.net, te)) << " on " << te.size() << " " << to_string(te.provenance)
            << " items\n";
  return kOk;
}

int cmd_verify(const RunConfig& c) {
  // The suites are written for the conv3 rotdcf family.
  const bool conv3 = c.arch == "conv3-rotdcf" || (c.arch == "conv3" && c.variant == "rotdcf");
  if (!conv3) throw Error(ErrorKind::Config, "verify runs on conv3-rotdcf (got '" + c.arch + "')");
  const fs::path out = prepare_out(c);
  std::vector<CheckRecord> all;
  auto run = [&](const char* name, std::vector<CheckRecord> (*suite)(const SuiteOptions&)) {
    auto r = suite(c.verify);
    int n = 0, failed = 0;
    for (const auto& x : r)
      if (counted(x)) ++n, failed += !x.pass;
    std::cout << (failed ? "FAIL " : "pass ") << name << " (" << n - failed << "/" << n << ")\n";
    all.insert(all.end(), r.begin(), r.end());
  };
  run("equivariance", equivariance_suite);
  run("alignment", alignment_suite);
  run("stability", stability_suite);
  run("gradients", gradient_suite);
  const json report = suite_report(all, c.verify);
  std::ofstream(out / "verify.json") << report.dump(2) << "\n";
  std::cout << "wrote " << (out / "verify.json").string() << "\n";
  return report["all_pass"].get<bool>() || !c.strict ? kOk : kUnverified;
}

int cmd_count(const RunConfig& c) {
  const auto dash = c.arch.find('-');
  const std::string family = c.arch.substr(0, dash);
  std::optional<Variant> v;
  if (dash != std::string::npos) v = parse_variant(c.arch.substr(dash + 1));
  if (!c.variant.empty() && c.variant != "all") v = parse_variant(c.variant);
  if (c.variant == "all") v.reset();
  const auto table = count_table(family, v);
  const fs::path out = prepare_out(c);
  print_cost_table(std::cout, table);
  std::ofstream csv(out / "cost.csv");
  write_cost_csv(csv, table);
  json j = json::array();
  for (const auto& r : table) j.push_back(to_json(r));
  std::ofstream(out / "cost.json") << j.dump(2) << "\n";
  return kOk;
}

int cmd_transfer(const RunConfig& c) {
  const fs::path out = prepare_out(c);
  const auto rows = run_transfer(c, [](const TransferRow& r) {
    std::cout << r.model << " seed " << r.seed << " train_acc " << fixed(r.train_acc) << " upright " << fixed(r.upright_acc)
              << " rotated " << fixed(r.rotated_acc) << " (" << fixed(r.seconds, 1) << " s)" << std::endl;
  });
  write_transfer_csv(c, rows, (out / "transfer.csv").string());
  const auto gaps = transfer_gaps(c, rows);
  bool ok = true;
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    const bool pass = gaps[i] >= c.transfer.min_gap;
    ok = ok && pass;
    std::cout << (pass ? "pass" : "FAIL") << " seed " << c.transfer.seeds[i] << " gap " << fixed(100 * gaps[i], 1)
              << " points (need " << fixed(100 * c.transfer.min_gap, 1) << ")\n";
  }
  std::cout << "wrote " << (out / "transfer.csv").string() << "\n";
  return ok || !c.strict ? kOk : kUnverified;
}

int exit_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config: return kConfig;
    case ErrorKind::Io:
    case ErrorKind::Format: return kData;
    default: return kFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rotation-equivariant decomposed-filter networks"};
  app.require_subcommand(1);
  Flags flags;
  const std::vector<std::pair<const char*, const char*>> subs{
      {"train", "train a network; writes metrics.csv and model.ckpt"},
      {"eval", "accuracy of a checkpoint on the test split"},
      {"verify", "property suites; writes verify.json"},
      {"count", "parameter and FLOP table; writes cost.csv and cost.json"},
      {"transfer", "train upright, test rotated; writes transfer.csv"}};
  for (const auto& [name, help] : subs) {
    auto* s = app.add_subcommand(name, help);
    add_flags(s, flags);
    if (std::string(name) == "eval") s->add_option("--checkpoint", flags.checkpoint, "checkpoint (default <out>/model.ckpt)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return kUsage;
  }
  const CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  try {
    RunConfig c = build_config(flags, *sub);
    if (!flags.checkpoint.empty()) c.checkpoint = flags.checkpoint;
    if (name == "train") return cmd_train(c);
    if (name == "eval") return cmd_eval(c);
    if (name == "verify") return cmd_verify(c);
    if (name == "count") return cmd_count(c);
    return cmd_transfer(c);
  } catch (const Error& e) {
    std::cerr << json{{"error", to_string(e.kind())}, {"message", e.what()}, {"command", name}}.dump() << "\n";
    return exit_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "internal"}, {"message", e.what()}, {"command", name}}.dump() << "\n";
    return kFailure;
  }
}
