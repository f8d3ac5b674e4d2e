// SPDX-License-Identifier: Apache-2.0
// Acceptance checks, one line per criterion:
//   rotdcf_acceptance [criterion ...]    (default: all of 1..7)
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <random>
#include <string>

#include "oracles.hpp"
#include "rotdcf/accounting.hpp"
#include "rotdcf/error.hpp"
#include "rotdcf/run_config.hpp"
#include "test_util.hpp"

using namespace rotdcf;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string sci(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.2e", v);
  return b;
}

std::string pct(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.3f", v);
  return b;
}

// Largest lhs over counted records of one check, filtered by a predicate.
double worst(const std::vector<CheckRecord>& rs, const std::string& check,
             const std::function<bool(const CheckRecord&)>& keep = {}) {
  double w = 0.0;
  for (const auto& r : rs)
    if (r.check == check && counted(r) && (!keep || keep(r))) w = std::max(w, r.lhs);
  return w;
}

std::string tally(const std::vector<CheckRecord>& rs) {
  int pass = 0, n = 0, skipped = 0;
  for (const auto& r : rs) {
    if (!counted(r)) {
      ++skipped;
      continue;
    }
    ++n;
    pass += r.pass;
  }
  return std::to_string(pass) + "/" + std::to_string(n) + " checks" +
         (skipped ? ", " + std::to_string(skipped) + " skipped (empty crop)" : "");
}

Outcome parameter_counts() {
  const std::vector<std::string> conv3{"2.570e5", "5.158e4", "3.104e4", "2.871e5", "1.026e5",
                                       "6.160e4", "6.419e4", "3.856e4", "1.610e4", "9.680e3"};
  const std::vector<std::string> vgg{"2.732e6", "1.593e6", "1.138e6"};
  int match = 0;
  std::string miss;
  auto cmp = [&](const std::vector<CostReport>& t, const std::vector<std::string>& want) {
    for (std::size_t i = 0; i < want.size(); ++i) {
      const std::string got = i < t.size() ? format_sig(static_cast<double>(t[i].total_params)) : "missing";
      if (got == want[i]) ++match;
      else miss += " " + (i < t.size() ? t[i].name : std::to_string(i)) + "=" + got;
    }
  };
  cmp(count_table("conv3"), conv3);
  cmp(count_table("vgg16"), vgg);
  return {match == 13, std::to_string(match) + "/13 table entries match" + miss};
}

Outcome oracle_equivalence() {
  std::mt19937_64 rng(2024);
  auto draw = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  int instances = 0, attempts = 0;
  double w = 0.0;
  while (instances < 24 && attempts < 1000) {
    ++attempts;
    const int N = draw(2, 9), L = 2 * draw(1, 3) + 1, K = draw(1, 8), Ka = draw(1, N);
    const int C = draw(1, 3), M1 = draw(1, 3), M2 = draw(1, 3), H = draw(L, 12), W = draw(L, 12);
    const std::string text = "ntheta=" + std::to_string(N) + " input(" + std::to_string(C) + "," + std::to_string(H) + "," +
                             std::to_string(W) + ") lift(" + std::to_string(L) + "," + std::to_string(M1) + "," +
                             std::to_string(K) + ") joint(" + std::to_string(L) + "," + std::to_string(M2) + "," +
                             std::to_string(K) + "," + std::to_string(Ka) + ")";
    std::optional<Network> net;
    try {
      net.emplace(ArchSpec::parse(text));
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Basis) continue;  // truncation not resolvable on this grid
      throw;
    }
    std::normal_distribution<double> n01;
    for (auto& p : net->params())
      for (double& v : p.value.values()) v = n01(rng);
    const auto x = test::random_tensor({2, static_cast<std::size_t>(C), static_cast<std::size_t>(H), static_cast<std::size_t>(W)},
                                       rng());
    const auto outs = net->forward_all(x, 2);
    const auto lift_ref =
        test::naive_conv(outs[0], net->coeffs(1), net->spatial_basis(1), build_angular_basis(1, std::max(2, N)));
    const auto joint_ref = test::naive_conv(outs[1], net->coeffs(2), net->spatial_basis(2), *net->angular_basis(2));
    w = std::max({w, test::rel_diff(outs[1], lift_ref), test::rel_diff(outs[2], joint_ref)});
    ++instances;
  }
  return {instances >= 20 && w <= 1e-10,
          std::to_string(instances) + " random lift+joint instances, max relative error " + sci(w) + " (<= 1e-10)"};
}

Outcome equivariance() {
  SuiteOptions o;
  const auto rs = equivariance_suite(o);
  const auto grid = [](const CheckRecord& r) { return r.params["grid_exact"].get<bool>(); };
  const auto interp = [&](const CheckRecord& r) { return !grid(r); };
  double control = 1e300;
  for (const auto& r : rs)
    if (r.check == "equivariance_control") control = std::min(control, r.lhs);
  return {all_pass(rs), "grid-exact max " + sci(worst(rs, "equivariance", grid)) + " (< 1e-3), interpolated max " +
                            sci(worst(rs, "equivariance", interp)) + " (< 5e-2), cnn control min " + pct(control) +
                            " (> 0.2); " + tally(rs)};
}

Outcome gradients() {
  SuiteOptions o;
  const auto rs = gradient_suite(o);
  return {all_pass(rs), "max relative error " + sci(worst(rs, "gradient")) + " (< 1e-4) over every layer type, linear variant " +
                            sci(worst(rs, "gradient_linear")) + "; " + tally(rs)};
}

Outcome stability() {
  SuiteOptions o;
  const auto rs = stability_suite(o);
  double ratio = 0.0;
  for (const auto& r : rs)
    if (r.check == "stability") ratio = std::max(ratio, r.lhs / r.rhs);
  return {all_pass(rs), "non-expansive worst " + sci(worst(rs, "nonexpansive")) + " (<= 1.05), filter bounds worst " +
                            sci(worst(rs, "filter_bounds")) + " x A_l (<= 1.05), stability bound worst lhs/rhs " + sci(ratio) +
                            "; " + tally(rs)};
}

Outcome learning() {
  RunConfig c;
  if (const char* env = std::getenv("ROTDCF_DATA"); env && *env) c.data.source = env;
  // 2,000 rotated training items, full-circle rotated test set.
  const Dataset tr = load_split(c.data, true, 2000, 360.0, 1);
  const Dataset te = load_split(c.data, false, 1000, 360.0, 1);
  Network net(c.resolve_arch());
  net.init(1);
  TrainConfig tc = c.train;
  tc.epochs = 30;
  tc.target_test_acc = 0.85;
  std::string detail;
  bool ok = true;
  try {
    const auto m = train(net, tr, &te, tc, [](const EpochMetrics& e) {
      std::fprintf(stderr, "  rotmnist epoch %d test_acc %.4f\n", e.epoch, e.test_acc);
    });
    const double acc = m.back().test_acc;
    ok = acc >= 0.85;
    detail = std::string(to_string(tr.provenance)) + " 2000 items: test accuracy " + pct(acc) + " after " +
             std::to_string(m.size()) + " epoch(s) (>= 0.85 within 30)";
  } catch (const Error& e) {
    return {false, std::string("training failed: ") + e.what()};
  }

  std::vector<TransferRow> rows;
  try {
    rows = run_transfer(c, [](const TransferRow& r) {
      std::fprintf(stderr, "  transfer %s seed %llu rotated %.4f upright %.4f (%.0f s)\n", r.model.c_str(),
                   static_cast<unsigned long long>(r.seed), r.rotated_acc, r.upright_acc, r.seconds);
    });
  } catch (const Error& e) {
    return {false, detail + "; transfer failed: " + e.what()};
  }
  const auto gaps = transfer_gaps(c, rows);
  int won = 0;
  detail += "; transfer gaps (rotdcf - cnn, +-60 deg)";
  for (double g : gaps) {
    won += g >= c.transfer.min_gap;
    char b[32];
    std::snprintf(b, sizeof b, " %+.1f", 100 * g);
    detail += b;
  }
  detail += " points, " + std::to_string(won) + "/" + std::to_string(gaps.size()) + " seeds >= 5";
  return {ok && won == static_cast<int>(gaps.size()), detail};
}

Outcome alignment() {
  SuiteOptions o;
  const auto rs = alignment_suite(o);
  const auto grid = [](const CheckRecord& r) { return r.params["grid_exact"].get<bool>(); };
  const auto interp = [&](const CheckRecord& r) { return !grid(r); };
  return {all_pass(rs), "aligned descriptors differ by at most " + sci(worst(rs, "alignment", grid)) +
                            " (grid-exact, < 1e-3) and " + sci(worst(rs, "alignment", interp)) +
                            " (interpolated, < 5e-2) for s = 0..7; " + tally(rs)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<const char*, Outcome (*)()>> criteria{
      {1, {"parameter counts", parameter_counts}}, {2, {"oracle equivalence", oracle_equivalence}},
      {3, {"equivariance", equivariance}},         {4, {"gradients", gradients}},
      {5, {"stability theory", stability}},        {6, {"desk-scale learning", learning}},
      {7, {"circular alignment", alignment}}};
  std::vector<int> which;
  for (int i = 1; i < argc; ++i) which.push_back(std::atoi(argv[i]));
  if (which.empty())
    for (const auto& [k, v] : criteria) which.push_back(k);
  bool all = true;
  for (int k : which) {
    const auto it = criteria.find(k);
    if (it == criteria.end()) {
      std::fprintf(stderr, "unknown criterion %d\n", k);
      return 2;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = it->second.second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d %s: %s [%.1f s] %s\n", k, it->second.first, o.pass ? "PASS" : "FAIL", s, o.detail.c_str());
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
