/* Copyright 2026 The fbi Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.
//
// Usage: acceptance PATH_TO_FBI_BINARY

#include <unistd.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fbi/fbi.hpp"

namespace {

namespace fs = std::filesystem;
using namespace fbi;  // NOLINT

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), format, args...);
  return buf;
}

double Mean(std::span<const double> v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

sim::EnsembleSpec StandardSpec() {
  std::ifstream in(std::string(FBI_DEMO_DIR) + "/standard.cfg");
  if (!in) throw ConfigError("cannot open standard.cfg");
  return protocol::ensemble_spec_from_config(Config::parse(in));
}

// ---------------------------------------------------------------------------
// Independent oracles
// ---------------------------------------------------------------------------

double XLog2X(double x) { return x > 0.0 ? x * std::log2(x) : 0.0; }

// I(Z;Y) of the 2x2 joint {{a, b}, {c, d}} as H(Z) + H(Y) - H(Z,Y).
double Mi2x2(double a, double b, double c, double d) {
  return -XLog2X(a + b) - XLog2X(c + d) - XLog2X(a + c) - XLog2X(b + d) + XLog2X(a) + XLog2X(b) + XLog2X(c) +
         XLog2X(d);
}

// 1 - max_a I / min H, maximizing over the feasible P(Z=0,Y=0) on a grid.
double GridBound(double acc_m, double acc_b, double step) {
  const double a_lo = std::max(0.0, 1.0 - acc_m - acc_b);
  const double a_hi = std::min(1.0 - acc_m, 1.0 - acc_b);
  const auto steps = static_cast<long>(std::ceil((a_hi - a_lo) / step));
  double best = 0.0;
  for (long s = 0; s <= steps; ++s) {
    const double a = std::min(a_hi, a_lo + step * static_cast<double>(s));
    best = std::max(best, Mi2x2(a, 1.0 - acc_b - a, 1.0 - acc_m - a, acc_m + acc_b - 1.0 + a));
  }
  const double h = std::min(-XLog2X(acc_m) - XLog2X(1 - acc_m), -XLog2X(acc_b) - XLog2X(1 - acc_b));
  return std::max(0.0, 1.0 - best / h);
}

// Families are tried in a random order until the black-box's own family,
// which is uniform, comes up.
double MonteCarloSequential(std::span<const double> pos, std::span<const double> neg, int trials, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> order(pos.size());
  double total = 0.0;
  for (int t = 0; t < trials; ++t) {
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    const std::size_t target = rng.below(pos.size());
    for (std::size_t j : order) {
      if (j == target) {
        total += pos[j];
        break;
      }
      total += neg[j];
    }
  }
  return total / trials;
}

bool SameEverywhere(const PredictionTable& t, std::size_t a, std::size_t b) {
  for (std::size_t x = 0; x < t.num_inputs(); ++x) {
    if (!t.same_output(a, b, x)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

Outcome DistanceExtremes() {
  Rng rng(101);
  std::size_t self_bad = 0, fact_bad = 0;
  const int cases = 500;
  for (int c = 0; c < cases; ++c) {
    const int k = 1 + static_cast<int>(rng.below(5));
    const std::size_t n = 2 + rng.below(400);
    std::vector<std::uint8_t> v(n);
    do {
      for (auto& x : v) x = static_cast<std::uint8_t>(rng.below(static_cast<std::uint64_t>(k) + 1));
    } while (std::all_of(v.begin(), v.end(), [&](auto x) { return x == v[0]; }));
    const auto z = make_sequence(v, k);
    if (model_distance(z, z).distance != 0.0) ++self_bad;

    // Joint counts n_z * n_y: an exact product of the marginals.
    std::vector<std::uint8_t> zs, ys;
    std::vector<std::size_t> cz(static_cast<std::size_t>(k) + 1), cy(static_cast<std::size_t>(k) + 1);
    for (auto& x : cz) x = rng.below(4);
    for (auto& x : cy) x = rng.below(4);
    cz[0] += 1;
    cz[1] += 1;
    cy[0] += 1;
    cy[static_cast<std::size_t>(k)] += 1;
    for (std::size_t a = 0; a < cz.size(); ++a)
      for (std::size_t b = 0; b < cy.size(); ++b)
        for (std::size_t r = 0; r < cz[a] * cy[b]; ++r) {
          zs.push_back(static_cast<std::uint8_t>(a));
          ys.push_back(static_cast<std::uint8_t>(b));
        }
    if (model_distance(make_sequence(zs, k), make_sequence(ys, k)).distance != 1.0) ++fact_bad;
  }
  return {self_bad == 0 && fact_bad == 0,
          Fmt("%d cases: self-distance != 0 in %zu, factorized != 1 in %zu", cases, self_bad, fact_bad)};
}

Outcome MiConsistency() {
  const std::size_t L = 10000;
  const auto u = sim::make_universe(L, 1000, 0.3, 31);
  sim::VanillaSpec vs;
  vs.id = "m";
  vs.accuracy = 0.8;
  vs.seed = 31;
  const auto parent = sim::gen_vanilla(vs, u);
  const auto marginal = sim::vanilla_marginal(vs.accuracy, 1, sim::MissProfile::kOmit, 0.5);
  sim::VariantSpec v;
  v.id = "m.v";
  v.parent = "m";
  v.channel = ChannelSpec::retain_marginal(1, 0.8, marginal);
  v.seed = 31;
  const auto child = sim::gen_variant(parent, nullptr, v, u);
  const auto zp = sim::surject_column(parent, u.ground_truth);
  const auto zc = sim::surject_column(child, u.ground_truth);
  const double mi = empirical_mi(joint_histogram(zc, zp));
  const double mi_true = channel_mi(v.channel, marginal);
  const double d = model_distance(zc, zp).distance;
  const double d_true = channel_distance(v.channel, marginal);
  return {std::abs(mi - mi_true) <= 0.05 && std::abs(d - d_true) <= 0.05,
          Fmt("MI %.4f vs %.4f bits, D_L %.4f vs %.4f", mi, mi_true, d, d_true)};
}

Outcome DistanceBound() {
  double worst_grid = 0.0;
  std::size_t pairs = 0;
  bool zero_on_diagonal = true;
  for (int i = 0; i <= 10; ++i)
    for (int j = 0; j <= 10; ++j) {
      const double a = 0.45 + 0.05 * i, b = 0.45 + 0.05 * j;
      if (i + j <= 2) continue;  // A + B > 1 requires i + j > 2
      const double bound = theory_lower_bound({a, b});
      worst_grid = std::max(worst_grid, std::abs(bound - GridBound(a, b, 1e-6)));
      ++pairs;
      if (i == j && bound != 0.0) zero_on_diagonal = false;
    }

  auto spec = StandardSpec();
  spec.top_k = 1;
  spec.num_inputs = 10000;
  const auto e = sim::gen_ensemble(spec);
  std::vector<std::size_t> everything(e.table.num_inputs());
  std::iota(everything.begin(), everything.end(), 0);
  std::size_t measured = 0, below = 0;
  double worst_gap = 1.0;
  for (std::size_t f = 0; f < e.vanilla_span.size(); ++f) {
    const auto& members = e.vanilla_span[f].members;
    for (std::size_t x = 0; x < members.size(); ++x)
      for (std::size_t y = x + 1; y < members.size(); ++y) {
        const double acc_x = sim::accuracy(e.table, members[x]);
        const double acc_y = sim::accuracy(e.table, members[y]);
        if (acc_x + acc_y <= 1.0) continue;
        const auto zs = surject_model(e.table, members[x], everything);
        const auto ys = surject_model(e.table, members[y], everything);
        const double gap = model_distance(zs, ys).distance - theory_lower_bound({acc_x, acc_y});
        worst_gap = std::min(worst_gap, gap);
        ++measured;
        below += gap < -0.05;
      }
  }
  return {worst_grid <= 1e-5 && zero_on_diagonal && measured > 0 && below == 0,
          Fmt("grid error %.2e over %zu pairs, zero at A=B: %s, %zu same-family pairs, min(D - bound) %.4f",
              worst_grid, pairs, zero_on_diagonal ? "yes" : "no", measured, worst_gap)};
}

Outcome SequentialQueries() {
  Rng rng(404);
  double worst = 0.0;
  for (int c = 0; c < 5; ++c) {
    const std::size_t n = 2 + rng.below(9);
    std::vector<double> pos(n), neg(n);
    for (auto& p : pos) p = 1.0 + 4.0 * rng.uniform();
    for (auto& q : neg) q = 0.5 + 4.0 * rng.uniform();
    const double exact = sequential_expected_queries(pos, neg);
    const double mc = MonteCarloSequential(pos, neg, 1000000, 500 + c);
    worst = std::max(worst, std::abs(mc - exact) / exact);
  }
  return {worst <= 0.005, Fmt("5 vectors, worst relative gap %.4f%%", 100.0 * worst)};
}

Outcome WalledGardenSoundness() {
  std::size_t runs = 0, wrong = 0, single_missed = 0, fail_mismatch = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(mix_seed(seed, "toy"));
    const std::size_t n_models = 2 + rng.below(5);
    const std::size_t n_inputs = 1 + rng.below(10);
    const int k = 1 + static_cast<int>(rng.below(2));
    std::vector<std::string> models, inputs;
    for (std::size_t m = 0; m < n_models; ++m) models.push_back("m" + std::to_string(m));
    for (std::size_t i = 0; i < n_inputs; ++i) inputs.push_back("x" + std::to_string(i));
    std::vector<Label> cells;
    for (std::size_t m = 0; m < n_models; ++m)
      for (std::size_t i = 0; i < n_inputs; ++i) {
        const Label first = static_cast<Label>(1 + rng.below(3));
        cells.push_back(first);
        if (k == 2) cells.push_back(static_cast<Label>(1 + (first + rng.below(2)) % 3));
      }
    const PredictionTable t(models, inputs, k, cells);

    std::vector<std::size_t> all(n_models);
    std::iota(all.begin(), all.end(), 0);
    rng.shuffle(all);
    std::vector<std::size_t> fam(all.begin(), all.begin() + static_cast<long>(1 + rng.below(n_models - 1)));
    std::sort(fam.begin(), fam.end());
    auto in_fam = [&](std::size_t m) { return std::binary_search(fam.begin(), fam.end(), m); };

    // Exhaustive search: an input whose family outputs all differ from every
    // outside output decides in one query.
    bool separator = false;
    for (std::size_t x = 0; x < n_inputs && !separator; ++x) {
      bool clean = true;
      for (std::size_t a : fam)
        for (std::size_t b = 0; b < n_models; ++b)
          if (!in_fam(b) && t.same_output(a, b, x)) clean = false;
      separator = clean;
    }
    for (std::size_t b = 0; b < n_models; ++b) {
      ReplayOracle bb(t, b);
      const auto r = detect(t, fam, bb);
      ++runs;
      if ((in_fam(b) && r.verdict == Verdict::kNegative) || (!in_fam(b) && r.verdict == Verdict::kPositive)) ++wrong;
      if (separator && (r.queries_used != 1 || r.verdict == Verdict::kFailure)) ++single_missed;
      bool twin = false;
      for (std::size_t o = 0; o < n_models; ++o) {
        if (in_fam(o) != in_fam(b) && SameEverywhere(t, b, o)) twin = true;
      }
      if ((r.verdict == Verdict::kFailure) != twin) ++fail_mismatch;
    }
  }
  return {wrong == 0 && single_missed == 0 && fail_mismatch == 0,
          Fmt("%zu detections on 200 tables: wrong %zu, separator missed %zu, failure/twin mismatch %zu", runs,
              wrong, single_missed, fail_mismatch)};
}

Outcome WalledGardenScale() {
  const auto e = sim::gen_ensemble(StandardSpec());
  bool pass = true;
  std::string detail;
  std::vector<double> mean_identify;
  for (int k : {1, 3, 5}) {
    const PredictionTable t = e.table.truncated(k);
    std::vector<std::size_t> success(e.vanilla_span.size()), within3(e.vanilla_span.size());
    parallel_for(e.vanilla_span.size(), [&](std::size_t f) {
      for (std::size_t b = 0; b < t.num_models(); ++b) {
        ReplayOracle bb(t, b);
        const auto r = detect(t, e.vanilla_span[f].members, bb);
        if (r.verdict == Verdict::kFailure) continue;
        ++success[f];
        within3[f] += r.queries_used <= 3;
      }
    }, 1);
    const double ok = static_cast<double>(std::accumulate(success.begin(), success.end(), std::size_t{0}));
    const double share = std::accumulate(within3.begin(), within3.end(), std::size_t{0}) / ok;
    std::vector<double> queries(t.num_models());
    parallel_for(t.num_models(), [&](std::size_t b) {
      ReplayOracle bb(t, b);
      queries[b] = static_cast<double>(identify(t, e.vanilla_span, bb).queries_used);
    }, 1);
    mean_identify.push_back(Mean(queries));
    pass = pass && share >= 0.95;
    detail += Fmt("k=%d: %.1f%% of %.0f within 3, identify %.2f; ", k, 100.0 * share, ok, mean_identify.back());
  }
  pass = pass && mean_identify[2] < mean_identify[0];
  return {pass, detail.substr(0, detail.size() - 2)};
}

// Calibrates on negatives pooled over 20 query draws, then scores every
// (family, outside model) pair once more, each pair on its own fresh draw.
Outcome Calibration() {
  auto spec = StandardSpec();
  spec.top_k = 1;
  const auto e = sim::gen_ensemble(spec);
  const auto& p = e.vanilla_span;
  const auto delegates = protocol::prepare_delegates(e.table, p, DelegateOption::kClose, 0, 1);
  std::vector<std::size_t> anchors;
  for (const auto& d : delegates) anchors.push_back(d.anchor);
  const QuerySampler sampler(e.table, protocol::partition_anchors(p), 0.2, anchors);
  const auto strategy = SelectionStrategy::kSplit3070;
  bool pass = true;
  std::string detail;
  for (std::size_t L : {20, 50, 100, 500}) {
    std::vector<double> calibration;
    for (std::size_t t = 0; t < 20; ++t) {
      const auto trial =
          protocol::detection_trial(e.table, p, delegates, sampler, strategy, L, 0.05, protocol::trial_seed(1, t));
      calibration.insert(calibration.end(), trial.negatives.begin(), trial.negatives.end());
    }
    const auto test = calibrate_threshold(calibration, 0.05, L, strategy);
    std::vector<double> fresh;
    for (const auto& d : delegates) {
      for (std::size_t m = 0; m < e.table.num_models(); ++m) {
        if (p.family_of(m) == d.family) continue;
        const auto inputs = sampler.sample(strategy, L, d.anchor, mix_seed(999, fresh.size()));
        const auto seqs = protocol::delegate_sequences(e.table, d, inputs);
        fresh.push_back(compound_distance(surject_model(e.table, m, inputs), seqs));
      }
    }
    const double n = static_cast<double>(fresh.size());
    const double fpr = false_positive_rate(test, fresh);
    const double limit = 0.05 + 3.0 * std::sqrt(0.05 * 0.95 / n);
    pass = pass && n >= 200 && fpr <= limit;
    detail += Fmt("L=%zu FPR %.3f on %.0f (limit %.3f); ", L, fpr, n, limit);
  }
  return {pass, detail.substr(0, detail.size() - 2)};
}

protocol::Dataset StandardDataset(int top_k) {
  auto spec = StandardSpec();
  spec.top_k = top_k;
  return protocol::dataset_from_ensemble(sim::gen_ensemble(spec));
}

Outcome TprShape() {
  protocol::ProtocolConfig cfg;
  cfg.L_grid = {20, 50, 100, 500};
  cfg.trials = 20;
  const auto r = protocol::run_protocol(StandardDataset(1), cfg);
  bool pass = true;
  double prev = -1.0;
  std::string detail = "TPR";
  for (std::size_t L : cfg.L_grid) {
    const double tpr = *r.aggregate("detect", "30/70", 1, L, "tpr_mean");
    pass = pass && tpr >= prev;
    prev = tpr;
    detail += Fmt(" L=%zu %.3f", L, tpr);
  }
  return {pass && prev >= 0.95, detail};
}

Outcome StrategyOrdering() {
  protocol::ProtocolConfig cfg;
  cfg.L_grid = {100};
  cfg.trials = 20;
  cfg.strategies = {SelectionStrategy::kAll, SelectionStrategy::kSplit3070, SelectionStrategy::kEntropy};
  const auto r = protocol::run_protocol(StandardDataset(1), cfg);
  const auto all = r.per_trial("detect", "all", 1, 100, "tpr");
  const auto split = r.per_trial("detect", "30/70", 1, 100, "tpr");
  const auto ent = r.per_trial("detect", "entropy", 1, 100, "tpr");
  // One-sided paired t-test at 5% with 19 degrees of freedom.
  const double t_crit = 1.729;
  auto not_worse = [&](std::span<const double> hi, std::span<const double> lo, double& mean, double& se) {
    std::vector<double> d(hi.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = hi[i] - lo[i];
    mean = Mean(d);
    se = protocol::sample_std(d) / std::sqrt(static_cast<double>(d.size()));
    return mean >= -t_crit * se;
  };
  double m1, s1, m2, s2;
  const bool a = not_worse(ent, split, m1, s1);
  const bool b = not_worse(split, all, m2, s2);
  return {all.size() == 20 && a && b,
          Fmt("TPR entropy %.3f, 30/70 %.3f, all %.3f; paired diffs %+.4f (se %.4f), %+.4f (se %.4f)", Mean(ent),
              Mean(split), Mean(all), m1, s1, m2, s2)};
}

Outcome CompoundBoost() {
  const std::size_t trials = 200, L = 500;
  std::vector<double> median_rate(trials), compound_rate(trials), cases(trials);
  for (std::size_t s = 0; s < trials; ++s) {
    auto spec = StandardSpec();
    spec.top_k = 1;
    spec.seed = 1000 + s;
    spec.probes_per_procedure = 10;
    const auto data = protocol::dataset_from_ensemble(sim::gen_ensemble(spec));
    protocol::ProtocolConfig cfg;
    cfg.tasks = {protocol::Task::kIdentifyVariation};
    cfg.L_grid = {L};
    cfg.trials = 1;
    cfg.seed = 1000 + s;
    cfg.delegate = DelegateOption::kMedian;
    median_rate[s] = *protocol::run_protocol(data, cfg).aggregate("identify-variation", "entropy", 1, L,
                                                                  "delegate=median");
    cfg.delegate = DelegateOption::kCloseMedian;
    const auto r = protocol::run_protocol(data, cfg);
    compound_rate[s] = *r.aggregate("identify-variation", "entropy", 1, L, "delegate=close+median");
    cases[s] = *r.aggregate("identify-variation", "entropy", 1, L, "cases");
  }
  const double med = Mean(median_rate), comp = Mean(compound_rate);
  return {comp >= med, Fmt("%zu ensembles, %.0f probes each: close+median %.4f, median %.4f", trials, Mean(cases),
                           comp, med)};
}

std::string Slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome Determinism(const std::string& binary) {
  const fs::path root = fs::temp_directory_path() / ("fbi_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const std::string demo = FBI_DEMO_DIR;
  auto run = [&](const fs::path& dir, const std::string& args) {
    const std::string cmd = "cd '" + dir.string() + "' && '" + binary + "' " + args + " > stdout.txt 2> stderr.txt";
    return std::system(cmd.c_str()) == 0;
  };
  const std::string sim_args = "simulate --spec " + demo + "/small.cfg --out t.csv --manifest manifest.json " +
                               "--partitions parts --probes probes.csv";
  // Each command writes to out.* in its own directory; both runs see the
  // same relative paths.
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"ingest-check", "ingest-check --table ../sim/t.csv --partition ../sim/parts/vanilla.csv "
                       "--partition ../sim/parts/variation.csv --out out.json"},
      {"distance-matrix", "distance-matrix --table ../sim/t.csv --L 200 --strategy entropy --out out.csv"},
      {"detect-wg", "detect-wg --table ../sim/t.csv --partition ../sim/parts/vanilla.csv --family m00 "
                    "--blackbox replay:m00.p1.v0 --out out.json"},
      {"identify-wg", "identify-wg --table ../sim/t.csv --partition ../sim/parts/vanilla.csv "
                      "--blackbox replay:m02.p0.probe0@../sim/probes.csv --out out.json"},
      {"calibrate", "calibrate --table ../sim/t.csv --partition ../sim/parts/vanilla.csv --L 100 "
                    "--out out.json"},
      {"calibrate-identify", "calibrate --table ../sim/t.csv --partition ../sim/parts/vanilla.csv --task identify "
                             "--L 100 --out out.json"},
      {"detect-ow", "detect-ow --table ../sim/t.csv --partition ../sim/parts/vanilla.csv --family m01 "
                    "--calibration ../calibrate/out.json --blackbox replay:m01.p0.probe0@../sim/probes.csv "
                    "--out out.json"},
      {"identify-ow", "identify-ow --table ../sim/t.csv --partition ../sim/parts/vanilla.csv "
                      "--calibration ../calibrate-identify/out.json "
                      "--blackbox replay:m01.p0.probe0@../sim/probes.csv --out out.json"},
      {"identify-ow-variation", "identify-ow --table ../sim/t.csv --partition ../sim/parts/variation.csv "
                                "--anchor m01 --L 200 --blackbox replay:m01.p0.probe0@../sim/probes.csv "
                                "--out out.json"},
      {"protocol", "protocol --config " + demo + "/protocol.cfg --out out.csv"},
  };
  std::vector<std::string> differing, failed;
  std::size_t files = 0;
  std::vector<fs::path> runs{root / "run1", root / "run2"};
  for (const auto& r : runs) {
    fs::create_directories(r / "sim");
    if (!run(r / "sim", sim_args)) failed.push_back("simulate");
    for (const auto& [name, args] : commands) {
      fs::create_directories(r / name);
      if (!run(r / name, args)) failed.push_back(name);
    }
  }
  for (const auto& entry : fs::recursive_directory_iterator(runs[0])) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), runs[0]);
    ++files;
    if (Slurp(entry.path()) != Slurp(runs[1] / rel)) differing.push_back(rel.string());
  }
  fs::remove_all(root);
  std::string detail = Fmt("%zu commands, %zu files compared", commands.size() + 1, files);
  for (const auto& f : failed) detail += "; failed: " + f;
  for (const auto& d : differing) detail += "; differs: " + d;
  return {failed.empty() && differing.empty() && files > commands.size(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: acceptance PATH_TO_FBI_BINARY\n";
    return 2;
  }
  const std::string binary = fs::absolute(argv[1]).string();
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"distance extremes", DistanceExtremes},
      {"mutual information consistency", MiConsistency},
      {"top-1 distance lower bound", DistanceBound},
      {"sequential identification cost", SequentialQueries},
      {"walled-garden soundness", WalledGardenSoundness},
      {"walled-garden query counts", WalledGardenScale},
      {"open-world calibration", Calibration},
      {"open-world TPR shape", TprShape},
      {"selection-strategy ordering", StrategyOrdering},
      {"compound delegate direction", CompoundBoost},
      {"determinism", [&] { return Determinism(binary); }},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first
              << "): " << o.detail << Fmt(" [%.1fs]", secs) << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
