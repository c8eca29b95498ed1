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

// fbi: black-box classifier fingerprinting from the command line.
//
// Exit codes: 0 success, 2 configuration or parse error, 3 protocol failure
// or exhausted budget, 4 degenerate evidence.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fbi/fbi.hpp"
#include "json.hpp"

namespace {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitProtocol = 3;
constexpr int kExitDegenerate = 4;

int exit_code(const fbi::Error& e) {
  switch (e.category()) {
    case fbi::Error::Category::kConfig: return kExitConfig;
    case fbi::Error::Category::kProtocol: return kExitProtocol;
    case fbi::Error::Category::kDegenerate: return kExitDegenerate;
  }
  return kExitConfig;
}

// Writes to `path`, or stdout when the path is empty or "-".
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  auto out = fbi::open_output(path);
  out << text;
  if (!out) throw fbi::ConfigError("cannot write '" + path + "'");
}

void emit_json(const std::string& path, const ordered_json& doc) { emit(path, doc.dump(2) + "\n"); }

struct TableArgs {
  std::string table;
  std::string ground_truth;

  void add(CLI::App* cmd) {
    cmd->add_option("--table", table, "Prediction table (.csv or .json)")->required();
    cmd->add_option("--ground-truth", ground_truth, "Ground-truth CSV (input,label)");
  }

  fbi::PredictionTable load() const {
    fbi::LoadOptions opt;
    if (!ground_truth.empty()) opt.ground_truth = ground_truth;
    return fbi::load_table(table, opt);
  }
};

// "replay:ID" replays a model of the table; "replay:ID@PATH" replays a model
// of another table over the same inputs.
struct BlackboxSpec {
  std::string model;
  std::optional<std::string> source;
};

BlackboxSpec parse_blackbox(const std::string& s) {
  constexpr std::string_view kPrefix = "replay:";
  if (s.rfind(kPrefix, 0) != 0 || s.size() == kPrefix.size()) {
    throw fbi::ConfigError("black-box must be 'replay:MODEL' or 'replay:MODEL@TABLE', got '" + s + "'");
  }
  std::string rest = s.substr(kPrefix.size());
  BlackboxSpec b;
  if (auto at = rest.find('@'); at != std::string::npos) {
    b.model = rest.substr(0, at);
    b.source = rest.substr(at + 1);
  } else {
    b.model = rest;
  }
  if (b.model.empty()) throw fbi::ConfigError("black-box model id is empty");
  return b;
}

// Holds whichever replay oracle the black-box spec names.
class Blackbox {
 public:
  Blackbox(const fbi::PredictionTable& table, const BlackboxSpec& spec) {
    if (spec.source) {
      source_ = fbi::load_table(*spec.source);
      foreign_.emplace(table, *source_, source_->model(spec.model));
    } else {
      local_.emplace(table, table.model(spec.model));
    }
  }

  fbi::TopKOutput query(std::size_t input) { return local_ ? local_->query(input) : foreign_->query(input); }

 private:
  std::optional<fbi::PredictionTable> source_;
  std::optional<fbi::ReplayOracle> local_;
  std::optional<fbi::ForeignReplayOracle> foreign_;
};

ordered_json labels_json(fbi::TopKView v) { return ordered_json(std::vector<fbi::Label>(v.begin(), v.end())); }

ordered_json transcript_json(const fbi::PredictionTable& table, const fbi::CandidateState& state,
                             bool identification) {
  ordered_json steps = ordered_json::array();
  for (const auto& s : state.transcript) {
    ordered_json j;
    j["input"] = table.input_id(s.input);
    j["output"] = labels_json(s.output);
    j["score"] = s.score;
    if (identification) {
      j["remaining_models"] = s.remaining_a;
      j["remaining_families"] = s.remaining_b;
    } else {
      j["remaining_family"] = s.remaining_a;
      j["remaining_outside"] = s.remaining_b;
    }
    steps.push_back(std::move(j));
  }
  return steps;
}

ordered_json ids_json(const fbi::PredictionTable& table, const std::vector<std::size_t>& models) {
  ordered_json a = ordered_json::array();
  for (std::size_t m : models) a.push_back(table.model_id(m));
  return a;
}

std::size_t family_index(const fbi::FamilyPartition& partition, const std::string& id) {
  auto f = partition.find(id);
  if (!f) throw fbi::ConfigError("unknown family '" + id + "'");
  return *f;
}

// Open-world calibration record, written by `calibrate` and read back by the
// detect and identify commands.
struct Calibration {
  std::string task = "detect";
  double tau = 0.0;
  double alpha = 0.05;
  std::size_t L = 100;
  fbi::SelectionStrategy strategy = fbi::SelectionStrategy::kEntropy;
  fbi::DelegateOption delegate = fbi::DelegateOption::kClose;
  double entropy_fraction = 0.2;
  std::uint64_t seed = 1;
  std::size_t negatives = 0;
  double empirical_fpr = 0.0;

  ordered_json to_json() const {
    ordered_json j;
    j["task"] = task;
    j["tau"] = tau;
    j["alpha"] = alpha;
    j["L"] = L;
    j["strategy"] = std::string(fbi::to_string(strategy));
    j["delegate"] = std::string(fbi::to_string(delegate));
    j["entropy_fraction"] = entropy_fraction;
    j["seed"] = seed;
    j["negatives"] = negatives;
    j["empirical_fpr"] = empirical_fpr;
    return j;
  }

  static Calibration load(const std::string& path) {
    auto in = fbi::open_input(path);
    ordered_json j;
    try {
      j = ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw fbi::ParseError("calibration '" + path + "': " + e.what());
    }
    Calibration c;
    try {
      c.task = j.at("task").get<std::string>();
      c.tau = j.at("tau").get<double>();
      c.alpha = j.at("alpha").get<double>();
      c.L = j.at("L").get<std::size_t>();
      c.strategy = fbi::parse_strategy(j.at("strategy").get<std::string>());
      c.delegate = fbi::parse_delegate_option(j.at("delegate").get<std::string>());
      c.entropy_fraction = j.at("entropy_fraction").get<double>();
      c.seed = j.at("seed").get<std::uint64_t>();
      c.negatives = j.at("negatives").get<std::size_t>();
      c.empirical_fpr = j.at("empirical_fpr").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw fbi::ParseError("calibration '" + path + "': " + e.what());
    }
    return c;
  }
};

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct SimulateCmd {
  std::string spec, out, ground_truth, manifest, partitions, probes;

  int run(std::optional<std::uint64_t> seed) const {
    fbi::Config cfg = fbi::Config::load(spec);
    cfg.check_keys(fbi::protocol::ensemble_keys());
    fbi::sim::EnsembleSpec es = fbi::protocol::ensemble_spec_from_config(cfg);
    es.seed = fbi::resolve_seed(seed, es.seed);
    const fbi::sim::Ensemble e = fbi::sim::gen_ensemble(es);
    const auto format = fbi::format_from_path(out);
    fbi::save_table(e.table, out, format);
    if (format == fbi::TableFormat::kCsv) {
      std::string gt = ground_truth;
      if (gt.empty()) gt = (fs::path(out).parent_path() / (fs::path(out).stem().string() + "_truth.csv")).string();
      auto g = fbi::open_output(gt);
      fbi::write_ground_truth_csv(e.table, g);
    }
    if (!manifest.empty()) {
      auto m = fbi::open_output(manifest);
      fbi::sim::write_manifest(e, m);
    }
    if (!partitions.empty()) {
      fs::create_directories(partitions);
      for (auto flavor : {fbi::FamilyFlavor::kVanillaSpan, fbi::FamilyFlavor::kVariationSpan,
                          fbi::FamilyFlavor::kSingleton}) {
        auto p = fbi::open_output(fs::path(partitions) / (std::string(fbi::to_string(flavor)) + ".csv"));
        fbi::write_partition_csv(e.partition(flavor), e.table.models(), p);
      }
    }
    if (!probes.empty()) {
      if (!e.probes) throw fbi::ConfigError("--probes needs probes_per_procedure > 0 in the spec");
      fbi::save_table(e.probes->table, probes, fbi::format_from_path(probes));
    }
    std::cerr << "simulated " << e.table.num_models() << " models (" << e.dropped.size() << " dropped) on "
              << e.table.num_inputs() << " inputs, seed " << es.seed << "\n";
    return kExitOk;
  }
};

struct IngestCheckCmd {
  TableArgs table;
  std::vector<std::string> partitions;
  std::int64_t num_classes = 0;
  std::string out;

  int run() const {
    fbi::LoadOptions opt;
    if (!table.ground_truth.empty()) opt.ground_truth = table.ground_truth;
    if (num_classes > 0) opt.num_classes = static_cast<fbi::Label>(num_classes);
    const fbi::PredictionTable t = fbi::load_table(table.table, opt);
    std::size_t annotated = 0;
    for (std::size_t i = 0; i < t.num_inputs(); ++i) annotated += t.ground_truth(i).has_value();
    ordered_json j;
    j["models"] = t.num_models();
    j["inputs"] = t.num_inputs();
    j["k"] = t.k();
    j["max_label"] = t.max_label();
    j["annotated_inputs"] = annotated;
    ordered_json parts = ordered_json::array();
    for (const auto& p : partitions) {
      const fbi::FamilyPartition fp = fbi::load_partition(p, t);
      parts.push_back({{"path", p}, {"families", fp.size()}, {"covers_all_models", fp.covers_all_models()}});
    }
    j["partitions"] = std::move(parts);
    j["status"] = "ok";
    emit_json(out, j);
    return kExitOk;
  }
};

struct DistanceMatrixCmd {
  TableArgs table;
  std::size_t L = 0;
  std::string strategy = "all";
  std::string out;

  int run(std::optional<std::uint64_t> seed_flag) const {
    const fbi::PredictionTable t = table.load();
    const auto s = fbi::parse_strategy(strategy);
    if (s == fbi::SelectionStrategy::kSplit5050 || s == fbi::SelectionStrategy::kSplit3070) {
      throw fbi::ConfigError("distance-matrix supports the all and entropy strategies");
    }
    const std::uint64_t seed = fbi::resolve_seed(seed_flag, 1);
    std::vector<std::size_t> inputs;
    if (L == 0) {
      for (std::size_t i = 0; i < t.num_inputs(); ++i) inputs.push_back(i);
    } else {
      std::vector<std::size_t> known(t.num_models());
      for (std::size_t m = 0; m < known.size(); ++m) known[m] = m;
      inputs = fbi::select_inputs(t, s, L, std::nullopt, known, seed).inputs;
    }
    const std::size_t n = t.num_models();
    std::vector<fbi::SurjectedSequence> seqs(n);
    fbi::parallel_for(n, [&](std::size_t m) { seqs[m] = fbi::surject_model(t, m, inputs); }, 1);
    std::vector<double> d(n * n, 0.0);
    fbi::parallel_for(n, [&](std::size_t a) {
      for (std::size_t b = a; b < n; ++b) d[a * n + b] = fbi::model_distance(seqs[a], seqs[b]).distance;
    }, 1);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < a; ++b) d[a * n + b] = d[b * n + a];
    std::ostringstream csv;
    csv << "model";
    for (std::size_t m = 0; m < n; ++m) csv << ',' << t.model_id(m);
    csv << '\n';
    for (std::size_t a = 0; a < n; ++a) {
      csv << t.model_id(a);
      for (std::size_t b = 0; b < n; ++b) csv << ',' << fbi::protocol::format_value(d[a * n + b]);
      csv << '\n';
    }
    emit(out, csv.str());
    return kExitOk;
  }
};

struct GreedyArgs {
  std::string rule = "expectation";
  std::optional<std::size_t> budget;
  std::optional<std::uint64_t> tie_seed;

  void add(CLI::App* cmd) {
    cmd->add_option("--rule", rule, "Score rule: expectation or worst-case");
    cmd->add_option("--budget", budget, "Maximum number of queries");
    cmd->add_option("--tie-seed", tie_seed, "Break score ties at random with this seed");
  }

  fbi::GreedyOptions options() const {
    return fbi::GreedyOptions{fbi::parse_score_rule(rule), budget, tie_seed};
  }
};

struct DetectWgCmd {
  TableArgs table;
  std::string partition, family, blackbox, out;
  GreedyArgs greedy;

  int run() const {
    const fbi::PredictionTable t = table.load();
    const fbi::FamilyPartition p = fbi::load_partition(partition, t);
    const std::size_t f = family_index(p, family);
    Blackbox oracle(t, parse_blackbox(blackbox));
    const auto r = fbi::detect(t, p[f].members, oracle, greedy.options());
    ordered_json j;
    j["task"] = "detect";
    j["family"] = family;
    j["blackbox"] = blackbox;
    j["rule"] = greedy.rule;
    j["verdict"] = std::string(fbi::to_string(r.verdict));
    j["queries_used"] = r.queries_used;
    j["transcript"] = transcript_json(t, r.final_state, false);
    j["remaining_family"] = ids_json(t, r.final_state.remaining_family);
    j["remaining_outside"] = ids_json(t, r.final_state.remaining_outside);
    emit_json(out, j);
    return r.verdict == fbi::Verdict::kFailure ? kExitProtocol : kExitOk;
  }
};

struct IdentifyWgCmd {
  TableArgs table;
  std::string partition, blackbox, out;
  GreedyArgs greedy;

  int run() const {
    const fbi::PredictionTable t = table.load();
    const fbi::FamilyPartition p = fbi::load_partition(partition, t);
    Blackbox oracle(t, parse_blackbox(blackbox));
    const auto r = fbi::identify(t, p, oracle, greedy.options());
    ordered_json j;
    j["task"] = "identify";
    j["blackbox"] = blackbox;
    j["rule"] = greedy.rule;
    j["family"] = r.family ? ordered_json(p[*r.family].id) : ordered_json();
    j["verdict"] = r.family ? "identified" : "failure";
    j["queries_used"] = r.queries_used;
    j["transcript"] = transcript_json(t, r.final_state, true);
    j["remaining_models"] = ids_json(t, r.final_state.remaining_all);
    emit_json(out, j);
    return r.family ? kExitOk : kExitProtocol;
  }
};

struct OpenWorldArgs {
  std::string partition;
  std::string flavor = "vanilla";

  void add(CLI::App* cmd) {
    cmd->add_option("--partition", partition, "Family partition CSV")->required();
    cmd->add_option("--flavor", flavor, "Partition flavor: vanilla, variation or singleton");
  }

  fbi::FamilyPartition load(const fbi::PredictionTable& t) const {
    return fbi::load_partition(partition, t, fbi::parse_family_flavor(flavor));
  }
};

std::vector<fbi::protocol::FamilyDelegates> delegates_for(const fbi::PredictionTable& t,
                                                          const fbi::FamilyPartition& p,
                                                          const Calibration& c) {
  return fbi::protocol::prepare_delegates(t, p, c.delegate, 0, c.seed);
}

struct CalibrateCmd {
  TableArgs table;
  OpenWorldArgs families;
  std::string task = "detect";
  std::string strategy = "entropy";
  std::size_t L = 100;
  double alpha = 0.05;
  std::string delegate = "close";
  double entropy_fraction = 0.2;
  std::string out;

  int run(std::optional<std::uint64_t> seed_flag) const {
    const fbi::PredictionTable t = table.load();
    const fbi::FamilyPartition p = families.load(t);
    Calibration c;
    c.task = task;
    c.alpha = alpha;
    c.L = L;
    c.strategy = fbi::parse_strategy(strategy);
    c.delegate = fbi::parse_delegate_option(delegate);
    c.entropy_fraction = entropy_fraction;
    c.seed = fbi::resolve_seed(seed_flag, 1);
    if (!(alpha > 0.0 && alpha < 1.0)) throw fbi::ConfigError("alpha must be in (0, 1)");
    const auto delegates = delegates_for(t, p, c);
    fbi::CalibratedTest test;
    if (task == "detect") {
      std::vector<std::size_t> anchors;
      for (const auto& d : delegates) anchors.push_back(d.anchor);
      const fbi::QuerySampler sampler(t, fbi::protocol::partition_anchors(p), entropy_fraction, anchors);
      test = fbi::protocol::detection_trial(t, p, delegates, sampler, c.strategy, L, alpha, c.seed).test;
    } else if (task == "identify") {
      if (p.size() < 3) throw fbi::ConfigError("identification calibration needs at least three families");
      // Each family in turn plays the unknown one; its members are negatives.
      std::vector<double> negatives;
      for (std::size_t h = 0; h < p.size(); ++h) {
        std::vector<std::size_t> known, hidden{h};
        for (std::size_t f = 0; f < p.size(); ++f) {
          if (f != h) known.push_back(f);
        }
        const auto cases = fbi::protocol::family_identification_trial(
            t, p, delegates, known, hidden, c.strategy, L, entropy_fraction, fbi::mix_seed(c.seed, p[h].id));
        for (const auto& fc : cases) {
          if (!fc.positive) negatives.push_back(fc.distance);
        }
      }
      test = fbi::calibrate_threshold(negatives, alpha, L, c.strategy);
    } else {
      throw fbi::ConfigError("calibration task must be detect or identify, got '" + task + "'");
    }
    c.tau = test.tau;
    c.negatives = test.negatives_used;
    c.empirical_fpr = test.empirical_fpr;
    emit_json(out, c.to_json());
    return kExitOk;
  }
};

ordered_json delegate_report_json(const fbi::PredictionTable& t, const std::vector<std::size_t>& delegates,
                                  const fbi::CompoundReport& r) {
  ordered_json a = ordered_json::array();
  for (std::size_t j = 0; j < delegates.size(); ++j) {
    a.push_back({{"model", t.model_id(delegates[j])},
                 {"distance", r.per_delegate[j].distance},
                 {"degenerate", r.per_delegate[j].degenerate}});
  }
  return a;
}

struct DetectOwCmd {
  TableArgs table;
  OpenWorldArgs families;
  std::string family, blackbox, calibration, out;

  int run(std::optional<std::uint64_t> seed_flag) const {
    const fbi::PredictionTable t = table.load();
    const fbi::FamilyPartition p = families.load(t);
    const Calibration c = Calibration::load(calibration);
    if (c.task != "detect") throw fbi::ConfigError("calibration was made for '" + c.task + "', not detect");
    const std::size_t f = family_index(p, family);
    const auto delegates = delegates_for(t, p, c);
    const std::uint64_t seed = fbi::resolve_seed(seed_flag, c.seed);
    const std::size_t anchor = delegates[f].anchor;
    const std::vector<std::size_t> anchors{anchor};
    const fbi::QuerySampler sampler(t, fbi::protocol::partition_anchors(p), c.entropy_fraction, anchors);
    const auto inputs = sampler.sample(c.strategy, c.L, anchor, fbi::mix_seed(seed, p[f].id));
    Blackbox oracle(t, parse_blackbox(blackbox));
    const fbi::SurjectedSequence b = fbi::query_sequence(t, oracle, inputs);
    fbi::CalibratedTest test;
    test.tau = c.tau;
    test.alpha = c.alpha;
    test.L = c.L;
    test.strategy = c.strategy;
    const auto v = fbi::detect_variant(b, fbi::protocol::delegate_sequences(t, delegates[f], inputs), test);
    ordered_json j;
    j["task"] = "detect-open-world";
    j["family"] = family;
    j["blackbox"] = blackbox;
    j["verdict"] = v.positive ? "positive" : "negative";
    j["distance"] = v.report.distance;
    j["tau"] = c.tau;
    j["L"] = c.L;
    j["strategy"] = std::string(fbi::to_string(c.strategy));
    j["seed"] = seed;
    j["delegates"] = delegate_report_json(t, delegates[f].delegates, v.report);
    emit_json(out, j);
    return kExitOk;
  }
};

struct IdentifyOwCmd {
  TableArgs table;
  OpenWorldArgs families;
  std::string blackbox, calibration, anchor, out;
  std::size_t L = 100;
  std::string strategy = "entropy";
  std::string delegate = "median";
  double entropy_fraction = 0.2;

  int run(std::optional<std::uint64_t> seed_flag) const {
    const fbi::PredictionTable t = table.load();
    const fbi::FamilyPartition p = families.load(t);
    Blackbox oracle(t, parse_blackbox(blackbox));
    ordered_json j;
    j["blackbox"] = blackbox;
    if (anchor.empty()) {
      if (calibration.empty()) throw fbi::ConfigError("family identification needs --calibration");
      const Calibration c = Calibration::load(calibration);
      if (c.task != "identify") throw fbi::ConfigError("calibration was made for '" + c.task + "', not identify");
      const std::uint64_t seed = fbi::resolve_seed(seed_flag, c.seed);
      const auto delegates = delegates_for(t, p, c);
      const fbi::QuerySampler sampler(t, fbi::protocol::partition_anchors(p), c.entropy_fraction);
      const auto inputs = sampler.sample(c.strategy, c.L, std::nullopt, seed);
      std::vector<fbi::KnownFamily> known;
      for (std::size_t f = 0; f < p.size(); ++f) {
        known.push_back({p[f].id, fbi::protocol::delegate_sequences(t, delegates[f], inputs)});
      }
      fbi::CalibratedTest test;
      test.tau = c.tau;
      const auto v = fbi::identify_family(fbi::query_sequence(t, oracle, inputs), known, test);
      j["task"] = "identify-family";
      j["verdict"] = v.abstained() ? "abstain" : "identified";
      j["family"] = v.family ? ordered_json(p[*v.family].id) : ordered_json();
      j["closest"] = p[v.best].id;
      j["margin"] = v.margin;
      j["tau"] = c.tau;
      j["L"] = c.L;
      j["seed"] = seed;
      ordered_json d = ordered_json::object();
      for (std::size_t f = 0; f < p.size(); ++f) d[p[f].id] = v.distances[f];
      j["distances"] = std::move(d);
    } else {
      const std::uint64_t seed = fbi::resolve_seed(seed_flag, 1);
      const std::size_t a = t.model(anchor);
      const auto option = fbi::parse_delegate_option(delegate);
      const auto delegates = fbi::protocol::prepare_delegates(t, p, option, 0, seed);
      std::vector<std::size_t> group;
      for (std::size_t f = 0; f < p.size(); ++f) {
        const auto& members = p[f].members;
        if (delegates[f].anchor == a && std::find(members.begin(), members.end(), a) == members.end()) {
          group.push_back(f);
        }
      }
      if (group.empty()) throw fbi::ConfigError("no variation family is anchored on '" + anchor + "'");
      const std::vector<std::size_t> anchors{a};
      const fbi::QuerySampler sampler(t, fbi::protocol::partition_anchors(p), entropy_fraction, anchors);
      const auto inputs = sampler.sample(fbi::parse_strategy(strategy), L, a, seed);
      std::vector<fbi::KnownFamily> known;
      for (std::size_t f : group) known.push_back({p[f].id, fbi::protocol::delegate_sequences(t, delegates[f], inputs)});
      const fbi::SurjectedSequence b = fbi::query_sequence(t, oracle, inputs);
      bool degenerate = false;
      const auto d = fbi::detail::family_distances(b, known, degenerate);
      if (degenerate) throw fbi::DegenerateEvidence("every variation distance is degenerate");
      const std::size_t best = fbi::identify_variation(b, known);
      j["task"] = "identify-variation";
      j["anchor"] = anchor;
      j["verdict"] = "identified";
      j["family"] = known[best].id;
      j["delegate"] = std::string(fbi::to_string(option));
      j["L"] = L;
      j["seed"] = seed;
      ordered_json dist = ordered_json::object();
      for (std::size_t g = 0; g < known.size(); ++g) dist[known[g].id] = d[g];
      j["distances"] = std::move(dist);
    }
    emit_json(out, j);
    return kExitOk;
  }
};

struct ProtocolCmd {
  std::string config, out;

  int run(std::optional<std::uint64_t> seed_flag) const {
    const fbi::Config cfg = fbi::Config::load(config);
    fbi::protocol::ProtocolConfig pc = fbi::protocol::protocol_config_from(cfg);
    pc.seed = fbi::resolve_seed(seed_flag, pc.seed);
    fbi::protocol::Dataset data;
    if (auto table_path = cfg.find("table")) {
      fbi::LoadOptions opt;
      if (auto gt = cfg.find("ground_truth")) opt.ground_truth = *gt;
      data.table = fbi::load_table(*table_path, opt);
      if (auto p = cfg.find("partition")) {
        data.vanilla_span = fbi::load_partition(*p, data.table, fbi::FamilyFlavor::kVanillaSpan);
      }
      if (auto p = cfg.find("variation_partition")) {
        data.variation_span = fbi::load_partition(*p, data.table, fbi::FamilyFlavor::kVariationSpan);
      }
    } else {
      const auto spec = fbi::protocol::ensemble_spec_from_config(cfg, "sim.");
      data = fbi::protocol::dataset_from_ensemble(fbi::sim::gen_ensemble(spec));
    }
    const fbi::protocol::Report report = fbi::protocol::run_protocol(data, pc);
    std::ostringstream csv;
    report.write_csv(csv);
    emit(out, csv.str());
    return kExitOk;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Black-box classifier fingerprinting: detection and identification from top-k outputs."};
  app.require_subcommand(1);
  unsigned threads = 0;
  std::optional<std::uint64_t> seed;
  app.add_option("--threads", threads, "Worker threads (0 = all cores)");
  app.add_option("--seed", seed, "Seed; falls back to FBI_SEED, then the config");

  SimulateCmd simulate;
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic ensemble of model families");
  sim->add_option("--spec", simulate.spec, "Ensemble config (key = value)")->required();
  sim->add_option("--out", simulate.out, "Prediction table to write (.csv or .json)")->required();
  sim->add_option("--ground-truth", simulate.ground_truth, "Ground-truth CSV (default: <out>_truth.csv)");
  sim->add_option("--manifest", simulate.manifest, "Truth manifest JSON");
  sim->add_option("--partitions", simulate.partitions, "Directory for vanilla/variation/singleton partitions");
  sim->add_option("--probes", simulate.probes, "Table of unseen probe variants");

  IngestCheckCmd ingest;
  auto* ing = app.add_subcommand("ingest-check", "Validate a prediction table and partitions");
  ingest.table.add(ing);
  ing->add_option("--partition", ingest.partitions, "Partition CSV (repeatable)");
  ing->add_option("--num-classes", ingest.num_classes, "Reject labels >= this value");
  ing->add_option("--out", ingest.out, "Summary JSON (default: stdout)");

  DistanceMatrixCmd matrix;
  auto* dm = app.add_subcommand("distance-matrix", "Pairwise model distances");
  matrix.table.add(dm);
  dm->add_option("--L", matrix.L, "Number of queries (0 = every input)");
  dm->add_option("--strategy", matrix.strategy, "Input selection: all or entropy");
  dm->add_option("--out", matrix.out, "Matrix CSV (default: stdout)");

  DetectWgCmd detect_wg;
  auto* dwg = app.add_subcommand("detect-wg", "Walled-garden detection of one family");
  dwg->alias("detect");
  detect_wg.table.add(dwg);
  dwg->add_option("--partition", detect_wg.partition, "Family partition CSV")->required();
  dwg->add_option("--family", detect_wg.family, "Family under test")->required();
  dwg->add_option("--blackbox", detect_wg.blackbox, "replay:MODEL or replay:MODEL@TABLE")->required();
  dwg->add_option("--out", detect_wg.out, "Verdict JSON (default: stdout)");
  detect_wg.greedy.add(dwg);

  IdentifyWgCmd identify_wg;
  auto* iwg = app.add_subcommand("identify-wg", "Walled-garden identification of the family");
  identify_wg.table.add(iwg);
  iwg->add_option("--partition", identify_wg.partition, "Family partition CSV")->required();
  iwg->add_option("--blackbox", identify_wg.blackbox, "replay:MODEL or replay:MODEL@TABLE")->required();
  iwg->add_option("--out", identify_wg.out, "Verdict JSON (default: stdout)");
  identify_wg.greedy.add(iwg);

  CalibrateCmd calibrate;
  auto* cal = app.add_subcommand("calibrate", "Open-world threshold at a target false positive rate");
  calibrate.table.add(cal);
  calibrate.families.add(cal);
  cal->add_option("--task", calibrate.task, "detect or identify");
  cal->add_option("--strategy", calibrate.strategy, "all, 50/50, 30/70 or entropy");
  cal->add_option("--L", calibrate.L, "Number of queries");
  cal->add_option("--alpha", calibrate.alpha, "Target false positive rate");
  cal->add_option("--delegate", calibrate.delegate, "close, median, far or close+median");
  cal->add_option("--entropy-fraction", calibrate.entropy_fraction, "Entropy pool size as a share of inputs");
  cal->add_option("--out", calibrate.out, "Calibration JSON (default: stdout)");

  DetectOwCmd detect_ow;
  auto* dow = app.add_subcommand("detect-ow", "Open-world detection against one family");
  detect_ow.table.add(dow);
  detect_ow.families.add(dow);
  dow->add_option("--family", detect_ow.family, "Family under test")->required();
  dow->add_option("--blackbox", detect_ow.blackbox, "replay:MODEL or replay:MODEL@TABLE")->required();
  dow->add_option("--calibration", detect_ow.calibration, "Calibration JSON from `calibrate`")->required();
  dow->add_option("--out", detect_ow.out, "Verdict JSON (default: stdout)");

  IdentifyOwCmd identify_ow;
  auto* iow = app.add_subcommand("identify-ow", "Open-world identification of the family or variation");
  identify_ow.table.add(iow);
  identify_ow.families.add(iow);
  iow->add_option("--blackbox", identify_ow.blackbox, "replay:MODEL or replay:MODEL@TABLE")->required();
  iow->add_option("--calibration", identify_ow.calibration, "Calibration JSON (family stage)");
  iow->add_option("--anchor", identify_ow.anchor, "Vanilla model; selects the variation stage");
  iow->add_option("--L", identify_ow.L, "Number of queries (variation stage)");
  iow->add_option("--strategy", identify_ow.strategy, "Input selection (variation stage)");
  iow->add_option("--delegate", identify_ow.delegate, "Delegate option (variation stage)");
  iow->add_option("--entropy-fraction", identify_ow.entropy_fraction, "Entropy pool share (variation stage)");
  iow->add_option("--out", identify_ow.out, "Verdict JSON (default: stdout)");

  ProtocolCmd protocol;
  auto* pro = app.add_subcommand("protocol", "Seeded evaluation sweep; writes a report CSV");
  pro->add_option("--config", protocol.config, "Protocol config (key = value)")->required();
  pro->add_option("--out", protocol.out, "Report CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    fbi::set_max_threads(threads);
    if (*sim) return simulate.run(seed);
    if (*ing) return ingest.run();
    if (*dm) return matrix.run(seed);
    if (*dwg) return detect_wg.run();
    if (*iwg) return identify_wg.run();
    if (*cal) return calibrate.run(seed);
    if (*dow) return detect_ow.run(seed);
    if (*iow) return identify_ow.run(seed);
    if (*pro) return protocol.run(seed);
  } catch (const fbi::BudgetExhausted& e) {
    std::cerr << "fbi: " << e.what() << "\n";
    return kExitProtocol;
  } catch (const fbi::Error& e) {
    std::cerr << "fbi: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "fbi: " << e.what() << "\n";
    return 1;
  }
  return kExitOk;
}
