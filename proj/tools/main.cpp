#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>

#include "plmgnn/binary_io.hpp"
#include "plmgnn/datasets.hpp"
#include "plmgnn/error.hpp"
#include "plmgnn/eval.hpp"
#include "plmgnn/experiment.hpp"
#include "plmgnn/obfuscate.hpp"
#include "plmgnn/preprocess.hpp"
#include "plmgnn/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace plmgnn;

namespace {

constexpr const char* kSamplesFile = "samples.pgsa";

int default_workers() {
  if (const char* env = std::getenv("PLMGNN_WORKERS")) {
    try {
      return std::max(1, std::stoi(env));
    } catch (const std::exception&) {
      throw Error(ErrorCode::invalid_argument, "PLMGNN_WORKERS must be a positive integer");
    }
  }
  return 1;
}

void write_text(const fs::path& p, const std::string& text) { write_file(p.string(), text); }

json read_json(const fs::path& p) {
  try {
    return json::parse(read_file(p.string()));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::format, p.string() + ": " + e.what());
  }
}

// ---- preprocess

struct PreprocessArgs {
  std::string task = "devign";
  std::string data;
  std::string ood;
  std::string out;
  std::string pe = "laplacian";
  int k = 32;
  std::string cache;
  int workers = 0;
  std::uint64_t split_seed = kDefaultSplitSeed;
  std::string split_dir;
  std::string code_field = "func";
  std::string label_field = "target";
  bool lenient = false;
  bool all_pairs = false;
  bool named_only = false;
};

int cmd_preprocess(const PreprocessArgs& a) {
  const auto task = parse_task(a.task);
  std::vector<Sample> samples;
  std::vector<std::string> skipped;
  DevignOptions dev;
  dev.code_field = a.code_field;
  dev.label_field = a.label_field;
  dev.split_seed = a.split_seed;
  dev.split_dir = a.split_dir;
  dev.lenient = a.lenient;
  if (task == Task::java250)
    samples = load_java250(a.data, a.split_seed);
  else
    samples = load_devign(a.data, dev, &skipped);
  if (!a.ood.empty()) {
    DevignOptions ood = dev;
    ood.split_dir.clear();
    auto extra = load_devign(a.ood, ood, &skipped);
    for (auto& s : extra) {
      s.sample_id += "@ood";
      s.split = Split::test_ood;
      samples.push_back(std::move(s));
    }
  }
  for (const auto& s : skipped) std::cerr << "skipped: " << s << "\n";

  PreprocessOptions opts;
  opts.pe_kind = parse_pe_kind(a.pe);
  opts.k = a.k;
  opts.cache_path = a.cache;
  opts.workers = a.workers > 0 ? a.workers : default_workers();
  opts.parse.siblings = a.all_pairs ? SiblingMode::all_pairs : SiblingMode::consecutive;
  opts.parse.named_only = a.named_only;
  auto res = preprocess(samples, opts);

  fs::create_directories(a.out);
  save_samples((fs::path(a.out) / kSamplesFile).string(), res.samples);
  write_text(fs::path(a.out) / "splits.json", split_manifest_json(samples, a.split_seed));
  const auto timing = res.timing.to_json();
  write_text(fs::path(a.out) / "timing.json", timing);
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
  for (const auto& e : res.errors) std::cerr << "error: " << e << "\n";
  std::cout << timing << "\n";
  return res.errors.empty() ? 0 : 1;
}

// ---- train

struct SpecArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string task;
  std::string family;
  std::string backbone;
  std::string cache;
  std::string seeds;
  int epochs = -1;
};

ExperimentSpec build_spec(const SpecArgs& a) {
  std::string text = a.config.empty() ? std::string() : read_file(a.config);
  std::optional<Task> task;
  if (!a.task.empty()) task = parse_task(a.task);
  auto spec = spec_from_flat_config(text, task);
  for (const auto& kv : a.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::invalid_argument, "--set expects key=value, got " + kv);
    apply_setting(spec, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!a.family.empty()) spec.family = parse_family(a.family);
  if (!a.backbone.empty()) spec.model.backbone = parse_backbone(a.backbone);
  if (!a.cache.empty()) spec.cache_path = a.cache;
  if (!a.seeds.empty()) apply_setting(spec, "seeds", a.seeds);
  if (a.epochs >= 0) spec.protocol.epochs = a.epochs;
  return spec;
}

struct TrainArgs {
  SpecArgs spec;
  std::string data;
  std::string out;
  bool print_config = false;
};

std::string seed_dir(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

int cmd_train(const TrainArgs& a) {
  const auto spec = build_spec(a.spec);
  if (a.print_config) {
    std::cout << render_flat_config(spec);
    return 0;
  }
  spec.validate();  // before touching any data
  if (a.data.empty() || a.out.empty()) throw Error(ErrorCode::invalid_argument, "--data and --out are required");

  const auto samples_path = fs::path(a.data) / kSamplesFile;
  if (!fs::exists(samples_path)) throw Error(ErrorCode::io, "missing preprocessed archive " + samples_path.string());
  const auto data = load_samples(samples_path.string());
  check_features(spec, data);
  const auto model_cfg = resolve_model(spec, data);
  const auto train = split_examples(spec, data, Split::train);
  const auto val = split_examples(spec, data, Split::val);

  fs::create_directories(a.out);
  ordered_json manifest;
  manifest["spec"] = json::parse(spec.to_json());
  manifest["model"] = json::parse(model_cfg.to_json());
  manifest["data"] = fs::absolute(a.data).string();
  write_text(fs::path(a.out) / "manifest.json", manifest.dump(2));

  ordered_json runs = json::array();
  std::vector<double> best_values;
  for (auto seed : spec.protocol.seeds) {
    auto res = train_model(model_cfg, spec.protocol, train, val, seed);
    const auto dir = fs::path(a.out) / seed_dir(seed);
    fs::create_directories(dir);
    res.best.save((dir / "checkpoint.pgck").string());
    write_text(dir / "history.jsonl", history_jsonl(res.history, false));
    std::string timing;
    for (const auto& h : res.history)
      timing += json{{"epoch", h.epoch}, {"split", h.split}, {"wall_time", h.wall_time}}.dump() + "\n";
    write_text(dir / "timing.jsonl", timing);
    runs.push_back({{"seed", seed}, {"best_epoch", res.best_epoch}, {"best_value", res.best_value}});
    best_values.push_back(res.best_value);
    std::cerr << "seed " << seed << ": best " << spec.protocol.selection_metric << " " << res.best_value
              << " at epoch " << res.best_epoch << "\n";
  }
  const auto ms = summarize(best_values);
  ordered_json summary;
  summary["selection_metric"] = spec.protocol.selection_metric;
  summary["runs"] = runs;
  summary["best_value"] = {{"mean", ms.mean}, {"std", ms.std ? json(*ms.std) : json(nullptr)}};
  write_text(fs::path(a.out) / "summary.json", summary.dump(2));
  std::cout << summary.dump(2) << "\n";
  return 0;
}

// ---- eval / bench

struct Run {
  ExperimentSpec spec;
  std::string data_dir;
  std::vector<ProcessedSample> data;
};

Run load_run(const std::string& run_dir, const std::string& data_override) {
  const auto manifest = read_json(fs::path(run_dir) / "manifest.json");
  Run r;
  r.spec = ExperimentSpec::from_json(manifest.at("spec").dump());
  r.data_dir = data_override.empty() ? manifest.at("data").get<std::string>() : data_override;
  const auto samples_path = fs::path(r.data_dir) / kSamplesFile;
  if (!fs::exists(samples_path)) throw Error(ErrorCode::io, "missing preprocessed archive " + samples_path.string());
  r.data = load_samples(samples_path.string());
  return r;
}

struct EvalArgs {
  std::string run;
  std::string data;
  int batch_size = 64;
};

int cmd_eval(const EvalArgs& a) {
  const auto run = load_run(a.run, a.data);
  std::map<Split, std::vector<GraphExample>> splits;
  for (auto sp : {Split::val, Split::test, Split::test_ood}) splits[sp] = split_examples(run.spec, run.data, sp);
  if (splits[Split::test].empty()) throw Error(ErrorCode::empty_split, "no test samples in " + run.data_dir);

  std::vector<SeedEvaluation> evals;
  for (auto seed : run.spec.protocol.seeds) {
    const auto ck = nn::Checkpoint::load((fs::path(a.run) / seed_dir(seed) / "checkpoint.pgck").string());
    auto model = load_classifier(ck);
    evals.push_back(evaluate_model(*model, run.spec.task, splits, a.batch_size, seed));
  }
  write_text(fs::path(a.run) / "eval.json", evaluation_json(evals));
  for (const auto& e : evals)
    if (e.threshold) std::cout << "seed " << e.seed << ": tau* = " << e.threshold->tau << "\n";
  std::cout << evaluation_table(evals, run.spec.task);
  return 0;
}

struct BenchArgs {
  std::string run;
  std::string data;
  std::string split = "test";
  int batch_size = 64;
  std::int64_t seed = -1;
};

int cmd_bench(const BenchArgs& a) {
  const auto run = load_run(a.run, a.data);
  const auto seed = a.seed >= 0 ? static_cast<std::uint64_t>(a.seed) : run.spec.protocol.seeds.front();
  const auto examples = split_examples(run.spec, run.data, parse_split(a.split));
  double seconds = 0;
  if (examples.empty()) {
    std::cerr << "warning: split " << a.split << " is empty\n";
  } else {
    const auto ck = nn::Checkpoint::load((fs::path(a.run) / seed_dir(seed) / "checkpoint.pgck").string());
    auto model = load_classifier(ck);
    const auto t0 = std::chrono::steady_clock::now();
    predict(*model, examples, a.batch_size);
    seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  ordered_json out{{"backbone", to_string(run.spec.model.backbone)},
                   {"family", to_string(run.spec.family)},
                   {"split", a.split},
                   {"samples", examples.size()},
                   {"batch_size", a.batch_size},
                   {"seconds", seconds}};
  std::cout << out.dump() << "\n";
  return 0;
}

// ---- obfuscate

struct ObfuscateArgs {
  std::string in;
  std::string out;
  std::string file;
  std::string map;
  std::string language = "c";
  std::string code_field = "func";
  std::string id_field = "idx";
  std::string splits;
  std::string split = "test";
  bool rename_externals = false;
  bool lenient = false;
};

int cmd_obfuscate(const ObfuscateArgs& a) {
  const auto lang = parse_language(a.language);
  ObfuscateOptions opts;
  opts.rename_externals = a.rename_externals;
  if (!a.file.empty()) {
    auto r = obfuscate_function(read_file(a.file), lang, opts);
    std::cout << r.source;
    if (!a.map.empty()) write_text(a.map, r.map.to_json() + "\n");
    return 0;
  }
  if (a.in.empty() || a.out.empty()) throw Error(ErrorCode::invalid_argument, "need --file or both --in and --out");

  std::optional<std::set<std::string>> keep;
  if (!a.splits.empty()) {
    const auto manifest = read_json(a.splits);
    keep.emplace();
    for (const auto& id : manifest.at("splits").at(a.split)) keep->insert(id.get<std::string>());
  }
  std::ifstream in(a.in);
  if (!in) throw Error(ErrorCode::io, "cannot open " + a.in);
  std::string out_text, map_text;
  std::size_t line_no = 0, failures = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto rec = ordered_json::parse(line);
      std::string id = rec.contains(a.id_field)
                           ? (rec[a.id_field].is_string() ? rec[a.id_field].get<std::string>() : rec[a.id_field].dump())
                           : "line" + std::to_string(line_no);
      if (keep && !keep->count(id)) continue;
      auto r = obfuscate_function(rec.at(a.code_field).get<std::string>(), lang, opts);
      rec[a.code_field] = r.source;
      out_text += rec.dump() + "\n";
      map_text += ordered_json{{"id", id}, {"map", json::parse(r.map.to_json())}}.dump() + "\n";
    } catch (const std::exception& e) {
      const auto msg = a.in + " line " + std::to_string(line_no) + ": " + e.what();
      if (!a.lenient) throw Error(ErrorCode::parse_failure, msg);
      std::cerr << "skipped: " << msg << "\n";
      ++failures;
    }
  }
  write_text(a.out, out_text);
  if (!a.map.empty()) write_text(a.map, map_text);
  return failures == 0 ? 0 : 1;
}

// ---- anova

struct AnovaArgs {
  std::string grid;
  std::string root;
  std::string metric = "auprc";
  std::string split = "test";
};

double metric_of(const json& split, const std::string& metric) {
  if (metric == "auprc") return split.at("auprc").get<double>();
  if (metric == "accuracy") return split.at("accuracy").get<double>();
  if (metric == "macro_f1") return split.at("macro").at("f1").get<double>();
  if (metric == "pos_f1") return split.at("positive").at("f1").get<double>();
  throw Error(ErrorCode::invalid_argument, "unknown metric " + metric);
}

int cmd_anova(const AnovaArgs& a) {
  AnovaGrid grid;
  std::string name_a = "GNN", name_b = "PLM";
  std::vector<std::string> levels_a, levels_b;
  if (!a.grid.empty()) {
    const auto j = read_json(a.grid);
    name_a = j.value("factor_a", name_a);
    name_b = j.value("factor_b", name_b);
    grid = j.at("values").get<AnovaGrid>();
  } else {
    if (a.root.empty()) throw Error(ErrorCode::invalid_argument, "need --grid or --root");
    // cell (backbone, plm) -> per-seed metric values, discovered from run directories
    std::map<std::string, std::map<std::string, std::vector<double>>> cells;
    for (const auto& e : fs::directory_iterator(a.root)) {
      if (!fs::exists(e.path() / "manifest.json") || !fs::exists(e.path() / "eval.json")) continue;
      const auto spec = ExperimentSpec::from_json(read_json(e.path() / "manifest.json").at("spec").dump());
      auto& cell = cells[std::string(to_string(spec.model.backbone))][spec.plm];
      for (const auto& seed : read_json(e.path() / "eval.json")) cell.push_back(metric_of(seed.at("splits").at(a.split), a.metric));
    }
    std::set<std::string> plms;
    for (const auto& [gnn, row] : cells) {
      levels_a.push_back(gnn);
      for (const auto& [plm, v] : row) plms.insert(plm);
    }
    levels_b.assign(plms.begin(), plms.end());
    for (const auto& gnn : levels_a) {
      grid.emplace_back();
      for (const auto& plm : levels_b) {
        auto it = cells[gnn].find(plm);
        if (it == cells[gnn].end())
          throw Error(ErrorCode::unbalanced_design, "no runs for " + gnn + " x " + plm);
        grid.back().push_back(it->second);
      }
    }
  }
  const auto r = anova_two_way(grid, name_a, name_b);
  ordered_json out = json::array();
  std::printf("%-10s %12s %6s %12s %12s %12s %10s\n", "effect", "SS", "df", "MS", "F", "p", "eta2_p");
  for (const auto* e : {&r.a, &r.b, &r.ab}) {
    std::printf("%-10s %12.6g %6g %12.6g %12.6g %12.4g %10.4f\n", e->name.c_str(), e->ss, e->df, e->ms, e->f, e->p,
                e->partial_eta2);
    out.push_back({{"effect", e->name}, {"ss", e->ss}, {"df", e->df}, {"ms", e->ms}, {"f", e->f}, {"p", e->p},
                   {"partial_eta2", e->partial_eta2}});
  }
  std::printf("%-10s %12.6g %6g %12.6g\n", "residual", r.ss_residual, r.df_residual, r.ms_residual);
  if (!levels_a.empty()) {
    std::cerr << name_a << " levels:";
    for (const auto& l : levels_a) std::cerr << " " << l;
    std::cerr << "\n" << name_b << " levels:";
    for (const auto& l : levels_b) std::cerr << " " << l;
    std::cerr << "\n";
  }
  std::cout << out.dump() << "\n";
  return 0;
}

// ---- report

int cmd_report(const std::vector<std::string>& runs, const std::string& split) {
  std::cout << "| run | family | backbone | plm | metric | mean (std) |\n|---|---|---|---|---|---|\n";
  for (const auto& dir : runs) {
    const auto spec = ExperimentSpec::from_json(read_json(fs::path(dir) / "manifest.json").at("spec").dump());
    const auto evals = read_json(fs::path(dir) / "eval.json");
    std::vector<std::string> metrics{"macro_f1"};
    if (spec.task == Task::devign) metrics = {"auprc", "macro_f1", "pos_f1"};
    for (const auto& m : metrics) {
      std::vector<double> values;
      for (const auto& seed : evals)
        if (seed.at("splits").contains(split)) values.push_back(100.0 * metric_of(seed["splits"][split], m));
      if (values.empty()) continue;
      const auto ms = summarize(values);
      char cell[64];
      if (ms.std)
        std::snprintf(cell, sizeof cell, "%.2f (%.2f)", ms.mean, *ms.std);
      else
        std::snprintf(cell, sizeof cell, "%.2f", ms.mean);
      std::cout << "| " << fs::path(dir).filename().string() << " | " << to_string(spec.family) << " | "
                << to_string(spec.model.backbone) << " | " << spec.plm << " | " << m << " | " << cell << " |\n";
    }
  }
  return 0;
}

void add_spec_options(CLI::App* cmd, SpecArgs& s) {
  cmd->add_option("--config", s.config, "flat key=value configuration file");
  cmd->add_option("--set", s.overrides, "override one configuration key (key=value), repeatable");
  cmd->add_option("--task", s.task, "java250 | devign");
  cmd->add_option("--family", s.family, "gnn_only | hybrid | frozen_mlp");
  cmd->add_option("--backbone", s.backbone, "gcn | gat | tgnn");
  cmd->add_option("--cache", s.cache, "embedding cache used for hybrid / frozen_mlp");
  cmd->add_option("--seeds", s.seeds, "comma-separated seeds");
  cmd->add_option("--epochs", s.epochs, "training epochs");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"plmgnn: AST graphs with frozen code-model embeddings and GNN classifiers"};
  app.require_subcommand(1);

  PreprocessArgs pre;
  auto* p = app.add_subcommand("preprocess", "parse, build positional features and align cached embeddings");
  p->add_option("--task", pre.task, "java250 | devign")->capture_default_str();
  p->add_option("--data", pre.data, "java250 root directory or devign JSON-lines file")->required();
  p->add_option("--ood", pre.ood, "obfuscated JSON-lines file evaluated as test_ood");
  p->add_option("--out", pre.out, "output directory")->required();
  p->add_option("--pe", pre.pe, "laplacian | depth | degree | random_walk")->capture_default_str();
  p->add_option("-k,--pe-dim", pre.k, "positional encoding width")->capture_default_str();
  p->add_option("--cache", pre.cache, "embedding cache (.pgec)");
  p->add_option("--workers", pre.workers, "worker threads (default: PLMGNN_WORKERS or 1)");
  p->add_option("--split-seed", pre.split_seed)->capture_default_str();
  p->add_option("--split-dir", pre.split_dir, "devign split files train.txt / val.txt / test.txt");
  p->add_option("--code-field", pre.code_field)->capture_default_str();
  p->add_option("--label-field", pre.label_field)->capture_default_str();
  p->add_flag("--lenient", pre.lenient, "skip malformed records");
  p->add_flag("--all-pairs-siblings", pre.all_pairs, "connect all siblings instead of consecutive ones");
  p->add_flag("--named-only", pre.named_only, "drop anonymous syntax nodes");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train one model per seed");
  add_spec_options(t, tr.spec);
  t->add_option("--data", tr.data, "preprocess output directory");
  t->add_option("--out", tr.out, "run directory");
  t->add_flag("--print-config", tr.print_config, "print the resolved configuration with documented keys and exit");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "evaluate every seed of a run; calibrates tau* on validation for devign");
  e->add_option("--run", ev.run, "run directory")->required();
  e->add_option("--data", ev.data, "preprocess output directory (default: the one used for training)");
  e->add_option("--batch-size", ev.batch_size)->capture_default_str();

  BenchArgs be;
  auto* b = app.add_subcommand("bench", "time one inference pass over a split (features cached)");
  b->add_option("--run", be.run, "run directory")->required();
  b->add_option("--data", be.data, "preprocess output directory");
  b->add_option("--split", be.split)->capture_default_str();
  b->add_option("--batch-size", be.batch_size)->capture_default_str();
  b->add_option("--seed", be.seed, "checkpoint seed (default: first)");

  ObfuscateArgs ob;
  auto* o = app.add_subcommand("obfuscate", "rename user-defined identifiers to placeholders");
  o->add_option("--in", ob.in, "JSON-lines input");
  o->add_option("--out", ob.out, "JSON-lines output");
  o->add_option("--file", ob.file, "single source file; result goes to stdout");
  o->add_option("--map", ob.map, "write rename maps (JSON) here");
  o->add_option("--language", ob.language)->capture_default_str();
  o->add_option("--code-field", ob.code_field)->capture_default_str();
  o->add_option("--id-field", ob.id_field)->capture_default_str();
  o->add_option("--splits", ob.splits, "splits.json from preprocess; keep only --split");
  o->add_option("--split", ob.split)->capture_default_str();
  o->add_flag("--rename-externals", ob.rename_externals, "also rename identifiers declared outside the input");
  o->add_flag("--lenient", ob.lenient, "skip records that fail to parse");

  AnovaArgs an;
  auto* a = app.add_subcommand("anova", "two-way ANOVA over a GNN x PLM x seed grid");
  a->add_option("--grid", an.grid, "JSON {factor_a, factor_b, values[a][b][seed]}");
  a->add_option("--root", an.root, "directory of evaluated runs to collect the grid from");
  a->add_option("--metric", an.metric, "auprc | macro_f1 | pos_f1 | accuracy")->capture_default_str();
  a->add_option("--split", an.split)->capture_default_str();

  std::vector<std::string> report_runs;
  std::string report_split = "test";
  auto* r = app.add_subcommand("report", "mean (std) table rows from evaluated runs");
  r->add_option("runs", report_runs, "run directories")->required();
  r->add_option("--split", report_split)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*p) return cmd_preprocess(pre);
    if (*t) return cmd_train(tr);
    if (*e) return cmd_eval(ev);
    if (*b) return cmd_bench(be);
    if (*o) return cmd_obfuscate(ob);
    if (*a) return cmd_anova(an);
    if (*r) return cmd_report(report_runs, report_split);
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return is_numerical(err.code()) ? 2 : 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 1;
}
