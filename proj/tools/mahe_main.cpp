// mahe: hierarchical interaction explanations for black-box predictors.
//
// Subcommands:
//   explain      one instance -> hierarchical explanation (JSON/TSV + vicinity CSV)
//   detect       one instance -> interaction ranking only (JSON)
//   contextfree  instance set + pattern -> polarity scan, optional model edit
//   bench        synthetic ground-truth benchmark (CSV rows + JSON summary)

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mahe/bench.hpp"
#include "mahe/common.hpp"
#include "mahe/contextfree.hpp"
#include "mahe/errors.hpp"
#include "mahe/hierarchy.hpp"
#include "mahe/instance.hpp"
#include "mahe/predictor.hpp"
#include "mahe/rng.hpp"
#include "mahe/sampler.hpp"
#include "mahe/synthfn.hpp"

namespace {

using namespace mahe;
namespace fs = std::filesystem;
using nlohmann::json;

struct CommonOpts {
  std::string predictor_spec;
  std::string head = "regression";
  bool raw_probabilities = false;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
};

struct PipelineOpts {
  std::string instance_spec;
  std::string instances_file;
  double sigma = 0.6;
  bool sigma_grid = false;
  std::string metric = "auto";
  Index n_samples = 1000;
  std::optional<Index> max_flips;
  Index levels_max = 10;
  double stop_improvement = 0.10;
  int stop_patience = 2;
  Index max_order = 0;
};

Head parse_head(const std::string& name) {
  if (name == "regression") return Head::regression;
  if (name == "probability") return Head::probability;
  throw ConfigError("head must be regression or probability, got " + name);
}

Predictor make_predictor(const CommonOpts& c) {
  Predictor p = parse_predictor(c.predictor_spec, parse_head(c.head));
  if (c.raw_probabilities) p.set_raw_probabilities(true);
  return p;
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir + ": " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
  if (!out) throw ConfigError("write failed for " + path);
}

// feature count when the predictor itself pins one down (builtin or network)
std::optional<Index> predictor_feature_count(const Predictor& p, const std::string& spec) {
  if (spec.rfind("builtin:", 0) == 0) return SyntheticFunction::by_id(spec.substr(8)).p;
  if (spec.rfind("network:", 0) == 0) return p.net().input_size();
  return std::nullopt;
}

Instance resolve_instance(const PipelineOpts& o, const Predictor& pred,
                          const std::string& predictor_spec) {
  if (!o.instance_spec.empty()) {
    if (o.instance_spec == "origin") {
      const auto p = predictor_feature_count(pred, predictor_spec);
      if (!p)
        throw ConfigError(
            "--instance origin needs a predictor with a known feature count; "
            "pass an instance file instead");
      Instance x;
      x.kind = Kind::continuous;
      x.values = Vector::Zero(*p);
      return x;
    }
    if (!o.instance_spec.empty() && o.instance_spec.front() == '{')
      return Instance::from_json(o.instance_spec);
    const auto all = load_instances(o.instance_spec);
    if (all.empty()) throw ConfigError("no instances in " + o.instance_spec);
    if (all.size() > 1)
      log(LogLevel::info, "instance file has multiple entries; explaining the first");
    return all.front();
  }
  if (!o.instances_file.empty()) {
    const auto all = load_instances(o.instances_file);
    if (all.empty()) throw ConfigError("no instances in " + o.instances_file);
    return all.front();
  }
  throw ConfigError("provide --instance or --instances-file");
}

SamplerConfig make_sampler_config(const PipelineOpts& o, const Instance& x, std::uint64_t seed) {
  SamplerConfig sc;
  sc.n = o.n_samples;
  sc.sigma = o.sigma;
  sc.metric = o.metric == "auto" ? default_metric(x.kind) : metric_from_name(o.metric);
  sc.seed = derive_seed(seed, seed_stream::sampler);
  sc.max_flips = o.max_flips;
  return sc;
}

StoppingRule make_stop(const PipelineOpts& o) {
  StoppingRule stop;
  stop.min_improvement = o.stop_improvement;
  stop.patience = o.stop_patience;
  stop.max_levels = o.levels_max;
  return stop;
}

HierarchyConfig make_hierarchy_config(const PipelineOpts& o, std::uint64_t seed) {
  HierarchyConfig hc;
  hc.max_order = o.max_order;
  hc.seed = seed;
  return hc;
}

json resolved_config(const CommonOpts& c, const PipelineOpts& o, const SamplerConfig& sc,
                     const StoppingRule& stop) {
  json cfg;
  cfg["predictor"] = c.predictor_spec;
  cfg["head"] = c.head;
  cfg["raw_probabilities"] = c.raw_probabilities;
  cfg["seed"] = c.seed;
  cfg["sigma"] = sc.sigma;
  cfg["n_samples"] = sc.n;
  cfg["metric"] = metric_name(sc.metric);
  cfg["kernel_sigma"] = sc.effective_kernel_sigma();
  cfg["levels_max"] = stop.max_levels;
  cfg["stop_improvement"] = stop.min_improvement;
  cfg["stop_patience"] = stop.patience;
  cfg["max_order"] = o.max_order;
  return cfg;
}

// mean pairwise distance of the reference set, the sweep's base scale
double reference_scale(const std::vector<Instance>& refs, Metric metric) {
  if (refs.size() < 2)
    throw ConfigError("--sigma-grid needs an --instances-file with at least 2 instances");
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < refs.size(); ++i)
    for (std::size_t j = i + 1; j < refs.size(); ++j) {
      total += distance(refs[i], refs[j], metric);
      ++pairs;
    }
  return total / static_cast<double>(pairs);
}

int cmd_explain(const CommonOpts& c, const PipelineOpts& o) {
  ensure_out_dir(c.out_dir);
  const Predictor pred = make_predictor(c);
  const Instance x = resolve_instance(o, pred, c.predictor_spec);
  const StoppingRule stop = make_stop(o);
  const HierarchyConfig hc = make_hierarchy_config(o, c.seed);

  std::vector<double> sigmas;
  double sigma_prime = 0.0;
  if (o.sigma_grid) {
    if (o.instances_file.empty())
      throw ConfigError("--sigma-grid needs --instances-file as the reference set");
    const auto refs = load_instances(o.instances_file);
    const Metric m = o.metric == "auto" ? default_metric(x.kind) : metric_from_name(o.metric);
    sigma_prime = reference_scale(refs, m);
    if (!(sigma_prime > 0.0))
      throw ConfigError("reference instances are all identical; sigma sweep is undefined");
    for (double f : {0.4, 0.6, 0.8, 1.0}) sigmas.push_back(f * sigma_prime);
  } else {
    sigmas.push_back(o.sigma);
  }

  json sweep = json::array();
  for (std::size_t run = 0; run < sigmas.size(); ++run) {
    PipelineOpts run_opts = o;
    run_opts.sigma = sigmas[run];
    const SamplerConfig sc = make_sampler_config(run_opts, x, c.seed);
    const json cfg = resolved_config(c, run_opts, sc, stop);
    const ExplainResult res = explain(x, pred, sc, stop, hc);

    json doc = json::parse(res.explanation.to_json());
    doc["config"] = cfg;
    doc["ranking"] = json::parse(res.ranking.to_json());
    doc["runtimes_s"] = {{"sampling_and_inference", res.timings.sampling_s},
                         {"detection", res.timings.detection_s},
                         {"linear_fit", res.timings.linear_s},
                         {"interaction_fits", res.timings.interaction_s}};
    doc["queries"] = pred.queries();

    const std::string tag = sigmas.size() > 1 ? "_sigma" + std::to_string(run) : "";
    const std::string base = c.out_dir + "/explanation" + tag;
    write_text(base + ".json", doc.dump(2) + "\n");
    write_text(base + ".tsv", "# " + cfg.dump() + "\n" + res.explanation.to_tsv());
    res.data.export_csv(c.out_dir + "/vicinity" + tag + ".csv", cfg.dump());
    res.data.export_meta_json(c.out_dir + "/vicinity" + tag + "_meta.json");

    if (sigmas.size() > 1) {
      json entry;
      entry["sigma"] = sigmas[run];
      entry["levels"] = res.explanation.L;
      entry["fit_at_L"] = res.explanation.per_level_fit.back();
      entry["artifact"] = "explanation" + tag + ".json";
      sweep.push_back(entry);
      std::cout << "sigma " << format_double(sigmas[run], 6) << ":\n";
    }
    std::cout << res.explanation.to_tsv();
  }

  if (sigmas.size() > 1) {
    std::size_t worst = 0;
    for (std::size_t i = 1; i < sweep.size(); ++i)
      if (sweep[i]["fit_at_L"].get<double>() > sweep[worst]["fit_at_L"].get<double>()) worst = i;
    json doc;
    doc["sigma_prime"] = sigma_prime;
    doc["runs"] = sweep;
    doc["worst_fit_sigma"] = sweep[worst]["sigma"];
    doc["seed"] = c.seed;
    write_text(c.out_dir + "/sigma_sweep.json", doc.dump(2) + "\n");
  }
  return 0;
}

int cmd_detect(const CommonOpts& c, const PipelineOpts& o) {
  ensure_out_dir(c.out_dir);
  const Predictor pred = make_predictor(c);
  const Instance x = resolve_instance(o, pred, c.predictor_spec);
  const SamplerConfig sc = make_sampler_config(o, x, c.seed);
  const LocalDataset ds = build_local_dataset(x, pred, sc);

  HierarchyConfig hc = make_hierarchy_config(o, c.seed);
  NetworkConfig nc;
  nc.layer_sizes.push_back(ds.p());
  for (Index h : hc.detector_hidden) nc.layer_sizes.push_back(h);
  nc.layer_sizes.push_back(1);
  nc.optimizer = Optimizer::adam;
  nc.restore_best = false;
  nc.l1_coeff = hc.detector_l1;
  nc.learning_rate = hc.detector_lr;
  nc.max_epochs = hc.detector_epochs;
  nc.patience = hc.detector_patience;
  nc.seed = derive_seed(hc.seed, seed_stream::detector_net);

  WeightedData tr{ds.rows(ds.train_idx), ds.take(ds.y, ds.train_idx),
                  ds.take(ds.w, ds.train_idx)};
  WeightedData val{ds.rows(ds.val_idx), ds.take(ds.y, ds.val_idx), ds.take(ds.w, ds.val_idx)};
  const Network net = train_standardized(nc, tr, val).first;
  const Index max_order = hc.max_order > 0 ? std::min(hc.max_order, ds.p()) : ds.p();
  const InteractionRanking ranking = detect(net, std::max<Index>(max_order, 2));

  json doc = json::parse(ranking.to_json());
  doc["config"] = resolved_config(c, o, sc, make_stop(o));
  write_text(c.out_dir + "/ranking.json", doc.dump(2) + "\n");
  for (const auto& cand : ranking.candidates) {
    std::cout << "[";
    for (std::size_t i = 0; i < cand.indices.size(); ++i)
      std::cout << (i ? "," : "") << cand.indices[i];
    std::cout << "]\t" << format_double(cand.strength, 9) << "\n";
  }
  return 0;
}

InteractionPattern parse_pattern(const std::string& positions, const std::string& tokens) {
  if (positions.empty() == tokens.empty())
    throw ConfigError("provide exactly one of --pattern or --pattern-tokens");
  InteractionPattern pat;
  std::stringstream ss(positions.empty() ? tokens : positions);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) throw ConfigError("empty entry in pattern");
    if (positions.empty()) {
      pat.tokens.push_back(item);
    } else {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v < 0) throw ConfigError("pattern positions must be nonnegative");
      pat.indices.push_back(static_cast<Index>(v));
    }
  }
  pat.kind = positions.empty() ? InteractionPattern::PatternKind::valued_ordered
                               : InteractionPattern::PatternKind::positional;
  pat.validate();
  return pat;
}

int cmd_contextfree(const CommonOpts& c, const PipelineOpts& o, const std::string& pattern_pos,
                    const std::string& pattern_tokens, bool do_edit, double edit_c,
                    int fine_tune_steps, const std::string& eval_file) {
  ensure_out_dir(c.out_dir);
  const Predictor pred = make_predictor(c);
  const InteractionPattern pattern = parse_pattern(pattern_pos, pattern_tokens);
  if (o.instances_file.empty()) throw ConfigError("contextfree needs --instances-file");
  const std::vector<Instance> instances = load_instances(o.instances_file);
  if (instances.size() < 2)
    throw ConfigError("contextfree needs at least 2 instances, got " +
                      std::to_string(instances.size()));
  if (do_edit && !pred.tunable())
    throw CapabilityError("--edit needs a tunable (network) predictor; rerun with --no-edit");

  ScanOptions opts;
  opts.sampler = make_sampler_config(o, instances.front(), c.seed);
  opts.stop = make_stop(o);
  opts.hierarchy = make_hierarchy_config(o, c.seed);

  json cfg = resolved_config(c, o, opts.sampler, opts.stop);
  cfg["pattern"] = pattern.describe();
  cfg["edit"] = do_edit;
  cfg["c"] = edit_c;
  cfg["fine_tune_steps"] = fine_tune_steps;

  if (!do_edit) {
    const ScanOutput scan = polarity_scan(pattern, instances, pred, opts);
    json doc;
    doc["config"] = cfg;
    doc["before"] = {{"pattern", scan.report.pattern.describe()},
                     {"n_matched", scan.report.n_matched},
                     {"n_detected", scan.report.n_detected},
                     {"fraction_positive", scan.report.fraction_positive},
                     {"fraction_negative", scan.report.fraction_negative},
                     {"mean_separation", scan.report.mean_separation},
                     {"mean_pairwise_distance", scan.report.mean_pairwise_distance},
                     {"separation_ok", scan.report.separation_ok},
                     {"errors", scan.report.errors}};
    write_text(c.out_dir + "/evidence.json", doc.dump(2) + "\n");
    std::cout << "matched " << scan.report.n_matched << ", detected " << scan.report.n_detected
              << ", positive fraction " << format_double(scan.report.fraction_positive, 6)
              << "\n";
    return 0;
  }

  // held-out rows for the task-metric delta
  const std::vector<Instance>& eval_set =
      eval_file.empty() ? instances : load_instances(eval_file);
  std::vector<const Instance*> usable;
  for (const auto& e : eval_set)
    if (e.size() == instances.front().size() && e.kind == instances.front().kind)
      usable.push_back(&e);
  if (usable.empty()) throw ConfigError("no evaluation instances match the scan instances' shape");
  Matrix eval_X(static_cast<Index>(usable.size()), instances.front().size());
  for (std::size_t i = 0; i < usable.size(); ++i) {
    const Instance& e = *usable[i];
    if (e.kind == Kind::token_sequence)
      eval_X.row(static_cast<Index>(i)).setOnes();
    else if (e.kind == Kind::mixed)
      eval_X.row(static_cast<Index>(i)) = mixed_representation(e, e.values, o.sigma).transpose();
    else
      eval_X.row(static_cast<Index>(i)) = e.values.transpose();
  }

  EditConfig ec;
  ec.c = edit_c;
  ec.fine_tune_steps = fine_tune_steps;
  ec.seed = derive_seed(c.seed, seed_stream::edit);
  ec.validate();

  const EvidenceResult ev = context_free_evidence(pattern, instances, pred, opts, ec, eval_X);
  json doc = json::parse(ev.to_json());
  doc["config"] = cfg;
  write_text(c.out_dir + "/evidence.json", doc.dump(2) + "\n");
  write_text(c.out_dir + "/evidence.csv", "# " + cfg.dump() + "\n" + ev.to_csv());
  std::cout << ev.to_csv();
  return 0;
}

int cmd_bench(const CommonOpts& c, const PipelineOpts& o, BenchConfig bc) {
  ensure_out_dir(c.out_dir);
  bc.sigma = o.sigma;
  bc.seed = c.seed;
  bc.sampler_template.n = o.n_samples;
  bc.stop = make_stop(o);
  bc.hierarchy.max_order = o.max_order;

  const std::vector<BenchResult> results = run_synthetic(bc);
  const std::string summary = bench_summary_json(bc, results);
  json cfg = json::parse(summary)["config"];
  bench_results_csv(results, c.out_dir + "/bench_results.csv", cfg.dump());
  write_text(c.out_dir + "/bench_summary.json", summary + "\n");
  std::cout << summary << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical interaction explanations for black-box predictors"};
  app.require_subcommand(1);

  CommonOpts common;
  PipelineOpts pipe;

  auto add_common = [&](CLI::App* cmd, bool needs_predictor) {
    if (needs_predictor)
      cmd->add_option("--predictor", common.predictor_spec,
                      "builtin:F1 | network:path.json | external:command")
          ->required();
    cmd->add_option("--head", common.head, "external predictor head: regression | probability");
    cmd->add_flag("--raw-probabilities", common.raw_probabilities,
                  "fit surrogates to raw probabilities instead of log-odds");
    cmd->add_option("--seed", common.seed, "master seed (required)")->required();
    cmd->add_option("--out", common.out_dir, "output directory (default .)");
    return cmd;
  };
  auto add_pipeline = [&](CLI::App* cmd) {
    cmd->add_option("--instance", pipe.instance_spec,
                    "instance JSON file, inline JSON, or 'origin'");
    cmd->add_option("--instances-file", pipe.instances_file,
                    "JSON-lines or JSON-array instance file");
    cmd->add_option("--sigma", pipe.sigma, "vicinity radius (default 0.6)");
    cmd->add_option("--metric", pipe.metric, "l2 | cosine | edit (default by instance kind)");
    cmd->add_option("--n-samples", pipe.n_samples, "vicinity samples (default 1000)");
    cmd->add_option("--max-flips", pipe.max_flips, "binary/token flip cap (default from sigma)");
    cmd->add_option("--levels-max", pipe.levels_max, "max interaction levels (default 10)");
    cmd->add_option("--stop-improvement", pipe.stop_improvement,
                    "min relative validation improvement (default 0.10)");
    cmd->add_option("--stop-patience", pipe.stop_patience,
                    "weak levels tolerated before stopping (default 2)");
    cmd->add_option("--max-order", pipe.max_order, "cap candidate order (default: all features)");
    return cmd;
  };

  CLI::App* explain_cmd =
      add_pipeline(add_common(app.add_subcommand("explain", "explain one instance"), true));
  explain_cmd->add_flag("--sigma-grid", pipe.sigma_grid,
                        "sweep sigma over {0.4,0.6,0.8,1.0} x mean pairwise reference distance");

  CLI::App* detect_cmd = add_pipeline(
      add_common(app.add_subcommand("detect", "rank interactions without fitting them"), true));

  CLI::App* cf_cmd = add_pipeline(add_common(
      app.add_subcommand("contextfree", "polarity scan and targeted model edit"), true));
  std::string pattern_pos, pattern_tokens, eval_file;
  bool do_edit = true;
  double edit_c = 3.0;
  int fine_tune_steps = 200;
  cf_cmd->add_option("--pattern", pattern_pos, "comma-separated feature positions, e.g. 0,1");
  cf_cmd->add_option("--pattern-tokens", pattern_tokens,
                     "comma-separated token pattern, e.g. not,bad");
  cf_cmd->add_flag("--edit,!--no-edit", do_edit, "edit the model at the strongest detection");
  cf_cmd->add_option("--c", edit_c, "negation magnitude (default 3.0)");
  cf_cmd->add_option("--fine-tune-steps", fine_tune_steps, "edit fine-tune steps (default 200)");
  cf_cmd->add_option("--eval-file", eval_file, "held-out instances for the task metric");

  CLI::App* bench_cmd = add_common(app.add_subcommand("bench", "synthetic benchmark"), false);
  BenchConfig bc;
  bench_cmd->add_option("--function", bc.function_id, "F1 | F2 | F3 | F4 (default F1)");
  bench_cmd->add_option("--trials", bc.trials, "base-model trials (default 10)");
  bench_cmd->add_option("--instances", bc.instances_per_trial,
                        "instances per trial (default 20)");
  bench_cmd->add_option("--probes", bc.probes, "interaction-fit probe points (default 1000)");
  bench_cmd->add_flag("--glm", bc.run_glm_baseline, "also fit the pairwise lasso baseline");
  bench_cmd->add_option("--jobs", bc.jobs, "worker threads across trials (default 1)");
  bench_cmd->add_option("--sigma", pipe.sigma, "vicinity radius (default 0.6)");
  bench_cmd->add_option("--n-samples", pipe.n_samples, "vicinity samples (default 1000)");
  bench_cmd->add_option("--levels-max", pipe.levels_max, "max interaction levels (default 10)");
  bench_cmd->add_option("--stop-improvement", pipe.stop_improvement,
                        "min relative validation improvement (default 0.10)");
  bench_cmd->add_option("--stop-patience", pipe.stop_patience,
                        "weak levels tolerated before stopping (default 2)");
  bench_cmd->add_option("--max-order", pipe.max_order,
                        "cap candidate order (default: all features)");

  try {
    app.parse(argc, argv);
    if (app.got_subcommand(explain_cmd)) return cmd_explain(common, pipe);
    if (app.got_subcommand(detect_cmd)) return cmd_detect(common, pipe);
    if (app.got_subcommand(cf_cmd))
      return cmd_contextfree(common, pipe, pattern_pos, pattern_tokens, do_edit, edit_c,
                             fine_tune_steps, eval_file);
    if (app.got_subcommand(bench_cmd)) return cmd_bench(common, pipe, bc);
    throw ConfigError("no subcommand selected");
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const PredictorError& e) {
    std::cerr << "predictor error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
