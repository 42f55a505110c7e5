// prefroute: route preference instances between human and LM annotators.
//
// Subcommands cover the whole pipeline: tag, sample, ingest-perf, fit, route,
// gain, agree, binarize, oracle-eval. One master --seed fans out to
// per-stage child seeds so reruns are byte-identical.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "prefroute/analysis.hpp"
#include "prefroute/fingerprint.hpp"
#include "prefroute/oracle.hpp"
#include "prefroute/tagger_client.hpp"

namespace fs = std::filesystem;
using namespace prefroute;

namespace {

struct GlobalOptions {
  std::uint64_t seed = 0;
  int threads = 0;
  bool pretty = false;
  bool force = false;
};

void check_fingerprint(std::uint64_t expected, std::uint64_t actual,
                       const std::string& what, bool force) {
  if (expected == actual) return;
  const std::string message = what + " fingerprint mismatch: expected " +
                              fingerprint_hex(expected) + ", found " +
                              fingerprint_hex(actual);
  if (!force) throw ValidationError(message + " (pass --force to override)");
  std::cerr << "warning: " << message << " (--force)\n";
}

// Effective-config sidecar written beside each primary output.
void write_run_config(const fs::path& primary_output, const std::string& command,
                      Json resolved) {
  Json doc;
  doc["type"] = "run_config";
  doc["command"] = command;
  doc["resolved"] = std::move(resolved);
  atomic_write_text(primary_output.string() + ".run.json", doc.dump(2) + "\n");
}

Json json_from_file(const fs::path& path) {
  Json doc = Json::parse(read_text_file(path), nullptr, false);
  if (doc.is_discarded())
    throw ValidationError(path.string() + " is not valid JSON");
  return doc;
}

// --config pre-scan: values become defaults, explicit flags still win.
Json load_config_overlay(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string_view(argv[i]) == "--config") return json_from_file(argv[i + 1]);
  return Json::object();
}

// A flag stays required only when the config file did not already supply it.
CLI::Option* require_unless_set(CLI::Option* option, const std::string& current) {
  if (current.empty()) option->required();
  return option;
}

template <typename T>
void overlay(const Json& config, std::initializer_list<const char*> path, T& value) {
  const Json* node = &config;
  for (const char* key : path) {
    auto it = node->find(key);
    if (it == node->end()) return;
    node = &*it;
  }
  try {
    value = node->get<T>();
  } catch (...) {
    throw ValidationError("config value has the wrong type");
  }
}

struct TagCli {
  std::string dataset, embeddings, out_tags, out_vocab, failures;
  std::vector<std::string> disable_metric;
  bool no_descriptive = false;
  bool use_endpoint = false;
  TaggerEndpointConfig endpoint;
  std::string endpoint_template_file;
  std::uint64_t fallback_seed = 104729;
  int fallback_dim = 64;
};

int cmd_tag(const GlobalOptions& global, const TagCli& options) {
  Dataset dataset = load_dataset(options.dataset);
  if (!options.embeddings.empty())
    dataset = apply_embedding_sidecar(dataset, options.embeddings);

  TaggingOptions tagging;
  for (const auto& m : options.disable_metric) tagging.disabled_textual.insert(m);
  tagging.descriptive = !options.no_descriptive;
  tagging.use_tagger_endpoint = options.use_endpoint;
  tagging.fallback_embedding_seed = options.fallback_seed;
  tagging.fallback_embedding_dim = options.fallback_dim;
  tagging.threads = global.threads;

  std::unique_ptr<HttpTaggerClient> client;
  if (options.use_endpoint) {
    TaggerEndpointConfig endpoint = options.endpoint;
    if (!options.endpoint_template_file.empty())
      endpoint.request_template = read_text_file(options.endpoint_template_file);
    if (const char* token = std::getenv("PREFROUTE_TAGGER_TOKEN"))
      endpoint.bearer_token = token;
    client = std::make_unique<HttpTaggerClient>(std::move(endpoint));
  }

  const TaggingResult result = tag_dataset(dataset, tagging, client.get());
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";

  save_vocabulary(result.vocabulary, dataset.fingerprint(), options.out_vocab);
  save_tags(result.assignments, dataset.fingerprint(), result.vocabulary.fingerprint(),
            options.out_tags);
  if (!options.failures.empty()) {
    AtomicWriter out(options.failures);
    Json header;
    header["type"] = "tagger_failures";
    header["n"] = result.tagger_failures.size();
    out.line(header);
    for (const auto& f : result.tagger_failures) {
      Json rec;
      rec["id"] = f.instance_id;
      rec["error"] = f.error;
      out.line(rec);
    }
    out.commit();
  }

  Json resolved;
  resolved["dataset"] = options.dataset;
  resolved["embeddings"] = options.embeddings;
  resolved["out_tags"] = options.out_tags;
  resolved["out_vocab"] = options.out_vocab;
  Json disabled = Json::array();
  for (const auto& m : options.disable_metric) disabled.push_back(m);
  resolved["disabled_metrics"] = std::move(disabled);
  resolved["descriptive"] = tagging.descriptive;
  resolved["use_endpoint"] = options.use_endpoint;
  resolved["fallback_embedding_seed"] = options.fallback_seed;
  resolved["fallback_embedding_dim"] = options.fallback_dim;
  resolved["dataset_fingerprint"] = fingerprint_hex(dataset.fingerprint());
  resolved["vocabulary_fingerprint"] = fingerprint_hex(result.vocabulary.fingerprint());
  write_run_config(options.out_tags, "tag", std::move(resolved));

  std::cout << "tagged " << dataset.size() << " instance(s), vocabulary of "
            << result.vocabulary.size() << " tag(s)";
  if (!result.tagger_failures.empty())
    std::cout << ", " << result.tagger_failures.size() << " tagger failure(s)";
  std::cout << "\n";
  return exit_code::ok;
}

struct SampleCli {
  std::string dataset, tags, vocab, out, export_csv;
  std::size_t count = 200;
  bool endpoints = true;
  std::int64_t budget = -1;
};

int cmd_sample(const GlobalOptions& global, const SampleCli& options) {
  const Dataset dataset = load_dataset(options.dataset);
  const LoadedTags tags = load_tags(options.tags);
  const LoadedVocabulary vocab = load_vocabulary(options.vocab);
  check_fingerprint(dataset.fingerprint(), tags.dataset_fingerprint, "tags/dataset",
                    global.force);
  check_fingerprint(vocab.vocabulary.fingerprint(), tags.vocabulary_fingerprint,
                    "vocabulary/tags", global.force);

  CandidateGenOptions gen;
  gen.count = options.count;
  gen.include_endpoints = options.endpoints;
  if (options.budget >= 0) gen.fixed_budget = static_cast<std::uint64_t>(options.budget);
  gen.seed = child_seed(global.seed, "candidates");
  std::vector<std::string> warnings;
  const CandidateSet set =
      generate_candidate_set(build_tag_index(tags.assignments), tags.assignments,
                             vocab.vocabulary, dataset.size(), dataset.fingerprint(),
                             gen, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

  std::vector<std::string> ids;
  ids.reserve(dataset.size());
  for (const auto& inst : dataset.instances()) ids.push_back(inst.id);
  save_candidate_set(set, ids, options.out);
  if (!options.export_csv.empty())
    export_feature_matrix(set, vocab.vocabulary, options.export_csv);

  Json resolved;
  resolved["dataset"] = options.dataset;
  resolved["tags"] = options.tags;
  resolved["vocab"] = options.vocab;
  resolved["out"] = options.out;
  resolved["count"] = options.count;
  resolved["endpoints"] = options.endpoints;
  resolved["budget"] = options.budget;
  resolved["seed"] = global.seed;
  resolved["dataset_fingerprint"] = fingerprint_hex(dataset.fingerprint());
  resolved["vocabulary_fingerprint"] = fingerprint_hex(vocab.vocabulary.fingerprint());
  write_run_config(options.out, "sample", std::move(resolved));

  std::cout << "sampled " << set.records.size() << " candidate(s)\n";
  return exit_code::ok;
}

struct IngestCli {
  std::string candidates, scores, out;
};

int cmd_ingest_perf(const GlobalOptions&, const IngestCli& options) {
  const std::size_t updated =
      ingest_performance(options.candidates, options.scores, options.out);
  Json resolved;
  resolved["candidates"] = options.candidates;
  resolved["scores"] = options.scores;
  resolved["out"] = options.out;
  write_run_config(options.out, "ingest-perf", std::move(resolved));
  std::cout << "merged performance for " << updated << " candidate(s)\n";
  return exit_code::ok;
}

struct FitCli {
  std::string candidates, matrix, vocab, out, report;
  std::string kind = "quadratic";
  double ridge = 1e-3;
  std::string expansion = "squares";
  GbtParams gbt;
  std::size_t holdout = 16;
  std::int64_t dataset_size = -1;
};

int cmd_fit(const GlobalOptions& global, const FitCli& options) {
  const LoadedVocabulary vocab = load_vocabulary(options.vocab);

  CandidateSet all;
  if (!options.candidates.empty()) {
    all = load_candidate_set(options.candidates);
    check_fingerprint(vocab.vocabulary.fingerprint(), all.vocabulary_fingerprint,
                      "vocabulary/candidates", global.force);
    all.vocabulary_fingerprint = vocab.vocabulary.fingerprint();
  } else if (!options.matrix.empty()) {
    if (options.dataset_size <= 0)
      throw ValidationError("--dataset-size is required with --matrix");
    const TrainingMatrix matrix = read_training_matrix(options.matrix, vocab.vocabulary);
    all.vocabulary_fingerprint = vocab.vocabulary.fingerprint();
    all.dataset_fingerprint = vocab.dataset_fingerprint;
    all.dataset_size = static_cast<std::uint64_t>(options.dataset_size);
    for (std::size_t i = 0; i < matrix.candidate_ids.size(); ++i) {
      CandidateRecord record;
      record.candidate_id = matrix.candidate_ids[i];
      record.features.counts = matrix.counts[i];
      record.features.vocabulary_fingerprint = all.vocabulary_fingerprint;
      record.performance = matrix.performance[i];
      record.performance_source = PerformanceSource::measured;
      all.records.push_back(std::move(record));
    }
  } else {
    throw ValidationError("fit needs --candidates or --matrix");
  }

  std::vector<CandidateRecord> scored;
  for (auto& record : all.records)
    if (record.performance) scored.push_back(std::move(record));
  if (scored.size() < 2)
    throw ValidationError("fit needs at least 2 candidates with performance; run "
                          "ingest-perf or oracle-eval first");
  if (options.holdout + 2 > scored.size())
    throw ValidationError("holdout of " + std::to_string(options.holdout) +
                          " leaves fewer than 2 of " + std::to_string(scored.size()) +
                          " scored candidates for training");

  Rng rng(child_seed(global.seed, "fit"));
  const auto holdout_positions = rng.sample_without_replacement(
      static_cast<std::uint32_t>(scored.size()),
      static_cast<std::uint32_t>(options.holdout));
  std::set<std::uint32_t> holdout_set(holdout_positions.begin(),
                                      holdout_positions.end());

  CandidateSet train;
  train.dataset_fingerprint = all.dataset_fingerprint;
  train.vocabulary_fingerprint = all.vocabulary_fingerprint;
  train.dataset_size = all.dataset_size;
  std::vector<CandidateRecord> holdout;
  for (std::uint32_t i = 0; i < scored.size(); ++i) {
    if (holdout_set.count(i))
      holdout.push_back(scored[i]);
    else
      train.records.push_back(scored[i]);
  }

  FitOptions fit;
  fit.kind = parse_ppm_kind(options.kind);
  fit.ridge = options.ridge;
  fit.mode = options.expansion == "interactions" ? QuadraticMode::full_interactions
                                                 : QuadraticMode::squares_only;
  fit.gbt = options.gbt;
  fit.seed = global.seed;
  const PpmModel model = fit_ppm(train, vocab.vocabulary, fit);
  if (model.meta.minnorm_fallback)
    std::cerr << "warning: rank-deficient system with ridge 0; used the minimum-norm "
                 "solution\n";
  save_model(model, options.out);

  Json resolved;
  resolved["candidates"] = options.candidates;
  resolved["matrix"] = options.matrix;
  resolved["vocab"] = options.vocab;
  resolved["out"] = options.out;
  resolved["kind"] = options.kind;
  resolved["ridge"] = options.ridge;
  resolved["expansion"] = options.expansion;
  resolved["holdout"] = options.holdout;
  resolved["seed"] = global.seed;
  resolved["n_train"] = train.records.size();
  resolved["vocabulary_fingerprint"] = fingerprint_hex(model.vocabulary_fingerprint);
  write_run_config(options.out, "fit", std::move(resolved));

  if (!holdout.empty()) {
    std::set<std::string> training_ids;
    for (const auto& record : train.records) training_ids.insert(record.candidate_id);
    const FitReport fr = evaluate_holdout(model, holdout, training_ids);
    Json report;
    report["type"] = "fit_report";
    report["kind"] = options.kind;
    if (fr.spearman_rho)
      report["spearman_rho"] = *fr.spearman_rho;
    else
      report["spearman_rho"] = nullptr;
    report["rmse"] = fr.rmse;
    report["n_train"] = fr.n_train;
    report["n_holdout"] = fr.n_holdout;
    report["vocabulary_fingerprint"] = fingerprint_hex(model.vocabulary_fingerprint);
    report["dataset_fingerprint"] = fingerprint_hex(all.dataset_fingerprint);
    if (!options.report.empty())
      atomic_write_text(options.report, report.dump(2) + "\n");
    if (global.pretty) {
      std::cout << "fit " << options.kind << ": n_train=" << fr.n_train
                << " n_holdout=" << fr.n_holdout << " spearman="
                << (fr.spearman_rho ? format_double(*fr.spearman_rho) : "undefined")
                << " rmse=" << format_double(fr.rmse) << "\n";
    } else {
      std::cout << report.dump() << "\n";
    }
  } else {
    std::cout << "fit " << options.kind << " on " << train.records.size()
              << " candidate(s), no holdout\n";
  }
  return exit_code::ok;
}

struct RouteCli {
  std::string dataset, tags, vocab, model, out, scored_pool;
  std::string strategy = "simulated";
  std::int64_t budget = -1;
  std::int64_t k = -1;
  double fraction = 0.5;
  std::size_t sims = 500;
  double slack = 0.05;
};

int cmd_route(const GlobalOptions& global, const RouteCli& options) {
  const Dataset dataset = load_dataset(options.dataset);
  const Strategy strategy = parse_strategy(options.strategy);

  RoutingResult result;
  const std::uint64_t routing_seed = child_seed(global.seed, "routing");

  if (strategy == Strategy::all_human) {
    result = route_all_human(dataset);
  } else if (strategy == Strategy::all_lm) {
    result = route_all_lm(dataset);
  } else if (strategy == Strategy::random_fraction) {
    result = route_random_fraction(dataset, options.fraction, routing_seed);
  } else {
    if (options.tags.empty() || options.vocab.empty() || options.model.empty())
      throw ValidationError("strategy " + options.strategy +
                            " needs --tags, --vocab and --model");
    const LoadedTags tags = load_tags(options.tags);
    const LoadedVocabulary vocab = load_vocabulary(options.vocab);
    check_fingerprint(dataset.fingerprint(), tags.dataset_fingerprint, "tags/dataset",
                      global.force);
    check_fingerprint(vocab.vocabulary.fingerprint(), tags.vocabulary_fingerprint,
                      "vocabulary/tags", global.force);
    const PpmModel model = load_model(options.model);

    if (strategy == Strategy::topk_gain) {
      if (options.k < 0) throw ValidationError("topk routing needs --k");
      result = route_topk(dataset, tags.assignments, model,
                          static_cast<std::uint64_t>(options.k));
    } else {
      SimulatedOptions sim;
      sim.n_sims = options.sims;
      if (options.budget >= 0) sim.budget = static_cast<std::uint64_t>(options.budget);
      sim.slack = options.slack;
      sim.seed = routing_seed;
      sim.threads = global.threads;
      std::vector<ScoredCandidate> pool;
      result = route_simulated(dataset, tags.assignments, vocab.vocabulary,
                               build_tag_index(tags.assignments), model, sim,
                               options.scored_pool.empty() ? nullptr : &pool);
      if (!options.scored_pool.empty())
        save_scored_pool(pool, model.vocabulary_fingerprint, dataset.fingerprint(),
                         options.scored_pool);
    }
    if (result.vocab_coverage < 1.0)
      std::cerr << "warning: model knows " << format_double(result.vocab_coverage * 100)
                << "% of the dataset tag mass (" << result.dropped_tags
                << " tag occurrence(s) dropped)\n";
  }

  result.seed = routing_seed;
  save_routing_result(result, options.out);

  Json resolved;
  resolved["dataset"] = options.dataset;
  resolved["tags"] = options.tags;
  resolved["vocab"] = options.vocab;
  resolved["model"] = options.model;
  resolved["out"] = options.out;
  resolved["strategy"] = options.strategy;
  resolved["budget"] = options.budget;
  resolved["k"] = options.k;
  resolved["fraction"] = options.fraction;
  resolved["sims"] = options.sims;
  resolved["slack"] = options.slack;
  resolved["seed"] = global.seed;
  resolved["dataset_fingerprint"] = fingerprint_hex(dataset.fingerprint());
  write_run_config(options.out, "route", std::move(resolved));

  std::cout << "routed " << result.budget_realized << "/" << dataset.size()
            << " instance(s) to humans";
  if (result.predicted_performance)
    std::cout << ", predicted performance " << format_double(*result.predicted_performance);
  std::cout << "\n";
  return exit_code::ok;
}

struct GainCli {
  std::string tags, vocab, model, out_prefix;
  std::size_t n_route = 100;
  std::size_t repeats = 1;
  std::size_t hist_bins = 30;
};

int cmd_gain(const GlobalOptions& global, const GainCli& options) {
  const LoadedTags tags = load_tags(options.tags);
  const LoadedVocabulary vocab = load_vocabulary(options.vocab);
  check_fingerprint(vocab.vocabulary.fingerprint(), tags.vocabulary_fingerprint,
                    "vocabulary/tags", global.force);
  const PpmModel model = load_model(options.model);
  check_fingerprint(model.vocabulary_fingerprint, tags.vocabulary_fingerprint,
                    "model/tags", global.force);

  GainReportOptions gain;
  gain.n_route = options.n_route;
  gain.repeats = options.repeats;
  gain.seed = child_seed(global.seed, "gain");
  gain.histogram_bins = options.hist_bins;
  const GainReport report = build_gain_report(model, tags.assignments, vocab.vocabulary,
                                              tags.dataset_fingerprint, gain);
  write_gain_report(report, options.out_prefix);

  Json resolved;
  resolved["tags"] = options.tags;
  resolved["vocab"] = options.vocab;
  resolved["model"] = options.model;
  resolved["out_prefix"] = options.out_prefix;
  resolved["n_route"] = options.n_route;
  resolved["repeats"] = options.repeats;
  resolved["histogram_bins"] = options.hist_bins;
  resolved["seed"] = global.seed;
  write_run_config(options.out_prefix + ".summary.json", "gain", std::move(resolved));

  std::cout << "gain report over " << report.per_instance.size() << " instance(s), "
            << report.per_tag.size() << " tag(s); mean gain "
            << format_double(report.summary.mean) << ", fraction positive "
            << format_double(report.summary.fraction_positive) << "\n";
  return exit_code::ok;
}

struct AgreeCli {
  std::string dataset, routing, out;
  std::string subset = "all";
};

int cmd_agree(const GlobalOptions& global, const AgreeCli& options) {
  const Dataset dataset = load_dataset(options.dataset);
  AgreementSubset subset = AgreementSubset::all;
  if (options.subset == "human") subset = AgreementSubset::human_routed;
  else if (options.subset == "lm") subset = AgreementSubset::lm_routed;
  else if (options.subset != "all")
    throw ValidationError("--subset must be all, human or lm");

  std::optional<RoutingConfiguration> routing;
  if (!options.routing.empty()) {
    auto [z, fp] = load_routing_configuration(options.routing);
    check_fingerprint(dataset.fingerprint(), fp, "routing/dataset", global.force);
    routing = std::move(z);
  }

  const AgreementReport report =
      agreement_on(dataset, routing ? &*routing : nullptr, subset);
  Json doc = agreement_to_json(report);
  doc["subset"] = options.subset;
  doc["dataset_fingerprint"] = fingerprint_hex(dataset.fingerprint());
  if (!options.out.empty()) {
    atomic_write_text(options.out, doc.dump(2) + "\n");
    write_run_config(options.out, "agree", doc);
  }
  if (global.pretty) {
    std::cout << "agreement over " << report.n << " pair(s): " << "p_o="
              << format_double(report.percent_agreement) << " kappa="
              << (report.cohen_kappa ? format_double(*report.cohen_kappa) : "undefined")
              << "\n";
  } else {
    std::cout << doc.dump() << "\n";
  }
  return exit_code::ok;
}

struct BinarizeCli {
  std::string dataset, out;
  std::string target = "lm";
  AspectWeights weights;
};

int cmd_binarize(const GlobalOptions&, const BinarizeCli& options) {
  if (options.target != "human" && options.target != "lm")
    throw ValidationError("--target must be human or lm");
  JsonlReader reader(options.dataset);
  AtomicWriter out(options.out);
  std::size_t n = 0;
  while (auto record = reader.next()) {
    if (!record->contains("aspects_a") || !record->contains("aspects_b"))
      throw ParseError("record lacks aspects_a/aspects_b", reader.line_number());
    const AspectRatings a = parse_aspect_ratings(
        (*record)["aspects_a"], "aspects_a (line " +
        std::to_string(reader.line_number()) + ")");
    const AspectRatings b = parse_aspect_ratings(
        (*record)["aspects_b"], "aspects_b (line " +
        std::to_string(reader.line_number()) + ")");
    const Label label = binarize_aspects(a, b, options.weights);
    (*record)[options.target == "human" ? "human_label" : "lm_label"] =
        std::string(label_to_string(label));
    out.line(*record);
    ++n;
  }
  out.commit();

  Json resolved;
  resolved["dataset"] = options.dataset;
  resolved["out"] = options.out;
  resolved["target"] = options.target;
  Json weights;
  weights["helpfulness"] = options.weights.helpfulness;
  weights["correctness"] = options.weights.correctness;
  weights["coherence"] = options.weights.coherence;
  weights["complexity"] = options.weights.complexity;
  weights["verbosity"] = options.weights.verbosity;
  resolved["weights"] = std::move(weights);
  write_run_config(options.out, "binarize", std::move(resolved));

  std::cout << "binarized " << n << " record(s) into " << options.target << "_label\n";
  return exit_code::ok;
}

struct OracleEvalCli {
  std::string harness_config, out, curve, workdir;
};

int cmd_oracle_eval(const GlobalOptions& global, const OracleEvalCli& options,
                    bool seed_given) {
  HarnessConfig config;
  if (!options.harness_config.empty())
    config = harness_config_from_json(json_from_file(options.harness_config));
  if (seed_given) config.master_seed = global.seed;
  if (global.threads > 0) config.threads = global.threads;

  HarnessArtifacts artifacts;
  EvaluationReport report;
  try {
    run_end_to_end_into(config, report, options.workdir.empty() ? nullptr : &artifacts);
  } catch (...) {
    // Persist whatever stages completed before propagating the failure.
    if (!options.out.empty()) {
      Json partial = evaluation_report_to_json(report);
      partial["partial"] = true;
      partial["config"] = harness_config_to_json(config);
      atomic_write_text(options.out, partial.dump(2) + "\n");
    }
    throw;
  }

  Json doc = evaluation_report_to_json(report);
  doc["config"] = harness_config_to_json(config);
  if (!options.out.empty()) {
    atomic_write_text(options.out, doc.dump(2) + "\n");
    write_run_config(options.out, "oracle-eval", harness_config_to_json(config));
  }
  if (!options.curve.empty()) write_budget_curve_csv(report, options.curve);

  if (!options.workdir.empty()) {
    const fs::path dir(options.workdir);
    fs::create_directories(dir);
    save_dataset(artifacts.data.dataset, dir / "dataset.jsonl");
    save_vocabulary(artifacts.data.vocabulary, artifacts.data.dataset.fingerprint(),
                    dir / "vocab.jsonl");
    save_tags(artifacts.data.assignments, artifacts.data.dataset.fingerprint(),
              artifacts.data.vocabulary.fingerprint(), dir / "tags.jsonl");
    std::vector<std::string> ids;
    for (const auto& inst : artifacts.data.dataset.instances()) ids.push_back(inst.id);
    save_candidate_set(artifacts.train, ids, dir / "train_candidates.jsonl");
    save_candidate_set(artifacts.holdout, ids, dir / "holdout_candidates.jsonl");
    for (const auto& [kind, model] : artifacts.models)
      save_model(model, dir / ("model_" + kind + ".json"));
  }

  if (global.pretty) {
    for (const auto& [kind, fit] : report.fits)
      std::cout << "fit " << kind << ": spearman="
                << (fit.spearman_rho ? format_double(*fit.spearman_rho) : "undefined")
                << " rmse=" << format_double(fit.rmse) << "\n";
    for (const auto& o : report.outcomes)
      std::cout << "budget " << o.budget << " (" << format_double(o.budget_fraction)
                << "): simulated=" << format_double(o.simulated_score)
                << " topk=" << format_double(o.topk_score)
                << " random_p95=" << format_double(o.random_p95) << "\n";
  } else {
    std::cout << doc.dump() << "\n";
  }
  return exit_code::ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prefroute: performance-prediction routing of preference annotations "
               "between humans and LMs"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions global;
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file providing flag defaults");
  auto* seed_opt =
      app.add_option("--seed", global.seed, "Master seed; stages derive child seeds");
  app.add_option("--threads", global.threads, "Worker threads (0 = hardware)");
  app.add_flag("--pretty", global.pretty, "Human-readable summaries");
  app.add_flag("--force", global.force, "Proceed past fingerprint mismatches");

  Json config;
  try {
    config = load_config_overlay(argc, argv);
    overlay(config, {"seed"}, global.seed);
    overlay(config, {"threads"}, global.threads);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code();
  }

  TagCli tag;
  overlay(config, {"paths", "dataset"}, tag.dataset);
  overlay(config, {"paths", "embeddings"}, tag.embeddings);
  overlay(config, {"tagger_endpoint", "base_url"}, tag.endpoint.base_url);
  overlay(config, {"tagger_endpoint", "path"}, tag.endpoint.path);
  overlay(config, {"tagger_endpoint", "timeout_ms"}, tag.endpoint.timeout_ms);
  overlay(config, {"tagger_endpoint", "retries"}, tag.endpoint.retries);
  overlay(config, {"tagger_endpoint", "concurrency"}, tag.endpoint.concurrency);
  overlay(config, {"tagger_endpoint", "response_format"}, tag.endpoint.response_format);
  overlay(config, {"tagger_endpoint", "template_file"}, tag.endpoint_template_file);
  overlay(config, {"tagging", "fallback_embedding_seed"}, tag.fallback_seed);
  overlay(config, {"tagging", "fallback_embedding_dim"}, tag.fallback_dim);
  auto* tag_cmd = app.add_subcommand("tag", "Compute tags and the tag vocabulary");
  require_unless_set(tag_cmd->add_option("--dataset", tag.dataset, "Input dataset (JSONL)"),
                     tag.dataset);
  tag_cmd->add_option("--embeddings", tag.embeddings, "Sidecar embedding file (JSONL)");
  tag_cmd->add_option("--out-tags", tag.out_tags, "Output tags file")->required();
  tag_cmd->add_option("--out-vocab", tag.out_vocab, "Output vocabulary file")->required();
  tag_cmd->add_option("--failures", tag.failures, "Tagger failure report (JSONL)");
  tag_cmd->add_option("--disable-metric", tag.disable_metric,
                      "Textual dimension to skip (repeatable)");
  tag_cmd->add_flag("--no-descriptive", tag.no_descriptive,
                    "Skip descriptive dimensions");
  tag_cmd->add_flag("--use-endpoint", tag.use_endpoint,
                    "Fetch descriptive tags from the external tagger endpoint");
  tag_cmd->add_option("--endpoint-url", tag.endpoint.base_url, "Tagger base URL");
  tag_cmd->add_option("--endpoint-path", tag.endpoint.path, "Tagger request path");
  tag_cmd->add_option("--endpoint-template", tag.endpoint_template_file,
                      "Request template file ({{prompt}} placeholder)");
  tag_cmd->add_option("--endpoint-timeout-ms", tag.endpoint.timeout_ms, "Timeout");
  tag_cmd->add_option("--endpoint-retries", tag.endpoint.retries, "Retry budget");
  tag_cmd->add_option("--endpoint-concurrency", tag.endpoint.concurrency,
                      "In-flight request cap");
  tag_cmd->add_option("--endpoint-response-format", tag.endpoint.response_format,
                      "json or lines");
  tag_cmd->add_option("--fallback-seed", tag.fallback_seed,
                      "Seed for hashing-trick embeddings");
  tag_cmd->add_option("--fallback-dim", tag.fallback_dim,
                      "Dimension of hashing-trick embeddings");

  SampleCli sample;
  overlay(config, {"paths", "dataset"}, sample.dataset);
  overlay(config, {"paths", "tags"}, sample.tags);
  overlay(config, {"paths", "vocab"}, sample.vocab);
  overlay(config, {"candidates", "count"}, sample.count);
  auto* sample_cmd =
      app.add_subcommand("sample", "Sample candidate routing configurations");
  require_unless_set(sample_cmd->add_option("--dataset", sample.dataset, "Input dataset"),
                     sample.dataset);
  require_unless_set(sample_cmd->add_option("--tags", sample.tags, "Tags file"),
                     sample.tags);
  require_unless_set(sample_cmd->add_option("--vocab", sample.vocab, "Vocabulary file"),
                     sample.vocab);
  sample_cmd->add_option("--out", sample.out, "Output candidate file")->required();
  sample_cmd->add_option("--count", sample.count, "Number of sampled candidates");
  sample_cmd->add_flag("--endpoints,!--no-endpoints", sample.endpoints,
                       "Append the all-human and all-LM candidates");
  sample_cmd->add_option("--budget", sample.budget, "Fixed annotation budget");
  sample_cmd->add_option("--export-csv", sample.export_csv,
                         "Also export the feature matrix as CSV");

  IngestCli ingest;
  auto* ingest_cmd = app.add_subcommand(
      "ingest-perf", "Join externally measured performance into a candidate file");
  ingest_cmd->add_option("--candidates", ingest.candidates, "Candidate file")->required();
  ingest_cmd->add_option("--scores", ingest.scores,
                         "CSV with candidate_id and performance columns")
      ->required();
  ingest_cmd->add_option("--out", ingest.out, "Output candidate file")->required();

  FitCli fit;
  overlay(config, {"paths", "vocab"}, fit.vocab);
  overlay(config, {"ppm", "kind"}, fit.kind);
  overlay(config, {"ppm", "ridge"}, fit.ridge);
  overlay(config, {"ppm", "expansion"}, fit.expansion);
  overlay(config, {"ppm", "holdout"}, fit.holdout);
  overlay(config, {"ppm", "gbt", "n_trees"}, fit.gbt.n_trees);
  overlay(config, {"ppm", "gbt", "max_depth"}, fit.gbt.max_depth);
  overlay(config, {"ppm", "gbt", "learning_rate"}, fit.gbt.learning_rate);
  overlay(config, {"ppm", "gbt", "min_leaf"}, fit.gbt.min_leaf);
  auto* fit_cmd = app.add_subcommand("fit", "Fit a performance prediction model");
  fit_cmd->add_option("--candidates", fit.candidates,
                      "Candidate file with performance values");
  fit_cmd->add_option("--matrix", fit.matrix, "Training matrix CSV");
  fit_cmd->add_option("--dataset-size", fit.dataset_size,
                      "Dataset size (required with --matrix)");
  require_unless_set(fit_cmd->add_option("--vocab", fit.vocab, "Vocabulary file"),
                     fit.vocab);
  fit_cmd->add_option("--out", fit.out, "Output model file")->required();
  fit_cmd->add_option("--report", fit.report, "Fit report JSON");
  fit_cmd->add_option("--kind", fit.kind, "linear, quadratic or gbt");
  fit_cmd->add_option("--ridge", fit.ridge, "Ridge strength");
  fit_cmd->add_option("--expansion", fit.expansion, "squares or interactions");
  fit_cmd->add_option("--holdout", fit.holdout, "Held-out candidate count");
  fit_cmd->add_option("--gbt-trees", fit.gbt.n_trees, "GBT tree count");
  fit_cmd->add_option("--gbt-depth", fit.gbt.max_depth, "GBT max depth");
  fit_cmd->add_option("--gbt-lr", fit.gbt.learning_rate, "GBT learning rate");
  fit_cmd->add_option("--gbt-min-leaf", fit.gbt.min_leaf, "GBT min leaf size");

  RouteCli route;
  overlay(config, {"paths", "dataset"}, route.dataset);
  overlay(config, {"paths", "tags"}, route.tags);
  overlay(config, {"paths", "vocab"}, route.vocab);
  overlay(config, {"paths", "model"}, route.model);
  overlay(config, {"routing", "strategy"}, route.strategy);
  overlay(config, {"routing", "n_sims"}, route.sims);
  overlay(config, {"routing", "slack"}, route.slack);
  auto* route_cmd = app.add_subcommand("route", "Choose a routing configuration");
  require_unless_set(route_cmd->add_option("--dataset", route.dataset, "Input dataset"),
                     route.dataset);
  route_cmd->add_option("--tags", route.tags, "Tags file");
  route_cmd->add_option("--vocab", route.vocab, "Vocabulary file");
  route_cmd->add_option("--model", route.model, "Model file");
  route_cmd->add_option("--out", route.out, "Output routing result")->required();
  route_cmd->add_option("--strategy", route.strategy,
                        "simulated, topk, random, all-human or all-lm");
  route_cmd->add_option("--budget", route.budget, "Annotation budget (simulated)");
  route_cmd->add_option("--k", route.k, "Instances routed to humans (topk)");
  route_cmd->add_option("--fraction", route.fraction, "Human fraction (random)");
  route_cmd->add_option("--sims", route.sims, "Simulated candidate count");
  route_cmd->add_option("--slack", route.slack, "Budget window slack");
  route_cmd->add_option("--scored-pool", route.scored_pool,
                        "Persist the scored candidate pool");

  GainCli gain;
  overlay(config, {"paths", "tags"}, gain.tags);
  overlay(config, {"paths", "vocab"}, gain.vocab);
  overlay(config, {"paths", "model"}, gain.model);
  overlay(config, {"gain", "n_route"}, gain.n_route);
  overlay(config, {"gain", "repeats"}, gain.repeats);
  overlay(config, {"gain", "histogram_bins"}, gain.hist_bins);
  auto* gain_cmd = app.add_subcommand("gain", "Per-instance and per-tag gain reports");
  require_unless_set(gain_cmd->add_option("--tags", gain.tags, "Tags file"), gain.tags);
  require_unless_set(gain_cmd->add_option("--vocab", gain.vocab, "Vocabulary file"),
                     gain.vocab);
  require_unless_set(gain_cmd->add_option("--model", gain.model, "Model file"), gain.model);
  gain_cmd->add_option("--out-prefix", gain.out_prefix, "Report file prefix")->required();
  gain_cmd->add_option("--n-route", gain.n_route, "Instances routed per tag");
  gain_cmd->add_option("--repeats", gain.repeats, "Independent draws per tag");
  gain_cmd->add_option("--hist-bins", gain.hist_bins, "Histogram bin count");

  AgreeCli agree;
  overlay(config, {"paths", "dataset"}, agree.dataset);
  auto* agree_cmd =
      app.add_subcommand("agree", "Human-vs-LM agreement (percent and Cohen's kappa)");
  require_unless_set(agree_cmd->add_option("--dataset", agree.dataset, "Input dataset"),
                     agree.dataset);
  agree_cmd->add_option("--routing", agree.routing, "Routing result to subset by");
  agree_cmd->add_option("--subset", agree.subset, "all, human or lm");
  agree_cmd->add_option("--out", agree.out, "Agreement report JSON");

  BinarizeCli binarize;
  auto* binarize_cmd = app.add_subcommand(
      "binarize", "Turn aspect ratings into preference labels by weighted sum");
  binarize_cmd->add_option("--dataset", binarize.dataset, "Aspect-rated dataset")
      ->required();
  binarize_cmd->add_option("--out", binarize.out, "Output dataset")->required();
  binarize_cmd->add_option("--target", binarize.target,
                           "Which label to fill: human or lm");
  binarize_cmd->add_option("--w-helpfulness", binarize.weights.helpfulness, "Weight");
  binarize_cmd->add_option("--w-correctness", binarize.weights.correctness, "Weight");
  binarize_cmd->add_option("--w-coherence", binarize.weights.coherence, "Weight");
  binarize_cmd->add_option("--w-complexity", binarize.weights.complexity, "Weight");
  binarize_cmd->add_option("--w-verbosity", binarize.weights.verbosity, "Weight");

  OracleEvalCli oracle_eval;
  overlay(config, {"harness", "config_file"}, oracle_eval.harness_config);
  auto* oracle_cmd = app.add_subcommand(
      "oracle-eval", "End-to-end harness against the synthetic performance oracle");
  oracle_cmd->add_option("--harness-config", oracle_eval.harness_config,
                         "Harness config JSON");
  oracle_cmd->add_option("--out", oracle_eval.out, "Evaluation report JSON");
  oracle_cmd->add_option("--curve", oracle_eval.curve, "Budget-curve CSV");
  oracle_cmd->add_option("--workdir", oracle_eval.workdir,
                         "Directory for intermediate artifacts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    // Flag and subcommand problems are validation failures (exit 2);
    // --help/--version exit 0.
    return rc == 0 ? 0 : exit_code::validation;
  }

  try {
    if (tag_cmd->parsed()) return cmd_tag(global, tag);
    if (sample_cmd->parsed()) return cmd_sample(global, sample);
    if (ingest_cmd->parsed()) return cmd_ingest_perf(global, ingest);
    if (fit_cmd->parsed()) return cmd_fit(global, fit);
    if (route_cmd->parsed()) return cmd_route(global, route);
    if (gain_cmd->parsed()) return cmd_gain(global, gain);
    if (agree_cmd->parsed()) return cmd_agree(global, agree);
    if (binarize_cmd->parsed()) return cmd_binarize(global, binarize);
    if (oracle_cmd->parsed())
      return cmd_oracle_eval(global, oracle_eval, seed_opt->count() > 0);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return exit_code::ok;
}
