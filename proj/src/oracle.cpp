#include "prefroute/oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "prefroute/errors.hpp"
#include "prefroute/fingerprint.hpp"

namespace prefroute {

std::string_view oracle_kind_to_string(OracleSpec::Kind kind) {
  switch (kind) {
    case OracleSpec::Kind::linear: return "linear";
    case OracleSpec::Kind::quadratic: return "quadratic";
    case OracleSpec::Kind::sparse_quadratic: return "sparse_quadratic";
  }
  return "quadratic";
}

OracleSpec::Kind parse_oracle_kind(std::string_view s) {
  if (s == "linear") return OracleSpec::Kind::linear;
  if (s == "quadratic") return OracleSpec::Kind::quadratic;
  if (s == "sparse_quadratic") return OracleSpec::Kind::sparse_quadratic;
  throw ValidationError("unknown oracle kind: " + std::string(s));
}

PerformanceOracle::PerformanceOracle(const TagVocabulary& vocab, const OracleSpec& spec)
    : spec_(spec) {
  if (vocab.size() == 0) throw ValidationError("oracle requires a non-empty vocabulary");
  Rng rng(child_seed(spec.seed, "oracle_coefficients"));
  intercept_ = rng.uniform(spec.intercept_lo, spec.intercept_hi);
  linear_.resize(vocab.size());
  quad_.assign(vocab.size(), 0.0);
  const bool quadratic = spec.kind != OracleSpec::Kind::linear;
  for (std::size_t j = 0; j < vocab.size(); ++j) {
    linear_[j] = rng.uniform(-1.0, 1.0) * spec.linear_scale;
    if (quadratic) quad_[j] = rng.uniform(-1.0, 1.0) * spec.quad_scale;
    if (spec.kind == OracleSpec::Kind::sparse_quadratic &&
        rng.uniform01() >= spec.influential_fraction) {
      linear_[j] = 0.0;
      quad_[j] = 0.0;
    }
  }
}

double PerformanceOracle::planted(std::span<const double> scaled) const {
  double acc = intercept_;
  const std::size_t p = std::min(scaled.size(), linear_.size());
  for (std::size_t j = 0; j < p; ++j)
    acc += linear_[j] * scaled[j] + quad_[j] * scaled[j] * scaled[j];
  return acc;
}

double PerformanceOracle::score_noiseless_scaled(std::span<const double> scaled) const {
  const double raw = planted(scaled);
  if (raw < spec_.clamp_lo || raw > spec_.clamp_hi) {
    clamps_.fetch_add(1, std::memory_order_relaxed);
    return std::clamp(raw, spec_.clamp_lo, spec_.clamp_hi);
  }
  return raw;
}

double PerformanceOracle::score_scaled(std::span<const double> scaled,
                                       std::string_view candidate_id) const {
  double raw = planted(scaled);
  if (spec_.noise_sigma > 0.0) {
    Rng rng(child_seed(spec_.seed, "oracle_noise", fnv1a64(candidate_id)));
    raw += spec_.noise_sigma * rng.normal();
  }
  if (raw < spec_.clamp_lo || raw > spec_.clamp_hi) {
    clamps_.fetch_add(1, std::memory_order_relaxed);
    return std::clamp(raw, spec_.clamp_lo, spec_.clamp_hi);
  }
  return raw;
}

namespace {

std::vector<double> scale_counts(const FeatureVector& v, std::size_t dataset_size) {
  std::vector<double> scaled(v.counts.size());
  const double inv = dataset_size > 0 ? 1.0 / static_cast<double>(dataset_size) : 1.0;
  for (std::size_t j = 0; j < v.counts.size(); ++j)
    scaled[j] = static_cast<double>(v.counts[j]) * inv;
  return scaled;
}

}  // namespace

double PerformanceOracle::score(const FeatureVector& v, std::size_t dataset_size,
                                std::string_view candidate_id) const {
  return score_scaled(scale_counts(v, dataset_size), candidate_id);
}

double PerformanceOracle::score_noiseless(const FeatureVector& v,
                                          std::size_t dataset_size) const {
  return score_noiseless_scaled(scale_counts(v, dataset_size));
}

PerformanceOracle make_oracle(const TagVocabulary& vocab, const OracleSpec& spec) {
  return PerformanceOracle(vocab, spec);
}

SynthData synth_dataset(const SynthConfig& config) {
  if (config.n < 2) throw ValidationError("synthetic dataset needs n >= 2");
  if (config.n_dims < 1) throw ValidationError("synthetic dataset needs n_dims >= 1");

  const int dim_digits = config.n_dims > 100 ? 3 : 2;
  auto dim_name = [&](std::size_t j) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "d%0*zu", dim_digits, j);
    return std::string(buf);
  };
  static const char* bin_names[3] = {"b0", "b1", "b2"};

  std::vector<std::pair<std::string, std::string>> entries;
  for (std::size_t j = 0; j < config.n_dims; ++j)
    for (int b = 0; b < 3; ++b)
      entries.emplace_back(dim_name(j) + ":" + bin_names[b], dim_name(j));
  TagVocabulary vocab(std::move(entries));

  // Zipf-weighted participation probabilities, water-filled so the expected
  // tags per instance matches the requested mean even when some dimensions
  // saturate at probability 1.
  std::vector<double> weights(config.n_dims);
  for (std::size_t j = 0; j < config.n_dims; ++j)
    weights[j] = std::pow(static_cast<double>(j + 1), -config.skew);
  std::vector<double> participation(config.n_dims, 0.0);
  {
    std::vector<bool> saturated(config.n_dims, false);
    double target = std::min(config.mean_tags_per_instance,
                             static_cast<double>(config.n_dims));
    for (int pass = 0; pass < 64; ++pass) {
      double free_weight = 0.0;
      for (std::size_t j = 0; j < config.n_dims; ++j)
        if (!saturated[j]) free_weight += weights[j];
      if (free_weight <= 0.0) break;
      const double scale = target / free_weight;
      bool newly_saturated = false;
      for (std::size_t j = 0; j < config.n_dims; ++j) {
        if (saturated[j]) continue;
        participation[j] = weights[j] * scale;
        if (participation[j] >= 1.0) {
          participation[j] = 1.0;
          saturated[j] = true;
          target -= 1.0;
          newly_saturated = true;
        }
      }
      if (!newly_saturated) break;
    }
  }

  const double bin_probs[3] = {0.5, 0.3, 0.2};
  Rng rng(child_seed(config.seed, "synth"));

  std::vector<PreferenceInstance> instances;
  std::vector<TagAssignment> assignments;
  instances.reserve(config.n);
  assignments.reserve(config.n);
  for (std::size_t i = 0; i < config.n; ++i) {
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "synth-%06zu", i);
    PreferenceInstance inst;
    inst.id = idbuf;
    inst.prompt = "synthetic prompt " + std::to_string(i);
    inst.response_a = "synthetic response a " + std::to_string(i);
    inst.response_b = "synthetic response b " + std::to_string(i);
    inst.human_label = rng.uniform01() < 0.5 ? Label::A : Label::B;
    inst.lm_label = rng.uniform01() < 0.5 ? Label::A : Label::B;

    TagAssignment a;
    a.instance_id = inst.id;
    for (std::size_t j = 0; j < config.n_dims; ++j) {
      if (rng.uniform01() >= participation[j]) continue;
      const double u = rng.uniform01();
      const int bin = u < bin_probs[0] ? 0 : (u < bin_probs[0] + bin_probs[1] ? 1 : 2);
      a.tags.push_back(dim_name(j) + ":" + bin_names[bin]);
    }
    instances.push_back(std::move(inst));
    assignments.push_back(std::move(a));
  }

  SynthData data{Dataset(std::move(instances), "synthetic"), std::move(vocab),
                 std::move(assignments), {}};
  data.index = build_tag_index(data.assignments);
  return data;
}

namespace {

double percentile_nearest_rank(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(
      std::ceil(p * static_cast<double>(values.size())));
  return values[std::min(values.size() - 1, std::max<std::size_t>(rank, 1) - 1)];
}

std::vector<std::uint32_t> human_positions(const RoutingConfiguration& z) {
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < z.assignments.size(); ++i)
    if (z.assignments[i] == 0) out.push_back(static_cast<std::uint32_t>(i));
  return out;
}

class StageTimer {
 public:
  explicit StageTimer(std::map<std::string, double>& sink) : sink_(sink) {}
  template <typename F>
  auto run(const std::string& name, F&& f) {
    const auto start = std::chrono::steady_clock::now();
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      sink_[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                        .count();
    } else {
      auto result = f();
      sink_[name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                        .count();
      return result;
    }
  }

 private:
  std::map<std::string, double>& sink_;
};

}  // namespace

EvaluationReport run_end_to_end(const HarnessConfig& config, HarnessArtifacts* artifacts) {
  EvaluationReport report;
  run_end_to_end_into(config, report, artifacts);
  return report;
}

void run_end_to_end_into(const HarnessConfig& config, EvaluationReport& report,
                         HarnessArtifacts* artifacts) {
  StageTimer timer(report.stage_seconds);

  SynthConfig synth_config = config.synth;
  synth_config.seed = child_seed(config.master_seed, "synth");
  SynthData data = timer.run("synth", [&] { return synth_dataset(synth_config); });
  report.dataset_fingerprint = data.dataset.fingerprint();
  report.vocabulary_fingerprint = data.vocabulary.fingerprint();

  OracleSpec oracle_spec = config.oracle;
  oracle_spec.seed = child_seed(config.master_seed, "oracle");
  const PerformanceOracle oracle(data.vocabulary, oracle_spec);

  const std::size_t n = data.dataset.size();
  CandidateSet train, holdout;
  timer.run("candidates", [&] {
    CandidateGenOptions gen;
    gen.count = config.n_train;
    gen.include_endpoints = config.include_endpoints;
    gen.seed = child_seed(config.master_seed, "candidates");
    gen.id_prefix = "cand";
    train = generate_candidate_set(data.index, data.assignments, data.vocabulary, n,
                                   data.dataset.fingerprint(), gen);
    gen.count = config.n_holdout;
    gen.include_endpoints = false;
    gen.seed = child_seed(config.master_seed, "holdout");
    gen.id_prefix = "ho";
    holdout = generate_candidate_set(data.index, data.assignments, data.vocabulary, n,
                                     data.dataset.fingerprint(), gen);
  });

  timer.run("oracle_scoring", [&] {
    for (auto* set : {&train, &holdout}) {
      for (auto& record : set->records) {
        record.performance = oracle.score(record.features, n, record.candidate_id);
        record.performance_source = PerformanceSource::oracle;
      }
    }
  });

  std::set<std::string> training_ids;
  for (const auto& record : train.records) training_ids.insert(record.candidate_id);

  std::map<std::string, PpmModel> models;
  timer.run("fit", [&] {
    for (const PpmKind kind : config.model_kinds) {
      FitOptions options;
      options.kind = kind;
      options.mode = config.quad_mode;
      options.gbt = config.gbt;
      options.seed = config.master_seed;
      options.ridge =
          kind == PpmKind::linear ? config.ridge_linear : config.ridge_quadratic;
      PpmModel model = fit_ppm(train, data.vocabulary, options);
      report.fits[std::string(ppm_kind_to_string(kind))] =
          evaluate_holdout(model, holdout.records, training_ids);
      models[std::string(ppm_kind_to_string(kind))] = std::move(model);
    }
  });

  const auto routing_key = std::string(ppm_kind_to_string(config.routing_model));
  auto model_it = models.find(routing_key);
  if (model_it == models.end())
    throw ValidationError("routing model kind `" + routing_key +
                          "` was not in model_kinds");
  const PpmModel& routing_model = model_it->second;

  timer.run("routing", [&] {
    for (std::size_t f = 0; f < config.budget_fractions.size(); ++f) {
      const double fraction = config.budget_fractions[f];
      BudgetOutcome outcome;
      outcome.budget_fraction = fraction;
      outcome.budget =
          static_cast<std::uint64_t>(std::floor(fraction * static_cast<double>(n)));

      SimulatedOptions sim;
      sim.n_sims = config.n_sims;
      sim.budget = outcome.budget;
      sim.slack = config.slack;
      sim.seed = child_seed(config.master_seed, "routing", f);
      sim.threads = config.threads;
      const RoutingResult simulated =
          route_simulated(data.dataset, data.assignments, data.vocabulary, data.index,
                          routing_model, sim);
      outcome.simulated_realized = simulated.budget_realized;
      outcome.simulated_predicted = simulated.predicted_performance.value_or(0.0);
      outcome.simulated_score = oracle.score_noiseless(
          featurize(human_positions(simulated.configuration), data.assignments,
                    data.vocabulary),
          n);

      const RoutingResult topk =
          route_topk(data.dataset, data.assignments, routing_model, outcome.budget);
      outcome.topk_score = oracle.score_noiseless(
          featurize(human_positions(topk.configuration), data.assignments,
                    data.vocabulary),
          n);

      std::vector<double> random_scores;
      random_scores.reserve(config.random_draws);
      for (std::size_t draw = 0; draw < config.random_draws; ++draw) {
        const RoutingResult random = route_random_fraction(
            data.dataset, fraction,
            child_seed(config.master_seed, "baseline", f * 1000003 + draw));
        random_scores.push_back(oracle.score_noiseless(
            featurize(human_positions(random.configuration), data.assignments,
                      data.vocabulary),
            n));
      }
      outcome.random_mean =
          std::accumulate(random_scores.begin(), random_scores.end(), 0.0) /
          static_cast<double>(random_scores.size());
      outcome.random_p95 = percentile_nearest_rank(random_scores, 0.95);
      outcome.random_max = *std::max_element(random_scores.begin(), random_scores.end());
      report.outcomes.push_back(outcome);
    }
  });

  report.oracle_clamp_events = oracle.clamp_events();
  if (artifacts) {
    artifacts->train = train;
    artifacts->holdout = holdout;
    artifacts->models = models;
    artifacts->data = std::move(data);
  }
}

Json harness_config_to_json(const HarnessConfig& c) {
  Json doc;
  doc["type"] = "harness_config";
  doc["master_seed"] = c.master_seed;
  Json synth;
  synth["n"] = c.synth.n;
  synth["n_dims"] = c.synth.n_dims;
  synth["mean_tags_per_instance"] = c.synth.mean_tags_per_instance;
  synth["skew"] = c.synth.skew;
  doc["dataset"] = std::move(synth);
  Json oracle;
  oracle["kind"] = std::string(oracle_kind_to_string(c.oracle.kind));
  oracle["noise_sigma"] = c.oracle.noise_sigma;
  oracle["linear_scale"] = c.oracle.linear_scale;
  oracle["quad_scale"] = c.oracle.quad_scale;
  oracle["influential_fraction"] = c.oracle.influential_fraction;
  doc["oracle"] = std::move(oracle);
  Json candidates;
  candidates["n_train"] = c.n_train;
  candidates["n_holdout"] = c.n_holdout;
  candidates["include_endpoints"] = c.include_endpoints;
  doc["candidates"] = std::move(candidates);
  Json models;
  Json kinds = Json::array();
  for (const auto kind : c.model_kinds) kinds.push_back(std::string(ppm_kind_to_string(kind)));
  models["kinds"] = std::move(kinds);
  models["routing_model"] = std::string(ppm_kind_to_string(c.routing_model));
  models["ridge_linear"] = c.ridge_linear;
  models["ridge_quadratic"] = c.ridge_quadratic;
  models["quadratic_expansion"] =
      c.quad_mode == QuadraticMode::squares_only ? "squares_only" : "full_interactions";
  Json gbt;
  gbt["n_trees"] = c.gbt.n_trees;
  gbt["max_depth"] = c.gbt.max_depth;
  gbt["learning_rate"] = c.gbt.learning_rate;
  gbt["min_leaf"] = c.gbt.min_leaf;
  models["gbt"] = std::move(gbt);
  doc["models"] = std::move(models);
  Json routing;
  Json fractions = Json::array();
  for (const double f : c.budget_fractions) fractions.push_back(f);
  routing["budget_fractions"] = std::move(fractions);
  routing["n_sims"] = c.n_sims;
  routing["slack"] = c.slack;
  doc["routing"] = std::move(routing);
  Json baseline;
  baseline["random_draws"] = c.random_draws;
  doc["baseline"] = std::move(baseline);
  doc["threads"] = c.threads;
  return doc;
}

HarnessConfig harness_config_from_json(const Json& doc) {
  HarnessConfig c;
  if (doc.contains("master_seed")) c.master_seed = doc["master_seed"].get<std::uint64_t>();
  if (doc.contains("dataset")) {
    const Json& synth = doc["dataset"];
    if (synth.contains("n")) c.synth.n = synth["n"].get<std::size_t>();
    if (synth.contains("n_dims")) c.synth.n_dims = synth["n_dims"].get<std::size_t>();
    if (synth.contains("mean_tags_per_instance"))
      c.synth.mean_tags_per_instance = synth["mean_tags_per_instance"].get<double>();
    if (synth.contains("skew")) c.synth.skew = synth["skew"].get<double>();
  }
  if (doc.contains("oracle")) {
    const Json& oracle = doc["oracle"];
    if (oracle.contains("kind"))
      c.oracle.kind = parse_oracle_kind(oracle["kind"].get<std::string>());
    if (oracle.contains("noise_sigma"))
      c.oracle.noise_sigma = oracle["noise_sigma"].get<double>();
    if (oracle.contains("linear_scale"))
      c.oracle.linear_scale = oracle["linear_scale"].get<double>();
    if (oracle.contains("quad_scale"))
      c.oracle.quad_scale = oracle["quad_scale"].get<double>();
    if (oracle.contains("influential_fraction"))
      c.oracle.influential_fraction = oracle["influential_fraction"].get<double>();
  }
  if (doc.contains("candidates")) {
    const Json& candidates = doc["candidates"];
    if (candidates.contains("n_train"))
      c.n_train = candidates["n_train"].get<std::size_t>();
    if (candidates.contains("n_holdout"))
      c.n_holdout = candidates["n_holdout"].get<std::size_t>();
    if (candidates.contains("include_endpoints"))
      c.include_endpoints = candidates["include_endpoints"].get<bool>();
  }
  if (doc.contains("models")) {
    const Json& models = doc["models"];
    if (models.contains("kinds")) {
      c.model_kinds.clear();
      for (const auto& k : models["kinds"])
        c.model_kinds.push_back(parse_ppm_kind(k.get<std::string>()));
    }
    if (models.contains("routing_model"))
      c.routing_model = parse_ppm_kind(models["routing_model"].get<std::string>());
    if (models.contains("ridge_linear"))
      c.ridge_linear = models["ridge_linear"].get<double>();
    if (models.contains("ridge_quadratic"))
      c.ridge_quadratic = models["ridge_quadratic"].get<double>();
    if (models.contains("quadratic_expansion"))
      c.quad_mode = models["quadratic_expansion"] == "full_interactions"
                        ? QuadraticMode::full_interactions
                        : QuadraticMode::squares_only;
    if (models.contains("gbt")) {
      const Json& gbt = models["gbt"];
      if (gbt.contains("n_trees")) c.gbt.n_trees = gbt["n_trees"].get<int>();
      if (gbt.contains("max_depth")) c.gbt.max_depth = gbt["max_depth"].get<int>();
      if (gbt.contains("learning_rate"))
        c.gbt.learning_rate = gbt["learning_rate"].get<double>();
      if (gbt.contains("min_leaf")) c.gbt.min_leaf = gbt["min_leaf"].get<int>();
    }
  }
  if (doc.contains("routing")) {
    const Json& routing = doc["routing"];
    if (routing.contains("budget_fractions")) {
      c.budget_fractions.clear();
      for (const auto& f : routing["budget_fractions"])
        c.budget_fractions.push_back(f.get<double>());
    }
    if (routing.contains("n_sims")) c.n_sims = routing["n_sims"].get<std::size_t>();
    if (routing.contains("slack")) c.slack = routing["slack"].get<double>();
  }
  if (doc.contains("baseline") && doc["baseline"].contains("random_draws"))
    c.random_draws = doc["baseline"]["random_draws"].get<std::size_t>();
  if (doc.contains("threads")) c.threads = doc["threads"].get<int>();
  return c;
}

Json evaluation_report_to_json(const EvaluationReport& report) {
  Json doc;
  doc["type"] = "evaluation_report";
  doc["dataset_fingerprint"] = fingerprint_hex(report.dataset_fingerprint);
  doc["vocabulary_fingerprint"] = fingerprint_hex(report.vocabulary_fingerprint);
  Json fits = Json::object();
  for (const auto& [kind, fit] : report.fits) {
    Json f;
    if (fit.spearman_rho)
      f["spearman_rho"] = *fit.spearman_rho;
    else
      f["spearman_rho"] = nullptr;
    f["rmse"] = fit.rmse;
    f["n_train"] = fit.n_train;
    f["n_holdout"] = fit.n_holdout;
    fits[kind] = std::move(f);
  }
  doc["fits"] = std::move(fits);
  Json outcomes = Json::array();
  for (const auto& o : report.outcomes) {
    Json e;
    e["budget_fraction"] = o.budget_fraction;
    e["budget"] = o.budget;
    e["simulated_realized"] = o.simulated_realized;
    e["simulated_predicted"] = o.simulated_predicted;
    e["simulated_score"] = o.simulated_score;
    e["topk_score"] = o.topk_score;
    e["random_mean"] = o.random_mean;
    e["random_p95"] = o.random_p95;
    e["random_max"] = o.random_max;
    outcomes.push_back(std::move(e));
  }
  doc["outcomes"] = std::move(outcomes);
  doc["oracle_clamp_events"] = report.oracle_clamp_events;
  Json timings = Json::object();
  for (const auto& [stage, seconds] : report.stage_seconds) timings[stage] = seconds;
  doc["stage_seconds"] = std::move(timings);
  return doc;
}

void write_budget_curve_csv(const EvaluationReport& report,
                            const std::filesystem::path& path) {
  AtomicWriter out(path);
  out.raw("# type=budget_curve\n");
  out.raw("budget,strategy,oracle_score\n");
  for (const auto& o : report.outcomes) {
    const std::string b = std::to_string(o.budget);
    out.raw(b + ",simulated," + format_double(o.simulated_score) + "\n");
    out.raw(b + ",topk," + format_double(o.topk_score) + "\n");
    out.raw(b + ",random_mean," + format_double(o.random_mean) + "\n");
    out.raw(b + ",random_p95," + format_double(o.random_p95) + "\n");
  }
  out.commit();
}

}  // namespace prefroute
