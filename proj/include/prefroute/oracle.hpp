#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "prefroute/analysis.hpp"
#include "prefroute/routing.hpp"

namespace prefroute {

struct OracleSpec {
  enum class Kind { linear, quadratic, sparse_quadratic };
  Kind kind = Kind::quadratic;
  std::uint64_t seed = 0;
  double noise_sigma = 0.0;
  // Planted coefficient magnitudes. Sized so the performance spread across
  // candidate budgets is large against the noise while clamping stays rare.
  double linear_scale = 0.5;
  double quad_scale = 0.5;
  double influential_fraction = 0.2;  // sparse_quadratic only
  double clamp_lo = 0.0;
  double clamp_hi = 1.0;
  double intercept_lo = 0.40;
  double intercept_hi = 0.55;
};

std::string_view oracle_kind_to_string(OracleSpec::Kind kind);
OracleSpec::Kind parse_oracle_kind(std::string_view s);

// Stand-in for measured downstream performance: a planted function of the
// scaled feature vector, with noise keyed to the candidate identity so
// scoring order never matters.
class PerformanceOracle {
 public:
  PerformanceOracle(const TagVocabulary& vocab, const OracleSpec& spec);

  double intercept() const { return intercept_; }
  const OracleSpec& spec() const { return spec_; }

  double score_scaled(std::span<const double> scaled,
                      std::string_view candidate_id) const;
  double score_noiseless_scaled(std::span<const double> scaled) const;

  double score(const FeatureVector& v, std::size_t dataset_size,
               std::string_view candidate_id) const;
  double score_noiseless(const FeatureVector& v, std::size_t dataset_size) const;

  std::uint64_t clamp_events() const { return clamps_.load(); }

 private:
  double planted(std::span<const double> scaled) const;

  OracleSpec spec_;
  double intercept_ = 0.0;
  std::vector<double> linear_;
  std::vector<double> quad_;  // diagonal second-order terms
  mutable std::atomic<std::uint64_t> clamps_{0};
};

PerformanceOracle make_oracle(const TagVocabulary& vocab, const OracleSpec& spec);

struct SynthConfig {
  std::size_t n = 1000;
  std::size_t n_dims = 30;  // each dimension contributes 3 bin values
  double mean_tags_per_instance = 6.0;
  double skew = 1.0;  // 0 = uniform dimension participation
  std::uint64_t seed = 0;
};

struct SynthData {
  Dataset dataset;
  TagVocabulary vocabulary;
  std::vector<TagAssignment> assignments;
  TagIndex index;
};

// Synthetic tagged dataset: random tag memberships, dummy texts, both labels
// populated, no ties.
SynthData synth_dataset(const SynthConfig& config);

struct HarnessConfig {
  std::uint64_t master_seed = 42;
  SynthConfig synth;
  OracleSpec oracle;
  std::size_t n_train = 200;
  std::size_t n_holdout = 16;
  bool include_endpoints = true;
  std::vector<PpmKind> model_kinds = {PpmKind::linear, PpmKind::quadratic, PpmKind::gbt};
  PpmKind routing_model = PpmKind::quadratic;
  double ridge_linear = 0.0;
  double ridge_quadratic = 1e-3;
  QuadraticMode quad_mode = QuadraticMode::squares_only;
  GbtParams gbt;
  std::vector<double> budget_fractions = {0.25, 0.50, 0.75};
  std::size_t n_sims = 500;
  double slack = 0.05;
  std::size_t random_draws = 1000;
  int threads = 0;
};

struct BudgetOutcome {
  double budget_fraction = 0.0;
  std::uint64_t budget = 0;
  std::uint64_t simulated_realized = 0;
  double simulated_predicted = 0.0;
  double simulated_score = 0.0;  // noiseless oracle score of the chosen config
  double topk_score = 0.0;
  double random_mean = 0.0;
  double random_p95 = 0.0;
  double random_max = 0.0;
};

struct EvaluationReport {
  std::map<std::string, FitReport> fits;  // keyed by model kind name
  std::vector<BudgetOutcome> outcomes;
  std::map<std::string, double> stage_seconds;
  std::uint64_t oracle_clamp_events = 0;
  std::uint64_t dataset_fingerprint = 0;
  std::uint64_t vocabulary_fingerprint = 0;
};

struct HarnessArtifacts {
  SynthData data;
  CandidateSet train;
  CandidateSet holdout;
  std::map<std::string, PpmModel> models;
};

// synth -> candidates -> oracle scores -> fits -> per-budget routing versus
// the random baseline. When artifacts is non-null the intermediate products
// are copied out for persistence.
EvaluationReport run_end_to_end(const HarnessConfig& config,
                                HarnessArtifacts* artifacts = nullptr);

// Same pipeline filling a caller-owned report, so completed stages survive a
// mid-run failure and a partial report can be persisted.
void run_end_to_end_into(const HarnessConfig& config, EvaluationReport& report,
                         HarnessArtifacts* artifacts = nullptr);

Json harness_config_to_json(const HarnessConfig& config);
HarnessConfig harness_config_from_json(const Json& doc);
Json evaluation_report_to_json(const EvaluationReport& report);
void write_budget_curve_csv(const EvaluationReport& report,
                            const std::filesystem::path& path);

}  // namespace prefroute
