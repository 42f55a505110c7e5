#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prefroute/candidates.hpp"
#include "prefroute/ppm.hpp"

namespace prefroute {

enum class Strategy { simulated, topk_gain, random_fraction, all_human, all_lm };
std::string_view strategy_to_string(Strategy s);
Strategy parse_strategy(std::string_view s);

// Maps dataset-space tags into the model's vocabulary by tag identifier.
// Tags the model does not know are dropped; model tags absent from the
// dataset contribute zero counts.
class ModelFeatureMapper {
 public:
  explicit ModelFeatureMapper(const PpmModel& model);

  // One-hot counts of a single instance's tags, in model space.
  std::vector<std::uint32_t> one_hot(const TagAssignment& assignment,
                                     std::size_t* dropped = nullptr) const;
  // Counts over a set of instances, in model space.
  std::vector<std::uint32_t> subset_counts(std::span<const std::uint32_t> positions,
                                           const std::vector<TagAssignment>& assignments,
                                           std::size_t* dropped = nullptr) const;
  // Remap dataset-vocabulary counts into model space.
  std::vector<std::uint32_t> remap_counts(std::span<const std::uint32_t> counts,
                                          const TagVocabulary& dataset_vocab,
                                          std::size_t* dropped_mass = nullptr) const;
  // Fraction of the dataset's tag mass (occurrence-weighted) the model knows.
  double coverage(const std::vector<TagAssignment>& assignments) const;

  const PpmModel& model() const { return *model_; }

 private:
  const PpmModel* model_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

struct RoutingResult {
  Strategy strategy = Strategy::simulated;
  RoutingConfiguration configuration;
  std::optional<double> predicted_performance;
  std::optional<std::uint64_t> budget_requested;
  std::uint64_t budget_realized = 0;
  std::uint64_t n_simulations = 0;
  std::uint64_t seed = 0;
  std::optional<std::vector<double>> gains;  // aligned to dataset order
  std::uint64_t model_fingerprint = 0;
  std::uint64_t dataset_fingerprint = 0;
  double vocab_coverage = 1.0;
  std::uint64_t dropped_tags = 0;
};

struct ScoredCandidate {
  std::string candidate_id;
  std::uint64_t realized_size = 0;
  double predicted = 0.0;
};

struct SimulatedOptions {
  std::size_t n_sims = 500;
  std::optional<std::uint64_t> budget;
  double slack = 0.05;  // realized size window around the requested budget
  std::optional<bool> include_endpoints;  // default: only when no budget is set
  std::uint64_t seed = 0;
  int window_retry_cap = 50;
  int threads = 0;
};

// Samples candidates, scores each with the model, returns the argmax. Ties
// prefer the smaller realized budget, then the earlier candidate.
RoutingResult route_simulated(const Dataset& d,
                              const std::vector<TagAssignment>& assignments,
                              const TagVocabulary& vocab, const TagIndex& index,
                              const PpmModel& model, const SimulatedOptions& options,
                              std::vector<ScoredCandidate>* scored_pool = nullptr,
                              const std::vector<CandidateRecord>* extra_pool = nullptr);

// Predicted improvement from routing one instance to humans versus routing
// none: predict(one-hot tags) - predict(zero vector).
double instance_gain(const ModelFeatureMapper& mapper, const TagAssignment& assignment,
                     std::size_t* dropped = nullptr);

RoutingResult route_topk(const Dataset& d, const std::vector<TagAssignment>& assignments,
                         const PpmModel& model, std::uint64_t k);

RoutingResult route_random_fraction(const Dataset& d, double fraction, std::uint64_t seed);

RoutingResult route_all_human(const Dataset& d);
RoutingResult route_all_lm(const Dataset& d);

void save_routing_result(const RoutingResult& result, const std::filesystem::path& path);
void save_scored_pool(const std::vector<ScoredCandidate>& pool,
                      std::uint64_t model_fingerprint, std::uint64_t dataset_fingerprint,
                      const std::filesystem::path& path);

}  // namespace prefroute
