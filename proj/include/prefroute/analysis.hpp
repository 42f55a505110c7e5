#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prefroute/routing.hpp"

namespace prefroute {

struct AgreementReport {
  double percent_agreement = 0.0;
  std::optional<double> cohen_kappa;  // undefined when chance agreement is 1
  // confusion[a][b] with label order A, B, Tie
  std::array<std::array<std::uint64_t, 3>, 3> confusion{};
  std::uint64_t n = 0;
};

AgreementReport agreement(std::span<const Label> labels_a,
                          std::span<const Label> labels_b);

enum class AgreementSubset { all, human_routed, lm_routed };

// Human-vs-LM agreement over a dataset, optionally restricted to one side of
// a routing configuration.
AgreementReport agreement_on(const Dataset& d, const RoutingConfiguration* z,
                             AgreementSubset subset);

Json agreement_to_json(const AgreementReport& report);

struct AspectRatings {
  double helpfulness = 0.0;
  double correctness = 0.0;
  double coherence = 0.0;
  double complexity = 0.0;
  double verbosity = 0.0;
};

struct AspectWeights {
  double helpfulness = 0.65;
  double correctness = 0.80;
  double coherence = 0.45;
  double complexity = 0.55;
  double verbosity = -0.40;
};

double weighted_overall(const AspectRatings& ratings, const AspectWeights& weights);

// A if side 1 scores higher, B if side 2 does, Tie within 1e-9.
Label binarize_aspects(const AspectRatings& ratings_1, const AspectRatings& ratings_2,
                       const AspectWeights& weights = {});

// Parses {helpfulness, correctness, coherence, complexity, verbosity} from a
// JSON object; names the missing aspect in the error.
AspectRatings parse_aspect_ratings(const Json& object, const std::string& context);

struct InstanceGainEntry {
  std::string id;
  double gain = 0.0;
};

struct GainSummary {
  double mean = 0.0;
  double min = 0.0, q25 = 0.0, median = 0.0, q75 = 0.0, max = 0.0;
  double fraction_positive = 0.0;
};

struct TagGainEntry {
  std::string tag;
  std::optional<double> mean_normalized_gain;  // undefined when no instance has the tag
  std::uint64_t n_routed = 0;
};

struct GainHistogram {
  std::vector<double> edges;        // size bins + 1
  std::vector<std::uint64_t> counts;  // size bins
};

struct GainReport {
  std::vector<InstanceGainEntry> per_instance;
  GainSummary summary;
  GainHistogram histogram;
  std::vector<TagGainEntry> per_tag;  // sorted descending by gain
  std::uint64_t model_fingerprint = 0;
  std::uint64_t dataset_fingerprint = 0;
};

std::vector<InstanceGainEntry> gain_distribution(const PpmModel& model,
                                                 const std::vector<TagAssignment>& assignments,
                                                 GainSummary* summary = nullptr);

// Gain of routing up to n_route random carriers of `tag`, normalized by the
// number routed; averaged over `repeats` independent draws.
TagGainEntry tag_gain(const PpmModel& model, const std::vector<TagAssignment>& assignments,
                      const std::string& tag, std::size_t n_route, std::uint64_t seed,
                      std::size_t repeats = 1);

struct GainReportOptions {
  std::size_t n_route = 100;
  std::size_t repeats = 1;
  std::uint64_t seed = 0;
  std::size_t histogram_bins = 30;
};

GainReport build_gain_report(const PpmModel& model,
                             const std::vector<TagAssignment>& assignments,
                             const TagVocabulary& vocab, std::uint64_t dataset_fingerprint,
                             const GainReportOptions& options);

// Writes <prefix>.instances.csv, <prefix>.tags.csv, <prefix>.hist.csv and
// <prefix>.summary.json.
void write_gain_report(const GainReport& report, const std::filesystem::path& prefix);

GainHistogram histogram(std::span<const double> values, std::size_t bins);

}  // namespace prefroute
