#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prefroute/rng.hpp"
#include "prefroute/tagging.hpp"

namespace prefroute {

// Inverse mapping tag -> instance positions. Tags are kept in lexicographic
// order and positions in dataset order so iteration is deterministic.
struct TagIndex {
  std::vector<std::pair<std::string, std::vector<std::uint32_t>>> groups;

  std::size_t largest_group() const;
  const std::vector<std::uint32_t>* find(std::string_view tag) const;
};

// assignments must be aligned to dataset order (position i = instance i).
TagIndex build_tag_index(const std::vector<TagAssignment>& assignments);

struct FeatureVector {
  std::vector<std::uint32_t> counts;  // aligned to vocabulary order
  std::uint64_t vocabulary_fingerprint = 0;
};

enum class PerformanceSource { absent, measured, oracle };
std::string_view performance_source_to_string(PerformanceSource s);
PerformanceSource parse_performance_source(std::string_view s);

struct CandidateRecord {
  std::string candidate_id;
  std::uint64_t budget = 0;                   // nominal b; 0 means the all-LM endpoint
  std::vector<std::uint32_t> human_subset;    // positions, ascending
  std::vector<std::string> human_subset_ids;  // filled on load / before save
  FeatureVector features;
  std::optional<double> performance;
  PerformanceSource performance_source = PerformanceSource::absent;

  std::uint64_t realized_size() const {
    return human_subset.empty() ? human_subset_ids.size() : human_subset.size();
  }
};

struct CandidateSet {
  std::uint64_t dataset_fingerprint = 0;
  std::uint64_t vocabulary_fingerprint = 0;
  std::uint64_t dataset_size = 0;
  std::vector<CandidateRecord> records;
};

// Accretion core: add whole tag groups in `group_order` (indices into
// index.groups) until the subset size reaches `budget`, checking after each
// group. Returns ascending positions.
std::vector<std::uint32_t> accrete_groups(const TagIndex& index, std::size_t dataset_size,
                                          std::span<const std::size_t> group_order,
                                          std::uint64_t budget);

// One sampled routing configuration: random budget in {1..n-1} unless fixed,
// shuffled tag order, group accretion. Features are not filled in here.
CandidateRecord sample_candidate(const TagIndex& index, std::size_t dataset_size,
                                 Rng& rng,
                                 std::optional<std::uint64_t> fixed_budget = {});

// Per-tag counts over the human subset.
FeatureVector featurize(std::span<const std::uint32_t> human_subset,
                        const std::vector<TagAssignment>& assignments,
                        const TagVocabulary& vocab);

RoutingConfiguration to_routing_configuration(std::span<const std::uint32_t> human_subset,
                                              const Dataset& d);

struct CandidateGenOptions {
  std::size_t count = 200;
  bool include_endpoints = false;
  std::optional<std::uint64_t> fixed_budget;
  std::uint64_t seed = 0;
  std::string id_prefix = "cand";
  int dedup_retry_cap = 16;
  // When set, only candidates whose realized size lands in [first, second]
  // are kept; each slot is resampled up to window_retry_cap times.
  std::optional<std::pair<std::uint64_t, std::uint64_t>> realized_window;
  int window_retry_cap = 50;
};

CandidateSet generate_candidate_set(const TagIndex& index,
                                    const std::vector<TagAssignment>& assignments,
                                    const TagVocabulary& vocab, std::size_t dataset_size,
                                    std::uint64_t dataset_fingerprint,
                                    const CandidateGenOptions& options,
                                    std::vector<std::string>* warnings = nullptr);

void save_candidate_set(const CandidateSet& set, std::span<const std::string> instance_ids,
                        const std::filesystem::path& path);
// id_resolver maps instance ids to dataset positions; pass nullptr to keep
// subsets as id lists only (enough for fitting, which reads features).
CandidateSet load_candidate_set(
    const std::filesystem::path& path,
    const std::function<std::optional<std::uint32_t>(const std::string&)>& id_resolver =
        nullptr);

// Feature-matrix export for joining with externally measured scores.
void export_feature_matrix(const CandidateSet& set, const TagVocabulary& vocab,
                           const std::filesystem::path& path);

// Joins a CSV of {candidate_id, performance} into a candidate file, marking
// joined rows as measured. Returns the number of records updated.
std::size_t ingest_performance(const std::filesystem::path& candidates_path,
                               const std::filesystem::path& scores_csv,
                               const std::filesystem::path& out_path);

}  // namespace prefroute
