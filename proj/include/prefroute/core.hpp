#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "prefroute/jsonl.hpp"

namespace prefroute {

enum class Label { A, B, Tie };

// Strict parse: exactly "A", "B" or "tie".
Label parse_label(std::string_view text);
std::string_view label_to_string(Label label);

struct PreferenceInstance {
  std::string id;
  std::string prompt;
  std::string response_a;
  std::string response_b;
  std::optional<Label> human_label;
  std::optional<Label> lm_label;

  // dimension -> one or more categorical values
  std::map<std::string, std::vector<std::string>> descriptive_tags;
  std::optional<std::vector<std::string>> entities_a;
  std::optional<std::vector<std::string>> entities_b;
  std::optional<std::vector<double>> embedding_prompt;
  std::optional<std::vector<double>> embedding_a;
  std::optional<std::vector<double>> embedding_b;
  std::optional<std::vector<std::vector<double>>> token_embeddings_a;
  std::optional<std::vector<std::vector<double>>> token_embeddings_b;

  // Original record as parsed; unknown fields ride along for round trips.
  Json raw;
};

enum class DatasetFormat { jsonl };

class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<PreferenceInstance> instances, std::string provenance);

  const std::vector<PreferenceInstance>& instances() const { return instances_; }
  const PreferenceInstance& at(std::size_t i) const { return instances_[i]; }
  std::size_t size() const { return instances_.size(); }
  bool empty() const { return instances_.empty(); }
  const std::string& provenance() const { return provenance_; }

  // Position of an id, or nullopt.
  std::optional<std::size_t> position_of(std::string_view id) const;

  // Content hash over ids, texts and labels in order; detects reordering.
  std::uint64_t fingerprint() const { return fingerprint_; }

 private:
  std::vector<PreferenceInstance> instances_;
  std::string provenance_;
  std::unordered_map<std::string, std::size_t> index_;
  std::uint64_t fingerprint_ = 0;
};

struct RoutingConfiguration {
  std::vector<std::uint8_t> assignments;  // z_i: 0 = human label, 1 = LM label
  std::vector<std::string> instance_ids;  // parallel to assignments

  std::size_t size() const { return assignments.size(); }
  std::uint64_t human_count() const;
};

struct RoutedLabel {
  std::string id;
  Label label;
  bool from_lm;  // true when z_i = 1
};

Dataset load_dataset(const std::filesystem::path& path,
                     DatasetFormat format = DatasetFormat::jsonl);
void save_dataset(const Dataset& d, const std::filesystem::path& path);

PreferenceInstance parse_instance(const Json& record, std::size_t line);
Json instance_to_json(const PreferenceInstance& inst);

// Keeps instances where neither source labeled a tie. Both labels required.
Dataset filter_ties(const Dataset& d);

// Uniform sample without replacement, original order preserved.
Dataset subsample(const Dataset& d, std::size_t n, std::uint64_t seed);

// Pick the label named by each z_i. Requires both labels on every instance
// and exact id/position alignment.
std::vector<RoutedLabel> apply_routing(const Dataset& d, const RoutingConfiguration& z);

// Merge a sidecar embedding file (JSONL keyed by id) into a new dataset.
Dataset apply_embedding_sidecar(const Dataset& d, const std::filesystem::path& sidecar);

void save_routing_configuration(const RoutingConfiguration& z,
                                std::uint64_t dataset_fingerprint,
                                const std::filesystem::path& path);
// Returns the configuration plus the dataset fingerprint recorded in the header.
std::pair<RoutingConfiguration, std::uint64_t> load_routing_configuration(
    const std::filesystem::path& path);

}  // namespace prefroute
