#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "prefroute/core.hpp"
#include "prefroute/metrics.hpp"
#include "prefroute/tokenize.hpp"

namespace prefroute {

// Dimension names. Textual dimensions are discretized into three bins each;
// descriptive dimensions carry categorical values.
namespace dims {
inline constexpr const char* bertscore = "bertscore";
inline constexpr const char* bertscore_length_adjusted = "bertscore_length_adjusted";
inline constexpr const char* rouge_l = "rouge_l";
inline constexpr const char* cosine_similarity = "cosine_similarity";
inline constexpr const char* entity_similarity = "entity_similarity";
inline constexpr const char* prompt_len = "prompt_len";
inline constexpr const char* shorter_response_len = "shorter_response_len";
inline constexpr const char* longer_response_len = "longer_response_len";
inline constexpr const char* token_length_diff = "token_length_diff";

inline constexpr const char* subject_of_expertise = "subject_of_expertise";
inline constexpr const char* expertise_level = "expertise_level";
inline constexpr const char* languages = "languages";
inline constexpr const char* open_endedness = "open_endedness";
inline constexpr const char* safety_concern = "safety_concern";
inline constexpr const char* complexity_of_intents = "complexity_of_intents";
inline constexpr const char* in_context_material = "type_of_in_context_material";
inline constexpr const char* format_constraints = "format_constraints";

// Canonical orders; vocabulary indices follow these.
const std::vector<std::string>& textual_dimensions();
const std::vector<std::string>& descriptive_dimensions();

bool is_textual(const std::string& dimension);
bool is_single_valued(const std::string& dimension);
bool is_presence(const std::string& dimension);

// Documented value domain for fixed single-valued dimensions; empty for open
// vocabularies (subject_of_expertise, languages).
const std::vector<std::string>& documented_domain(const std::string& dimension);
}  // namespace dims

// Lowercase, trim, collapse whitespace/hyphens to '_'.
std::string normalize_tag_value(std::string_view value);

// "dimension:value" for valued tags, bare dimension for presence tags.
std::string make_tag(const std::string& dimension, const std::string& value);
std::string tag_bin(const std::string& dimension, Bin bin);

class TagVocabulary {
 public:
  TagVocabulary() = default;
  // (tag, dimension) pairs in index order; tags must be unique.
  explicit TagVocabulary(std::vector<std::pair<std::string, std::string>> entries);

  std::size_t size() const { return tags_.size(); }
  const std::vector<std::string>& tags() const { return tags_; }
  const std::string& tag(std::size_t i) const { return tags_[i]; }
  const std::string& dimension_of(std::size_t i) const { return dimensions_[i]; }
  std::optional<std::size_t> index_of(std::string_view tag) const;
  std::uint64_t fingerprint() const { return fingerprint_; }

 private:
  std::vector<std::string> tags_;
  std::vector<std::string> dimensions_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::uint64_t fingerprint_ = 0;
};

struct TagAssignment {
  std::string instance_id;
  std::vector<std::string> tags;  // unique, in vocabulary-construction order
  std::map<std::string, double> raw_metrics;
  std::vector<std::string> flags;
};

// External tagger endpoint; see tagger_client.hpp for the HTTP implementation.
class TaggerClient {
 public:
  virtual ~TaggerClient() = default;
  // dimension -> values for one prompt. Throws on failure.
  virtual std::map<std::string, std::vector<std::string>> describe(
      const std::string& prompt) = 0;
  virtual int max_in_flight() const { return 1; }
};

struct TaggingOptions {
  // Textual dimensions to skip (by dimension name).
  std::set<std::string> disabled_textual;
  bool descriptive = true;
  // When set, descriptive tags come from the endpoint instead of the records.
  bool use_tagger_endpoint = false;

  // Deterministic hashing-trick embeddings used when the data carries none.
  bool allow_fallback_embeddings = true;
  std::uint64_t fallback_embedding_seed = 104729;
  int fallback_embedding_dim = 64;

  bool allow_entity_fallback = true;

  std::shared_ptr<const Tokenizer> tokenizer;  // default_tokenizer() when null
  int threads = 0;                             // 0 = hardware concurrency
};

struct TaggerFailure {
  std::string instance_id;
  std::string error;
};

struct TaggingResult {
  TagVocabulary vocabulary;
  std::vector<TagAssignment> assignments;  // aligned to dataset order
  std::vector<std::string> warnings;
  std::vector<TaggerFailure> tagger_failures;
};

// Computes enabled textual metrics, bins them, ingests or fetches descriptive
// tags, and builds the vocabulary. Deterministic given inputs and options.
TaggingResult tag_dataset(const Dataset& d, const TaggingOptions& options,
                          TaggerClient* tagger = nullptr);

// Descriptive ingestion alone (record-borne maps -> tag sets per instance).
std::vector<TagAssignment> ingest_descriptive_tags(const Dataset& d,
                                                   std::vector<std::string>* warnings);

// Deterministic token embedding: seeded unit vector from the token's bytes.
std::vector<double> fallback_token_embedding(std::string_view token, std::uint64_t seed,
                                             int dim);

void save_tags(const std::vector<TagAssignment>& assignments,
               std::uint64_t dataset_fingerprint, std::uint64_t vocabulary_fingerprint,
               const std::filesystem::path& path);
struct LoadedTags {
  std::vector<TagAssignment> assignments;
  std::uint64_t dataset_fingerprint = 0;
  std::uint64_t vocabulary_fingerprint = 0;
};
LoadedTags load_tags(const std::filesystem::path& path);

void save_vocabulary(const TagVocabulary& vocab, std::uint64_t dataset_fingerprint,
                     const std::filesystem::path& path);
struct LoadedVocabulary {
  TagVocabulary vocabulary;
  std::uint64_t dataset_fingerprint = 0;
};
LoadedVocabulary load_vocabulary(const std::filesystem::path& path);

}  // namespace prefroute
