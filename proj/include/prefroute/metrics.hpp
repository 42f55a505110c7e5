#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace prefroute {

// Score plus a convention flag. flagged = true means the value came from an
// edge-case convention (empty inputs, zero-norm vector) rather than the formula.
struct MetricResult {
  double value = 0.0;
  bool flagged = false;
};

// ROUGE-L F-measure over token sequences: F = 2PR/(P+R) with P = LCS/|a|,
// R = LCS/|b|. Either side empty scores 0, flagged.
MetricResult rouge_l(const std::vector<std::string>& tokens_a,
                     const std::vector<std::string>& tokens_b);

// u.v / (|u||v|). Throws NumericError on a zero-norm input.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

// |a∩b| / |a∪b| over case-normalized strings. Both empty scores 1.0, flagged.
MetricResult entity_iou(const std::set<std::string>& a, const std::set<std::string>& b);

// Greedy-matching F1 over per-token embeddings, unit-normalizing each vector
// first. With length_adjusted, F1 is multiplied by min(|a|,|b|)/max(|a|,|b|).
// Either side empty scores 0, flagged.
MetricResult bert_score(const std::vector<std::vector<double>>& tokens_a,
                        const std::vector<std::vector<double>>& tokens_b,
                        bool length_adjusted);

struct LengthMetrics {
  std::uint64_t prompt_len = 0;
  std::uint64_t shorter_response_len = 0;
  std::uint64_t longer_response_len = 0;
  std::uint64_t length_diff = 0;
};

LengthMetrics length_metrics(std::size_t prompt_tokens, std::size_t response_a_tokens,
                             std::size_t response_b_tokens);

// Three equal-width bins over [0,1]; boundary values go up, 1.0 stays in the
// top bin. Values outside [0,1] are clamped.
enum class Bin : int { low = 0, mid = 1, high = 2 };
Bin assign_bin(double value01, double edge_low = 1.0 / 3.0, double edge_high = 2.0 / 3.0);
std::string_view bin_label(Bin bin);

struct BinnedValues {
  std::vector<Bin> bins;
  bool constant_input = false;  // min == max after normalization request
};

// Min-max normalizes when requested (for unbounded metrics), then bins each
// value. A constant input maps everything to the middle bin and sets the flag.
BinnedValues normalize_and_bin(std::span<const double> values, bool minmax_normalize,
                               double edge_low = 1.0 / 3.0, double edge_high = 2.0 / 3.0);

}  // namespace prefroute
