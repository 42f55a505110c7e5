#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "prefroute/candidates.hpp"

namespace prefroute {

enum class PpmKind { linear, quadratic, gbt };
std::string_view ppm_kind_to_string(PpmKind kind);
PpmKind parse_ppm_kind(std::string_view s);

enum class QuadraticMode { squares_only, full_interactions };

struct GbtParams {
  int n_trees = 100;
  int max_depth = 3;
  double learning_rate = 0.1;
  int min_leaf = 5;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  double predict(std::span<const double> x) const;
};

// scaled[j] = (raw[j] - shift[j]) * scale[j]
struct FeatureScaling {
  std::vector<double> shifts;
  std::vector<double> scales;

  static FeatureScaling identity(std::size_t p);
  static FeatureScaling dataset_size(std::size_t p, std::size_t n);
  std::vector<double> apply(std::span<const std::uint32_t> counts) const;
};

struct TrainingMeta {
  std::uint64_t n_train = 0;
  std::uint64_t seed = 0;
  double ridge = 0.0;
  bool minnorm_fallback = false;
  std::uint64_t dataset_fingerprint = 0;
};

struct PpmModel {
  PpmKind kind = PpmKind::linear;
  QuadraticMode mode = QuadraticMode::squares_only;
  std::vector<std::string> vocabulary;
  std::uint64_t vocabulary_fingerprint = 0;
  FeatureScaling scaling;

  // linear / quadratic
  double intercept = 0.0;
  std::vector<double> weights;  // over expanded features for quadratic

  // gbt
  double base_score = 0.0;
  double learning_rate = 0.1;
  std::vector<RegressionTree> trees;

  TrainingMeta meta;

  double predict_scaled(std::span<const double> scaled) const;
  double predict_counts(std::span<const std::uint32_t> counts) const;
  // Fingerprint-checked scoring of a feature vector.
  double predict(const FeatureVector& v) const;
};

std::vector<double> expand_quadratic(std::span<const double> v, QuadraticMode mode);

// Ridge least squares with unpenalized intercept. With ridge = 0 a
// rank-deficient system falls back to the minimum-norm solution and sets
// meta.minnorm_fallback. Rows of x are feature vectors (already scaled).
PpmModel fit_linear(const std::vector<std::vector<double>>& x, std::span<const double> y,
                    double ridge);
PpmModel fit_quadratic(const std::vector<std::vector<double>>& x,
                       std::span<const double> y, double ridge,
                       QuadraticMode mode = QuadraticMode::squares_only);
// Gradient-boosted regression trees on squared loss.
PpmModel fit_gbt(const std::vector<std::vector<double>>& x, std::span<const double> y,
                 const GbtParams& params);

struct FitOptions {
  PpmKind kind = PpmKind::quadratic;
  double ridge = 1e-3;
  QuadraticMode mode = QuadraticMode::squares_only;
  GbtParams gbt;
  std::uint64_t seed = 0;
};

// Pipeline-level fit: scale candidate counts by dataset size, fit the chosen
// regressor, and bind the vocabulary into the model.
PpmModel fit_ppm(const CandidateSet& train, const TagVocabulary& vocab,
                 const FitOptions& options);

// Pearson correlation of average ranks; nullopt when either side is constant.
std::optional<double> spearman(std::span<const double> pred,
                               std::span<const double> actual);
double rmse(std::span<const double> pred, std::span<const double> actual);
std::vector<double> average_ranks(std::span<const double> values);

struct FitReport {
  std::optional<double> spearman_rho;
  double rmse = 0.0;
  std::uint64_t n_train = 0;
  std::uint64_t n_holdout = 0;
};

// Holdout must be disjoint from training by candidate_id and fully scored.
FitReport evaluate_holdout(const PpmModel& model,
                           std::span<const CandidateRecord> holdout,
                           const std::set<std::string>& training_ids);

void save_model(const PpmModel& model, const std::filesystem::path& path);
PpmModel load_model(const std::filesystem::path& path);

// CSV ingestion: candidate_id column, one column per vocabulary tag,
// performance column. Extra columns are ignored.
struct TrainingMatrix {
  std::vector<std::string> candidate_ids;
  std::vector<std::vector<std::uint32_t>> counts;
  std::vector<double> performance;
};
TrainingMatrix read_training_matrix(const std::filesystem::path& path,
                                    const TagVocabulary& vocab);

}  // namespace prefroute
