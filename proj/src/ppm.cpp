#include "prefroute/ppm.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "prefroute/errors.hpp"
#include "prefroute/fingerprint.hpp"
#include "prefroute/jsonl.hpp"

namespace prefroute {

std::string_view ppm_kind_to_string(PpmKind kind) {
  switch (kind) {
    case PpmKind::linear: return "linear";
    case PpmKind::quadratic: return "quadratic";
    case PpmKind::gbt: return "gbt";
  }
  return "linear";
}

PpmKind parse_ppm_kind(std::string_view s) {
  if (s == "linear") return PpmKind::linear;
  if (s == "quadratic") return PpmKind::quadratic;
  if (s == "gbt") return PpmKind::gbt;
  throw ValidationError("unknown model kind: " + std::string(s));
}

double RegressionTree::predict(std::span<const double> x) const {
  int node = 0;
  while (nodes[static_cast<std::size_t>(node)].feature >= 0) {
    const TreeNode& n = nodes[static_cast<std::size_t>(node)];
    const double v = static_cast<std::size_t>(n.feature) < x.size()
                         ? x[static_cast<std::size_t>(n.feature)]
                         : 0.0;
    node = v <= n.threshold ? n.left : n.right;
  }
  return nodes[static_cast<std::size_t>(node)].value;
}

FeatureScaling FeatureScaling::identity(std::size_t p) {
  FeatureScaling s;
  s.shifts.assign(p, 0.0);
  s.scales.assign(p, 1.0);
  return s;
}

FeatureScaling FeatureScaling::dataset_size(std::size_t p, std::size_t n) {
  FeatureScaling s;
  s.shifts.assign(p, 0.0);
  s.scales.assign(p, n > 0 ? 1.0 / static_cast<double>(n) : 1.0);
  return s;
}

std::vector<double> FeatureScaling::apply(std::span<const std::uint32_t> counts) const {
  if (counts.size() != shifts.size())
    throw ValidationError("feature vector length " + std::to_string(counts.size()) +
                          " does not match model scaling length " +
                          std::to_string(shifts.size()));
  std::vector<double> out(counts.size());
  for (std::size_t j = 0; j < counts.size(); ++j)
    out[j] = (static_cast<double>(counts[j]) - shifts[j]) * scales[j];
  return out;
}

std::vector<double> expand_quadratic(std::span<const double> v, QuadraticMode mode) {
  std::vector<double> out(v.begin(), v.end());
  if (mode == QuadraticMode::squares_only) {
    for (const double x : v) out.push_back(x * x);
  } else {
    for (std::size_t j = 0; j < v.size(); ++j)
      for (std::size_t k = j; k < v.size(); ++k) out.push_back(v[j] * v[k]);
  }
  return out;
}

double PpmModel::predict_scaled(std::span<const double> scaled) const {
  switch (kind) {
    case PpmKind::linear: {
      double acc = intercept;
      const std::size_t p = std::min(scaled.size(), weights.size());
      for (std::size_t j = 0; j < p; ++j) acc += weights[j] * scaled[j];
      return acc;
    }
    case PpmKind::quadratic: {
      const auto expanded = expand_quadratic(scaled, mode);
      double acc = intercept;
      const std::size_t p = std::min(expanded.size(), weights.size());
      for (std::size_t j = 0; j < p; ++j) acc += weights[j] * expanded[j];
      return acc;
    }
    case PpmKind::gbt: {
      double acc = base_score;
      for (const auto& tree : trees) acc += learning_rate * tree.predict(scaled);
      return acc;
    }
  }
  return 0.0;
}

double PpmModel::predict_counts(std::span<const std::uint32_t> counts) const {
  return predict_scaled(scaling.apply(counts));
}

double PpmModel::predict(const FeatureVector& v) const {
  if (vocabulary_fingerprint != 0 && v.vocabulary_fingerprint != 0 &&
      v.vocabulary_fingerprint != vocabulary_fingerprint)
    throw ValidationError(
        "feature vector vocabulary fingerprint does not match the model; remap the "
        "features first");
  return predict_counts(v.counts);
}

namespace {

struct LeastSquares {
  double intercept = 0.0;
  std::vector<double> weights;
  bool minnorm_fallback = false;
};

LeastSquares ridge_solve(const std::vector<std::vector<double>>& x,
                         std::span<const double> y, double ridge) {
  const std::size_t n = x.size();
  if (n < 2) throw ValidationError("fitting requires at least 2 rows");
  if (y.size() != n) throw ValidationError("feature rows and targets differ in length");
  const std::size_t p = x.front().size();
  for (const auto& row : x)
    if (row.size() != p) throw ValidationError("feature rows differ in length");

  Eigen::MatrixXd a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p + 1));
  Eigen::VectorXd b(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    a(static_cast<Eigen::Index>(i), 0) = 1.0;
    for (std::size_t j = 0; j < p; ++j)
      a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j + 1)) = x[i][j];
    b(static_cast<Eigen::Index>(i)) = y[i];
  }

  LeastSquares fit;
  Eigen::VectorXd beta;
  if (ridge > 0.0) {
    Eigen::MatrixXd normal = a.transpose() * a;
    for (std::size_t j = 1; j <= p; ++j)
      normal(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)) += ridge;
    beta = normal.ldlt().solve(a.transpose() * b);
  } else {
    auto cod = a.completeOrthogonalDecomposition();
    beta = cod.solve(b);
    fit.minnorm_fallback = cod.rank() < static_cast<Eigen::Index>(p + 1);
  }
  fit.intercept = beta(0);
  fit.weights.resize(p);
  for (std::size_t j = 0; j < p; ++j)
    fit.weights[j] = beta(static_cast<Eigen::Index>(j + 1));
  return fit;
}

}  // namespace

PpmModel fit_linear(const std::vector<std::vector<double>>& x, std::span<const double> y,
                    double ridge) {
  if (ridge < 0.0) throw ValidationError("ridge strength must be >= 0");
  const auto fit = ridge_solve(x, y, ridge);
  PpmModel model;
  model.kind = PpmKind::linear;
  model.intercept = fit.intercept;
  model.weights = fit.weights;
  model.scaling = FeatureScaling::identity(x.front().size());
  model.meta.n_train = x.size();
  model.meta.ridge = ridge;
  model.meta.minnorm_fallback = fit.minnorm_fallback;
  return model;
}

PpmModel fit_quadratic(const std::vector<std::vector<double>>& x,
                       std::span<const double> y, double ridge, QuadraticMode mode) {
  if (ridge < 0.0) throw ValidationError("ridge strength must be >= 0");
  std::vector<std::vector<double>> expanded;
  expanded.reserve(x.size());
  for (const auto& row : x) expanded.push_back(expand_quadratic(row, mode));
  const auto fit = ridge_solve(expanded, y, ridge);
  PpmModel model;
  model.kind = PpmKind::quadratic;
  model.mode = mode;
  model.intercept = fit.intercept;
  model.weights = fit.weights;
  model.scaling = FeatureScaling::identity(x.front().size());
  model.meta.n_train = x.size();
  model.meta.ridge = ridge;
  model.meta.minnorm_fallback = fit.minnorm_fallback;
  return model;
}

namespace {

struct TreeBuilder {
  const std::vector<std::vector<double>>& x;
  const std::vector<double>& residuals;
  const GbtParams& params;
  std::vector<TreeNode> nodes;

  int build(std::vector<std::uint32_t>& rows, int depth) {
    double sum = 0.0;
    for (const auto r : rows) sum += residuals[r];
    const double mean = rows.empty() ? 0.0 : sum / static_cast<double>(rows.size());

    const int node_id = static_cast<int>(nodes.size());
    nodes.push_back({});
    nodes.back().value = mean;

    if (depth >= params.max_depth ||
        rows.size() < 2 * static_cast<std::size_t>(params.min_leaf))
      return node_id;

    // Best split by squared-error reduction, scanning features in order and
    // thresholds ascending; strict improvement keeps ties deterministic.
    const std::size_t p = x.front().size();
    double best_sse = std::numeric_limits<double>::infinity();
    int best_feature = -1;
    double best_threshold = 0.0;

    double total_sq = 0.0;
    for (const auto r : rows) total_sq += residuals[r] * residuals[r];
    const double base_sse = total_sq - sum * sum / static_cast<double>(rows.size());

    std::vector<std::uint32_t> sorted = rows;
    for (std::size_t j = 0; j < p; ++j) {
      std::sort(sorted.begin(), sorted.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (x[a][j] != x[b][j]) return x[a][j] < x[b][j];
        return a < b;
      });
      double left_sum = 0.0, left_sq = 0.0;
      for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
        const double v = residuals[sorted[i]];
        left_sum += v;
        left_sq += v * v;
        if (x[sorted[i]][j] == x[sorted[i + 1]][j]) continue;
        const std::size_t nl = i + 1, nr = sorted.size() - nl;
        if (nl < static_cast<std::size_t>(params.min_leaf) ||
            nr < static_cast<std::size_t>(params.min_leaf))
          continue;
        const double right_sum = sum - left_sum;
        const double right_sq = total_sq - left_sq;
        const double sse = (left_sq - left_sum * left_sum / static_cast<double>(nl)) +
                           (right_sq - right_sum * right_sum / static_cast<double>(nr));
        if (sse < best_sse && sse < base_sse) {
          best_sse = sse;
          best_feature = static_cast<int>(j);
          best_threshold = 0.5 * (x[sorted[i]][j] + x[sorted[i + 1]][j]);
        }
      }
    }

    if (best_feature < 0) return node_id;

    std::vector<std::uint32_t> left_rows, right_rows;
    for (const auto r : rows) {
      if (x[r][static_cast<std::size_t>(best_feature)] <= best_threshold)
        left_rows.push_back(r);
      else
        right_rows.push_back(r);
    }
    const int left = build(left_rows, depth + 1);
    const int right = build(right_rows, depth + 1);
    nodes[static_cast<std::size_t>(node_id)].feature = best_feature;
    nodes[static_cast<std::size_t>(node_id)].threshold = best_threshold;
    nodes[static_cast<std::size_t>(node_id)].left = left;
    nodes[static_cast<std::size_t>(node_id)].right = right;
    return node_id;
  }
};

}  // namespace

PpmModel fit_gbt(const std::vector<std::vector<double>>& x, std::span<const double> y,
                 const GbtParams& params) {
  if (params.min_leaf < 1) throw ValidationError("min_leaf must be >= 1");
  if (x.size() < 2 * static_cast<std::size_t>(params.min_leaf))
    throw ValidationError("gbt fitting requires at least 2*min_leaf rows");
  if (y.size() != x.size())
    throw ValidationError("feature rows and targets differ in length");

  PpmModel model;
  model.kind = PpmKind::gbt;
  model.learning_rate = params.learning_rate;
  model.scaling = FeatureScaling::identity(x.front().size());
  model.meta.n_train = x.size();

  model.base_score = std::accumulate(y.begin(), y.end(), 0.0) /
                     static_cast<double>(y.size());
  std::vector<double> residuals(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) residuals[i] = y[i] - model.base_score;

  std::vector<std::uint32_t> all(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) all[i] = static_cast<std::uint32_t>(i);

  for (int t = 0; t < params.n_trees; ++t) {
    TreeBuilder builder{x, residuals, params, {}};
    std::vector<std::uint32_t> rows = all;
    builder.build(rows, 0);
    RegressionTree tree{std::move(builder.nodes)};
    for (std::size_t i = 0; i < x.size(); ++i)
      residuals[i] -= params.learning_rate * tree.predict(x[i]);
    model.trees.push_back(std::move(tree));
  }
  return model;
}

PpmModel fit_ppm(const CandidateSet& train, const TagVocabulary& vocab,
                 const FitOptions& options) {
  if (vocab.fingerprint() != train.vocabulary_fingerprint)
    throw ValidationError("vocabulary does not match the candidate set");
  const auto scaling =
      FeatureScaling::dataset_size(vocab.size(), train.dataset_size);

  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (const auto& record : train.records) {
    if (!record.performance) continue;
    x.push_back(scaling.apply(record.features.counts));
    y.push_back(*record.performance);
  }
  if (x.size() < 2)
    throw ValidationError("fitting requires at least 2 candidates with performance");

  PpmModel model;
  switch (options.kind) {
    case PpmKind::linear: model = fit_linear(x, y, options.ridge); break;
    case PpmKind::quadratic: model = fit_quadratic(x, y, options.ridge, options.mode); break;
    case PpmKind::gbt: model = fit_gbt(x, y, options.gbt); break;
  }
  model.scaling = scaling;
  model.vocabulary = vocab.tags();
  model.vocabulary_fingerprint = vocab.fingerprint();
  model.meta.seed = options.seed;
  model.meta.dataset_fingerprint = train.dataset_fingerprint;
  return model;
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (values[a] != values[b]) return values[a] < values[b];
    return a < b;
  });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    // 1-based ranks, ties share the average of their positions.
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> spearman(std::span<const double> pred,
                               std::span<const double> actual) {
  if (pred.size() != actual.size())
    throw ValidationError("spearman requires equal-length inputs");
  if (pred.size() < 2) throw ValidationError("spearman requires at least 2 points");
  const auto ra = average_ranks(pred);
  const auto rb = average_ranks(actual);
  const double n = static_cast<double>(ra.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return std::nullopt;
  return cov / std::sqrt(va * vb);
}

double rmse(std::span<const double> pred, std::span<const double> actual) {
  if (pred.size() != actual.size())
    throw ValidationError("rmse requires equal-length inputs");
  if (pred.empty()) throw ValidationError("rmse requires at least 1 point");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - actual[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

FitReport evaluate_holdout(const PpmModel& model,
                           std::span<const CandidateRecord> holdout,
                           const std::set<std::string>& training_ids) {
  std::vector<double> pred, actual;
  for (const auto& record : holdout) {
    if (training_ids.count(record.candidate_id))
      throw ValidationError("holdout candidate " + record.candidate_id +
                            " overlaps the training set");
    if (!record.performance)
      throw ValidationError("holdout candidate " + record.candidate_id +
                            " has no performance value");
    pred.push_back(model.predict(record.features));
    actual.push_back(*record.performance);
  }
  FitReport report;
  report.n_train = model.meta.n_train;
  report.n_holdout = holdout.size();
  report.spearman_rho = spearman(pred, actual);
  report.rmse = rmse(pred, actual);
  return report;
}

namespace {

Json scaling_to_json(const FeatureScaling& s) {
  Json out;
  Json shifts = Json::array();
  for (const double v : s.shifts) shifts.push_back(v);
  Json scales = Json::array();
  for (const double v : s.scales) scales.push_back(v);
  out["shifts"] = std::move(shifts);
  out["scales"] = std::move(scales);
  return out;
}

FeatureScaling scaling_from_json(const Json& j) {
  FeatureScaling s;
  for (const auto& v : j["shifts"]) s.shifts.push_back(v.get<double>());
  for (const auto& v : j["scales"]) s.scales.push_back(v.get<double>());
  return s;
}

}  // namespace

void save_model(const PpmModel& model, const std::filesystem::path& path) {
  Json doc;
  doc["type"] = "ppm_model";
  doc["kind"] = std::string(ppm_kind_to_string(model.kind));
  if (model.kind == PpmKind::quadratic)
    doc["expansion"] = model.mode == QuadraticMode::squares_only ? "squares_only"
                                                                 : "full_interactions";
  doc["vocabulary_fingerprint"] = fingerprint_hex(model.vocabulary_fingerprint);
  Json vocab = Json::array();
  for (const auto& t : model.vocabulary) vocab.push_back(t);
  doc["vocabulary"] = std::move(vocab);
  doc["scaling"] = scaling_to_json(model.scaling);

  if (model.kind == PpmKind::gbt) {
    doc["base_score"] = model.base_score;
    doc["learning_rate"] = model.learning_rate;
    Json trees = Json::array();
    for (const auto& tree : model.trees) {
      Json nodes = Json::array();
      for (const auto& node : tree.nodes) {
        Json n;
        n["f"] = node.feature;
        n["t"] = node.threshold;
        n["l"] = node.left;
        n["r"] = node.right;
        n["v"] = node.value;
        nodes.push_back(std::move(n));
      }
      trees.push_back(std::move(nodes));
    }
    doc["trees"] = std::move(trees);
  } else {
    doc["intercept"] = model.intercept;
    Json weights = Json::array();
    for (const double w : model.weights) weights.push_back(w);
    doc["weights"] = std::move(weights);
  }

  Json meta;
  meta["n_train"] = model.meta.n_train;
  meta["seed"] = model.meta.seed;
  meta["ridge"] = model.meta.ridge;
  meta["minnorm_fallback"] = model.meta.minnorm_fallback;
  meta["dataset_fingerprint"] = fingerprint_hex(model.meta.dataset_fingerprint);
  doc["training_meta"] = std::move(meta);

  atomic_write_text(path, doc.dump(2) + "\n");
}

PpmModel load_model(const std::filesystem::path& path) {
  Json doc = Json::parse(read_text_file(path), nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || doc["type"] != "ppm_model")
    throw ValidationError(path.string() + " is not a model file");
  PpmModel model;
  model.kind = parse_ppm_kind(doc["kind"].get<std::string>());
  if (doc.contains("expansion"))
    model.mode = doc["expansion"] == "full_interactions" ? QuadraticMode::full_interactions
                                                         : QuadraticMode::squares_only;
  model.vocabulary_fingerprint =
      parse_fingerprint_hex(doc["vocabulary_fingerprint"].get<std::string>());
  for (const auto& t : doc["vocabulary"]) model.vocabulary.push_back(t.get<std::string>());
  model.scaling = scaling_from_json(doc["scaling"]);

  if (model.kind == PpmKind::gbt) {
    model.base_score = doc["base_score"].get<double>();
    model.learning_rate = doc["learning_rate"].get<double>();
    for (const auto& tree_json : doc["trees"]) {
      RegressionTree tree;
      for (const auto& n : tree_json) {
        TreeNode node;
        node.feature = n["f"].get<int>();
        node.threshold = n["t"].get<double>();
        node.left = n["l"].get<int>();
        node.right = n["r"].get<int>();
        node.value = n["v"].get<double>();
        tree.nodes.push_back(node);
      }
      model.trees.push_back(std::move(tree));
    }
  } else {
    model.intercept = doc["intercept"].get<double>();
    for (const auto& w : doc["weights"]) model.weights.push_back(w.get<double>());
  }

  const Json& meta = doc["training_meta"];
  model.meta.n_train = meta["n_train"].get<std::uint64_t>();
  model.meta.seed = meta["seed"].get<std::uint64_t>();
  model.meta.ridge = meta["ridge"].get<double>();
  model.meta.minnorm_fallback = meta["minnorm_fallback"].get<bool>();
  if (meta.contains("dataset_fingerprint"))
    model.meta.dataset_fingerprint =
        parse_fingerprint_hex(meta["dataset_fingerprint"].get<std::string>());
  return model;
}

TrainingMatrix read_training_matrix(const std::filesystem::path& path,
                                    const TagVocabulary& vocab) {
  const CsvTable table = read_csv(path);
  if (table.header.empty()) throw ValidationError(path.string() + " has no header row");
  long id_col = -1, perf_col = -1;
  std::vector<long> tag_cols(vocab.size(), -1);
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    const auto& name = table.header[c];
    if (name == "candidate_id") {
      id_col = static_cast<long>(c);
    } else if (name == "performance") {
      perf_col = static_cast<long>(c);
    } else if (auto idx = vocab.index_of(name)) {
      tag_cols[*idx] = static_cast<long>(c);
    }
  }
  if (id_col < 0) throw ValidationError(path.string() + " lacks a candidate_id column");
  if (perf_col < 0) throw ValidationError(path.string() + " lacks a performance column");
  for (std::size_t j = 0; j < vocab.size(); ++j)
    if (tag_cols[j] < 0)
      throw ValidationError(path.string() + " lacks a column for tag `" + vocab.tag(j) +
                            "`");

  TrainingMatrix matrix;
  std::size_t row_number = 0;
  for (const auto& row : table.rows) {
    ++row_number;
    if (row.size() != table.header.size())
      throw ValidationError(path.string() + " row " + std::to_string(row_number) +
                            " has " + std::to_string(row.size()) + " fields, expected " +
                            std::to_string(table.header.size()));
    // Rows without a performance value are skipped; scores may arrive for a
    // subset of the exported candidates.
    const auto& perf_cell = row[static_cast<std::size_t>(perf_col)];
    if (perf_cell.empty()) continue;
    try {
      std::vector<std::uint32_t> counts(vocab.size());
      for (std::size_t j = 0; j < vocab.size(); ++j)
        counts[j] = static_cast<std::uint32_t>(
            std::stoul(row[static_cast<std::size_t>(tag_cols[j])]));
      matrix.counts.push_back(std::move(counts));
      matrix.performance.push_back(std::stod(perf_cell));
    } catch (const std::logic_error&) {
      throw ValidationError(path.string() + " row " + std::to_string(row_number) +
                            " has a non-numeric count or performance cell");
    }
    matrix.candidate_ids.push_back(row[static_cast<std::size_t>(id_col)]);
  }
  return matrix;
}

}  // namespace prefroute
