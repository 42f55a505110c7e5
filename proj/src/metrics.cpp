#include "prefroute/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "prefroute/errors.hpp"

namespace prefroute {

namespace {

std::size_t lcs_length(const std::vector<std::string>& a,
                       const std::vector<std::string>& b) {
  // Rolling single-row DP.
  std::vector<std::size_t> row(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = 0;  // row[j-1] from the previous iteration of i
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = (a[i - 1] == b[j - 1]) ? diag + 1 : std::max(row[j], row[j - 1]);
      diag = up;
    }
  }
  return row[b.size()];
}

std::vector<std::vector<double>> unit_normalize(
    const std::vector<std::vector<double>>& rows) {
  std::vector<std::vector<double>> out = rows;
  for (auto& row : out) {
    double norm = 0.0;
    for (const double x : row) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (double& x : row) x /= norm;
  }
  return out;
}

double mean_max_dot(const std::vector<std::vector<double>>& from,
                    const std::vector<std::vector<double>>& against) {
  double total = 0.0;
  for (const auto& u : from) {
    double best = -1.0;
    for (const auto& v : against) {
      double dot = 0.0;
      const std::size_t dim = std::min(u.size(), v.size());
      for (std::size_t k = 0; k < dim; ++k) dot += u[k] * v[k];
      best = std::max(best, dot);
    }
    total += best;
  }
  return total / static_cast<double>(from.size());
}

}  // namespace

MetricResult rouge_l(const std::vector<std::string>& tokens_a,
                     const std::vector<std::string>& tokens_b) {
  if (tokens_a.empty() || tokens_b.empty()) return {0.0, true};
  const auto lcs = static_cast<double>(lcs_length(tokens_a, tokens_b));
  if (lcs == 0.0) return {0.0, false};
  const double precision = lcs / static_cast<double>(tokens_a.size());
  const double recall = lcs / static_cast<double>(tokens_b.size());
  return {2.0 * precision * recall / (precision + recall), false};
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    throw ValidationError("cosine similarity requires equal dimensionality, got " +
                          std::to_string(u.size()) + " and " + std::to_string(v.size()));
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0)
    throw NumericError("cosine similarity undefined for a zero-norm vector");
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

MetricResult entity_iou(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return {1.0, true};
  std::size_t intersection = 0;
  for (const auto& e : a)
    if (b.count(e)) ++intersection;
  const std::size_t unions = a.size() + b.size() - intersection;
  return {static_cast<double>(intersection) / static_cast<double>(unions), false};
}

MetricResult bert_score(const std::vector<std::vector<double>>& tokens_a,
                        const std::vector<std::vector<double>>& tokens_b,
                        bool length_adjusted) {
  if (tokens_a.empty() || tokens_b.empty()) return {0.0, true};
  const auto na = unit_normalize(tokens_a);
  const auto nb = unit_normalize(tokens_b);
  const double recall = mean_max_dot(nb, na);
  const double precision = mean_max_dot(na, nb);
  double f1 = 0.0;
  if (precision + recall > 0.0) f1 = 2.0 * precision * recall / (precision + recall);
  if (length_adjusted) {
    const auto shorter = static_cast<double>(std::min(na.size(), nb.size()));
    const auto longer = static_cast<double>(std::max(na.size(), nb.size()));
    f1 *= shorter / longer;
  }
  return {f1, false};
}

LengthMetrics length_metrics(std::size_t prompt_tokens, std::size_t response_a_tokens,
                             std::size_t response_b_tokens) {
  LengthMetrics m;
  m.prompt_len = prompt_tokens;
  m.shorter_response_len = std::min(response_a_tokens, response_b_tokens);
  m.longer_response_len = std::max(response_a_tokens, response_b_tokens);
  m.length_diff = m.longer_response_len - m.shorter_response_len;
  return m;
}

Bin assign_bin(double value01, double edge_low, double edge_high) {
  const double v = std::clamp(value01, 0.0, 1.0);
  if (v < edge_low) return Bin::low;
  if (v < edge_high) return Bin::mid;
  return Bin::high;
}

std::string_view bin_label(Bin bin) {
  switch (bin) {
    case Bin::low: return "[0.00,0.33)";
    case Bin::mid: return "[0.33,0.67)";
    case Bin::high: return "[0.67,1.00]";
  }
  return "[0.33,0.67)";
}

BinnedValues normalize_and_bin(std::span<const double> values, bool minmax_normalize,
                               double edge_low, double edge_high) {
  BinnedValues out;
  out.bins.reserve(values.size());
  if (values.empty()) return out;

  if (minmax_normalize) {
    const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
    const double mn = *mn_it, mx = *mx_it;
    if (mn == mx) {
      out.constant_input = true;
      out.bins.assign(values.size(), Bin::mid);
      return out;
    }
    for (const double v : values)
      out.bins.push_back(assign_bin((v - mn) / (mx - mn), edge_low, edge_high));
    return out;
  }

  for (const double v : values) out.bins.push_back(assign_bin(v, edge_low, edge_high));
  return out;
}

}  // namespace prefroute
