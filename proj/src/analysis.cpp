#include "prefroute/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "prefroute/errors.hpp"
#include "prefroute/fingerprint.hpp"

namespace prefroute {

AgreementReport agreement(std::span<const Label> labels_a,
                          std::span<const Label> labels_b) {
  if (labels_a.size() != labels_b.size())
    throw ValidationError("agreement requires equal-length label sequences");
  if (labels_a.empty())
    throw ValidationError("agreement requires at least one label pair");

  AgreementReport report;
  report.n = labels_a.size();
  for (std::size_t i = 0; i < labels_a.size(); ++i)
    ++report.confusion[static_cast<std::size_t>(labels_a[i])]
                      [static_cast<std::size_t>(labels_b[i])];

  const double n = static_cast<double>(report.n);
  double diagonal = 0.0, chance = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    diagonal += static_cast<double>(report.confusion[c][c]);
    double row = 0.0, col = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      row += static_cast<double>(report.confusion[c][k]);
      col += static_cast<double>(report.confusion[k][c]);
    }
    chance += (row / n) * (col / n);
  }
  report.percent_agreement = diagonal / n;
  if (chance < 1.0)
    report.cohen_kappa = (report.percent_agreement - chance) / (1.0 - chance);
  return report;
}

AgreementReport agreement_on(const Dataset& d, const RoutingConfiguration* z,
                             AgreementSubset subset) {
  if (subset != AgreementSubset::all && z == nullptr)
    throw ValidationError("a routing configuration is required to restrict agreement to "
                          "one routed subset");
  if (z && (z->assignments.size() != d.size()))
    throw ValidationError("routing configuration does not match the dataset size");

  std::vector<Label> human, lm;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& inst = d.at(i);
    if (!inst.human_label || !inst.lm_label)
      throw ValidationError("instance " + inst.id + " lacks one of the two labels");
    if (z && z->instance_ids[i] != inst.id)
      throw ValidationError("routing configuration misaligned at position " +
                            std::to_string(i));
    if (subset == AgreementSubset::human_routed && z->assignments[i] != 0) continue;
    if (subset == AgreementSubset::lm_routed && z->assignments[i] != 1) continue;
    human.push_back(*inst.human_label);
    lm.push_back(*inst.lm_label);
  }
  return agreement(human, lm);
}

Json agreement_to_json(const AgreementReport& report) {
  Json out;
  out["type"] = "agreement";
  out["n"] = report.n;
  out["percent_agreement"] = report.percent_agreement;
  if (report.cohen_kappa)
    out["cohen_kappa"] = *report.cohen_kappa;
  else
    out["cohen_kappa"] = nullptr;
  static const char* names[3] = {"A", "B", "tie"};
  Json confusion = Json::object();
  for (std::size_t a = 0; a < 3; ++a) {
    Json row = Json::object();
    for (std::size_t b = 0; b < 3; ++b) row[names[b]] = report.confusion[a][b];
    confusion[names[a]] = std::move(row);
  }
  out["confusion"] = std::move(confusion);
  return out;
}

double weighted_overall(const AspectRatings& ratings, const AspectWeights& weights) {
  return weights.helpfulness * ratings.helpfulness +
         weights.correctness * ratings.correctness +
         weights.coherence * ratings.coherence +
         weights.complexity * ratings.complexity +
         weights.verbosity * ratings.verbosity;
}

Label binarize_aspects(const AspectRatings& ratings_1, const AspectRatings& ratings_2,
                       const AspectWeights& weights) {
  const double diff =
      weighted_overall(ratings_1, weights) - weighted_overall(ratings_2, weights);
  if (std::abs(diff) <= 1e-9) return Label::Tie;
  return diff > 0.0 ? Label::A : Label::B;
}

AspectRatings parse_aspect_ratings(const Json& object, const std::string& context) {
  if (!object.is_object())
    throw ValidationError(context + " must be an object of aspect scores");
  auto get = [&](const char* aspect) {
    auto it = object.find(aspect);
    if (it == object.end() || !it->is_number())
      throw ValidationError(context + " is missing aspect `" + aspect + "`");
    return it->get<double>();
  };
  AspectRatings r;
  r.helpfulness = get("helpfulness");
  r.correctness = get("correctness");
  r.coherence = get("coherence");
  r.complexity = get("complexity");
  r.verbosity = get("verbosity");
  return r;
}

namespace {

double quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) return 0.0;
  const double idx = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(idx));
  const auto hi = static_cast<std::size_t>(std::ceil(idx));
  const double frac = idx - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

std::vector<InstanceGainEntry> gain_distribution(const PpmModel& model,
                                                 const std::vector<TagAssignment>& assignments,
                                                 GainSummary* summary) {
  const ModelFeatureMapper mapper(model);
  std::vector<InstanceGainEntry> entries;
  entries.reserve(assignments.size());
  std::vector<double> gains;
  gains.reserve(assignments.size());
  for (const auto& assignment : assignments) {
    const double g = instance_gain(mapper, assignment);
    entries.push_back({assignment.instance_id, g});
    gains.push_back(g);
  }
  if (summary && !gains.empty()) {
    std::vector<double> sorted = gains;
    std::sort(sorted.begin(), sorted.end());
    double mean = 0.0;
    std::size_t positive = 0;
    for (const double g : gains) {
      mean += g;
      if (g > 0.0) ++positive;
    }
    summary->mean = mean / static_cast<double>(gains.size());
    summary->min = sorted.front();
    summary->q25 = quantile(sorted, 0.25);
    summary->median = quantile(sorted, 0.5);
    summary->q75 = quantile(sorted, 0.75);
    summary->max = sorted.back();
    summary->fraction_positive =
        static_cast<double>(positive) / static_cast<double>(gains.size());
  }
  return entries;
}

TagGainEntry tag_gain(const PpmModel& model, const std::vector<TagAssignment>& assignments,
                      const std::string& tag, std::size_t n_route, std::uint64_t seed,
                      std::size_t repeats) {
  TagGainEntry entry;
  entry.tag = tag;

  std::vector<std::uint32_t> carriers;
  for (std::size_t i = 0; i < assignments.size(); ++i)
    if (std::find(assignments[i].tags.begin(), assignments[i].tags.end(), tag) !=
        assignments[i].tags.end())
      carriers.push_back(static_cast<std::uint32_t>(i));
  if (carriers.empty()) return entry;  // n_routed = 0, gain undefined

  const ModelFeatureMapper mapper(model);
  const std::size_t take = std::min(n_route, carriers.size());
  const std::vector<std::uint32_t> zero_counts(model.vocabulary.size(), 0);
  const double baseline = model.predict_counts(zero_counts);

  double total = 0.0;
  if (repeats == 0) repeats = 1;
  for (std::size_t r = 0; r < repeats; ++r) {
    Rng rng(child_seed(seed, "tag_gain", fnv1a64(tag) + r));
    const auto picks = rng.sample_without_replacement(
        static_cast<std::uint32_t>(carriers.size()), static_cast<std::uint32_t>(take));
    std::vector<std::uint32_t> routed;
    routed.reserve(take);
    for (const auto p : picks) routed.push_back(carriers[p]);
    const auto counts = mapper.subset_counts(routed, assignments);
    const double delta = model.predict_counts(counts) - baseline;
    total += delta / static_cast<double>(take);
  }
  entry.n_routed = take;
  entry.mean_normalized_gain = total / static_cast<double>(repeats);
  return entry;
}

GainReport build_gain_report(const PpmModel& model,
                             const std::vector<TagAssignment>& assignments,
                             const TagVocabulary& vocab, std::uint64_t dataset_fingerprint,
                             const GainReportOptions& options) {
  GainReport report;
  report.model_fingerprint = model.vocabulary_fingerprint;
  report.dataset_fingerprint = dataset_fingerprint;
  report.per_instance = gain_distribution(model, assignments, &report.summary);

  std::vector<double> gains;
  gains.reserve(report.per_instance.size());
  for (const auto& e : report.per_instance) gains.push_back(e.gain);
  report.histogram = histogram(gains, options.histogram_bins);

  for (const auto& tag : vocab.tags())
    report.per_tag.push_back(
        tag_gain(model, assignments, tag, options.n_route, options.seed, options.repeats));
  std::stable_sort(report.per_tag.begin(), report.per_tag.end(),
                   [](const TagGainEntry& a, const TagGainEntry& b) {
                     const double ga =
                         a.mean_normalized_gain.value_or(-std::numeric_limits<double>::infinity());
                     const double gb =
                         b.mean_normalized_gain.value_or(-std::numeric_limits<double>::infinity());
                     return ga > gb;
                   });
  return report;
}

GainHistogram histogram(std::span<const double> values, std::size_t bins) {
  GainHistogram h;
  if (values.empty() || bins == 0) return h;
  const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
  double lo = *mn_it, hi = *mx_it;
  if (lo == hi) {
    h.edges = {lo, hi};
    h.counts = {values.size()};
    return h;
  }
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i)
    h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  h.counts.assign(bins, 0);
  for (const double v : values) {
    auto idx = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
    if (idx >= bins) idx = bins - 1;  // the max lands in the last bin
    ++h.counts[idx];
  }
  return h;
}

void write_gain_report(const GainReport& report, const std::filesystem::path& prefix) {
  const std::string model_fp = fingerprint_hex(report.model_fingerprint);
  const std::string dataset_fp = fingerprint_hex(report.dataset_fingerprint);

  {
    AtomicWriter out(prefix.string() + ".instances.csv");
    out.raw("# type=gain_instances\n");
    out.raw("# model_fingerprint=" + model_fp + "\n");
    out.raw("# dataset_fingerprint=" + dataset_fp + "\n");
    out.raw("id,gain\n");
    for (const auto& e : report.per_instance)
      out.raw(csv_escape(e.id) + "," + format_double(e.gain) + "\n");
    out.commit();
  }
  {
    AtomicWriter out(prefix.string() + ".tags.csv");
    out.raw("# type=gain_tags\n");
    out.raw("# model_fingerprint=" + model_fp + "\n");
    out.raw("# dataset_fingerprint=" + dataset_fp + "\n");
    out.raw("tag,mean_normalized_gain,n_routed\n");
    for (const auto& e : report.per_tag) {
      out.raw(csv_escape(e.tag) + ",");
      if (e.mean_normalized_gain) out.raw(format_double(*e.mean_normalized_gain));
      out.raw("," + std::to_string(e.n_routed) + "\n");
    }
    out.commit();
  }
  {
    AtomicWriter out(prefix.string() + ".hist.csv");
    out.raw("# type=gain_histogram\n");
    out.raw("bin_lo,bin_hi,count\n");
    for (std::size_t i = 0; i < report.histogram.counts.size(); ++i)
      out.raw(format_double(report.histogram.edges[i]) + "," +
              format_double(report.histogram.edges[i + 1]) + "," +
              std::to_string(report.histogram.counts[i]) + "\n");
    out.commit();
  }
  {
    Json summary;
    summary["type"] = "gain_summary";
    summary["model_fingerprint"] = model_fp;
    summary["dataset_fingerprint"] = dataset_fp;
    summary["n_instances"] = report.per_instance.size();
    summary["mean"] = report.summary.mean;
    summary["min"] = report.summary.min;
    summary["q25"] = report.summary.q25;
    summary["median"] = report.summary.median;
    summary["q75"] = report.summary.q75;
    summary["max"] = report.summary.max;
    summary["fraction_positive"] = report.summary.fraction_positive;
    atomic_write_text(prefix.string() + ".summary.json", summary.dump(2) + "\n");
  }
}

}  // namespace prefroute
