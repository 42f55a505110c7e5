#include "prefroute/routing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "prefroute/errors.hpp"
#include "prefroute/fingerprint.hpp"
#include "prefroute/parallel.hpp"

namespace prefroute {

std::string_view strategy_to_string(Strategy s) {
  switch (s) {
    case Strategy::simulated: return "simulated";
    case Strategy::topk_gain: return "topk";
    case Strategy::random_fraction: return "random";
    case Strategy::all_human: return "all-human";
    case Strategy::all_lm: return "all-lm";
  }
  return "simulated";
}

Strategy parse_strategy(std::string_view s) {
  if (s == "simulated") return Strategy::simulated;
  if (s == "topk" || s == "topk-gain") return Strategy::topk_gain;
  if (s == "random" || s == "random-fraction") return Strategy::random_fraction;
  if (s == "all-human") return Strategy::all_human;
  if (s == "all-lm") return Strategy::all_lm;
  throw ValidationError("unknown routing strategy: " + std::string(s));
}

ModelFeatureMapper::ModelFeatureMapper(const PpmModel& model) : model_(&model) {
  for (std::size_t i = 0; i < model.vocabulary.size(); ++i)
    index_.emplace(model.vocabulary[i], i);
}

std::vector<std::uint32_t> ModelFeatureMapper::one_hot(const TagAssignment& assignment,
                                                       std::size_t* dropped) const {
  std::vector<std::uint32_t> counts(model_->vocabulary.size(), 0);
  for (const auto& tag : assignment.tags) {
    auto it = index_.find(tag);
    if (it == index_.end()) {
      if (dropped) ++*dropped;
      continue;
    }
    ++counts[it->second];
  }
  return counts;
}

std::vector<std::uint32_t> ModelFeatureMapper::subset_counts(
    std::span<const std::uint32_t> positions,
    const std::vector<TagAssignment>& assignments, std::size_t* dropped) const {
  std::vector<std::uint32_t> counts(model_->vocabulary.size(), 0);
  for (const std::uint32_t pos : positions) {
    for (const auto& tag : assignments[pos].tags) {
      auto it = index_.find(tag);
      if (it == index_.end()) {
        if (dropped) ++*dropped;
        continue;
      }
      ++counts[it->second];
    }
  }
  return counts;
}

std::vector<std::uint32_t> ModelFeatureMapper::remap_counts(
    std::span<const std::uint32_t> counts, const TagVocabulary& dataset_vocab,
    std::size_t* dropped_mass) const {
  if (counts.size() != dataset_vocab.size())
    throw ValidationError("counts length does not match the dataset vocabulary");
  std::vector<std::uint32_t> out(model_->vocabulary.size(), 0);
  for (std::size_t j = 0; j < counts.size(); ++j) {
    if (counts[j] == 0) continue;
    auto it = index_.find(dataset_vocab.tag(j));
    if (it == index_.end()) {
      if (dropped_mass) *dropped_mass += counts[j];
      continue;
    }
    out[it->second] += counts[j];
  }
  return out;
}

double ModelFeatureMapper::coverage(const std::vector<TagAssignment>& assignments) const {
  std::uint64_t total = 0, known = 0;
  for (const auto& a : assignments) {
    for (const auto& tag : a.tags) {
      ++total;
      if (index_.count(tag)) ++known;
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(known) / static_cast<double>(total);
}

double instance_gain(const ModelFeatureMapper& mapper, const TagAssignment& assignment,
                     std::size_t* dropped) {
  const auto counts = mapper.one_hot(assignment, dropped);
  const std::vector<std::uint32_t> zero(counts.size(), 0);
  return mapper.model().predict_counts(counts) - mapper.model().predict_counts(zero);
}

namespace {

RoutingResult make_result(const Dataset& d, Strategy strategy,
                          std::span<const std::uint32_t> human_positions) {
  RoutingResult result;
  result.strategy = strategy;
  result.configuration = to_routing_configuration(human_positions, d);
  result.budget_realized = result.configuration.human_count();
  result.dataset_fingerprint = d.fingerprint();
  return result;
}

}  // namespace

RoutingResult route_simulated(const Dataset& d,
                              const std::vector<TagAssignment>& assignments,
                              const TagVocabulary& vocab, const TagIndex& index,
                              const PpmModel& model, const SimulatedOptions& options,
                              std::vector<ScoredCandidate>* scored_pool,
                              const std::vector<CandidateRecord>* extra_pool) {
  if (options.n_sims == 0 && (extra_pool == nullptr || extra_pool->empty()))
    throw ValidationError("route_simulated needs at least one candidate to score");

  CandidateGenOptions gen;
  gen.count = options.n_sims;
  gen.seed = options.seed;
  gen.id_prefix = "sim";
  gen.include_endpoints =
      options.include_endpoints.value_or(!options.budget.has_value());
  gen.fixed_budget = options.budget;
  gen.window_retry_cap = options.window_retry_cap;
  if (options.budget) {
    const double b = static_cast<double>(*options.budget);
    const auto lo = static_cast<std::uint64_t>(std::ceil(b * (1.0 - options.slack)));
    const auto hi = static_cast<std::uint64_t>(std::floor(b * (1.0 + options.slack)));
    gen.realized_window = {lo, std::max(lo, hi)};
    gen.include_endpoints = options.include_endpoints.value_or(false);
  }

  CandidateSet pool =
      generate_candidate_set(index, assignments, vocab, d.size(), d.fingerprint(), gen);
  if (extra_pool)
    for (const auto& record : *extra_pool) pool.records.push_back(record);
  if (pool.records.empty())
    throw ValidationError(
        "no sampled candidate landed within ±" + std::to_string(options.slack * 100.0) +
        "% of the requested budget; increase the slack or the number of simulations");

  const ModelFeatureMapper mapper(model);
  const bool same_vocab = model.vocabulary_fingerprint == vocab.fingerprint();

  std::vector<double> scores(pool.records.size());
  std::vector<std::size_t> dropped(pool.records.size(), 0);
  parallel_for(pool.records.size(), options.threads, [&](std::size_t i) {
    const auto& record = pool.records[i];
    if (same_vocab) {
      scores[i] = model.predict_counts(record.features.counts);
    } else {
      const auto remapped =
          mapper.remap_counts(record.features.counts, vocab, &dropped[i]);
      scores[i] = model.predict_counts(remapped);
    }
  });

  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    const auto& a = pool.records[i];
    const auto& b = pool.records[best];
    if (scores[i] > scores[best] ||
        (scores[i] == scores[best] && a.realized_size() < b.realized_size())) {
      best = i;
    }
  }

  RoutingResult result =
      make_result(d, Strategy::simulated, pool.records[best].human_subset);
  result.predicted_performance = scores[best];
  result.budget_requested = options.budget;
  result.n_simulations = pool.records.size();
  result.seed = options.seed;
  result.model_fingerprint = model.vocabulary_fingerprint;
  result.vocab_coverage = same_vocab ? 1.0 : mapper.coverage(assignments);
  result.dropped_tags = std::accumulate(dropped.begin(), dropped.end(), std::size_t{0});

  if (scored_pool) {
    scored_pool->clear();
    for (std::size_t i = 0; i < pool.records.size(); ++i)
      scored_pool->push_back({pool.records[i].candidate_id,
                              pool.records[i].realized_size(), scores[i]});
  }
  return result;
}

RoutingResult route_topk(const Dataset& d, const std::vector<TagAssignment>& assignments,
                         const PpmModel& model, std::uint64_t k) {
  if (assignments.size() != d.size())
    throw ValidationError("assignments are not aligned to the dataset");
  if (k > d.size())
    throw ValidationError("k exceeds the dataset size");

  const ModelFeatureMapper mapper(model);
  std::vector<double> gains(d.size());
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < d.size(); ++i)
    gains[i] = instance_gain(mapper, assignments[i], &dropped);

  std::vector<std::uint32_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return gains[a] > gains[b]; });
  std::vector<std::uint32_t> human(order.begin(),
                                   order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(human.begin(), human.end());

  RoutingResult result = make_result(d, Strategy::topk_gain, human);
  result.budget_requested = k;
  result.gains = std::move(gains);
  result.model_fingerprint = model.vocabulary_fingerprint;
  result.vocab_coverage = mapper.coverage(assignments);
  result.dropped_tags = dropped;

  std::size_t unused = 0;
  const auto counts = mapper.subset_counts(human, assignments, &unused);
  result.predicted_performance = model.predict_counts(counts);
  return result;
}

RoutingResult route_random_fraction(const Dataset& d, double fraction,
                                    std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0)
    throw ValidationError("fraction must lie in [0, 1]");
  const auto k = static_cast<std::uint32_t>(
      std::floor(fraction * static_cast<double>(d.size())));
  Rng rng(child_seed(seed, "random_fraction"));
  const auto human =
      rng.sample_without_replacement(static_cast<std::uint32_t>(d.size()), k);
  RoutingResult result = make_result(d, Strategy::random_fraction, human);
  result.budget_requested = k;
  result.seed = seed;
  return result;
}

RoutingResult route_all_human(const Dataset& d) {
  std::vector<std::uint32_t> all(d.size());
  std::iota(all.begin(), all.end(), 0);
  return make_result(d, Strategy::all_human, all);
}

RoutingResult route_all_lm(const Dataset& d) {
  return make_result(d, Strategy::all_lm, {});
}

void save_routing_result(const RoutingResult& result, const std::filesystem::path& path) {
  AtomicWriter out(path);
  Json header;
  header["type"] = "routing";
  header["strategy"] = std::string(strategy_to_string(result.strategy));
  header["seed"] = result.seed;
  header["n_simulations"] = result.n_simulations;
  if (result.predicted_performance)
    header["predicted_performance"] = *result.predicted_performance;
  else
    header["predicted_performance"] = nullptr;
  if (result.budget_requested)
    header["budget_requested"] = *result.budget_requested;
  else
    header["budget_requested"] = nullptr;
  header["budget_realized"] = result.budget_realized;
  header["model_fingerprint"] = fingerprint_hex(result.model_fingerprint);
  header["dataset_fingerprint"] = fingerprint_hex(result.dataset_fingerprint);
  header["vocab_coverage"] = result.vocab_coverage;
  header["dropped_tags"] = result.dropped_tags;
  header["n"] = result.configuration.size();
  out.line(header);
  for (std::size_t i = 0; i < result.configuration.size(); ++i) {
    Json rec;
    rec["id"] = result.configuration.instance_ids[i];
    rec["z"] = static_cast<int>(result.configuration.assignments[i]);
    if (result.gains) rec["gain"] = (*result.gains)[i];
    out.line(rec);
  }
  out.commit();
}

void save_scored_pool(const std::vector<ScoredCandidate>& pool,
                      std::uint64_t model_fingerprint, std::uint64_t dataset_fingerprint,
                      const std::filesystem::path& path) {
  AtomicWriter out(path);
  Json header;
  header["type"] = "scored_pool";
  header["model_fingerprint"] = fingerprint_hex(model_fingerprint);
  header["dataset_fingerprint"] = fingerprint_hex(dataset_fingerprint);
  header["n"] = pool.size();
  out.line(header);
  for (const auto& entry : pool) {
    Json rec;
    rec["candidate_id"] = entry.candidate_id;
    rec["realized_size"] = entry.realized_size;
    rec["predicted_performance"] = entry.predicted;
    out.line(rec);
  }
  out.commit();
}

}  // namespace prefroute
