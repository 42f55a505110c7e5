#include "prefroute/candidates.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "prefroute/errors.hpp"
#include "prefroute/fingerprint.hpp"

namespace prefroute {

std::size_t TagIndex::largest_group() const {
  std::size_t best = 0;
  for (const auto& [tag, positions] : groups) best = std::max(best, positions.size());
  return best;
}

const std::vector<std::uint32_t>* TagIndex::find(std::string_view tag) const {
  for (const auto& [t, positions] : groups)
    if (t == tag) return &positions;
  return nullptr;
}

TagIndex build_tag_index(const std::vector<TagAssignment>& assignments) {
  std::map<std::string, std::vector<std::uint32_t>> by_tag;
  for (std::size_t i = 0; i < assignments.size(); ++i)
    for (const auto& tag : assignments[i].tags)
      by_tag[tag].push_back(static_cast<std::uint32_t>(i));
  TagIndex index;
  index.groups.reserve(by_tag.size());
  for (auto& [tag, positions] : by_tag)
    index.groups.emplace_back(tag, std::move(positions));
  return index;
}

std::string_view performance_source_to_string(PerformanceSource s) {
  switch (s) {
    case PerformanceSource::absent: return "absent";
    case PerformanceSource::measured: return "measured";
    case PerformanceSource::oracle: return "oracle";
  }
  return "absent";
}

PerformanceSource parse_performance_source(std::string_view s) {
  if (s == "absent") return PerformanceSource::absent;
  if (s == "measured") return PerformanceSource::measured;
  if (s == "oracle") return PerformanceSource::oracle;
  throw ValidationError("unknown performance source: " + std::string(s));
}

std::vector<std::uint32_t> accrete_groups(const TagIndex& index, std::size_t dataset_size,
                                          std::span<const std::size_t> group_order,
                                          std::uint64_t budget) {
  std::vector<std::uint32_t> subset;
  if (budget == 0) return subset;
  std::vector<bool> taken(dataset_size, false);
  std::size_t size = 0;
  for (const std::size_t g : group_order) {
    for (const std::uint32_t pos : index.groups[g].second) {
      if (!taken[pos]) {
        taken[pos] = true;
        ++size;
      }
    }
    if (size >= budget) break;
  }
  subset.reserve(size);
  for (std::uint32_t pos = 0; pos < dataset_size; ++pos)
    if (taken[pos]) subset.push_back(pos);
  return subset;
}

CandidateRecord sample_candidate(const TagIndex& index, std::size_t dataset_size,
                                 Rng& rng, std::optional<std::uint64_t> fixed_budget) {
  if (fixed_budget) {
    if (*fixed_budget > dataset_size)
      throw ValidationError("fixed budget " + std::to_string(*fixed_budget) +
                            " exceeds dataset size " + std::to_string(dataset_size));
  } else if (dataset_size < 2) {
    throw ValidationError("sampling a random budget requires a dataset of size >= 2");
  }

  CandidateRecord record;
  record.budget = fixed_budget ? *fixed_budget
                               : rng.between(1, static_cast<std::uint64_t>(dataset_size) - 1);

  std::vector<std::size_t> order(index.groups.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);

  record.human_subset = accrete_groups(index, dataset_size, order, record.budget);
  return record;
}

FeatureVector featurize(std::span<const std::uint32_t> human_subset,
                        const std::vector<TagAssignment>& assignments,
                        const TagVocabulary& vocab) {
  FeatureVector v;
  v.counts.assign(vocab.size(), 0);
  v.vocabulary_fingerprint = vocab.fingerprint();
  for (const std::uint32_t pos : human_subset) {
    if (pos >= assignments.size())
      throw ValidationError("human subset references position " + std::to_string(pos) +
                            " beyond the assignments");
    for (const auto& tag : assignments[pos].tags) {
      const auto idx = vocab.index_of(tag);
      if (!idx)
        throw ValidationError("tag `" + tag + "` on instance " +
                              assignments[pos].instance_id +
                              " is not in the vocabulary");
      ++v.counts[*idx];
    }
  }
  return v;
}

RoutingConfiguration to_routing_configuration(std::span<const std::uint32_t> human_subset,
                                              const Dataset& d) {
  RoutingConfiguration z;
  z.assignments.assign(d.size(), 1);
  z.instance_ids.reserve(d.size());
  for (const auto& inst : d.instances()) z.instance_ids.push_back(inst.id);
  for (const std::uint32_t pos : human_subset) {
    if (pos >= d.size())
      throw ValidationError("human subset position " + std::to_string(pos) +
                            " out of range");
    z.assignments[pos] = 0;
  }
  return z;
}

namespace {

std::string ordinal_id(const std::string& prefix, std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06zu", i);
  return prefix + "-" + buf;
}

}  // namespace

CandidateSet generate_candidate_set(const TagIndex& index,
                                    const std::vector<TagAssignment>& assignments,
                                    const TagVocabulary& vocab, std::size_t dataset_size,
                                    std::uint64_t dataset_fingerprint,
                                    const CandidateGenOptions& options,
                                    std::vector<std::string>* warnings) {
  CandidateSet set;
  set.dataset_fingerprint = dataset_fingerprint;
  set.vocabulary_fingerprint = vocab.fingerprint();
  set.dataset_size = dataset_size;

  std::set<std::vector<std::uint32_t>> seen;
  for (std::size_t i = 0; i < options.count; ++i) {
    const std::uint64_t slot_seed = child_seed(options.seed, "candidates", i);
    std::optional<CandidateRecord> chosen;
    bool duplicate_kept = false;
    const int attempts =
        options.realized_window ? options.window_retry_cap : options.dedup_retry_cap;
    CandidateRecord last;
    for (int attempt = 0; attempt <= attempts; ++attempt) {
      Rng rng(child_seed(slot_seed, "attempt", static_cast<std::uint64_t>(attempt)));
      last = sample_candidate(index, dataset_size, rng, options.fixed_budget);
      if (options.realized_window) {
        const auto realized = last.realized_size();
        if (realized < options.realized_window->first ||
            realized > options.realized_window->second)
          continue;
      }
      if (seen.count(last.human_subset)) continue;
      chosen = std::move(last);
      break;
    }
    if (!chosen) {
      if (options.realized_window) {
        // No draw landed in the window for this slot; skip it. The caller
        // errors out if the whole pool ends up empty.
        continue;
      }
      chosen = std::move(last);  // duplicate kept after retry cap
      duplicate_kept = true;
    }
    if (duplicate_kept && warnings)
      warnings->push_back("candidate slot " + std::to_string(i) +
                          " kept a duplicate human subset after " +
                          std::to_string(options.dedup_retry_cap) + " retries");
    seen.insert(chosen->human_subset);
    chosen->candidate_id = ordinal_id(options.id_prefix, i);
    chosen->features = featurize(chosen->human_subset, assignments, vocab);
    set.records.push_back(std::move(*chosen));
  }

  if (options.include_endpoints) {
    std::vector<std::uint32_t> all(dataset_size);
    for (std::uint32_t i = 0; i < dataset_size; ++i) all[i] = i;
    const std::vector<std::uint32_t> none;
    if (!seen.count(all)) {
      CandidateRecord human;
      human.candidate_id = options.id_prefix + "-endpoint-human";
      human.budget = dataset_size;
      human.human_subset = all;
      human.features = featurize(human.human_subset, assignments, vocab);
      set.records.push_back(std::move(human));
      seen.insert(all);
    }
    if (!seen.count(none)) {
      CandidateRecord lm;
      lm.candidate_id = options.id_prefix + "-endpoint-lm";
      lm.budget = 0;
      lm.features = featurize(lm.human_subset, assignments, vocab);
      set.records.push_back(std::move(lm));
      seen.insert(none);
    }
  }
  return set;
}

void save_candidate_set(const CandidateSet& set, std::span<const std::string> instance_ids,
                        const std::filesystem::path& path) {
  AtomicWriter out(path);
  Json header;
  header["type"] = "candidates";
  header["dataset_fingerprint"] = fingerprint_hex(set.dataset_fingerprint);
  header["vocabulary_fingerprint"] = fingerprint_hex(set.vocabulary_fingerprint);
  header["dataset_size"] = set.dataset_size;
  header["n"] = set.records.size();
  out.line(header);
  for (const auto& record : set.records) {
    Json rec;
    rec["candidate_id"] = record.candidate_id;
    rec["budget"] = record.budget;
    rec["realized_size"] = record.realized_size();
    Json subset = Json::array();
    if (!record.human_subset_ids.empty()) {
      for (const auto& id : record.human_subset_ids) subset.push_back(id);
    } else {
      for (const std::uint32_t pos : record.human_subset) {
        if (pos >= instance_ids.size())
          throw ValidationError("candidate " + record.candidate_id +
                                " references position " + std::to_string(pos) +
                                " beyond the provided instance ids");
        subset.push_back(instance_ids[pos]);
      }
    }
    rec["human_subset"] = std::move(subset);
    Json counts = Json::array();
    for (const auto c : record.features.counts) counts.push_back(c);
    rec["features"] = std::move(counts);
    if (record.performance) rec["performance"] = *record.performance;
    rec["performance_source"] =
        std::string(performance_source_to_string(record.performance_source));
    out.line(rec);
  }
  out.commit();
}

CandidateSet load_candidate_set(
    const std::filesystem::path& path,
    const std::function<std::optional<std::uint32_t>(const std::string&)>& id_resolver) {
  JsonlReader reader(path);
  auto header = reader.next();
  if (!header || !header->is_object() || (*header)["type"] != "candidates")
    throw ValidationError(path.string() + " is not a candidates file (missing header)");
  CandidateSet set;
  set.dataset_fingerprint =
      parse_fingerprint_hex((*header)["dataset_fingerprint"].get<std::string>());
  set.vocabulary_fingerprint =
      parse_fingerprint_hex((*header)["vocabulary_fingerprint"].get<std::string>());
  set.dataset_size = (*header)["dataset_size"].get<std::uint64_t>();
  while (auto record = reader.next()) {
    CandidateRecord r;
    r.candidate_id = (*record)["candidate_id"].get<std::string>();
    r.budget = (*record)["budget"].get<std::uint64_t>();
    for (const auto& id : (*record)["human_subset"]) {
      r.human_subset_ids.push_back(id.get<std::string>());
      if (id_resolver) {
        const auto pos = id_resolver(r.human_subset_ids.back());
        if (!pos)
          throw ValidationError("candidate " + r.candidate_id + " references unknown id " +
                                r.human_subset_ids.back());
        r.human_subset.push_back(*pos);
      }
    }
    std::sort(r.human_subset.begin(), r.human_subset.end());
    r.features.vocabulary_fingerprint = set.vocabulary_fingerprint;
    for (const auto& c : (*record)["features"])
      r.features.counts.push_back(c.get<std::uint32_t>());
    if (record->contains("performance") && !(*record)["performance"].is_null())
      r.performance = (*record)["performance"].get<double>();
    if (record->contains("performance_source"))
      r.performance_source =
          parse_performance_source((*record)["performance_source"].get<std::string>());
    set.records.push_back(std::move(r));
  }
  return set;
}

void export_feature_matrix(const CandidateSet& set, const TagVocabulary& vocab,
                           const std::filesystem::path& path) {
  if (vocab.fingerprint() != set.vocabulary_fingerprint)
    throw ValidationError("vocabulary fingerprint does not match the candidate set");
  AtomicWriter out(path);
  out.raw("# type=feature_matrix\n");
  out.raw("# dataset_fingerprint=" + fingerprint_hex(set.dataset_fingerprint) + "\n");
  out.raw("# vocabulary_fingerprint=" + fingerprint_hex(set.vocabulary_fingerprint) + "\n");
  std::string line = "candidate_id";
  for (const auto& tag : vocab.tags()) line += "," + csv_escape(tag);
  line += ",performance\n";
  out.raw(line);
  for (const auto& record : set.records) {
    line = csv_escape(record.candidate_id);
    for (const auto c : record.features.counts) line += "," + std::to_string(c);
    line += ",";
    if (record.performance) line += format_double(*record.performance);
    line += "\n";
    out.raw(line);
  }
  out.commit();
}

std::size_t ingest_performance(const std::filesystem::path& candidates_path,
                               const std::filesystem::path& scores_csv,
                               const std::filesystem::path& out_path) {
  const CsvTable table = read_csv(scores_csv);
  auto find_col = [&](const std::string& name) {
    for (std::size_t i = 0; i < table.header.size(); ++i)
      if (table.header[i] == name) return static_cast<long>(i);
    return -1L;
  };
  const long id_col = find_col("candidate_id");
  const long perf_col = find_col("performance");
  if (id_col < 0 || perf_col < 0)
    throw ValidationError(scores_csv.string() +
                          " must have candidate_id and performance columns");
  std::map<std::string, double> scores;
  std::size_t row_number = 0;
  for (const auto& row : table.rows) {
    ++row_number;
    if (row.size() <= static_cast<std::size_t>(std::max(id_col, perf_col))) continue;
    const auto& cell = row[static_cast<std::size_t>(perf_col)];
    if (cell.empty()) continue;
    try {
      scores[row[static_cast<std::size_t>(id_col)]] = std::stod(cell);
    } catch (const std::logic_error&) {
      throw ValidationError(scores_csv.string() + " row " + std::to_string(row_number) +
                            " has a non-numeric performance cell");
    }
  }

  // JSON-level join; subsets and features pass through untouched.
  JsonlReader reader(candidates_path);
  auto header = reader.next();
  if (!header || (*header)["type"] != "candidates")
    throw ValidationError(candidates_path.string() + " is not a candidates file");
  AtomicWriter out(out_path);
  out.line(*header);
  std::size_t updated = 0;
  while (auto record = reader.next()) {
    auto it = scores.find((*record)["candidate_id"].get<std::string>());
    if (it != scores.end()) {
      (*record)["performance"] = it->second;
      (*record)["performance_source"] = "measured";
      ++updated;
    }
    out.line(*record);
  }
  out.commit();
  return updated;
}

}  // namespace prefroute
