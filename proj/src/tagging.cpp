#include "prefroute/tagging.hpp"

#include <algorithm>
#include <cmath>

#include "prefroute/errors.hpp"
#include "prefroute/fingerprint.hpp"
#include "prefroute/parallel.hpp"
#include "prefroute/rng.hpp"

namespace prefroute {

namespace dims {

const std::vector<std::string>& textual_dimensions() {
  static const std::vector<std::string> order = {
      bertscore,  bertscore_length_adjusted, rouge_l,
      cosine_similarity, entity_similarity,  prompt_len,
      shorter_response_len, longer_response_len, token_length_diff};
  return order;
}

const std::vector<std::string>& descriptive_dimensions() {
  static const std::vector<std::string> order = {
      expertise_level, open_endedness,      safety_concern,
      complexity_of_intents, in_context_material, format_constraints,
      subject_of_expertise,  languages};
  return order;
}

bool is_textual(const std::string& dimension) {
  const auto& t = textual_dimensions();
  return std::find(t.begin(), t.end(), dimension) != t.end();
}

bool is_presence(const std::string& dimension) {
  return dimension == in_context_material || dimension == format_constraints;
}

bool is_single_valued(const std::string& dimension) {
  if (is_textual(dimension)) return true;
  return dimension == expertise_level || dimension == open_endedness ||
         dimension == safety_concern || dimension == complexity_of_intents ||
         is_presence(dimension);
}

const std::vector<std::string>& documented_domain(const std::string& dimension) {
  static const std::vector<std::string> expertise = {
      "general_public", "basic_domain_knowledge", "expert_domain_knowledge"};
  static const std::vector<std::string> openness = {"no", "low", "moderate", "high"};
  static const std::vector<std::string> safety = {"safe", "low", "moderate", "high"};
  static const std::vector<std::string> complexity = {"simple", "moderate", "complex"};
  static const std::vector<std::string> none;
  if (dimension == expertise_level) return expertise;
  if (dimension == open_endedness) return openness;
  if (dimension == safety_concern) return safety;
  if (dimension == complexity_of_intents) return complexity;
  return none;
}

}  // namespace dims

std::string normalize_tag_value(std::string_view value) {
  std::string out;
  out.reserve(value.size());
  bool pending_sep = false;
  for (const char c : value) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isspace(uc) || c == '-') {
      if (!out.empty()) pending_sep = true;
      continue;
    }
    if (pending_sep) {
      out += '_';
      pending_sep = false;
    }
    out += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
  }
  return out;
}

std::string make_tag(const std::string& dimension, const std::string& value) {
  if (dims::is_presence(dimension)) return dimension;
  return dimension + ":" + value;
}

std::string tag_bin(const std::string& dimension, Bin bin) {
  return dimension + ":" + std::string(bin_label(bin));
}

TagVocabulary::TagVocabulary(std::vector<std::pair<std::string, std::string>> entries) {
  tags_.reserve(entries.size());
  dimensions_.reserve(entries.size());
  for (auto& [tag, dimension] : entries) {
    auto [it, inserted] = index_.emplace(tag, tags_.size());
    if (!inserted) throw ValidationError("duplicate tag in vocabulary: " + tag);
    tags_.push_back(std::move(tag));
    dimensions_.push_back(std::move(dimension));
  }
  Fingerprint fp;
  for (const auto& t : tags_) fp.add(t);
  fingerprint_ = fp.value();
}

std::optional<std::size_t> TagVocabulary::index_of(std::string_view tag) const {
  auto it = index_.find(tag);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<double> fallback_token_embedding(std::string_view token, std::uint64_t seed,
                                             int dim) {
  Rng rng(child_seed(seed, "token_embedding", fnv1a64(token)));
  std::vector<double> v(static_cast<std::size_t>(dim));
  double norm = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  if (norm > 0.0)
    for (double& x : v) x /= norm;
  return v;
}

namespace {

struct DescriptivePair {
  std::string dimension;
  std::string value;  // empty for presence dimensions
};

std::vector<DescriptivePair> descriptive_pairs(
    const std::map<std::string, std::vector<std::string>>& input,
    const std::string& instance_id, std::vector<std::string>* warnings) {
  std::vector<DescriptivePair> out;
  for (const auto& [dimension, values] : input) {
    if (values.empty()) continue;
    if (dims::is_presence(dimension)) {
      out.push_back({dimension, ""});
      continue;
    }
    const bool known =
        std::find(dims::descriptive_dimensions().begin(),
                  dims::descriptive_dimensions().end(),
                  dimension) != dims::descriptive_dimensions().end();
    if (!known && warnings)
      warnings->push_back("instance " + instance_id + ": unknown descriptive dimension `" +
                          dimension + "` kept verbatim");

    const bool single = known && dims::is_single_valued(dimension);
    std::size_t take = values.size();
    if (single && values.size() > 1) {
      take = 1;
      if (warnings)
        warnings->push_back("instance " + instance_id + ": dimension `" + dimension +
                            "` is single-valued; keeping the first of " +
                            std::to_string(values.size()) + " values");
    }
    const auto& domain = dims::documented_domain(dimension);
    for (std::size_t i = 0; i < take; ++i) {
      const std::string value = normalize_tag_value(values[i]);
      if (value.empty()) continue;
      if (!domain.empty() &&
          std::find(domain.begin(), domain.end(), value) == domain.end() && warnings)
        warnings->push_back("instance " + instance_id + ": value `" + value +
                            "` outside the documented domain of `" + dimension + "`");
      out.push_back({dimension, value});
    }
  }
  return out;
}

struct InstanceSignals {
  std::map<std::string, double> raw;
  std::vector<std::string> flags;
};

using TokenMatrix = std::vector<std::vector<double>>;

TokenMatrix fallback_token_matrix(const std::vector<std::string>& tokens,
                                  std::uint64_t seed, int dim) {
  TokenMatrix m;
  m.reserve(tokens.size());
  for (const auto& t : tokens) m.push_back(fallback_token_embedding(t, seed, dim));
  return m;
}

std::optional<std::vector<double>> mean_embedding(const TokenMatrix& m) {
  if (m.empty()) return std::nullopt;
  std::vector<double> mean(m.front().size(), 0.0);
  for (const auto& row : m)
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += row[k];
  for (double& x : mean) x /= static_cast<double>(m.size());
  return mean;
}

}  // namespace

std::vector<TagAssignment> ingest_descriptive_tags(const Dataset& d,
                                                   std::vector<std::string>* warnings) {
  std::vector<TagAssignment> out;
  out.reserve(d.size());
  for (const auto& inst : d.instances()) {
    TagAssignment a;
    a.instance_id = inst.id;
    for (const auto& pair : descriptive_pairs(inst.descriptive_tags, inst.id, warnings)) {
      const std::string tag = make_tag(pair.dimension, pair.value);
      if (std::find(a.tags.begin(), a.tags.end(), tag) == a.tags.end())
        a.tags.push_back(tag);
    }
    out.push_back(std::move(a));
  }
  return out;
}

TaggingResult tag_dataset(const Dataset& d, const TaggingOptions& options,
                          TaggerClient* tagger) {
  TaggingResult result;
  const auto tokenizer = options.tokenizer ? options.tokenizer : default_tokenizer();
  const std::size_t n = d.size();

  std::vector<std::string> enabled;
  for (const auto& dim : dims::textual_dimensions())
    if (!options.disabled_textual.count(dim)) enabled.push_back(dim);
  auto dim_enabled = [&](const char* dim) {
    return std::find(enabled.begin(), enabled.end(), dim) != enabled.end();
  };

  const bool need_sentence_embeddings = dim_enabled(dims::cosine_similarity);
  const bool need_token_embeddings = dim_enabled(dims::bertscore) ||
                                     dim_enabled(dims::bertscore_length_adjusted);
  const bool need_entities = dim_enabled(dims::entity_similarity);

  // Resource availability when the deterministic fallbacks are disabled.
  if (!options.allow_fallback_embeddings) {
    for (const auto& inst : d.instances()) {
      if (need_sentence_embeddings && (!inst.embedding_a || !inst.embedding_b))
        throw ValidationError("cosine_similarity requires response embeddings (inline or "
                              "sidecar); missing on instance " + inst.id);
      if (need_token_embeddings && (!inst.token_embeddings_a || !inst.token_embeddings_b))
        throw ValidationError("bertscore requires token embeddings (inline or sidecar); "
                              "missing on instance " + inst.id);
    }
  }
  if (need_entities && !options.allow_entity_fallback) {
    for (const auto& inst : d.instances())
      if (!inst.entities_a || !inst.entities_b)
        throw ValidationError("entity_similarity requires entity sets; missing on "
                              "instance " + inst.id);
  }

  // Phase 1: per-instance raw signals, parallel over the immutable dataset.
  std::vector<InstanceSignals> signals(n);
  parallel_for(n, options.threads, [&](std::size_t i) {
    const auto& inst = d.at(i);
    InstanceSignals& sig = signals[i];

    const auto tokens_prompt = tokenizer->tokenize(inst.prompt);
    const auto tokens_a = tokenizer->tokenize(inst.response_a);
    const auto tokens_b = tokenizer->tokenize(inst.response_b);

    if (dim_enabled(dims::rouge_l)) {
      const auto r = rouge_l(tokens_a, tokens_b);
      sig.raw[dims::rouge_l] = r.value;
      if (r.flagged) sig.flags.push_back("rouge_l:empty_tokens");
    }

    if (need_sentence_embeddings) {
      std::optional<std::vector<double>> ea = inst.embedding_a;
      std::optional<std::vector<double>> eb = inst.embedding_b;
      if (!ea || !eb) {
        ea = mean_embedding(fallback_token_matrix(tokens_a, options.fallback_embedding_seed,
                                                  options.fallback_embedding_dim));
        eb = mean_embedding(fallback_token_matrix(tokens_b, options.fallback_embedding_seed,
                                                  options.fallback_embedding_dim));
        sig.flags.push_back("cosine_similarity:fallback_embedding");
      }
      double value = 0.0;
      if (!ea || !eb) {
        sig.flags.push_back("cosine_similarity:empty_tokens");
      } else {
        try {
          value = cosine_similarity(*ea, *eb);
        } catch (const NumericError&) {
          value = 0.0;
          sig.flags.push_back("cosine_similarity:zero_norm");
        }
      }
      sig.raw[dims::cosine_similarity] = value;
    }

    if (need_token_embeddings) {
      TokenMatrix ta, tb;
      if (inst.token_embeddings_a && inst.token_embeddings_b) {
        ta = *inst.token_embeddings_a;
        tb = *inst.token_embeddings_b;
      } else {
        ta = fallback_token_matrix(tokens_a, options.fallback_embedding_seed,
                                   options.fallback_embedding_dim);
        tb = fallback_token_matrix(tokens_b, options.fallback_embedding_seed,
                                   options.fallback_embedding_dim);
        sig.flags.push_back("bertscore:fallback_embedding");
      }
      if (dim_enabled(dims::bertscore)) {
        const auto s = bert_score(ta, tb, false);
        sig.raw[dims::bertscore] = s.value;
        if (s.flagged) sig.flags.push_back("bertscore:empty_tokens");
      }
      if (dim_enabled(dims::bertscore_length_adjusted)) {
        const auto s = bert_score(ta, tb, true);
        sig.raw[dims::bertscore_length_adjusted] = s.value;
        if (s.flagged) sig.flags.push_back("bertscore_length_adjusted:empty_tokens");
      }
    }

    if (need_entities) {
      std::set<std::string> ea, eb;
      if (inst.entities_a && inst.entities_b) {
        for (const auto& e : *inst.entities_a) ea.insert(normalize_tag_value(e));
        for (const auto& e : *inst.entities_b) eb.insert(normalize_tag_value(e));
      } else {
        for (const auto& e : extract_entities(inst.response_a)) ea.insert(e);
        for (const auto& e : extract_entities(inst.response_b)) eb.insert(e);
        sig.flags.push_back("entity_similarity:fallback_extractor");
      }
      const auto iou = entity_iou(ea, eb);
      sig.raw[dims::entity_similarity] = iou.value;
      if (iou.flagged) sig.flags.push_back("entity_similarity:both_empty");
    }

    const auto lengths = length_metrics(tokens_prompt.size(), tokens_a.size(),
                                        tokens_b.size());
    if (dim_enabled(dims::prompt_len))
      sig.raw[dims::prompt_len] = static_cast<double>(lengths.prompt_len);
    if (dim_enabled(dims::shorter_response_len))
      sig.raw[dims::shorter_response_len] =
          static_cast<double>(lengths.shorter_response_len);
    if (dim_enabled(dims::longer_response_len))
      sig.raw[dims::longer_response_len] = static_cast<double>(lengths.longer_response_len);
    if (dim_enabled(dims::token_length_diff))
      sig.raw[dims::token_length_diff] = static_cast<double>(lengths.length_diff);
  });

  // Phase 2: dataset-level binning (lengths are min-max normalized first).
  std::map<std::string, std::vector<Bin>> bins_by_dim;
  for (const auto& dim : enabled) {
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = signals[i].raw.at(dim);
    const bool is_length = dim == dims::prompt_len || dim == dims::shorter_response_len ||
                           dim == dims::longer_response_len ||
                           dim == dims::token_length_diff;
    auto binned = normalize_and_bin(values, is_length);
    if (binned.constant_input)
      result.warnings.push_back("metric `" + dim +
                                "` is constant over the dataset; all instances assigned "
                                "the middle bin");
    bins_by_dim[dim] = std::move(binned.bins);
  }

  // Phase 3: descriptive tags, from records or from the endpoint.
  std::vector<std::vector<DescriptivePair>> descriptive(n);
  if (options.descriptive) {
    if (options.use_tagger_endpoint) {
      if (tagger == nullptr)
        throw ValidationError("descriptive tagging via endpoint requested but no tagger "
                              "client is configured");
      std::vector<std::optional<std::map<std::string, std::vector<std::string>>>>
          fetched(n);
      std::vector<std::string> errors(n);
      parallel_for(n, tagger->max_in_flight(), [&](std::size_t i) {
        try {
          fetched[i] = tagger->describe(d.at(i).prompt);
        } catch (const std::exception& e) {
          errors[i] = e.what();
        }
      });
      for (std::size_t i = 0; i < n; ++i) {
        if (fetched[i]) {
          descriptive[i] =
              descriptive_pairs(*fetched[i], d.at(i).id, &result.warnings);
        } else {
          result.tagger_failures.push_back({d.at(i).id, errors[i]});
        }
      }
    } else {
      for (std::size_t i = 0; i < n; ++i)
        descriptive[i] =
            descriptive_pairs(d.at(i).descriptive_tags, d.at(i).id, &result.warnings);
    }
  }

  // Phase 4: vocabulary. Textual dimensions always contribute their full bin
  // set; fixed-domain descriptive dimensions contribute their documented
  // values; open vocabularies contribute observed values in sorted order.
  std::vector<std::pair<std::string, std::string>> entries;
  for (const auto& dim : enabled)
    for (const Bin bin : {Bin::low, Bin::mid, Bin::high})
      entries.emplace_back(tag_bin(dim, bin), dim);

  if (options.descriptive) {
    std::map<std::string, std::set<std::string>> observed;
    for (const auto& pairs : descriptive)
      for (const auto& p : pairs) observed[p.dimension].insert(p.value);

    std::vector<std::string> dim_order = dims::descriptive_dimensions();
    for (const auto& [dimension, values] : observed)
      if (std::find(dim_order.begin(), dim_order.end(), dimension) == dim_order.end())
        dim_order.push_back(dimension);

    for (const auto& dimension : dim_order) {
      if (dims::is_presence(dimension)) {
        entries.emplace_back(make_tag(dimension, ""), dimension);
        continue;
      }
      std::set<std::string> values;
      for (const auto& v : dims::documented_domain(dimension)) values.insert(v);
      if (auto it = observed.find(dimension); it != observed.end())
        values.insert(it->second.begin(), it->second.end());
      // Documented values first, in documented order; extras sorted after.
      for (const auto& v : dims::documented_domain(dimension)) {
        entries.emplace_back(make_tag(dimension, v), dimension);
        values.erase(v);
      }
      for (const auto& v : values) entries.emplace_back(make_tag(dimension, v), dimension);
    }
  }
  result.vocabulary = TagVocabulary(std::move(entries));

  // Phase 5: per-instance assignments, tags in vocabulary order.
  result.assignments.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    TagAssignment a;
    a.instance_id = d.at(i).id;
    a.raw_metrics = std::move(signals[i].raw);
    a.flags = std::move(signals[i].flags);

    std::set<std::size_t> indices;
    for (const auto& dim : enabled) {
      const auto idx = result.vocabulary.index_of(tag_bin(dim, bins_by_dim[dim][i]));
      indices.insert(*idx);
    }
    for (const auto& p : descriptive[i]) {
      const auto idx = result.vocabulary.index_of(make_tag(p.dimension, p.value));
      if (idx) indices.insert(*idx);
    }
    for (const auto idx : indices) a.tags.push_back(result.vocabulary.tag(idx));
    result.assignments.push_back(std::move(a));
  }
  return result;
}

void save_tags(const std::vector<TagAssignment>& assignments,
               std::uint64_t dataset_fingerprint, std::uint64_t vocabulary_fingerprint,
               const std::filesystem::path& path) {
  AtomicWriter out(path);
  Json header;
  header["type"] = "tags";
  header["dataset_fingerprint"] = fingerprint_hex(dataset_fingerprint);
  header["vocabulary_fingerprint"] = fingerprint_hex(vocabulary_fingerprint);
  header["n"] = assignments.size();
  out.line(header);
  for (const auto& a : assignments) {
    Json rec;
    rec["id"] = a.instance_id;
    Json tags = Json::array();
    for (const auto& t : a.tags) tags.push_back(t);
    rec["tags"] = std::move(tags);
    Json raw = Json::object();
    for (const auto& [k, v] : a.raw_metrics) raw[k] = v;
    rec["raw_metrics"] = std::move(raw);
    if (!a.flags.empty()) {
      Json flags = Json::array();
      for (const auto& f : a.flags) flags.push_back(f);
      rec["flags"] = std::move(flags);
    }
    out.line(rec);
  }
  out.commit();
}

LoadedTags load_tags(const std::filesystem::path& path) {
  JsonlReader reader(path);
  auto header = reader.next();
  if (!header || !header->is_object() || (*header)["type"] != "tags")
    throw ValidationError(path.string() + " is not a tags file (missing header)");
  LoadedTags loaded;
  loaded.dataset_fingerprint =
      parse_fingerprint_hex((*header)["dataset_fingerprint"].get<std::string>());
  loaded.vocabulary_fingerprint =
      parse_fingerprint_hex((*header)["vocabulary_fingerprint"].get<std::string>());
  while (auto record = reader.next()) {
    TagAssignment a;
    a.instance_id = (*record)["id"].get<std::string>();
    for (const auto& t : (*record)["tags"]) a.tags.push_back(t.get<std::string>());
    if (record->contains("raw_metrics"))
      for (const auto& [k, v] : (*record)["raw_metrics"].items())
        a.raw_metrics[k] = v.get<double>();
    if (record->contains("flags"))
      for (const auto& f : (*record)["flags"]) a.flags.push_back(f.get<std::string>());
    loaded.assignments.push_back(std::move(a));
  }
  return loaded;
}

void save_vocabulary(const TagVocabulary& vocab, std::uint64_t dataset_fingerprint,
                     const std::filesystem::path& path) {
  AtomicWriter out(path);
  Json header;
  header["type"] = "vocabulary";
  header["fingerprint"] = fingerprint_hex(vocab.fingerprint());
  header["dataset_fingerprint"] = fingerprint_hex(dataset_fingerprint);
  header["size"] = vocab.size();
  out.line(header);
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    Json rec;
    rec["index"] = i;
    rec["tag"] = vocab.tag(i);
    rec["dimension"] = vocab.dimension_of(i);
    out.line(rec);
  }
  out.commit();
}

LoadedVocabulary load_vocabulary(const std::filesystem::path& path) {
  JsonlReader reader(path);
  auto header = reader.next();
  if (!header || !header->is_object() || (*header)["type"] != "vocabulary")
    throw ValidationError(path.string() + " is not a vocabulary file (missing header)");
  LoadedVocabulary loaded;
  loaded.dataset_fingerprint =
      parse_fingerprint_hex((*header)["dataset_fingerprint"].get<std::string>());
  std::vector<std::pair<std::string, std::string>> entries;
  while (auto record = reader.next())
    entries.emplace_back((*record)["tag"].get<std::string>(),
                         (*record)["dimension"].get<std::string>());
  loaded.vocabulary = TagVocabulary(std::move(entries));
  const auto declared = (*header)["fingerprint"].get<std::string>();
  if (parse_fingerprint_hex(declared) != loaded.vocabulary.fingerprint())
    throw ValidationError(path.string() + ": vocabulary fingerprint mismatch");
  return loaded;
}

}  // namespace prefroute
