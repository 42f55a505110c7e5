#include "prefroute/core.hpp"

#include <algorithm>

#include "prefroute/fingerprint.hpp"
#include "prefroute/rng.hpp"

namespace prefroute {

namespace {

std::vector<double> parse_vector(const Json& arr, const std::string& field,
                                 std::size_t line) {
  if (!arr.is_array()) throw ParseError(field + " must be an array of numbers", line);
  std::vector<double> out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_number()) throw ParseError(field + " must contain only numbers", line);
    out.push_back(v.get<double>());
  }
  return out;
}

std::vector<std::vector<double>> parse_matrix(const Json& arr, const std::string& field,
                                              std::size_t line) {
  if (!arr.is_array()) throw ParseError(field + " must be an array of arrays", line);
  std::vector<std::vector<double>> out;
  out.reserve(arr.size());
  for (const auto& row : arr) out.push_back(parse_vector(row, field, line));
  return out;
}

std::vector<std::string> parse_string_array(const Json& arr, const std::string& field,
                                            std::size_t line) {
  if (!arr.is_array()) throw ParseError(field + " must be an array of strings", line);
  std::vector<std::string> out;
  out.reserve(arr.size());
  for (const auto& v : arr) {
    if (!v.is_string()) throw ParseError(field + " must contain only strings", line);
    out.push_back(v.get<std::string>());
  }
  return out;
}

Json vector_to_json(const std::vector<double>& v) {
  Json arr = Json::array();
  for (const double x : v) arr.push_back(x);
  return arr;
}

Json matrix_to_json(const std::vector<std::vector<double>>& m) {
  Json arr = Json::array();
  for (const auto& row : m) arr.push_back(vector_to_json(row));
  return arr;
}

Json string_array_to_json(const std::vector<std::string>& v) {
  Json arr = Json::array();
  for (const auto& s : v) arr.push_back(s);
  return arr;
}

void check_embedding_dim(std::size_t& dim, std::size_t got, const std::string& id) {
  if (got == 0) return;
  if (dim == 0) {
    dim = got;
  } else if (dim != got) {
    throw ValidationError("instance " + id + ": embedding dimensionality " +
                          std::to_string(got) + " differs from the dataset's " +
                          std::to_string(dim));
  }
}

}  // namespace

Label parse_label(std::string_view text) {
  if (text == "A") return Label::A;
  if (text == "B") return Label::B;
  if (text == "tie") return Label::Tie;
  throw ValidationError("label must be \"A\", \"B\" or \"tie\", got \"" +
                        std::string(text) + "\"");
}

std::string_view label_to_string(Label label) {
  switch (label) {
    case Label::A: return "A";
    case Label::B: return "B";
    case Label::Tie: return "tie";
  }
  return "tie";
}

PreferenceInstance parse_instance(const Json& record, std::size_t line) {
  if (!record.is_object()) throw ParseError("record must be a JSON object", line);
  PreferenceInstance inst;
  inst.raw = record;

  auto require_string = [&](const char* field) {
    auto it = record.find(field);
    if (it == record.end() || !it->is_string() || it->get<std::string>().empty())
      throw ParseError(std::string("missing or empty field `") + field + "`", line);
    return it->get<std::string>();
  };

  inst.id = require_string("id");
  inst.prompt = require_string("prompt");
  inst.response_a = require_string("response_a");
  inst.response_b = require_string("response_b");

  auto opt_label = [&](const char* field) -> std::optional<Label> {
    auto it = record.find(field);
    if (it == record.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw ParseError(std::string(field) + " must be a string", line);
    try {
      return parse_label(it->get<std::string>());
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), line);
    }
  };
  inst.human_label = opt_label("human_label");
  inst.lm_label = opt_label("lm_label");

  if (auto it = record.find("descriptive_tags"); it != record.end() && !it->is_null()) {
    if (!it->is_object()) throw ParseError("descriptive_tags must be an object", line);
    for (const auto& [dim, value] : it->items()) {
      std::vector<std::string> values;
      if (value.is_string()) {
        values.push_back(value.get<std::string>());
      } else if (value.is_boolean()) {
        if (value.get<bool>()) values.push_back("present");
      } else if (value.is_array()) {
        values = parse_string_array(value, "descriptive_tags." + dim, line);
      } else if (!value.is_null()) {
        throw ParseError("descriptive_tags." + dim + " must be a string or array", line);
      }
      if (!values.empty()) inst.descriptive_tags.emplace(dim, std::move(values));
    }
  }

  auto opt_strings = [&](const char* field) -> std::optional<std::vector<std::string>> {
    auto it = record.find(field);
    if (it == record.end() || it->is_null()) return std::nullopt;
    return parse_string_array(*it, field, line);
  };
  inst.entities_a = opt_strings("entities_a");
  inst.entities_b = opt_strings("entities_b");

  auto opt_vector = [&](const char* field) -> std::optional<std::vector<double>> {
    auto it = record.find(field);
    if (it == record.end() || it->is_null()) return std::nullopt;
    return parse_vector(*it, field, line);
  };
  inst.embedding_prompt = opt_vector("embedding_prompt");
  inst.embedding_a = opt_vector("embedding_a");
  inst.embedding_b = opt_vector("embedding_b");

  auto opt_matrix = [&](const char* field) -> std::optional<std::vector<std::vector<double>>> {
    auto it = record.find(field);
    if (it == record.end() || it->is_null()) return std::nullopt;
    return parse_matrix(*it, field, line);
  };
  inst.token_embeddings_a = opt_matrix("token_embeddings_a");
  inst.token_embeddings_b = opt_matrix("token_embeddings_b");

  return inst;
}

Json instance_to_json(const PreferenceInstance& inst) {
  // Start from the original record so unknown fields survive the round trip.
  Json out = inst.raw.is_object() ? inst.raw : Json::object();
  out["id"] = inst.id;
  out["prompt"] = inst.prompt;
  out["response_a"] = inst.response_a;
  out["response_b"] = inst.response_b;
  if (inst.human_label)
    out["human_label"] = std::string(label_to_string(*inst.human_label));
  else
    out.erase("human_label");
  if (inst.lm_label)
    out["lm_label"] = std::string(label_to_string(*inst.lm_label));
  else
    out.erase("lm_label");

  if (!inst.descriptive_tags.empty()) {
    Json tags = Json::object();
    for (const auto& [dim, values] : inst.descriptive_tags) {
      if (values.size() == 1)
        tags[dim] = values.front();
      else
        tags[dim] = string_array_to_json(values);
    }
    out["descriptive_tags"] = std::move(tags);
  }
  if (inst.entities_a) out["entities_a"] = string_array_to_json(*inst.entities_a);
  if (inst.entities_b) out["entities_b"] = string_array_to_json(*inst.entities_b);
  if (inst.embedding_prompt) out["embedding_prompt"] = vector_to_json(*inst.embedding_prompt);
  if (inst.embedding_a) out["embedding_a"] = vector_to_json(*inst.embedding_a);
  if (inst.embedding_b) out["embedding_b"] = vector_to_json(*inst.embedding_b);
  if (inst.token_embeddings_a)
    out["token_embeddings_a"] = matrix_to_json(*inst.token_embeddings_a);
  if (inst.token_embeddings_b)
    out["token_embeddings_b"] = matrix_to_json(*inst.token_embeddings_b);
  return out;
}

Dataset::Dataset(std::vector<PreferenceInstance> instances, std::string provenance)
    : instances_(std::move(instances)), provenance_(std::move(provenance)) {
  Fingerprint fp;
  std::size_t embedding_dim = 0;
  for (std::size_t i = 0; i < instances_.size(); ++i) {
    const auto& inst = instances_[i];
    auto [it, inserted] = index_.emplace(inst.id, i);
    if (!inserted) throw ValidationError("duplicate id: " + inst.id);
    fp.add(inst.id).add(inst.prompt).add(inst.response_a).add(inst.response_b);
    fp.add(inst.human_label ? label_to_string(*inst.human_label) : "-");
    fp.add(inst.lm_label ? label_to_string(*inst.lm_label) : "-");

    check_embedding_dim(embedding_dim,
                        inst.embedding_prompt ? inst.embedding_prompt->size() : 0, inst.id);
    check_embedding_dim(embedding_dim, inst.embedding_a ? inst.embedding_a->size() : 0,
                        inst.id);
    check_embedding_dim(embedding_dim, inst.embedding_b ? inst.embedding_b->size() : 0,
                        inst.id);
    for (const auto* seq : {&inst.token_embeddings_a, &inst.token_embeddings_b}) {
      if (!*seq) continue;
      for (const auto& row : **seq) check_embedding_dim(embedding_dim, row.size(), inst.id);
    }
  }
  fingerprint_ = fp.value();
}

std::optional<std::size_t> Dataset::position_of(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat) {
  JsonlReader reader(path);
  std::vector<PreferenceInstance> instances;
  while (auto record = reader.next())
    instances.push_back(parse_instance(*record, reader.line_number()));
  return Dataset(std::move(instances), path.string());
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
  AtomicWriter out(path);
  for (const auto& inst : d.instances()) out.line(instance_to_json(inst));
  out.commit();
}

std::uint64_t RoutingConfiguration::human_count() const {
  std::uint64_t zeros = 0;
  for (const auto z : assignments)
    if (z == 0) ++zeros;
  return zeros;
}

namespace {

void require_both_labels(const Dataset& d, const char* operation) {
  std::string offenders;
  std::size_t count = 0;
  for (const auto& inst : d.instances()) {
    if (inst.human_label && inst.lm_label) continue;
    ++count;
    if (count <= 8) {
      if (!offenders.empty()) offenders += ", ";
      offenders += inst.id;
    }
  }
  if (count > 0) {
    if (count > 8) offenders += ", ...";
    throw ValidationError(std::string(operation) + " requires human_label and lm_label on every instance; missing on " +
                          std::to_string(count) + " instance(s): " + offenders);
  }
}

}  // namespace

Dataset filter_ties(const Dataset& d) {
  require_both_labels(d, "filter_ties");
  std::vector<PreferenceInstance> kept;
  for (const auto& inst : d.instances()) {
    if (*inst.human_label == Label::Tie || *inst.lm_label == Label::Tie) continue;
    kept.push_back(inst);
  }
  return Dataset(std::move(kept), d.provenance());
}

Dataset subsample(const Dataset& d, std::size_t n, std::uint64_t seed) {
  if (n > d.size())
    throw ValidationError("subsample size " + std::to_string(n) +
                          " exceeds dataset size " + std::to_string(d.size()));
  Rng rng(child_seed(seed, "subsample"));
  const auto keep = rng.sample_without_replacement(static_cast<std::uint32_t>(d.size()),
                                                   static_cast<std::uint32_t>(n));
  std::vector<PreferenceInstance> kept;
  kept.reserve(n);
  for (const auto pos : keep) kept.push_back(d.at(pos));
  return Dataset(std::move(kept), d.provenance());
}

std::vector<RoutedLabel> apply_routing(const Dataset& d, const RoutingConfiguration& z) {
  if (z.assignments.size() != d.size() || z.instance_ids.size() != d.size())
    throw ValidationError("routing configuration length " +
                          std::to_string(z.assignments.size()) +
                          " does not match dataset size " + std::to_string(d.size()));
  require_both_labels(d, "apply_routing");
  std::vector<RoutedLabel> out;
  out.reserve(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& inst = d.at(i);
    if (z.instance_ids[i] != inst.id)
      throw ValidationError("routing configuration misaligned at position " +
                            std::to_string(i) + ": expected id " + inst.id + ", got " +
                            z.instance_ids[i]);
    if (z.assignments[i] != 0 && z.assignments[i] != 1)
      throw ValidationError("routing bit at position " + std::to_string(i) +
                            " must be 0 or 1");
    const bool from_lm = z.assignments[i] == 1;
    out.push_back({inst.id, from_lm ? *inst.lm_label : *inst.human_label, from_lm});
  }
  return out;
}

Dataset apply_embedding_sidecar(const Dataset& d, const std::filesystem::path& sidecar) {
  JsonlReader reader(sidecar);
  std::unordered_map<std::string, Json> by_id;
  while (auto record = reader.next()) {
    if (!record->is_object() || !record->contains("id") || !(*record)["id"].is_string())
      throw ParseError("sidecar record must be an object with a string `id`",
                       reader.line_number());
    std::string id = (*record)["id"].get<std::string>();
    by_id[std::move(id)] = std::move(*record);
  }
  std::vector<PreferenceInstance> merged = d.instances();
  for (auto& inst : merged) {
    auto it = by_id.find(inst.id);
    if (it == by_id.end()) continue;
    Json patched = inst.raw;
    for (const auto& [key, value] : it->second.items()) {
      if (key == "id") continue;
      patched[key] = value;
    }
    inst = parse_instance(patched, 0);
  }
  return Dataset(std::move(merged), d.provenance());
}

void save_routing_configuration(const RoutingConfiguration& z,
                                std::uint64_t dataset_fingerprint,
                                const std::filesystem::path& path) {
  AtomicWriter out(path);
  Json header;
  header["type"] = "routing";
  header["dataset_fingerprint"] = fingerprint_hex(dataset_fingerprint);
  header["n"] = z.size();
  out.line(header);
  for (std::size_t i = 0; i < z.size(); ++i) {
    Json rec;
    rec["id"] = z.instance_ids[i];
    rec["z"] = static_cast<int>(z.assignments[i]);
    out.line(rec);
  }
  out.commit();
}

std::pair<RoutingConfiguration, std::uint64_t> load_routing_configuration(
    const std::filesystem::path& path) {
  JsonlReader reader(path);
  auto header = reader.next();
  if (!header || !header->is_object() || (*header)["type"] != "routing")
    throw ValidationError(path.string() + " is not a routing file (missing header)");
  const std::uint64_t fp =
      parse_fingerprint_hex((*header)["dataset_fingerprint"].get<std::string>());
  RoutingConfiguration z;
  while (auto record = reader.next()) {
    z.instance_ids.push_back((*record)["id"].get<std::string>());
    const int bit = (*record)["z"].get<int>();
    if (bit != 0 && bit != 1)
      throw ParseError("z must be 0 or 1", reader.line_number());
    z.assignments.push_back(static_cast<std::uint8_t>(bit));
  }
  return {std::move(z), fp};
}

}  // namespace prefroute
