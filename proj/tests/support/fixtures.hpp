#pragma once

#include <string>
#include <vector>

#include "prefroute/candidates.hpp"
#include "prefroute/core.hpp"
#include "prefroute/tagging.hpp"

namespace fixtures {

inline prefroute::PreferenceInstance instance(
    std::string id, std::string prompt = "a prompt", std::string ra = "response one",
    std::string rb = "response two",
    std::optional<prefroute::Label> human = prefroute::Label::A,
    std::optional<prefroute::Label> lm = prefroute::Label::B) {
  prefroute::PreferenceInstance inst;
  inst.id = std::move(id);
  inst.prompt = std::move(prompt);
  inst.response_a = std::move(ra);
  inst.response_b = std::move(rb);
  inst.human_label = human;
  inst.lm_label = lm;
  return inst;
}

inline prefroute::Dataset dataset_of(std::size_t n) {
  std::vector<prefroute::PreferenceInstance> instances;
  for (std::size_t i = 0; i < n; ++i)
    instances.push_back(instance("inst-" + std::to_string(i)));
  return prefroute::Dataset(std::move(instances), "test");
}

// Vocabulary where each tag is its own dimension.
inline prefroute::TagVocabulary vocab_of(std::vector<std::string> tags) {
  std::vector<std::pair<std::string, std::string>> entries;
  for (auto& t : tags) entries.emplace_back(t, t);
  return prefroute::TagVocabulary(std::move(entries));
}

// Assignments aligned to positions; tag_sets[i] = tags of instance i.
inline std::vector<prefroute::TagAssignment> assignments_of(
    const std::vector<std::vector<std::string>>& tag_sets) {
  std::vector<prefroute::TagAssignment> out;
  for (std::size_t i = 0; i < tag_sets.size(); ++i) {
    prefroute::TagAssignment a;
    a.instance_id = "inst-" + std::to_string(i);
    a.tags = tag_sets[i];
    out.push_back(std::move(a));
  }
  return out;
}

}  // namespace fixtures
