#include <filesystem>
#include <set>

#include "doctest.h"
#include "prefroute/candidates.hpp"
#include "prefroute/ppm.hpp"
#include "support/fixtures.hpp"

using namespace prefroute;
namespace fs = std::filesystem;

TEST_CASE("build_tag_index inverts assignments deterministically") {
  SUBCASE("one instance with two tags") {
    const auto index = build_tag_index(fixtures::assignments_of({{"p", "q"}}));
    REQUIRE(index.groups.size() == 2);
    CHECK(index.groups[0].first == "p");
    CHECK(index.groups[0].second == std::vector<std::uint32_t>{0});
    CHECK(index.groups[1].first == "q");
    CHECK(index.groups[1].second == std::vector<std::uint32_t>{0});
  }
  SUBCASE("no assignments gives an empty index") {
    CHECK(build_tag_index({}).groups.empty());
  }
  SUBCASE("positions stay in dataset order") {
    const auto index = build_tag_index(fixtures::assignments_of({{"p"}, {}, {"p"}}));
    REQUIRE(index.groups.size() == 1);
    CHECK(index.groups[0].second == std::vector<std::uint32_t>({0, 2}));
  }
}

TEST_CASE("group accretion adds whole groups and stops after reaching the budget") {
  // index: p -> {0,1}, q -> {1,2}
  const auto index = build_tag_index(fixtures::assignments_of({{"p"}, {"p", "q"}, {"q"}}));
  REQUIRE(index.groups.size() == 2);

  SUBCASE("order (p,q), budget 3 takes both groups") {
    const std::size_t order[] = {0, 1};
    CHECK(accrete_groups(index, 3, order, 3) ==
          std::vector<std::uint32_t>({0, 1, 2}));
  }
  SUBCASE("order (p,q), budget 2 stops after p") {
    const std::size_t order[] = {0, 1};
    CHECK(accrete_groups(index, 3, order, 2) == std::vector<std::uint32_t>({0, 1}));
  }
  SUBCASE("order (q,p), budget 2 stops after q") {
    const std::size_t order[] = {1, 0};
    CHECK(accrete_groups(index, 3, order, 2) == std::vector<std::uint32_t>({1, 2}));
  }
  SUBCASE("budget 0 routes nothing") {
    const std::size_t order[] = {0, 1};
    CHECK(accrete_groups(index, 3, order, 0).empty());
  }
  SUBCASE("an unreachable budget takes everything taggable") {
    const std::size_t order[] = {0, 1};
    CHECK(accrete_groups(index, 5, order, 5) == std::vector<std::uint32_t>({0, 1, 2}));
  }
}

TEST_CASE("sample_candidate endpoints and budget validation") {
  const auto assignments = fixtures::assignments_of({{"p"}, {"p"}, {"p"}});
  const auto index = build_tag_index(assignments);
  const Dataset d = fixtures::dataset_of(3);
  Rng rng(1);

  SUBCASE("fixed budget zero gives all-LM") {
    const auto record = sample_candidate(index, 3, rng, 0);
    CHECK(record.human_subset.empty());
    const auto z = to_routing_configuration(record.human_subset, d);
    for (const auto bit : z.assignments) CHECK(bit == 1);
  }
  SUBCASE("fixed budget n with a covering tag routes everyone") {
    const auto record = sample_candidate(index, 3, rng, 3);
    CHECK(record.human_subset == std::vector<std::uint32_t>({0, 1, 2}));
    const auto z = to_routing_configuration(record.human_subset, d);
    for (const auto bit : z.assignments) CHECK(bit == 0);
  }
  SUBCASE("out-of-range fixed budget is rejected") {
    CHECK_THROWS_AS(sample_candidate(index, 3, rng, 4), ValidationError);
  }
}

TEST_CASE("featurize counts tags over the human subset") {
  const auto assignments = fixtures::assignments_of({{"p"}, {"p", "q"}, {"q"}});
  const auto vocab = fixtures::vocab_of({"p", "q"});

  SUBCASE("empty subset gives the zero vector") {
    const auto v = featurize({}, assignments, vocab);
    CHECK(v.counts == std::vector<std::uint32_t>({0, 0}));
  }
  SUBCASE("full subset gives whole-dataset totals") {
    const std::uint32_t all[] = {0, 1, 2};
    const auto v = featurize(all, assignments, vocab);
    CHECK(v.counts == std::vector<std::uint32_t>({2, 2}));
  }
  SUBCASE("two routed instances count by hand") {
    const std::uint32_t subset[] = {0, 1};
    const auto v = featurize(subset, assignments, vocab);
    CHECK(v.counts == std::vector<std::uint32_t>({2, 1}));
  }
  SUBCASE("a tag missing from the vocabulary is a consistency error") {
    const auto bad_vocab = fixtures::vocab_of({"p"});
    const std::uint32_t subset[] = {1};
    CHECK_THROWS_AS(featurize(subset, assignments, bad_vocab), ValidationError);
  }
  SUBCASE("counts are additive over disjoint subsets") {
    Rng rng(5);
    const auto many = fixtures::assignments_of({{"p"}, {"p", "q"}, {"q"}, {"p"}, {}, {"q"}});
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<std::uint32_t> s1, s2;
      for (std::uint32_t i = 0; i < many.size(); ++i) {
        const auto r = rng.below(3);
        if (r == 0) s1.push_back(i);
        if (r == 1) s2.push_back(i);
      }
      std::vector<std::uint32_t> both = s1;
      both.insert(both.end(), s2.begin(), s2.end());
      std::sort(both.begin(), both.end());
      const auto va = featurize(s1, many, vocab);
      const auto vb = featurize(s2, many, vocab);
      const auto vu = featurize(both, many, vocab);
      for (std::size_t j = 0; j < vocab.size(); ++j)
        CHECK(vu.counts[j] == va.counts[j] + vb.counts[j]);
    }
  }
}

TEST_CASE("generate_candidate_set: endpoints, dedup, determinism, overshoot") {
  const auto assignments = fixtures::assignments_of(
      {{"p"}, {"p", "q"}, {"q"}, {"r"}, {"r", "p"}, {"q", "r"}, {"p"}, {"q"}});
  const auto index = build_tag_index(assignments);
  const auto vocab = fixtures::vocab_of({"p", "q", "r"});
  const std::size_t n = assignments.size();

  SUBCASE("endpoints are appended and featurize to totals and zero") {
    CandidateGenOptions options;
    options.count = 1;
    options.include_endpoints = true;
    options.seed = 7;
    const auto set = generate_candidate_set(index, assignments, vocab, n, 1, options);
    // 1 sampled + 2 endpoints, unless the sample coincides with an endpoint.
    if (set.records.size() == 2) {
      const auto realized = set.records.front().realized_size();
      CHECK((realized == 0 || realized == n));
    } else {
      CHECK(set.records.size() == 3);
    }

    bool saw_human = false, saw_lm = false;
    for (const auto& record : set.records) {
      if (record.realized_size() == n) {
        saw_human = true;
        std::vector<std::uint32_t> dataset_totals(vocab.size(), 0);
        for (const auto& a : assignments)
          for (const auto& t : a.tags) ++dataset_totals[*vocab.index_of(t)];
        CHECK(record.features.counts == dataset_totals);
      }
      if (record.realized_size() == 0) {
        saw_lm = true;
        for (const auto c : record.features.counts) CHECK(c == 0);
      }
    }
    CHECK(saw_human);
    CHECK(saw_lm);
  }

  SUBCASE("fixed seed reproduces the exact candidate set") {
    CandidateGenOptions options;
    options.count = 20;
    options.include_endpoints = true;
    options.seed = 99;
    const auto a = generate_candidate_set(index, assignments, vocab, n, 1, options);
    const auto b = generate_candidate_set(index, assignments, vocab, n, 1, options);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
      CHECK(a.records[i].candidate_id == b.records[i].candidate_id);
      CHECK(a.records[i].human_subset == b.records[i].human_subset);
      CHECK(a.records[i].budget == b.records[i].budget);
    }
  }

  SUBCASE("sampled candidates satisfy the overshoot bound") {
    CandidateGenOptions options;
    options.count = 200;
    options.seed = 3;
    const auto set = generate_candidate_set(index, assignments, vocab, n, 1, options);
    const std::size_t largest = index.largest_group();
    std::size_t coverage = 0;
    {
      std::set<std::uint32_t> covered;
      for (const auto& [tag, positions] : index.groups)
        covered.insert(positions.begin(), positions.end());
      coverage = covered.size();
    }
    for (const auto& record : set.records) {
      const auto realized = record.realized_size();
      if (record.budget <= coverage) {
        CHECK(realized >= record.budget);
        CHECK(realized <= record.budget - 1 + largest);
      } else {
        CHECK(realized == coverage);
      }
    }
  }
}

TEST_CASE("feature-matrix CSV survives tag names containing commas") {
  const auto assignments =
      fixtures::assignments_of({{"bertscore:[0.00,0.33)"}, {"bertscore:[0.33,0.67)"}});
  const auto vocab =
      fixtures::vocab_of({"bertscore:[0.00,0.33)", "bertscore:[0.33,0.67)"});
  CandidateGenOptions options;
  options.count = 3;
  options.seed = 2;
  CandidateSet set = generate_candidate_set(build_tag_index(assignments), assignments,
                                            vocab, 2, 5, options);
  for (auto& record : set.records) record.performance = 0.5;

  const auto dir = fs::temp_directory_path() / "prefroute-tests";
  fs::create_directories(dir);
  const auto path = dir / "comma_matrix.csv";
  export_feature_matrix(set, vocab, path);
  const TrainingMatrix matrix = read_training_matrix(path, vocab);
  REQUIRE(matrix.candidate_ids.size() == set.records.size());
  for (std::size_t i = 0; i < matrix.counts.size(); ++i)
    CHECK(matrix.counts[i] ==
          std::vector<std::uint32_t>(set.records[i].features.counts.begin(),
                                     set.records[i].features.counts.end()));
}

TEST_CASE("candidate files round trip and join external scores") {
  const auto assignments = fixtures::assignments_of({{"p"}, {"p", "q"}, {"q"}});
  const auto index = build_tag_index(assignments);
  const auto vocab = fixtures::vocab_of({"p", "q"});

  CandidateGenOptions options;
  options.count = 5;
  options.include_endpoints = true;
  options.seed = 11;
  CandidateSet set = generate_candidate_set(index, assignments, vocab, 3, 77, options);
  set.records[0].performance = 0.5;
  set.records[0].performance_source = PerformanceSource::oracle;

  const auto dir = fs::temp_directory_path() / "prefroute-tests";
  fs::create_directories(dir);
  const auto path = dir / "cands_rt.jsonl";
  const std::vector<std::string> ids = {"inst-0", "inst-1", "inst-2"};
  save_candidate_set(set, ids, path);

  const Dataset d = fixtures::dataset_of(3);
  const auto loaded = load_candidate_set(path, [&](const std::string& id) {
    return d.position_of(id).has_value()
               ? std::optional<std::uint32_t>(static_cast<std::uint32_t>(*d.position_of(id)))
               : std::nullopt;
  });
  REQUIRE(loaded.records.size() == set.records.size());
  CHECK(loaded.dataset_size == 3);
  for (std::size_t i = 0; i < loaded.records.size(); ++i) {
    CHECK(loaded.records[i].human_subset == set.records[i].human_subset);
    CHECK(loaded.records[i].features.counts == set.records[i].features.counts);
  }
  CHECK(loaded.records[0].performance == 0.5);
  CHECK(loaded.records[0].performance_source == PerformanceSource::oracle);

  // Feature-matrix export and CSV score ingestion.
  const auto matrix_path = dir / "cands_matrix.csv";
  export_feature_matrix(set, vocab, matrix_path);
  {
    // The exported matrix reads back as a training matrix; only the scored
    // record survives (the others have empty performance cells).
    const TrainingMatrix matrix = read_training_matrix(matrix_path, vocab);
    REQUIRE(matrix.candidate_ids.size() == 1);
    CHECK(matrix.candidate_ids[0] == set.records[0].candidate_id);
    CHECK(matrix.performance[0] == 0.5);
    for (std::size_t j = 0; j < vocab.size(); ++j)
      CHECK(matrix.counts[0][j] == set.records[0].features.counts[j]);
  }
  const auto scores_path = dir / "cands_scores.csv";
  atomic_write_text(scores_path,
                    "candidate_id,performance\n" + set.records[1].candidate_id +
                        ",0.75\n" + set.records[2].candidate_id + ",0.25\nunknown,0.1\n");
  const auto merged_path = dir / "cands_merged.jsonl";
  CHECK(ingest_performance(path, scores_path, merged_path) == 2);
  const auto merged = load_candidate_set(merged_path);
  CHECK(merged.records[1].performance == 0.75);
  CHECK(merged.records[1].performance_source == PerformanceSource::measured);
  CHECK(merged.records[0].performance == 0.5);  // untouched
}
