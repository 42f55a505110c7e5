#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "prefroute/analysis.hpp"
#include "prefroute/fingerprint.hpp"
#include "prefroute/oracle.hpp"

namespace py = pybind11;
using namespace prefroute;

namespace {

Label label_from_string(const std::string& s) { return parse_label(s); }
std::string label_string(Label l) { return std::string(label_to_string(l)); }

TaggingOptions make_tagging_options(bool descriptive,
                                    const std::vector<std::string>& disabled,
                                    std::uint64_t fallback_seed, int fallback_dim,
                                    int threads) {
  TaggingOptions options;
  options.descriptive = descriptive;
  for (const auto& d : disabled) options.disabled_textual.insert(d);
  options.fallback_embedding_seed = fallback_seed;
  options.fallback_embedding_dim = fallback_dim;
  options.threads = threads;
  return options;
}

}  // namespace

PYBIND11_MODULE(_prefroute, m) {
  m.doc() = "Routing of preference instances between human and LM annotators via a "
            "performance prediction model";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_IOError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  // --- core ---------------------------------------------------------------
  py::class_<PreferenceInstance>(m, "PreferenceInstance")
      .def_readonly("id", &PreferenceInstance::id)
      .def_readonly("prompt", &PreferenceInstance::prompt)
      .def_readonly("response_a", &PreferenceInstance::response_a)
      .def_readonly("response_b", &PreferenceInstance::response_b)
      .def_property_readonly("human_label",
                             [](const PreferenceInstance& inst) -> py::object {
                               if (!inst.human_label) return py::none();
                               return py::str(label_string(*inst.human_label));
                             })
      .def_property_readonly("lm_label",
                             [](const PreferenceInstance& inst) -> py::object {
                               if (!inst.lm_label) return py::none();
                               return py::str(label_string(*inst.lm_label));
                             });

  py::class_<Dataset>(m, "Dataset")
      .def("__len__", &Dataset::size)
      .def("__getitem__",
           [](const Dataset& d, std::size_t i) {
             if (i >= d.size()) throw py::index_error();
             return d.at(i);
           })
      .def_property_readonly("fingerprint",
                             [](const Dataset& d) { return fingerprint_hex(d.fingerprint()); })
      .def_property_readonly("provenance", &Dataset::provenance);

  m.def("load_dataset",
        [](const std::filesystem::path& path) { return load_dataset(path); },
        py::arg("path"));
  m.def("save_dataset", &save_dataset, py::arg("dataset"), py::arg("path"));
  m.def("filter_ties", &filter_ties, py::arg("dataset"));
  m.def("subsample", &subsample, py::arg("dataset"), py::arg("n"), py::arg("seed"));
  m.def("apply_routing",
        [](const Dataset& d, const std::vector<int>& bits,
           const std::vector<std::string>& ids) {
          RoutingConfiguration z;
          for (const int b : bits) z.assignments.push_back(static_cast<std::uint8_t>(b));
          z.instance_ids = ids;
          std::vector<std::tuple<std::string, std::string, bool>> out;
          for (const auto& routed : apply_routing(d, z))
            out.emplace_back(routed.id, label_string(routed.label), routed.from_lm);
          return out;
        },
        py::arg("dataset"), py::arg("assignments"), py::arg("instance_ids"));

  // --- metrics ------------------------------------------------------------
  m.def("rouge_l",
        [](const std::vector<std::string>& a, const std::vector<std::string>& b) {
          return rouge_l(a, b).value;
        },
        py::arg("tokens_a"), py::arg("tokens_b"));
  m.def("cosine_similarity",
        [](const std::vector<double>& u, const std::vector<double>& v) {
          return cosine_similarity(u, v);
        },
        py::arg("u"), py::arg("v"));
  m.def("entity_iou",
        [](const std::set<std::string>& a, const std::set<std::string>& b) {
          return entity_iou(a, b).value;
        },
        py::arg("entities_a"), py::arg("entities_b"));
  m.def("bert_score",
        [](const std::vector<std::vector<double>>& a,
           const std::vector<std::vector<double>>& b, bool length_adjusted) {
          return bert_score(a, b, length_adjusted).value;
        },
        py::arg("tokens_a"), py::arg("tokens_b"), py::arg("length_adjusted") = false);
  m.def("tokenize", [](const std::string& text) {
    return default_tokenizer()->tokenize(text);
  });
  m.def("spearman",
        [](const std::vector<double>& a, const std::vector<double>& b) -> py::object {
          const auto rho = spearman(a, b);
          if (!rho) return py::none();
          return py::float_(*rho);
        },
        py::arg("pred"), py::arg("actual"));
  m.def("rmse",
        [](const std::vector<double>& a, const std::vector<double>& b) {
          return rmse(a, b);
        },
        py::arg("pred"), py::arg("actual"));

  // --- tagging ------------------------------------------------------------
  py::class_<TagVocabulary>(m, "TagVocabulary")
      .def("__len__", &TagVocabulary::size)
      .def_property_readonly("tags", &TagVocabulary::tags)
      .def("index_of",
           [](const TagVocabulary& v, const std::string& tag) -> py::object {
             const auto idx = v.index_of(tag);
             if (!idx) return py::none();
             return py::int_(*idx);
           })
      .def_property_readonly("fingerprint", [](const TagVocabulary& v) {
        return fingerprint_hex(v.fingerprint());
      });

  py::class_<TagAssignment>(m, "TagAssignment")
      .def_readonly("instance_id", &TagAssignment::instance_id)
      .def_readonly("tags", &TagAssignment::tags)
      .def_readonly("raw_metrics", &TagAssignment::raw_metrics)
      .def_readonly("flags", &TagAssignment::flags);

  py::class_<TaggingResult>(m, "TaggingResult")
      .def_readonly("vocabulary", &TaggingResult::vocabulary)
      .def_readonly("assignments", &TaggingResult::assignments)
      .def_readonly("warnings", &TaggingResult::warnings);

  m.def("tag_dataset",
        [](const Dataset& d, bool descriptive, const std::vector<std::string>& disabled,
           std::uint64_t fallback_seed, int fallback_dim, int threads) {
          return tag_dataset(
              d, make_tagging_options(descriptive, disabled, fallback_seed, fallback_dim,
                                      threads));
        },
        py::arg("dataset"), py::arg("descriptive") = true,
        py::arg("disabled_metrics") = std::vector<std::string>{},
        py::arg("fallback_embedding_seed") = 104729,
        py::arg("fallback_embedding_dim") = 64, py::arg("threads") = 0);

  // --- candidates ---------------------------------------------------------
  py::class_<FeatureVector>(m, "FeatureVector")
      .def_readonly("counts", &FeatureVector::counts);

  py::class_<CandidateRecord>(m, "CandidateRecord")
      .def_readonly("candidate_id", &CandidateRecord::candidate_id)
      .def_readonly("budget", &CandidateRecord::budget)
      .def_readonly("human_subset", &CandidateRecord::human_subset)
      .def_readonly("features", &CandidateRecord::features)
      .def_property("performance",
                    [](const CandidateRecord& r) -> py::object {
                      if (!r.performance) return py::none();
                      return py::float_(*r.performance);
                    },
                    [](CandidateRecord& r, py::object value) {
                      if (value.is_none()) {
                        r.performance.reset();
                        r.performance_source = PerformanceSource::absent;
                      } else {
                        r.performance = value.cast<double>();
                        r.performance_source = PerformanceSource::measured;
                      }
                    })
      .def_property_readonly("realized_size", &CandidateRecord::realized_size);

  py::class_<CandidateSet>(m, "CandidateSet")
      .def_readonly("records", &CandidateSet::records)
      .def_readonly("dataset_size", &CandidateSet::dataset_size)
      .def("set_performance",
           [](CandidateSet& set, std::size_t i, double value) {
             if (i >= set.records.size()) throw py::index_error();
             set.records[i].performance = value;
             set.records[i].performance_source = PerformanceSource::measured;
           },
           py::arg("index"), py::arg("performance"));

  py::class_<TagIndex>(m, "TagIndex")
      .def_property_readonly("tags", [](const TagIndex& index) {
        std::vector<std::string> tags;
        for (const auto& [tag, positions] : index.groups) tags.push_back(tag);
        return tags;
      });

  m.def("build_tag_index", &build_tag_index, py::arg("assignments"));
  m.def("featurize",
        [](const std::vector<std::uint32_t>& subset,
           const std::vector<TagAssignment>& assignments, const TagVocabulary& vocab) {
          return featurize(subset, assignments, vocab);
        },
        py::arg("human_subset"), py::arg("assignments"), py::arg("vocabulary"));
  m.def("generate_candidate_set",
        [](const TagIndex& index, const std::vector<TagAssignment>& assignments,
           const TagVocabulary& vocab, std::size_t dataset_size, std::size_t count,
           bool include_endpoints, std::uint64_t seed, py::object fixed_budget) {
          CandidateGenOptions options;
          options.count = count;
          options.include_endpoints = include_endpoints;
          options.seed = seed;
          if (!fixed_budget.is_none())
            options.fixed_budget = fixed_budget.cast<std::uint64_t>();
          return generate_candidate_set(index, assignments, vocab, dataset_size, 0,
                                        options);
        },
        py::arg("index"), py::arg("assignments"), py::arg("vocabulary"),
        py::arg("dataset_size"), py::arg("count") = 200,
        py::arg("include_endpoints") = false, py::arg("seed") = 0,
        py::arg("fixed_budget") = py::none());

  // --- ppm ----------------------------------------------------------------
  py::class_<PpmModel>(m, "PpmModel")
      .def_property_readonly("kind",
                             [](const PpmModel& model) {
                               return std::string(ppm_kind_to_string(model.kind));
                             })
      .def_property_readonly("vocabulary",
                             [](const PpmModel& model) { return model.vocabulary; })
      .def("predict_counts",
           [](const PpmModel& model, const std::vector<std::uint32_t>& counts) {
             return model.predict_counts(counts);
           },
           py::arg("counts"));

  m.def("fit_ppm",
        [](const CandidateSet& train, const TagVocabulary& vocab, const std::string& kind,
           double ridge, const std::string& expansion, int gbt_trees, int gbt_depth,
           double gbt_learning_rate, int gbt_min_leaf, std::uint64_t seed) {
          FitOptions options;
          options.kind = parse_ppm_kind(kind);
          options.ridge = ridge;
          options.mode = expansion == "full_interactions" ? QuadraticMode::full_interactions
                                                          : QuadraticMode::squares_only;
          options.gbt.n_trees = gbt_trees;
          options.gbt.max_depth = gbt_depth;
          options.gbt.learning_rate = gbt_learning_rate;
          options.gbt.min_leaf = gbt_min_leaf;
          options.seed = seed;
          return fit_ppm(train, vocab, options);
        },
        py::arg("train"), py::arg("vocabulary"), py::arg("kind") = "quadratic",
        py::arg("ridge") = 1e-3, py::arg("expansion") = "squares_only",
        py::arg("gbt_trees") = 100, py::arg("gbt_depth") = 3,
        py::arg("gbt_learning_rate") = 0.1, py::arg("gbt_min_leaf") = 5,
        py::arg("seed") = 0);
  m.def("save_model", &save_model, py::arg("model"), py::arg("path"));
  m.def("load_model", &load_model, py::arg("path"));

  // --- routing ------------------------------------------------------------
  py::class_<RoutingResult>(m, "RoutingResult")
      .def_property_readonly("strategy",
                             [](const RoutingResult& result) {
                               return std::string(strategy_to_string(result.strategy));
                             })
      .def_property_readonly("assignments",
                             [](const RoutingResult& result) {
                               std::vector<int> bits;
                               for (const auto b : result.configuration.assignments)
                                 bits.push_back(b);
                               return bits;
                             })
      .def_property_readonly("instance_ids",
                             [](const RoutingResult& result) {
                               return result.configuration.instance_ids;
                             })
      .def_property_readonly("predicted_performance",
                             [](const RoutingResult& result) -> py::object {
                               if (!result.predicted_performance) return py::none();
                               return py::float_(*result.predicted_performance);
                             })
      .def_readonly("budget_realized", &RoutingResult::budget_realized)
      .def_readonly("n_simulations", &RoutingResult::n_simulations)
      .def_readonly("vocab_coverage", &RoutingResult::vocab_coverage);

  m.def("route_simulated",
        [](const Dataset& d, const std::vector<TagAssignment>& assignments,
           const TagVocabulary& vocab, const TagIndex& index, const PpmModel& model,
           std::size_t n_sims, py::object budget, double slack, std::uint64_t seed,
           int threads) {
          SimulatedOptions options;
          options.n_sims = n_sims;
          if (!budget.is_none()) options.budget = budget.cast<std::uint64_t>();
          options.slack = slack;
          options.seed = seed;
          options.threads = threads;
          return route_simulated(d, assignments, vocab, index, model, options);
        },
        py::arg("dataset"), py::arg("assignments"), py::arg("vocabulary"),
        py::arg("index"), py::arg("model"), py::arg("n_sims") = 500,
        py::arg("budget") = py::none(), py::arg("slack") = 0.05, py::arg("seed") = 0,
        py::arg("threads") = 0);
  m.def("route_topk",
        [](const Dataset& d, const std::vector<TagAssignment>& assignments,
           const PpmModel& model, std::uint64_t k) {
          return route_topk(d, assignments, model, k);
        },
        py::arg("dataset"), py::arg("assignments"), py::arg("model"), py::arg("k"));
  m.def("route_random_fraction", &route_random_fraction, py::arg("dataset"),
        py::arg("fraction"), py::arg("seed"));
  m.def("instance_gain",
        [](const PpmModel& model, const TagAssignment& assignment) {
          const ModelFeatureMapper mapper(model);
          return instance_gain(mapper, assignment);
        },
        py::arg("model"), py::arg("assignment"));

  // --- analysis -----------------------------------------------------------
  m.def("agreement",
        [](const std::vector<std::string>& a, const std::vector<std::string>& b) {
          std::vector<Label> la, lb;
          for (const auto& s : a) la.push_back(label_from_string(s));
          for (const auto& s : b) lb.push_back(label_from_string(s));
          const auto report = agreement(la, lb);
          py::dict out;
          out["percent_agreement"] = report.percent_agreement;
          out["cohen_kappa"] = report.cohen_kappa ? py::object(py::float_(*report.cohen_kappa))
                                                  : py::object(py::none());
          out["n"] = report.n;
          return out;
        },
        py::arg("labels_a"), py::arg("labels_b"));
  m.def("binarize_aspects",
        [](const std::map<std::string, double>& side_1,
           const std::map<std::string, double>& side_2) {
          auto ratings = [](const std::map<std::string, double>& side,
                            const char* name) {
            Json object;
            for (const auto& [k, v] : side) object[k] = v;
            return parse_aspect_ratings(object, name);
          };
          return label_string(
              binarize_aspects(ratings(side_1, "ratings_1"), ratings(side_2, "ratings_2")));
        },
        py::arg("ratings_1"), py::arg("ratings_2"));
  m.def("gain_distribution",
        [](const PpmModel& model, const std::vector<TagAssignment>& assignments) {
          std::vector<std::pair<std::string, double>> out;
          for (const auto& entry : gain_distribution(model, assignments, nullptr))
            out.emplace_back(entry.id, entry.gain);
          return out;
        },
        py::arg("model"), py::arg("assignments"));

  // --- oracle harness -----------------------------------------------------
  py::class_<SynthData>(m, "SynthData")
      .def_readonly("dataset", &SynthData::dataset)
      .def_readonly("vocabulary", &SynthData::vocabulary)
      .def_readonly("assignments", &SynthData::assignments)
      .def_readonly("index", &SynthData::index);

  m.def("synth_dataset",
        [](std::size_t n, std::size_t n_dims, double mean_tags, double skew,
           std::uint64_t seed) {
          SynthConfig config;
          config.n = n;
          config.n_dims = n_dims;
          config.mean_tags_per_instance = mean_tags;
          config.skew = skew;
          config.seed = seed;
          return synth_dataset(config);
        },
        py::arg("n"), py::arg("n_dims") = 30, py::arg("mean_tags_per_instance") = 6.0,
        py::arg("skew") = 1.0, py::arg("seed") = 0);

  // JSON-string interface; the python package wraps it with dicts.
  m.def("run_end_to_end_json", [](const std::string& config_json) {
    const Json config = Json::parse(config_json);
    const EvaluationReport report = run_end_to_end(harness_config_from_json(config));
    return evaluation_report_to_json(report).dump();
  });

  m.attr("__version__") = "0.1.0";
}
