#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "xsalign/alignloss.hpp"
#include "xsalign/corpus.hpp"
#include "xsalign/dictionary.hpp"
#include "xsalign/embedding.hpp"
#include "xsalign/evalx.hpp"
#include "xsalign/mapping.hpp"
#include "xsalign/util.hpp"

namespace py = pybind11;
using namespace xsalign;

namespace {

Dictionary dict_from_pairs(const std::vector<std::pair<std::string, std::string>>& pairs) {
  Dictionary d;
  d.pairs = pairs;
  return d;
}

MappingConfig make_mapping_config(const std::string& normalize, bool whiten,
                                  double reweight, int csls_k, int cutoff,
                                  double keep_prob, double keep_prob_mult,
                                  double threshold, int max_iterations, int patience,
                                  uint64_t seed, int threads) {
  MappingConfig cfg;
  cfg.normalize.clear();
  for (auto part : split_char(normalize, ',')) {
    if (part == "unit")
      cfg.normalize.push_back(NormStep::Unit);
    else if (part == "center")
      cfg.normalize.push_back(NormStep::Center);
    else
      fail("unknown normalization step '" + std::string(part) + "'");
  }
  cfg.whiten = whiten;
  cfg.reweight = reweight;
  cfg.csls_k = csls_k;
  cfg.cutoff = cutoff;
  cfg.keep_prob_start = keep_prob;
  cfg.keep_prob_mult = keep_prob_mult;
  cfg.threshold = threshold;
  cfg.max_iterations = max_iterations;
  cfg.stagnation_patience = patience;
  cfg.seed = seed;
  cfg.threads = threads;
  return cfg;
}

constexpr const char* kMappingKwargsDoc =
    "normalize, whiten, reweight, csls_k, cutoff, keep_prob, keep_prob_mult, "
    "threshold, max_iterations, patience, seed, threads";

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "cross-lingual static/contextual embedding alignment core";

  py::register_exception<Error>(m, "XsalignError");

  py::class_<EmbeddingSpace>(m, "EmbeddingSpace")
      .def(py::init([](std::vector<std::string> words, Matrix matrix) {
             return EmbeddingSpace::create(std::move(words), std::move(matrix));
           }),
           py::arg("words"), py::arg("matrix"))
      .def_readonly("words", &EmbeddingSpace::words)
      .def_readonly("matrix", &EmbeddingSpace::matrix)
      .def_property_readonly("dim", &EmbeddingSpace::dim)
      .def("__len__", &EmbeddingSpace::size)
      .def("find", &EmbeddingSpace::find, py::arg("word"))
      .def("__repr__", [](const EmbeddingSpace& s) {
        return "EmbeddingSpace(" + std::to_string(s.size()) + " words, dim " +
               std::to_string(s.dim()) + ")";
      });

  m.def("read_space", &read_space, py::arg("path"));
  m.def("write_space", &write_space, py::arg("space"), py::arg("path"));
  m.def("unit_normalize", &unit_normalize, py::arg("space"));
  m.def("mean_center", &mean_center, py::arg("space"));

  m.def(
      "read_dictionary",
      [](const std::string& path) { return read_dictionary(path).pairs; },
      py::arg("path"));
  m.def(
      "write_dictionary",
      [](const std::vector<std::pair<std::string, std::string>>& pairs,
         const std::string& path) { write_dictionary(dict_from_pairs(pairs), path); },
      py::arg("pairs"), py::arg("path"));

  m.def("procrustes", &procrustes, py::arg("x"), py::arg("y"),
        "Orthogonal W maximising sum (x_i W) . y_i, from the SVD of x^T y.");
  m.def("knn_mean_similarity", &knn_mean_similarity, py::arg("queries"),
        py::arg("cands"), py::arg("k"), py::arg("threads") = 1);
  m.def("csls_matrix", &csls_matrix, py::arg("queries"), py::arg("cands"), py::arg("k"),
        py::arg("threads") = 1,
        "Full CSLS score matrix; hub penalties within the two row sets.");

  py::class_<MappedPair>(m, "MappedPair")
      .def_readonly("src", &MappedPair::src)
      .def_readonly("tgt", &MappedPair::tgt)
      .def_readonly("transform", &MappedPair::transform)
      .def_readonly("objective", &MappedPair::objective)
      .def_readonly("orthogonal", &MappedPair::orthogonal)
      .def_readonly("converged", &MappedPair::converged)
      .def_readonly("iterations", &MappedPair::iterations)
      .def_readonly("objective_trace", &MappedPair::objective_trace)
      .def_readonly("dropped_pairs", &MappedPair::dropped_pairs);

  m.def(
      "induce_seed_unsupervised",
      [](const EmbeddingSpace& src, const EmbeddingSpace& tgt, int cutoff, int threads) {
        return induce_seed_unsupervised(src, tgt, cutoff, threads).pairs;
      },
      py::arg("src"), py::arg("tgt"), py::arg("cutoff"), py::arg("threads") = 1,
      "Similarity-distribution signature matching over the top-cutoff words.");

  m.def(
      "map_supervised",
      [](const EmbeddingSpace& src, const EmbeddingSpace& tgt,
         const std::vector<std::pair<std::string, std::string>>& dict,
         const std::string& normalize, bool whiten, double reweight, int csls_k,
         int cutoff, double keep_prob, double keep_prob_mult, double threshold,
         int max_iterations, int patience, uint64_t seed, int threads) {
        return map_supervised(src, tgt, dict_from_pairs(dict),
                              make_mapping_config(normalize, whiten, reweight, csls_k,
                                                  cutoff, keep_prob, keep_prob_mult,
                                                  threshold, max_iterations, patience,
                                                  seed, threads));
      },
      py::arg("src"), py::arg("tgt"), py::arg("dict"),
      py::arg("normalize") = "unit,center,unit", py::arg("whiten") = false,
      py::arg("reweight") = 0.5, py::arg("csls_k") = 10, py::arg("cutoff") = 2000,
      py::arg("keep_prob") = 0.1, py::arg("keep_prob_mult") = 2.0,
      py::arg("threshold") = 1e-6, py::arg("max_iterations") = 500,
      py::arg("patience") = 10, py::arg("seed") = 1, py::arg("threads") = 1,
      kMappingKwargsDoc);

  m.def(
      "self_learn",
      [](const EmbeddingSpace& src, const EmbeddingSpace& tgt,
         const std::vector<std::pair<std::string, std::string>>& seed_dict,
         const std::string& normalize, bool whiten, double reweight, int csls_k,
         int cutoff, double keep_prob, double keep_prob_mult, double threshold,
         int max_iterations, int patience, uint64_t seed, int threads) {
        return self_learn(src, tgt, dict_from_pairs(seed_dict),
                          make_mapping_config(normalize, whiten, reweight, csls_k,
                                              cutoff, keep_prob, keep_prob_mult,
                                              threshold, max_iterations, patience, seed,
                                              threads));
      },
      py::arg("src"), py::arg("tgt"), py::arg("seed_dict"),
      py::arg("normalize") = "unit,center,unit", py::arg("whiten") = false,
      py::arg("reweight") = 0.5, py::arg("csls_k") = 10, py::arg("cutoff") = 2000,
      py::arg("keep_prob") = 0.1, py::arg("keep_prob_mult") = 2.0,
      py::arg("threshold") = 1e-6, py::arg("max_iterations") = 500,
      py::arg("patience") = 10, py::arg("seed") = 1, py::arg("threads") = 1,
      kMappingKwargsDoc);

  py::class_<BliResult>(m, "BliResult")
      .def_readonly("p_at_1", &BliResult::p_at_1)
      .def_readonly("coverage", &BliResult::coverage)
      .def_readonly("n_covered", &BliResult::n_covered)
      .def_readonly("n_gold_sources", &BliResult::n_gold_sources)
      .def_readonly("predictions", &BliResult::predictions);

  m.def(
      "eval_bli",
      [](const EmbeddingSpace& src, const EmbeddingSpace& tgt,
         const std::vector<std::pair<std::string, std::string>>& gold,
         const std::string& method, int k, int threads) {
        return eval_bli(src, tgt, dict_from_pairs(gold),
                        method == "nn" ? BliMethod::Nn : BliMethod::Csls, k, threads);
      },
      py::arg("src"), py::arg("tgt"), py::arg("gold"), py::arg("method") = "csls",
      py::arg("k") = 10, py::arg("threads") = 1);

  m.def(
      "eval_similarity",
      [](const EmbeddingSpace& space, const SimilarityGold& gold,
         const EmbeddingSpace* space2) {
        SimilarityResult r = eval_similarity(space, space2, gold);
        return py::make_tuple(r.spearman, r.n_scored, r.n_skipped);
      },
      py::arg("space"), py::arg("gold"), py::arg("space2") = nullptr,
      "Returns (spearman, n_scored, n_skipped).");
  m.def("spearman_rho", &spearman_rho, py::arg("x"), py::arg("y"));

  m.def(
      "mse_loss",
      [](const Matrix& h1, const Matrix& h2) {
        Matrix grad;
        double loss = mse_loss(h1, h2, &grad);
        return py::make_tuple(loss, grad);
      },
      py::arg("h1"), py::arg("h2"),
      "Returns (loss, grad_h1); the h2 side is frozen.");

  m.def(
      "dcca_loss",
      [](const Matrix& h1, const Matrix& h2, double r1, double r2, int k_cca) {
        DccaConfig cfg;
        cfg.r1 = r1;
        cfg.r2 = r2;
        cfg.k_cca = k_cca;
        Matrix grad;
        double loss = dcca_loss(h1, h2, cfg, &grad);
        return py::make_tuple(loss, grad);
      },
      py::arg("h1"), py::arg("h2"), py::arg("r1") = 1e-3, py::arg("r2") = 1e-3,
      py::arg("k_cca") = 0,
      "Negated sum of canonical correlations; returns (loss, grad_h1).");
}
