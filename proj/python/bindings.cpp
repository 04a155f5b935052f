#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "reshare/effects.hpp"
#include "reshare/error.hpp"
#include "reshare/outcomes.hpp"
#include "reshare/pipeline.hpp"
#include "reshare/plv.hpp"
#include "reshare/propensity.hpp"
#include "reshare/stats.hpp"
#include "reshare/synthgen.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace reshare;

namespace {

py::array_t<double> matrix(const std::vector<double>& values, std::size_t rows, std::size_t cols) {
  py::array_t<double> out({rows, cols});
  std::copy(values.begin(), values.end(), out.mutable_data());
  return out;
}

effects::FeatureMatrix feature_matrix(py::array_t<double, py::array::c_style | py::array::forcecast> x,
                                      std::vector<double> y, std::vector<std::string> names) {
  if (x.ndim() != 2) throw ValidationError("X must be two-dimensional");
  const auto n = static_cast<std::size_t>(x.shape(0)), p = static_cast<std::size_t>(x.shape(1));
  if (y.size() != n) throw ValidationError("X and y have different row counts");
  if (names.empty()) {
    for (std::size_t j = 0; j < p; ++j) names.push_back("x" + std::to_string(j));
  }
  if (names.size() != p) throw ValidationError("feature_names does not match the column count");
  std::vector<std::vector<double>> rows(n, std::vector<double>(p));
  auto r = x.unchecked<2>();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) rows[i][j] = r(i, j);
  }
  return effects::FeatureMatrix::from_rows(std::move(names), rows, std::move(y));
}

PropensityTable make_propensity(const Dataset& ds, const std::string& scheme, double mu, double floor) {
  switch (parse_scheme(scheme)) {
    case PropensityScheme::Biased:
      return biased_propensity(ds.graph, floor);
    case PropensityScheme::Virality:
      return virality_propensity(ds.graph, mu, floor);
    case PropensityScheme::Follower:
      return follower_propensity(ds.graph, ds.users, mu, floor);
    case PropensityScheme::Neural:
      break;
  }
  throw ValidationError("the neural scheme needs topic vectors; run the pipeline instead");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Debiased modelling of hate-speech resharing";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<ConvergenceError>(m, "ConvergenceError", PyExc_RuntimeError);

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("num_users", [](const Dataset& d) { return d.graph.num_users(); })
      .def_property_readonly("num_posts", [](const Dataset& d) { return d.graph.num_posts(); })
      .def_property_readonly("num_edges", [](const Dataset& d) { return d.graph.num_edges(); })
      .def_property_readonly("num_hate_posts", [](const Dataset& d) { return d.graph.hate_subgraph().num_posts(); })
      .def_property_readonly("user_ids", [](const Dataset& d) { return d.graph.users(); })
      .def_property_readonly("post_ids",
                             [](const Dataset& d) {
                               std::vector<std::string> ids;
                               for (const auto& p : d.graph.posts()) ids.push_back(p.post_id);
                               return ids;
                             })
      .def("hate_only",
           [](const Dataset& d) {
             return Dataset{d.graph.hate_subgraph(), d.users};
           },
           "Copy restricted to hate posts and their reshares.")
      .def("features",
           [](const Dataset& d) {
             const auto view = log_transform_attributes(d.users);
             std::vector<double> flat;
             for (const auto& r : view.rows) flat.insert(flat.end(), r.begin(), r.end());
             return py::make_tuple(matrix(flat, view.rows.size(), 5), view.user_ids);
           },
           "Log-transformed attribute matrix and its user ids.");

  m.attr("ATTRIBUTE_NAMES") = std::vector<std::string>(kAttributeNames.begin(), kAttributeNames.end());

  m.def("load_dataset", [](const fs::path& dir) { return load_dataset(DatasetPaths::in_directory(dir)); },
        py::arg("directory"), "Loads posts.csv, users.csv and interactions.csv from a directory.");

  m.def(
      "synth",
      [](const fs::path& out, const std::string& config_json, std::vector<std::string> overrides) {
        std::vector<std::string> prefixed;
        for (auto& o : overrides) prefixed.push_back("synth." + o);
        const auto config = pipeline::parse_config(config_json, {}, prefixed);
        return pipeline::cmd_synth(pipeline::synth_config(config), out).data;
      },
      py::arg("out"), py::arg("config_json") = "{}", py::arg("overrides") = std::vector<std::string>{},
      "Writes a synthetic dataset with its ground truth. Overrides are 'key=value' on the synth block.");

  m.def(
      "propensity",
      [](const Dataset& ds, const std::string& scheme, double mu, double floor) {
        const auto t = make_propensity(ds, scheme, mu, floor);
        std::map<std::string, double> out;
        for (std::size_t h = 0; h < t.size(); ++h) out[t.post_ids[h]] = t.theta[h];
        return out;
      },
      py::arg("dataset"), py::arg("scheme") = "virality", py::arg("mu") = kDefaultMu,
      py::arg("floor") = kDefaultPropensityFloor, "Per-post exposure estimates (biased, virality or follower).");

  py::class_<plv::PlvModel>(m, "PlvModel")
      .def_readonly("user_ids", &plv::PlvModel::user_ids)
      .def_readonly("post_ids", &plv::PlvModel::post_ids)
      .def_readonly("training_curve", &plv::PlvModel::training_curve)
      .def_property_readonly("user_embeddings",
                             [](const plv::PlvModel& p) { return matrix(p.U, p.num_users(), p.dim); })
      .def_property_readonly("post_embeddings",
                             [](const plv::PlvModel& p) { return matrix(p.H, p.num_posts(), p.dim); })
      .def("user_embedding", &plv::PlvModel::user_embedding, py::arg("user_id"))
      .def(
          "ranking",
          [](const plv::PlvModel& p, const Dataset& train, const Dataset& test, std::vector<std::size_t> k) {
            const auto r = plv::ranking_metrics(p, train.graph, test.graph, k);
            py::dict out;
            for (std::size_t i = 0; i < k.size(); ++i) {
              out[py::make_tuple("recall", k[i])] = r.recall[i];
              out[py::make_tuple("ndcg", k[i])] = r.ndcg[i];
            }
            return out;
          },
          py::arg("train"), py::arg("test"), py::arg("k") = std::vector<std::size_t>{20, 40, 60, 80});

  m.def(
      "train_plv",
      [](const Dataset& ds, const std::string& scheme, double mu, const std::string& loss, std::size_t dim,
         std::size_t epochs, double learning_rate, double lambda, std::uint64_t seed) {
        plv::PlvHyper h;
        h.embedding_dim = dim;
        h.epochs = epochs;
        h.learning_rate = learning_rate;
        h.lambda = lambda;
        h.loss_mode = plv::parse_loss_mode(loss);
        h.seed = seed;
        if (h.loss_mode == plv::LossMode::Naive) return plv::train(ds.graph, nullptr, h);
        const auto t = make_propensity(ds, scheme, mu, kDefaultPropensityFloor);
        return plv::train(ds.graph, &t, h);
      },
      py::arg("dataset"), py::arg("scheme") = "virality", py::arg("mu") = kDefaultMu, py::arg("loss") = "nonneg",
      py::arg("dim") = 64, py::arg("epochs") = 50, py::arg("learning_rate") = 0.001, py::arg("lam") = 1e-4,
      py::arg("seed") = 0, py::call_guard<py::gil_scoped_release>(),
      "Trains PLV embeddings on the dataset's graph (pass dataset.hate_only() for the hate subgraph).");

  m.def(
      "split",
      [](const Dataset& ds, double ratio, std::uint64_t seed, const std::string& mode) {
        const auto sp = split(ds.graph, mode == "by-user" ? SplitMode::ByUser : SplitMode::ByEdge, ratio, seed);
        return py::make_tuple(Dataset{sp.train, ds.users}, Dataset{sp.test, ds.users});
      },
      py::arg("dataset"), py::arg("ratio") = 0.8, py::arg("seed") = 0, py::arg("mode") = "by-edge");

  m.def(
      "outcomes",
      [](const Dataset& ds) {
        const auto t = compute_outcomes(ds.graph);
        py::dict out;
        out["user_ids"] = t.user_ids;
        out["y"] = t.y;
        py::dict clusters;
        for (const auto& c : t.clusters) clusters[py::str(c)] = t.cluster_column(c);
        out["clusters"] = clusters;
        out["excluded_users"] = t.excluded_users;
        return out;
      },
      py::arg("dataset"), "Overall and per-cluster hate reshare rates.");

  py::class_<effects::EffectModel>(m, "EffectModel")
      .def_readonly("intercept", &effects::EffectModel::intercept)
      .def_readonly("feature_names", &effects::EffectModel::feature_names)
      .def_readonly("warnings", &effects::EffectModel::warnings)
      .def(
          "predict",
          [](const effects::EffectModel& em, py::array_t<double, py::array::c_style | py::array::forcecast> x) {
            const auto fm = feature_matrix(x, std::vector<double>(static_cast<std::size_t>(x.shape(0)), 0.0),
                                           em.feature_names);
            return effects::predict(em, fm);
          },
          py::arg("X"))
      .def(
          "importance",
          [](const effects::EffectModel& em, py::array_t<double, py::array::c_style | py::array::forcecast> x) {
            const auto fm = feature_matrix(x, std::vector<double>(static_cast<std::size_t>(x.shape(0)), 0.0),
                                           em.feature_names);
            std::vector<std::pair<std::string, double>> out;
            for (const auto& i : effects::feature_importance(em, fm)) out.emplace_back(i.term, i.value);
            return out;
          },
          py::arg("X"), "Mean absolute contribution per term, sorted descending.")
      .def(
          "curve",
          [](const effects::EffectModel& em, const std::string& feature, std::size_t grid) {
            std::vector<double> flat;
            const auto rows = effects::contribution_curve(em, feature, grid);
            for (const auto& r : rows) flat.insert(flat.end(), {r.x, r.value, r.lower, r.upper});
            return matrix(flat, rows.size(), 4);
          },
          py::arg("feature"), py::arg("grid") = 100, "Rows of (x, value, lower, upper).");

  m.def(
      "fit_ebm",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> x, std::vector<double> y,
         std::vector<std::string> names, std::size_t n_bags, std::size_t n_interactions, double learning_rate,
         std::uint64_t seed) {
        const auto fm = feature_matrix(x, std::move(y), std::move(names));
        effects::EbmHyper h;
        h.n_bags = n_bags;
        h.n_interactions = n_interactions;
        h.learning_rate = learning_rate;
        h.seed = seed;
        py::gil_scoped_release release;
        return effects::fit_ebm(fm, h);
      },
      py::arg("X"), py::arg("y"), py::arg("feature_names") = std::vector<std::string>{}, py::arg("n_bags") = 8,
      py::arg("n_interactions") = 10, py::arg("learning_rate") = 0.01, py::arg("seed") = 0,
      "Explainable boosting machine on a dense feature matrix.");

  m.def(
      "fit_linear",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> x, std::vector<double> y,
         std::vector<std::string> names) { return effects::fit_linear(feature_matrix(x, std::move(y), std::move(names))); },
      py::arg("X"), py::arg("y"), py::arg("feature_names") = std::vector<std::string>{});

  m.def(
      "welch_t_test",
      [](std::vector<double> a, std::vector<double> b) {
        const auto r = stats::welch_t_test(a, b);
        return py::make_tuple(r.t, r.df, r.p);
      },
      py::arg("a"), py::arg("b"), "Returns (t, df, two-sided p).");

  m.def(
      "dbscan",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> pts, double eps, std::size_t min_pts) {
        if (pts.ndim() != 2) throw ValidationError("points must be two-dimensional");
        stats::PointSet ps{static_cast<std::size_t>(pts.shape(1)), {pts.data(), pts.data() + pts.size()}};
        return stats::dbscan(ps, eps, min_pts);
      },
      py::arg("points"), py::arg("eps") = 0.5, py::arg("min_pts") = 10);

  m.def(
      "silhouette",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> pts, std::vector<int> labels) {
        if (pts.ndim() != 2) throw ValidationError("points must be two-dimensional");
        stats::PointSet ps{static_cast<std::size_t>(pts.shape(1)), {pts.data(), pts.data() + pts.size()}};
        return stats::silhouette(ps, labels);
      },
      py::arg("points"), py::arg("labels"));

  m.def(
      "run_pipeline",
      [](const fs::path& out, const std::string& config_json, std::vector<std::string> overrides, bool resume) {
        const auto config = pipeline::parse_config(config_json, {}, overrides);
        pipeline::RunOptions opt;
        opt.resume = resume;
        py::gil_scoped_release release;
        const auto r = pipeline::cmd_pipeline(config, out, opt);
        py::gil_scoped_acquire acquire;
        py::list runs;
        for (const auto& run : r.runs) {
          py::dict d;
          d["seed"] = run.seed;
          d["rmse"] = run.rmse;
          std::vector<std::pair<std::string, double>> imp;
          for (const auto& i : run.importance) imp.emplace_back(i.term, i.value);
          d["importance"] = imp;
          runs.append(d);
        }
        py::dict result;
        result["report"] = r.report;
        result["runs"] = runs;
        return result;
      },
      py::arg("out"), py::arg("config_json") = "{}", py::arg("overrides") = std::vector<std::string>{},
      py::arg("resume") = false, "Full pipeline; writes report.txt and per-stage outputs under `out`.");

  m.def(
      "mu_sweep",
      [](const fs::path& out, std::vector<double> mus, const std::string& config_json,
         std::vector<std::string> overrides) {
        const auto config = pipeline::parse_config(config_json, {}, overrides);
        std::vector<std::tuple<std::string, double, double>> rows;
        for (const auto& r : pipeline::cmd_mu_sweep(config, mus, out)) {
          rows.emplace_back(pipeline::variant_label(r.scheme), r.mu, r.ranking.recall_at(config.k_list.front()));
        }
        return rows;
      },
      py::arg("out"), py::arg("mu_list"), py::arg("config_json") = "{}",
      py::arg("overrides") = std::vector<std::string>{}, "Rows of (model, mu, recall at the first k).");

  m.def(
      "embed_analyze",
      [](std::vector<fs::path> inputs, const fs::path& out, double eps, std::size_t min_pts) {
        std::vector<py::dict> rows;
        for (const auto& a : pipeline::cmd_embed_analyze(inputs, out, eps, min_pts)) {
          py::dict d;
          d["tag"] = a.tag;
          d["n_clusters"] = a.n_clusters;
          d["n_noise"] = a.n_noise;
          d["silhouette"] = a.silhouette ? py::cast(*a.silhouette) : py::none();
          rows.push_back(d);
        }
        return rows;
      },
      py::arg("inputs"), py::arg("out"), py::arg("eps") = 0.5, py::arg("min_pts") = 10);
}
