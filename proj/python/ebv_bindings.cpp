#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ebv/capacity.hpp"
#include "ebv/classifier.hpp"
#include "ebv/error.hpp"
#include "ebv/frame.hpp"
#include "ebv/frame_io.hpp"
#include "ebv/generator.hpp"

namespace py = pybind11;
using namespace ebv;

namespace {

// Rows arriving from numpy must already be unit length.
FrameMatrix as_frame(const RowMatrix& rows) { return FrameMatrix::from_unit_rows(rows, 1e-6); }

}  // namespace

PYBIND11_MODULE(_ebv, m) {
  m.doc() = "Equiangular basis vector frames. Frames are (num, dim) float64 arrays, one unit row per vector.";

  auto base = py::register_exception<Error>(m, "EbvError");
  py::register_exception<InvalidConfig>(m, "InvalidConfig", base);
  py::register_exception<InfeasibleConfig>(m, "InfeasibleConfig", base);
  py::register_exception<DegenerateInput>(m, "DegenerateInput", base);
  py::register_exception<InvalidSelection>(m, "InvalidSelection", base);
  py::register_exception<FormatError>(m, "FormatError", base);
  py::register_exception<IntegrityError>(m, "IntegrityError", base);
  py::register_exception<IoError>(m, "IoError", base);

  py::class_<FrameConfig>(m, "FrameConfig")
      .def(py::init([](std::size_t dim, std::size_t num, double alpha, std::uint64_t seed,
                       double learning_rate, std::size_t slice, std::size_t max_iters, double tol,
                       std::size_t threads) {
             FrameConfig c;
             c.dim = dim;
             c.num = num;
             c.alpha = alpha;
             c.seed = seed;
             c.learning_rate = learning_rate;
             c.slice = slice;
             c.max_iters = max_iters;
             c.tol = tol;
             c.threads = threads;
             return c;
           }),
           py::arg("dim"), py::arg("num"), py::arg("alpha") = 0.1, py::arg("seed") = 0,
           py::arg("learning_rate") = 0.0, py::arg("slice") = 256, py::arg("max_iters") = 100000,
           py::arg("tol") = 0.0, py::arg("threads") = 0)
      .def_readwrite("dim", &FrameConfig::dim)
      .def_readwrite("num", &FrameConfig::num)
      .def_readwrite("alpha", &FrameConfig::alpha)
      .def_readwrite("seed", &FrameConfig::seed)
      .def_readwrite("learning_rate", &FrameConfig::learning_rate)
      .def_readwrite("slice", &FrameConfig::slice)
      .def_readwrite("max_iters", &FrameConfig::max_iters)
      .def_readwrite("tol", &FrameConfig::tol)
      .def_readwrite("threads", &FrameConfig::threads)
      .def("validate", &FrameConfig::validate)
      .def("is_feasible", &FrameConfig::is_feasible)
      .def("effective_learning_rate", &FrameConfig::effective_learning_rate)
      .def("effective_tol", &FrameConfig::effective_tol);

  py::class_<FrameStats>(m, "FrameStats")
      .def_readonly("coherence", &FrameStats::coherence)
      .def_readonly("min_angle_deg", &FrameStats::min_angle_deg)
      .def_readonly("avg_deviation_deg", &FrameStats::avg_deviation_deg)
      .def_readonly("welch_bound", &FrameStats::welch_bound)
      .def_readonly("satisfies_alpha", &FrameStats::satisfies_alpha);

  py::class_<GenerationReport>(m, "GenerationReport")
      .def_readonly("iterations", &GenerationReport::iterations)
      .def_readonly("final_coherence", &GenerationReport::final_coherence)
      .def_readonly("converged", &GenerationReport::converged)
      .def_readonly("elapsed_seconds", &GenerationReport::elapsed_seconds)
      .def_readonly("final_learning_rate", &GenerationReport::final_learning_rate)
      .def_property_readonly("loss_trace", [](const GenerationReport& r) {
        std::vector<std::pair<std::size_t, double>> out;
        for (const LossSample& s : r.loss_trace) out.emplace_back(s.iteration, s.loss);
        return out;
      });

  py::class_<Generation>(m, "Generation")
      .def_property_readonly("frame", [](const Generation& g) { return g.frame.rows(); })
      .def_readonly("report", &Generation::report);

  m.def("welch_lower_bound", &welch_lower_bound, py::arg("dim"), py::arg("num"));
  m.def("max_num_upper_bound", &max_num_upper_bound, py::arg("alpha"), py::arg("dim"));
  m.def("grassmannian_feasibility", &grassmannian_feasibility, py::arg("dim"), py::arg("num"));
  m.def("default_learning_rate", &default_learning_rate, py::arg("num"));
  m.def("default_tolerance", &default_tolerance, py::arg("alpha"));

  m.def("normalize_rows", [](const RowMatrix& rows) { return FrameMatrix::normalized(rows).rows(); },
        py::arg("rows"));
  m.def("mutual_coherence", [](const RowMatrix& r) { return mutual_coherence(as_frame(r)); },
        py::arg("frame"));
  m.def("min_pairwise_angle_deg", [](const RowMatrix& r) { return min_pairwise_angle_deg(as_frame(r)); },
        py::arg("frame"));
  m.def("avg_deviation_angle_deg",
        [](const RowMatrix& r) { return avg_deviation_angle_deg(as_frame(r)); }, py::arg("frame"));
  m.def("frame_stats",
        [](const RowMatrix& r, double alpha, double tol) { return frame_stats(as_frame(r), alpha, tol); },
        py::arg("frame"), py::arg("alpha"), py::arg("tol"));
  m.def("verify",
        [](const RowMatrix& r, double alpha, double tol) { return verify(as_frame(r), alpha, tol); },
        py::arg("frame"), py::arg("alpha"), py::arg("tol"));

  m.def("hinge_coherence_loss",
        [](const RowMatrix& r, double alpha) {
          return hinge_coherence_loss(FrameMatrix::unchecked(r), alpha);
        },
        py::arg("rows"), py::arg("alpha"));
  m.def("hinge_coherence_gradient",
        [](const RowMatrix& r, double alpha, std::size_t slice) {
          const LossAndGradient lg = hinge_coherence_gradient(FrameMatrix::unchecked(r), alpha, slice);
          return py::make_tuple(lg.loss, lg.gradient);
        },
        py::arg("rows"), py::arg("alpha"), py::arg("slice") = 256);

  m.def("generate",
        [](const FrameConfig& config, const py::object& progress) {
          if (progress.is_none()) {
            py::gil_scoped_release release;
            return generate(config);
          }
          py::gil_scoped_release release;
          return generate(config, [&](std::size_t it, double loss, double coh) {
            py::gil_scoped_acquire acquire;
            progress(it, loss, coh);
          });
        },
        py::arg("config"), py::arg("progress") = py::none(),
        "Optimize a frame until its coherence is within alpha + tol. Raises InfeasibleConfig "
        "when alpha is below the Welch bound.");

  py::class_<ProbeRecord>(m, "ProbeRecord")
      .def_readonly("num", &ProbeRecord::num)
      .def_readonly("succeeded", &ProbeRecord::succeeded)
      .def_readonly("attempts", &ProbeRecord::attempts)
      .def_readonly("best_coherence", &ProbeRecord::best_coherence);

  py::class_<CapacityResult>(m, "CapacityResult")
      .def_readonly("max_num_found", &CapacityResult::max_num_found)
      .def_readonly("analytic_upper", &CapacityResult::analytic_upper)
      .def_readonly("probes", &CapacityResult::probes)
      .def_readonly("total_seconds", &CapacityResult::total_seconds)
      .def_readonly("ceiling_limited", &CapacityResult::ceiling_limited);

  m.def("bisect_capacity",
        [](double alpha, std::size_t dim, std::size_t attempt_budget, std::size_t iters_per_num,
           std::uint64_t seed, double tol) {
          CapacityQuery q;
          q.alpha = alpha;
          q.dim = dim;
          q.attempt_budget = attempt_budget;
          q.iters_per_num = iters_per_num;
          q.probe_template.seed = seed;
          q.probe_template.tol = tol;
          py::gil_scoped_release release;
          return bisect_capacity(q);
        },
        py::arg("alpha"), py::arg("dim"), py::arg("attempt_budget") = 3,
        py::arg("iters_per_num") = 200, py::arg("seed") = 0, py::arg("tol") = 0.0);
  m.def("sqrt2n_heuristic", &sqrt2n_heuristic, py::arg("num"));

  m.def("save_frame",
        [](const RowMatrix& r, const std::filesystem::path& path, double alpha, std::uint64_t seed) {
          io::save_frame(as_frame(r), {alpha, seed}, path);
        },
        py::arg("frame"), py::arg("path"), py::arg("alpha") = 0.0, py::arg("seed") = 0);
  m.def("load_frame",
        [](const std::filesystem::path& path) {
          const io::LoadedFrame f = io::load_frame(path);
          return py::make_tuple(f.frame.rows(), f.meta.alpha, f.meta.seed);
        },
        py::arg("path"), "Returns (frame, alpha, seed).");

  py::class_<Prediction>(m, "Prediction")
      .def_readonly("class_index", &Prediction::class_index)
      .def_readonly("probabilities", &Prediction::probabilities)
      .def_readonly("max_cosine", &Prediction::max_cosine);

  py::class_<ClassifierHead>(m, "ClassifierHead")
      .def(py::init([](const RowMatrix& r, double temperature, std::optional<std::size_t> num_classes) {
             return ClassifierHead(as_frame(r), temperature, num_classes);
           }),
           py::arg("frame"), py::arg("temperature") = kDefaultTemperature,
           py::arg("num_classes") = py::none())
      .def_property_readonly("temperature", &ClassifierHead::temperature)
      .def_property_readonly("num_classes", &ClassifierHead::num_classes)
      .def_property_readonly("dim", &ClassifierHead::dim)
      .def_property_readonly("frame", [](const ClassifierHead& h) { return h.frame().rows(); });

  m.def("class_cosines", [](const ClassifierHead& h, const Eigen::VectorXd& v) { return class_cosines(h, v); },
        py::arg("head"), py::arg("embedding"));
  m.def("class_probabilities",
        [](const ClassifierHead& h, const Eigen::VectorXd& v) { return class_probabilities(h, v); },
        py::arg("head"), py::arg("embedding"));
  m.def("predict", [](const ClassifierHead& h, const Eigen::VectorXd& v) { return predict(h, v); },
        py::arg("head"), py::arg("embedding"));
  m.def("nll_loss",
        [](const ClassifierHead& h, const Eigen::VectorXd& v, std::size_t label) {
          return nll_loss(h, v, label);
        },
        py::arg("head"), py::arg("embedding"), py::arg("label"));
  m.def("spherical_distance",
        [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return spherical_distance(a, b); },
        py::arg("a"), py::arg("b"));
}
