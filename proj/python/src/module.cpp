#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "wdis/cli.hpp"
#include "wdis/datasets.hpp"
#include "wdis/error.hpp"
#include "wdis/evaluation.hpp"
#include "wdis/factors.hpp"
#include "wdis/prior.hpp"

namespace py = pybind11;
using namespace py::literals;

namespace {

std::vector<std::string> factor_names(const wdis::FactorSpace& space) {
  std::vector<std::string> names;
  for (std::size_t k = 0; k < space.num_factors(); ++k) names.push_back(space.factor(k).name);
  return names;
}

// (n, H, W, C) float32 copy of every sample.
py::array_t<float> images_of(const wdis::Dataset& ds) {
  const auto n = static_cast<py::ssize_t>(ds.samples.size());
  const auto h = static_cast<py::ssize_t>(ds.height()), w = static_cast<py::ssize_t>(ds.width());
  const auto c = static_cast<py::ssize_t>(ds.channels());
  py::array_t<float> out({n, h, w, c});
  float* dst = out.mutable_data();
  for (const auto& s : ds.samples) dst = std::copy(s.pixels.begin(), s.pixels.end(), dst);
  return out;
}

py::dict dataset_dict(const wdis::Dataset& ds) {
  std::vector<long> labels;
  for (const auto& s : ds.samples) labels.push_back(s.combination_index ? static_cast<long>(*s.combination_index) : -1);
  return py::dict("images"_a = images_of(ds), "labels"_a = py::array(py::cast(labels)), "train"_a = ds.train,
                  "validation"_a = ds.validation, "test"_a = ds.test, "space"_a = ds.space);
}

}  // namespace

PYBIND11_MODULE(_wdis, m) {
  m.doc() = "Core routines of the weak disentanglement toolkit.";

  py::register_exception<wdis::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<wdis::DataError>(m, "DataError", PyExc_IOError);
  py::register_exception<wdis::NumericError>(m, "NumericError", PyExc_ArithmeticError);

  py::class_<wdis::FactorSpace>(m, "FactorSpace")
      .def_property_readonly("preset", [](const wdis::FactorSpace& s) { return std::string(wdis::preset_name(s.preset())); })
      .def_property_readonly("num_factors", &wdis::FactorSpace::num_factors)
      .def_property_readonly("num_combinations", &wdis::FactorSpace::num_combinations)
      .def_property_readonly("factor_names", &factor_names)
      .def("values", [](const wdis::FactorSpace& s, std::size_t k) {
        if (k >= s.num_factors()) throw py::index_error("factor index out of range");
        return s.factor(k).values;
      })
      .def("digits", &wdis::FactorSpace::digits, "index"_a)
      .def("index", [](const wdis::FactorSpace& s, std::vector<std::string> values) {
        return wdis::make_combination(s, std::move(values)).index;
      }, "values"_a)
      .def("labels", [](const wdis::FactorSpace& s, std::size_t index) {
        return wdis::index_to_combination(s, index).values;
      }, "index"_a)
      .def("__repr__", [](const wdis::FactorSpace& s) {
        return "<FactorSpace " + std::string(wdis::preset_name(s.preset())) + " N=" +
               std::to_string(s.num_combinations()) + ">";
      });

  m.def("factor_space", py::overload_cast<std::string_view>(&wdis::build_factor_space), "preset"_a);

  py::class_<wdis::RelationDef>(m, "Relation")
      .def_readonly("name", &wdis::RelationDef::name)
      .def_readonly("arity", &wdis::RelationDef::arity)
      .def_readonly("rule", &wdis::RelationDef::rule)
      .def_readonly("operator_component", &wdis::RelationDef::operator_component)
      .def("valid_inputs", &wdis::RelationDef::valid_inputs)
      .def("is_valid", [](const wdis::RelationDef& r, const std::vector<std::size_t>& in) { return r.is_valid(in); })
      .def("__call__", [](const wdis::RelationDef& r, const std::vector<std::size_t>& in) {
        return wdis::apply_relation(r, in);
      });

  m.def("builtin_relations", [](const wdis::FactorSpace& s) { return wdis::builtin_relations(s, s.preset()); },
        "space"_a);

  py::class_<wdis::GMPrior>(m, "GMPrior")
      .def(py::init([](Eigen::MatrixXd means, Eigen::MatrixXd variances) {
        if (means.rows() != variances.rows() || means.cols() != variances.cols())
          throw wdis::ConfigError("means and variances must have the same shape");
        if ((variances.array() <= 0.0).any()) throw wdis::ConfigError("variances must be positive");
        wdis::GMPrior p;
        p.means = std::move(means);
        p.variances = std::move(variances);
        return p;
      }), "means"_a, "variances"_a)
      .def_readonly("means", &wdis::GMPrior::means)
      .def_readonly("variances", &wdis::GMPrior::variances)
      .def_property_readonly("num_components", &wdis::GMPrior::num_components)
      .def_property_readonly("latent_dim", &wdis::GMPrior::latent_dim)
      .def("log_density", &wdis::mixture_log_density, "z"_a)
      .def("responsibilities", &wdis::responsibilities_rows, "codes"_a)
      .def("classify", [](const wdis::GMPrior& p, const Eigen::VectorXd& z, double alpha) {
        const auto r = wdis::classify(p, z, alpha);
        return py::make_tuple(r.component, r.responsibility);
      }, "z"_a, "alpha"_a = 0.0, "Returns (component or None when rejected, max responsibility).")
      .def("sample", py::overload_cast<const wdis::GMPrior&, std::size_t, std::size_t, std::uint64_t>(
                         &wdis::sample_component), "component"_a, "n"_a, "seed"_a);

  m.def("estimate_prior", [](const Eigen::MatrixXd& codes, const std::vector<std::size_t>& labels,
                             std::size_t num_components, double floor) {
    return wdis::estimate_prior(codes, labels, num_components, floor);
  }, "codes"_a, "labels"_a, "num_components"_a, "variance_floor"_a = wdis::kVarianceFloor);

  m.def("mig", &wdis::mig, "representation"_a, "factors"_a);
  m.def("sap", &wdis::sap, "representation"_a, "factors"_a);
  m.def("dci", [](const Eigen::MatrixXd& rep, const Eigen::MatrixXi& factors) {
    const auto s = wdis::dci_scores(rep, factors);
    return py::dict("disentanglement"_a = s.disentanglement, "completeness"_a = s.completeness,
                    "informativeness"_a = s.informativeness, "average"_a = s.average());
  }, "representation"_a, "factors"_a);

  m.def("make_dataset", [](const std::string& preset, std::size_t per_combination, std::size_t image_size,
                           std::uint64_t seed) {
    wdis::DatasetConfig c;
    c.preset = wdis::parse_preset(preset);
    c.samples_per_combination = per_combination;
    c.image_size = image_size;
    c.seed = seed;
    return dataset_dict(wdis::make_dataset(wdis::build_factor_space(c.preset), c));
  }, "preset"_a = "dsprites", "samples_per_combination"_a = 50, "image_size"_a = 64, "seed"_a = 0);

  m.def("load_dataset", [](const std::string& dir) {
    return dataset_dict(wdis::load_archive(dir, wdis::ArchiveFormat::Native));
  }, "directory"_a);

  m.def("run_cli", [](std::vector<std::string> args) {
    args.insert(args.begin(), "wdis");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    int code = 0;
    {
      py::gil_scoped_release release;
      code = wdis::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  }, "args"_a, "Runs the command line tool in-process; returns (exit code, stdout, stderr).");
}
