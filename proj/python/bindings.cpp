#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "svae/cli.hpp"
#include "svae/errors.hpp"
#include "svae/invariance.hpp"
#include "svae/service.hpp"
#include "svae/training.hpp"

namespace py = pybind11;
using namespace svae;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
    const auto rows = static_cast<std::size_t>(a.shape(0)), cols = static_cast<std::size_t>(a.shape(1));
    return Tensor::matrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

Array to_array(const Tensor& t) {
    Array out({t.rows(), t.cols()});
    std::copy(t.values().begin(), t.values().end(), out.mutable_data());
    return out;
}

py::tuple dataset_tuple(const Dataset& d) {
    py::array_t<std::int64_t> labels(static_cast<py::ssize_t>(d.size()));
    std::copy(d.labels.begin(), d.labels.end(), labels.mutable_data());
    return py::make_tuple(to_array(d.images), labels, d.height, d.width);
}

Dataset to_dataset(const Array& images, const std::vector<std::size_t>& labels, std::size_t num_classes,
                   std::size_t height, std::size_t width) {
    return make_dataset(to_tensor(images), labels, num_classes, height, width);
}

class Model {
public:
    explicit Model(const std::string& path) : snap_(service::Snapshot::from_checkpoint(load_checkpoint(path))) {}

    std::string config() const { return to_json(snap_.checkpoint.config).dump(); }

    py::tuple request(const std::string& method, const std::string& path, const std::string& body) const {
        service::Response r;
        {
            py::gil_scoped_release release;
            r = service::route(snap_, method, path, body);
        }
        return py::make_tuple(r.status, r.body.dump());
    }

    Array classify(const Array& images, std::size_t n_samples, std::uint64_t seed) const {
        const Tensor x = to_tensor(images);
        Rng rng(seed);
        return to_array(predict_probabilities(snap_.checkpoint, x, n_samples, rng));
    }

    Array decode(const Array& z) const { return to_array(decode_images(snap_.model, to_tensor(z))); }

    py::tuple retention(const Array& images, const std::vector<std::size_t>& labels, std::vector<double> sigmas,
                        std::size_t per_sigma, std::uint64_t seed, std::size_t n_samples) const {
        const auto& c = snap_.checkpoint.config;
        const Dataset d = to_dataset(images, labels, c.num_classes, c.height, c.width);
        const RetentionCurve r = invariance_test(snap_.model, d, sigmas, per_sigma, seed, n_samples);
        return py::make_tuple(r.sigma_grid, r.retention, r.mean_l2);
    }

private:
    service::Snapshot snap_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Supervised VAE toolkit";

    py::register_exception<Error>(m, "SvaeError", PyExc_ValueError);

    m.def("synth_toy_dataset",
          [](std::uint64_t seed, std::size_t n_per_class) { return dataset_tuple(synth_toy_dataset(seed, n_per_class)); },
          py::arg("seed"), py::arg("n_per_class"), "(images, labels, height, width) for the toy quadrant dataset");
    m.def(
        "load_mnist",
        [](const std::string& dir, const std::string& part, std::size_t offset, std::size_t limit) {
            if (part != "train" && part != "test") throw py::value_error("part must be 'train' or 'test'");
            return dataset_tuple(load_mnist(dir, part == "train" ? MnistPart::train : MnistPart::test, offset, limit));
        },
        py::arg("directory"), py::arg("part") = "test", py::arg("offset") = 0, py::arg("limit") = 0);
    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            int code;
            {
                py::gil_scoped_release release;
                code = cli::run(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs the svae command line in-process; returns (exit code, stdout, stderr)");

    py::class_<Model>(m, "Model")
        .def(py::init<const std::string&>(), py::arg("checkpoint"))
        .def("config_json", &Model::config)
        .def("request", &Model::request, py::arg("method"), py::arg("path"), py::arg("body") = "")
        .def("classify", &Model::classify, py::arg("images"), py::arg("n_samples") = 32, py::arg("seed") = 0)
        .def("decode", &Model::decode, py::arg("z"))
        .def("retention", &Model::retention, py::arg("images"), py::arg("labels"), py::arg("sigmas"),
             py::arg("per_sigma") = 10, py::arg("seed") = 0, py::arg("n_samples") = 32);
}
