#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "proma/accumulate.hpp"
#include "proma/intra.hpp"
#include "proma/linalg.hpp"
#include "proma/task.hpp"
#include "proma/train.hpp"

namespace py = pybind11;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

proma::DenseMatrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-d array");
  proma::DenseMatrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.data().begin());
  return m;
}

proma::DenseVector to_vector(const Array& a) {
  if (a.ndim() != 1) throw std::invalid_argument("expected a 1-d array");
  return proma::DenseVector(a.data(), a.data() + a.size());
}

py::array from_matrix(const proma::DenseMatrix& m) {
  py::array_t<double> out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

py::array from_vector(const proma::DenseVector& v) {
  py::array_t<double> out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_proma, m) {
  m.doc() = "Projected microbatch accumulation kernels and the toy training loop";

  m.def(
      "qr_reduced",
      [](const Array& mat) {
        const proma::QrResult qr = proma::qr_reduced(to_matrix(mat));
        return py::make_tuple(from_matrix(qr.q), from_matrix(qr.r));
      },
      py::arg("m"),
      "Reduced QR via classical Gram-Schmidt with one reorthogonalization pass.");

  m.def(
      "project_to_complement",
      [](const Array& acc, const Array& vecs) {
        return from_vector(proma::project_to_complement(to_vector(acc), to_matrix(vecs)));
      },
      py::arg("acc_vec"), py::arg("vecs"),
      "Exact projection of acc_vec onto the orthogonal complement of span(vecs).");

  m.def(
      "project_to_complement_iterative",
      [](const Array& acc, const Array& vecs, int passes) {
        return from_vector(
            proma::project_to_complement_iterative(to_vector(acc), to_matrix(vecs), passes));
      },
      py::arg("acc_vec"), py::arg("vecs"), py::arg("passes") = 2,
      "Approximate complement projection by cyclic deflation.");

  m.def(
      "approx_rank_r_basis",
      [](const Array& x, int r, int power_iters, std::uint64_t seed) {
        return from_matrix(proma::approx_rank_r_basis(to_matrix(x), r, power_iters, seed));
      },
      py::arg("x"), py::arg("r"), py::arg("power_iters") = 1, py::arg("seed") = 0,
      "Randomized top-r right-singular basis (deterministic given seed).");

  m.def(
      "sandwich_project",
      [](const Array& g, const Array& q_left, const Array& q_right) {
        return from_matrix(
            proma::sandwich_project(to_matrix(g), to_matrix(q_left), to_matrix(q_right)));
      },
      py::arg("g"), py::arg("q_left"), py::arg("q_right"),
      "Two-sided projection q_left (q_leftT g q_right) q_rightT.");

  m.def(
      "proma_intra",
      [](const Array& token_advantages, const Array& act_in, const Array& grad_out, int r,
         double shrinkage, int power_iters, const std::string& variant, std::uint64_t seed) {
        proma::LayerTape tape;
        tape.layer_id = 0;
        tape.act_in = to_matrix(act_in);
        tape.grad_out = to_matrix(grad_out);
        proma::IntraConfig cfg;
        cfg.r = r;
        cfg.shrinkage = shrinkage;
        cfg.power_iters = power_iters;
        cfg.variant = proma::intra_variant_from_string(variant);
        const proma::DenseVector adv = to_vector(token_advantages);
        return from_matrix(proma::proma_intra(adv, tape, cfg, seed));
      },
      py::arg("token_advantages"), py::arg("act_in"), py::arg("grad_out"), py::arg("r") = 100,
      py::arg("shrinkage") = 1.0, py::arg("power_iters") = 1,
      py::arg("variant") = "subtract_sandwich", py::arg("seed") = 0,
      "Within-microbatch factored projection of one layer's policy gradient.");

  m.def(
      "group_advantages",
      [](const std::vector<double>& rewards, double eps, const std::string& norm) {
        const proma::AdvantageNorm n =
            norm == "std" ? proma::AdvantageNorm::kStd : proma::AdvantageNorm::kNone;
        return proma::group_advantages(rewards, eps, n);
      },
      py::arg("rewards"), py::arg("eps") = 1e-6, py::arg("norm") = "std",
      "Group-relative advantages (r - mean) / (std_pop + eps).");

  m.def(
      "run_training",
      [](const std::string& config_text, const std::string& out_dir) {
        const proma::RunConfig cfg = proma::parse_config_text(config_text);
        const proma::RunArtifacts art = proma::train(cfg, out_dir);
        return art.metrics_csv;
      },
      py::arg("config_text"), py::arg("out_dir"),
      "Run the training loop from config text; returns the metrics CSV path.");

  m.def("default_config_text",
        []() { return proma::echo_config(proma::RunConfig{}); },
        "Canonical echo of the default run configuration.");
}
