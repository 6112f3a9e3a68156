#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "idc/cli.hpp"
#include "idc/condenser.hpp"
#include "idc/dataset.hpp"
#include "idc/gradcheck.hpp"
#include "idc/toy.hpp"

namespace py = pybind11;
using namespace idc;

namespace {

using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor<float> to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor<float>(shape, std::vector<float>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor<float>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data(), t.data() + t.size(), out.mutable_data());
  return out;
}

CondenseConfig config_from(const py::dict& d) {
  const auto j = nlohmann::json::parse(py::str(py::module_::import("json").attr("dumps")(d)).cast<std::string>());
  auto cfg = j.get<CondenseConfig>();
  cfg.validate();
  return cfg;
}

PatchSet patch_set(const Array& pixels, const std::string& source_id) {
  if (pixels.ndim() != 4 || pixels.shape(1) != 3) throw ConfigError("pixels must be [N, 3, H, W]");
  PatchSet ps;
  ps.pixels = to_tensor(pixels);
  ps.source_id = source_id;
  ps.kind = PatchKind::real_lr;
  return ps;
}

Extractor extractor_from(std::uint64_t seed, const std::vector<std::size_t>& widths,
                         const std::vector<std::size_t>& kernels) {
  ArchSpec arch;
  if (!widths.empty()) arch.widths = widths;
  if (!kernels.empty()) arch.kernels = kernels;
  return Extractor::random_init(arch, seed);
}

py::dict log_dict(const LogRecord& r) {
  py::dict d;
  d["iter"] = r.iteration;
  d["l_ins"] = r.l_ins;
  d["l_group"] = r.l_group;
  d["l_pair"] = r.l_pair;
  d["total"] = r.total;
  d["grad_norm"] = r.grad_norm;
  d["fraction"] = r.fraction;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Instance-level dataset condensation for image super-resolution";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  auto data = py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", data.ptr());
  py::register_exception<IntegrityError>(m, "IntegrityError", data.ptr());
  py::register_exception<BackendError>(m, "BackendError", data.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());

  m.def("synthetic_count", &synthetic_count, py::arg("n_real"), py::arg("r"));
  m.def("crop_offsets", &crop_offsets, py::arg("extent"), py::arg("size"), py::arg("stride"));
  m.def(
      "apportion",
      [](const std::vector<std::size_t>& sizes, std::size_t seats, const std::vector<std::size_t>& floors) {
        return apportion(sizes, seats, floors);
      },
      py::arg("sizes"), py::arg("seats"), py::arg("floors") = std::vector<std::size_t>{});

  m.def(
      "sinusoid_textures",
      [](std::size_t count, std::size_t size, std::uint64_t seed) {
        return to_array(sinusoid_textures(count, size, seed).pixels);
      },
      py::arg("count"), py::arg("size"), py::arg("seed"));
  m.def(
      "resize_bicubic",
      [](const Array& images, std::size_t h, std::size_t w) { return to_array(resize_bicubic(to_tensor(images), h, w)); },
      py::arg("images"), py::arg("height"), py::arg("width"));
  m.def(
      "read_png", [](const std::filesystem::path& p) { return to_array(read_png(p)); }, py::arg("path"));
  m.def(
      "write_png", [](const std::filesystem::path& p, const Array& img) { write_png(p, to_tensor(img)); },
      py::arg("path"), py::arg("image"));

  m.def(
      "condense",
      [](const Array& pixels, const py::dict& config, std::uint64_t extractor_seed,
         const std::vector<std::size_t>& widths, const std::vector<std::size_t>& kernels,
         const std::string& source_id) {
        const auto cfg = config_from(config);
        const auto ps = patch_set(pixels, source_id);
        const auto ex = extractor_from(extractor_seed, widths, kernels);
        InstanceResult res;
        {
          py::gil_scoped_release release;
          res = condense_instance(ps, ex, cfg);
        }
        py::list log;
        for (const auto& r : res.log) log.append(log_dict(r));
        return py::make_tuple(to_array(res.synthetic.pixels), log);
      },
      py::arg("pixels"), py::arg("config") = py::dict(), py::arg("extractor_seed") = 0,
      py::arg("widths") = std::vector<std::size_t>{}, py::arg("kernels") = std::vector<std::size_t>{},
      py::arg("source_id") = "instance",
      "Condense one instance's [N,3,H,W] patches; returns (synthetic pixels, per-iteration log).");

  m.def(
      "instance_discrepancy",
      [](const Array& real, const Array& syn, const py::dict& config, std::uint64_t extractor_seed,
         const std::vector<std::size_t>& widths, const std::vector<std::size_t>& kernels, std::uint64_t eval_seed,
         std::size_t draws) {
        const auto cfg = config_from(config);
        const auto ex = extractor_from(extractor_seed, widths, kernels);
        return instance_discrepancy(patch_set(real, "instance"), to_tensor(syn), ex, cfg, eval_seed, draws);
      },
      py::arg("real"), py::arg("synthetic"), py::arg("config") = py::dict(), py::arg("extractor_seed") = 0,
      py::arg("widths") = std::vector<std::size_t>{}, py::arg("kernels") = std::vector<std::size_t>{},
      py::arg("eval_seed") = 0, py::arg("draws") = 8);

  m.def(
      "gradcheck",
      [](int precision, std::uint64_t seed) {
        GradcheckOptions opts;
        if (precision != 32 && precision != 64) throw ConfigError("precision must be 32 or 64");
        opts.precision = precision == 32 ? Precision::f32 : Precision::f64;
        opts.seed = seed;
        const auto rep = run_gradcheck(opts);
        py::dict ops;
        for (const auto& op : rep.ops) ops[py::str(op.op)] = py::make_tuple(op.max_rel_error, op.passed);
        py::dict out;
        out["passed"] = rep.passed();
        out["threshold"] = rep.threshold;
        out["ops"] = ops;
        return out;
      },
      py::arg("precision") = 64, py::arg("seed") = 0);

  m.def(
      "validate_dataset",
      [](const std::filesystem::path& root) {
        const auto rep = validate_dataset(root);
        py::dict out;
        out["ok"] = rep.ok();
        out["problems"] = rep.problems;
        out["instances"] = rep.instances;
        out["pairs"] = rep.pairs;
        return out;
      },
      py::arg("root"));

  m.def(
      "main",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "idc");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        py::gil_scoped_release release;
        return run_cli(static_cast<int>(argv.size()), argv.data());
      },
      py::arg("args"), "Runs the idc command line with the given arguments; returns the exit code.");
}
