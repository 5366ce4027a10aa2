// Python bindings for the meshgpt core: mesh processing, synthetic data,
// metrics, and checkpoint-driven tokenization / generation / training.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "meshgpt/codec.hpp"
#include "meshgpt/datasets.hpp"
#include "meshgpt/gpt.hpp"
#include "meshgpt/gradcheck.hpp"
#include "meshgpt/metrics.hpp"
#include "meshgpt/runner.hpp"

namespace py = pybind11;
using namespace meshgpt;

namespace {

py::array_t<double> vertices_array(const Mesh& m) {
  py::array_t<double> out({py::ssize_t(m.vertices.size()), py::ssize_t(3)});
  auto buf = out.mutable_unchecked<2>();
  for (py::ssize_t i = 0; i < buf.shape(0); ++i) {
    buf(i, 0) = m.vertices[size_t(i)].x;
    buf(i, 1) = m.vertices[size_t(i)].y;
    buf(i, 2) = m.vertices[size_t(i)].z;
  }
  return out;
}

py::array_t<int32_t> faces_array(const std::vector<Face>& faces) {
  py::array_t<int32_t> out({py::ssize_t(faces.size()), py::ssize_t(3)});
  auto buf = out.mutable_unchecked<2>();
  for (py::ssize_t i = 0; i < buf.shape(0); ++i) {
    for (int k = 0; k < 3; ++k) buf(i, k) = faces[size_t(i)][size_t(k)];
  }
  return out;
}

Mesh mesh_from_arrays(py::array_t<double, py::array::c_style | py::array::forcecast> vertices,
                      py::array_t<int32_t, py::array::c_style | py::array::forcecast> faces) {
  if (vertices.ndim() != 2 || vertices.shape(1) != 3) {
    throw py::value_error("vertices must be (N, 3)");
  }
  if (faces.ndim() != 2 || faces.shape(1) != 3) throw py::value_error("faces must be (M, 3)");
  Mesh m;
  auto v = vertices.unchecked<2>();
  for (py::ssize_t i = 0; i < v.shape(0); ++i) {
    m.vertices.push_back({v(i, 0), v(i, 1), v(i, 2)});
  }
  auto f = faces.unchecked<2>();
  for (py::ssize_t i = 0; i < f.shape(0); ++i) {
    m.faces.push_back({f(i, 0), f(i, 1), f(i, 2)});
  }
  return m;
}

py::array_t<int32_t> bins_array(const DiscreteMesh& d) {
  py::array_t<int32_t> out({py::ssize_t(d.vertices.size()), py::ssize_t(3)});
  auto buf = out.mutable_unchecked<2>();
  for (py::ssize_t i = 0; i < buf.shape(0); ++i) {
    for (int k = 0; k < 3; ++k) buf(i, k) = d.vertices[size_t(i)][size_t(k)];
  }
  return out;
}

PointCloud cloud_from_array(
    py::array_t<double, py::array::c_style | py::array::forcecast> points) {
  if (points.ndim() != 2 || points.shape(1) != 3) throw py::value_error("points must be (M, 3)");
  PointCloud c;
  auto p = points.unchecked<2>();
  for (py::ssize_t i = 0; i < p.shape(0); ++i) c.points.push_back({p(i, 0), p(i, 1), p(i, 2)});
  return c;
}

py::array_t<double> cloud_array(const PointCloud& c) {
  py::array_t<double> out({py::ssize_t(c.points.size()), py::ssize_t(3)});
  auto buf = out.mutable_unchecked<2>();
  for (py::ssize_t i = 0; i < buf.shape(0); ++i) {
    buf(i, 0) = c.points[size_t(i)].x;
    buf(i, 1) = c.points[size_t(i)].y;
    buf(i, 2) = c.points[size_t(i)].z;
  }
  return out;
}

TokenStack stack_from_tokens(const std::vector<int>& tokens, int per_face) {
  if (tokens.empty() || tokens.size() % size_t(per_face) != 0) {
    throw py::value_error("token count must be a positive multiple of " +
                          std::to_string(per_face));
  }
  TokenStack t;
  t.per_face = per_face;
  t.faces = int(tokens.size()) / per_face;
  t.tokens = tokens;
  return t;
}

}  // namespace

PYBIND11_MODULE(_meshgpt, m) {
  m.doc() = "Autoregressive triangle-mesh generation with a learned quantized "
            "triangle vocabulary";

  py::register_exception<MeshError>(m, "MeshError");
  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<CheckpointError>(m, "CheckpointError");

  py::class_<Mesh>(m, "Mesh")
      .def(py::init(&mesh_from_arrays), py::arg("vertices"), py::arg("faces"))
      .def_property_readonly("vertices", &vertices_array)
      .def_property_readonly("faces", [](const Mesh& me) { return faces_array(me.faces); })
      .def("__repr__", [](const Mesh& me) {
        std::ostringstream os;
        os << "Mesh(" << me.vertices.size() << " vertices, " << me.faces.size() << " faces)";
        return os.str();
      });

  py::class_<DiscreteMesh>(m, "DiscreteMesh")
      .def_property_readonly("bins", &bins_array)
      .def_property_readonly("faces",
                             [](const DiscreteMesh& d) { return faces_array(d.faces); })
      .def("__eq__", [](const DiscreteMesh& a, const DiscreteMesh& b) { return a == b; })
      .def("__repr__", [](const DiscreteMesh& d) {
        std::ostringstream os;
        os << "DiscreteMesh(" << d.vertices.size() << " vertices, " << d.faces.size()
           << " faces)";
        return os.str();
      });

  m.def("load_obj", &load_obj, py::arg("path"));
  m.def("save_obj", &save_obj, py::arg("mesh"), py::arg("path"));
  m.def("validate", [](const Mesh& mesh) { validate(mesh); }, py::arg("mesh"));
  m.def("normalize", &normalize, py::arg("mesh"));
  m.def("discretize", &discretize, py::arg("mesh"));
  m.def("undiscretize", &undiscretize, py::arg("dmesh"));
  m.def("canonicalize", &meshgpt::canonicalize, py::arg("dmesh"));
  m.def("merge_vertices", &merge_vertices, py::arg("mesh"), py::arg("epsilon"));
  m.def("triangle_accuracy",
        py::overload_cast<const DiscreteMesh&, const DiscreteMesh&>(&triangle_accuracy),
        py::arg("predicted"), py::arg("target"));

  m.def(
      "synthetic_mesh",
      [](const std::string& family, uint64_t seed) {
        Rng rng(seed);
        return synthetic_mesh(family, rng);
      },
      py::arg("family"), py::arg("seed"));
  m.def(
      "augment", [](const Mesh& mesh, uint64_t seed) { return augment(mesh, seed); },
      py::arg("mesh"), py::arg("seed"));

  m.def(
      "sample_surface_points",
      [](const Mesh& mesh, int count, uint64_t seed) {
        return cloud_array(sample_surface_points(mesh, count, seed));
      },
      py::arg("mesh"), py::arg("count") = 2048, py::arg("seed") = 1);
  m.def(
      "chamfer",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> x,
         py::array_t<double, py::array::c_style | py::array::forcecast> y) {
        return chamfer(cloud_from_array(x), cloud_from_array(y));
      },
      py::arg("x"), py::arg("y"));
  m.def(
      "shape_set_metrics",
      [](const std::vector<py::array_t<double, py::array::c_style | py::array::forcecast>>& gen,
         const std::vector<py::array_t<double, py::array::c_style | py::array::forcecast>>&
             ref) {
        std::vector<PointCloud> g, r;
        for (const auto& a : gen) g.push_back(cloud_from_array(a));
        for (const auto& a : ref) r.push_back(cloud_from_array(a));
        ShapeSetMetrics out = shape_set_metrics(g, r);
        py::dict d;
        d["mmd"] = out.mmd;
        d["cov"] = out.cov;
        d["1nna"] = out.one_nna;
        return d;
      },
      py::arg("generated"), py::arg("reference"));
  m.def(
      "compactness",
      [](const std::vector<Mesh>& meshes) {
        Compactness c = compactness(meshes);
        return py::make_tuple(c.avg_vertices, c.avg_faces);
      },
      py::arg("meshes"));

  // checkpoint-driven surfaces
  py::class_<CodecModel>(m, "Codec")
      .def(py::init([](const std::string& path) {
             return CodecModel::from_checkpoint(load_checkpoint(path));
           }),
           py::arg("checkpoint"))
      .def("tokenize",
           [](CodecModel& c, const DiscreteMesh& d) { return c.tokenize(d).tokens; },
           py::arg("dmesh"))
      .def(
          "decode",
          [](CodecModel& c, const std::vector<int>& tokens) {
            return mesh_from_face_bins(
                c.decode(stack_from_tokens(tokens, c.settings().tokens_per_face())));
          },
          py::arg("tokens"))
      .def("reconstruction_accuracy", &CodecModel::reconstruction_accuracy, py::arg("dmesh"))
      .def_property_readonly("tokens_per_face",
                             [](CodecModel& c) { return c.settings().tokens_per_face(); })
      .def_property_readonly("codebook_size",
                             [](CodecModel& c) { return c.settings().codebook_size; });

  py::class_<GptModel>(m, "Gpt")
      .def(py::init([](const std::string& path) {
             return GptModel::from_checkpoint(load_checkpoint(path));
           }),
           py::arg("checkpoint"))
      .def(
          "sample",
          [](GptModel& g, const std::string& mode, uint64_t seed, double p, double temperature,
             int max_faces) {
            SamplerConfig sc;
            sc.mode = mode;
            sc.seed = seed;
            sc.p = p;
            sc.temperature = temperature;
            sc.max_faces = max_faces;
            return g.sample_tokens(sc, {}).tokens;
          },
          py::arg("mode") = "nucleus", py::arg("seed") = 1, py::arg("p") = 0.95,
          py::arg("temperature") = 1.0, py::arg("max_faces") = 0)
      .def_property_readonly("context", [](GptModel& g) { return g.settings().context; })
      .def_property_readonly("vocab", &GptModel::vocab);

  m.def(
      "generate_mesh",
      [](const std::string& gpt_ckpt, const std::string& codec_ckpt, const std::string& mode,
         uint64_t seed, double p, double temperature, double merge_epsilon) {
        auto gpt = GptModel::from_checkpoint(load_checkpoint(gpt_ckpt));
        std::unique_ptr<CodecModel> codec;
        if (!codec_ckpt.empty()) codec = CodecModel::from_checkpoint(load_checkpoint(codec_ckpt));
        SamplerConfig sc;
        sc.mode = mode;
        sc.seed = seed;
        sc.p = p;
        sc.temperature = temperature;
        sc.merge_epsilon = merge_epsilon;
        SampleResult res = gpt->sample_tokens(sc, {});
        if (res.tokens.empty()) throw MeshError("model produced an empty mesh");
        return decode_generated_tokens(res.tokens, codec.get(), *gpt, merge_epsilon).mesh;
      },
      py::arg("gpt_checkpoint"), py::arg("codec_checkpoint") = "",
      py::arg("mode") = "nucleus", py::arg("seed") = 1, py::arg("p") = 0.95,
      py::arg("temperature") = 1.0, py::arg("merge_epsilon") = 1.0 / 256.0);

  // pipeline entry points (same code paths as the CLI)
  m.def(
      "gen_data",
      [](const std::string& config, const std::string& out_dir) {
        return run_gen_data(config.empty() ? Config::defaults() : Config::from_file(config),
                            out_dir);
      },
      py::arg("config"), py::arg("out_dir"));
  m.def(
      "train_codec",
      [](const std::string& config, const std::string& manifest, const std::string& out_ckpt,
         const std::string& log) {
        CodecTrainResult r = run_train_codec(
            config.empty() ? Config::defaults() : Config::from_file(config), manifest, out_ckpt,
            log);
        return py::make_tuple(r.steps, r.final_accuracy);
      },
      py::arg("config"), py::arg("manifest"), py::arg("out_checkpoint"), py::arg("log") = "");
  m.def(
      "train_gpt",
      [](const std::string& config, const std::string& manifest, const std::string& codec_ckpt,
         const std::string& out_ckpt, const std::string& log, const std::string& pretrain) {
        CodecTrainResult r = run_train_gpt(
            config.empty() ? Config::defaults() : Config::from_file(config), manifest,
            codec_ckpt, out_ckpt, log, pretrain);
        return py::make_tuple(r.steps, r.final_accuracy);
      },
      py::arg("config"), py::arg("manifest"), py::arg("codec_checkpoint"),
      py::arg("out_checkpoint"), py::arg("log") = "", py::arg("pretrain_manifest") = "");
  m.def(
      "eval_dirs",
      [](const std::string& generated, const std::string& reference, int points, uint64_t seed) {
        py::dict out;
        std::istringstream report(run_eval(generated, reference, points, seed));
        std::string key, value;
        while (report >> key >> value) out[py::str(key)] = std::stod(value);
        return out;
      },
      py::arg("generated"), py::arg("reference"), py::arg("points") = 2048, py::arg("seed") = 1);
  m.def("roundtrip", &run_roundtrip, py::arg("mesh_path"), py::arg("codec_checkpoint"));
  m.def(
      "grad_check",
      [](uint64_t seed) {
        std::ostringstream sink;
        return run_grad_check(seed, sink);
      },
      py::arg("seed") = 1);
  m.def("config_defaults", [] { return Config::defaults().snapshot(); });
}
