// Python bindings. Structured values cross the boundary as JSON text; the
// package's __init__ turns them into plain dicts and lists.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "posbias/backend.hpp"
#include "posbias/imageprobe.hpp"
#include "posbias/metrics.hpp"
#include "posbias/orchestrator.hpp"
#include "posbias/synthetic.hpp"
#include "posbias/textprobe.hpp"

namespace py = pybind11;
using namespace posbias;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

ImageCanvas canvas_from_array(const U8Array& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw ValidationError("expected an HxWx3 uint8 array");
  ImageCanvas c(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), c.pixels.begin());
  return c;
}

U8Array array_from_canvas(const ImageCanvas& c) {
  U8Array a({c.height, c.width, 3});
  std::copy(c.pixels.begin(), c.pixels.end(), a.mutable_data());
  return a;
}

SimilarityMatrix matrix_from_array(const F64Array& a) {
  if (a.ndim() != 2) throw ValidationError("expected a 2-D score matrix");
  SimilarityMatrix m;
  m.rows = static_cast<std::size_t>(a.shape(0));
  m.cols = static_cast<std::size_t>(a.shape(1));
  m.scores.assign(a.data(), a.data() + a.size());
  return m;
}

ModelProfile profile_or_mock(const std::optional<std::string>& profile_json) {
  if (!profile_json) return MockProvider::default_info().profile;
  auto p = json::parse(*profile_json).get<ModelProfile>();
  p.validate();
  return p;
}

SegmentationPlan text_plan(const ModelProfile& p, const TokenSequence& seq, int n,
                           const std::string& schedule, std::optional<int> num_positions,
                           const std::vector<int>& positions) {
  return derive_text_plan(p, seq, n, parse_schedule(schedule), num_positions, positions);
}

}  // namespace

PYBIND11_MODULE(_posbias, m) {
  m.doc() = "Positional-bias audits for dual-encoder models";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<ProviderError>(m, "ProviderError", PyExc_RuntimeError);
  py::register_exception<RunInterrupted>(m, "RunInterrupted", PyExc_RuntimeError);

  m.def("content_key", [](const std::string& model, const py::bytes& payload) {
    return content_key(model, std::string(payload));
  });
  m.def("mock_embedding", [](const std::string& key, int dim) { return mock_embedding(key, dim).vector; });
  m.def("mock_info_json", [] { return json(MockProvider::default_info()).dump(); });
  m.def("mock_tokenize", [](const std::vector<std::string>& texts) {
    MockProvider mock;
    auto r = mock.tokenize(texts);
    return py::make_tuple(r.token_ids, r.truncated);
  });

  m.def("shuffle_caption", [](const std::string& c, std::uint64_t seed) { return shuffle_caption(c, seed); });
  m.def("split_sub_captions", [](const std::string& c) { return split_sub_captions(c); });

  m.def(
      "text_plan_json",
      [](const std::vector<TokenId>& interior, int n, const std::string& schedule, std::optional<int> num_positions,
         const std::vector<int>& positions, std::optional<std::string> profile) {
        const auto p = profile_or_mock(profile);
        return json(text_plan(p, make_token_sequence(interior, p), n, schedule, num_positions, positions)).dump();
      },
      py::arg("interior"), py::arg("num_segments"), py::arg("schedule") = "step-equal",
      py::arg("num_positions") = py::none(), py::arg("positions") = std::vector<int>{},
      py::arg("profile_json") = py::none());

  m.def(
      "text_variants",
      [](const std::vector<TokenId>& interior, int n, const std::string& mode, const std::string& schedule,
         std::optional<int> num_positions, std::optional<std::string> profile) {
        const auto p = profile_or_mock(profile);
        const auto seq = make_token_sequence(interior, p);
        const auto plan = text_plan(p, seq, n, schedule, num_positions, {});
        const auto vs = parse_variant_mode(mode) == VariantMode::kImportance
                            ? make_text_importance_variants(seq, plan, p)
                            : make_text_bias_variants(seq, plan, p);
        py::list out;
        for (const auto& v : vs) out.append(py::make_tuple(v.segment_index, v.position_index, v.ids));
        return out;
      },
      py::arg("interior"), py::arg("num_segments"), py::arg("mode") = "bias-mask",
      py::arg("schedule") = "step-equal", py::arg("num_positions") = py::none(), py::arg("profile_json") = py::none());

  m.def(
      "lorem_variants",
      [](const std::string& caption, int n, int p) {
        const auto vs = make_text_lorem_variants(caption, n, p, default_lorem_bank());
        py::list out;
        for (const auto& v : vs) out.append(py::make_tuple(v.segment_index, v.position_index, v.text));
        return out;
      },
      py::arg("caption"), py::arg("num_segments"), py::arg("num_positions"));

  m.def(
      "preprocess_image",
      [](const U8Array& a, std::optional<std::string> profile) {
        return array_from_canvas(preprocess_image(canvas_from_array(a), profile_or_mock(profile)));
      },
      py::arg("image"), py::arg("profile_json") = py::none());
  m.def(
      "resize_bicubic", [](const U8Array& a, int w, int h) { return array_from_canvas(resize_bicubic(canvas_from_array(a), w, h)); },
      py::arg("image"), py::arg("width"), py::arg("height"));
  m.def(
      "image_variants",
      [](const U8Array& a, int n, const std::string& mode, const std::string& axis, std::optional<std::string> profile) {
        const auto p = profile_or_mock(profile);
        const auto canvas = canvas_from_array(a);
        const auto plan = derive_image_plan(p, n, parse_axis(axis));
        const auto vs = parse_variant_mode(mode) == VariantMode::kImportance
                            ? make_image_importance_variants(canvas, plan, p)
                            : make_image_bias_variants(canvas, plan, p);
        py::list out;
        for (const auto& v : vs) out.append(py::make_tuple(v.segment_index, v.position_index, array_from_canvas(v.canvas)));
        return out;
      },
      py::arg("image"), py::arg("num_segments"), py::arg("mode") = "bias-mask", py::arg("axis") = "rows",
      py::arg("profile_json") = py::none());
  m.def("mean_fill_color", [](std::optional<std::string> profile) { return mean_fill_color(profile_or_mock(profile)); },
        py::arg("profile_json") = py::none());

  m.def(
      "recall_at_k",
      [](const F64Array& sim, const std::vector<std::size_t>& truth, int k) {
        return recall_at_k(matrix_from_array(sim), truth, k);
      },
      py::arg("scores"), py::arg("truth"), py::arg("k") = 1);
  m.def(
      "top1_accuracy",
      [](const F64Array& logits, const std::vector<std::size_t>& truth) {
        return top1_accuracy(matrix_from_array(logits), truth);
      },
      py::arg("logits"), py::arg("truth"));
  m.def("coefficient_of_variation", [](const std::vector<double>& v) { return coefficient_of_variation(v); });
  m.def(
      "interpolate_to_scale", [](const std::vector<double>& v, int samples) { return interpolate_to_scale(v, samples); },
      py::arg("per_segment"), py::arg("samples") = 100);

  m.def(
      "run_audit_json",
      [](const std::string& config_json, const std::filesystem::path& base_dir, bool resume,
         std::optional<std::filesystem::path> cache_dir) {
        const auto config = config_from_json(json::parse(config_json), base_dir);
        std::unique_ptr<EmbeddingProvider> provider;
        if (config.mock)
          provider = std::make_unique<MockProvider>();
        else if (config.provider_url)
          provider = std::make_unique<HttpProvider>(*config.provider_url);
        else
          throw ValidationError("config names no provider: set provider_url or mock");
        RunOptions options;
        options.resume = resume;
        options.cache_dir = std::move(cache_dir);
        AuditResult r;
        {
          py::gil_scoped_release release;
          r = run_audit(config, *provider, options);
        }
        json out = {{"status", r.manifest.status},
                    {"metric_id", r.metric_id},
                    {"output_dir", r.output_dir.string()},
                    {"config_hash", r.manifest.config_hash},
                    {"embed_stats", json(r.manifest)["embed_stats"]}};
        if (r.importance) out["importance"] = *r.importance;
        else out["curves"] = r.curves;
        if (r.baseline) out["baseline"] = *r.baseline;
        return out.dump();
      },
      py::arg("config_json"), py::arg("base_dir"), py::arg("resume") = false, py::arg("cache_dir") = py::none());

  m.def(
      "write_synthetic_dataset",
      [](const std::filesystem::path& dir, int num_items, std::uint64_t seed, bool labels) {
        SyntheticOptions o;
        o.num_items = num_items;
        o.seed = seed;
        o.labels = labels;
        return write_synthetic_dataset(dir, o);
      },
      py::arg("directory"), py::arg("num_items") = 50, py::arg("seed") = 0, py::arg("labels") = false);
}
