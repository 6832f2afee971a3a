#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "sempos/cli.hpp"
#include "sempos/errors.hpp"
#include "sempos/feature_io.hpp"
#include "sempos/gradsuite.hpp"
#include "sempos/masking.hpp"
#include "sempos/metrics.hpp"
#include "sempos/trainer.hpp"

namespace py = pybind11;
using namespace sempos;

namespace {

py::array_t<double> to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

Tensor from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

metrics::EvalCorpus make_corpus(const std::vector<metrics::Sentence>& candidates,
                                const std::vector<std::vector<metrics::Sentence>>& references) {
  if (candidates.size() != references.size()) {
    throw LengthMismatch("candidates and references differ in length");
  }
  metrics::EvalCorpus c;
  for (std::size_t i = 0; i < candidates.size(); ++i) c.push_back({candidates[i], references[i]});
  return metrics::normalize(std::move(c));
}

py::dict losses_dict(const model::LossBreakdown& l) {
  py::dict d;
  d["l_c"] = l.l_c;
  d["l_v"] = l.l_v;
  d["l_ds"] = l.l_ds;
  d["l_a"] = l.l_a;
  d["l_do"] = l.l_do;
  d["l_g"] = l.l_g;
  d["l_noun"] = l.l_noun;
  d["l_all"] = l.l_all;
  return d;
}

py::dict metrics_dict(const metrics::MetricsReport& r) {
  py::dict d;
  d["videos"] = r.videos;
  d["bleu4"] = r.bleu4;
  d["meteor"] = r.meteor;
  d["rouge_l"] = r.rouge_l;
  d["cider"] = r.cider;
  d["gs"] = r.gs;
  return d;
}

// A trained model with its vocabulary, as returned by train() and load().
struct Captioner {
  model::SemPosModel model;
  data::Vocabulary vocab;
  train::RunReport report;
};

}  // namespace

PYBIND11_MODULE(_sempos, m) {
  m.doc() = "SEM-POS video captioning core";

  py::register_exception<Error>(m, "SemposError", PyExc_RuntimeError);

  py::class_<data::CaptionAnnotation>(m, "CaptionAnnotation")
      .def_readonly("tokens", &data::CaptionAnnotation::tokens)
      .def_readonly("det_subject", &data::CaptionAnnotation::det_subject)
      .def_readonly("aux_verb", &data::CaptionAnnotation::aux_verb)
      .def_readonly("verb", &data::CaptionAnnotation::verb)
      .def_readonly("det_object", &data::CaptionAnnotation::det_object);

  py::class_<data::VideoSample>(m, "VideoSample")
      .def_readonly("video_id", &data::VideoSample::video_id)
      .def_property_readonly("spatial", [](const data::VideoSample& s) { return to_numpy(s.spatial); })
      .def_property_readonly("temporal",
                             [](const data::VideoSample& s) { return to_numpy(s.temporal); })
      .def_property_readonly("objects", [](const data::VideoSample& s) { return to_numpy(s.objects); })
      .def_readonly("references", &data::VideoSample::references);

  m.def(
      "generate_corpus",
      [](std::size_t n, std::size_t refs, std::uint64_t seed, std::size_t frames,
         std::size_t objects, std::size_t dim, double noise, double drop_object,
         std::uint64_t grammar_seed) {
        const auto g = data::default_grammar(dim, noise, grammar_seed);
        return data::generate_corpus(g, n, refs, seed, {frames, objects, drop_object});
      },
      py::arg("n"), py::arg("refs") = 3, py::arg("seed") = 42, py::arg("frames") = 8,
      py::arg("objects") = 4, py::arg("dim") = 16, py::arg("noise") = 0.1,
      py::arg("drop_object") = 0.0, py::arg("grammar_seed") = 1234);
  m.def("save_corpus", [](const std::vector<data::VideoSample>& c, const std::string& features,
                          const std::string& annotations) {
    data::save_features(features, c);
    data::save_annotations(annotations, c);
  });
  m.def("load_corpus", &data::load_samples, py::arg("features"), py::arg("annotations"));
  m.def("pos_stats", [](const std::vector<data::VideoSample>& c) {
    return data::pos_stats(data::all_references(c)).percent;
  });

  m.def(
      "mask_spatial",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x, double ratio,
         std::uint64_t seed) {
        vfm::MaskConfig cfg;
        cfg.spatial_ratio = ratio;
        Rng rng(seed);
        const auto r = vfm::mask_spatial(from_numpy(x), cfg, rng);
        return py::make_tuple(to_numpy(r.masked), r.masked_count());
      },
      py::arg("x"), py::arg("ratio") = 0.30, py::arg("seed") = 42);
  m.def(
      "mask_temporal_chunk",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x, double ratio,
         std::uint64_t seed) {
        vfm::MaskConfig cfg;
        cfg.temporal_ratio = ratio;
        Rng rng(seed);
        const auto r = vfm::mask_temporal_chunk(from_numpy(x), cfg, rng);
        return py::make_tuple(to_numpy(r.masked), r.band_start, r.band_width);
      },
      py::arg("x"), py::arg("ratio") = 0.15, py::arg("seed") = 42);

  m.def("bleu4", [](const std::vector<metrics::Sentence>& c,
                    const std::vector<std::vector<metrics::Sentence>>& r) {
    return metrics::bleu4(make_corpus(c, r));
  });
  m.def("rouge_l", [](const std::vector<metrics::Sentence>& c,
                      const std::vector<std::vector<metrics::Sentence>>& r) {
    return metrics::rouge_l(make_corpus(c, r));
  });
  m.def("cider", [](const std::vector<metrics::Sentence>& c,
                    const std::vector<std::vector<metrics::Sentence>>& r) {
    std::vector<std::string> warnings;
    return metrics::cider(make_corpus(c, r), &warnings);
  });
  m.def("meteor_lite", [](const std::vector<metrics::Sentence>& c,
                          const std::vector<std::vector<metrics::Sentence>>& r) {
    return metrics::meteor_lite(make_corpus(c, r));
  });
  m.def("score", [](const std::vector<metrics::Sentence>& c,
                    const std::vector<std::vector<metrics::Sentence>>& r) {
    return metrics_dict(metrics::score_corpus(make_corpus(c, r)));
  });

  py::class_<metrics::NgramLM>(m, "NgramLM")
      .def(py::init([](const std::vector<metrics::Sentence>& corpus, std::size_t order, double k) {
             return metrics::ngram_lm_train(corpus, order, k);
           }),
           py::arg("corpus"), py::arg("order") = 2, py::arg("k") = 0.1)
      .def("prob",
           [](const metrics::NgramLM& lm, const metrics::Sentence& history,
              const std::string& token) { return lm.prob(history, token); })
      .def("perplexity",
           [](const metrics::NgramLM& lm, const metrics::Sentence& s) {
             return metrics::perplexity(s, lm);
           })
      .def("vocabulary", &metrics::NgramLM::vocabulary);
  m.def("grammatical_score",
        [](const std::vector<metrics::Sentence>& captions, const metrics::NgramLM& lm) {
          return metrics::grammatical_score(captions, lm);
        });
  m.def("uniform_grammatical_score",
        [](const std::vector<metrics::Sentence>& captions, std::vector<std::string> vocab) {
          return metrics::grammatical_score(captions, metrics::UniformLM(std::move(vocab)));
        });

  py::class_<Captioner>(m, "Captioner")
      .def("caption",
           [](const Captioner& c, const data::VideoSample& s) {
             return c.vocab.decode(c.model.decode_greedy(model::view(s)));
           })
      .def("evaluate",
           [](const Captioner& c, const std::vector<data::VideoSample>& samples) {
             return metrics_dict(train::evaluate(c.model, c.vocab, samples).metrics);
           })
      .def("save", [](const Captioner& c,
                      const std::string& path) { model::save_checkpoint(path, c.model, c.vocab); })
      .def_property_readonly("parameter_count",
                             [](const Captioner& c) { return c.model.parameters().scalar_count(); })
      .def_property_readonly("epoch_losses",
                             [](const Captioner& c) {
                               py::list out;
                               for (const auto& e : c.report.epochs) out.append(losses_dict(e.train));
                               return out;
                             })
      .def_property_readonly("report_text",
                             [](const Captioner& c) { return train::report_text(c.report); });

  m.def(
      "train",
      [](const std::vector<data::VideoSample>& corpus, std::size_t hidden, std::size_t embedding,
         std::size_t epochs, std::size_t batch, double lr, std::uint64_t seed,
         const std::vector<std::string>& without, double val_fraction) {
        if (corpus.empty()) throw EmptyCorpus("training corpus is empty");
        model::ModelConfig mc;
        mc.hidden = hidden;
        mc.embedding = embedding;
        mc.spatial_dim = corpus.front().spatial.cols();
        mc.temporal_dim = corpus.front().temporal.cols();
        mc.noun_dim = corpus.front().objects.cols();
        train::TrainConfig tc;
        tc.epochs = epochs;
        tc.batch_size = batch;
        tc.learning_rate = lr;
        tc.seed = seed;
        tc.val_fraction = val_fraction;
        py::gil_scoped_release release;
        auto r = train::train(corpus, model::ablate(mc, without), tc);
        return Captioner{std::move(r.model), std::move(r.vocab), std::move(r.report)};
      },
      py::arg("corpus"), py::arg("hidden") = 64, py::arg("embedding") = 32,
      py::arg("epochs") = 300, py::arg("batch") = 16, py::arg("lr") = 1e-3,
      py::arg("seed") = 42, py::arg("without") = std::vector<std::string>{},
      py::arg("val_fraction") = 0.1);
  m.def("load", [](const std::string& path) {
    const auto ck = model::load_checkpoint(path);
    return Captioner{model::model_from_checkpoint(ck), ck.vocab, {}};
  });

  m.def(
      "gradient_suite",
      [](std::uint64_t seed, std::size_t coords) {
        check::SuiteOptions o;
        o.seed = seed;
        o.coords_per_tensor = coords;
        std::vector<std::pair<std::string, double>> out;
        for (const auto& r : check::run_gradient_suite(o)) out.emplace_back(r.name, r.max_rel_error);
        return out;
      },
      py::arg("seed") = 42, py::arg("coords") = 4);

  m.def("run_cli", [](std::vector<std::string> args) {
    args.insert(args.begin(), "sempos");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return py::make_tuple(code, out.str(), err.str());
  });
}
