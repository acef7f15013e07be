#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "hec/config.hpp"
#include "hec/corpus/corpus.hpp"
#include "hec/decode_eval/beam_search.hpp"
#include "hec/decode_eval/ctc_prefix.hpp"
#include "hec/decode_eval/experiment.hpp"
#include "hec/decode_eval/metrics.hpp"
#include "hec/decode_eval/recognizer.hpp"
#include "hec/error.hpp"
#include "hec/first_pass/nbest_cache.hpp"
#include "hec/train/ctc.hpp"
#include "hec/train/trainer.hpp"

namespace py = pybind11;
using namespace hec;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

num::Tensor to_tensor(const Array& a) {
  require(a.ndim() == 2, ErrorKind::kShape, "expected a 2-d array");
  std::vector<double> data(a.data(), a.data() + a.size());
  return num::Tensor({static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1))},
                     std::move(data));
}

Array to_array(const num::Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

// Python dict -> KeyValues; values go through str(), booleans as true/false,
// lists joined with commas.
KeyValues to_kv(const py::dict& d) {
  KeyValues kv;
  for (const auto& [k, v] : d) {
    std::string value;
    if (py::isinstance<py::bool_>(v)) {
      value = v.cast<bool>() ? "true" : "false";
    } else if (py::isinstance<py::list>(v) || py::isinstance<py::tuple>(v)) {
      for (const auto& item : v) {
        if (!value.empty()) value += ',';
        value += py::str(item).cast<std::string>();
      }
    } else {
      value = py::str(v).cast<std::string>();
    }
    kv.set(py::str(k).cast<std::string>(), value);
  }
  return kv;
}

py::dict to_dict(const KeyValues& kv) {
  py::dict d;
  for (const auto& [k, v] : kv.entries()) d[py::str(k)] = v;
  return d;
}

const corpus::Dataset& split_of(const corpus::Corpus& c, const std::string& name) {
  if (name == "train") return c.train;
  if (name == "matched") return c.matched;
  if (name == "dialect") return c.dialect;
  if (name == "accent") return c.accent;
  if (name == "entity") return c.entity;
  if (name == "extra") return c.extra;
  fail(ErrorKind::kInvalidArgument, "unknown split '" + name + "'");
}

first_pass::LmScorer scorer(const first_pass::HybridModel& m,
                            const std::vector<std::string>& phrases, double boost) {
  if (phrases.empty()) return first_pass::LmScorer(m.lm);
  std::vector<corpus::TokenSeq> seqs;
  for (const auto& p : phrases) seqs.push_back(m.tokenizer.encode(p));
  return first_pass::bias_lm(m.lm, seqs, boost);
}

}  // namespace

PYBIND11_MODULE(_hec, m) {
  m.doc() = "Hybrid first pass, hypothesis-encoding second pass, joint decoding and evaluation";

  static py::exception<Error> hec_error(m, "HecError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(hec_error, (std::string(kind_name(e.kind())) + ": " + e.what()).c_str());
    }
  });

  py::class_<corpus::Tokenizer>(m, "Tokenizer")
      .def(py::init<std::string_view>(), py::arg("symbols"))
      .def("encode", &corpus::Tokenizer::encode)
      .def("decode", &corpus::Tokenizer::decode)
      .def_property_readonly("size", &corpus::Tokenizer::size)
      .def_property_readonly("symbols", &corpus::Tokenizer::symbols);

  py::class_<corpus::Utterance>(m, "Utterance")
      .def_readonly("id", &corpus::Utterance::id)
      .def_readonly("transcript", &corpus::Utterance::transcript)
      .def_property_readonly("features", [](const corpus::Utterance& u) { return to_array(u.features); });

  py::class_<corpus::Corpus>(m, "Corpus")
      .def_readonly("tokenizer", &corpus::Corpus::tokenizer)
      .def_readonly("lm_text", &corpus::Corpus::lm_text)
      .def_property_readonly("entities", [](const corpus::Corpus& c) { return c.lexicon.entities; })
      .def("split", &split_of, py::arg("name"), py::return_value_policy::reference_internal);

  m.def("generate_corpus", [](const py::dict& spec) {
    return corpus::generate_corpus(corpus::CorpusSpec::from_key_values(to_kv(spec)));
  }, py::arg("spec") = py::dict());
  m.def("write_corpus", [](const std::filesystem::path& dir, const py::dict& spec, const corpus::Corpus& c) {
    corpus::write_corpus(dir, corpus::CorpusSpec::from_key_values(to_kv(spec)), c);
  }, py::arg("dir"), py::arg("spec"), py::arg("corpus"));
  m.def("read_corpus", [](const std::filesystem::path& dir) { return corpus::read_corpus(dir); });

  m.def("ctc_loss", [](const Array& logits, const std::vector<std::int64_t>& target) {
    return train::ctc_loss_value(to_tensor(logits), target);
  }, py::arg("logits"), py::arg("target"), "-log p(target) under CTC; blank is column 0");
  m.def("ctc_prefix_score", [](const Array& log_probs, const corpus::TokenSeq& prefix, corpus::TokenId next) {
    return eval::ctc_prefix_score(to_tensor(log_probs), prefix, next);
  }, py::arg("log_probs"), py::arg("prefix"), py::arg("next"));

  m.def("edit_distance", [](const std::string& ref, const std::string& hyp) {
    const auto e = eval::edit_distance(ref, hyp);
    py::dict d;
    d["substitutions"] = e.substitutions;
    d["deletions"] = e.deletions;
    d["insertions"] = e.insertions;
    d["reference"] = e.reference;
    return d;
  }, py::arg("ref"), py::arg("hyp"));
  m.def("wer", py::overload_cast<const std::map<std::string, std::string>&,
                                 const std::map<std::string, std::string>&>(&eval::wer),
        py::arg("refs"), py::arg("hyps"));
  m.def("werr", &eval::werr, py::arg("baseline"), py::arg("system"));
  m.def("entity_recall", &eval::entity_recall, py::arg("refs"), py::arg("hyps"), py::arg("entities"));

  py::class_<first_pass::HybridModel>(m, "HybridModel")
      .def_static("load", &first_pass::HybridModel::load)
      .def("save", &first_pass::HybridModel::save)
      .def_property_readonly("config", [](const first_pass::HybridModel& h) { return to_dict(h.config.to_key_values()); })
      .def("decode", [](const first_pass::HybridModel& h, const corpus::Corpus& c, const std::string& split,
                        const std::vector<std::string>& phrases, double boost) {
        return eval::texts(eval::decode_hybrid(h, scorer(h, phrases, boost), split_of(c, split)));
      }, py::arg("corpus"), py::arg("split"), py::arg("bias_phrases") = std::vector<std::string>{},
         py::arg("boost") = 0.0, "one-best text per utterance id")
      .def("nbest", [](const first_pass::HybridModel& h, const corpus::Corpus& c, const std::string& split,
                       const std::vector<std::string>& phrases, double boost) {
        py::dict out;
        for (const auto& [id, entries] : first_pass::build_nbest_cache(h, scorer(h, phrases, boost), split_of(c, split))) {
          py::list l;
          for (const auto& e : entries) l.append(py::make_tuple(e.tokens, e.acoustic, e.lm, e.combined));
          out[py::str(id)] = l;
        }
        return out;
      }, py::arg("corpus"), py::arg("split"), py::arg("bias_phrases") = std::vector<std::string>{},
         py::arg("boost") = 0.0, "(tokens, acoustic, lm, combined) lists per utterance id");

  m.def("train_first_pass", [](const corpus::Corpus& c, const py::dict& hybrid, const py::dict& train) {
    return train::train_first_pass(c.train, c.lm_text, c.tokenizer,
                                   first_pass::HybridConfig::from_key_values(to_kv(hybrid)),
                                   train::TrainConfig::from_key_values(to_kv(train)))
        .model;
  }, py::arg("corpus"), py::arg("hybrid") = py::dict(), py::arg("train") = py::dict());

  py::class_<second_pass::AEDModel>(m, "AEDModel")
      .def_static("load", &second_pass::AEDModel::load)
      .def("save", &second_pass::AEDModel::save)
      .def_property_readonly("config", [](const second_pass::AEDModel& a) { return to_dict(a.config.to_key_values()); })
      .def_property_readonly("parameter_count", [](const second_pass::AEDModel& a) { return a.params.element_count(); });

  m.def("train_second_pass", [](const corpus::Corpus& c, const first_pass::HybridModel* first,
                                const py::dict& aed, const py::dict& train) {
    std::optional<first_pass::NBestCache> cache;
    if (first) cache = first_pass::build_nbest_cache(*first, first_pass::LmScorer(first->lm), c.train);
    const auto seg = first ? first->config.segmenter : first_pass::SegmenterConfig{};
    const auto ex = train::prepare_second_pass(c.train, cache ? &*cache : nullptr, c.tokenizer, seg);
    KeyValues kv = to_kv(aed);
    kv.set("vocab", static_cast<std::uint64_t>(c.tokenizer.size()));
    require(!c.train.empty(), ErrorKind::kInvalidArgument, "empty training split");
    kv.set("feature_dim", static_cast<std::uint64_t>(c.train.front().features.dim(1)));
    if (!first) kv.set("decoder_structure", "none");
    return train::train_second_pass(ex, second_pass::AEDConfig::from_key_values(kv),
                                    train::TrainConfig::from_key_values(to_kv(train)))
        .model;
  }, py::arg("corpus"), py::arg("first_pass"), py::arg("aed") = py::dict(), py::arg("train") = py::dict(),
     "first_pass=None trains the standalone AED");

  m.def("recognize", [](const second_pass::AEDModel& model, const Array& features,
                        const corpus::TokenSeq& onebest, std::size_t beam, std::size_t max_len) {
    eval::BeamOptions o;
    o.beam = beam;
    o.max_len = max_len;
    const auto r = eval::recognize(model, to_tensor(features), onebest, o);
    py::dict d;
    d["tokens"] = r.tokens;
    d["joint"] = r.joint;
    d["att"] = r.att;
    d["ctc"] = r.ctc;
    d["truncated"] = r.truncated;
    return d;
  }, py::arg("model"), py::arg("features"), py::arg("onebest") = corpus::TokenSeq{},
     py::arg("beam") = 5, py::arg("max_len") = 0, "joint CTC/attention beam search");

  py::class_<eval::ExperimentReport>(m, "ExperimentReport")
      .def_readonly("title", &eval::ExperimentReport::title)
      .def_readonly("columns", &eval::ExperimentReport::columns)
      .def_readonly("seeds", &eval::ExperimentReport::seeds)
      .def("at", &eval::ExperimentReport::at, py::arg("row"), py::arg("column"))
      .def("table", &eval::ExperimentReport::table)
      .def("tsv", &eval::ExperimentReport::tsv);
  m.def("run_experiment", [](const py::dict& config) {
    return eval::run_experiment(eval::ExperimentConfig::from_key_values(to_kv(config)));
  }, py::arg("config"), "keys as in the experiment config file, e.g. {'kind': 'combination'}");
}
