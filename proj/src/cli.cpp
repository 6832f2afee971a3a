#include "sempos/cli.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "sempos/errors.hpp"
#include "sempos/feature_io.hpp"
#include "sempos/gradsuite.hpp"
#include "sempos/trainer.hpp"

namespace sempos {

namespace {

struct DataFlags {
  std::size_t n = 32, refs = 3, frames = 8, objects = 4, dim = 16;
  double noise = 0.1, drop_object = 0.0;
  std::uint64_t grammar_seed = 1234;
};

void add_data_flags(CLI::App* cmd, DataFlags& d) {
  cmd->add_option("--n", d.n, "number of videos")->capture_default_str();
  cmd->add_option("--refs", d.refs, "reference captions per video")->capture_default_str();
  cmd->add_option("--frames", d.frames, "frames per video (T)")->capture_default_str();
  cmd->add_option("--objects", d.objects, "object feature rows (K)")->capture_default_str();
  cmd->add_option("--dim", d.dim, "feature and concept dimension")->capture_default_str();
  cmd->add_option("--noise", d.noise, "feature noise sigma")->capture_default_str();
  cmd->add_option("--drop-object", d.drop_object, "probability of an object-less video")
      ->capture_default_str();
  cmd->add_option("--grammar-seed", d.grammar_seed, "seed of the concept vectors")
      ->capture_default_str();
}

struct ModelFlags {
  model::ModelConfig cfg;
  std::string distance = "mse";
  std::vector<std::string> without;
};

void add_model_flags(CLI::App* cmd, ModelFlags& m) {
  cmd->add_option("--hidden", m.cfg.hidden, "LSTM hidden size (H)")->capture_default_str();
  cmd->add_option("--embedding", m.cfg.embedding, "embedding size (E)")->capture_default_str();
  cmd->add_option("--attention-dim", m.cfg.attention_dim, "attention size, 0 = hidden")
      ->capture_default_str();
  cmd->add_option("--max-len", m.cfg.max_caption_len, "greedy decoding length limit")
      ->capture_default_str();
  cmd->add_option("--distance", m.distance, "POS embedding distance")
      ->check(CLI::IsMember({"mse", "cosine"}))
      ->capture_default_str();
  cmd->add_option("--without", m.without,
                  "blocks to remove: verb, det_subject, aux_verb, det_object, glfb, vfm")
      ->delimiter(',');
}

model::ModelConfig resolve_model(const ModelFlags& m, std::size_t spatial, std::size_t temporal,
                                 std::size_t noun) {
  model::ModelConfig cfg = m.cfg;
  cfg.spatial_dim = spatial;
  cfg.temporal_dim = temporal;
  cfg.noun_dim = noun;
  cfg.distance = m.distance == "cosine" ? model::DistanceKind::kCosine : model::DistanceKind::kMse;
  return model::ablate(cfg, m.without);
}

void add_train_flags(CLI::App* cmd, train::TrainConfig& t) {
  cmd->add_option("--lr", t.learning_rate, "Adam learning rate")->capture_default_str();
  cmd->add_option("--batch", t.batch_size, "mini-batch size")->capture_default_str();
  cmd->add_option("--epochs", t.epochs, "training epochs")->capture_default_str();
  cmd->add_option("--beta1", t.beta1)->capture_default_str();
  cmd->add_option("--beta2", t.beta2)->capture_default_str();
  cmd->add_option("--eps", t.epsilon)->capture_default_str();
  cmd->add_option("--spatial-mask", t.mask.spatial_ratio, "VFM spatial ratio")
      ->capture_default_str();
  cmd->add_option("--temporal-mask", t.mask.temporal_ratio, "VFM temporal band ratio")
      ->capture_default_str();
  cmd->add_option("--clip", t.clip_norm, "global gradient norm clip, <= 0 disables")
      ->capture_default_str();
  cmd->add_option("--val-fraction", t.val_fraction, "validation share of videos")
      ->capture_default_str();
  cmd->add_option("--embed-seed", t.embed_seed, "seed of the POS target embeddings")
      ->capture_default_str();
  auto& w = t.weights;
  cmd->add_option("--w-caption", w.caption)->capture_default_str();
  cmd->add_option("--w-verb", w.verb)->capture_default_str();
  cmd->add_option("--w-det-subject", w.det_subject)->capture_default_str();
  cmd->add_option("--w-aux-verb", w.aux_verb)->capture_default_str();
  cmd->add_option("--w-det-object", w.det_object)->capture_default_str();
  cmd->add_option("--w-glfb", w.glfb)->capture_default_str();
  cmd->add_option("--w-noun", w.noun)->capture_default_str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw CorruptFile("cannot write " + path);
  f << text;
}

void write_metrics(const metrics::MetricsReport& r, const std::string& prefix, std::ostream& out) {
  out << metrics::to_text(r);
  if (!prefix.empty()) {
    write_file(prefix + ".txt", metrics::to_text(r));
    write_file(prefix + ".jsonl", metrics::to_json(r) + "\n");
  }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"SEM-POS video captioning toolkit", "sempos_cli"};
  app.require_subcommand(1);
  std::uint64_t seed = 42;
  app.add_option("--seed", seed, "global seed")->capture_default_str();

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  DataFlags gen_flags;
  std::string gen_features, gen_annotations;
  add_data_flags(gen, gen_flags);
  gen->add_option("--seed", seed, "corpus seed")->capture_default_str();
  gen->add_option("--features", gen_features, "output feature file")->required();
  gen->add_option("--annotations", gen_annotations, "output annotation file")->required();

  // train
  auto* tr = app.add_subcommand("train", "train a model");
  ModelFlags tr_model;
  train::TrainConfig tr_cfg;
  std::string tr_features, tr_annotations, tr_checkpoint, tr_report;
  bool tr_quiet = false;
  add_model_flags(tr, tr_model);
  add_train_flags(tr, tr_cfg);
  tr->add_option("--seed", seed, "training seed")->capture_default_str();
  tr->add_option("--features", tr_features)->required();
  tr->add_option("--annotations", tr_annotations)->required();
  tr->add_option("--checkpoint", tr_checkpoint, "output checkpoint")->required();
  tr->add_option("--report", tr_report, "report prefix (.txt and .jsonl)");
  tr->add_flag("--quiet", tr_quiet, "no per-epoch progress");

  // eval
  auto* ev = app.add_subcommand("eval", "score a checkpoint or a candidates file");
  std::string ev_checkpoint, ev_features, ev_candidates, ev_annotations, ev_report;
  ev->add_option("--checkpoint", ev_checkpoint);
  ev->add_option("--features", ev_features);
  ev->add_option("--candidates", ev_candidates);
  ev->add_option("--annotations", ev_annotations)->required();
  ev->add_option("--report", ev_report, "report prefix (.txt and .jsonl)");

  // caption
  auto* cap = app.add_subcommand("caption", "greedy-decode captions");
  std::string cap_checkpoint, cap_features, cap_out;
  cap->add_option("--checkpoint", cap_checkpoint)->required();
  cap->add_option("--features", cap_features)->required();
  cap->add_option("--out", cap_out, "candidates file");

  // ablate
  auto* ab = app.add_subcommand("ablate", "train and score ablation variants over seeds");
  train::AblationConfig ab_cfg;
  ModelFlags ab_model;
  DataFlags ab_data;
  std::size_t ab_test = ab_cfg.test_videos;
  std::vector<std::string> ab_variants{"full", "verb", "glfb"};
  std::string ab_report;
  add_model_flags(ab, ab_model);
  add_train_flags(ab, ab_cfg.train);
  add_data_flags(ab, ab_data);
  ab->add_option("--seeds", ab_cfg.seeds, "seeds")->delimiter(',')->capture_default_str();
  ab->add_option("--test-videos", ab_test, "held-out videos per seed")->capture_default_str();
  ab->add_option("--variants", ab_variants,
                 "variants (full or a block name, '+' joins several blocks)")
      ->delimiter(',');
  ab->add_option("--report", ab_report, "JSON records file");

  // pos-stats
  auto* ps = app.add_subcommand("pos-stats", "POS component coverage of annotations");
  std::string ps_annotations;
  ps->add_option("--annotations", ps_annotations)->required();

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  check::SuiteOptions gc_opts;
  double gc_tol = 1e-4;
  gc->add_option("--seed", seed)->capture_default_str();
  gc->add_option("--frames", gc_opts.frames)->capture_default_str();
  gc->add_option("--hidden", gc_opts.hidden)->capture_default_str();
  gc->add_option("--embedding", gc_opts.embedding)->capture_default_str();
  gc->add_option("--dim", gc_opts.feature_dim)->capture_default_str();
  gc->add_option("--coords", gc_opts.coords_per_tensor, "coordinates per tensor, 0 = all")
      ->capture_default_str();
  gc->add_option("--tolerance", gc_tol)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*gen) {
      auto g = data::default_grammar(gen_flags.dim, gen_flags.noise, gen_flags.grammar_seed);
      data::CorpusOptions co{gen_flags.frames, gen_flags.objects, gen_flags.drop_object};
      const auto corpus = data::generate_corpus(g, gen_flags.n, gen_flags.refs, seed, co);
      data::save_features(gen_features, corpus);
      data::save_annotations(gen_annotations, corpus);
      out << "wrote " << corpus.size() << " videos to " << gen_features << " and "
          << gen_annotations << '\n';
    } else if (*tr) {
      const auto corpus = data::load_samples(tr_features, tr_annotations);
      if (corpus.empty()) throw EmptyCorpus("no videos in " + tr_features);
      const auto& first = corpus.front();
      auto mc = resolve_model(tr_model, first.spatial.cols(), first.temporal.cols(),
                              first.objects.cols());
      tr_cfg.seed = seed;
      train::ProgressFn progress;
      if (!tr_quiet) {
        progress = [&](const train::EpochRecord& e) {
          out << "epoch " << e.epoch << " l_all=" << e.train.l_all;
          if (e.validation) out << " val_l_all=" << e.validation->l_all;
          out << '\n';
        };
      }
      auto result = train::train(corpus, mc, tr_cfg, std::nullopt, progress);
      model::save_checkpoint(tr_checkpoint, result.model, result.vocab);
      result.report.final_metrics = train::evaluate(result.model, result.vocab, corpus).metrics;
      if (!tr_report.empty()) {
        write_file(tr_report + ".txt", train::report_text(result.report));
        write_file(tr_report + ".jsonl", train::report_records(result.report));
      }
      out << metrics::to_text(*result.report.final_metrics);
    } else if (*ev) {
      if (!ev_candidates.empty()) {
        if (!ev_checkpoint.empty()) throw UsageError("give either --candidates or --checkpoint");
        const auto r = train::evaluate_candidates(data::load_candidates(ev_candidates),
                                                  data::load_annotations(ev_annotations));
        write_metrics(r, ev_report, out);
      } else {
        if (ev_checkpoint.empty() || ev_features.empty()) {
          throw UsageError("eval needs --candidates, or --checkpoint with --features");
        }
        const auto ck = model::load_checkpoint(ev_checkpoint);
        const auto net = model::model_from_checkpoint(ck);
        const auto corpus = data::load_samples(ev_features, ev_annotations);
        write_metrics(train::evaluate(net, ck.vocab, corpus).metrics, ev_report, out);
      }
    } else if (*cap) {
      const auto ck = model::load_checkpoint(cap_checkpoint);
      const auto net = model::model_from_checkpoint(ck);
      std::vector<data::Candidate> cands;
      for (const auto& f : data::load_features(cap_features)) {
        const auto ids = net.decode_greedy({f.spatial, f.temporal, f.objects});
        cands.push_back({f.video_id, ck.vocab.decode(ids)});
        out << f.video_id << '\t' << data::join_words(cands.back().tokens) << '\n';
      }
      if (!cap_out.empty()) data::save_candidates(cap_out, cands);
    } else if (*ab) {
      ab_cfg.train_videos = ab_data.n;
      ab_cfg.test_videos = ab_test;
      ab_cfg.refs_per_video = ab_data.refs;
      ab_cfg.noise_sigma = ab_data.noise;
      ab_cfg.corpus = {ab_data.frames, ab_data.objects, ab_data.drop_object};
      ab_cfg.model = resolve_model(ab_model, ab_data.dim, ab_data.dim, ab_data.dim);
      ab_cfg.variants.clear();
      for (const auto& v : ab_variants) {
        std::vector<std::string> removed;
        if (v != "full") {
          std::size_t start = 0;
          while (start <= v.size()) {
            const auto plus = v.find('+', start);
            removed.push_back(v.substr(start, plus == std::string::npos ? plus : plus - start));
            if (plus == std::string::npos) break;
            start = plus + 1;
          }
          for (const auto& b : removed) model::parse_block(b);
        }
        ab_cfg.variants.push_back(removed);
      }
      std::ofstream records;
      if (!ab_report.empty()) {
        records.open(ab_report);
        if (!records) throw CorruptFile("cannot write " + ab_report);
      }
      out << std::fixed << std::setprecision(4);
      train::run_ablation(ab_cfg, [&](const train::AblationRow& row) {
        const auto& m = row.metrics;
        out << "seed=" << row.seed << " variant=" << row.variant << " bleu4=" << m.bleu4
            << " meteor=" << m.meteor << " rouge_l=" << m.rouge_l << " cider=" << m.cider
            << " gs=" << m.gs << '\n';
        if (records) {
          records << "{\"seed\":" << row.seed << ",\"variant\":\"" << row.variant
                  << "\",\"metrics\":" << metrics::to_json(m) << "}\n";
        }
      });
    } else if (*ps) {
      std::vector<data::CaptionAnnotation> caps;
      for (auto& rec : data::load_annotations(ps_annotations)) {
        caps.insert(caps.end(), rec.captions.begin(), rec.captions.end());
      }
      const auto stats = data::pos_stats(caps);
      out << "captions=" << stats.captions << '\n';
      for (const auto& [name, pct] : stats.percent) out << name << '=' << pct << '\n';
    } else if (*gc) {
      gc_opts.seed = seed;
      bool ok = true;
      for (const auto& r : check::run_gradient_suite(gc_opts)) {
        const bool pass = r.max_rel_error < gc_tol;
        ok = ok && pass;
        out << (pass ? "PASS " : "FAIL ") << r.name << " max_rel_error=" << r.max_rel_error
            << " params=" << r.parameters << '\n';
      }
      return ok ? 0 : 1;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const UnknownBlockName& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace sempos
