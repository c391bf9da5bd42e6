// dpr: command-line front end for the dense retrieval library.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dpr/checkpoint.hpp"
#include "dpr/config.hpp"
#include "dpr/corpus.hpp"
#include "dpr/error.hpp"
#include "dpr/eval.hpp"
#include "dpr/index.hpp"
#include "dpr/mining.hpp"
#include "dpr/pipeline.hpp"
#include "dpr/synthetic.hpp"
#include "dpr/training.hpp"

namespace fs = std::filesystem;

namespace {

/// Flags that map onto config keys. Values are kept as strings, validated by
/// CLI11, and written over file values after parsing.
class Overrides {
 public:
  CLI::Option* add(CLI::App* app, const std::string& flag, const std::string& key,
                   const std::string& help) {
    auto& slot = values_[key];
    auto* opt = app->add_option(flag, slot.value, help);
    slot.option = opt;
    return opt;
  }

  void apply(dpr::KeyValueConfig& kv) const {
    for (const auto& [key, slot] : values_) {
      if (slot.option->count() > 0) kv.set(key, slot.value);
    }
  }

 private:
  struct Slot {
    std::string value;
    CLI::Option* option = nullptr;
  };
  std::map<std::string, Slot> values_;
};

dpr::KeyValueConfig load_config(const std::string& path) {
  return path.empty() ? dpr::KeyValueConfig{} : dpr::KeyValueConfig::load(path);
}

/// Parses repeated --set key=value arguments.
void apply_sets(dpr::KeyValueConfig& kv, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw dpr::Error("--set expects key=value, got '" + s + "'");
    kv.set(s.substr(0, eq), s.substr(eq + 1));
  }
}

dpr::TokenizerConfig tokenizer_for(std::size_t vocab) {
  dpr::TokenizerConfig tok;
  tok.vocab_size = vocab;
  return tok;
}

void add_train_flags(CLI::App* cmd, Overrides& o) {
  o.add(cmd, "--epochs", "epochs", "Training epochs")->check(CLI::PositiveNumber);
  o.add(cmd, "--batch-size", "batch_size", "Questions per worker (B)")->check(CLI::PositiveNumber);
  o.add(cmd, "--workers", "workers", "Simulated data-parallel workers (A)")->check(CLI::PositiveNumber);
  o.add(cmd, "--lr", "learning_rate", "Peak learning rate")->check(CLI::PositiveNumber);
  o.add(cmd, "--warmup", "warmup_fraction", "Warmup fraction of total steps")->check(CLI::Range(0.0, 1.0));
  o.add(cmd, "--hard-negatives", "hard_negatives", "Hard negatives per positive (h in 1:h)")
      ->check(CLI::NonNegativeNumber);
  o.add(cmd, "--hard-negative-ratio", "hard_negative_ratio", "Positive to hard-negative ratio, e.g. 1:4");
  o.add(cmd, "--seed", "seed", "Random seed")->check(CLI::NonNegativeNumber);
  o.add(cmd, "--mode", "mode", "Negative sharing: in_batch or cross_batch")
      ->check(CLI::IsMember({"in_batch", "cross_batch"}));
  o.add(cmd, "--share-hard-negatives", "share_hard_negatives",
        "Include other questions' hard negatives (true/false)");
  o.add(cmd, "--max-steps", "max_steps", "Fixed step budget (0 = epochs)")->check(CLI::NonNegativeNumber);
}

void add_cross_flags(CLI::App* cmd, Overrides& o) {
  o.add(cmd, "--epochs", "epochs", "Training epochs")->check(CLI::PositiveNumber);
  o.add(cmd, "--batch-size", "batch_size", "Pairs per step")->check(CLI::PositiveNumber);
  o.add(cmd, "--lr", "learning_rate", "Peak learning rate")->check(CLI::PositiveNumber);
  o.add(cmd, "--warmup", "warmup_fraction", "Warmup fraction of total steps")->check(CLI::Range(0.0, 1.0));
  o.add(cmd, "--negative-ratio", "negative_ratio", "Positive to negative ratio, e.g. 1:4");
  o.add(cmd, "--seed", "seed", "Random seed")->check(CLI::NonNegativeNumber);
}

void add_mining_flags(CLI::App* cmd, Overrides& o) {
  o.add(cmd, "--top-k", "top_k", "Retrieval depth")->check(CLI::PositiveNumber);
  o.add(cmd, "--negative-threshold", "negative_threshold", "Cross score below which a passage is negative")
      ->check(CLI::Range(0.0, 1.0));
  o.add(cmd, "--positive-threshold", "positive_threshold", "Cross score above which a passage is positive")
      ->check(CLI::Range(0.0, 1.0));
  o.add(cmd, "--seed", "seed", "Sampling seed")->check(CLI::NonNegativeNumber);
  o.add(cmd, "--max-negatives", "max_negatives", "Per-question cap (0 = keep all)")
      ->check(CLI::NonNegativeNumber);
  o.add(cmd, "--bucket-width", "bucket_width", "Rank bucket width of the denoise report")
      ->check(CLI::PositiveNumber);
}

void add_dual_shape_flags(CLI::App* cmd, Overrides& o) {
  o.add(cmd, "--vocab-size", "vocab_size", "Hashed vocabulary size")->check(CLI::Range(2, 1 << 30));
  o.add(cmd, "--embedding-dim", "embedding_dim", "Token embedding width")->check(CLI::PositiveNumber);
  o.add(cmd, "--output-dim", "output_dim", "Output vector width d")->check(CLI::PositiveNumber);
}

void add_cross_shape_flags(CLI::App* cmd, Overrides& o) {
  o.add(cmd, "--vocab-size", "vocab_size", "Hashed vocabulary size")->check(CLI::Range(2, 1 << 30));
  o.add(cmd, "--embedding-dim", "embedding_dim", "Token embedding width")->check(CLI::PositiveNumber);
  o.add(cmd, "--hidden-dim", "hidden_dim", "Hidden layer width")->check(CLI::PositiveNumber);
}

std::string sidecar_path(const std::string& index_path) { return index_path + ".encoder"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense passage retrieval: training, mining, search and evaluation"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus with planted false negatives");
  std::string gen_out, gen_config;
  Overrides gen_o;
  gen->add_option("--out-dir", gen_out, "Output directory")->required();
  gen->add_option("--config", gen_config, "key=value file (synthetic.* keys without prefix)");
  gen_o.add(gen, "--seed", "seed", "Generator seed")->check(CLI::NonNegativeNumber);
  gen_o.add(gen, "--topics", "num_topics", "Number of topics")->check(CLI::PositiveNumber);
  gen_o.add(gen, "--passages-per-topic", "passages_per_topic", "Passages per topic")
      ->check(CLI::PositiveNumber);
  gen_o.add(gen, "--questions-per-topic", "questions_per_topic", "Labeled questions per topic")
      ->check(CLI::PositiveNumber);
  gen_o.add(gen, "--unlabeled", "unlabeled_question_count", "Unlabeled questions")
      ->check(CLI::PositiveNumber);
  gen_o.add(gen, "--test-per-topic", "test_questions_per_topic", "Held-out questions per topic")
      ->check(CLI::PositiveNumber);
  gen_o.add(gen, "--rho", "unlabeled_positive_fraction", "Share of each topic's passages that are relevant")
      ->check(CLI::Range(0.0, 1.0));
  gen_o.add(gen, "--vocab-size", "vocab_size", "Hashed vocabulary size")->check(CLI::Range(2, 1 << 30));

  // train-dual
  auto* td = app.add_subcommand("train-dual", "Train the dual encoder with contrastive loss");
  std::string td_collection, td_questions, td_qrels, td_negatives, td_out, td_log, td_config, td_init;
  Overrides td_o;
  td->add_option("--collection", td_collection, "Passage file")->required();
  td->add_option("--questions", td_questions, "Question file")->required();
  td->add_option("--qrels", td_qrels, "Labeled positives")->required();
  td->add_option("--negatives", td_negatives, "Hard-negative file");
  td->add_option("--out", td_out, "Output checkpoint")->required();
  td->add_option("--loss-log", td_log, "Per-step loss log");
  td->add_option("--config", td_config, "key=value file");
  td->add_option("--init", td_init, "Warm-start checkpoint");
  add_train_flags(td, td_o);
  add_dual_shape_flags(td, td_o);

  // train-cross
  auto* tc = app.add_subcommand("train-cross", "Train the cross encoder with binary cross-entropy");
  std::string tc_collection, tc_questions, tc_qrels, tc_negatives, tc_out, tc_log, tc_config;
  Overrides tc_o;
  tc->add_option("--collection", tc_collection, "Passage file")->required();
  tc->add_option("--questions", tc_questions, "Question file")->required();
  tc->add_option("--qrels", tc_qrels, "Labeled positives")->required();
  tc->add_option("--negatives", tc_negatives, "Negative pool file")->required();
  tc->add_option("--out", tc_out, "Output checkpoint")->required();
  tc->add_option("--loss-log", tc_log, "Per-step loss log");
  tc->add_option("--config", tc_config, "key=value file");
  add_cross_flags(tc, tc_o);
  add_cross_shape_flags(tc, tc_o);

  // build-index
  auto* bi = app.add_subcommand("build-index", "Encode every passage into a flat index");
  std::string bi_ckpt, bi_collection, bi_out;
  bi->add_option("--checkpoint", bi_ckpt, "Dual-encoder checkpoint")->required();
  bi->add_option("--collection", bi_collection, "Passage file")->required();
  bi->add_option("--out", bi_out, "Index file (the encoder is copied to <out>.encoder)")->required();

  // search
  auto* se = app.add_subcommand("search", "Retrieve the top-k passages for each question");
  std::string se_index, se_questions, se_out, se_ckpt;
  std::size_t se_k = 10;
  se->add_option("--index", se_index, "Index file")->required();
  se->add_option("--questions", se_questions, "Question file")->required();
  se->add_option("--k", se_k, "Results per question")->required()->check(CLI::PositiveNumber);
  se->add_option("--out", se_out, "Run file")->required();
  se->add_option("--checkpoint", se_ckpt, "Dual-encoder checkpoint (default <index>.encoder)");

  // mine-negatives
  auto* mn = app.add_subcommand("mine-negatives", "Mine hard negatives, denoised by the cross encoder");
  std::string mn_retriever, mn_cross, mn_collection, mn_questions, mn_qrels, mn_out, mn_report,
      mn_config;
  bool mn_no_denoise = false;
  Overrides mn_o;
  mn->add_option("--retriever", mn_retriever, "Dual-encoder checkpoint")->required();
  mn->add_option("--cross", mn_cross, "Cross-encoder checkpoint");
  mn->add_flag("--no-denoise", mn_no_denoise, "Skip the cross-encoder filter");
  mn->add_option("--collection", mn_collection, "Passage file")->required();
  mn->add_option("--questions", mn_questions, "Labeled questions")->required();
  mn->add_option("--qrels", mn_qrels, "Labeled positives")->required();
  mn->add_option("--out", mn_out, "Hard-negative file")->required();
  mn->add_option("--report", mn_report, "Denoise report file");
  mn->add_option("--config", mn_config, "key=value file");
  add_mining_flags(mn, mn_o);

  // augment
  auto* au = app.add_subcommand("augment", "Pseudo-label unlabeled questions with the cross encoder");
  std::string au_retriever, au_cross, au_collection, au_questions, au_out, au_config;
  Overrides au_o;
  au->add_option("--retriever", au_retriever, "Dual-encoder checkpoint")->required();
  au->add_option("--cross", au_cross, "Cross-encoder checkpoint")->required();
  au->add_option("--collection", au_collection, "Passage file")->required();
  au->add_option("--questions", au_questions, "Unlabeled questions")->required();
  au->add_option("--out", au_out, "Augmented-data file")->required();
  au->add_option("--config", au_config, "key=value file");
  add_mining_flags(au, au_o);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Compute MRR@k and Recall@k for a run file");
  std::string ev_run, ev_qrels, ev_out, ev_metrics = "mrr@10,r@5,r@50,r@100";
  ev->add_option("--run", ev_run, "Run file")->required();
  ev->add_option("--qrels", ev_qrels, "Relevance labels (qrels or truth table)")->required();
  ev->add_option("--metrics", ev_metrics, "Comma-separated metrics, e.g. mrr@10,r@5")
      ->capture_default_str();
  ev->add_option("--out", ev_out, "Report file")->required();

  // pipeline
  auto* pl = app.add_subcommand("pipeline", "Run the four-step training pipeline");
  std::string pl_config, pl_out_dir;
  std::vector<std::string> pl_sets;
  std::size_t pl_steps = 0;
  std::string pl_seed;
  pl->add_option("--config", pl_config, "Pipeline key=value file");
  pl->add_option("--out-dir", pl_out_dir, "Output directory");
  pl->add_option("--steps", pl_steps, "Run steps 1..N")->check(CLI::Range(1, 4));
  pl->add_option("--seed", pl_seed, "Global seed")->check(CLI::NonNegativeNumber);
  pl->add_option("--set", pl_sets, "Override a config key (key=value, repeatable)");

  // ablation
  auto* ab = app.add_subcommand("ablation", "Compare training strategies over several seeds");
  std::string ab_config, ab_out, ab_metric = "mrr@10";
  std::vector<std::string> ab_sets;
  std::vector<std::uint64_t> ab_seeds{1, 2, 3, 4, 5};
  std::vector<std::size_t> ab_workers;
  std::vector<double> ab_fractions;
  std::size_t ab_sweep_steps = 200;
  ab->add_option("--config", ab_config, "Pipeline key=value file");
  ab->add_option("--out", ab_out, "Ablation report file")->required();
  ab->add_option("--seeds", ab_seeds, "Seeds")->delimiter(',')->capture_default_str();
  ab->add_option("--metric", ab_metric, "Metric used for every row")->capture_default_str();
  ab->add_option("--worker-sweep", ab_workers, "Worker counts A for the negative-count sweep")
      ->delimiter(',')
      ->check(CLI::PositiveNumber);
  ab->add_option("--sweep-steps", ab_sweep_steps, "Steps per negative-sweep point")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  ab->add_option("--augmentation-sweep", ab_fractions, "Fractions of the pseudo-labeled data")
      ->delimiter(',')
      ->check(CLI::Range(0.0, 1.0));
  ab->add_option("--set", ab_sets, "Override a config key (key=value, repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "dpr: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*gen) {
      auto kv = load_config(gen_config);
      gen_o.apply(kv);
      dpr::SyntheticSpec spec;
      dpr::apply_synthetic_spec(kv, "", spec);
      kv.require_all_used();
      auto data = dpr::generate_synthetic(spec);
      dpr::write_synthetic(gen_out, data);
      std::cout << "wrote " << data.collection.size() << " passages, "
                << data.labeled_questions.size() << " labeled, " << data.unlabeled_questions.size()
                << " unlabeled and " << data.test_questions.size() << " test questions to "
                << gen_out << "\n";
    } else if (*td) {
      auto kv = load_config(td_config);
      td_o.apply(kv);
      dpr::TrainConfig config;
      dpr::DualEncoderShape shape;
      dpr::apply_train_config(kv, "", config);
      dpr::apply_dual_shape(kv, "", shape);
      kv.require_all_used();
      const auto tok = tokenizer_for(shape.vocab_size);
      auto collection = dpr::load_collection(td_collection, tok);
      auto questions = dpr::load_questions(td_questions, tok);
      auto qrels = dpr::load_qrels(td_qrels, collection);
      dpr::NegativeMap negatives;
      if (!td_negatives.empty()) negatives = dpr::load_negatives(td_negatives);
      dpr::TrainingCorpus corpus(collection, questions, dpr::to_relevance_map(qrels));
      auto sources = dpr::make_sources(qrels, negatives);
      std::optional<dpr::DualEncoderParams> init;
      if (!td_init.empty()) init = dpr::load_dual_checkpoint(td_init);
      auto result = dpr::train_dual(config, shape, sources, corpus, init ? &*init : nullptr);
      dpr::save_checkpoint(td_out, result.params);
      if (!td_log.empty()) dpr::write_loss_log(td_log, result.log);
      std::cout << "trained " << result.log.size() << " steps, final loss "
                << (result.log.empty() ? 0.0 : result.log.back().loss) << "\n";
    } else if (*tc) {
      auto kv = load_config(tc_config);
      tc_o.apply(kv);
      dpr::CrossTrainConfig config;
      dpr::CrossEncoderShape shape;
      dpr::apply_cross_config(kv, "", config);
      dpr::apply_cross_shape(kv, "", shape);
      kv.require_all_used();
      const auto tok = tokenizer_for(shape.vocab_size);
      auto collection = dpr::load_collection(tc_collection, tok);
      auto questions = dpr::load_questions(tc_questions, tok);
      auto qrels = dpr::load_qrels(tc_qrels, collection);
      auto pool = dpr::load_negatives(tc_negatives);
      dpr::TrainingCorpus corpus(collection, questions, dpr::to_relevance_map(qrels));
      auto sources = dpr::make_sources(qrels, pool);
      auto result = dpr::train_cross(config, shape, sources, corpus);
      dpr::save_checkpoint(tc_out, result.params);
      if (!tc_log.empty()) dpr::write_loss_log(tc_log, result.log);
      std::cout << "trained " << result.log.size() << " steps, final loss "
                << (result.log.empty() ? 0.0 : result.log.back().loss) << "\n";
    } else if (*bi) {
      auto params = dpr::load_dual_checkpoint(bi_ckpt);
      auto collection = dpr::load_collection(bi_collection, tokenizer_for(params.shape().vocab_size));
      auto index = dpr::build_index(params, collection);
      dpr::save_index(index, bi_out);
      fs::copy_file(bi_ckpt, sidecar_path(bi_out), fs::copy_options::overwrite_existing);
      std::cout << "indexed " << index.size() << " passages (d=" << index.dim() << ")\n";
    } else if (*se) {
      auto index = dpr::load_index(se_index);
      const auto ckpt = se_ckpt.empty() ? sidecar_path(se_index) : se_ckpt;
      auto params = dpr::load_dual_checkpoint(ckpt);
      if (dpr::checkpoint_fingerprint(params) != index.checkpoint_fingerprint()) {
        throw dpr::Error("checkpoint " + ckpt + " did not produce index " + se_index);
      }
      auto questions = dpr::load_questions(se_questions, tokenizer_for(params.shape().vocab_size));
      auto runs = dpr::search_questions(params, index, questions, se_k);
      dpr::write_run(se_out, runs);
      std::cout << "searched " << runs.size() << " questions\n";
    } else if (*mn) {
      auto kv = load_config(mn_config);
      mn_o.apply(kv);
      dpr::MiningConfig config;
      dpr::apply_mining_config(kv, "", config);
      kv.require_all_used();
      if (mn_cross.empty() != mn_no_denoise) {
        throw dpr::Error("pass exactly one of --cross or --no-denoise");
      }
      auto retriever = dpr::load_dual_checkpoint(mn_retriever);
      const auto tok = tokenizer_for(retriever.shape().vocab_size);
      auto collection = dpr::load_collection(mn_collection, tok);
      auto questions = dpr::load_questions(mn_questions, tok);
      auto labels = dpr::to_relevance_map(dpr::load_qrels(mn_qrels, collection));
      auto index = dpr::build_index(retriever, collection);
      dpr::MiningResult mined;
      if (mn_no_denoise) {
        mined = dpr::select_undenoised_negatives(retriever, index, questions, labels, config);
      } else {
        auto cross = dpr::load_cross_checkpoint(mn_cross);
        mined = dpr::mine_hard_negatives(retriever, index, cross, questions, labels, collection, config);
      }
      dpr::write_negatives(mn_out, mined.negatives);
      if (!mn_report.empty()) dpr::write_denoise_report(mn_report, mined.report);
      std::cout << "mined negatives for " << mined.negatives.size() << " questions ("
                << mined.report.questions_without_negatives << " without any)\n";
    } else if (*au) {
      auto kv = load_config(au_config);
      au_o.apply(kv);
      dpr::MiningConfig config;
      dpr::apply_mining_config(kv, "", config);
      kv.require_all_used();
      auto retriever = dpr::load_dual_checkpoint(au_retriever);
      auto cross = dpr::load_cross_checkpoint(au_cross);
      const auto tok = tokenizer_for(retriever.shape().vocab_size);
      auto collection = dpr::load_collection(au_collection, tok);
      auto questions = dpr::load_questions(au_questions, tok);
      auto index = dpr::build_index(retriever, collection);
      auto examples = dpr::pseudo_label(retriever, index, cross, questions, collection, config);
      dpr::write_augmented(au_out, examples);
      std::cout << "pseudo-labeled " << examples.size() << " of " << questions.size()
                << " questions\n";
    } else if (*ev) {
      auto specs = dpr::parse_metric_specs(ev_metrics);
      auto reports = dpr::evaluate_run(ev_run, ev_qrels, specs, ev_out);
      for (const auto& r : reports) {
        std::cout << dpr::to_string(r.spec.metric) << "@" << r.spec.k << "\t" << r.mean << "\n";
      }
    } else if (*pl) {
      auto kv = load_config(pl_config);
      apply_sets(kv, pl_sets);
      if (!pl_out_dir.empty()) kv.set("out_dir", pl_out_dir);
      if (pl_steps) kv.set("steps", std::to_string(pl_steps));
      if (!pl_seed.empty()) kv.set("seed", pl_seed);
      auto config = dpr::pipeline_config_from(kv);
      auto result = dpr::run_pipeline(config);
      std::cout << "run directory: " << result.run_dir << "\n";
      for (auto s : result.skipped_steps) std::cout << "step " << s << ": up to date\n";
      for (auto s : result.executed_steps) std::cout << "step " << s << ": done\n";
      for (const auto& [model, reports] : result.reports) {
        for (const auto& r : reports) {
          std::cout << model << "\t" << dpr::to_string(r.spec.metric) << "@" << r.spec.k << "\t"
                    << r.mean << "\n";
        }
      }
    } else if (*ab) {
      auto kv = load_config(ab_config);
      apply_sets(kv, ab_sets);
      dpr::AblationConfig config;
      config.base = dpr::pipeline_config_from(kv);
      config.seeds = ab_seeds;
      auto specs = dpr::parse_metric_specs(ab_metric);
      if (specs.size() != 1) throw dpr::Error("--metric takes exactly one metric");
      config.metric = specs.front();
      config.worker_sweep = ab_workers;
      config.sweep_steps = ab_sweep_steps;
      config.augmentation_sweep = ab_fractions;
      auto report = dpr::run_ablation(config);
      dpr::write_ablation_report(ab_out, report);
      for (const auto& r : report.rows) {
        std::cout << r.strategy << (r.setting.empty() ? "" : " " + r.setting) << "\t" << r.median;
        if (r.false_negative_rate) std::cout << "\tfalse negatives " << *r.false_negative_rate;
        std::cout << "\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "dpr: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
