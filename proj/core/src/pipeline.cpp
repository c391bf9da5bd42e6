#include "dpr/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "dpr/checkpoint.hpp"
#include "dpr/error.hpp"
#include "dpr/hashing.hpp"
#include "dpr/index.hpp"
#include "seeds.hpp"
#include "text_io.hpp"

namespace fs = std::filesystem;

namespace dpr {

// ---------------------------------------------------------------------------
// Configuration

PipelineConfig::PipelineConfig() {
  // A 1:4 cross-encoder sample memorizes the few labeled pairs; 1:1 keeps its
  // scores calibrated enough for the 0.1 filter.
  step2.negative_ratio = 1;
  for (auto* step : {&step3, &step4}) {
    step->hard_negatives = 2;
    // Same-topic questions in one batch hold each other's positives among
    // their hard negatives, so each question only sees its own.
    step->share_hard_negatives = false;
  }
}

void PipelineConfig::validate() const {
  if (!data) {
    synthetic.validate();
    if (synthetic.vocab_size != dual_shape.vocab_size) {
      throw Error("synthetic.vocab_size must equal model.vocab_size");
    }
  } else if (data->collection.empty() || data->questions.empty() || data->qrels.empty()) {
    throw Error("data.collection, data.questions and data.qrels are required");
  }
  if (dual_shape.vocab_size != cross_shape.vocab_size) {
    throw Error("dual and cross encoders must share the vocabulary size");
  }
  step1.validate();
  step2.validate();
  step3.validate();
  step4.validate();
  mining.validate();
  if (step1.hard_negatives != 0) throw Error("step1 trains without hard negatives");
  if (step2_pool_depth == 0) throw Error("step2.pool_depth must be at least 1");
  if (eval_depth == 0) throw Error("eval_depth must be at least 1");
  if (last_step < 1 || last_step > 4) throw Error("steps must be between 1 and 4");
  parse_metric_specs(metrics);
}

namespace {

void put_train(std::map<std::string, std::string>& out, const std::string& p, const TrainConfig& c) {
  out[p + "epochs"] = std::to_string(c.epochs);
  out[p + "batch_size"] = std::to_string(c.batch_size);
  out[p + "workers"] = std::to_string(c.workers);
  out[p + "learning_rate"] = detail::format_double(c.learning_rate);
  out[p + "warmup_fraction"] = detail::format_double(c.warmup_fraction);
  out[p + "hard_negatives"] = std::to_string(c.hard_negatives);
  out[p + "seed"] = std::to_string(c.seed);
  out[p + "mode"] = to_string(c.mode);
  out[p + "share_hard_negatives"] = c.share_hard_negatives ? "true" : "false";
  out[p + "max_steps"] = std::to_string(c.max_steps);
}

}  // namespace

std::string PipelineConfig::canonical() const {
  std::map<std::string, std::string> kv;
  if (data) {
    auto file_id = [](const std::string& path) {
      return path.empty() ? std::string("-") : to_hex(sha256_file(path));
    };
    kv["data.collection"] = file_id(data->collection);
    kv["data.questions"] = file_id(data->questions);
    kv["data.qrels"] = file_id(data->qrels);
    kv["data.unlabeled"] = file_id(data->unlabeled);
    kv["data.test_questions"] = file_id(data->test_questions);
    kv["data.test_qrels"] = file_id(data->test_qrels);
  } else {
    const auto& s = synthetic;
    kv["synthetic.seed"] = std::to_string(s.seed);
    kv["synthetic.num_topics"] = std::to_string(s.num_topics);
    kv["synthetic.passages_per_topic"] = std::to_string(s.passages_per_topic);
    kv["synthetic.questions_per_topic"] = std::to_string(s.questions_per_topic);
    kv["synthetic.unlabeled_question_count"] = std::to_string(s.unlabeled_question_count);
    kv["synthetic.test_questions_per_topic"] = std::to_string(s.test_questions_per_topic);
    kv["synthetic.vocab_size"] = std::to_string(s.vocab_size);
    kv["synthetic.tokens_per_passage"] = std::to_string(s.tokens_per_passage);
    kv["synthetic.tokens_per_question"] = std::to_string(s.tokens_per_question);
    kv["synthetic.unlabeled_positive_fraction"] = detail::format_double(s.unlabeled_positive_fraction);
    kv["synthetic.terms_per_block"] = std::to_string(s.terms_per_block);
    kv["synthetic.generic_terms"] = std::to_string(s.generic_terms);
    kv["synthetic.noise_rate"] = detail::format_double(s.noise_rate);
    kv["synthetic.key_rate"] = detail::format_double(s.key_rate);
  }
  kv["model.vocab_size"] = std::to_string(dual_shape.vocab_size);
  kv["model.embedding_dim"] = std::to_string(dual_shape.embedding_dim);
  kv["model.output_dim"] = std::to_string(dual_shape.output_dim);
  kv["model.cross_embedding_dim"] = std::to_string(cross_shape.embedding_dim);
  kv["model.hidden_dim"] = std::to_string(cross_shape.hidden_dim);
  put_train(kv, "step1.", step1);
  kv["step2.epochs"] = std::to_string(step2.epochs);
  kv["step2.batch_size"] = std::to_string(step2.batch_size);
  kv["step2.learning_rate"] = detail::format_double(step2.learning_rate);
  kv["step2.warmup_fraction"] = detail::format_double(step2.warmup_fraction);
  kv["step2.negative_ratio"] = std::to_string(step2.negative_ratio);
  kv["step2.seed"] = std::to_string(step2.seed);
  kv["step2.pool_depth"] = std::to_string(step2_pool_depth);
  put_train(kv, "step3.", step3);
  put_train(kv, "step4.", step4);
  kv["mining.top_k"] = std::to_string(mining.top_k);
  kv["mining.negative_threshold"] = detail::format_double(mining.negative_threshold);
  kv["mining.positive_threshold"] = detail::format_double(mining.positive_threshold);
  kv["mining.seed"] = std::to_string(mining.seed);
  kv["mining.max_negatives"] = std::to_string(mining.max_negatives);
  kv["mining.bucket_width"] = std::to_string(mining.bucket_width);
  kv["seed"] = std::to_string(seed);
  kv["warm_start"] = warm_start ? "true" : "false";
  kv["metrics"] = metrics;
  kv["eval_depth"] = std::to_string(eval_depth);

  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

std::string PipelineConfig::fingerprint() const {
  return to_hex(sha256(canonical())).substr(0, 16);
}

PipelineConfig pipeline_config_from(KeyValueConfig& kv, PipelineConfig c) {
  if (auto v = kv.take_u64("seed")) c.seed = *v;
  if (auto v = kv.take_string("out_dir")) c.out_dir = *v;
  if (auto v = kv.take_u64("steps")) c.last_step = *v;
  if (auto v = kv.take_bool("warm_start")) c.warm_start = *v;
  if (auto v = kv.take_string("metrics")) c.metrics = *v;
  if (auto v = kv.take_u64("eval_depth")) c.eval_depth = *v;
  if (auto v = kv.take_u64("step2.pool_depth")) c.step2_pool_depth = *v;

  DataPaths paths;
  bool any_path = false;
  auto path = [&](const char* key, std::string& field) {
    if (auto v = kv.take_string(key)) {
      field = *v;
      any_path = true;
    }
  };
  path("data.collection", paths.collection);
  path("data.questions", paths.questions);
  path("data.qrels", paths.qrels);
  path("data.unlabeled", paths.unlabeled);
  path("data.test_questions", paths.test_questions);
  path("data.test_qrels", paths.test_qrels);
  if (any_path) c.data = paths;

  if (auto v = kv.take_u64("model.vocab_size")) {
    c.dual_shape.vocab_size = c.cross_shape.vocab_size = c.synthetic.vocab_size = *v;
  }
  if (auto v = kv.take_u64("model.embedding_dim")) c.dual_shape.embedding_dim = *v;
  if (auto v = kv.take_u64("model.output_dim")) c.dual_shape.output_dim = *v;
  if (auto v = kv.take_u64("model.cross_embedding_dim")) c.cross_shape.embedding_dim = *v;
  if (auto v = kv.take_u64("model.hidden_dim")) c.cross_shape.hidden_dim = *v;

  apply_synthetic_spec(kv, "synthetic.", c.synthetic);
  apply_train_config(kv, "step1.", c.step1);
  apply_cross_config(kv, "step2.", c.step2);
  apply_train_config(kv, "step3.", c.step3);
  apply_train_config(kv, "step4.", c.step4);
  apply_mining_config(kv, "mining.", c.mining);
  kv.require_all_used();
  c.validate();
  return c;
}

PipelineData load_pipeline_data(const PipelineConfig& config) {
  PipelineData d;
  if (!config.data) {
    auto syn = generate_synthetic(config.synthetic);
    d.tokenizer = syn.tokenizer;
    d.collection = std::move(syn.collection);
    d.labeled = std::move(syn.labeled_questions);
    d.qrels = std::move(syn.labeled_qrels);
    d.unlabeled = std::move(syn.unlabeled_questions);
    d.test = std::move(syn.test_questions);
    // Truth rows for the test questions only.
    std::set<QuestionId> test_ids;
    for (const auto& q : d.test) test_ids.insert(q.id);
    for (auto& r : syn.truth) {
      if (test_ids.count(r.question)) d.test_truth.push_back(std::move(r));
    }
    return d;
  }
  const auto& p = *config.data;
  d.tokenizer.vocab_size = config.dual_shape.vocab_size;
  d.collection = load_collection(p.collection, d.tokenizer);
  d.labeled = load_questions(p.questions, d.tokenizer);
  d.qrels = load_qrels(p.qrels, d.collection);
  if (!p.unlabeled.empty()) d.unlabeled = load_questions(p.unlabeled, d.tokenizer);
  if (!p.test_questions.empty()) {
    d.test = load_questions(p.test_questions, d.tokenizer);
    if (p.test_qrels.empty()) throw Error("data.test_questions requires data.test_qrels");
    d.test_truth = load_qrels(p.test_qrels, d.collection);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Shared step implementations

namespace {

std::uint64_t step_seed(std::uint64_t global, std::size_t step, std::uint64_t local) {
  return detail::derive_seed(detail::derive_seed(global, step), local);
}

TrainConfig seeded(TrainConfig c, std::uint64_t global, std::size_t step) {
  c.seed = step_seed(global, step, c.seed);
  return c;
}

CrossTrainConfig seeded(CrossTrainConfig c, std::uint64_t global, std::size_t step) {
  c.seed = step_seed(global, step, c.seed);
  return c;
}

MiningConfig seeded(MiningConfig c, std::uint64_t global) {
  c.seed = step_seed(global, 5, c.seed);
  return c;
}

std::vector<Question> concat(const std::vector<Question>& a, const std::vector<Question>& b) {
  std::vector<Question> out(a);
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

struct Models {
  DualEncoderParams md0, md1, md2;
  CrossEncoderParams mc;
};

DualTrainResult step1_train(const PipelineConfig& cfg, const PipelineData& d) {
  TrainingCorpus corpus(d.collection, d.labeled, to_relevance_map(d.qrels));
  auto sources = make_sources(d.qrels);
  return train_dual(seeded(cfg.step1, cfg.seed, 1), cfg.dual_shape, sources, corpus);
}

NegativeMap step2_pool(const PipelineConfig& cfg, const PipelineData& d, const DualEncoderParams& md0,
                       const FlatIndex& index0) {
  return retrieve_negative_pool(md0, index0, d.labeled, to_relevance_map(d.qrels),
                                cfg.step2_pool_depth);
}

CrossTrainResult step2_train(const PipelineConfig& cfg, const PipelineData& d,
                             const NegativeMap& pool) {
  TrainingCorpus corpus(d.collection, d.labeled, to_relevance_map(d.qrels));
  auto sources = make_sources(d.qrels, pool);
  return train_cross(seeded(cfg.step2, cfg.seed, 2), cfg.cross_shape, sources, corpus);
}

DualTrainResult step3_train(const PipelineConfig& cfg, const PipelineData& d,
                            const NegativeMap& negatives, const DualEncoderParams* init) {
  TrainingCorpus corpus(d.collection, d.labeled, to_relevance_map(d.qrels));
  auto sources = make_sources(d.qrels, negatives);
  return train_dual(seeded(cfg.step3, cfg.seed, 3), cfg.dual_shape, sources, corpus, init);
}

DualTrainResult step4_train(const PipelineConfig& cfg, const PipelineData& d,
                            const NegativeMap& negatives,
                            const std::vector<AugmentedExample>& augmented,
                            const DualEncoderParams* init) {
  auto all_questions = concat(d.labeled, d.unlabeled);
  auto qrels = d.qrels;
  auto extra = augmented_qrels(augmented);
  qrels.insert(qrels.end(), extra.begin(), extra.end());
  TrainingCorpus corpus(d.collection, all_questions, to_relevance_map(qrels));
  auto sources = make_sources(d.qrels, negatives);
  auto aug_sources = augmented_sources(augmented);
  sources.insert(sources.end(), aug_sources.begin(), aug_sources.end());
  return train_dual(seeded(cfg.step4, cfg.seed, 4), cfg.dual_shape, sources, corpus, init);
}

std::vector<EvalReport> evaluate_model(const PipelineConfig& cfg, const PipelineData& d,
                                       const DualEncoderParams& model, const FlatIndex& index,
                                       std::vector<RunResult>* runs_out = nullptr) {
  if (d.test.empty()) return {};
  auto runs = search_questions(model, index, d.test, cfg.eval_depth);
  auto specs = parse_metric_specs(cfg.metrics);
  auto reports = evaluate(runs, to_relevance_map(d.test_truth), specs);
  if (runs_out) *runs_out = std::move(runs);
  return reports;
}

// ---------------------------------------------------------------------------
// Run directory bookkeeping

class RunLock {
 public:
  explicit RunLock(fs::path path) : path_(std::move(path)) {
    int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
      if (errno == EEXIST) {
        throw Error("run directory is locked by another pipeline (" + path_.string() + ")");
      }
      throw Error("cannot create lock " + path_.string() + ": " + std::strerror(errno));
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
  }
  ~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  fs::path path_;
};

/// artifact<TAB>sha256 lines, rewritten atomically after every step.
class Manifest {
 public:
  explicit Manifest(fs::path dir) : dir_(std::move(dir)) {
    const auto path = dir_ / PipelineFiles::kManifest;
    if (!fs::exists(path)) return;
    detail::for_each_line(path.string(), [&](std::size_t no, std::string_view line) {
      auto f = detail::split(line, '\t');
      if (f.size() != 2) throw ParseError(path.string(), no, "expected artifact<TAB>sha256");
      entries_[std::string(f[0])] = std::string(f[1]);
    });
  }

  /// True when every artifact is recorded and its file still hashes the same.
  bool valid(const std::vector<std::string>& names) const {
    for (const auto& n : names) {
      auto it = entries_.find(n);
      if (it == entries_.end()) return false;
      const auto path = dir_ / n;
      if (!fs::exists(path) || to_hex(sha256_file(path.string())) != it->second) return false;
    }
    return true;
  }

  /// Throws unless the artifact matches its recorded digest.
  void require(const std::string& name) const {
    if (!valid({name})) throw Error("artifact " + name + " does not match the run manifest");
  }

  void record(const std::vector<std::string>& names) {
    for (const auto& n : names) entries_[n] = to_hex(sha256_file((dir_ / n).string()));
    save();
  }

  void forget(const std::vector<std::string>& names) {
    for (const auto& n : names) entries_.erase(n);
    save();
  }

 private:
  void save() const {
    const auto tmp = dir_ / (std::string(PipelineFiles::kManifest) + ".tmp");
    {
      auto out = detail::open_output(tmp.string());
      for (const auto& [n, h] : entries_) out << n << '\t' << h << '\n';
      detail::finish_output(out, tmp.string());
    }
    fs::rename(tmp, dir_ / PipelineFiles::kManifest);
  }

  fs::path dir_;
  std::map<std::string, std::string> entries_;
};

std::vector<std::string> model_artifacts(const std::string& name, bool with_eval) {
  std::vector<std::string> out{name + ".ckpt", name + ".loss.tsv", name + ".index"};
  if (with_eval) {
    out.push_back(name + ".run.tsv");
    out.push_back(name + ".report.tsv");
  }
  return out;
}

std::vector<std::string> step_artifacts(std::size_t step, bool with_eval) {
  std::vector<std::string> out;
  switch (step) {
    case 1:
      out = model_artifacts("md0", with_eval);
      break;
    case 2:
      out = {PipelineFiles::kStep2Pool, "mc.ckpt", "mc.loss.tsv"};
      break;
    case 3:
      out = {PipelineFiles::kHardNegatives, PipelineFiles::kDenoiseReport};
      for (auto& a : model_artifacts("md1", with_eval)) out.push_back(a);
      break;
    case 4:
      out = {PipelineFiles::kAugmented};
      for (auto& a : model_artifacts("md2", with_eval)) out.push_back(a);
      if (with_eval) {
        out.push_back(PipelineFiles::kFinalRun);
        out.push_back(PipelineFiles::kFinalReport);
      }
      break;
  }
  return out;
}

const char* step_name(std::size_t step) {
  switch (step) {
    case 1: return "step 1 (dual encoder, cross-batch negatives)";
    case 2: return "step 2 (cross encoder)";
    case 3: return "step 3 (denoised hard negatives)";
    default: return "step 4 (data augmentation)";
  }
}

struct RunContext {
  const PipelineConfig& cfg;
  const PipelineData& data;
  fs::path dir;
  Manifest& manifest;

  std::string at(const std::string& name) const { return (dir / name).string(); }

  /// Saves a dual encoder with its loss log, index and test evaluation.
  std::vector<EvalReport> persist_model(const std::string& name, const DualTrainResult& trained) {
    save_checkpoint(at(name + ".ckpt"), trained.params);
    write_loss_log(at(name + ".loss.tsv"), trained.log);
    auto index = build_index(trained.params, data.collection);
    save_index(index, at(name + ".index"));
    std::vector<RunResult> runs;
    auto reports = evaluate_model(cfg, data, trained.params, index, &runs);
    if (!data.test.empty()) {
      write_run(at(name + ".run.tsv"), runs);
      write_report(at(name + ".report.tsv"), reports);
    }
    return reports;
  }

  DualEncoderParams load_dual(const std::string& name) const {
    manifest.require(name + ".ckpt");
    return load_dual_checkpoint(at(name + ".ckpt"));
  }

  /// Reports of a completed model, recomputed from its validated run file.
  std::vector<EvalReport> stored_reports(const std::string& name) const {
    if (data.test.empty()) return {};
    manifest.require(name + ".run.tsv");
    auto runs = load_run(at(name + ".run.tsv"));
    return evaluate(runs, to_relevance_map(data.test_truth), parse_metric_specs(cfg.metrics));
  }
};

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config) {
  config.validate();
  const auto data = load_pipeline_data(config);
  if (config.last_step >= 4 && data.unlabeled.empty()) {
    throw Error("step 4 needs unlabeled questions");
  }

  const fs::path dir = fs::path(config.out_dir) / ("run-" + config.fingerprint());
  fs::create_directories(dir);
  RunLock lock(dir / PipelineFiles::kLock);
  Manifest manifest(dir);
  RunContext ctx{config, data, dir, manifest};
  const bool with_eval = !data.test.empty();

  {
    auto out = detail::open_output(ctx.at(PipelineFiles::kConfig));
    out << config.canonical();
    detail::finish_output(out, ctx.at(PipelineFiles::kConfig));
  }
  if (!config.data) {
    SyntheticDataset syn = generate_synthetic(config.synthetic);
    write_synthetic((dir / PipelineFiles::kDataDir).string(), syn);
  }

  PipelineResult result;
  result.run_dir = dir.string();
  Models m;
  bool redo = false;  // once a step reruns, every later step reruns too

  for (std::size_t step = 1; step <= config.last_step; ++step) {
    const auto artifacts = step_artifacts(step, with_eval);
    const bool skip = !redo && manifest.valid(artifacts);
    try {
      if (!skip) {
        redo = true;
        for (std::size_t later = step; later <= 4; ++later) {
          manifest.forget(step_artifacts(later, with_eval));
        }
      }
      switch (step) {
        case 1: {
          if (skip) {
            m.md0 = ctx.load_dual("md0");
            result.reports["md0"] = ctx.stored_reports("md0");
          } else {
            auto trained = step1_train(config, data);
            m.md0 = trained.params;
            result.reports["md0"] = ctx.persist_model("md0", trained);
          }
          break;
        }
        case 2: {
          if (skip) {
            manifest.require("mc.ckpt");
            m.mc = load_cross_checkpoint(ctx.at("mc.ckpt"));
          } else {
            auto index0 = build_index(m.md0, data.collection);
            auto pool = step2_pool(config, data, m.md0, index0);
            write_negatives(ctx.at(PipelineFiles::kStep2Pool), pool);
            auto trained = step2_train(config, data, pool);
            m.mc = trained.params;
            save_checkpoint(ctx.at("mc.ckpt"), m.mc);
            write_loss_log(ctx.at("mc.loss.tsv"), trained.log);
          }
          break;
        }
        case 3: {
          if (skip) {
            m.md1 = ctx.load_dual("md1");
            result.reports["md1"] = ctx.stored_reports("md1");
          } else {
            auto index0 = build_index(m.md0, data.collection);
            auto mined = mine_hard_negatives(m.md0, index0, m.mc, data.labeled,
                                             to_relevance_map(data.qrels), data.collection,
                                             seeded(config.mining, config.seed));
            write_negatives(ctx.at(PipelineFiles::kHardNegatives), mined.negatives);
            write_denoise_report(ctx.at(PipelineFiles::kDenoiseReport), mined.report);
            auto trained =
                step3_train(config, data, mined.negatives, config.warm_start ? &m.md0 : nullptr);
            m.md1 = trained.params;
            result.reports["md1"] = ctx.persist_model("md1", trained);
          }
          break;
        }
        case 4: {
          if (skip) {
            m.md2 = ctx.load_dual("md2");
            result.reports["md2"] = ctx.stored_reports("md2");
          } else {
            manifest.require(PipelineFiles::kHardNegatives);
            auto negatives = load_negatives(ctx.at(PipelineFiles::kHardNegatives));
            auto index1 = build_index(m.md1, data.collection);
            auto augmented = pseudo_label(m.md1, index1, m.mc, data.unlabeled, data.collection,
                                          seeded(config.mining, config.seed));
            write_augmented(ctx.at(PipelineFiles::kAugmented), augmented);
            auto trained = step4_train(config, data, negatives, augmented,
                                       config.warm_start ? &m.md1 : nullptr);
            m.md2 = trained.params;
            result.reports["md2"] = ctx.persist_model("md2", trained);
            if (with_eval) {
              fs::copy_file(dir / "md2.run.tsv", dir / PipelineFiles::kFinalRun,
                            fs::copy_options::overwrite_existing);
              fs::copy_file(dir / "md2.report.tsv", dir / PipelineFiles::kFinalReport,
                            fs::copy_options::overwrite_existing);
            }
          }
          break;
        }
      }
    } catch (const std::exception& e) {
      throw Error(std::string(step_name(step)) + " failed: " + e.what());
    }
    if (skip) {
      result.skipped_steps.push_back(step);
    } else {
      manifest.record(artifacts);
      result.executed_steps.push_back(step);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Ablation

double median(std::vector<double> values) {
  if (values.empty()) throw Error("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double false_negative_rate(const NegativeMap& negatives, const RelevanceMap& truth) {
  std::size_t total = 0;
  std::size_t hidden = 0;
  for (const auto& [q, ids] : negatives) {
    for (auto p : ids) {
      ++total;
      if (is_labeled_positive(truth, q, p)) ++hidden;
    }
  }
  return total ? static_cast<double>(hidden) / static_cast<double>(total) : 0.0;
}

const AblationRow& AblationReport::row(const std::string& strategy,
                                       const std::string& setting) const {
  for (const auto& r : rows) {
    if (r.strategy == strategy && r.setting == setting) return r;
  }
  throw Error("ablation report has no row " + strategy + (setting.empty() ? "" : " " + setting));
}

namespace {

struct SeedOutcome {
  std::map<std::pair<std::string, std::string>, double> metric;
  std::map<std::string, double> fn_rate;
};

SeedOutcome ablate_seed(const AblationConfig& ac, std::uint64_t seed) {
  PipelineConfig cfg = ac.base;
  cfg.seed = seed;
  cfg.synthetic.seed = detail::derive_seed(ac.base.synthetic.seed, seed);
  cfg.validate();
  const auto data = load_pipeline_data(cfg);
  const auto labels = to_relevance_map(data.qrels);
  const auto truth_all = [&] {
    auto syn = generate_synthetic(cfg.synthetic);
    return to_relevance_map(syn.truth);
  }();
  const std::vector<MetricSpec> spec{ac.metric};

  SeedOutcome out;
  auto score = [&](const DualEncoderParams& model) {
    auto index = build_index(model, data.collection);
    auto runs = search_questions(model, index, data.test, std::max(cfg.eval_depth, ac.metric.k));
    return evaluate(runs, to_relevance_map(data.test_truth), ac.metric).mean;
  };
  auto put = [&](const std::string& strategy, const std::string& setting, double v) {
    out.metric[{strategy, setting}] = v;
  };

  // Step 1 and its in-batch counterpart with the same per-worker batch.
  auto md0 = step1_train(cfg, data).params;
  put(AblationStrategies::kCrossBatch, "", score(md0));
  {
    PipelineConfig in_batch = cfg;
    in_batch.step1.mode = NegativeMode::in_batch;
    put(AblationStrategies::kInBatch, "", score(step1_train(in_batch, data).params));
  }

  auto index0 = build_index(md0, data.collection);
  auto pool = step2_pool(cfg, data, md0, index0);
  auto mc = step2_train(cfg, data, pool).params;

  const auto mining = seeded(cfg.mining, cfg.seed);
  auto denoised = mine_hard_negatives(md0, index0, mc, data.labeled, labels, data.collection, mining);
  auto noisy = select_undenoised_negatives(md0, index0, data.labeled, labels, mining);
  out.fn_rate[AblationStrategies::kHardDenoised] = false_negative_rate(denoised.negatives, truth_all);
  out.fn_rate[AblationStrategies::kHardNoisy] = false_negative_rate(noisy.negatives, truth_all);

  const DualEncoderParams* warm = cfg.warm_start ? &md0 : nullptr;
  put(AblationStrategies::kHardNoisy, "", score(step3_train(cfg, data, noisy.negatives, warm).params));
  auto md1 = step3_train(cfg, data, denoised.negatives, warm).params;
  put(AblationStrategies::kHardDenoised, "", score(md1));

  auto index1 = build_index(md1, data.collection);
  auto augmented = pseudo_label(md1, index1, mc, data.unlabeled, data.collection, mining);
  const DualEncoderParams* warm1 = cfg.warm_start ? &md1 : nullptr;
  put(AblationStrategies::kAugmentation, "",
      score(step4_train(cfg, data, denoised.negatives, augmented, warm1).params));

  for (auto workers : ac.worker_sweep) {
    PipelineConfig sweep = cfg;
    sweep.step1.workers = workers;
    sweep.step1.max_steps = ac.sweep_steps;
    const auto negatives = workers * sweep.step1.batch_size - 1;
    put(AblationStrategies::kNegativeSweep, "negatives=" + std::to_string(negatives),
        score(step1_train(sweep, data).params));
  }

  if (!ac.augmentation_sweep.empty()) {
    std::vector<std::size_t> order(augmented.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(detail::derive_seed(cfg.seed, 6));
    std::shuffle(order.begin(), order.end(), rng);
    for (double fraction : ac.augmentation_sweep) {
      const auto n = static_cast<std::size_t>(
          std::llround(fraction * static_cast<double>(augmented.size())));
      std::vector<AugmentedExample> subset;
      for (std::size_t i = 0; i < n; ++i) subset.push_back(augmented[order[i]]);
      std::sort(subset.begin(), subset.end(), [](const auto& a, const auto& b) {
        return a.question < b.question;
      });
      put(AblationStrategies::kAugmentationSweep, "fraction=" + detail::format_double(fraction),
          score(step4_train(cfg, data, denoised.negatives, subset, warm1).params));
    }
  }
  return out;
}

}  // namespace

AblationReport run_ablation(const AblationConfig& config) {
  if (config.seeds.empty()) throw Error("ablation needs at least one seed");
  if (config.base.data) throw Error("ablation runs on synthetic data only");
  for (double f : config.augmentation_sweep) {
    if (!(f >= 0.0 && f <= 1.0)) throw Error("augmentation fractions must be in [0,1]");
  }
  for (auto a : config.worker_sweep) {
    if (a == 0) throw Error("worker sweep values must be positive");
  }

  std::vector<SeedOutcome> outcomes(config.seeds.size());
  std::vector<std::exception_ptr> errors(config.seeds.size());
  {
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < config.seeds.size(); ++i) {
      threads.emplace_back([&, i] {
        try {
          outcomes[i] = ablate_seed(config, config.seeds[i]);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    }
    for (auto& t : threads) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  AblationReport report;
  report.metric = config.metric;
  std::vector<std::pair<std::string, std::string>> keys{
      {AblationStrategies::kInBatch, ""},
      {AblationStrategies::kCrossBatch, ""},
      {AblationStrategies::kHardNoisy, ""},
      {AblationStrategies::kHardDenoised, ""},
      {AblationStrategies::kAugmentation, ""}};
  for (const auto& [key, value] : outcomes.front().metric) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
  }
  for (const auto& key : keys) {
    AblationRow row{key.first, key.second, {}, 0.0, std::nullopt};
    std::vector<double> fn;
    for (const auto& o : outcomes) {
      row.values.push_back(o.metric.at(key));
      if (key.second.empty()) {
        if (auto it = o.fn_rate.find(key.first); it != o.fn_rate.end()) fn.push_back(it->second);
      }
    }
    row.median = median(row.values);
    if (!fn.empty()) row.false_negative_rate = median(fn);
    report.rows.push_back(std::move(row));
  }
  return report;
}

void write_ablation_report(const std::string& path, const AblationReport& report) {
  auto out = detail::open_output(path);
  const std::string metric = to_string(report.metric.metric) + "@" + std::to_string(report.metric.k);
  for (const auto& r : report.rows) {
    out << r.strategy << '\t' << (r.setting.empty() ? "-" : r.setting) << '\t' << metric << '\t'
        << detail::format_double(r.median) << '\t'
        << (r.false_negative_rate ? detail::format_double(*r.false_negative_rate) : "-") << '\t';
    for (std::size_t i = 0; i < r.values.size(); ++i) {
      if (i) out << ',';
      out << detail::format_double(r.values[i]);
    }
    out << '\n';
  }
  detail::finish_output(out, path);
}

}  // namespace dpr
