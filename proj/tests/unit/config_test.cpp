#include <gtest/gtest.h>

#include "dpr/config.hpp"
#include "dpr/error.hpp"
#include "dpr/pipeline.hpp"
#include "support.hpp"

namespace dpr {
namespace {

TEST(KeyValueConfig, ParsesTrimsAndSkipsComments) {
  auto kv = KeyValueConfig::parse("# header\n\n  a = 1 \nb=two words\n  # indented comment\nc=\n");
  EXPECT_EQ(kv.values().size(), 3u);
  EXPECT_EQ(kv.take_u64("a"), 1u);
  EXPECT_EQ(kv.take_string("b"), "two words");
  EXPECT_EQ(kv.take_string("c"), "");
  EXPECT_EQ(kv.take_string("missing"), std::nullopt);
  EXPECT_NO_THROW(kv.require_all_used());
}

TEST(KeyValueConfig, ParseErrorsCarryLineNumbers) {
  try {
    KeyValueConfig::parse("a=1\n\nb=2\na=3\n", "f.cfg");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
    EXPECT_NE(std::string(e.what()).find("f.cfg:4"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("duplicate key 'a'"), std::string::npos);
  }
  EXPECT_THROW(KeyValueConfig::parse("novalue\n"), ParseError);
  EXPECT_THROW(KeyValueConfig::parse("=3\n"), ParseError);
}

TEST(KeyValueConfig, TypedGetters) {
  auto kv = KeyValueConfig::parse("n=12\nx=0.25\nt=yes\nf=0\nbad=-1\nword=abc\n");
  EXPECT_EQ(kv.take_u64("n"), 12u);
  EXPECT_EQ(kv.take_double("x"), 0.25);
  EXPECT_EQ(kv.take_bool("t"), true);
  EXPECT_EQ(kv.take_bool("f"), false);
  EXPECT_THROW(kv.take_u64("bad"), Error);
  EXPECT_THROW(kv.take_double("word"), Error);
  EXPECT_THROW(kv.take_bool("word"), Error);
}

TEST(KeyValueConfig, UnknownKeysAreNamed) {
  auto kv = KeyValueConfig::parse("a=1\nzeta=2\nalpha=3\n");
  kv.take_u64("a");
  try {
    kv.require_all_used();
    FAIL();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "unknown config key(s): alpha, zeta");
  }
}

TEST(KeyValueConfig, SetOverridesFileValue) {
  auto kv = KeyValueConfig::parse("a=1\n");
  kv.set("a", "5");
  kv.set("b", "6");
  EXPECT_EQ(kv.take_u64("a"), 5u);
  EXPECT_EQ(kv.take_u64("b"), 6u);
}

TEST(KeyValueConfig, LoadMissingFile) {
  EXPECT_THROW(KeyValueConfig::load("/nonexistent/dir/x.cfg"), Error);
}

TEST(ParseRatio, Forms) {
  EXPECT_EQ(parse_ratio("1:4"), 4u);
  EXPECT_EQ(parse_ratio(" 1 : 0 "), 0u);
  EXPECT_EQ(parse_ratio("7"), 7u);
  EXPECT_THROW(parse_ratio("2:4"), Error);
  EXPECT_THROW(parse_ratio("1:x"), Error);
  EXPECT_THROW(parse_ratio(""), Error);
}

TEST(ApplyConfig, TrainKeysWithPrefix) {
  auto kv = KeyValueConfig::parse(
      "s.epochs=3\ns.batch_size=5\ns.workers=2\ns.learning_rate=0.01\ns.warmup_fraction=0.2\n"
      "s.hard_negative_ratio=1:3\ns.seed=9\ns.mode=in_batch\ns.share_hard_negatives=false\n"
      "s.max_steps=11\n");
  TrainConfig c;
  apply_train_config(kv, "s.", c);
  EXPECT_EQ(c.epochs, 3u);
  EXPECT_EQ(c.batch_size, 5u);
  EXPECT_EQ(c.workers, 2u);
  EXPECT_EQ(c.learning_rate, 0.01);
  EXPECT_EQ(c.warmup_fraction, 0.2);
  EXPECT_EQ(c.hard_negatives, 3u);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.mode, NegativeMode::in_batch);
  EXPECT_FALSE(c.share_hard_negatives);
  EXPECT_EQ(c.max_steps, 11u);
  EXPECT_NO_THROW(kv.require_all_used());
}

TEST(ApplyConfig, UnsetFieldsKeepDefaults) {
  KeyValueConfig kv;
  TrainConfig c;
  c.epochs = 77;
  apply_train_config(kv, "", c);
  EXPECT_EQ(c.epochs, 77u);
  EXPECT_EQ(c.batch_size, TrainConfig{}.batch_size);
}

TEST(ApplyConfig, ValidationRuns) {
  auto kv = KeyValueConfig::parse("workers=0\n");
  TrainConfig c;
  EXPECT_THROW(apply_train_config(kv, "", c), Error);
  auto kv2 = KeyValueConfig::parse("negative_threshold=0.99\n");
  MiningConfig m;
  EXPECT_THROW(apply_mining_config(kv2, "", m), Error);
  auto kv3 = KeyValueConfig::parse("hidden_dim=0\n");
  CrossEncoderShape s;
  EXPECT_THROW(apply_cross_shape(kv3, "", s), Error);
}

TEST(ApplyConfig, CrossMiningSyntheticAndShapes) {
  auto kv = KeyValueConfig::parse(
      "negative_ratio=1:2\nepochs=4\ntop_k=30\nmax_negatives=5\nbucket_width=3\nnum_topics=7\n"
      "key_rate=0.4\nembedding_dim=6\noutput_dim=5\nhidden_dim=9\n");
  CrossTrainConfig cross;
  MiningConfig mining;
  SyntheticSpec spec;
  DualEncoderShape dual;
  CrossEncoderShape cshape;
  apply_cross_config(kv, "", cross);
  apply_mining_config(kv, "", mining);
  apply_synthetic_spec(kv, "", spec);
  apply_dual_shape(kv, "", dual);
  apply_cross_shape(kv, "", cshape);
  EXPECT_EQ(cross.negative_ratio, 2u);
  EXPECT_EQ(cross.epochs, 4u);
  EXPECT_EQ(mining.top_k, 30u);
  EXPECT_EQ(mining.max_negatives, 5u);
  EXPECT_EQ(mining.bucket_width, 3u);
  EXPECT_EQ(spec.num_topics, 7u);
  EXPECT_EQ(spec.key_rate, 0.4);
  EXPECT_EQ(dual.embedding_dim, 6u);
  EXPECT_EQ(dual.output_dim, 5u);
  EXPECT_EQ(cshape.embedding_dim, 6u);
  EXPECT_EQ(cshape.hidden_dim, 9u);
  EXPECT_NO_THROW(kv.require_all_used());
}

TEST(PipelineConfigKeys, ReadAndFingerprint) {
  auto kv = KeyValueConfig::parse(
      "seed=4\nsteps=2\nmodel.vocab_size=512\nsynthetic.num_topics=6\nstep3.hard_negatives=3\n"
      "mining.top_k=40\nout_dir=/tmp/x\nmetrics=mrr@10\n");
  auto c = pipeline_config_from(kv);
  EXPECT_EQ(c.seed, 4u);
  EXPECT_EQ(c.last_step, 2u);
  EXPECT_EQ(c.dual_shape.vocab_size, 512u);
  EXPECT_EQ(c.cross_shape.vocab_size, 512u);
  EXPECT_EQ(c.synthetic.vocab_size, 512u);
  EXPECT_EQ(c.synthetic.num_topics, 6u);
  EXPECT_EQ(c.step3.hard_negatives, 3u);
  EXPECT_EQ(c.mining.top_k, 40u);
  EXPECT_EQ(c.fingerprint().size(), 16u);

  // out_dir and steps do not change the fingerprint; seeds do.
  auto same = c;
  same.out_dir = "elsewhere";
  same.last_step = 4;
  EXPECT_EQ(same.fingerprint(), c.fingerprint());
  auto other = c;
  other.seed = 5;
  EXPECT_NE(other.fingerprint(), c.fingerprint());
  EXPECT_NE(c.canonical().find("seed=4\n"), std::string::npos);
}

TEST(PipelineConfigKeys, RejectsUnknownAndInconsistent) {
  auto unknown = KeyValueConfig::parse("step9.epochs=1\n");
  EXPECT_THROW(pipeline_config_from(unknown), Error);
  auto step1_hard = KeyValueConfig::parse("step1.hard_negatives=2\n");
  EXPECT_THROW(pipeline_config_from(step1_hard), Error);
  auto bad_steps = KeyValueConfig::parse("steps=5\n");
  EXPECT_THROW(pipeline_config_from(bad_steps), Error);
  auto bad_metric = KeyValueConfig::parse("metrics=ndcg@10\n");
  EXPECT_THROW(pipeline_config_from(bad_metric), Error);
  auto vocab = KeyValueConfig::parse("synthetic.vocab_size=100\n");
  EXPECT_THROW(pipeline_config_from(vocab), Error);
}

TEST(PipelineConfigKeys, DataPathsSwitchOffSynthetic) {
  test::TempDir dir;
  test::write_text(dir.file("c.tsv"), "0\talpha\n");
  auto kv = KeyValueConfig::parse("data.collection=" + dir.file("c.tsv") + "\n");
  EXPECT_THROW(pipeline_config_from(kv), Error) << "questions and qrels are required";
  auto full = KeyValueConfig::parse("data.collection=a\ndata.questions=b\ndata.qrels=c\n");
  auto c = pipeline_config_from(full);
  ASSERT_TRUE(c.data);
  EXPECT_EQ(c.data->questions, "b");
}

}  // namespace
}  // namespace dpr
