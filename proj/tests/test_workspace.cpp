#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sys/wait.h>

#include "ttaloop/external.hpp"
#include "ttaloop/svol.hpp"
#include "ttaloop/workspace.hpp"

using namespace ttaloop;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ttaloop-ws-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

PhantomSpec small_spec() {
  PhantomSpec s;
  s.geometry = Geometry{{16, 20, 20}, {1.0, 1.0, 1.0}};
  return s;
}

RunConfig quick_config() {
  RunConfig c;
  c.ensemble_size = 4;
  c.teacher_schedule = RestartSchedule{0.5, 0.005, 6, 1, 1};
  c.round_schedule = RestartSchedule{0.2, 0.002, 3, 1, 1};
  c.train.samples_per_class = 64;
  return c;
}

Corpus make_corpus(const fs::path& dir, const std::string& prefix, int count, std::uint64_t seed,
                   bool labels = true) {
  CorpusOptions o;
  o.spec = small_spec();
  o.seed = seed;
  o.count = count;
  o.prefix = prefix;
  o.labels = labels;
  return generate_corpus(dir, o);
}

std::string slurp(const fs::path& p) { return read_text_file(p); }

int run_cli(const std::string& args) {
  const std::string cmd = std::string(TTALOOP_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Shared corpora and teacher, built once.
class Workspace : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new fs::path(scratch("suite"));
    base_ = new Corpus(make_corpus(*root_ / "base", "base", 3, 1));
    pool_ = new Corpus(make_corpus(*root_ / "pool", "pool", 5, 2));
    model_ = new ToyModel(run_teacher(quick_config(), *base_, *root_ / "teacher"));
  }
  static void TearDownTestSuite() {
    fs::remove_all(*root_);
    delete model_;
    delete pool_;
    delete base_;
    delete root_;
  }

  static fs::path* root_;
  static Corpus* base_;
  static Corpus* pool_;
  static ToyModel* model_;
};

fs::path* Workspace::root_ = nullptr;
Corpus* Workspace::base_ = nullptr;
Corpus* Workspace::pool_ = nullptr;
ToyModel* Workspace::model_ = nullptr;

}  // namespace

TEST(RunConfig, JsonRoundTripAndUnknownKeys) {
  RunConfig c = quick_config();
  c.k = 2;
  c.floor = 0.4;
  c.borders = true;
  const RunConfig back = run_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(run_config_digest(back), run_config_digest(c));
  nlohmann::json j = to_json(c);
  j["surprise"] = 1;
  EXPECT_THROW(run_config_from_json(j), ValidationError);
  RunConfig bad;
  bad.random_selection = true;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Corpus, GenerateReadAndDigest) {
  const fs::path dir = scratch("corpus");
  const Corpus c = make_corpus(dir / "a", "x", 3, 5);
  ASSERT_EQ(c.cases.size(), 3u);
  EXPECT_EQ(c.cases[0].case_id, "x-000");
  const Corpus back = read_corpus(dir / "a");
  EXPECT_EQ(back.cases, c.cases);
  EXPECT_EQ(corpus_digest(back), corpus_digest(c));
  const Corpus moved = make_corpus(dir / "b", "x", 3, 5);
  EXPECT_EQ(corpus_digest(moved), corpus_digest(c));
  const auto loaded = load_corpus(c, true);
  ASSERT_EQ(loaded.size(), 3u);
  EXPECT_TRUE(loaded[0].truth.has_value());
  const Corpus bare = make_corpus(dir / "c", "y", 2, 5, false);
  EXPECT_THROW(load_corpus(bare, true), ValidationError);
  EXPECT_EQ(load_corpus(bare, false).size(), 2u);
  fs::remove_all(dir);
}

TEST_F(Workspace, ZeroBudgetCombinedRoundEqualsSelfTrainingRound) {
  const RunConfig c = quick_config();
  RoundOptions a, b;
  a.out = *root_ / "st";
  b.out = *root_ / "alst0";
  const RoundOutcome ra = run_round_dir(c, *model_, *base_, *pool_, a);
  const RoundOutcome rb = run_round_dir(c, *model_, *base_, *pool_, b);
  ASSERT_TRUE(ra.model && rb.model);
  EXPECT_EQ(*ra.model, *rb.model);
  for (const char* f : {"model.json", "plan.json", "trainset.json", "quality.csv", "round.json"}) {
    EXPECT_EQ(slurp(a.out / f), slurp(b.out / f)) << f;
  }
  EXPECT_TRUE(ra.plan->al_ids.empty());
  EXPECT_EQ(ra.trainset->base.size(), 3u);
}

TEST_F(Workspace, ResumeReusesFinishedCasesAndRefusesOtherRuns) {
  RunConfig c = quick_config();
  c.k = 1;
  RoundOptions o;
  o.out = *root_ / "resume";
  o.stop_after = RoundStage::assess;
  const RoundOutcome first = run_round_dir(c, *model_, *base_, *pool_, o);
  EXPECT_EQ(first.reached, RoundStage::assess);
  EXPECT_EQ(first.assessed, 5u);
  fs::remove(o.out / "assess" / "pool-002.json");
  o.stop_after.reset();
  const RoundOutcome second = run_round_dir(c, *model_, *base_, *pool_, o);
  EXPECT_EQ(second.assessed, 1u);
  EXPECT_EQ(second.reached, RoundStage::train);
  ASSERT_TRUE(second.plan);
  EXPECT_EQ(second.plan->al_ids.size(), 1u);
  EXPECT_TRUE(fs::exists(o.out / "labels" / (second.plan->al_ids[0] + ".svol.json")));

  RunConfig other = c;
  other.seed = 99;
  EXPECT_THROW(run_round_dir(other, *model_, *base_, *pool_, o), ConflictError);
}

TEST_F(Workspace, HumanAnnotatorWaitsForLabels) {
  RunConfig c = quick_config();
  c.k = 2;
  RoundOptions o;
  o.out = *root_ / "human";
  o.annotator = Annotator::human;
  EXPECT_THROW(run_round_dir(c, *model_, *base_, *pool_, o), PendingAnnotation);
  ASSERT_TRUE(fs::exists(o.out / "worklist.csv"));
  const SelectionPlan plan = plan_from_json(read_json_file(o.out / "plan.json")["plan"]);
  ASSERT_EQ(plan.al_ids.size(), 2u);
  // Supply the labels the worklist asks for.
  for (const auto& id : plan.al_ids) {
    const auto it = std::find_if(pool_->cases.begin(), pool_->cases.end(),
                                 [&](const CaseRecord& r) { return r.case_id == id; });
    ASSERT_NE(it, pool_->cases.end());
    write_svol(o.out / "labels" / (id + ".svol.json"), read_mask(pool_->root / *it->label_ref));
  }
  const RoundOutcome done = run_round_dir(c, *model_, *base_, *pool_, o);
  EXPECT_EQ(done.reached, RoundStage::train);
  EXPECT_EQ(done.trainset->al.size(), 2u);
}

TEST_F(Workspace, ExternalSegmenterMatchesInProcessModel) {
  const RunConfig c = quick_config();
  const fs::path model_path = *root_ / "teacher" / "model.json";
  const ExternalSegmenter ext(std::string(TTALOOP_CLI) + " predict --model " + model_path.string() + " --job {job}",
                              *root_ / "jobs");
  RoundOptions o;
  o.out = *root_ / "external";
  o.stop_after = RoundStage::plan;
  o.segmenter = &ext;
  o.segmenter_id = "external";
  run_round_dir(c, *model_, *base_, *pool_, o);
  RoundOptions in;
  in.out = *root_ / "inproc";
  in.stop_after = RoundStage::plan;
  run_round_dir(c, *model_, *base_, *pool_, in);
  EXPECT_EQ(slurp(o.out / "quality.csv"), slurp(in.out / "quality.csv"));
  EXPECT_TRUE(fs::is_empty(*root_ / "jobs"));

  const ExternalSegmenter failing("false", *root_ / "jobs-bad");
  RoundOptions f;
  f.out = *root_ / "external-bad";
  f.segmenter = &failing;
  f.segmenter_id = "bad";
  EXPECT_THROW(run_round_dir(c, *model_, *base_, *pool_, f), SegmenterError);
}

TEST_F(Workspace, EvaluationRecordsFailuresAndContinues) {
  const fs::path pred = *root_ / "pred";
  const ToySegmenter seg(*model_);
  for (const auto& r : base_->cases) {
    const Volume v = read_volume(base_->root / r.volume_ref);
    write_svol(pred / (r.case_id + ".svol.json"), seg.predict_soft(v));
  }
  // Wrong geometry for one case, nothing at all for another.
  write_svol(pred / "base-001.svol.json", ProbMap(Geometry{{2, 2, 2}, {1, 1, 1}}, 0.5f));
  fs::remove(pred / "base-002.svol.json");
  fs::remove(pred / "base-002.svol.raw");
  const Evaluation e = evaluate_corpus(*base_, nullptr, pred, "m", "in", 0);
  EXPECT_EQ(e.rows.size(), 1u);
  EXPECT_EQ(e.failures.size(), 2u);
  const Evaluation direct = evaluate_corpus(*base_, &seg, std::nullopt, "m", "in", 0);
  EXPECT_EQ(direct.rows.size(), 3u);
  EXPECT_EQ(direct.rows[0], e.rows[0]);

  const fs::path rep = *root_ / "report";
  const auto agg = write_report_tables(rep, direct.rows, AggregationMode::per_case);
  const std::string before = slurp(rep / "aggregate.csv");
  fs::remove(rep / "aggregate.csv");
  EXPECT_EQ(rebuild_report(rep, AggregationMode::per_case), agg);
  EXPECT_EQ(slurp(rep / "aggregate.csv"), before);
}

TEST(StudyConfig, JsonRoundTripKeepsDigest) {
  for (auto id : {StudyId::st_only, StudyId::transfer_al_st, StudyId::highvar}) {
    const StudyConfig c = default_study_config(id);
    EXPECT_EQ(config_digest(study_config_from_json(to_json(c))), config_digest(c));
  }
}

TEST_F(Workspace, CliExitCodes) {
  const std::string base = base_->root.string(), pool = pool_->root.string();
  const std::string model = (*root_ / "teacher" / "model.json").string();
  EXPECT_EQ(run_cli("--version-that-does-not-exist"), 2);
  EXPECT_EQ(run_cli("st-round --model " + model + " --base " + base + " --pool " + pool + " --out " +
                    (*root_ / "cli-bad").string() + " --ensemble-size 0"),
            2);
  EXPECT_EQ(run_cli("st-round --model " + model + " --base " + base + " --pool " + base + " --out " +
                    (*root_ / "cli-overlap").string()),
            2);
  EXPECT_EQ(run_cli("al-st-round --model " + model + " --base " + base + " --pool " + pool +
                    " --out " + (*root_ / "cli-human").string() +
                    " --ensemble-size 4 --k 1 --annotator human --samples-per-class 64"),
            3);
  const ToySegmenter seg(*model_);
  const fs::path rep = *root_ / "cli-report";
  write_report_tables(rep, evaluate_corpus(*base_, &seg, std::nullopt, "m", "in", 0).rows,
                      AggregationMode::per_case);
  EXPECT_EQ(run_cli("report --in " + rep.string()), 0);
  EXPECT_EQ(run_cli("report --in " + rep.string() + " --mode sideways"), 2);
}
