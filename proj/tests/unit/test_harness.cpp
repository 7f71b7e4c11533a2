#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cfrec/error.hpp"
#include "cfrec/harness.hpp"

using namespace cfrec;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cfrec_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::Numeric;
}

std::string small_config(const fs::path& out) {
  nlohmann::json doc = {
      {"data", {{"synthetic", {{"users", 60}, {"items", 30}, {"categories", 5},
                               {"min_per_user", 6}, {"max_per_user", 12}}}}},
      {"preprocess", {{"min_user_interactions", 3}, {"min_item_interactions", 3}}},
      {"spn", {{"min_instances_split", 15}}},
      {"query", {{"time_limit", 30}, {"k", 3}}},
      {"protocol", {{"users_sampled", 2}, {"items_per_user", 2}}},
      {"output_dir", out.string()}};
  return doc.dump();
}

}  // namespace

TEST_CASE("config defaults, overrides and rejection") {
  const ExperimentConfig c = parse_config(R"({"data":{"synthetic":{}}})");
  CHECK(c.synthetic);
  CHECK(c.synthetic->users == 500);
  CHECK(c.ease.ridge == 100.0);
  CHECK(c.query.k == 5);
  CHECK(c.fold_count == 3);
  CHECK(c.aggregator == Aggregator::Disjunction);
  CHECK(c.alpha == doctest::Approx(0.1));
  CHECK_FALSE(c.threshold);

  CHECK(kind_of([] { parse_config(R"({"data":{"synthetic":{}},"nope":1})"); }) == ErrorKind::Config);
  CHECK(kind_of([] { parse_config(R"({"data":{"synthetic":{"userz":3}}})"); }) == ErrorKind::Config);
  CHECK(kind_of([] { parse_config(R"({"data":{"synthetic":{}},"query":{"k":"five"}})"); }) ==
        ErrorKind::Config);
  CHECK(kind_of([] { parse_config(R"({"data":{"synthetic":{}},"query":{"k":0}})"); }) ==
        ErrorKind::Config);
  CHECK(kind_of([] { parse_config("{not json"); }) == ErrorKind::Config);
  CHECK(kind_of([] { parse_config("{}"); }) == ErrorKind::Config);
  CHECK(kind_of([] { parse_config(R"({"data":{"interactions":"/no/such/file.csv"}})"); }) ==
        ErrorKind::Config);
  // metadata-dependent strategy without metadata fails before any work
  const fs::path dir = scratch("cfg");
  std::ofstream(dir / "ratings.csv") << "user_id,item_id,rating\nu,i,5\n";
  CHECK(kind_of([&] {
          parse_config(R"({"data":{"interactions":"ratings.csv"},"categories":{"strategy":"tag_sets"}})",
                       dir.string());
        }) == ErrorKind::Config);
  CHECK(kind_of([&] {
          parse_config(R"({"data":{"interactions":"ratings.csv","item_meta":"missing.csv"}})",
                       dir.string());
        }) == ErrorKind::Config);
  const ExperimentConfig rel = parse_config(
      R"({"data":{"interactions":"ratings.csv"},"categories":{"strategy":"single_category"}})",
      dir.string());
  CHECK(fs::path(rel.interactions_path).is_absolute());
  // non-binarized data cannot feed a disjunction
  CHECK(kind_of([] {
          parse_config(R"({"data":{"synthetic":{}},"preprocess":{"binarize":false}})");
        }) == ErrorKind::Config);
  CHECK_NOTHROW(parse_config(
      R"({"data":{"synthetic":{}},"preprocess":{"binarize":false},"spn":{"aggregator":"mean"}})"));
}

TEST_CASE("output directory env override and patches") {
  ::setenv(kOutputDirEnv, "/tmp/cfrec_env_dir", 1);
  const ExperimentConfig c = parse_config(R"({"data":{"synthetic":{}},"output_dir":"x"})");
  ::unsetenv(kOutputDirEnv);
  CHECK(c.output_dir == "/tmp/cfrec_env_dir");

  const ExperimentConfig base = parse_config(R"({"data":{"synthetic":{}}})");
  const ExperimentConfig p = patch_config(base, R"({"query":{"k":10,"spn_mode":"optimize"}})");
  CHECK(p.query.k == 10);
  CHECK(p.query.spn_mode == SpnModeKind::Optimize);
  CHECK(p.synthetic->users == 500);
  CHECK(kind_of([&] { patch_config(base, R"({"query":{"kk":1}})"); }) == ErrorKind::Config);

  // round trip through the JSON document
  const ExperimentConfig again = parse_config(config_to_json(p));
  CHECK(config_to_json(again) == config_to_json(p));
}

TEST_CASE("artifact hash follows training inputs only") {
  const ExperimentConfig a = parse_config(R"({"data":{"synthetic":{}}})");
  const ExperimentConfig b = patch_config(a, R"({"query":{"k":9},"protocol":{"users_sampled":3}})");
  const ExperimentConfig c = patch_config(a, R"({"ease":{"lambda":50}})");
  const ExperimentConfig d = patch_config(a, R"({"seed":3})");
  CHECK(a.artifact_hash() == b.artifact_hash());
  CHECK(a.artifact_hash() != c.artifact_hash());
  CHECK(a.artifact_hash() != d.artifact_hash());
}

TEST_CASE("synthetic generator is deterministic and respects its spec") {
  SyntheticSpec s;
  s.users = 50;
  s.items = 40;
  s.categories = 4;
  s.min_per_user = 5;
  s.max_per_user = 9;
  const SyntheticData a = generate_synthetic(s);
  const SyntheticData b = generate_synthetic(s);
  CHECK(a.interactions_csv == b.interactions_csv);
  CHECK(a.item_meta_csv == b.item_meta_csv);
  const InteractionMatrix m = parse_interactions(a.interactions_csv, CsvSchema{});
  CHECK(m.n_users() == 50);
  for (int u = 0; u < m.n_users(); ++u) {
    CHECK(m.row(u).size() >= 5);
    CHECK(m.row(u).size() <= 9);
  }
  s.seed = 8;
  CHECK(generate_synthetic(s).interactions_csv != a.interactions_csv);
  s.max_per_user = 100;
  CHECK_THROWS_AS(generate_synthetic(s), Error);
}

TEST_CASE("prepared data: categories, folds, domain") {
  const fs::path out = scratch("prep");
  const ExperimentConfig c = parse_config(small_config(out));
  const PreparedData a = prepare_data(c);
  const PreparedData b = prepare_data(c);
  CHECK(a.matrix.nnz() == b.matrix.nnz());
  CHECK(a.folds.assignment == b.folds.assignment);
  CHECK(a.ce_domain.is_binary());
  CHECK(a.categories.n_categories() == 5);
  CHECK(a.folds.fold_count == 3);
  std::size_t total = 0;
  for (int f = 0; f < 3; ++f) total += a.folds.users_in(f).size();
  CHECK(total == static_cast<std::size_t>(a.matrix.n_users()));
}

TEST_CASE("training writes deterministic artifacts") {
  const fs::path out1 = scratch("train1");
  const fs::path out2 = scratch("train2");
  const TrainSummary s1 = cmd_train(parse_config(small_config(out1)));
  const TrainSummary s2 = cmd_train(parse_config(small_config(out2)));
  REQUIRE(s1.ease_files.size() == 3);
  CHECK(s1.hash == s2.hash);
  for (int f = 0; f < 3; ++f) {
    CHECK(slurp(s1.ease_files[f]) == slurp(s2.ease_files[f]));
    CHECK(slurp(s1.spn_files[f]) == slurp(s2.spn_files[f]));
  }
  CHECK(fs::exists(s1.manifest_file));
  const auto manifest = nlohmann::json::parse(slurp(s1.manifest_file));
  CHECK(manifest["folds"].size() == 3);

  const ExperimentConfig c = parse_config(small_config(out1));
  const FoldModels m = load_fold(c, 1);
  CHECK(m.ease.weights.diagonal().cwiseAbs().maxCoeff() == 0.0);
  CHECK(m.spn.scope_size == 5);
  const ExperimentConfig other = patch_config(c, R"({"ease":{"lambda":7}})");
  CHECK(kind_of([&] { load_fold(other, 0); }) == ErrorKind::Io);
}

TEST_CASE("verify_ce re-ranks independently") {
  EaseModel m;
  m.weights.resize(3, 3);
  m.weights << 0, 2, 0,  //
      1, 0, 0,           //
      0, 0, 1;
  CeQuery q;
  q.factual = {1, 1, 1};
  q.target_item = 0;
  q.k_context = 2;
  q.validity = RankDrop{2};
  // scores (2,1,1): target first; removing item 1 gives (0,1,1)
  ValidityReport v = verify_ce(m, q, std::vector<double>{1, 0, 1});
  CHECK(v.target_rank == 3);
  CHECK(v.leaves_top_k);
  CHECK(v.valid);
  v = verify_ce(m, q, std::vector<double>{1, 1, 1});
  CHECK(v.target_rank == 1);
  CHECK_FALSE(v.valid);
  v = verify_ce(m, q, std::vector<double>{1, 1, 0});
  CHECK(v.target_rank == 1);
  // increases break decrease-only
  q.factual = {1, 0, 1};
  v = verify_ce(m, q, std::vector<double>{1, 1, 1});
  CHECK_FALSE(v.decrease_only_ok);
  CHECK_FALSE(v.valid);
  q.factual = {1, 1, 1};
  q.validity = ScoreThreshold{0.5};
  v = verify_ce(m, q, std::vector<double>{1, 0, 1});
  REQUIRE(v.score_ok);
  CHECK(*v.score_ok);
  CHECK(v.valid);
  v = verify_ce(m, q, std::vector<double>{1, 0.5, 1});
  CHECK_FALSE(v.domain_ok);
}

TEST_CASE("summaries count outcomes") {
  CellSpec cell;
  std::vector<QueryRecord> recs(5);
  recs[0].status = CeStatus::Optimal;
  recs[0].l1_distance = 2;
  recs[0].exact_ll = -4;
  recs[0].solve_seconds = 1;
  recs[1].status = CeStatus::Optimal;
  recs[1].l1_distance = 4;
  recs[1].exact_ll = -6;
  recs[1].solve_seconds = 3;
  recs[1].still_in_top_k = true;
  recs[2].status = CeStatus::FeasibleTimeLimit;
  recs[2].l1_distance = 3;
  recs[2].exact_ll = -5;
  recs[2].solve_seconds = 10;
  recs[3].status = CeStatus::Infeasible;
  recs[3].solve_seconds = 0.5;
  recs[4].status = CeStatus::TimeLimitNoSolution;
  recs[4].solve_seconds = 10;
  const CellMetrics m = summarize(cell, recs);
  CHECK(m.attempts == 5);
  CHECK(m.successes == 3);
  CHECK(m.optimal == 2);
  CHECK(m.infeasible == 1);
  CHECK(m.time_limit == 1);
  CHECK(m.success_rate == doctest::Approx(0.6));
  CHECK(m.optimal_rate == doctest::Approx(0.4));
  CHECK(m.l1_mean == doctest::Approx(3.0));
  CHECK(m.l1_std == doctest::Approx(1.0));
  CHECK(m.ll_mean == doctest::Approx(-5.0));
  CHECK(m.time_median == doctest::Approx(3.0));
  CHECK(m.time_mean == doctest::Approx(4.9));
  CHECK(m.still_in_top_k == doctest::Approx(1.0 / 3.0));
  CHECK(m.infeasible_share_of_failures == doctest::Approx(0.5));
  const CellMetrics empty = summarize(cell, {});
  CHECK(empty.attempts == 0);
  CHECK(empty.success_rate == 0.0);
}

TEST_CASE("explain, verify and export on a small synthetic set") {
  const fs::path out = scratch("explain");
  ExperimentConfig c = parse_config(small_config(out));
  const PreparedData data = prepare_data(c);
  const std::string user = data.matrix.user_ids()[0];
  const FoldModels models = train_fold(c, data, data.folds.assignment[0]);
  const auto top = top_k(score(models.ease, data.matrix.dense_row(0)), 3);
  const std::string item = data.matrix.item_ids()[top[0]];

  for (const char* mode : {"none", "threshold", "optimize"}) {
    c = patch_config(c, std::string(R"({"query":{"spn_mode":")") + mode + "\"}}");
    const ExplainReport r = cmd_explain(c, user, item);
    CAPTURE(mode);
    CHECK(r.target_in_top_k);
    CHECK(r.result.status != CeStatus::TimeLimitNoSolution);
    if (r.result.has_solution()) {
      CHECK(r.verdict.valid);
      CHECK(r.result.valid_rank_drop);
      const ValidityReport again = cmd_verify(c, explain_to_json(r));
      CHECK(again.valid);
      CHECK(again.target_rank == r.verdict.target_rank);
    }
    if (std::string(mode) == "threshold" && r.result.has_solution()) {
      CHECK(*r.result.exact_ll >= models.spn.median_train_ll - 1e-6);
    }
  }
  const std::string mps = cmd_export_mps(c, user, item, "");
  CHECK(fs::exists(mps));
  const MilpModel back = import_mps(mps);
  CHECK(back.n_variables() > data.matrix.n_items());

  CHECK(kind_of([&] { cmd_explain(c, "ghost", item); }) == ErrorKind::Data);
  CHECK(kind_of([&] { cmd_explain(c, user, "ghost"); }) == ErrorKind::Data);
  CHECK(kind_of([&] { cmd_verify(c, "{}"); }) == ErrorKind::Data);
  // a tampered counterfactual fails verification
  auto doc = nlohmann::json::parse(explain_to_json(cmd_explain(c, user, item)));
  if (doc.contains("counterfactual")) {
    doc["counterfactual"] = data.matrix.dense_row(0);
    CHECK_FALSE(cmd_verify(c, doc.dump()).valid);
  }
}

TEST_CASE("benchmark records every cell and writes its report") {
  const fs::path out = scratch("bench");
  ExperimentConfig c = parse_config(small_config(out));
  c = patch_config(c, R"({"protocol":{"cells":[{"validity":"rank"},{"validity":"score","spn_mode":"optimize"}]}})");
  const MetricsReport r = run_benchmark(c);
  REQUIRE(r.cells.size() == 2);
  CHECK(r.records.size() == 3u * 2u * 2u * 2u);
  for (const auto& rec : r.records) {
    if (rec.status == CeStatus::Optimal || rec.status == CeStatus::FeasibleTimeLimit) {
      CHECK(rec.verified);
      CHECK(rec.exact_ll);
    }
  }
  CHECK(r.cells[0].attempts == 12);
  CHECK(r.cells[0].success_rate == 1.0);
  const auto files = write_report(c, r);
  REQUIRE(files.size() == 2);
  const std::string csv = slurp(files[0]);
  CHECK(csv.rfind("cell,validity,spn_mode,k,attempts", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  const auto json = nlohmann::json::parse(slurp(files[1]));
  CHECK(json["records"].size() == r.records.size());
  CHECK(json["hash"] == c.artifact_hash());
}

TEST_CASE("rating inputs run end to end with the mean aggregator") {
  const fs::path out = scratch("ratings");
  auto doc = nlohmann::json::parse(small_config(out));
  doc["preprocess"]["binarize"] = false;
  doc["spn"]["aggregator"] = "mean";
  doc["query"]["spn_mode"] = "optimize";
  const ExperimentConfig c = parse_config(doc.dump());
  const PreparedData data = prepare_data(c);
  CHECK(data.ce_domain.kind == ValueDomain::Kind::RatingLevels);
  const std::string user = data.matrix.user_ids()[1];
  const FoldModels models = train_fold(c, data, data.folds.assignment[1]);
  const auto top = top_k(score(models.ease, data.matrix.dense_row(1)), 3);
  const ExplainReport r = cmd_explain(c, user, data.matrix.item_ids()[top[0]]);
  REQUIRE(r.result.has_solution());
  CHECK(r.verdict.valid);
  CHECK(r.verdict.domain_ok);
}
