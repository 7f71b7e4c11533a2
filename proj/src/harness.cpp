#include "cfrec/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "cfrec/error.hpp"
#include "cfrec/random.hpp"
#include "csv.hpp"

namespace cfrec {

using nlohmann::json;
namespace fs = std::filesystem;

// --- synthetic data ---------------------------------------------------------

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  if (spec.users < 2 || spec.items < 2 || spec.categories < 1 || spec.categories > spec.items ||
      spec.min_per_user < 1 || spec.max_per_user < spec.min_per_user ||
      spec.max_per_user > spec.items) {
    fail(ErrorKind::Config, "synthetic spec out of range");
  }
  Rng rng(spec.seed);
  const int d = spec.items;
  const int k = spec.categories;

  std::vector<int> category(d);
  for (int i = 0; i < d; ++i) category[i] = i % k;
  rng.shuffle(std::span<int>(category));

  // popularity falls off with a shuffled rank
  std::vector<int> rank(d);
  std::iota(rank.begin(), rank.end(), 0);
  rng.shuffle(std::span<int>(rank));
  std::vector<double> popularity(d);
  for (int i = 0; i < d; ++i) popularity[i] = 1.0 / std::pow(rank[i] + 5.0, 0.8);

  auto item_id = [](int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "i%03d", i);
    return std::string(buf);
  };

  std::ostringstream meta;
  meta << "item_id,category,tags,year\n";
  for (int i = 0; i < d; ++i) {
    const int g1 = static_cast<int>(rng.below(8));
    const int g2 = static_cast<int>(rng.below(8));
    meta << item_id(i) << ",group" << category[i] / 3 << ",genre" << g1;
    if (g2 != g1) meta << ";genre" << g2;
    meta << "," << 1990 + category[i] << "\n";
  }

  std::ostringstream inter;
  inter << "user_id,item_id,rating\n";
  std::vector<double> weight(d);
  for (int u = 0; u < spec.users; ++u) {
    const int fav1 = static_cast<int>(rng.below(k));
    const int fav2 = static_cast<int>(rng.below(k));
    for (int i = 0; i < d; ++i) {
      const bool fav = category[i] == fav1 || category[i] == fav2;
      weight[i] = popularity[i] * (fav ? 12.0 : 1.0);
    }
    const int count = spec.min_per_user +
                      static_cast<int>(rng.below(spec.max_per_user - spec.min_per_user + 1));
    for (int t = 0; t < count; ++t) {
      double total = 0.0;
      for (double w : weight) total += w;
      double pick = rng.uniform() * total;
      int item = d - 1;
      for (int i = 0; i < d; ++i) {
        if (weight[i] <= 0.0) continue;
        pick -= weight[i];
        if (pick < 0.0) {
          item = i;
          break;
        }
      }
      while (weight[item] <= 0.0) item = (item + d - 1) % d;
      const bool fav = category[item] == fav1 || category[item] == fav2;
      weight[item] = 0.0;
      const int rating = fav ? 3 + static_cast<int>(rng.below(3)) : 1 + static_cast<int>(rng.below(4));
      char buf[16];
      std::snprintf(buf, sizeof buf, "u%03d", u);
      inter << buf << "," << item_id(item) << "," << rating << "\n";
    }
  }
  return {inter.str(), meta.str()};
}

// --- enums ------------------------------------------------------------------

ValidityKind parse_validity(const std::string& s) {
  if (s == "rank") return ValidityKind::RankDrop;
  if (s == "score") return ValidityKind::Score;
  fail(ErrorKind::Config, "unknown validity '" + s + "' (rank, score)");
}

std::string to_string(ValidityKind v) { return v == ValidityKind::RankDrop ? "rank" : "score"; }

SpnModeKind parse_spn_mode(const std::string& s) {
  if (s == "none") return SpnModeKind::None;
  if (s == "threshold") return SpnModeKind::Threshold;
  if (s == "optimize") return SpnModeKind::Optimize;
  fail(ErrorKind::Config, "unknown spn_mode '" + s + "' (none, threshold, optimize)");
}

std::string to_string(SpnModeKind m) {
  switch (m) {
    case SpnModeKind::None: return "none";
    case SpnModeKind::Threshold: return "threshold";
    case SpnModeKind::Optimize: return "optimize";
  }
  return "?";
}

std::string CellSpec::label() const {
  return to_string(validity) + "/" + to_string(spn_mode) + "/k" + std::to_string(k);
}

// --- config -----------------------------------------------------------------

namespace {

json cell_json(const CellSpec& c) {
  return {{"validity", to_string(c.validity)}, {"spn_mode", to_string(c.spn_mode)}, {"k", c.k}};
}

json config_doc(const ExperimentConfig& c) {
  json synthetic = nullptr;
  if (c.synthetic) {
    synthetic = {{"users", c.synthetic->users},
                 {"items", c.synthetic->items},
                 {"categories", c.synthetic->categories},
                 {"min_per_user", c.synthetic->min_per_user},
                 {"max_per_user", c.synthetic->max_per_user},
                 {"seed", c.synthetic->seed}};
  }
  json cells = json::array();
  for (const auto& cell : c.cells) cells.push_back(cell_json(cell));
  return {
      {"data",
       {{"interactions", c.interactions_path},
        {"item_meta", c.item_meta_path},
        {"user_column", c.schema.user_column},
        {"item_column", c.schema.item_column},
        {"value_column", c.schema.value_column},
        {"synthetic", synthetic}}},
      {"preprocess",
       {{"binarize", c.binarize},
        {"rating_scale", c.rating_scale},
        {"min_user_interactions", c.min_user_interactions},
        {"min_item_interactions", c.min_item_interactions}}},
      {"categories", {{"strategy", to_string(c.category_strategy)}}},
      {"ease", {{"lambda", c.ease.ridge}, {"max_items", c.ease.max_items}}},
      {"spn",
       {{"aggregator", to_string(c.aggregator)},
        {"min_instances_split", c.spn.min_instances_split},
        {"independence_threshold", c.spn.independence_threshold},
        {"smoothing", c.spn.smoothing},
        {"bins", c.spn.bins}}},
      {"query",
       {{"k", c.query.k},
        {"validity", to_string(c.query.validity)},
        {"spn_mode", to_string(c.query.spn_mode)},
        {"alpha", c.alpha},
        {"threshold", c.threshold ? json(*c.threshold) : json(nullptr)},
        {"decrease_only", c.decrease_only},
        {"fix_target", c.fix_target},
        {"time_limit", c.time_limit_seconds}}},
      {"protocol",
       {{"folds", c.fold_count},
        {"users_sampled", c.users_sampled},
        {"items_per_user", c.items_per_user},
        {"sample_from", c.sample_held_out ? "held_out" : "training"},
        {"cells", cells}}},
      {"seed", c.seed},
      {"output_dir", c.output_dir},
  };
}

/// Overlays `user` on `defaults`, rejecting keys the defaults do not have.
void strict_merge(json& target, const json& user, const std::string& path) {
  if (!user.is_object()) fail(ErrorKind::Config, "config '" + path + "' must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!target.contains(it.key())) fail(ErrorKind::Config, "unknown config key '" + key + "'");
    json& slot = target[it.key()];
    if (slot.is_object() && it.value().is_object()) {
      strict_merge(slot, it.value(), key);
    } else if (slot.is_null() && it.value().is_object() && it.key() == "synthetic") {
      json defaults = {{"users", 500}, {"items", 200}, {"categories", 15},
                       {"min_per_user", 8}, {"max_per_user", 30}, {"seed", 7}};
      strict_merge(defaults, it.value(), key);
      slot = defaults;
    } else {
      slot = it.value();
    }
  }
}

template <class T>
T get(const json& doc, const std::string& section, const std::string& key) {
  try {
    return doc.at(section).at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::Config, "config '" + section + "." + key + "' has the wrong type");
  }
}

std::string resolve(const std::string& path, const std::string& base) {
  if (path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base) / path).lexically_normal().string();
}

void require(bool ok, const std::string& what) {
  if (!ok) fail(ErrorKind::Config, what);
}

ExperimentConfig from_doc(const json& doc, const std::string& base_dir) {
  ExperimentConfig c;
  c.interactions_path = resolve(get<std::string>(doc, "data", "interactions"), base_dir);
  c.item_meta_path = resolve(get<std::string>(doc, "data", "item_meta"), base_dir);
  c.schema.user_column = get<std::string>(doc, "data", "user_column");
  c.schema.item_column = get<std::string>(doc, "data", "item_column");
  c.schema.value_column = get<std::string>(doc, "data", "value_column");
  const json& syn = doc.at("data").at("synthetic");
  if (!syn.is_null()) {
    SyntheticSpec s;
    try {
      s.users = syn.at("users").get<int>();
      s.items = syn.at("items").get<int>();
      s.categories = syn.at("categories").get<int>();
      s.min_per_user = syn.at("min_per_user").get<int>();
      s.max_per_user = syn.at("max_per_user").get<int>();
      s.seed = syn.at("seed").get<std::uint64_t>();
    } catch (const json::exception&) {
      fail(ErrorKind::Config, "config 'data.synthetic' has a value of the wrong type");
    }
    c.synthetic = s;
  }
  c.binarize = get<bool>(doc, "preprocess", "binarize");
  c.rating_scale = get<int>(doc, "preprocess", "rating_scale");
  c.min_user_interactions = get<int>(doc, "preprocess", "min_user_interactions");
  c.min_item_interactions = get<int>(doc, "preprocess", "min_item_interactions");
  c.category_strategy = parse_category_strategy(get<std::string>(doc, "categories", "strategy"));
  c.ease.ridge = get<double>(doc, "ease", "lambda");
  c.ease.max_items = get<int>(doc, "ease", "max_items");
  c.aggregator = parse_aggregator(get<std::string>(doc, "spn", "aggregator"));
  c.spn.min_instances_split = get<int>(doc, "spn", "min_instances_split");
  c.spn.independence_threshold = get<double>(doc, "spn", "independence_threshold");
  c.spn.smoothing = get<double>(doc, "spn", "smoothing");
  c.spn.bins = get<int>(doc, "spn", "bins");
  c.query.k = get<int>(doc, "query", "k");
  c.query.validity = parse_validity(get<std::string>(doc, "query", "validity"));
  c.query.spn_mode = parse_spn_mode(get<std::string>(doc, "query", "spn_mode"));
  c.alpha = get<double>(doc, "query", "alpha");
  if (!doc.at("query").at("threshold").is_null()) c.threshold = get<double>(doc, "query", "threshold");
  c.decrease_only = get<bool>(doc, "query", "decrease_only");
  c.fix_target = get<bool>(doc, "query", "fix_target");
  c.time_limit_seconds = get<double>(doc, "query", "time_limit");
  c.fold_count = get<int>(doc, "protocol", "folds");
  c.users_sampled = get<int>(doc, "protocol", "users_sampled");
  c.items_per_user = get<int>(doc, "protocol", "items_per_user");
  const auto from = get<std::string>(doc, "protocol", "sample_from");
  require(from == "held_out" || from == "training", "protocol.sample_from must be held_out or training");
  c.sample_held_out = from == "held_out";
  const json& cells = doc.at("protocol").at("cells");
  require(cells.is_array(), "protocol.cells must be an array");
  for (const json& cell : cells) {
    require(cell.is_object(), "protocol.cells entries must be objects");
    json full = cell_json(c.query);
    strict_merge(full, cell, "protocol.cells[]");
    CellSpec s;
    try {
      s.validity = parse_validity(full.at("validity").get<std::string>());
      s.spn_mode = parse_spn_mode(full.at("spn_mode").get<std::string>());
      s.k = full.at("k").get<int>();
    } catch (const json::exception&) {
      fail(ErrorKind::Config, "protocol.cells entry has a value of the wrong type");
    }
    c.cells.push_back(s);
  }
  try {
    c.seed = doc.at("seed").get<std::uint64_t>();
    c.output_dir = doc.at("output_dir").get<std::string>();
  } catch (const json::exception&) {
    fail(ErrorKind::Config, "config 'seed' or 'output_dir' has the wrong type");
  }
  c.output_dir = resolve(c.output_dir, base_dir);
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) c.output_dir = env;

  // validation
  require(c.synthetic.has_value() != !c.interactions_path.empty(),
          "exactly one of data.interactions and data.synthetic must be given");
  require(c.rating_scale >= 0, "preprocess.rating_scale must be >= 0");
  require(c.min_user_interactions >= 0 && c.min_item_interactions >= 0,
          "pruning thresholds must be >= 0");
  require(c.ease.ridge > 0.0, "ease.lambda must be positive");
  require(c.ease.max_items >= 2, "ease.max_items must be >= 2");
  require(c.spn.min_instances_split >= 1, "spn.min_instances_split must be >= 1");
  require(c.spn.independence_threshold > 0.0 && c.spn.independence_threshold < 1.0,
          "spn.independence_threshold must be in (0,1)");
  require(c.spn.smoothing > 0.0, "spn.smoothing must be positive");
  require(c.spn.bins >= 1, "spn.bins must be >= 1");
  require(c.alpha >= 0.0, "query.alpha must be >= 0");
  require(c.time_limit_seconds > 0.0, "query.time_limit must be positive");
  require(c.fold_count >= 2, "protocol.folds must be >= 2");
  require(c.users_sampled >= 1, "protocol.users_sampled must be >= 1");
  require(c.items_per_user >= 1, "protocol.items_per_user must be >= 1");
  require(c.query.k >= 1, "query.k must be >= 1");
  for (const auto& cell : c.cells) require(cell.k >= 1, "protocol.cells k must be >= 1");
  require(c.binarize || c.aggregator == Aggregator::Mean,
          to_string(c.aggregator) + " aggregation needs binarized data");
  require(c.binarize || c.rating_scale > 0 || c.schema.value_column.empty(),
          "non-binarized ratings need preprocess.rating_scale");
  if (!c.synthetic && c.item_meta_path.empty()) {
    require(c.category_strategy == CategoryStrategy::SingleCategory,
            "category strategy " + to_string(c.category_strategy) + " needs data.item_meta");
  }
  if (!c.interactions_path.empty()) {
    require(fs::is_regular_file(c.interactions_path),
            "interaction file '" + c.interactions_path + "' does not exist");
  }
  if (!c.item_meta_path.empty()) {
    require(fs::is_regular_file(c.item_meta_path),
            "item metadata file '" + c.item_meta_path + "' does not exist");
  }
  return c;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

json parse_json(const std::string& text, ErrorKind kind, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(kind, what + ": " + e.what());
  }
}

}  // namespace

std::string ExperimentConfig::artifact_hash() const {
  const json doc = config_doc(*this);
  json key = {{"data", doc["data"]},     {"preprocess", doc["preprocess"]},
              {"categories", doc["categories"]}, {"ease", doc["ease"]},
              {"spn", doc["spn"]},       {"folds", fold_count},
              {"seed", seed}};
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(key.dump())));
  return std::string(buf, 12);
}

ExperimentConfig parse_config(const std::string& json_text, const std::string& base_dir) {
  const json user = parse_json(json_text, ErrorKind::Config, "config is not valid JSON");
  json doc = config_doc(ExperimentConfig{});
  strict_merge(doc, user, "");
  return from_doc(doc, base_dir);
}

ExperimentConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = csv::read_file(path);
  } catch (const Error& e) {
    fail(ErrorKind::Config, e.what());
  }
  const fs::path parent = fs::path(path).parent_path();
  return parse_config(text, parent.empty() ? "." : parent.string());
}

ExperimentConfig patch_config(const ExperimentConfig& base, const std::string& json_patch) {
  const json patch = parse_json(json_patch, ErrorKind::Config, "config patch is not valid JSON");
  json doc = config_doc(base);
  strict_merge(doc, patch, "");
  return from_doc(doc, ".");
}

std::string config_to_json(const ExperimentConfig& config) { return config_doc(config).dump(2); }

// --- data and training -------------------------------------------------------

PreparedData prepare_data(const ExperimentConfig& config) {
  InteractionMatrix m;
  std::string meta_text;
  CsvSchema schema = config.schema;
  if (config.synthetic) {
    const SyntheticData syn = generate_synthetic(*config.synthetic);
    m = parse_interactions(syn.interactions_csv, CsvSchema{});
    meta_text = syn.item_meta_csv;
  } else {
    m = load_interactions(config.interactions_path, schema);
    if (!config.item_meta_path.empty()) meta_text = csv::read_file(config.item_meta_path);
  }
  if (m.domain().kind == ValueDomain::Kind::Raw) {
    if (config.rating_scale > 0) m = normalize_ratings(m, config.rating_scale);
  }
  if (config.binarize) m = binarize(m);
  if (m.domain().kind == ValueDomain::Kind::Raw) {
    fail(ErrorKind::Config, "raw interaction values need binarize or rating_scale");
  }
  m = prune(m, config.min_user_interactions, config.min_item_interactions);
  if (m.n_items() < 2) fail(ErrorKind::Data, "fewer than two items after pruning");

  PreparedData out;
  if (meta_text.empty()) {
    out.categories = single_category_map(m.n_items());
  } else {
    out.categories = build_category_map(parse_item_meta(meta_text, m), config.category_strategy);
  }
  if (config.fold_count > m.n_users()) {
    fail(ErrorKind::Data, "protocol.folds exceeds the number of users after pruning");
  }
  out.folds = split_folds(m, config.fold_count, config.seed);
  out.ce_domain = m.domain();
  out.matrix = std::move(m);
  return out;
}

std::string ease_artifact(const ExperimentConfig& config, int fold) {
  return (fs::path(config.output_dir) /
          ("ease_" + config.artifact_hash() + "_fold" + std::to_string(fold) + ".json"))
      .string();
}

std::string spn_artifact(const ExperimentConfig& config, int fold) {
  return (fs::path(config.output_dir) /
          ("spn_" + config.artifact_hash() + "_fold" + std::to_string(fold) + ".json"))
      .string();
}

namespace {

Eigen::MatrixXd aggregated_rows(const InteractionMatrix& m, const std::vector<int>& users,
                                const CategoryMap& cmap, Aggregator agg) {
  Eigen::MatrixXd z(static_cast<Eigen::Index>(users.size()), cmap.n_categories());
  for (std::size_t r = 0; r < users.size(); ++r) {
    const auto v = aggregate(m.dense_row(users[r]), cmap, agg);
    for (int j = 0; j < cmap.n_categories(); ++j) z(static_cast<Eigen::Index>(r), j) = v[j];
  }
  return z;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create output directory '" + dir + "': " + ec.message());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write '" + path + "'");
  out << text;
  if (!out) fail(ErrorKind::Io, "failed writing '" + path + "'");
}

/// Loads the fold's artifacts, training and saving them first if missing.
FoldModels fold_models(const ExperimentConfig& config, const PreparedData& data, int fold) {
  if (fs::exists(ease_artifact(config, fold)) && fs::exists(spn_artifact(config, fold))) {
    return load_fold(config, fold);
  }
  FoldModels models = train_fold(config, data, fold);
  ensure_dir(config.output_dir);
  save_ease(models.ease, ease_artifact(config, fold));
  save_spn(models.spn, spn_artifact(config, fold));
  return models;
}

int require_user(const PreparedData& data, const std::string& id) {
  const auto u = data.matrix.find_user(id);
  if (!u) fail(ErrorKind::Data, "unknown user id '" + id + "'");
  return *u;
}

int require_item(const PreparedData& data, const std::string& id) {
  const auto i = data.matrix.find_item(id);
  if (!i) fail(ErrorKind::Data, "unknown item id '" + id + "'");
  return *i;
}

SolveLimits limits_for(const ExperimentConfig& config) {
  SolveLimits lim;
  lim.time_limit_seconds = config.time_limit_seconds;
  lim.seed = config.seed;
  return lim;
}

}  // namespace

FoldModels train_fold(const ExperimentConfig& config, const PreparedData& data, int fold) {
  if (fold < 0 || fold >= data.folds.fold_count) fail(ErrorKind::InvalidArgument, "fold out of range");
  const std::vector<int> users = data.folds.users_not_in(fold);
  FoldModels out;
  out.ease = train_ease(select_users(data.matrix, users), config.ease);
  const Eigen::MatrixXd z = aggregated_rows(data.matrix, users, data.categories, config.aggregator);
  SpnParams params = config.spn;
  params.seed = config.seed * 1000003ULL + static_cast<std::uint64_t>(fold);
  out.spn = learn_spn(z, feature_domains(data.categories, config.aggregator), config.aggregator, params);
  return out;
}

TrainSummary cmd_train(const ExperimentConfig& config) {
  const PreparedData data = prepare_data(config);
  ensure_dir(config.output_dir);
  TrainSummary summary;
  summary.hash = config.artifact_hash();
  json folds = json::array();
  for (int f = 0; f < config.fold_count; ++f) {
    const FoldModels models = train_fold(config, data, f);
    summary.ease_files.push_back(ease_artifact(config, f));
    summary.spn_files.push_back(spn_artifact(config, f));
    save_ease(models.ease, summary.ease_files.back());
    save_spn(models.spn, summary.spn_files.back());
    json users = json::array();
    for (int u : data.folds.users_in(f)) users.push_back(data.matrix.user_ids()[u]);
    folds.push_back({{"fold", f},
                     {"held_out_users", users},
                     {"ease", summary.ease_files.back()},
                     {"spn", summary.spn_files.back()},
                     {"median_train_ll", models.spn.median_train_ll}});
  }
  json categories = json::array();
  for (int j = 0; j < data.categories.n_categories(); ++j) {
    json items = json::array();
    for (int i : data.categories.members[j]) items.push_back(data.matrix.item_ids()[i]);
    categories.push_back({{"label", data.categories.labels[j]}, {"items", items}});
  }
  const json manifest = {{"hash", summary.hash},
                         {"config", config_doc(config)},
                         {"users", data.matrix.n_users()},
                         {"items", data.matrix.n_items()},
                         {"interactions", data.matrix.nnz()},
                         {"categories", categories},
                         {"folds", folds}};
  summary.manifest_file =
      (fs::path(config.output_dir) / ("manifest_" + summary.hash + ".json")).string();
  write_text(summary.manifest_file, manifest.dump(2));
  write_id_maps(data.matrix,
                (fs::path(config.output_dir) / ("ids_" + summary.hash + ".json")).string());
  return summary;
}

FoldModels load_fold(const ExperimentConfig& config, int fold) {
  const std::string e = ease_artifact(config, fold);
  const std::string s = spn_artifact(config, fold);
  if (!fs::exists(e) || !fs::exists(s)) {
    fail(ErrorKind::Io, "artifacts for fold " + std::to_string(fold) + " missing; run train first");
  }
  return {load_ease(e), load_spn(s)};
}

// --- queries ----------------------------------------------------------------

CeQuery make_query(const ExperimentConfig& config, const CellSpec& cell, const PreparedData& data,
                   const FoldModels& models, int user, int item) {
  const int d = data.matrix.n_items();
  if (cell.k >= d) fail(ErrorKind::Config, "k must be smaller than the item count");
  CeQuery q;
  q.factual = data.matrix.dense_row(user);
  q.target_item = item;
  q.k_context = cell.k;
  q.decrease_only = config.decrease_only;
  q.fix_target = config.fix_target;
  q.domain = data.ce_domain;
  if (cell.validity == ValidityKind::RankDrop) {
    q.validity = RankDrop{cell.k};
  } else {
    const auto y = score(models.ease, q.factual);
    const auto top = top_k(y, cell.k);
    q.validity = ScoreThreshold{y[top.back()]};
  }
  switch (cell.spn_mode) {
    case SpnModeKind::None: q.spn_mode = NoSpn{}; break;
    case SpnModeKind::Threshold:
      q.spn_mode = SpnThreshold{config.threshold.value_or(models.spn.median_train_ll)};
      break;
    case SpnModeKind::Optimize: q.spn_mode = SpnOptimize{config.alpha}; break;
  }
  return q;
}

ValidityReport verify_ce(const EaseModel& model, const CeQuery& query,
                         std::span<const double> counterfactual) {
  ValidityReport r;
  const int d = model.n_items();
  const int c = query.target_item;
  const auto y = score(model, counterfactual);
  r.target_score = y[c];
  r.target_rank = 1;
  for (int j = 0; j < d; ++j) {
    if (j == c) continue;
    if (y[j] > y[c] || (y[j] == y[c] && j < c)) ++r.target_rank;
  }
  r.leaves_top_k = r.target_rank > query.k_context;
  for (int l = 0; l < d; ++l) {
    const double v = counterfactual[l];
    if (query.decrease_only && v > query.factual[l] + 1e-12) r.decrease_only_ok = false;
    if (v != 0.0 && !query.domain.contains(v)) r.domain_ok = false;
  }
  if (const auto* st = std::get_if<ScoreThreshold>(&query.validity)) {
    r.score_ok = r.target_score <= st->tau + 1e-6;
    r.valid = *r.score_ok && r.decrease_only_ok && r.domain_ok;
  } else {
    r.valid = r.leaves_top_k && r.decrease_only_ok && r.domain_ok;
  }
  return r;
}

ExplainReport cmd_explain(const ExperimentConfig& config, const std::string& user_id,
                          const std::string& item_id) {
  const PreparedData data = prepare_data(config);
  const int user = require_user(data, user_id);
  const int item = require_item(data, item_id);
  ExplainReport rep;
  rep.user_id = user_id;
  rep.item_id = item_id;
  rep.fold = data.folds.assignment[user];
  rep.cell = config.query;
  const FoldModels models = fold_models(config, data, rep.fold);
  const CeQuery q = make_query(config, rep.cell, data, models, user, item);
  const auto top = top_k(score(models.ease, q.factual), rep.cell.k);
  rep.target_in_top_k = std::find(top.begin(), top.end(), item) != top.end();
  rep.result = explain(q, models.ease, &data.categories, &models.spn, limits_for(config));
  if (!rep.result.exact_ll && rep.result.has_solution()) {
    rep.result.exact_ll =
        log_likelihood(models.spn, aggregate(rep.result.counterfactual, data.categories, config.aggregator));
  }
  if (rep.result.has_solution()) rep.verdict = verify_ce(models.ease, q, rep.result.counterfactual);
  rep.median_train_ll = models.spn.median_train_ll;
  rep.item_ids = data.matrix.item_ids();
  return rep;
}

std::string explain_to_json(const ExplainReport& r) {
  const CeResult& c = r.result;
  json changed = json::array();
  for (const auto& ch : c.changed_items) {
    changed.push_back({{"item", r.item_ids.empty() ? std::to_string(ch.item) : r.item_ids[ch.item]},
                       {"index", ch.item},
                       {"old", ch.old_value},
                       {"new", ch.new_value}});
  }
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json doc = {{"user", r.user_id},
              {"item", r.item_id},
              {"fold", r.fold},
              {"cell", cell_json(r.cell)},
              {"target_in_top_k", r.target_in_top_k},
              {"status", to_string(c.status)},
              {"solve_seconds", c.solve_seconds},
              {"nodes", c.nodes},
              {"objective_bound", c.objective_bound},
              {"median_train_ll", opt(r.median_train_ll)}};
  if (c.has_solution()) {
    doc["counterfactual"] = c.counterfactual;
    doc["changed_items"] = changed;
    doc["l1_distance"] = c.l1_distance;
    doc["exact_ll"] = opt(c.exact_ll);
    doc["encoded_ll"] = opt(c.encoded_ll);
    doc["objective"] = c.objective;
    doc["target_rank"] = c.target_rank;
    doc["target_score"] = c.target_score;
    doc["valid_rank_drop"] = c.valid_rank_drop;
    doc["verdict"] = {{"target_rank", r.verdict.target_rank},
                      {"leaves_top_k", r.verdict.leaves_top_k},
                      {"decrease_only_ok", r.verdict.decrease_only_ok},
                      {"domain_ok", r.verdict.domain_ok},
                      {"score_ok", r.verdict.score_ok ? json(*r.verdict.score_ok) : json(nullptr)},
                      {"valid", r.verdict.valid}};
  }
  return doc.dump(2);
}

std::string cmd_export_mps(const ExperimentConfig& config, const std::string& user_id,
                           const std::string& item_id, const std::string& path) {
  const PreparedData data = prepare_data(config);
  const int user = require_user(data, user_id);
  const int item = require_item(data, item_id);
  const int fold = data.folds.assignment[user];
  const FoldModels models = fold_models(config, data, fold);
  const CeQuery q = make_query(config, config.query, data, models, user, item);
  const CeModel ce = compile(q, models.ease, &data.categories, &models.spn);
  std::string out = path;
  if (out.empty()) {
    ensure_dir(config.output_dir);
    out = (fs::path(config.output_dir) / ("query_" + user_id + "_" + item_id + ".mps")).string();
  }
  export_mps(ce.milp, out);
  return out;
}

ValidityReport cmd_verify(const ExperimentConfig& config, const std::string& explain_json) {
  const json doc = parse_json(explain_json, ErrorKind::Data, "counterfactual file is not valid JSON");
  std::string user_id, item_id;
  std::vector<double> cf;
  ExperimentConfig cfg = config;
  try {
    user_id = doc.at("user").get<std::string>();
    item_id = doc.at("item").get<std::string>();
    cf = doc.at("counterfactual").get<std::vector<double>>();
    if (doc.contains("cell")) {
      const json& cell = doc.at("cell");
      cfg.query.validity = parse_validity(cell.at("validity").get<std::string>());
      cfg.query.spn_mode = parse_spn_mode(cell.at("spn_mode").get<std::string>());
      cfg.query.k = cell.at("k").get<int>();
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Data, std::string("counterfactual file lacks a field: ") + e.what());
  }
  const PreparedData data = prepare_data(cfg);
  const int user = require_user(data, user_id);
  const int item = require_item(data, item_id);
  const FoldModels models = fold_models(cfg, data, data.folds.assignment[user]);
  if (static_cast<int>(cf.size()) != data.matrix.n_items()) {
    fail(ErrorKind::Data, "counterfactual length does not match the item count");
  }
  const CeQuery q = make_query(cfg, cfg.query, data, models, user, item);
  return verify_ce(models.ease, q, cf);
}

// --- benchmark --------------------------------------------------------------

CellMetrics summarize(const CellSpec& cell, std::span<const QueryRecord> records) {
  CellMetrics m;
  m.cell = cell;
  std::vector<double> lls, l1s, times;
  int still = 0;
  for (const QueryRecord& r : records) {
    ++m.attempts;
    times.push_back(r.solve_seconds);
    switch (r.status) {
      case CeStatus::Optimal: ++m.optimal; [[fallthrough]];
      case CeStatus::FeasibleTimeLimit:
        ++m.successes;
        l1s.push_back(r.l1_distance);
        if (r.exact_ll) lls.push_back(*r.exact_ll);
        still += r.still_in_top_k;
        break;
      case CeStatus::Infeasible: ++m.infeasible; break;
      case CeStatus::TimeLimitNoSolution: ++m.time_limit; break;
    }
  }
  auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
    mean = sd = 0.0;
    if (v.empty()) return;
    mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() < 2) return;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  };
  mean_std(lls, m.ll_mean, m.ll_std);
  mean_std(l1s, m.l1_mean, m.l1_std);
  double unused = 0.0;
  mean_std(times, m.time_mean, unused);
  if (!times.empty()) {
    std::sort(times.begin(), times.end());
    const std::size_t n = times.size();
    m.time_median = n % 2 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
  }
  if (m.attempts > 0) {
    m.success_rate = static_cast<double>(m.successes) / m.attempts;
    m.optimal_rate = static_cast<double>(m.optimal) / m.attempts;
  }
  if (m.successes > 0) m.still_in_top_k = static_cast<double>(still) / m.successes;
  const int failures = m.attempts - m.successes;
  if (failures > 0) m.infeasible_share_of_failures = static_cast<double>(m.infeasible) / failures;
  return m;
}

MetricsReport run_benchmark(const ExperimentConfig& config) {
  const PreparedData data = prepare_data(config);
  const std::vector<CellSpec> cells = config.cells.empty() ? std::vector<CellSpec>{config.query}
                                                           : config.cells;
  int k_max = 1;
  for (const auto& c : cells) k_max = std::max(k_max, c.k);

  MetricsReport report;
  report.hash = config.artifact_hash();
  const SolveLimits limits = limits_for(config);
  for (int f = 0; f < config.fold_count; ++f) {
    const FoldModels models = fold_models(config, data, f);
    std::vector<int> pool;
    for (int u : config.sample_held_out ? data.folds.users_in(f) : data.folds.users_not_in(f)) {
      if (static_cast<int>(data.matrix.row(u).size()) >= k_max) pool.push_back(u);
    }
    Rng rng(config.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(f + 1)));
    rng.shuffle(std::span<int>(pool));
    if (static_cast<int>(pool.size()) > config.users_sampled) pool.resize(config.users_sampled);

    for (int u : pool) {
      const auto factual = data.matrix.dense_row(u);
      const auto y = score(models.ease, factual);
      const auto items = top_k(y, std::min(config.items_per_user, data.matrix.n_items()));
      for (int item : items) {
        for (const CellSpec& cell : cells) {
          QueryRecord rec;
          rec.cell = cell.label();
          rec.fold = f;
          rec.user_id = data.matrix.user_ids()[u];
          rec.item_id = data.matrix.item_ids()[item];
          const CeQuery q = make_query(config, cell, data, models, u, item);
          if (const auto* t = std::get_if<SpnThreshold>(&q.spn_mode)) rec.threshold = t->threshold;
          CeResult r;
          try {
            r = explain(q, models.ease, &data.categories, &models.spn, limits);
          } catch (const Error& e) {
            if (e.kind() != ErrorKind::Numeric) throw;
            r.status = CeStatus::TimeLimitNoSolution;  // unresolved numerics count as failures
          }
          rec.status = r.status;
          rec.solve_seconds = r.solve_seconds;
          rec.nodes = r.nodes;
          if (r.has_solution()) {
            rec.l1_distance = r.l1_distance;
            rec.exact_ll = log_likelihood(
                models.spn, aggregate(r.counterfactual, data.categories, config.aggregator));
            rec.encoded_ll = r.encoded_ll;
            const ValidityReport v = verify_ce(models.ease, q, r.counterfactual);
            rec.target_rank = v.target_rank;
            rec.still_in_top_k = !v.leaves_top_k;
            rec.verified = v.valid;
          }
          report.records.push_back(std::move(rec));
        }
      }
    }
  }
  for (const CellSpec& cell : cells) {
    std::vector<QueryRecord> mine;
    for (const auto& r : report.records) {
      if (r.cell == cell.label()) mine.push_back(r);
    }
    report.cells.push_back(summarize(cell, mine));
  }
  return report;
}

std::string report_to_json(const MetricsReport& report, bool with_records) {
  json cells = json::array();
  for (const CellMetrics& m : report.cells) {
    cells.push_back({{"cell", m.cell.label()},
                     {"validity", to_string(m.cell.validity)},
                     {"spn_mode", to_string(m.cell.spn_mode)},
                     {"k", m.cell.k},
                     {"attempts", m.attempts},
                     {"successes", m.successes},
                     {"optimal", m.optimal},
                     {"infeasible", m.infeasible},
                     {"time_limit", m.time_limit},
                     {"success_rate", m.success_rate},
                     {"optimal_rate", m.optimal_rate},
                     {"ll_mean", m.ll_mean},
                     {"ll_std", m.ll_std},
                     {"l1_mean", m.l1_mean},
                     {"l1_std", m.l1_std},
                     {"time_mean", m.time_mean},
                     {"time_median", m.time_median},
                     {"still_in_top_k", m.still_in_top_k},
                     {"infeasible_share_of_failures", m.infeasible_share_of_failures}});
  }
  json doc = {{"hash", report.hash}, {"cells", cells}};
  if (with_records) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json recs = json::array();
    for (const QueryRecord& r : report.records) {
      recs.push_back({{"cell", r.cell},
                      {"fold", r.fold},
                      {"user", r.user_id},
                      {"item", r.item_id},
                      {"status", to_string(r.status)},
                      {"l1_distance", r.l1_distance},
                      {"exact_ll", opt(r.exact_ll)},
                      {"encoded_ll", opt(r.encoded_ll)},
                      {"threshold", opt(r.threshold)},
                      {"solve_seconds", r.solve_seconds},
                      {"nodes", r.nodes},
                      {"target_rank", r.target_rank},
                      {"still_in_top_k", r.still_in_top_k},
                      {"verified", r.verified}});
    }
    doc["records"] = recs;
  }
  return doc.dump(2);
}

std::string report_to_csv(const MetricsReport& report) {
  std::ostringstream out;
  out.precision(10);
  out << "cell,validity,spn_mode,k,attempts,successes,optimal,infeasible,time_limit,"
         "success_rate,optimal_rate,ll_mean,ll_std,l1_mean,l1_std,time_mean,time_median,"
         "still_in_top_k,infeasible_share_of_failures\n";
  for (const CellMetrics& m : report.cells) {
    out << m.cell.label() << "," << to_string(m.cell.validity) << "," << to_string(m.cell.spn_mode)
        << "," << m.cell.k << "," << m.attempts << "," << m.successes << "," << m.optimal << ","
        << m.infeasible << "," << m.time_limit << "," << m.success_rate << "," << m.optimal_rate
        << "," << m.ll_mean << "," << m.ll_std << "," << m.l1_mean << "," << m.l1_std << ","
        << m.time_mean << "," << m.time_median << "," << m.still_in_top_k << ","
        << m.infeasible_share_of_failures << "\n";
  }
  return out.str();
}

std::vector<std::string> write_report(const ExperimentConfig& config, const MetricsReport& report) {
  ensure_dir(config.output_dir);
  const fs::path dir(config.output_dir);
  const std::string csv_path = (dir / ("metrics_" + report.hash + ".csv")).string();
  const std::string json_path = (dir / ("metrics_" + report.hash + ".json")).string();
  write_text(csv_path, report_to_csv(report));
  write_text(json_path, report_to_json(report));
  return {csv_path, json_path};
}

}  // namespace cfrec
