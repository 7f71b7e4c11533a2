// Command-line front end. Talks to the engine only through the C API.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cfrec/cfrec.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

int exit_code(cfrec_status s) {
  switch (s) {
    case CFREC_OK: return kExitOk;
    case CFREC_ERR_INVALID_ARGUMENT:
    case CFREC_ERR_CONFIG: return kExitConfig;
    case CFREC_ERR_DATA:
    case CFREC_ERR_IO: return kExitData;
    default: return kExitFailure;
  }
}

struct Failed {
  int code;
};

void check(cfrec_status s) {
  if (s == CFREC_OK) return;
  std::cerr << "cfrec: " << cfrec_last_error() << "\n";
  throw Failed{exit_code(s)};
}

// Owns a string handed out by the library.
struct Text {
  char* p = nullptr;
  ~Text() { cfrec_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

struct Config {
  cfrec_config* p = nullptr;
  ~Config() { cfrec_config_free(p); }
};

struct Overrides {
  std::string config_path;
  std::string output_dir;
  std::vector<std::string> sets;
  std::optional<int> k;
  std::string validity;
  std::string spn_mode;
  std::optional<double> alpha;
  std::optional<double> threshold;
  std::optional<double> time_limit;
  std::optional<int> users;
  std::optional<std::uint64_t> seed;

  nlohmann::json patch() const {
    nlohmann::json p = nlohmann::json::object();
    for (const auto& s : sets) {
      nlohmann::json one;
      try {
        one = nlohmann::json::parse(s);
      } catch (const nlohmann::json::exception& e) {
        std::cerr << "cfrec: --set is not valid JSON: " << e.what() << "\n";
        throw Failed{kExitConfig};
      }
      p.merge_patch(one);
    }
    if (k) p["query"]["k"] = *k;
    if (!validity.empty()) p["query"]["validity"] = validity;
    if (!spn_mode.empty()) p["query"]["spn_mode"] = spn_mode;
    if (alpha) p["query"]["alpha"] = *alpha;
    if (threshold) p["query"]["threshold"] = *threshold;
    if (time_limit) p["query"]["time_limit"] = *time_limit;
    if (users) p["protocol"]["users_sampled"] = *users;
    if (seed) p["seed"] = *seed;
    if (!output_dir.empty()) p["output_dir"] = output_dir;
    return p;
  }
};

void load(Config& cfg, const Overrides& o) {
  check(cfrec_config_load(o.config_path.c_str(), &cfg.p));
  const nlohmann::json patch = o.patch();
  if (!patch.empty()) check(cfrec_config_patch(cfg.p, patch.dump().c_str()));
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text << "\n";
    return;
  }
  std::ofstream f(out_path);
  if (!f || !(f << text << "\n")) {
    std::cerr << "cfrec: cannot write " << out_path << "\n";
    throw Failed{kExitData};
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual explanations for top-k recommendations"};
  app.require_subcommand(1);
  Overrides o;
  std::string user, item, out, cf_path;

  auto common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", o.config_path, "JSON config file")->required();
    sub->add_option("--output-dir", o.output_dir, "Override output directory");
    sub->add_option("--set", o.sets, "JSON merge patch applied to the config (repeatable)");
    sub->add_option("--seed", o.seed, "Override seed");
  };
  auto query_flags = [&](CLI::App* sub) {
    sub->add_option("-k", o.k, "Top-k size");
    sub->add_option("--validity", o.validity, "rank or score");
    sub->add_option("--spn-mode", o.spn_mode, "none, threshold or optimize");
    sub->add_option("--alpha", o.alpha, "Plausibility weight (optimize)");
    sub->add_option("--threshold", o.threshold, "Log-likelihood floor (threshold)");
    sub->add_option("--time-limit", o.time_limit, "Seconds per query");
  };

  auto* train = app.add_subcommand("train", "Train EASE and SPN artifacts for every fold");
  common(train);

  auto* explain = app.add_subcommand("explain", "Counterfactual for one user and item");
  common(explain);
  query_flags(explain);
  explain->add_option("-u,--user", user, "User id")->required();
  explain->add_option("-i,--item", item, "Item id")->required();
  explain->add_option("-o,--out", out, "Write the result here instead of stdout");

  auto* bench = app.add_subcommand("benchmark", "Run the evaluation protocol");
  common(bench);
  bench->add_option("--time-limit", o.time_limit, "Seconds per query");
  bench->add_option("--users", o.users, "Users sampled per fold");
  bench->add_option("-o,--out", out, "Also write the summary here");

  auto* mps = app.add_subcommand("export-mps", "Write one query's MILP in MPS format");
  common(mps);
  query_flags(mps);
  mps->add_option("-u,--user", user, "User id")->required();
  mps->add_option("-i,--item", item, "Item id")->required();
  mps->add_option("-o,--out", out, "MPS path (default: output dir)");

  auto* verify = app.add_subcommand("verify", "Re-check a counterfactual from explain");
  common(verify);
  verify->add_option("--cf", cf_path, "explain output JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    Config cfg;
    load(cfg, o);
    Text result;
    if (*train) {
      check(cfrec_train(cfg.p, &result.p));
      emit(result.str(), "");
    } else if (*explain) {
      check(cfrec_explain(cfg.p, user.c_str(), item.c_str(), &result.p));
      emit(result.str(), out);
    } else if (*bench) {
      check(cfrec_benchmark(cfg.p, &result.p));
      emit(result.str(), out);
    } else if (*mps) {
      check(cfrec_export_mps(cfg.p, user.c_str(), item.c_str(), out.empty() ? nullptr : out.c_str(),
                             &result.p));
      std::cout << result.str() << "\n";
    } else if (*verify) {
      std::ifstream f(cf_path);
      if (!f) {
        std::cerr << "cfrec: cannot read " << cf_path << "\n";
        return kExitData;
      }
      std::stringstream ss;
      ss << f.rdbuf();
      check(cfrec_verify(cfg.p, ss.str().c_str(), &result.p));
      std::cout << result.str() << "\n";
      if (!nlohmann::json::parse(result.str()).value("valid", false)) return kExitFailure;
    }
  } catch (const Failed& f) {
    return f.code;
  }
  return kExitOk;
}
