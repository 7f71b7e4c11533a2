#include "cfrec/cfrec.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include <json.hpp>

#include "cfrec/error.hpp"
#include "cfrec/harness.hpp"

struct cfrec_config {
  cfrec::ExperimentConfig config;
};

namespace {

thread_local std::string last_error;

cfrec_status status_of(cfrec::ErrorKind kind) {
  switch (kind) {
    case cfrec::ErrorKind::InvalidArgument: return CFREC_ERR_INVALID_ARGUMENT;
    case cfrec::ErrorKind::Config: return CFREC_ERR_CONFIG;
    case cfrec::ErrorKind::Data: return CFREC_ERR_DATA;
    case cfrec::ErrorKind::Io: return CFREC_ERR_IO;
    case cfrec::ErrorKind::Numeric: return CFREC_ERR_NUMERIC;
  }
  return CFREC_ERR_INTERNAL;
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <class F>
cfrec_status guarded(F&& f) {
  last_error.clear();
  try {
    f();
    return CFREC_OK;
  } catch (const cfrec::Error& e) {
    last_error = e.what();
    return status_of(e.kind());
  } catch (const std::exception& e) {
    last_error = std::string("internal error: ") + e.what();
  } catch (...) {
    last_error = "internal error";
  }
  return CFREC_ERR_INTERNAL;
}

void need(const void* p, const char* what) {
  if (!p) cfrec::fail(cfrec::ErrorKind::InvalidArgument, std::string(what) + " is null");
}

}  // namespace

extern "C" {

const char* cfrec_version(void) { return "0.1.0"; }

const char* cfrec_last_error(void) { return last_error.c_str(); }

void cfrec_string_free(char* s) { std::free(s); }

cfrec_status cfrec_config_load(const char* path, cfrec_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new cfrec_config{cfrec::load_config(path)};
  });
}

cfrec_status cfrec_config_parse(const char* json, const char* base_dir, cfrec_config** out) {
  return guarded([&] {
    need(json, "json");
    need(out, "out");
    *out = new cfrec_config{cfrec::parse_config(json, base_dir ? base_dir : ".")};
  });
}

cfrec_status cfrec_config_patch(cfrec_config* config, const char* json_patch) {
  return guarded([&] {
    need(config, "config");
    need(json_patch, "patch");
    config->config = cfrec::patch_config(config->config, json_patch);
  });
}

cfrec_status cfrec_config_to_json(const cfrec_config* config, char** out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    *out = dup(cfrec::config_to_json(config->config));
  });
}

cfrec_status cfrec_config_output_dir(const cfrec_config* config, char** out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    *out = dup(config->config.output_dir);
  });
}

void cfrec_config_free(cfrec_config* config) { delete config; }

cfrec_status cfrec_train(const cfrec_config* config, char** summary_json) {
  return guarded([&] {
    need(config, "config");
    need(summary_json, "out");
    const cfrec::TrainSummary s = cfrec::cmd_train(config->config);
    const nlohmann::json doc = {{"hash", s.hash},
                                {"ease", s.ease_files},
                                {"spn", s.spn_files},
                                {"manifest", s.manifest_file}};
    *summary_json = dup(doc.dump(2));
  });
}

cfrec_status cfrec_explain(const cfrec_config* config, const char* user_id, const char* item_id,
                           char** result_json) {
  return guarded([&] {
    need(config, "config");
    need(user_id, "user id");
    need(item_id, "item id");
    need(result_json, "out");
    *result_json = dup(cfrec::explain_to_json(cfrec::cmd_explain(config->config, user_id, item_id)));
  });
}

cfrec_status cfrec_benchmark(const cfrec_config* config, char** report_json) {
  return guarded([&] {
    need(config, "config");
    need(report_json, "out");
    const cfrec::MetricsReport r = cfrec::run_benchmark(config->config);
    const auto files = cfrec::write_report(config->config, r);
    nlohmann::json doc = nlohmann::json::parse(cfrec::report_to_json(r, false));
    doc["files"] = files;
    *report_json = dup(doc.dump(2));
  });
}

cfrec_status cfrec_export_mps(const cfrec_config* config, const char* user_id, const char* item_id,
                              const char* path, char** written_path) {
  return guarded([&] {
    need(config, "config");
    need(user_id, "user id");
    need(item_id, "item id");
    need(written_path, "out");
    *written_path = dup(cfrec::cmd_export_mps(config->config, user_id, item_id, path ? path : ""));
  });
}

cfrec_status cfrec_verify(const cfrec_config* config, const char* explain_json,
                          char** verdict_json) {
  return guarded([&] {
    need(config, "config");
    need(explain_json, "counterfactual");
    need(verdict_json, "out");
    const cfrec::ValidityReport v = cfrec::cmd_verify(config->config, explain_json);
    nlohmann::json doc = {{"target_rank", v.target_rank},
                          {"target_score", v.target_score},
                          {"leaves_top_k", v.leaves_top_k},
                          {"decrease_only_ok", v.decrease_only_ok},
                          {"domain_ok", v.domain_ok},
                          {"score_ok", v.score_ok ? nlohmann::json(*v.score_ok) : nlohmann::json()},
                          {"valid", v.valid}};
    *verdict_json = dup(doc.dump(2));
  });
}

}  // extern "C"
