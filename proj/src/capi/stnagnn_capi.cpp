#include "stnagnn.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "core/experiment.hpp"

struct stn_spec {
  stn::ExperimentSpec spec;
};

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

// Runs fn, translating exceptions into status codes + thread-local message.
template <typename Fn>
stn_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return STN_OK;
  } catch (const stn::Error& e) {
    g_last_error = e.what();
    return static_cast<stn_status>(static_cast<int>(e.status()));
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return STN_INTERNAL_ERROR;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return STN_INTERNAL_ERROR;
  } catch (...) {
    g_last_error = "unknown error";
    return STN_INTERNAL_ERROR;
  }
}

stn_status require_spec(const stn_spec* spec) {
  if (spec) return STN_OK;
  g_last_error = "spec handle is NULL";
  return STN_INTERNAL_ERROR;
}

template <typename Fn>
stn_status run_command(const stn_spec* spec, char** summary_json, Fn&& command) {
  if (stn_status s = require_spec(spec); s != STN_OK) return s;
  return guarded([&] {
    nlohmann::json summary = command(spec->spec);
    if (summary_json) *summary_json = dup_string(summary.dump(2));
  });
}

}  // namespace

extern "C" {

const char* stn_last_error(void) { return g_last_error.c_str(); }

stn_spec* stn_spec_create(void) {
  try {
    return new stn_spec();
  } catch (...) {
    g_last_error = "out of memory";
    return nullptr;
  }
}

void stn_spec_free(stn_spec* spec) { delete spec; }

stn_status stn_spec_parse_file(stn_spec* spec, const char* path) {
  if (stn_status s = require_spec(spec); s != STN_OK) return s;
  if (!path) {
    g_last_error = "path is NULL";
    return STN_CONFIG_ERROR;
  }
  return guarded([&] {
    stn::ExperimentSpec parsed = spec->spec;
    std::string text;
    try {
      text = stn::read_text_file(path);
    } catch (const stn::DataError& e) {
      throw stn::ConfigError(std::string("cannot read spec file: ") + e.what());
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw stn::ConfigError("spec file " + std::string(path) + " is not valid JSON: " +
                             e.what());
    }
    stn::apply_spec_json(parsed, j);
    spec->spec = parsed;
  });
}

stn_status stn_spec_parse_json(stn_spec* spec, const char* json_text) {
  if (stn_status s = require_spec(spec); s != STN_OK) return s;
  if (!json_text) {
    g_last_error = "json_text is NULL";
    return STN_CONFIG_ERROR;
  }
  return guarded([&] {
    stn::ExperimentSpec parsed = spec->spec;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
      throw stn::ConfigError(std::string("spec is not valid JSON: ") + e.what());
    }
    stn::apply_spec_json(parsed, j);
    spec->spec = parsed;
  });
}

stn_status stn_spec_set(stn_spec* spec, const char* dotted_key, const char* value) {
  if (stn_status s = require_spec(spec); s != STN_OK) return s;
  if (!dotted_key || !value) {
    g_last_error = "key and value must not be NULL";
    return STN_CONFIG_ERROR;
  }
  return guarded([&] { stn::spec_set(spec->spec, dotted_key, value); });
}

char* stn_spec_resolved_json(const stn_spec* spec) {
  if (require_spec(spec) != STN_OK) return nullptr;
  try {
    return dup_string(stn::spec_to_json(stn::resolve_spec(spec->spec)).dump(2));
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return nullptr;
  }
}

void stn_free(char* s) { std::free(s); }

stn_status stn_run_synth(const stn_spec* spec, char** summary_json) {
  return run_command(spec, summary_json,
                     [](const stn::ExperimentSpec& s) { return stn::cmd_synth(s); });
}

stn_status stn_run_build(const stn_spec* spec, char** summary_json) {
  return run_command(spec, summary_json,
                     [](const stn::ExperimentSpec& s) { return stn::cmd_build(s); });
}

stn_status stn_run_train(const stn_spec* spec, char** summary_json) {
  return run_command(spec, summary_json,
                     [](const stn::ExperimentSpec& s) { return stn::cmd_train(s); });
}

stn_status stn_run_explain(const stn_spec* spec, const char* checkpoint, char** summary_json) {
  std::string ckpt = checkpoint ? checkpoint : "";
  return run_command(spec, summary_json, [ckpt](const stn::ExperimentSpec& s) {
    return stn::cmd_explain(s, ckpt);
  });
}

stn_status stn_run_attnviz(const stn_spec* spec, const char* checkpoint, char** summary_json) {
  std::string ckpt = checkpoint ? checkpoint : "";
  return run_command(spec, summary_json, [ckpt](const stn::ExperimentSpec& s) {
    return stn::cmd_attnviz(s, ckpt);
  });
}

stn_status stn_run_ablate(const stn_spec* spec, const char* grid, char** summary_json) {
  std::string g = grid ? grid : "pe";
  return run_command(spec, summary_json, [g](const stn::ExperimentSpec& s) {
    return stn::cmd_ablate(s, g);
  });
}

}  // extern "C"
