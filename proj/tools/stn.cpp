// Command-line front end over the shared-library C API.
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stnagnn.h"

namespace {

struct SpecDeleter {
  void operator()(stn_spec* s) const { stn_spec_free(s); }
};
using SpecPtr = std::unique_ptr<stn_spec, SpecDeleter>;

struct CommonFlags {
  std::string spec_path;
  std::string seed;
  std::string backbone;
  std::string pe;
  std::string aggregator;
  std::string windows;
  std::string edge_source;
  std::string out;
  std::string parallel_folds;
};

void add_common_flags(CLI::App* cmd, CommonFlags* flags) {
  cmd->add_option("--spec", flags->spec_path, "experiment spec JSON file");
  cmd->add_option("--seed", flags->seed, "top-level RNG seed");
  cmd->add_option("--backbone", flags->backbone, "graph backbone: gcn or gat");
  cmd->add_option("--pe", flags->pe, "positional encoding: none, raster1d, st2d");
  cmd->add_option("--aggregator", flags->aggregator, "aggregator: attention or lstm");
  cmd->add_option("--windows", flags->windows, "snapshot count T");
  cmd->add_option("--edge-source", flags->edge_source, "edge frames: BIOL, SCRAM, or ALL");
  cmd->add_option("--out", flags->out, "output directory");
  cmd->add_option("--parallel-folds", flags->parallel_folds, "concurrent CV folds");
}

// Returns a loaded spec or exits with the library's error message.
SpecPtr build_spec(const CommonFlags& flags, int* exit_code) {
  SpecPtr spec(stn_spec_create());
  if (!spec) {
    std::fprintf(stderr, "error: %s\n", stn_last_error());
    *exit_code = STN_INTERNAL_ERROR;
    return nullptr;
  }
  auto apply = [&](stn_status st) {
    if (st == STN_OK) return true;
    std::fprintf(stderr, "error: %s\n", stn_last_error());
    *exit_code = st;
    return false;
  };
  if (!flags.spec_path.empty() && !apply(stn_spec_parse_file(spec.get(), flags.spec_path.c_str())))
    return nullptr;
  const std::pair<const char*, const std::string*> overrides[] = {
      {"seed", &flags.seed},
      {"model.backbone", &flags.backbone},
      {"model.pe_mode", &flags.pe},
      {"model.aggregator", &flags.aggregator},
      {"graph.windows", &flags.windows},
      {"graph.edge_source", &flags.edge_source},
      {"output_dir", &flags.out},
      {"train.parallel_folds", &flags.parallel_folds},
  };
  for (const auto& [key, value] : overrides)
    if (!value->empty() && !apply(stn_spec_set(spec.get(), key, value->c_str())))
      return nullptr;
  return spec;
}

int run(stn_status st, char* summary) {
  if (st != STN_OK) {
    std::fprintf(stderr, "error: %s\n", stn_last_error());
    return st;
  }
  if (summary) std::printf("%s\n", summary);
  stn_free(summary);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatio-temporal graph classification experiments"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string checkpoint;
  std::string grid = "pe";

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  CLI::App* build = app.add_subcommand("build", "construct and export graph instances");
  CLI::App* train = app.add_subcommand("train", "cross-validated training run");
  CLI::App* explain = app.add_subcommand("explain", "node-importance maps from a checkpoint");
  CLI::App* attnviz = app.add_subcommand("attnviz", "attention heatmaps per encoding mode");
  CLI::App* ablate = app.add_subcommand("ablate", "run an ablation grid");
  for (CLI::App* cmd : {synth, build, train, explain, attnviz, ablate})
    add_common_flags(cmd, &flags);
  explain->add_option("--checkpoint", checkpoint, "fold checkpoint JSON");
  attnviz->add_option("--checkpoint", checkpoint, "parameter checkpoint (default: random)");
  attnviz->add_flag("--random-params", "use seeded random parameters (the default)");
  ablate->add_option("--grid", grid, "pe, graph, or aggregator");

  CLI11_PARSE(app, argc, argv);

  int exit_code = 0;
  SpecPtr spec = build_spec(flags, &exit_code);
  if (!spec) return exit_code;

  char* summary = nullptr;
  if (synth->parsed()) return run(stn_run_synth(spec.get(), &summary), summary);
  if (build->parsed()) return run(stn_run_build(spec.get(), &summary), summary);
  if (train->parsed()) return run(stn_run_train(spec.get(), &summary), summary);
  if (explain->parsed())
    return run(stn_run_explain(spec.get(), checkpoint.empty() ? nullptr : checkpoint.c_str(),
                               &summary),
               summary);
  if (attnviz->parsed())
    return run(stn_run_attnviz(spec.get(), checkpoint.empty() ? nullptr : checkpoint.c_str(),
                               &summary),
               summary);
  if (ablate->parsed()) return run(stn_run_ablate(spec.get(), grid.c_str(), &summary), summary);
  return 0;
}
