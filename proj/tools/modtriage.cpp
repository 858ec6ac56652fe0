// Copyright 2026 The modtriage Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line driver: one subcommand per pipeline stage, plus `all`.
//
// Exit status: 0 ok, 1 runtime failure, 2 bad config, 3 missing dependency,
// 4 artifact/config mismatch or leakage guard.

#include <iostream>

#include "CLI11.hpp"
#include "modtriage/classify.hpp"
#include "modtriage/pipeline.hpp"

namespace {

using namespace modtriage;

int dry_run(const std::vector<Stage>& stages, const RunConfig& cfg) {
  if (cfg.backend == Backend::kLlm) {
    load_prompt_config(cfg.resolve(cfg.prompt_dir)).validate();
  }
  std::cout << "config " << cfg.hash().substr(0, 16) << " -> "
            << cfg.run_dir().string() << "\n";
  // Within `all`, later stages depend on outputs of earlier ones in the run.
  const bool chained = stages.size() > 1;
  try {
    check_dependencies(stages.front(), cfg);
  } catch (const DependencyError& e) {
    std::cout << e.what() << "\n";
    return 3;
  }
  for (auto s : stages) {
    std::cout << "  " << to_string(s) << (chained ? " (planned)" : " ready")
              << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Modbus/TCP frame triage and audit pipeline"};
  app.require_subcommand(1);
  std::string config_path;
  std::string backend;
  bool dry = false;
  bool quiet = false;
  app.add_option("-c,--config", config_path, "run configuration (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--backend", backend, "override the classifier back end")
      ->check(CLI::IsMember({"llm", "rule", "baseline"}));
  app.add_flag("--dry-run", dry, "validate config and stage dependencies only");
  app.add_flag("-q,--quiet", quiet, "suppress warnings");

  std::vector<Stage> stages;
  for (auto s : all_stages()) {
    auto* sub = app.add_subcommand(std::string(to_string(s)),
                                   "run the " + std::string(to_string(s)) +
                                       " stage");
    sub->callback([&stages, s] { stages = {s}; });
  }
  app.add_subcommand("all", "run every stage in order")->callback([&stages] {
    stages = all_stages();
  });
  app.add_subcommand("hash", "print the run directory for the config");

  CLI11_PARSE(app, argc, argv);

  try {
    auto cfg = load_run_config(config_path);
    if (!backend.empty()) cfg.backend = *parse_backend(backend);
    if (app.got_subcommand("hash")) {
      std::cout << cfg.run_dir().string() << "\n";
      return 0;
    }
    if (dry) return dry_run(stages, cfg);
    for (auto s : stages) {
      auto outcome = run_stage(s, cfg);
      if (!quiet) {
        for (const auto& w : outcome.warnings) {
          std::cerr << "warning [" << to_string(s) << "]: " << w << "\n";
        }
      }
      std::cerr << to_string(s) << ": wrote";
      for (const auto& f : outcome.written) std::cerr << " " << f;
      std::cerr << "\n";
      if (!outcome.summary.empty()) std::cout << outcome.summary;
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DependencyError& e) {
    std::cerr << "dependency error: " << e.what() << "\n";
    return 3;
  } catch (const ArtifactMismatchError& e) {
    std::cerr << "refused: " << e.what() << "\n";
    return 4;
  } catch (const LeakageError& e) {
    std::cerr << "leakage guard: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
