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

#ifndef MODTRIAGE_PIPELINE_HPP_
#define MODTRIAGE_PIPELINE_HPP_

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "modtriage/classify.hpp"
#include "modtriage/common.hpp"
#include "modtriage/ingest.hpp"
#include "modtriage/labelsplit.hpp"
#include "modtriage/probes.hpp"
#include "modtriage/report.hpp"

namespace modtriage {

enum class Stage {
  kIngest,
  kLabel,
  kSplit,
  kFitBins,
  kClassify,
  kAudit,
  kProbe,
  kReport,
};

std::string_view to_string(Stage s);
std::optional<Stage> parse_stage(std::string_view s);
// Stages in execution order.
const std::vector<Stage>& all_stages();

enum class Backend { kRule, kBaseline, kLlm };
std::string_view to_string(Backend b);
std::optional<Backend> parse_backend(std::string_view s);

// A required artifact is missing; names the stage that produces it.
class DependencyError : public Error {
 public:
  DependencyError(Stage missing, const std::string& what)
      : Error(what), missing_(missing) {}
  Stage missing_stage() const { return missing_; }

 private:
  Stage missing_;
};

// An artifact in the run directory was written under a different config.
class ArtifactMismatchError : public Error {
 public:
  using Error::Error;
};

struct LlmSettings {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string api_key_env = "OPENAI_API_KEY";
  std::string model = "gpt-4o";
  DecodingSettings decoding;
  int max_attempts = kDefaultMaxAttempts;
  int timeout_s = 60;
};

struct RunConfig {
  std::vector<IngestPlanItem> captures;
  std::vector<std::filesystem::path> attack_logs;
  std::uint16_t modbus_port = 502;
  FlowKey flow_key = FlowKey::kPerDirectionPair;
  SplitPolicy split;
  std::int64_t bins_version = 1;
  // Keep non-strict edges (with a warning) instead of failing fit-bins.
  bool allow_degenerate_bins = false;
  Backend backend = Backend::kRule;
  // Local back ends also scored on the same test split for comparison.
  std::vector<Backend> compare;
  std::string auditor = "auto";  // auto, rule, llm
  std::filesystem::path prompt_dir = "prompts/classifier";
  std::filesystem::path auditor_prompt_dir = "prompts/auditor";
  LlmSettings llm;
  std::size_t parallelism = 4;
  std::vector<double> epsilons = default_epsilons();
  BootstrapSettings bootstrap;
  PriceTable prices;
  OverheadRange overhead;
  BaselineTrainOptions baseline;
  std::filesystem::path out_dir = "runs";

  // Relative paths above resolve against this directory. Not serialized.
  std::filesystem::path base_dir = ".";

  std::string to_json() const;
  static RunConfig from_json(std::string_view text,
                             const std::filesystem::path& base_dir = ".");
  // SHA-256 of to_json(); names the run directory.
  std::string hash() const;
  std::filesystem::path resolve(const std::filesystem::path& p) const;
  std::filesystem::path run_dir() const;
};

RunConfig load_run_config(const std::filesystem::path& path);

struct StageOutcome {
  Stage stage = Stage::kIngest;
  std::vector<std::string> written;
  Warnings warnings;
  std::string summary;  // text printed by the CLI, report stage only
};

struct PipelineOptions {
  // Replaces the HTTP transport for the llm back end and auditor.
  std::shared_ptr<ChatTransport> transport;
};

// Files a stage needs that earlier stages produce.
std::vector<std::filesystem::path> stage_inputs(Stage stage,
                                                const RunConfig& cfg);

// Throws DependencyError naming the first missing producer stage.
void check_dependencies(Stage stage, const RunConfig& cfg);

StageOutcome run_stage(Stage stage, const RunConfig& cfg,
                       const PipelineOptions& options = {});

std::vector<StageOutcome> run_all(const RunConfig& cfg,
                                  const PipelineOptions& options = {});

}  // namespace modtriage

#endif  // MODTRIAGE_PIPELINE_HPP_
