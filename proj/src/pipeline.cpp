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

#include "modtriage/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <set>

#include "json.hpp"
#include "modtriage/audit.hpp"
#include "modtriage/encode.hpp"
#include "modtriage/util.hpp"

namespace modtriage {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

constexpr const char* kFrames = "frames.jsonl";
constexpr const char* kIngestStats = "ingest_stats.json";
constexpr const char* kWindows = "windows.json";
constexpr const char* kLabels = "labels.csv";
constexpr const char* kSplit = "split.csv";
constexpr const char* kBins = "bins.json";
constexpr const char* kTokens = "tokens.jsonl";
constexpr const char* kNumeric = "numeric.csv";
constexpr const char* kBaselineModel = "baseline_model.json";
constexpr const char* kAudits = "audits.jsonl";
constexpr const char* kProbes = "probes.jsonl";
constexpr const char* kFlipBaseline = "flip_baseline.json";
constexpr const char* kDecomposition = "decomposition.json";
constexpr const char* kReport = "report.json";
constexpr const char* kMetrics = "metrics.csv";
constexpr const char* kSummary = "summary.txt";

std::string predictions_file(Backend b) {
  return "predictions_" + std::string(to_string(b)) + ".jsonl";
}

std::string curve_file(ProbeKind k) {
  return "curve_" + std::string(to_string(k)) + ".csv";
}

std::string_view format_tag(CaptureFormat f) {
  switch (f) {
    case CaptureFormat::kPcap: return "pcap";
    case CaptureFormat::kCsv: return "csv";
    case CaptureFormat::kJsonl: return "jsonl";
  }
  return "?";
}

std::string_view flow_key_tag(FlowKey k) {
  return k == FlowKey::kPerFile ? "per_file" : "per_direction_pair";
}

void reject_unknown_keys(const nlohmann::json& j,
                         std::initializer_list<std::string_view> allowed,
                         std::string_view where) {
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("config: unknown key '" + key + "' in " +
                        std::string(where));
    }
  }
}

// ---- artifact headers ----------------------------------------------------

ojson run_header(const RunConfig& cfg, Stage stage) {
  return {{"config_hash", cfg.hash()},
          {"stage", to_string(stage)},
          {"config", ojson::parse(cfg.to_json())}};
}

void check_header(const nlohmann::json& run, const RunConfig& cfg,
                  const fs::path& path) {
  if (!run.is_object() || !run.contains("config_hash")) {
    throw ArtifactMismatchError(path.string() + ": missing run header");
  }
  auto h = run["config_hash"].get<std::string>();
  if (h != cfg.hash()) {
    throw ArtifactMismatchError(path.string() + ": written under config " +
                                h.substr(0, 16) + ", current config is " +
                                cfg.hash().substr(0, 16) + "; refusing to run");
  }
}

struct JsonlArtifact {
  nlohmann::json header;  // the object under "run" plus sibling keys
  std::vector<std::string> lines;
};

JsonlArtifact read_jsonl(const fs::path& path, const RunConfig& cfg) {
  auto text = read_file(path);
  JsonlArtifact out;
  bool first = true;
  for (auto line : split(text, '\n')) {
    line = trim(line);
    if (line.empty()) continue;
    if (first) {
      first = false;
      out.header = nlohmann::json::parse(line, nullptr, false);
      if (!out.header.is_object() || !out.header.contains("run")) {
        throw ArtifactMismatchError(path.string() + ": missing run header");
      }
      check_header(out.header["run"], cfg, path);
      continue;
    }
    out.lines.emplace_back(line);
  }
  if (first) throw ArtifactMismatchError(path.string() + ": empty artifact");
  return out;
}

nlohmann::json read_json(const fs::path& path, const RunConfig& cfg) {
  auto j = nlohmann::json::parse(read_file(path), nullptr, false);
  if (!j.is_object()) throw ArtifactMismatchError(path.string() + ": not JSON");
  check_header(j.value("run", nlohmann::json()), cfg, path);
  return j;
}

// Returns the CSV body after the `# run:` line.
std::string read_csv(const fs::path& path, const RunConfig& cfg) {
  auto text = read_file(path);
  constexpr std::string_view kPrefix = "# run: ";
  auto nl = text.find('\n');
  std::string_view first(text.data(), nl == std::string::npos ? text.size() : nl);
  if (first.substr(0, kPrefix.size()) != kPrefix) {
    throw ArtifactMismatchError(path.string() + ": missing run header");
  }
  check_header(nlohmann::json::parse(first.substr(kPrefix.size()), nullptr, false),
               cfg, path);
  return nl == std::string::npos ? std::string() : text.substr(nl + 1);
}

std::string csv_header_line(const RunConfig& cfg, Stage stage) {
  return "# run: " + run_header(cfg, stage).dump() + "\n";
}

std::string jsonl_header_line(ojson extra, const RunConfig& cfg, Stage stage) {
  ojson j;
  j["run"] = run_header(cfg, stage);
  for (auto& [k, v] : extra.items()) j[k] = v;
  return j.dump() + "\n";
}

// ---- loaded artifacts ----------------------------------------------------

std::vector<Frame> load_frames(const RunConfig& cfg) {
  auto path = cfg.run_dir() / kFrames;
  read_jsonl(path, cfg);  // header check
  auto result = parse_capture(path, CaptureFormat::kJsonl);
  return std::move(result.frames);
}

std::vector<AttackWindow> load_windows(const RunConfig& cfg) {
  auto j = read_json(cfg.run_dir() / kWindows, cfg);
  return windows_from_json(j.dump());
}

std::map<std::uint64_t, Label> load_labels(const RunConfig& cfg) {
  auto path = cfg.run_dir() / kLabels;
  auto body = read_csv(path, cfg);
  std::map<std::uint64_t, Label> out;
  bool header = false;
  for (auto line : split(body, '\n')) {
    line = trim(line);
    if (line.empty()) continue;
    if (!header) {
      header = true;
      continue;
    }
    auto cols = split(line, ',');
    auto label = cols.size() == 2 ? parse_label(cols[1]) : std::nullopt;
    if (!label) throw Error(path.string() + ": bad row '" + std::string(line) + "'");
    out[std::stoull(std::string(cols[0]))] = *label;
  }
  return out;
}

Split load_split(const RunConfig& cfg) {
  auto split = split_from_csv(read_csv(cfg.run_dir() / kSplit, cfg));
  split.window_manifest = load_windows(cfg);
  return split;
}

struct EncodedFrame {
  TokenString x;
  Label label = Label::kNormal;
  Partition partition = Partition::kTrain;
};

std::map<std::uint64_t, EncodedFrame> load_tokens(const RunConfig& cfg) {
  auto path = cfg.run_dir() / kTokens;
  auto art = read_jsonl(path, cfg);
  std::map<std::uint64_t, EncodedFrame> out;
  for (const auto& line : art.lines) {
    auto j = nlohmann::json::parse(line);
    auto x = parse_token_string(j.at("text").get<std::string>());
    auto label = parse_label(j.at("label").get<std::string>());
    auto part = parse_partition(j.at("partition").get<std::string>());
    if (!x || !label || !part) {
      throw Error(path.string() + ": bad record " + std::string(line));
    }
    out[j.at("id").get<std::uint64_t>()] = {*x, *label, *part};
  }
  return out;
}

struct LoadedPredictions {
  std::string fingerprint;
  std::vector<KeyedPrediction> rows;
};

LoadedPredictions load_predictions(const RunConfig& cfg, Backend b) {
  auto art = read_jsonl(cfg.run_dir() / predictions_file(b), cfg);
  LoadedPredictions out;
  out.fingerprint = art.header.value("classifier_fingerprint", std::string());
  for (const auto& line : art.lines) out.rows.push_back(prediction_from_json(line));
  return out;
}

std::vector<StoredAudit> load_audits(const RunConfig& cfg) {
  auto art = read_jsonl(cfg.run_dir() / kAudits, cfg);
  std::vector<StoredAudit> out;
  for (const auto& line : art.lines) out.push_back(audit_record_from_json(line));
  return out;
}

std::vector<ProbeResult> load_probes(const RunConfig& cfg) {
  auto art = read_jsonl(cfg.run_dir() / kProbes, cfg);
  std::vector<ProbeResult> out;
  for (const auto& line : art.lines) out.push_back(probe_result_from_json(line));
  return out;
}

// ---- classifiers -----------------------------------------------------------

std::shared_ptr<ChatTransport> make_transport(const RunConfig& cfg,
                                              const PipelineOptions& options) {
  if (options.transport) return options.transport;
  const char* key = std::getenv(cfg.llm.api_key_env.c_str());
  if (!key || !*key) {
    throw ConfigError("llm back end: environment variable " +
                      cfg.llm.api_key_env + " is not set");
  }
  return std::make_shared<HttpChatTransport>(cfg.llm.endpoint, key,
                                             cfg.llm.timeout_s);
}

PromptConfig load_prompt(const RunConfig& cfg, const fs::path& dir) {
  auto p = load_prompt_config(cfg.resolve(dir));
  p.model = cfg.llm.model;
  p.decoding = cfg.llm.decoding;
  p.validate();
  return p;
}

std::unique_ptr<Classifier> make_classifier(Backend b, const RunConfig& cfg,
                                            const PipelineOptions& options) {
  switch (b) {
    case Backend::kRule:
      return std::make_unique<RuleClassifier>();
    case Backend::kBaseline: {
      auto path = cfg.run_dir() / kBaselineModel;
      if (!fs::exists(path)) {
        throw DependencyError(Stage::kClassify,
                              "missing " + path.string() +
                                  "; run stage 'classify' first");
      }
      auto j = read_json(path, cfg);
      return std::make_unique<BaselineClassifier>(
          ScoredBaseline::from_json(j.at("model").dump()));
    }
    case Backend::kLlm:
      return std::make_unique<LlmClassifier>(load_prompt(cfg, cfg.prompt_dir),
                                             make_transport(cfg, options),
                                             cfg.llm.max_attempts);
  }
  throw ConfigError("unknown back end");
}

std::vector<Backend> evaluated_backends(const RunConfig& cfg) {
  std::vector<Backend> out{cfg.backend};
  for (auto b : cfg.compare) {
    if (std::find(out.begin(), out.end(), b) == out.end()) out.push_back(b);
  }
  return out;
}

std::string resolved_auditor(const RunConfig& cfg) {
  if (cfg.auditor != "auto") return cfg.auditor;
  return cfg.backend == Backend::kLlm ? "llm" : "rule";
}

// ---- stages ----------------------------------------------------------------

void write(const RunConfig& cfg, StageOutcome& out, const char* name,
           std::string_view contents) {
  write_file_atomic(cfg.run_dir() / name, contents);
  out.written.emplace_back(name);
}

void write(const RunConfig& cfg, StageOutcome& out, const std::string& name,
           std::string_view contents) {
  write(cfg, out, name.c_str(), contents);
}

StageOutcome stage_ingest(const RunConfig& cfg) {
  StageOutcome out{Stage::kIngest, {}, {}, {}};
  if (cfg.captures.empty()) throw ConfigError("config: no captures listed");
  std::vector<IngestPlanItem> items = cfg.captures;
  for (auto& item : items) item.path = cfg.resolve(item.path);
  CaptureOptions opts;
  opts.modbus_port = cfg.modbus_port;
  auto result = ingest_captures(items, opts, cfg.flow_key);
  if (result.frames.empty()) throw IngestError("ingest: no Modbus frames found");

  ojson inputs = ojson::array();
  for (std::size_t i = 0; i < items.size(); ++i) {
    inputs.push_back({{"path", cfg.captures[i].path.generic_string()},
                      {"sha256", sha256_hex(read_file(items[i].path))}});
  }
  write(cfg, out, kFrames,
        jsonl_header_line({{"inputs", inputs}}, cfg, Stage::kIngest) +
            frames_to_jsonl(result.frames));

  ojson stats{{"run", run_header(cfg, Stage::kIngest)},
              {"frames", result.frames.size()},
              {"duplicates_removed", result.duplicates_removed},
              {"non_modbus_skipped", result.stats.non_modbus_skipped},
              {"malformed_payloads", result.stats.malformed_payloads},
              {"truncated_records", result.stats.truncated_records},
              {"exception_fc_violations", result.stats.exception_fc_violations},
              {"clock_regressions", result.iat.clock_regressions},
              {"warnings", result.stats.warnings}};
  write(cfg, out, kIngestStats, stats.dump(2) + "\n");
  out.warnings = result.stats.warnings;
  return out;
}

StageOutcome stage_label(const RunConfig& cfg) {
  StageOutcome out{Stage::kLabel, {}, {}, {}};
  auto frames = load_frames(cfg);
  std::vector<AttackEvent> events;
  for (const auto& log : cfg.attack_logs) {
    auto parsed = parse_attack_log(cfg.resolve(log));
    for (auto& w : parsed.warnings) out.warnings.push_back(std::move(w));
    for (auto& e : parsed.events) events.push_back(std::move(e));
  }
  std::sort(events.begin(), events.end(), [](const auto& a, const auto& b) {
    return std::tie(a.timestamp_us, a.scenario, a.source_file) <
           std::tie(b.timestamp_us, b.scenario, b.source_file);
  });
  auto windows = build_windows(events, cfg.split.windows);
  auto labels = label_frames(frames, windows);

  auto wj = ojson::parse(windows_to_json(windows, cfg.split.windows));
  ojson doc;
  doc["run"] = run_header(cfg, Stage::kLabel);
  for (auto& [k, v] : wj.items()) doc[k] = v;
  write(cfg, out, kWindows, doc.dump(2) + "\n");

  std::string csv = csv_header_line(cfg, Stage::kLabel) + "frame_id,label\n";
  for (const auto& l : labels) {
    csv += std::to_string(l.frame_id) + "," + std::string(to_string(l.label)) + "\n";
  }
  write(cfg, out, kLabels, csv);
  return out;
}

StageOutcome stage_split(const RunConfig& cfg) {
  StageOutcome out{Stage::kSplit, {}, {}, {}};
  auto frames = load_frames(cfg);
  auto windows = load_windows(cfg);
  auto label_map = load_labels(cfg);
  std::vector<LabeledFrame> labels;
  for (const auto& [id, y] : label_map) labels.push_back({id, y});
  auto split = make_split(frames, labels, windows, cfg.split);
  auto leak = verify_no_leakage(split, frames);
  if (!leak.pass) {
    throw LeakageError("split: " + leak.violations.front());
  }
  out.warnings = split.warnings;
  write(cfg, out, kSplit, csv_header_line(cfg, Stage::kSplit) + split_to_csv(split));
  return out;
}

StageOutcome stage_fit_bins(const RunConfig& cfg) {
  StageOutcome out{Stage::kFitBins, {}, {}, {}};
  auto frames = load_frames(cfg);
  auto split = load_split(cfg);
  auto labels = load_labels(cfg);
  std::vector<Frame> train;
  for (const auto& f : frames) {
    auto it = split.assignment.find(f.frame_id);
    if (it != split.assignment.end() && it->second == Partition::kTrain) {
      train.push_back(f);
    }
  }
  FitOptions opts;
  opts.version = cfg.bins_version;
  opts.allow_degenerate = cfg.allow_degenerate_bins;
  auto fit = fit_bins_on_train(train, split, opts);
  out.warnings = fit.warnings;
  auto leak = verify_no_leakage(split, frames, &fit.bins);
  if (!leak.pass) throw LeakageError("fit-bins: " + leak.violations.front());

  ojson doc;
  doc["run"] = run_header(cfg, Stage::kFitBins);
  doc["checksum"] = bins_checksum(fit.bins);
  doc["bins"] = ojson::parse(bins_to_json(fit.bins));
  write(cfg, out, kBins, doc.dump(2) + "\n");

  std::string tokens = jsonl_header_line({{"bins_checksum", bins_checksum(fit.bins)}},
                                         cfg, Stage::kFitBins);
  std::string numeric = csv_header_line(cfg, Stage::kFitBins) +
                        "frame_id,partition,label,function_code,len_bucket,"
                        "iat_bucket,exception_code,direction,unit_id\n";
  for (const auto& f : frames) {
    auto part = split.assignment.at(f.frame_id);
    auto label = labels.at(f.frame_id);
    auto x = encode_token_string(f, fit.bins);
    ojson row{{"id", f.frame_id},
              {"text", x.text},
              {"label", to_string(label)},
              {"partition", to_string(part)}};
    tokens += row.dump() + "\n";
    auto v = encode_numeric(f, fit.bins);
    numeric += std::to_string(f.frame_id) + "," + std::string(to_string(part)) +
               "," + std::string(to_string(label)) + "," +
               std::to_string(v.function_code) + "," +
               std::to_string(v.len_bucket) + "," +
               std::to_string(v.iat_bucket) + "," +
               std::to_string(v.exception_code) + "," +
               std::to_string(v.direction) + "," + std::to_string(v.unit_id) +
               "\n";
  }
  write(cfg, out, kTokens, tokens);
  write(cfg, out, kNumeric, numeric);
  return out;
}

NumericView numeric_of(const TokenString& x) {
  auto tokens = parse_fragment(x.text);
  return numeric_from_tokens(*tokens);
}

void train_baseline_model(const RunConfig& cfg,
                          const std::map<std::uint64_t, EncodedFrame>& tokens,
                          StageOutcome& out) {
  std::vector<NumericView> train_x, val_x;
  std::vector<Label> train_y, val_y;
  for (const auto& [id, e] : tokens) {
    if (e.partition == Partition::kTrain) {
      train_x.push_back(numeric_of(e.x));
      train_y.push_back(e.label);
    } else if (e.partition == Partition::kValidation) {
      val_x.push_back(numeric_of(e.x));
      val_y.push_back(e.label);
    }
  }
  auto model = train_baseline(train_x, train_y, cfg.baseline);
  auto sweep = freeze_threshold(model, val_x, val_y);
  for (auto& w : sweep.warnings) out.warnings.push_back(std::move(w));
  ojson doc;
  doc["run"] = run_header(cfg, Stage::kClassify);
  doc["validation_macro_f1"] = sweep.macro_f1;
  doc["threshold_candidates"] = sweep.candidates;
  doc["model"] = ojson::parse(model.to_json());
  write(cfg, out, kBaselineModel, doc.dump(2) + "\n");
}

StageOutcome stage_classify(const RunConfig& cfg,
                            const PipelineOptions& options) {
  StageOutcome out{Stage::kClassify, {}, {}, {}};
  auto tokens = load_tokens(cfg);
  std::vector<std::uint64_t> test_ids;
  for (const auto& [id, e] : tokens) {
    if (e.partition == Partition::kTest) test_ids.push_back(id);
  }
  if (test_ids.empty()) throw SplitError("classify: test partition is empty");

  for (auto backend : evaluated_backends(cfg)) {
    if (backend == Backend::kBaseline) train_baseline_model(cfg, tokens, out);
    auto clf = make_classifier(backend, cfg, options);
    std::vector<Prediction> preds(test_ids.size());
    parallel_for(test_ids.size(), cfg.parallelism, [&](std::size_t i) {
      preds[i] = classify(*clf, tokens.at(test_ids[i]).x.text);
    });
    std::string body = jsonl_header_line(
        {{"method", to_string(backend)},
         {"classifier_fingerprint", clf->fingerprint()}},
        cfg, Stage::kClassify);
    for (std::size_t i = 0; i < test_ids.size(); ++i) {
      body += prediction_to_json(test_ids[i], preds[i]) + "\n";
    }
    write(cfg, out, predictions_file(backend), body);
  }
  return out;
}

StageOutcome stage_audit(const RunConfig& cfg, const PipelineOptions& options) {
  StageOutcome out{Stage::kAudit, {}, {}, {}};
  auto tokens = load_tokens(cfg);
  auto preds = load_predictions(cfg, cfg.backend);

  std::unique_ptr<Auditor> auditor;
  auto kind = resolved_auditor(cfg);
  if (kind == "rule") {
    auditor = std::make_unique<RuleAuditor>();
  } else if (kind == "llm") {
    auto classifier_fp = cfg.backend == Backend::kLlm
                             ? load_prompt(cfg, cfg.prompt_dir).fingerprint()
                             : std::string();
    auditor = std::make_unique<LlmAuditor>(
        load_prompt(cfg, cfg.auditor_prompt_dir), make_transport(cfg, options),
        classifier_fp, cfg.llm.max_attempts);
  } else {
    throw ConfigError("config: auditor must be auto, rule or llm");
  }

  const auto rules = RuleSet::defaults();
  std::vector<std::string> lines(preds.rows.size());
  parallel_for(preds.rows.size(), cfg.parallelism, [&](std::size_t i) {
    const auto& kp = preds.rows[i];
    const auto& x = tokens.at(kp.frame_id).x;
    auto rec = auditor->audit(x, kp.prediction.label);
    rec.frame_id = kp.frame_id;
    rec.label_explained = kp.prediction.label;
    lines[i] = audit_record_to_json(rec, validate_record(x, rec, rules));
  });
  std::string body = jsonl_header_line({{"auditor", kind}}, cfg, Stage::kAudit);
  for (const auto& l : lines) body += l + "\n";
  write(cfg, out, kAudits, body);
  return out;
}

StageOutcome stage_probe(const RunConfig& cfg, const PipelineOptions& options) {
  StageOutcome out{Stage::kProbe, {}, {}, {}};
  auto tokens = load_tokens(cfg);
  auto preds = load_predictions(cfg, cfg.backend);
  auto audits = load_audits(cfg);
  auto clf = make_classifier(cfg.backend, cfg, options);
  if (clf->fingerprint() != preds.fingerprint) {
    throw ArtifactMismatchError(
        "probe: classifier fingerprint differs from the one that produced " +
        predictions_file(cfg.backend));
  }
  std::map<std::uint64_t, const AuditRecord*> by_id;
  for (const auto& a : audits) by_id[a.record.frame_id] = &a.record;

  std::vector<ProbeCase> cases;
  for (const auto& kp : preds.rows) {
    auto it = by_id.find(kp.frame_id);
    if (it == by_id.end()) {
      throw Error("probe: no audit record for frame " + std::to_string(kp.frame_id));
    }
    cases.push_back({kp.frame_id, tokens.at(kp.frame_id).x, kp.prediction,
                     *it->second});
  }
  auto results = run_probes(cases, *clf, cfg.parallelism);

  std::string body = jsonl_header_line(
      {{"classifier_fingerprint", clf->fingerprint()}}, cfg, Stage::kProbe);
  for (const auto& r : results) body += probe_result_to_json(r) + "\n";
  write(cfg, out, kProbes, body);

  for (auto kind : {ProbeKind::kSufficiency, ProbeKind::kNecessity,
                    ProbeKind::kCounterfactual}) {
    try {
      auto curve = pass_curve(results, kind, cfg.epsilons, cfg.bootstrap);
      write(cfg, out, curve_file(kind),
            csv_header_line(cfg, Stage::kProbe) + pass_curve_to_csv(curve));
      if (curve.flip_baseline) {
        ojson fb{{"run", run_header(cfg, Stage::kProbe)},
                 {"kind", to_string(kind)},
                 {"flip_baseline", *curve.flip_baseline}};
        write(cfg, out, kFlipBaseline, fb.dump(2) + "\n");
      }
    } catch (const PreconditionError& e) {
      out.warnings.emplace_back(e.what());
    }
  }
  auto d = necessity_decomposition(results);
  ojson dj;
  dj["run"] = run_header(cfg, Stage::kProbe);
  dj["count"] = d.count;
  dj["flip_rate"] = d.flip_rate;
  dj["mean_delta"] = d.mean_delta;
  dj["by_class"] = ojson::array();
  for (const auto& r : d.by_class) {
    dj["by_class"].push_back({{"label", to_string(r.label)},
                              {"count", r.count},
                              {"flip_rate", r.flip_rate},
                              {"mean_delta", r.mean_delta}});
  }
  dj["by_tokens_removed"] = ojson::array();
  for (const auto& r : d.by_tokens_removed) {
    dj["by_tokens_removed"].push_back(
        {{"tokens_removed", r.bucket}, {"count", r.count}, {"mean_delta", r.mean_delta}});
  }
  write(cfg, out, kDecomposition, dj.dump(2) + "\n");
  return out;
}

StageOutcome stage_report(const RunConfig& cfg) {
  StageOutcome out{Stage::kReport, {}, {}, {}};
  const auto dir = cfg.run_dir();
  auto labels = load_labels(cfg);
  ReportInputs in;
  in.run_json = run_header(cfg, Stage::kReport).dump();
  auto add_source = [&](const std::string& name) {
    in.sources.push_back({name, sha256_hex(read_file(dir / name))});
  };
  add_source(kLabels);

  std::optional<LoadedPredictions> primary;
  for (auto backend : evaluated_backends(cfg)) {
    auto preds = load_predictions(cfg, backend);
    add_source(predictions_file(backend));
    std::vector<KeyedLabel> yhat, gold;
    for (const auto& kp : preds.rows) {
      yhat.emplace_back(kp.frame_id, kp.prediction.label);
      auto it = labels.find(kp.frame_id);
      if (it != labels.end()) gold.emplace_back(kp.frame_id, it->second);
    }
    Warnings w;
    auto m = compute_metrics(yhat, gold, &w);
    for (auto& s : w) in.warnings.push_back(std::string(to_string(backend)) + ": " + s);
    in.methods.push_back({std::string(to_string(backend)), m});
    if (backend == cfg.backend) primary = std::move(preds);
  }

  if (fs::exists(dir / kAudits)) {
    auto audits = load_audits(cfg);
    add_source(kAudits);
    std::vector<LabeledValidity> v;
    for (const auto& a : audits) v.push_back({a.record.label_explained, a.validity});
    in.validity = validity_rates(v);
  }
  if (fs::exists(dir / kProbes)) {
    auto probes = load_probes(cfg);
    add_source(kProbes);
    for (auto kind : {ProbeKind::kSufficiency, ProbeKind::kNecessity,
                      ProbeKind::kCounterfactual}) {
      try {
        in.curves.push_back(pass_curve(probes, kind, cfg.epsilons, cfg.bootstrap));
      } catch (const PreconditionError& e) {
        in.warnings.emplace_back(e.what());
      }
    }
    in.decomposition = necessity_decomposition(probes);
  }

  std::vector<double> latencies;
  UsageTotals usage;
  for (const auto& kp : primary->rows) {
    if (kp.prediction.latency_ms) latencies.push_back(*kp.prediction.latency_ms / 1000.0);
    if (kp.prediction.token_usage) {
      usage.input_tokens += static_cast<std::uint64_t>(kp.prediction.token_usage->input_tokens);
      usage.output_tokens += static_cast<std::uint64_t>(kp.prediction.token_usage->output_tokens);
      ++usage.calls;
    }
  }
  if (!latencies.empty()) {
    in.latency = latency_summary(latencies, cfg.prices,
                                 usage.calls ? std::optional(usage) : std::nullopt,
                                 cfg.overhead, &in.warnings);
  }

  auto bundle = emit_report(in);
  write(cfg, out, kReport, bundle.report_json);
  write(cfg, out, kMetrics, csv_header_line(cfg, Stage::kReport) + bundle.metrics_csv);
  write(cfg, out, kSummary, bundle.summary_text);
  out.summary = bundle.summary_text;
  out.warnings = in.warnings;
  return out;
}

}  // namespace

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::kIngest: return "ingest";
    case Stage::kLabel: return "label";
    case Stage::kSplit: return "split";
    case Stage::kFitBins: return "fit-bins";
    case Stage::kClassify: return "classify";
    case Stage::kAudit: return "audit";
    case Stage::kProbe: return "probe";
    case Stage::kReport: return "report";
  }
  return "?";
}

std::optional<Stage> parse_stage(std::string_view s) {
  for (auto st : all_stages()) {
    if (to_string(st) == s) return st;
  }
  return std::nullopt;
}

const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> kStages{
      Stage::kIngest,   Stage::kLabel, Stage::kSplit, Stage::kFitBins,
      Stage::kClassify, Stage::kAudit, Stage::kProbe, Stage::kReport};
  return kStages;
}

std::string_view to_string(Backend b) {
  switch (b) {
    case Backend::kRule: return "rule";
    case Backend::kBaseline: return "baseline";
    case Backend::kLlm: return "llm";
  }
  return "?";
}

std::optional<Backend> parse_backend(std::string_view s) {
  if (s == "rule") return Backend::kRule;
  if (s == "baseline") return Backend::kBaseline;
  if (s == "llm") return Backend::kLlm;
  return std::nullopt;
}

std::string RunConfig::to_json() const {
  ojson j;
  j["captures"] = ojson::array();
  for (const auto& c : captures) {
    j["captures"].push_back(
        {{"path", c.path.generic_string()}, {"format", format_tag(c.format)}});
  }
  j["attack_logs"] = ojson::array();
  for (const auto& p : attack_logs) j["attack_logs"].push_back(p.generic_string());
  j["modbus_port"] = modbus_port;
  j["flow_key"] = flow_key_tag(flow_key);
  j["windows"] = {{"merge_gap_s", split.windows.merge_gap_s},
                  {"tail_s", split.windows.tail_s}};
  j["split"] = {{"mode", to_string(split.mode)},
                {"train", split.ratios.train},
                {"validation", split.ratios.validation},
                {"test", split.ratios.test}};
  j["bins_version"] = bins_version;
  j["allow_degenerate_bins"] = allow_degenerate_bins;
  j["backend"] = to_string(backend);
  j["compare"] = ojson::array();
  for (auto b : compare) j["compare"].push_back(to_string(b));
  j["auditor"] = auditor;
  j["prompt_dir"] = prompt_dir.generic_string();
  j["auditor_prompt_dir"] = auditor_prompt_dir.generic_string();
  j["llm"] = {{"endpoint", llm.endpoint},
              {"api_key_env", llm.api_key_env},
              {"model", llm.model},
              {"temperature", llm.decoding.temperature},
              {"top_p", llm.decoding.top_p},
              {"seed", llm.decoding.seed},
              {"max_attempts", llm.max_attempts},
              {"timeout_s", llm.timeout_s}};
  j["parallelism"] = parallelism;
  j["epsilons"] = epsilons;
  j["bootstrap"] = {{"resamples", bootstrap.resamples}, {"seed", bootstrap.seed}};
  j["prices"] = {{"input_per_million", prices.input_per_million},
                 {"output_per_million", prices.output_per_million}};
  j["overhead_tokens"] = {{"low", overhead.low}, {"high", overhead.high}};
  j["baseline"] = {{"epochs", baseline.epochs},
                   {"learning_rate", baseline.learning_rate},
                   {"l2", baseline.l2}};
  j["out_dir"] = out_dir.generic_string();
  return j.dump();
}

RunConfig RunConfig::from_json(std::string_view text, const fs::path& base_dir) {
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (!j.is_object()) throw ConfigError("config: not a JSON object");
  reject_unknown_keys(j,
                      {"captures", "attack_logs", "modbus_port", "flow_key",
                       "windows", "split", "bins_version", "allow_degenerate_bins", "backend", "compare",
                       "auditor", "prompt_dir", "auditor_prompt_dir", "llm",
                       "parallelism", "epsilons", "bootstrap", "prices",
                       "overhead_tokens", "baseline", "out_dir"},
                      "top level");
  RunConfig c;
  c.base_dir = base_dir;
  try {
    for (const auto& cap : j.value("captures", nlohmann::json::array())) {
      IngestPlanItem item;
      if (cap.is_string()) {
        item.path = cap.get<std::string>();
        auto ext = item.path.extension().string();
        item.format = parse_capture_format(ext.empty() ? "pcap" : ext.substr(1));
      } else {
        reject_unknown_keys(cap, {"path", "format"}, "captures[]");
        item.path = cap.at("path").get<std::string>();
        item.format = parse_capture_format(cap.value("format", std::string("pcap")));
      }
      c.captures.push_back(std::move(item));
    }
    for (const auto& p : j.value("attack_logs", nlohmann::json::array())) {
      c.attack_logs.emplace_back(p.get<std::string>());
    }
    auto port = j.value("modbus_port", 502);
    if (port <= 0 || port > 65535) throw ConfigError("config: modbus_port out of range");
    c.modbus_port = static_cast<std::uint16_t>(port);
    auto fk = j.value("flow_key", std::string("per_direction_pair"));
    if (fk == "per_file") c.flow_key = FlowKey::kPerFile;
    else if (fk != "per_direction_pair") throw ConfigError("config: bad flow_key '" + fk + "'");

    if (j.contains("windows")) {
      const auto& w = j["windows"];
      reject_unknown_keys(w, {"merge_gap_s", "tail_s"}, "windows");
      c.split.windows.merge_gap_s = w.value("merge_gap_s", c.split.windows.merge_gap_s);
      c.split.windows.tail_s = w.value("tail_s", c.split.windows.tail_s);
    }
    if (j.contains("split")) {
      const auto& s = j["split"];
      reject_unknown_keys(s, {"mode", "train", "validation", "test"}, "split");
      auto mode = parse_split_mode(s.value("mode", std::string("by_time")));
      if (!mode) throw ConfigError("config: bad split mode");
      c.split.mode = *mode;
      c.split.ratios = {s.value("train", 0.6), s.value("validation", 0.2),
                        s.value("test", 0.2)};
    }
    c.bins_version = j.value("bins_version", std::int64_t{1});
    c.allow_degenerate_bins = j.value("allow_degenerate_bins", false);
    auto backend = parse_backend(j.value("backend", std::string("rule")));
    if (!backend) throw ConfigError("config: backend must be llm, rule or baseline");
    c.backend = *backend;
    for (const auto& b : j.value("compare", nlohmann::json::array())) {
      auto cb = parse_backend(b.get<std::string>());
      if (!cb) throw ConfigError("config: bad compare back end");
      c.compare.push_back(*cb);
    }
    c.auditor = j.value("auditor", std::string("auto"));
    if (c.auditor != "auto" && c.auditor != "rule" && c.auditor != "llm") {
      throw ConfigError("config: auditor must be auto, rule or llm");
    }
    c.prompt_dir = j.value("prompt_dir", c.prompt_dir.string());
    c.auditor_prompt_dir = j.value("auditor_prompt_dir", c.auditor_prompt_dir.string());
    if (j.contains("llm")) {
      const auto& l = j["llm"];
      reject_unknown_keys(l,
                          {"endpoint", "api_key_env", "model", "temperature",
                           "top_p", "seed", "max_attempts", "timeout_s"},
                          "llm");
      c.llm.endpoint = l.value("endpoint", c.llm.endpoint);
      c.llm.api_key_env = l.value("api_key_env", c.llm.api_key_env);
      c.llm.model = l.value("model", c.llm.model);
      c.llm.decoding.temperature = l.value("temperature", 0.0);
      c.llm.decoding.top_p = l.value("top_p", 1.0);
      c.llm.decoding.seed = l.value("seed", std::int64_t{0});
      c.llm.max_attempts = l.value("max_attempts", kDefaultMaxAttempts);
      c.llm.timeout_s = l.value("timeout_s", 60);
    }
    if (c.llm.decoding.temperature != 0.0) {
      throw ConfigError("config: llm temperature must be 0");
    }
    if (c.llm.max_attempts < 1) throw ConfigError("config: max_attempts must be >= 1");
    c.parallelism = j.value("parallelism", std::size_t{4});
    if (c.parallelism == 0) c.parallelism = 1;
    if (j.contains("epsilons")) c.epsilons = j["epsilons"].get<std::vector<double>>();
    if (c.epsilons.empty() || !std::is_sorted(c.epsilons.begin(), c.epsilons.end()) ||
        c.epsilons.front() < 0.0) {
      throw ConfigError("config: epsilons must be a nonempty ascending list >= 0");
    }
    if (j.contains("bootstrap")) {
      const auto& b = j["bootstrap"];
      reject_unknown_keys(b, {"resamples", "seed"}, "bootstrap");
      c.bootstrap.resamples = b.value("resamples", c.bootstrap.resamples);
      c.bootstrap.seed = b.value("seed", c.bootstrap.seed);
    }
    if (j.contains("prices")) {
      const auto& p = j["prices"];
      reject_unknown_keys(p, {"input_per_million", "output_per_million"}, "prices");
      c.prices.input_per_million = p.value("input_per_million", c.prices.input_per_million);
      c.prices.output_per_million = p.value("output_per_million", c.prices.output_per_million);
    }
    if (j.contains("overhead_tokens")) {
      const auto& o = j["overhead_tokens"];
      reject_unknown_keys(o, {"low", "high"}, "overhead_tokens");
      c.overhead.low = o.value("low", c.overhead.low);
      c.overhead.high = o.value("high", c.overhead.high);
      if (c.overhead.low < 0 || c.overhead.high < c.overhead.low) {
        throw ConfigError("config: overhead_tokens needs 0 <= low <= high");
      }
    }
    if (j.contains("baseline")) {
      const auto& b = j["baseline"];
      reject_unknown_keys(b, {"epochs", "learning_rate", "l2"}, "baseline");
      c.baseline.epochs = b.value("epochs", c.baseline.epochs);
      c.baseline.learning_rate = b.value("learning_rate", c.baseline.learning_rate);
      c.baseline.l2 = b.value("l2", c.baseline.l2);
    }
    c.out_dir = j.value("out_dir", c.out_dir.string());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const IngestError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

std::string RunConfig::hash() const { return sha256_hex(to_json()); }

fs::path RunConfig::resolve(const fs::path& p) const {
  return p.is_absolute() ? p : base_dir / p;
}

fs::path RunConfig::run_dir() const { return resolve(out_dir) / hash().substr(0, 16); }

RunConfig load_run_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  auto base = path.parent_path();
  return RunConfig::from_json(text, base.empty() ? fs::path(".") : base);
}

std::vector<fs::path> stage_inputs(Stage stage, const RunConfig& cfg) {
  auto dir = cfg.run_dir();
  switch (stage) {
    case Stage::kIngest: return {};
    case Stage::kLabel: return {dir / kFrames};
    case Stage::kSplit: return {dir / kFrames, dir / kWindows, dir / kLabels};
    case Stage::kFitBins:
      return {dir / kFrames, dir / kWindows, dir / kLabels, dir / kSplit};
    case Stage::kClassify: return {dir / kTokens};
    case Stage::kAudit: return {dir / kTokens, dir / predictions_file(cfg.backend)};
    case Stage::kProbe:
      return {dir / kTokens, dir / predictions_file(cfg.backend), dir / kAudits};
    case Stage::kReport: {
      std::vector<fs::path> in{dir / kLabels};
      for (auto b : evaluated_backends(cfg)) in.push_back(dir / predictions_file(b));
      return in;
    }
  }
  return {};
}

void check_dependencies(Stage stage, const RunConfig& cfg) {
  static const std::map<std::string, Stage> kProducer{
      {kFrames, Stage::kIngest},   {kWindows, Stage::kLabel},
      {kLabels, Stage::kLabel},    {kSplit, Stage::kSplit},
      {kTokens, Stage::kFitBins},  {kAudits, Stage::kAudit}};
  for (const auto& p : stage_inputs(stage, cfg)) {
    if (fs::exists(p)) continue;
    auto name = p.filename().string();
    auto it = kProducer.find(name);
    Stage producer = it == kProducer.end() ? Stage::kClassify : it->second;
    throw DependencyError(producer, std::string(to_string(stage)) +
                                        ": missing " + name + "; run stage '" +
                                        std::string(to_string(producer)) +
                                        "' first");
  }
}

StageOutcome run_stage(Stage stage, const RunConfig& cfg,
                       const PipelineOptions& options) {
  check_dependencies(stage, cfg);
  fs::create_directories(cfg.run_dir());
  switch (stage) {
    case Stage::kIngest: return stage_ingest(cfg);
    case Stage::kLabel: return stage_label(cfg);
    case Stage::kSplit: return stage_split(cfg);
    case Stage::kFitBins: return stage_fit_bins(cfg);
    case Stage::kClassify: return stage_classify(cfg, options);
    case Stage::kAudit: return stage_audit(cfg, options);
    case Stage::kProbe: return stage_probe(cfg, options);
    case Stage::kReport: return stage_report(cfg);
  }
  throw Error("unknown stage");
}

std::vector<StageOutcome> run_all(const RunConfig& cfg,
                                  const PipelineOptions& options) {
  std::vector<StageOutcome> out;
  for (auto s : all_stages()) out.push_back(run_stage(s, cfg, options));
  return out;
}

}  // namespace modtriage
