#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "codeprobe/dataset.hpp"
#include "codeprobe/probe.hpp"

namespace codeprobe {

struct PipelineConfig {
  std::filesystem::path corpus;
  Language language = Language::Java;
  std::string graph_source = "native";  // native | import
  std::filesystem::path import_dir;
  std::filesystem::path store;
  std::vector<std::string> tasks;  // empty: every task
  std::vector<int> layers;         // empty: 0..L
  std::vector<std::uint64_t> seeds{1, 2, 3};
  double alpha = 0.01;
  std::filesystem::path output = "out";

  std::uint64_t dataset_seed = 0;
  double negative_ratio = 1.0;
  SplitRatios split;
  std::size_t tag_min_count = 200;
  ProbeHyper probe;
  int workers = 1;
  bool verify_frozen_store = true;

  bool attention_normalized = false;
  bool attention_bonferroni = false;
  std::size_t attention_cap = 10000;
  std::uint64_t attention_seed = 0;
  std::string store_label;  // defaults to the manifest's model name
  std::filesystem::path compare_heads;  // heads.csv of another run, for overlap
  std::string compare_label = "other";

  /// Relative paths are resolved against `base`.
  static PipelineConfig from_json(std::string_view text, const std::filesystem::path& base = {});
  std::string to_json() const;
  /// Throws ConfigError on inconsistent settings.
  void validate() const;
  std::vector<Task> task_list() const;
};

/// Outcome of one stage; `failures` counts units (files, tasks, jobs) that
/// failed while others succeeded.
struct StageResult {
  std::size_t succeeded = 0;
  std::size_t failures = 0;
  bool skipped_unchanged = false;
  std::vector<std::string> messages;
};

StageResult run_extract_graphs(const PipelineConfig& config);
StageResult run_build_dataset(const PipelineConfig& config);
StageResult run_train(const PipelineConfig& config);
StageResult run_report(const PipelineConfig& config);
StageResult run_attention(const PipelineConfig& config);

/// Reads the id and text of every corpus file for the configured language,
/// ordered by id.
std::vector<std::pair<std::string, std::string>> read_corpus(const std::filesystem::path& dir, Language language);

/// Runs fn(0..n-1) on `workers` threads. Results are written by index, so the
/// outcome does not depend on scheduling; the first exception is rethrown.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

/// Worker count from CODEPROBE_WORKERS, or `fallback`.
int workers_from_env(int fallback);

std::vector<EvalReport> read_eval_csv(std::string_view text);

}  // namespace codeprobe
