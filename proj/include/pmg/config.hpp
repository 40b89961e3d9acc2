#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "pmg/bench.hpp"
#include "pmg/schedule.hpp"
#include "pmg/scoremodel.hpp"

namespace pmg {

struct ScoreSection {
  std::filesystem::path checkpoint = "score.ckpt";
  ScoreNetworkSpec arch;
  DsmConfig train;
  int train_samples = 20000;
};

/// Every module setting of one run, as a single JSON document. Missing keys
/// keep their defaults; unknown keys are rejected.
struct RunConfig {
  LinearScheduleParams schedule;
  TestbedSpec testbed;
  ScoreSection score;
  PipelineConfig pipeline;
  BenchmarkSpec bench;
  std::filesystem::path output = "out";
  std::uint64_t seed = 0;
};

RunConfig default_run_config();
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

/// Derives the run seeds (sampler, psi, protocol, head, benchmark) from one
/// master seed. The testbed and score training keep theirs so an existing
/// checkpoint stays valid.
void apply_seed(RunConfig& cfg, std::uint64_t seed);

/// 16 hex digits of FNV-1a 64 over the canonical (sorted, compact) dump.
std::string config_hash(const RunConfig& cfg);
std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace pmg
