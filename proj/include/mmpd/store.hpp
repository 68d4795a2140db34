#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mmpd/arena.hpp"
#include "mmpd/diversity.hpp"
#include "mmpd/metrics.hpp"
#include "mmpd/rollout.hpp"
#include "mmpd/sac.hpp"
#include "mmpd/trainer.hpp"

namespace mmpd {

inline constexpr int kFormatVersion = 1;

// --- low-level file helpers ---

std::string read_text_file(const std::filesystem::path& path);

// Writes to "<path>.tmp" then renames; readers never observe partial files.
void write_text_file_atomic(const std::filesystem::path& path,
                            std::string_view content);

// ParseError messages carry the byte offset reported by the JSON parser.
nlohmann::json parse_json_text(const std::string& text,
                               const std::string& context);

// Throws VersionError unless j["format_version"] == kFormatVersion.
void require_format_version(const nlohmann::json& j, const std::string& context);

std::uint64_t fnv1a64(std::string_view bytes);

// FNV-1a hex digest of the canonical (sorted-key) JSON dump.
std::string config_hash(const nlohmann::json& j);

// --- config (de)serialization ---

nlohmann::json arena_to_json(const ArenaConfig& c);
nlohmann::json sac_to_json(const SacConfig& c);
nlohmann::json penalty_to_json(const PenaltyConfig& c);
nlohmann::json schedule_to_json(const DiversitySchedule& schedule);

struct ExperimentConfig {
  ArenaConfig arena;
  SacConfig sac;
  PenaltyConfig penalty;
  DiversitySchedule schedule;  // optional; may be empty
};

ExperimentConfig default_experiment_config();
nlohmann::json to_json(const ExperimentConfig& c);

// Defaults filled, unknown keys rejected, every module invariant checked;
// throws ConfigError listing all violations at once.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Standalone schedule file: JSON list of {"id"?, "agents", "known"}.
// Missing ids default to "policy_<index>".
DiversitySchedule schedule_from_json(const nlohmann::json& j);
DiversitySchedule load_schedule(const std::filesystem::path& path);

// --- checkpoints, demonstrations, trajectories ---

// Full-precision decimal serialization; round-trip is bit-exact.
void save_checkpoint(const PolicyParams& params,
                     const std::filesystem::path& path);
PolicyParams load_checkpoint(const std::filesystem::path& path);

// JSON-Lines, one episode per line (seed, outcome, transitions).
void save_demonstrations(const DemonstrationSet& demos,
                         const std::filesystem::path& path);
DemonstrationSet load_demonstrations(const std::filesystem::path& path);

// JSON-Lines, one episode per line with full tick records. Loaded logs
// have everything except the in-state RNG (replay from seed recovers it).
void append_trajectory(const EpisodeLog& episode,
                       const std::filesystem::path& path);
void append_trajectories(std::span<const EpisodeLog> episodes,
                         const std::filesystem::path& path);
std::vector<EpisodeLog> load_trajectories(const std::filesystem::path& path);

// --- report serialization ---

nlohmann::json eval_report_json(const EvalReport& report);
nlohmann::json train_report_json(const TrainReport& report,
                                 const std::vector<KnownDisagreement>& dis);
nlohmann::json comparison_report_json(const ComparisonReport& report);
std::string comparison_report_csv(const ComparisonReport& report);

// --- policy registry ---

// Filenames are derived from ids; ids are restricted to [A-Za-z0-9._-].
bool valid_policy_id(const std::string& id);

struct RegistryEntry {
  std::string checkpoint_file;
  std::string demos_file;
  std::string trajectories_file;
  std::string report_file;
  std::uint64_t seed = 0;
  std::string config_hash;
  AgentSelection agents;
  std::vector<std::string> known;
  long train_steps = 0;
};

// One experiment directory: registry.json index plus per-policy files.
// The index is rewritten atomically and only after every policy file is in
// place, so a crash never leaves a half-indexed policy.
class Registry {
 public:
  explicit Registry(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  bool has(const std::string& id) const;
  std::vector<std::string> ids() const;  // sorted
  const RegistryEntry& entry(const std::string& id) const;

  void add_policy(const std::string& id, const PolicyParams& params,
                  const DemonstrationSet& demos, const nlohmann::json& report,
                  std::uint64_t seed, const std::string& config_hash,
                  const AgentSelection& agents,
                  const std::vector<std::string>& known, long train_steps);

  KnownPolicy load_policy(const std::string& id) const;
  nlohmann::json load_report(const std::string& id) const;
  std::vector<EpisodeLog> load_policy_trajectories(const std::string& id) const;

  std::filesystem::path file_path(const std::string& relative) const;

 private:
  void load_index();
  void save_index() const;

  std::filesystem::path root_;
  std::map<std::string, RegistryEntry> entries_;
};

}  // namespace mmpd
