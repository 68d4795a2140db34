#include "mmpd/diversity.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>

#include "mmpd/errors.hpp"
#include "mmpd/log.hpp"
#include "mmpd/store.hpp"

namespace mmpd {

namespace {

// Streams 1-5 belong to run_training_loop; keep these distinct so every
// consumer of one master seed stays independent.
constexpr std::uint64_t kStreamDemo = 6;
constexpr std::uint64_t kStreamPenalty = 7;

}  // namespace

std::vector<std::string> PenaltyConfig::violations() const {
  std::vector<std::string> v;
  if (!(penalty_reward >= 0)) v.emplace_back("penalty_reward must be >= 0");
  if (relabel_batch_size < 1) v.emplace_back("relabel_batch_size must be >= 1");
  if (!(mixing_ratio >= 0 && mixing_ratio <= 1.0))
    v.emplace_back("mixing_ratio must be in [0, 1]");
  return v;
}

void PenaltyConfig::validate() const {
  const auto v = violations();
  if (v.empty()) return;
  std::string msg = "invalid penalty config:";
  for (const auto& s : v) msg += " " + s + ";";
  throw ConfigError(msg);
}

std::vector<Transition> DemonstrationSet::flat() const {
  std::vector<Transition> out;
  out.reserve(transition_count());
  for (const EpisodeRollout& e : episodes) {
    out.insert(out.end(), e.transitions.begin(), e.transitions.end());
  }
  return out;
}

std::size_t DemonstrationSet::transition_count() const {
  std::size_t n = 0;
  for (const EpisodeRollout& e : episodes) n += e.transitions.size();
  return n;
}

KnownPolicy make_known(std::string id, PolicyParams params,
                       const DemonstrationSet& demos) {
  KnownPolicy k;
  k.id = std::move(id);
  k.params = std::move(params);
  k.demos = demos.flat();
  k.demo_seed = demos.seed;
  k.demo_episodes = static_cast<int>(demos.episodes.size());
  return k;
}

void validate_selection(const AgentSelection& selected) {
  std::set<int> seen;
  for (int l : selected) {
    if (l < 0 || l >= kNumAgents) {
      throw UsageError("agent selection index " + std::to_string(l) +
                       " out of range [0, " + std::to_string(kNumAgents) + ")");
    }
    if (!seen.insert(l).second) {
      throw UsageError("duplicate agent index " + std::to_string(l) +
                       " in selection");
    }
  }
}

DemonstrationSet collect_demonstrations(const PolicyParams& params,
                                        const ArenaConfig& arena, int episodes,
                                        std::uint64_t seed) {
  if (episodes < 1) {
    throw UsageError("collect_demonstrations: episodes must be >= 1");
  }
  DemonstrationSet set;
  set.seed = seed;
  set.episodes.reserve(episodes);
  for (int i = 0; i < episodes; ++i) {
    set.episodes.push_back(
        run_episode(params, arena, derive_seed(seed, i), ActMode::Greedy));
  }
  return set;
}

bool matches_known(const PolicyParams& params, const Transition& transition,
                   const AgentSelection& selected) {
  if (selected.empty()) {
    throw UsageError("matches_known: agent selection must be nonempty");
  }
  validate_selection(selected);
  for (int l : selected) {
    if (greedy_action(params, l, transition.state) == transition.actions[l]) {
      return true;
    }
  }
  return false;
}

std::vector<Transition> relabel_known_batch(const PolicyParams& params,
                                            std::span<const Transition> batch,
                                            const AgentSelection& selected,
                                            const PenaltyConfig& penalty) {
  penalty.validate();
  std::vector<Transition> out;
  for (const Transition& tr : batch) {
    if (!matches_known(params, tr, selected)) continue;
    Transition copy = tr;
    copy.reward -= penalty.penalty_reward;
    out.push_back(std::move(copy));
  }
  return out;
}

double greedy_disagreement_rate(const PolicyParams& params,
                                std::span<const Transition> demos, int agent) {
  if (demos.empty()) {
    throw UsageError("greedy_disagreement_rate: empty demonstration buffer");
  }
  if (agent < 0 || agent >= kNumAgents) {
    throw UsageError("greedy_disagreement_rate: agent index out of range");
  }
  std::size_t differ = 0;
  for (const Transition& tr : demos) {
    if (greedy_action(params, agent, tr.state) != tr.actions[agent]) ++differ;
  }
  return static_cast<double>(differ) / static_cast<double>(demos.size());
}

DiverseTrainResult train_diverse_policy(
    const std::vector<KnownPolicy>& known, const AgentSelection& selected,
    const PenaltyConfig& penalty, const SacConfig& sac,
    const ArenaConfig& arena, std::uint64_t seed, long step_budget,
    const ActionMask& mask) {
  sac.validate();
  arena.validate();
  penalty.validate();
  validate_selection(selected);
  if (selected.empty() && !known.empty()) {
    throw UsageError(
        "train_diverse_policy: empty agent selection with nonempty known set");
  }
  for (const KnownPolicy& m : known) {
    if (m.demos.empty()) {
      throw ConfigError("known policy '" + m.id +
                        "' has an empty demonstration buffer");
    }
  }

  const std::size_t policies = known.size();
  long round_len = 0;
  RoundHook hook;
  if (!selected.empty() && policies > 0 && penalty.mixing_ratio > 0) {
    // Fresh steps per round so that even a fully matched batch per known
    // policy keeps relabeled insertions within mixing_ratio.
    round_len = static_cast<long>(
        std::ceil(static_cast<double>(policies) * penalty.relabel_batch_size /
                  penalty.mixing_ratio));
    Rng penalty_rng(derive_seed(seed, kStreamPenalty));
    hook = [&known, &selected, &penalty,
            penalty_rng](const PolicyParams& current) mutable {
      std::vector<Transition> out;
      std::vector<Transition> batch;
      batch.reserve(penalty.relabel_batch_size);
      for (const KnownPolicy& m : known) {
        batch.clear();
        const int n = static_cast<int>(m.demos.size());
        for (int b = 0; b < penalty.relabel_batch_size; ++b) {
          batch.push_back(m.demos[penalty_rng.uniform_int(n)]);
        }
        std::vector<Transition> relabeled =
            relabel_known_batch(current, batch, selected, penalty);
        out.insert(out.end(), std::make_move_iterator(relabeled.begin()),
                   std::make_move_iterator(relabeled.end()));
      }
      return out;
    };
  }

  TrainResult trained =
      run_training_loop(sac, arena, seed, step_budget, mask, round_len, hook);

  if (trained.report.fresh_inserted > 0 &&
      static_cast<double>(trained.report.relabeled_inserted) >
          penalty.mixing_ratio *
              static_cast<double>(trained.report.fresh_inserted)) {
    log_warn("relabeled insertions exceeded the mixing ratio: ",
             trained.report.relabeled_inserted, " relabeled vs ",
             trained.report.fresh_inserted, " fresh");
  }

  DiverseTrainResult result;
  result.params = std::move(trained.params);
  result.report = std::move(trained.report);
  for (const KnownPolicy& m : known) {
    KnownDisagreement kd;
    kd.known_id = m.id;
    for (int l : selected) {
      kd.rates.push_back(
          {l, greedy_disagreement_rate(result.params, m.demos, l)});
    }
    result.disagreement.push_back(std::move(kd));
  }
  return result;
}

namespace {

nlohmann::json policy_config_json(const AgentSelection& agents,
                                  const std::vector<std::string>& known_ids,
                                  const SacConfig& sac,
                                  const ArenaConfig& arena,
                                  const PenaltyConfig& penalty,
                                  std::uint64_t entry_seed,
                                  const ActionMask& mask) {
  nlohmann::json j;
  j["agents"] = agents;
  j["known"] = known_ids;
  j["sac"] = sac_to_json(sac);
  j["arena"] = arena_to_json(arena);
  j["penalty"] = penalty_to_json(penalty);
  j["seed"] = entry_seed;
  j["mask"] = mask;
  return j;
}

}  // namespace

KnownPolicy train_and_register_policy(
    Registry& registry, const std::string& id, const AgentSelection& agents,
    const std::vector<KnownPolicy>& known, const SacConfig& sac,
    const ArenaConfig& arena, const PenaltyConfig& penalty,
    std::uint64_t master_seed, const ActionMask& mask,
    MmpdPolicyReport* report_out) {
  if (!valid_policy_id(id)) {
    throw ConfigError("invalid policy id: '" + id + "'");
  }
  const std::uint64_t entry_seed = derive_seed(master_seed, fnv1a64(id));
  std::vector<std::string> known_ids;
  known_ids.reserve(known.size());
  for (const KnownPolicy& m : known) known_ids.push_back(m.id);
  const std::string hash = config_hash(policy_config_json(
      agents, known_ids, sac, arena, penalty, entry_seed, mask));

  if (report_out) {
    report_out->id = id;
    report_out->skipped = false;
  }
  if (registry.has(id)) {
    const RegistryEntry& existing = registry.entry(id);
    if (existing.config_hash != hash) {
      throw ConfigError("policy '" + id +
                        "' is already registered with a different config "
                        "hash (" +
                        existing.config_hash + " vs " + hash +
                        "); use a fresh registry or the original config");
    }
    log_info("policy '", id, "' already registered, skipping training");
    if (report_out) report_out->skipped = true;
    return registry.load_policy(id);
  }

  log_info("training policy '", id, "' entry_seed=", entry_seed,
           " config_hash=", hash);
  DiverseTrainResult trained = train_diverse_policy(
      known, agents, penalty, sac, arena, entry_seed, sac.train_steps, mask);
  DemonstrationSet demos =
      collect_demonstrations(trained.params, arena, sac.demo_episodes,
                             derive_seed(entry_seed, kStreamDemo));
  registry.add_policy(id, trained.params, demos,
                      train_report_json(trained.report, trained.disagreement),
                      entry_seed, hash, agents, known_ids,
                      trained.report.steps_done);
  if (report_out) {
    report_out->train = trained.report;
    report_out->disagreement = trained.disagreement;
  }
  return make_known(id, std::move(trained.params), demos);
}

MmpdRunResult run_mmpd(const DiversitySchedule& schedule, const SacConfig& sac,
                       const ArenaConfig& arena, const PenaltyConfig& penalty,
                       std::uint64_t seed, Registry& registry) {
  if (schedule.empty()) {
    throw ConfigError("schedule must contain at least one entry");
  }
  sac.validate();
  arena.validate();
  penalty.validate();

  // Validate the whole schedule before any training starts.
  std::set<std::string> earlier;
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    const ScheduleEntry& entry = schedule[i];
    const std::string where = "schedule entry " + std::to_string(i);
    if (!valid_policy_id(entry.id)) {
      throw ConfigError(where + ": invalid policy id '" + entry.id + "'");
    }
    try {
      validate_selection(entry.agents);
    } catch (const UsageError& e) {
      throw ConfigError(where + " ('" + entry.id + "'): " + e.what());
    }
    if (entry.agents.empty() && !entry.known.empty()) {
      throw ConfigError(where + " ('" + entry.id +
                        "'): empty agent selection with nonempty known set");
    }
    for (const std::string& ref : entry.known) {
      if (ref == entry.id || (!earlier.count(ref) && !registry.has(ref))) {
        throw ConfigError(where + " ('" + entry.id +
                          "'): unknown policy id '" + ref + "'");
      }
    }
    if (!earlier.insert(entry.id).second) {
      throw ConfigError(where + ": duplicate policy id '" + entry.id + "'");
    }
  }

  MmpdRunResult result;
  result.policies.reserve(schedule.size());
  std::map<std::string, std::size_t> index_of;
  for (const ScheduleEntry& entry : schedule) {
    std::vector<KnownPolicy> known;
    known.reserve(entry.known.size());
    for (const std::string& ref : entry.known) {
      auto it = index_of.find(ref);
      if (it != index_of.end()) {
        known.push_back(result.policies[it->second]);
      } else {
        known.push_back(registry.load_policy(ref));
      }
    }
    MmpdPolicyReport report;
    KnownPolicy trained = train_and_register_policy(
        registry, entry.id, entry.agents, known, sac, arena, penalty, seed,
        all_actions_allowed(), &report);
    index_of[entry.id] = result.policies.size();
    result.policies.push_back(std::move(trained));
    result.reports.push_back(std::move(report));
  }
  return result;
}

}  // namespace mmpd
