#ifndef MODELSMC_RUNLOG_HPP
#define MODELSMC_RUNLOG_HPP

#include <fstream>
#include <string>

#include "json.hpp"
#include "modelsmc/engine.hpp"

namespace modelsmc {

// Append-only JSON-lines run log: one header line (schema, method, task,
// seed, config snapshot), one line per particle entry, one totals line when
// the run finishes. Flushed at iteration boundaries so a crashed run can be
// resumed from its last complete iteration.

inline constexpr int kRunLogSchemaVersion = 1;

nlohmann::json config_to_json(const RunConfig& config);
RunConfig config_from_json(const nlohmann::json& j);

nlohmann::json entry_to_json(const ParticleEntry& entry);
ParticleEntry entry_from_json(const nlohmann::json& j);

class RunLogWriter {
 public:
  // Truncates by default; pass truncate = false to append to an existing
  // log whose contents have already been accounted for via mark_written().
  explicit RunLogWriter(const std::string& path, bool truncate = true);

  // Appends any iterations not yet written (header first if needed), then
  // flushes. Safe to call from the engine's per-iteration hook.
  void update(const RunRecord& record);

  // Writes the totals line and flushes.
  void finalize(const RunRecord& record);

  // Continue an existing log: marks the first `n` iterations as already
  // written so update() appends only the new ones.
  void mark_written(std::size_t n_iterations) { written_ = n_iterations; }

 private:
  std::ofstream out_;
  bool header_written_ = false;
  std::size_t written_ = 0;
};

// Parses a log back into a RunRecord. With allow_truncated, incomplete
// trailing lines and a missing totals line are tolerated (crash resume);
// otherwise they raise.
RunRecord read_runlog(const std::string& path, bool allow_truncated = false);

// Full canonical serialization of a record, identical to the bytes a
// RunLogWriter produces for it. Two records serializing identically are
// replay-equal.
std::string runlog_string(const RunRecord& record);

// Rebuilds the engine loop state embedded in a record so a run can continue:
// the population of the last logged iteration, with feedback and ancestry
// chains reconstructed from parent links.
std::vector<Particle> reconstruct_population(const RunRecord& record, int ancestry_depth);

}  // namespace modelsmc

#endif  // MODELSMC_RUNLOG_HPP
