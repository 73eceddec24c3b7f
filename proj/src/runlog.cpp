#include "modelsmc/runlog.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace modelsmc {

using nlohmann::json;

namespace {

json finite_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

double double_or_neg_inf(const json& j) {
  if (j.is_null()) return kNegInf;
  return j.get<double>();
}

json header_json(const RunRecord& record) {
  return json{{"schema", kRunLogSchemaVersion},
              {"method", record.method},
              {"task", record.task_name},
              {"seed", record.seed},
              {"config", config_to_json(record.config)}};
}

json totals_json(const RunRecord& record) {
  return json{{"totals", true},
              {"prompt_tokens", record.total_prompt_tokens},
              {"completion_tokens", record.total_completion_tokens},
              {"aborted", record.aborted},
              {"abort_reason", record.abort_reason}};
}

void append_iterations(std::ostream& out, const RunRecord& record, std::size_t from) {
  for (std::size_t i = from; i < record.iterations.size(); ++i) {
    for (const auto& entry : record.iterations[i].entries) {
      out << entry_to_json(entry).dump() << "\n";
    }
  }
}

}  // namespace

json config_to_json(const RunConfig& c) {
  return json{{"n_particles", c.n_particles},
              {"n_iterations", c.n_iterations},
              {"clone_prob", c.clone_prob},
              {"resample_temperature", c.resample_temperature},
              {"mc_budget", c.mc_budget},
              {"n_sim", c.n_sim},
              {"seed", c.seed},
              {"parallelism", c.parallelism},
              {"early_stop_patience", c.early_stop_patience},
              {"ancestry_depth", c.ancestry_depth},
              {"map_temperature", c.map_temperature},
              {"map_samples", c.map_samples},
              {"bernoulli_clones", c.bernoulli_clones}};
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  c.n_particles = j.value("n_particles", c.n_particles);
  c.n_iterations = j.value("n_iterations", c.n_iterations);
  c.clone_prob = j.value("clone_prob", c.clone_prob);
  c.resample_temperature = j.value("resample_temperature", c.resample_temperature);
  c.mc_budget = j.value("mc_budget", c.mc_budget);
  c.n_sim = j.value("n_sim", c.n_sim);
  c.seed = j.value("seed", c.seed);
  c.parallelism = j.value("parallelism", c.parallelism);
  c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
  c.ancestry_depth = j.value("ancestry_depth", c.ancestry_depth);
  c.map_temperature = j.value("map_temperature", c.map_temperature);
  c.map_samples = j.value("map_samples", c.map_samples);
  c.bernoulli_clones = j.value("bernoulli_clones", c.bernoulli_clones);
  return c;
}

json entry_to_json(const ParticleEntry& e) {
  return json{{"it", e.iteration},
              {"slot", e.slot},
              {"id", e.particle_id},
              {"parent", e.parent_id},
              {"origin", e.origin_id},
              {"model_id", e.model_id},
              {"model_text", e.model_text},
              {"hash", e.model_hash},
              {"logw", finite_or_null(e.log_weight)},
              {"w", e.norm_weight},
              {"clone", e.clone},
              {"failure", e.failure},
              {"feedback", e.feedback},
              {"pt", e.prompt_tokens},
              {"ct", e.completion_tokens}};
}

ParticleEntry entry_from_json(const json& j) {
  ParticleEntry e;
  e.iteration = j.at("it").get<int>();
  e.slot = j.at("slot").get<int>();
  e.particle_id = j.at("id").get<std::string>();
  e.parent_id = j.at("parent").get<std::string>();
  e.origin_id = j.at("origin").get<std::string>();
  e.model_id = j.at("model_id").get<std::string>();
  e.model_text = j.at("model_text").get<std::string>();
  e.model_hash = j.at("hash").get<std::uint64_t>();
  e.log_weight = double_or_neg_inf(j.at("logw"));
  e.norm_weight = j.at("w").get<double>();
  e.clone = j.at("clone").get<bool>();
  e.failure = j.at("failure").get<std::string>();
  e.feedback = j.at("feedback").get<std::string>();
  e.prompt_tokens = j.at("pt").get<std::int64_t>();
  e.completion_tokens = j.at("ct").get<std::int64_t>();
  return e;
}

RunLogWriter::RunLogWriter(const std::string& path, bool truncate)
    : out_(path, truncate ? (std::ios::out | std::ios::trunc) : (std::ios::out | std::ios::app)) {
  if (!out_) throw std::runtime_error("RunLogWriter: cannot open " + path);
}

void RunLogWriter::update(const RunRecord& record) {
  if (!header_written_) {
    if (written_ == 0) out_ << header_json(record).dump() << "\n";
    header_written_ = true;
  }
  append_iterations(out_, record, written_);
  written_ = record.iterations.size();
  out_.flush();
}

void RunLogWriter::finalize(const RunRecord& record) {
  update(record);
  out_ << totals_json(record).dump() << "\n";
  out_.flush();
}

std::string runlog_string(const RunRecord& record) {
  std::ostringstream out;
  out << header_json(record).dump() << "\n";
  append_iterations(out, record, 0);
  out << totals_json(record).dump() << "\n";
  return out.str();
}

RunRecord read_runlog(const std::string& path, bool allow_truncated) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_runlog: cannot open " + path);
  RunRecord record;
  std::string line;
  bool have_header = false;
  bool have_totals = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      if (allow_truncated) break;  // torn trailing write
      throw std::runtime_error("read_runlog: malformed JSON at line " + std::to_string(line_no));
    }
    if (!have_header) {
      if (!j.contains("schema")) throw std::runtime_error("read_runlog: missing header line");
      if (j.at("schema").get<int>() != kRunLogSchemaVersion) {
        throw std::runtime_error("read_runlog: unsupported schema version");
      }
      record.method = j.at("method").get<std::string>();
      record.task_name = j.at("task").get<std::string>();
      record.seed = j.at("seed").get<std::uint64_t>();
      record.config = config_from_json(j.at("config"));
      have_header = true;
      continue;
    }
    if (j.contains("totals")) {
      record.total_prompt_tokens = j.at("prompt_tokens").get<std::int64_t>();
      record.total_completion_tokens = j.at("completion_tokens").get<std::int64_t>();
      record.aborted = j.at("aborted").get<bool>();
      record.abort_reason = j.at("abort_reason").get<std::string>();
      have_totals = true;
      continue;
    }
    ParticleEntry entry = entry_from_json(j);
    if (record.iterations.empty() || record.iterations.back().iteration != entry.iteration) {
      record.iterations.push_back({entry.iteration, {}});
    }
    record.iterations.back().entries.push_back(std::move(entry));
  }
  if (!have_header) throw std::runtime_error("read_runlog: empty log");
  if (!have_totals && !allow_truncated) {
    throw std::runtime_error("read_runlog: missing totals line (truncated log?)");
  }
  return record;
}

std::vector<Particle> reconstruct_population(const RunRecord& record, int ancestry_depth) {
  if (record.iterations.empty()) {
    throw std::invalid_argument("reconstruct_population: empty record");
  }
  std::map<std::string, const ParticleEntry*> by_id;
  for (const auto& it : record.iterations) {
    for (const auto& e : it.entries) by_id[e.particle_id] = &e;
  }
  std::vector<Particle> population;
  for (const auto& e : record.iterations.back().entries) {
    Particle p;
    p.model.id = e.model_id;
    if (!e.model_text.empty()) p.model.representation = DslSource{e.model_text};
    p.log_weight = e.log_weight;
    p.norm_weight = e.norm_weight;
    p.feedback = e.feedback;
    p.failure = e.failure;
    p.origin_id = e.origin_id;
    // Ancestor chain via parent links, oldest first.
    std::vector<AncestryEntry> chain;
    std::string parent = e.parent_id;
    while (!parent.empty() && static_cast<int>(chain.size()) < ancestry_depth) {
      auto found = by_id.find(parent);
      if (found == by_id.end()) break;
      const ParticleEntry* a = found->second;
      chain.push_back({a->model_id, a->model_text, a->feedback, a->log_weight});
      parent = a->parent_id;
    }
    std::reverse(chain.begin(), chain.end());
    p.ancestry = std::move(chain);
    population.push_back(std::move(p));
  }
  return population;
}

}  // namespace modelsmc
