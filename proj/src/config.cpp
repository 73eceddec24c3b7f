#include "modelsmc/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "modelsmc/tasks.hpp"

namespace modelsmc {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& field, const std::string& why) {
  throw std::runtime_error("config: " + field + ": " + why);
}

template <typename T>
T get_field(const json& section, const std::string& section_name, const std::string& key,
            T fallback) {
  if (!section.contains(key)) return fallback;
  try {
    return section.at(key).get<T>();
  } catch (const json::exception&) {
    config_error(section_name + "." + key, "wrong type");
  }
}

SurrogateKind parse_kind(const std::string& name) {
  if (name == "exact") return SurrogateKind::Exact;
  if (name == "gaussian") return SurrogateKind::ConditionalGaussian;
  if (name == "kde") return SurrogateKind::ConditionalKde;
  config_error("likelihood.kind", "expected one of exact|gaussian|kde, got '" + name + "'");
}

}  // namespace

AppConfig app_config_from_json(const json& j) {
  if (!j.is_object()) config_error("<root>", "document must be a JSON object");
  AppConfig out;

  const json run = j.value("run", json::object());
  out.method = get_field<std::string>(run, "run", "method", out.method);
  if (out.method != "modelsmc" && out.method != "single_particle" && out.method != "funsearch") {
    config_error("run.method", "expected modelsmc|single_particle|funsearch");
  }
  out.run.n_particles = get_field(run, "run", "n_particles", out.run.n_particles);
  out.run.n_iterations = get_field(run, "run", "n_iterations", out.run.n_iterations);
  out.run.clone_prob = get_field(run, "run", "clone_prob", out.run.clone_prob);
  out.run.resample_temperature =
      get_field(run, "run", "resample_temperature", out.run.resample_temperature);
  out.run.mc_budget = get_field(run, "run", "mc_budget", out.run.mc_budget);
  out.run.n_sim = get_field(run, "run", "n_sim", out.run.n_sim);
  out.run.seed = get_field(run, "run", "seed", out.run.seed);
  out.run.parallelism = get_field(run, "run", "parallelism", out.run.parallelism);
  out.run.early_stop_patience =
      get_field(run, "run", "early_stop_patience", out.run.early_stop_patience);
  out.run.ancestry_depth = get_field(run, "run", "ancestry_depth", out.run.ancestry_depth);
  out.run.map_samples = get_field(run, "run", "map_samples", out.run.map_samples);
  out.run.bernoulli_clones = get_field(run, "run", "bernoulli_clones", out.run.bernoulli_clones);
  out.log_path = get_field<std::string>(run, "run", "log_path", out.log_path);
  try {
    out.run.validate();
  } catch (const std::exception& e) {
    config_error("run", e.what());
  }

  const json task = j.value("task", json::object());
  out.task_name = get_field<std::string>(task, "task", "name", out.task_name);
  if (out.task_name != "gmm" && out.task_name != "sir" && out.task_name != "conjugate") {
    config_error("task.name", "expected gmm|sir|conjugate");
  }
  out.task_params = task;

  const json lik = j.value("likelihood", json::object());
  out.likelihood.kind = parse_kind(get_field<std::string>(lik, "likelihood", "kind", "gaussian"));
  out.likelihood.variance_floor =
      get_field(lik, "likelihood", "variance_floor", out.likelihood.variance_floor);
  out.likelihood.knn = get_field(lik, "likelihood", "knn", out.likelihood.knn);
  out.likelihood.kde_bandwidth_scale =
      get_field(lik, "likelihood", "kde_bandwidth_scale", out.likelihood.kde_bandwidth_scale);
  const std::string summary = get_field<std::string>(lik, "likelihood", "summary", "identity");
  if (summary == "identity") {
    out.likelihood.summary = SummaryFn::identity();
  } else if (summary == "mean_std") {
    out.likelihood.summary = SummaryFn::mean_std();
  } else {
    config_error("likelihood.summary", "expected identity|mean_std");
  }

  const json llm = j.value("llm", json::object());
  out.llm.kernel = get_field<std::string>(llm, "llm", "kernel", out.llm.kernel);
  if (out.llm.kernel != "fixed_pool" && out.llm.kernel != "llm_dsl") {
    config_error("llm.kernel", "expected fixed_pool|llm_dsl");
  }
  out.llm.base_url = get_field<std::string>(llm, "llm", "base_url", out.llm.base_url);
  out.llm.model_name = get_field<std::string>(llm, "llm", "model", out.llm.model_name);
  out.llm.api_key_env = get_field<std::string>(llm, "llm", "api_key_env", out.llm.api_key_env);
  out.llm.temperature = get_field(llm, "llm", "temperature", out.llm.temperature);
  out.llm.retry_budget = get_field(llm, "llm", "retry_budget", out.llm.retry_budget);
  out.llm.request_timeout_s =
      get_field(llm, "llm", "request_timeout_s", out.llm.request_timeout_s);
  out.llm.prompt_template_path =
      get_field<std::string>(llm, "llm", "prompt_template_path", out.llm.prompt_template_path);
  out.llm.mock_replies_path =
      get_field<std::string>(llm, "llm", "mock_replies_path", out.llm.mock_replies_path);
  out.llm.feedback = get_field(llm, "llm", "feedback", out.llm.feedback);

  const json baseline = j.value("baseline", json::object());
  out.baseline.n_islands = get_field(baseline, "baseline", "n_islands", out.baseline.n_islands);
  out.baseline.prompt_k = get_field(baseline, "baseline", "prompt_k", out.baseline.prompt_k);
  out.baseline.n_proposals =
      get_field(baseline, "baseline", "n_proposals", out.baseline.n_proposals);
  out.baseline.reinit_period =
      get_field(baseline, "baseline", "reinit_period", out.baseline.reinit_period);
  out.baseline.reinit_fraction =
      get_field(baseline, "baseline", "reinit_fraction", out.baseline.reinit_fraction);
  out.baseline.score_temperature =
      get_field(baseline, "baseline", "score_temperature", out.baseline.score_temperature);
  out.baseline.proposals_per_prompt =
      get_field(baseline, "baseline", "proposals_per_prompt", out.baseline.proposals_per_prompt);
  if (out.baseline.n_islands < 1) config_error("baseline.n_islands", "must be >= 1");
  if (out.baseline.prompt_k < 1) config_error("baseline.prompt_k", "must be >= 1");
  if (out.baseline.n_proposals < 1) config_error("baseline.n_proposals", "must be >= 1");
  if (out.baseline.reinit_period < 1) config_error("baseline.reinit_period", "must be >= 1");
  if (!(out.baseline.reinit_fraction > 0.0 && out.baseline.reinit_fraction < 1.0)) {
    config_error("baseline.reinit_fraction", "must be in (0,1)");
  }

  if (out.method == "funsearch" && out.llm.kernel != "llm_dsl") {
    config_error("llm.kernel", "funsearch requires the llm_dsl kernel");
  }
  return out;
}

AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("config: invalid JSON in " + path + ": " + e.what());
  }
  return app_config_from_json(j);
}

Task build_task(const AppConfig& config) {
  const json& p = config.task_params;
  Task task;
  if (config.task_name == "gmm") {
    tasks::GmmTaskSettings s;
    s.n_models = get_field(p, "task", "n_models", s.n_models);
    s.target_index = get_field(p, "task", "target_index", s.target_index);
    s.m_observed = get_field(p, "task", "m_observed", s.m_observed);
    s.pool_seed = get_field(p, "task", "pool_seed", s.pool_seed);
    s.data_seed = get_field(p, "task", "data_seed", s.data_seed);
    task = tasks::make_gmm_task(s);
  } else if (config.task_name == "sir") {
    tasks::SirTaskSettings s;
    s.m_observed = get_field(p, "task", "m_observed", s.m_observed);
    s.data_seed = get_field(p, "task", "data_seed", s.data_seed);
    s.true_beta = get_field(p, "task", "true_beta", s.true_beta);
    s.true_gamma = get_field(p, "task", "true_gamma", s.true_gamma);
    task = tasks::make_sir_task(s);
  } else {
    tasks::ConjugateTaskSettings s;
    s.m_observed = get_field(p, "task", "m_observed", s.m_observed);
    s.data_seed = get_field(p, "task", "data_seed", s.data_seed);
    s.true_theta = get_field(p, "task", "true_theta", s.true_theta);
    task = tasks::make_conjugate_task(s);
  }
  const std::string observed_csv = get_field<std::string>(p, "task", "observed_csv", "");
  if (!observed_csv.empty()) {
    int context_dim = task.observed.pairs.empty()
                          ? 0
                          : static_cast<int>(task.observed.pairs.front().context.size());
    task.observed = read_observed_csv(observed_csv, context_dim);
  }
  return task;
}

TaskPrompt make_task_prompt(const AppConfig& config, const Task& task) {
  TaskPrompt prompt;
  if (config.task_name == "sir") {
    prompt.system_description =
        "A closed population of individuals, observed over 60 discrete time steps. The context "
        "variables c0, c1, c2 are the initial counts of three groups (for example susceptible, "
        "infected and recovered individuals); the total population is constant.";
    prompt.signature_description =
        "A program over parameters th0, th1 and context c0, c1, c2 that declares three state "
        "variables and emits `output S, I, R horizon 61`, i.e. the three series over time steps "
        "1..61 (step 1 reproduces the initial state).";
    prompt.task_description =
        "Propose stochastic update rules so that simulated trajectories, normalized by the total "
        "population, match the distribution of the observed trajectories.";
  } else {
    prompt.system_description =
        "An unknown stochastic data-generating process for the task '" + task.name + "'.";
    prompt.signature_description =
        "A program over parameters th<k> and context c<k> whose outputs have the same dimension "
        "as one observed instance.";
    prompt.task_description =
        "Propose a candidate simulator whose output distribution matches the observed data.";
  }
  return prompt;
}

std::string target_model_id(const AppConfig& config) {
  if (config.task_name != "gmm") return "";
  const int target = get_field(config.task_params, "task", "target_index", 0);
  return "gmm_pool_" + std::to_string(target);
}

}  // namespace modelsmc
