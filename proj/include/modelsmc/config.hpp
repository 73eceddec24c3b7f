#ifndef MODELSMC_CONFIG_HPP
#define MODELSMC_CONFIG_HPP

#include <string>

#include "json.hpp"
#include "modelsmc/engine.hpp"
#include "modelsmc/funsearch.hpp"
#include "modelsmc/task.hpp"

namespace modelsmc {

struct LlmSettings {
  std::string kernel = "fixed_pool";  // "fixed_pool" | "llm_dsl"
  std::string base_url;
  std::string model_name;
  std::string api_key_env = "MODELSMC_API_KEY";
  double temperature = 1.0;
  int retry_budget = 3;
  double request_timeout_s = 120.0;
  std::string prompt_template_path;  // optional propose-template override
  // JSON array of reply strings; set for deterministic mock runs instead of
  // an HTTP backend.
  std::string mock_replies_path;
  bool feedback = false;
};

// One JSON document with sections {run, task, likelihood, llm, baseline}.
struct AppConfig {
  std::string method = "modelsmc";  // "modelsmc" | "single_particle" | "funsearch"
  RunConfig run;
  std::string task_name = "gmm";  // "gmm" | "sir" | "conjugate"
  nlohmann::json task_params = nlohmann::json::object();
  SurrogateSettings likelihood;
  LlmSettings llm;
  FunsearchConfig baseline;
  std::string log_path = "run.jsonl";
};

// Throws std::runtime_error naming the offending field.
AppConfig app_config_from_json(const nlohmann::json& j);
AppConfig load_config(const std::string& path);

Task build_task(const AppConfig& config);

// Three-part prompt context appropriate for the configured task.
TaskPrompt make_task_prompt(const AppConfig& config, const Task& task);

// Model id whose sampling frequency the frequency report tracks (the GMM
// target candidate); empty for tasks without a known target.
std::string target_model_id(const AppConfig& config);

}  // namespace modelsmc

#endif  // MODELSMC_CONFIG_HPP
