#include <cstdlib>
#include <fstream>
#include <limits>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "modelsmc/config.hpp"
#include "modelsmc/funsearch.hpp"
#include "modelsmc/param_map.hpp"
#include "modelsmc/reports.hpp"
#include "modelsmc/runlog.hpp"

namespace {

using namespace modelsmc;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::vector<std::string> load_mock_replies(const std::string& path) {
  nlohmann::json j = nlohmann::json::parse(read_file(path));
  if (!j.is_array()) throw std::runtime_error(path + ": expected a JSON array of reply strings");
  std::vector<std::string> replies;
  for (const auto& item : j) replies.push_back(item.get<std::string>());
  return replies;
}

struct KernelBundle {
  ProposalKernel kernel;
  std::unique_ptr<ChatClient> client;
  LlmDslKernel llm;  // kept for funsearch, which takes the concrete kernel
  bool is_llm = false;
};

KernelBundle build_kernel(const AppConfig& config, const Task& task, TokenLedger& ledger) {
  KernelBundle bundle;
  if (config.llm.kernel == "fixed_pool") {
    bundle.kernel = FixedPoolKernel{&task.pool};
    return bundle;
  }
  if (!config.llm.mock_replies_path.empty()) {
    bundle.client = std::make_unique<ScriptedChatClient>(
        load_mock_replies(config.llm.mock_replies_path));
  } else {
    const char* key = std::getenv(config.llm.api_key_env.c_str());
    if (key == nullptr || *key == '\0') {
      throw LlmError("missing API credential: set environment variable " + config.llm.api_key_env);
    }
    HttpClientConfig http;
    http.base_url = config.llm.base_url;
    http.model_name = config.llm.model_name;
    http.api_key_env = config.llm.api_key_env;
    http.request_timeout_s = config.llm.request_timeout_s;
    bundle.client = std::make_unique<HttpChatClient>(http);
  }
  LlmDslKernel kernel;
  kernel.client = bundle.client.get();
  kernel.ledger = &ledger;
  kernel.prompt = make_task_prompt(config, task);
  kernel.prompt_template = config.llm.prompt_template_path.empty()
                               ? default_propose_template()
                               : read_file(config.llm.prompt_template_path);
  kernel.retry_budget = config.llm.retry_budget;
  kernel.model_name = config.llm.model_name;
  kernel.temperature = config.llm.temperature;
  kernel.param_dim = task.initial_model.param_dim;
  kernel.context_dim = task.initial_model.context_dim;
  kernel.obs_dim = task.initial_model.obs_dim;
  bundle.llm = kernel;
  bundle.kernel = kernel;
  bundle.is_llm = true;
  return bundle;
}

// Conditional-likelihood summary for the best model of a finished run.
double best_conditional_metric(const AppConfig& config, const Task& task,
                               const BestParticle& best) {
  CandidateModel model;
  if (!best.model_text.empty()) {
    model.id = best.model_id;
    model.representation = DslSource{best.model_text};
  } else {
    bool found = false;
    for (const auto& m : task.pool) {
      if (m.id == best.model_id) {
        model = m;
        found = true;
        break;
      }
    }
    if (!found && task.initial_model.id == best.model_id) {
      model = task.initial_model;
      found = true;
    }
    if (!found) return std::numeric_limits<double>::quiet_NaN();
  }
  try {
    const SummaryFn summary =
        config.likelihood.summary.is_identity() ? task.summary : config.likelihood.summary;
    RngStream root(config.run.seed);
    std::unique_ptr<SurrogateLikelihood> surrogate;
    if (config.likelihood.kind == SurrogateKind::Exact && task.exact_logpdf_for) {
      surrogate = std::make_unique<ExactDensity>(task.exact_logpdf_for(model));
    } else {
      SyntheticDataset training =
          build_training_set(model, task.simulate, task.theta_prior, task.context_sampler,
                             config.run.n_sim, root.derive(0, 0, "condtrain"));
      if (task.context_map) {
        for (auto& row : training.rows) row.context = task.context_map(row.context);
      }
      training = apply_summary(summary, training);
      surrogate = fit_surrogate(training, config.likelihood);
    }
    ObservedDataset observed;
    for (const auto& inst : task.observed.pairs) {
      observed.pairs.push_back({summary(inst.x), task.mapped_context(inst.context)});
    }
    std::vector<MapEstimate> theta_hats =
        estimate_map_dataset(*surrogate, observed, task.theta_prior, config.run.map_samples,
                             root.derive(0, 1, "condmap"), config.run.parallelism);
    return conditional_loglik_metric(*surrogate, observed, theta_hats).value;
  } catch (const std::exception&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

int cmd_run(const std::string& config_path, bool resume) {
  AppConfig config = load_config(config_path);
  Task task = build_task(config);
  TokenLedger ledger;
  KernelBundle bundle = build_kernel(config, task, ledger);

  RunRecord partial;
  EngineOptions options;
  options.likelihood = config.likelihood;
  options.ledger = &ledger;
  if (bundle.is_llm && config.llm.feedback) {
    options.feedback_client = bundle.client.get();
    options.feedback_model_name = config.llm.model_name;
    options.system_description = make_task_prompt(config, task).system_description;
  }

  RunLogWriter writer(config.log_path, /*truncate=*/true);
  if (resume) {
    partial = read_runlog(config.log_path, /*allow_truncated=*/true);
    options.resume_from = &partial;
  }
  options.on_iteration = [&](const RunRecord& record) { writer.update(record); };

  RunRecord record;
  if (config.method == "funsearch") {
    record = run_funsearch(config.run, config.baseline, task, bundle.llm, options);
  } else if (config.method == "single_particle") {
    record = run_single_particle(config.run, task, bundle.kernel, options);
  } else {
    record = run_modelsmc(config.run, task, bundle.kernel, options);
  }
  writer.finalize(record);

  if (record.aborted) {
    std::cerr << "run aborted: " << record.abort_reason << "\n";
    return 1;
  }
  BestParticle best = best_particle(record);
  std::cout << "run complete: " << record.iterations.size() << " iteration blocks -> "
            << config.log_path << "\n";
  std::cout << "best particle: " << best.particle_id << " (model " << best.model_id << ")\n";
  if (!best.model_text.empty()) std::cout << best.model_text << "\n";
  if (config.method == "funsearch") {
    std::cout << "best mean conditional log likelihood (negated): " << -best.log_weight << "\n";
  } else {
    std::cout << "negative log geometric-mean marginal: " << -best.log_weight << "\n";
    double cond = best_conditional_metric(config, task, best);
    std::cout << "negative mean conditional log likelihood: " << cond << "\n";
  }
  std::cout << "tokens: prompt " << record.total_prompt_tokens << ", completion "
            << record.total_completion_tokens << "\n";
  return 0;
}

std::vector<RunRecord> read_logs(const std::vector<std::string>& paths) {
  std::vector<RunRecord> records;
  for (const auto& p : paths) records.push_back(read_runlog(p));
  return records;
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("cannot open " + out_path);
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential Monte Carlo over executable candidate models"};
  app.require_subcommand(1);

  std::string config_path;
  bool resume = false;
  auto* run = app.add_subcommand("run", "Execute a run described by a JSON config");
  run->add_option("config", config_path, "config file")->required();
  run->add_flag("--resume", resume, "continue from the last complete iteration of the log");

  std::vector<std::string> log_paths;
  std::string out_path, target;
  auto* freq = app.add_subcommand("report-freq", "Target-model sampling frequency per iteration");
  freq->add_option("logs", log_paths, "run logs")->required();
  freq->add_option("--target", target, "target model id (default: from first log's task)");
  freq->add_option("--out", out_path, "output CSV path (stdout if omitted)");

  int top_k = 5;
  auto* tokens = app.add_subcommand("report-tokens", "Best metric as a function of token usage");
  tokens->add_option("logs", log_paths, "run logs")->required();
  tokens->add_option("--top", top_k, "number of best logs to average");
  tokens->add_option("--out", out_path, "output CSV path");

  std::vector<std::string> groups;
  std::uint64_t boot_seed = 0;
  int n_boot = 10000;
  auto* table = app.add_subcommand("table-metrics", "Median metric and bootstrap CI per method");
  table->add_option("--group", groups, "method=log1,log2,... (repeatable)")->required();
  table->add_option("--bootstrap", n_boot, "bootstrap resamples");
  table->add_option("--seed", boot_seed, "bootstrap seed");
  table->add_option("--out", out_path, "output CSV path");

  auto* validate = app.add_subcommand("validate-config", "Parse and validate a config file");
  validate->add_option("config", config_path, "config file")->required();

  std::string log_path;
  auto* replay = app.add_subcommand("replay", "Re-serialize a log and verify it byte-for-byte");
  replay->add_option("log", log_path, "run log")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, resume);
    if (freq->parsed()) {
      std::vector<RunRecord> records = read_logs(log_paths);
      std::string tgt = target;
      if (tgt.empty()) {
        if (records.front().task_name != "gmm") {
          throw std::runtime_error("report-freq: --target required for non-gmm logs");
        }
        tgt = "gmm_pool_0";
      }
      emit(report_freq_csv(records, tgt), out_path);
      return 0;
    }
    if (tokens->parsed()) {
      std::string warning;
      emit(report_tokens_csv(read_logs(log_paths), top_k, &warning), out_path);
      if (!warning.empty()) std::cerr << "warning: " << warning << "\n";
      return 0;
    }
    if (table->parsed()) {
      std::vector<MetricGroup> metric_groups;
      for (const auto& spec : groups) {
        auto eq = spec.find('=');
        if (eq == std::string::npos) {
          throw std::runtime_error("table-metrics: group spec must be method=path[,path...]");
        }
        MetricGroup group;
        group.method = spec.substr(0, eq);
        std::stringstream paths(spec.substr(eq + 1));
        std::string path;
        while (std::getline(paths, path, ',')) {
          if (path.empty()) continue;
          RunRecord record = read_runlog(path);
          group.values.push_back(-best_particle(record).log_weight);
        }
        metric_groups.push_back(std::move(group));
      }
      std::string warning;
      emit(table_metrics_csv(metric_groups, n_boot, boot_seed, &warning), out_path);
      if (!warning.empty()) std::cerr << "warning: " << warning << "\n";
      return 0;
    }
    if (validate->parsed()) {
      AppConfig config = load_config(config_path);
      std::cout << "config ok: method=" << config.method << " task=" << config.task_name
                << " seed=" << config.run.seed << "\n";
      return 0;
    }
    if (replay->parsed()) {
      RunRecord record = read_runlog(log_path);
      if (runlog_string(record) == read_file(log_path)) {
        std::cout << "replay ok: " << log_path << "\n";
        return 0;
      }
      std::cerr << "replay mismatch: " << log_path << "\n";
      return 1;
    }
  } catch (const LlmError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
