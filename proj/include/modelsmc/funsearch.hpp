#ifndef MODELSMC_FUNSEARCH_HPP
#define MODELSMC_FUNSEARCH_HPP

#include <string>
#include <vector>

#include "modelsmc/engine.hpp"
#include "modelsmc/param_map.hpp"

namespace modelsmc {

struct IslandProgram {
  std::string id;
  std::string source;      // DSL text
  double score = kNegInf;  // mean conditional log likelihood at theta-hat
  int length = 0;          // token count, shorter preferred on near-ties
};

// Island-structured program database: islands evolve independently; at
// reinitialization the worst islands are cleared and reseeded from the
// survivors' best programs.
class IslandDatabase {
 public:
  explicit IslandDatabase(int n_islands, double score_temperature = 1.0);

  int n_islands() const { return static_cast<int>(islands_.size()); }
  const std::vector<IslandProgram>& island(int i) const { return islands_.at(i); }
  double island_best(int i) const { return best_.at(i); }
  double global_best() const;

  void insert(int island, IslandProgram program);

  // Uniform draw among non-empty islands.
  int sample_island(RngStream& rng) const;

  // k draws with probability proportional to softmax(score / temperature),
  // with a small length penalty breaking near-ties toward shorter programs.
  // Returned ascending by score for prompt assembly; when dedup is set each
  // program appears at most once.
  std::vector<IslandProgram> sample_prompt_programs(int island, int k, RngStream& rng,
                                                    bool dedup = false) const;

  // Clears the bottom ceil(fraction * n) islands by best score and seeds
  // each with one surviving island's best program.
  void reinitialize_worst(double fraction, RngStream& rng);

 private:
  std::vector<std::vector<IslandProgram>> islands_;
  std::vector<double> best_;
  double temperature_ = 1.0;
};

// (1/M) sum_j log p_phi(x_o^j | theta_hat^j, c_o^j); the exact negative of
// the conditional-log-likelihood metric.
double score_model(const SurrogateLikelihood& surrogate, const ObservedDataset& dataset,
                   const std::vector<MapEstimate>& theta_hats);

int dsl_token_count(const std::string& source);

struct FunsearchConfig {
  int n_islands = 10;
  int prompt_k = 2;            // programs sampled into each prompt
  int n_proposals = 150;       // total LLM proposals for the run
  int reinit_period = 40;      // proposals between reinitializations
  double reinit_fraction = 0.5;
  double score_temperature = 1.0;
  int proposals_per_prompt = 4;  // single-program requests per prompt sample
};

RunRecord run_funsearch(const RunConfig& config, const FunsearchConfig& fs, const Task& task,
                        const LlmDslKernel& kernel, const EngineOptions& options);

}  // namespace modelsmc

#endif  // MODELSMC_FUNSEARCH_HPP
