#ifndef MODELSMC_LLM_CLIENT_HPP
#define MODELSMC_LLM_CLIENT_HPP

#include <cstdint>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

namespace modelsmc {

struct ChatMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::string content;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 1.0;
  int max_tokens = 4096;
};

struct ChatResponse {
  std::string content;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  std::string finish_reason;
};

struct LlmError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Purposes for per-call ledger records.
enum class CallPurpose { Propose, FeedbackStage1, FeedbackStage2 };

const char* to_string(CallPurpose purpose);

class TokenLedger {
 public:
  struct Record {
    CallPurpose purpose;
    std::int64_t prompt_tokens;
    std::int64_t completion_tokens;
  };

  void add(CallPurpose purpose, std::int64_t prompt_tokens, std::int64_t completion_tokens) {
    std::lock_guard<std::mutex> lock(mutex_);
    records_.push_back({purpose, prompt_tokens, completion_tokens});
    total_prompt_ += prompt_tokens;
    total_completion_ += completion_tokens;
  }

  std::int64_t total_prompt_tokens() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return total_prompt_;
  }
  std::int64_t total_completion_tokens() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return total_completion_;
  }
  std::vector<Record> records() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return records_;
  }

 private:
  mutable std::mutex mutex_;
  std::vector<Record> records_;
  std::int64_t total_prompt_ = 0;
  std::int64_t total_completion_ = 0;
};

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
};

struct HttpClientConfig {
  std::string base_url;  // e.g. "http://localhost:8000/v1"
  std::string model_name;
  std::string api_key_env = "MODELSMC_API_KEY";
  double request_timeout_s = 120.0;
  int max_retries = 3;
};

// OpenAI-compatible chat-completions client; retries 429/5xx with
// exponential backoff, fails immediately on other statuses.
class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(HttpClientConfig config);
  ChatResponse complete(const ChatRequest& request) override;

 private:
  HttpClientConfig config_;
  std::string api_key_;
};

// Deterministic scripted backend for tests and mock runs: replies are served
// in order; the script wraps around when exhausted.
class ScriptedChatClient : public ChatClient {
 public:
  explicit ScriptedChatClient(std::vector<std::string> replies, bool wrap = true)
      : replies_(std::move(replies)), wrap_(wrap) {
    if (replies_.empty()) throw std::invalid_argument("ScriptedChatClient: no replies");
  }

  ChatResponse complete(const ChatRequest& request) override;

  int calls() const { return calls_; }
  const std::vector<ChatRequest>& requests() const { return requests_; }

 private:
  std::vector<std::string> replies_;
  bool wrap_;
  int calls_ = 0;
  std::vector<ChatRequest> requests_;
  std::mutex mutex_;
};

// Backend that fails on any call; used to prove LLM-free paths never reach
// the network.
class FailingChatClient : public ChatClient {
 public:
  ChatResponse complete(const ChatRequest&) override {
    throw LlmError("unexpected chat-completions call");
  }
};

// Two-stage contextual feedback: stage 1 diagnoses numeric metrics and
// captured exceptions, stage 2 turns the diagnosis into revision guidance.
// Client failures degrade to empty feedback with a recorded warning.
struct FeedbackResult {
  std::string text;
  std::string warning;
};

FeedbackResult generate_feedback(const std::string& model_repr, const std::string& weight_summary,
                                 const std::string& diagnosis_inputs,
                                 const std::string& system_description, ChatClient& client,
                                 TokenLedger& ledger, const std::string& model_name = "",
                                 double temperature = 1.0);

}  // namespace modelsmc

#endif  // MODELSMC_LLM_CLIENT_HPP
