#include "modelsmc/llm_client.hpp"

#include <chrono>
#include <cstdlib>
#include <thread>

#define CPPHTTPLIB_NO_EXCEPTIONS 0
#include "httplib.h"
#include "json.hpp"

namespace modelsmc {

using nlohmann::json;

const char* to_string(CallPurpose purpose) {
  switch (purpose) {
    case CallPurpose::Propose:
      return "propose";
    case CallPurpose::FeedbackStage1:
      return "feedback_stage1";
    case CallPurpose::FeedbackStage2:
      return "feedback_stage2";
  }
  return "unknown";
}

HttpChatClient::HttpChatClient(HttpClientConfig config) : config_(std::move(config)) {
  if (config_.base_url.empty()) throw LlmError("llm base_url is empty");
  const char* key = std::getenv(config_.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw LlmError("missing API credential: set environment variable " + config_.api_key_env);
  }
  api_key_ = key;
}

namespace {

// Splits "http://host:port/prefix" into client base and path prefix.
struct UrlParts {
  std::string origin;
  std::string prefix;
};

UrlParts split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  auto path_start = url.find('/', host_start);
  if (path_start == std::string::npos) return {url, ""};
  std::string prefix = url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, path_start), prefix};
}

}  // namespace

ChatResponse HttpChatClient::complete(const ChatRequest& request) {
  UrlParts parts = split_url(config_.base_url);
  httplib::Client client(parts.origin);
  client.set_connection_timeout(std::chrono::milliseconds(
      static_cast<long>(config_.request_timeout_s * 1000)));
  client.set_read_timeout(std::chrono::milliseconds(
      static_cast<long>(config_.request_timeout_s * 1000)));
  client.set_bearer_token_auth(api_key_);

  json body;
  body["model"] = request.model.empty() ? config_.model_name : request.model;
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_tokens;
  body["messages"] = json::array();
  for (const auto& m : request.messages) {
    body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  }
  const std::string payload = body.dump();
  const std::string path = parts.prefix + "/chat/completions";

  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(500 << (attempt - 1)));
    }
    auto res = client.Post(path, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "http status " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw LlmError("chat completion failed with http status " + std::to_string(res->status) +
                     ": " + res->body.substr(0, 512));
    }
    json reply;
    try {
      reply = json::parse(res->body);
      ChatResponse out;
      const auto& choice = reply.at("choices").at(0);
      out.content = choice.at("message").at("content").get<std::string>();
      out.finish_reason = choice.value("finish_reason", "");
      if (reply.contains("usage")) {
        out.prompt_tokens = reply["usage"].value("prompt_tokens", 0);
        out.completion_tokens = reply["usage"].value("completion_tokens", 0);
      }
      return out;
    } catch (const json::exception& e) {
      throw LlmError(std::string("malformed chat completion response: ") + e.what());
    }
  }
  throw LlmError("chat completion failed after " + std::to_string(config_.max_retries + 1) +
                 " attempts; last error: " + last_error);
}

namespace {

// Whitespace-delimited chunk count: crude but deterministic, good enough for
// ledger accounting in mock runs.
std::int64_t approx_tokens(const std::string& text) {
  std::int64_t n = 0;
  bool in_word = false;
  for (char c : text) {
    bool ws = c == ' ' || c == '\n' || c == '\t' || c == '\r';
    if (!ws && !in_word) ++n;
    in_word = !ws;
  }
  return n;
}

}  // namespace

ChatResponse ScriptedChatClient::complete(const ChatRequest& request) {
  std::lock_guard<std::mutex> lock(mutex_);
  if (calls_ >= static_cast<int>(replies_.size()) && !wrap_) {
    throw LlmError("scripted client exhausted after " + std::to_string(calls_) + " calls");
  }
  const std::string& reply = replies_[calls_ % replies_.size()];
  ++calls_;
  requests_.push_back(request);
  ChatResponse out;
  out.content = reply;
  out.finish_reason = "stop";
  std::int64_t prompt = 0;
  for (const auto& m : request.messages) prompt += approx_tokens(m.content);
  out.prompt_tokens = prompt;
  out.completion_tokens = approx_tokens(reply);
  return out;
}

FeedbackResult generate_feedback(const std::string& model_repr, const std::string& weight_summary,
                                 const std::string& diagnosis_inputs,
                                 const std::string& system_description, ChatClient& client,
                                 TokenLedger& ledger, const std::string& model_name,
                                 double temperature) {
  ChatRequest stage1;
  stage1.model = model_name;
  stage1.temperature = temperature;
  stage1.messages.push_back(
      {"system",
       "You analyze candidate simulator programs for a model-inference loop. "
       "Diagnose why the candidate fits or misfits the observed data. Be concrete and brief."});
  stage1.messages.push_back(
      {"user", "System under study:\n" + system_description + "\n\nCandidate model:\n" +
                   model_repr + "\n\nFit summary:\n" + weight_summary +
                   "\n\nDiagnostics (metrics, simulator errors if any):\n" + diagnosis_inputs +
                   "\n\nDiagnose the main weaknesses of this candidate."});

  FeedbackResult result;
  std::string diagnosis;
  try {
    ChatResponse r1 = client.complete(stage1);
    ledger.add(CallPurpose::FeedbackStage1, r1.prompt_tokens, r1.completion_tokens);
    diagnosis = r1.content;
  } catch (const std::exception& e) {
    result.warning = std::string("feedback stage 1 failed: ") + e.what();
    return result;
  }

  ChatRequest stage2;
  stage2.model = model_name;
  stage2.temperature = temperature;
  stage2.messages.push_back(
      {"system",
       "You turn a diagnosis of a candidate simulator program into short, actionable revision "
       "guidance for the next proposal round. Output only the guidance."});
  stage2.messages.push_back({"user", "Candidate model:\n" + model_repr + "\n\nDiagnosis:\n" +
                                         diagnosis + "\n\nWrite revision guidance."});
  try {
    ChatResponse r2 = client.complete(stage2);
    ledger.add(CallPurpose::FeedbackStage2, r2.prompt_tokens, r2.completion_tokens);
    result.text = r2.content;
  } catch (const std::exception& e) {
    result.text = diagnosis;
    result.warning = std::string("feedback stage 2 failed, using raw diagnosis: ") + e.what();
  }
  return result;
}

}  // namespace modelsmc
