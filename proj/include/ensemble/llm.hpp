#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace ensemble::llm {

enum class Role { system, user, assistant };

std::string to_string(Role r);

struct ChatMessage {
    Role role = Role::user;
    std::string author_name;  // agent name, e.g. "Melody"
    std::string content;

    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ModelConfig {
    std::string model_id = "gpt-4o";
    std::string endpoint_url;  // base URL of an OpenAI-compatible API
    std::string api_key;
    double temperature = 0.7;
    int max_output_tokens = 4096;
    std::chrono::seconds request_timeout{120};
    int max_retries = 3;
    std::chrono::milliseconds backoff_base{1000};

    /// Fills endpoint and key from COCOMPOSER_API_BASE / COCOMPOSER_API_KEY
    /// where the fields are still empty.
    void apply_environment();
};

nlohmann::json to_json(const ModelConfig& c);

class BackendError : public std::runtime_error {
public:
    enum class Kind { timeout, http_status, exhausted_script, malformed_response };

    BackendError(Kind kind, const std::string& message, int http_status = 0);
    Kind kind() const { return kind_; }
    int http_status() const { return status_; }

private:
    Kind kind_;
    int status_;
};

std::string to_string(BackendError::Kind k);

/// Chat-completion transport. `messages` starts with the agent's system prompt;
/// its author_name identifies the speaking agent.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatMessage complete(const ModelConfig& config, std::span<const ChatMessage> messages) = 0;
};

/// OpenAI-style POST {endpoint}/chat/completions with bearer auth. Transport
/// failures, 429 and 5xx are retried with exponential backoff.
class HttpChatBackend : public ChatBackend {
public:
    ChatMessage complete(const ModelConfig& config, std::span<const ChatMessage> messages) override;

    static nlohmann::json request_body(const ModelConfig& config, std::span<const ChatMessage> messages);
    static std::string parse_response(const std::string& body);
};

/// Replays canned replies keyed by (agent, turn index). Each agent has its own
/// turn counter.
class ScriptedBackend : public ChatBackend {
public:
    enum class Exhaustion { error, repeat_last };

    explicit ScriptedBackend(Exhaustion mode = Exhaustion::error) : mode_(mode) {}

    void add_reply(const std::string& agent, std::string reply);
    void set_replies(const std::string& agent, std::vector<std::string> replies);

    /// {"Leader": ["..."], "Melody": [...], ..., "exhaustion": "repeat_last"}
    static std::unique_ptr<ScriptedBackend> from_json(const nlohmann::json& script);

    ChatMessage complete(const ModelConfig& config, std::span<const ChatMessage> messages) override;

    int calls(const std::string& agent) const;

private:
    mutable std::mutex mu_;
    Exhaustion mode_;
    std::map<std::string, std::vector<std::string>> script_;
    std::map<std::string, int> turn_;
};

}  // namespace ensemble::llm
