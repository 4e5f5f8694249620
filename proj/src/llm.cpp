#include "ensemble/llm.hpp"

#include <cstdlib>
#include <thread>

#include "httplib.h"

namespace ensemble::llm {

std::string to_string(Role r) {
    switch (r) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "user";
}

std::string to_string(BackendError::Kind k) {
    switch (k) {
        case BackendError::Kind::timeout: return "timeout";
        case BackendError::Kind::http_status: return "http_status";
        case BackendError::Kind::exhausted_script: return "exhausted_script";
        case BackendError::Kind::malformed_response: return "malformed_response";
    }
    return "unknown";
}

BackendError::BackendError(Kind kind, const std::string& message, int http_status)
    : std::runtime_error(to_string(kind) + ": " + message), kind_(kind), status_(http_status) {}

void ModelConfig::apply_environment() {
    if (endpoint_url.empty())
        if (const char* base = std::getenv("COCOMPOSER_API_BASE")) endpoint_url = base;
    if (api_key.empty())
        if (const char* key = std::getenv("COCOMPOSER_API_KEY")) api_key = key;
}

nlohmann::json to_json(const ModelConfig& c) {
    // no api_key: configs end up in transcripts
    return {{"model_id", c.model_id},
            {"endpoint", c.endpoint_url},
            {"temperature", c.temperature},
            {"max_output_tokens", c.max_output_tokens},
            {"request_timeout_s", c.request_timeout.count()},
            {"max_retries", c.max_retries}};
}

namespace {

void check_messages(std::span<const ChatMessage> messages) {
    if (messages.empty()) throw std::invalid_argument("complete() needs at least the system prompt");
}

struct Endpoint {
    std::string origin;  // scheme://host[:port]
    std::string path;    // .../chat/completions
};

Endpoint split_endpoint(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw std::invalid_argument("endpoint must include a scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    Endpoint ep;
    ep.origin = path_start == std::string::npos ? url : url.substr(0, path_start);
    std::string path = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!path.empty() && path.back() == '/') path.pop_back();
    if (!path.ends_with("/chat/completions")) path += "/chat/completions";
    ep.path = path;
    return ep;
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

nlohmann::json HttpChatBackend::request_body(const ModelConfig& config, std::span<const ChatMessage> messages) {
    nlohmann::json msgs = nlohmann::json::array();
    for (const auto& m : messages) {
        nlohmann::json j{{"role", to_string(m.role)}, {"content", m.content}};
        if (!m.author_name.empty() && m.role != Role::system) j["name"] = m.author_name;
        msgs.push_back(std::move(j));
    }
    return {{"model", config.model_id},
            {"messages", std::move(msgs)},
            {"temperature", config.temperature},
            {"max_tokens", config.max_output_tokens},
            {"n", 1}};
}

std::string HttpChatBackend::parse_response(const std::string& body) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw BackendError(BackendError::Kind::malformed_response, std::string("invalid JSON: ") + e.what());
    }
    const auto* content = [&]() -> const nlohmann::json* {
        if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) return nullptr;
        const auto& choice = j["choices"][0];
        if (!choice.contains("message") || !choice["message"].contains("content")) return nullptr;
        return &choice["message"]["content"];
    }();
    if (content == nullptr || !content->is_string())
        throw BackendError(BackendError::Kind::malformed_response, "no choices[0].message.content in response");
    auto text = content->get<std::string>();
    if (text.empty()) throw BackendError(BackendError::Kind::malformed_response, "empty completion");
    return text;
}

ChatMessage HttpChatBackend::complete(const ModelConfig& config, std::span<const ChatMessage> messages) {
    check_messages(messages);
    if (config.endpoint_url.empty()) throw std::invalid_argument("no endpoint configured (COCOMPOSER_API_BASE)");
    const Endpoint ep = split_endpoint(config.endpoint_url);
    const std::string body = request_body(config, messages).dump();

    std::string last_error;
    BackendError::Kind last_kind = BackendError::Kind::timeout;
    int last_status = 0;
    for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(config.backoff_base * (1 << (attempt - 1)));
        httplib::Client cli(ep.origin);
        cli.set_connection_timeout(config.request_timeout);
        cli.set_read_timeout(config.request_timeout);
        cli.set_write_timeout(config.request_timeout);
        httplib::Headers headers;
        if (!config.api_key.empty()) headers.emplace("Authorization", "Bearer " + config.api_key);
        auto res = cli.Post(ep.path, headers, body, "application/json");
        if (!res) {
            last_kind = BackendError::Kind::timeout;
            last_error = "transport failure: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 200) {
            ChatMessage out;
            out.role = Role::assistant;
            out.author_name = messages.front().author_name;
            out.content = parse_response(res->body);
            return out;
        }
        last_kind = BackendError::Kind::http_status;
        last_status = res->status;
        last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
        if (!retryable_status(res->status)) break;
    }
    throw BackendError(last_kind, last_error, last_status);
}

void ScriptedBackend::add_reply(const std::string& agent, std::string reply) {
    std::lock_guard lock(mu_);
    script_[agent].push_back(std::move(reply));
}

void ScriptedBackend::set_replies(const std::string& agent, std::vector<std::string> replies) {
    std::lock_guard lock(mu_);
    script_[agent] = std::move(replies);
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_json(const nlohmann::json& script) {
    if (!script.is_object()) throw std::invalid_argument("script must be a JSON object");
    Exhaustion mode = Exhaustion::error;
    if (script.contains("exhaustion")) {
        const auto m = script["exhaustion"].get<std::string>();
        if (m == "repeat_last")
            mode = Exhaustion::repeat_last;
        else if (m != "error")
            throw std::invalid_argument("unknown exhaustion mode: " + m);
    }
    auto backend = std::make_unique<ScriptedBackend>(mode);
    for (const auto& [agent, replies] : script.items()) {
        if (agent == "exhaustion") continue;
        if (replies.is_string()) {
            backend->add_reply(agent, replies.get<std::string>());
        } else {
            for (const auto& r : replies) backend->add_reply(agent, r.get<std::string>());
        }
    }
    return backend;
}

ChatMessage ScriptedBackend::complete(const ModelConfig&, std::span<const ChatMessage> messages) {
    check_messages(messages);
    const std::string& agent = messages.front().author_name;
    std::lock_guard lock(mu_);
    const int turn = turn_[agent]++;
    auto it = script_.find(agent);
    const std::size_t available = it == script_.end() ? 0 : it->second.size();
    std::string reply;
    if (static_cast<std::size_t>(turn) < available) {
        reply = it->second[static_cast<std::size_t>(turn)];
    } else if (mode_ == Exhaustion::repeat_last && available > 0) {
        reply = it->second.back();
    } else {
        throw BackendError(BackendError::Kind::exhausted_script,
                           "no scripted reply for " + agent + " turn " + std::to_string(turn));
    }
    return ChatMessage{Role::assistant, agent, std::move(reply)};
}

int ScriptedBackend::calls(const std::string& agent) const {
    std::lock_guard lock(mu_);
    auto it = turn_.find(agent);
    return it == turn_.end() ? 0 : it->second;
}

}  // namespace ensemble::llm
