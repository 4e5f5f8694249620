#include "ensemble/orchestrator.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <ctime>
#include <iomanip>
#include <sstream>

namespace ensemble::orchestrator {

std::string speaker_name(Speaker s) {
    switch (s) {
        case Speaker::user: return "User";
        case Speaker::leader: return "Leader";
        case Speaker::melody: return "Melody";
        case Speaker::accompaniment: return "Accompaniment";
        case Speaker::revision: return "Revision";
        case Speaker::review: return "Review";
        case Speaker::composer: return "Composer";
    }
    return "Unknown";
}

Speaker speaker_for(AgentRole role) {
    switch (role) {
        case AgentRole::leader: return Speaker::leader;
        case AgentRole::melody: return Speaker::melody;
        case AgentRole::accompaniment: return Speaker::accompaniment;
        case AgentRole::revision: return Speaker::revision;
        case AgentRole::review: return Speaker::review;
    }
    return Speaker::user;
}

char speaker_code(Speaker s) {
    switch (s) {
        case Speaker::user: return 'U';
        case Speaker::leader: return 'L';
        case Speaker::melody: return 'M';
        case Speaker::accompaniment: return 'A';
        case Speaker::revision: return 'R';
        case Speaker::review: return 'V';
        case Speaker::composer: return 'C';
    }
    return '?';
}

namespace {

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()) % 1000;
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream out;
    out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << ms.count()
        << 'Z';
    return out.str();
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

// Leading markdown decoration of a heading line: #, *, _, >, list bullets and numbering.
std::string_view strip_markup(std::string_view line) {
    std::size_t i = 0;
    while (i < line.size()) {
        const char c = line[i];
        if (c == ' ' || c == '\t' || c == '#' || c == '*' || c == '_' || c == '>' || c == '-') {
            ++i;
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t j = i;
            while (j < line.size() && std::isdigit(static_cast<unsigned char>(line[j]))) ++j;
            if (j < line.size() && (line[j] == '.' || line[j] == ')'))
                i = j + 1;
            else
                break;
        } else {
            break;
        }
    }
    return line.substr(i);
}

bool is_verdict(std::string_view stripped, std::string& verdict) {
    const std::string l = lower(stripped);
    if (!l.starts_with("verdict")) return false;
    std::string rest = l.substr(7);
    rest.erase(std::remove_if(rest.begin(), rest.end(), [](char c) { return c == '*' || c == '_' || c == '`'; }),
               rest.end());
    rest = trim(rest);
    if (rest.empty() || rest.front() != ':') return false;
    verdict = trim(rest.substr(1));
    return true;
}

struct Heading {
    const char* name;
    std::string ReviewReport::*field;
};

const std::array<Heading, 5> headings = {{
    {"melodic structure", &ReviewReport::melodic_structure},
    {"harmony and counterpoint", &ReviewReport::harmony_counterpoint},
    {"rhythmic complexity", &ReviewReport::rhythmic_complexity},
    {"instrumentation and timbre", &ReviewReport::instrumentation_timbre},
    {"form and structure", &ReviewReport::form_structure},
}};

}  // namespace

const PoolEntry& DialoguePool::append(Speaker speaker, std::string content) {
    PoolEntry e;
    e.seq = static_cast<std::int64_t>(entries_.size()) + 1;
    e.speaker = speaker;
    e.message.role = speaker == Speaker::user ? llm::Role::user : llm::Role::assistant;
    e.message.author_name = speaker_name(speaker);
    e.message.content = std::move(content);
    e.timestamp = logical_clock_ ? "t+" + std::to_string(e.seq) : utc_now();
    entries_.push_back(std::move(e));
    return entries_.back();
}

std::string DialoguePool::role_sequence() const {
    std::string out;
    for (const auto& e : entries_) out += speaker_code(e.speaker);
    return out;
}

ReviewReport parse_review(std::string_view text) {
    ReviewReport report;
    std::string* current = nullptr;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        const std::string_view stripped = strip_markup(line);
        std::string verdict;
        if (is_verdict(stripped, verdict)) {
            report.approve = verdict.starts_with("approve");
            current = nullptr;
            continue;
        }
        const std::string l = lower(stripped);
        const Heading* hit = nullptr;
        for (const auto& h : headings)
            if (l.starts_with(h.name)) hit = &h;
        if (hit != nullptr) {
            current = &(report.*(hit->field));
            std::string_view rest = stripped.substr(std::string_view(hit->name).size());
            while (!rest.empty() && (rest.front() == '*' || rest.front() == '_' || rest.front() == ':' ||
                                     rest.front() == ' ' || rest.front() == '#'))
                rest.remove_prefix(1);
            if (!current->empty()) *current += '\n';
            *current += std::string(rest);
            continue;
        }
        if (current != nullptr) {
            if (!current->empty()) *current += '\n';
            *current += line;
        }
    }
    for (const auto& h : headings) report.*(h.field) = trim(report.*(h.field));
    return report;
}

nlohmann::json to_json(const SessionConfig& c) {
    return {{"model", llm::to_json(c.model)},
            {"max_iterations", c.max_iterations},
            {"run_llm_revision", c.run_llm_revision},
            {"seed_note", c.seed_note},
            {"prompt_version", c.prompt_version},
            {"review_prompt_version", c.review_prompt_version}};
}

SessionError::SessionError(const llm::BackendError& cause, DialoguePool partial)
    : std::runtime_error(std::string("session aborted: ") + cause.what()),
      kind_(cause.kind()),
      partial_(std::move(partial)) {}

std::optional<abc::Tune> last_parseable_tune(std::string_view message) {
    const auto blocks = abc::extract_abc_blocks(message);
    for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) {
        try {
            return abc::parse_abc(*it);
        } catch (const abc::ParseError&) {
        }
    }
    return std::nullopt;
}

std::string fenced(const abc::Tune& tune) { return "```abc\n" + abc::serialize_abc(tune) + "```"; }

namespace {

bool compatible(const abc::TuneHeader& a, const abc::TuneHeader& b) {
    return a.meter == b.meter && a.unit_note_length == b.unit_note_length;
}

abc::Voice* find_voice(abc::Tune& t, int id) {
    for (auto& v : t.voices)
        if (v.id == id) return &v;
    return nullptr;
}

void put_voice(abc::Tune& t, abc::Voice v) {
    v.declared = true;
    if (auto* existing = find_voice(t, v.id))
        *existing = std::move(v);
    else
        t.voices.push_back(std::move(v));
}

}  // namespace

Session::Session(llm::ChatBackend& backend, const prompts::PromptLibrary& library, SessionConfig config)
    : backend_(backend), library_(library), config_(std::move(config)), pool_(config_.logical_clock) {
    if (config_.max_iterations < 0) throw std::invalid_argument("max_iterations must be >= 0");
}

void Session::start(const CompositionBrief& brief) {
    if (brief.raw_request.empty()) throw std::invalid_argument("empty composition request");
    if (!pool_.empty()) throw std::logic_error("session already started");
    pool_.append(Speaker::user, brief.raw_request);
}

std::string Session::prompt_text(AgentRole role) const {
    const auto& version = role == AgentRole::review ? config_.review_prompt_version : config_.prompt_version;
    return library_.load_role_prompt(role, version).text;
}

std::vector<llm::ChatMessage> Session::context_for(Speaker speaker, const std::string& system_prompt) const {
    std::vector<llm::ChatMessage> msgs;
    msgs.reserve(pool_.size() + 1);
    msgs.push_back({llm::Role::system, speaker_name(speaker), system_prompt});
    for (const auto& e : pool_.entries()) {
        const auto role = e.speaker == speaker ? llm::Role::assistant : llm::Role::user;
        msgs.push_back({role, speaker_name(e.speaker), e.message.content});
    }
    return msgs;
}

llm::ChatMessage Session::call(Speaker speaker, const std::string& system_prompt) {
    if (pool_.empty()) throw std::logic_error("session not started");
    const auto msgs = context_for(speaker, system_prompt);
    auto reply = backend_.complete(config_.model, msgs);
    return pool_.append(speaker, std::move(reply.content)).message;
}

std::pair<llm::ChatMessage, std::optional<abc::Tune>> Session::composing_call(Speaker speaker,
                                                                             const std::string& system_prompt) {
    if (pool_.empty()) throw std::logic_error("session not started");
    auto msgs = context_for(speaker, system_prompt);
    auto reply = backend_.complete(config_.model, msgs);
    auto tune = last_parseable_tune(reply.content);
    if (!tune) {
        msgs.push_back({llm::Role::assistant, speaker_name(speaker), reply.content});
        msgs.push_back({llm::Role::user, speaker_name(Speaker::user), reprompt_note});
        reply = backend_.complete(config_.model, msgs);
        tune = last_parseable_tune(reply.content);
    }
    const auto& entry = pool_.append(speaker, std::move(reply.content));
    return {entry.message, std::move(tune)};
}

llm::ChatMessage Session::leader_turn() { return call(Speaker::leader, prompt_text(AgentRole::leader)); }

llm::ChatMessage Session::melody_turn() {
    auto [msg, tune] = composing_call(Speaker::melody, prompt_text(AgentRole::melody));
    if (!tune) throw MalformedOutput("Melody reply has no parseable ABC block");
    abc::Voice melody = tune->voices.front();
    if (auto* v1 = find_voice(*tune, 1)) melody = *v1;
    melody.id = 1;
    if (candidate_ && compatible(candidate_->header, tune->header)) {
        put_voice(*candidate_, std::move(melody));
        std::stable_sort(candidate_->voices.begin(), candidate_->voices.end(),
                         [](const abc::Voice& a, const abc::Voice& b) { return a.id == 1 && b.id != 1; });
    } else {
        candidate_ = std::move(*tune);
    }
    return msg;
}

llm::ChatMessage Session::accompaniment_turn() {
    auto [msg, tune] = composing_call(Speaker::accompaniment, prompt_text(AgentRole::accompaniment));
    if (!tune) throw MalformedOutput("Accompaniment reply has no parseable ABC block");
    if (!candidate_ || find_voice(*tune, 1) != nullptr) {
        candidate_ = std::move(*tune);
    } else if (compatible(candidate_->header, tune->header)) {
        if (!candidate_->voices.empty()) candidate_->voices.front().declared = true;
        for (auto& v : tune->voices) put_voice(*candidate_, std::move(v));
    }
    return msg;
}

std::pair<std::optional<abc::Tune>, llm::ChatMessage> Session::revision_turn() {
    if (config_.run_llm_revision && candidate_) {
        const auto msgs = context_for(Speaker::revision, prompt_text(AgentRole::revision));
        const auto reply = backend_.complete(config_.model, msgs);
        if (auto tune = last_parseable_tune(reply.content)) candidate_ = std::move(*tune);
    }
    if (!candidate_) {
        const auto& e = pool_.append(Speaker::revision, "No parseable ABC score in the dialogue pool.");
        return {std::nullopt, e.message};
    }
    auto repaired = abc::repair(*candidate_);
    const std::int64_t seq = static_cast<std::int64_t>(pool_.size()) + 1;
    for (auto& a : repaired.actions) repairs_.push_back({seq, std::move(a)});
    candidate_ = std::move(repaired.tune);
    const auto& e = pool_.append(Speaker::revision, fenced(*candidate_));
    return {candidate_, e.message};
}

ReviewReport Session::review_turn() {
    return parse_review(call(Speaker::review, prompt_text(AgentRole::review)).content);
}

namespace {

SessionResult finish(const Session& s, std::optional<abc::Tune> final_tune, int iterations,
                     std::optional<ReviewReport> review, std::optional<std::string> failure) {
    SessionResult r;
    r.transcript = s.pool();
    r.iterations_used = iterations;
    r.repair_actions = s.repair_actions();
    r.last_review = std::move(review);
    r.final_tune = std::move(final_tune);
    r.success = r.final_tune.has_value() && !abc::has_duration_mismatch(abc::validate(*r.final_tune));
    if (!r.success) r.failure_reason = failure ? *failure : r.final_tune ? "final tune has timing errors" : no_abc_reason;
    return r;
}

}  // namespace

SessionResult run_session(llm::ChatBackend& backend, const prompts::PromptLibrary& library,
                          const CompositionBrief& brief, const SessionConfig& config) {
    Session s(backend, library, config);
    s.start(brief);
    std::optional<abc::Tune> final_tune;
    std::optional<ReviewReport> review;
    int iterations = 0;
    auto round = [&] {
        s.leader_turn();
        try {
            s.melody_turn();
        } catch (const MalformedOutput&) {
        }
        try {
            s.accompaniment_turn();
        } catch (const MalformedOutput&) {
        }
        if (auto tune = s.revision_turn().first) final_tune = std::move(tune);
        review = s.review_turn();
        return review->approve;
    };
    try {
        bool approved = round();
        while (!approved && iterations < config.max_iterations) {
            ++iterations;
            approved = round();
        }
    } catch (const llm::BackendError& e) {
        throw SessionError(e, s.pool());
    } catch (const abc::RepairError& e) {
        return finish(s, std::nullopt, iterations, review, std::string("repair failed: ") + e.what());
    }
    return finish(s, std::move(final_tune), iterations, std::move(review), std::nullopt);
}

SessionResult single_agent_baseline(llm::ChatBackend& backend, const prompts::PromptLibrary& library,
                                    const CompositionBrief& brief, const SessionConfig& config) {
    SessionConfig cfg = config;
    cfg.run_llm_revision = false;
    Session s(backend, library, cfg);
    s.start(brief);
    const std::string merged = s.prompt_text(AgentRole::leader) + "\n\n" + s.prompt_text(AgentRole::melody) +
                               "\n\n" + s.prompt_text(AgentRole::accompaniment);
    std::optional<abc::Tune> final_tune;
    try {
        auto [msg, tune] = s.composing_call(Speaker::composer, merged);
        s.candidate_ = std::move(tune);
        final_tune = s.revision_turn().first;
    } catch (const llm::BackendError& e) {
        throw SessionError(e, s.pool());
    } catch (const abc::RepairError& e) {
        return finish(s, std::nullopt, 0, std::nullopt, std::string("repair failed: ") + e.what());
    }
    return finish(s, std::move(final_tune), 0, std::nullopt, std::nullopt);
}

std::string session_id(const CompositionBrief& brief, const SessionConfig& config) {
    std::string key = brief.raw_request + '\n';
    if (brief.prompt_index) key += std::to_string(*brief.prompt_index);
    key += '\n' + to_json(config).dump();
    const std::string label = config.seed_note.empty() ? "session" : config.seed_note;
    return label + "-" + prompts::sha256_hex(key).substr(0, 12);
}

nlohmann::json to_json(const DialoguePool& pool) {
    auto out = nlohmann::json::array();
    for (const auto& e : pool.entries())
        out.push_back({{"seq", e.seq}, {"role", speaker_name(e.speaker)}, {"content", e.message.content},
                       {"ts", e.timestamp}});
    return out;
}

nlohmann::json to_json(const ReviewReport& r) {
    return {{"melodic_structure", r.melodic_structure},
            {"harmony_counterpoint", r.harmony_counterpoint},
            {"rhythmic_complexity", r.rhythmic_complexity},
            {"instrumentation_timbre", r.instrumentation_timbre},
            {"form_structure", r.form_structure},
            {"approve", r.approve}};
}

nlohmann::json transcript_json(const CompositionBrief& brief, const SessionConfig& config,
                               const SessionResult& result) {
    auto repairs = nlohmann::json::array();
    for (const auto& r : result.repair_actions) {
        auto j = abc::to_json(r.action);
        j["revision_seq"] = r.revision_seq;
        repairs.push_back(std::move(j));
    }
    nlohmann::json res{{"success", result.success},
                       {"iterations_used", result.iterations_used},
                       {"failure_reason", nullptr},
                       {"final_abc", nullptr},
                       {"review", nullptr}};
    if (result.failure_reason) res["failure_reason"] = *result.failure_reason;
    if (result.final_tune) res["final_abc"] = abc::serialize_abc(*result.final_tune);
    if (result.last_review) res["review"] = to_json(*result.last_review);
    nlohmann::json cfg = to_json(config);
    cfg["prompt_index"] = brief.prompt_index ? nlohmann::json(*brief.prompt_index) : nlohmann::json(nullptr);
    return {{"session_id", session_id(brief, config)},
            {"config", std::move(cfg)},
            {"entries", to_json(result.transcript)},
            {"repair_actions", std::move(repairs)},
            {"result", std::move(res)}};
}

}  // namespace ensemble::orchestrator
