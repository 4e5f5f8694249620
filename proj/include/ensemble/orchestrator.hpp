#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ensemble/abc.hpp"
#include "ensemble/lint.hpp"
#include "ensemble/llm.hpp"
#include "ensemble/prompts.hpp"
#include "ensemble/roles.hpp"
#include "json.hpp"

namespace ensemble::orchestrator {

/// Pool speakers: the five agents plus the user and the single-agent composer.
enum class Speaker { user, leader, melody, accompaniment, revision, review, composer };

std::string speaker_name(Speaker s);
Speaker speaker_for(AgentRole role);
/// One letter per speaker: U L M A R V, C for the composer.
char speaker_code(Speaker s);

struct PoolEntry {
    std::int64_t seq = 0;
    Speaker speaker = Speaker::user;
    llm::ChatMessage message;
    std::string timestamp;
};

/// Append-only shared transcript. Sequence numbers start at 1.
class DialoguePool {
public:
    explicit DialoguePool(bool logical_clock = false) : logical_clock_(logical_clock) {}

    const PoolEntry& append(Speaker speaker, std::string content);
    const std::vector<PoolEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    /// Speaker codes in order, e.g. "ULMARV".
    std::string role_sequence() const;

private:
    bool logical_clock_;
    std::vector<PoolEntry> entries_;
};

struct CompositionBrief {
    std::string raw_request;
    std::optional<int> prompt_index;
};

struct ReviewReport {
    std::string melodic_structure;
    std::string harmony_counterpoint;
    std::string rhythmic_complexity;
    std::string instrumentation_timbre;
    std::string form_structure;
    bool approve = false;
};

/// Splits a review into the five headed sections. Headings are matched
/// case-insensitively at line start, optionally wrapped in markdown; a
/// missing heading leaves its field empty. approve is set only by a line
/// reading "VERDICT: APPROVE".
ReviewReport parse_review(std::string_view text);

struct SessionConfig {
    llm::ModelConfig model;
    int max_iterations = 2;
    bool run_llm_revision = false;
    std::string seed_note;  // run label
    std::string prompt_version{prompts::base_version};
    std::string review_prompt_version{prompts::verdict_version};
    /// Timestamps become "t+<seq>" so scripted runs are byte-reproducible.
    bool logical_clock = false;
};

nlohmann::json to_json(const SessionConfig& c);

struct RecordedRepair {
    std::int64_t revision_seq = 0;  // pool entry the actions belong to
    abc::RepairAction action;
};

struct SessionResult {
    std::optional<abc::Tune> final_tune;
    DialoguePool transcript;
    int iterations_used = 0;
    bool success = false;
    std::optional<std::string> failure_reason;
    std::vector<RecordedRepair> repair_actions;
    std::optional<ReviewReport> last_review;
};

inline const std::string no_abc_reason = "no parseable ABC";

/// An agent reply with no parseable ABC block, after the re-prompt.
class MalformedOutput : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A backend failure during a session; carries the pool up to the failed turn.
class SessionError : public std::runtime_error {
public:
    SessionError(const llm::BackendError& cause, DialoguePool partial);
    llm::BackendError::Kind kind() const { return kind_; }
    const DialoguePool& partial_transcript() const { return partial_; }

private:
    llm::BackendError::Kind kind_;
    DialoguePool partial_;
};

inline const std::string reprompt_note =
    "Note: Only output the sheet music in the specified ABC Notations format, with no other text.";

/// Last block of the message that parses as a tune.
std::optional<abc::Tune> last_parseable_tune(std::string_view message);

/// Fenced canonical text of a tune as posted to the pool.
std::string fenced(const abc::Tune& tune);

/// Turn-level driver for one session. Strictly sequential; not thread-safe.
class Session {
public:
    Session(llm::ChatBackend& backend, const prompts::PromptLibrary& library, SessionConfig config);

    /// Posts the user request as the first pool entry.
    void start(const CompositionBrief& brief);

    llm::ChatMessage leader_turn();
    /// The melody becomes the candidate or replaces its V:1. Throws
    /// MalformedOutput (after appending the reply) when no block parses.
    llm::ChatMessage melody_turn();
    /// Output carrying V:1 replaces the candidate; other voices merge by id.
    llm::ChatMessage accompaniment_turn();
    /// Optional LLM pass, then deterministic repair of the candidate, posted
    /// to the pool as canonical ABC. Without a candidate the posted message
    /// says so and no tune is returned. Throws abc::RepairError.
    std::pair<std::optional<abc::Tune>, llm::ChatMessage> revision_turn();
    ReviewReport review_turn();

    const DialoguePool& pool() const { return pool_; }
    const std::optional<abc::Tune>& candidate() const { return candidate_; }
    const std::vector<RecordedRepair>& repair_actions() const { return repairs_; }
    const SessionConfig& config() const { return config_; }

private:
    friend SessionResult single_agent_baseline(llm::ChatBackend&, const prompts::PromptLibrary&,
                                               const CompositionBrief&, const SessionConfig&);

    std::vector<llm::ChatMessage> context_for(Speaker speaker, const std::string& system_prompt) const;
    llm::ChatMessage call(Speaker speaker, const std::string& system_prompt);
    /// Calls the agent, re-prompting once when the reply has no parseable
    /// tune. Appends the final reply either way.
    std::pair<llm::ChatMessage, std::optional<abc::Tune>> composing_call(Speaker speaker,
                                                                        const std::string& system_prompt);
    std::string prompt_text(AgentRole role) const;

    llm::ChatBackend& backend_;
    const prompts::PromptLibrary& library_;
    SessionConfig config_;
    DialoguePool pool_;
    std::optional<abc::Tune> candidate_;
    std::vector<RecordedRepair> repairs_;
};

/// U L M A R V, then up to max_iterations rounds of L M A R V, stopping at the
/// first approving review. Throws SessionError on backend failure.
SessionResult run_session(llm::ChatBackend& backend, const prompts::PromptLibrary& library,
                          const CompositionBrief& brief, const SessionConfig& config);

/// One call with the Leader, Melody and Accompaniment prompts concatenated,
/// then deterministic repair. Transcript is U C R.
SessionResult single_agent_baseline(llm::ChatBackend& backend, const prompts::PromptLibrary& library,
                                    const CompositionBrief& brief, const SessionConfig& config);

std::string session_id(const CompositionBrief& brief, const SessionConfig& config);

/// {session_id, config, entries:[{seq, role, content, ts}], repair_actions, result}
nlohmann::json transcript_json(const CompositionBrief& brief, const SessionConfig& config,
                               const SessionResult& result);
nlohmann::json to_json(const DialoguePool& pool);
nlohmann::json to_json(const ReviewReport& r);

}  // namespace ensemble::orchestrator
