#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ensemble/abc.hpp"
#include "json.hpp"

namespace ensemble::abc {

enum class IssueKind { duration_mismatch, format_error };

struct ValidationIssue {
    int voice_id = 0;
    std::optional<std::size_t> measure_index;  // absent for voice-level format errors
    IssueKind kind = IssueKind::format_error;
    std::string detail;
    std::optional<Rational> expected;  // duration_mismatch only
    std::optional<Rational> actual;

    friend bool operator==(const ValidationIssue&, const ValidationIssue&) = default;
};

/// One duration_mismatch per non-conforming measure plus format errors
/// (duplicate or missing voice ids, out-of-range programs, malformed chord
/// symbols). A strictly short first measure of a voice is a pickup and is not
/// reported.
std::vector<ValidationIssue> validate(const Tune& tune);

bool has_duration_mismatch(const std::vector<ValidationIssue>& issues);

/// Accepts chord names like "A", "F#m7", "Bbmaj7", "Dsus4", "G/B", "N.C.".
bool is_well_formed_chord_symbol(std::string_view text);

enum class RepairKind {
    pad_rests,
    shorten_event,
    delete_events,
    split_tie,
    receive_tied,
    declare_voice,
    renumber_voice,
    clamp_program,
    drop_chord_symbol,
};

struct RepairAction {
    int voice_id = 0;
    std::optional<std::size_t> measure_index;
    RepairKind kind = RepairKind::pad_rests;
    std::string detail;
    std::string before;  // canonical measure text (empty for voice-level edits)
    std::string after;

    friend bool operator==(const RepairAction&, const RepairAction&) = default;
};

struct RepairResult {
    Tune tune;
    std::vector<RepairAction> actions;
};

class RepairError : public std::runtime_error {
public:
    RepairError(int voice_id, std::size_t measure_index, const std::string& message);
    int voice_id() const { return voice_id_; }
    std::size_t measure_index() const { return measure_index_; }

private:
    int voice_id_;
    std::size_t measure_index_;
};

/// Deterministic repair. Measures are fixed in order with these rules:
///  1. short measure: append rests, largest first;
///  2. long measure: drop events starting at or past the bar, then shorten the
///     event that crosses it (a crossing tuplet is dropped and the gap padded);
///  3. when the crossing event is last and its tail fits into the room left in
///     the next measure, split it at the bar with a tie instead of shortening it.
/// Measures that already conform are left untouched.
RepairResult repair(const Tune& tune);

/// Largest-first rest lengths (as multiples of `unit`) filling `deficit`.
std::vector<Rational> rest_decomposition(const Rational& deficit, const Rational& unit);

std::string to_string(IssueKind k);
std::string to_string(RepairKind k);

nlohmann::json to_json(const ValidationIssue& issue);
nlohmann::json to_json(const RepairAction& action);
nlohmann::json to_json(const std::vector<ValidationIssue>& issues);
nlohmann::json to_json(const std::vector<RepairAction>& actions);

}  // namespace ensemble::abc
