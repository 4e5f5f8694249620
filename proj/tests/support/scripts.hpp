#pragma once

// Canned agent replies for scripted sessions.

#include <string>

#include "json.hpp"
#include "test_support.hpp"

namespace scripts {

inline std::string fenced(const std::string& abc) { return "```\n" + abc + "```"; }

inline std::string melody_reply() {
    return "Here is the melody for the bagpipe.\n\n" + fenced(testing::read_file(testing::fixture("table2.abc")));
}

inline std::string accompaniment_reply() { return fenced(testing::read_file(testing::fixture("table3.abc"))); }

inline const std::string leader_reply =
    "Melody Agent: write a lively 6/8 bagpipe melody in A major with two repeated sections.\n"
    "Accompaniment Agent: support it with sustained string harmony that follows A, D and E.";

inline std::string review_reply(bool approve) {
    std::string s =
        "**Melodic Structure:** The contour is singable and the second strain lifts well.\n"
        "**Harmony and Counterpoint:** The strings double the roots; a few passing tones would help.\n"
        "**Rhythmic Complexity:** Steady jig rhythm; the dotted figure in bar 3 adds interest.\n"
        "**Instrumentation and Timbre:** Bagpipe over strings blends, though the strings sit low.\n"
        "**Form and Structure:** Two repeated eight-bar strains, clearly closed.\n\n";
    s += approve ? "VERDICT: APPROVE" : "VERDICT: REVISE";
    return s;
}

/// Every agent answers the same way in every round.
inline nlohmann::json session(bool approve) {
    return {{"exhaustion", "repeat_last"},
            {"Leader", {leader_reply}},
            {"Melody", {melody_reply()}},
            {"Accompaniment", {accompaniment_reply()}},
            {"Review", {review_reply(approve)}},
            {"Revision", {accompaniment_reply()}},
            {"Composer", {accompaniment_reply()}}};
}

}  // namespace scripts
