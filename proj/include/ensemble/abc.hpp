#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ensemble/rational.hpp"

namespace ensemble::abc {

struct TempoSpec {
    Rational beat_unit{1, 4};  // fraction of a whole note
    int beats_per_minute = 120;

    friend bool operator==(const TempoSpec&, const TempoSpec&) = default;
};

enum class Mode { major, minor };

struct KeySpec {
    char tonic = 'C';  // 'A'..'G'
    int accidental = 0;  // -1 flat, +1 sharp
    Mode mode = Mode::major;

    /// Position on the circle of fifths: positive = sharps, negative = flats.
    int fifths() const;
    /// Semitone adjustment the signature applies to a natural letter.
    int signature_offset(char letter) const;
    std::string str() const;

    friend bool operator==(const KeySpec&, const KeySpec&) = default;
};

/// Time signature as written (6/8 stays 6/8); duration() is the bar length.
struct Meter {
    int numerator = 4;
    int denominator = 4;

    Rational duration() const { return Rational(numerator, denominator); }
    /// 6/8, 9/8, 12/8 and friends.
    bool is_compound() const { return numerator > 3 && numerator % 3 == 0; }
    std::string str() const { return std::to_string(numerator) + "/" + std::to_string(denominator); }

    friend bool operator==(const Meter&, const Meter&) = default;
};

struct TuneHeader {
    int reference_number = 1;
    std::string title;
    /// Fields other than X/T/M/L/Q/K, kept in source order (letter, value).
    std::vector<std::pair<char, std::string>> extra_fields;
    Meter meter;
    Rational unit_note_length{1, 8};
    std::optional<TempoSpec> tempo;
    KeySpec key;

    friend bool operator==(const TuneHeader&, const TuneHeader&) = default;
};

enum class Accidental { none, natural, sharp, flat, double_sharp, double_flat };

struct Pitch {
    char letter = 'C';  // always uppercase
    Accidental accidental = Accidental::none;
    /// 0 = the uppercase octave (C = middle C), 1 = lowercase, each ' adds 1, each , subtracts 1.
    int octave = 0;

    friend bool operator==(const Pitch&, const Pitch&) = default;
};

enum class AnnotationKind {
    chord_symbol,  // "Am7"
    text,          // "^above" and other positioned text
    decoration,    // !trill!, +fermata+, ~, . and friends
    slur_open,     // (
    slur_close,    // ) with no preceding event in the measure
};

struct Annotation {
    AnnotationKind kind;
    std::string text;  // quoted payload without quotes; decorations keep their delimiters

    friend bool operator==(const Annotation&, const Annotation&) = default;
};

enum class EventKind { note, rest, chord, tuplet, grace };

struct Event {
    EventKind kind = EventKind::note;
    std::vector<Pitch> pitches;  // 1 for note, >= 1 for chord, 0 otherwise
    Rational length{1};          // multiplier of the unit note length
    bool tie = false;
    bool space_before = false;   // beam break before this event
    std::vector<Annotation> annotations;  // emitted before the event
    int slur_closes = 0;                  // ')' following the event

    // tuplet: (p:q:r, children are the r grouped events
    int tuplet_p = 0;
    int tuplet_q = 0;
    int tuplet_r = 0;
    // grace: {/...} when acciaccatura
    bool acciaccatura = false;
    std::vector<Event> children;

    friend bool operator==(const Event&, const Event&) = default;
};

enum class BarKind { none, single, double_bar, final_bar };

struct Measure {
    std::vector<Event> events;
    std::vector<Annotation> trailing;  // annotations after the last event
    bool open_repeat = false;
    bool close_repeat = false;
    BarKind end_bar = BarKind::single;
    bool line_break = false;  // layout only; ignored by ==

    friend bool operator==(const Measure& a, const Measure& b) {
        return a.events == b.events && a.trailing == b.trailing && a.open_repeat == b.open_repeat &&
               a.close_repeat == b.close_repeat && a.end_bar == b.end_bar;
    }
};

struct ChordSymbolRef {
    std::size_t position;  // index of the top-level event it precedes (== size for trailing)
    std::string text;
};

/// Chord symbols of a measure positioned by the top-level event they precede.
std::vector<ChordSymbolRef> chord_symbols(const Measure& m);

struct Voice {
    int id = 1;
    bool declared = true;  // false for music that preceded any V: line
    std::string name;
    std::vector<std::string> extra_attributes;  // e.g. clef=bass, kept verbatim
    std::optional<int> midi_program;
    std::vector<Measure> measures;

    friend bool operator==(const Voice&, const Voice&) = default;
};

struct Tune {
    TuneHeader header;
    std::vector<Voice> voices;

    friend bool operator==(const Tune&, const Tune&) = default;
};

class ParseError : public std::runtime_error {
public:
    ParseError(int line, int column, const std::string& message);
    int line() const { return line_; }
    int column() const { return column_; }
    const std::string& message() const { return message_; }

private:
    int line_;
    int column_;
    std::string message_;
};

/// Parse one tune. Accepts the inline "V:1 name=... %%MIDI program N" form and
/// the two-line form. Throws ParseError.
Tune parse_abc(std::string_view source);

std::string serialize_abc(const Tune& tune);
/// Body text of a single measure including its bar lines, e.g. `|: "A"A2e c2A |`.
std::string serialize_measure(const Measure& m, const TuneHeader& header);
std::string serialize_event(const Event& e, const TuneHeader& header);

/// Default q for a tuplet (p under the given meter.
int default_tuplet_q(int p, const Meter& meter);

Rational event_duration(const Event& e, const Rational& unit);
Rational measure_duration(const Measure& m, const Rational& unit);

/// Contents of every ``` fenced block in order; the whole message when it is
/// unfenced but starts with "X:".
std::vector<std::string> extract_abc_blocks(std::string_view message);

}  // namespace ensemble::abc
