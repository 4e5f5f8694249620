#include <chrono>

#include "doctest.h"
#include "ensemble/abc.hpp"
#include "support/abc_oracle.hpp"
#include "support/generators.hpp"
#include "test_support.hpp"

using namespace ensemble;
using namespace ensemble::abc;

namespace {

Rational whole(const gen::Q& q) { return Rational(q.numerator(), q.denominator()); }

const char* minimal = "X:1\nT:t\nM:4/4\nL:1/4\nK:C\nCDEF|\n";

}  // namespace

TEST_CASE("melody fixture parses into one voice of 6/8 bars") {
    const auto text = testing::read_file(testing::fixture("table2.abc"));
    const Tune t = parse_abc(text);
    CHECK(t.header.title == "Journey Through the Highlands");
    CHECK(t.header.meter == Meter{6, 8});
    CHECK(t.header.unit_note_length == Rational(1, 8));
    REQUIRE(t.header.tempo.has_value());
    CHECK(t.header.tempo->beat_unit == Rational(3, 8));
    CHECK(t.header.tempo->beats_per_minute == 100);
    CHECK(t.header.key == KeySpec{'A', 0, Mode::major});
    REQUIRE(t.voices.size() == 1);
    CHECK(t.voices[0].name == "Bagpipe Lead");
    CHECK(t.voices[0].midi_program == 109);
    CHECK(t.voices[0].measures.size() == 8);
}

TEST_CASE("accompaniment fixture: two voices, programs 109 and 48, every bar 6/8") {
    const auto text = testing::read_file(testing::fixture("table3.abc"));
    const Tune t = parse_abc(text);
    REQUIRE(t.voices.size() == 2);
    CHECK(t.voices[0].id == 1);
    CHECK(t.voices[1].id == 2);
    CHECK(t.voices[0].midi_program == 109);
    CHECK(t.voices[1].midi_program == 48);
    CHECK(t.voices[1].name == "String Harmony");

    const auto bars = oracle::read_voices(text);
    REQUIRE(bars.at(1).size() == 8);
    REQUIRE(bars.at(2).size() == 8);
    std::size_t checked = 0;
    for (std::size_t v = 0; v < 2; ++v) {
        const auto& expected = bars.at(static_cast<int>(v) + 1);
        for (std::size_t i = 0; i < 8; ++i) {
            const auto oracle_whole = expected[i].length * gen::Q(1, 8);
            CHECK(oracle_whole == gen::Q(6, 8));
            CHECK(measure_duration(t.voices[v].measures[i], t.header.unit_note_length) == whole(oracle_whole));
            ++checked;
        }
    }
    CHECK(checked == 16);
}

TEST_CASE("fixture parsing stays well under a millisecond") {
    const auto text = testing::read_file(testing::fixture("table3.abc"));
    const auto start = std::chrono::steady_clock::now();
    constexpr int reps = 200;
    for (int i = 0; i < reps; ++i) (void)parse_abc(text);
    const auto per = (std::chrono::steady_clock::now() - start) / reps;
    CHECK(per < std::chrono::milliseconds(1));
}

TEST_CASE("repeat and bar structure is kept") {
    const Tune t = parse_abc(testing::read_file(testing::fixture("table3.abc")));
    const auto& m = t.voices[0].measures;
    CHECK(m[0].open_repeat);
    CHECK_FALSE(m[1].open_repeat);
    CHECK(m[3].close_repeat);
    CHECK(m[4].open_repeat);
    CHECK(m[7].close_repeat);
    const auto cs = chord_symbols(m[0]);
    REQUIRE(cs.size() == 1);
    CHECK(cs[0].text == "A");
    CHECK(cs[0].position == 0);
}

TEST_CASE("header defaults and variants") {
    SUBCASE("unit length defaults to 1/8 from 3/4 upward and 1/16 below") {
        CHECK(parse_abc("X:1\nM:3/4\nK:C\nCDE|\n").header.unit_note_length == Rational(1, 8));
        CHECK(parse_abc("X:1\nM:2/4\nK:C\nCDEF|\n").header.unit_note_length == Rational(1, 16));
    }
    SUBCASE("common and cut time") {
        CHECK(parse_abc("X:1\nM:C\nL:1/4\nK:C\nCDEF|\n").header.meter == Meter{4, 4});
        CHECK(parse_abc("X:1\nM:C|\nL:1/4\nK:C\nCD|\n").header.meter == Meter{2, 2});
    }
    SUBCASE("tempo forms") {
        const auto bare = parse_abc("X:1\nM:4/4\nL:1/4\nQ:90\nK:C\nCDEF|\n").header.tempo;
        REQUIRE(bare);
        CHECK(bare->beats_per_minute == 90);
        CHECK(bare->beat_unit == Rational(1, 4));
        const auto half = parse_abc("X:1\nM:4/4\nL:1/8\nQ:1/2=60\nK:C\nC8|\n").header.tempo;
        REQUIRE(half);
        CHECK(half->beat_unit == Rational(1, 2));
    }
    SUBCASE("minor and accidental keys") {
        CHECK(parse_abc("X:1\nM:4/4\nL:1/4\nK:F#m\nCDEF|\n").header.key.fifths() == 3);
        CHECK(parse_abc("X:1\nM:4/4\nL:1/4\nK:Bb\nCDEF|\n").header.key.fifths() == -2);
        CHECK(parse_abc("X:1\nM:4/4\nL:1/4\nK:Am\nCDEF|\n").header.key.fifths() == 0);
    }
    SUBCASE("missing meter is an error") { CHECK_THROWS_AS(parse_abc("X:1\nK:C\nCDEF|\n"), ParseError); }
}

TEST_CASE("note syntax") {
    const Tune t = parse_abc("X:1\nM:4/4\nL:1/8\nK:C\n^c'2 _B,/ =e3/2 z4 [CEG]- | [CEG]8 |\n");
    const auto& ev = t.voices[0].measures[0].events;
    REQUIRE(ev.size() == 5);
    CHECK(ev[0].pitches[0] == Pitch{'C', Accidental::sharp, 2});
    CHECK(ev[0].length == Rational(2));
    CHECK(ev[1].pitches[0] == Pitch{'B', Accidental::flat, -1});
    CHECK(ev[1].length == Rational(1, 2));
    CHECK(ev[2].pitches[0].accidental == Accidental::natural);
    CHECK(ev[2].length == Rational(3, 2));
    CHECK(ev[3].kind == EventKind::rest);
    CHECK(ev[4].kind == EventKind::chord);
    CHECK(ev[4].pitches.size() == 3);
    CHECK(ev[4].tie);
}

TEST_CASE("tuplets take their default q from the meter") {
    CHECK(default_tuplet_q(3, Meter{4, 4}) == 2);
    CHECK(default_tuplet_q(2, Meter{6, 8}) == 3);
    CHECK(default_tuplet_q(5, Meter{4, 4}) == 2);
    CHECK(default_tuplet_q(5, Meter{6, 8}) == 3);
    const Tune t = parse_abc("X:1\nM:2/4\nL:1/8\nK:C\n(3cde f2 | (3:2:2c2d (3cde |\n");
    const auto& m = t.voices[0].measures;
    // (3cde = three eighths in the time of two
    CHECK(event_duration(m[0].events[0], Rational(1, 8)) == Rational(1, 4));
    CHECK(measure_duration(m[0], Rational(1, 8)) == Rational(1, 2));
    CHECK(m[1].events[0].tuplet_r == 2);
    CHECK(event_duration(m[1].events[0], Rational(1, 8)) == Rational(1, 4));
}

TEST_CASE("grace notes and decorations take no time") {
    const Tune t = parse_abc("X:1\nM:4/4\nL:1/4\nK:C\n{g}A !trill!B ~c .d|\n");
    CHECK(measure_duration(t.voices[0].measures[0], Rational(1, 4)) == Rational(1));
    CHECK(t.voices[0].measures[0].events[0].kind == EventKind::grace);
}

TEST_CASE("voice handling") {
    SUBCASE("music before any V: is an undeclared voice 1") {
        const Tune t = parse_abc(minimal);
        REQUIRE(t.voices.size() == 1);
        CHECK_FALSE(t.voices[0].declared);
    }
    SUBCASE("two-line %%MIDI form") {
        const Tune t = parse_abc("X:1\nM:4/4\nL:1/4\nK:C\nV:1\n%%MIDI program 40\nCDEF|\nV:2\nC4|\n");
        CHECK(t.voices[0].midi_program == 40);
        CHECK_FALSE(t.voices[1].midi_program.has_value());
    }
    SUBCASE("inline voice switches") {
        const Tune t = parse_abc("X:1\nM:4/4\nL:1/4\nK:C\n[V:1] CDEF|\n[V:2] C4|\n[V:1] GABc|\n");
        REQUIRE(t.voices.size() == 2);
        CHECK(t.voices[0].measures.size() == 2);
    }
    SUBCASE("voice fields in the header") {
        const Tune t = parse_abc("X:1\nM:4/4\nL:1/4\nV:1 clef=treble\nV:2 clef=bass\nK:C\nV:1\nCDEF|\nV:2\nC,4|\n");
        REQUIRE(t.voices.size() == 2);
        CHECK(t.voices[1].extra_attributes == std::vector<std::string>{"clef=bass"});
    }
}

TEST_CASE("unsupported constructs are rejected with a position") {
    auto position_of = [](const char* src) -> std::pair<int, int> {
        try {
            (void)parse_abc(src);
        } catch (const ParseError& e) {
            return {e.line(), e.column()};
        }
        return {0, 0};
    };
    CHECK(position_of("X:1\nM:4/4\nL:1/4\nK:C\nA>B C D|\n").first == 5);
    CHECK_THROWS_AS(parse_abc("X:1\nM:4/4\nL:1/4\nK:C\nCDEF|1 GABc:|2 c4|]\n"), ParseError);
    CHECK_THROWS_AS(parse_abc("X:1\nM:4/4\nL:1/4\nK:C\nCDEF|\nM:3/4\nCDE|\n"), ParseError);
    CHECK_THROWS_AS(parse_abc("X:1\nM:4/4\nL:1/4\nK:C\nCD[EF|\n"), ParseError);
    CHECK_THROWS_AS(parse_abc("X:1\nM:4/4\nL:1/4\nK:C\nC\"Am D|\n"), ParseError);
    CHECK_THROWS_AS(parse_abc("X:1\nM:4/4\nL:1/4\nK:C\n"), ParseError);
    CHECK_THROWS_AS(parse_abc("X:1\nM:4/4\nL:1/4\nK:C\nC0 D|\n"), ParseError);
}

TEST_CASE("fenced block extraction") {
    CHECK(extract_abc_blocks("no music here").empty());
    const auto one = extract_abc_blocks("Here is the tune:\n```abc\nX:1\nK:C\nC|\n```\nEnjoy!");
    REQUIRE(one.size() == 1);
    CHECK(one[0] == "X:1\nK:C\nC|");
    const auto two = extract_abc_blocks("```\nX:1\n```\ntext\n```\nX:2\n```");
    REQUIRE(two.size() == 2);
    CHECK(two[1] == "X:2");
    CHECK(extract_abc_blocks("X:1\nM:4/4\nK:C\nC4|").size() == 1);
    CHECK(extract_abc_blocks("```\nX:1\nK:C\nC|").size() == 1);
}

TEST_CASE("canonical form: fixtures survive a round trip byte for byte") {
    for (const char* name : {"table2.abc", "table3.abc"}) {
        const auto text = testing::read_file(testing::fixture(name));
        CHECK(serialize_abc(parse_abc(text)) == text);
    }
}

TEST_CASE("canonical form is a fixed point for generated tunes") {
    for (int seed = 0; seed < 200; ++seed) {
        const gen::MeterSpec meter = seed % 3 == 0 ? gen::MeterSpec{6, 8} : seed % 3 == 1 ? gen::MeterSpec{4, 4}
                                                                                          : gen::MeterSpec{3, 4};
        gen::MeasureGen g(static_cast<std::uint64_t>(seed), meter, gen::Q(1, 8));
        std::vector<gen::Measure> ms;
        for (int i = 0; i < 6; ++i) ms.push_back(g.coin() ? g.exact() : g.arbitrary());
        const std::string src = gen::tune_text(meter, gen::Q(1, 8), {ms});
        CAPTURE(src);
        const Tune t = parse_abc(src);
        const std::string once = serialize_abc(t);
        const Tune again = parse_abc(once);
        CHECK(again == t);
        CHECK(serialize_abc(again) == once);
        for (std::size_t i = 0; i < ms.size(); ++i)
            CHECK(measure_duration(t.voices[0].measures[i], Rational(1, 8)) == whole(ms[i].duration()));
    }
}
