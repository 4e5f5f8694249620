#include <set>

#include "doctest.h"
#include "ensemble/lint.hpp"
#include "support/generators.hpp"
#include "test_support.hpp"

using namespace ensemble;
using namespace ensemble::abc;

namespace {

Rational whole(const gen::Q& q) { return Rational(q.numerator(), q.denominator()); }

std::set<std::pair<int, std::size_t>> mismatched(const std::vector<ValidationIssue>& issues) {
    std::set<std::pair<int, std::size_t>> out;
    for (const auto& i : issues)
        if (i.kind == IssueKind::duration_mismatch) out.insert({i.voice_id, *i.measure_index});
    return out;
}

Tune tune_of(const std::string& body, const char* meter = "4/4", const char* unit = "1/4") {
    return parse_abc(std::string("X:1\nT:t\nM:") + meter + "\nL:" + unit + "\nK:C\n" + body);
}

std::string measure_text(const Tune& t, std::size_t voice, std::size_t i) {
    return serialize_measure(t.voices[voice].measures[i], t.header);
}

}  // namespace

TEST_CASE("validator flags exactly the bars whose brute-force sum differs from the meter") {
    for (const auto meter : {gen::MeterSpec{6, 8}, gen::MeterSpec{4, 4}, gen::MeterSpec{3, 4}}) {
        for (int seed = 0; seed < 40; ++seed) {
            gen::MeasureGen g(static_cast<std::uint64_t>(seed) * 31 + meter.num, meter, gen::Q(1, 8));
            std::vector<gen::Measure> ms;
            for (int i = 0; i < 10; ++i) ms.push_back(g.coin() ? g.exact() : g.arbitrary());
            const Tune t = parse_abc(gen::tune_text(meter, gen::Q(1, 8), {ms}));
            std::set<std::pair<int, std::size_t>> expected;
            for (std::size_t i = 0; i < ms.size(); ++i) {
                const auto d = ms[i].duration();
                const bool pickup = i == 0 && d < meter.duration();
                if (d != meter.duration() && !pickup) expected.insert({1, i});
            }
            CHECK(mismatched(validate(t)) == expected);
        }
    }
}

TEST_CASE("a short first bar is a pickup; a short later bar is not") {
    const Tune t = tune_of("C | CDEF | CD |\n");
    const auto issues = validate(t);
    REQUIRE(issues.size() == 1);
    CHECK(issues[0].measure_index == 2u);
    CHECK(issues[0].expected == Rational(1));
    CHECK(issues[0].actual == Rational(1, 2));
    CHECK(mismatched(validate(tune_of("CDEFG | CDEF |\n"))) == std::set<std::pair<int, std::size_t>>{{1, 0}});
}

TEST_CASE("format errors") {
    SUBCASE("duplicate voice ids") {
        const Tune t = tune_of("V:1 name=\"a\"\nCDEF|\nV:1 name=\"b\"\nC4|\n");
        REQUIRE(t.voices.size() == 2);
        const auto issues = validate(t);
        REQUIRE(issues.size() == 1);
        CHECK(issues[0].kind == IssueKind::format_error);
    }
    SUBCASE("unlabelled voice next to a labelled one") {
        const auto issues = validate(tune_of("CDEF|\nV:2\nC4|\n"));
        REQUIRE(issues.size() == 1);
        CHECK(issues[0].detail.find("V:") != std::string::npos);
    }
    SUBCASE("program out of range") {
        const auto issues = validate(tune_of("V:1 %%MIDI program 200\nCDEF|\n"));
        REQUIRE(issues.size() == 1);
        CHECK(issues[0].voice_id == 1);
    }
    SUBCASE("malformed chord symbol") {
        const auto issues = validate(tune_of("\"Hm7\"CDEF|\n"));
        REQUIRE(issues.size() == 1);
        CHECK(issues[0].measure_index == 0u);
    }
}

TEST_CASE("chord symbol grammar") {
    for (const char* ok : {"A", "F#m7", "Bbmaj7", "Dsus4", "G/B", "C7(b9)", "N.C.", "Ebdim", "Caug", "Am7b5", "C+",
                           "Dm/F#", "F°7"})
        CHECK_MESSAGE(is_well_formed_chord_symbol(ok), ok);
    for (const char* bad : {"", "H", "am", "C/", "C/x", "Cmaj 7", "Gm7/B/D", "#F"})
        CHECK_MESSAGE(!is_well_formed_chord_symbol(bad), bad);
}

TEST_CASE("rest decomposition fills the deficit largest first") {
    // brute force: every candidate value the greedy may use, largest first
    const std::vector<gen::Q> values = {gen::Q(3), gen::Q(2), gen::Q(3, 2), gen::Q(1), gen::Q(3, 4), gen::Q(1, 2),
                                        gen::Q(3, 8), gen::Q(1, 4), gen::Q(3, 16), gen::Q(1, 8), gen::Q(3, 32),
                                        gen::Q(1, 16), gen::Q(3, 64), gen::Q(1, 32), gen::Q(3, 128), gen::Q(1, 64)};
    for (int n = 1; n <= 64; ++n) {
        const gen::Q deficit(n, 64);
        std::vector<gen::Q> expected;
        gen::Q left = deficit;
        for (const auto& v : values)
            while (v <= left) {
                expected.push_back(v);
                left -= v;
            }
        const auto got = rest_decomposition(whole(deficit), Rational(1, 8));
        REQUIRE(got.size() == expected.size());
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] * Rational(1, 8) == whole(expected[i]));
    }
    const auto odd = rest_decomposition(Rational(1, 3), Rational(1, 8));
    Rational sum;
    for (const auto& r : odd) sum += r * Rational(1, 8);
    CHECK(sum == Rational(1, 3));
}

TEST_CASE("repair rules") {
    SUBCASE("conforming tune is untouched") {
        const Tune t = parse_abc(testing::read_file(testing::fixture("table3.abc")));
        const auto r = repair(t);
        CHECK(r.actions.empty());
        CHECK(r.tune == t);
    }
    SUBCASE("short bar is padded with rests") {
        const Tune t = tune_of("CDEF | CD |\n");
        const auto r = repair(t);
        REQUIRE(r.actions.size() == 1);
        CHECK(r.actions[0].kind == RepairKind::pad_rests);
        CHECK(measure_text(r.tune, 0, 1) == "CD z2 |");
    }
    SUBCASE("events past the bar are dropped") {
        const auto r = repair(tune_of("CDEF | CDEF GA |\n"));
        REQUIRE(r.actions.size() == 1);
        CHECK(r.actions[0].kind == RepairKind::delete_events);
        CHECK(measure_text(r.tune, 0, 1) == "CDEF |");
    }
    SUBCASE("the event crossing the bar is shortened") {
        const auto r = repair(tune_of("CDEF | CDE3 | CDEF |\n"));
        REQUIRE(r.actions.size() == 1);
        CHECK(r.actions[0].kind == RepairKind::shorten_event);
        CHECK(measure_text(r.tune, 0, 1) == "CDE2 |");
        CHECK(r.actions[0].before == "CDE3 |");
        CHECK(r.actions[0].after == "CDE2 |");
    }
    SUBCASE("a last event whose tail fits the next bar is split with a tie") {
        const auto r = repair(tune_of("CDEF | CDE3 | DEF |\n"));
        REQUIRE(r.actions.size() == 2);
        CHECK(r.actions[0].kind == RepairKind::split_tie);
        CHECK(r.actions[1].kind == RepairKind::receive_tied);
        CHECK(measure_text(r.tune, 0, 1) == "CDE2- |");
        CHECK(measure_text(r.tune, 0, 2) == "E DEF |");
        CHECK(validate(r.tune).empty());
    }
    SUBCASE("a tuplet crossing the bar is replaced by rests") {
        const auto r = repair(tune_of("CDEF | CDE (3FGA |\n", "4/4", "1/4"));
        REQUIRE(r.actions.size() == 1);
        CHECK(r.actions[0].kind == RepairKind::delete_events);
        CHECK(measure_text(r.tune, 0, 1) == "CDE z |");
    }
    SUBCASE("a tuplet longer than the bar at its start cannot be repaired") {
        CHECK_THROWS_AS(repair(tune_of("CD | (3C2D2E2 |\n", "2/4", "1/4")), RepairError);
    }
    SUBCASE("format fixes") {
        Tune t = tune_of("\"Xyz\"CDEF|\nV:2 %%MIDI program 300\nC4|\n");
        // a repeated V: line continues its voice, so duplicates only arise in built tunes
        t.voices.push_back(t.voices.back());
        const auto r = repair(t);
        CHECK(validate(r.tune).empty());
        std::set<RepairKind> kinds;
        for (const auto& a : r.actions) kinds.insert(a.kind);
        CHECK(kinds.count(RepairKind::drop_chord_symbol) == 1);
        CHECK(kinds.count(RepairKind::declare_voice) == 1);
        CHECK(kinds.count(RepairKind::clamp_program) == 1);
        CHECK(kinds.count(RepairKind::renumber_voice) == 1);
    }
}

TEST_CASE("repair: validity, idempotence and untouched bars over corrupted tunes") {
    for (int seed = 0; seed < 150; ++seed) {
        const gen::MeterSpec meter = seed % 3 == 0 ? gen::MeterSpec{6, 8} : seed % 3 == 1 ? gen::MeterSpec{4, 4}
                                                                                          : gen::MeterSpec{3, 4};
        gen::MeasureGen g(static_cast<std::uint64_t>(seed) + 1000, meter, gen::Q(1, 8));
        std::vector<std::vector<gen::Measure>> voices(2);
        for (auto& v : voices)
            for (int i = 0; i < 8; ++i) v.push_back(g.pick(0, 2) == 0 ? g.corrupted() : g.exact());
        const Tune t = parse_abc(gen::tune_text(meter, gen::Q(1, 8), voices));
        const auto r = repair(t);
        CHECK_FALSE(has_duration_mismatch(validate(r.tune)));
        const auto again = repair(r.tune);
        CHECK(again.actions.empty());
        CHECK(serialize_abc(again.tune) == serialize_abc(r.tune));
        for (std::size_t v = 0; v < 2; ++v)
            for (std::size_t i = 0; i < 8; ++i) {
                const auto d = voices[v][i].duration();
                if (d == meter.duration() || (i == 0 && d < meter.duration()))
                    CHECK(measure_text(r.tune, v, i) == measure_text(t, v, i));
            }
    }
}

TEST_CASE("issues and actions serialize with exact fractions") {
    const auto issues = validate(tune_of("CDEF | CD |\n"));
    const auto j = to_json(issues);
    CHECK(j[0]["kind"] == "duration_mismatch");
    CHECK(j[0]["expected"] == "1");
    CHECK(j[0]["actual"] == "1/2");
    CHECK(j[0]["measure_index"] == 1);
}
