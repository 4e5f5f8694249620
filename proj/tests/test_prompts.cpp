#include "doctest.h"
#include "ensemble/prompts.hpp"
#include "json.hpp"
#include "test_support.hpp"

using namespace ensemble;
using namespace ensemble::prompts;

namespace {

const PromptLibrary& library() {
    static const PromptLibrary lib(PromptLibrary::default_data_dir());
    return lib;
}

// Pinned so that any edit to the shipped prompt texts fails the build.
const std::vector<std::pair<AgentRole, const char*>> pinned = {
    {AgentRole::leader, "65293f277af55908a1f7857326f5fac37b0f12313d24b352b9449e3243159d85"},
    {AgentRole::melody, "a34504a064b708faa4512c32a54678d6227a59d997c30eb6e3f45ca6c4e90872"},
    {AgentRole::accompaniment, "f004e8696db0e761a6b1272832c75dc883b3e5d9009e24e6cabe110791b6e0db"},
    {AgentRole::revision, "1c8fa842d988129351eea66bce5a435e6b5b85b0bdbfb3fb8c13ffc106dc3416"},
    {AgentRole::review, "fe3ec004ad75208ded50f89fe542c6e54b864ebed6e969ed7a62c36c651fb0dc"},
};

}  // namespace

TEST_CASE("sha256 known answers") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("shipped role prompts match their pinned checksums") {
    for (const auto& [role, sum] : pinned) {
        const auto p = library().load_role_prompt(role, base_version);
        CHECK_MESSAGE(sha256_hex(p.text) == sum, role_key(role));
        CHECK(p.version == base_version);
        CHECK(p.role == role);
    }
    CHECK(sha256_hex(library().load_role_prompt(AgentRole::review, verdict_version).text) ==
          "b34326de6145ff68224045fe0f40a85fa0c5aa2f12f9a6dd302c4bee26aa03f6");
    CHECK(sha256_hex(testing::read_file(PromptLibrary::default_data_dir() / "prompt_set.json")) ==
          "96ccfd561293eee8e02d73f779e68d9839d981a4c888f539d48a30b51c6dbc26");
}

TEST_CASE("role prompt content") {
    CHECK(library().load_role_prompt(AgentRole::leader, base_version).text.starts_with(
        "You are the leader of a music production team"));
    CHECK(library().load_role_prompt(AgentRole::revision, base_version).text.find(
              "ONLY modify parts with confirmed errors") != std::string::npos);
    CHECK(library().load_role_prompt(AgentRole::accompaniment, base_version).text.find(
              "You are a skilled musician specializing in accompaniment composition") == 0);
    const auto verdict = library().load_role_prompt(AgentRole::review, verdict_version).text;
    const auto plain = library().load_role_prompt(AgentRole::review, base_version).text;
    CHECK(verdict.starts_with(plain));
    CHECK(verdict.find("VERDICT: APPROVE") != std::string::npos);
    for (AgentRole r : {AgentRole::leader, AgentRole::melody, AgentRole::accompaniment, AgentRole::revision})
        CHECK(library().load_role_prompt(r, verdict_version).text == library().load_role_prompt(r, base_version).text);
}

TEST_CASE("unknown version") {
    CHECK_THROWS_AS(library().load_role_prompt(AgentRole::leader, "nonexistent"), UnknownVersion);
    CHECK(library().versions() == std::vector<std::string>{"paper-v1", "paper-v1+verdict"});
}

TEST_CASE("evaluation prompt set") {
    const auto set = library().load_prompt_set();
    REQUIRE(set.entries.size() == 20);
    for (int i = 0; i < 20; ++i) CHECK(set.entries[static_cast<std::size_t>(i)].index == i + 1);
    CHECK(set.text(4).starts_with("Journey Through the Highlands"));
    CHECK(set.text(10).find("Retro Video Game Adventure") != std::string::npos);
    CHECK_THROWS_AS(set.text(21), std::out_of_range);
    const auto again = library().load_prompt_set();
    for (std::size_t i = 0; i < 20; ++i) CHECK(again.entries[i].text == set.entries[i].text);
}

TEST_CASE("corrupted data is detected") {
    namespace fs = std::filesystem;
    const auto src = PromptLibrary::default_data_dir();

    SUBCASE("edited prompt file") {
        const auto dir = testing::scratch_dir("prompts_edit");
        fs::copy(src, dir, fs::copy_options::recursive);
        testing::write_file(dir / "prompts" / "paper-v1" / "melody.txt", "You are a melody bot.\n");
        CHECK_THROWS_AS(PromptLibrary{dir}, CorruptedData);
    }
    SUBCASE("prompt set with a missing entry") {
        const auto dir = testing::scratch_dir("prompts_short");
        fs::copy(src, dir, fs::copy_options::recursive);
        auto j = nlohmann::json::parse(testing::read_file(dir / "prompt_set.json"));
        j["entries"].erase(j["entries"].begin() + 5);
        testing::write_file(dir / "prompt_set.json", j.dump());
        CHECK_THROWS_AS(PromptLibrary{dir}, CorruptedData);
    }
    SUBCASE("missing directory") { CHECK_THROWS_AS(PromptLibrary{"/nonexistent/data"}, CorruptedData); }
}

TEST_CASE("template placeholders") {
    CHECK(apply_template("Compose {{style}} in {{key}}.", {{"style", "a jig"}, {"key", "D"}}) == "Compose a jig in D.");
    CHECK(apply_template("{{unknown}} stays", {}) == "{{unknown}} stays");
    CHECK(apply_template("no placeholders", {{"x", "y"}}) == "no placeholders");
    CHECK(apply_template("unterminated {{x", {{"x", "y"}}) == "unterminated {{x");
}
