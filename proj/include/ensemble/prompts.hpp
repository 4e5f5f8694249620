#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ensemble/roles.hpp"

namespace ensemble::prompts {

inline constexpr std::string_view base_version = "paper-v1";
/// paper-v1 with a one-line verdict request appended to the Review prompt.
inline constexpr std::string_view verdict_version = "paper-v1+verdict";

struct RolePrompt {
    AgentRole role;
    std::string text;
    std::string version;
};

struct PromptEntry {
    int index;
    std::string text;
};

struct PromptSet {
    std::vector<PromptEntry> entries;

    /// Text of the 1-based entry; throws std::out_of_range.
    const std::string& text(int index) const;
};

class UnknownVersion : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CorruptedData : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Role prompts and the evaluation prompt set, loaded from a data directory
/// holding prompts/index.json ({role, version, path, sha256} records) and
/// prompt_set.json. Every file is checksummed on load.
class PromptLibrary {
public:
    explicit PromptLibrary(const std::filesystem::path& data_dir);

    /// $ENSEMBLE_DATA_DIR, else the data directory of the source tree.
    static std::filesystem::path default_data_dir();

    RolePrompt load_role_prompt(AgentRole role, std::string_view version) const;
    PromptSet load_prompt_set() const;
    std::vector<std::string> versions() const;
    const std::filesystem::path& data_dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    std::map<std::pair<std::string, AgentRole>, std::string> texts_;
    PromptSet set_;
};

/// Replaces {{name}} placeholders; unknown placeholders are left as written.
std::string apply_template(std::string_view text, const std::map<std::string, std::string>& vars);

std::string sha256_hex(std::string_view data);

}  // namespace ensemble::prompts
