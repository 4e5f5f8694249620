#include "ensemble/prompts.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "json.hpp"

#ifndef ENSEMBLE_SOURCE_DATA_DIR
#define ENSEMBLE_SOURCE_DATA_DIR "data"
#endif

namespace ensemble::prompts {

namespace {

std::string read_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw CorruptedData("cannot read " + p.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int{digest[i]};
    return hex.str();
}

const std::string& PromptSet::text(int index) const {
    for (const auto& e : entries)
        if (e.index == index) return e.text;
    throw std::out_of_range("no prompt with index " + std::to_string(index));
}

std::filesystem::path PromptLibrary::default_data_dir() {
    if (const char* env = std::getenv("ENSEMBLE_DATA_DIR"); env && *env) return env;
    return ENSEMBLE_SOURCE_DATA_DIR;
}

PromptLibrary::PromptLibrary(const std::filesystem::path& data_dir) : dir_(data_dir) {
    const auto prompt_dir = dir_ / "prompts";
    nlohmann::json index;
    try {
        index = nlohmann::json::parse(read_file(prompt_dir / "index.json"));
    } catch (const nlohmann::json::exception& e) {
        throw CorruptedData(std::string("prompts/index.json: ") + e.what());
    }
    for (const auto& rec : index) {
        const auto role_str = rec.at("role").get<std::string>();
        auto role = role_from_key(role_str);
        if (!role) throw CorruptedData("unknown role in prompt index: " + role_str);
        const auto path = prompt_dir / rec.at("path").get<std::string>();
        std::string text = read_file(path);
        if (sha256_hex(text) != rec.at("sha256").get<std::string>())
            throw CorruptedData("checksum mismatch for " + path.string());
        texts_[{rec.at("version").get<std::string>(), *role}] = std::move(text);
    }

    nlohmann::json set;
    try {
        set = nlohmann::json::parse(read_file(dir_ / "prompt_set.json"));
    } catch (const nlohmann::json::exception& e) {
        throw CorruptedData(std::string("prompt_set.json: ") + e.what());
    }
    std::set<int> seen;
    for (const auto& e : set.at("entries")) {
        PromptEntry entry{e.at("index").get<int>(), e.at("text").get<std::string>()};
        if (entry.index < 1 || entry.index > 20 || !seen.insert(entry.index).second || entry.text.empty())
            throw CorruptedData("prompt set entry " + std::to_string(entry.index) + " is invalid or duplicated");
        set_.entries.push_back(std::move(entry));
    }
    if (set_.entries.size() != 20)
        throw CorruptedData("prompt set has " + std::to_string(set_.entries.size()) + " entries, expected 20");
    std::sort(set_.entries.begin(), set_.entries.end(),
              [](const PromptEntry& a, const PromptEntry& b) { return a.index < b.index; });
}

RolePrompt PromptLibrary::load_role_prompt(AgentRole role, std::string_view version) const {
    auto it = texts_.find({std::string(version), role});
    if (it == texts_.end())
        throw UnknownVersion("no " + role_key(role) + " prompt for version '" + std::string(version) + "'");
    return RolePrompt{role, it->second, std::string(version)};
}

PromptSet PromptLibrary::load_prompt_set() const { return set_; }

std::vector<std::string> PromptLibrary::versions() const {
    std::set<std::string> v;
    for (const auto& [key, _] : texts_) v.insert(key.first);
    return {v.begin(), v.end()};
}

std::string apply_template(std::string_view text, const std::map<std::string, std::string>& vars) {
    std::string out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto open = text.find("{{", pos);
        if (open == std::string_view::npos) break;
        auto close = text.find("}}", open + 2);
        if (close == std::string_view::npos) break;
        out.append(text.substr(pos, open - pos));
        const std::string name(text.substr(open + 2, close - open - 2));
        auto it = vars.find(name);
        if (it != vars.end())
            out += it->second;
        else
            out.append(text.substr(open, close + 2 - open));
        pos = close + 2;
    }
    out.append(text.substr(pos));
    return out;
}

}  // namespace ensemble::prompts
