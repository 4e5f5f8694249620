#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace ensemble {

enum class AgentRole { leader, melody, accompaniment, revision, review };

inline constexpr std::array<AgentRole, 5> all_roles = {AgentRole::leader, AgentRole::melody, AgentRole::accompaniment,
                                                       AgentRole::revision, AgentRole::review};

/// Display name used as the chat author ("Leader", "Melody", ...).
std::string agent_name(AgentRole role);
/// Lower-case key used in prompt files ("leader", ...).
std::string role_key(AgentRole role);
std::optional<AgentRole> role_from_key(std::string_view key);

}  // namespace ensemble
