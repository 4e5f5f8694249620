#include "ensemble/roles.hpp"

namespace ensemble {

std::string agent_name(AgentRole role) {
    switch (role) {
        case AgentRole::leader: return "Leader";
        case AgentRole::melody: return "Melody";
        case AgentRole::accompaniment: return "Accompaniment";
        case AgentRole::revision: return "Revision";
        case AgentRole::review: return "Review";
    }
    return "Unknown";
}

std::string role_key(AgentRole role) {
    switch (role) {
        case AgentRole::leader: return "leader";
        case AgentRole::melody: return "melody";
        case AgentRole::accompaniment: return "accompaniment";
        case AgentRole::revision: return "revision";
        case AgentRole::review: return "review";
    }
    return "unknown";
}

std::optional<AgentRole> role_from_key(std::string_view key) {
    for (AgentRole r : all_roles)
        if (role_key(r) == key) return r;
    return std::nullopt;
}

}  // namespace ensemble
