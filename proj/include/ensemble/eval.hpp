#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ensemble/llm.hpp"
#include "ensemble/midi.hpp"
#include "ensemble/orchestrator.hpp"
#include "ensemble/prompts.hpp"
#include "json.hpp"

namespace ensemble::eval {

/// Content enjoyment, content usefulness, production complexity and
/// production quality, each on a 1-10 scale.
struct AestheticsScore {
    double ce = 0;
    double cu = 0;
    double pc = 0;
    double pq = 0;

    friend bool operator==(const AestheticsScore&, const AestheticsScore&) = default;
};

bool in_range(const AestheticsScore& s);

struct EvalRow {
    int index = 0;
    bool success = false;
    std::optional<AestheticsScore> score;
    std::optional<std::string> failure_reason;

    friend bool operator==(const EvalRow&, const EvalRow&) = default;
};

struct Aggregate {
    std::optional<AestheticsScore> means;  // absent when no row was scored
    double success_rate = 0;               // percent
};

struct EvalReport {
    std::string system_label;
    std::vector<EvalRow> rows;  // prompt-index order

    Aggregate aggregate() const;
};

/// One line of a results table: a system with its mean scores.
struct SystemSummary {
    std::string label;
    std::optional<AestheticsScore> means;
    std::optional<double> success_rate;  // percent; absent when not reported
};

SystemSummary summarize(const EvalReport& report);

/// Creates the backend for one (prompt index, repeat) session.
using BackendFactory = std::function<std::unique_ptr<llm::ChatBackend>(int prompt_index, int repeat)>;

struct EvalRunConfig {
    std::string system_label = "multi-agent GPT-4o";
    std::vector<int> prompt_indices;
    orchestrator::SessionConfig session_config;
    std::filesystem::path output_dir;
    int repeats = 1;
    int parallelism = 1;
    bool single_agent = false;
    std::optional<std::string> synth_cmd;
    std::optional<std::string> bridge_cmd;
    midi::RenderConfig render;
    BackendFactory backend_factory;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Runs every prompt, persisting transcript.json, score.abc, score.mid and
/// score.wav under output_dir/prompt_NN/ (run_K/ subdirectories when
/// repeats > 1). Row failures never abort the batch. Warnings go to `log`.
EvalReport run_experiment(const EvalRunConfig& config, const prompts::PromptLibrary& library,
                          std::ostream* log = nullptr);

/// Scores WAV files through the bridge's JSON-lines protocol. Entries are
/// absent for error responses, out-of-range scores or an unavailable bridge.
std::vector<std::optional<AestheticsScore>> score_with_bridge(const std::string& bridge_cmd,
                                                              const std::vector<std::filesystem::path>& wavs,
                                                              const std::filesystem::path& work_dir,
                                                              std::vector<std::string>& warnings);

/// "1-20", "1,4,7-9".
std::vector<int> parse_index_list(std::string_view spec);

enum class ReportFormat { table, csv, json };

std::optional<ReportFormat> parse_format(std::string_view name);

std::string render_report(const EvalReport& report, ReportFormat format);
std::string render_table(const std::vector<SystemSummary>& systems);

EvalReport report_from_json(const nlohmann::json& j);
EvalReport report_from_csv(std::string_view text);
nlohmann::json to_json(const EvalReport& report);

/// {"systems": [{label, ce, cu, pc, pq, success_rate}, ...]}
std::vector<SystemSummary> summaries_from_json(const nlohmann::json& j);

}  // namespace ensemble::eval
