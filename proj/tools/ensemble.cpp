#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "ensemble/abc.hpp"
#include "ensemble/eval.hpp"
#include "ensemble/lint.hpp"
#include "ensemble/llm.hpp"
#include "ensemble/midi.hpp"
#include "ensemble/orchestrator.hpp"
#include "ensemble/prompts.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace ensemble;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_failure = 1;
constexpr int exit_config = 2;

struct ConfigProblem : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_text(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigProblem("cannot read " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

nlohmann::json read_json(const std::string& path) {
    try {
        return nlohmann::json::parse(read_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigProblem(path + ": " + e.what());
    }
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw ConfigProblem("cannot write " + p.string());
    f << s;
}

// {model_id, endpoint, temperature, max_iterations, synth_cmd, bridge_cmd}
struct RunConfig {
    orchestrator::SessionConfig session;
    std::optional<std::string> synth_cmd;
    std::optional<std::string> bridge_cmd;
};

RunConfig load_run_config(const std::string& path) {
    RunConfig rc;
    if (!path.empty()) {
        const auto j = read_json(path);
        if (!j.is_object()) throw ConfigProblem(path + ": expected a JSON object");
        try {
            if (j.contains("model_id")) rc.session.model.model_id = j["model_id"].get<std::string>();
            if (j.contains("endpoint")) rc.session.model.endpoint_url = j["endpoint"].get<std::string>();
            if (j.contains("temperature")) rc.session.model.temperature = j["temperature"].get<double>();
            if (j.contains("max_iterations")) rc.session.max_iterations = j["max_iterations"].get<int>();
            if (j.contains("synth_cmd") && !j["synth_cmd"].is_null()) rc.synth_cmd = j["synth_cmd"].get<std::string>();
            if (j.contains("bridge_cmd") && !j["bridge_cmd"].is_null())
                rc.bridge_cmd = j["bridge_cmd"].get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigProblem(path + ": " + e.what());
        }
    }
    if (!rc.synth_cmd) rc.synth_cmd = midi::synth_command_from_env();
    rc.session.model.apply_environment();
    return rc;
}

abc::Tune load_tune(const std::string& path) {
    const std::string text = read_text(path);
    return abc::parse_abc(text);
}

struct BackendChoice {
    std::optional<nlohmann::json> script;

    std::unique_ptr<llm::ChatBackend> make() const {
        if (script) return llm::ScriptedBackend::from_json(*script);
        return std::make_unique<llm::HttpChatBackend>();
    }
};

BackendChoice backend_choice(const std::string& script_path, const orchestrator::SessionConfig& session) {
    BackendChoice b;
    if (!script_path.empty()) {
        b.script = read_json(script_path);
        llm::ScriptedBackend::from_json(*b.script);
    } else if (session.model.endpoint_url.empty()) {
        throw ConfigProblem("no endpoint: set COCOMPOSER_API_BASE, put \"endpoint\" in --config, or pass --script");
    }
    return b;
}

int report_parse_error(const std::string& file, const abc::ParseError& e) {
    std::cerr << file << ":" << e.line() << ":" << e.column() << ": " << e.message() << "\n";
    return exit_failure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-agent ABC composition, linting, MIDI rendering and evaluation"};
    app.require_subcommand(1);

    std::string config_path;
    std::string script_path;

    // compose
    auto* compose = app.add_subcommand("compose", "Run one composition session");
    std::string prompt;
    std::string model;
    std::optional<int> max_iterations;
    std::string out_dir = "out";
    bool llm_revision = false;
    bool single_agent = false;
    compose->add_option("--prompt", prompt, "Request text, or @file")->required();
    compose->add_option("--model", model, "Model id");
    compose->add_option("--max-iterations", max_iterations, "Review-driven revision rounds");
    compose->add_option("--out", out_dir, "Output directory");
    compose->add_option("--config", config_path, "Run config JSON");
    compose->add_option("--script", script_path, "Scripted replies JSON instead of a live model");
    compose->add_flag("--llm-revision", llm_revision, "Run the Revision prompt before deterministic repair");
    compose->add_flag("--single-agent", single_agent, "Single merged-prompt baseline");

    // lint
    auto* lint = app.add_subcommand("lint", "Check measure durations and format; optionally repair");
    std::string lint_file;
    bool fix = false;
    bool as_json = false;
    std::string fix_out;
    lint->add_option("file", lint_file, "ABC file")->required();
    lint->add_flag("--fix", fix, "Print the repaired tune");
    lint->add_option("-o,--output", fix_out, "Write the repaired tune here instead of stdout");
    lint->add_flag("--json", as_json, "Machine-readable issues and actions");

    // render
    auto* render = app.add_subcommand("render", "Render an ABC file to a format-1 MIDI file");
    std::string render_in;
    std::string render_out;
    std::string wav_out;
    int tpq = 480;
    render->add_option("file", render_in, "ABC file")->required();
    render->add_option("-o,--output", render_out, "MIDI output")->required();
    render->add_option("--wav", wav_out, "Also synthesize a WAV through COCOMPOSER_SYNTH_CMD");
    render->add_option("--tpq", tpq, "Ticks per quarter note");

    // eval
    auto* ev = app.add_subcommand("eval", "Batch sessions over the prompt set");
    std::string system_label = "multi-agent GPT-4o";
    std::string prompt_spec = "1-20";
    std::string eval_out = "runs";
    int repeats = 1;
    int parallel = 1;
    ev->add_option("--system", system_label, "System label for the report");
    ev->add_option("--prompts", prompt_spec, "Prompt indices, e.g. 1-20 or 1,3,5");
    ev->add_option("--out", eval_out, "Output directory");
    ev->add_option("--repeats", repeats, "Sessions per prompt");
    ev->add_option("--parallel", parallel, "Concurrent sessions");
    ev->add_option("--config", config_path, "Run config JSON");
    ev->add_option("--script", script_path, "Scripted replies JSON instead of a live model");
    ev->add_option("--model", model, "Model id");
    ev->add_option("--max-iterations", max_iterations, "Review-driven revision rounds");
    ev->add_flag("--llm-revision", llm_revision, "Run the Revision prompt before deterministic repair");
    ev->add_flag("--single-agent", single_agent, "Single merged-prompt baseline");

    // report
    auto* rep = app.add_subcommand("report", "Render a run.json (or a stored results file)");
    std::string report_in;
    std::string format = "table";
    rep->add_option("file", report_in, "run.json")->required();
    rep->add_option("--format", format, "table, csv or json")->check(CLI::IsMember({"table", "csv", "json"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }

    try {
        auto apply_overrides = [&](RunConfig& rc) {
            if (!model.empty()) rc.session.model.model_id = model;
            if (max_iterations) rc.session.max_iterations = *max_iterations;
            if (rc.session.max_iterations < 0) throw ConfigProblem("max-iterations must be >= 0");
            rc.session.run_llm_revision = llm_revision;
            rc.session.logical_clock = !script_path.empty();
        };

        if (*compose) {
            RunConfig rc = load_run_config(config_path);
            apply_overrides(rc);
            if (prompt.starts_with("@")) prompt = read_text(prompt.substr(1));
            if (prompt.empty()) throw ConfigProblem("empty prompt");
            const auto backend_spec = backend_choice(script_path, rc.session);
            const prompts::PromptLibrary library(prompts::PromptLibrary::default_data_dir());
            auto backend = backend_spec.make();
            const orchestrator::CompositionBrief brief{prompt, std::nullopt};
            rc.session.seed_note = single_agent ? "single-agent" : "compose";

            orchestrator::SessionResult result;
            try {
                result = single_agent ? orchestrator::single_agent_baseline(*backend, library, brief, rc.session)
                                      : orchestrator::run_session(*backend, library, brief, rc.session);
            } catch (const orchestrator::SessionError& e) {
                fs::create_directories(out_dir);
                orchestrator::SessionResult partial;
                partial.transcript = e.partial_transcript();
                partial.failure_reason = e.what();
                write_text(fs::path(out_dir) / "transcript.json",
                           orchestrator::transcript_json(brief, rc.session, partial).dump(2) + "\n");
                std::cerr << e.what() << "\n";
                return exit_failure;
            }
            fs::create_directories(out_dir);
            write_text(fs::path(out_dir) / "transcript.json",
                       orchestrator::transcript_json(brief, rc.session, result).dump(2) + "\n");
            if (!result.success) {
                std::cerr << "composition failed: " << result.failure_reason.value_or("unknown") << "\n";
                return exit_failure;
            }
            const fs::path mid = fs::path(out_dir) / "score.mid";
            write_text(fs::path(out_dir) / "score.abc", abc::serialize_abc(*result.final_tune));
            midi::write_file(mid, midi::render_midi(*result.final_tune));
            if (rc.synth_cmd) midi::synthesize_wav(*rc.synth_cmd, mid, fs::path(out_dir) / "score.wav");
            std::cout << "session complete: " << result.transcript.size() << " messages, "
                      << result.iterations_used << " revision round(s), " << result.repair_actions.size()
                      << " repair action(s)\n";
            return exit_ok;
        }

        if (*lint) {
            abc::Tune tune;
            try {
                tune = load_tune(lint_file);
            } catch (const abc::ParseError& e) {
                return report_parse_error(lint_file, e);
            }
            const auto issues = abc::validate(tune);
            if (!fix) {
                if (as_json) {
                    std::cout << abc::to_json(issues).dump(2) << "\n";
                } else {
                    for (const auto& i : issues) {
                        std::cout << lint_file << ": V:" << i.voice_id;
                        if (i.measure_index) std::cout << " measure " << *i.measure_index + 1;
                        std::cout << ": " << abc::to_string(i.kind) << ": " << i.detail << "\n";
                    }
                }
                return issues.empty() ? exit_ok : exit_failure;
            }
            abc::RepairResult repaired;
            try {
                repaired = abc::repair(tune);
            } catch (const abc::RepairError& e) {
                std::cerr << lint_file << ": " << e.what() << "\n";
                return exit_failure;
            }
            const std::string text = abc::serialize_abc(repaired.tune);
            if (!fix_out.empty()) write_text(fix_out, text);
            if (as_json) {
                std::cout << nlohmann::json{{"issues", abc::to_json(issues)},
                                            {"actions", abc::to_json(repaired.actions)}}
                                 .dump(2)
                          << "\n";
            } else {
                for (const auto& a : repaired.actions) {
                    std::cerr << "V:" << a.voice_id;
                    if (a.measure_index) std::cerr << " measure " << *a.measure_index + 1;
                    std::cerr << ": " << abc::to_string(a.kind) << ": " << a.detail << "\n";
                }
                if (fix_out.empty()) std::cout << text;
            }
            return exit_ok;
        }

        if (*render) {
            abc::Tune tune;
            try {
                tune = load_tune(render_in);
            } catch (const abc::ParseError& e) {
                return report_parse_error(render_in, e);
            }
            midi::RenderConfig cfg;
            cfg.ticks_per_quarter = tpq;
            try {
                midi::write_file(render_out, midi::render_midi(tune, cfg));
            } catch (const midi::RenderError& e) {
                std::cerr << render_in << ": " << e.what() << "\n";
                return exit_failure;
            }
            if (!wav_out.empty()) {
                const auto synth = midi::synth_command_from_env();
                if (!synth) throw ConfigProblem("--wav needs COCOMPOSER_SYNTH_CMD");
                midi::synthesize_wav(*synth, render_out, wav_out);
            }
            return exit_ok;
        }

        if (*ev) {
            RunConfig rc = load_run_config(config_path);
            apply_overrides(rc);
            rc.session.seed_note = system_label;
            eval::EvalRunConfig cfg;
            cfg.system_label = system_label;
            try {
                cfg.prompt_indices = eval::parse_index_list(prompt_spec);
            } catch (const std::invalid_argument& e) {
                throw ConfigProblem(e.what());
            }
            cfg.session_config = rc.session;
            cfg.output_dir = eval_out;
            cfg.repeats = repeats;
            cfg.parallelism = parallel;
            cfg.single_agent = single_agent;
            cfg.synth_cmd = rc.synth_cmd;
            cfg.bridge_cmd = rc.bridge_cmd;
            const auto backend_spec = backend_choice(script_path, rc.session);
            cfg.backend_factory = [backend_spec](int, int) { return backend_spec.make(); };
            const prompts::PromptLibrary library(prompts::PromptLibrary::default_data_dir());
            eval::EvalReport report;
            try {
                report = eval::run_experiment(cfg, library, &std::cerr);
            } catch (const eval::ConfigError& e) {
                throw ConfigProblem(e.what());
            }
            std::cout << eval::render_report(report, eval::ReportFormat::table);
            for (const auto& row : report.rows)
                if (!row.success) return exit_failure;
            return exit_ok;
        }

        if (*rep) {
            const auto j = read_json(report_in);
            const auto fmt = *eval::parse_format(format);
            if (j.contains("systems")) {
                if (fmt != eval::ReportFormat::table) throw ConfigProblem("stored results render as a table only");
                std::cout << eval::render_table(eval::summaries_from_json(j));
                return exit_ok;
            }
            std::cout << eval::render_report(eval::report_from_json(j), fmt);
            return exit_ok;
        }
    } catch (const ConfigProblem& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const prompts::CorruptedData& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_failure;
    }
    return exit_ok;
}
