#include "ensemble/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace ensemble::eval {

namespace fs = std::filesystem;

bool in_range(const AestheticsScore& s) {
    for (double v : {s.ce, s.cu, s.pc, s.pq})
        if (!(v >= 1.0 && v <= 10.0)) return false;
    return true;
}

namespace {

AestheticsScore mean_of(const std::vector<AestheticsScore>& xs) {
    AestheticsScore m;
    for (const auto& x : xs) {
        m.ce += x.ce;
        m.cu += x.cu;
        m.pc += x.pc;
        m.pq += x.pq;
    }
    const double n = static_cast<double>(xs.size());
    m.ce /= n;
    m.cu /= n;
    m.pc /= n;
    m.pq /= n;
    return m;
}

std::string fixed2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string full(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string percent(double v) {
    char buf[64];
    if (v == std::floor(v))
        std::snprintf(buf, sizeof buf, "%.0f%%", v);
    else
        std::snprintf(buf, sizeof buf, "%.2f%%", v);
    return buf;
}

std::string prompt_dir_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "prompt_%02d", index);
    return buf;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << text;
}

struct TaskOutcome {
    bool success = false;
    std::optional<std::string> failure_reason;
    std::optional<fs::path> wav;
};

}  // namespace

Aggregate EvalReport::aggregate() const {
    Aggregate a;
    if (rows.empty()) return a;
    std::vector<AestheticsScore> scored;
    std::size_t ok = 0;
    for (const auto& r : rows) {
        if (r.success) ++ok;
        if (r.score) scored.push_back(*r.score);
    }
    a.success_rate = static_cast<double>(ok) / static_cast<double>(rows.size()) * 100.0;
    if (!scored.empty()) a.means = mean_of(scored);
    return a;
}

SystemSummary summarize(const EvalReport& report) {
    const auto agg = report.aggregate();
    SystemSummary s{report.system_label, agg.means, std::nullopt};
    if (!report.rows.empty()) s.success_rate = agg.success_rate;
    return s;
}

std::vector<int> parse_index_list(std::string_view spec) {
    std::set<int> out;
    std::string token;
    std::istringstream in{std::string(spec)};
    auto number = [](const std::string& s) {
        std::size_t used = 0;
        int v = 0;
        try {
            v = std::stoi(s, &used);
        } catch (const std::exception&) {
            throw std::invalid_argument("bad prompt index: '" + s + "'");
        }
        if (used != s.size()) throw std::invalid_argument("bad prompt index: '" + s + "'");
        return v;
    };
    while (std::getline(in, token, ',')) {
        if (token.empty()) continue;
        const auto dash = token.find('-');
        if (dash == std::string::npos) {
            out.insert(number(token));
        } else {
            const int lo = number(token.substr(0, dash));
            const int hi = number(token.substr(dash + 1));
            if (lo > hi) throw std::invalid_argument("empty prompt range: " + token);
            for (int i = lo; i <= hi; ++i) out.insert(i);
        }
    }
    return {out.begin(), out.end()};
}

std::vector<std::optional<AestheticsScore>> score_with_bridge(const std::string& bridge_cmd,
                                                              const std::vector<fs::path>& wavs,
                                                              const fs::path& work_dir,
                                                              std::vector<std::string>& warnings) {
    std::vector<std::optional<AestheticsScore>> out(wavs.size());
    if (wavs.empty()) return out;
    const fs::path req = work_dir / "bridge_requests.jsonl";
    const fs::path resp = work_dir / "bridge_responses.jsonl";
    {
        std::ofstream f(req, std::ios::binary);
        for (const auto& w : wavs) f << nlohmann::json{{"path", w.string()}}.dump() << '\n';
    }
    const std::string cmd =
        bridge_cmd + " < " + midi::shell_quote(req.string()) + " > " + midi::shell_quote(resp.string());
    const int status = std::system(cmd.c_str());
    if (status != 0) {
        warnings.push_back("aesthetics bridge unavailable (exit status " + std::to_string(status) +
                           "); scores left empty");
        return out;
    }
    std::ifstream f(resp);
    std::string line;
    std::size_t i = 0;
    for (; i < wavs.size() && std::getline(f, line); ++i) {
        try {
            const auto j = nlohmann::json::parse(line);
            if (j.value("path", std::string{}) != wavs[i].string()) {
                warnings.push_back("bridge response " + std::to_string(i + 1) + " is for a different file");
                continue;
            }
            if (j.contains("error")) {
                warnings.push_back("bridge error for " + wavs[i].string() + ": " + j["error"].dump());
                continue;
            }
            AestheticsScore s{j.at("CE").get<double>(), j.at("CU").get<double>(), j.at("PC").get<double>(),
                              j.at("PQ").get<double>()};
            if (!in_range(s)) {
                warnings.push_back("bridge scores out of [1,10] for " + wavs[i].string());
                continue;
            }
            out[i] = s;
        } catch (const nlohmann::json::exception& e) {
            warnings.push_back("malformed bridge response " + std::to_string(i + 1) + ": " + e.what());
        }
    }
    if (i < wavs.size())
        warnings.push_back("bridge returned " + std::to_string(i) + " responses for " +
                           std::to_string(wavs.size()) + " requests");
    return out;
}

EvalReport run_experiment(const EvalRunConfig& config, const prompts::PromptLibrary& library, std::ostream* log) {
    if (config.prompt_indices.empty()) throw ConfigError("no prompt indices selected");
    for (int i : config.prompt_indices)
        if (i < 1 || i > 20) throw ConfigError("prompt index out of range 1-20: " + std::to_string(i));
    if (config.repeats < 1) throw ConfigError("repeats must be >= 1");
    if (config.parallelism < 1) throw ConfigError("parallelism must be >= 1");
    if (!config.backend_factory) throw ConfigError("no backend configured");
    if (config.output_dir.empty()) throw ConfigError("no output directory");

    const auto prompt_set = library.load_prompt_set();
    std::vector<int> indices = config.prompt_indices;
    std::sort(indices.begin(), indices.end());
    indices.erase(std::unique(indices.begin(), indices.end()), indices.end());

    struct Task {
        int index;
        int repeat;
        fs::path dir;
    };
    std::vector<Task> tasks;
    for (int idx : indices)
        for (int rep = 0; rep < config.repeats; ++rep) {
            fs::path dir = config.output_dir / prompt_dir_name(idx);
            if (config.repeats > 1) dir /= "run_" + std::to_string(rep + 1);
            tasks.push_back({idx, rep, dir});
        }

    std::vector<TaskOutcome> outcomes(tasks.size());
    std::mutex log_mu;
    auto warn = [&](const std::string& msg) {
        if (log == nullptr) return;
        std::lock_guard lock(log_mu);
        *log << "warning: " << msg << '\n';
    };

    auto run_task = [&](std::size_t t) {
        const Task& task = tasks[t];
        TaskOutcome& out = outcomes[t];
        fs::create_directories(task.dir);
        orchestrator::CompositionBrief brief{prompt_set.text(task.index), task.index};
        nlohmann::json transcript;
        std::optional<orchestrator::SessionResult> result;
        try {
            auto backend = config.backend_factory(task.index, task.repeat);
            result = config.single_agent
                         ? orchestrator::single_agent_baseline(*backend, library, brief, config.session_config)
                         : orchestrator::run_session(*backend, library, brief, config.session_config);
            transcript = orchestrator::transcript_json(brief, config.session_config, *result);
        } catch (const orchestrator::SessionError& e) {
            orchestrator::SessionResult partial;
            partial.transcript = e.partial_transcript();
            partial.failure_reason = e.what();
            transcript = orchestrator::transcript_json(brief, config.session_config, partial);
            out.failure_reason = e.what();
        } catch (const std::exception& e) {
            out.failure_reason = e.what();
            transcript = {{"error", e.what()}};
        }
        write_text(task.dir / "transcript.json", transcript.dump(2) + "\n");
        if (!result) return;
        out.success = result->success;
        out.failure_reason = result->failure_reason;
        if (!result->final_tune) return;
        write_text(task.dir / "score.abc", abc::serialize_abc(*result->final_tune));
        const fs::path mid = task.dir / "score.mid";
        try {
            midi::write_file(mid, midi::render_midi(*result->final_tune, config.render));
        } catch (const std::exception& e) {
            warn(prompt_dir_name(task.index) + ": MIDI rendering failed: " + e.what());
            return;
        }
        if (!config.synth_cmd) return;
        const fs::path wav = task.dir / "score.wav";
        try {
            midi::synthesize_wav(*config.synth_cmd, mid, wav);
            out.wav = fs::absolute(wav);
        } catch (const midi::SynthError& e) {
            warn(prompt_dir_name(task.index) + ": " + e.what());
        }
    };

    fs::create_directories(config.output_dir);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t t = next++; t < tasks.size(); t = next++) run_task(t);
    };
    const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(config.parallelism), tasks.size());
    std::vector<std::jthread> pool;
    for (std::size_t i = 1; i < n_threads; ++i) pool.emplace_back(worker);
    worker();
    pool.clear();

    std::vector<std::optional<AestheticsScore>> scores(tasks.size());
    if (config.bridge_cmd) {
        std::vector<fs::path> wavs;
        std::vector<std::size_t> owner;
        for (std::size_t t = 0; t < tasks.size(); ++t)
            if (outcomes[t].wav) {
                wavs.push_back(*outcomes[t].wav);
                owner.push_back(t);
            }
        std::vector<std::string> warnings;
        auto got = score_with_bridge(*config.bridge_cmd, wavs, fs::absolute(config.output_dir), warnings);
        for (const auto& w : warnings) warn(w);
        for (std::size_t k = 0; k < got.size(); ++k) scores[owner[k]] = got[k];
    } else if (config.synth_cmd) {
        warn("no bridge command configured; scores left empty");
    }

    EvalReport report;
    report.system_label = config.system_label;
    for (int idx : indices) {
        EvalRow row;
        row.index = idx;
        row.success = true;
        std::vector<AestheticsScore> repeat_scores;
        for (std::size_t t = 0; t < tasks.size(); ++t) {
            if (tasks[t].index != idx) continue;
            if (!outcomes[t].success) {
                row.success = false;
                if (!row.failure_reason) row.failure_reason = outcomes[t].failure_reason.value_or("session failed");
            }
            if (scores[t]) repeat_scores.push_back(*scores[t]);
        }
        if (!repeat_scores.empty()) row.score = mean_of(repeat_scores);
        report.rows.push_back(std::move(row));
    }
    write_text(config.output_dir / "run.json", to_json(report).dump(2) + "\n");
    return report;
}

std::optional<ReportFormat> parse_format(std::string_view name) {
    if (name == "table") return ReportFormat::table;
    if (name == "csv") return ReportFormat::csv;
    if (name == "json") return ReportFormat::json;
    return std::nullopt;
}

std::string render_table(const std::vector<SystemSummary>& systems) {
    const std::vector<std::string> header = {"System", "CE", "CU", "PC", "PQ", "Gen. Success"};
    std::vector<std::vector<std::string>> rows;
    for (const auto& s : systems) {
        std::vector<std::string> r{s.label};
        if (s.means) {
            for (double v : {s.means->ce, s.means->cu, s.means->pc, s.means->pq}) r.push_back(fixed2(v));
        } else {
            r.insert(r.end(), 4, "-");
        }
        r.push_back(s.success_rate ? percent(*s.success_rate) : "-");
        rows.push_back(std::move(r));
    }
    std::vector<std::size_t> width(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) {
        width[c] = header[c].size();
        for (const auto& r : rows) width[c] = std::max(width[c], r[c].size());
    }
    auto line = [&](const std::vector<std::string>& cells) {
        std::string out = "|";
        for (std::size_t c = 0; c < cells.size(); ++c)
            out += " " + cells[c] + std::string(width[c] - cells[c].size(), ' ') + " |";
        return out + "\n";
    };
    std::string out = line(header);
    out += "|";
    for (auto w : width) out += std::string(w + 2, '-') + "|";
    out += "\n";
    for (const auto& r : rows) out += line(r);
    return out;
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<std::string> csv_split(std::string_view line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

}  // namespace

nlohmann::json to_json(const EvalReport& report) {
    auto rows = nlohmann::json::array();
    for (const auto& r : report.rows) {
        nlohmann::json j{{"index", r.index}, {"success", r.success}, {"score", nullptr}, {"failure_reason", nullptr}};
        if (r.score) j["score"] = {{"ce", r.score->ce}, {"cu", r.score->cu}, {"pc", r.score->pc}, {"pq", r.score->pq}};
        if (r.failure_reason) j["failure_reason"] = *r.failure_reason;
        rows.push_back(std::move(j));
    }
    const auto agg = report.aggregate();
    nlohmann::json a{{"success_rate", agg.success_rate}, {"means", nullptr}};
    if (agg.means) a["means"] = {{"ce", agg.means->ce}, {"cu", agg.means->cu}, {"pc", agg.means->pc}, {"pq", agg.means->pq}};
    return {{"system", report.system_label}, {"rows", std::move(rows)}, {"aggregate", std::move(a)}};
}

EvalReport report_from_json(const nlohmann::json& j) {
    EvalReport r;
    r.system_label = j.at("system").get<std::string>();
    for (const auto& row : j.at("rows")) {
        EvalRow e;
        e.index = row.at("index").get<int>();
        e.success = row.at("success").get<bool>();
        if (row.contains("score") && !row["score"].is_null()) {
            const auto& s = row["score"];
            e.score = AestheticsScore{s.at("ce").get<double>(), s.at("cu").get<double>(), s.at("pc").get<double>(),
                                      s.at("pq").get<double>()};
        }
        if (row.contains("failure_reason") && !row["failure_reason"].is_null())
            e.failure_reason = row["failure_reason"].get<std::string>();
        r.rows.push_back(std::move(e));
    }
    return r;
}

EvalReport report_from_csv(std::string_view text) {
    EvalReport r;
    std::istringstream in{std::string(text)};
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        const auto f = csv_split(line);
        if (f.size() != 8) throw std::invalid_argument("csv row has " + std::to_string(f.size()) + " fields");
        r.system_label = f[0];
        if (f[1] == "mean") continue;
        EvalRow e;
        e.index = std::stoi(f[1]);
        e.success = f[2] == "true";
        if (!f[3].empty())
            e.score = AestheticsScore{std::stod(f[3]), std::stod(f[4]), std::stod(f[5]), std::stod(f[6])};
        if (!f[7].empty()) e.failure_reason = f[7];
        r.rows.push_back(std::move(e));
    }
    return r;
}

std::string render_report(const EvalReport& report, ReportFormat format) {
    switch (format) {
        case ReportFormat::table:
            return render_table(report.rows.empty() ? std::vector<SystemSummary>{}
                                                    : std::vector<SystemSummary>{summarize(report)});
        case ReportFormat::json:
            return to_json(report).dump(2) + "\n";
        case ReportFormat::csv: {
            std::string out = "system,index,success,ce,cu,pc,pq,failure_reason\n";
            const std::string label = csv_field(report.system_label);
            for (const auto& r : report.rows) {
                out += label + "," + std::to_string(r.index) + "," + (r.success ? "true" : "false");
                if (r.score)
                    out += "," + full(r.score->ce) + "," + full(r.score->cu) + "," + full(r.score->pc) + "," +
                           full(r.score->pq);
                else
                    out += ",,,,";
                out += "," + csv_field(r.failure_reason.value_or("")) + "\n";
            }
            if (!report.rows.empty()) {
                const auto agg = report.aggregate();
                out += label + ",mean," + percent(agg.success_rate);
                if (agg.means)
                    out += "," + fixed2(agg.means->ce) + "," + fixed2(agg.means->cu) + "," + fixed2(agg.means->pc) +
                           "," + fixed2(agg.means->pq);
                else
                    out += ",,,,";
                out += ",\n";
            }
            return out;
        }
    }
    return {};
}

std::vector<SystemSummary> summaries_from_json(const nlohmann::json& j) {
    std::vector<SystemSummary> out;
    for (const auto& s : j.at("systems")) {
        SystemSummary sum;
        sum.label = s.at("label").get<std::string>();
        if (s.contains("ce") && !s["ce"].is_null())
            sum.means = AestheticsScore{s.at("ce").get<double>(), s.at("cu").get<double>(), s.at("pc").get<double>(),
                                        s.at("pq").get<double>()};
        if (s.contains("success_rate") && !s["success_rate"].is_null())
            sum.success_rate = s["success_rate"].get<double>();
        out.push_back(std::move(sum));
    }
    return out;
}

}  // namespace ensemble::eval
