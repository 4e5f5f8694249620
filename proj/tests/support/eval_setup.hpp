#pragma once

// Offline experiment configuration: scripted agents, stub synthesizer, stub scorer.

#include "ensemble/eval.hpp"
#include "ensemble/midi.hpp"
#include "support/scripts.hpp"
#include "test_support.hpp"

namespace eval_setup {

inline std::string stub_synth() {
    return "python3 " + ensemble::midi::shell_quote(testing::fixture("stub_synth.py").string());
}

inline std::string stub_bridge(const std::string& scores) {
    return "STUB_SCORES=" + scores + " python3 " +
           ensemble::midi::shell_quote(testing::fixture("stub_bridge.py").string());
}

inline ensemble::eval::EvalRunConfig offline(const std::filesystem::path& out, int max_iterations,
                                             nlohmann::json script = scripts::session(true)) {
    ensemble::eval::EvalRunConfig c;
    for (int i = 1; i <= 20; ++i) c.prompt_indices.push_back(i);
    c.session_config.max_iterations = max_iterations;
    c.session_config.logical_clock = true;
    c.output_dir = out;
    c.synth_cmd = stub_synth();
    c.bridge_cmd = stub_bridge("7,7,4,7");
    c.backend_factory = [script](int, int) { return ensemble::llm::ScriptedBackend::from_json(script); };
    return c;
}

}  // namespace eval_setup
