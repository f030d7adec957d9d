#pragma once
// Command-line entry point and run manifests.
//
// Subcommands: synth, ingest, sample, train, gridsearch, eval, ablate,
// explain. One JSON config file carries per-module sections (synth, sampler,
// model, train, grid); flags override the file. Each artifact-producing
// command writes a manifest next to its outputs with the effective config
// and content hashes, so identical runs are byte-comparable.
//
// Exit codes: 0 success, 2 usage, 3 invalid data or config, 4 other errors.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace pathgrade {

// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

struct RunManifest {
    std::string command;
    nlohmann::json config;  // effective config after flag overrides
    std::optional<std::uint64_t> seed;
    std::map<std::string, std::string> inputs;   // path -> content hash
    std::map<std::string, std::string> outputs;  // path -> content hash

    void add_input(const std::string& path) { inputs[path] = sha256_file(path); }
    void add_output(const std::string& path) { outputs[path] = sha256_file(path); }
    nlohmann::json to_json() const;
    void write(const std::string& path) const;
};

int cli_run(const std::vector<std::string>& args);

}  // namespace pathgrade
