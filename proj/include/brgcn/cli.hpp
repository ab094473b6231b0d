#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>

#include "brgcn/config.hpp"
#include "brgcn/hetgraph.hpp"
#include "brgcn/layer.hpp"

namespace brgcn {

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

/// Runs one subcommand: train-nc, train-lp, eval, ablate, export-attention or
/// validate-config. Messages go to `out`/`err`; artifacts to the configured
/// output directory.
int run(const std::string& subcommand, const std::filesystem::path& config_path, const ConfigEntries& overrides,
        std::ostream& out, std::ostream& err);

/// Command-line entry point.
int run_main(int argc, char** argv);

/// JSON document with the relation table, per-(node, relation) γ vectors and
/// per-node ψ matrices for each layer.
std::string attention_json(std::span<const AttentionTrace> traces, const HeteroGraph& graph);

}  // namespace brgcn
