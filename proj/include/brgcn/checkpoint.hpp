#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "brgcn/autodiff.hpp"

namespace brgcn {

// Checkpoint text format, version 1:
//
//   brgcn-checkpoint 1
//   params <count>
//   <name> <rank> <dim>...      one header line per parameter
//   <v0> <v1> ...               values, row-major, shortest round-trip form
//
// Names contain no whitespace. Values are written with std::to_chars and read
// with std::from_chars, so a save/load cycle is bit-exact.
inline constexpr int kCheckpointVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void write_checkpoint(std::ostream& out, const ParameterSet& params);
void write_checkpoint(const std::filesystem::path& path, const ParameterSet& params);

NamedTensors read_checkpoint(std::istream& in, const std::string& source = "<stream>");
NamedTensors read_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint values into `params`. Every parameter must be present
/// with a matching shape and the checkpoint may not carry extra entries.
void load_into(const NamedTensors& saved, ParameterSet& params);

}  // namespace brgcn
