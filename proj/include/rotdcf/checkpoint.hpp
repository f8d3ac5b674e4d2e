// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

#include "rotdcf/network.hpp"

namespace rotdcf {

/// Sections, in order:
///   arch     canonical ArchSpec text
///   basis    per decomposed layer: layer, L, K, K_alpha, N_theta (u32 each)
///   meta     string key/value pairs
///   tensors  every Param value by name, f64 with a shape header
void save_checkpoint(const Network& net, const std::string& path, const std::map<std::string, std::string>& meta = {});

struct LoadedCheckpoint {
  Network net;
  std::map<std::string, std::string> meta;
};

/// Rebuilds the network and restores every parameter bit for bit. With
/// `expected` set, a different stored ArchSpec is an error.
LoadedCheckpoint load_checkpoint(const std::string& path, const ArchSpec* expected = nullptr);

}  // namespace rotdcf
