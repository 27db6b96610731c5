#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "qadb/nn.hpp"

namespace qadb {

inline constexpr char kCheckpointMagic[4] = {'Q', 'A', 'D', 'B'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (all integers little-endian): magic "QADB", u32 version, then one
// record per tensor: u32 name length, name bytes, u32 rank, u64 dims, f64
// payload. The first record, "model.shape", holds (n_qubits, n_classes,
// per_qubit_angles); parameters follow in for_each_parameter order.
std::string serialize_checkpoint(const HybridModel& model);
HybridModel deserialize_checkpoint(const std::string& bytes, const std::string& source = "<checkpoint>");

void save_checkpoint(const HybridModel& model, const std::filesystem::path& path);
HybridModel load_checkpoint(const std::filesystem::path& path);

}  // namespace qadb
