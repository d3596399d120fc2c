#pragma once

#include <string>

#include "dg/model.hpp"

namespace dg {

// Single-file container: 8-byte magic, u64 little-endian manifest size, JSON
// manifest (version field mandatory; per-parameter name/group/shape/dtype and
// byte offsets), then the raw little-endian f32 buffers in manifest order.
inline constexpr char kCheckpointMagic[8] = {'D', 'G', 'C', 'K', 'P', 'T', '0', '\n'};
inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ToyLdm<float>& model);
ToyLdm<float> load_checkpoint(const std::string& path);

// Prompt embeddings travel in the same container under group "prompt".
void save_embedding(const std::string& path, const TensorF& f);
TensorF load_embedding(const std::string& path);

}  // namespace dg
