#ifndef SEFI_CHECKPOINT_HPP
#define SEFI_CHECKPOINT_HPP

#include <cstdint>
#include <string>

#include <json.hpp>

#include "sefi/expander.hpp"

namespace sefi {

// Container layout (all integers little-endian):
//   bytes 0..4   magic "SEFI1"
//   bytes 5..8   uint32 length of the JSON metadata block
//   ...          UTF-8 JSON metadata
//   ...          raw float64 tensor payloads, in metadata["tensors"] order
//
// metadata keys: format_version, backend, d_text, n_pairs, initializer_word,
// step_count, train_config, loss_summary, dtype ("f64"), tensors (list of
// {name, shape}). Payloads cover the expander tensors in ExpanderParams
// declared order, then k_tokens, v_tokens, initializer_vector.
struct Checkpoint {
    int format_version = 1;
    std::string backend_name;
    int d_text = 0;
    int n_pairs = 0;
    ExpanderParams params;
    ExpandedTokenSet tokens;  // materialized expand() output at save time
    std::string initializer_word;
    Tensor initializer_vector;
    nlohmann::json train_config;
    int64_t step_count = 0;
    nlohmann::json loss_summary;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

uint64_t fnv1a64_file(const std::string& path);

}  // namespace sefi

#endif
