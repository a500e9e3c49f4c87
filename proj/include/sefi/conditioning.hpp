#ifndef SEFI_CONDITIONING_HPP
#define SEFI_CONDITIONING_HPP

#include <optional>
#include <string>
#include <vector>

#include "sefi/backend.hpp"
#include "sefi/expander.hpp"
#include "sefi/graph.hpp"
#include "sefi/schedule.hpp"

namespace sefi {

struct PromptSpec {
    std::string template_text;
    std::vector<int> token_ids;              // exactly L, incl. bos/eos/padding
    std::vector<int> placeholder_positions;  // slot index per identity, identity-ordered
    int prompt_len = 0;                      // bos..eos inclusive (loss option #2 window)

    int identity_count() const { return static_cast<int>(placeholder_positions.size()); }
};

// Template must contain "V*" exactly once (single identity) or "V1*".."Vk*"
// each exactly once (multi identity). Throws input_error on violations.
PromptSpec build_prompt(const std::string& template_text, const Backend& backend);
// same tokenization path but placeholders are optional (unconditional prompt,
// plain-text encodes)
PromptSpec build_plain_prompt(const std::string& text, const Backend& backend);

// Input-embedding matrix for a prompt: embedding-table rows with each
// placeholder row replaced by its slot vector. Gradient reaches only the
// slot vectors. slot_vectors.size() must equal identity_count().
Var assemble_input_embeddings(Graph& g, const PromptSpec& prompt, const Backend& backend,
                              const std::vector<Var>& slot_vectors);

Var encode_with_slot(Graph& g, const PromptSpec& prompt, const Backend& backend,
                     const std::vector<Var>& slot_vectors);
// no-grad convenience
Tensor encode_with_slot(const PromptSpec& prompt, const Backend& backend,
                        const std::vector<Tensor>& slot_vectors);

// expanded token matrices living on a graph (leaves during training,
// constants during sampling)
struct TokenSetVars {
    Var k_tokens;  // [n_pairs, d_text]
    Var v_tokens;
    int n_pairs = 0;
};

TokenSetVars token_set_constants(Graph& g, const ExpandedTokenSet& set);

// Two encoder passes: slot <- k_tokens[stage] and slot <- v_tokens[stage].
// One token set per declared identity.
ConditionPairVars conditions_for_stage(Graph& g, const std::vector<TokenSetVars>& sets,
                                       const PromptSpec& prompt, int stage, const Backend& backend);

// Sampling-order pair index: pair 0 conditions the highest-noise stage.
int pair_index_for_timestep(const StageSchedule& s, int t);

enum class ProgressiveMode { add, substitute };

// Token consumption order is stage-major, K before V: K1,V1,K2,V2,...
// add: first `count` slots from base, rest pinned to the initializer token.
// substitute: first `count` slots replaced by `other`'s tokens.
ExpandedTokenSet progressive_schedule(ProgressiveMode mode, int count, const ExpandedTokenSet& base,
                                      const IDToken& initializer,
                                      const ExpandedTokenSet* other = nullptr);

// template files: UTF-8, one template per line, '#' comments and blank lines skipped
std::vector<std::string> load_template_file(const std::string& path);

}  // namespace sefi

#endif
