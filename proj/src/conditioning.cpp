#include "sefi/conditioning.hpp"

#include <fstream>

#include "sefi/errors.hpp"

namespace sefi {

namespace {

PromptSpec tokenize_prompt(const std::string& text, const Backend& backend, bool require_placeholder) {
    const BackendDescriptor& d = backend.descriptor();
    std::vector<int> word_ids = backend.tokenize(text);

    PromptSpec spec;
    spec.template_text = text;
    spec.token_ids.reserve(static_cast<size_t>(d.seq_len));
    spec.token_ids.push_back(backend.bos_id());

    std::vector<int> identity_seen;
    for (int id : word_ids) {
        if (static_cast<int>(spec.token_ids.size()) >= d.seq_len - 1)
            throw input_error("prompt overflows L=" + std::to_string(d.seq_len) + ": \"" + text + "\"");
        int identity = -1;
        if (backend.is_placeholder_id(id, &identity)) {
            for (int seen : identity_seen)
                if (seen == identity)
                    throw input_error("duplicated placeholder for identity " + std::to_string(identity + 1) +
                                      " in \"" + text + "\"");
            identity_seen.push_back(identity);
            spec.placeholder_positions.push_back(static_cast<int>(spec.token_ids.size()));
        }
        spec.token_ids.push_back(id);
    }
    spec.token_ids.push_back(backend.eos_id());
    spec.prompt_len = static_cast<int>(spec.token_ids.size());
    while (static_cast<int>(spec.token_ids.size()) < d.seq_len) spec.token_ids.push_back(backend.pad_id());

    if (!identity_seen.empty()) {
        // identities must be 0..k-1, each exactly once; reorder positions by identity
        std::vector<int> by_identity(identity_seen.size(), -1);
        for (size_t i = 0; i < identity_seen.size(); ++i) {
            int ident = identity_seen[i];
            if (ident < 0 || ident >= static_cast<int>(identity_seen.size()) || by_identity[static_cast<size_t>(ident)] != -1)
                throw input_error("placeholders must be V* or a dense V1*..Vk* set, got \"" + text + "\"");
            by_identity[static_cast<size_t>(ident)] = spec.placeholder_positions[i];
        }
        spec.placeholder_positions = by_identity;
    }
    if (require_placeholder && spec.placeholder_positions.empty())
        throw input_error("prompt has no placeholder (expected \"V*\"): \"" + text + "\"");
    return spec;
}

}  // namespace

PromptSpec build_prompt(const std::string& template_text, const Backend& backend) {
    return tokenize_prompt(template_text, backend, true);
}

PromptSpec build_plain_prompt(const std::string& text, const Backend& backend) {
    return tokenize_prompt(text, backend, false);
}

Var assemble_input_embeddings(Graph& g, const PromptSpec& prompt, const Backend& backend,
                              const std::vector<Var>& slot_vectors) {
    const BackendDescriptor& d = backend.descriptor();
    if (static_cast<int>(slot_vectors.size()) != prompt.identity_count())
        throw config_error("expected " + std::to_string(prompt.identity_count()) + " slot vector(s), got " +
                           std::to_string(slot_vectors.size()));
    Tensor base({d.seq_len, d.d_text});
    for (int pos = 0; pos < d.seq_len; ++pos) {
        Tensor row = backend.token_embedding(prompt.token_ids[static_cast<size_t>(pos)]);
        for (int c = 0; c < d.d_text; ++c) base.at(pos, c) = row.data[static_cast<size_t>(c)];
    }
    std::vector<std::pair<int, Var>> rows;
    for (int ident = 0; ident < prompt.identity_count(); ++ident) {
        Var slot = slot_vectors[static_cast<size_t>(ident)];
        const Tensor& tv = g.value(slot);
        if (tv.numel() != d.d_text)
            throw config_error("slot vector dim " + std::to_string(tv.numel()) + " != d_text " +
                               std::to_string(d.d_text));
        if (!tv.all_finite()) throw input_error("slot vector contains non-finite values");
        rows.emplace_back(prompt.placeholder_positions[static_cast<size_t>(ident)],
                          g.reshape(slot, {d.d_text}));
    }
    return g.splice_rows(g.constant(std::move(base)), rows);
}

Var encode_with_slot(Graph& g, const PromptSpec& prompt, const Backend& backend,
                     const std::vector<Var>& slot_vectors) {
    Var emb = assemble_input_embeddings(g, prompt, backend, slot_vectors);
    return backend.encode_text(g, emb);
}

Tensor encode_with_slot(const PromptSpec& prompt, const Backend& backend,
                        const std::vector<Tensor>& slot_vectors) {
    Graph g;
    std::vector<Var> vars;
    vars.reserve(slot_vectors.size());
    for (const Tensor& t : slot_vectors) vars.push_back(g.constant(t));
    return g.value(encode_with_slot(g, prompt, backend, vars));
}

TokenSetVars token_set_constants(Graph& g, const ExpandedTokenSet& set) {
    TokenSetVars v;
    v.k_tokens = g.constant(set.k_tokens);
    v.v_tokens = g.constant(set.v_tokens);
    v.n_pairs = set.n_pairs();
    return v;
}

ConditionPairVars conditions_for_stage(Graph& g, const std::vector<TokenSetVars>& sets,
                                       const PromptSpec& prompt, int stage, const Backend& backend) {
    if (sets.empty()) throw config_error("conditions_for_stage: no token sets");
    for (const TokenSetVars& s : sets)
        if (stage < 0 || stage >= s.n_pairs)
            throw input_error("stage " + std::to_string(stage) + " out of range for n_pairs=" +
                              std::to_string(s.n_pairs));
    std::vector<Var> k_slots, v_slots;
    for (const TokenSetVars& s : sets) {
        k_slots.push_back(g.slice_dim(s.k_tokens, 0, stage, stage + 1));
        v_slots.push_back(g.slice_dim(s.v_tokens, 0, stage, stage + 1));
    }
    ConditionPairVars pair;
    pair.k_condition = encode_with_slot(g, prompt, backend, k_slots);
    pair.v_condition = encode_with_slot(g, prompt, backend, v_slots);
    pair.stage = stage;
    return pair;
}

int pair_index_for_timestep(const StageSchedule& s, int t) {
    return s.n_stages - 1 - stage_of(s, t);
}

ExpandedTokenSet progressive_schedule(ProgressiveMode mode, int count, const ExpandedTokenSet& base,
                                      const IDToken& initializer, const ExpandedTokenSet* other) {
    int slots = 2 * base.n_pairs();
    if (count < 0 || count > slots)
        throw input_error("progressive count " + std::to_string(count) + " outside [0," +
                          std::to_string(slots) + "]");
    if (mode == ProgressiveMode::substitute) {
        if (other == nullptr) throw input_error("substitute mode requires a second token set");
        if (other->n_pairs() != base.n_pairs() || other->d_text() != base.d_text())
            throw input_error("substitute token set shape mismatch");
    }
    if (initializer.vector.numel() != base.d_text())
        throw input_error("initializer token dim mismatch");

    ExpandedTokenSet out = base;
    auto slot_row = [&](ExpandedTokenSet& s, int slot) -> double* {
        // consumption order K1,V1,K2,V2,...
        int pair = slot / 2;
        Tensor& t = (slot % 2 == 0) ? s.k_tokens : s.v_tokens;
        return t.ptr() + static_cast<int64_t>(pair) * t.cols();
    };
    if (mode == ProgressiveMode::add) {
        for (int slot = count; slot < slots; ++slot) {
            double* dst = slot_row(out, slot);
            for (int c = 0; c < base.d_text(); ++c) dst[c] = initializer.vector.data[static_cast<size_t>(c)];
        }
    } else {
        ExpandedTokenSet src = *other;
        for (int slot = 0; slot < count; ++slot) {
            const double* from = slot_row(src, slot);
            double* dst = slot_row(out, slot);
            for (int c = 0; c < base.d_text(); ++c) dst[c] = from[c];
        }
    }
    return out;
}

std::vector<std::string> load_template_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open template file: " + path);
    std::vector<std::string> templates;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        size_t first = line.find_first_not_of(" \t");
        if (first == std::string::npos) continue;
        if (line[first] == '#') continue;
        size_t last = line.find_last_not_of(" \t");
        templates.push_back(line.substr(first, last - first + 1));
    }
    if (templates.empty()) throw input_error("template file has no templates: " + path);
    return templates;
}

}  // namespace sefi
