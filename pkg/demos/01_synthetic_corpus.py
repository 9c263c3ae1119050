"""
Two-language synthetic dialogue corpus
======================================

Builds the deterministic toy corpus pair used throughout: an auxiliary
language with plenty of training data and a target language with only a
handful of examples.  The two languages share structure (the same
context-to-response mapping rules) but have disjoint token inventories,
so structure can transfer across languages while surface vocabulary
cannot.
"""

from crossdial import SyntheticSpec, generate_synthetic_bilingual, sample_few_shot

# -- generate ----------------------------------------------------------------

spec = SyntheticSpec(
    vocab_size_per_language=24,
    n_train_aux=64,
    n_fewshot_tgt=8,
    n_valid=16,
    n_test=16,
    template_count=3,
    seed=13,
)
bundle = generate_synthetic_bilingual(spec)

print("auxiliary train pairs:", len(bundle.aux_train))
print("target few-shot pairs:", len(bundle.tgt_fewshot))
print("languages:", bundle.aux_train.language, "/", bundle.tgt_fewshot.language)

# -- what a pair looks like ----------------------------------------------------

pair = bundle.aux_train.pairs[0]
print("\ncontext: ", pair.context)
print("response:", pair.response)

# the response is derived from the context by a per-template rule
# (reverse or copy the content tokens), so a model can actually learn it
tgt = bundle.tgt_fewshot.pairs[0]
print("\ntarget-language pair:")
print("context: ", tgt.context)
print("response:", tgt.response)

# -- disjoint vocabularies -------------------------------------------------------

overlap = bundle.aux_vocabulary & bundle.tgt_vocabulary
print("\naux vocab size:", len(bundle.aux_vocabulary))
print("tgt vocab size:", len(bundle.tgt_vocabulary))
print("overlap:", sorted(overlap))  # empty: no token belongs to both languages

# -- deterministic few-shot subsets ------------------------------------------------

few = sample_few_shot(bundle.aux_train, k=4, seed=0)
again = sample_few_shot(bundle.aux_train, k=4, seed=0)
print("\nfew-shot draw is reproducible:", few.pairs == again.pairs)
print("subset contexts:", [p.context for p in few.pairs])
