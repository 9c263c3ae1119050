"""
Fixed-prompt formats with sentinel tokens
=========================================

The same dialogue pair rendered two ways: the plain layout (context in,
response out) and the prompted layout, which wraps both sides in the
span-corruption format the model saw during pretraining.  Keeping the
fine-tuning format identical to the pretraining format is the whole
trick for preserving target-language fluency.
"""

from crossdial import DEFAULT_TEMPLATE, DialoguePair, extract_response, format_plain, format_prompted

pair = DialoguePair(context="hvordan går det", response="det går godt", language="da")

# -- the two layouts ------------------------------------------------------------

plain = format_plain(pair)
print("plain source:   ", plain.source)
print("plain target:   ", plain.target)

prompted = format_prompted(pair)
print("\nprompted source:", prompted.source)
print("prompted target:", prompted.target)

# the source always ends with the first sentinel: the model is asked to
# "fill in the blank" exactly as in span-corruption pretraining
print("\nsource ends with", repr(DEFAULT_TEMPLATE.sentinel0), "->", prompted.source.endswith(DEFAULT_TEMPLATE.sentinel0))

# -- extraction round trip ---------------------------------------------------------

recovered = extract_response(prompted.target)
print("\nextracted response:", repr(recovered))
print("round trip exact:  ", recovered == pair.response)

# -- extraction is total ------------------------------------------------------------

# undertrained models emit malformed sentinel sequences; extraction never
# raises, it just keeps as much of the answer as it can
print("\nmalformed generations still extract:")
for text in (
    "<extra_id_0> kun en halv sætning",          # second sentinel missing
    "ingen sentinel overhovedet",                 # no sentinels at all
    "<extra_id_0> a <extra_id_0> b <extra_id_1>", # doubled first sentinel
):
    print(f"  {text!r:48} -> {extract_response(text)!r}")
