"""
Generation metrics: BLEU, distinct-n, language legality
=======================================================

The three numbers reported for every system.  BLEU follows the
corpus-level recipe (13a tokenization, clipped n-gram precisions,
brevity penalty, floor smoothing); distinct-n measures diversity;
language legality measures how much of the output is even in the
target language — the quantity that collapses under forgetting.
"""

import math

from crossdial import corpus_bleu, distinct_report, language_legality

# -- BLEU identities ---------------------------------------------------------------

refs = ["det er et godt svar", "en hund løber hjem nu"]
perfect = corpus_bleu(refs, refs)
print("identical corpora -> score", perfect.score, "bp", perfect.bp)

# -- brevity penalty ----------------------------------------------------------------

short = corpus_bleu(["the cat"], ["the cat sat"])
print("\n'the cat' vs 'the cat sat':")
print("  unigram precision:", short.precisions[0])
print("  brevity penalty  :", short.bp, "(= exp(-1/2) =", round(math.exp(-0.5), 6), ")")
print("  score            :", round(short.score, 2))

# orders with no hypothesis n-grams (here: 3- and 4-grams) are excluded
# from the geometric mean instead of zeroing the score
print("  raw precisions   :", short.precisions)

# -- clipping ----------------------------------------------------------------------

clipped = corpus_bleu(["the the the the"], ["the cat"])
print("\nrepetition is clipped: p1 =", clipped.precisions[0], "(only one 'the' in the reference)")

# -- distinct-n ---------------------------------------------------------------------

dull = ["ja ja ja ja", "ja ja ja ja"]
varied = ["det ved jeg ikke", "måske i morgen tidlig"]
print("\ndistinct-1/2, dull  :", distinct_report(dull))
print("distinct-1/2, varied:", distinct_report(varied))

# -- language legality ----------------------------------------------------------------

target_vocab = frozenset("det ved jeg ikke måske godt".split())
hyps = ["det ved jeg ikke", "maybe det not godt"]
print("\nlegality:", language_legality(hyps, target_vocab).legality, "% of tokens are target-language")
