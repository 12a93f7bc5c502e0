#!/usr/bin/env python3
# The four answer-quality metrics on increasingly dissimilar sentence pairs.

from chatgan.data import tokenize
from chatgan.metrics import METRIC_NOTES, bleu4, f_measure, meteor_lite, rouge_l

CASES = [
    ("well it was nice seeing you", "well it was nice seeing you"),
    ("well it was good seeing you", "well it was nice seeing you"),
    ("i do not know truly", "i do not know exactly"),
    ("what did they look like", "you should not change your mind"),
]

print(f"{'candidate':34} {'reference':30} {'BLEU4':>7} {'ROUGE':>7} {'F':>7} {'METEOR':>7}")
for cand_text, ref_text in CASES:
    cand, ref = tokenize(cand_text), tokenize(ref_text)
    print(f"{cand_text:34} {ref_text:30} "
          f"{bleu4(cand, ref):7.3f} {rouge_l(cand, ref):7.3f} "
          f"{f_measure(cand, ref):7.3f} {meteor_lite(cand, ref):7.3f}")

print("\nscoring conventions:", METRIC_NOTES)

# word order matters differently per metric
a = tokenize("the cat sat on the mat")
b = tokenize("on the mat the cat sat")
print("\nreordered clause:")
print(f"  BLEU4 {bleu4(a, b):.3f}  ROUGE-L {rouge_l(a, b):.3f}  "
      f"F {f_measure(a, b):.3f}  METEOR {meteor_lite(a, b):.3f}")
