#!/usr/bin/env python3
"""Reference gestalt ratios from Python's difflib.SequenceMatcher(None, a, b).

Includes long right-hand strings (>= 200 chars) so the popular-element
heuristic is exercised. Ratios are written with repr() precision.
"""
import difflib
import os
import random

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
OUT = os.path.join(ROOT, "crates", "core", "tests", "fixtures", "difflib_ratios.tsv")

rng = random.Random(7)
rows = []
for i in range(300):
    alpha = rng.choice(["AB", "ABC", "ABCDEFGH", "ABCDEFGHJKMNPQRSTUVWXYZ23456789"])
    la = rng.randint(0, 30)
    lb = rng.randint(0, 30) if i < 200 else rng.randint(200, 400)
    a = "".join(rng.choice(alpha) for _ in range(la))
    b = "".join(rng.choice(alpha) for _ in range(lb))
    rows.append((a, b, difflib.SequenceMatcher(None, a, b).ratio()))
with open(OUT, "w") as f:
    for a, b, r in rows:
        f.write(f"{a}\t{b}\t{r!r}\n")
asym = [(a, b) for a, b, _ in rows[:200]
        if difflib.SequenceMatcher(None, a, b).ratio() != difflib.SequenceMatcher(None, b, a).ratio()]
print(len(asym), asym[:1])
