#!/usr/bin/env python3
"""Regenerate the bundled FIGlet font set and the reference render fixtures.

Reference renders come from pyfiglet (a Python port of FIGlet). Output rows
are right-padded to equal width, which is the canonical form produced by the
Rust renderer. Run from the repository root:

    python3 scripts/gen_figlet_fixtures.py
"""
import hashlib
import os
import random
import shutil

import pyfiglet

CURATED = """
3x5 4max 5lineoblique alligator alligator2 avatar banner banner3 banner4
basic bell big big_money-ne bigchief block chunky colossal computer contrast
def_leppard doom drpepper epic fender fuzzy georgi16 georgia11 graffiti
hollywood kban larry3d lcd lean nancyj nancyj-fancy o8 ogre puffy rectangles
red_phoenix roman rounded santa_clara script serifcap shadow shimrod slant
small small_shadow small_slant smscript smshadow smslant speed standard
starwars stop straight swan thick thin univers usaflag
""".split()

CHARSET = "ABCDEFGHJKMNPQRSTUVWXYZ23456789"
SEED = 20240611
N_ANSWERS = 100

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FONT_DIR = os.path.join(ROOT, "crates", "core", "fonts")
FIX_DIR = os.path.join(ROOT, "crates", "core", "tests", "fixtures", "figlet")
SRC_DIR = os.path.join(os.path.dirname(pyfiglet.__file__), "fonts")


def render(font, text, smush_mode=None):
    fig = pyfiglet.Figlet(font=font, width=10**9)
    if smush_mode is not None:
        fig.Font.smushMode = smush_mode
    rows = str(fig.renderText(text)).split("\n")[:-1]
    width = max(len(r) for r in rows)
    return "".join(r.ljust(width) + "\n" for r in rows)


def main():
    os.makedirs(FONT_DIR, exist_ok=True)
    os.makedirs(FIX_DIR, exist_ok=True)
    for name in CURATED:
        shutil.copyfile(os.path.join(SRC_DIR, name + ".flf"), os.path.join(FONT_DIR, name + ".flf"))

    rng = random.Random(SEED)
    answers = []
    for _ in range(N_ANSWERS):
        n = rng.randint(7, 15)
        answers.append("".join(rng.choice(CHARSET) for _ in range(n)))
    with open(os.path.join(FIX_DIR, "oracle_answers.txt"), "w") as f:
        f.write("".join(a + "\n" for a in answers))

    with open(os.path.join(FIX_DIR, "oracle_digests.tsv"), "w") as f:
        for font in CURATED:
            for a in answers:
                digest = hashlib.sha256(render(font, a).encode("utf-8")).hexdigest()
                f.write(f"{font}\t{a}\t{digest}\n")

    for text in ("HI", "RSKGB07"):
        with open(os.path.join(FIX_DIR, f"standard_{text}.txt"), "w") as f:
            f.write(render("standard", text))

    # Forced layouts: 0 = full width, 64 = kerning, 128 = universal smushing.
    with open(os.path.join(FIX_DIR, "forced_layouts.tsv"), "w") as f:
        for font in ("standard", "big", "slant", "banner", "univers"):
            for mode, label in ((0, "full"), (64, "kern"), (128, "universal")):
                for a in answers[:10]:
                    digest = hashlib.sha256(render(font, a, mode).encode("utf-8")).hexdigest()
                    f.write(f"{font}\t{label}\t{a}\t{digest}\n")


if __name__ == "__main__":
    main()
