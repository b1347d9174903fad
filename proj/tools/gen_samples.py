#!/usr/bin/env python3
"""Regenerates the bundled sample corpora and the synthetic property table.

The strings are assembled from common polymer backbone fragments; property
values are smooth functions of fragment counts plus noise, clipped to the
published DFT ranges. Output is deterministic for a given --seed.
"""

import argparse
import csv
import random
from pathlib import Path

BACKBONE = [
    "CC", "C(C)", "C(C)(C)", "c1ccc(cc1)", "c1ccc(cc1)O", "C(=O)O", "OC(=O)",
    "C(=O)N", "NC(=O)", "C(F)(F)", "C(Cl)", "C(C#N)", "O", "S", "S(=O)(=O)",
    "c1ccc2cc(ccc2c1)", "C1CCC(CC1)", "[Si](C)(C)O", "C=C", "C(c1ccccc1)",
    "c1ccc(s1)", "CCO", "CCCC", "C(=O)c1ccc(cc1)C(=O)", "N(C)", "C(Br)",
]

CAPS = ["C", "O", "N", "Cl", "F", "Br", "CC", "OC", "C(=O)O", "c1ccccc1", "[NH3+]", "C#N"]

# Rough per-fragment contributions for each property (arbitrary units).
PROPS = ["Eat", "Xc", "Egc", "Egb", "Eea", "Ei", "nc", "eps"]
RANGES = {
    "Eat": (-7.0, -5.0), "Xc": (0.10, 100.0), "Egc": (0.02, 10.0), "Egb": (0.4, 10.0),
    "Eea": (0.4, 5.0), "Ei": (4.0, 10.0), "nc": (1.0, 3.0), "eps": (3.0, 9.0),
}


def polymer(rng):
    k = rng.randint(2, 5)
    frags = [rng.choice(BACKBONE) for _ in range(k)]
    return "*" + "".join(frags) + "*", frags


def molecule(rng):
    k = rng.randint(1, 3)
    parts = [rng.choice(CAPS)] + [rng.choice(BACKBONE) for _ in range(k)] + [rng.choice(CAPS)]
    return "".join(parts)


def unique(gen, n, rng):
    seen, out = set(), []
    while len(out) < n:
        s = gen(rng)
        key = s[0] if isinstance(s, tuple) else s
        if key in seen:
            continue
        seen.add(key)
        out.append(s)
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "data")
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    args.out.mkdir(parents=True, exist_ok=True)

    polymers = unique(polymer, 200, rng)
    (args.out / "polymer_sample.txt").write_text("".join(s + "\n" for s, _ in polymers))
    molecules = unique(molecule, 300, rng)
    (args.out / "molecule_sample.txt").write_text("".join(s + "\n" for s in molecules))

    weights = {p: [rng.uniform(-1, 1) for _ in BACKBONE] for p in PROPS}
    rows = []
    for s, frags in unique(polymer, 240, random.Random(args.seed + 1)):
        row = {"smiles": s}
        observed = [p for p in PROPS if rng.random() < 0.45] or [rng.choice(PROPS)]
        for p in PROPS:
            if p not in observed:
                row[p] = ""
                continue
            lo, hi = RANGES[p]
            z = sum(weights[p][BACKBONE.index(f)] for f in frags) / len(frags)
            t = min(max(0.5 + 0.4 * z + rng.gauss(0, 0.03), 0.0), 1.0)
            row[p] = f"{lo + t * (hi - lo):.4f}"
        rows.append(row)
    with open(args.out / "dft_sample.csv", "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["smiles"] + PROPS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


if __name__ == "__main__":
    main()
