"""Regenerate the collaborative-filtering benchmark programs.

Observations are drawn as y_j ~ N(cf_k, 1) from fixed latent factors using
numpy's Philox generator with a fixed seed, so the files are reproducible.
"""
import argparse
from pathlib import Path

import numpy as np

# latent factors (a, b, c) with cf_k = a . b + c
TRUTH = {
    1: ([1.0], [1.0], 1.0),
    2: ([3.0, 2.0], [5.0, 4.0], 2.0),
    3: ([1.0, -2.0, 3.0], [2.0, 3.0, -1.0], 2.0),
}
N_OBS = 10
SEED = 20240


def program(k: int, ys) -> str:
    lines = [f"# Latent factor model with k = {k}; {len(ys)} noisy ratings of cf."]
    for i in range(1, k + 1):
        lines.append(f"a{i} = gauss(1, 5)")
        lines.append(f"b{i} = gauss(1, 5)")
    lines.append("c = gauss(0, 10)")
    prods = " + ".join(f"a{i}*b{i}" for i in range(1, k + 1))
    lines.append(f"cf = {prods} + c")
    for y in ys:
        lines.append("y = cf + gauss(0, 1)")
        lines.append(f"observe(y == {y!r})")
    return "\n".join(lines) + "\n"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("outdir", type=Path)
    args = ap.parse_args()
    rng = np.random.Generator(np.random.Philox(SEED))
    for k, (a, b, c) in TRUTH.items():
        cf = float(np.dot(a, b) + c)
        ys = [round(float(v), 4) for v in cf + rng.standard_normal(N_OBS)]
        (args.outdir / f"cf_k{k}.prob").write_text(program(k, ys))
        print(k, cf, ys, np.mean(ys))


if __name__ == "__main__":
    main()
