"""Regenerate the CSV fixtures under fixtures/.

iris.csv and wine.csv are exported from the copies bundled with scikit-learn.

tone.csv is a seeded synthetic stand-in with the layout of the classic
tone-perception data (150 trials; stretch ratio vs. tuned ratio): one
near-flat "octave" line and one near-diagonal "partial matching" line that
cross around a stretch ratio of 2.  The original measurements are not
redistributable from here; drop the real file in place of tone.csv (same two
column names) to run the tone checks against it.
"""

import csv
import pathlib

import numpy as np
from sklearn.datasets import load_iris, load_wine

OUT = pathlib.Path(__file__).resolve().parent.parent / "fixtures"


def write_iris():
    d = load_iris()
    names = ["sepal_length", "sepal_width", "petal_length", "petal_width"]
    with open(OUT / "iris.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(names + ["species"])
        for x, y in zip(d.data, d.target):
            w.writerow([repr(float(v)) for v in x] + [d.target_names[y]])


def write_wine():
    d = load_wine()
    names = [
        n.replace("/", "_").replace("od280_od315_of_diluted_wines", "od280_od315")
        for n in d.feature_names
    ]
    cultivars = ["barolo", "grignolino", "barbera"]
    with open(OUT / "wine.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(names + ["cultivar"])
        for x, y in zip(d.data, d.target):
            w.writerow([repr(float(v)) for v in x] + [cultivars[y]])


def write_tone(seed=20150601):
    rng = np.random.default_rng(seed)
    n, n_flat = 150, 70
    rows = []
    for i in range(n):
        x = rng.uniform(1.4, 3.0)
        if i < n_flat:
            y = 1.82215 + 0.09076 * x + rng.normal(0.0, 0.03)
        else:
            y = -0.12111 + 1.05584 * x + rng.normal(0.0, 0.05)
        rows.append((round(x, 4), round(y, 4)))
    order = rng.permutation(n)
    with open(OUT / "tone.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["stretchratio", "tuned"])
        for i in order:
            w.writerow([repr(rows[i][0]), repr(rows[i][1])])


if __name__ == "__main__":
    OUT.mkdir(exist_ok=True)
    write_iris()
    write_wine()
    write_tone()
