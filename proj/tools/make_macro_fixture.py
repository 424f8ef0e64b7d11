#!/usr/bin/env python3
"""Builds data/macro_synthetic.csv: 40 variables in the macro-panel schema.

A stationary low-Tucker-rank VAR path is simulated with the tarnet CLI and
each column is integrated so that its transform code maps it back to the
simulated values. After transformation the panel has 194 rows, enough for
104 training rows and 90 rolling forecasts.

usage: make_macro_fixture.py path/to/tarnet [output.csv]
"""
import csv
import math
import subprocess
import sys
import tempfile
from pathlib import Path

N, P, ROWS_AFTER = 40, 4, 194
CODES = [1, 2, 5, 4, 6, 3, 5, 2]


def cumsum(xs, start):
    out, acc = [start], start
    for x in xs:
        acc += x
        out.append(acc)
    return out


def levels(series, code):
    """Raw column whose transform is a scaled copy of the simulated values."""
    order = (code - 1) % 3
    if code == 1:
        return series
    if code == 4:
        return [100.0 * math.exp(0.1 * v) for v in series]
    scale = {2: 1.0, 3: 0.1, 5: 0.01, 6: 0.001}[code]
    x = [scale * v for v in series[order:]]
    for _ in range(order):
        x = cumsum(x, 0.0)
    if code in (5, 6):
        return [100.0 * math.exp(v) for v in x]
    return x


def main():
    cli = sys.argv[1]
    out = Path(sys.argv[2] if len(sys.argv) > 2 else "data/macro_synthetic.csv")
    with tempfile.TemporaryDirectory() as tmp:
        sim = Path(tmp) / "sim.csv"
        t_eff = ROWS_AFTER + 2 - P
        subprocess.run([cli, "simulate", "--n", str(N), "--p", str(P), "--ranks", "4,3,2", "--t", str(t_eff),
                        "--seed", "2024", "--out", str(sim)], check=True, stdout=subprocess.DEVNULL)
        with sim.open() as f:
            rows = list(csv.reader(f))[1:]
    cols = [[float(r[j]) for r in rows] for j in range(N)]
    codes = [CODES[j % len(CODES)] for j in range(N)]
    data = [levels(c, code) for c, code in zip(cols, codes)]
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([f"x{j + 1:02d}" for j in range(N)])
        w.writerow(codes)
        for t in range(len(data[0])):
            w.writerow([repr(col[t]) for col in data])


if __name__ == "__main__":
    main()
