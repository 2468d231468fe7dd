"""Regenerate the checked-in CLI fixtures under tests/data.

The golden report is only frozen after its numbers agree with the
enumeration oracles; run ``python tests/make_fixtures.py`` from the repo root.
"""

import io
import sys
from contextlib import redirect_stdout
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from oracles import brute_hd95, enum_ece, enum_pece  # noqa: E402
from segcalib.cli import main  # noqa: E402
from segcalib.fileio import encode_pgm, encode_tensor, read_tensor  # noqa: E402

DATA = Path(__file__).parent / "data"


def golden_inputs():
    rng = np.random.default_rng(2024)
    ii, jj = np.indices((16, 16))
    y = np.zeros((16, 16), dtype=np.int64)
    y[(ii - 5) ** 2 + (jj - 5) ** 2 <= 12] = 1
    y[9:14, 8:14] = 2
    z = 3.0 * np.moveaxis(np.eye(3)[y], -1, 0) + rng.normal(0, 1.2, (3, 16, 16))
    p = np.exp(z - z.max(axis=0))
    p = (p / p.sum(axis=0)).astype(np.float32)
    return p, y


def verify(report, p, y):
    p = p.astype(np.float64)
    pred = p.argmax(axis=0)
    for row in report["per_class"]:
        c = row["class"]
        assert abs(row["pece"] - enum_pece(p[c], y == c)) <= 1e-6 * max(1, abs(row["pece"]))
        a, g = (pred == c).astype(np.uint8), (y == c).astype(np.uint8)
        assert abs(row["hd95"] - brute_hd95(a, g)) < 1e-5
        dice = 2 * np.sum(a & g) / (a.sum() + g.sum())
        assert abs(row["dsc"] - dice) < 1e-6
    fg = y != 0
    e = enum_ece(p.max(axis=0)[fg], (pred == y)[fg])
    assert abs(report["mean"]["ece"] - e) < 1e-6
    vals = []
    for c in range(3):
        sel = p[c] > 1e-3
        vals.append(enum_ece(p[c][sel], (y == c)[sel]))
    assert abs(report["mean"]["cece"] - np.mean(vals)) < 1e-6


def main_():
    import json

    DATA.mkdir(exist_ok=True)
    p, y = golden_inputs()
    (DATA / "golden_pred.calt").write_bytes(encode_tensor(p))
    (DATA / "golden_labels.pgm").write_bytes(encode_pgm(y))
    assert np.array_equal(read_tensor(DATA / "golden_pred.calt"), p)
    buf = io.StringIO()
    with redirect_stdout(buf):
        assert main(["metrics", str(DATA / "golden_pred.calt"), str(DATA / "golden_labels.pgm")]) == 0
    verify(json.loads(buf.getvalue()), p, y)
    (DATA / "golden_report.json").write_text(buf.getvalue())

    (DATA / "row.pgm").write_bytes(encode_pgm(np.array([[0, 1, 1, 1, 0]])))
    sq = np.zeros((9, 9), dtype=np.uint8)
    sq[2:7, 2:7] = 1
    (DATA / "square5.pgm").write_bytes(encode_pgm(sq))
    print("fixtures written to", DATA)


if __name__ == "__main__":
    main_()
