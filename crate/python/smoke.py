"""Smoke test for the Python bindings: python python/smoke.py"""

from fractions import Fraction
from pathlib import Path

import qrobust

DATA = Path(__file__).resolve().parent.parent / "data"


def main():
    r = qrobust.solve_dimacs((DATA / "fig.cnf").read_text())
    assert r["lower"] == r["upper"] == 2, r
    assert r["witness"]["1"] is True

    r = qrobust.solve_mbv((DATA / "prog1.mbv").read_text())
    assert r["lower"] == 1 and r["chance_bits"] == 32, r
    assert r["inputs"]["command"] != 2

    r = qrobust.solve_mbv((DATA / "prog2.mbv").read_text(), mode="relax", relax_count=40, timeout=60)
    exact = 2**32 - 9001
    assert r["lower"] <= exact <= r["upper"] <= r["lower"] * 2**40, r

    merge = (DATA / "merge.qimp").read_text()
    r = qrobust.qrse(merge, threshold="1/2")
    assert r["verdict"] == "found" and r["chi_lower"] == Fraction(1, 2), r
    r = qrobust.qrse(merge, threshold="1", merge=True)
    assert r["verdict"] == "found" and r["chi_lower"] == 1, r
    assert qrobust.brute_force_qr(merge) == 1

    try:
        qrobust.qrse("input a 1 controlled;\nskip;\n")
    except ValueError as e:
        assert "target" in str(e)
    else:
        raise AssertionError("a program without a target must be rejected")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
