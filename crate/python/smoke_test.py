"""Smoke test for the mgdeform Python module.

Install first:  pip install --no-build-isolation -e crates/py
Run:            python3 python/smoke_test.py
"""

import json
import math
import tempfile
from pathlib import Path

import mgdeform

ROOT = Path(__file__).resolve().parent.parent


def check(cond, msg):
    if not cond:
        raise SystemExit(f"FAIL: {msg}")
    print(f"ok: {msg}")


def main():
    for n in (0, 1, -2, 3):
        check(mgdeform.index_of(mgdeform.monomial_symbol(n, 64)) == n, f"index of e^({n}i theta)")

    pts = mgdeform.grid_points(16, 32)
    t = mgdeform.pompeiu(16, 32, [1.0 + 0j] * len(pts))
    err = max(abs(v - complex(x, -y)) for v, (x, y) in zip(t, pts))
    check(err < 1e-12, f"T(1) = conj(z) (err {err:.1e})")

    text = (ROOT / "configs" / "zero_data_negative_index.toml").read_text()
    canonical = mgdeform.parse_config(text)
    check(mgdeform.parse_config(canonical) == canonical, "config canonical form is stable")
    try:
        mgdeform.parse_config('[metric]\nkind = "nope"\n')
        check(False, "unknown metric kind rejected")
    except ValueError as e:
        check("line 2" in str(e), "unknown metric kind rejected with position")

    report = mgdeform.validate(text)
    check(report["positivity_ok"] and report["coordinate_ok"], "surface hypotheses hold")

    with tempfile.TemporaryDirectory() as out:
        summary = mgdeform.run(text, out)
        check(summary["identity_flow"], "zero data with negative index gives the identity flow")
        lines = (Path(out) / "trace.jsonl").read_text().splitlines()
        check(len(lines) == summary["flow"]["steps"], "one trace line per step")
        json.loads(lines[-1])

    cfg = canonical.replace("index = -1", "index = 1").replace('kind = "zero"', 'kind = "cosine"\nmode = 2\nphase = 0.0')
    flow = mgdeform.Flow(cfg)
    check(flow.index == 1, "winding-one tangent field has index 1")
    while not flow.finished:
        rec = flow.step()
    check(math.isclose(flow.t, 0.02), "flow reaches t0")
    check(rec["projected_dimension"] == 1 and rec["fixed_point"] < 1e-10, "one-parameter family fixing x0")
    rows = flow.snapshot()
    check(len(rows) == 1 + 16 * 32 and len(rows[0]) == 9, "snapshot has one row per node")
    print("all smoke checks passed")


if __name__ == "__main__":
    main()
