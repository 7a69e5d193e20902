"""Quick end-to-end check of the Python bindings.

Build and install first:

    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/tftlab-*.whl

Then run `python python/smoke_test.py` from the repository root.
"""

import math
import pathlib
import sys

import tftlab

ROOT = pathlib.Path(__file__).resolve().parent.parent


def check(name, ok, detail=""):
    print(f"{'ok  ' if ok else 'FAIL'} {name} {detail}".rstrip())
    if not ok:
        check.failed += 1


check.failed = 0


def paths_and_transforms():
    w = tftlab.JumpPath.parse("0 1.0 2 0.25 1 0.75 2")
    check("path round-trip", str(tftlab.JumpPath.parse(str(w))) == str(w))
    check("path accessors", w.x0 == 0 and len(w) == 2 and w.states() == [0, 1, 2])
    r = tftlab.Transform.time_reversal()
    back = r.apply(r.apply(w))
    worst = max(abs(a - b) for a, b in zip(back.holding_durations(), w.holding_durations()))
    check("reversal is an involution", r.involution() == "yes" and worst < 1e-12, f"{worst:.1e}")
    c = tftlab.Transform.holding_cyclic()
    check("cyclic shift is not", c.involution() == "no")
    restored = c.inverse().apply(c.apply(w))
    check("cyclic inverse", restored.states() == w.states())
    try:
        tftlab.JumpPath.parse("0 1.0 1 2.0 1")
        check("bad path rejected", False)
    except tftlab.TftlabError:
        check("bad path rejected", True)


def driven_process():
    energies = [[0.0, 1.0, 2.0], [0.5, 0.0, 1.5], [1.5, 0.5, 0.0], [2.0, 1.0, 0.0]]
    p = tftlab.Process.ldb(energies, 1.0, breakpoints=[0.0, 0.25, 0.5, 0.75, 1.0])
    check("process shape", p.states == 3 and p.horizon == 1.0)
    law = p.law_at(1.0)
    check("law sums to one", abs(sum(law) - 1.0) < 1e-12)
    paths = p.sample(200, 3)
    check("sampling is seeded", [str(x) for x in paths] == [str(x) for x in p.sample(200, 3)])
    check("densities finite", all(math.isfinite(p.log_density(x)) for x in paths))

    pair = tftlab.ScorePair.dissipated_work(p, tftlab.Transform.time_reversal())
    s = pair.forward(paths[0])
    check("score split", abs(s["value"] - s["boundary"] - s["current"]) < 1e-12)
    grid = pair.mgf([-1.0, -0.5, 0.0], 20000, 1)
    check("work MGF identity", all(pt["pass"] for pt in grid["points"]))
    integral = pair.integral(20000, 1)
    check("integral identity", integral["pass"], f"{integral['estimate']:.4f}")
    ratio = pair.distributional_test("work", 20000, 1)
    check("work ratio test", ratio["verdict"] == "pass")

    ep = tftlab.ScorePair.entropy_production(p, tftlab.Transform.holding_cyclic())
    fwd, bwd = ep.sample_scores(1000, 2)
    check("score samples", len(fwd) == len(bwd) == 1000)


def exact_and_birth_death():
    rep = tftlab.enumerate_exact([0.5, 0.5], [[[0.7, 0.3], [0.4, 0.6]]])
    xs = sorted(pt["x"] for pt in rep["support"])
    check("exact support", rep["pass"] and abs(xs[0] - math.log(0.75)) < 1e-12)

    fe = tftlab.bd_constant(2.0, 0.5, 40.0)
    check("constant-bias series", fe["reliable"] and math.isfinite(fe["estimate"]))
    scan = tftlab.bd_strong(0.25, 1.0, [50, 100, 200])
    check("strong bias diverges", scan["verdict"] == "divergent")


def config_runner():
    code, summary, tables = tftlab.run_config((ROOT / "configs" / "two_state.toml").read_text())
    check("config run", code == 0 and "mgf.csv" in tables, str(sorted(tables)))
    code, summary, _ = tftlab.run_config('kind = "enumerate"\ncolour = 1\n')
    check("invalid config", code == 3 and "error" in summary)


paths_and_transforms()
driven_process()
exact_and_birth_death()
config_runner()
print("smoke test", "passed" if check.failed == 0 else f"failed ({check.failed})")
sys.exit(1 if check.failed else 0)
