"""Smoke test for the Python extension.

Builds the cdylib with cargo, copies it next to a temporary import path as
``selfish_matching.so`` and exercises the main entry points.

    python3 python/smoke.py [--no-build]
"""

import argparse
import json
import math
import pathlib
import shutil
import subprocess
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def build():
    subprocess.run(
        ["cargo", "build", "--release", "-p", "selfish-matching-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )


def load(tmp):
    lib = ROOT / "target" / "release" / "libselfish_matching_py.so"
    if not lib.exists():
        sys.exit(f"missing {lib}; run without --no-build")
    shutil.copy(lib, pathlib.Path(tmp) / "selfish_matching.so")
    sys.path.insert(0, tmp)
    import selfish_matching

    return selfish_matching


def check(sm):
    g = sm.MetricInstance.rt(3)
    assert g.positions == [0, 1, 2, 3, 6, 7, 8, 9]
    assert g.is_metric()
    opt = sm.consecutive_matching(g)
    bad = sm.line_pos_matching(g)
    assert bad.cost(g) / opt.cost(g) == 3.5
    assert bad.is_stable(g, 1.0)

    g2 = sm.MetricInstance.rt(2)
    poa, witness = sm.exact_poa(g2, 1.0)
    pos, _ = sm.exact_pos(g2, 1.0)
    assert (poa, pos) == (2.0, 1.0)
    assert witness.pairs == [(0, 3), (1, 2)]
    assert sm.count_alpha_stable(g2, 1.0) == 2

    ga = sm.MetricInstance.rt_alpha(2, 1.0, 0.01)
    start = sm.PerfectMatching(4, [(0, 1), (2, 3)])
    assert [e[:2] for e in start.unstable_edges(ga, 1.0)] == [(1, 2)]
    m, trace = sm.run_greedy(ga, 1.0)
    assert trace.flips == 1
    assert m == trace.final_matching
    assert m.pairs == [(0, 3), (1, 2)]
    assert abs(m.cost(ga) - 3.98) < 1e-12
    lemmas = json.loads(trace.check_lemmas())
    assert all(c["passed"] for c in lemmas.values())
    bound = json.loads(trace.cost_bound())
    assert bound["cost_passed"] and bound["chain_passed"]
    forest = json.loads(trace.forest_json())
    assert forest[0]["edge"] == [0, 3]

    rl = sm.MetricInstance.random_line(6, 7)
    assert sm.MetricInstance.from_json(rl.to_json()).positions == rl.positions
    _, c = sm.min_cost_matching(rl)
    assert math.isclose(c, sm.consecutive_matching(rl).cost(rl))

    assert sm.closed_form_effect(4, 1.0) == 2.25
    assert math.isclose(sm.balanced_tree_effect(3, 1.0), 1.8)

    rec = json.loads(sm.run_experiment("rt-alpha", 3, 1.0))
    assert rec["lemma_checks"]["lemmas"] and rec["ratio"] > 1.0
    tree = json.loads(sm.search_tree_effect(4, 1.0, 10))
    assert tree["within_bound"]

    try:
        sm.MetricInstance.complete([[0, 1, 5, 1], [1, 0, 1, 10], [5, 1, 0, 1], [1, 10, 1, 0]])
    except ValueError as e:
        assert "triangle" in str(e)
    else:
        raise AssertionError("non-metric input accepted")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--no-build", action="store_true")
    args = ap.parse_args()
    if not args.no_build:
        build()
    with tempfile.TemporaryDirectory() as tmp:
        check(load(tmp))
    print("python smoke: ok")


if __name__ == "__main__":
    main()
