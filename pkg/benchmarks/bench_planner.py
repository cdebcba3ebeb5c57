"""Time the compiled BFS kernel against the pure-Python fallback.

Both bodies expand states in the same order, so besides the timing table
this doubles as an end-to-end equivalence check: any status, plan or node
count mismatch aborts the run.

    python3 benchmarks/bench_planner.py [--quick]
"""

import argparse
import importlib
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from sokotl import levels  # noqa: E402
from sokotl import planner  # noqa: E402
from sokotl.planner import _pure  # noqa: E402


def load_compiled():
    try:
        return importlib.import_module("sokotl.planner._core")
    except ImportError:
        return None


def solve_with(impl, level, node_budget=planner.DEFAULT_NODE_BUDGET):
    packed = planner.pack_level(level)
    return impl.solve_packed(*packed, node_budget)


def time_impl(impl, level_list, repeats=3):
    best = float("inf")
    results = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        results = [solve_with(impl, lv) for lv in level_list]
        best = min(best, time.perf_counter() - t0)
    return best, results


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true",
                    help="fewer, shallower levels")
    args = ap.parse_args()

    compiled = load_compiled()
    if compiled is None:
        print("compiled kernel not built; timing pure fallback only")

    if args.quick:
        plan = ((1, 8, 20), (2, 6, 25), (3, 3, 25))
    else:
        plan = ((1, 10, 40), (2, 8, 40), (3, 6, 40))

    print(f"{'boxes':>5} {'levels':>6} {'pure ms':>9} {'compiled ms':>12} "
          f"{'speedup':>8}")
    for boxes, count, max_len in plan:
        constraints = levels.GenConstraints(max_len=max_len)
        lset = levels.generate(seed=500 + boxes, box_count=boxes,
                               count=count, constraints=constraints)
        pure_s, pure_res = time_impl(_pure, lset.levels)
        if compiled is None:
            print(f"{boxes:>5} {count:>6} {pure_s * 1e3:>9.1f} "
                  f"{'n/a':>12} {'n/a':>8}")
            continue
        comp_s, comp_res = time_impl(compiled, lset.levels)
        for lv, a, b in zip(lset.levels, pure_res, comp_res):
            if a != b:
                raise SystemExit(
                    f"implementations disagree on {lv.id}: {a} vs {b}")
        print(f"{boxes:>5} {count:>6} {pure_s * 1e3:>9.1f} "
              f"{comp_s * 1e3:>12.1f} {pure_s / comp_s:>7.1f}x")


if __name__ == "__main__":
    main()
