"""Compare the numba and interpreted-Python kernel backends.

Each backend runs in its own interpreter because the choice is made at import
time via SREQMC_BACKEND. The numba timing excludes compilation (a warm-up
call runs first). Both backends consume identical random streams, so the
reported work values must agree.

    python benchmarks/bench_backends.py --sites 8 --sweeps 200
"""
import argparse
import json
import os
import subprocess
import sys

WORKLOAD = r"""
import json, sys, time
from sreqmc.lattice import build_lattice, ModelParams, FiniteT, Projector
from sreqmc.noneq import Schedule, side_walk
from sreqmc.sse import engine

args = json.loads(sys.argv[1])
g = build_lattice([args["sites"]], "periodic")
p = ModelParams(h=1.0)
mode = FiniteT(args["beta"]) if args["m"] == 0 else Projector(args["m"])

def one():
    cfg = engine.init_config(g, p, mode, seed=1, thermalize=0)
    t0 = time.perf_counter()
    engine.equilibrate(cfg, 0.0, args["sweeps"])
    t1 = time.perf_counter()
    res = side_walk(cfg, Schedule(d_lambda=args["dlambda"]), walker_seed=2)
    t2 = time.perf_counter()
    return t1 - t0, t2 - t1, res.work

one()  # warm-up: compile or load the numba cache
sweep, walk, work = one()
print(json.dumps({"sweep_s": sweep, "walk_s": walk, "work": work}))
"""


def run_backend(name, params):
    env = dict(os.environ, SREQMC_BACKEND=name)
    proc = subprocess.run([sys.executable, "-c", WORKLOAD, json.dumps(params)], env=env,
                          capture_output=True, text=True)
    if proc.returncode:
        sys.exit(f"{name} backend failed:\n{proc.stderr}")
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sites", type=int, default=8)
    ap.add_argument("--beta", type=float, default=2.0)
    ap.add_argument("--m", type=int, default=0, help="projector length (0 = finite temperature)")
    ap.add_argument("--sweeps", type=int, default=200)
    ap.add_argument("--dlambda", type=float, default=1e-3)
    args = ap.parse_args()
    params = vars(args)

    results = {name: run_backend(name, params) for name in ("numba", "python")}
    print(f"{'backend':<8} {'sweeps/s':>12} {'walk (s)':>10} {'work':>22}")
    for name, r in results.items():
        print(f"{name:<8} {args.sweeps / r['sweep_s']:>12.1f} {r['walk_s']:>10.4f} {r['work']:>22.15g}")
    nb, py = results["numba"], results["python"]
    print(f"speed-up: sweeps x{py['sweep_s'] / nb['sweep_s']:.0f}, walk x{py['walk_s'] / nb['walk_s']:.0f}")
    if nb["work"] != py["work"]:
        print("WARNING: backends disagree on the work value", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
