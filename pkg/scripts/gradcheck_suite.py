"""Finite-difference gradient checks for every op and every assembled toy model (f64)."""
import argparse
import time

from toflow.gradsuite import run_suite

if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--skip-models", action="store_true")
    args = p.parse_args()
    t0 = time.perf_counter()
    worst = 0.0
    for e in run_suite(samples=args.samples, models=not args.skip_models):
        worst = max(worst, e.result.max_rel_err)
        flag = "ok  " if e.result.ok(args.tol) else "FAIL"
        print(f"{flag} {e.name:32s} max rel err {e.result.max_rel_err:.2e}  {e.seconds:5.1f}s", flush=True)
    print(f"worst {worst:.2e}, total {time.perf_counter() - t0:.1f}s")
