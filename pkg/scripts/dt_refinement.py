"""Early-time behaviour of the accept-mse run as dt shrinks.

Integrates only the first stretch of training with every step checkpointed,
then reports the first half-life window and the peak errors at its end.  If
the numbers settle as dt -> 0 they describe the continuous flow rather than
the Euler discretization.
"""

import argparse
import math

from fprinciple import experiment as ex


def early(dt: float, horizon: float):
    cfg = ex.load_preset("accept-mse")
    cfg.flow.dt = dt
    cfg.flow.steps = math.ceil(horizon / dt)
    cfg.flow.stride = 1
    cfg.flow.dense_steps = 0
    return ex.run(cfg).summary


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dts", default="0.01,0.001,0.0002")
    ap.add_argument("--horizon", type=float, default=0.05)
    args = ap.parse_args(argv)
    print("dt        T2        lowest  highest")
    for dt in (float(v) for v in args.dts.split(",")):
        s = early(dt, args.horizon)
        if "initial_stage" not in s:
            print(f"{dt:<9g} no half-life within horizon")
            continue
        t2 = s["initial_stage"]["window"][1]
        errs = s["initial_stage"]["peak_errors_at_T2"]
        print(f"{dt:<9g} {t2:<9.4g} {errs[0]:.3f}   {errs[-1]:.3f}")


if __name__ == "__main__":
    main()
