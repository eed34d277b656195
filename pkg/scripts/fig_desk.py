"""Desk-scale versions of the two figure experiments.

    python scripts/fig_desk.py fig1-desk --steps 5000 --out runs/fig1
    python scripts/fig_desk.py fig2-desk-small --out runs/fig2

Prints the half-life windows, peak errors at each window end and the pooled
difference-quotient ratio per eta.  Full-size presets take hours on one CPU;
--steps caps the run.
"""

import argparse

from fprinciple import experiment as ex


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("preset", choices=ex.preset_names())
    ap.add_argument("--steps", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out")
    args = ap.parse_args(argv)

    cfg = ex.load_preset(args.preset)
    if args.steps:
        cfg.flow.steps = args.steps
        cfg.flow.stride = max(1, min(cfg.flow.stride, args.steps // 50))
    if args.seed is not None:
        cfg.seed = args.seed
    res = ex.run(cfg, args.out)
    s = res.summary

    print(f"{cfg.name}: N={s['n_params']}, final loss {s['final_training_loss']:.3e}")
    print("peaks (xi):", " ".join(f"{p['xi']:.3f}" for p in s["peaks"]))
    for t, errs in s.get("peak_errors_at_window_ends", []):
        print(f"  t={t:10.4f}  peak errors " + " ".join(f"{e:.2f}" for e in errs))
    if "pooled_difference_ratio" in s:
        print("eta      pooled |dL+|/|dL|")
        for eta, r in zip(s["etas"], s["pooled_difference_ratio"]):
            print(f"  {eta:7.3f}  {r:.3e}")
    for name, c in s["checks"].items():
        print(f"{name}: {'pass' if c['passed'] else 'FAIL'}")


if __name__ == "__main__":
    main()
