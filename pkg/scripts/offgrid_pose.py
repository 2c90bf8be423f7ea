"""Off-grid pose recovery: shaded queries at poses jittered by half a coarse
step, refined against a rendered database of each asymmetric mesh.

    python scripts/offgrid_pose.py --trials 25 --size 256 --step 20 --vstep 0.2
"""
import argparse
import time

import numpy as np

from curvsal import register, synthetic
from curvsal.config import Config
from curvsal.meshrender import Viewpoint, viewpoint_to_pose


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--trials", type=int, default=25, help="per mesh")
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--step", type=float, default=20.0, help="coarse h and a step (deg)")
    ap.add_argument("--vstep", type=float, default=0.2)
    ap.add_argument("--mode", default="MCS", choices=["CS", "MCS", "MFC"])
    ap.add_argument("--hog-mode", default="literal", choices=["literal", "centered", "cosine"])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    st, vs = args.step, args.vstep
    cfg = Config(image_size=args.size, h_step=st, a_step=st, v_min=0.6, v_max=1.2, v_step=vs,
                 fill_distance=0.6, query_mode=args.mode, hog_mode=args.hog_mode)
    rng = np.random.default_rng(args.seed)
    ok = tot = 0
    for name, make in synthetic.ASYMMETRIC.items():
        db = register.build_database(make(), cfg)
        for _ in range(args.trials):
            while True:
                h, a, v = db.viewpoints[rng.integers(len(db))].as_tuple()
                h += rng.choice([-st / 2, st / 2])
                a += rng.choice([-st / 2, st / 2])
                v += rng.choice([-vs / 2, vs / 2])
                if 10 <= h <= 170 and cfg.v_min <= v <= cfg.v_max:
                    break
            truth = Viewpoint.wrapped(h, a, v)
            img = synthetic.render_shaded(db.mesh, truth, cfg.image_size, db.pixel_scale)
            t0 = time.perf_counter()
            table, res = register.register_query(img, db, reference=viewpoint_to_pose(truth))
            e = res.viewpoint.as_tuple()
            top = table.viewpoints[table.order()[0]].as_tuple()
            dh, dv = abs(e[0] - h), abs(e[2] - v)
            da = abs((e[1] - truth.azimuth_a + 180) % 360 - 180)
            E = res.trace[-1]["E"]
            good = (dh <= 5 + 1e-9 and da <= 5 + 1e-9 and dv <= 0.05 + 1e-9
                    and res.converged and E is not None and E <= cfg.eps)
            ok += good
            tot += 1
            print(f"{name} true ({h:.0f},{truth.azimuth_a:.0f},{v:.2f}) top1 "
                  f"({top[0]:.0f},{top[1]:.0f},{top[2]:.2f}) est ({e[0]:.2f},{e[1]:.2f},{e[2]:.3f}) "
                  f"rounds {len(res.trace) - 1} {'OK' if good else 'FAIL'} "
                  f"{time.perf_counter() - t0:.1f}s", flush=True)
    print(f"success {ok}/{tot}")


if __name__ == "__main__":
    main()
