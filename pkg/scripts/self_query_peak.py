"""Correct-view peak on a 27-view database of each primitive mesh.

For every database view a shaded rendering is used as query; the trial succeeds
when the combined score at the generating view beats every view two or more
grid steps away.

    python scripts/self_query_peak.py --hog-mode literal --rep-mode best
"""
import argparse

from curvsal import register, synthetic
from curvsal.config import Config


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--hog-mode", default="literal", choices=["literal", "centered", "cosine"])
    ap.add_argument("--rep-mode", default="best", choices=["best", "one_sided", "two_sided"])
    ap.add_argument("--mode", default="MCS", choices=["CS", "MCS", "MFC"])
    ap.add_argument("--size", type=int, default=128)
    args = ap.parse_args()
    cfg = Config(image_size=args.size, h_step=60, a_step=120, v_min=0.6, v_max=1.2, v_step=0.3,
                 fill_distance=0.6, query_mode=args.mode, hog_mode=args.hog_mode,
                 rep_mode=args.rep_mode)
    vps = register.config_viewpoints(cfg)

    def index(vp):
        return round(vp.elevation_h / 60), round(vp.azimuth_a / 120), round((vp.distance_v - 0.6) / 0.3)

    def steps(a, b):
        da = abs(a[1] - b[1]) % 3
        return max(abs(a[0] - b[0]), min(da, 3 - da), abs(a[2] - b[2]))

    total = 0
    for name, make in synthetic.PRIMITIVES.items():
        db = register.build_database(make(), cfg)
        good = 0
        for k, vp in enumerate(vps):
            img = synthetic.render_shaded(db.mesh, vp, cfg.image_size, db.pixel_scale)
            q = register.query_features(img, cfg)
            S = register.score_views(q, db.features, db.stats, cfg, viewpoints=vps).s_combined
            far = [j for j in range(len(vps)) if steps(index(vps[j]), index(vp)) >= 2]
            rivals = [j for j in far if S[j] >= S[k]]
            good += not rivals
            if rivals:
                j = max(rivals, key=lambda j: S[j])
                print(f"  {name} {vp.as_tuple()} beaten by {vps[j].as_tuple()} "
                      f"S {S[k]:.3f} vs {S[j]:.3f}")
        print(f"{name}: {good}/{len(vps)}", flush=True)
        total += good
    print(f"total {total}/{len(vps) * len(synthetic.PRIMITIVES)}")


if __name__ == "__main__":
    main()
