"""Command-line driver.

    curvsal render MESH --out DB
    curvsal detect INPUT --mode {CS,MCS,MFC} --out DIR
    curvsal describe DB
    curvsal register QUERY DB --out DIR
    curvsal evaluate PAIRS.json --out report.csv

Exit codes: 0 success, 1 usage or parse error, 2 finished with warnings
(e.g. refinement did not converge), 3 I/O error.
"""
import argparse
import logging
import os
import sys

import numpy as np

from . import fileio, register
from .config import load_config
from PIL import Image

from .descriptor import (DescriptorStats, _b64, _unb64, descriptor_from_json, descriptor_to_json,
                         fit_stats)
from .errors import CurvsalError, FormatError, ParameterError
from .meshrender import (DepthImage, PoseTransform, Viewpoint, load_mesh, pca_normalize, save_mesh,
                         viewpoint_to_pose)
from .metrics import extract_points, hausdorff, intersection_percentage, write_report
from .saliency_depth import curvilinear_saliency_depth
from .saliency_image import to_intensity

log = logging.getLogger("curvsal")

EXIT_OK, EXIT_USAGE, EXIT_WARN, EXIT_IO = 0, 1, 2, 3
MANIFEST = "manifest.json"
DESCRIPTORS = "descriptors.json"
# settings that change the depth features stored by ``describe``
FEATURE_KEYS = ("deriv_sigma", "grid", "bins", "point_percentile")


class UsageError(CurvsalError):
    pass


# -- database on disk --------------------------------------------------------

def _persisted(cfg):
    # thread count must not leak into outputs (they are compared across runs)
    d = cfg.to_dict()
    d.pop("threads")
    return d


def cmd_render(mesh_path, out_dir, cfg):
    mesh, norm = pca_normalize(load_mesh(mesh_path))
    os.makedirs(out_dir, exist_ok=True)
    db = register.ViewDatabase(mesh, register.config_viewpoints(cfg), [], None,
                               register.resolve_pixel_scale(mesh, cfg), cfg, norm)
    save_mesh(db.mesh, os.path.join(out_dir, "mesh.obj"))
    depths = register._map(db.render, db.viewpoints, cfg.threads)
    views = []
    model = os.path.splitext(os.path.basename(mesh_path))[0]
    for i, (vp, depth) in enumerate(zip(db.viewpoints, depths)):
        stem = f"view_{i:04d}"
        fileio.write_depth(os.path.join(out_dir, stem + ".pfm"), depth.depth)
        rec = viewpoint_to_pose(vp).to_record(model, vp)
        rec["footprint"] = depth.pixel_scale
        fileio.write_json(os.path.join(out_dir, stem + ".json"), rec)
        views.append({"id": i, "depth": stem + ".pfm", "mask": stem + "_mask.pgm",
                      "pose": stem + ".json", "h": vp.elevation_h, "a": vp.azimuth_a,
                      "v": vp.distance_v})
    N = db.normalization
    fileio.write_json(os.path.join(out_dir, MANIFEST), {
        "format": 1, "model": model, "mesh": "mesh.obj", "pixel_scale": db.pixel_scale,
        "normalization": {"R": [float(x) for x in N.R.ravel()], "t": [float(x) for x in N.t]},
        "config": _persisted(cfg), "views": views})
    log.info("rendered %d views into %s", len(views), out_dir)
    return EXIT_OK


def _read_manifest(db_dir):
    path = os.path.join(db_dir, MANIFEST)
    m = fileio.read_json(path)
    try:
        views = m["views"]
        for v in views:
            Viewpoint(float(v["h"]), float(v["a"]), float(v["v"]))
            v["depth"], v["pose"]
        float(m["pixel_scale"]), m["mesh"], m["config"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed manifest ({exc!r})", path) from None
    if not views:
        raise FormatError("database has no views", path)
    return m


def _db_config(manifest, cfg):
    """User settings with the database's rendering and grid settings."""
    mc = manifest["config"]
    keep = ("image_size", "pixel_scale", "fill_distance", "projection",
            "h_start", "h_step", "a_step", "v_min", "v_max", "v_step")
    return cfg.updated(**{k: mc[k] for k in keep if k in mc})


def _load_view_depth(db_dir, view):
    z = fileio.read_depth(os.path.join(db_dir, view["depth"]))
    rec = fileio.read_json(os.path.join(db_dir, view["pose"]))
    return DepthImage(z, None, float(rec.get("footprint", 1.0)))


def cmd_describe(db_dir, cfg):
    m = _read_manifest(db_dir)
    cfg = _db_config(m, cfg)
    depths = [_load_view_depth(db_dir, v) for v in m["views"]]
    feats = register._map(lambda d: register.depth_features(d, cfg), depths, cfg.threads)
    stats = fit_stats([f.descriptor for f in feats]) if len(feats) > 1 else None
    fileio.write_json(os.path.join(db_dir, DESCRIPTORS), {
        "features": {k: getattr(cfg, k) for k in FEATURE_KEYS},
        "stats": stats.to_json() if stats else None,
        "views": [{"id": v["id"], "descriptor": descriptor_to_json(f.descriptor),
                   "points": _b64(f.points)} for v, f in zip(m["views"], feats)]})
    log.info("described %d views", len(feats))
    return EXIT_OK


def load_database(db_dir, cfg):
    """A :class:`register.ViewDatabase` from a rendered directory, reusing
    stored descriptors when they were computed with the same settings."""
    m = _read_manifest(db_dir)
    cfg = _db_config(m, cfg)
    mesh = load_mesh(os.path.join(db_dir, m["mesh"]))
    n = m.get("normalization", {})
    norm = (PoseTransform.from_rt(np.reshape(n["R"], (3, 3)), n["t"]) if n else PoseTransform())
    vps = [Viewpoint(float(v["h"]), float(v["a"]), float(v["v"])) for v in m["views"]]
    db = register.ViewDatabase(mesh, vps, [], None, float(m["pixel_scale"]), cfg, norm)
    dpath = os.path.join(db_dir, DESCRIPTORS)
    stored = fileio.read_json(dpath) if os.path.exists(dpath) else None
    if stored and stored.get("features") == {k: getattr(cfg, k) for k in FEATURE_KEYS} \
            and len(stored["views"]) == len(vps):
        db.features = [register.ViewFeatures(descriptor_from_json(v["descriptor"]),
                                             _unb64(v["points"]).reshape(-1, 2))
                       for v in stored["views"]]
        if stored["stats"]:
            db.stats = DescriptorStats.from_json(stored["stats"])
    else:
        if stored:
            log.warning("stored descriptors use other settings; recomputing")
        depths = [_load_view_depth(db_dir, v) for v in m["views"]]
        db.features = register._map(lambda d: register.depth_features(d, cfg), depths, cfg.threads)
    dims = {f.descriptor.data.size for f in db.features}
    if dims != {cfg.grid * cfg.grid * cfg.bins}:
        raise ParameterError(f"descriptor dimension mismatch: {sorted(dims)}")
    if db.stats is None:
        if len(db.features) > 1:
            db.stats = fit_stats([f.descriptor for f in db.features])
        else:
            dim = db.features[0].descriptor.data.size
            db.stats = DescriptorStats(np.zeros(dim), np.zeros((dim, dim)), 1.0)
    return db


# -- detection ---------------------------------------------------------------

def _is_depth(path):
    return path.lower().endswith(".pfm")


def _depth_input(path):
    z = fileio.read_depth(path)
    side = os.path.splitext(path)[0] + ".json"
    if os.path.exists(side):
        return DepthImage(z, None, float(fileio.read_json(side).get("footprint", 1.0)))
    log.warning("%s: no pose record with a pixel footprint; depth taken in pixel units", path)
    return DepthImage(z, None, 1.0)


def letterbox(img, size):
    """Fit ``img`` into a ``size`` square keeping its aspect ratio; the
    margin repeats the border so no artificial edge appears."""
    h, w = img.shape
    if (h, w) == (size, size):
        return img
    k = size / max(h, w)
    nh, nw = max(1, round(h * k)), max(1, round(w * k))
    small = np.asarray(Image.fromarray(img.astype(np.float32), mode="F")
                       .resize((nw, nh), Image.BICUBIC), dtype=np.float64)
    top, left = (size - nh) // 2, (size - nw) // 2
    out = np.pad(small, ((top, size - nh - top), (left, size - nw - left)), mode="edge")
    return np.clip(out, 0.0, 1.0)


def _intensity_input(path, size=None):
    img = to_intensity(fileio.read_image(path))
    return letterbox(img, size) if size else img


def cmd_detect(input_path, mode, out_dir, cfg):
    if _is_depth(input_path):
        if mode not in (None, "CS"):
            raise UsageError(f"depth input only supports mode CS, not {mode}")
        mode = "CS"
        smap = curvilinear_saliency_depth(_depth_input(input_path), cfg.deriv_sigma)
    else:
        mode = mode or cfg.query_mode
        smap = register.query_saliency(_intensity_input(input_path), cfg, mode)
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.splitext(os.path.basename(input_path))[0]
    fileio.write_saliency(os.path.join(out_dir, f"{stem}_{mode}"), smap,
                          {"mode": mode, "input": os.path.basename(input_path),
                           "deriv_sigma": cfg.deriv_sigma, "scales": cfg.scales})
    return EXIT_OK


# -- registration ------------------------------------------------------------

def _overlay(path, query_pts, view_pts, shape):
    rgb = np.zeros(shape + (3,), np.uint8)
    for pts, ch in ((view_pts, 1), (query_pts, 0)):
        p = np.round(np.asarray(pts).reshape(-1, 2)).astype(int)
        ok = (p[:, 0] >= 0) & (p[:, 0] < shape[1]) & (p[:, 1] >= 0) & (p[:, 1] < shape[0])
        rgb[p[ok, 1], p[ok, 0], ch] = 255
    Image.fromarray(rgb, mode="RGB").save(path)


def cmd_register(query_path, db_dir, out_dir, cfg, overlay=False):
    db = load_database(db_dir, cfg)
    cfg = db.cfg
    img = _intensity_input(query_path, cfg.image_size)
    q = register.query_features(img, cfg)
    table = register.score_views(q, db.features, db.stats, cfg, viewpoints=db.viewpoints)
    res = register.refine_pose(db, q, table, cfg)
    os.makedirs(out_dir, exist_ok=True)
    fileio.write_json(os.path.join(out_dir, "ranking.json"), {
        "query": os.path.basename(query_path), "query_mode": cfg.query_mode,
        "top": register.rank_views(table, min(cfg.top_k, len(table))),
        "views": [table.record(i) for i in table.order()]})
    out = res.to_json()
    # the database mesh is PCA-normalized; also report the pose of the input mesh
    orig = res.pose @ db.normalization
    out["pose_input_frame"] = {"R": [float(x) for x in orig.R.ravel()],
                               "t": [float(x) for x in orig.t]}
    fileio.write_json(os.path.join(out_dir, "pose.json"), out)
    if overlay:
        best = register.depth_features(db.render(res.viewpoint), cfg)
        _overlay(os.path.join(out_dir, "overlay.png"), q.points, best.points, img.shape)
    if not res.converged:
        log.warning("refinement did not converge; best pose so far written")
        return EXIT_WARN
    return EXIT_OK


# -- evaluation ----------------------------------------------------------------

def _points(path, cfg):
    if _is_depth(path):
        smap = curvilinear_saliency_depth(_depth_input(path), cfg.deriv_sigma)
    else:
        smap = register.query_saliency(_intensity_input(path), cfg)
    return extract_points(smap, cfg.point_percentile)


def cmd_evaluate(pairs_path, out_path, cfg):
    spec = fileio.read_json(pairs_path)
    pairs = spec.get("pairs") if isinstance(spec, dict) else None
    if not isinstance(pairs, list):
        raise FormatError("expected an object with a 'pairs' list", pairs_path)
    base = os.path.dirname(os.path.abspath(pairs_path))
    rows, failed = [], 0
    for p in pairs:
        row = {"query": p.get("query", ""), "view": p.get("view", "")}
        try:
            A = _points(os.path.join(base, row["query"]), cfg)
            B = _points(os.path.join(base, row["view"]), cfg)
            row["ip"] = intersection_percentage(A, B, cfg.eps_px)
            row["hd"] = hausdorff(A, B)
        except (OSError, CurvsalError) as exc:
            row["error"] = f"{type(exc).__name__}: {exc}".replace("\n", " ")
            failed += 1
        rows.append(row)
    write_report(out_path, rows, f"points: {cfg.point_percentile:g}th percentile + non-max "
                                 f"suppression; eps_px={cfg.eps_px:g}; mode={cfg.query_mode}")
    return EXIT_WARN if failed else EXIT_OK


# -- argument parsing ------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value settings file")
    common.add_argument("--threads", type=int, help="worker threads")
    common.add_argument("--eps-px", type=float, dest="eps_px", help="repeatability radius (px)")
    common.add_argument("--scales", type=int, help="pyramid levels for MCS/MFC")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any setting")
    common.add_argument("-v", "--verbose", action="count", default=0)

    ap = argparse.ArgumentParser(prog="curvsal", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render", parents=[common], help="render a view database")
    p.add_argument("mesh")
    p.add_argument("--out", required=True)
    p = sub.add_parser("detect", parents=[common], help="saliency maps of one input")
    p.add_argument("input")
    p.add_argument("--mode", choices=["CS", "MCS", "MFC"])
    p.add_argument("--out", required=True)
    p = sub.add_parser("describe", parents=[common], help="descriptors of a database")
    p.add_argument("db")
    p = sub.add_parser("register", parents=[common], help="rank views and refine the pose")
    p.add_argument("query")
    p.add_argument("db")
    p.add_argument("--mode", choices=["CS", "MCS", "MFC"], help="query detector")
    p.add_argument("--out", required=True)
    p.add_argument("--overlay", action="store_true", help="also write overlay.png")
    p = sub.add_parser("evaluate", parents=[common], help="IP/HD report for image pairs")
    p.add_argument("pairs")
    p.add_argument("--mode", choices=["CS", "MCS", "MFC"], help="detector for images")
    p.add_argument("--out", required=True)
    return ap


def _overrides(args):
    ov = {}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        ov[k.strip()] = v.strip()
    for k in ("threads", "eps_px", "scales"):
        if getattr(args, k, None) is not None:
            ov[k] = getattr(args, k)
    if getattr(args, "mode", None) and args.command in ("register", "evaluate"):
        ov["query_mode"] = args.mode
    return ov


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args))
        if args.command == "render":
            return cmd_render(args.mesh, args.out, cfg)
        if args.command == "detect":
            return cmd_detect(args.input, args.mode, args.out, cfg)
        if args.command == "describe":
            return cmd_describe(args.db, cfg)
        if args.command == "register":
            return cmd_register(args.query, args.db, args.out, cfg, args.overlay)
        return cmd_evaluate(args.pairs, args.out, cfg)
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    except CurvsalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
