"""On-disk formats: PFM float maps, PGM masks, PNG/PGM images and JSON records.

PFM files are written little-endian (scale -1.0), rows bottom to top as the
format prescribes. Depth background (+inf in memory) is stored as the largest
finite float32 with a companion 8-bit PGM mask. Orientation fields have two
components but PFM only knows 1 or 3 channels, so they are written as a
3-channel ``PF`` map whose third channel is zero.
"""
import json
import os

import numpy as np
from PIL import Image

from .errors import FormatError
from .saliency_depth import SaliencyMap

FLOAT32_MAX = float(np.finfo(np.float32).max)


def write_pfm(path, data):
    a = np.asarray(data, dtype=np.float64)
    if a.ndim == 2:
        tag, channels = b"Pf", 1
    elif a.ndim == 3 and a.shape[2] in (2, 3):
        tag, channels = b"PF", 3
        if a.shape[2] == 2:
            a = np.concatenate([a, np.zeros(a.shape[:2] + (1,))], axis=2)
    else:
        raise ValueError("PFM needs an (H, W), (H, W, 2) or (H, W, 3) array")
    h, w = a.shape[:2]
    body = np.ascontiguousarray(a[::-1].astype("<f4"))
    with open(path, "wb") as fh:
        fh.write(tag + b"\n" + f"{w} {h}\n".encode() + b"-1.0\n")
        fh.write(body.tobytes())
    return channels


def read_pfm(path):
    """Returns float64 ``(H, W)`` or ``(H, W, 3)``."""
    with open(path, "rb") as fh:
        tag = fh.readline().strip()
        if tag not in (b"Pf", b"PF"):
            raise FormatError("not a PFM file", path)
        try:
            w, h = (int(x) for x in fh.readline().split())
            scale = float(fh.readline().strip())
        except ValueError:
            raise FormatError("malformed PFM header", path) from None
        channels = 1 if tag == b"Pf" else 3
        dtype = "<f4" if scale < 0 else ">f4"
        raw = np.frombuffer(fh.read(), dtype=dtype)
    if raw.size != w * h * channels:
        raise FormatError(f"expected {w * h * channels} samples, found {raw.size}", path)
    a = raw.reshape((h, w, channels) if channels == 3 else (h, w))[::-1]
    return a.astype(np.float64)


def write_pgm(path, mask):
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(path, format="PPM")


def read_pgm_mask(path):
    return np.asarray(Image.open(path)) > 0


def write_depth(path, depth):
    """Depth PFM plus ``<stem>_mask.pgm``; returns the mask path."""
    depth = np.asarray(depth, dtype=np.float64)
    fg = np.isfinite(depth)
    write_pfm(path, np.where(fg, depth, FLOAT32_MAX))
    mpath = mask_path(path)
    write_pgm(mpath, fg)
    return mpath


def mask_path(depth_path):
    stem, _ = os.path.splitext(depth_path)
    return stem + "_mask.pgm"


def read_depth(path):
    """Depth map with +inf on background (mask file if present, else the
    float32 sentinel)."""
    z = read_pfm(path)
    if z.ndim != 2:
        raise FormatError("depth PFM must have one channel", path)
    mpath = mask_path(path)
    if os.path.exists(mpath):
        fg = read_pgm_mask(mpath)
        if fg.shape != z.shape:
            raise FormatError("mask size differs from depth size", mpath)
    else:
        fg = z < 0.5 * FLOAT32_MAX
    return np.where(fg, z, np.inf)


def read_image(path):
    """Gray or color image as an array (integer dtype preserved)."""
    try:
        img = Image.open(path)
        img.load()
    except OSError as exc:
        raise FormatError(f"cannot read image ({exc})", path) from None
    if img.mode in ("I;16", "I;16B", "I;16L", "I"):
        return np.asarray(img).astype(np.uint16)
    if img.mode not in ("L", "RGB", "RGBA"):
        img = img.convert("RGB")
    return np.asarray(img)


def write_image(path, img):
    """Save a [0, 1] float image as 8-bit gray PNG/PGM."""
    a = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    Image.fromarray(np.round(a * 255).astype(np.uint8), mode="L").save(path)


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON ({exc.msg} at line {exc.lineno})", path) from None


def write_saliency(prefix, smap, header=None):
    """``<prefix>_value.pfm``, ``<prefix>_orient.pfm`` and ``<prefix>.json``."""
    vpath, opath, jpath = prefix + "_value.pfm", prefix + "_orient.pfm", prefix + ".json"
    write_pfm(vpath, np.where(smap.mask, smap.value, 0.0))
    write_pfm(opath, smap.orient)
    h, w = smap.value.shape
    meta = {"source": smap.source, "width": w, "height": h,
            "value": os.path.basename(vpath), "orient": os.path.basename(opath),
            "orient_channels": ["x", "y", "unused"], "mask": None}
    if not smap.mask.all():
        mpath = prefix + "_mask.pgm"
        write_pgm(mpath, smap.mask)
        meta["mask"] = os.path.basename(mpath)
    meta.update(header or {})
    write_json(jpath, meta)
    return vpath, opath, jpath


def read_saliency(prefix):
    meta = read_json(prefix + ".json")
    d = os.path.dirname(prefix)
    value = read_pfm(os.path.join(d, meta["value"]))
    orient = read_pfm(os.path.join(d, meta["orient"]))[..., :2]
    mask = (read_pgm_mask(os.path.join(d, meta["mask"])) if meta.get("mask")
            else np.ones(value.shape, bool))
    return SaliencyMap(value, orient, mask, meta.get("source", "CS"))
