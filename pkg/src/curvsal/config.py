"""Pipeline configuration: one flat dataclass, loadable from a ``key = value``
text file and overridable from the command line."""
import ast
import configparser
from dataclasses import asdict, dataclass, fields, replace

from .errors import ParameterError


@dataclass(frozen=True)
class Config:
    # rendering
    image_size: int = 256
    pixel_scale: float = 0.0  # m/px at 1 m; 0 = derive from the mesh
    fill_distance: float = 0.0  # distance at which the mesh fills 80% of the frame; 0 = v_min
    projection: str = "scaled"
    # viewpoint grid
    h_start: float = 0.0
    h_step: float = 50.0
    a_step: float = 20.0
    v_min: float = 0.3
    v_max: float = 2.0
    v_step: float = 0.3
    # detectors
    deriv_sigma: float = 1.0
    scales: int = 5
    kappa_rel: float = 0.1
    diffusion_iterations: int = 10
    band_radius: float = 3.0
    # descriptor and scoring
    grid: int = 8
    bins: int = 9
    point_percentile: float = 90.0
    eps_px: float = 3.0
    sigma_r: float = 0.1
    rep_mode: str = "best"
    hog_mode: str = "literal"
    query_mode: str = "MFC"
    top_k: int = 3
    # refinement
    fine_h: float = 5.0
    fine_a: float = 5.0
    fine_v: float = 0.05
    eps: float = 0.05
    max_rounds: int = 6
    threads: int = 1

    def __post_init__(self):
        positive = ["image_size", "h_step", "a_step", "v_min", "v_max", "v_step", "deriv_sigma",
                    "kappa_rel", "diffusion_iterations", "grid", "bins", "sigma_r", "top_k",
                    "fine_h", "fine_a", "fine_v", "eps", "max_rounds", "threads"]
        for name in positive:
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive, got {getattr(self, name)}")
        if self.scales < 2:
            raise ParameterError("scales must be >= 2")
        if not 0.0 <= self.h_start < 180.0:
            raise ParameterError("h_start must lie in [0, 180)")
        if self.v_min > self.v_max:
            raise ParameterError("v_min must not exceed v_max")
        if self.pixel_scale < 0 or self.fill_distance < 0 or self.eps_px < 0 or self.band_radius < 0:
            raise ParameterError("pixel_scale, fill_distance, eps_px and band_radius must be >= 0")
        if not 0 < self.point_percentile < 100:
            raise ParameterError("point_percentile must be in (0, 100)")
        if self.projection not in ("scaled", "orthographic"):
            raise ParameterError(f"unknown projection {self.projection!r}")
        if self.rep_mode not in ("best", "one_sided", "two_sided"):
            raise ParameterError(f"unknown rep_mode {self.rep_mode!r}")
        if self.hog_mode not in ("literal", "centered", "cosine"):
            raise ParameterError(f"unknown hog_mode {self.hog_mode!r}")
        if self.query_mode not in ("CS", "MCS", "MFC"):
            raise ParameterError(f"unknown query_mode {self.query_mode!r}")

    @property
    def coarse_steps(self):
        return (self.h_step, self.a_step, self.v_step)

    @property
    def fine_steps(self):
        return (self.fine_h, self.fine_a, self.fine_v)

    def to_dict(self):
        return asdict(self)

    def updated(self, **overrides):
        return with_overrides(self, overrides)


_TYPES = {f.name: f.type for f in fields(Config)}


def _coerce(name, raw):
    if name not in _TYPES:
        raise ParameterError(f"unknown config key {name!r}")
    typ = _TYPES[name]
    if isinstance(raw, str) and typ is not str:
        try:
            raw = ast.literal_eval(raw.strip())
        except (ValueError, SyntaxError):
            raise ParameterError(f"bad value for {name}: {raw!r}") from None
    if typ is str:
        return str(raw).strip().strip("\"'")
    if typ is int:
        if isinstance(raw, float) and raw.is_integer():
            raw = int(raw)
        if not isinstance(raw, int) or isinstance(raw, bool):
            raise ParameterError(f"{name} must be an integer")
        return raw
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ParameterError(f"{name} must be a number")
    return float(raw)


def with_overrides(cfg, overrides):
    vals = {k: _coerce(k, v) for k, v in overrides.items() if v is not None}
    return replace(cfg, **vals)


def load_config(path=None, overrides=None):
    """Defaults, then the file at ``path``, then ``overrides`` (CLI)."""
    cfg = Config()
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        parser.optionxform = str
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
        try:
            parser.read_string("[config]\n" + text)
        except configparser.Error as exc:
            raise ParameterError(f"{path}: {exc}") from None
        items = {}
        for section in parser.sections():
            items.update(dict(parser.items(section)))
        cfg = with_overrides(cfg, items)
    if overrides:
        cfg = with_overrides(cfg, overrides)
    return cfg


def dump_config(cfg):
    return "".join(f"{k} = {v!r}\n" if isinstance(v, str) else f"{k} = {v}\n"
                   for k, v in cfg.to_dict().items())
