"""INI run configuration, canonical hashing and the run manifest."""

from __future__ import annotations

import configparser
import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ValidationError
from .field import FracParams, Grid

# section -> key -> (parser, default); None default means required
_FLOAT_LIST = "float_list"
_INT_LIST = "int_list"

SCHEMA: dict[str, dict[str, tuple[str, object]]] = {
    "grid": {"dim_N": ("int", 2), "points_M": ("int", 128), "extent_L": ("float", 32.0)},
    "frac": {"s": ("float", 0.25)},
    "corpus": {"size": ("int", 100), "seed": ("int", 7)},
    "audit": {"theta": ("opt_float", None), "r_list": (_FLOAT_LIST, [1.0, 2.0])},
    "profiles": {
        "max_profiles": ("int", 4),
        "tau": ("float", 0.02),
        "rho": ("float", 8.0),
        "input": ("str", ""),
        "points_M": ("int", 256),
        "extent_L": ("float", 16.0),
        "wide_lambda": ("float", 1.0),
        "lambda_ratio": ("float", 8.0),
    },
    "subcritical": {
        "s": ("float", 0.5),
        "points_M": ("int", 64),
        "extent_L": ("float", 2.0),
        "domain": ("str", "disk:0,0,0.5"),
        "eps_list": (_FLOAT_LIST, []),
        "seed": ("int", 0),
        "max_iter": ("int", 5000),
        "cell_size_delta": ("opt_float", None),
        "atom_threshold": ("float", 0.25),
    },
    "sharp_constant": {"dims": (_INT_LIST, [2]), "s_count": ("int", 20)},
    "run": {"output_dir": ("str", "out")},
}


def _parse(kind: str, text: str, where: str):
    text = text.strip()
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            v = float(text)
            if not math.isfinite(v):
                raise ValueError
            return v
        if kind == "opt_float":
            return None if text == "" else _parse("float", text, where)
        if kind == "str":
            return text
        if kind in (_FLOAT_LIST, _INT_LIST):
            if not text:
                return []
            elem = "int" if kind == _INT_LIST else "float"
            return [_parse(elem, t, where) for t in text.split(",")]
    except ValueError:
        raise ValidationError(f"{where}: cannot parse {text!r} as {kind}") from None
    raise AssertionError(kind)


def _format(v) -> str:
    if v is None:
        return ""
    if isinstance(v, list):
        return ", ".join(_format(x) for x in v)
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


@dataclass(frozen=True)
class LabConfig:
    values: dict = field(default_factory=dict)
    source: str = "<defaults>"

    def __getitem__(self, key: str):
        sec, name = key.split(".", 1)
        return self.values[sec][name]

    # derived objects -------------------------------------------------------

    @property
    def grid(self) -> Grid:
        return Grid(self["grid.dim_N"], self["grid.points_M"], self["grid.extent_L"])

    @property
    def frac(self) -> FracParams:
        return FracParams(self["grid.dim_N"], self["frac.s"])

    @property
    def sub_grid(self) -> Grid:
        return Grid(self["grid.dim_N"], self["subcritical.points_M"], self["subcritical.extent_L"])

    @property
    def sub_frac(self) -> FracParams:
        return FracParams(self["grid.dim_N"], self["subcritical.s"])

    @property
    def profile_grid(self) -> Grid:
        return Grid(self["grid.dim_N"], self["profiles.points_M"], self["profiles.extent_L"])

    @property
    def output_dir(self) -> Path:
        return Path(self["run.output_dir"])

    # serialization ---------------------------------------------------------

    def canonical(self) -> str:
        """Sections and keys in schema order, values in a fixed format."""
        out = io.StringIO()
        for sec, keys in SCHEMA.items():
            out.write(f"[{sec}]\n")
            for k in keys:
                out.write(f"{k} = {_format(self.values[sec][k])}\n")
            out.write("\n")
        return out.getvalue()

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def save(self, path: str | Path) -> None:
        atomic_write(path, self.canonical())


def _key_where(source: str, sec: str, key: str) -> str:
    return f"{source}: [{sec}] {key}"


def load_config(path: str | Path | None = None, overrides: list[str] | None = None) -> LabConfig:
    """Read an INI file (or defaults), apply ``section.key=value`` overrides and validate."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keys are case sensitive (dim_N, points_M)
    source = "<defaults>"
    if path is not None:
        source = str(path)
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ValidationError(f"{source}: cannot read config ({exc.strerror})") from None
        try:
            cp.read_string(text, source=source)
        except configparser.Error as exc:
            raise ValidationError(f"{source}: malformed config ({exc.message})") from None
    for ov in overrides or []:
        if "=" not in ov or "." not in ov.split("=", 1)[0]:
            raise ValidationError(f"override {ov!r} must look like section.key=value")
        lhs, rhs = ov.split("=", 1)
        sec, key = lhs.strip().split(".", 1)
        if not cp.has_section(sec):
            cp.add_section(sec)
        cp.set(sec, key, rhs)

    values: dict = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ValidationError(f"{source}: unknown section [{sec}]")
        for key in cp[sec]:
            if key not in SCHEMA[sec]:
                raise ValidationError(f"{_key_where(source, sec, key)}: unknown key")
    for sec, keys in SCHEMA.items():
        values[sec] = {}
        for key, (kind, default) in keys.items():
            if cp.has_option(sec, key):
                values[sec][key] = _parse(kind, cp.get(sec, key), _key_where(source, sec, key))
            else:
                values[sec][key] = list(default) if isinstance(default, list) else default
    cfg = LabConfig(values, source)
    validate(cfg)
    return cfg


def validate(cfg: LabConfig) -> None:
    """Re-run the cross-field checks of the owning modules, naming the offending key."""
    src = cfg.source

    def check(key, fn):
        sec, name = key.split(".", 1)
        try:
            fn()
        except ValidationError as exc:
            raise ValidationError(f"{_key_where(src, sec, name)}: {exc}") from None

    check("grid.points_M", lambda: cfg.grid)
    check("frac.s", lambda: cfg.frac)
    check("subcritical.s", lambda: cfg.sub_frac)
    check("subcritical.points_M", lambda: cfg.sub_grid)
    p = cfg.frac

    def audit():
        from .audits import _check_theta_r, default_theta

        th = cfg["audit.theta"]
        rs = cfg["audit.r_list"]
        if not rs:
            raise ValidationError("r_list must not be empty")
        for r in rs:
            _check_theta_r(p, default_theta(p) if th is None else th, r)

    check("audit.theta", audit)

    def corpus():
        if cfg["corpus.size"] < 0:
            raise ValidationError("corpus size must be nonnegative")
        if not 0 <= cfg["corpus.seed"] < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")

    check("corpus.size", corpus)

    def profiles():
        if not 1 <= cfg["profiles.max_profiles"] <= 8:
            raise ValidationError("max_profiles must lie in [1, 8]")
        if not 0 < cfg["profiles.tau"] < 1:
            raise ValidationError("tau must lie in (0, 1)")
        if not cfg["profiles.rho"] > 0:
            raise ValidationError("rho must be positive")

    check("profiles.tau", profiles)
    check("profiles.points_M", lambda: cfg.profile_grid)

    def sub():
        from .subcritical import DomainSpec, _check_eps

        sp = cfg.sub_frac
        DomainSpec.parse(cfg["subcritical.domain"]).mask(cfg.sub_grid)
        eps = cfg["subcritical.eps_list"]
        for e in eps:
            _check_eps(sp, e)
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValidationError("eps_list must be strictly decreasing")
        d = cfg["subcritical.cell_size_delta"]
        if d is not None:
            k = d / cfg.sub_grid.spacing
            if abs(k - round(k)) > 1e-9 * max(k, 1) or round(k) < 1:
                raise ValidationError("cell_size_delta must be a multiple of the grid spacing")

    check("subcritical.domain", sub)

    def sharp():
        if cfg["sharp_constant.s_count"] < 1:
            raise ValidationError("s_count must be positive")
        for n in cfg["sharp_constant.dims"]:
            if n < 1:
                raise ValidationError("dimensions must be positive")

    check("sharp_constant.dims", sharp)


# ---------------------------------------------------------------------------
# output helpers


def atomic_write(path: str | Path, text: str | bytes) -> None:
    """Write through a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = text.encode() if isinstance(text, str) else text
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def dumps(obj, indent: int = 2) -> str:
    """JSON with every float printed to 17 significant digits; non-finite floats become null."""

    def enc(o, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if isinstance(o, bool) or o is None:
            return json.dumps(o)
        if isinstance(o, float):
            return format(o, ".17g") if math.isfinite(o) else "null"
        if isinstance(o, int):
            return str(o)
        if isinstance(o, str):
            return json.dumps(o)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(str(k))}: {enc(v, level + 1)}" for k, v in o.items()]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, (list, tuple)):
            if not o:
                return "[]"
            return "[\n" + ",\n".join(pad + enc(v, level + 1) for v in o) + "\n" + end + "]"
        if hasattr(o, "item"):  # numpy scalar
            return enc(o.item(), level)
        raise TypeError(f"cannot serialize {type(o).__name__}")

    return enc(obj, 0) + "\n"


@dataclass
class RunManifest:
    config_hash: str
    tool_version: str
    artifacts: list[dict] = field(default_factory=list)

    def add(self, command: str, files: list[str], seconds: float) -> None:
        """One artifact per command: its output files and wall-clock time."""
        self.artifacts.append({"command": command, "files": sorted(files), "seconds": seconds})

    @property
    def files(self) -> list[str]:
        return [f for a in self.artifacts for f in a["files"]]

    def write(self, path: str | Path) -> None:
        atomic_write(path, dumps(asdict(self)))
