"""JSON run configuration with field-level validation.

Every field has a default; the packaged ``default_config.json`` spells them
out.  Errors name the offending field by its dotted path (and the line and
column for JSON syntax errors).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from .channel import ChannelParams
from .errors import RRDPSError
from .rates import DecoyTier, max_threshold
from .sources import SourceKind, SourceModel

OPTIMIZE = "optimize"
DEFAULT = "default"


class ConfigError(RRDPSError):
    """Invalid configuration; the message names the field."""


@dataclass(frozen=True)
class SourceBlock:
    kinds: tuple[SourceKind, ...] = (SourceKind.WCP, SourceKind.HSPS)
    mu: Union[float, str] = OPTIMIZE
    eta_A: float = 0.045
    d_A: float = 1.7e-6

    def model(self, kind: SourceKind, mu: float) -> SourceModel:
        return SourceModel(kind, mu, self.eta_A, self.d_A)


@dataclass(frozen=True)
class ChannelBlock:
    alpha: float = 0.2
    dark_count: Optional[float] = 1.7e-6
    Y0: Optional[float] = None
    e0: float = 0.5
    e_d: float = 0.033
    f: float = 1.16
    eta_B: float = 0.045
    eta: Optional[float] = None

    def params(self, L: int) -> ChannelParams:
        kw = dict(e0=self.e0, e_d=self.e_d, alpha=self.alpha, f=self.f, eta_b=self.eta_B)
        if self.Y0 is not None:
            ch = ChannelParams(Y0=self.Y0, **kw)
        else:
            ch = ChannelParams.from_dark_count(self.dark_count or 0.0, L, **kw)
        return ch if self.eta is None else ch.with_eta(self.eta)


@dataclass(frozen=True)
class ProtocolBlock:
    L: int = 32
    v_th: Union[int, str] = OPTIMIZE
    tiers: tuple[DecoyTier, ...] = (DecoyTier.NONE, DecoyTier.INFINITE)
    decoy_intensities: Union[tuple[float, ...], str] = DEFAULT


@dataclass(frozen=True)
class SweepBlock:
    """Either fiber lengths or overall transmittances, never both."""

    distance_km: Optional[tuple[float, ...]] = tuple(float(d) for d in range(0, 161))
    transmittance: Optional[tuple[float, ...]] = None


@dataclass(frozen=True)
class SearchBlock:
    mu_min: float = 1e-4
    mu_max: float = 1.0
    mu_points: int = 60
    refine_rounds: int = 3


@dataclass(frozen=True)
class LandscapeBlock:
    transmittance: float = 1e-5
    mu_min: float = 1e-4
    mu_max: float = 1.0
    mu_points: int = 41
    v_th_min: int = 0
    v_th_max: Optional[int] = None


@dataclass(frozen=True)
class ValidateBlock:
    trials: int = 1_000_000
    seed: int = 20240601


@dataclass(frozen=True)
class OutputBlock:
    path: Optional[str] = None
    precision: int = 12


@dataclass(frozen=True)
class RunConfig:
    source: SourceBlock = field(default_factory=SourceBlock)
    channel: ChannelBlock = field(default_factory=ChannelBlock)
    protocol: ProtocolBlock = field(default_factory=ProtocolBlock)
    sweep: SweepBlock = field(default_factory=SweepBlock)
    search: SearchBlock = field(default_factory=SearchBlock)
    landscape: LandscapeBlock = field(default_factory=LandscapeBlock)
    validate: ValidateBlock = field(default_factory=ValidateBlock)
    output: OutputBlock = field(default_factory=OutputBlock)


# --- field readers -----------------------------------------------------------


def _fail(path: str, msg: str, value: Any = None) -> ConfigError:
    shown = "" if value is None else f", got {value!r}"
    return ConfigError(f"{path}: {msg}{shown}")


def _number(raw: dict, key: str, path: str, default, *, lo=None, hi=None, lo_open=False,
            hi_open=False, integer=False, nullable=False):
    if key not in raw:
        return default
    v = raw[key]
    p = f"{path}.{key}"
    if v is None and nullable:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise _fail(p, "must be a number", v)
    if integer:
        if int(v) != v:
            raise _fail(p, "must be an integer", v)
        v = int(v)
    else:
        v = float(v)
        if not math.isfinite(v):
            raise _fail(p, "must be finite", v)
    if lo is not None and (v < lo or (lo_open and v == lo)):
        raise _fail(p, f"must be {'>' if lo_open else '>='} {lo}", v)
    if hi is not None and (v > hi or (hi_open and v == hi)):
        raise _fail(p, f"must be {'<' if hi_open else '<='} {hi}", v)
    return v


def _block(raw: dict, key: str, allowed: set[str]) -> dict:
    block = raw.get(key, {})
    if not isinstance(block, dict):
        raise _fail(key, "must be an object", block)
    unknown = set(block) - allowed
    if unknown:
        raise _fail(key, f"unknown field(s) {sorted(unknown)}; allowed: {sorted(allowed)}")
    return block


def _enum_list(raw: dict, key: str, path: str, enum, default):
    if key not in raw:
        return default
    v = raw[key]
    items = v if isinstance(v, list) else [v]
    if not items:
        raise _fail(f"{path}.{key}", "must not be empty")
    out = []
    for item in items:
        try:
            out.append(enum(item))
        except ValueError:
            raise _fail(f"{path}.{key}", f"must be one of {[e.value for e in enum]}", item) from None
    return tuple(dict.fromkeys(out))


def _grid(v: Any, path: str, *, log: bool) -> tuple[float, ...]:
    """A list of values, or a {start, stop, step} / {min, max, points} range."""
    if isinstance(v, list):
        vals = []
        for k, x in enumerate(v):
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                raise _fail(f"{path}[{k}]", "must be a number", x)
            vals.append(float(x))
        return tuple(vals)
    if not isinstance(v, dict):
        raise _fail(path, "must be a list or a range object", v)
    if log:
        allowed = {"min", "max", "points"}
        if set(v) != allowed:
            raise _fail(path, f"range object needs exactly {sorted(allowed)}", v)
        lo = _number(v, "min", path, None, lo=0.0, lo_open=True)
        hi = _number(v, "max", path, None, lo=lo)
        n = _number(v, "points", path, None, lo=1, integer=True)
        return tuple(float(x) for x in np.geomspace(lo, hi, n)) if n > 1 else (lo,)
    allowed = {"start", "stop", "step"}
    if set(v) != allowed:
        raise _fail(path, f"range object needs exactly {sorted(allowed)}", v)
    start = _number(v, "start", path, None, lo=0.0)
    stop = _number(v, "stop", path, None, lo=start)
    step = _number(v, "step", path, None, lo=0.0, lo_open=True)
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return tuple(start + k * step for k in range(count))


# --- loading ---------------------------------------------------------------


def parse_config(raw: Any) -> RunConfig:
    """Build a :class:`RunConfig` from decoded JSON, validating every field."""
    if not isinstance(raw, dict):
        raise ConfigError("top level: must be a JSON object")
    top = {"source", "channel", "protocol", "sweep", "search", "landscape", "validate", "output"}
    unknown = set(raw) - top - {"comment"}
    if unknown:
        raise ConfigError(f"top level: unknown block(s) {sorted(unknown)}; allowed: {sorted(top)}")

    s = _block(raw, "source", {"kind", "mu", "eta_A", "d_A"})
    d = SourceBlock()
    mu = s.get("mu", d.mu)
    if mu != OPTIMIZE:
        mu = _number(s, "mu", "source", None, lo=0.0, lo_open=True)
    source = SourceBlock(
        kinds=_enum_list(s, "kind", "source", SourceKind, d.kinds),
        mu=mu,
        eta_A=_number(s, "eta_A", "source", d.eta_A, lo=0.0, hi=1.0, lo_open=True),
        d_A=_number(s, "d_A", "source", d.d_A, lo=0.0, hi=1.0, hi_open=True),
    )

    c = _block(raw, "channel", {"alpha", "dark_count", "Y0", "e0", "e_d", "f", "eta_B", "eta"})
    d = ChannelBlock()
    if "Y0" in c and c["Y0"] is not None and c.get("dark_count") is not None:
        raise ConfigError("channel: give either Y0 (per packet) or dark_count (per pulse), not both")
    Y0 = _number(c, "Y0", "channel", None, lo=0.0, hi=1.0, hi_open=True, nullable=True)
    channel = ChannelBlock(
        alpha=_number(c, "alpha", "channel", d.alpha, lo=0.0, lo_open=True),
        dark_count=None if Y0 is not None else _number(
            c, "dark_count", "channel", d.dark_count, lo=0.0, hi=1.0, hi_open=True, nullable=True
        ),
        Y0=Y0,
        e0=_number(c, "e0", "channel", d.e0, lo=0.0, hi=0.5),
        e_d=_number(c, "e_d", "channel", d.e_d, lo=0.0, hi=0.5),
        f=_number(c, "f", "channel", d.f, lo=1.0),
        eta_B=_number(c, "eta_B", "channel", d.eta_B, lo=0.0, hi=1.0, lo_open=True),
        eta=_number(c, "eta", "channel", None, lo=0.0, hi=1.0, nullable=True),
    )

    p = _block(raw, "protocol", {"L", "v_th", "tier", "decoy_intensities"})
    d = ProtocolBlock()
    L = _number(p, "L", "protocol", d.L, lo=2, integer=True)
    v_th = p.get("v_th", d.v_th)
    if v_th != OPTIMIZE:
        v_th = _number(p, "v_th", "protocol", None, lo=0, hi=max_threshold(L), integer=True)
    decoys = p.get("decoy_intensities", d.decoy_intensities)
    if decoys != DEFAULT:
        fr = _grid(decoys, "protocol.decoy_intensities", log=False) if isinstance(decoys, list) else None
        if fr is None:
            raise _fail("protocol.decoy_intensities", 'must be "default" or a list of fractions of mu', decoys)
        if any(x < 0 or x >= 1 for x in fr) or any(a <= b for a, b in zip(fr, fr[1:])):
            raise _fail("protocol.decoy_intensities", "fractions must lie in [0, 1) and strictly decrease", decoys)
        decoys = fr
    protocol = ProtocolBlock(
        L=L, v_th=v_th, tiers=_enum_list(p, "tier", "protocol", DecoyTier, d.tiers), decoy_intensities=decoys
    )
    if isinstance(decoys, tuple):
        counts = {len(decoys)} | {t.n_decoys for t in protocol.tiers if t.is_finite}
        if len(counts) > 1:
            raise _fail("protocol.decoy_intensities", "number of fractions must match the tier's decoy count", decoys)

    w = _block(raw, "sweep", {"distance_km", "transmittance"})
    if "distance_km" in w and "transmittance" in w:
        raise ConfigError("sweep: give either distance_km or transmittance, not both")
    if "transmittance" in w:
        etas = _grid(w["transmittance"], "sweep.transmittance", log=True)
        for k, e in enumerate(etas):
            if not 0.0 < e <= 1.0:
                raise _fail(f"sweep.transmittance[{k}]", "must lie in (0, 1]", e)
        sweep = SweepBlock(distance_km=None, transmittance=etas)
    elif "distance_km" in w:
        ds = _grid(w["distance_km"], "sweep.distance_km", log=False)
        for k, x in enumerate(ds):
            if x < 0:
                raise _fail(f"sweep.distance_km[{k}]", "must be >= 0", x)
        if any(b < a for a, b in zip(ds, ds[1:])):
            raise _fail("sweep.distance_km", "must be sorted ascending")
        sweep = SweepBlock(distance_km=ds)
    else:
        sweep = SweepBlock()

    g = _block(raw, "search", {"mu_min", "mu_max", "mu_points", "refine_rounds"})
    d = SearchBlock()
    mu_min = _number(g, "mu_min", "search", d.mu_min, lo=0.0, lo_open=True)
    search = SearchBlock(
        mu_min=mu_min,
        mu_max=_number(g, "mu_max", "search", d.mu_max, lo=mu_min),
        mu_points=_number(g, "mu_points", "search", d.mu_points, lo=1, integer=True),
        refine_rounds=_number(g, "refine_rounds", "search", d.refine_rounds, lo=0, integer=True),
    )

    a = _block(raw, "landscape", {"transmittance", "mu_min", "mu_max", "mu_points", "v_th_min", "v_th_max"})
    d = LandscapeBlock()
    l_mu_min = _number(a, "mu_min", "landscape", d.mu_min, lo=0.0, lo_open=True)
    v_lo = _number(a, "v_th_min", "landscape", d.v_th_min, lo=0, hi=max_threshold(L), integer=True)
    landscape = LandscapeBlock(
        transmittance=_number(a, "transmittance", "landscape", d.transmittance, lo=0.0, hi=1.0, lo_open=True),
        mu_min=l_mu_min,
        mu_max=_number(a, "mu_max", "landscape", d.mu_max, lo=l_mu_min),
        mu_points=_number(a, "mu_points", "landscape", d.mu_points, lo=1, integer=True),
        v_th_min=v_lo,
        v_th_max=_number(a, "v_th_max", "landscape", None, lo=v_lo, hi=max_threshold(L),
                         integer=True, nullable=True),
    )

    v = _block(raw, "validate", {"trials", "seed"})
    d = ValidateBlock()
    validate = ValidateBlock(
        trials=_number(v, "trials", "validate", d.trials, lo=1, integer=True),
        seed=_number(v, "seed", "validate", d.seed, lo=0, hi=2**64 - 1, integer=True),
    )

    o = _block(raw, "output", {"path", "precision"})
    path = o.get("path")
    if path is not None and not isinstance(path, str):
        raise _fail("output.path", "must be a string or null", path)
    output = OutputBlock(path=path, precision=_number(o, "precision", "output", 12, lo=1, hi=17, integer=True))

    cfg = RunConfig(source, channel, protocol, sweep, search, landscape, validate, output)
    _check_models(cfg)
    return cfg


def _check_models(cfg: RunConfig) -> None:
    """Construct the library objects once so their own checks run at load time."""
    try:
        cfg.channel.params(cfg.protocol.L)
    except RRDPSError as exc:
        raise ConfigError(f"channel: {exc}") from None
    for kind in cfg.source.kinds:
        try:
            cfg.source.model(kind, 0.1 if cfg.source.mu == OPTIMIZE else cfg.source.mu)
        except RRDPSError as exc:
            raise ConfigError(f"source: {exc}") from None


def load_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """Read and validate a config file; ``None`` gives the packaged default."""
    if path is None:
        text = resources.files("rrdps").joinpath("data/default_config.json").read_text()
        where = "default_config.json"
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
        where = str(path)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{where}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})") from None
    try:
        return parse_config(raw)
    except ConfigError as exc:
        raise ConfigError(f"{where}: {exc}") from None
