"""Run configuration: TOML parsing, defaults, validation and environment overrides."""
from __future__ import annotations

import copy
import logging
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

import tomli

from .estimators import SpectralData, min_projector_length
from .lattice import FiniteT, LatticeGeometry, ModelParams, Projector, RunMode, build_lattice
from .noneq import DEFAULT_DLAMBDA, DEFAULT_SNAPSHOT_SPACING, ProtocolPlan, Schedule
from .sse.engine import DEFAULT_THERMALIZE
from .tensors import ConnectionTensorKind

log = logging.getLogger(__name__)

ENV_PREFIX = "SREQMC_CFG_"
PATHS_FINITE_T = 640
PATHS_PROJECTOR = 160
QUANTITY_KIND = {"sre": ConnectionTensorKind.SRE, "ere": ConnectionTensorKind.ERE,
                 "pre": ConnectionTensorKind.PRE}

# section -> key -> (type, default); None default means required or mode-dependent
_SCHEMA = {
    "lattice": {"dims": (list, None), "bc": ((str, list), "periodic")},
    "model": {"J": (float, 1.0), "h": (float, None)},
    "mode": {"beta": (float, None), "m": ((int, str), None), "deltaR": (float, 1e-2),
             "r0": (float, None)},
    "renyi": {"n": (int, 2), "quantity": (str, "sre")},
    "noneq": {"dLambda": (float, DEFAULT_DLAMBDA), "intervals": (int, 1),
              "pathsPerInterval": (int, None), "sweepsPerStep": (int, 1),
              "endpointRefinement": (bool, False), "burnIn": (int, None),
              "snapshotSpacing": (int, DEFAULT_SNAPSHOT_SPACING),
              "thermalize": (int, DEFAULT_THERMALIZE)},
    "rng": {"seed": (int, 0)},
    "output": {"directory": (str, "out"), "formats": (list, ["csv", "json"])},
}


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending dotted key."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class RunConfig:
    geometry: LatticeGeometry
    params: ModelParams
    mode: RunMode
    quantity: str
    plan: ProtocolPlan
    seed: int
    output_directory: str
    formats: tuple
    raw: dict = field(repr=False, compare=False)

    @property
    def kind(self) -> ConnectionTensorKind:
        return QUANTITY_KIND[self.quantity]

    def echo(self) -> dict:
        """Fully materialised configuration (defaults filled in)."""
        return copy.deepcopy(self.raw)

    def with_seed(self, seed: int) -> "RunConfig":
        raw = self.echo()
        raw["rng"]["seed"] = int(seed)
        return parse_mapping(raw, env={})


def _nest(doc: Mapping) -> dict:
    """Accept nested tables, flat dotted keys, or a mix of both."""
    out: dict = {}
    for key, val in doc.items():
        if isinstance(val, Mapping):
            for k2, v2 in _nest(val).items():
                out.setdefault(key, {})
                if not isinstance(out[key], dict):
                    raise ConfigError(key, "both a value and a section")
                out[key][k2] = v2
        elif "." in key:
            sec, rest = key.split(".", 1)
            out.setdefault(sec, {})
            if not isinstance(out[sec], dict):
                raise ConfigError(sec, "both a value and a section")
            out[sec].update(_nest({rest: val}))
        else:
            out[key] = val
    return out


def _coerce(key: str, val: Any, typ) -> Any:
    types = typ if isinstance(typ, tuple) else (typ,)
    if isinstance(val, bool) and bool not in types:
        raise ConfigError(key, f"expected {'/'.join(t.__name__ for t in types)}, got bool")
    if float in types and isinstance(val, int) and not isinstance(val, bool):
        return float(val)
    if not isinstance(val, types):
        raise ConfigError(key, f"expected {'/'.join(t.__name__ for t in types)}, got {type(val).__name__}")
    return val


def _env_overrides(env: Mapping[str, str]) -> dict:
    """SREQMC_CFG_<SECTION>_<KEY>=<toml value>; names are case-insensitive."""
    out: dict = {}
    for name, text in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):].lower()
        sec, _, key = rest.partition("_")
        if sec not in _SCHEMA:
            raise ConfigError(name, f"unknown section {sec!r}")
        match = [k for k in _SCHEMA[sec] if k.lower() == key.replace("_", "")]
        if not match:
            raise ConfigError(name, f"unknown key {sec}.{key}")
        try:
            val = tomli.loads(f"v = {text}")["v"]
        except tomli.TOMLDecodeError:
            val = text
        out.setdefault(sec, {})[match[0]] = val
    return out


def parse_config(text: str, env: Optional[Mapping[str, str]] = None) -> RunConfig:
    """Parse a TOML run description. ``env`` defaults to ``os.environ``."""
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError("<document>", f"not valid TOML: {exc}") from None
    return parse_mapping(doc, env=os.environ if env is None else env)


def load_config(path: str, env: Optional[Mapping[str, str]] = None) -> RunConfig:
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError:
        raise ConfigError("<document>", "config must be UTF-8") from None
    return parse_config(text, env)


def parse_mapping(doc: Mapping, env: Optional[Mapping[str, str]] = None) -> RunConfig:
    doc = _nest(doc)
    for sec, vals in _nest(_env_overrides(env or {})).items():
        doc.setdefault(sec, {}).update(vals)
    raw: dict = {}
    for sec, body in doc.items():
        if sec not in _SCHEMA:
            raise ConfigError(sec, "unknown section")
        if not isinstance(body, dict):
            raise ConfigError(sec, "expected a section")
        for key in body:
            if key not in _SCHEMA[sec]:
                raise ConfigError(f"{sec}.{key}", "unknown key")
    for sec, keys in _SCHEMA.items():
        body = doc.get(sec, {})
        raw[sec] = {}
        for key, (typ, default) in keys.items():
            if body.get(key) is not None:  # None comes from an echoed config
                raw[sec][key] = _coerce(f"{sec}.{key}", body[key], typ)
            else:
                raw[sec][key] = copy.deepcopy(default)
    return _build(raw)


def _require(cond: bool, key: str, msg: str):
    if not cond:
        raise ConfigError(key, msg)


def _build(raw: dict) -> RunConfig:
    lat = raw["lattice"]
    _require(lat["dims"] is not None, "lattice.dims", "required")
    dims = lat["dims"]
    _require(all(isinstance(d, int) and not isinstance(d, bool) for d in dims), "lattice.dims",
             "entries must be integers")
    try:
        geometry = build_lattice(dims, lat["bc"])
    except ValueError as exc:
        raise ConfigError("lattice.dims", str(exc)) from None

    model = raw["model"]
    _require(model["h"] is not None, "model.h", "required")
    _require(model["J"] > 0, "model.J", "must be positive")
    _require(model["h"] >= 0, "model.h", "must be non-negative")
    ren = raw["renyi"]
    _require(ren["n"] >= 2, "renyi.n", "must be an integer >= 2")
    ren["quantity"] = ren["quantity"].lower()
    _require(ren["quantity"] in QUANTITY_KIND, "renyi.quantity", f"one of {sorted(QUANTITY_KIND)}")
    params = ModelParams(model["J"], model["h"], ren["n"])

    md = raw["mode"]
    has_beta, has_m = md["beta"] is not None, md["m"] is not None
    _require(has_beta != has_m, "mode", "set exactly one of mode.beta and mode.m")
    if has_beta:
        _require(math.isfinite(md["beta"]) and md["beta"] > 0, "mode.beta", "must be positive")
        mode: RunMode = FiniteT(md["beta"])
        for k in ("r0",):
            _require(md[k] is None, f"mode.{k}", "only meaningful for projector runs")
    else:
        _require(md["deltaR"] > 0, "mode.deltaR", "must be positive")
        _require(md["r0"] is None or md["r0"] > 0, "mode.r0", "must be positive")
        if isinstance(md["m"], str):
            _require(md["m"] == "auto", "mode.m", "integer or \"auto\"")
            try:
                md["m"] = auto_projector_length(geometry, params, md["deltaR"], md["r0"])
            except ValueError as exc:
                raise ConfigError("mode.m", f"auto length failed: {exc}") from None
        _require(md["m"] >= 1, "mode.m", "must be a positive integer")
        mode = Projector(md["m"])

    nq = raw["noneq"]
    _require(nq["dLambda"] > 0 and nq["dLambda"] <= 1, "noneq.dLambda", "must lie in (0, 1]")
    _require(nq["intervals"] >= 1, "noneq.intervals", "must be >= 1")
    steps = 1.0 / (nq["dLambda"] * nq["intervals"])
    _require(abs(steps - round(steps)) <= 1e-6 * steps and round(steps) >= 1, "noneq.dLambda",
             "each interval length must be an integer multiple of dLambda")
    if nq["pathsPerInterval"] is None:
        nq["pathsPerInterval"] = PATHS_FINITE_T if has_beta else PATHS_PROJECTOR
    _require(nq["pathsPerInterval"] >= 2, "noneq.pathsPerInterval", "need at least two paths")
    _require(nq["sweepsPerStep"] >= 1, "noneq.sweepsPerStep", "must be >= 1")
    if nq["burnIn"] is None:
        nq["burnIn"] = 10 * geometry.n_sites
    _require(nq["burnIn"] >= 0, "noneq.burnIn", "must be >= 0")
    _require(nq["snapshotSpacing"] >= 1, "noneq.snapshotSpacing", "must be >= 1")
    _require(nq["thermalize"] >= 0, "noneq.thermalize", "must be >= 0")
    schedule = Schedule(0.0, 1.0, nq["dLambda"], nq["sweepsPerStep"], nq["endpointRefinement"])
    plan = ProtocolPlan(nq["intervals"], nq["pathsPerInterval"], schedule, nq["burnIn"],
                        nq["snapshotSpacing"], nq["thermalize"])

    seed = raw["rng"]["seed"]
    _require(0 <= seed < 2 ** 64, "rng.seed", "must be an unsigned 64-bit integer")
    out = raw["output"]
    formats = tuple(out["formats"])
    _require(all(f in ("csv", "json") for f in formats), "output.formats", "entries from {csv, json}")
    return RunConfig(geometry, params, mode, ren["quantity"], plan, int(seed), out["directory"], formats, raw)


# ---------------------------------------------------------------------------
# automatic projector length

DENSITY_REFERENCE_SITES = 8
DEFAULT_R0 = 1.0


def auto_projector_length(geometry: LatticeGeometry, params: ModelParams, delta_r: float = 1e-2,
                          r0: Optional[float] = None) -> int:
    """Projector length from the bias bound with oracle spectral data.

    ``r0`` defaults to 1; the oracle's overlap ratio is logged for comparison.

    M_n is taken from the exact ground state when the system is small enough,
    otherwise from the per-site value of an 8-site ring at the same couplings.
    """
    from . import oracle

    spec = oracle.projector_spectrum(geometry, params)
    r0 = DEFAULT_R0 if r0 is None else r0
    if geometry.n_sites <= oracle.MAX_PAULI_SITES:
        ref_geom, scale = geometry, 1.0
    else:
        ref_geom = build_lattice((DENSITY_REFERENCE_SITES,), "periodic")
        scale = geometry.n_sites / DENSITY_REFERENCE_SITES
    mn = scale * oracle.exact_quantity(ref_geom, params, Projector(1), "sre")["m_n"]
    if mn <= 0:
        raise ValueError("estimated M_n is zero; set mode.m explicitly")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        m = min_projector_length(SpectralData(spec["shifted_e_g"], spec["gap"], r0), params.renyi_n,
                                 delta_r, mn)
    log.info("auto projector length m=%d (|E_g|=%.4g, gap=%.4g, r0=%.3g [oracle %.3g], M_n~%.4g)",
             m, spec["shifted_e_g"], spec["gap"], r0, spec["r0"], mn)
    return m
