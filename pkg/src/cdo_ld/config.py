"""JSON pool/tranche configuration: schema, loading and object builders.

A config looks like::

    {"schema_version": 1,
     "tranche": {"alpha": 0.1, "beta": 0.15, "R": 0.05, "T": 5,
                 "premium_dates": [1, 2, 3, 4, 5]},
     "pool": {"kind": "merton_gamma", "theta": 6, "K": 0.857,
              "sigma_scale": 0.3, "sigma_shape": 2, "N": 300}}

Pool kinds are ``explicit`` (a list of name laws, each with an optional
``count``), ``merton_gamma`` (the gamma-quantile volatility pool) and
``two_type`` (every third name follows ``a``, the rest ``b``).  Name laws are
``tabulated`` (``cdf`` as ``[t, F(t)]`` pairs plus ``tail_mass``),
``discrete``, ``merton`` and ``uniform`` (default probability ``p`` spread
uniformly over ``[0, T)``).  An optional ``correlation`` block holds either
``finite_state`` states or a ``gaussian_copula`` grid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .correlation import SystemicMixture, SystemicState, copula_mixture, gaussian_copula_grid
from .exceptions import ConfigError
from .merton import (GammaVolSpec, MertonDistribution, MertonParams, build_gamma_merton_pool,
                     gamma_merton_default_probs, limiting_measure)
from .pool import (DiscreteTimeDistribution, LossProbMeasure, PoolSpec, TabulatedDistribution,
                   TrancheSpec, two_type_pool)

SCHEMA_VERSION = 1

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_prob = {"type": "number", "minimum": 0, "maximum": 1}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "tranche", "pool"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "description": {"type": "string"},
        "tranche": {
            "type": "object",
            "required": ["alpha", "beta", "R", "T", "premium_dates"],
            "additionalProperties": False,
            "properties": {
                "alpha": _prob, "beta": _prob, "R": _num, "T": _pos,
                "premium_dates": {"type": "array", "items": _pos, "minItems": 1},
            },
        },
        "pool": {"$ref": "#/$defs/pool"},
        "correlation": {
            "oneOf": [
                {"type": "object",
                 "required": ["kind", "states"],
                 "additionalProperties": False,
                 "properties": {
                     "kind": {"const": "finite_state"},
                     "states": {"type": "array", "minItems": 1, "items": {
                         "type": "object",
                         "required": ["label", "prob", "pool"],
                         "additionalProperties": False,
                         "properties": {"label": {"type": "string"}, "prob": _pos,
                                        "pool": {"$ref": "#/$defs/pool"}},
                     }},
                 }},
                {"type": "object",
                 "required": ["kind", "M", "rho"],
                 "additionalProperties": False,
                 "properties": {
                     "kind": {"const": "gaussian_copula"},
                     "M": {"type": "integer", "minimum": 1},
                     "rho": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                     "base_pool": {"$ref": "#/$defs/pool"},
                 }},
            ],
        },
    },
    "$defs": {
        "name": {
            "oneOf": [
                {"type": "object", "required": ["kind", "cdf", "tail_mass"], "additionalProperties": False,
                 "properties": {
                     "kind": {"const": "tabulated"},
                     "cdf": {"type": "array", "minItems": 2,
                             "items": {"type": "array", "prefixItems": [_num, _prob],
                                       "minItems": 2, "maxItems": 2}},
                     "tail_mass": _prob,
                     "count": {"type": "integer", "minimum": 1}}},
                {"type": "object", "required": ["kind", "times", "probs"], "additionalProperties": False,
                 "properties": {
                     "kind": {"const": "discrete"},
                     "times": {"type": "array", "items": _num, "minItems": 1},
                     "probs": {"type": "array", "items": _prob, "minItems": 1},
                     "tail_mass": _prob,
                     "count": {"type": "integer", "minimum": 1}}},
                {"type": "object", "required": ["kind", "theta", "K", "sigma"], "additionalProperties": False,
                 "properties": {
                     "kind": {"const": "merton"}, "theta": _num,
                     "K": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}, "sigma": _pos,
                     "count": {"type": "integer", "minimum": 1}}},
                {"type": "object", "required": ["kind", "p"], "additionalProperties": False,
                 "properties": {
                     "kind": {"const": "uniform"}, "p": _prob,
                     "count": {"type": "integer", "minimum": 1}}},
            ],
        },
        "pool": {
            "oneOf": [
                {"type": "object", "required": ["kind", "names"], "additionalProperties": False,
                 "properties": {"kind": {"const": "explicit"},
                                "names": {"type": "array", "minItems": 1, "items": {"$ref": "#/$defs/name"}}}},
                {"type": "object", "required": ["kind", "theta", "K", "sigma_scale", "sigma_shape", "N"],
                 "additionalProperties": False,
                 "properties": {"kind": {"const": "merton_gamma"}, "theta": _num,
                                "K": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                                "sigma_scale": _pos, "sigma_shape": _pos,
                                "N": {"type": "integer", "minimum": 1},
                                "n_quad": {"type": "integer", "minimum": 8}}},
                {"type": "object", "required": ["kind", "N", "a", "b"], "additionalProperties": False,
                 "properties": {"kind": {"const": "two_type"},
                                "N": {"type": "integer", "minimum": 1},
                                "a": {"$ref": "#/$defs/name"}, "b": {"$ref": "#/$defs/name"}}},
            ],
        },
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(SCHEMA)


def validate_document(doc) -> None:
    """Raise :class:`ConfigError` listing every schema violation in ``doc``."""
    errors = sorted(_VALIDATOR.iter_errors(doc), key=lambda e: [str(p) for p in e.absolute_path])
    if errors:
        lines = []
        for e in errors:
            where = "/".join(str(p) for p in e.absolute_path) or "<root>"
            lines.append(f"{where}: {e.message}")
        raise ConfigError("invalid config:\n  " + "\n  ".join(lines))


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def build_name(spec: dict, T):
    kind = spec["kind"]
    try:
        if kind == "tabulated":
            cdf = np.asarray(spec["cdf"], dtype=float)
            return TabulatedDistribution(cdf[:, 0], cdf[:, 1], spec["tail_mass"])
        if kind == "discrete":
            return DiscreteTimeDistribution(spec["times"], spec["probs"], spec.get("tail_mass"))
        if kind == "merton":
            return MertonDistribution(MertonParams(spec["theta"], spec["K"], spec["sigma"]))
        if kind == "uniform":
            return TabulatedDistribution.from_default_prob(spec["p"], T)
    except ValueError as exc:
        raise ConfigError(f"bad {kind} name: {exc}") from exc
    raise ConfigError(f"unknown name kind {kind!r}")


def _gamma_spec(pool: dict) -> GammaVolSpec:
    return GammaVolSpec(pool["sigma_scale"], pool["sigma_shape"])


def pool_size(pool: dict) -> int:
    if pool["kind"] == "explicit":
        return sum(n.get("count", 1) for n in pool["names"])
    return int(pool["N"])


def build_pool(pool: dict, T, N=None) -> PoolSpec:
    """Pool object for a pool block; ``N`` overrides the size of generated pools."""
    kind = pool["kind"]
    if kind == "explicit":
        if N is not None and N != pool_size(pool):
            raise ConfigError("explicit pools have a fixed size")
        names = []
        for spec in pool["names"]:
            d = build_name(spec, T)
            names.extend([d] * spec.get("count", 1))
        return PoolSpec(tuple(names))
    N = pool_size(pool) if N is None else int(N)
    if kind == "merton_gamma":
        return build_gamma_merton_pool(_gamma_spec(pool), pool["theta"], pool["K"], N)
    if kind == "two_type":
        return two_type_pool(N, build_name(pool["a"], T), build_name(pool["b"], T))
    raise ConfigError(f"unknown pool kind {kind!r}")


def pool_default_probs(pool: dict, T, N=None) -> np.ndarray:
    """Per-name default probabilities before ``T``."""
    if pool["kind"] == "merton_gamma":
        N = pool_size(pool) if N is None else int(N)
        return gamma_merton_default_probs(_gamma_spec(pool), pool["theta"], pool["K"], N, T)
    return build_pool(pool, T, N).default_probs(T)


def pool_measure(pool: dict, T, N=None) -> LossProbMeasure:
    """Empirical loss measure of the pool of size ``N`` (default: configured size)."""
    return LossProbMeasure.from_atoms(pool_default_probs(pool, T, N))


def pool_limit_measure(pool: dict, T) -> LossProbMeasure | None:
    """Large-pool limit of the loss measure, or None for explicit pools."""
    kind = pool["kind"]
    if kind == "merton_gamma":
        return limiting_measure(_gamma_spec(pool), pool["theta"], pool["K"], T, pool.get("n_quad", 128))
    if kind == "two_type":
        pa = float(build_name(pool["a"], T).default_prob(T))
        pb = float(build_name(pool["b"], T).default_prob(T))
        return LossProbMeasure.from_atoms([pa, pb], [1.0 / 3.0, 2.0 / 3.0])
    return None


# ---------------------------------------------------------------------------
# loaded config
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PricingConfig:
    """Validated config with the tranche built and the pool block kept as data."""

    tranche: TrancheSpec
    pool: dict
    correlation: dict | None = None
    source: str | None = None

    @property
    def N(self) -> int:
        return pool_size(self.pool)

    def build_pool(self, N=None) -> PoolSpec:
        return build_pool(self.pool, self.tranche.T, N)

    def measure(self, N=None) -> LossProbMeasure:
        return pool_measure(self.pool, self.tranche.T, N)

    def limit_measure(self) -> LossProbMeasure | None:
        return pool_limit_measure(self.pool, self.tranche.T)

    def mixture(self) -> SystemicMixture | None:
        """Systemic mixture for the correlation block, if any."""
        corr = self.correlation
        if corr is None:
            return None
        T = self.tranche.T
        try:
            if corr["kind"] == "finite_state":
                states = []
                for st in corr["states"]:
                    if pool_size(st["pool"]) != self.N:
                        raise ConfigError(f"state {st['label']!r} pool size differs from the main pool")
                    states.append(SystemicState(st["label"], float(st["prob"]), pool_measure(st["pool"], T)))
                return SystemicMixture(tuple(states))
            base = corr.get("base_pool", self.pool)
            grid = gaussian_copula_grid(corr["M"], corr["rho"])
            return copula_mixture(pool_default_probs(base, T), grid)
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad correlation block: {exc}") from exc


def parse_config(doc, source=None) -> PricingConfig:
    validate_document(doc)
    t = doc["tranche"]
    try:
        tranche = TrancheSpec(float(t["alpha"]), float(t["beta"]), float(t["R"]), float(t["T"]),
                              tuple(float(d) for d in t["premium_dates"]))
    except ValueError as exc:
        raise ConfigError(f"bad tranche: {exc}") from exc
    cfg = PricingConfig(tranche, doc["pool"], doc.get("correlation"), source)
    # build once so that semantic errors surface before any computation
    if cfg.pool["kind"] != "merton_gamma":
        cfg.build_pool()
    return cfg


def load_config(path) -> PricingConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return parse_config(doc, str(path))


def tranche_to_dict(tranche: TrancheSpec) -> dict:
    return {"alpha": tranche.alpha, "beta": tranche.beta, "R": tranche.R, "T": tranche.T,
            "premium_dates": list(tranche.premium_dates)}


def tabulate_pool(pool: PoolSpec, T, n_points=101) -> dict:
    """Explicit pool block with every name tabulated on ``n_points`` times over ``[0, T]``.

    The mass after ``T`` is moved to the tail, so the tabulated names agree
    with the originals on ``[0, T]``.
    """
    if n_points < 2:
        raise ValueError("need at least two grid points")
    times = np.linspace(0.0, T, n_points)
    names = []
    for d in pool.names:
        F = np.asarray(d.cdf(times), dtype=float)
        F = np.maximum.accumulate(np.clip(F, 0.0, 1.0))
        F[0] = 0.0
        # tail takes the complement so that F(T) + tail_mass = 1 holds exactly
        tail = 1.0 - float(F[-1])
        names.append({"kind": "tabulated", "cdf": [[float(t), float(f)] for t, f in zip(times, F)],
                      "tail_mass": tail})
    return {"kind": "explicit", "names": names}


def dump_config(tranche: TrancheSpec, pool: dict, correlation: dict | None = None) -> str:
    doc = {"schema_version": SCHEMA_VERSION, "tranche": tranche_to_dict(tranche), "pool": pool}
    if correlation is not None:
        doc["correlation"] = correlation
    return json.dumps(doc, indent=1) + "\n"
