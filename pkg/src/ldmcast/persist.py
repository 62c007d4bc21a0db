"""JSON persistence for instances and results.

Both file kinds are plain JSON objects carrying ``schema_version`` and
``kind``.  Complex numbers are stored as ``[re, im]`` pairs and every physical
field name ends in its unit.  Floats are written with ``repr`` precision, so
loading a saved instance reproduces every numeric field bit for bit.

Instance schema (version 1)::

    kind                      "ldmcast.instance"
    N, K, L                   ints
    seed                      int or null
    bandwidth_hz, eta         floats
    bs_power_watts            [N]
    backhaul_bps              [N]
    noise_watts               [K]
    channels                  [K][N*L][2]   (linear scale, [re, im])
    large_scale_gain_linear   [K][N] or null
    bs_positions_m            [N][2] or null
    user_positions_m          [K][2] or null
    config                    generating scenario config or null

Result schema (version 1) holds the solver name and parameters, a ``status``
string, the embedded instance, and for every solution its beamformers
(``[K+1][N*L][2]``), clustering, rates in bit/s/Hz and bit/s, objective,
cluster sizes and feasibility report.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .model import ProblemInstance, Solution, check_feasibility, make_solution

SCHEMA_VERSION = 1
INSTANCE_KIND = "ldmcast.instance"
RESULT_KIND = "ldmcast.result"


class SchemaError(ValueError):
    """A file parsed as JSON but does not match the expected layout."""


def complex_to_pairs(a) -> list:
    a = np.asarray(a, complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def pairs_to_complex(data) -> np.ndarray:
    arr = np.asarray(data, float)
    if arr.ndim < 1 or arr.shape[-1] != 2:
        raise SchemaError("complex arrays must be stored as [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def _opt_list(a):
    return None if a is None else np.asarray(a, float).tolist()


def _field(data: dict, name: str):
    if name not in data:
        raise SchemaError(f"missing field: {name}")
    return data[name]


def _check_header(data: dict, kind: str) -> None:
    if not isinstance(data, dict):
        raise SchemaError("top level must be a JSON object")
    if _field(data, "kind") != kind:
        raise SchemaError(f"kind must be {kind!r}, got {data['kind']!r}")
    version = _field(data, "schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {version}")


def instance_to_dict(instance: ProblemInstance, config: dict | None = None) -> dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": INSTANCE_KIND,
        "software_version": __version__,
        "N": instance.N,
        "K": instance.K,
        "L": instance.L,
        "seed": instance.seed,
        "bandwidth_hz": instance.bandwidth,
        "eta": instance.eta,
        "bs_power_watts": instance.bs_power.tolist(),
        "backhaul_bps": instance.backhaul.tolist(),
        "noise_watts": instance.noise.tolist(),
        "channels": complex_to_pairs(instance.channels),
        "large_scale_gain_linear": _opt_list(instance.large_scale_gain),
        "bs_positions_m": _opt_list(instance.bs_positions),
        "user_positions_m": _opt_list(instance.user_positions),
        "config": config,
    }


def instance_from_dict(data: dict) -> ProblemInstance:
    _check_header(data, INSTANCE_KIND)
    channels = pairs_to_complex(_field(data, "channels"))
    K, N, L = (int(_field(data, name)) for name in ("K", "N", "L"))
    if channels.shape != (K, N * L):
        raise SchemaError(f"channels: expected shape ({K}, {N * L}, 2), got {channels.shape + (2,)}")

    def opt(name):
        value = data.get(name)
        return None if value is None else np.asarray(value, float)

    try:
        return ProblemInstance(
            channels=channels,
            bs_power=np.asarray(_field(data, "bs_power_watts"), float),
            backhaul=np.asarray(_field(data, "backhaul_bps"), float),
            noise=np.asarray(_field(data, "noise_watts"), float),
            bandwidth=float(_field(data, "bandwidth_hz")),
            eta=float(_field(data, "eta")),
            n_antennas=L,
            large_scale_gain=opt("large_scale_gain_linear"),
            bs_positions=opt("bs_positions_m"),
            user_positions=opt("user_positions_m"),
            seed=data.get("seed"),
        )
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc


def dumps(data: dict) -> str:
    return json.dumps(data, indent=1, allow_nan=False) + "\n"


def _json_safe(value):
    """Replace non-finite floats (JSON has no inf/nan) with strings."""
    if isinstance(value, float) and not np.isfinite(value):
        return repr(value)
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.generic):
        return _json_safe(value.item())
    if isinstance(value, np.ndarray):
        return _json_safe(value.tolist())
    return value


def save_instance(instance: ProblemInstance, path, config: dict | None = None) -> None:
    Path(path).write_text(dumps(instance_to_dict(instance, config)))


def load_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def load_instance(path) -> ProblemInstance:
    return instance_from_dict(load_json(path))


def solution_to_dict(instance: ProblemInstance, sol: Solution, tol: float = 1e-6) -> dict[str, Any]:
    r = sol.rates.r
    B = instance.bandwidth
    report = check_feasibility(instance, sol, tol)
    meta = {k: v for k, v in sol.meta.items() if k not in ("runs", "trace")}
    return {
        "objective_bps": sol.objective,
        "objective_bps_per_hz": sol.objective / B,
        "rates_bps_per_hz": r.tolist(),
        "rates_bps": (B * r).tolist(),
        "multicast_rate_bps": sol.multicast_rate_bps(instance),
        "unicast_sum_rate_bps": sol.unicast_rate_bps(instance),
        "multicast_cluster_size": sol.clustering.multicast_size(),
        "mean_unicast_cluster_size": sol.clustering.mean_unicast_size(),
        "clustering": np.asarray(sol.clustering.s, int).tolist(),
        "beamformers": complex_to_pairs(sol.beamformers.w),
        "feasibility": {**report.as_dict(), "tol": tol, "feasible": report.feasible(tol)},
        "meta": _json_safe(meta),
    }


def solution_from_dict(instance: ProblemInstance, data: dict) -> Solution:
    w = pairs_to_complex(_field(data, "beamformers"))
    if w.shape != (instance.K + 1, instance.N * instance.L):
        raise SchemaError("beamformers do not match the instance dimensions")
    s = np.asarray(_field(data, "clustering"), float)
    r = np.asarray(_field(data, "rates_bps_per_hz"), float)
    try:
        return make_solution(instance, w, s, r)
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc


def result_document(instance: ProblemInstance, solver: str, params: dict, status: str,
                    solutions: dict[str, Solution] | None = None, extra: dict | None = None,
                    tol: float = 1e-6) -> dict[str, Any]:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": RESULT_KIND,
        "software_version": __version__,
        "solver": solver,
        "params": params,
        "status": status,
        "seed": instance.seed,
        "instance": instance_to_dict(instance),
        "solutions": {name: solution_to_dict(instance, sol, tol) for name, sol in (solutions or {}).items()},
    }
    doc.update(_json_safe(extra or {}))
    return doc


def save_result(doc: dict, path) -> None:
    Path(path).write_text(dumps(_json_safe(doc)))


def load_result(path) -> tuple[ProblemInstance, dict, dict[str, Solution]]:
    data = load_json(path)
    _check_header(data, RESULT_KIND)
    instance = instance_from_dict(_field(data, "instance"))
    sols = {name: solution_from_dict(instance, sd) for name, sd in _field(data, "solutions").items()}
    return instance, data, sols
