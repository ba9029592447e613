"""Convergence studies against a fine reference trajectory."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .driver import SimulationConfig, _atomic_write, run
from .errors import ConfigError
from .geometry import PolyCurve, load_curve, manifold_distance, save_curve

logger = logging.getLogger(__name__)

DEFAULT_H_LIST = (2.0**-3, 2.0**-4, 2.0**-5)
DEFAULT_EVAL_TIMES = (0.25, 0.5, 1.0)
DEFAULT_REFERENCE = (2.0**-7, 2.0**-14)
MESH_CONVENTIONS = ("reference", "physical")


@dataclass(frozen=True)
class ConvergenceSpec:
    """Base run plus the mesh sizes to compare (time step tied as tau = h^2).

    ``mesh`` selects how a mesh size maps to a node count: ``"reference"``
    uses ``N = 1/h`` on the unit parameter interval, ``"physical"`` uses
    ``N = L0/h`` so that ``h`` is the initial segment length.
    """

    base: SimulationConfig
    h_list: tuple = DEFAULT_H_LIST
    eval_times: tuple = DEFAULT_EVAL_TIMES
    h_e: float = DEFAULT_REFERENCE[0]
    tau_e: float = DEFAULT_REFERENCE[1]
    mesh: str = "reference"

    def __post_init__(self):
        object.__setattr__(self, "h_list", tuple(sorted((float(h) for h in self.h_list), reverse=True)))
        object.__setattr__(self, "eval_times", tuple(sorted(float(t) for t in self.eval_times)))
        if not self.h_list:
            raise ConfigError("h_list must not be empty")
        if self.mesh not in MESH_CONVENTIONS:
            raise ConfigError(f"mesh must be one of {MESH_CONVENTIONS}, got {self.mesh!r}")
        if not self.h_e < min(self.h_list):
            raise ConfigError("reference mesh size h_e must be finer than every entry of h_list")
        if not self.eval_times:
            raise ConfigError("eval_times must not be empty")
        for t in self.eval_times:
            if t > self.t_end + 1e-12:
                raise ConfigError(f"eval time {t} exceeds t_end {self.t_end}")
            for step in [self.tau_e] + [h * h for h in self.h_list]:
                if not _is_multiple(t, step):
                    raise ConfigError(f"eval time {t} is not a multiple of time step {step}")

    @property
    def t_end(self) -> float:
        return max(self.base.t_end, max(self.eval_times)) if self.base.t_end else max(self.eval_times)

    def nodes_for(self, h: float) -> int:
        if self.mesh == "reference":
            return int(round(1.0 / h))
        from .driver import build_initial

        length = build_initial(replace(self.base, N=max(self.base.N, 64))).length()
        return int(round(length / h))

    def config_for(self, h: float, tau: float) -> SimulationConfig:
        return replace(
            self.base,
            N=self.nodes_for(h),
            tau=tau,
            t_end=max(self.eval_times),
            snapshot_times=self.eval_times,
            equilibrium_tol=0.0,
        )

    @classmethod
    def from_dict(cls, data: dict) -> "ConvergenceSpec":
        if not isinstance(data, dict) or "base" not in data:
            raise ConfigError("convergence spec needs a 'base' config object")
        base = dict(data["base"])
        if "h" not in base:
            base.setdefault("N", 16)
        base.setdefault("tau", 1.0)
        base.setdefault("t_end", 0.0)
        ref = data.get("reference", {})
        kwargs = {
            "base": SimulationConfig.from_dict(base),
            "h_list": tuple(data.get("h_list", DEFAULT_H_LIST)),
            "eval_times": tuple(data.get("eval_times", DEFAULT_EVAL_TIMES)),
            "h_e": float(ref.get("h_e", DEFAULT_REFERENCE[0])),
            "tau_e": float(ref.get("tau_e", DEFAULT_REFERENCE[1])),
            "mesh": data.get("mesh", "reference"),
        }
        return cls(**kwargs)


def _is_multiple(t: float, step: float) -> bool:
    k = t / step
    return abs(k - round(k)) <= 1e-9 * max(1.0, k)


@dataclass(frozen=True)
class ConvergenceRow:
    h: float
    t: float
    error: float
    order: float | None


@dataclass
class ConvergenceResult:
    rows: list
    fitted_order: dict
    h_list: tuple
    eval_times: tuple

    def passed(self, threshold: float = 1.7) -> bool:
        if len(self.h_list) < 2:
            return True
        return all(o is not None and o >= threshold for o in self.fitted_order.values())

    def to_csv(self) -> str:
        lines = ["h,t,error,order"]
        for r in self.rows:
            order = "" if r.order is None else repr(r.order)
            lines.append(f"{r.h!r},{r.t!r},{r.error!r},{order}")
        return "\n".join(lines) + "\n"


def fitted_order(hs, errors) -> float | None:
    """Least-squares slope of log(error) against log(h)."""
    hs = np.asarray(hs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if len(hs) < 2 or np.any(errors <= 0.0):
        return None
    return float(np.polyfit(np.log(hs), np.log(errors), 1)[0])


def _snapshots(config: SimulationConfig) -> dict:
    result = run(config)
    if not result.ok:
        raise RuntimeError(f"run with N = {config.N}, tau = {config.tau} ended with {result.termination.value}: {result.message}")
    return {t: c for t, c in result.snapshots}


def _config_key(config: SimulationConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def reference_snapshots(spec: ConvergenceSpec, cache_dir=None) -> dict:
    """Fine-grid trajectory at the evaluation times, cached on disk when possible."""
    config = spec.config_for(spec.h_e, spec.tau_e)
    cache = None
    if cache_dir is not None:
        cache = Path(cache_dir) / f"reference_{_config_key(config)}"
        files = {t: cache / f"snap_{t:.10g}.json" for t in spec.eval_times}
        if all(f.exists() for f in files.values()):
            logger.info("reusing cached reference trajectory in %s", cache)
            return {t: load_curve(f) for t, f in files.items()}
    logger.info("computing reference trajectory with N = %d, tau = %g", config.N, config.tau)
    snaps = _snapshots(config)
    if cache is not None:
        cache.mkdir(parents=True, exist_ok=True)
        for t, c in snaps.items():
            save_curve(c, cache / f"snap_{t:.10g}.json")
    return snaps


def _worker_count(n_jobs: int) -> int:
    env = os.environ.get("CURVEFLOW_THREADS")
    cap = int(env) if env and env.isdigit() and int(env) > 0 else (os.cpu_count() or 1)
    return max(1, min(cap, n_jobs))


def converge(spec: ConvergenceSpec, cache_dir=None) -> ConvergenceResult:
    ref = reference_snapshots(spec, cache_dir)
    configs = [spec.config_for(h, h * h) for h in spec.h_list]
    workers = _worker_count(len(configs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            sweep = list(pool.map(_snapshots, configs))
    else:
        sweep = [_snapshots(c) for c in configs]

    errors = {t: [] for t in spec.eval_times}
    rows = []
    for h, snaps in zip(spec.h_list, sweep):
        for t in spec.eval_times:
            errors[t].append(manifold_distance(snaps[t], ref[t]))
    for t in spec.eval_times:
        for i, h in enumerate(spec.h_list):
            order = None
            if i > 0:
                e0, e1 = errors[t][i - 1], errors[t][i]
                h0 = spec.h_list[i - 1]
                if e0 > 0.0 and e1 > 0.0:
                    order = math.log(e0 / e1) / math.log(h0 / h)
            rows.append(ConvergenceRow(h, t, errors[t][i], order))
    if len(spec.h_list) < 2:
        logger.warning("only one mesh size given; no convergence order can be computed")
    fits = {t: fitted_order(spec.h_list, errors[t]) for t in spec.eval_times}
    return ConvergenceResult(rows, fits, spec.h_list, spec.eval_times)


def write_convergence(result: ConvergenceResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / "convergence.csv", result.to_csv())
    summary = {"fitted_order": {repr(t): o for t, o in result.fitted_order.items()}}
    _atomic_write(out / "convergence_fit.json", json.dumps(summary, indent=2) + "\n")


def centroid_aligned_distance(a: PolyCurve, b: PolyCurve) -> float:
    """Manifold distance after translating ``b`` onto ``a``'s centroid."""
    shift = a.centroid() - b.centroid()
    if a.is_closed:
        b = b.translated(*shift)
    else:
        b = b.translated(shift[0])
    return manifold_distance(a, b)
