"""Initial shapes, the time-stepping loop and per-step diagnostics."""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import fem
from .anisotropy import GammaSpec, Isotropic, gamma_from_dict, is_certified
from .errors import (
    ConfigError,
    DegenerateSegment,
    EnergyIncrease,
    IllPosedInitialCurve,
    InvalidShape,
    SingularSystem,
)
from .geometry import (
    PolyCurve,
    Topology,
    arc_length_interpolate,
    enclosed_area,
    interface_energy,
    load_curve,
    mesh_metrics,
    save_curve,
)

logger = logging.getLogger(__name__)

ENERGY_REL_TOL = 1e-10
DENSE_POINTS_PER_UNIT = 2000

SHAPE_FIELDS = {
    "rectangle": ("w", "h"),
    "square": ("s",),
    "right_triangle": ("w", "h"),
    "ellipse": ("semi_x", "semi_y"),
    "file": ("path",),
}


@dataclass(frozen=True)
class Shape:
    kind: str
    params: dict

    def __post_init__(self):
        if self.kind not in SHAPE_FIELDS:
            raise InvalidShape(f"unknown shape {self.kind!r}; choose from {sorted(SHAPE_FIELDS)}")
        missing = [f for f in SHAPE_FIELDS[self.kind] if f not in self.params]
        if missing:
            raise InvalidShape(f"shape {self.kind!r} is missing {missing}")
        if self.kind != "file":
            for f in SHAPE_FIELDS[self.kind]:
                v = self.params[f]
                if not (isinstance(v, (int, float)) and v > 0):
                    raise InvalidShape(f"shape parameter {f} must be positive, got {v!r}")

    @classmethod
    def rectangle(cls, w, h):
        return cls("rectangle", {"w": w, "h": h})

    @classmethod
    def ellipse(cls, semi_x, semi_y):
        return cls("ellipse", {"semi_x": semi_x, "semi_y": semi_y})

    @classmethod
    def square(cls, s):
        return cls("square", {"s": s})

    @classmethod
    def right_triangle(cls, w, h):
        return cls("right_triangle", {"w": w, "h": h})

    @classmethod
    def from_dict(cls, data: dict) -> "Shape":
        if not isinstance(data, dict) or "kind" not in data:
            raise InvalidShape(f"shape must be an object with a 'kind' field, got {data!r}")
        params = {k: v for k, v in data.items() if k != "kind"}
        return cls(str(data["kind"]).lower(), params)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}


@dataclass(frozen=True)
class SimulationConfig:
    topology: Topology
    shape: Shape
    N: int
    tau: float
    t_end: float
    gamma: GammaSpec = field(default_factory=Isotropic)
    sigma: float = 0.0
    eta: float = 100.0
    snapshot_times: tuple = ()
    equilibrium_tol: float = 1e-6
    assert_energy_monotone: bool | None = None

    def __post_init__(self):
        object.__setattr__(self, "topology", Topology(self.topology))
        if not (isinstance(self.N, int) and self.N >= 3):
            raise ConfigError(f"N must be an integer >= 3, got {self.N!r}")
        if not (self.tau > 0.0):
            raise ConfigError(f"tau must be positive, got {self.tau!r}")
        if not (self.t_end >= 0.0):
            raise ConfigError(f"t_end must be non-negative, got {self.t_end!r}")
        if not (self.eta > 0.0):
            raise ConfigError(f"eta must be positive, got {self.eta!r}")
        if not (self.equilibrium_tol >= 0.0):
            raise ConfigError("equilibrium_tol must be non-negative")
        object.__setattr__(self, "snapshot_times", tuple(sorted(float(t) for t in self.snapshot_times)))

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.t_end / self.tau + 1e-9))

    @classmethod
    def from_dict(cls, data: dict) -> "SimulationConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        allowed = {f for f in cls.__dataclass_fields__} | {"h"}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        d = dict(data)
        if "h" in d:
            n_from_h = mesh_nodes(float(d.pop("h")))
            if d.setdefault("N", n_from_h) != n_from_h:
                raise ConfigError("give either N or h, not inconsistent values of both")
        for req in ("topology", "shape", "N", "tau", "t_end"):
            if req not in d:
                raise ConfigError(f"config is missing required field {req!r}")
        try:
            d["topology"] = Topology(d["topology"])
        except ValueError:
            raise ConfigError(f"topology must be 'closed' or 'open', got {d['topology']!r}") from None
        d["shape"] = Shape.from_dict(d["shape"])
        d["gamma"] = gamma_from_dict(d.get("gamma", {"type": "isotropic"}))
        for key in ("tau", "t_end", "sigma", "eta", "equilibrium_tol"):
            if key in d and not isinstance(d[key], (int, float)):
                raise ConfigError(f"{key} must be a number, got {d[key]!r}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "topology": self.topology.value,
            "shape": self.shape.to_dict(),
            "N": self.N,
            "tau": self.tau,
            "t_end": self.t_end,
            "gamma": self.gamma.to_dict(),
            "sigma": self.sigma,
            "eta": self.eta,
            "snapshot_times": list(self.snapshot_times),
            "equilibrium_tol": self.equilibrium_tol,
            "assert_energy_monotone": self.assert_energy_monotone,
        }


def mesh_nodes(h: float) -> int:
    """Segment count for mesh size ``h`` on the unit reference interval."""
    if not h > 0.0:
        raise ConfigError(f"mesh size must be positive, got {h}")
    return int(round(1.0 / h))


def load_config(path) -> SimulationConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        line = text.splitlines()[exc.lineno - 1] if exc.lineno - 1 < len(text.splitlines()) else ""
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}\n    {line}") from None
    return SimulationConfig.from_dict(data)


def _dense(corners: np.ndarray, closed: bool) -> np.ndarray:
    """Refine a polygon edge by edge, keeping every corner exactly."""
    pts = np.vstack([corners, corners[:1]]) if closed else corners
    out = []
    for a, b in zip(pts[:-1], pts[1:]):
        m = max(1, int(math.ceil(np.hypot(*(b - a)) * DENSE_POINTS_PER_UNIT)))
        s = np.arange(m)[:, None] / m
        out.append(a + s * (b - a))
    if not closed:
        out.append(pts[-1:])
    return np.vstack(out)


def _shape_points(shape: Shape, topo: Topology) -> np.ndarray:
    p = shape.params
    closed = topo is Topology.CLOSED
    if shape.kind in ("rectangle", "square"):
        w, h = (p["w"], p["h"]) if shape.kind == "rectangle" else (p["s"], p["s"])
        if closed:
            corners = np.array([[-w / 2, -h / 2], [-w / 2, h / 2], [w / 2, h / 2], [w / 2, -h / 2]])
        else:
            corners = np.array([[-w / 2, 0.0], [-w / 2, h], [w / 2, h], [w / 2, 0.0]])
        return _dense(corners, closed)
    if shape.kind == "right_triangle":
        w, h = p["w"], p["h"]
        if closed:
            corners = np.array([[-w / 3, -h / 3], [-w / 3, 2 * h / 3], [2 * w / 3, -h / 3]])
        else:
            corners = np.array([[0.0, 0.0], [0.0, h], [w, 0.0]])
        return _dense(corners, closed)
    if shape.kind == "ellipse":
        a, b = p["semi_x"], p["semi_y"]
        m = int(DENSE_POINTS_PER_UNIT * 2 * math.pi * max(a, b))
        if closed:
            t = math.pi - 2 * math.pi * np.arange(m) / m
            return np.column_stack([a * np.cos(t), b * np.sin(t)])
        t = math.pi - math.pi * np.arange(m + 1) / m
        pts = np.column_stack([a * np.cos(t), b * np.sin(t)])
        pts[[0, -1], 1] = 0.0
        return pts
    raise InvalidShape(f"cannot build shape {shape.kind!r}")


def build_initial(config: SimulationConfig) -> PolyCurve:
    """Construct the initial shape and resample it to N equal arc-length segments."""
    if config.shape.kind == "file":
        source = load_curve(config.shape.params["path"])
        if source.topology is not config.topology:
            raise InvalidShape("snapshot topology does not match the config")
        return arc_length_interpolate(source, config.N)
    pts = _shape_points(config.shape, config.topology)
    try:
        return arc_length_interpolate(pts, config.N, config.topology)
    except DegenerateSegment as exc:
        raise InvalidShape(str(exc)) from None


@dataclass(frozen=True)
class DiagnosticsRow:
    t: float
    area: float
    energy: float
    mesh_ratio: float
    area_loss_rel: float
    x_l: float | None = None
    x_r: float | None = None
    max_v: float | None = None


CSV_HEADER = ("t", "area", "energy", "mesh_ratio", "area_loss_rel", "x_l", "x_r", "max_v")


class Termination(str, enum.Enum):
    REACHED_T_END = "ReachedTEnd"
    EQUILIBRIUM = "Equilibrium"
    CONTACT_CROSSING = "ContactCrossing"
    SOLVER_FAILURE = "SolverFailure"


@dataclass
class RunResult:
    final_curve: PolyCurve
    diagnostics: list
    snapshots: list
    termination: Termination
    mu: np.ndarray | None = None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.termination in (Termination.REACHED_T_END, Termination.EQUILIBRIUM)

    def energies(self) -> np.ndarray:
        return np.array([r.energy for r in self.diagnostics])

    def snapshot_at(self, t: float, tol: float = 1e-9) -> PolyCurve:
        for ts, c in self.snapshots:
            if abs(ts - t) <= tol * max(1.0, abs(t)):
                return c
        raise KeyError(f"no snapshot at t = {t}")


def detect_equilibrium(row: DiagnosticsRow, tol: float) -> bool:
    return row.max_v is not None and row.max_v < tol


def _diagnostics(curve, t, config, area0, max_v) -> DiagnosticsRow:
    area = enclosed_area(curve)
    return DiagnosticsRow(
        t=t,
        area=area,
        energy=interface_energy(curve, config.gamma, config.sigma),
        mesh_ratio=mesh_metrics(curve).ratio,
        area_loss_rel=(area - area0) / area0 if area0 else 0.0,
        x_l=curve.x_l,
        x_r=curve.x_r,
        max_v=max_v,
    )


def run(
    config: SimulationConfig,
    initial: PolyCurve | None = None,
    on_system: Callable[[int, fem.StepSystem], None] | None = None,
) -> RunResult:
    """Advance the curve from t = 0 to ``config.t_end``.

    ``initial`` overrides the shape construction (used for translated or
    externally prepared curves).  ``on_system`` is called with every
    assembled system before it is solved.
    """
    curve = initial if initial is not None else build_initial(config)
    report = fem.wellposed(curve)
    if not report.ok:
        raise IllPosedInitialCurve(f"initial curve fails {report.failed_condition.value}: {report.detail}")

    check_energy = config.assert_energy_monotone
    if check_energy is None or check_energy:
        certified = is_certified(config.gamma)
        if check_energy and not certified:
            logger.warning("gamma is not certified; energy monotonicity is recorded but not asserted")
        check_energy = certified

    area0 = enclosed_area(curve)
    rows = [_diagnostics(curve, 0.0, config, area0, None)]
    snap_times = list(config.snapshot_times)
    snapshots = []

    def take_snapshots(t, c):
        while snap_times and snap_times[0] <= t + 0.5 * config.tau:
            ts = snap_times.pop(0)
            if abs(ts - t) > 0.5 * config.tau:
                logger.warning("snapshot time %g is not on the step grid; using t = %g", ts, t)
            snapshots.append((ts, c))

    take_snapshots(0.0, curve)
    termination = Termination.REACHED_T_END
    message = ""
    mu = None
    for m in range(config.n_steps):
        report = fem.wellposed(curve)
        if not report.ok:
            termination = Termination.SOLVER_FAILURE
            message = f"step {m}: curve fails {report.failed_condition.value}"
            break
        try:
            system = fem.assemble(curve, config.gamma, config.tau, config.sigma, config.eta)
            if on_system is not None:
                on_system(m, system)
            sol = fem.solve(system)
        except (SingularSystem, DegenerateSegment) as exc:
            termination = Termination.SOLVER_FAILURE
            message = f"step {m}: {exc}"
            break
        new = sol.new_curve
        t = (m + 1) * config.tau
        if not new.is_closed and new.x_l > new.x_r:
            termination = Termination.CONTACT_CROSSING
            message = f"step {m}: contact points crossed (x_l = {new.x_l}, x_r = {new.x_r})"
            break
        try:
            v = fem.normal_velocity(curve, new, config.tau)
            row = _diagnostics(new, t, config, area0, float(np.max(np.abs(v))))
        except DegenerateSegment as exc:
            termination = Termination.SOLVER_FAILURE
            message = f"step {m}: {exc}"
            break
        prev_energy = rows[-1].energy
        if check_energy and row.energy > prev_energy + ENERGY_REL_TOL * abs(prev_energy):
            raise EnergyIncrease(m, prev_energy, row.energy)
        rows.append(row)
        curve = new
        mu = sol.mu
        take_snapshots(t, curve)
        if detect_equilibrium(row, config.equilibrium_tol):
            termination = Termination.EQUILIBRIUM
            break
    if termination in (Termination.REACHED_T_END, Termination.EQUILIBRIUM) and snap_times:
        # Requested times past the last step: the final state stands in for them.
        t_final = rows[-1].t
        for ts in snap_times:
            if ts <= config.t_end + 1e-12:
                logger.info("snapshot time %g taken from final state at t = %g", ts, t_final)
                snapshots.append((ts, curve))
    if message:
        logger.warning(message)
    return RunResult(curve, rows, snapshots, termination, mu, message)


def diagnostics_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(["" if getattr(r, k) is None else repr(float(getattr(r, k))) for k in CSV_HEADER])
    return buf.getvalue()


def snapshot_name(t: float) -> str:
    return f"snap_{t:.10g}.json"


def write_outputs(result: RunResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _atomic_write(out / "diagnostics.csv", diagnostics_csv(result.diagnostics))
    for t, c in result.snapshots:
        save_curve(c, out / snapshot_name(t))


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)
