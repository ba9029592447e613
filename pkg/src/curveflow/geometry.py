"""Polygonal curves and the discrete geometric quantities defined on them.

A curve is either ``closed`` (N nodes, implicit wrap-around) or ``open``
(N + 1 nodes whose first and last entries sit on the substrate ``y = 0``).
Segment ``j`` always joins node ``j`` to node ``j + 1`` (mod N when closed).

The outward normal of a segment with unit tangent ``t = (tx, ty)`` is
``(-ty, tx)``.  For that to point outward, closed curves are traversed
clockwise, which is also the orientation for which :func:`enclosed_area`
is positive.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import shapely
from shapely.validation import explain_validity

from .errors import (
    DegenerateSegment,
    DimensionMismatch,
    SelfIntersectingCurve,
    TopologyMismatch,
)

logger = logging.getLogger(__name__)

DEGENERATE_REL_TOL = 1e-12


class Topology(str, enum.Enum):
    CLOSED = "closed"
    OPEN = "open"


def _shoelace(nodes: np.ndarray, closed: bool) -> float:
    if closed:
        prev = np.roll(nodes, 1, axis=0)
        cur = nodes
    else:
        prev = nodes[:-1]
        cur = nodes[1:]
    return 0.5 * float(np.sum((cur[:, 0] - prev[:, 0]) * (cur[:, 1] + prev[:, 1])))


@dataclass(frozen=True, eq=False)
class PolyCurve:
    """Ordered polygonal curve.

    Use :meth:`closed` / :meth:`open` to build a curve from user data; they
    normalise the orientation.  The bare constructor only checks shapes and
    the substrate condition, and is what the time stepper uses internally.
    """

    topology: Topology
    nodes: np.ndarray

    def __post_init__(self):
        topo = Topology(self.topology)
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise DimensionMismatch(f"nodes must have shape (n, 2), got {nodes.shape}")
        if not np.all(np.isfinite(nodes)):
            raise ValueError("curve nodes must be finite")
        if topo is Topology.CLOSED and len(nodes) < 3:
            raise ValueError("a closed curve needs at least 3 nodes")
        if topo is Topology.OPEN:
            if len(nodes) < 3:
                raise ValueError("an open curve needs at least 3 nodes (N >= 2)")
            if nodes[0, 1] != 0.0 or nodes[-1, 1] != 0.0:
                raise ValueError("open curve endpoints must lie exactly on y = 0")
        nodes.setflags(write=False)
        object.__setattr__(self, "topology", topo)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def closed(cls, nodes) -> "PolyCurve":
        nodes = np.asarray(nodes, dtype=float)
        if _shoelace(nodes, closed=True) < 0.0:
            logger.info("reorienting closed curve to clockwise traversal")
            nodes = nodes[::-1].copy()
        return cls(Topology.CLOSED, nodes)

    @classmethod
    def open(cls, nodes) -> "PolyCurve":
        nodes = np.asarray(nodes, dtype=float)
        if nodes[0, 0] > nodes[-1, 0]:
            logger.info("reversing open curve so that x_l <= x_r")
            nodes = nodes[::-1].copy()
        return cls(Topology.OPEN, nodes)

    @property
    def is_closed(self) -> bool:
        return self.topology is Topology.CLOSED

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_segments(self) -> int:
        return len(self.nodes) if self.is_closed else len(self.nodes) - 1

    @property
    def x_l(self) -> float | None:
        return None if self.is_closed else float(self.nodes[0, 0])

    @property
    def x_r(self) -> float | None:
        return None if self.is_closed else float(self.nodes[-1, 0])

    def segment_vectors(self) -> np.ndarray:
        """Edge vectors ``h_j = X_{j+1} - X_j``."""
        if self.is_closed:
            return np.roll(self.nodes, -1, axis=0) - self.nodes
        return np.diff(self.nodes, axis=0)

    def length(self) -> float:
        return float(np.sum(np.hypot(*self.segment_vectors().T)))

    def degenerate_threshold(self) -> float:
        return DEGENERATE_REL_TOL * self.length() / self.n_segments

    def translated(self, dx: float, dy: float = 0.0) -> "PolyCurve":
        if not self.is_closed and dy != 0.0:
            raise ValueError("open curves can only be translated along the substrate")
        return PolyCurve(self.topology, self.nodes + np.array([dx, dy]))

    def centroid(self) -> np.ndarray:
        c = shapely.Polygon(self.nodes).centroid
        return np.array([c.x, c.y])

    def to_dict(self) -> dict:
        return {"topology": self.topology.value, "nodes": self.nodes.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "PolyCurve":
        topo = Topology(data["topology"])
        nodes = data["nodes"]
        return cls.closed(nodes) if topo is Topology.CLOSED else cls.open(nodes)


def save_curve(curve: PolyCurve, path) -> None:
    """Write a snapshot file; ``repr`` of a float round-trips exactly."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(curve.to_dict()))
    tmp.replace(path)


def load_curve(path) -> PolyCurve:
    return PolyCurve.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class SegmentFrames:
    """Per-segment length, unit tangent, outward normal and inclination."""

    length: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray
    theta: np.ndarray

    def __len__(self):
        return len(self.length)


def segment_frames(curve: PolyCurve) -> SegmentFrames:
    h = curve.segment_vectors()
    length = np.hypot(h[:, 0], h[:, 1])
    eps = curve.degenerate_threshold()
    bad = np.flatnonzero(length <= eps)
    if bad.size:
        raise DegenerateSegment(
            f"segment {int(bad[0])} has length {length[bad[0]]:.3e} <= {eps:.3e}"
        )
    tangent = h / length[:, None]
    normal = np.column_stack([-tangent[:, 1], tangent[:, 0]])
    theta = np.arctan2(h[:, 1], h[:, 0])
    # arctan2 returns -pi for (-1, -0.0); keep the (-pi, pi] branch
    theta = np.where(theta <= -math.pi, math.pi, theta)
    return SegmentFrames(length, tangent, normal, theta)


def enclosed_area(curve: PolyCurve) -> float:
    """Discrete area; the substrate closure of an open curve adds nothing."""
    return _shoelace(curve.nodes, curve.is_closed)


def interface_energy(curve: PolyCurve, gamma, sigma: float = 0.0) -> float:
    """Total interfacial energy; open curves subtract ``sigma (x_r - x_l)``."""
    frames = segment_frames(curve)
    w = float(np.sum(frames.length * gamma.value(frames.theta)))
    if not curve.is_closed:
        w -= sigma * (curve.x_r - curve.x_l)
    return w


def _one_sided(curve: PolyCurve, u: np.ndarray, kind: str) -> tuple[np.ndarray, np.ndarray]:
    """Values at the start (rho_{j-1}^+) and end (rho_j^-) of every segment."""
    u = np.asarray(u, dtype=float)
    n_seg = curve.n_segments
    if kind == "nodal":
        if u.shape[0] != curve.n_nodes:
            raise DimensionMismatch(
                f"nodal data needs {curve.n_nodes} rows, got {u.shape[0]}"
            )
        start = u[:n_seg]
        end = np.roll(u, -1, axis=0) if curve.is_closed else u[1:]
        return start, end
    if kind == "segment":
        if u.shape[0] != n_seg:
            raise DimensionMismatch(f"segment data needs {n_seg} rows, got {u.shape[0]}")
        return u, u
    raise ValueError(f"unknown data kind {kind!r}")


def mass_lumped_inner(curve, u, v, u_kind="nodal", v_kind="nodal") -> float:
    """Mass-lumped L2 product of piecewise-linear or segment-constant data.

    ``u`` and ``v`` may be scalar (shape ``(n,)``) or vector valued (shape
    ``(n, k)``); their trailing shapes must agree.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape[1:] != v.shape[1:]:
        raise DimensionMismatch(f"value shapes {u.shape[1:]} and {v.shape[1:]} differ")
    us, ue = _one_sided(curve, u, u_kind)
    vs, ve = _one_sided(curve, v, v_kind)
    length = np.hypot(*curve.segment_vectors().T)
    prod_s = (us * vs).reshape(len(length), -1).sum(axis=1)
    prod_e = (ue * ve).reshape(len(length), -1).sum(axis=1)
    return 0.5 * float(np.sum(length * (prod_s + prod_e)))


@dataclass(frozen=True)
class MeshMetrics:
    h_max: float
    h_min: float
    ratio: float


def mesh_metrics(curve: PolyCurve) -> MeshMetrics:
    length = segment_frames(curve).length
    h_max, h_min = float(length.max()), float(length.min())
    return MeshMetrics(h_max, h_min, h_max / h_min)


def region_polygon(curve: PolyCurve) -> shapely.Polygon:
    """Region enclosed by the curve (closed) or between curve and substrate."""
    # shapely closes the ring itself, which is the substrate edge for open curves
    return shapely.Polygon(curve.nodes)


def manifold_distance(c1: PolyCurve, c2: PolyCurve) -> float:
    """Area of the symmetric difference of the two enclosed regions."""
    if c1.topology is not c2.topology:
        raise TopologyMismatch("manifold distance needs two curves of the same topology")
    polys = []
    for c in (c1, c2):
        p = region_polygon(c)
        if not p.is_valid:
            raise SelfIntersectingCurve(explain_validity(p))
        polys.append(p)
    p1, p2 = polys
    m = p1.area + p2.area - 2.0 * p1.intersection(p2).area
    return max(m, 0.0)


def arc_length_interpolate(source, n: int, topology=None) -> PolyCurve:
    """Resample ``source`` with ``n`` segments of equal arc length.

    ``source`` is a :class:`PolyCurve` or an ``(m, 2)`` array; bare arrays
    need ``topology``.  Closed resampling starts at the source's first node.
    """
    if isinstance(source, PolyCurve):
        topo = source.topology
        pts = source.nodes
    else:
        if topology is None:
            raise ValueError("topology is required when passing raw points")
        topo = Topology(topology)
        pts = np.asarray(source, dtype=float)
    if n < (3 if topo is Topology.CLOSED else 2):
        raise ValueError(f"too few segments requested: {n}")
    if topo is Topology.CLOSED:
        pts = np.vstack([pts, pts[:1]])
    seg = np.hypot(*np.diff(pts, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 0.0:
        raise DegenerateSegment("source curve has zero length")
    s = total * np.arange(n + 1) / n
    nodes = np.column_stack([np.interp(s, cum, pts[:, 0]), np.interp(s, cum, pts[:, 1])])
    nodes[0] = pts[0]
    nodes[-1] = pts[-1]
    if topo is Topology.CLOSED:
        out = PolyCurve.closed(nodes[:-1])
    else:
        nodes[0, 1] = nodes[-1, 1] = 0.0
        out = PolyCurve.open(nodes)
    segment_frames(out)
    return out
