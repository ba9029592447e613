"""One backward-Euler step of the energy-stable parametric scheme.

Each step solves a linear system in the new node positions ``X`` and the
nodal chemical potential ``mu``.  All geometry (segment lengths, normals,
inclinations and hence the surface-energy matrix) is frozen at the current
curve, so the step is linear.  Unknowns are ordered as all ``mu`` values
first, then ``(x, y)`` interleaved per node.  For open curves the two
endpoint ``y`` unknowns are eliminated (they are pinned to the substrate).
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .anisotropy import GammaSpec, energy_matrix
from .errors import InvalidMobility, SingularSystem, TopologyMismatch
from .geometry import PolyCurve, Topology, segment_frames

logger = logging.getLogger(__name__)

PIVOT_REL_TOL = 1e-14


@dataclass(frozen=True)
class DofMap:
    """Global dof index of every nodal unknown; -1 marks an eliminated dof."""

    mu: np.ndarray
    x: np.ndarray
    y: np.ndarray
    size: int

    @classmethod
    def build(cls, n_nodes: int, closed: bool) -> "DofMap":
        mu = np.arange(n_nodes)
        xy = np.full((n_nodes, 2), -1)
        free = np.ones((n_nodes, 2), dtype=bool)
        if not closed:
            free[0, 1] = free[-1, 1] = False
        xy[free] = n_nodes + np.arange(int(free.sum()))
        return cls(mu, xy[:, 0].copy(), xy[:, 1].copy(), n_nodes + int(free.sum()))


@dataclass(frozen=True)
class StepSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dofs: DofMap
    topology: Topology

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class StepSolution:
    new_curve: PolyCurve
    mu: np.ndarray
    residual_norm: float


def _scatter(n_nodes: int, closed: bool, frames, gamma: GammaSpec, tau: float):
    """COO triplets of the full (uneliminated) 3n x 3n system."""
    n_seg = len(frames)
    p = np.arange(n_seg)
    q = (p + 1) % n_nodes if closed else p + 1
    L = frames.length
    nrm = frames.normal
    G = energy_matrix(gamma, frames.theta)
    mu = lambda i: i
    xy = lambda i, d: n_nodes + 2 * i + d

    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    for node in (p, q):
        for d in (0, 1):
            # (X^{m+1}/tau, phi n) lumped onto the node's own position
            add(mu(node), xy(node, d), 0.5 * L * nrm[:, d] / tau)
            # (mu, n . omega) lumped
            add(xy(node, d), mu(node), 0.5 * L * nrm[:, d])
    inv = 1.0 / L
    for a, b, sgn in ((p, p, 1.0), (p, q, -1.0), (q, p, -1.0), (q, q, 1.0)):
        add(mu(a), mu(b), sgn * inv)
        for d in (0, 1):
            for e in (0, 1):
                add(xy(a, d), xy(b, e), -sgn * inv * G[:, d, e])

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)

    rhs = np.zeros(3 * n_nodes)
    return rows, cols, vals, rhs, p, q


def _finish(n_nodes, closed, rows, cols, vals, rhs, dofs: DofMap, topo) -> StepSystem:
    full = np.concatenate([dofs.mu, np.column_stack([dofs.x, dofs.y]).ravel()])
    r = full[rows]
    c = full[cols]
    keep = (r >= 0) & (c >= 0)
    mat = sp.csr_matrix((vals[keep], (r[keep], c[keep])), shape=(dofs.size, dofs.size))
    mat.sum_duplicates()
    mat.sort_indices()
    b = np.zeros(dofs.size)
    np.add.at(b, full[full >= 0], rhs[full >= 0])
    return StepSystem(mat, b, dofs, topo)


def _normal_rhs(curve: PolyCurve, frames, tau, p, q, rhs):
    X = curve.nodes
    w = 0.5 * frames.length / tau
    np.add.at(rhs, p, w * np.einsum("ij,ij->i", frames.normal, X[p]))
    np.add.at(rhs, q, w * np.einsum("ij,ij->i", frames.normal, X[q]))


def assemble_closed(curve: PolyCurve, gamma: GammaSpec, tau: float) -> StepSystem:
    if not curve.is_closed:
        raise TopologyMismatch("assemble_closed needs a closed curve")
    if not tau > 0.0:
        raise ValueError(f"time step must be positive, got {tau}")
    frames = segment_frames(curve)
    n = curve.n_nodes
    rows, cols, vals, rhs, p, q = _scatter(n, True, frames, gamma, tau)
    _normal_rhs(curve, frames, tau, p, q, rhs)
    return _finish(n, True, rows, cols, vals, rhs, DofMap.build(n, True), curve.topology)


def assemble_open(curve: PolyCurve, gamma: GammaSpec, tau: float, sigma: float, eta: float) -> StepSystem:
    """Open-curve step: substrate-pinned endpoints with relaxed contact angle."""
    if curve.is_closed:
        raise TopologyMismatch("assemble_open needs an open curve")
    if not tau > 0.0:
        raise ValueError(f"time step must be positive, got {tau}")
    if not eta > 0.0:
        raise InvalidMobility(f"contact line mobility must be positive, got {eta}")
    frames = segment_frames(curve)
    n = curve.n_nodes
    rows, cols, vals, rhs, p, q = _scatter(n, False, frames, gamma, tau)
    _normal_rhs(curve, frames, tau, p, q, rhs)

    xl_row = n + 0
    xr_row = n + 2 * (n - 1)
    k = 1.0 / (eta * tau)
    rows = np.concatenate([rows, [xl_row, xr_row]])
    cols = np.concatenate([cols, [xl_row, xr_row]])
    vals = np.concatenate([vals, [-k, -k]])
    rhs[xl_row] += -k * curve.nodes[0, 0] + sigma
    rhs[xr_row] += -k * curve.nodes[-1, 0] - sigma
    return _finish(n, False, rows, cols, vals, rhs, DofMap.build(n, False), curve.topology)


def assemble(curve: PolyCurve, gamma: GammaSpec, tau: float, sigma: float = 0.0, eta: float = 100.0) -> StepSystem:
    if curve.is_closed:
        return assemble_closed(curve, gamma, tau)
    return assemble_open(curve, gamma, tau, sigma, eta)


def solve(system: StepSystem) -> StepSolution:
    """Sparse LU with partial pivoting; raises :class:`SingularSystem`."""
    A = system.matrix.tocsc()
    norm = spla.norm(A, np.inf)
    try:
        lu = spla.splu(A, permc_spec="COLAMD", diag_pivot_thresh=1.0)
    except RuntimeError as exc:
        raise SingularSystem(str(exc)) from None
    pivots = np.abs(lu.U.diagonal())
    if pivots.size and pivots.min() < PIVOT_REL_TOL * norm:
        raise SingularSystem(f"pivot {pivots.min():.3e} below {PIVOT_REL_TOL:g} * |A| = {PIVOT_REL_TOL * norm:.3e}")
    sol = lu.solve(system.rhs)
    if not np.all(np.isfinite(sol)):
        raise SingularSystem("non-finite solution")
    residual = float(np.linalg.norm(A @ sol - system.rhs))
    return _unpack(system, sol, residual)


def _unpack(system: StepSystem, sol: np.ndarray, residual: float) -> StepSolution:
    d = system.dofs
    n = len(d.mu)
    nodes = np.zeros((n, 2))
    mask_x = d.x >= 0
    mask_y = d.y >= 0
    nodes[mask_x, 0] = sol[d.x[mask_x]]
    nodes[mask_y, 1] = sol[d.y[mask_y]]
    return StepSolution(PolyCurve(system.topology, nodes), sol[d.mu].copy(), residual)


def dump_system(system: StepSystem, path) -> None:
    """Coordinate-format text dump: ``row col value`` lines, then the rhs."""
    coo = system.matrix.tocoo()
    with open(path, "w") as fh:
        fh.write(f"# {system.topology.value} dimension {system.dimension}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{int(r)} {int(c)} {float(v)!r}\n")
        fh.write("# rhs\n")
        for i, v in enumerate(system.rhs):
            fh.write(f"{i} {float(v)!r}\n")


class WellPosednessFailure(str, enum.Enum):
    ALL_PARALLEL = "AllParallel"
    DEGENERATE_VERTEX = "DegenerateVertex"
    HORIZONTAL_ENDPOINTS = "HorizontalEndpoints"


@dataclass(frozen=True)
class WellPosednessReport:
    ok: bool
    failed_condition: WellPosednessFailure | None = None
    detail: dict = field(default_factory=dict)


def wellposed_closed(curve: PolyCurve) -> WellPosednessReport:
    """Check nondegenerate edges and that the chords X_{j+1} - X_{j-1} are not all parallel."""
    X = curve.nodes
    h = np.hypot(*curve.segment_vectors().T)
    h_min = float(h.min())
    scale = float(h.sum())
    chords = np.roll(X, -1, axis=0) - np.roll(X, 1, axis=0)
    ref = chords[np.argmax(np.hypot(*chords.T))]
    cross = float(np.max(np.abs(chords[:, 0] * ref[1] - chords[:, 1] * ref[0])))
    detail = {"h_min": h_min, "max_cross": cross, "scale": scale}
    if h_min <= curve.degenerate_threshold():
        return WellPosednessReport(False, WellPosednessFailure.DEGENERATE_VERTEX, detail)
    if cross <= 1e-10 * scale**2:
        return WellPosednessReport(False, WellPosednessFailure.ALL_PARALLEL, detail)
    return WellPosednessReport(True, None, detail)


def wellposed_open(curve: PolyCurve) -> WellPosednessReport:
    """Check nondegenerate edges and that an end segment leaves the substrate."""
    hv = curve.segment_vectors()
    h = np.hypot(*hv.T)
    h_min = float(h.min())
    scale = float(h.sum())
    vert = float(hv[0, 1] ** 2 + hv[-1, 1] ** 2)
    detail = {"h_min": h_min, "endpoint_verticality": vert, "scale": scale}
    if h_min <= curve.degenerate_threshold():
        return WellPosednessReport(False, WellPosednessFailure.DEGENERATE_VERTEX, detail)
    if vert <= (1e-10 * scale) ** 2:
        return WellPosednessReport(False, WellPosednessFailure.HORIZONTAL_ENDPOINTS, detail)
    return WellPosednessReport(True, None, detail)


def wellposed(curve: PolyCurve) -> WellPosednessReport:
    return wellposed_closed(curve) if curve.is_closed else wellposed_open(curve)


def _recover(curve: PolyCurve, G: np.ndarray) -> np.ndarray:
    """Nodal least-squares solution of (v, n . omega)^h = (G d_s X, d_s omega)^h.

    With lumping the system decouples node by node into ``v_i N_i = b_i``
    (``N_i`` the length-weighted normal, ``b_i`` the discrete flux jump);
    the normal equations give ``v_i = N_i . b_i / |N_i|^2``.
    """
    frames = segment_frames(curve)
    n = curve.n_nodes
    n_seg = len(frames)
    p = np.arange(n_seg)
    q = (p + 1) % n if curve.is_closed else p + 1
    flux = np.einsum("sij,sj->si", G, frames.tangent)
    weighted = 0.5 * frames.length[:, None] * frames.normal
    N = np.zeros((n, 2))
    b = np.zeros((n, 2))
    np.add.at(N, p, weighted)
    np.add.at(N, q, weighted)
    np.add.at(b, q, flux)
    np.add.at(b, p, -flux)
    if not curve.is_closed:
        # no y test function at the pinned endpoints
        N[[0, -1], 1] = 0.0
        b[[0, -1], 1] = 0.0
    nn = np.einsum("ij,ij->i", N, N)
    tiny = 1e-28 * (curve.length() / n_seg) ** 2
    if np.any(nn <= tiny):
        bad = int(np.flatnonzero(nn <= tiny)[0])
        raise SingularSystem(f"node {bad} has no usable normal direction")
    return np.einsum("ij,ij->i", N, b) / nn


def recover_potential(curve: PolyCurve, gamma: GammaSpec) -> np.ndarray:
    """Nodal weighted curvature (chemical potential) of a given curve."""
    frames = segment_frames(curve)
    return _recover(curve, energy_matrix(gamma, frames.theta))


def recover_curvature(curve: PolyCurve) -> np.ndarray:
    n_seg = curve.n_segments
    return _recover(curve, np.broadcast_to(np.eye(2), (n_seg, 2, 2)))


def nodal_normals(curve: PolyCurve) -> np.ndarray:
    """Average of the adjacent segment normals, renormalised."""
    frames = segment_frames(curve)
    n = curve.n_nodes
    p = np.arange(len(frames))
    q = (p + 1) % n if curve.is_closed else p + 1
    acc = np.zeros((n, 2))
    np.add.at(acc, p, frames.normal)
    np.add.at(acc, q, frames.normal)
    norm = np.hypot(*acc.T)
    # a cusp (opposite neighbouring normals) has no average direction
    norm = np.where(norm > 0.0, norm, 1.0)
    return acc / norm[:, None]


def normal_velocity(prev: PolyCurve, nxt: PolyCurve, tau: float) -> np.ndarray:
    if prev.topology is not nxt.topology or prev.n_nodes != nxt.n_nodes:
        raise TopologyMismatch("normal velocity needs curves with matching topology and node count")
    disp = (nxt.nodes - prev.nodes) / tau
    return np.einsum("ij,ij->i", nodal_normals(prev), disp)
