"""Anisotropic surface energies and certificates for unconditional stability.

Every energy is a 2*pi-periodic function ``gamma(theta)`` of the segment
inclination.  The certifiers decide whether ``gamma`` satisfies the
dissipation inequality

    2 g(t) - g(t) cos(t - p) - g'(t) sin(t - p) - g(p) >= 0   for all t, p,

under which the backward-Euler parametric scheme decreases the discrete
energy for every time step.  Only :func:`check_kfold` (an exact
characterisation) and :func:`check_generic` (which can exhibit a violating
pair) ever answer ``DISPROVEN``; the other checks are sufficient conditions.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpec, NonPositiveGamma

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
POSITIVITY_GRID = 4096
C3_QUADRATURE_POINTS = 8192
DEFAULT_GENERIC_GRID = 720


@dataclass(frozen=True)
class GammaEval:
    value: np.ndarray
    d1: np.ndarray
    d2: np.ndarray


def _grid(m: int) -> np.ndarray:
    return -math.pi + TWO_PI * np.arange(m) / m


class GammaSpec:
    """Base class; subclasses implement :meth:`_eval`."""

    kind: str = ""

    def _eval(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        raise NotImplementedError

    def evaluate(self, theta) -> GammaEval:
        theta = np.asarray(theta, dtype=float)
        g, d1, d2 = self._eval(theta)
        if np.any(g <= 0.0):
            raise NonPositiveGamma(f"{self!r} is not positive at some angle")
        return GammaEval(g, d1, d2)

    def value(self, theta) -> np.ndarray:
        return self.evaluate(theta).value

    def __call__(self, theta):
        return self.value(theta)

    def _check_positive(self):
        g = self._eval(_grid(POSITIVITY_GRID))[0]
        if not np.all(g > 0.0):
            raise InvalidSpec(f"{self!r} is not positive on [-pi, pi]")

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Isotropic(GammaSpec):
    kind = "isotropic"

    def _eval(self, theta):
        one = np.ones_like(theta)
        zero = np.zeros_like(theta)
        return one, zero, zero.copy()

    def to_dict(self):
        return {"type": self.kind}


@dataclass(frozen=True)
class KFold(GammaSpec):
    """``1 + beta cos(k (theta - theta0))``."""

    beta: float
    k: int
    theta0: float = 0.0
    kind = "kfold"

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise InvalidSpec(f"k must be a positive integer, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))
        if abs(self.beta) >= 1.0:
            raise InvalidSpec(f"|beta| must be < 1 for a positive energy, got {self.beta}")

    def _eval(self, theta):
        arg = self.k * (theta - self.theta0)
        c, s = np.cos(arg), np.sin(arg)
        return 1.0 + self.beta * c, -self.beta * self.k * s, -self.beta * self.k**2 * c

    def to_dict(self):
        return {"type": self.kind, "beta": self.beta, "k": self.k, "theta0": self.theta0}


@dataclass(frozen=True)
class Ellipsoidal(GammaSpec):
    """``sqrt(a + b cos^2 theta)`` with ``a > 0`` and ``a + b > 0``."""

    a: float
    b: float
    kind = "ellipsoidal"

    def __post_init__(self):
        if not (self.a > 0.0 and self.a + self.b > 0.0):
            raise InvalidSpec(f"ellipsoidal energy needs a > 0 and a + b > 0, got {self.a}, {self.b}")

    def _eval(self, theta):
        return _ellipsoid_terms(self.a, self.b, theta)

    def to_dict(self):
        return {"type": self.kind, "a": self.a, "b": self.b}


def _ellipsoid_terms(a, b, theta):
    u = a + b * np.cos(theta) ** 2
    du = -b * np.sin(2.0 * theta)
    ddu = -2.0 * b * np.cos(2.0 * theta)
    g = np.sqrt(u)
    d1 = du / (2.0 * g)
    d2 = ddu / (2.0 * g) - du**2 / (4.0 * g**3)
    return g, d1, d2


@dataclass(frozen=True)
class RiemannianMetric(GammaSpec):
    """Sum over SPD matrices ``G_k`` of ``sqrt(n(theta)^T G_k n(theta))``.

    Each term is evaluated through its eigendecomposition as
    ``sqrt(l1 + (l2 - l1) cos^2(theta - theta_k))`` so derivatives stay
    closed-form.
    """

    matrices: tuple
    kind = "riemannian"
    _terms: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mats = tuple(np.array(m, dtype=float) for m in self.matrices)
        if not mats:
            raise InvalidSpec("at least one matrix is required")
        terms = []
        for m in mats:
            if m.shape != (2, 2):
                raise InvalidSpec(f"metric matrices must be 2x2, got {m.shape}")
            if abs(m[0, 1] - m[1, 0]) > 1e-12 * max(1.0, np.abs(m).max()):
                raise InvalidSpec("metric matrix is not symmetric")
            lam, vec = np.linalg.eigh(m)
            if lam[0] <= 1e-10 * max(1.0, abs(lam[1])):
                raise InvalidSpec(f"metric matrix is not positive definite: eigenvalues {lam}")
            r2 = vec[:, 1]
            # n(theta) . r2 = cos(theta - theta_k) with r2 = (-sin theta_k, cos theta_k)
            theta_k = math.atan2(-r2[0], r2[1])
            terms.append((float(lam[0]), float(lam[1]), theta_k))
        object.__setattr__(self, "matrices", tuple(tuple(map(tuple, m)) for m in mats))
        object.__setattr__(self, "_terms", tuple(terms))

    @property
    def eigenvalues(self) -> list[tuple[float, float]]:
        return [(l1, l2) for l1, l2, _ in self._terms]

    def _eval(self, theta):
        g = np.zeros_like(theta)
        d1 = np.zeros_like(theta)
        d2 = np.zeros_like(theta)
        for l1, l2, tk in self._terms:
            a, b, c = _ellipsoid_terms(l1, l2 - l1, theta - tk)
            g += a
            d1 += b
            d2 += c
        return g, d1, d2

    def to_dict(self):
        return {"type": self.kind, "matrices": [list(map(list, m)) for m in self.matrices]}


@dataclass(frozen=True)
class FourierSeries(GammaSpec):
    """``a0/2 + sum_l (a_l cos(l theta) + b_l sin(l theta))``."""

    a0: float
    terms: tuple = ()
    kind = "fourier"

    def __post_init__(self):
        terms = []
        for t in self.terms:
            l, al, bl = t
            if int(l) != l or l < 1:
                raise InvalidSpec(f"Fourier mode index must be a positive integer, got {l!r}")
            terms.append((int(l), float(al), float(bl)))
        object.__setattr__(self, "terms", tuple(terms))
        self._check_positive()

    def _eval(self, theta):
        g = np.full_like(theta, 0.5 * self.a0)
        d1 = np.zeros_like(theta)
        d2 = np.zeros_like(theta)
        for l, al, bl in self.terms:
            c, s = np.cos(l * theta), np.sin(l * theta)
            g += al * c + bl * s
            d1 += l * (-al * s + bl * c)
            d2 -= l * l * (al * c + bl * s)
        return g, d1, d2

    def to_dict(self):
        return {"type": self.kind, "a0": self.a0, "terms": [list(t) for t in self.terms]}


_KINDS = {
    "isotropic": lambda d: Isotropic(),
    "kfold": lambda d: KFold(float(d["beta"]), d["k"], float(d.get("theta0", 0.0))),
    "ellipsoidal": lambda d: Ellipsoidal(float(d["a"]), float(d["b"])),
    "riemannian": lambda d: RiemannianMetric(tuple(d["matrices"])),
    "fourier": lambda d: FourierSeries(float(d["a0"]), tuple(tuple(t) for t in d.get("terms", []))),
}


def gamma_from_dict(data: dict) -> GammaSpec:
    try:
        kind = data["type"].lower()
        build = _KINDS[kind]
    except (KeyError, AttributeError, TypeError):
        raise InvalidSpec(f"unknown or missing gamma type in {data!r}") from None
    try:
        return build(data)
    except KeyError as exc:
        raise InvalidSpec(f"{kind} gamma is missing field {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InvalidSpec):
            raise
        raise InvalidSpec(f"bad {kind} gamma: {exc}") from None


def evaluate(spec: GammaSpec, theta) -> GammaEval:
    return spec.evaluate(theta)


def energy_matrix(spec: GammaSpec, theta) -> np.ndarray:
    """``G(theta) = [[g, -g'], [g', g]]``; shape ``(..., 2, 2)``."""
    ev = spec.evaluate(theta)
    g, d1 = ev.value, ev.d1
    return np.stack([np.stack([g, -d1], -1), np.stack([d1, g], -1)], -2)


def stiffness(spec: GammaSpec, theta) -> np.ndarray:
    ev = spec.evaluate(theta)
    return ev.value + ev.d2


def is_weakly_anisotropic(spec: GammaSpec, grid: int = POSITIVITY_GRID) -> bool:
    return bool(np.min(stiffness(spec, _grid(grid))) > 0.0)


def dewetting_force(spec: GammaSpec, theta, sigma: float):
    """Contact-line driving force ``g cos(t) - g'(t) sin(t) - sigma``."""
    if abs(sigma) > 1.0:
        logger.warning("|sigma| = %g exceeds 1; no isotropic Young angle exists", abs(sigma))
    ev = spec.evaluate(theta)
    return ev.value * np.cos(theta) - ev.d1 * np.sin(theta) - sigma


@dataclass(frozen=True)
class FourierCoefficients:
    a0: float
    a: np.ndarray  # a[l - 1] for l = 1..L
    b: np.ndarray

    def evaluate(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        l = np.arange(1, len(self.a) + 1)
        arg = np.multiply.outer(theta, l)
        return 0.5 * self.a0 + np.cos(arg) @ self.a + np.sin(arg) @ self.b


def fourier_coefficients(spec: GammaSpec, l_max: int = 64, m: int | None = None) -> FourierCoefficients:
    """Trapezoid-rule Fourier coefficients on ``m`` equispaced points."""
    if m is None:
        m = max(1024, 8 * l_max)
    if m < 8 * l_max:
        raise ValueError(f"need at least 8 * l_max = {8 * l_max} quadrature points, got {m}")
    theta = _grid(m)
    g = spec.evaluate(theta).value
    l = np.arange(1, l_max + 1)
    arg = np.multiply.outer(l, theta)
    w = 2.0 / m
    a = w * (np.cos(arg) @ g)
    b = w * (np.sin(arg) @ g)
    return FourierCoefficients(float(w * g.sum()), a, b)


class Verdict(str, enum.Enum):
    PROVEN = "Proven"
    NOT_PROVEN = "NotProven"
    DISPROVEN = "Disproven"


@dataclass(frozen=True)
class ConditionReport:
    verdict: Verdict
    method: str
    margin: float
    witness: tuple[float, float] | None = None

    def __post_init__(self):
        if self.verdict is Verdict.DISPROVEN and self.witness is None:
            raise ValueError("a disproof needs a witness")

    @property
    def proven(self) -> bool:
        return self.verdict is Verdict.PROVEN

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "verdict": self.verdict.value,
            "margin": self.margin,
            "witness": list(self.witness) if self.witness is not None else None,
        }


def _snap(margin: float, tol: float) -> float:
    """Report round-off sized slack as an exact zero."""
    return 0.0 if abs(margin) <= tol else margin


def dissipation_gap(spec: GammaSpec, theta, phi) -> np.ndarray:
    """Left side minus right side of the dissipation inequality."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    et = spec.evaluate(theta)
    gp = spec.evaluate(phi).value
    d = theta - phi
    return 2.0 * et.value - et.value * np.cos(d) - et.d1 * np.sin(d) - gp


def check_generic(spec: GammaSpec, grid: int = DEFAULT_GENERIC_GRID) -> ConditionReport:
    """Numerical certificate of the dissipation inequality on a grid x grid lattice."""
    if grid < 64:
        raise ValueError("grid must be at least 64")
    t = _grid(grid)
    et = spec.evaluate(t)
    g, d1 = et.value, et.d1
    d = t[:, None] - t[None, :]
    gap = (2.0 * g[:, None] - g[:, None] * np.cos(d) - d1[:, None] * np.sin(d)) - g[None, :]
    idx = np.unravel_index(np.argmin(gap), gap.shape)
    low = float(gap[idx])
    tol = 1e-10 * max(1.0, float(g.max()))
    if low >= -tol:
        return ConditionReport(Verdict.PROVEN, "generic", max(low, 0.0))
    if low < -1e-6:
        return ConditionReport(Verdict.DISPROVEN, "generic", low, (float(t[idx[0]]), float(t[idx[1]])))
    return ConditionReport(Verdict.NOT_PROVEN, "generic", low)


def _coefficients_for(spec: GammaSpec) -> tuple[float, np.ndarray, np.ndarray]:
    if isinstance(spec, FourierSeries):
        l_max = max((l for l, _, _ in spec.terms), default=0)
        a = np.zeros(l_max)
        b = np.zeros(l_max)
        for l, al, bl in spec.terms:
            a[l - 1] += al
            b[l - 1] += bl
        return spec.a0, a, b
    l_max = 256
    if isinstance(spec, KFold):
        l_max = max(l_max, 2 * spec.k)
    c = fourier_coefficients(spec, l_max, 16 * l_max)
    return c.a0, c.a, c.b


def check_fourier(spec: GammaSpec) -> ConditionReport:
    """Sufficient condition ``a0/2 >= sum_l (1 + l^2) |(a_l, b_l)|``."""
    a0, a, b = _coefficients_for(spec)
    l = np.arange(1, len(a) + 1)
    amp = np.hypot(a, b)
    keep = (np.abs(a) + np.abs(b)) >= 1e-14
    total = float(np.sum(((1.0 + l**2) * amp)[keep]))
    margin = _snap(0.5 * a0 - total, 1e-12 * max(1.0, abs(a0)))
    verdict = Verdict.PROVEN if margin >= 0.0 else Verdict.NOT_PROVEN
    return ConditionReport(verdict, "fourier", margin)


def check_c3(spec: GammaSpec, m: int = C3_QUADRATURE_POINTS) -> ConditionReport:
    """Sufficient condition ``mean(gamma) >= 5/2 * ||gamma'''||_{L2(-pi, pi)}``.

    The third derivative is taken spectrally from ``m`` samples, which is
    exact for trigonometric polynomials of degree below ``m / 2``.
    """
    theta = _grid(m)
    g = spec.evaluate(theta).value
    mean = float(g.mean())
    k = np.fft.rfftfreq(m, d=1.0 / m)
    spec_hat = np.fft.rfft(g) * (1j * k) ** 3
    if m % 2 == 0:
        spec_hat[-1] = 0.0
    d3 = np.fft.irfft(spec_hat, n=m)
    norm = math.sqrt(float(np.sum(d3**2)) * TWO_PI / m)
    margin = _snap(mean - 2.5 * norm, 1e-12 * max(1.0, mean))
    verdict = Verdict.PROVEN if margin >= 0.0 else Verdict.NOT_PROVEN
    return ConditionReport(verdict, "c3", margin)


def check_kfold(beta: float, k: int) -> ConditionReport:
    """Exact test ``|beta| <= 1 / (1 + k^2)`` for k-fold energies."""
    if k < 1:
        raise ValueError("k must be >= 1")
    beta_max = 1.0 / (1.0 + k * k)
    margin = _snap(beta_max - abs(beta), 1e-15)
    if margin >= 0.0:
        return ConditionReport(Verdict.PROVEN, "kfold", margin)
    return ConditionReport(Verdict.DISPROVEN, "kfold", margin, _kfold_witness(beta, k))


def _kfold_witness(beta: float, k: int) -> tuple[float, float]:
    # second derivative of the gap in phi at phi = theta is 1 + (1 + k^2) beta cos(k theta),
    # most negative where beta cos(k theta) = -|beta|
    theta = math.pi / k if beta > 0 else 0.0
    spec = KFold(beta, k)
    delta = 0.1 / k
    while delta > 1e-8:
        if dissipation_gap(spec, theta, theta + delta) < 0.0:
            return (theta, theta + delta)
        delta *= 0.5
    return (theta, theta)


def check_ellipsoidal(a: float, b: float) -> ConditionReport:
    if not (a > 0.0 and a + b > 0.0):
        raise InvalidSpec(f"ellipsoidal energy needs a > 0 and a + b > 0, got {a}, {b}")
    margin = min(a - b, b + 0.5 * a)
    verdict = Verdict.PROVEN if margin >= 0.0 else Verdict.NOT_PROVEN
    return ConditionReport(verdict, "ellipsoidal", margin)


def check_riemannian(matrices) -> ConditionReport:
    """Every metric must satisfy ``lambda_max <= 2 lambda_min``."""
    margin = math.inf
    for m in matrices:
        m = np.asarray(m, dtype=float)
        if m.shape != (2, 2) or abs(m[0, 1] - m[1, 0]) > 1e-10 * max(1.0, np.abs(m).max()):
            raise InvalidSpec("metric matrices must be symmetric 2x2")
        lam = np.linalg.eigvalsh(m)
        if lam[0] <= 1e-10 * max(1.0, abs(lam[1])):
            raise InvalidSpec(f"metric matrix is not positive definite: eigenvalues {lam}")
        margin = min(margin, float(2.0 * lam[0] - lam[1]))
    verdict = Verdict.PROVEN if margin >= 0.0 else Verdict.NOT_PROVEN
    return ConditionReport(verdict, "riemannian", margin)


def certify(spec: GammaSpec, grid: int = DEFAULT_GENERIC_GRID) -> list[ConditionReport]:
    """Run every certifier that applies to ``spec``."""
    reports = [check_generic(spec, grid), check_fourier(spec), check_c3(spec)]
    if isinstance(spec, KFold):
        reports.append(check_kfold(spec.beta, spec.k))
    elif isinstance(spec, Ellipsoidal):
        reports.append(check_ellipsoidal(spec.a, spec.b))
    elif isinstance(spec, RiemannianMetric):
        reports.append(check_riemannian(spec.matrices))
    return reports


def is_certified(spec: GammaSpec, grid: int = DEFAULT_GENERIC_GRID) -> bool:
    reports = certify(spec, grid)
    if any(r.verdict is Verdict.DISPROVEN for r in reports):
        return False
    return any(r.proven for r in reports)
