"""SCM eigensystem, pseudo-spectrum estimators and interval-constrained DoA search.

Every pseudo-spectrum is stored as a weighted sum of squared projections

    eta(theta) = offset + sum_j weights[j] * |a(theta)^* basis[:, j]|^2

which covers the true cost (noise basis, unit weights), MUSIC, G-MUSIC, the
spatial periodogram (all eigenvectors weighted by their eigenvalues) and the
unconditional G-MUSIC estimator (contour-integral weights on all
eigenvectors).
"""
from __future__ import annotations

import math
import warnings
from functools import lru_cache
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .array_model import steering_derivative
from .errors import SeparationError
from .rmt import gmusic_weight, mp_support

METHODS = ("true", "traditional", "gmusic", "periodogram", "unconditional")
# CLI / Monte-Carlo spelling of the estimators
METHOD_ALIASES = {"music": "traditional"}

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class SampleEigensystem:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # columns aligned with eigenvalues
    N: int
    sigma2: float = 1.0

    @property
    def M(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def c_N(self) -> float:
        return self.M / self.N

    def reconstruct(self) -> np.ndarray:
        U = self.eigenvectors
        return (U * self.eigenvalues) @ U.conj().T


def eig_hermitian(scm: np.ndarray, N: int, sigma2: float = 1.0) -> SampleEigensystem:
    """Descending eigendecomposition of a Hermitian matrix.

    Each eigenvector's phase is fixed by making its largest-magnitude entry
    real and positive.
    """
    scm = np.asarray(scm)
    if scm.ndim != 2 or scm.shape[0] != scm.shape[1]:
        raise ValueError("expected a square matrix")
    scale = max(np.linalg.norm(scm), np.finfo(float).tiny)
    if np.linalg.norm(scm - scm.conj().T) > 1e-10 * scale:
        raise ValueError("matrix is not Hermitian")
    w, U = np.linalg.eigh(0.5 * (scm + scm.conj().T))
    w, U = w[::-1].copy(), U[:, ::-1].copy()
    pivot = U[np.argmax(np.abs(U), axis=0), np.arange(U.shape[1])]
    U *= (np.abs(pivot) / pivot)[None, :]
    return SampleEigensystem(w, U, N, sigma2)


def estimate_noise_power(eigsys: SampleEigensystem, K: int) -> float:
    """Mean of the ``M - K`` smallest sample eigenvalues."""
    return float(np.mean(eigsys.eigenvalues[K:]))


@dataclass(frozen=True, eq=False)
class PseudoSpectrum:
    method: str
    basis: np.ndarray
    weights: np.ndarray
    N: int
    offset: float = 0.0
    fallback: Tuple[int, ...] = ()  # spikes that fell back to unit weight

    @property
    def M(self) -> int:
        return self.basis.shape[0]

    @property
    def maximize(self) -> bool:
        return self.method == "periodogram"

    def _proj(self, theta, order=0):
        a = steering_derivative(theta, self.M, order)
        return a.conj().T @ self.basis if a.ndim == 2 else a.conj() @ self.basis

    def __call__(self, theta):
        f = self._proj(theta)
        out = self.offset + (f.real ** 2 + f.imag ** 2) @ self.weights
        return out if np.ndim(out) else float(out)

    def derivative(self, theta, order: int = 1):
        """Analytic first or second derivative in theta."""
        f0, f1 = self._proj(theta), self._proj(theta, 1)
        if order == 1:
            out = 2.0 * np.real(f0.conj() * f1) @ self.weights
        elif order == 2:
            f2 = self._proj(theta, 2)
            out = 2.0 * (np.abs(f1) ** 2 + np.real(f0.conj() * f2)) @ self.weights
        else:
            raise ValueError("order must be 1 or 2")
        return out if np.ndim(out) else float(out)

    def scalar_evaluator(self):
        """Fast closure ``theta -> eta(theta)`` for scalar theta."""
        m = np.arange(self.M)
        B = self.basis / np.sqrt(self.M)
        w, off = self.weights, self.offset

        def ev(theta):
            f = np.exp(-1j * theta * m) @ B
            return off + float((f.real * f.real + f.imag * f.imag) @ w)

        return ev


def true_projector(A: np.ndarray) -> np.ndarray:
    """``I - A (A^* A)^{-1} A^*``."""
    A = np.asarray(A)
    if A.ndim == 1:
        A = A[:, None]
    s = np.linalg.svd(A, compute_uv=False)
    if s.size == 0 or s[-1] <= 1e-12 * s[0]:
        raise ValueError("steering matrix is rank deficient")
    P = np.eye(A.shape[0]) - A @ np.linalg.solve(A.conj().T @ A, A.conj().T)
    return 0.5 * (P + P.conj().T)


def true_spectrum(A: np.ndarray, N: int) -> PseudoSpectrum:
    A = np.asarray(A)
    if A.ndim == 1:
        A = A[:, None]
    true_projector(A)  # rank check
    U, _, _ = np.linalg.svd(A, full_matrices=True)
    noise = U[:, A.shape[1]:]
    return PseudoSpectrum("true", noise, np.ones(noise.shape[1]), N)


def traditional_spectrum(eigsys: SampleEigensystem, K: int) -> PseudoSpectrum:
    return PseudoSpectrum("traditional", eigsys.eigenvectors[:, :K], -np.ones(K), eigsys.N, offset=1.0)


def gmusic_weights(eigsys: SampleEigensystem, K: int, fallback: bool = False):
    """``1 / h(lambda_hat_k)`` for the K largest sample eigenvalues.

    With ``fallback=True`` spikes inside the bulk get weight 1 and their
    indices are returned; otherwise :class:`SeparationError` is raised.
    """
    lam = eigsys.eigenvalues[:K]
    edge = mp_support(eigsys.sigma2, eigsys.c_N)[1]
    inside = np.flatnonzero(lam <= edge)
    if inside.size and not fallback:
        raise SeparationError(
            f"sample eigenvalue {lam[inside[0]]:.6g} is inside the bulk (edge {edge:.6g})", index=int(inside[0])
        )
    wts = np.ones(K)
    ok = lam > edge
    if np.any(ok):
        wts[ok] = gmusic_weight(lam[ok], eigsys.sigma2, eigsys.c_N)
    return wts, tuple(int(i) for i in inside)


def gmusic_spectrum(eigsys: SampleEigensystem, K: int, fallback: bool = False) -> PseudoSpectrum:
    wts, failed = gmusic_weights(eigsys, K, fallback)
    return PseudoSpectrum("gmusic", eigsys.eigenvectors[:, :K], -wts, eigsys.N, offset=1.0, fallback=failed)


def periodogram_spectrum(scm_or_eigsys, N: Optional[int] = None) -> PseudoSpectrum:
    if isinstance(scm_or_eigsys, SampleEigensystem):
        es = scm_or_eigsys
    else:
        es = eig_hermitian(scm_or_eigsys, N or 1)
    return PseudoSpectrum("periodogram", es.eigenvectors, np.clip(es.eigenvalues, 0.0, None), es.N)


def eta_traditional(theta, eigsys: SampleEigensystem, K: int):
    if K == 0:
        return np.ones_like(np.asarray(theta, dtype=float)) if np.ndim(theta) else 1.0
    return traditional_spectrum(eigsys, K)(theta)


def eta_gmusic(theta, eigsys: SampleEigensystem, K: int):
    return gmusic_spectrum(eigsys, K)(theta)


def eta_periodogram(theta, scm: np.ndarray):
    M = scm.shape[0]
    a = steering_derivative(theta, M, 0)
    if a.ndim == 1:
        return float(np.real(a.conj() @ scm @ a))
    return np.real(np.einsum("mi,mn,ni->i", a.conj(), scm, a))


# -- unconditional (contour integral) estimator ------------------------------

@lru_cache(maxsize=16)
def _leggauss(n):
    return np.polynomial.legendre.leggauss(n)


@dataclass(frozen=True)
class Contour:
    """Counterclockwise rectangle crossing the real axis at ``left`` and ``right``.

    ``margin`` is the distance from each crossing to the nearest eigenvalue
    (or bulk edge); quadrature panels on the vertical sides are graded
    geometrically from that scale, so the poles next to the crossings do
    not slow convergence.
    """

    left: float
    right: float
    half_height: float
    margin: float

    def corners(self):
        L, R, H = self.left, self.right, self.half_height
        return [complex(L, -H), complex(R, -H), complex(R, H), complex(L, H)]

    def panels(self) -> List[Tuple[complex, complex]]:
        L, R, H, d = self.left, self.right, self.half_height, self.margin
        ys = [0.0]
        y = d
        while y < H:
            ys.append(y)
            y *= 2.0
        ys.append(H)
        up = [-v for v in ys[:0:-1]] + ys
        xs = np.linspace(R, L, 5)
        bottom = [(complex(a, -H), complex(b, -H)) for a, b in zip(xs[::-1], xs[::-1][1:])]
        right = [(complex(R, a), complex(R, b)) for a, b in zip(up, up[1:])]
        top = [(complex(a, H), complex(b, H)) for a, b in zip(xs, xs[1:])]
        left = [(complex(L, -a), complex(L, -b)) for a, b in zip(up, up[1:])]
        return bottom + right + top + left

    def nodes(self, n_per_panel: int):
        """Composite Gauss-Legendre nodes and weights (``dz`` included)."""
        t, wt = _leggauss(n_per_panel)
        zs, ws = [], []
        for za, zb in self.panels():
            zs.append(za + (zb - za) * (t + 1.0) / 2.0)
            ws.append(wt * (zb - za) / 2.0)
        return np.concatenate(zs), np.concatenate(ws)


def unconditional_contour(eigsys: SampleEigensystem, K: int) -> Contour:
    """Rectangle enclosing the noise eigenvalues and excluding the K spikes.

    Real extent ``[lo - delta, hi + delta]`` with ``lo = min(x-, smallest
    nonzero noise eigenvalue)``, ``hi = max(x+, lambda_hat_{K+1})`` and
    ``delta = min((lambda_hat_K - hi)/4, lo/2)``. The only singularities of
    the integrand are real, so the half-height is free; it is set to half
    the width.
    """
    lam = eigsys.eigenvalues
    x_lo, x_hi = mp_support(eigsys.sigma2, eigsys.c_N)
    hi = max(x_hi, lam[K]) if K < eigsys.M else x_hi
    if lam[K - 1] <= hi:
        raise SeparationError(
            f"spike {K} ({lam[K - 1]:.6g}) not separated from the bulk edge {hi:.6g}", index=K - 1
        )
    n_nonzero = min(eigsys.M, eigsys.N)
    lo = min(x_lo, lam[n_nonzero - 1]) if n_nonzero > K else x_lo
    delta = 0.25 * (lam[K - 1] - hi)
    if lo > 0:
        delta = min(delta, 0.5 * lo)
    left, right = lo - delta, hi + delta
    return Contour(left, right, max(delta, 0.5 * (right - left)), delta)


def _ghat(z, lam, c_N):
    r = 1.0 / (lam[None, :] - z[:, None])
    m = r.mean(axis=1)
    dm = (r * r).mean(axis=1)
    return ((1.0 - c_N) + c_N * z * z * dm) / ((1.0 - c_N) - c_N * z * m), r


def _contour_weights(eigsys, contour, n_per_panel):
    z, dz = contour.nodes(n_per_panel)
    g, r = _ghat(z, eigsys.eigenvalues, eigsys.c_N)
    # -1/(2 pi i) \oint g(z) / (lambda_j - z) dz : unit weight on enclosed
    # eigenvalues when g == 1
    return -((g * dz) @ r) / (2j * np.pi)


@dataclass(frozen=True)
class UnconditionalWeights:
    weights: np.ndarray  # complex, one per eigenvector
    contour: Contour
    nodes: int
    change: float  # last successive difference


def unconditional_weights(eigsys: SampleEigensystem, K: int, n_start: int = 512, tol: float = 1e-8,
                          max_nodes: int = 1 << 16) -> UnconditionalWeights:
    """Per-eigenvector weights of the unconditional estimator by contour quadrature.

    Total node count starts near ``n_start`` and doubles until two
    successive weight vectors differ by less than ``tol``.
    """
    contour = unconditional_contour(eigsys, K)
    n_panels = len(contour.panels())
    per = max(4, -(-n_start // n_panels))
    prev = _contour_weights(eigsys, contour, per)
    while True:
        per *= 2
        n = per * n_panels
        cur = _contour_weights(eigsys, contour, per)
        change = float(np.max(np.abs(cur - prev)))
        if change < tol:
            return UnconditionalWeights(cur, contour, n, change)
        if n >= max_nodes:
            warnings.warn(f"contour quadrature stopped at {n} nodes (change {change:.2e})", stacklevel=2)
            return UnconditionalWeights(cur, contour, n, change)
        prev = cur


def eta_unconditional(d1, d2, eigsys: SampleEigensystem, K: int, **kw) -> complex:
    """Unconditional estimate of ``d1^* Pi d2``.

    Equals the quadrature of ``-(1/2 pi i) \\oint d1^*(Sigma Sigma^* - z)^{-1} d2 ghat(z) dz``
    with the resolvent expanded in the eigenbasis.
    """
    uw = unconditional_weights(eigsys, K, **kw)
    U = eigsys.eigenvectors
    p1 = np.asarray(d1).conj() @ U
    p2 = U.conj().T @ np.asarray(d2)
    return complex(np.sum(uw.weights * p1 * p2))


def unconditional_spectrum(eigsys: SampleEigensystem, K: int, **kw) -> PseudoSpectrum:
    uw = unconditional_weights(eigsys, K, **kw)
    return PseudoSpectrum("unconditional", eigsys.eigenvectors, uw.weights.real, eigsys.N)


# -- DoA extraction -----------------------------------------------------------

@dataclass(frozen=True)
class SourceSearch:
    interval: Tuple[float, float]
    theta: float
    cost: float
    iterations: int
    bracket_width: float


@dataclass(frozen=True)
class DoaEstimate:
    method: str
    sources: Tuple[SourceSearch, ...]

    @property
    def thetas(self) -> np.ndarray:
        return np.array([s.theta for s in self.sources])


def default_intervals(thetas: Sequence[float], M: int, shrink: float = 0.1) -> List[Tuple[float, float]]:
    """Disjoint intervals centered on the true DoAs.

    Half-width is ``(1 - shrink)/2`` times the distance to the nearest other
    DoA; a lone source gets two beamwidths on each side.
    """
    th = np.asarray(thetas, dtype=float)
    out = []
    for k, t in enumerate(th):
        others = np.delete(th, k)
        if others.size:
            half = 0.5 * (1.0 - shrink) * np.min(np.abs(others - t))
        else:
            half = min(np.pi, 2.0 * 2.0 * np.pi / M)
        out.append((t - half, t + half))
    return out


def golden_section(f, a: float, b: float, tol: float):
    """Minimize ``f`` on ``[a, b]``; returns ``(x, f(x), iterations, width)``."""
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    it = 0
    while b - a > tol:
        it += 1
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = f(x2)
    return (x1, f1, it, b - a) if f1 <= f2 else (x2, f2, it, b - a)


def search_interval(ps: PseudoSpectrum, interval, points_per_beamwidth: int = 16, min_points: int = 64,
                    tol: float = 1e-10 * 2 * np.pi, evaluator=None) -> SourceSearch:
    lo, hi = float(interval[0]), float(interval[1])
    if not hi > lo:
        raise ValueError(f"empty interval {interval}")
    sign = -1.0 if ps.maximize else 1.0
    n = max(min_points, int(math.ceil(points_per_beamwidth * (hi - lo) * ps.M / (2 * np.pi)))) + 1
    grid = np.linspace(lo, hi, n)
    vals = sign * ps(grid)
    i = int(np.argmin(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, n - 1)]
    ev = evaluator or ps.scalar_evaluator()
    x, fx, it, width = golden_section(lambda t: sign * ev(t), a, b, tol)
    if vals[i] < fx:
        x, fx = grid[i], vals[i]
    return SourceSearch((lo, hi), float(x), float(sign * fx), it, float(width))


def extract_doas(ps: PseudoSpectrum, intervals, **kw) -> DoaEstimate:
    """Per-interval minimizer (maximizer for the periodogram) of a pseudo-spectrum.

    Grid scan at ``points_per_beamwidth`` points per ``2 pi / M`` (at least
    ``min_points``), then golden-section refinement of the best bracket.
    """
    iv = [tuple(map(float, x)) for x in intervals]
    srt = sorted(iv)
    for (a0, b0), (a1, b1) in zip(srt, srt[1:]):
        if a1 <= b0:
            raise ValueError("search intervals must be disjoint")
    ev = ps.scalar_evaluator()
    return DoaEstimate(ps.method, tuple(search_interval(ps, x, evaluator=ev, **kw) for x in iv))
