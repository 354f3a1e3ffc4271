"""Deterministic large-array limits.

Marchenko-Pastur law and its Stieltjes transform, the spike maps ``phi`` and
``h``, subspace-estimator CLT variances, the (G-)MUSIC DoA variance
predictions and the closely spaced resolution profiles ``kappa`` and
``kappa_t``.

Throughout, ``c`` is the aspect ratio ``M/N`` and ``sigma2`` the noise power.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import integrate

from .array_model import ArrayScenario, population_covariance, steering, steering_derivative
from .errors import DegenerateCurvatureError, SeparationError, UnsupportedMethodError


# -- Marchenko-Pastur -------------------------------------------------------

def mp_support(sigma2: float, c: float):
    r = np.sqrt(c)
    return sigma2 * (1.0 - r) ** 2, sigma2 * (1.0 + r) ** 2


def mp_atom(c: float) -> float:
    """Mass of the atom at zero (nonzero only for c > 1)."""
    return max(0.0, 1.0 - 1.0 / c)


def mp_density(x, sigma2: float, c: float):
    """Density of the absolutely continuous part (the atom is :func:`mp_atom`)."""
    x = np.asarray(x, dtype=float)
    lo, hi = mp_support(sigma2, c)
    inside = (x > lo) & (x < hi)
    out = np.zeros_like(x)
    xi = x[inside]
    out[inside] = np.sqrt((xi - lo) * (hi - xi)) / (2.0 * np.pi * sigma2 * c * xi)
    return out if out.ndim else float(out)


def mp_cdf(x, sigma2: float, c: float):
    """Distribution function, atom included."""
    lo, hi = mp_support(sigma2, c)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    order = np.argsort(x)
    xs = np.clip(x[order], lo, hi)
    pieces = np.empty_like(xs)
    prev = lo
    for i, b in enumerate(xs):
        pieces[i] = integrate.quad(mp_density, prev, b, args=(sigma2, c), limit=200)[0] if b > prev else 0.0
        prev = max(prev, b)
    F = np.empty_like(xs)
    F[order] = np.cumsum(pieces)
    F = F + np.where(x >= 0, mp_atom(c), 0.0)
    return F


def _check_off_support(z, sigma2, c):
    z = np.asarray(z, dtype=complex)
    lo, hi = mp_support(sigma2, c)
    bad = (z.imag == 0) & (z.real >= lo) & (z.real <= hi)
    if np.any(bad):
        raise ValueError("z lies on the Marchenko-Pastur support")
    return z


def mp_stieltjes(z, sigma2: float, c: float):
    """Stieltjes transform ``m(z)`` of the Marchenko-Pastur law.

    Root of ``sigma2*c*z*m^2 + (z - sigma2*(1-c))*m + 1 = 0`` with the branch
    cut placed on the support, written in the cancellation-free form
    ``m = -2 / ((z - sigma2(1-c)) + sqrt(z - x-) sqrt(z - x+))``.
    """
    z = _check_off_support(z, sigma2, c)
    lo, hi = mp_support(sigma2, c)
    root = np.sqrt(z - lo) * np.sqrt(z - hi)
    m = -2.0 / ((z - sigma2 * (1.0 - c)) + root)
    return m if m.ndim else complex(m)


def mp_stieltjes_derivative(z, sigma2: float, c: float):
    """``m'(z)`` by implicit differentiation of the quadratic."""
    z = np.asarray(z, dtype=complex)
    m = np.asarray(mp_stieltjes(z, sigma2, c))
    dm = -(sigma2 * c * m * m + m) / (2.0 * sigma2 * c * z * m + z - sigma2 * (1.0 - c))
    return dm if dm.ndim else complex(dm)


def mp_fixed_point_residual(z, sigma2: float, c: float):
    """``|m - 1/(-z(1 + sigma2 c m) + sigma2 (1-c))|``."""
    m = mp_stieltjes(z, sigma2, c)
    return np.abs(m - 1.0 / (-z * (1.0 + sigma2 * c * m) + sigma2 * (1.0 - c)))


def w_of_z(z, sigma2: float, c: float):
    """``w(z) = z(1 + s c m)^2 - s(1-c)(1 + s c m)``; inverse of ``phi`` above the bulk."""
    m = np.asarray(mp_stieltjes(z, sigma2, c))
    t = 1.0 + sigma2 * c * m
    w = np.asarray(z) * t * t - sigma2 * (1.0 - c) * t
    if np.ndim(w) == 0:
        w = complex(w)
        return w.real if np.isreal(z) and abs(w.imag) < 1e-12 * max(1.0, abs(w)) else w
    return w


def w_prime(z, sigma2: float, c: float):
    z = np.asarray(z, dtype=complex)
    m = np.asarray(mp_stieltjes(z, sigma2, c))
    dm = np.asarray(mp_stieltjes_derivative(z, sigma2, c))
    t = 1.0 + sigma2 * c * m
    dt = sigma2 * c * dm
    out = t * t + 2.0 * z * t * dt - sigma2 * (1.0 - c) * dt
    return out if out.ndim else complex(out)


def g_of_z(z, sigma2: float, c: float):
    """``((1-c) + c z^2 m'(z)) / ((1-c) - c z m(z))``, the limit kernel of the
    unconditional estimator."""
    z = np.asarray(z, dtype=complex)
    m = np.asarray(mp_stieltjes(z, sigma2, c))
    dm = np.asarray(mp_stieltjes_derivative(z, sigma2, c))
    out = ((1.0 - c) + c * z * z * dm) / ((1.0 - c) - c * z * m)
    return out if out.ndim else complex(out)


# -- spike maps -------------------------------------------------------------

def _require_detectable(lam, sigma2, c):
    lam = np.asarray(lam, dtype=float)
    bad = np.flatnonzero(np.atleast_1d(lam) <= sigma2 * np.sqrt(c))
    if bad.size:
        raise SeparationError(
            f"spike {np.atleast_1d(lam)[bad[0]]:.6g} <= sigma2*sqrt(c) = {sigma2 * np.sqrt(c):.6g}",
            index=int(bad[0]),
        )
    return lam


def phi(lam, sigma2: float, c: float):
    """Almost-sure limit of the sample eigenvalue generated by spike ``lam``."""
    lam = _require_detectable(lam, sigma2, c)
    return (lam + sigma2) * (lam + sigma2 * c) / lam


def h_of_spike(lam, sigma2: float, c: float):
    """``h(phi(lam)) = (lam^2 - sigma2^2 c) / (lam (lam + sigma2 c))``: the
    squared alignment between sample and population spike eigenvectors."""
    lam = _require_detectable(lam, sigma2, c)
    return (lam * lam - sigma2 * sigma2 * c) / (lam * (lam + sigma2 * c))


def spike_from_sample(lam_hat, sigma2: float, c: float):
    """Invert ``phi``: larger root of ``w^2 + (s(1+c) - lam_hat) w + s^2 c = 0``.

    Raises :class:`SeparationError` when ``lam_hat`` is not above the bulk edge.
    """
    lam_hat = np.asarray(lam_hat, dtype=float)
    edge = mp_support(sigma2, c)[1]
    bad = np.flatnonzero(np.atleast_1d(lam_hat) <= edge)
    if bad.size:
        raise SeparationError(
            f"sample eigenvalue {np.atleast_1d(lam_hat)[bad[0]]:.6g} inside the bulk (edge {edge:.6g})",
            index=int(bad[0]),
        )
    b = sigma2 * (1.0 + c) - lam_hat
    disc = b * b - 4.0 * sigma2 * sigma2 * c
    return 0.5 * (-b + np.sqrt(disc))


def gmusic_weight(lam_hat, sigma2: float, c: float):
    """G-MUSIC weight ``1 / h(lam_hat)`` for sample spike(s) above the bulk."""
    w = spike_from_sample(lam_hat, sigma2, c)
    return w * (w + sigma2 * c) / (w * w - sigma2 * sigma2 * c)


# -- models -----------------------------------------------------------------

@dataclass(frozen=True)
class SpikeModel:
    """Noise power, aspect ratio and nonincreasing positive spikes."""

    sigma2: float
    c: float
    spikes: tuple

    def __post_init__(self):
        lam = tuple(float(x) for x in self.spikes)
        object.__setattr__(self, "spikes", lam)
        if self.sigma2 <= 0 or self.c < 0:
            raise ValueError("need sigma2 > 0 and c >= 0")
        if any(x <= 0 for x in lam):
            raise ValueError("spikes must be positive")
        if any(a < b for a, b in zip(lam, lam[1:])):
            raise ValueError("spikes must be sorted in decreasing order")
        if any(a == b for a, b in zip(lam, lam[1:])):
            warnings.warn("repeated spike values; limits still hold but eigenvectors are not unique",
                          stacklevel=2)

    @property
    def K(self) -> int:
        return len(self.spikes)

    @property
    def lam(self) -> np.ndarray:
        return np.array(self.spikes)


@dataclass(frozen=True)
class TwoSourceModel:
    """Two equal-power uncorrelated sources spaced ``alpha / N`` apart."""

    alpha: float
    c: float
    sigma2: float

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")

    @property
    def sinc_alpha(self) -> float:
        return float(sinc(self.alpha * self.c / 2.0))

    @property
    def s(self) -> float:
        return abs(self.sinc_alpha)

    @property
    def lam1(self) -> float:
        return 1.0 + self.s

    @property
    def lam2(self) -> float:
        return 1.0 - self.s

    def _d(self, lam):
        s4c = self.sigma2 ** 2 * self.c
        return (lam * lam - s4c) / (lam * (lam + self.sigma2 * self.c))

    @property
    def d1(self) -> float:
        """Asymptotic MUSIC weight attached to ``1 - |sinc|``."""
        return self._d(1.0 - self.s)

    @property
    def d2(self) -> float:
        """Asymptotic MUSIC weight attached to ``1 + |sinc|``."""
        return self._d(1.0 + self.s)


class Separation(NamedTuple):
    ok: bool
    margin: float


def separation_check(model) -> Separation:
    if isinstance(model, TwoSourceModel):
        margin = 1.0 - model.sigma2 * np.sqrt(model.c) - model.s
    else:
        margin = min(model.spikes) - model.sigma2 * np.sqrt(model.c)
    return Separation(bool(margin > 0), float(margin))


def separation_snr_db(lam_min: float, c: float) -> float:
    """SNR (dB, unit-power convention) at which ``lam_min = sigma2 sqrt(c)``
    for ``lam_min`` given at unit noise power."""
    return float(10.0 * np.log10(np.sqrt(c) / lam_min))


# -- CLT variances ----------------------------------------------------------

def chi_t(lk, ll, sigma2: float, c: float):
    s2, s4 = sigma2, sigma2 * sigma2
    p = lk * ll
    first = p * (p + s2 * (lk + ll) + s4) * ((1.0 + c) * (p + s4 * c) + 2.0 * s2 * c * (lk + ll))
    second = c * (p - s4 * c) * (p + s2 * (lk + ll) + s4 * c) ** 2
    return first - second


def vartheta_gmusic(lam, sigma2: float, c: float):
    """Signal block ``(K, K)`` and signal/noise cross weights ``(K,)``."""
    lam = np.asarray(lam, dtype=float)
    s2, s4 = sigma2, sigma2 * sigma2
    lk, ll = lam[:, None], lam[None, :]
    p = lk * ll
    block = (s4 * c * (p + (lk + ll) * s2 + s4) * (p + s4 * c)) / (
        4.0 * (lk * lk - s4 * c) * (ll * ll - s4 * c) * (p - s4 * c)
    )
    cross = s2 * (lam + s2) / (4.0 * (lam * lam - s4 * c))
    return block, cross


def vartheta_music(lam, sigma2: float, c: float):
    lam = np.asarray(lam, dtype=float)
    s2, s4 = sigma2, sigma2 * sigma2
    lk, ll = lam[:, None], lam[None, :]
    block = (s4 * c / 4.0) * chi_t(lk, ll, sigma2, c) / (
        lk * ll * (lk + s2 * c) ** 2 * (ll + s2 * c) ** 2 * (lk * ll - s4 * c)
    )
    cross = s2 * (lam + s2) * (lam * lam - s4 * c) / (4.0 * lam * lam * (lam + s2 * c) ** 2)
    return block, cross


def _gamma(block, cross, frame, d1, d2):
    K = block.shape[0]
    U = np.asarray(frame)[:, :K]
    d1 = np.asarray(d1).reshape(-1)
    d2 = np.asarray(d2).reshape(-1)
    MU = np.outer(d1, d2.conj() @ U) + np.outer(d2, d1.conj() @ U)  # (d1 d2* + d2 d1*) U
    inner = U.conj().T @ MU
    noise_part = MU - U @ inner  # projector onto span(U)^perp applied to MU
    g = np.sum(block * np.abs(inner) ** 2) + 2.0 * np.sum(cross * np.sum(np.abs(noise_part) ** 2, axis=0))
    return float(g)


def gamma_gmusic(model: SpikeModel, frame, d1, d2) -> float:
    """CLT variance ``gamma_N`` of the G-MUSIC bilinear-form estimator.

    ``frame`` holds the population spike eigenvectors in its first K columns;
    the noise-block sum is collapsed onto the orthogonal complement of those
    columns, so further columns (if any) are ignored.
    """
    if not separation_check(model).ok:
        raise SeparationError("separation condition violated", index=model.K - 1)
    return _gamma(*vartheta_gmusic(model.lam, model.sigma2, model.c), frame, d1, d2)


def gamma_music(model: SpikeModel, frame, d1, d2) -> float:
    """CLT variance ``gamma^(t)_N`` of the traditional bilinear-form estimator."""
    if not separation_check(model).ok:
        raise SeparationError("separation condition violated", index=model.K - 1)
    return _gamma(*vartheta_music(model.lam, model.sigma2, model.c), frame, d1, d2)


def uncorrelated_variance(lam, sigma2: float, c: float):
    """Widely spaced, uncorrelated limit of the variance of ``N^{3/2}(theta_hat - theta)``,
    shared by MUSIC and G-MUSIC."""
    lam = np.asarray(lam, dtype=float)
    return 6.0 / c ** 2 * sigma2 * (lam + sigma2) / (lam * lam - sigma2 * sigma2 * c)


def uncorrelated_limits(lam, sigma2: float, c: float) -> dict:
    """Closed-form uncorrelated widely spaced limits of the ingredients of both CLTs."""
    s4c = sigma2 * sigma2 * c
    return {
        "curvature_gmusic": c * c / 12.0,
        "gamma_gmusic": c * c / 24.0 * sigma2 * (lam + sigma2) / (lam * lam - s4c),
        "curvature_music": c * c * (lam * lam - s4c) / (6.0 * lam * (lam + sigma2 * c)),
        # the sigma2 factor follows from the cross weight of vartheta^(t)
        "gamma_music": sigma2 * c * c * (lam + sigma2) * (lam * lam - s4c)
        / (24.0 * lam * lam * (lam + sigma2 * c) ** 2),
    }


@dataclass(frozen=True)
class Population:
    """Spike eigenstructure of ``A R A^*`` for a scenario."""

    model: SpikeModel
    frame: np.ndarray  # (M, K) spike eigenvectors
    projector: np.ndarray  # noise-subspace projector

    @classmethod
    def from_scenario(cls, scenario: ArrayScenario) -> "Population":
        K = scenario.K
        w, U = np.linalg.eigh(population_covariance(scenario))
        idx = np.argsort(w)[::-1][:K]
        lam, U = w[idx], U[:, idx]
        P = np.eye(scenario.M) - U @ U.conj().T
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = SpikeModel(scenario.noise_power, scenario.c, tuple(np.maximum(lam, 0.0)))
        return cls(model=model, frame=U, projector=P)

    @classmethod
    def from_sample(cls, eigsys, K: int) -> "Population":
        """Plug-in estimate from a sample eigensystem: spikes by inverting
        ``phi`` and sample eigenvectors as the frame. For prediction from data
        when the truth is unknown; the eigenvectors are not consistent, so
        this is biased at finite ``c``."""
        lam = spike_from_sample(eigsys.eigenvalues[:K], eigsys.sigma2, eigsys.c_N)
        U = eigsys.eigenvectors[:, :K]
        P = np.eye(U.shape[0]) - U @ U.conj().T
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            model = SpikeModel(eigsys.sigma2, eigsys.c_N, tuple(lam))
        return cls(model=model, frame=U, projector=P)


@dataclass(frozen=True)
class CltPrediction:
    method: str
    gamma: float
    curvature: float
    variance: float  # of N^{3/2} (theta_hat - theta)

    def mse(self, N: int) -> float:
        return self.variance / N ** 3


def music_limit_curvature(pop: Population, theta: float, N: int) -> float:
    """``eta^(t)(2)(theta) / N^2`` for the MUSIC limit cost ``1 - sum_k h_k |a^* u_k|^2``."""
    model = pop.model
    M = pop.frame.shape[0]
    hk = h_of_spike(model.lam, model.sigma2, model.c)
    f0 = steering(theta, M).conj() @ pop.frame
    f1 = steering_derivative(theta, M, 1).conj() @ pop.frame
    f2 = steering_derivative(theta, M, 2).conj() @ pop.frame
    second = 2.0 * np.sum(hk * (np.abs(f1) ** 2 + np.real(f0.conj() * f2)))
    return float(-second / N ** 2)


def predict_variance(method: str, scenario: ArrayScenario, source: int = 0,
                     population: Optional[Population] = None) -> CltPrediction:
    """Asymptotic variance of ``N^{3/2}(theta_hat_k - theta_k)``.

    ``gmusic``: ``gamma_N / (d1^* Pi d1)^2`` with ``d1 = a'(theta_k)/N``,
    ``d2 = a(theta_k)``. ``music``: ``4 gamma^(t)_N / (eta^(t)(2)/N^2)^2``, only
    for widely spaced scenarios.
    """
    pop = Population.from_scenario(scenario) if population is None else population
    M, N = scenario.M, scenario.N
    theta = scenario.thetas[source]
    d1 = steering_derivative(theta, M, 1) / N
    d2 = steering(theta, M)
    if method == "gmusic":
        curv = float(np.real(d1.conj() @ pop.projector @ d1))
        if curv < 1e-6:
            raise DegenerateCurvatureError(f"d1* Pi d1 = {curv:.3g}")
        gam = gamma_gmusic(pop.model, pop.frame, d1, d2)
        return CltPrediction("gmusic", gam, curv, gam / curv ** 2)
    if method == "music":
        if scenario.closely_spaced:
            raise UnsupportedMethodError("MUSIC CLT only holds for widely spaced DoAs")
        curv = music_limit_curvature(pop, theta, N)
        if abs(curv) < 1e-6:
            raise DegenerateCurvatureError(f"eta^(t)(2)/N^2 = {curv:.3g}")
        gam = gamma_music(pop.model, pop.frame, d1, d2)
        return CltPrediction("music", gam, curv, 4.0 * gam / curv ** 2)
    raise UnsupportedMethodError(f"no CLT available for method {method!r}")


# -- closely spaced resolution profiles -------------------------------------

def sinc(x):
    """``sin(x)/x`` with ``sinc(0) = 1`` (unnormalized, unlike ``np.sinc``)."""
    return np.sinc(np.asarray(x, dtype=float) / np.pi)


def kappa(beta, model: TwoSourceModel):
    """Limit of ``1 - eta_N(theta_1 + beta/N)`` for the true pseudo-spectrum."""
    s = model.sinc_alpha
    if abs(s) >= 1.0:
        raise ValueError("kappa undefined for coincident sources (|sinc(alpha c/2)| = 1)")
    b = np.asarray(beta, dtype=float)
    c = model.c
    sb, sba = sinc(b * c / 2.0), sinc((b - model.alpha) * c / 2.0)
    # (sb^2 + sba^2 - 2 s sb sba) / (1 - s^2) rewritten around the nearer
    # source so that the value is exactly 1 at beta = 0 and beta = alpha
    near_first = np.abs(b) <= np.abs(b - model.alpha)
    first = sb * sb + (sba - s * sb) ** 2 / (1.0 - s * s)
    second = sba * sba + (sb - s * sba) ** 2 / (1.0 - s * s)
    out = np.where(near_first, first, second)
    return out if out.ndim else float(out)


def _kappa_t_parts(beta, model):
    b = np.asarray(beta, dtype=float)
    c = model.c
    sb, sba = sinc(b * c / 2.0), sinc((b - model.alpha) * c / 2.0)
    # the larger eigenvalue goes with sb + sign(sinc) * sba; the displayed
    # formula assumes sinc(alpha c/2) >= 0
    sgn = -1.0 if model.sinc_alpha < 0 else 1.0
    return (sb + sgn * sba) ** 2, (sb - sgn * sba) ** 2


def kappa_t(beta, model: TwoSourceModel):
    """Limit of ``1 - eta^(t)_N(theta_1 + beta/N)`` for MUSIC, eigenvalue form."""
    s4c = model.sigma2 ** 2 * model.c
    sc = model.sigma2 * model.c
    l1, l2 = model.lam1, model.lam2
    if l1 * l1 == s4c or l2 * l2 == s4c or l2 <= 0:
        raise ValueError("degenerate kappa_t denominators")
    plus, minus = _kappa_t_parts(beta, model)
    return ((l1 * l1 - s4c) * plus / (2.0 * l1 * l1 * (l1 + sc))
            + (l2 * l2 - s4c) * minus / (2.0 * l2 * l2 * (l2 + sc)))


def kappa_t_dform(beta, model: TwoSourceModel):
    """Same profile written with the asymptotic MUSIC weights ``d1(alpha), d2(alpha)``."""
    s = model.s
    if s >= 1.0 or model.lam2 * model.lam2 == model.sigma2 ** 2 * model.c:
        raise ValueError("degenerate kappa_t denominators")
    plus, minus = _kappa_t_parts(beta, model)
    return minus * model.d1 / (2.0 * (1.0 - s)) + plus * model.d2 / (2.0 * (1.0 + s))


def is_local_max(f, beta: float, scale: float, step: Optional[float] = None) -> bool:
    """Numerical local-maximum test of a smooth 1-D profile at ``beta``.

    Local max iff the central first difference is negligible and the second
    difference is negative; ``scale`` sets the step (``1e-4 * scale``).
    """
    h = 1e-4 * scale if step is None else step
    fm, f0, fp = float(f(beta - h)), float(f(beta)), float(f(beta + h))
    d1 = (fp - fm) / (2 * h)
    d2 = (fp - 2 * f0 + fm) / (h * h)
    return abs(d1) < 1e-6 * max(1.0, abs(d2) * h) and d2 < 0


def music_resolves(model: TwoSourceModel, points: int = 4001) -> bool:
    """True when ``kappa_t`` has a local maximum on each side of ``alpha / 2``,
    so the limit MUSIC cost shows two separate dips. The dips sit at 0 and
    ``alpha`` only as ``sigma2 -> 0``; this is the weaker, practical notion."""
    a = model.alpha
    beta = np.linspace(-a / 2.0, 1.5 * a, points)
    k = kappa_t(beta, model)
    peak = (k[1:-1] > k[:-2]) & (k[1:-1] >= k[2:])
    b = beta[1:-1][peak]
    return bool(np.any(b < a / 2.0) and np.any(b > a / 2.0))


def kappa_t_derivative(beta, model: TwoSourceModel, h: float = 1e-6):
    return (kappa_t(beta + h, model) - kappa_t(beta - h, model)) / (2 * h)


def finite_difference_curvature(ps, theta: float) -> float:
    """Central second difference of a pseudo-spectrum with step ``0.1/N^2``,
    Richardson-extrapolated once."""
    h = 0.1 / ps.N ** 2

    def d2(step):
        return (ps(theta + step) - 2.0 * ps(theta) + ps(theta - step)) / (step * step)

    return float((4.0 * d2(h) - d2(2 * h)) / 3.0)
