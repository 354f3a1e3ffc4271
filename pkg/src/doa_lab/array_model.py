"""Uniform linear array model: steering vectors, snapshot synthesis, SCM.

Angles are electrical angles: the m-th sensor (0-based) sees a phase
``exp(1j * m * theta)``. Use :func:`electrical_angle` to map a physical
arrival angle to this convention.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

GENERATOR_NAME = "numpy.random.PCG64"
SOURCE_MODES = ("gaussian", "spike_exact")


def generator_label() -> str:
    """Generator algorithm and numpy version, for output metadata."""
    return f"{GENERATOR_NAME} (SeedSequence) numpy=={np.__version__}"


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator seeded through ``SeedSequence``.

    ``seed`` may be an int or a sequence of ints; sequences are how trial
    streams are split (``(master, snr_index, trial)``).
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def mix_seed(*parts: int) -> int:
    """Deterministically combine integers into one 64-bit seed."""
    ss = np.random.SeedSequence([int(p) for p in parts])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def electrical_angle(physical: float, spacing_wavelengths: float = 0.5) -> float:
    """Map a physical angle (radians from broadside) to the electrical angle."""
    return 2.0 * np.pi * spacing_wavelengths * np.sin(physical)


def steering(theta, M: int) -> np.ndarray:
    """Unit-norm ULA steering vector ``a(theta)``.

    A 1-D array of angles returns an ``(M, len(theta))`` matrix whose columns
    are steering vectors.
    """
    return steering_derivative(theta, M, 0)


def steering_derivative(theta, M: int, order: int = 1) -> np.ndarray:
    """``order``-th derivative of ``a(theta)`` w.r.t. theta (order 0..3)."""
    if M < 1:
        raise ValueError(f"sensor count must be positive, got M={M}")
    if order not in (0, 1, 2, 3):
        raise ValueError(f"unsupported derivative order {order}")
    m = np.arange(M)
    th = np.asarray(theta, dtype=float)
    phase = np.exp(1j * np.multiply.outer(m, th))
    if order:
        phase = phase * ((1j * m) ** order).reshape((M,) + (1,) * th.ndim)
    return phase / np.sqrt(M)


def steering_matrix(thetas: Sequence[float], M: int) -> np.ndarray:
    return steering(np.asarray(thetas, dtype=float), M)


@dataclass(frozen=True, eq=False)
class ArrayScenario:
    """One experiment: array size, snapshots, sources, noise and seed.

    Either ``doas`` (explicit electrical angles) or ``spacing = (theta1, alpha)``
    must be given. With ``spacing`` the second DoA is ``theta1 + alpha / N``,
    so changing ``N`` moves it.

    ``sources="gaussian"`` draws ``S = R^{1/2} X`` with i.i.d. standard complex
    Gaussian ``X``. ``sources="spike_exact"`` builds a deterministic ``S`` for
    which the eigenvalues of ``A S S^* A^* / N`` are exactly the eigenvalues of
    ``source_cov``.
    """

    M: int
    N: int
    doas: Optional[Tuple[float, ...]] = None
    spacing: Optional[Tuple[float, float]] = None
    source_cov: Optional[np.ndarray] = None
    noise_power: float = 1.0
    seed: int = 0
    sources: str = "gaussian"

    def __post_init__(self):
        if (self.doas is None) == (self.spacing is None):
            raise ValueError("give exactly one of doas or spacing")
        if self.doas is not None:
            object.__setattr__(self, "doas", tuple(float(t) for t in self.doas))
        else:
            t1, alpha = self.spacing
            if alpha <= 0:
                raise ValueError("spacing parameter alpha must be positive")
            object.__setattr__(self, "spacing", (float(t1), float(alpha)))
        K = self.K
        if self.M < 1 or self.N < 1:
            raise ValueError("M and N must be positive")
        if not 1 <= K < self.M:
            raise ValueError(f"need 1 <= K < M, got K={K}, M={self.M}")
        th = self.thetas
        if len(set(np.round(th, 15))) != K:
            raise ValueError("DoAs must be pairwise distinct")
        R = np.eye(K) if self.source_cov is None else np.array(self.source_cov, dtype=complex)
        if R.shape != (K, K):
            raise ValueError(f"source covariance must be {K}x{K}")
        if not np.allclose(R, R.conj().T, atol=1e-12):
            raise ValueError("source covariance must be Hermitian")
        if np.linalg.eigvalsh(R).min() <= 0:
            raise ValueError("source covariance must be positive definite")
        R.setflags(write=False)
        object.__setattr__(self, "source_cov", R)
        if self.noise_power < 0:
            raise ValueError("noise power must be nonnegative")
        if self.sources not in SOURCE_MODES:
            raise ValueError(f"sources must be one of {SOURCE_MODES}")

    @property
    def K(self) -> int:
        return len(self.doas) if self.doas is not None else 2

    @property
    def c(self) -> float:
        return self.M / self.N

    @property
    def thetas(self) -> np.ndarray:
        if self.doas is not None:
            return np.array(self.doas)
        t1, alpha = self.spacing
        return np.array([t1, t1 + alpha / self.N])

    @property
    def closely_spaced(self) -> bool:
        return self.spacing is not None

    @property
    def snr_db(self) -> float:
        return -10.0 * np.log10(self.noise_power)

    def steering_matrix(self) -> np.ndarray:
        return steering_matrix(self.thetas, self.M)

    def replace(self, **changes) -> "ArrayScenario":
        return dataclasses.replace(self, **changes)

    def at_snr(self, snr_db: float) -> "ArrayScenario":
        """Copy with ``noise_power = 10^(-snr_db/10)`` (unit-power sources)."""
        return self.replace(noise_power=10.0 ** (-snr_db / 10.0))


@dataclass(frozen=True, eq=False)
class SnapshotMatrix:
    Y: np.ndarray
    M: int
    N: int
    S: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.Y.shape != (self.M, self.N):
            raise ValueError(f"snapshot matrix has shape {self.Y.shape}, expected {(self.M, self.N)}")


def _hermitian_sqrt(R: np.ndarray) -> np.ndarray:
    w, U = np.linalg.eigh(R)
    return (U * np.sqrt(np.clip(w, 0.0, None))) @ U.conj().T


def complex_normal(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circular complex Gaussian entries; real and imaginary parts each ``variance/2``."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def source_signals(scenario: ArrayScenario, rng: np.random.Generator) -> np.ndarray:
    K, N = scenario.K, scenario.N
    R = scenario.source_cov
    if scenario.sources == "gaussian":
        return _hermitian_sqrt(R) @ complex_normal(rng, (K, N))
    # spike_exact: A S / sqrt(N) = U diag(sqrt(lam)) Q^*, Q with orthonormal columns
    A = scenario.steering_matrix()
    U, _ = np.linalg.qr(A)
    lam = np.sort(np.linalg.eigvalsh(R))[::-1]
    Q, _ = np.linalg.qr(complex_normal(rng, (N, K)))
    target = np.sqrt(N) * (U * np.sqrt(lam)) @ Q.conj().T
    return np.linalg.lstsq(A, target, rcond=None)[0]


def synthesize(scenario: ArrayScenario, rng: Optional[np.random.Generator] = None) -> SnapshotMatrix:
    """Draw ``Y = A S + V`` for the scenario.

    Sources are drawn first, then the noise, from ``make_rng(scenario.seed)``
    unless an explicit generator is passed.
    """
    if rng is None:
        rng = make_rng(scenario.seed)
    S = source_signals(scenario, rng)
    Y = scenario.steering_matrix() @ S
    if scenario.noise_power > 0:
        Y = Y + complex_normal(rng, (scenario.M, scenario.N), scenario.noise_power)
    return SnapshotMatrix(Y=Y, M=scenario.M, N=scenario.N, S=S)


def sample_covariance(Y) -> np.ndarray:
    """``Y Y^* / N``, symmetrized to be exactly Hermitian."""
    Y = Y.Y if isinstance(Y, SnapshotMatrix) else np.asarray(Y)
    if Y.ndim == 1:
        Y = Y[:, None]
    N = Y.shape[1]
    if N < 1:
        raise ValueError("need at least one snapshot")
    R = (Y @ Y.conj().T) / N
    return 0.5 * (R + R.conj().T)


def population_covariance(scenario: ArrayScenario) -> np.ndarray:
    """Signal part ``A R A^*`` of the covariance (the limit of ``B B^*``)."""
    A = scenario.steering_matrix()
    return A @ scenario.source_cov @ A.conj().T
