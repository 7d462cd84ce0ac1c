"""Fixed-step RK4 propagation of the coupled-mode and master equations.

Both equations are linear, ``dy/dz = A(z) y``, so one classical RK4 step is a
matrix ``M_k`` that depends only on ``A`` at ``z_k``, ``z_k + h/2`` and
``z_k + h``.  The step matrices for a whole grid are built with vectorised
numpy calls and then applied in order; the arithmetic is the textbook RK4
update, only regrouped.

Amplitudes evolve under ``i da/dz = H a`` (generator ``-iH``), density
matrices under ``drho/dz = -i[H, rho]`` (a 4x4 generator acting on the
row-major flattening of ``rho``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from sta_coupler.errors import Indeterminate, NormDrift, PurityDrift, TraceDrift
from sta_coupler.hamiltonian import HamiltonianFn
from sta_coupler.profiles import AllenEberlyScheme, mixing_angle

DEFAULT_STEPS = 4096
DRIFT_LIMIT = 1e-6


@dataclass(frozen=True)
class ZGrid:
    """Uniform grid of ``n_steps`` RK4 steps from ``z_start`` to ``z_end``.

    Every ``stride``-th point is recorded; the end point always is.
    """

    z_start: float
    z_end: float
    n_steps: int
    stride: int = 1

    def __post_init__(self) -> None:
        if not (math.isfinite(self.z_start) and math.isfinite(self.z_end) and self.z_end > self.z_start):
            raise ValueError("z_end must exceed z_start")
        if self.n_steps < 1:
            raise ValueError("n_steps must be at least 1")
        if self.stride < 1:
            raise ValueError("stride must be at least 1")

    @property
    def step(self) -> float:
        return (self.z_end - self.z_start) / self.n_steps

    @classmethod
    def from_step(cls, z_start: float, z_end: float, max_step: float, stride: int = 1) -> ZGrid:
        """Grid whose step is the largest even division of the span not above ``max_step``."""
        if not max_step > 0:
            raise ValueError("step must be positive")
        n = max(1, math.ceil((z_end - z_start) / max_step - 1e-9))
        return cls(z_start, z_end, n, stride)

    @classmethod
    def across(cls, scheme: AllenEberlyScheme, n_steps: int = DEFAULT_STEPS, stride: int = 1) -> ZGrid:
        """Grid spanning the whole device, ``-L`` to ``+L``."""
        return cls(-scheme.half_length, scheme.half_length, n_steps, stride)

    def sample_indices(self) -> np.ndarray:
        idx = np.arange(0, self.n_steps + 1, self.stride)
        if idx[-1] != self.n_steps:
            idx = np.append(idx, self.n_steps)
        return idx

    def nodes(self) -> np.ndarray:
        """Full and half-step positions, ``2*n_steps + 1`` of them."""
        return self.z_start + (self.z_end - self.z_start) * np.arange(2 * self.n_steps + 1) / (2 * self.n_steps)


@dataclass
class Trajectory:
    """Recorded power evolution.

    ``norm_drift`` holds ``|<a|a> - 1|`` for amplitude runs and ``|tr rho - 1|``
    for density runs; ``purity_drift`` is only filled for density runs.
    """

    z: np.ndarray
    p1: np.ndarray
    p2: np.ndarray
    rho12: np.ndarray
    norm_drift: np.ndarray
    purity_drift: np.ndarray | None = None
    states: np.ndarray | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def final_p2(self) -> float:
        return float(self.p2[-1])

    @property
    def max_norm_drift(self) -> float:
        return float(np.max(self.norm_drift))

    @property
    def max_purity_drift(self) -> float:
        return 0.0 if self.purity_drift is None else float(np.max(self.purity_drift))


def _rk4_step_matrices(generator: np.ndarray, h: float) -> np.ndarray:
    """RK4 step matrices from a generator sampled on the full/half-step nodes."""
    a0, am, a1 = generator[0:-1:2], generator[1::2], generator[2::2]
    eye = np.eye(generator.shape[-1], dtype=complex)
    k1 = a0
    k2 = am + 0.5 * h * am @ k1
    k3 = am + 0.5 * h * am @ k2
    k4 = a1 + h * a1 @ k3
    return eye + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _liouvillian(h: np.ndarray) -> np.ndarray:
    """4x4 generator of ``-i[H, rho]`` on row-major ``vec(rho)``."""
    g = -1j * h
    eye = np.eye(2)
    return np.einsum("...ij,kl->...ikjl", g, eye).reshape(h.shape[:-2] + (4, 4)) + np.einsum(
        "ij,...kl->...ikjl", eye, np.conj(g)
    ).reshape(h.shape[:-2] + (4, 4))


def _sample_hamiltonian(hamiltonian: HamiltonianFn, grid: ZGrid) -> np.ndarray:
    nodes = grid.nodes()
    h = np.asarray(hamiltonian(nodes), dtype=complex)
    if h.shape != nodes.shape + (2, 2):
        raise ValueError(f"hamiltonian must map z of shape {nodes.shape} to {nodes.shape + (2, 2)}, got {h.shape}")
    return h


def _run(steps: np.ndarray, y0: np.ndarray, grid: ZGrid) -> np.ndarray:
    """Apply step matrices in order, returning the state at each sample index."""
    record = set(grid.sample_indices().tolist())
    out = []
    y = [complex(v) for v in y0]
    dim = len(y)
    if 0 in record:
        out.append(list(y))
    rows = steps.tolist()
    if dim == 2:
        a1, a2 = y
        for k, ((m00, m01), (m10, m11)) in enumerate(rows, start=1):
            a1, a2 = m00 * a1 + m01 * a2, m10 * a1 + m11 * a2
            if k in record:
                out.append([a1, a2])
    else:
        for k, m in enumerate(rows, start=1):
            y = [sum(mij * yj for mij, yj in zip(row, y)) for row in m]
            if k in record:
                out.append(y)
    return np.array(out, dtype=complex)


def _product(steps: np.ndarray) -> np.ndarray:
    """``M_{n-1} @ ... @ M_0`` by pairwise reduction."""
    mats = steps
    while mats.shape[0] > 1:
        if mats.shape[0] % 2:
            mats = np.concatenate([mats, np.eye(mats.shape[-1], dtype=complex)[None]], axis=0)
        mats = mats[1::2] @ mats[0::2]
    return mats[0]


def _check_amplitudes(a0: np.ndarray) -> np.ndarray:
    a0 = np.asarray(a0, dtype=complex).reshape(2)
    if abs(np.vdot(a0, a0).real - 1.0) > DRIFT_LIMIT:
        raise ValueError("initial amplitudes must be normalised")
    return a0


def _check_density(rho0: np.ndarray) -> np.ndarray:
    rho0 = np.asarray(rho0, dtype=complex).reshape(2, 2)
    if not np.allclose(rho0, rho0.conj().T, rtol=0, atol=1e-12):
        raise ValueError("initial density matrix must be Hermitian")
    if abs(np.trace(rho0).real - 1.0) > DRIFT_LIMIT:
        raise ValueError("initial density matrix must have unit trace")
    if np.linalg.eigvalsh(rho0).min() < -1e-12:
        raise ValueError("initial density matrix must be positive semidefinite")
    return rho0


def propagate_amplitudes(hamiltonian: HamiltonianFn, initial, grid: ZGrid) -> Trajectory:
    """Integrate ``i da/dz = H(z) a`` with classical RK4 on ``grid``.

    Parameters
    ----------
    hamiltonian : callable
        Vectorised ``z -> H`` returning shape ``z.shape + (2, 2)``.
    initial : array_like
        Normalised modal amplitudes ``(a1, a2)`` at ``grid.z_start``.
    grid : ZGrid

    Raises
    ------
    NormDrift
        If ``|<a|a> - 1|`` exceeds 1e-6 at any recorded sample.
    """
    a0 = _check_amplitudes(initial)
    h = _sample_hamiltonian(hamiltonian, grid)
    steps = _rk4_step_matrices(-1j * h, grid.step)
    states = _run(steps, a0, grid)
    z = grid.nodes()[2 * grid.sample_indices()]
    pops = np.abs(states) ** 2
    drift = np.abs(pops.sum(axis=1) - 1.0)
    if drift.max() > DRIFT_LIMIT:
        raise NormDrift(f"amplitude norm drifted by {drift.max():.3e}; reduce the step")
    return Trajectory(
        z=z,
        p1=pops[:, 0],
        p2=pops[:, 1],
        rho12=states[:, 0] * np.conj(states[:, 1]),
        norm_drift=drift,
        states=states,
        metadata={"representation": "amplitudes", "n_steps": grid.n_steps, "step_mm": grid.step},
    )


def propagate_density(hamiltonian: HamiltonianFn, initial, grid: ZGrid) -> Trajectory:
    """Integrate the lossless master equation ``drho/dz = -i[H, rho]`` with RK4.

    Raises
    ------
    TraceDrift, PurityDrift
        If trace or purity of ``rho`` leave one by more than 1e-6 at a sample.
    """
    rho0 = _check_density(initial)
    h = _sample_hamiltonian(hamiltonian, grid)
    steps = _rk4_step_matrices(_liouvillian(h), grid.step)
    flat = _run(steps, rho0.reshape(4), grid)
    rho = flat.reshape(-1, 2, 2)
    z = grid.nodes()[2 * grid.sample_indices()]
    trace = np.trace(rho, axis1=1, axis2=2)
    trace_drift = np.abs(trace - 1.0)
    purity = np.einsum("nij,nji->n", rho, rho)
    purity0 = np.trace(rho0 @ rho0).real
    purity_drift = np.abs(purity - purity0)
    if trace_drift.max() > DRIFT_LIMIT:
        raise TraceDrift(f"density trace drifted by {trace_drift.max():.3e}; reduce the step")
    if purity_drift.max() > DRIFT_LIMIT:
        raise PurityDrift(f"density purity drifted by {purity_drift.max():.3e}; reduce the step")
    return Trajectory(
        z=z,
        p1=rho[:, 0, 0].real,
        p2=rho[:, 1, 1].real,
        rho12=rho[:, 0, 1],
        norm_drift=trace_drift,
        purity_drift=purity_drift,
        states=rho,
        metadata={"representation": "density", "n_steps": grid.n_steps, "step_mm": grid.step},
    )


def final_amplitudes(hamiltonian: HamiltonianFn, initial, grid: ZGrid) -> np.ndarray:
    """Amplitudes at ``grid.z_end`` only, without recording a trajectory.

    Raises
    ------
    NormDrift
        If the final norm is off by more than 1e-6.
    """
    a0 = _check_amplitudes(initial)
    steps = _rk4_step_matrices(-1j * _sample_hamiltonian(hamiltonian, grid), grid.step)
    a = _product(steps) @ a0
    drift = abs(np.vdot(a, a).real - 1.0)
    if drift > DRIFT_LIMIT:
        raise NormDrift(f"amplitude norm drifted by {drift:.3e}; reduce the step")
    return a


def pure_density(amplitudes) -> np.ndarray:
    """``rho_ij = a_i * conj(a_j)``."""
    a = np.asarray(amplitudes, dtype=complex).reshape(2)
    return np.outer(a, a.conj())


def adiabatic_eigenstate(scheme: AllenEberlyScheme, z: float) -> np.ndarray:
    """Adiabatic eigenvector continuously connected to waveguide 1 at ``z = -L``.

    Equals ``(sin(theta/2), -cos(theta/2))`` up to the sign fixed so that the
    first component is non-negative.
    """
    theta = float(mixing_angle(scheme, z))
    return np.array([math.sin(theta / 2.0), -math.cos(theta / 2.0)], dtype=complex)


def adiabatic_following_prediction(scheme: AllenEberlyScheme, z):
    """Diabatic populations ``(P1, P2)`` if the state tracks its initial eigenmode.

    ``P2 = cos(theta/2)**2``, since ``theta`` runs from about ``pi`` at ``-L``
    to about ``0`` at ``+L``.
    """
    theta = mixing_angle(scheme, z)
    p2 = np.cos(0.5 * theta) ** 2
    return 1.0 - p2, p2


def convergence_check(hamiltonian: HamiltonianFn, initial, grid: ZGrid) -> float:
    """Empirical order of the integrator from final ``P2`` at steps ``h, h/2, h/4``.

    Raises
    ------
    Indeterminate
        If successive differences are below ten machine epsilons.
    """
    finals = []
    for factor in (1, 2, 4):
        g = ZGrid(grid.z_start, grid.z_end, grid.n_steps * factor, grid.n_steps * factor)
        finals.append(propagate_amplitudes(hamiltonian, initial, g).final_p2)
    d1 = abs(finals[0] - finals[1])
    d2 = abs(finals[1] - finals[2])
    floor = 10.0 * np.finfo(float).eps
    if d1 < floor or d2 < floor:
        raise Indeterminate(f"differences {d1:.3e}, {d2:.3e} are at round-off; already converged")
    return math.log2(d1 / d2)
