"""2x2 coupler Hamiltonians and basis transforms.

Hamiltonians are plain complex ndarrays of shape ``(..., 2, 2)`` so that a
whole grid of positions can be built in one call.  They multiply ``d/dz`` in
``i da/dz = H a`` and carry units of mm^-1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from sta_coupler.errors import NonUnitary
from sta_coupler.profiles import (
    AllenEberlyScheme,
    CounterdiabaticSpec,
    cd_coupling,
    coupling_at,
    effective_quantities,
    mismatch_at,
    mixing_angle_rate,
)

HamiltonianFn = Callable[[np.ndarray], np.ndarray]


def _assemble(h11, h12, h21, h22) -> np.ndarray:
    h11, h12, h21, h22 = np.broadcast_arrays(*(np.asarray(x, dtype=complex) for x in (h11, h12, h21, h22)))
    out = np.empty(h11.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = h11
    out[..., 0, 1] = h12
    out[..., 1, 0] = h21
    out[..., 1, 1] = h22
    return out


def is_hermitian(h: np.ndarray, atol: float = 1e-12) -> bool:
    return bool(np.allclose(h, np.conj(np.swapaxes(h, -1, -2)), rtol=0, atol=atol))


def diabatic_hamiltonian(delta, kappa) -> np.ndarray:
    """``[[delta, kappa], [kappa, -delta]]`` in the waveguide (diabatic) basis."""
    delta = np.asarray(delta, dtype=float)
    return _assemble(delta, kappa, kappa, -delta)


def cd_hamiltonian(theta_dot) -> np.ndarray:
    """Counterdiabatic term ``[[0, -i*theta_dot/2], [i*theta_dot/2, 0]]``."""
    half = 0.5 * np.asarray(theta_dot, dtype=float)
    return _assemble(0.0, -1j * half, 1j * half, 0.0)


def effective_hamiltonian(scheme: AllenEberlyScheme, spec: CounterdiabaticSpec, z) -> np.ndarray:
    """Diabatic Hamiltonian dressed with the counterdiabatic coupling ``kappa_a``."""
    delta = mismatch_at(scheme, z)
    kappa = coupling_at(scheme, z)
    kappa_a = cd_coupling(spec, scheme, z)
    return _assemble(delta, kappa - 1j * kappa_a, kappa + 1j * kappa_a, -delta)


def phase_rotated_hamiltonian(scheme: AllenEberlyScheme, spec: CounterdiabaticSpec, z) -> np.ndarray:
    """Real-symmetric form ``[[delta_eff, kappa_eff], [kappa_eff, -delta_eff]]``.

    This is the effective Hamiltonian after the diagonal phase transform
    ``diag(exp(-i*phi/2), exp(i*phi/2))``; populations are unchanged by it.
    """
    kappa_eff, _, _, delta_eff = effective_quantities(scheme, spec, z)
    return diabatic_hamiltonian(delta_eff, kappa_eff)


def hamiltonian_provider(
    scheme: AllenEberlyScheme, spec: CounterdiabaticSpec, frame: str = "lab"
) -> HamiltonianFn:
    """Vectorised ``z -> H(z)`` callable for the propagators.

    ``frame="lab"`` gives :func:`effective_hamiltonian`, ``frame="rotated"``
    gives :func:`phase_rotated_hamiltonian`.
    """
    if frame == "lab":
        return lambda z: effective_hamiltonian(scheme, spec, z)
    if frame == "rotated":
        return lambda z: phase_rotated_hamiltonian(scheme, spec, z)
    raise ValueError(f"unknown frame {frame!r}")


@dataclass(frozen=True)
class BasisTransform2:
    """Unitary ``U`` with optional derivative ``dU/dz``; ``a = U @ b``."""

    matrix: np.ndarray
    derivative: np.ndarray | None = None

    def is_unitary(self, atol: float = 1e-12) -> bool:
        u = np.asarray(self.matrix)
        return bool(np.allclose(u @ u.conj().T, np.eye(2), rtol=0, atol=atol))


def mixing_transform(theta, theta_dot=None) -> BasisTransform2:
    """Rotation ``[[cos(t/2), -sin(t/2)], [sin(t/2), cos(t/2)]]``.

    With ``theta_dot`` the chain-rule derivative along a path ``theta(z)`` is
    attached.
    """
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    u = np.array([[c, -s], [s, c]], dtype=complex)
    if theta_dot is None:
        return BasisTransform2(u)
    du = 0.5 * theta_dot * np.array([[-s, -c], [c, -s]], dtype=complex)
    return BasisTransform2(u, du)


def phase_transform(phi, phi_dot=None) -> BasisTransform2:
    """Diagonal gauge ``diag(exp(-i*phi/2), exp(i*phi/2))`` removing the coupling phase."""
    u = np.diag([np.exp(-0.5j * phi), np.exp(0.5j * phi)])
    if phi_dot is None:
        return BasisTransform2(u)
    return BasisTransform2(u, 0.5j * phi_dot * np.diag([-np.exp(-0.5j * phi), np.exp(0.5j * phi)]))


def transform_hamiltonian(h: np.ndarray, transform: BasisTransform2) -> np.ndarray:
    """``U^-1 H U - i U^-1 dU/dz``, the Hamiltonian seen by ``b = U^-1 a``."""
    if not transform.is_unitary():
        raise NonUnitary("basis transform is not unitary to 1e-12")
    u = np.asarray(transform.matrix, dtype=complex)
    u_inv = u.conj().T
    out = u_inv @ np.asarray(h, dtype=complex) @ u
    if transform.derivative is not None:
        out = out - 1j * u_inv @ np.asarray(transform.derivative, dtype=complex)
    return out


def adiabaticity_ratio(scheme: AllenEberlyScheme, z):
    """``|theta_dot|/2`` over the adiabatic gap half-width ``sqrt(delta**2 + kappa**2)``.

    Values well below one mean the coupler follows its eigenmode at ``z``.
    """
    gap = np.hypot(mismatch_at(scheme, z), coupling_at(scheme, z))
    return 0.5 * np.abs(mixing_angle_rate(scheme, z)) / gap
