"""Position-dependent fields of the Allen-Eberly coupler.

Every function here broadcasts over ``z`` (scalar or ndarray, in mm) and is a
pure function of frozen value types.  Units are mm for lengths and mm^-1 for
the mismatch and coupling rates.

With ``u = 2*pi*z/L``::

    delta(z) = delta0 * tanh(u)
    kappa(z) = kappa0 * sech(u)
    theta    = atan2(kappa, delta)          # sweeps pi -> 0 across the device

The counterdiabatic coupling ``kappa_a`` adds an imaginary off-diagonal term;
the resulting complex coupling ``kappa + i*kappa_a = kappa_eff * exp(i*phi)``.
Removing the phase with a diagonal gauge transform shifts the mismatch to
``delta_eff = delta - phi_dot / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from sta_coupler.errors import DegenerateField

# Largest allowed ratio kappa_a(+-L) / kappa_a(0) for the Gaussian term.
BOUNDARY_SUPPRESSION = 1e-3


@dataclass(frozen=True)
class AllenEberlyScheme:
    """Coupler parameters; the device spans ``z`` in ``[-half_length, half_length]``."""

    delta0: float
    kappa0: float
    half_length: float

    def __post_init__(self) -> None:
        for name in ("delta0", "kappa0", "half_length"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")

    @property
    def total_length(self) -> float:
        return 2.0 * self.half_length

    @property
    def rate(self) -> float:
        """Scale factor ``2*pi/L`` between ``z`` and the profile argument ``u``."""
        return 2.0 * math.pi / self.half_length

    @classmethod
    def from_total_length(cls, delta0: float, kappa0: float, total_length: float) -> AllenEberlyScheme:
        return cls(delta0, kappa0, total_length / 2.0)


@dataclass(frozen=True)
class NoCounterdiabatic:
    """Plain adiabatic coupler, no extra coupling."""


@dataclass(frozen=True)
class ExactCounterdiabatic:
    """Transitionless driving term ``kappa_a = theta_dot / 2`` (signed)."""


@dataclass(frozen=True)
class GaussianCounterdiabatic:
    """Gaussian approximation ``kappa_a = amplitude * exp(-z**2 / width**2)``."""

    amplitude: float
    width: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.amplitude) and self.amplitude > 0):
            raise ValueError(f"amplitude must be positive and finite, got {self.amplitude!r}")
        if not (math.isfinite(self.width) and self.width > 0):
            raise ValueError(f"width must be positive and finite, got {self.width!r}")

    def boundary_ratio(self, half_length: float) -> float:
        return math.exp(-((half_length / self.width) ** 2))

    def check_boundary(self, half_length: float) -> None:
        """Raise ``ValueError`` unless the term has died off at the device ends."""
        ratio = self.boundary_ratio(half_length)
        # Relative slack so that the default width, which sits exactly on the
        # limit, is not rejected by round-off.
        if ratio > BOUNDARY_SUPPRESSION * (1.0 + 1e-9):
            raise ValueError(
                f"Gaussian width {self.width!r} mm leaves kappa_a(+-L)/kappa_a(0) = {ratio:.3e} "
                f"at L = {half_length!r} mm; must not exceed {BOUNDARY_SUPPRESSION:g}"
            )

    @classmethod
    def for_scheme(
        cls,
        scheme: AllenEberlyScheme,
        amplitude: float | None = None,
        width: float | None = None,
    ) -> GaussianCounterdiabatic:
        """Gaussian term with defaults filled from ``scheme`` and its boundary checked."""
        spec = cls(
            scheme.kappa0 if amplitude is None else amplitude,
            default_gaussian_width(scheme) if width is None else width,
        )
        spec.check_boundary(scheme.half_length)
        return spec


CounterdiabaticSpec = Union[NoCounterdiabatic, ExactCounterdiabatic, GaussianCounterdiabatic]


@dataclass(frozen=True)
class ProfileSample:
    z: float
    delta: float
    kappa: float
    kappa_a: float
    theta: float
    theta_dot: float
    kappa_eff: float
    phi: float
    phi_dot: float
    delta_eff: float


def _u(scheme: AllenEberlyScheme, z):
    return scheme.rate * np.asarray(z, dtype=float)


def _sech(u):
    # cosh overflows past |u| ~ 710; this form underflows to 0 instead.
    e = np.exp(-np.abs(u))
    return 2.0 * e / (1.0 + e * e)


def mismatch_at(scheme: AllenEberlyScheme, z):
    """Propagation-constant mismatch ``delta0 * tanh(2*pi*z/L)``."""
    return scheme.delta0 * np.tanh(_u(scheme, z))


def coupling_at(scheme: AllenEberlyScheme, z):
    """Evanescent coupling ``kappa0 * sech(2*pi*z/L)``."""
    return scheme.kappa0 * _sech(_u(scheme, z))


def coupling_rate(scheme: AllenEberlyScheme, z):
    u = _u(scheme, z)
    return -scheme.rate * scheme.kappa0 * _sech(u) * np.tanh(u)


def mixing_angle(scheme: AllenEberlyScheme, z):
    """Mixing angle ``atan2(kappa, delta)`` in ``(0, pi)``.

    Raises
    ------
    DegenerateField
        If mismatch and coupling are both exactly zero somewhere in ``z``.
    """
    delta = mismatch_at(scheme, z)
    kappa = coupling_at(scheme, z)
    if np.any((delta == 0) & (kappa == 0)):
        raise DegenerateField("mixing angle undefined where delta and kappa both vanish")
    return np.arctan2(kappa, delta)


def _angle_denominator(scheme: AllenEberlyScheme, u):
    return (scheme.delta0 * np.tanh(u)) ** 2 + (scheme.kappa0 * _sech(u)) ** 2


def mixing_angle_rate(scheme: AllenEberlyScheme, z):
    """Analytic derivative of :func:`mixing_angle` with respect to ``z`` (rad/mm)."""
    u = _u(scheme, z)
    denom = _angle_denominator(scheme, u)
    if np.any(denom == 0):
        raise DegenerateField("mixing angle undefined where delta and kappa both vanish")
    return -scheme.rate * scheme.delta0 * scheme.kappa0 * _sech(u) / denom


def mixing_angle_acceleration(scheme: AllenEberlyScheme, z):
    """Second derivative of the mixing angle (rad/mm^2)."""
    u = _u(scheme, z)
    sech = _sech(u)
    tanh = np.tanh(u)
    d0, k0 = scheme.delta0, scheme.kappa0
    denom = _angle_denominator(scheme, u)
    if np.any(denom == 0):
        raise DegenerateField("mixing angle undefined where delta and kappa both vanish")
    numer = denom + 2.0 * sech**2 * (d0**2 - k0**2)
    return scheme.rate**2 * d0 * k0 * sech * tanh * numer / denom**2


def default_gaussian_width(scheme: AllenEberlyScheme) -> float:
    """Widest Gaussian width that still meets the boundary suppression limit.

    ``exp(-L**2 / z0**2) == BOUNDARY_SUPPRESSION``, i.e. ``z0 = L / sqrt(ln 1000)``
    which is about ``0.3805 * L``.
    """
    return scheme.half_length / math.sqrt(-math.log(BOUNDARY_SUPPRESSION))


def cd_coupling(spec: CounterdiabaticSpec, scheme: AllenEberlyScheme, z):
    """Counterdiabatic coupling ``kappa_a(z)`` for the chosen term."""
    if isinstance(spec, NoCounterdiabatic):
        return np.zeros_like(np.asarray(z, dtype=float))
    if isinstance(spec, ExactCounterdiabatic):
        return 0.5 * mixing_angle_rate(scheme, z)
    if isinstance(spec, GaussianCounterdiabatic):
        z = np.asarray(z, dtype=float)
        return spec.amplitude * np.exp(-((z / spec.width) ** 2))
    raise TypeError(f"unknown counterdiabatic spec {spec!r}")


def cd_coupling_rate(spec: CounterdiabaticSpec, scheme: AllenEberlyScheme, z):
    """Derivative of :func:`cd_coupling` with respect to ``z``."""
    if isinstance(spec, NoCounterdiabatic):
        return np.zeros_like(np.asarray(z, dtype=float))
    if isinstance(spec, ExactCounterdiabatic):
        return 0.5 * mixing_angle_acceleration(scheme, z)
    if isinstance(spec, GaussianCounterdiabatic):
        z = np.asarray(z, dtype=float)
        return -2.0 * z / spec.width**2 * cd_coupling(spec, scheme, z)
    raise TypeError(f"unknown counterdiabatic spec {spec!r}")


def effective_quantities(scheme: AllenEberlyScheme, spec: CounterdiabaticSpec, z):
    """Return ``(kappa_eff, phi, phi_dot, delta_eff)`` at ``z``.

    ``phi`` is the argument of ``kappa + i*kappa_a``; all derivatives are
    analytic.
    """
    kappa = coupling_at(scheme, z)
    kappa_a = cd_coupling(spec, scheme, z)
    kappa_eff = np.hypot(kappa, kappa_a)
    if np.any(kappa_eff == 0):
        raise DegenerateField("phase undefined where kappa and kappa_a both vanish")
    phi = np.arctan2(kappa_a, kappa)
    phi_dot = (kappa * cd_coupling_rate(spec, scheme, z) - kappa_a * coupling_rate(scheme, z)) / kappa_eff**2
    delta_eff = mismatch_at(scheme, z) - 0.5 * phi_dot
    return kappa_eff, phi, phi_dot, delta_eff


def profile_sample(scheme: AllenEberlyScheme, spec: CounterdiabaticSpec, z: float) -> ProfileSample:
    kappa_eff, phi, phi_dot, delta_eff = effective_quantities(scheme, spec, z)
    return ProfileSample(
        z=float(z),
        delta=float(mismatch_at(scheme, z)),
        kappa=float(coupling_at(scheme, z)),
        kappa_a=float(cd_coupling(spec, scheme, z)),
        theta=float(mixing_angle(scheme, z)),
        theta_dot=float(mixing_angle_rate(scheme, z)),
        kappa_eff=float(kappa_eff),
        phi=float(phi),
        phi_dot=float(phi_dot),
        delta_eff=float(delta_eff),
    )
