"""Reproducible coupler experiments and their tabular output.

Four experiments: field profiles across the device, power traces along
``z``, final transfer over a (kappa0, L) grid, and efficiency against total
device length.  Everything is deterministic; sweeps may fan out over
processes but results are merged by index.
"""

from __future__ import annotations

import enum
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from sta_coupler.errors import CouplerError, NotReached
from sta_coupler.hamiltonian import hamiltonian_provider
from sta_coupler.profiles import (
    AllenEberlyScheme,
    CounterdiabaticSpec,
    ExactCounterdiabatic,
    GaussianCounterdiabatic,
    NoCounterdiabatic,
    ProfileSample,
    profile_sample,
)
from sta_coupler.propagation import (
    DEFAULT_STEPS,
    Trajectory,
    ZGrid,
    final_amplitudes,
    propagate_amplitudes,
    propagate_density,
    pure_density,
)

DEFAULT_THRESHOLD = 0.99
DEFAULT_MAX_HALF_LENGTH = 50.0
DEFAULT_SCAN_STEP = 0.05
DEFAULT_RESOLUTION = 1e-3
MISSING = "missing"
FLOAT_FORMAT = ".15g"
INITIAL_AMPLITUDES = (1.0, 0.0)


class CouplerMode(str, enum.Enum):
    ADIABATIC = "adiabatic"
    STA_EXACT = "sta-exact"
    STA_GAUSS = "sta-gauss"

    @property
    def column(self) -> str:
        return "transfer_" + self.value.replace("-", "_")


@dataclass(frozen=True)
class CdOverrides:
    """Optional Gaussian amplitude/width; ``None`` means derive from the scheme."""

    amplitude: float | None = None
    width: float | None = None


def counterdiabatic_for(
    mode: CouplerMode, scheme: AllenEberlyScheme, overrides: CdOverrides = CdOverrides()
) -> CounterdiabaticSpec:
    mode = CouplerMode(mode)
    if mode is CouplerMode.ADIABATIC:
        return NoCounterdiabatic()
    if mode is CouplerMode.STA_EXACT:
        return ExactCounterdiabatic()
    return GaussianCounterdiabatic.for_scheme(scheme, overrides.amplitude, overrides.width)


def steps_for(scheme: AllenEberlyScheme, max_step: float | None) -> int:
    """RK4 step count: ``DEFAULT_STEPS`` or the count implied by a step bound."""
    if max_step is None:
        return DEFAULT_STEPS
    return ZGrid.from_step(-scheme.half_length, scheme.half_length, max_step).n_steps


def power_trace(
    scheme: AllenEberlyScheme,
    mode: CouplerMode,
    grid: ZGrid | None = None,
    *,
    overrides: CdOverrides = CdOverrides(),
    representation: str = "density",
) -> Trajectory:
    """Fractional power ``P2(z)/P1(-L)`` from ``-L`` to ``+L`` with all input in waveguide 1.

    The master equation is integrated by default; ``representation="amplitudes"``
    integrates the coupled-mode equations instead.
    """
    mode = CouplerMode(mode)
    grid = ZGrid.across(scheme) if grid is None else grid
    spec = counterdiabatic_for(mode, scheme, overrides)
    h = hamiltonian_provider(scheme, spec)
    if representation == "density":
        traj = propagate_density(h, pure_density(INITIAL_AMPLITUDES), grid)
    elif representation == "amplitudes":
        traj = propagate_amplitudes(h, INITIAL_AMPLITUDES, grid)
    else:
        raise ValueError(f"unknown representation {representation!r}")
    traj.metadata.update(mode=mode.value, scheme=asdict(scheme), counterdiabatic=_spec_record(spec))
    return traj


def final_transfer(
    scheme: AllenEberlyScheme,
    mode: CouplerMode,
    *,
    overrides: CdOverrides = CdOverrides(),
    n_steps: int = DEFAULT_STEPS,
) -> float:
    """Power in waveguide 2 at ``z = +L`` for unit input in waveguide 1."""
    spec = counterdiabatic_for(mode, scheme, overrides)
    grid = ZGrid.across(scheme, n_steps)
    a = final_amplitudes(hamiltonian_provider(scheme, spec), INITIAL_AMPLITUDES, grid)
    return float(abs(a[1]) ** 2)


def _spec_record(spec: CounterdiabaticSpec) -> dict:
    record = {"kind": type(spec).__name__}
    if isinstance(spec, GaussianCounterdiabatic):
        record.update(amplitude=spec.amplitude, width=spec.width)
    return record


@dataclass
class SweepGrid:
    """Final transfer over ``kappa0_values x half_lengths`` at fixed ``delta0``.

    ``results[mode]`` has shape ``(len(kappa0_values), len(half_lengths))``;
    cells whose integration failed are ``nan`` and flagged in ``missing[mode]``.
    """

    kappa0_values: np.ndarray
    half_lengths: np.ndarray
    delta0: float = 1.0
    results: dict[CouplerMode, np.ndarray] = field(default_factory=dict)
    missing: dict[CouplerMode, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.kappa0_values = np.asarray(self.kappa0_values, dtype=float)
        self.half_lengths = np.asarray(self.half_lengths, dtype=float)
        for name, values in (("kappa0_values", self.kappa0_values), ("half_lengths", self.half_lengths)):
            if values.ndim != 1 or values.size == 0:
                raise ValueError(f"{name} must be a non-empty 1-D sequence")
            if np.any(values <= 0) or np.any(np.diff(values) <= 0):
                raise ValueError(f"{name} must be positive and strictly ascending")
        if not self.delta0 > 0:
            raise ValueError("delta0 must be positive")

    @classmethod
    def default(cls, n_kappa: int = 25, n_length: int = 25, delta0: float = 1.0) -> SweepGrid:
        return cls(np.linspace(0.2, 3.0, n_kappa), np.linspace(0.5, 12.0, n_length), delta0)


def _sweep_cell(args) -> tuple[int, int, str, float | None]:
    i, j, mode, delta0, kappa0, half_length, overrides, max_step = args
    scheme = AllenEberlyScheme(delta0, kappa0, half_length)
    try:
        value = final_transfer(scheme, mode, overrides=overrides, n_steps=steps_for(scheme, max_step))
    except CouplerError:
        value = None
    return i, j, mode, value


def _map(fn, tasks: list, jobs: int) -> list:
    if jobs <= 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def sweep_kappa_length(
    grid: SweepGrid,
    modes: Iterable[CouplerMode] = (CouplerMode.ADIABATIC, CouplerMode.STA_GAUSS),
    *,
    jobs: int = 1,
    overrides: CdOverrides = CdOverrides(),
    max_step: float | None = None,
) -> SweepGrid:
    """Fill ``grid.results`` with the final transfer of every cell and mode.

    The Gaussian width follows each cell's length unless overridden.  Failed
    cells are recorded as missing instead of aborting the sweep.
    """
    modes = [CouplerMode(m) for m in modes]
    tasks = [
        (i, j, m.value, grid.delta0, float(k), float(length), overrides, max_step)
        for m in modes
        for i, k in enumerate(grid.kappa0_values)
        for j, length in enumerate(grid.half_lengths)
    ]
    shape = (grid.kappa0_values.size, grid.half_lengths.size)
    for m in modes:
        grid.results[m] = np.full(shape, np.nan)
        grid.missing[m] = np.zeros(shape, dtype=bool)
    for i, j, mode, value in _map(_sweep_cell, tasks, jobs):
        m = CouplerMode(mode)
        if value is None:
            grid.missing[m][i, j] = True
        else:
            grid.results[m][i, j] = value
    return grid


def mode_ordering_violations(
    grid: SweepGrid, tolerance: float = 1e-3
) -> list[tuple[float, float, float, float]]:
    """Cells where the Gaussian shortcut trails the adiabatic coupler by more than ``tolerance``.

    Returns ``(kappa0, two_L, transfer_adiabatic, transfer_sta_gauss)`` tuples.
    """
    ad = grid.results[CouplerMode.ADIABATIC]
    sta = grid.results[CouplerMode.STA_GAUSS]
    bad = np.argwhere(sta < ad - tolerance)
    return [
        (float(grid.kappa0_values[i]), float(2 * grid.half_lengths[j]), float(ad[i, j]), float(sta[i, j]))
        for i, j in bad
    ]


@dataclass
class EfficiencyCurve:
    mode: CouplerMode
    total_lengths: np.ndarray
    efficiency: np.ndarray
    missing: np.ndarray


def efficiency_curve(
    delta0: float,
    kappa0: float,
    total_lengths: Sequence[float],
    modes: Iterable[CouplerMode] = (CouplerMode.ADIABATIC, CouplerMode.STA_GAUSS),
    *,
    jobs: int = 1,
    overrides: CdOverrides = CdOverrides(),
    max_step: float | None = None,
) -> dict[CouplerMode, EfficiencyCurve]:
    """Final fractional power against total device length ``2L``, one curve per mode."""
    lengths = np.asarray(total_lengths, dtype=float)
    if lengths.ndim != 1 or lengths.size == 0 or np.any(lengths <= 0) or np.any(np.diff(lengths) <= 0):
        raise ValueError("total_lengths must be positive and strictly ascending")
    grid = SweepGrid(np.array([kappa0]), lengths / 2.0, delta0)
    sweep_kappa_length(grid, modes, jobs=jobs, overrides=overrides, max_step=max_step)
    return {
        m: EfficiencyCurve(m, lengths, grid.results[m][0], grid.missing[m][0])
        for m in grid.results
    }


def minimum_switch_length(
    delta0: float,
    kappa0: float,
    mode: CouplerMode,
    threshold: float = DEFAULT_THRESHOLD,
    *,
    max_half_length: float = DEFAULT_MAX_HALF_LENGTH,
    scan_step: float = DEFAULT_SCAN_STEP,
    resolution: float = DEFAULT_RESOLUTION,
    overrides: CdOverrides = CdOverrides(),
    max_step: float | None = None,
) -> float:
    """Shortest total length ``2L`` whose final transfer reaches ``threshold``.

    Transfer is not monotone in ``L`` (the shortcut couplers ripple), so ``L``
    is first scanned upward in ``scan_step`` increments to find the first
    crossing, which is then bisected down to ``resolution`` in ``L``.  The
    upper end of the final bracket is returned, doubled.

    Raises
    ------
    NotReached
        If no ``L <= max_half_length`` reaches the threshold.
    """
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")

    def transfer(half_length: float) -> float:
        scheme = AllenEberlyScheme(delta0, kappa0, half_length)
        return final_transfer(scheme, mode, overrides=overrides, n_steps=steps_for(scheme, max_step))

    lo, hi = 0.0, None
    n_scan = math.ceil(max_half_length / scan_step - 1e-9)
    for k in range(1, n_scan + 1):
        length = min(k * scan_step, max_half_length)
        if transfer(length) >= threshold:
            hi = length
            break
        lo = length
    if hi is None:
        raise NotReached(
            f"{CouplerMode(mode).value} coupler never reaches {threshold:g} transfer for 2L <= {2 * max_half_length:g} mm"
        )
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if transfer(mid) >= threshold:
            hi = mid
        else:
            lo = mid
    return 2.0 * hi


def profile_report(scheme: AllenEberlyScheme, spec: CounterdiabaticSpec, samples: int = 401) -> list[ProfileSample]:
    """Fields on a uniform grid of ``samples`` points over ``[-L, L]``."""
    if samples < 2:
        raise ValueError("samples must be at least 2")
    zs = np.linspace(-scheme.half_length, scheme.half_length, samples)
    return [profile_sample(scheme, spec, z) for z in zs]


# -- serialisation -----------------------------------------------------------


def _fmt(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return MISSING
    return format(float(value), FLOAT_FORMAT)


def _table(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


PROFILE_COLUMNS = [
    "z_mm", "delta_per_mm", "kappa_per_mm", "kappa_a_per_mm", "theta_rad", "theta_dot_rad_per_mm",
    "kappa_eff_per_mm", "phi_rad", "phi_dot_rad_per_mm", "delta_eff_per_mm",
]  # fmt: skip


def profile_table(samples: Sequence[ProfileSample]) -> str:
    return _table(PROFILE_COLUMNS, (list(asdict(s).values()) for s in samples))


def trajectory_table(traj: Trajectory) -> str:
    header = ["z_mm", "P1", "P2", "re_rho12", "im_rho12"]
    rows = zip(traj.z, traj.p1, traj.p2, traj.rho12.real, traj.rho12.imag)
    return _table(header, rows)


def sweep_table(grid: SweepGrid) -> str:
    modes = list(grid.results)
    header = ["kappa0_per_mm", "two_L_mm"] + [m.column for m in modes]
    rows = []
    for i, k in enumerate(grid.kappa0_values):
        for j, length in enumerate(grid.half_lengths):
            cells = [None if grid.missing[m][i, j] else grid.results[m][i, j] for m in modes]
            rows.append([k, 2 * length, *cells])
    return _table(header, rows)


def efficiency_table(curves: dict[CouplerMode, EfficiencyCurve]) -> str:
    modes = list(curves)
    lengths = curves[modes[0]].total_lengths
    header = ["two_L_mm"] + [m.column for m in modes]
    rows = [
        [length] + [None if curves[m].missing[j] else curves[m].efficiency[j] for m in modes]
        for j, length in enumerate(lengths)
    ]
    return _table(header, rows)
