"""Second-order correlation curves for the ion alone and in front of the mirror.

Raw units: the mirror-mode curves are the squared modulus of a sum of
excited-state amplitudes, with the overall prefactor set to 1, so curves
computed at different mirror phases share one scale.  The free-space curve
in raw units is the pair-detection rate density ``R_ss * Gamma_g * P(T)``
in s^-2 for unit detection efficiency.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import constants
from scipy.linalg import expm

from .atom import AtomModel, Transition, TwoLevelAtom, as_system
from .dynamics import collapse_green, evolve, grid_step, steady_state
from .errors import ConfigError, GridError, NormalizationError

__all__ = [
    "MirrorConfig",
    "AmplitudeCurve",
    "CorrelationCurve",
    "NORMALIZATIONS",
    "g2_free_space",
    "amplitude_bP",
    "g2_mirror",
    "g2_noninterfering",
    "mix_measured",
    "subtract_noninterfering",
    "fringe",
    "normalize",
    "mirrored",
    "tau_from_length",
]

NORMALIZATIONS = ("raw", "unit-asymptote", "unit-peak")
AMPLITUDE_MODES = ("population_sqrt", "two_level_amplitude")


def tau_from_length(length: float) -> float:
    """Round-trip delay 2L/c for an ion-mirror distance in metres."""
    return 2.0 * length / constants.c


@dataclass(frozen=True)
class MirrorConfig:
    """Mirror geometry.

    ``tau`` (s) is the round-trip delay; ``phase`` is 2 k L (rad) taken
    modulo 2 pi.  They are independent inputs: tau follows the coarse
    distance, the phase its nanometre-scale fine tuning.
    """

    tau: float
    phase: float
    epsilon: float = 0.015
    contrast: float = 1.0

    def __post_init__(self):
        if not self.tau >= 0:
            raise ConfigError(f"tau must be >= 0, got {self.tau}")
        if not 0 <= self.contrast <= 1:
            raise ConfigError(f"contrast must lie in [0, 1], got {self.contrast}")
        if not 0 <= self.epsilon <= 1:
            raise ConfigError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        object.__setattr__(self, "phase", float(self.phase) % (2 * math.pi))

    @classmethod
    def from_length(cls, length: float, phase: float, **kw) -> MirrorConfig:
        return cls(tau_from_length(length), phase, **kw)

    @property
    def phase_over_pi(self) -> float:
        return self.phase / math.pi


@dataclass(frozen=True)
class AmplitudeCurve:
    times: np.ndarray
    values: np.ndarray
    mode: str = "population_sqrt"

    def __call__(self, t) -> np.ndarray:
        """Linear interpolation; refuses to extrapolate."""
        t = np.asarray(t, dtype=float)
        lo, hi = self.times[0], self.times[-1]
        slack = 1e-9 * (hi - lo)
        if np.any(t < lo - slack) or np.any(t > hi + slack):
            raise GridError(
                f"amplitude requested on [{t.min():.6g}, {t.max():.6g}] s but only "
                f"known on [{lo:.6g}, {hi:.6g}] s"
            )
        t = np.clip(t, lo, hi)
        re = np.interp(t, self.times, self.values.real)
        if np.iscomplexobj(self.values):
            return re + 1j * np.interp(t, self.times, self.values.imag)
        return re


@dataclass(frozen=True)
class CorrelationCurve:
    times: np.ndarray
    values: np.ndarray
    normalization: str = "raw"
    name: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def dt(self) -> float:
        return grid_step(self.times)

    def with_values(self, values, **changes) -> CorrelationCurve:
        kw = dict(times=self.times, values=values, normalization=self.normalization,
                  name=self.name, meta=dict(self.meta))
        kw.update(changes)
        return CorrelationCurve(**kw)


def _free_space_populations(model, t_grid):
    system = as_system(model)
    L = system.liouvillian()
    rho_ss = steady_state(L)
    p_ss = system.excited_population(rho_ss)
    traj = evolve(L, collapse_green(rho_ss, system), t_grid)
    return system, p_ss, traj.population(system.excited)


def g2_free_space(model, t_grid, normalization: str = "unit-asymptote") -> CorrelationCurve:
    """Free-space intensity correlation by quantum regression.

    The conditional state after a green click is propagated and its P1/2
    population tracked.  ``unit-asymptote`` divides by the exact steady-state
    population, so g(T -> inf) = 1; ``raw`` returns the pair-rate density in
    s^-2.
    """
    t = np.asarray(t_grid, dtype=float)
    system, p_ss, pop = _free_space_populations(model, t)
    if normalization == "unit-asymptote":
        values = pop / p_ss
    elif normalization == "raw":
        rate = system.green_rate
        values = (rate * p_ss) * (rate * pop)
    elif normalization == "unit-peak":
        values = pop / pop.max()
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    values = np.clip(values, 0.0, None)
    return CorrelationCurve(t.copy(), values, normalization, "g2_free",
                            {"p_ss": p_ss, "green_rate": system.green_rate})


def _two_level_params(model) -> tuple[float, float, float]:
    if isinstance(model, TwoLevelAtom):
        return model.rabi, model.detuning, model.gamma
    if isinstance(model, AtomModel):
        green = model.laser(Transition.GREEN)
        return green.rabi, green.detuning, model.gamma_total
    raise TypeError("two_level_amplitude mode needs an AtomModel or TwoLevelAtom")


def no_jump_amplitude(rabi: float, detuning: float, gamma: float, t) -> np.ndarray:
    """Excited amplitude of a driven two-level atom under H - i gamma/2 |e><e|,
    starting in the ground state, renormalized by the no-jump norm."""
    t = np.asarray(t, dtype=float)
    H_eff = np.array([[0, -rabi / 2], [-rabi / 2, -detuning - 0.5j * gamma]], dtype=complex)
    psi0 = np.array([1.0, 0.0], dtype=complex)
    dt = grid_step(t) if t.size > 1 else 0.0
    out = np.empty((t.size, 2), dtype=complex)
    if t.size > 1:
        step = expm(-1j * H_eff * dt)
        psi = expm(-1j * H_eff * t[0]) @ psi0
        for k in range(t.size):
            out[k] = psi
            psi = step @ psi
            # keep the vector O(1); only the ratio is used
            psi /= np.linalg.norm(psi)
    else:
        out[0] = expm(-1j * H_eff * t[0]) @ psi0
    return out[:, 1] / np.linalg.norm(out, axis=1)


def amplitude_bP(model, t_grid, mode: str = "population_sqrt") -> AmplitudeCurve:
    """Excited-state amplitude b(T) after a green detection at T = 0.

    ``population_sqrt``: sqrt of the P1/2 population of the regressed
    density matrix (real, nonnegative).  ``two_level_amplitude``: complex
    conditional amplitude of the no-jump two-level evolution with the green
    Rabi frequency, green detuning and total P1/2 decay rate.
    """
    t = np.asarray(t_grid, dtype=float)
    if mode == "population_sqrt":
        _, _, pop = _free_space_populations(model, t)
        values = np.sqrt(np.clip(pop, 0.0, None))
    elif mode == "two_level_amplitude":
        values = no_jump_amplitude(*_two_level_params(model), t)
    else:
        raise ValueError(f"unknown amplitude mode {mode!r}; expected one of {AMPLITUDE_MODES}")
    return AmplitudeCurve(t.copy(), values, mode)


def _check_cover(b: AmplitudeCurve, t: np.ndarray, tau: float) -> None:
    need = t.max() + tau
    if need > b.times[-1] * (1 + 1e-12) + 1e-21:
        raise GridError(
            f"amplitude grid ends at {b.times[-1] * 1e9:.6g} ns but T_max + tau = {need * 1e9:.6g} ns"
        )
    if t.min() < 0:
        raise GridError("correlation lags must be >= 0")


def g2_mirror(b: AmplitudeCurve, mirror: MirrorConfig, t_grid) -> CorrelationCurve:
    """Mirror-mode correlation |2 b(T) cos(phi) - b(|T - tau|) - b(T + tau)|^2 (raw)."""
    t = np.asarray(t_grid, dtype=float)
    _check_cover(b, t, mirror.tau)
    amp = 2 * b(t) * math.cos(mirror.phase) - b(np.abs(t - mirror.tau)) - b(t + mirror.tau)
    return CorrelationCurve(
        t.copy(), np.abs(amp) ** 2, "raw", "g2_mirror",
        {"tau": mirror.tau, "phase": mirror.phase, "amplitude_mode": b.mode},
    )


def g2_noninterfering(b: AmplitudeCurve, tau: float, t_grid=None) -> CorrelationCurve:
    """Three mutually incoherent sources: 2|b(T)|^2 + |b(|T-tau|)|^2 + |b(T+tau)|^2.

    Uses the same scale as :func:`g2_mirror`.  Without ``t_grid`` the
    amplitude grid points with T + tau inside the known range are used.
    """
    if t_grid is None:
        t = b.times[b.times + tau <= b.times[-1] * (1 + 1e-12)]
    else:
        t = np.asarray(t_grid, dtype=float)
    _check_cover(b, t, tau)
    values = 2 * np.abs(b(t)) ** 2 + np.abs(b(np.abs(t - tau))) ** 2 + np.abs(b(t + tau)) ** 2
    return CorrelationCurve(t.copy(), values, "raw", "g2_ni", {"tau": tau, "amplitude_mode": b.mode})


def _same_grid(a: CorrelationCurve, b: CorrelationCurve) -> None:
    if a.times.shape != b.times.shape or not np.allclose(a.times, b.times, rtol=1e-12, atol=0):
        raise GridError("curves are sampled on different grids")


def mix_measured(gm: CorrelationCurve, gni: CorrelationCurve, contrast: float) -> CorrelationCurve:
    """``contrast * gm + (1 - contrast) * gni``: what a detector sees when the
    interference has finite fringe contrast."""
    _same_grid(gm, gni)
    if not 0 <= contrast <= 1:
        raise ConfigError(f"contrast must lie in [0, 1], got {contrast}")
    meta = dict(gm.meta, contrast=contrast)
    return gm.with_values(contrast * gm.values + (1 - contrast) * gni.values,
                          name="g2_measured", meta=meta)


def subtract_noninterfering(measured: CorrelationCurve, gni: CorrelationCurve, contrast: float) -> CorrelationCurve:
    """Remove the non-interfering share ``(1 - contrast) * gni`` from a mixed curve."""
    _same_grid(measured, gni)
    values = np.clip(measured.values - (1 - contrast) * gni.values, 0.0, None)
    return measured.with_values(values, meta=dict(measured.meta, ni_subtracted=True))


def fringe(phases, visibility: float = 1.0) -> np.ndarray:
    """First-order detected-rate modulation versus mirror phase 2kL.

    Equals sin^2(phase/2) at unit visibility; in general
    (1 - visibility * cos(phase)) / 2.
    """
    if not 0 <= visibility <= 1:
        raise ValueError(f"visibility must lie in [0, 1], got {visibility}")
    phases = np.asarray(phases, dtype=float)
    return 0.5 * (1.0 - visibility * np.cos(phases))


# asymptotes below this fraction of the peak count as zero
ZERO_ASYMPTOTE = 1e-2


def normalize(curve: CorrelationCurve, mode: str) -> CorrelationCurve:
    """Rescale a curve.

    ``unit-asymptote`` divides by the mean of the last 10 % of samples,
    ``unit-peak`` by the maximum, ``raw`` leaves it unchanged.
    """
    v = np.asarray(curve.values, dtype=float)
    if mode == "raw":
        return curve
    if mode == "unit-asymptote":
        tail = v[-max(1, int(math.ceil(0.1 * v.size))):]
        ref = float(np.mean(tail))
        if not ref > ZERO_ASYMPTOTE * max(float(np.max(np.abs(v))), 0.0) or ref == 0.0:
            raise NormalizationError(
                f"asymptote {ref:.3g} is (close to) zero, e.g. ion at a node; "
                "use 'raw' or 'unit-peak' normalization instead"
            )
    elif mode == "unit-peak":
        ref = float(np.max(v))
        if not ref > 0:
            raise NormalizationError("curve peak is zero; use 'raw' normalization")
    else:
        raise ValueError(f"unknown normalization {mode!r}; expected one of {NORMALIZATIONS}")
    return curve.with_values(v / ref, normalization=mode)


def mirrored(curve: CorrelationCurve) -> tuple[np.ndarray, np.ndarray]:
    """Lags and values extended to T < 0 by symmetry, for display."""
    t, v = curve.times, curve.values
    start = 1 if t[0] == 0 else 0
    return (np.concatenate([-t[start:][::-1], t]), np.concatenate([v[start:][::-1], v]))
