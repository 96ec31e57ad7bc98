"""Eight-level 138Ba+ model: S1/2, P1/2 and D3/2 with all Zeeman sublevels.

Two lasers drive the S1/2-P1/2 (493 nm, "green") and P1/2-D3/2 (650 nm,
"red") transitions.  The Hamiltonian is written in the rotating-wave
approximation, in a frame rotating with each laser, so only detunings
appear.  The quantization axis is the magnetic field direction and laser
polarizations are given as spherical components in that frame.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy import constants

from .dynamics import Jump, OpenSystem
from .errors import ConfigError, QuantumNumberError

__all__ = [
    "Term",
    "Transition",
    "Level",
    "LaserField",
    "DecayChannel",
    "AtomModel",
    "TwoLevelAtom",
    "LEVELS",
    "clebsch_gordan",
    "lande_g",
    "linear_polarization",
    "zeeman_shift",
    "build_model",
    "hamiltonian",
    "decay_channels",
    "jump_operators",
    "open_system",
    "as_system",
    "MU_B_OVER_HBAR",
]

# rad s^-1 T^-1
MU_B_OVER_HBAR = constants.physical_constants["Bohr magneton"][0] / constants.hbar


class Term(enum.Enum):
    S12 = ("S1/2", 0, 0.5)
    P12 = ("P1/2", 1, 0.5)
    D32 = ("D3/2", 2, 1.5)

    def __init__(self, label: str, l: int, j: float):
        self.label = label
        self.l = l
        self.j = j

    @property
    def g(self) -> float:
        return lande_g(self.l, 0.5, self.j)


class Transition(enum.Enum):
    GREEN = "green_493"
    RED = "red_650"

    @property
    def upper(self) -> Term:
        return Term.P12

    @property
    def lower(self) -> Term:
        return Term.S12 if self is Transition.GREEN else Term.D32

    @property
    def short(self) -> str:
        return "green" if self is Transition.GREEN else "red"


@dataclass(frozen=True)
class Level:
    term: Term
    mj: float
    index: int

    @property
    def label(self) -> str:
        num = int(round(2 * self.mj))
        return f"{self.term.label},m={num:+d}/2"


def _make_levels() -> tuple[Level, ...]:
    levels = []
    for term in (Term.S12, Term.P12, Term.D32):
        n = int(round(2 * term.j)) + 1
        for k in range(n):
            levels.append(Level(term, -term.j + k, len(levels)))
    return tuple(levels)


LEVELS = _make_levels()


def level_index(term: Term, mj: float) -> int:
    for lev in LEVELS:
        if lev.term is term and abs(lev.mj - mj) < 1e-9:
            return lev.index
    raise QuantumNumberError(f"no level {term.label} m={mj}")


def term_indices(term: Term) -> tuple[int, ...]:
    return tuple(lev.index for lev in LEVELS if lev.term is term)


def lande_g(l: float, s: float, j: float) -> float:
    """Landé factor with g_s = 2."""
    return 1.0 + (j * (j + 1) + s * (s + 1) - l * (l + 1)) / (2 * j * (j + 1))


def _twice(x: float, what: str) -> int:
    tx = 2 * x
    n = int(round(tx))
    if abs(tx - n) > 1e-9:
        raise QuantumNumberError(f"{what}={x} is not a half-integer")
    return n


@lru_cache(maxsize=None)
def _cg2(tj1: int, tm1: int, tj2: int, tm2: int, tJ: int, tM: int) -> float:
    # Racah closed form, all arguments doubled so factorial arguments are ints
    if tm1 + tm2 != tM:
        return 0.0
    if tJ < abs(tj1 - tj2) or tJ > tj1 + tj2 or (tj1 + tj2 + tJ) % 2:
        return 0.0
    f = math.factorial

    def h(x2: int) -> int:
        return x2 // 2

    pref = (tJ + 1) * f(h(tJ + tj1 - tj2)) * f(h(tJ - tj1 + tj2)) * f(h(tj1 + tj2 - tJ))
    pref /= f(h(tj1 + tj2 + tJ) + 1)
    pref *= (
        f(h(tJ + tM)) * f(h(tJ - tM)) * f(h(tj1 - tm1)) * f(h(tj1 + tm1))
        * f(h(tj2 - tm2)) * f(h(tj2 + tm2))
    )
    total = 0.0
    for k in range(0, h(tj1 + tj2 - tJ) + 1):
        args = (
            k,
            h(tj1 + tj2 - tJ) - k,
            h(tj1 - tm1) - k,
            h(tj2 + tm2) - k,
            h(tJ - tj2 + tm1) + k,
            h(tJ - tj1 - tm2) + k,
        )
        if min(args) < 0:
            continue
        denom = 1
        for a in args:
            denom *= f(a)
        total += (-1) ** k / denom
    return math.sqrt(pref) * total


def clebsch_gordan(j_upper: float, m_upper: float, q: int, j_lower: float, m_lower: float) -> float:
    """Dipole coupling coefficient <j_lower m_lower; 1 q | j_upper m_upper>.

    Zero unless ``m_upper == m_lower + q``.  Raises QuantumNumberError for
    negative j, |m| > j, m - j not an integer, or q outside {-1, 0, +1}.
    """
    if q not in (-1, 0, 1):
        raise QuantumNumberError(f"q must be -1, 0 or +1, got {q}")
    tju, tmu = _twice(j_upper, "j_upper"), _twice(m_upper, "m_upper")
    tjl, tml = _twice(j_lower, "j_lower"), _twice(m_lower, "m_lower")
    for tj, tm, name in ((tju, tmu, "upper"), (tjl, tml, "lower")):
        if tj < 0:
            raise QuantumNumberError(f"negative j for {name} level")
        if abs(tm) > tj or (tj - tm) % 2:
            raise QuantumNumberError(f"invalid m={tm / 2} for j={tj / 2} ({name} level)")
    return _cg2(tjl, tml, 2, 2 * q, tju, tmu)


def linear_polarization(angle: float) -> np.ndarray:
    """Spherical components (q = -1, 0, +1) of linear polarization at ``angle``
    (rad) to the quantization axis, lying in the x-z plane."""
    s = math.sin(angle) / math.sqrt(2.0)
    return np.array([s, math.cos(angle), -s], dtype=complex)


@dataclass(frozen=True)
class LaserField:
    """A laser in the rotating frame.  Frequencies in rad/s.

    ``polarization[q + 1]`` is the amplitude driving Delta m = q transitions.
    """

    transition: Transition
    detuning: float
    rabi: float
    polarization: tuple[complex, complex, complex]

    def __post_init__(self):
        pol = np.asarray(self.polarization, dtype=complex)
        if pol.shape != (3,):
            raise ConfigError("polarization needs three spherical components (q=-1,0,+1)")
        if abs(np.linalg.norm(pol) - 1.0) > 1e-12:
            raise ConfigError(f"polarization must have unit norm, got {np.linalg.norm(pol):.15g}")
        if not np.isfinite(self.detuning) or not np.isfinite(self.rabi) or self.rabi < 0:
            raise ConfigError("laser detuning must be finite and Rabi frequency nonnegative")
        object.__setattr__(self, "polarization", tuple(complex(c) for c in pol))

    @classmethod
    def linear(cls, transition: Transition, detuning: float, rabi: float, angle: float) -> LaserField:
        return cls(transition, detuning, rabi, tuple(linear_polarization(angle)))


@dataclass(frozen=True)
class DecayChannel:
    upper: Level
    lower: Level
    q: int
    amplitude: float
    branch_rate: float
    transition: Transition


@dataclass(frozen=True)
class AtomModel:
    levels: tuple[Level, ...]
    b_field: float  # tesla, along the quantization axis
    lasers: tuple[LaserField, ...]
    channels: tuple[DecayChannel, ...]
    gamma_green: float
    gamma_red: float

    def laser(self, transition: Transition) -> LaserField:
        for las in self.lasers:
            if las.transition is transition:
                return las
        raise ConfigError(f"no {transition.value} laser")

    @property
    def gamma_total(self) -> float:
        return self.gamma_green + self.gamma_red

    @property
    def excited(self) -> tuple[int, ...]:
        return term_indices(Term.P12)


@dataclass(frozen=True)
class TwoLevelAtom:
    """Driven two-level emitter: ground index 0, excited index 1.

    ``rabi``, ``detuning`` (laser minus atom) and ``gamma`` in rad/s.
    """

    rabi: float
    detuning: float
    gamma: float

    def open_system(self) -> OpenSystem:
        H = np.array([[0.0, -self.rabi / 2], [-self.rabi / 2, -self.detuning]], dtype=complex)
        lower = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
        return OpenSystem(H, (Jump(lower, self.gamma, True, "e->g"),), (1,), ("g", "e"))

    def excited_population(self, t) -> np.ndarray:
        """Closed-form excited population from the ground state, on resonance.

        Torrey solution; valid only for ``detuning == 0``.
        """
        if self.detuning != 0:
            raise ValueError("closed-form transient implemented for zero detuning only")
        t = np.asarray(t, dtype=float)
        W, G = self.rabi, self.gamma
        mu = np.sqrt(complex(W**2 - G**2 / 16))
        if abs(mu) < 1e-12 * G:
            osc = 1 + 3 * G / 4 * t
        else:
            osc = np.cos(mu * t) + 3 * G / (4 * mu) * np.sin(mu * t)
        return np.real(W**2 / (2 * W**2 + G**2) * (1 - np.exp(-3 * G * t / 4) * osc))

    def steady_population(self) -> float:
        return (self.rabi**2 / 4) / (self.detuning**2 + self.gamma**2 / 4 + self.rabi**2 / 2)


def zeeman_shift(term: Term, mj: float, b_field: float) -> float:
    """Linear Zeeman shift g m mu_B B / hbar in rad/s."""
    return term.g * mj * MU_B_OVER_HBAR * b_field


def decay_channels(gamma_green: float, gamma_red: float) -> tuple[DecayChannel, ...]:
    """All dipole-allowed P1/2 decay channels with nonzero coefficient."""
    out = []
    for trans, gamma in ((Transition.GREEN, gamma_green), (Transition.RED, gamma_red)):
        lower_term = trans.lower
        for up in LEVELS:
            if up.term is not Term.P12:
                continue
            for low in LEVELS:
                if low.term is not lower_term:
                    continue
                q = int(round(up.mj - low.mj))
                if abs(q) > 1:
                    continue
                amp = clebsch_gordan(up.term.j, up.mj, q, low.term.j, low.mj)
                if amp == 0.0:
                    continue
                out.append(DecayChannel(up, low, q, amp, gamma * amp**2, trans))
    return tuple(out)


def build_model(
    b_field: float,
    lasers: Iterable[LaserField],
    gamma_green: float,
    gamma_red: float,
) -> AtomModel:
    """Assemble an :class:`AtomModel`.  ``b_field`` in tesla, rates in 1/s."""
    lasers = tuple(lasers)
    kinds = [las.transition for las in lasers]
    for trans in Transition:
        if kinds.count(trans) != 1:
            raise ConfigError(f"exactly one {trans.value} laser required, got {kinds.count(trans)}")
    if not (gamma_green > 0 and gamma_red > 0):
        raise ConfigError(f"decay rates must be positive, got green={gamma_green}, red={gamma_red}")
    if not np.isfinite(b_field):
        raise ConfigError("B field must be finite")
    return AtomModel(
        levels=LEVELS,
        b_field=float(b_field),
        lasers=tuple(sorted(lasers, key=lambda las: list(Transition).index(las.transition))),
        channels=decay_channels(gamma_green, gamma_red),
        gamma_green=float(gamma_green),
        gamma_red=float(gamma_red),
    )


def hamiltonian(model: AtomModel) -> np.ndarray:
    """8x8 rotating-frame Hamiltonian in rad/s.

    Diagonal: Zeeman shift minus the manifold detuning (S: 0, P: Delta_g,
    D: Delta_g - Delta_r).  Off-diagonal: -(Omega/2) CG eps_q for each
    laser-coupled pair with q = m_upper - m_lower.
    """
    green = model.laser(Transition.GREEN)
    red = model.laser(Transition.RED)
    offsets = {
        Term.S12: 0.0,
        Term.P12: -green.detuning,
        Term.D32: -(green.detuning - red.detuning),
    }
    H = np.zeros((8, 8), dtype=complex)
    for lev in model.levels:
        H[lev.index, lev.index] = offsets[lev.term] + zeeman_shift(lev.term, lev.mj, model.b_field)
    for las in (green, red):
        pol = las.polarization
        for up in model.levels:
            if up.term is not Term.P12:
                continue
            for low in model.levels:
                if low.term is not las.transition.lower:
                    continue
                q = int(round(up.mj - low.mj))
                if abs(q) > 1:
                    continue
                cg = clebsch_gordan(up.term.j, up.mj, q, low.term.j, low.mj)
                coupling = -0.5 * las.rabi * cg * pol[q + 1]
                H[up.index, low.index] += coupling
                H[low.index, up.index] += np.conj(coupling)
    return H


def jump_operators(model: AtomModel, transitions: Sequence[str] = ("green", "red")) -> list[Jump]:
    """Collapse operators, one per (transition, photon polarization q).

    Channels sharing a polarization are summed coherently into one operator,
    ``J_q = sum CG |lower><upper|``, with the transition's total rate.
    """
    ops = []
    for trans in Transition:
        if trans.short not in transitions:
            continue
        gamma = model.gamma_green if trans is Transition.GREEN else model.gamma_red
        for q in (-1, 0, 1):
            J = np.zeros((8, 8), dtype=complex)
            for ch in model.channels:
                if ch.transition is trans and ch.q == q:
                    J[ch.lower.index, ch.upper.index] += ch.amplitude
            if np.any(J):
                ops.append(Jump(J, gamma, trans is Transition.GREEN, f"{trans.short},q={q:+d}"))
    return ops


def open_system(model: AtomModel, transitions: Sequence[str] = ("green", "red")) -> OpenSystem:
    """Hamiltonian plus collapse channels of ``model``.

    Passing ``transitions=("green",)`` drops the P1/2 -> D3/2 decay, which
    together with a zero red Rabi frequency reduces the ion to its S-P part.
    """
    return OpenSystem(
        hamiltonian(model),
        tuple(jump_operators(model, transitions)),
        model.excited,
        tuple(lev.label for lev in model.levels),
    )


def as_system(obj) -> OpenSystem:
    """Coerce an AtomModel, TwoLevelAtom or OpenSystem to an OpenSystem."""
    if isinstance(obj, OpenSystem):
        return obj
    if isinstance(obj, AtomModel):
        return open_system(obj)
    if isinstance(obj, TwoLevelAtom):
        return obj.open_system()
    raise TypeError(f"cannot build an open system from {type(obj).__name__}")
