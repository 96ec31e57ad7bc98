"""Lindblad generator, steady state, RK4 propagation and photon-detection collapse.

Density matrices are column-stacked into vectors (``vec(rho) = rho.flatten("F")``)
so that ``vec(A @ rho @ B) = kron(B.T, A) @ vec(rho)``.  Everything here is
dimension-agnostic; the Ba+ specifics live in :mod:`halfcavity.atom`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import GridError, NoEmissionError, NonUniqueSteadyStateError, NumericalError

__all__ = [
    "Jump",
    "OpenSystem",
    "Trajectory",
    "vec",
    "unvec",
    "build_liouvillian",
    "steady_state",
    "evolve",
    "collapse",
    "collapse_green",
    "check_density_matrix",
    "uniform_grid",
]

# RK4 step must satisfy h * ||L|| <= 1/50
STEP_SAFETY = 50.0
MAX_SUBSTEPS = 10_000_000


@dataclass(frozen=True)
class Jump:
    """A collapse operator ``operator`` acting at ``rate`` (1/s).

    ``green`` marks channels whose emitted photon reaches the detectors.
    """

    operator: np.ndarray
    rate: float
    green: bool = False
    label: str = ""


@dataclass(frozen=True)
class OpenSystem:
    """Hamiltonian (rad/s, rotating frame) plus collapse channels.

    ``excited`` lists the basis indices of the emitting manifold (P1/2 for
    the ion); its population is what the correlation functions track.
    """

    hamiltonian: np.ndarray
    jumps: tuple[Jump, ...]
    excited: tuple[int, ...]
    labels: tuple[str, ...] = field(default=())

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @property
    def green_jumps(self) -> tuple[Jump, ...]:
        return tuple(j for j in self.jumps if j.green)

    @property
    def green_rate(self) -> float:
        """Total green decay rate out of the excited manifold (1/s)."""
        total = np.zeros((self.dim, self.dim), dtype=complex)
        for j in self.green_jumps:
            total += j.rate * (j.operator.conj().T @ j.operator)
        # completeness makes this a multiple of the identity on the manifold
        idx = list(self.excited)
        return float(np.mean(np.real(np.diagonal(total)[idx])))

    def liouvillian(self) -> np.ndarray:
        return build_liouvillian(self.hamiltonian, self.jumps)

    def excited_population(self, rho: np.ndarray) -> float:
        return float(np.real(np.sum(np.diagonal(rho)[list(self.excited)])))


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n_times, d, d)

    def populations(self) -> np.ndarray:
        return np.real(np.diagonal(self.states, axis1=1, axis2=2))

    def population(self, indices: Sequence[int]) -> np.ndarray:
        return self.populations()[:, list(indices)].sum(axis=1)


def vec(rho: np.ndarray) -> np.ndarray:
    return np.asarray(rho).flatten(order="F")


def unvec(v: np.ndarray) -> np.ndarray:
    d = int(round(np.sqrt(v.shape[-1])))
    if v.ndim == 1:
        return v.reshape((d, d), order="F")
    # batch of vectors, one per row
    return v.reshape((v.shape[0], d, d)).transpose(0, 2, 1)


def _as_pair(jump) -> tuple[np.ndarray, float]:
    if isinstance(jump, Jump):
        return np.asarray(jump.operator, dtype=complex), float(jump.rate)
    op, rate = jump
    return np.asarray(op, dtype=complex), float(rate)


def build_liouvillian(hamiltonian: np.ndarray, jumps: Sequence) -> np.ndarray:
    """Superoperator of ``-i[H, rho] + sum_k g_k (J rho J^+ - {J^+J, rho}/2)``.

    ``jumps`` may hold :class:`Jump` instances or ``(operator, rate)`` pairs.
    """
    H = np.asarray(hamiltonian, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"Hamiltonian must be square, got shape {H.shape}")
    d = H.shape[0]
    eye = np.eye(d)
    L = -1j * (np.kron(eye, H) - np.kron(H.T, eye))
    for jump in jumps:
        J, rate = _as_pair(jump)
        if J.shape != H.shape:
            raise ValueError(f"jump operator shape {J.shape} does not match Hamiltonian {H.shape}")
        if rate < 0:
            raise ValueError(f"negative jump rate {rate}")
        JdJ = J.conj().T @ J
        L += rate * (np.kron(J.conj(), J) - 0.5 * np.kron(eye, JdJ) - 0.5 * np.kron(JdJ.T, eye))
    return L


def steady_state(L: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Unique trace-one null vector of ``L``.

    The null space is found by SVD; a second singular value below
    ``rtol * sigma_max`` signals a degenerate (dark) steady-state manifold.
    """
    L = np.asarray(L, dtype=complex)
    n = L.shape[0]
    d = int(round(np.sqrt(n)))
    sv = np.linalg.svd(L, compute_uv=False)
    null_dim = int(np.sum(sv <= rtol * sv[0]))
    if null_dim != 1:
        raise NonUniqueSteadyStateError(null_dim) if null_dim > 1 else NumericalError(
            "Liouvillian has no null vector; not a valid generator"
        )
    # append the trace constraint and solve in the least-squares sense
    trace_row = vec(np.eye(d)).conj()[None, :]
    A = np.vstack([L, sv[0] * trace_row])
    rhs = np.zeros(n + 1, dtype=complex)
    rhs[-1] = sv[0]
    x, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    rho = unvec(x)
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.trace(rho).real


def uniform_grid(t_max: float, dt: float) -> np.ndarray:
    """``[0, dt, ..., t_max]`` built from integer multiples (no drift)."""
    if dt <= 0 or t_max < 0:
        raise GridError(f"need dt > 0 and t_max >= 0, got dt={dt}, t_max={t_max}")
    n = int(round(t_max / dt))
    return dt * np.arange(n + 1)


def grid_step(t_grid: np.ndarray) -> float:
    """Return the step of a uniform grid, raising GridError otherwise."""
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise GridError("time grid needs at least two points")
    steps = np.diff(t)
    dt = (t[-1] - t[0]) / (t.size - 1)
    if dt <= 0 or np.any(steps <= 0):
        raise GridError("time grid must be strictly increasing")
    if np.max(np.abs(steps - dt)) > 1e-12 * max(abs(t[-1]), abs(t[0])) + 1e-12 * dt:
        raise GridError("time grid is not uniform")
    return dt


def _rk4_propagator(L: np.ndarray, h: float) -> np.ndarray:
    # RK4 applied to a constant linear system is this degree-4 Taylor polynomial
    A = h * L
    eye = np.eye(L.shape[0], dtype=complex)
    A2 = A @ A
    return eye + A + A2 / 2 + A2 @ A / 6 + A2 @ A2 / 24


def evolve(L: np.ndarray, rho0: np.ndarray, t_grid, max_step: float | None = None) -> Trajectory:
    """Propagate ``rho0`` with fixed-step RK4 and sample it on ``t_grid``.

    The internal step is the largest divisor of the grid step not exceeding
    ``1 / (50 ||L||_2)`` (or ``max_step`` if smaller).  The grid starts at
    ``t_grid[0]``, where the state equals ``rho0``.
    """
    L = np.asarray(L, dtype=complex)
    t = np.asarray(t_grid, dtype=float)
    if t.size == 1:
        return Trajectory(t.copy(), np.asarray(rho0, dtype=complex)[None].copy())
    dt = grid_step(t)
    norm = np.linalg.norm(L, 2)
    h_max = dt if norm == 0 else min(dt, 1.0 / (STEP_SAFETY * norm))
    if max_step is not None:
        h_max = min(h_max, max_step)
    n_sub = int(np.ceil(dt / h_max * (1 - 1e-12)))
    if n_sub > MAX_SUBSTEPS or dt / n_sub <= 0:
        raise NumericalError(f"step-size underflow: {n_sub} RK4 substeps per grid step required")
    P = np.linalg.matrix_power(_rk4_propagator(L, dt / n_sub), n_sub)

    out = np.empty((t.size, L.shape[0]), dtype=complex)
    x = vec(rho0).astype(complex)
    out[0] = x
    for k in range(1, t.size):
        x = P @ x
        out[k] = x
    return Trajectory(t.copy(), unvec(out))


def collapse(rho: np.ndarray, jumps: Sequence[Jump]) -> np.ndarray:
    """Post-detection state ``sum_k J_k rho J_k^+`` normalized to unit trace."""
    rho = np.asarray(rho, dtype=complex)
    out = np.zeros_like(rho)
    for jump in jumps:
        J = np.asarray(jump.operator, dtype=complex)
        out += J @ rho @ J.conj().T
    tr = np.trace(out).real
    if tr <= 1e-300:
        raise NoEmissionError("no emission possible: state has no population in the emitting levels")
    return out / tr


def collapse_green(rho: np.ndarray, system: OpenSystem) -> np.ndarray:
    """Conditional state right after a green photon click.

    Sums over the green polarization channels (the detectors do not resolve
    polarization); the result lives entirely in the ground manifold.
    """
    return collapse(rho, system.green_jumps)


def check_density_matrix(rho: np.ndarray, normalized: bool = True) -> dict[str, float]:
    """Deviation measures for the density-matrix invariants.

    Returns hermiticity (max element-wise ``|rho - rho^+|``), trace error and
    the smallest eigenvalue of the Hermitian part.
    """
    rho = np.asarray(rho, dtype=complex)
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    tr_err = float(abs(np.trace(rho) - 1.0)) if normalized else 0.0
    min_eig = float(np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))))
    return {"hermiticity": herm, "trace_error": tr_err, "min_eigenvalue": min_eig}
