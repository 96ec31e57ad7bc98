"""Quantum-jump click streams and a TTSPC-style pair correlator.

This is the independent check on :mod:`halfcavity.correlation`: trajectories
of the same Lindblad dynamics are unravelled into pure-state histories,
green jumps become detector clicks, and clicks are histogrammed exactly as
in the experiment (all pairs, fixed bins, divided by integration time).

Only non-interfering observables are covered.  Randomly delaying a click
by the mirror round trip models ion and mirror image seen as separate
sources; single-photon interference between the direct and reflected
partial waves has no counterpart in a click list.

No-jump evolution uses the exact propagator exp(-i H_eff h) on a fixed
step h <= 1 / (100 Gamma_total); a jump inside a step is located by
safeguarded Newton iteration on the norm, so click times carry no
discretization error.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy.linalg import expm

from .atom import as_system
from .dynamics import OpenSystem, steady_state
from .errors import ConfigError

__all__ = [
    "ClickStream",
    "Histogram",
    "make_rng",
    "simulate_clicks",
    "ensemble_populations",
    "apply_mirror_delay",
    "add_dark_counts",
    "correlate",
    "correlate_brute_force",
    "delayed_pair_density",
    "expected_counts",
    "dark_count_background",
    "compare",
]

STEPS_PER_DECAY = 100
SUBSTEPS = 10
RANDOM_CHUNK = 1 << 18
# uniforms kept in reserve so kernels only pause between steps
RANDOM_MARGIN = 64

_OK, _NEED_RANDOM, _BUFFER_FULL = 0, 1, 2


def make_rng(seed: int, offset: int | None = None) -> np.random.Generator:
    """Counter-based Philox generator; ``offset`` selects an independent stream."""
    if offset is None:
        ss = np.random.SeedSequence(seed)
    else:
        ss = np.random.SeedSequence(seed, spawn_key=(offset,))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class ClickStream:
    times: np.ndarray  # s, sorted
    duration: float
    seed: int | None = None
    source: str = "direct"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.size and (t[0] < 0 or t[-1] >= self.duration or np.any(np.diff(t) <= 0)):
            raise ValueError("click times must be strictly increasing within [0, duration)")
        if self.source not in ("direct", "reflected", "mixed"):
            raise ValueError(f"unknown source tag {self.source!r}")
        object.__setattr__(self, "times", t)

    def __len__(self) -> int:
        return self.times.size

    @property
    def rate(self) -> float:
        return self.times.size / self.duration


@dataclass(frozen=True)
class Histogram:
    """Pair counts in bins ``[k w, (k+1) w)``, k = 0 .. n-1."""

    bin_width: float
    max_lag: float
    counts: np.ndarray
    duration: float

    @property
    def edges(self) -> np.ndarray:
        return self.bin_width * np.arange(self.counts.size + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.bin_width * (np.arange(self.counts.size) + 0.5)

    @property
    def rates(self) -> np.ndarray:
        """Counts divided by the total integration time (1/s per bin)."""
        return self.counts / self.duration

    @property
    def rate_errors(self) -> np.ndarray:
        return np.sqrt(self.counts) / self.duration

    def __add__(self, other: Histogram) -> Histogram:
        if other.bin_width != self.bin_width or other.counts.size != self.counts.size:
            raise ValueError("cannot merge histograms with different binning")
        return Histogram(self.bin_width, self.max_lag, self.counts + other.counts,
                         self.duration + other.duration)


# ---------------------------------------------------------------- jump kernel


@nb.njit(cache=True, nogil=True)
def _matvec(U, psi, out):
    n = psi.shape[0]
    for i in range(n):
        acc = 0j
        for j in range(n):
            acc += U[i, j] * psi[j]
        out[i] = acc


@nb.njit(cache=True, nogil=True)
def _norm2(psi):
    acc = 0.0
    for i in range(psi.shape[0]):
        acc += psi[i].real ** 2 + psi[i].imag ** 2
    return acc


@nb.njit(cache=True, nogil=True)
def _expect(A, psi):
    n = psi.shape[0]
    acc = 0j
    for i in range(n):
        row = 0j
        for j in range(n):
            row += A[i, j] * psi[j]
        acc += np.conj(psi[i]) * row
    return acc.real


@nb.njit(cache=True, nogil=True)
def _propagate(G, psi, s, out):
    # exp(s G) psi by Taylor series, G = -i H_eff; s ||G|| is O(0.1) here
    n = psi.shape[0]
    term = psi.copy()
    tmp = np.empty(n, dtype=np.complex128)
    for i in range(n):
        out[i] = psi[i]
    k = 1
    while k < 60:
        _matvec(G, term, tmp)
        for i in range(n):
            term[i] = tmp[i] * (s / k)
        for i in range(n):
            out[i] += term[i]
        if _norm2(term) < 1e-36 * _norm2(out):
            break
        k += 1


@nb.njit(cache=True, nogil=True)
def _locate(G, gamma_op, psi, s_max, r, work):
    # norm^2(s) - r is decreasing on [0, s_max] with derivative -<psi(s)|Gamma|psi(s)>
    lo, hi = 0.0, s_max
    f_lo = _norm2(psi) - r
    s = s_max * 0.5
    if f_lo > 0:
        d0 = _expect(gamma_op, psi)
        if d0 > 0:
            s = min(max(f_lo / d0, 0.0), s_max)
    for _ in range(100):
        _propagate(G, psi, s, work)
        f = _norm2(work) - r
        if f > 0:
            lo = s
        else:
            hi = s
        d = _expect(gamma_op, work)
        s_new = s + f / d if d > 0 else 0.5 * (lo + hi)
        if not (lo < s_new < hi):
            s_new = 0.5 * (lo + hi)
        if abs(s_new - s) <= 1e-15 * s_max + 1e-30:
            s = s_new
            break
        s = s_new
    _propagate(G, psi, s, work)
    return s


@nb.njit(cache=True, nogil=True)
def _do_jump(psi, jumps, rates, u, work):
    K = jumps.shape[0]
    w = np.empty(K)
    total = 0.0
    for k in range(K):
        _matvec(jumps[k], psi, work)
        w[k] = rates[k] * _norm2(work)
        total += w[k]
    target = u * total
    chosen = K - 1
    acc = 0.0
    for k in range(K):
        acc += w[k]
        if target < acc:
            chosen = k
            break
    _matvec(jumps[chosen], psi, work)
    nrm = math.sqrt(_norm2(work))
    for i in range(psi.shape[0]):
        psi[i] = work[i] / nrm
    return chosen


@nb.njit(cache=True, nogil=True)
def _advance(psi, rem, h, U_h, G, gamma_op, jumps, rates, green, state, uniforms, t, clicks, n_clicks, t_end):
    # advance by rem (<= h) handling any number of jumps; state = [threshold, pos, channel draw]
    # returns (status, time advanced, n_clicks)
    n = psi.shape[0]
    work = np.empty(n, dtype=np.complex128)
    phi = np.empty(n, dtype=np.complex128)
    done = 0.0
    while True:
        if state[2] < 0:
            pos = int(state[1])
            if pos + 2 > uniforms.shape[0]:
                return _NEED_RANDOM, done, n_clicks
            state[0] = uniforms[pos]
            state[1] = pos + 2
            state[2] = uniforms[pos + 1]
        left = rem - done
        if left == h:
            _matvec(U_h, psi, phi)
        else:
            _propagate(G, psi, left, phi)
        if _norm2(phi) > state[0]:
            for i in range(n):
                psi[i] = phi[i]
            return _OK, rem, n_clicks
        s = _locate(G, gamma_op, psi, left, state[0], phi)
        for i in range(n):
            psi[i] = phi[i]
        done += s
        ch = _do_jump(psi, jumps, rates, state[2], work)
        state[2] = -1.0
        if green[ch] and t + done < t_end:
            if n_clicks >= clicks.shape[0]:
                raise RuntimeError("click buffer overflow")
            clicks[n_clicks] = t + done
            n_clicks += 1
        if done >= rem:
            return _OK, rem, n_clicks


@nb.njit(cache=True, nogil=True)
def _click_kernel(psi, t, t_end, h, n_sub, U_h, U_big, G, gamma_op, jumps, rates, green,
                  uniforms, state, clicks, n_clicks):
    n = psi.shape[0]
    phi = np.empty(n, dtype=np.complex128)
    big = h * n_sub
    while t < t_end:
        if n_clicks + 4 > clicks.shape[0]:
            return _BUFFER_FULL, t, n_clicks
        if int(state[1]) + RANDOM_MARGIN > uniforms.shape[0]:
            return _NEED_RANDOM, t, n_clicks
        if state[2] < 0:
            pos = int(state[1])
            if pos + 2 > uniforms.shape[0]:
                return _NEED_RANDOM, t, n_clicks
            state[0] = uniforms[pos]
            state[1] = pos + 2
            state[2] = uniforms[pos + 1]
        _matvec(U_big, psi, phi)
        if _norm2(phi) > state[0]:
            for i in range(n):
                psi[i] = phi[i]
            t += big
            continue
        for _ in range(n_sub):
            status, adv, n_clicks = _advance(psi, h, h, U_h, G, gamma_op, jumps, rates, green,
                                             state, uniforms, t, clicks, n_clicks, t_end)
            t += adv
            if status != _OK:
                return status, t, n_clicks
    return _OK, t, n_clicks


@nb.njit(cache=True, nogil=True)
def _population_kernel(psi, n_steps, record_every, h, U_h, G, gamma_op, jumps, rates, green,
                       uniforms, state, out, k0):
    # records normalized populations every record_every steps, starting at step k0
    dummy = np.empty(1)
    n = psi.shape[0]
    for k in range(k0, n_steps):
        if int(state[1]) + RANDOM_MARGIN > uniforms.shape[0]:
            return _NEED_RANDOM, k
        if k % record_every == 0:
            nrm = _norm2(psi)
            for i in range(n):
                out[k // record_every, i] = (psi[i].real ** 2 + psi[i].imag ** 2) / nrm
        status, adv, _ = _advance(psi, h, h, U_h, G, gamma_op, jumps, rates, green,
                                  state, uniforms, 0.0, dummy, 0, -1.0)
        if status != _OK:
            return status, k
    k = n_steps
    if k % record_every == 0:
        nrm = _norm2(psi)
        for i in range(n):
            out[k // record_every, i] = (psi[i].real ** 2 + psi[i].imag ** 2) / nrm
    return _OK, k


# ---------------------------------------------------------------- drivers


class _Unraveling:
    def __init__(self, system: OpenSystem, max_step: float | None = None):
        H = np.asarray(system.hamiltonian, dtype=complex)
        self.dim = H.shape[0]
        self.jumps = np.ascontiguousarray([np.asarray(j.operator, dtype=complex) for j in system.jumps])
        self.rates = np.array([j.rate for j in system.jumps], dtype=float)
        self.green = np.array([j.green for j in system.jumps], dtype=np.bool_)
        gamma_op = np.zeros_like(H)
        for J, g in zip(self.jumps, self.rates):
            gamma_op += g * (J.conj().T @ J)
        self.gamma_op = gamma_op
        self.G = np.ascontiguousarray(-1j * (H - 0.5j * gamma_op))
        gamma_total = float(np.max(np.linalg.eigvalsh(gamma_op))) if len(self.rates) else 0.0
        h = 1.0 / (STEPS_PER_DECAY * gamma_total) if gamma_total > 0 else 1e-9
        if max_step is not None:
            h = min(h, max_step)
        self.set_step(h)

    def set_step(self, h: float) -> None:
        self.h = h
        self.U_h = np.ascontiguousarray(expm(self.G * h))
        self.U_big = np.ascontiguousarray(np.linalg.matrix_power(self.U_h, SUBSTEPS))


def _sample_pure(rho: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    w = np.clip(w, 0.0, None)
    k = int(np.searchsorted(np.cumsum(w) / w.sum(), rng.random(), side="right"))
    return np.ascontiguousarray(v[:, min(k, w.size - 1)].astype(complex))


def simulate_clicks(model, duration: float, seed: int, psi0=None) -> ClickStream:
    """Green-photon arrival times of one quantum-jump trajectory.

    The initial pure state is drawn from the steady-state ensemble (so the
    stream is stationary from t = 0) unless ``psi0`` is given.  Red jumps
    act on the state but leave no click.
    """
    system = as_system(model)
    unr = _Unraveling(system)
    rng = make_rng(seed)
    if psi0 is None:
        psi = _sample_pure(steady_state(system.liouvillian()), rng)
    else:
        psi = np.ascontiguousarray(np.asarray(psi0, dtype=complex))
        psi = psi / np.linalg.norm(psi)
    state = np.array([0.0, 0.0, -1.0])  # threshold, next random index, pending channel draw
    uniforms = rng.random(RANDOM_CHUNK)
    clicks = np.empty(1024)
    n_clicks = 0
    t = 0.0
    while True:
        status, t, n_clicks = _click_kernel(psi, t, duration, unr.h, SUBSTEPS, unr.U_h, unr.U_big,
                                            unr.G, unr.gamma_op, unr.jumps, unr.rates, unr.green,
                                            uniforms, state, clicks, n_clicks)
        if status == _OK:
            break
        if status == _NEED_RANDOM:
            uniforms = rng.random(RANDOM_CHUNK)
            state[1] = 0
        elif status == _BUFFER_FULL:
            clicks = np.concatenate([clicks, np.empty(clicks.size)])
    return ClickStream(clicks[:n_clicks].copy(), float(duration), seed, "direct")


def _one_trajectory(unr: _Unraveling, psi0: np.ndarray, n_steps: int, every: int, seed: int, k: int):
    rng = make_rng(seed, k)
    psi = psi0.copy()
    out = np.empty((n_steps // every + 1, unr.dim))
    state = np.array([0.0, 0.0, -1.0])
    uniforms = rng.random(4096)
    k0 = 0
    while True:
        status, k0 = _population_kernel(psi, n_steps, every, unr.h, unr.U_h, unr.G, unr.gamma_op,
                                        unr.jumps, unr.rates, unr.green, uniforms, state, out, k0)
        if status == _OK:
            return out
        uniforms = rng.random(4096)
        state[1] = 0


def ensemble_populations(model, t_grid, n_traj: int, seed: int, psi0=None, n_jobs: int = 1,
                         indices=None):
    """Mean and standard error of level populations over ``n_traj`` trajectories.

    With ``indices`` the populations of those levels are summed per
    trajectory first (e.g. the whole P1/2 manifold).

    Trajectory ``k`` uses the random stream ``make_rng(seed, k)``, so the
    result does not depend on ``n_jobs``.
    """
    system = as_system(model)
    t = np.asarray(t_grid, dtype=float)
    dt = t[1] - t[0]
    unr = _Unraveling(system)
    every = max(1, int(math.ceil(dt / unr.h - 1e-9)))
    unr.set_step(dt / every)
    n_steps = every * (t.size - 1)
    if psi0 is None:
        psi0 = np.zeros(unr.dim, dtype=complex)
        psi0[0] = 1.0
    psi0 = np.ascontiguousarray(np.asarray(psi0, dtype=complex) / np.linalg.norm(psi0))

    def run(k):
        return _one_trajectory(unr, psi0, n_steps, every, seed, k)

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            results = list(pool.map(run, range(n_traj)))
    else:
        results = [run(k) for k in range(n_traj)]
    pops = np.stack(results)
    if indices is not None:
        pops = pops[:, :, list(indices)].sum(axis=2)
    return pops.mean(axis=0), pops.std(axis=0, ddof=1) / math.sqrt(n_traj)


def apply_mirror_delay(stream: ClickStream, tau: float, p_reflect: float, seed: int) -> ClickStream:
    """Delay each click by ``tau`` with probability ``p_reflect`` (independently).

    Clicks pushed past the end of the stream are dropped.
    """
    if not 0 <= p_reflect <= 1:
        raise ConfigError(f"p_reflect must lie in [0, 1], got {p_reflect}")
    if tau < 0:
        raise ConfigError(f"tau must be >= 0, got {tau}")
    if p_reflect == 0:
        return stream
    rng = make_rng(seed)
    delayed = rng.random(stream.times.size) < p_reflect
    times = np.sort(stream.times + tau * delayed)
    times = times[times < stream.duration]
    source = "reflected" if p_reflect == 1 else "mixed"
    return ClickStream(times, stream.duration, stream.seed, source)


def add_dark_counts(stream: ClickStream, rate: float, seed: int) -> ClickStream:
    """Superpose a Poisson background of ``rate`` clicks per second."""
    if rate < 0:
        raise ConfigError(f"dark-count rate must be >= 0, got {rate}")
    if rate == 0:
        return stream
    rng = make_rng(seed)
    n = rng.poisson(rate * stream.duration)
    extra = rng.uniform(0.0, stream.duration, n)
    times = np.unique(np.concatenate([stream.times, extra]))
    return ClickStream(times, stream.duration, stream.seed, stream.source)


def _n_bins(bin_width: float, max_lag: float) -> int:
    return int(math.floor(max_lag / bin_width + 1e-9))


def correlate(stream: ClickStream, bin_width: float = 500e-12, max_lag: float = 40e-9) -> Histogram:
    """Histogram of time differences between all ordered click pairs.

    Sliding window over the sorted stream: for offset j = 1, 2, ... all
    differences t[i+j] - t[i] are binned until none falls inside the window.
    """
    if bin_width <= 0:
        raise ConfigError("bin width must be positive")
    if max_lag > stream.duration / 10:
        raise ConfigError("max_lag must not exceed a tenth of the stream duration")
    nb_ = _n_bins(bin_width, max_lag)
    counts = np.zeros(nb_, dtype=np.int64)
    t = stream.times
    window = nb_ * bin_width
    j = 1
    while j < t.size:
        lags = t[j:] - t[:-j]
        inside = (lags < window) & (lags > 0)
        if not inside.any():
            if lags.min() >= window:
                break
        else:
            idx = np.floor(lags[inside] / bin_width).astype(np.int64)
            np.minimum(idx, nb_ - 1, out=idx)
            counts += np.bincount(idx, minlength=nb_)
        j += 1
    return Histogram(bin_width, max_lag, counts, stream.duration)


def correlate_brute_force(stream: ClickStream, bin_width: float, max_lag: float) -> Histogram:
    """O(n^2) reference implementation of :func:`correlate`."""
    nb_ = _n_bins(bin_width, max_lag)
    counts = np.zeros(nb_, dtype=np.int64)
    t = stream.times
    for i in range(t.size):
        lags = t[i + 1:] - t[i]
        idx = np.floor(lags[(lags > 0) & (lags < nb_ * bin_width)] / bin_width).astype(np.int64)
        np.minimum(idx, nb_ - 1, out=idx)
        np.add.at(counts, idx, 1)
    return Histogram(bin_width, max_lag, counts, stream.duration)


def delayed_pair_density(g_raw, tau: float, p_reflect: float):
    """Pair-rate density of a stream whose clicks are delayed with probability p.

    ``g_raw`` is a callable giving the undelayed density G(T) for T >= 0.
    """
    same = (1 - p_reflect) ** 2 + p_reflect**2
    cross = p_reflect * (1 - p_reflect)

    def density(s):
        s = np.asarray(s, dtype=float)
        return same * g_raw(s) + cross * (g_raw(np.abs(s - tau)) + g_raw(s + tau))

    return density


def expected_counts(density, hist: Histogram, oversample: int = 50) -> np.ndarray:
    """Expected pair counts per bin for a pair-rate density in s^-2."""
    from scipy.integrate import simpson

    n = hist.counts.size
    out = np.empty(n)
    for k in range(n):
        x = np.linspace(k * hist.bin_width, (k + 1) * hist.bin_width, 2 * oversample + 1)
        out[k] = simpson(density(x), x=x)
    return out * hist.duration


def dark_count_background(signal_rate: float, dark_rate: float, bin_width: float) -> float:
    """Flat pair rate per bin (1/s) added by uncorrelated dark counts."""
    return (dark_rate**2 + 2 * dark_rate * signal_rate) * bin_width


def compare(hist: Histogram, expected: np.ndarray, n_sigma: float = 2.0) -> dict:
    """Per-bin deviations in units of the Poisson error of the expectation."""
    sigma = np.sqrt(np.clip(expected, 1e-300, None))
    z = (hist.counts - expected) / sigma
    return {
        "z": z,
        "fraction_within": float(np.mean(np.abs(z) <= n_sigma)),
        "chi2": float(np.sum(z**2)),
        "dof": int(z.size),
    }
