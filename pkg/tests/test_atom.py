import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from halfcavity.atom import (
    LEVELS, MU_B_OVER_HBAR, LaserField, Term, Transition, TwoLevelAtom, build_model,
    clebsch_gordan, decay_channels, hamiltonian, jump_operators, lande_g, level_index,
    linear_polarization, open_system, term_indices, zeeman_shift,
)
from halfcavity.correlation import g2_free_space
from halfcavity.dynamics import Jump, OpenSystem, steady_state, uniform_grid
from halfcavity.errors import ConfigError, QuantumNumberError

from conftest import MHZ


def racah_cg(j1, m1, j2, m2, J, M):
    """Independent Racah sum with Fractions-free float factorials."""
    if m1 + m2 != M:
        return 0.0
    f = math.factorial
    ints = [j1 + j2 - J, j1 - j2 + J, -j1 + j2 + J, j1 + j2 + J + 1,
            j1 + m1, j1 - m1, j2 + m2, j2 - m2, J + M, J - M]
    if any(x < 0 for x in ints):
        return 0.0
    a, b, c, d, e1, e2, e3, e4, e5, e6 = [round(x) for x in ints]
    pre = math.sqrt((2 * J + 1) * f(a) * f(b) * f(c) / f(d))
    pre *= math.sqrt(f(e1) * f(e2) * f(e3) * f(e4) * f(e5) * f(e6))
    total = 0.0
    for k in range(0, 60):
        den = [k, round(j1 + j2 - J - k), round(j1 - m1 - k), round(j2 + m2 - k),
               round(J - j2 + m1 + k), round(J - j1 - m2 + k)]
        if any(x < 0 for x in den):
            continue
        total += (-1) ** k / math.prod(f(x) for x in den)
    return pre * total


def halves(j):
    return [-j + k for k in range(int(2 * j) + 1)]


@pytest.mark.parametrize("j_lower", [0.5, 1.5])
def test_cg_table_matches_racah(j_lower):
    for mu, q, ml in itertools.product(halves(0.5), (-1, 0, 1), halves(j_lower)):
        ours = clebsch_gordan(0.5, mu, q, j_lower, ml)
        assert ours == pytest.approx(racah_cg(j_lower, ml, 1, q, 0.5, mu), abs=1e-14)


def test_cg_examples():
    total = sum(clebsch_gordan(0.5, 0.5, q, 0.5, ml) ** 2 for q in (-1, 0, 1) for ml in halves(0.5))
    assert total == pytest.approx(1.0, abs=1e-12)
    assert clebsch_gordan(1.5, 1.5, 1, 0.5, 0.5) == pytest.approx(1.0)
    assert clebsch_gordan(0.5, 0.5, 0, 0.5, -0.5) == 0.0


@pytest.mark.parametrize("args", [(0.5, 1.5, 0, 0.5, 0.5), (0.5, 0.5, 2, 0.5, -0.5), (0.7, 0.5, 0, 0.5, 0.5),
                                  (-0.5, 0.5, 0, 0.5, 0.5), (0.5, 0.5, 0, 1.0, 0.5)])
def test_cg_rejects_invalid(args):
    with pytest.raises(QuantumNumberError):
        clebsch_gordan(*args)


def test_levels():
    assert len(LEVELS) == 8
    assert sorted(lev.index for lev in LEVELS) == list(range(8))
    counts = {t: len(term_indices(t)) for t in Term}
    assert counts == {Term.S12: 2, Term.P12: 2, Term.D32: 4}
    for lev in LEVELS:
        assert abs(lev.mj) <= lev.term.j
        assert level_index(lev.term, lev.mj) == lev.index


def test_lande():
    assert lande_g(0, 0.5, 0.5) == pytest.approx(2.0)
    assert lande_g(1, 0.5, 0.5) == pytest.approx(2 / 3)
    assert lande_g(2, 0.5, 1.5) == pytest.approx(4 / 5)
    assert [t.g for t in Term] == pytest.approx([2, 2 / 3, 4 / 5])


def test_channel_completeness_and_counts():
    gg, gr = 15.1 * MHZ, 5.3 * MHZ
    chans = decay_channels(gg, gr)
    green = [c for c in chans if c.transition is Transition.GREEN]
    red = [c for c in chans if c.transition is Transition.RED]
    # nonzero dipole channels allowed by the selection rules
    assert (len(green), len(red)) == (4, 6)
    for up in term_indices(Term.P12):
        for group, gamma in ((green, gg), (red, gr)):
            mine = [c for c in group if c.upper.index == up]
            assert sum(c.amplitude**2 for c in mine) == pytest.approx(1.0, abs=1e-12)
            assert sum(c.branch_rate for c in mine) == pytest.approx(gamma, rel=1e-12)


def _model(b=0.4e-3, green=(15, -10, 0.3), red=(30, 0, 1.2), gg=15.1, gr=5.3):
    lasers = [LaserField.linear(Transition.GREEN, green[1] * MHZ, green[0] * MHZ, green[2]),
              LaserField.linear(Transition.RED, red[1] * MHZ, red[0] * MHZ, red[2])]
    return build_model(b, lasers, gg * MHZ, gr * MHZ)


def test_jump_completeness_and_selection():
    m = _model()
    jumps = jump_operators(m)
    S = sum(j.rate * j.operator.conj().T @ j.operator for j in jumps)
    P = list(term_indices(Term.P12))
    np.testing.assert_allclose(S[np.ix_(P, P)], m.gamma_total * np.eye(2), atol=1e-6 * m.gamma_total)
    rest = [i for i in range(8) if i not in P]
    np.testing.assert_allclose(S[np.ix_(rest, rest)], 0, atol=1e-9)
    S_idx = list(term_indices(Term.S12))
    for j in jumps:
        rows = np.nonzero(np.abs(j.operator).sum(axis=1))[0]
        cols = np.nonzero(np.abs(j.operator).sum(axis=0))[0]
        assert set(cols) <= set(P)
        if j.green:
            assert set(rows) <= set(S_idx)
        else:
            assert set(rows) <= set(term_indices(Term.D32))


def test_zeeman():
    B = 0.5e-3
    assert zeeman_shift(Term.S12, 0.5, B) == pytest.approx(2 * MU_B_OVER_HBAR * B / 2)
    for t in Term:
        for m in halves(t.j):
            assert zeeman_shift(t, -m, B) == pytest.approx(-zeeman_shift(t, m, B))
            assert zeeman_shift(t, m, 0.0) == 0.0
            assert zeeman_shift(t, m, 2 * B) == pytest.approx(2 * zeeman_shift(t, m, B))


def test_zero_field_and_zero_rabi_hamiltonian():
    H = hamiltonian(_model(b=0.0, green=(0, -10, 0.3), red=(0, 5, 1.0)))
    np.testing.assert_array_equal(H, np.diag(np.diag(H)))
    d = np.real(np.diag(H))
    assert d[list(term_indices(Term.S12))] == pytest.approx([0, 0])
    assert d[list(term_indices(Term.P12))] == pytest.approx([10 * MHZ] * 2)
    assert d[list(term_indices(Term.D32))] == pytest.approx([15 * MHZ] * 4)


@settings(max_examples=50, deadline=None)
@given(
    b=st.floats(0, 2e-3),
    rabi=st.tuples(st.floats(0, 50), st.floats(0, 50)),
    det=st.tuples(st.floats(-50, 50), st.floats(-50, 50)),
    pol=st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=6, max_size=6),
)
def test_hamiltonian_hermitian(b, rabi, det, pol):
    vecs = np.array([complex(*p) for p in pol]).reshape(2, 3)
    norms = np.linalg.norm(vecs, axis=1)
    if np.any(norms < 1e-3):
        vecs = np.array([[0, 1, 0], [0, 1, 0]], dtype=complex)
        norms = np.ones(2)
    vecs /= norms[:, None]
    lasers = [LaserField(Transition.GREEN, det[0] * MHZ, rabi[0] * MHZ, tuple(vecs[0])),
              LaserField(Transition.RED, det[1] * MHZ, rabi[1] * MHZ, tuple(vecs[1]))]
    H = hamiltonian(build_model(b, lasers, 15.1 * MHZ, 5.3 * MHZ))
    assert np.max(np.abs(H - H.conj().T)) <= 1e-12 * max(1.0, np.max(np.abs(H)))


def test_two_level_element():
    # sigma+ light on S(-1/2) <-> P(+1/2)
    rabi = 10 * MHZ
    lasers = [LaserField(Transition.GREEN, 0.0, rabi, (0, 0, 1)), LaserField(Transition.RED, 0.0, 0.0, (0, 1, 0))]
    H = hamiltonian(build_model(0.0, lasers, 15.1 * MHZ, 5.3 * MHZ))
    s, p = level_index(Term.S12, -0.5), level_index(Term.P12, 0.5)
    cg = clebsch_gordan(0.5, 0.5, 1, 0.5, -0.5)
    assert abs(cg) == pytest.approx(math.sqrt(2 / 3))
    assert H[p, s] == pytest.approx(-rabi / 2 * cg)
    mask = np.ones_like(H, dtype=bool)
    np.fill_diagonal(mask, False)
    mask[p, s] = mask[s, p] = False
    assert np.all(H[mask] == 0)


def test_pi_light_reduces_to_two_level():
    # B = 0, red dark, green-only decay: total P1/2 follows a two-level atom
    # with Rabi frequency Omega |CG| = Omega / sqrt(3)
    rabi, gamma = 20 * MHZ, 15.1 * MHZ
    lasers = [LaserField.linear(Transition.GREEN, 0.0, rabi, 0.0), LaserField.linear(Transition.RED, 0.0, 0.0, 0.0)]
    m = build_model(0.0, lasers, gamma, 5.3 * MHZ)
    full = open_system(m, transitions=("green",))
    keep = list(term_indices(Term.S12) + term_indices(Term.P12))
    sub = np.ix_(keep, keep)
    sys8 = OpenSystem(full.hamiltonian[sub], tuple(Jump(j.operator[sub], j.rate, j.green) for j in full.jumps),
                      tuple(keep.index(i) for i in full.excited))
    two = TwoLevelAtom(rabi / math.sqrt(3), 0.0, gamma)
    rho = steady_state(sys8.liouvillian())
    assert sys8.excited_population(rho) == pytest.approx(two.steady_population(), rel=1e-9)
    t = uniform_grid(200e-9, 0.1e-9)
    g = g2_free_space(sys8, t)
    np.testing.assert_allclose(g.values, two.excited_population(t) / two.steady_population(), atol=1e-7)


def test_polarization_and_build_errors():
    np.testing.assert_allclose(linear_polarization(0.0), [0, 1, 0], atol=1e-15)
    assert np.linalg.norm(linear_polarization(0.77)) == pytest.approx(1.0)
    with pytest.raises(ConfigError):
        LaserField(Transition.GREEN, 0.0, 1.0, (1, 1, 0))
    green = LaserField.linear(Transition.GREEN, 0.0, 1.0, 0.3)
    red = LaserField.linear(Transition.RED, 0.0, 1.0, 0.3)
    with pytest.raises(ConfigError):
        build_model(0.0, [green], 1.0, 1.0)
    with pytest.raises(ConfigError):
        build_model(0.0, [green, green, red], 1.0, 1.0)
    with pytest.raises(ConfigError):
        build_model(0.0, [green, red], 0.0, 1.0)
    with pytest.raises(ConfigError):
        build_model(0.0, [green, red], 1.0, -1.0)


def test_default_model(default_model):
    assert len(default_model.levels) == 8
    assert len(default_model.channels) == 10
    H = hamiltonian(default_model)
    assert np.max(np.abs(H - H.conj().T)) < 1e-12
