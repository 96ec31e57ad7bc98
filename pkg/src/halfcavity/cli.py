"""Command-line front end: ``halfcavity run|scan-phase|oracle``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import correlation as corr
from .atom import Term, as_system, term_indices
from .config import NS, RunConfig, load_config
from .dynamics import steady_state, uniform_grid
from .errors import ConfigError, GridError, NormalizationError, NumericalError
from .io import clicks_text, curve_csv, histogram_csv, table_csv, write_atomic
from . import mc_oracle as mc

NORMALIZE_FLAGS = {"raw": "raw", "asymptote": "unit-asymptote", "peak": "unit-peak"}
DARK_WARNING = 1e-6


def _grids(cfg: RunConfig):
    dt = cfg.grid.dt_ns * NS
    t = uniform_grid(cfg.grid.t_max_ns * NS, dt)
    n_b = int(math.ceil((t[-1] + cfg.mirror.tau) / dt - 1e-9))
    return t, dt * np.arange(n_b + 1)


def steady_summary(cfg: RunConfig, out=None) -> float:
    out = sys.stdout if out is None else out
    model = cfg.model()
    system = as_system(model)
    rho = steady_state(system.liouvillian())
    pops = np.real(np.diagonal(rho))
    p_exc = pops[list(term_indices(Term.P12))].sum()
    print("steady state populations:", file=out)
    for term in Term:
        print(f"  {term.label}: {pops[list(term_indices(term))].sum():.6g}", file=out)
    print(f"  green emission rate: {model.gamma_green * p_exc:.6g} photons/s", file=out)
    if p_exc < DARK_WARNING:
        print(f"warning: P1/2 population {p_exc:.3g} < {DARK_WARNING:g}; "
              "the ion is pumped into a dark state", file=sys.stderr)
    return p_exc


def _curves(cfg: RunConfig, phase_over_pi: float | None = None):
    model = cfg.model()
    t, t_b = _grids(cfg)
    mirror = cfg.mirror_config(phase_over_pi)
    b = corr.amplitude_bP(model, t_b, cfg.amplitude_mode)
    gm = corr.g2_mirror(b, mirror, t)
    gni = corr.g2_noninterfering(b, mirror.tau, t)
    return model, t, b, gm, gni


def _normalized(curve, mode: str):
    return corr.normalize(curve, mode)


def cmd_run(cfg: RunConfig, out: Path, normalize: str = "raw", subtract_ni: bool = False,
            svg: bool = False) -> list[Path]:
    steady_summary(cfg)
    model, t, b, gm, gni = _curves(cfg)
    mode = NORMALIZE_FLAGS[normalize]
    fields = cfg.header_fields()
    c = cfg.mirror.contrast

    g_free = corr.g2_free_space(model, t, "unit-asymptote" if mode == "unit-asymptote" else "raw")
    if mode == "unit-peak":
        g_free = corr.normalize(g_free, mode)
    measured = corr.mix_measured(gm, gni, c)
    if subtract_ni:
        measured = corr.subtract_noninterfering(measured, gni, c)
    curves = {
        "g2_free.csv": g_free,
        "g2_mirror.csv": _normalized(gm, mode),
        "g2_ni.csv": _normalized(gni, mode),
        "g2_measured.csv": _normalized(measured, mode),
    }
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name, curve in curves.items():
        written.append(write_atomic(out / name, curve_csv(curve, fields)))

    bfields = dict(fields, normalization="raw")
    if np.iscomplexobj(b.values):
        rows = [(ti * 1e9, v.real, v.imag) for ti, v in zip(b.times, b.values)]
        text = table_csv("b_amplitude", bfields, ["T_ns", "re", "im"], rows)
    else:
        text = table_csv("b_amplitude", bfields, ["T_ns", "value"], zip(b.times * 1e9, b.values))
    written.append(write_atomic(out / "b_amplitude.csv", text))
    print(f"tau = {cfg.mirror.tau / NS:.4g} ns, 2kL/pi = {cfg.mirror.phase_over_pi:.4g}")
    if svg:
        written += _svgs(out, [["g2_free.csv"], ["g2_ni.csv"], ["g2_mirror.csv", "g2_measured.csv"]])
    return written


def _svgs(out: Path, groups) -> list[Path]:
    from .plotting import svg_from_csv

    paths = []
    for group in groups:
        stem = Path(group[0]).stem if len(group) == 1 else Path(group[0]).stem + "_overlay"
        paths.append(svg_from_csv([out / g for g in group], out / f"{stem}.svg"))
    return paths


def cmd_scan_phase(cfg: RunConfig, out: Path, n_points: int | None = None, normalize: str = "raw",
                   svg: bool = False) -> list[Path]:
    n = cfg.scan.n_points if n_points is None else n_points
    if n < 2:
        raise ConfigError("scan needs at least 2 points")
    steady_summary(cfg)
    phases = np.linspace(cfg.scan.phase_min_over_pi, cfg.scan.phase_max_over_pi, n)
    model, t, b, _, _ = _curves(cfg)
    mode = NORMALIZE_FLAGS[normalize]
    out.mkdir(parents=True, exist_ok=True)
    fringe = corr.fringe(phases * math.pi, cfg.mirror.fringe_visibility)
    written, rows, names = [], [], []
    for p, fr in zip(phases, fringe):
        sub = cfg.with_phase(float(p))
        gm = corr.g2_mirror(b, sub.mirror_config(), t)
        tail = gm.values[-max(1, int(math.ceil(0.1 * gm.values.size))):]
        rows.append((p, gm.values[0], float(np.mean(tail)), float(gm.values.max()), fr))
        name = f"g2_mirror_phase_{p:.4f}.csv"
        names.append(name)
        written.append(write_atomic(out / name, curve_csv(_normalized(gm, mode), sub.header_fields())))
    fields = dict(cfg.header_fields(), normalization="raw")
    fields.pop("phase_over_pi")
    text = table_csv("scan_summary", fields, ["phase_over_pi", "g2_0", "asymptote", "peak", "fringe"], rows)
    written.append(write_atomic(out / "scan_summary.csv", text))
    if svg:
        from .plotting import svg_from_csv

        written.append(svg_from_csv([out / nm for nm in names], out / "g2_mirror_scan.svg"))
    return written


def cmd_oracle(cfg: RunConfig, out: Path, svg: bool = False) -> list[Path]:
    o = cfg.oracle
    atom = cfg.two_level() if o.two_level else cfg.model()
    system = as_system(atom)
    p_ss = system.excited_population(steady_state(system.liouvillian()))
    rate = system.green_rate * p_ss
    fields = dict(cfg.header_fields(), two_level=str(o.two_level), seed=str(o.seed),
                  dark_rate=repr(float(o.dark_rate)), p_reflect=repr(float(o.p_reflect)))
    fields.pop("amplitude_mode")
    out.mkdir(parents=True, exist_ok=True)

    bw, max_lag, tau = o.bin_width_ns * NS, o.max_lag_ns * NS, cfg.mirror.tau
    direct = mc.simulate_clicks(atom, o.duration_s, o.seed)
    print(f"simulated {len(direct)} clicks in {o.duration_s:g} s "
          f"(expected rate {rate:.6g}/s, observed {direct.rate:.6g}/s)")

    fine = uniform_grid(max_lag + tau + bw, 0.01 * NS)
    g_raw = corr.g2_free_space(atom, fine, "raw")

    def g_interp(x):
        return np.interp(x, g_raw.times, g_raw.values)

    streams = {"direct": (direct, g_interp)}
    if o.p_reflect > 0:
        mixed = mc.apply_mirror_delay(direct, tau, o.p_reflect, o.seed + 1)
        streams["ni"] = (mixed, mc.delayed_pair_density(g_interp, tau, o.p_reflect))

    written = []
    for k, (label, (stream, density)) in enumerate(streams.items()):
        if o.dark_rate > 0:
            stream = mc.add_dark_counts(stream, o.dark_rate, o.seed + 2 + k)
        written.append(write_atomic(out / f"clicks_{label}.txt", clicks_text(stream, fields)))
        hist = mc.correlate(stream, bw, max_lag)
        written.append(write_atomic(out / f"histogram_{label}.csv",
                                    histogram_csv(f"histogram_{label}", hist, fields)))
        expected = mc.expected_counts(density, hist)
        expected += mc.dark_count_background(rate, o.dark_rate, bw) * hist.duration
        cmp_ = mc.compare(hist, expected)
        rows = [(c * 1e9, n, e, math.sqrt(e), z)
                for c, n, e, z in zip(hist.centers, hist.counts, expected, cmp_["z"])]
        ofields = dict(fields, normalization="counts")
        written.append(write_atomic(out / f"overlay_{label}.csv",
                                    table_csv(f"overlay_{label}", ofields,
                                              ["T_ns", "observed", "expected", "sigma", "z"], rows)))
        print(f"{label}: {cmp_['fraction_within'] * 100:.1f}% of bins within 2 sigma, "
              f"chi2 = {cmp_['chi2']:.1f} / {cmp_['dof']} bins")
    if svg:
        from .plotting import svg_from_csv

        for label in streams:
            written.append(svg_from_csv([out / f"histogram_{label}.csv"], out / f"histogram_{label}.svg"))
    return written


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="halfcavity", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("run", "free-space, mirror-mode, non-interfering and mixed correlation curves"),
        ("scan-phase", "mirror-mode correlation for a range of mirror phases"),
        ("oracle", "Monte Carlo click streams and histograms"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", type=Path, default=None, help="TOML config (default: packaged)")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--svg", action="store_true", help="also write SVG plots")
        if name != "oracle":
            p.add_argument("--normalize", choices=sorted(NORMALIZE_FLAGS), default="raw")
        if name == "run":
            p.add_argument("--subtract-ni", action="store_true",
                           help="remove the non-interfering share from g2_measured")
        if name == "scan-phase":
            p.add_argument("--points", type=int, default=None, help="number of phases")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "run":
            cmd_run(cfg, args.out, args.normalize, args.subtract_ni, args.svg)
        elif args.command == "scan-phase":
            cmd_scan_phase(cfg, args.out, args.points, args.normalize, args.svg)
        else:
            cmd_oracle(cfg, args.out, args.svg)
    except (ConfigError, GridError, NormalizationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
