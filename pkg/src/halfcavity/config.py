"""Run configuration: TOML loading, validation and flat header round-trip.

Interface units are ns, MHz (angular frequencies given as f = omega / 2 pi),
mT and cm; everything is converted to SI (rad/s, s, T) when models are built.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .atom import AtomModel, LaserField, Transition, TwoLevelAtom, build_model, linear_polarization
from .correlation import MirrorConfig, tau_from_length
from .errors import ConfigError

MHZ = 2 * math.pi * 1e6
NS = 1e-9

DEFAULT_CONFIG = "default.toml"


def default_config_path() -> Path:
    return Path(str(resources.files("halfcavity") / "data" / DEFAULT_CONFIG))


@dataclass(frozen=True)
class LaserSettings:
    rabi_MHz: float
    detuning_MHz: float
    # either a linear polarization angle to B, or explicit spherical components
    polarization_deg: float | None = 90.0
    polarization: tuple[complex, complex, complex] | None = None

    def spherical(self):
        if self.polarization is not None:
            return self.polarization
        return tuple(linear_polarization(math.radians(self.polarization_deg)))


@dataclass(frozen=True)
class AtomSettings:
    b_field_mT: float
    gamma_green_MHz: float
    gamma_red_MHz: float
    green: LaserSettings
    red: LaserSettings


@dataclass(frozen=True)
class MirrorSettings:
    phase_over_pi: float
    tau_ns: float | None = None
    L_cm: float | None = None
    contrast: float = 0.5
    epsilon: float = 0.015
    fringe_visibility: float = 1.0

    @property
    def tau(self) -> float:
        if self.tau_ns is not None:
            return self.tau_ns * NS
        return tau_from_length(self.L_cm * 1e-2)


@dataclass(frozen=True)
class GridSettings:
    t_max_ns: float = 40.0
    dt_ns: float = 0.05


@dataclass(frozen=True)
class OracleSettings:
    duration_s: float = 0.02
    seed: int = 1
    dark_rate: float = 0.0
    p_reflect: float = 0.5
    bin_width_ns: float = 0.5
    max_lag_ns: float = 40.0
    two_level: bool = False


@dataclass(frozen=True)
class ScanSettings:
    n_points: int = 11
    phase_min_over_pi: float = 0.0
    phase_max_over_pi: float = 1.0


@dataclass(frozen=True)
class RunConfig:
    atom: AtomSettings
    mirror: MirrorSettings
    grid: GridSettings = field(default_factory=GridSettings)
    oracle: OracleSettings = field(default_factory=OracleSettings)
    scan: ScanSettings = field(default_factory=ScanSettings)
    amplitude_mode: str = "population_sqrt"

    def model(self) -> AtomModel:
        a = self.atom
        lasers = [
            LaserField(Transition.GREEN, a.green.detuning_MHz * MHZ, a.green.rabi_MHz * MHZ, a.green.spherical()),
            LaserField(Transition.RED, a.red.detuning_MHz * MHZ, a.red.rabi_MHz * MHZ, a.red.spherical()),
        ]
        return build_model(a.b_field_mT * 1e-3, lasers, a.gamma_green_MHz * MHZ, a.gamma_red_MHz * MHZ)

    def two_level(self) -> TwoLevelAtom:
        a = self.atom
        return TwoLevelAtom(a.green.rabi_MHz * MHZ, a.green.detuning_MHz * MHZ, a.gamma_green_MHz * MHZ)

    def mirror_config(self, phase_over_pi: float | None = None) -> MirrorConfig:
        m = self.mirror
        phi = m.phase_over_pi if phase_over_pi is None else phase_over_pi
        return MirrorConfig(m.tau, phi * math.pi, m.epsilon, m.contrast)

    def with_phase(self, phase_over_pi: float) -> RunConfig:
        return replace(self, mirror=replace(self.mirror, phase_over_pi=phase_over_pi))

    # -- flat key=value form used in CSV headers

    def header_fields(self) -> dict[str, str]:
        a, m, g = self.atom, self.mirror, self.grid
        out = {
            "phase_over_pi": _num(m.phase_over_pi),
            "tau_ns": _num(m.tau / NS),
            "contrast": _num(m.contrast),
            "epsilon": _num(m.epsilon),
            "b_field_mT": _num(a.b_field_mT),
            "gamma_green_MHz": _num(a.gamma_green_MHz),
            "gamma_red_MHz": _num(a.gamma_red_MHz),
        }
        for name, las in (("green", a.green), ("red", a.red)):
            out[f"{name}.rabi_MHz"] = _num(las.rabi_MHz)
            out[f"{name}.detuning_MHz"] = _num(las.detuning_MHz)
            if las.polarization is not None:
                out[f"{name}.polarization"] = ",".join(f"{_num(c.real)}:{_num(c.imag)}" for c in las.polarization)
            else:
                out[f"{name}.polarization_deg"] = _num(las.polarization_deg)
        out["t_max_ns"] = _num(g.t_max_ns)
        out["dt_ns"] = _num(g.dt_ns)
        out["amplitude_mode"] = self.amplitude_mode
        return out

    @classmethod
    def from_header_fields(cls, flat: dict[str, str]) -> RunConfig:
        def laser(name):
            pol = flat.get(f"{name}.polarization")
            sph = None
            if pol is not None:
                sph = tuple(complex(float(re), float(im)) for re, im in (p.split(":") for p in pol.split(",")))
            deg = flat.get(f"{name}.polarization_deg")
            return LaserSettings(float(flat[f"{name}.rabi_MHz"]), float(flat[f"{name}.detuning_MHz"]),
                                 None if deg is None else float(deg), sph)

        try:
            atom = AtomSettings(float(flat["b_field_mT"]), float(flat["gamma_green_MHz"]),
                                float(flat["gamma_red_MHz"]), laser("green"), laser("red"))
            mirror = MirrorSettings(float(flat["phase_over_pi"]), tau_ns=float(flat["tau_ns"]),
                                    contrast=float(flat["contrast"]), epsilon=float(flat["epsilon"]))
            grid = GridSettings(float(flat["t_max_ns"]), float(flat["dt_ns"]))
        except KeyError as exc:
            raise ConfigError(f"header lacks parameter {exc.args[0]}") from None
        cfg = cls(atom, mirror, grid, amplitude_mode=flat.get("amplitude_mode", "population_sqrt"))
        validate(cfg)
        return cfg


def _num(x: float) -> str:
    # repr round-trips a float exactly
    return repr(float(x))


# ---------------------------------------------------------------- parsing

_SECTION_KEYS = {
    "": {"b_field_mT", "gamma_green_MHz", "gamma_red_MHz", "amplitude_mode",
         "green", "red", "mirror", "grid", "oracle", "scan"},
    "laser": {"rabi_MHz", "detuning_MHz", "polarization", "polarization_deg"},
    "mirror": {f.name for f in fields(MirrorSettings)},
    "grid": {f.name for f in fields(GridSettings)},
    "oracle": {f.name for f in fields(OracleSettings)},
    "scan": {f.name for f in fields(ScanSettings)},
}


def _check_keys(table: dict, allowed: set, where: str, problems: list[str]) -> None:
    for key in table:
        if key not in allowed:
            problems.append(f"{where}: unknown key {key!r}")


def _get(table: dict, key: str, where: str, problems: list[str], kind=float, default=None, required=False):
    if key not in table:
        if required:
            problems.append(f"{where}.{key}: missing")
        return default
    value = table[key]
    try:
        if kind is bool:
            if not isinstance(value, bool):
                raise TypeError
            return value
        if kind is int:
            if isinstance(value, bool) or int(value) != value:
                raise TypeError
            return int(value)
        if kind is float:
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        return kind(value)
    except (TypeError, ValueError):
        problems.append(f"{where}.{key}: expected {kind.__name__}, got {value!r}")
        return default


def _parse_polarization(value: Any, where: str, problems: list[str]):
    try:
        comps = []
        for c in value:
            if isinstance(c, (list, tuple)):
                re, im = c
                comps.append(complex(float(re), float(im)))
            else:
                comps.append(complex(float(c), 0.0))
        if len(comps) != 3:
            raise ValueError
        return tuple(comps)
    except (TypeError, ValueError):
        problems.append(f"{where}.polarization: expected three spherical components "
                        "(q=-1,0,+1), each a number or [re, im]")
        return None


def _laser(table: Any, where: str, problems: list[str]) -> LaserSettings | None:
    if not isinstance(table, dict):
        problems.append(f"{where}: missing section")
        return None
    _check_keys(table, _SECTION_KEYS["laser"], where, problems)
    rabi = _get(table, "rabi_MHz", where, problems, required=True)
    det = _get(table, "detuning_MHz", where, problems, required=True)
    if "polarization" in table and "polarization_deg" in table:
        problems.append(f"{where}: give either polarization or polarization_deg, not both")
    pol = _parse_polarization(table["polarization"], where, problems) if "polarization" in table else None
    deg = _get(table, "polarization_deg", where, problems, default=None if pol else 90.0)
    if rabi is None or det is None:
        return None
    return LaserSettings(rabi, det, deg, pol)


def parse_config(data: dict) -> RunConfig:
    """Build a validated RunConfig from a parsed TOML document."""
    problems: list[str] = []
    _check_keys(data, _SECTION_KEYS[""], "config", problems)
    b = _get(data, "b_field_mT", "config", problems, required=True)
    gg = _get(data, "gamma_green_MHz", "config", problems, required=True)
    gr = _get(data, "gamma_red_MHz", "config", problems, required=True)
    green = _laser(data.get("green"), "green", problems)
    red = _laser(data.get("red"), "red", problems)

    mt = data.get("mirror", {})
    _check_keys(mt, _SECTION_KEYS["mirror"], "mirror", problems)
    mirror_kw = {k: _get(mt, k, "mirror", problems) for k in ("tau_ns", "L_cm")}
    mirror_kw["phase_over_pi"] = _get(mt, "phase_over_pi", "mirror", problems, required=True)
    for k in ("contrast", "epsilon", "fringe_visibility"):
        if k in mt:
            mirror_kw[k] = _get(mt, k, "mirror", problems)

    def section(name, cls):
        table = data.get(name, {})
        _check_keys(table, _SECTION_KEYS[name], name, problems)
        kw = {}
        for f in fields(cls):
            if f.name in table:
                kind = {"int": int, "bool": bool}.get(str(f.type), float)
                kw[f.name] = _get(table, f.name, name, problems, kind=kind)
        return kw

    grid_kw, oracle_kw, scan_kw = section("grid", GridSettings), section("oracle", OracleSettings), section("scan", ScanSettings)
    mode = data.get("amplitude_mode", "population_sqrt")
    if problems:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(problems))
    cfg = RunConfig(
        AtomSettings(b, gg, gr, green, red),
        MirrorSettings(**mirror_kw),
        GridSettings(**grid_kw),
        OracleSettings(**oracle_kw),
        ScanSettings(**scan_kw),
        mode,
    )
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    problems = []
    m, g, o, s = cfg.mirror, cfg.grid, cfg.oracle, cfg.scan
    if (m.tau_ns is None) == (m.L_cm is None):
        problems.append("mirror: exactly one of tau_ns or L_cm is required")
    elif (m.tau_ns is not None and m.tau_ns < 0) or (m.L_cm is not None and m.L_cm < 0):
        problems.append("mirror: tau_ns / L_cm must be >= 0")
    for name, value in (("contrast", m.contrast), ("epsilon", m.epsilon), ("fringe_visibility", m.fringe_visibility)):
        if not 0 <= value <= 1:
            problems.append(f"mirror.{name}: must lie in [0, 1], got {value}")
    if not (g.dt_ns > 0 and g.t_max_ns > 0):
        problems.append("grid: t_max_ns and dt_ns must be positive")
    elif not problems and m.tau > 0 and g.dt_ns > 0.1 * m.tau / NS * (1 + 1e-12):
        problems.append(f"grid.dt_ns={g.dt_ns} must not exceed 0.1 * tau_ns = {0.1 * m.tau / NS:.6g} to resolve the kink")
    if cfg.atom.gamma_green_MHz <= 0 or cfg.atom.gamma_red_MHz <= 0:
        problems.append("gamma_green_MHz and gamma_red_MHz must be positive")
    if o.duration_s <= 0 or o.bin_width_ns <= 0 or o.max_lag_ns <= 0:
        problems.append("oracle: duration_s, bin_width_ns and max_lag_ns must be positive")
    elif o.max_lag_ns * NS > o.duration_s / 10:
        problems.append("oracle: max_lag_ns must not exceed a tenth of duration_s")
    if o.dark_rate < 0:
        problems.append("oracle.dark_rate must be >= 0")
    if not 0 <= o.p_reflect <= 1:
        problems.append("oracle.p_reflect must lie in [0, 1]")
    if s.n_points < 2:
        problems.append("scan.n_points must be >= 2")
    if cfg.amplitude_mode not in ("population_sqrt", "two_level_amplitude"):
        problems.append(f"amplitude_mode: unknown mode {cfg.amplitude_mode!r}")
    if problems:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(problems))
    # surface laser/polarization errors as config errors too
    cfg.model()


def load_config(path: str | Path | None = None) -> RunConfig:
    path = default_config_path() if path is None else Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: not valid TOML: {exc}") from None
    return parse_config(data)
