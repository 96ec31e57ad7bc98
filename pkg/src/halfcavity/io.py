"""Text formats: curve CSVs with a one-line header, and click-stream exports."""
from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

from .correlation import CorrelationCurve
from .mc_oracle import ClickStream, Histogram

HEADER_PREFIX = "# halfcavity"


def format_header(kind: str, name: str, fields: dict[str, str]) -> str:
    """``# halfcavity curve=<name> k=v ...`` with the mandatory keys first."""
    first = ["phase_over_pi", "tau_ns", "contrast", "normalization"]
    parts = [HEADER_PREFIX, f"{kind}={name}"]
    parts += [f"{k}={fields[k]}" for k in first if k in fields]
    parts += [f"{k}={v}" for k, v in fields.items() if k not in first]
    for p in parts[1:]:
        if " " in p:
            raise ValueError(f"header value must not contain spaces: {p!r}")
    return " ".join(parts)


def parse_header(line: str) -> dict[str, str]:
    line = line.strip()
    if not line.startswith(HEADER_PREFIX):
        raise ValueError("not a halfcavity header line")
    out = {}
    for token in line[len(HEADER_PREFIX):].split():
        key, _, value = token.partition("=")
        out[key] = value
    return out


def write_atomic(path: str | Path, text: str) -> Path:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _g9(x: float) -> str:
    return f"{x:.9g}"


def curve_csv(curve: CorrelationCurve, fields: dict[str, str], columns=None) -> str:
    """CSV text: header line then ``T_ns,value`` rows with 9 significant digits."""
    fields = dict(fields, normalization=curve.normalization)
    lines = [format_header("curve", curve.name, fields)]
    for t, v in zip(curve.times, curve.values):
        lines.append(f"{_g9(t * 1e9)},{_g9(v)}")
    return "\n".join(lines) + "\n"


def table_csv(name: str, fields: dict[str, str], columns: list[str], rows) -> str:
    """Generic CSV with the same header convention and a column-name line."""
    lines = [format_header("curve", name, fields), ",".join(columns)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else _g9(v) for v in row))
    return "\n".join(lines) + "\n"


def write_curve(path, curve: CorrelationCurve, fields: dict[str, str]) -> Path:
    return write_atomic(path, curve_csv(curve, fields))


def read_curve(path) -> tuple[dict[str, str], np.ndarray, np.ndarray]:
    """Return (header fields, T in s, values) of a curve CSV."""
    with open(path) as fh:
        header = parse_header(fh.readline())
        rows = [line.split(",") for line in fh if line.strip() and not line[0].isalpha()]
    data = np.array(rows, dtype=float).reshape(-1, len(rows[0]) if rows else 2)
    return header, data[:, 0] * 1e-9, data[:, 1:] if data.shape[1] > 2 else data[:, 1]


def clicks_text(stream: ClickStream, fields: dict[str, str]) -> str:
    """One arrival time per line in ns with 6 decimals."""
    meta = dict(fields, seed=str(stream.seed), duration_s=repr(float(stream.duration)),
                source=stream.source, n_clicks=str(len(stream)))
    lines = [format_header("clicks", stream.source, meta)]
    lines += [f"{t * 1e9:.6f}" for t in stream.times]
    return "\n".join(lines) + "\n"


def read_clicks(path) -> ClickStream:
    with open(path) as fh:
        header = parse_header(fh.readline())
        times = np.array([float(line) for line in fh if line.strip()]) * 1e-9
    seed = header.get("seed")
    return ClickStream(times, float(header["duration_s"]),
                       None if seed in (None, "None") else int(seed), header.get("clicks", "direct"))


def histogram_csv(name: str, hist: Histogram, fields: dict[str, str]) -> str:
    """Bin centres (ns) and pair rate per bin (counts / integration time)."""
    meta = dict(fields, normalization="per-integration-time",
                bin_width_ns=repr(hist.bin_width * 1e9), duration_s=repr(float(hist.duration)))
    lines = [format_header("curve", name, meta)]
    for t, r in zip(hist.centers, hist.rates):
        lines.append(f"{_g9(t * 1e9)},{_g9(r)}")
    return "\n".join(lines) + "\n"
