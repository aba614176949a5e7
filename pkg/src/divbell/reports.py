"""CSV emission and the pass/fail summary shared by all CLI commands."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from .errors import ConfigError


def fmt(x) -> str:
    """Decimal with 17 significant digits (round-trips float64)."""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int,)):
        return str(x)
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def write_csv(path: str, header: list[str], rows: list[tuple]) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(fmt(x) for x in row) + "\n")
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from exc


@dataclass
class CheckResult:
    name: str
    margin: float
    passed: bool
    note: str = ""


@dataclass
class Summary:
    checks: list[CheckResult] = field(default_factory=list)

    def add(self, name: str, margin: float, passed: bool, note: str = "") -> None:
        self.checks.append(CheckResult(name, float(margin), bool(passed), note))

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def render(self) -> str:
        lines = []
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            note = f"  [{c.note}]" if c.note else ""
            lines.append(f"{status}  {c.name:<40s} margin={fmt(c.margin)}{note}")
        lines.append(f"{'OK' if self.all_passed else 'FAILED'}: "
                     f"{sum(c.passed for c in self.checks)}/{len(self.checks)} checks passed")
        return "\n".join(lines) + "\n"

    def write(self, outdir: str, name: str = "summary.txt") -> str:
        path = os.path.join(outdir, name)
        try:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(self.render())
        except OSError as exc:
            raise ConfigError(f"cannot write {path}: {exc}") from exc
        return path


def ensure_outdir(path: str) -> str:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {path}: {exc}") from exc
    if not os.access(path, os.W_OK):
        raise ConfigError(f"output directory {path} is not writable")
    return path


def emit_report(summary: Summary, tables: dict[str, tuple[list[str], list[tuple]]],
                outdir: str) -> list[str]:
    """Write every named CSV table plus the human-readable summary.

    ``tables`` maps a file stem to (header, rows).  Returns the written
    paths; an empty table set still produces the summary file.
    """
    ensure_outdir(outdir)
    paths = []
    for stem in sorted(tables):
        header, rows = tables[stem]
        path = os.path.join(outdir, stem + ".csv")
        write_csv(path, header, rows)
        paths.append(path)
    paths.append(summary.write(outdir))
    return paths


def gridfunction_table(gf) -> tuple[list[str], list[tuple]]:
    """Node coordinates plus real and imaginary columns."""
    dim = gf.grid.dim
    header = ["x", "y", "z"][:dim] + ["re", "im"]
    coords = [c.ravel() for c in gf.grid.node_coords()]
    flat = gf.flat
    rows = [tuple(c[j] for c in coords) + (flat[j].real, flat[j].imag)
            for j in range(gf.grid.n_nodes)]
    return header, rows


def trajectory_table(traj) -> tuple[list[str], list[tuple]]:
    """Snapshot rows (t, coordinates, re, im)."""
    dim = traj.grid.dim
    header = ["t"] + ["x", "y", "z"][:dim] + ["re", "im"]
    coords = [c.ravel() for c in traj.grid.node_coords()]
    rows = []
    for k, t in enumerate(traj.times):
        vals = traj.values[k]
        for j in range(vals.size):
            rows.append((t,) + tuple(c[j] for c in coords)
                        + (vals[j].real, vals[j].imag))
    return header, rows


def solver_stats_table(traj) -> tuple[list[str], list[tuple]]:
    header = ["step", "method", "iterations", "residual"]
    rows = [(k + 1, st.method, st.iterations, st.residual)
            for k, st in enumerate(traj.stats)]
    return header, rows
