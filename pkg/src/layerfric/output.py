"""File emission: VTK fields, CSV tables, gnuplot data.

All floats are written with repr precision (%.17g) so rereading a file
reproduces the in-memory value bit for bit. Text files use line feeds
and the C locale decimal point regardless of the host locale.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import numpy as np

from .mesh import Mesh
from .solver import SolverReport
from .verification import ConvergenceTable, KktReport


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_vtk(
    path: str | Path,
    mesh: Mesh,
    point_vectors: dict[str, np.ndarray] | None = None,
    cell_tensors: dict[str, np.ndarray] | None = None,
    title: str = "layered stack",
) -> None:
    """Legacy ASCII unstructured-grid file.

    point_vectors maps name -> (n_nodes, 2) arrays; cell_tensors maps
    name -> (n_triangles, 3) rows (xx, yy, xy), emitted as symmetric
    3x3 tensors with zero out-of-plane entries.
    """
    out = io.StringIO()
    out.write("# vtk DataFile Version 2.0\n")
    out.write(f"{title}\n")
    out.write("ASCII\n")
    out.write("DATASET UNSTRUCTURED_GRID\n")
    out.write(f"POINTS {mesh.n_nodes} double\n")
    for x, y in mesh.nodes:
        out.write(f"{_fmt(x)} {_fmt(y)} 0\n")
    out.write(f"CELLS {mesh.n_triangles} {4 * mesh.n_triangles}\n")
    for a, b, c in mesh.triangles:
        out.write(f"3 {a} {b} {c}\n")
    out.write(f"CELL_TYPES {mesh.n_triangles}\n")
    for _ in range(mesh.n_triangles):
        out.write("5\n")
    if point_vectors:
        out.write(f"POINT_DATA {mesh.n_nodes}\n")
        for name, vecs in point_vectors.items():
            vecs = np.asarray(vecs, dtype=float).reshape(mesh.n_nodes, 2)
            out.write(f"VECTORS {name} double\n")
            for vx, vy in vecs:
                out.write(f"{_fmt(vx)} {_fmt(vy)} 0\n")
    if cell_tensors:
        out.write(f"CELL_DATA {mesh.n_triangles}\n")
        for name, rows in cell_tensors.items():
            rows = np.asarray(rows, dtype=float).reshape(mesh.n_triangles, 3)
            out.write(f"TENSORS {name} double\n")
            for xx, yy, xy in rows:
                out.write(f"{_fmt(xx)} {_fmt(xy)} 0\n")
                out.write(f"{_fmt(xy)} {_fmt(yy)} 0\n")
                out.write("0 0 0\n")
    Path(path).write_text(out.getvalue(), newline="\n")


def write_csv(path: str | Path, header: list[str], rows: list[list]) -> None:
    """Generic CSV: header row, %.17g floats, LF line endings."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(
            [_fmt(v) if isinstance(v, float) else str(v) for v in row]
        )
    Path(path).write_text(out.getvalue(), newline="\n")


CONVERGENCE_HEADER = [
    "level", "h", "dofs", "error", "ratio", "interp_error", "residual",
    "slope", "reference", "aborted",
]


def write_convergence_csv(path: str | Path, table: ConvergenceTable) -> None:
    rows = []
    for k in range(len(table.h)):
        rows.append([
            str(k + 1),
            _fmt(table.h[k]),
            str(table.dofs[k]),
            _fmt(table.errors[k]),
            _fmt(table.ratios[k]) if k < len(table.ratios) else "",
            _fmt(table.interp_errors[k]) if k < len(table.interp_errors) else "",
            _fmt(table.residuals[k]) if k < len(table.residuals) else "",
            _fmt(table.slope) if k == 0 else "",
            table.reference if k == 0 else "",
            ("true" if table.aborted else "false") if k == 0 else "",
        ])
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CONVERGENCE_HEADER)
    writer.writerows(rows)
    Path(path).write_text(out.getvalue(), newline="\n")


def read_convergence_csv(path: str | Path) -> ConvergenceTable:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CONVERGENCE_HEADER:
            raise ValueError(f"not a convergence table: header {header}")
        rows = list(reader)
    if not rows:
        raise ValueError("convergence table has no rows")
    return ConvergenceTable(
        h=[float(r[1]) for r in rows],
        dofs=[int(r[2]) for r in rows],
        errors=[float(r[3]) for r in rows],
        ratios=[float(r[4]) for r in rows if r[4] != ""],
        slope=float(rows[0][7]),
        reference=rows[0][8],
        interp_errors=[float(r[5]) for r in rows if r[5] != ""],
        residuals=[float(r[6]) for r in rows if r[6] != ""],
        aborted=rows[0][9] == "true",
    )


def write_gnuplot_dat(path: str | Path, table: ConvergenceTable) -> None:
    """Whitespace-column data file: plot "..." using 1:3 with lines."""
    lines = ["# h dofs error ratio"]
    for k in range(len(table.h)):
        ratio = table.ratios[k] if k < len(table.ratios) else math.nan
        lines.append(
            f"{_fmt(table.h[k])} {table.dofs[k]} "
            f"{_fmt(table.errors[k])} {_fmt(ratio)}"
        )
    lines.append(f"# fitted slope {_fmt(table.slope)}")
    lines.append(f"# reference {table.reference}")
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


def write_kkt_csv(path: str | Path, report: KktReport) -> None:
    write_csv(path, ["check", "max_defect"], [[n, v] for n, v in report.entries()])


def read_kkt_csv(path: str | Path) -> KktReport:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["check", "max_defect"]:
            raise ValueError(f"not a kkt table: header {header}")
        data = {name: float(value) for name, value in reader}
    return KktReport(**data)


def write_report_csv(path: str | Path, report: SolverReport) -> None:
    """Outer-iteration history; wall time is run noise and stays out."""
    rows = []
    for k, d in enumerate(report.diff_norms):
        ratio = report.contraction_ratios[k] if k < len(report.contraction_ratios) else math.nan
        inner = report.inner_iters[k] if k < len(report.inner_iters) else 0
        rows.append([str(k + 1), _fmt(d), _fmt(ratio), str(inner)])
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["outer_iter", "update_norm", "contraction_ratio", "inner_iters"])
    writer.writerows(rows)
    writer.writerow([])
    writer.writerow(["converged", "true" if report.converged else "false"])
    writer.writerow(["diagnostic", report.diagnostic])
    Path(path).write_text(out.getvalue(), newline="\n")
