"""Diagnostic figures rendered to files for batch runs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .assembly import DisplacementField
from .mesh import Mesh
from .solver import SolverReport
from .verification import ConvergenceTable


def fig_convergence(path: str | Path, table: ConvergenceTable) -> None:
    """Log-log energy-norm error against mesh size, with the fitted rate."""
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    h = np.asarray(table.h)
    err = np.asarray(table.errors)
    ax.loglog(h, err, "o-", label="error vs reference")
    if len(h) >= 2 and np.isfinite(table.slope):
        guide = err[0] * (h / h[0]) ** table.slope
        ax.loglog(h, guide, "k--", alpha=0.5,
                  label=f"fitted rate {table.slope:.2f}")
    ax.set_xlabel("mesh size h")
    ax.set_ylabel("energy-norm error")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def fig_contraction(path: str | Path, report: SolverReport) -> None:
    """Outer-iteration update norms and successive ratios."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.0, 3.5))
    steps = np.arange(1, len(report.diff_norms) + 1)
    ax1.semilogy(steps, report.diff_norms, "o-")
    ax1.set_xlabel("outer iteration")
    ax1.set_ylabel("update norm")
    ax1.grid(True, alpha=0.3)
    if report.contraction_ratios:
        rsteps = np.arange(2, len(report.contraction_ratios) + 2)
        ax2.plot(rsteps, report.contraction_ratios, "s-")
        ax2.axhline(1.0, color="k", linestyle="--", alpha=0.5)
    ax2.set_xlabel("outer iteration")
    ax2.set_ylabel("successive ratio")
    ax2.grid(True, alpha=0.3)
    fig.suptitle("fixed-point iteration" + ("" if report.converged else " (not converged)"))
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def fig_deformed(
    path: str | Path, mesh: Mesh, u: DisplacementField, scale: float | None = None
) -> None:
    """Deformed mesh over the undeformed outline, colored by layer."""
    vecs = u.as_vectors()
    if scale is None:
        umax = float(np.abs(vecs).max())
        span = max(mesh.width, sum(s.thickness for s in mesh.layers))
        scale = 1.0 if umax == 0 else 0.05 * span / umax
    moved = mesh.nodes + scale * vecs
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    cmap = plt.get_cmap("tab10")
    for i in range(mesh.n_layers):
        tris = mesh.triangles[mesh.tri_layer == i]
        ax.triplot(mesh.nodes[:, 0], mesh.nodes[:, 1], tris,
                   color="0.8", linewidth=0.5)
        ax.triplot(moved[:, 0], moved[:, 1], tris,
                   color=cmap(i % 10), linewidth=0.7)
    ax.axhline(0.0, color="k", linewidth=1.2)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(f"deformed mesh (displacements x {scale:.3g})")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
