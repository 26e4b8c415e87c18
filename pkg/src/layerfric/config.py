"""Problem configuration: INI-style schema, validation, round-trip.

Schema (units are SI: m, Pa, N/m^2 for surface loads, N/m^3 for body
forces). Sections and keys:

  [geometry]   width, nx
  [layer.K]    K = 1..n bottom to top: thickness, ny, kind, lambda, mu
               (+ gamma, p-perturbed only)
  [interface.K]  K = 1..n-1, between layer K and K+1: mu, delta
               (delta = 0 selects the plain Coulomb bound)
  [foundation] gn_kind (power | capped), c, m (power) or r0 (capped),
               gt_kind (coulomb | modified-coulomb), mu, delta
               (delta required for modified-coulomb)
  [loads]      f0.K = "fx fy" per layer; f2 = "fx fy" constant traction,
               or f2_table = newline-separated "x fx fy" rows, piecewise
               linear in x and sampled at the top-surface nodes
  [solver]     optional: outer_tol, outer_max_iters, inner_tol,
               inner_max_iters, inner_method, regularization_eps, seed
  [output]     optional: directory, figures (true/false)

Physics keys have no defaults; unknown keys are rejected.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import asdict, dataclass, field

import numpy as np

from .assembly import VIProblem, assemble
from .laws import FrictionLaw, MaterialLaw
from .mesh import LayerSpec, Mesh, build_layered_mesh
from .solver import SolverConfig
from .verification import ProblemFamily


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LayerConfig:
    thickness: float
    ny: int
    material: MaterialLaw


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    figures: bool = True


@dataclass(frozen=True)
class ProblemConfig:
    width: float
    nx: int
    layers: tuple[LayerConfig, ...]
    interfaces: tuple[FrictionLaw, ...]
    foundation: FrictionLaw
    body_forces: tuple[tuple[float, float], ...]
    surface_load: tuple[float, float] | None
    surface_load_table: tuple[tuple[float, float, float], ...] | None
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        if len(self.body_forces) != len(self.layers):
            raise ConfigError("body force count must equal the layer count")
        want = len(self.layers) - 1
        if len(self.interfaces) != want:
            raise ConfigError(f"interface law count must equal {want}")
        if (self.surface_load is None) == (self.surface_load_table is None):
            raise ConfigError("exactly one of f2 and f2_table is required")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


class _Section:
    """Tracks key consumption so leftovers can be reported."""

    def __init__(self, name: str, items: dict[str, str]):
        self.name = name
        self.items = dict(items)

    def take(self, key: str) -> str:
        if key not in self.items:
            raise ConfigError(f"[{self.name}] is missing required key '{key}'")
        return self.items.pop(key)

    def take_optional(self, key: str, default: str | None = None) -> str | None:
        return self.items.pop(key, default)

    def finish(self) -> None:
        if self.items:
            extra = ", ".join(sorted(self.items))
            raise ConfigError(f"[{self.name}] has unknown keys: {extra}")


def _float(section: _Section, key: str) -> float:
    raw = section.take(key)
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"[{section.name}] {key} = {raw!r} is not a number")


def _int(section: _Section, key: str) -> int:
    raw = section.take(key)
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"[{section.name}] {key} = {raw!r} is not an integer")


def _vec2(section: _Section, key: str) -> tuple[float, float]:
    raw = section.take(key)
    parts = raw.split()
    if len(parts) != 2:
        raise ConfigError(f"[{section.name}] {key} must be two numbers, got {raw!r}")
    return (float(parts[0]), float(parts[1]))


def parse_config(text: str) -> ProblemConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc

    names = set(parser.sections())

    def section(name: str) -> _Section:
        if name not in names:
            raise ConfigError(f"missing required section [{name}]")
        names.discard(name)
        return _Section(name, dict(parser[name]))

    geo = section("geometry")
    width = _float(geo, "width")
    nx = _int(geo, "nx")
    geo.finish()

    layer_names = sorted(
        (n for n in names if n.startswith("layer.")),
        key=lambda n: int(n.split(".", 1)[1]),
    )
    if not layer_names:
        raise ConfigError("at least one [layer.K] section is required")
    expect = [f"layer.{k}" for k in range(1, len(layer_names) + 1)]
    if layer_names != expect:
        raise ConfigError(f"layer sections must be numbered 1..{len(layer_names)}")
    layers = []
    for name in layer_names:
        sec = section(name)
        kind = sec.take("kind")
        lam = _float(sec, "lambda")
        mu = _float(sec, "mu")
        gamma = 0.0
        if kind == "p-perturbed":
            gamma = _float(sec, "gamma")
        try:
            material = MaterialLaw(kind, lame_lambda=lam, lame_mu=mu, gamma=gamma)
        except ValueError as exc:
            raise ConfigError(f"[{name}]: {exc}") from exc
        thickness = _float(sec, "thickness")
        ny = _int(sec, "ny")
        sec.finish()
        layers.append(LayerConfig(thickness=thickness, ny=ny, material=material))

    iface_names = sorted(
        (n for n in names if n.startswith("interface.")),
        key=lambda n: int(n.split(".", 1)[1]),
    )
    want = len(layers) - 1
    if len(iface_names) != want:
        raise ConfigError(f"interface law count must equal {want}")
    expect = [f"interface.{k}" for k in range(1, want + 1)]
    if iface_names != expect:
        raise ConfigError(f"interface sections must be numbered 1..{want}")
    interfaces = []
    for name in iface_names:
        sec = section(name)
        mu = _float(sec, "mu")
        delta = _float(sec, "delta")
        sec.finish()
        try:
            interfaces.append(FrictionLaw.interface(mu=mu, delta=delta))
        except ValueError as exc:
            raise ConfigError(f"[{name}]: {exc}") from exc

    fnd = section("foundation")
    gn_kind = fnd.take("gn_kind")
    c = _float(fnd, "c")
    m_exp = _float(fnd, "m") if gn_kind == "power" else 1.0
    r0 = _float(fnd, "r0") if gn_kind == "capped" else 0.0
    gt_kind = fnd.take("gt_kind")
    mu = _float(fnd, "mu")
    delta = _float(fnd, "delta") if gt_kind == "modified-coulomb" else 0.0
    fnd.finish()
    try:
        foundation = FrictionLaw(
            gN_kind=gn_kind, c=c, m_exp=m_exp, r0=r0,
            gT_kind=gt_kind, mu=mu, delta=delta,
        )
    except ValueError as exc:
        raise ConfigError(f"[foundation]: {exc}") from exc

    loads = section("loads")
    body_forces = tuple(
        _vec2(loads, f"f0.{k}") for k in range(1, len(layers) + 1)
    )
    f2_raw = loads.take_optional("f2")
    table_raw = loads.take_optional("f2_table")
    loads.finish()
    if (f2_raw is None) == (table_raw is None):
        raise ConfigError("[loads] needs exactly one of f2 and f2_table")
    surface_load = None
    surface_load_table = None
    if f2_raw is not None:
        parts = f2_raw.split()
        if len(parts) != 2:
            raise ConfigError(f"[loads] f2 must be two numbers, got {f2_raw!r}")
        surface_load = (float(parts[0]), float(parts[1]))
    else:
        rows = []
        for line in table_raw.splitlines():
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ConfigError(
                    f"[loads] f2_table rows must be 'x fx fy', got {line!r}"
                )
            rows.append((float(parts[0]), float(parts[1]), float(parts[2])))
        if len(rows) < 2:
            raise ConfigError("[loads] f2_table needs at least two rows")
        xs = [r[0] for r in rows]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ConfigError("[loads] f2_table x values must be strictly increasing")
        if xs[0] != 0.0 or xs[-1] != width:
            raise ConfigError("[loads] f2_table must cover x = 0 .. width")
        surface_load_table = tuple(rows)

    solver_kwargs = {}
    if "solver" in names:
        sec = section("solver")
        for key, conv in (
            ("outer_tol", float), ("outer_max_iters", int),
            ("inner_tol", float), ("inner_max_iters", int),
            ("inner_method", str), ("regularization_eps", float), ("seed", int),
        ):
            raw = sec.take_optional(key)
            if raw is not None:
                try:
                    solver_kwargs[key] = conv(raw)
                except ValueError:
                    raise ConfigError(f"[solver] {key} = {raw!r} is invalid")
        sec.finish()
    try:
        solver = SolverConfig(**solver_kwargs)
    except ValueError as exc:
        raise ConfigError(f"[solver]: {exc}") from exc

    output = OutputConfig()
    if "output" in names:
        sec = section("output")
        directory = sec.take_optional("directory", output.directory)
        figures_raw = sec.take_optional("figures", "true" if output.figures else "false")
        sec.finish()
        if figures_raw.lower() not in ("true", "false"):
            raise ConfigError(f"[output] figures must be true or false")
        output = OutputConfig(directory=directory, figures=figures_raw.lower() == "true")

    if names:
        raise ConfigError(f"unknown sections: {', '.join(sorted(names))}")

    try:
        return ProblemConfig(
            width=width, nx=nx, layers=tuple(layers),
            interfaces=tuple(interfaces), foundation=foundation,
            body_forces=body_forces, surface_load=surface_load,
            surface_load_table=surface_load_table, solver=solver, output=output,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def serialize_config(cfg: ProblemConfig) -> str:
    out = io.StringIO()
    w = out.write
    w("[geometry]\n")
    w(f"width = {_fmt(cfg.width)}\n")
    w(f"nx = {cfg.nx}\n\n")
    for k, layer in enumerate(cfg.layers, start=1):
        w(f"[layer.{k}]\n")
        w(f"thickness = {_fmt(layer.thickness)}\n")
        w(f"ny = {layer.ny}\n")
        w(f"kind = {layer.material.kind}\n")
        w(f"lambda = {_fmt(layer.material.lame_lambda)}\n")
        w(f"mu = {_fmt(layer.material.lame_mu)}\n")
        if layer.material.kind == "p-perturbed":
            w(f"gamma = {_fmt(layer.material.gamma)}\n")
        w("\n")
    for k, law in enumerate(cfg.interfaces, start=1):
        w(f"[interface.{k}]\n")
        w(f"mu = {_fmt(law.mu)}\n")
        w(f"delta = {_fmt(law.delta)}\n\n")
    w("[foundation]\n")
    w(f"gn_kind = {cfg.foundation.gN_kind}\n")
    w(f"c = {_fmt(cfg.foundation.c)}\n")
    if cfg.foundation.gN_kind == "power":
        w(f"m = {_fmt(cfg.foundation.m_exp)}\n")
    else:
        w(f"r0 = {_fmt(cfg.foundation.r0)}\n")
    w(f"gt_kind = {cfg.foundation.gT_kind}\n")
    w(f"mu = {_fmt(cfg.foundation.mu)}\n")
    if cfg.foundation.gT_kind == "modified-coulomb":
        w(f"delta = {_fmt(cfg.foundation.delta)}\n")
    w("\n[loads]\n")
    for k, f0 in enumerate(cfg.body_forces, start=1):
        w(f"f0.{k} = {_fmt(f0[0])} {_fmt(f0[1])}\n")
    if cfg.surface_load is not None:
        w(f"f2 = {_fmt(cfg.surface_load[0])} {_fmt(cfg.surface_load[1])}\n")
    else:
        w("f2_table =\n")
        for x, fx, fy in cfg.surface_load_table:
            w(f"    {_fmt(x)} {_fmt(fx)} {_fmt(fy)}\n")
    w("\n[solver]\n")
    s = cfg.solver
    w(f"outer_tol = {_fmt(s.outer_tol)}\n")
    w(f"outer_max_iters = {s.outer_max_iters}\n")
    w(f"inner_tol = {_fmt(s.inner_tol)}\n")
    w(f"inner_max_iters = {s.inner_max_iters}\n")
    w(f"inner_method = {s.inner_method}\n")
    w(f"regularization_eps = {_fmt(s.regularization_eps)}\n")
    w(f"seed = {s.seed}\n")
    w("\n[output]\n")
    w(f"directory = {cfg.output.directory}\n")
    w(f"figures = {'true' if cfg.output.figures else 'false'}\n")
    return out.getvalue()


def build_mesh(cfg: ProblemConfig) -> Mesh:
    specs = [
        LayerSpec(width=cfg.width, thickness=layer.thickness, ny=layer.ny)
        for layer in cfg.layers
    ]
    return build_layered_mesh(specs, nx=cfg.nx)


def surface_load_values(cfg: ProblemConfig, mesh: Mesh) -> np.ndarray:
    """Traction at the top-surface nodes of the given mesh."""
    top = mesh.top_row(mesh.n_layers - 1)
    if cfg.surface_load is not None:
        return np.tile(np.asarray(cfg.surface_load), (len(top), 1))
    table = np.asarray(cfg.surface_load_table)
    xs = mesh.nodes[top, 0]
    fx = np.interp(xs, table[:, 0], table[:, 1])
    fy = np.interp(xs, table[:, 0], table[:, 2])
    return np.column_stack([fx, fy])


def build_problem(cfg: ProblemConfig, mesh: Mesh | None = None) -> VIProblem:
    if mesh is None:
        mesh = build_mesh(cfg)
    return assemble(
        mesh,
        [layer.material for layer in cfg.layers],
        f0=[np.asarray(f) for f in cfg.body_forces],
        f2=surface_load_values(cfg, mesh),
        interface_laws=list(cfg.interfaces),
        foundation_law=cfg.foundation,
    )


def make_family(cfg: ProblemConfig, levels: int) -> ProblemFamily:
    """Nested-refinement family of the configured physics.

    The base mesh is the configured geometry coarsened so that the
    finest study level roughly matches the configured resolution.
    """
    factor = 2 ** (levels - 1)
    nx = max(1, cfg.nx // factor)
    specs = [
        LayerSpec(
            width=cfg.width, thickness=layer.thickness,
            ny=max(1, layer.ny // factor),
        )
        for layer in cfg.layers
    ]
    base = build_layered_mesh(specs, nx=nx)
    return ProblemFamily(
        base_mesh=base,
        build=lambda mesh: build_problem(cfg, mesh),
        description=f"configured physics, base {nx} columns",
    )
