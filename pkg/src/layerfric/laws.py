"""Material and contact laws.

Two material kinds: plane-strain isotropic Hooke elasticity, and a
bounded nonlinear perturbation of it that scales the shear response by
1 + gamma/(1 + |eps|). The perturbation keeps the stress map Lipschitz
and strongly monotone for 0 <= gamma < 1, so the solver theory applies
unchanged while the operator is genuinely nonlinear.

Contact at the foundation is governed by a normal-compliance function
(pressure as a function of penetration depth) and a friction-bound
function (tangential traction threshold as a function of contact
pressure). Interlayer interfaces use only the friction bound; their
normal response is the nonpenetration constraint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MATERIAL_KINDS = ("linear-isotropic", "p-perturbed")
COMPLIANCE_KINDS = ("power", "capped")
FRICTION_KINDS = ("coulomb", "modified-coulomb")


@dataclass(frozen=True)
class MaterialLaw:
    """Stress-strain law of one layer (plane strain, Lame parameters)."""

    kind: str
    lame_lambda: float
    lame_mu: float
    gamma: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in MATERIAL_KINDS:
            raise ValueError(f"unknown material kind {self.kind!r}")
        if self.lame_mu <= 0:
            raise ValueError(f"lame_mu must be positive, got {self.lame_mu}")
        if self.lame_lambda < 0:
            raise ValueError(f"lame_lambda must be >= 0, got {self.lame_lambda}")
        if self.kind == "p-perturbed" and not 0 <= self.gamma < 1:
            # gamma < 1 keeps the stress map strongly monotone
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")

    @property
    def is_linear(self) -> bool:
        return self.kind == "linear-isotropic" or self.gamma == 0.0


@dataclass(frozen=True)
class FrictionLaw:
    """Contact response of one surface.

    gN_kind selects the normal-compliance shape: ``power`` is
    c * max(0, r)**m_exp, ``capped`` is c*r clipped to [0, c*r0].
    gT_kind selects the friction bound: ``coulomb`` is mu*s,
    ``modified-coulomb`` is mu*s*max(0, 1 - delta*s), which releases the
    surface entirely once the contact pressure reaches 1/delta.
    """

    gN_kind: str = "power"
    c: float = 0.0
    m_exp: float = 1.0
    r0: float = 0.0
    gT_kind: str = "coulomb"
    mu: float = 0.0
    delta: float = 0.0

    def __post_init__(self) -> None:
        if self.gN_kind not in COMPLIANCE_KINDS:
            raise ValueError(f"unknown normal-compliance kind {self.gN_kind!r}")
        if self.gT_kind not in FRICTION_KINDS:
            raise ValueError(f"unknown friction-bound kind {self.gT_kind!r}")
        if self.c < 0:
            raise ValueError(f"compliance coefficient must be >= 0, got {self.c}")
        if self.m_exp < 1:
            raise ValueError(f"compliance exponent must be >= 1, got {self.m_exp}")
        if self.gN_kind == "capped" and self.r0 <= 0:
            raise ValueError(f"capped compliance needs r0 > 0, got {self.r0}")
        if self.mu < 0:
            raise ValueError(f"friction coefficient must be >= 0, got {self.mu}")
        if self.delta < 0:
            raise ValueError(f"friction decay delta must be >= 0, got {self.delta}")
        if self.gT_kind == "modified-coulomb" and self.delta == 0:
            raise ValueError("modified-coulomb needs delta > 0")

    @classmethod
    def interface(cls, mu: float, delta: float = 0.0, gT_kind: str | None = None) -> "FrictionLaw":
        """Law for an interlayer interface: friction bound only."""
        if gT_kind is None:
            gT_kind = "modified-coulomb" if delta > 0 else "coulomb"
        return cls(gT_kind=gT_kind, mu=mu, delta=delta)


def stress_of_strain(law: MaterialLaw, eps: np.ndarray) -> np.ndarray:
    """Stress tensor for a symmetric 2x2 strain tensor."""
    eps = np.asarray(eps, dtype=float)
    if eps.shape != (2, 2):
        raise ValueError(f"strain must be 2x2, got shape {eps.shape}")
    scale = max(1.0, float(np.abs(eps).max()))
    if abs(eps[0, 1] - eps[1, 0]) > 1e-12 * scale:
        raise ValueError("strain tensor must be symmetric")
    voigt = stress_voigt(law, np.array([eps[0, 0], eps[1, 1], eps[0, 1]]))
    return np.array([[voigt[0], voigt[2]], [voigt[2], voigt[1]]])


def stress_voigt(law: MaterialLaw, eps: np.ndarray) -> np.ndarray:
    """Vectorized stress from strain in component form (xx, yy, xy).

    The last axis holds tensor components (xy is the tensor entry, not
    the engineering shear). Leading axes broadcast.
    """
    eps = np.asarray(eps, dtype=float)
    two_mu = 2.0 * law.lame_mu * shear_scale(law, eps)
    trace = eps[..., 0] + eps[..., 1]
    out = np.empty_like(eps)
    out[..., 0] = two_mu * eps[..., 0] + law.lame_lambda * trace
    out[..., 1] = two_mu * eps[..., 1] + law.lame_lambda * trace
    out[..., 2] = two_mu * eps[..., 2]
    return out


def shear_scale(law: MaterialLaw, eps: np.ndarray) -> np.ndarray | float:
    """Strain-dependent multiplier on the shear modulus.

    1 for the linear law; 1 + gamma/(1 + |eps|) for the perturbed one.
    Because the nonlinearity is a scalar multiple of the strain itself,
    a stiffness matrix assembled with this multiplier frozen reproduces
    the nonlinear stress exactly (secant form).
    """
    if law.is_linear:
        return 1.0
    norm = np.sqrt(eps[..., 0] ** 2 + eps[..., 1] ** 2 + 2.0 * eps[..., 2] ** 2)
    return 1.0 + law.gamma / (1.0 + norm)


def normal_compliance(law: FrictionLaw, r: np.ndarray | float) -> np.ndarray | float:
    """Contact pressure exerted by the foundation at penetration depth r.

    Zero for r < 0 (separation) in both kinds.
    """
    r = np.asarray(r, dtype=float)
    if law.gN_kind == "power":
        out = law.c * np.maximum(0.0, r) ** law.m_exp
    else:
        out = law.c * np.clip(r, 0.0, law.r0)
    return out if out.ndim else float(out)


def friction_bound(law: FrictionLaw, s: np.ndarray | float) -> np.ndarray | float:
    """Tangential traction threshold at contact pressure s."""
    s = np.asarray(s, dtype=float)
    if law.gT_kind == "coulomb":
        out = law.mu * s
    else:
        out = law.mu * s * np.maximum(0.0, 1.0 - law.delta * s)
    return out if out.ndim else float(out)


def _sym_samples(rng: np.random.Generator, count: int, lo: float, hi: float) -> np.ndarray:
    """Random symmetric tensors in component form, entries in [lo, hi]."""
    return rng.uniform(lo, hi, size=(count, 3))


def estimate_constants(
    law: MaterialLaw | FrictionLaw,
    sample_count: int,
    box: tuple[float, float],
    part: str = "normal",
    seed: int = 0,
) -> tuple[float, float]:
    """Sampled Lipschitz and monotonicity constants of a law.

    Draws sample_count random input pairs from the box and returns
    (L_est, M_est): the largest difference quotient seen (a lower bound
    on the true Lipschitz constant) and the smallest monotonicity
    quotient seen (an upper bound on the true monotonicity constant).
    For a FrictionLaw, part selects the map: "normal" for the
    compliance function, "tangential" for the friction bound.
    """
    if sample_count < 2:
        raise ValueError(f"sample_count must be >= 2, got {sample_count}")
    lo, hi = float(box[0]), float(box[1])
    if not hi > lo:
        raise ValueError(f"empty sampling box [{lo}, {hi}]")
    rng = np.random.default_rng(seed)

    if isinstance(law, MaterialLaw):
        e1 = _sym_samples(rng, sample_count, lo, hi)
        e2 = _sym_samples(rng, sample_count, lo, hi)
        d = e1 - e2
        ds = stress_voigt(law, e1) - stress_voigt(law, e2)
        # Frobenius products; the xy component appears twice in the tensor
        weights = np.array([1.0, 1.0, 2.0])
        dd = (weights * d * d).sum(axis=1)
        keep = dd > 0
        d, ds, dd = d[keep], ds[keep], dd[keep]
        lip = np.sqrt((weights * ds * ds).sum(axis=1) / dd)
        mono = (weights * ds * d).sum(axis=1) / dd
        return float(lip.max()), float(mono.min())

    if part == "normal":
        fn = lambda x: normal_compliance(law, x)  # noqa: E731
    elif part == "tangential":
        fn = lambda x: friction_bound(law, x)  # noqa: E731
    else:
        raise ValueError(f"part must be 'normal' or 'tangential', got {part!r}")
    x1 = rng.uniform(lo, hi, size=sample_count)
    x2 = rng.uniform(lo, hi, size=sample_count)
    keep = x1 != x2
    x1, x2 = x1[keep], x2[keep]
    df = np.asarray(fn(x1)) - np.asarray(fn(x2))
    dx = x1 - x2
    lip = np.abs(df / dx)
    mono = df * dx / dx**2
    return float(lip.max()), float(mono.min())
