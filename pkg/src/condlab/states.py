"""One-particle density matrices of gauge-invariant quasifree states.

A state is summarized by occupation numbers over an orthonormal mode
basis (plus an optional Hermitian coherence block) and evaluated as the
sesquilinear form gamma(f, g), antilinear in f and linear in g.  State
families map a divergence parameter sigma to such density matrices.

Finite bases truncate infinite families; the omitted occupation mass is
carried explicitly as `tail_mass` so that traces and condensate
fractions stay honest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ConfigError,
    GridMismatchError,
    NumericalError,
    ParameterError,
    PreconditionError,
)
from .geometry import Grid, Region, WaveFunction, plane_wave_mode

GRAM_TOL = 1e-8


# ---------------------------------------------------------------------------
# mode bases


@dataclass(frozen=True, eq=False)
class ModeBasis:
    """Ordered orthonormal wave functions sharing one support region.

    Mode 0 is the designated candidate condensate mode.  Values are
    stored stacked on the support mask; full-grid wave functions are
    materialized on demand.
    """

    grid: Grid
    support: Region
    flat_index: np.ndarray          # indices of support cells in the raveled grid
    stack: np.ndarray               # (M, n_mask) complex mode values
    wavevectors: tuple | None = None  # per-mode labels for plane-wave bases

    def __post_init__(self):
        if self.stack.ndim != 2 or self.stack.shape[1] != self.flat_index.size:
            raise PreconditionError("stacked mode values do not match the support mask")
        g = self.gram()
        err = np.abs(g - np.eye(self.size)).max()
        if err > GRAM_TOL:
            raise PreconditionError(f"mode basis is not orthonormal (Gram error {err:.2e})")

    @property
    def size(self) -> int:
        return self.stack.shape[0]

    def gram(self) -> np.ndarray:
        return (self.stack @ self.stack.conj().T) * self.grid.cell_volume

    def mask_coordinates(self) -> list[np.ndarray]:
        """Cell-center coordinates of the support cells, one array per axis."""
        idx = np.unravel_index(self.flat_index, self.grid.shape)
        return [
            self.grid.lo[i] + (idx[i] + 0.5) * self.grid.spacing[i]
            for i in range(self.grid.dimension)
        ]

    def mode(self, j: int) -> WaveFunction:
        vals = np.zeros(self.grid.shape, dtype=complex)
        vals.ravel()[self.flat_index] = self.stack[j]
        return WaveFunction(self.grid, vals, self.support)

    def coefficients(self, f: WaveFunction) -> np.ndarray:
        """Overlaps <b_k, f> for all modes."""
        if f.grid != self.grid:
            raise GridMismatchError("wave function and basis live on different grids")
        fv = f.values.ravel()[self.flat_index]
        return (self.stack.conj() @ fv) * self.grid.cell_volume

    def synthesize(self, coeffs) -> WaveFunction:
        """Wave function sum_k c_k b_k."""
        coeffs = np.asarray(coeffs, dtype=complex)
        vals = np.zeros(self.grid.shape, dtype=complex)
        vals.ravel()[self.flat_index] = coeffs @ self.stack
        return WaveFunction(self.grid, vals, self.support)

    def boosted(self, p) -> "ModeBasis":
        """Multiply every mode pointwise by e^(i p.x) (a unitary map)."""
        p = np.asarray(p, dtype=float)
        coords = self.mask_coordinates()
        phase = np.exp(1j * sum(p[i] * coords[i] for i in range(len(coords))))
        return ModeBasis(
            grid=self.grid,
            support=self.support,
            flat_index=self.flat_index,
            stack=self.stack * phase,
            wavevectors=None,
        )


def fourier_modes(region: Region, grid: Grid, count: int) -> ModeBasis:
    """Exactly orthonormal plane-wave modes of a box/interval region.

    Wave vectors are 2 pi j / L_disc per axis (L_disc the discrete edge
    length), ordered by |j|^2 then lexicographically; mode 0 is the
    constant function.
    """
    if region.shape == "ball" and region.dimension > 1:
        raise PreconditionError("fourier_modes requires a box or interval region")
    mask = grid.mask(region)
    flat = np.flatnonzero(mask.ravel())
    d = region.dimension
    # discrete edge lengths from the covered index ranges
    lengths = []
    axes_idx = np.unravel_index(flat, grid.shape)
    for i in range(d):
        m_i = int(axes_idx[i].max() - axes_idx[i].min()) + 1
        lengths.append(m_i * grid.spacing[i])
    j_max = int(math.ceil(count ** (1.0 / d))) + 1
    ranks = sorted(
        (js for js in np.ndindex(*(2 * j_max + 1,) * d)),
        key=lambda js: (sum((j - j_max) ** 2 for j in js), tuple(j - j_max for j in js)),
    )
    kvecs = []
    for js in ranks[:count]:
        kvecs.append(tuple(2 * math.pi * (js[i] - j_max) / lengths[i] for i in range(d)))
    stack = np.empty((count, flat.size), dtype=complex)
    for row, k in enumerate(kvecs):
        stack[row] = plane_wave_mode(region, k, grid).values.ravel()[flat]
    return ModeBasis(grid=grid, support=region, flat_index=flat, stack=stack,
                     wavevectors=tuple(kvecs))


def _monomial_exponents(dimension: int, count: int):
    out = []
    degree = 0
    while len(out) < count:
        combos = [
            es
            for es in np.ndindex(*(degree + 1,) * dimension)
            if sum(es) == degree
        ]
        out.extend(sorted(combos))
        degree += 1
    return out[:count]


def ball_polynomial_modes(region: Region, grid: Grid, count: int) -> ModeBasis:
    """Gram-Schmidt of low-order monomials times the ball indicator.

    Mode 0 comes from the constant monomial and stays exactly constant.
    """
    mask = grid.mask(region)
    flat = np.flatnonzero(mask.ravel())
    if flat.size < count:
        raise PreconditionError("region covers fewer grid cells than requested modes")
    idx = np.unravel_index(flat, grid.shape)
    coords = [
        grid.lo[i] + (idx[i] + 0.5) * grid.spacing[i] - region.center[i]
        for i in range(region.dimension)
    ]
    h_d = grid.cell_volume
    stack = np.empty((count, flat.size), dtype=complex)
    exps = _monomial_exponents(region.dimension, count)
    for row, es in enumerate(exps):
        v = np.ones(flat.size)
        for i, e in enumerate(es):
            if e:
                v = v * coords[i] ** e
        stack[row] = v
    # two passes of modified Gram-Schmidt for 1e-8 orthonormality
    for _ in range(2):
        for j in range(count):
            for i in range(j):
                stack[j] -= (np.vdot(stack[i], stack[j]) * h_d) * stack[i]
            nrm = math.sqrt(float(np.vdot(stack[j], stack[j]).real) * h_d)
            if nrm < 1e-12:
                raise NumericalError("polynomial mode basis is numerically degenerate")
            stack[j] /= nrm
    return ModeBasis(grid=grid, support=region, flat_index=flat, stack=stack)


def default_mode_basis(region: Region, grid: Grid, count: int) -> ModeBasis:
    if region.shape == "ball" and region.dimension > 1:
        return ball_polynomial_modes(region, grid, count)
    return fourier_modes(region, grid, count)


# ---------------------------------------------------------------------------
# one-particle density matrices


@dataclass(frozen=True, eq=False)
class OnePDM:
    """One-particle density matrix over a mode basis.

    `occupations` holds the diagonal; `coherences` an optional Hermitian
    off-diagonal block with zero diagonal; `tail_mass` the occupation
    mass of truncated modes beyond the basis (they contribute to the
    trace but are unreachable by probes in the basis span).
    """

    basis: ModeBasis
    occupations: np.ndarray
    coherences: np.ndarray | None = None
    tail_mass: float = 0.0

    def __post_init__(self):
        occ = np.asarray(self.occupations, dtype=float)
        if occ.shape != (self.basis.size,):
            raise ParameterError("occupation vector does not match the basis size")
        if np.any(occ < 0):
            raise ParameterError("occupation numbers must be nonnegative")
        object.__setattr__(self, "occupations", occ)
        if self.tail_mass < 0:
            raise ParameterError("tail mass must be nonnegative")
        if self.coherences is not None:
            c = np.asarray(self.coherences, dtype=complex)
            m = self.basis.size
            if c.shape != (m, m):
                raise ParameterError("coherence block must be M x M")
            scale = max(1.0, float(np.abs(c).max()))
            if np.abs(c - c.conj().T).max() > 1e-10 * scale:
                raise ParameterError("coherence block is not Hermitian")
            if np.abs(np.diagonal(c)).max() > 1e-12 * max(1.0, self.trace):
                raise ParameterError("coherence block must have zero diagonal")
            object.__setattr__(self, "coherences", c)
            w = np.linalg.eigvalsh(self.matrix)
            if w.min() < -1e-8 * max(self.trace, 1.0):
                raise ParameterError("density matrix is not positive semidefinite")

    @property
    def matrix(self) -> np.ndarray:
        m = np.diag(self.occupations.astype(complex))
        if self.coherences is not None:
            m = m + self.coherences
        return m

    @property
    def trace(self) -> float:
        return float(self.occupations.sum()) + self.tail_mass

    def gamma(self, f: WaveFunction, g: WaveFunction) -> complex:
        cf = self.basis.coefficients(f)
        cg = self.basis.coefficients(g)
        val = complex(np.vdot(cf, self.occupations * cg))
        if self.coherences is not None:
            val += complex(cf.conj() @ self.coherences @ cg)
        return val

    def occupation(self, f: WaveFunction) -> float:
        return self.gamma(f, f).real


def gamma(pdm: OnePDM, f: WaveFunction, g: WaveFunction) -> complex:
    """Sesquilinear form Gamma(f, g); antilinear in f, linear in g."""
    return pdm.gamma(f, g)


# ---------------------------------------------------------------------------
# state families


@dataclass(frozen=True, eq=False)
class StateFamily:
    """A map sigma -> OnePDM with fixed mode basis and region."""

    kind: str
    region: Region
    basis: ModeBasis
    epsilon: float | None = None
    boost: tuple[float, ...] | None = None
    table: tuple | None = None      # custom families: ((sigma, (nu_k, ...)), ...)
    _occupation_fn: Callable[[float], tuple[np.ndarray, float]] = field(repr=False, default=None)

    def occupations(self, sigma: float) -> np.ndarray:
        return self._occupation_fn(float(sigma))[0]

    def truncation_defect(self, sigma: float) -> float:
        """Occupation mass omitted by the finite mode basis (exact tail)."""
        return self._occupation_fn(float(sigma))[1]

    def at(self, sigma: float) -> OnePDM:
        occ, tail = self._occupation_fn(float(sigma))
        return OnePDM(basis=self.basis, occupations=occ, tail_mass=tail)


def appendix_epsilon_n(n: float, epsilon: float) -> float:
    """Decay rate of the regular occupations: ln((1 + n - n^eps)/(n - n^eps))."""
    n = float(n)
    if not 0.0 < epsilon < 1.0:
        raise ParameterError(f"epsilon must lie in (0, 1), got {epsilon}")
    if n <= 1.0:
        raise ParameterError(f"family parameter must exceed 1, got {n}")
    n_c = n**epsilon
    if n_c >= n - 1.0:
        raise ParameterError(
            f"condensate number n^eps = {n_c:.6g} must stay below n - 1 = {n - 1:.6g}"
        )
    return math.log1p(1.0 / (n - n_c))


def appendix_occupations(n: float, epsilon: float, modes: int) -> tuple[np.ndarray, float]:
    """Occupations (n^eps, e^-eps_n, e^-2 eps_n, ...) and the exact tail mass
    of the modes truncated beyond the basis."""
    eps_n = appendix_epsilon_n(n, epsilon)
    occ = np.empty(modes)
    occ[0] = n**epsilon
    occ[1:] = np.exp(-eps_n * np.arange(1, modes))
    tail = math.exp(-eps_n * modes) / -math.expm1(-eps_n)
    return occ, tail


def appendix_tail_closed_form(n: float, epsilon: float) -> float:
    """Total regular mass sum_{k>=1} e^(-eps_n k) = 1/(e^eps_n - 1)."""
    return 1.0 / math.expm1(appendix_epsilon_n(n, epsilon))


def _require_constant_mode0(basis: ModeBasis) -> None:
    b0 = basis.stack[0]
    mean = b0.mean()
    if np.abs(b0 - mean).max() > 1e-10 * abs(mean):
        raise PreconditionError("basis mode 0 must be the constant function on the region")


def appendix_family(region: Region, basis: ModeBasis, epsilon: float) -> StateFamily:
    """Family with condensate occupation n^eps on the constant mode and a
    geometric regular spectrum summing (untruncated) to n - n^eps."""
    if not 0.0 < epsilon < 1.0:
        raise ParameterError(f"epsilon must lie in (0, 1), got {epsilon}")
    _require_constant_mode0(basis)
    modes = basis.size

    def occ_fn(n: float):
        return appendix_occupations(n, epsilon, modes)

    return StateFamily(
        kind="appendix", region=region, basis=basis, epsilon=epsilon, _occupation_fn=occ_fn
    )


def boosted_family(base: StateFamily, p) -> StateFamily:
    """Same occupations over the phase-boosted basis b_k(x) e^(i p.x);
    mode 0 becomes the localized plane wave with momentum p."""
    p = tuple(float(v) for v in np.atleast_1d(p))
    return StateFamily(
        kind="boosted",
        region=base.region,
        basis=base.basis.boosted(p),
        epsilon=base.epsilon,
        boost=p,
        table=base.table,
        _occupation_fn=base._occupation_fn,
    )


def heated_family(region: Region, basis: ModeBasis) -> StateFamily:
    """Uniform occupations n/M on every mode: all wave functions diverge.

    Negative control for the condensate criterion.
    """
    modes = basis.size

    def occ_fn(n: float):
        return np.full(modes, n / modes), 0.0

    return StateFamily(kind="heated", region=region, basis=basis, _occupation_fn=occ_fn)


def custom_family(region: Region, basis: ModeBasis, table: Sequence) -> StateFamily:
    """Family defined by an explicit sigma-indexed occupation table."""
    norm_table = []
    for entry in table:
        sigma, occs = entry
        occs = tuple(float(v) for v in occs)
        if len(occs) > basis.size:
            raise ParameterError(
                f"custom occupations at sigma={sigma} exceed the basis size {basis.size}"
            )
        norm_table.append((float(sigma), occs))
    norm_table.sort(key=lambda e: e[0])
    frozen = tuple(norm_table)
    modes = basis.size

    def occ_fn(n: float):
        for sigma, occs in frozen:
            if sigma == n:
                out = np.zeros(modes)
                out[: len(occs)] = occs
                return out, 0.0
        raise ParameterError(f"custom family has no occupation row at sigma={n}")

    return StateFamily(
        kind="custom", region=region, basis=basis, table=frozen, _occupation_fn=occ_fn
    )


def kms_hamiltonian(n: float, epsilon: float, temperature: float, modes: int) -> np.ndarray:
    """Eigenvalues of the diagonal Hamiltonian whose Bose-Einstein
    occupations at the given temperature reproduce the family's."""
    if temperature <= 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    eps_n = appendix_epsilon_n(n, epsilon)
    n_c = float(n) ** epsilon
    energies = np.empty(int(modes))
    energies[0] = temperature * math.log1p(1.0 / n_c)
    k = np.arange(1, int(modes))
    energies[1:] = temperature * np.logaddexp(0.0, eps_n * k)
    return energies


def bose_einstein_occupations(energies: np.ndarray, temperature: float) -> np.ndarray:
    """Inverse of the KMS construction: nu = 1/(e^(E/T) - 1)."""
    return 1.0 / np.expm1(np.asarray(energies, dtype=float) / temperature)


# ---------------------------------------------------------------------------
# family definition documents

_FAMILY_KEYS = {"kind", "epsilon", "boost", "modes", "region", "custom_occupations"}
_REGION_KEYS = {"dimension", "shape", "diameter", "center"}
_KINDS = ("appendix", "boosted", "heated", "custom")


def region_from_dict(doc: dict) -> Region:
    if not isinstance(doc, dict):
        raise ConfigError("region specification must be an object")
    for key in doc:
        if key not in _REGION_KEYS:
            raise ConfigError(f"unknown key '{key}' in region specification")
    for key in ("dimension", "shape", "diameter"):
        if key not in doc:
            raise ConfigError(f"region specification is missing '{key}'")
    try:
        return Region(
            dimension=int(doc["dimension"]),
            shape=str(doc["shape"]),
            diameter=float(doc["diameter"]),
            center=tuple(float(v) for v in doc.get("center", ())),
        )
    except PreconditionError as exc:
        raise ConfigError(str(exc)) from exc


def region_to_dict(region: Region) -> dict:
    return {
        "dimension": region.dimension,
        "shape": region.shape,
        "diameter": region.diameter,
        "center": list(region.center),
    }


def validate_family_spec(doc: dict) -> dict:
    """Strict-key validation of a family definition document."""
    if not isinstance(doc, dict):
        raise ConfigError("family specification must be an object")
    for key in doc:
        if key not in _FAMILY_KEYS:
            raise ConfigError(f"unknown key '{key}' in family specification")
    kind = doc.get("kind")
    if kind not in _KINDS:
        raise ConfigError(f"family kind must be one of {_KINDS}, got {kind!r}")
    if kind in ("appendix", "boosted") and "epsilon" not in doc:
        raise ConfigError(f"family kind '{kind}' requires 'epsilon'")
    if kind == "boosted" and "boost" not in doc:
        raise ConfigError("family kind 'boosted' requires 'boost'")
    if kind == "custom" and not doc.get("custom_occupations"):
        raise ConfigError("family kind 'custom' requires 'custom_occupations'")
    return doc


def build_family(doc: dict, region: Region, grid: Grid) -> StateFamily:
    """Construct the family described by a validated definition document."""
    validate_family_spec(doc)
    kind = doc["kind"]
    if "modes" in doc:
        modes = int(doc["modes"])
    elif kind == "custom":
        modes = max(len(row[1]) for row in doc["custom_occupations"])
    elif region.shape == "ball" and region.dimension > 1:
        modes = 20
    else:
        modes = 64
    basis = default_mode_basis(region, grid, modes)
    if kind == "appendix":
        return appendix_family(region, basis, float(doc["epsilon"]))
    if kind == "boosted":
        base = appendix_family(region, basis, float(doc["epsilon"]))
        boost = [float(v) for v in doc["boost"]]
        if len(boost) != region.dimension:
            raise ConfigError("boost vector length must match the region dimension")
        return boosted_family(base, boost)
    if kind == "heated":
        return heated_family(region, basis)
    return custom_family(region, basis, doc["custom_occupations"])


def family_to_dict(family: StateFamily) -> dict:
    """Serialize a family definition; custom tables round-trip exactly."""
    doc = {"kind": family.kind, "modes": family.basis.size,
           "region": region_to_dict(family.region)}
    if family.epsilon is not None:
        doc["epsilon"] = family.epsilon
    if family.boost is not None:
        doc["boost"] = list(family.boost)
    if family.table is not None:
        doc["custom_occupations"] = [[sigma, list(occs)] for sigma, occs in family.table]
    return doc
