"""Proper-condensate detection diagnostics.

Operationalizes the asymptotic divergence/boundedness conditions as
log-log growth-exponent fits over a finite geometric schedule, extracts
the singular wave function by deflated power iteration, fits its
momentum, and compares against the rank-one limit form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    NotHomogeneousError,
    NumericalError,
    ParameterError,
    PreconditionError,
)
from .geometry import (
    Region,
    WaveFunction,
    bump_probe,
    inner,
    plane_wave_mode,
    project_out_mode,
)
from .states import OnePDM, StateFamily

NORM_TOL = 1e-8
DEGENERACY_TOL = 1e-8
# occupations below this are numerical leakage (probe coefficients carry
# ~1e-15 of every mode), not physics; growth fits clamp here so that
# "epsilon times sigma" cannot masquerade as divergence
_OCC_FLOOR = 1e-12


@dataclass(frozen=True)
class Thresholds:
    """Growth-exponent thresholds: slopes below `bounded` count as
    bounded occupation, above `divergent` as divergent."""

    bounded: float = 0.05
    divergent: float = 0.25

    def __post_init__(self):
        if not 0.0 < self.bounded < self.divergent:
            raise ParameterError(
                f"thresholds must satisfy 0 < bounded < divergent, "
                f"got ({self.bounded}, {self.divergent})"
            )


# ---------------------------------------------------------------------------
# spectral helpers (deterministic deflated power iteration)


def _start_vector(m: int) -> np.ndarray:
    # mode 0 plus a tiny index-weighted perturbation; deterministic
    v = np.zeros(m, dtype=complex)
    v[0] = 1.0
    v += 1e-6 * np.arange(m) / max(m - 1, 1)
    return v / np.linalg.norm(v)


def power_iteration(matrix: np.ndarray, tol: float = 1e-12, max_iter: int = 100_000):
    """Dominant eigenpair of a Hermitian matrix by power iteration.

    Returns (eigenvalue, eigenvector) with the Rayleigh quotient as the
    (signed) eigenvalue.  Converges when the relative residual reaches
    `tol`; spectra whose top eigenvalues form a cluster tighter than the
    tolerance cannot resolve below the cluster width, so a stalled
    residual (no relative progress over a window) also terminates and
    the value is then accurate to that width.  Exact degeneracy
    converges immediately.  Raises NumericalError only when neither stop
    is reached.
    """
    a = np.asarray(matrix)
    m = a.shape[0]
    v = _start_vector(m)
    scale = float(np.abs(a).max())
    if scale == 0.0:
        return 0.0, v
    window = 200
    checkpoint = math.inf
    w = a @ v
    for it in range(max_iter):
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0, v
        v = w / nw
        w = a @ v
        lam = float(np.vdot(v, w).real)
        res = float(np.linalg.norm(w - lam * v))
        if res <= tol * max(abs(lam), scale * 1e-3):
            return lam, v
        if it % window == window - 1:
            # less than 1% progress over a whole window: the residual sits
            # on a cluster floor that no amount of iteration resolves
            if res >= checkpoint * (1.0 - 1e-2):
                return lam, v
            checkpoint = res
    raise NumericalError("power iteration did not converge")


def top_two_eigenvalues(matrix: np.ndarray):
    """Largest two eigenvalues (and the top eigenvector) of a Hermitian
    positive-semidefinite matrix via one deflation step."""
    lam1, v1 = power_iteration(matrix)
    deflated = matrix - lam1 * np.outer(v1, v1.conj())
    lam2, _ = power_iteration(deflated)
    return lam1, lam2, v1


def operator_norm(matrix: np.ndarray) -> float:
    """Spectral norm (largest singular value) of a small dense matrix.

    Deviation matrices can carry geometrically clustered spectra on
    which power iteration resolves only to the cluster width, so this
    goes through an exact dense SVD instead.
    """
    a = np.asarray(matrix)
    if float(np.abs(a).max()) == 0.0:
        return 0.0
    return float(np.linalg.svd(a, compute_uv=False)[0])


@dataclass(frozen=True, eq=False)
class SingularMode:
    """Leading eigenvector of a density matrix, phase-fixed."""

    function: WaveFunction
    value: float
    second_value: float
    degenerate: bool
    coefficients: np.ndarray


def extract_singular_function(pdm: OnePDM) -> SingularMode:
    """Leading eigenpair of the density matrix in its mode basis.

    The eigenvector phase is fixed by making its largest-magnitude
    coefficient real positive.  A top eigenvalue with relative gap below
    1e-8 is flagged degenerate and resolved towards the lowest diagonal
    mode index carrying the maximal occupation.
    """
    if not np.any(pdm.occupations > 0):
        raise PreconditionError("density matrix has no positive occupation")
    matrix = pdm.matrix
    lam1, lam2, vec = top_two_eigenvalues(matrix)
    degenerate = (lam1 - lam2) < DEGENERACY_TOL * lam1
    if degenerate:
        diag = np.real(np.diagonal(matrix))
        near = np.flatnonzero(diag >= lam1 * (1.0 - DEGENERACY_TOL))
        if near.size:
            vec = np.zeros(pdm.basis.size, dtype=complex)
            vec[near[0]] = 1.0
    j = int(np.argmax(np.abs(vec)))
    phase = vec[j] / abs(vec[j])
    vec = vec * np.conj(phase)
    return SingularMode(
        function=pdm.basis.synthesize(vec),
        value=lam1,
        second_value=lam2,
        degenerate=bool(degenerate),
        coefficients=vec,
    )


# ---------------------------------------------------------------------------
# occupation growth along a schedule


def _check_normalized(f: WaveFunction, what: str = "wave function") -> None:
    if abs(f.norm - 1.0) > NORM_TOL:
        raise PreconditionError(f"{what} must be normalized (norm = {f.norm:.12g})")


def condensate_number(family: StateFamily, sigma: float, s: WaveFunction) -> float:
    """Occupation of the candidate singular function at one parameter."""
    _check_normalized(s, "candidate singular function")
    return max(family.at(sigma).occupation(s), 0.0)


def _occupation_series(family: StateFamily, schedule, coeffs: np.ndarray) -> np.ndarray:
    """Occupations Gamma_sigma(f, f) along the schedule from fixed mode
    coefficients of f (the basis does not depend on sigma)."""
    weights = np.abs(coeffs) ** 2
    return np.array([float(family.occupations(s) @ weights) for s in schedule])


def regular_bound(family: StateFamily, sigmas, probes, candidate: WaveFunction | None = None) -> float:
    """Finite-sample estimate of the uniform regular-occupation bound:
    max over the schedule and probes of Gamma_sigma(f, f).

    Probes must be normalized and orthogonal (1e-8) to the candidate
    singular mode, otherwise they would pick up the condensate number.
    """
    probes = list(probes)
    if not probes:
        return 0.0
    sigmas = [float(s) for s in sigmas]
    if candidate is None:
        candidate = extract_singular_function(family.at(max(sigmas))).function
    out = 0.0
    for f in probes:
        _check_normalized(f, "regular probe")
        if abs(inner(candidate, f)) > NORM_TOL:
            raise PreconditionError(
                "regular probe is not orthogonal to the candidate singular mode"
            )
        series = _occupation_series(family, sigmas, family.basis.coefficients(f))
        out = max(out, float(series.max()))
    return out


def growth_exponent(sigmas, values) -> float:
    """Least-squares slope of log(values) against log(sigmas)."""
    x = np.log(np.asarray(sigmas, dtype=float))
    y = np.log(np.maximum(np.asarray(values, dtype=float), _OCC_FLOOR))
    var = float(np.var(x))
    if var == 0.0:
        raise NumericalError("degenerate growth fit: schedule has zero log-variance")
    return float(np.cov(x, y, bias=True)[0, 1] / var)


def default_probe_panel(
    family: StateFamily, candidate: WaveFunction, count: int = 8
) -> list[WaveFunction]:
    """Spanning panel of normalized probes orthogonal to the candidate:
    leading basis modes plus a smooth bump, each projected."""
    basis = family.basis
    raw = [basis.mode(j) for j in range(1, min(basis.size, count + 1))]
    sub = Region(
        dimension=family.region.dimension,
        shape=family.region.shape,
        diameter=family.region.diameter / 2.0,
        center=family.region.center,
    )
    raw.append(bump_probe(sub, basis.grid))
    panel = []
    for f in raw:
        g = project_out_mode(f, candidate)
        if g.norm > 1e-8:
            panel.append(g.normalized())
    return panel


@dataclass(frozen=True, eq=False)
class CriterionResult:
    verdict: str
    candidate_slope: float
    zero_mean_slopes: np.ndarray
    thresholds: Thresholds
    schedule: np.ndarray
    candidate_occupations: np.ndarray
    probe_occupations: np.ndarray  # (n_probes, n_sigma)


def criterion_check(
    family: StateFamily,
    schedule,
    thresholds: Thresholds | None = None,
    candidate: WaveFunction | None = None,
    probes: list[WaveFunction] | None = None,
) -> CriterionResult:
    """Growth-exponent form of the condensate criterion.

    Verdict is `condensate` iff the candidate-mode slope exceeds the
    divergent threshold while every projected probe stays below the
    bounded threshold; decisively contradicting patterns give
    `no-condensate`, anything in between `inconclusive`.
    """
    thresholds = thresholds or Thresholds()
    schedule = np.asarray([float(s) for s in schedule])
    if schedule.size < 4:
        raise PreconditionError("schedule must contain at least 4 points")
    if np.any(schedule <= 0) or np.any(np.diff(schedule) <= 0):
        raise PreconditionError("schedule must be positive and strictly increasing")
    if candidate is None:
        candidate = plane_wave_mode(
            family.region, np.zeros(family.region.dimension), family.basis.grid
        )
    _check_normalized(candidate, "candidate mode")
    if probes is None:
        probes = default_probe_panel(family, candidate)
    cand_occ = _occupation_series(family, schedule, family.basis.coefficients(candidate))
    probe_occ = np.array(
        [_occupation_series(family, schedule, family.basis.coefficients(f)) for f in probes]
    )
    cand_slope = growth_exponent(schedule, cand_occ)
    probe_slopes = np.array([growth_exponent(schedule, row) for row in probe_occ])
    if cand_slope > thresholds.divergent and np.all(probe_slopes < thresholds.bounded):
        verdict = "condensate"
    elif cand_slope < thresholds.bounded or np.any(probe_slopes > thresholds.divergent):
        verdict = "no-condensate"
    else:
        verdict = "inconclusive"
    return CriterionResult(
        verdict=verdict,
        candidate_slope=cand_slope,
        zero_mean_slopes=probe_slopes,
        thresholds=thresholds,
        schedule=schedule,
        candidate_occupations=cand_occ,
        probe_occupations=probe_occ,
    )


# ---------------------------------------------------------------------------
# rank-one convergence


def _probe_coefficient_matrix(pdm: OnePDM, probes) -> np.ndarray:
    return np.array([pdm.basis.coefficients(f) for f in probes])


def _rank_one_distance_from_coeffs(
    pdm: OnePDM, n_c: float, overlaps: np.ndarray, coeffs: np.ndarray
) -> float:
    gamma_mat = (coeffs.conj() * pdm.occupations) @ coeffs.T
    if pdm.coherences is not None:
        gamma_mat = gamma_mat + coeffs.conj() @ pdm.coherences @ coeffs.T
    deviation = gamma_mat / n_c - np.outer(overlaps, overlaps.conj())
    return operator_norm(deviation)


def rank_one_distance(pdm: OnePDM, n_c: float, s: WaveFunction, probes) -> float:
    """Operator norm of n_C^-1 Gamma - |s><s| over a probe basis.

    Measures how far the renormalized density matrix is from the pure
    rank-one condensate projector on the probed subspace.
    """
    if not n_c > 0:
        raise PreconditionError("condensate number must be positive")
    probes = list(probes)
    coeffs = _probe_coefficient_matrix(pdm, probes)
    overlaps = np.array([inner(f, s) for f in probes])
    return _rank_one_distance_from_coeffs(pdm, n_c, overlaps, coeffs)


# ---------------------------------------------------------------------------
# momentum fit


@dataclass(frozen=True)
class MomentumFit:
    momentum: tuple[float, ...]
    residual: float
    modulus_deviation: float


def _amplitude_sq(f: WaveFunction, p) -> float:
    from .geometry import fourier_amplitude

    return abs(fourier_amplitude(f, p)) ** 2


def fit_momentum(
    s: WaveFunction,
    region: Region,
    modulus_tol: float = 1e-3,
    refine_levels: int = 48,
) -> MomentumFit:
    """Fit the plane-wave momentum of a homogeneous singular function.

    Checks that |s| is constant on the region, locates the Fourier peak
    on the FFT lattice, then refines it by coordinate-wise bisection.
    The residual is 1 - |<e_p, s>|^2.
    """
    _check_normalized(s, "singular function")
    grid = s.grid
    mask = grid.mask(region)
    mod = np.abs(s.values[mask])
    mean = float(mod.mean())
    deviation = float(np.abs(mod - mean).max() / mean) if mean > 0 else math.inf
    if deviation > modulus_tol:
        raise NotHomogeneousError(
            f"modulus deviation {deviation:.3e} exceeds tolerance {modulus_tol:.1e}; "
            "the function is not a localized plane wave"
        )
    # coarse stage: FFT over the full grid
    spec = np.fft.fftn(s.values)
    flat = int(np.argmax(np.abs(spec)))
    bins = np.unravel_index(flat, grid.shape)
    p = np.array(
        [
            2.0 * math.pi * np.fft.fftfreq(grid.npoints[i], d=grid.spacing[i])[bins[i]]
            for i in range(grid.dimension)
        ]
    )
    steps = np.array(
        [math.pi / (grid.npoints[i] * grid.spacing[i]) for i in range(grid.dimension)]
    )
    best = _amplitude_sq(s, p)
    for _ in range(refine_levels):
        improved = False
        for axis in range(grid.dimension):
            for sign in (-1.0, 1.0):
                trial = p.copy()
                trial[axis] += sign * steps[axis]
                val = _amplitude_sq(s, trial)
                if val > best:
                    best, p, improved = val, trial, True
        if not improved:
            steps *= 0.5
        if steps.max() < 1e-12:
            break
    mode = plane_wave_mode(region, p, grid)
    residual = 1.0 - abs(inner(mode, s)) ** 2
    return MomentumFit(momentum=tuple(p), residual=float(residual), modulus_deviation=deviation)


def op_ratio(pdm: OnePDM) -> float:
    """Condensate fraction in the Onsager-Penrose sense: lambda_max / trace."""
    tr = pdm.trace
    if not tr > 0:
        raise PreconditionError("density matrix must have positive trace")
    lam, _ = power_iteration(pdm.matrix)
    return lam / tr


# ---------------------------------------------------------------------------
# report assembly


@dataclass(frozen=True, eq=False)
class CondensateReport:
    """Aggregated condensate diagnostics over a sigma schedule."""

    schedule: np.ndarray
    verdict: str
    candidate_slope: float
    zero_mean_slopes: np.ndarray
    thresholds: Thresholds
    condensate_numbers: np.ndarray
    rank_one_distances: np.ndarray
    op_ratios: np.ndarray
    regular_bound_estimate: float
    momentum: tuple[float, ...] | None
    momentum_residual: float | None
    modulus_deviation: float | None
    degenerate_top: bool
    top_eigenvalue: float
    second_eigenvalue: float
    truncation_defects: np.ndarray

    def to_json_dict(self) -> dict:
        return {
            "schedule": list(map(float, self.schedule)),
            "verdict": self.verdict,
            "slopes": {
                "candidate": self.candidate_slope,
                "zero_mean": list(map(float, self.zero_mean_slopes)),
            },
            "thresholds": {
                "bounded": self.thresholds.bounded,
                "divergent": self.thresholds.divergent,
            },
            "condensate_numbers": list(map(float, self.condensate_numbers)),
            "rank_one_distances": list(map(float, self.rank_one_distances)),
            "op_ratios": list(map(float, self.op_ratios)),
            "regular_bound_estimate": self.regular_bound_estimate,
            "momentum": None if self.momentum is None else list(self.momentum),
            "momentum_residual": self.momentum_residual,
            "modulus_deviation": self.modulus_deviation,
            "degenerate_top": self.degenerate_top,
            "top_eigenvalue": self.top_eigenvalue,
            "second_eigenvalue": self.second_eigenvalue,
            "truncation_defects": list(map(float, self.truncation_defects)),
        }

    def write_csv(self, path) -> None:
        """Flat per-sigma table; slope columns repeat the global fit."""
        zm = max(map(float, self.zero_mean_slopes), default=0.0)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(
                "sigma,n_C,rank_one_distance,op_ratio,"
                "candidate_slope,max_zero_mean_slope,verdict\n"
            )
            for i, sigma in enumerate(self.schedule):
                fh.write(
                    f"{sigma:.17g},{self.condensate_numbers[i]:.17g},"
                    f"{self.rank_one_distances[i]:.17g},{self.op_ratios[i]:.17g},"
                    f"{self.candidate_slope:.17g},{zm:.17g},{self.verdict}\n"
                )


def assemble_report(
    family: StateFamily,
    schedule,
    thresholds: Thresholds | None = None,
    rank_probe_count: int = 16,
) -> CondensateReport:
    """Full detection pipeline over a schedule.

    Extracts the singular candidate from the last-sigma density matrix,
    fits its momentum (falling back to the raw eigenvector when it is
    not homogeneous), runs the criterion with probes projected against
    the candidate, and sweeps rank-one distances and condensate
    fractions.
    """
    schedule = np.asarray([float(s) for s in schedule])
    top = extract_singular_function(family.at(schedule[-1]))
    momentum = residual = deviation = None
    candidate = top.function
    try:
        fit = fit_momentum(top.function, family.region)
        momentum, residual, deviation = fit.momentum, fit.residual, fit.modulus_deviation
        candidate = plane_wave_mode(family.region, momentum, family.basis.grid)
    except NotHomogeneousError:
        candidate = top.function.normalized()
    crit = criterion_check(family, schedule, thresholds, candidate=candidate)
    probes = [family.basis.mode(j) for j in range(min(family.basis.size, rank_probe_count))]
    coeffs = np.array([family.basis.coefficients(f) for f in probes])
    overlaps = np.array([inner(f, candidate) for f in probes])
    n_c = np.empty(schedule.size)
    dist = np.empty(schedule.size)
    ratios = np.empty(schedule.size)
    defects = np.empty(schedule.size)
    for i, sigma in enumerate(schedule):
        pdm = family.at(sigma)
        n_c[i] = max(pdm.occupation(candidate), 0.0)
        dist[i] = (
            _rank_one_distance_from_coeffs(pdm, n_c[i], overlaps, coeffs)
            if n_c[i] > 0
            else math.inf
        )
        ratios[i] = op_ratio(pdm)
        defects[i] = family.truncation_defect(sigma)
    panel = default_probe_panel(family, candidate)
    n_r = regular_bound(family, schedule, panel, candidate=candidate)
    return CondensateReport(
        schedule=schedule,
        verdict=crit.verdict,
        candidate_slope=crit.candidate_slope,
        zero_mean_slopes=crit.zero_mean_slopes,
        thresholds=crit.thresholds,
        condensate_numbers=n_c,
        rank_one_distances=dist,
        op_ratios=ratios,
        regular_bound_estimate=n_r,
        momentum=momentum,
        momentum_residual=residual,
        modulus_deviation=deviation,
        degenerate_top=top.degenerate,
        top_eigenvalue=top.value,
        second_eigenvalue=top.second_value,
        truncation_defects=defects,
    )
