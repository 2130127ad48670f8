"""Off-diagonal long-range-order verification.

Correlation scans between translated probes, momentum-distribution
spectra with peak and tail diagnostics, the homogeneity test of the
translated two-point form, and the d=3 ball closed-form peak profile
with its refined quadrature cross-check.

Fourier convention, fixed repo-wide: f~(p) = (2 pi)^(-d/2) integral
e^(-i p.x) f(x) dx.  The rank-one prediction for the scan is then
P(x, y) = (n_C/|O|) e^(i (x-y).p) (2 pi)^d |f~(p)|^2, which the scan
matrix reproduces exactly for a pure condensate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analysis import extract_singular_function, fit_momentum
from .errors import ParameterError, PreconditionError
from .geometry import (
    Region,
    WaveFunction,
    discrete_volume,
    fourier_amplitude,
    inner,
    translate,
)
from .states import OnePDM, StateFamily

_NORM_TOL = 1e-8


def _as_translation_array(translations, dimension: int) -> np.ndarray:
    x = np.asarray(translations, dtype=float)
    if x.ndim == 1:
        x = x[:, None] if dimension == 1 else np.atleast_2d(x)
    if x.ndim != 2 or x.shape[1] != dimension:
        raise PreconditionError(
            f"translations must be an (n, {dimension}) array of lattice vectors"
        )
    return x


def _condensate_data(pdm: OnePDM, condensate=None):
    """(s, p, n_C) for the prediction; extracted and fitted when absent."""
    if condensate is not None:
        s, p, n_c = condensate
        return s, np.asarray(p, dtype=float), float(n_c)
    top = extract_singular_function(pdm)
    fit = fit_momentum(top.function, pdm.basis.support)
    n_c = max(pdm.occupation(top.function), 0.0)
    return top.function, np.asarray(fit.momentum), n_c


# ---------------------------------------------------------------------------
# correlation scan


@dataclass(frozen=True, eq=False)
class CorrelationScan:
    """Two-point matrix C(x, y) over a translation set, with the
    rank-one prediction P and deviation statistics."""

    translations: np.ndarray          # (T, d)
    matrix: np.ndarray                # C(x, y), Hermitian
    prediction: np.ndarray            # P(x, y), depends on x - y only
    momentum: np.ndarray
    n_c: float
    n_r: float
    error_scale: float                # sqrt(n_R n_C |O0| / |O|)
    max_deviation: float              # max |C - P|
    probe_support: Region
    region: Region

    def write_csv(self, path, meta: dict | None = None) -> None:
        d = self.translations.shape[1]
        with open(path, "w", encoding="utf-8", newline="") as fh:
            for key, val in (meta or {}).items():
                fh.write(f"# {key}={val}\n")
            fh.write(f"# n_C={self.n_c:.17g} n_R={self.n_r:.17g} "
                      f"p={','.join(f'{v:.17g}' for v in self.momentum)} "
                      f"error_scale={self.error_scale:.17g}\n")
            head = [f"x{a}" for a in range(d)] + [f"y{a}" for a in range(d)]
            fh.write(",".join(head) + ",re_C,im_C,re_P,im_P,abs_dev\n")
            for i, x in enumerate(self.translations):
                for j, y in enumerate(self.translations):
                    c = self.matrix[i, j]
                    pr = self.prediction[i, j]
                    cols = [f"{v:.17g}" for v in x] + [f"{v:.17g}" for v in y]
                    fh.write(
                        ",".join(cols)
                        + f",{c.real:.17g},{c.imag:.17g},{pr.real:.17g},{pr.imag:.17g},"
                        f"{abs(c - pr):.17g}\n"
                    )


def correlation_scan(
    pdm: OnePDM,
    probe: WaveFunction,
    translations,
    condensate=None,
    n_r: float = 1.0,
) -> CorrelationScan:
    """Fill C(x, y) = Gamma(T_x f, T_y f) and compare with the rank-one
    ODLRO prediction.

    `condensate` may carry a precomputed (s, p, n_C) triple; otherwise
    the singular function is extracted from the density matrix and its
    momentum fitted.  `n_r` is the caller's regular-occupation bound,
    used only for the reported error scale.
    """
    _check_probe(probe)
    region = pdm.basis.support
    xs = _as_translation_array(translations, region.dimension)
    for x in xs:
        moved = probe.support.translated(x)
        if not region.compactly_contains(moved) and region != moved:
            raise PreconditionError(
                f"translation {x.tolist()} pushes the probe support out of the region"
            )
    s, p, n_c = _condensate_data(pdm, condensate)
    coeffs = np.array([pdm.basis.coefficients(translate(probe, x)) for x in xs])
    c_mat = (coeffs.conj() * pdm.occupations) @ coeffs.T
    if pdm.coherences is not None:
        c_mat = c_mat + coeffs.conj() @ pdm.coherences @ coeffs.T
    vol = discrete_volume(pdm.basis.grid, region)
    vol0 = discrete_volume(pdm.basis.grid, probe.support)
    amp_sq = abs(fourier_amplitude(probe, p)) ** 2
    phases = np.exp(1j * (xs @ p))
    prediction = (n_c / vol) * (2 * math.pi) ** region.dimension * amp_sq * np.outer(
        phases, phases.conj()
    )
    error_scale = math.sqrt(max(n_r, 0.0) * n_c * vol0 / vol)
    return CorrelationScan(
        translations=xs,
        matrix=c_mat,
        prediction=prediction,
        momentum=p,
        n_c=n_c,
        n_r=n_r,
        error_scale=error_scale,
        max_deviation=float(np.abs(c_mat - prediction).max()),
        probe_support=probe.support,
        region=region,
    )


def _check_probe(probe: WaveFunction) -> None:
    if abs(probe.norm - 1.0) > _NORM_TOL:
        raise PreconditionError(f"probe must be normalized (norm = {probe.norm:.12g})")


# ---------------------------------------------------------------------------
# momentum distribution


@dataclass(frozen=True, eq=False)
class MomentumSpectrum:
    """Occupations of localized plane waves N(k) over a wave-vector scan."""

    wavevectors: np.ndarray           # (nk, d)
    values: np.ndarray                # N(k) >= 0
    peak_index: int
    peak_wavevector: np.ndarray
    peak_value: float
    diameter: float                   # region diameter L
    tail_amplitude: float             # amplitude-envelope fit sqrt(N) ~ A (L|k-p|)^e
    tail_exponent: float

    def write_csv(self, path, n_c: float | None = None, p=None, meta: dict | None = None) -> None:
        ref = self.peak_wavevector if p is None else np.asarray(p, dtype=float)
        d = self.wavevectors.shape[1]
        with open(path, "w", encoding="utf-8", newline="") as fh:
            for key, val in (meta or {}).items():
                fh.write(f"# {key}={val}\n")
            fh.write(f"# peak={','.join(f'{v:.17g}' for v in self.peak_wavevector)} "
                      f"peak_value={self.peak_value:.17g} L={self.diameter:.17g}\n")
            head = [f"k{a}" for a in range(d)]
            fh.write(",".join(head) + ",N,closed_form,bound_4nC\n")
            for k, v in zip(self.wavevectors, self.values):
                dist = self.diameter * float(np.linalg.norm(k - ref))
                if n_c is None:
                    closed = bound = "nan"
                else:
                    closed = (
                        f"{closed_form_peak(d, self.diameter, dist / 2.0, n_c):.17g}"
                        if d == 3
                        else "nan"
                    )
                    bound = f"{(4.0 * n_c / dist**2 if dist > 0 else math.inf):.17g}"
                cols = [f"{kk:.17g}" for kk in k]
                fh.write(",".join(cols) + f",{v:.17g},{closed},{bound}\n")


def line_k_grid(center, direction, half_span: float, count: int) -> np.ndarray:
    """Wave-vector line through `center` along `direction` (odd `count`
    keeps the center itself on the grid)."""
    center = np.atleast_1d(np.asarray(center, dtype=float))
    direction = np.atleast_1d(np.asarray(direction, dtype=float))
    u = direction / np.linalg.norm(direction)
    t = np.linspace(-half_span, half_span, int(count))
    return center[None, :] + t[:, None] * u[None, :]


def _lobe_maxima(distances: np.ndarray, values: np.ndarray, cut: float):
    """Indices of interior local maxima (in scan order) beyond `cut`."""
    idx = []
    for i in range(1, len(values) - 1):
        if distances[i] > cut and values[i] > values[i - 1] and values[i] >= values[i + 1]:
            idx.append(i)
    return np.asarray(idx, dtype=int)


def _envelope_fit(distances: np.ndarray, values: np.ndarray):
    """Amplitude-envelope power law through the lobe maxima:
    sqrt(N) ~ A (L|k-p|)^e fitted in log-log over L|k-p| > 2."""
    lobes = _lobe_maxima(distances, values, cut=2.0)
    lobes = lobes[values[lobes] > 0]
    if lobes.size < 3:
        return math.nan, math.nan
    x = np.log(distances[lobes])
    y = 0.5 * np.log(values[lobes])
    slope, icpt = np.polyfit(x, y, 1)
    return float(math.exp(icpt)), float(slope)


def momentum_distribution(pdm: OnePDM, wavevectors) -> MomentumSpectrum:
    """Evaluate N(k) = Gamma(e_k, e_k) over a wave-vector scan.

    The tail envelope is fitted relative to the spectrum's own peak; use
    `peak_tail_report` for diagnostics against an externally fitted
    momentum.
    """
    basis = pdm.basis
    region = basis.support
    ks = np.asarray(wavevectors, dtype=float)
    if ks.ndim == 1:
        ks = ks[:, None]
    if ks.shape[1] != region.dimension:
        raise PreconditionError("wave vectors do not match the region dimension")
    coords = basis.mask_coordinates()
    vol = basis.flat_index.size * basis.grid.cell_volume
    h_d = basis.grid.cell_volume
    values = np.empty(len(ks))
    chunk = 16  # bounds the (n_mask, chunk) phase workspace at d=3 resolutions
    for lo in range(0, len(ks), chunk):
        kc = ks[lo : lo + chunk]
        phase = sum(np.outer(coords[i], kc[:, i]) for i in range(region.dimension))
        e_vals = np.exp(1j * phase) / math.sqrt(vol)           # (n_mask, nk)
        overlaps = (basis.stack.conj() @ e_vals) * h_d          # <b_j, e_k>
        nvals = np.einsum("j,jk->k", pdm.occupations, np.abs(overlaps) ** 2)
        if pdm.coherences is not None:
            nvals = nvals + np.einsum(
                "jk,jl,lk->k", overlaps.conj(), pdm.coherences, overlaps
            ).real
        values[lo : lo + len(kc)] = nvals.real
    peak = int(np.argmax(values))
    dists = region.diameter * np.linalg.norm(ks - ks[peak], axis=1)
    amp, expo = _envelope_fit(dists, values)
    return MomentumSpectrum(
        wavevectors=ks,
        values=values,
        peak_index=peak,
        peak_wavevector=ks[peak],
        peak_value=float(values[peak]),
        diameter=region.diameter,
        tail_amplitude=amp,
        tail_exponent=expo,
    )


# ---------------------------------------------------------------------------
# closed-form peak profile (d = 3 balls)


def _ball_form_factor(u: float) -> float:
    """F(u) = 3 (sin u - u cos u) / u^3, the normalized ball overlap."""
    if u < 5e-3:
        u2 = u * u
        return 1.0 - u2 / 10.0 + u2 * u2 / 280.0
    return 3.0 * (math.sin(u) - u * math.cos(u)) / u**3


def closed_form_peak(dimension: int, diameter: float, u_arg: float, n_c: float) -> float:
    """Condensate contribution to N(k) on a d=3 ball of diameter L:
    n_C * 9 u^-6 (sin u - u cos u)^2 at u = L|k - p|/2; n_C in the
    u -> 0 limit.

    Only the three-dimensional ball is validated against the quadrature
    oracle; other dimensions must use the direct quadrature path.
    """
    if dimension != 3:
        raise ParameterError(
            f"closed-form peak is validated for dimension 3 only, got {dimension}"
        )
    if diameter <= 0:
        raise ParameterError("diameter must be positive")
    if u_arg < 0:
        raise ParameterError("u_arg must be nonnegative")
    return n_c * _ball_form_factor(u_arg) ** 2


def ball_overlap_quadrature(
    q_norm: float, resolution: int, refined: bool = True, subcells: int = 8
) -> float:
    """Riemann quadrature of |<e_k, e_p>|^2 on a d=3 ball, |k - p| = q_norm
    (only the separation enters, by rotation invariance; units of 1/L).

    `refined` applies one level of subcell refinement: boundary cells
    get the fraction of `subcells`^3 interior subcell centers as weight,
    and the exact midpoint-rule phase factor is divided out.  The plain
    mask sum (refined=False) carries O(h) boundary jitter that does not
    extrapolate; the refined sum is smooth in h.
    """
    n = int(resolution)
    h = 1.0 / n
    ax = -0.5 + (np.arange(n) + 0.5) * h
    x, y, z = np.meshgrid(ax, ax, ax, indexing="ij")
    r = np.sqrt(x**2 + y**2 + z**2)
    if not refined:
        m = r < 0.5
        s = np.exp(-1j * q_norm * x[m]).sum() / np.count_nonzero(m)
        return abs(s) ** 2
    w = np.zeros_like(r)
    half_diag = h * math.sqrt(3.0) / 2.0
    w[r < 0.5 - half_diag] = 1.0
    boundary = (r >= 0.5 - half_diag) & (r < 0.5 + half_diag)
    xb, yb, zb = x[boundary], y[boundary], z[boundary]
    off = ((np.arange(subcells) + 0.5) / subcells - 0.5) * h
    frac = np.zeros(xb.size)
    for ox in off:
        for oy in off:
            for oz in off:
                frac += (xb + ox) ** 2 + (yb + oy) ** 2 + (zb + oz) ** 2 < 0.25
    w[boundary] = frac / subcells**3
    s = complex((w * np.exp(-1j * q_norm * x)).sum() / w.sum())
    if q_norm != 0.0:
        theta = q_norm * h / 2.0
        s *= theta / math.sin(theta)  # exact midpoint-rule dequantization
    return abs(s) ** 2


def closed_form_consistency(
    diameter: float,
    separations,
    n_c: float,
    resolution: int = 96,
) -> list[dict]:
    """Cross-check closed_form_peak against the refined ball quadrature.

    For each |k - p| separation: evaluates the closed form, the refined
    quadrature at `resolution`, and a coarse (half-resolution) value
    whose difference from the fine one estimates the discretization
    error.  Separations are in absolute wave-vector units.
    """
    out = []
    for q in separations:
        q = float(q)
        u = diameter * q / 2.0
        closed = closed_form_peak(3, diameter, u, n_c)
        fine = n_c * ball_overlap_quadrature(q * diameter, resolution)
        coarse = n_c * ball_overlap_quadrature(q * diameter, resolution // 2)
        rel = abs(fine - closed) / abs(closed) if closed != 0 else 0.0
        out.append(
            {
                "separation": q,
                "u": u,
                "closed_form": closed,
                "quadrature": fine,
                "relative_error": rel,
                "error_estimate": abs(fine - coarse),
            }
        )
    return out


# ---------------------------------------------------------------------------
# homogeneity test (Definition III form)


@dataclass(frozen=True, eq=False)
class HomogeneityResult:
    passed: bool
    deviations: np.ndarray            # worst deviation per sigma
    tolerance: float
    worst: float


def homogeneity_test(
    family: StateFamily,
    schedule,
    probes,
    translations,
    candidate: WaveFunction | None = None,
    n_r: float = 1.0,
    tolerance: float | None = None,
) -> HomogeneityResult:
    """Deviation of n_C^-1 Gamma(T_x f, T_x g) from <f, s><s, g> over
    probe pairs and translations, per schedule point.

    Passes when the deviation sequence decays (last < first) and the
    final value sits below tolerance * (1 + |f||g|); the default
    tolerance is 10 sqrt(n_R / n_C(sigma_last)).
    """
    schedule = [float(s) for s in schedule]
    region = family.region
    probes = list(probes)
    for f in probes:
        _check_probe(f)
        if not (region.compactly_contains(f.support) or region == f.support):
            raise PreconditionError("probe support must lie compactly inside the region")
    xs = _as_translation_array(translations, region.dimension)
    if candidate is None:
        candidate = extract_singular_function(family.at(max(schedule))).function
    # translated probe coefficients are sigma-independent
    coeff_sets = []
    for x in xs:
        moved = [translate(f, x) for f in probes]
        for g in moved:
            if not (region.compactly_contains(g.support) or region == g.support):
                raise PreconditionError(
                    f"translation {x.tolist()} pushes a probe support out of the region"
                )
        coeff_sets.append(np.array([family.basis.coefficients(g) for g in moved]))
    a = np.array([inner(f, candidate) for f in probes])
    target = np.outer(a, a.conj())
    deviations = np.empty(len(schedule))
    n_c_last = None
    for i, sigma in enumerate(schedule):
        pdm = family.at(sigma)
        n_c = max(pdm.occupation(candidate), 0.0)
        if n_c <= 0:
            raise PreconditionError(f"candidate occupation vanishes at sigma={sigma}")
        n_c_last = n_c
        worst = 0.0
        for coeffs in coeff_sets:
            g_mat = (coeffs.conj() * pdm.occupations) @ coeffs.T
            if pdm.coherences is not None:
                g_mat = g_mat + coeffs.conj() @ pdm.coherences @ coeffs.T
            worst = max(worst, float(np.abs(g_mat / n_c - target).max()))
        deviations[i] = worst
    if tolerance is None:
        tolerance = 10.0 * math.sqrt(max(n_r, 0.0) / n_c_last)
    bound = tolerance * 2.0  # probes are normalized: 1 + |f||g| = 2
    passed = bool(deviations[-1] < deviations[0] and deviations[-1] < bound)
    return HomogeneityResult(
        passed=passed,
        deviations=deviations,
        tolerance=float(tolerance),
        worst=float(deviations.max()),
    )


# ---------------------------------------------------------------------------
# peak and tail diagnostics


@dataclass(frozen=True)
class PeakTailReport:
    peak_value: float
    sharpness: float                  # N(p) / max N over L|k-p| > 2
    bound_onset_u: float              # smallest u* with N <= 4 n_C (L|k-p|)^-2 beyond it
    envelope_exponent: float          # amplitude envelope, expected -2
    envelope_amplitude: float
    lobe_distances: np.ndarray        # L|k-p| at the fitted lobe maxima
    lobe_values: np.ndarray


def peak_tail_report(spectrum: MomentumSpectrum, n_c: float, diameter: float, p) -> PeakTailReport:
    """Tail diagnostics of a momentum spectrum against a fitted momentum.

    Reports peak sharpness, the empirical onset u* of the reference
    bound 4 n_C (L|k-p|)^-2, and the amplitude-envelope power law fitted
    on lobe maxima (the intensity envelope decays twice as fast).
    """
    p = np.asarray(p, dtype=float)
    dists = diameter * np.linalg.norm(spectrum.wavevectors - p, axis=1)
    values = spectrum.values
    at_p = float(values[int(np.argmin(dists))])
    beyond = dists > 2.0
    sharpness = at_p / float(values[beyond].max()) if np.any(beyond) else math.inf
    # bound scan: violations of N <= 4 n_C (L|k-p|)^-2, in units u = L|k-p|/2
    u = dists / 2.0
    positive = dists > 0
    bound = np.full_like(values, math.inf)
    bound[positive] = 4.0 * n_c / dists[positive] ** 2
    violating = values > bound
    if violating.any():
        u_last = float(u[violating].max())
        after = u[u > u_last]
        onset = float(after.min()) if after.size else math.inf
    else:
        onset = 0.0
    lobes = _lobe_maxima(dists, values, cut=2.0)
    lobes = lobes[values[lobes] > 0]
    if lobes.size >= 3:
        slope, icpt = np.polyfit(np.log(dists[lobes]), 0.5 * np.log(values[lobes]), 1)
        amp, expo = float(math.exp(icpt)), float(slope)
    else:
        amp = expo = math.nan
    return PeakTailReport(
        peak_value=at_p,
        sharpness=float(sharpness),
        bound_onset_u=onset,
        envelope_exponent=expo,
        envelope_amplitude=amp,
        lobe_distances=dists[lobes],
        lobe_values=values[lobes],
    )
