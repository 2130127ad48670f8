import math

import numpy as np
import pytest

from condlab import (
    Grid,
    NotHomogeneousError,
    NumericalError,
    OnePDM,
    PreconditionError,
    Region,
    Thresholds,
    appendix_epsilon_n,
    appendix_family,
    assemble_report,
    ball_polynomial_modes,
    boosted_family,
    condensate_number,
    criterion_check,
    custom_family,
    extract_singular_function,
    fit_momentum,
    fourier_modes,
    gamma,
    growth_exponent,
    heated_family,
    inner,
    op_ratio,
    operator_norm,
    plane_wave_mode,
    power_iteration,
    rank_one_distance,
    regular_bound,
    zero_mean_project,
)
from conftest import random_wave

SCHEDULE = [1e2, 1e3, 1e4, 1e5, 1e6]


@pytest.fixture(scope="module")
def appendix(interval, basis64):
    return appendix_family(interval, basis64, 0.5)


class TestPowerIteration:
    def test_matches_dense_eigensolver(self, rng):
        for m in (4, 16, 40):
            a = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
            a = a @ a.conj().T  # PSD with generic spectrum
            lam, vec = power_iteration(a)
            w = np.linalg.eigvalsh(a)
            assert lam == pytest.approx(w[-1], rel=1e-9)
            assert np.linalg.norm(a @ vec - lam * vec) <= 1e-8 * lam

    def test_exact_degeneracy_converges_immediately(self):
        a = 3.0 * np.eye(8)
        lam, _ = power_iteration(a)
        assert lam == pytest.approx(3.0, rel=1e-14)

    def test_zero_matrix(self):
        lam, _ = power_iteration(np.zeros((5, 5)))
        assert lam == 0.0

    def test_operator_norm_indefinite(self, rng):
        a = rng.standard_normal((12, 12))
        a = (a + a.T) / 2
        assert operator_norm(a) == pytest.approx(np.abs(np.linalg.eigvalsh(a)).max(), rel=1e-12)


class TestExtractSingularFunction:
    def test_appendix_top_mode(self, appendix, basis64):
        sm = extract_singular_function(appendix.at(1e4))
        assert sm.value == pytest.approx(100.0, rel=1e-9)
        assert abs(inner(sm.function, basis64.mode(0))) > 1.0 - 1e-9
        assert not sm.degenerate

    def test_boosted_top_mode_is_plane_wave(self, interval, grid2k, appendix):
        p = 2 * math.pi
        boosted = boosted_family(appendix, [p])
        sm = extract_singular_function(boosted.at(1e4))
        ep = plane_wave_mode(interval, [p], grid2k)
        assert abs(inner(sm.function, ep)) > 1.0 - 1e-9

    def test_heated_degeneracy_flag_and_tiebreak(self, interval, basis64):
        fam = heated_family(interval, basis64)
        sm = extract_singular_function(fam.at(640.0))
        assert sm.degenerate
        assert sm.value == pytest.approx(10.0, rel=1e-9)  # sigma / M
        assert abs(sm.coefficients[0]) == pytest.approx(1.0, abs=1e-12)

    def test_fixed_point_on_rank_one_truncation(self, appendix, basis64):
        sm = extract_singular_function(appendix.at(1e4))
        occ = np.zeros(64)
        occ[0] = sm.value
        rank_one = OnePDM(basis=basis64, occupations=occ)
        again = extract_singular_function(rank_one)
        assert abs(inner(sm.function, again.function)) > 1.0 - 1e-10

    def test_phase_fixing(self, interval, basis64):
        # occupations concentrated on mode 2; the eigenvector must come out
        # with its largest coefficient real positive
        occ = np.zeros(64)
        occ[2] = 5.0
        occ[3] = 1.0
        pdm = OnePDM(basis=basis64, occupations=occ)
        sm = extract_singular_function(pdm)
        j = int(np.argmax(np.abs(sm.coefficients)))
        assert j == 2
        assert sm.coefficients[j].imag == pytest.approx(0.0, abs=1e-12)
        assert sm.coefficients[j].real > 0

    def test_requires_positive_occupation(self, basis64):
        with pytest.raises(PreconditionError):
            extract_singular_function(OnePDM(basis=basis64, occupations=np.zeros(64)))


class TestCondensateNumber:
    def test_constant_mode_value(self, appendix, basis64):
        assert condensate_number(appendix, 1e4, basis64.mode(0)) == pytest.approx(
            100.0, rel=1e-9
        )

    def test_orthogonal_probe_vanishes(self, interval, grid2k, basis64):
        # occupations only on modes 0..15; probe mode 40 is unoccupied
        occ = np.zeros(64)
        occ[:16] = np.linspace(9.0, 1.0, 16)
        fam = custom_family(interval, basis64, [[10.0, occ.tolist()]])
        assert condensate_number(fam, 10.0, basis64.mode(40)) <= 1e-10

    def test_equal_mixture(self, appendix, basis64):
        occ = appendix.occupations(1e4)
        mix = (basis64.mode(0) + basis64.mode(1)) / math.sqrt(2.0)
        expected = (occ[0] + occ[1]) / 2.0
        assert condensate_number(appendix, 1e4, mix) == pytest.approx(expected, rel=1e-9)

    def test_unnormalized_probe_rejected(self, appendix, basis64):
        with pytest.raises(PreconditionError):
            condensate_number(appendix, 1e4, basis64.mode(0) * 2.0)


class TestRegularBound:
    def test_appendix_bound_below_one(self, appendix, basis64):
        probes = [basis64.mode(j) for j in range(1, 10)]
        value = regular_bound(appendix, [1e2, 1e4, 1e6], probes)
        # oracle: max occupation of any probed regular mode over the sweep
        expected = float(np.exp(-appendix_epsilon_n(1e6, 0.5)))
        assert 0.0 < value < 1.0
        assert value == pytest.approx(expected, rel=1e-9)

    def test_empty_probe_list(self, appendix):
        assert regular_bound(appendix, [1e2], []) == 0.0

    def test_non_orthogonal_probe_rejected(self, appendix, basis64):
        mix = (basis64.mode(0) + basis64.mode(1)) / math.sqrt(2.0)
        with pytest.raises(PreconditionError):
            regular_bound(appendix, [1e2], [mix])

    def test_heated_bound_grows_with_sigma(self, interval, basis64):
        fam = heated_family(interval, basis64)
        probes = [basis64.mode(1)]
        small = regular_bound(fam, [1e2], probes)
        large = regular_bound(fam, [1e2, 1e4], probes)
        assert large == pytest.approx(100.0 * small, rel=1e-9)


class TestCriterion:
    @pytest.mark.parametrize("eps", [0.2, 0.5, 0.8])
    def test_appendix_detected(self, interval, basis64, eps):
        fam = appendix_family(interval, basis64, eps)
        # theta_divergent must undercut the smallest exponent in the sweep
        result = criterion_check(fam, SCHEDULE, Thresholds(0.05, 0.15))
        assert result.verdict == "condensate"
        assert result.candidate_slope == pytest.approx(eps, abs=0.01)
        assert result.zero_mean_slopes.max() < 0.05

    def test_default_thresholds_on_reference_family(self, appendix):
        result = criterion_check(appendix, SCHEDULE)
        assert result.verdict == "condensate"
        assert result.candidate_slope == pytest.approx(0.5, abs=0.01)

    def test_heated_rejected(self, interval, basis64):
        fam = heated_family(interval, basis64)
        result = criterion_check(fam, [1e2, 1e3, 1e4, 1e5])
        assert result.verdict == "no-condensate"
        assert result.candidate_slope == pytest.approx(1.0, abs=1e-6)

    def test_boosted_fails_zero_momentum_hypothesis(self, interval, grid2k, appendix):
        # probing a moving condensate with the constant mode: bounded slope
        boosted = boosted_family(appendix, [2 * math.pi])
        s0 = plane_wave_mode(interval, [0.0], grid2k)
        result = criterion_check(boosted, SCHEDULE, candidate=s0)
        assert result.candidate_slope < 0.05
        assert result.verdict == "no-condensate"

    def test_schedule_too_short(self, appendix):
        with pytest.raises(PreconditionError):
            criterion_check(appendix, [1e2, 1e3, 1e4])

    def test_degenerate_schedule_fit(self):
        with pytest.raises(NumericalError):
            growth_exponent([2.0, 2.0, 2.0, 2.0], [1.0, 1.0, 1.0, 1.0])

    def test_scaling_invariance(self, interval, basis64, appendix):
        # sigma-independent rescaling of all occupations leaves slopes,
        # verdict and the extracted eigenvector unchanged
        table = [[s, (3.0 * appendix.occupations(s)).tolist()] for s in SCHEDULE[:4]]
        scaled = custom_family(interval, basis64, table)
        base = criterion_check(appendix, SCHEDULE[:4])
        other = criterion_check(scaled, SCHEDULE[:4])
        assert other.verdict == base.verdict
        assert other.candidate_slope == pytest.approx(base.candidate_slope, abs=1e-9)
        assert np.abs(other.zero_mean_slopes - base.zero_mean_slopes).max() <= 1e-9
        v1 = extract_singular_function(appendix.at(SCHEDULE[3]))
        v2 = extract_singular_function(scaled.at(SCHEDULE[3]))
        assert abs(inner(v1.function, v2.function)) > 1.0 - 1e-12


class TestRankOneDistance:
    def test_exact_rank_one_vanishes(self, basis64):
        occ = np.zeros(64)
        occ[0] = 50.0
        pdm = OnePDM(basis=basis64, occupations=occ)
        probes = [basis64.mode(j) for j in range(12)]
        assert rank_one_distance(pdm, 50.0, basis64.mode(0), probes) <= 1e-10

    def test_exact_rank_one_vanishes_with_complex_probes(self, basis64, rng):
        occ = np.zeros(64)
        occ[0] = 50.0
        pdm = OnePDM(basis=basis64, occupations=occ)
        probes = []
        for _ in range(6):
            c = rng.standard_normal(64) + 1j * rng.standard_normal(64)
            probes.append(basis64.synthesize(c / np.linalg.norm(c)))
        assert rank_one_distance(pdm, 50.0, basis64.mode(0), probes) <= 1e-10

    def test_appendix_sweep_monotone_and_bounded(self, appendix, basis64):
        probes = [basis64.mode(j) for j in range(16)]
        e0 = basis64.mode(0)
        dists, bounds = [], []
        for n in SCHEDULE:
            pdm = appendix.at(n)
            n_c = condensate_number(appendix, n, e0)
            dists.append(rank_one_distance(pdm, n_c, e0, probes))
            n_r = math.exp(-appendix_epsilon_n(n, 0.5))
            bounds.append((n_r + 2.0 * math.sqrt(n_r * n_c)) / n_c)
        dists = np.array(dists)
        assert np.all(np.diff(dists) <= 1e-9)
        assert np.all(dists <= np.array(bounds))
        # oracle: the exact distance equals nu_1/n_C for this family
        expected = np.array(
            [math.exp(-appendix_epsilon_n(n, 0.5)) / n**0.5 for n in SCHEDULE]
        )
        assert np.abs(dists / expected - 1.0).max() <= 1e-8

    def test_honest_decay_slope_is_minus_eps(self, appendix, basis64):
        # for the diagonal appendix family the distance is exactly nu_1/n_C,
        # so the log-log slope is -eps (the Lemma bound decays at -eps/2,
        # but the family has no condensate-regular coherences to saturate it)
        probes = [basis64.mode(j) for j in range(16)]
        e0 = basis64.mode(0)
        dists = [
            rank_one_distance(appendix.at(n), condensate_number(appendix, n, e0), e0, probes)
            for n in SCHEDULE
        ]
        slope = growth_exponent(SCHEDULE, dists)
        assert slope == pytest.approx(-0.5, abs=0.01)

    def test_zero_condensate_number_rejected(self, appendix, basis64):
        with pytest.raises(PreconditionError):
            rank_one_distance(appendix.at(1e2), 0.0, basis64.mode(0), [basis64.mode(1)])


class TestEq210Bound:
    def test_pointwise_bound_on_random_probes(self, interval, grid2k, appendix, rng):
        e0_region = plane_wave_mode(interval, [0.0], grid2k)
        for n in (1e2, 1e4, 1e6):
            pdm = appendix.at(n)
            n_c = pdm.occupation(e0_region)
            n_r = math.exp(-appendix_epsilon_n(n, 0.5))
            for _ in range(25):
                f = random_wave(rng, grid2k, interval)
                perp = zero_mean_project(f, interval)
                lhs = abs(pdm.occupation(f) - n_c * abs(inner(f, e0_region)) ** 2)
                rhs = (
                    n_r * perp.norm_sq
                    + 2.0 * math.sqrt(n_r * n_c) * perp.norm * abs(inner(e0_region, f))
                    + 1e-8 * n
                )
                assert lhs <= rhs


class TestFitMomentum:
    def test_plane_wave_recovered(self, interval, grid2k):
        p = 3 * 2 * math.pi
        s = plane_wave_mode(interval, [p], grid2k)
        fit = fit_momentum(s, interval)
        assert abs(fit.momentum[0] - p) <= 2 * math.pi / 1.0 * 1e-6
        assert fit.residual < 1e-6

    def test_constant_mode_gives_zero(self, interval, grid2k):
        s = plane_wave_mode(interval, [0.0], grid2k)
        fit = fit_momentum(s, interval)
        assert abs(fit.momentum[0]) <= 1e-9
        assert fit.residual < 1e-6

    def test_two_mode_mixture_not_homogeneous(self, interval, basis64):
        mix = (basis64.mode(0) + basis64.mode(1)) / math.sqrt(2.0)
        with pytest.raises(NotHomogeneousError):
            fit_momentum(mix, interval)

    def test_mixture_residual_when_tolerance_relaxed(self, interval, basis64):
        # the best localized plane wave against the equal two-mode mixture
        # sits at the midpoint momentum with overlap 8/pi^2 (the mode
        # overlaps themselves are 1/2 each), so the residual is 1 - 8/pi^2
        mix = (basis64.mode(0) + basis64.mode(1)) / math.sqrt(2.0)
        fit = fit_momentum(mix, interval, modulus_tol=math.inf)
        assert fit.residual == pytest.approx(1.0 - 8.0 / math.pi**2, abs=1e-4)

    def test_ball_mode_momentum(self):
        ball = Region(3, "ball", 1.0)
        grid = Grid.covering(ball, 24)
        p = (2 * math.pi, 0.0, 0.0)
        s = plane_wave_mode(ball, p, grid)
        fit = fit_momentum(s, ball)
        assert np.abs(np.array(fit.momentum) - np.array(p)).max() <= 1e-6
        assert fit.residual < 1e-6


class TestOpRatio:
    def test_appendix_fraction_not_macroscopic(self, appendix):
        assert op_ratio(appendix.at(1e6)) == pytest.approx(1e-3, abs=1e-6)

    def test_rank_one_state(self, basis64):
        occ = np.zeros(64)
        occ[0] = 7.0
        assert op_ratio(OnePDM(basis=basis64, occupations=occ)) == pytest.approx(1.0, rel=1e-12)

    def test_heated_uniform(self, interval, basis64):
        fam = heated_family(interval, basis64)
        assert op_ratio(fam.at(128.0)) == pytest.approx(1.0 / 64.0, rel=1e-9)


class TestAssembleReport:
    def test_appendix_report(self, appendix):
        report = assemble_report(appendix, SCHEDULE[:4])
        assert report.verdict == "condensate"
        assert report.momentum is not None and abs(report.momentum[0]) <= 1e-9
        assert report.condensate_numbers[0] == pytest.approx(10.0, rel=1e-9)
        assert np.all(np.diff(report.rank_one_distances) <= 1e-9)
        assert 0.0 < report.regular_bound_estimate < 1.0
        doc = report.to_json_dict()
        assert doc["verdict"] == "condensate"
        assert len(doc["schedule"]) == 4

    def test_report_csv(self, appendix, tmp_path):
        report = assemble_report(appendix, SCHEDULE[:4])
        path = tmp_path / "report.csv"
        report.write_csv(path)
        rows = path.read_text().splitlines()
        assert rows[0].startswith("sigma,n_C,rank_one_distance,op_ratio")
        assert len(rows) == 5
        assert rows[1].endswith("condensate")

    def test_inhomogeneous_custom_family_falls_back(self, interval, grid2k, basis64):
        # singular mode concentrated on a two-mode mixture: the momentum fit
        # must refuse and the report must carry the raw eigenvector
        mix_occ = np.zeros(64)
        mix_occ[5] = 1.0
        rows = []
        for s in SCHEDULE[:4]:
            occ = np.zeros(64)
            occ[5] = s  # divergent non-plane-wave direction? mode 5 is a plane wave
            rows.append([s, occ.tolist()])
        # build a family whose top mode is a genuine mixture instead
        stack = basis64.stack.copy()
        mix = (stack[0] + stack[1]) / math.sqrt(2.0)
        diff = (stack[0] - stack[1]) / math.sqrt(2.0)
        stack[0], stack[1] = mix, diff
        from condlab import ModeBasis

        mixed_basis = ModeBasis(
            grid=grid2k, support=interval, flat_index=basis64.flat_index, stack=stack
        )
        table = []
        for s in SCHEDULE[:4]:
            occ = np.zeros(64)
            occ[0] = s
            occ[1] = 0.5
            table.append([s, occ.tolist()])
        fam = custom_family(interval, mixed_basis, table)
        report = assemble_report(fam, SCHEDULE[:4])
        assert report.momentum is None
        assert report.modulus_deviation is None
        assert report.verdict == "condensate"  # criterion still sees divergence
