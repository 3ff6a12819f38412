import numpy as np
import pytest

from clockspin import (
    ESR,
    NMR,
    RefinementError,
    branch_function,
    find_all_cts,
    group_doublets,
    refine_ct,
    scan_and_bracket,
    sweep,
)
from clockspin.clock_finder import DERIV_TOL, FIELD_TOL, Bracket, ct_rows

CT_KEY = ((-2.0, 0), (-1.0, 1))

# frozen regression values: (B* [T], f* [GHz]) for Si:Bi on [0.005, 0.6] T
DFDB_CTS = [
    (ESR, 0.02654118233, 7.338685844),
    (ESR, 0.02667351271, 7.338313341),
    (ESR, 0.07983120832, 7.032800133),
    (ESR, 0.07995800328, 7.031681609),
    (ESR, 0.13342323165, 6.374138311),
    (ESR, 0.13353801960, 6.372269582),
    (ESR, 0.18808602758, 5.216830317),
    (ESR, 0.18817909637, 5.214196461),
    (NMR, 0.36785255287, 1.040524645),
    (NMR, 0.36964036562, 1.045687033),
    (NMR, 0.51345216709, 0.850007598),
    (NMR, 0.52647008395, 0.857284761),
]
DFDA_FIELDS = [0.0266073476, 0.0798946060, 0.1334806260, 0.1881325627, 0.3687398229, 0.5197156317]


@pytest.fixture(scope="module")
def cts_bi(bi):
    return find_all_cts(bi, (0.005, 0.6))


class TestScan:
    def test_ct_branch_one_bracket(self, bi):
        res = scan_and_bracket(bi, CT_KEY, (0.01, 0.2), n_grid=512)
        assert len(res.brackets) == 1
        br = res.brackets[0]
        assert br.lo <= 0.0798 + 5e-4 and br.hi >= 0.0798 - 5e-4

    def test_stretched_branch_no_bracket(self, bi):
        res = scan_and_bracket(bi, ((4.0, 0), (5.0, 0)), (0.005, 0.6), n_grid=256)
        assert res.brackets == []

    def test_rejects_small_grid_and_bad_range(self, bi):
        with pytest.raises(ValueError):
            scan_and_bracket(bi, CT_KEY, (0.01, 0.2), n_grid=8)
        with pytest.raises(ValueError):
            scan_and_bracket(bi, CT_KEY, (0.2, 0.01))

    def test_brackets_contain_sign_change(self, bi):
        g = branch_function(bi, CT_KEY, "dfdB")
        for br in scan_and_bracket(bi, CT_KEY, (0.005, 0.6), n_grid=300).brackets:
            assert np.sign(g(br.lo)) != np.sign(g(br.hi))


class TestRefine:
    @pytest.mark.parametrize("B_star,c", [(0.0798, 110.0), (0.4, -3.0), (0.123456789, 0.5)])
    def test_synthetic_quadratic(self, B_star, c):
        # f(B) = f0 + c (B - B*)^2, so df/dB = 2c (B - B*)
        func = lambda B: 2 * c * (B - B_star)  # noqa: E731
        br = Bracket(key=("mock",), lo=B_star - 0.013, hi=B_star + 0.021, g_lo=func(B_star - 0.013),
                     g_hi=func(B_star + 0.021))
        ct = refine_ct(br, None, func=func)
        assert abs(ct.B_star - B_star) <= FIELD_TOL
        assert ct.curvature == pytest.approx(2 * c, rel=1e-9)

    def test_no_sign_change(self):
        func = lambda B: 1.0 + B**2  # noqa: E731
        with pytest.raises(RefinementError):
            refine_ct(Bracket(("mock",), 0.0, 1.0, 1.0, 2.0), None, func=func)

    def test_failing_derivative(self):
        def func(B):
            raise FloatingPointError("boom")

        with pytest.raises(RefinementError):
            refine_ct(Bracket(("mock",), 0.0, 1.0, -1.0, 1.0), None, func=func)

    def test_step_discontinuity_rejected(self):
        # sign change without a root: certificate passes but |g| stays large
        func = lambda B: -1.0 if B < 0.5 else 1.0  # noqa: E731
        with pytest.raises(RefinementError):
            refine_ct(Bracket(("mock",), 0.0, 1.0, -1.0, 1.0), None, func=func)

    def test_real_ct(self, bi):
        br = scan_and_bracket(bi, CT_KEY, (0.01, 0.2), n_grid=512).brackets[0]
        ct = refine_ct(br, bi)
        assert ct.B_star == pytest.approx(0.0798, abs=5e-4)
        assert ct.f_star == pytest.approx(7.0317, abs=5e-4)
        assert abs(ct.residual) <= DERIV_TOL
        assert ct.selection == 1 and ct.kind == ESR
        assert ct.label_i == "|F=4, mF=-2>" and ct.label_j == "|F=5, mF=-1>"


class TestFindAll:
    def test_regression_dfdB(self, cts_bi):
        assert len(cts_bi) == len(DFDB_CTS)
        for ct, (kind, B, f) in zip(cts_bi, DFDB_CTS):
            assert ct.kind == kind
            assert ct.B_star == pytest.approx(B, abs=1e-9)
            assert ct.f_star == pytest.approx(f, abs=1e-8)

    def test_certified(self, bi, cts_bi):
        for ct in cts_bi:
            g = branch_function(bi, ct.key, "dfdB")
            assert abs(g(ct.B_star)) <= DERIV_TOL
            assert g(ct.B_star - FIELD_TOL) * g(ct.B_star + FIELD_TOL) <= 0

    def test_curvature_signs(self, cts_bi):
        # ESR CTs are frequency minima, the ~1 GHz NMR CTs maxima
        for ct in cts_bi:
            assert (ct.curvature > 0) == (ct.kind == ESR)
        ct80 = next(c for c in cts_bi if c.key == CT_KEY)
        assert ct80.curvature == pytest.approx(110.415, abs=0.01)

    def test_doublets(self, cts_bi):
        sites = [s for s in group_doublets(cts_bi) if s.kind == ESR]
        assert len(sites) == 4
        assert all(s.is_doublet for s in sites)
        assert np.round([s.B_mean * 1e3 for s in sites]).tolist() == [27, 80, 133, 188]
        assert all(s.splitting <= 3e-3 for s in sites)

    def test_monotone_discovery(self, bi, cts_bi):
        coarse = find_all_cts(bi, (0.005, 0.6), n_grid=256)
        fine = find_all_cts(bi, (0.005, 0.6), n_grid=4096)
        assert {c.key for c in coarse} <= {c.key for c in cts_bi} <= {c.key for c in fine}
        assert len(fine) == len(cts_bi)

    def test_include_weak(self, bi, cts_bi):
        assert len(find_all_cts(bi, (0.005, 0.6), include_weak=True)) >= len(cts_bi)

    def test_empty_range(self, bi):
        assert find_all_cts(bi, (0.4, 0.4)) == []
        with pytest.raises(ValueError):
            find_all_cts(bi, (0.4, 0.3))
        with pytest.raises(ValueError):
            find_all_cts(bi, (0.1, 0.3), quantity="d2fdB2")

    def test_dfdA_regression(self, bi):
        cts = find_all_cts(bi, (0.005, 0.6), quantity="dfdA")
        assert len(cts) == 12
        fields = sorted({round(c.B_star, 9) for c in cts})
        assert fields == pytest.approx(DFDA_FIELDS, abs=1e-9)

    def test_dfdA_against_dense_grid(self, bi):
        # independent check: |dfdA| minimum on a dense grid sits next to each root
        cts = find_all_cts(bi, (0.005, 0.25), quantity="dfdA")
        grid = np.linspace(0.005, 0.25, 20001)
        sw = sweep(bi, grid)
        si = sw.expectation(sw.ops.SdotI)
        for ct in cts:
            i, j = sw.branch_index(ct.key[0]), sw.branch_index(ct.key[1])
            g = np.abs(si[:, j] - si[:, i])
            near = np.abs(grid - ct.B_star) < 2e-3
            B_min = grid[near][np.argmin(g[near])]
            assert abs(B_min - ct.B_star) <= grid[1] - grid[0]

    def test_phosphorus(self, phos):
        cts = find_all_cts(phos, (0.005, 0.6))
        assert not [c for c in cts if c.kind == ESR]
        assert len(cts) == 2
        assert all(c.B_star == pytest.approx(0.0845340434, abs=1e-9) for c in cts)

    def test_rows(self, cts_bi):
        rows = ct_rows(cts_bi)
        assert list(rows[0]) == ["quantity", "kind", "B_star_T", "f_star_GHz", "curvature_GHz_per_T2",
                                 "level_i", "level_j", "selection"]
