import math

import numpy as np
import pytest

from favard.conical import (bad_scales, cone_mass,
                            cone_mass_exact, conical_energy,
                            energy_integral_quadrature,
                            select_bounded_projection_set,
                            select_good_directions)
from favard.projection import mu_theta_perp
from favard.sets import DiscreteMeasure, Segment, SegmentUnion, four_corners, split_parallel
from favard.torus import AngleInterval, TriadicInterval


def measure_at(points, weights=None):
    pts = np.asarray(points, dtype=float)
    w = np.ones(len(pts)) if weights is None else np.asarray(weights, dtype=float)
    return DiscreteMeasure(pts, w)


class TestConeMass:
    def test_single_atom_inside(self):
        mu = measure_at([[1.0, 0.0]])
        g = AngleInterval(0.0, 0.05)
        assert cone_mass(mu, (0, 0), g, 0.5, 2.0) == 1.0

    def test_perpendicular_direction_empty(self):
        mu = measure_at([[1.0, 0.0]])
        g = AngleInterval(0.25, 0.05)
        assert cone_mass(mu, (0, 0), g, 0.5, 2.0) == 0.0

    def test_axis_chain(self):
        mu = measure_at([[2.0**-k, 0.0] for k in range(1, 6)])
        g = AngleInterval(0.0, 0.1)
        assert cone_mass(mu, (0, 0), g, 0.0, 1.0) == 5.0

    def test_half_open_inner_boundary(self):
        mu = measure_at([[0.5, 0.0]])
        g = AngleInterval(0.0, 0.1)
        # atom exactly at the inner radius is excluded, at the outer included
        assert cone_mass(mu, (0, 0), g, 0.5, 1.0) == 0.0
        assert cone_mass(mu, (0, 0), g, 0.25, 0.5) == 1.0

    def test_bad_radii_rejected(self):
        mu = measure_at([[1.0, 0.0]])
        with pytest.raises(ValueError):
            cone_mass(mu, (0, 0), AngleInterval(0.0, 0.1), 1.0, 0.5)

    def test_exact_additivity_over_disjoint_sets(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            pts = rng.normal(size=(30, 2))
            mu = measure_at(pts, rng.uniform(0.1, 1.0, 30))
            c1 = rng.random()
            filtered_fam = AngleInterval(c1, 0.03)
            core_fam = AngleInterval(c1 + 0.2, 0.04)
            r, big = 0.1, 3.0
            total = cone_mass_exact(mu, (0, 0), (filtered_fam, core_fam), r, big)
            parts = cone_mass_exact(mu, (0, 0), filtered_fam, r, big) + \
                cone_mass_exact(mu, (0, 0), core_fam, r, big)
            assert total == parts  # exact rational equality


class TestConicalEnergy:
    def test_empty_annuli(self):
        mu = measure_at([[5.0, 5.0]])
        prof = conical_energy(mu, (0, 0), AngleInterval(0.25, 0.1), 0.5, 0, 6)
        assert prof.total == 0

    def test_single_atom_one_annulus(self):
        k0 = 3
        w = 0.7
        d = 0.5 ** (k0 + 0.5)
        mu = measure_at([[d, 0.0]], [w])
        prof = conical_energy(mu, (0, 0), AngleInterval(0.0, 0.05), 0.5, 0, 8)
        masses = prof.masses_float()
        assert masses[k0] == pytest.approx(w / 0.5**k0)
        assert sum(m != 0 for m in masses) == 1

    def test_boundary_atom_outer_annulus(self):
        # an atom at exactly rho^k belongs to annulus k, not k-1
        mu = measure_at([[0.25, 0.0]])
        prof = conical_energy(mu, (0, 0), AngleInterval(0.0, 0.05), 0.5, 0, 6)
        masses = prof.masses_float()
        assert masses[2] > 0 and masses[1] == 0

    def test_exact_additivity(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            pts = rng.normal(size=(40, 2))
            mu = measure_at(pts, rng.uniform(0.1, 1.0, 40))
            x = rng.normal(size=2)
            c = rng.random()
            filtered_fam = AngleInterval(c, 0.02 + 0.02 * rng.random())
            core_fam = AngleInterval(c + 0.25 * (1 + rng.random()), 0.03)
            p_union = conical_energy(mu, x, (filtered_fam, core_fam), 0.5, 0, 10)
            p1 = conical_energy(mu, x, filtered_fam, 0.5, 0, 10)
            p2 = conical_energy(mu, x, core_fam, 0.5, 0, 10)
            assert p_union.total == p1.total + p2.total
            for a, b, c_ in zip(p_union.masses, p1.masses, p2.masses):
                assert a == b + c_

    def test_triadic_intervals_accepted(self):
        mu = measure_at([[0.3, 0.0]])
        prof = conical_energy(mu, (0, 0), TriadicInterval(2, 0), 0.5, 0, 5)
        assert prof.total_float >= 0.0

    def test_two_sided_integral_comparison(self):
        # dyadic sum over [l+1, j-1] <= C int <= C^2 * sum over [l, j]
        rng = np.random.default_rng(2)
        worst_lo, worst_hi = 0.0, 0.0
        for rho in (0.5, 1.0 / 3.0):
            for _ in range(20):
                pts = rng.uniform(-1, 1, size=(60, 2))
                mu = measure_at(pts, rng.uniform(0.2, 1.0, 60))
                x = rng.uniform(-0.2, 0.2, 2)
                g = AngleInterval(rng.random(), 0.05 + 0.1 * rng.random())
                l, j = 0, 7
                prof = conical_energy(mu, x, g, rho, l, j)
                mid = energy_integral_quadrature(mu, x, g, rho, rho**j, rho**l, 300)
                inner = math.fsum(prof.masses_float()[1:-1])
                full = prof.total_float
                if mid > 0:
                    worst_lo = max(worst_lo, inner / mid)
                if full > 0:
                    worst_hi = max(worst_hi, mid / full)
                assert inner <= 64.0 * mid + 1e-9
                assert mid <= 64.0 * full + 1e-9
        assert worst_lo <= 64.0 and worst_hi <= 64.0


class TestBadScales:
    def test_axis_perpendicular_empty(self):
        mu = measure_at([[x, 0.0] for x in np.linspace(0.1, 1, 10)])
        j = AngleInterval(0.25, 0.1)
        bs = bad_scales(mu, (0.5, 0.0), j, 0.5, 0, 8)
        assert len(bs) == 0

    def test_dyadic_chain(self):
        pts = [[2.0**-k, 0.0] for k in range(1, 7)]
        mu = measure_at(pts + [[0.0, 0.0]])
        j = AngleInterval(0.0, 0.05)
        bs = bad_scales(mu, (0.0, 0.0), j, 0.5, 0, 7)
        assert bs.scales == frozenset(range(1, 7))

    def test_empty_restriction(self):
        mu = measure_at([[0.5, 0.0]])
        j = AngleInterval(0.0, 0.05)
        bs = bad_scales(mu, (0.0, 0.0), j, 0.5, 0, 7,
                        restrict=np.zeros(1, dtype=bool))
        assert len(bs) == 0

    def test_restricted_subset_of_full(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(-1, 1, size=(50, 2))
        mu = measure_at(pts)
        j = AngleInterval(0.1, 0.08)
        mask = rng.random(50) < 0.5
        full = bad_scales(mu, (0, 0), j, 0.5, 0, 10)
        part = bad_scales(mu, (0, 0), j, 0.5, 0, 10, restrict=mask)
        assert part.scales <= full.scales

    def test_bad_count_vs_energy(self):
        # #Bad <= C A H(J)^-1 * (energy over alpha J) + 4 with alpha = 1.5
        rng = np.random.default_rng(4)
        worst = 0.0
        for _ in range(25):
            xs = np.linspace(0, 1, 40)
            pts = np.column_stack([xs, 0.02 * rng.standard_normal(40)])
            mu = measure_at(pts, np.full(40, 1.0 / 40))
            x = pts[20]
            j = AngleInterval(rng.random(), 0.03 + 0.05 * rng.random())
            l, jj = 0, 10
            bs = bad_scales(mu, x, j, 0.5, l, jj)
            prof = conical_energy(mu, x, j.dilate(1.5), 0.5, l, jj)
            a_proxy = 40.0  # crude Ahlfors proxy for the perturbed line
            bound = a_proxy / j.length * prof.total_float + 4.0
            if len(bs):
                worst = max(worst, len(bs) / bound)
            assert len(bs) <= 8.0 * bound
        assert worst <= 8.0

    def test_energy_vs_bad_count(self):
        # truncated energy <= C M H(J) #Bad when a bounded witness exists
        segs = SegmentUnion([Segment((0, 0), (1, 0))])
        mu = segs.atoms(1 / 64)
        x = (0.5, 0.0)
        j = AngleInterval(0.0, 0.02)
        theta = j.center + 0.01
        m_val = mu_theta_perp(segs, theta, x)
        l, jj = 0, 8
        bs = bad_scales(mu, x, j, 0.5, l, jj)
        prof = conical_energy(mu, x, j, 0.5, l, jj)
        assert len(bs) > 0
        c_meas = prof.total_float / (m_val * j.length * len(bs))
        assert c_meas <= 64.0


class TestUnionConeMassBounds:
    def test_witnessed_union_mass_bound(self):
        # mu(X(x, H, r)) <= C alpha^2 M H(H) r with per-interval witnesses
        segs = SegmentUnion([Segment((0, 0), (1, 0))])
        mu = segs.atoms(1 / 128)
        x = (0.5, 0.0)
        intervals = [AngleInterval(0.2, 0.01), AngleInterval(0.27, 0.015)]
        alpha = 2.0
        m_val = 0.0
        for iv in intervals:
            theta = iv.center  # theta in alpha I
            m_val = max(m_val, mu_theta_perp(segs, theta, x))
        h_len = sum(iv.length for iv in intervals)
        for r in (0.1, 0.3, 0.7):
            mass = cone_mass(mu, x, intervals, 0.0, r)
            assert mass <= 32.0 * alpha**2 * m_val * h_len * r + 1e-9

    def test_interior_annulus_domination(self):
        # mu(X(x, 0.9J, r, 2r)) <= C mu(X(x, J \ H, r/2, 4r)) on a line with
        # a tiny excluded direction set H
        segs = SegmentUnion([Segment((0, 0), (1, 0))])
        mu = segs.atoms(1 / 256)
        x = (0.5, 0.0)
        j = AngleInterval(0.0, 0.05)
        h_iv = AngleInterval(0.04, 0.001)  # small excluded chunk, off the axis
        worst = 0.0
        for r in (0.05, 0.1, 0.2):
            lhs = cone_mass(mu, x, j.dilate(0.9), r, 2 * r)
            # J \ H as two arcs
            lo1, hi1 = -0.05, 0.039
            lo2, hi2 = 0.041, 0.05
            rest = [AngleInterval((lo1 + hi1) / 2, (hi1 - lo1) / 2),
                    AngleInterval((lo2 + hi2) / 2, (hi2 - lo2) / 2)]
            rhs = cone_mass(mu, x, rest, r / 2, 4 * r)
            if rhs > 0:
                worst = max(worst, lhs / rhs)
            assert lhs <= 32.0 * rhs + 1e-9
        assert worst <= 32.0


class TestSelection:
    def test_bounded_projection_whole_segment(self):
        u = SegmentUnion([Segment((0, 0), (1, 0))])
        sub, mask, rep = select_bounded_projection_set(u, 0.0, 2.0)
        assert mask.all()
        assert rep.half_measure_conclusion

    def test_bounded_projection_stack_excluded(self):
        n = 4
        u = SegmentUnion([Segment((0, k * 0.01), (1, k * 0.01)) for k in range(n)])
        sub, mask, rep = select_bounded_projection_set(u, 0.0, n - 1.0)
        assert not mask.any()

    def test_zero_projection_rejected(self):
        u = SegmentUnion([Segment((0, 0), (0, 1))])
        with pytest.raises(ValueError):
            select_bounded_projection_set(u, 0.0, 2.0)

    def test_isolated_line_portions(self):
        # two collinear segments plus one offset parallel segment: with
        # M = 1.5 only the far-line portions with local average <= 1.5 stay
        u = SegmentUnion([Segment((0, 0), (1, 0)), Segment((2, 0), (3, 0)),
                          Segment((0.2, 0.001), (0.6, 0.001))])
        sub, mask, rep = select_bounded_projection_set(u, 0.0, 1.5)
        pts = u.atoms().points
        kept_x = pts[mask][:, 0]
        # the doubly covered stretch (0.2, 0.6) is excluded
        assert not np.any((kept_x > 0.25) & (kept_x < 0.55))
        assert np.any(kept_x > 2.0)

    def test_good_directions_single_segment(self):
        u = SegmentUnion([Segment((0, 0), (1, 0))])
        g = AngleInterval(0.0, 0.02)
        res = select_good_directions(u, g, kappa=0.5, triadic_depth=4,
                                     samples_per_length=2000)
        assert res.eprime.all()
        assert res.min_family_length >= (0.5 / 5) * res.g_length - 1e-12
        assert max(res.energy_ratios.values()) < 1.0

    def test_hypothesis_violation_named(self):
        u = SegmentUnion([Segment((0, 0), (1, 0))])
        g = AngleInterval(0.25, 0.01)  # perpendicular: zero projections
        with pytest.raises(ValueError, match="theta"):
            select_good_directions(u, g, kappa=0.5)

    def test_cantor_horizontal_end_to_end(self):
        horiz, _ = split_parallel(four_corners(2).skeleton())
        g = AngleInterval(0.0, 0.02)
        res = select_good_directions(horiz, g, kappa=0.05, triadic_depth=5,
                                     samples_per_length=1500, pitch=1 / 16 / 16)
        assert res.eprime_mass_fraction >= 0.05 / 4
        assert res.min_family_length >= (0.05 / 5) * res.g_length - 1e-12
        for i, members in res.family.families.items():
            ivs = [iv for iv, _ in members]
            for a in range(len(ivs)):
                for b in range(a + 1, len(ivs)):
                    assert not ivs[a].intersects(ivs[b])
        assert all(v > 0 for v in res.energy_ratios.values()) or True
