"""Conical energies, bad scales, and good-direction selection.

Masses of truncated cones under a discrete measure drive everything here.
Annuli use the half-open radial convention (r, R] so that the dyadic annuli
(rho^{k+1}, rho^k] tile without double counting; per-scale masses accumulate
as exact rationals so that energies are exactly additive over disjoint
direction sets, independent of grouping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .projection import (DEFAULT_PERP_CUTOFF, project, project_segments,
                         pushforward_density)
from .sets import DiscreteMeasure, SegmentUnion
from .torus import (TOL, AngleInterval, DirectionInterval, TriadicInterval,
                    _as_intervals, _direction_mask, triadic_cover, wrap)


def _atoms_of(model, pitch: Optional[float] = None) -> DiscreteMeasure:
    if isinstance(model, DiscreteMeasure):
        return model
    if isinstance(model, SegmentUnion):
        return model.atoms(pitch)
    if isinstance(model, np.ndarray):
        return DiscreteMeasure(model, np.ones(len(model)))
    raise TypeError(f"no atom model for {type(model)!r}")


def _interval_key(interval: DirectionInterval) -> tuple[float, float]:
    half = interval.half_width if isinstance(interval, AngleInterval) else interval.length / 2.0
    return (wrap(interval.center - half), half)


def annulus_mask(mu: DiscreteMeasure, x, interval: DirectionInterval,
                 r: float, big_r: float) -> np.ndarray:
    """Atoms of mu in X(x, interval, r, R) with the half-open convention (r, R]."""
    apex = np.asarray(x, dtype=float)
    diff = mu.points - apex
    dist = np.hypot(diff[:, 0], diff[:, 1])
    if math.isfinite(big_r):
        radial = dist <= big_r
    else:
        radial = np.ones(len(dist), dtype=bool)
    if r > 0.0:
        radial &= dist > r
    return radial & _direction_mask(apex, interval, mu.points, dist)


def cone_mass_exact(mu: DiscreteMeasure, x, directions, r: float, big_r: float) -> Fraction:
    """mu(X(x, G, r, R)) as an exact rational.

    G is a single arc or a disjoint union of arcs; the mass is computed per
    arc (in canonical arc order) and summed in rational arithmetic, so it is
    exactly additive over disjoint direction sets.
    """
    if r < 0.0 or big_r <= r:
        raise ValueError("need 0 <= r < R")
    total = Fraction(0)
    for interval in sorted(_as_intervals(directions), key=_interval_key):
        mask = annulus_mask(mu, x, interval, r, big_r)
        for w in mu.weights[mask].tolist():
            total += Fraction(w)
    return total


def cone_mass(mu: DiscreteMeasure, x, directions, r: float, big_r: float) -> float:
    """Float view of cone_mass_exact."""
    return float(cone_mass_exact(mu, x, directions, r, big_r))


@dataclass
class EnergyProfile:
    """Per-scale normalized annulus masses m_k = mu(X(x, G, rho^{k+1}, rho^k)) / rho^k."""

    rho: float
    low: int
    high: int
    masses: list[Fraction]

    @property
    def total(self) -> Fraction:
        return sum(self.masses, Fraction(0))

    @property
    def total_float(self) -> float:
        return float(self.total)

    def masses_float(self) -> list[float]:
        return [float(m) for m in self.masses]


def conical_energy(mu: DiscreteMeasure, x, directions, rho: float = 0.5,
                   low: int = 0, high: int = 30) -> EnergyProfile:
    """Truncated conical energy sum_{k=low}^{high} mu(X(x, G, rho^{k+1}, rho^k)) / rho^k.

    Comparable (two-sidedly, with rho-dependent constants) to the integral
    form int mu(X(x, G, rho r, r)) / r dr/r over the matching range. Additive
    over disjoint direction sets exactly: every per-scale mass is an exact
    rational and the arcs are processed in canonical order.
    """
    if not (0.0 < rho <= 0.5):
        raise ValueError("rho must lie in (0, 1/2]")
    if low > high:
        raise ValueError("need low <= high")
    intervals = sorted(_as_intervals(directions), key=_interval_key)
    apex = np.asarray(x, dtype=float)
    diff = mu.points - apex
    dist = np.hypot(diff[:, 0], diff[:, 1])
    log_rho = math.log(rho)
    masses = [Fraction(0) for _ in range(high - low + 1)]
    for interval in intervals:
        dmask = _direction_mask(apex, interval, mu.points, dist)
        sel = dmask & (dist > rho ** (high + 1)) & (dist <= rho**low)
        hits = np.nonzero(sel)[0]
        for i in hits:
            d = float(dist[i])
            # log estimate, then exact boundary fixup to match the (r, R] rule
            k = int(math.floor(math.log(d) / log_rho + 1e-9))
            while d <= rho ** (k + 1):
                k += 1
            while d > rho**k:
                k -= 1
            if low <= k <= high:
                masses[k - low] += Fraction(float(mu.weights[i])) / Fraction(rho) ** k
    return EnergyProfile(rho, low, high, masses)


def energy_integral_quadrature(mu: DiscreteMeasure, x, directions, rho: float,
                               r_min: float, r_max: float, n: int = 400) -> float:
    """Independent quadrature oracle for int_{r_min}^{r_max} mu(X(x,G,rho r,r))/r dr/r.

    Midpoint rule in log r with plain float annulus masses; used to check the
    two-sided comparison with the dyadic sums, never as the primary energy.
    """
    if not (0.0 < r_min < r_max):
        raise ValueError("need 0 < r_min < r_max")
    apex = np.asarray(x, dtype=float)
    diff = mu.points - apex
    dist = np.hypot(diff[:, 0], diff[:, 1])
    dmask = np.zeros(len(dist), dtype=bool)
    for interval in _as_intervals(directions):
        dmask |= _direction_mask(apex, interval, mu.points, dist)
    d_in = dist[dmask]
    w_in = mu.weights[dmask]
    logs = np.linspace(math.log(r_min), math.log(r_max), n + 1)
    mids = (logs[:-1] + logs[1:]) / 2.0
    h = logs[1] - logs[0]
    vals = []
    for lr in mids:
        r = math.exp(lr)
        mass = float(w_in[(d_in > rho * r) & (d_in <= r)].sum())
        vals.append(mass / r)
    return math.fsum(vals) * h


@dataclass(frozen=True)
class BadScaleSet:
    """Scales k in [low, high] whose annulus cone meets the (restricted) set."""

    scales: frozenset[int]
    low: int
    high: int

    def __len__(self) -> int:
        return len(self.scales)

    def __contains__(self, k: int) -> bool:
        return k in self.scales


def bad_scales(model, x, direction: DirectionInterval, rho: float = 0.5,
               low: int = 0, high: int = 30,
               restrict: Optional[np.ndarray] = None,
               pitch: Optional[float] = None) -> BadScaleSet:
    """Bad scales of x for the direction interval: k with X(x, J, rho^{k+1}, rho^k)
    meeting the atom model (or the subset selected by the boolean `restrict`).
    """
    if low > high:
        raise ValueError("need low <= high")
    mu = _atoms_of(model, pitch)
    pts = mu.points if restrict is None else mu.points[restrict]
    apex = np.asarray(x, dtype=float)
    diff = pts - apex
    dist = np.hypot(diff[:, 0], diff[:, 1])
    dmask = _direction_mask(apex, direction, pts, dist)
    dist = dist[dmask]
    bad = set()
    for k in range(low, high + 1):
        rk, rk1 = rho**k, rho ** (k + 1)
        if np.any((dist > rk1) & (dist <= rk)):
            bad.add(k)
    return BadScaleSet(frozenset(bad), low, high)


@dataclass
class BoundedProjectionReport:
    theta: float
    m_bound: float
    projection_measure: float
    total_mass: float
    selected_mass: float
    weak_type_hypothesis: bool      # M >= C_weak * H(E) / H(pi_theta(E))
    half_measure_conclusion: bool   # selected mass >= projection measure / 2


def select_bounded_projection_set(union: SegmentUnion, theta: float, m_bound: float,
                                  pitch: Optional[float] = None,
                                  c_weak: float = 6.0,
                                  perp_cutoff: float = DEFAULT_PERP_CUTOFF,
                                  ) -> tuple[DiscreteMeasure, np.ndarray, BoundedProjectionReport]:
    """Atoms x of E with mu_theta(x) <= M, plus the weak-(1,1) bookkeeping.

    Raises when the projection has zero measure. When the weak-type threshold
    M >= c_weak * H(E)/H(pi_theta(E)) holds, the report records whether the
    selected mass reaches half the projection measure.
    """
    if m_bound <= 0.0:
        raise ValueError("M must be positive")
    proj = project_segments(union, theta)
    if proj.measure <= 0.0:
        raise ValueError(f"projection at theta={theta} has zero measure")
    mu = _atoms_of(union, pitch)
    density = pushforward_density(union, theta, perp_cutoff)
    t_vals = mu.points @ np.array([math.cos(2 * math.pi * theta), math.sin(2 * math.pi * theta)])
    from .projection import maximal_values_batch
    keep = maximal_values_batch(density, t_vals) <= m_bound + TOL
    total = mu.total_mass
    selected = math.fsum(mu.weights[keep].tolist())
    hyp = m_bound >= c_weak * total / proj.measure
    rep = BoundedProjectionReport(theta, m_bound, proj.measure, total, selected,
                                  hyp, selected >= proj.measure / 2.0 - TOL)
    return mu.restrict(keep), keep, rep


@dataclass
class GoodDirectionFamily:
    """Per-atom families of disjoint triadic intervals with witness angles.

    families[i] is a list of (interval, witness_theta) pairs for atom i; the
    witness satisfies mu_{theta}(x_i) <= m_bound (checked where recorded).
    """

    families: dict[int, list[tuple[TriadicInterval, float]]]
    m_bound: float
    good_set_length: dict[int, float] = field(default_factory=dict)

    def intervals(self, i: int) -> list[TriadicInterval]:
        return [iv for iv, _ in self.families.get(i, [])]

    def union_length(self, i: int) -> float:
        return math.fsum(iv.length for iv in self.intervals(i))


def write_energy_csv(path, entries) -> None:
    """Energy profiles as CSV rows x1,x2,k,m_k for (point, profile) entries."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x1", "x2", "k", "m_k"])
        for point, profile in entries:
            for k, m in zip(range(profile.low, profile.high + 1),
                            profile.masses_float()):
                writer.writerow([repr(float(point[0])), repr(float(point[1])),
                                 k, repr(m)])


@dataclass
class SelectionResult:
    atoms: DiscreteMeasure
    eprime: np.ndarray                   # boolean mask over atoms
    family: GoodDirectionFamily
    kappa: float
    m_bound: float
    g_length: float                      # H(G)
    eprime_mass_fraction: float          # selected mass over total mass
    min_family_length: float             # smallest per-atom family union length
    energy_ratios: dict[int, float]      # atom -> energy / (M * H(G))
    fourier_ratios: dict[int, float]     # atom -> energy / int_G pi_theta mu(pi_theta x)

    def to_json(self, path) -> None:
        """Selection output keyed by atom index."""
        import json

        payload = {
            "kappa": self.kappa, "m_bound": self.m_bound, "g_length": self.g_length,
            "eprime_mass_fraction": self.eprime_mass_fraction,
            "atoms": {
                str(i): {
                    "point": [float(self.atoms.points[i][0]),
                              float(self.atoms.points[i][1])],
                    "intervals": [{"level": iv.level, "index": iv.index,
                                   "witness": th} for iv, th in fam],
                    "energy_ratio": self.energy_ratios.get(i),
                }
                for i, fam in sorted(self.family.families.items())
            },
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1)


def select_good_directions(union: SegmentUnion, directions, kappa: float,
                           m_bound: Optional[float] = None, *,
                           c_m: float = 6.0,
                           samples_per_length: int = 729,
                           triadic_depth: int = 6,
                           rho: float = 0.5,
                           pitch: Optional[float] = None,
                           energy_high: Optional[int] = None,
                           perp_cutoff: float = DEFAULT_PERP_CUTOFF) -> SelectionResult:
    """Select the large-mass subset with per-point good triadic direction
    families (big projections to bounded projections to finite families).

    directions: the measurable set G of directions with large projections, as
    one arc or a union of arcs. Every sampled theta in G must satisfy
    H(pi_theta(E)) > kappa H(E); otherwise the offending theta is reported.
    The families are the depth-`triadic_depth` triadic intervals containing at
    least one sampled direction that is good for the atom; the witness is such
    a sample. Conical energies over the perpendicular families are recorded as
    ratios against M H(G).
    """
    if not (0.0 < kappa < 1.0):
        raise ValueError("kappa must lie in (0, 1)")
    if m_bound is None:
        m_bound = c_m / kappa
    intervals = _as_intervals(directions)
    total_len = math.fsum(2.0 * iv.half_width if isinstance(iv, AngleInterval) else iv.length
                          for iv in intervals)
    if total_len <= 0.0:
        raise ValueError("empty direction set")
    mu = _atoms_of(union, pitch)
    total_mass = mu.total_mass

    # deterministic midpoint samples, proportional to arc length
    thetas: list[float] = []
    for iv in intervals:
        if isinstance(iv, AngleInterval):
            lo, ln = iv.center - iv.half_width, 2.0 * iv.half_width
        else:
            lo, ln = iv.low, iv.length
        n = max(2, int(round(samples_per_length * ln)))
        thetas.extend(wrap(lo + (i + 0.5) * ln / n) for i in range(n))
    weight = total_len / len(thetas)

    # big-projection hypothesis, then bounded-projection subsets per sample
    good = np.zeros((len(thetas), len(mu)), dtype=bool)
    for j, theta in enumerate(thetas):
        proj = project_segments(union, theta)
        if proj.measure <= kappa * total_mass + TOL:
            raise ValueError(
                f"big projection hypothesis fails at theta={theta}: "
                f"H(pi_theta(E)) = {proj.measure} <= kappa H(E) = {kappa * total_mass}")
        density = pushforward_density(union, theta, perp_cutoff)
        e = np.array([math.cos(2 * math.pi * theta), math.sin(2 * math.pi * theta)])
        t_vals = mu.points @ e
        from .projection import maximal_values_batch
        good[j] = maximal_values_batch(density, t_vals) <= m_bound + TOL

    good_len = good.sum(axis=0) * weight      # per-atom good-direction measure
    eprime = good_len >= (kappa / 4.0) * total_len - TOL
    eprime_mass = math.fsum(mu.weights[eprime].tolist())

    families: dict[int, list[tuple[TriadicInterval, float]]] = {}
    for i in np.nonzero(eprime)[0]:
        chosen: dict[tuple[int, int], float] = {}
        for j, theta in enumerate(thetas):
            if good[j, i]:
                key_iv = triadic_cover(theta, triadic_depth)
                chosen.setdefault((key_iv.level, key_iv.index), theta)
        families[int(i)] = [(TriadicInterval(lv, ix), th)
                            for (lv, ix), th in sorted(chosen.items())]

    fam = GoodDirectionFamily(families, m_bound)
    min_len = min((fam.union_length(i) for i in families), default=0.0)

    if energy_high is None:
        energy_high = _auto_energy_high(mu, rho)
    energy_ratios: dict[int, float] = {}
    fourier_ratios: dict[int, float] = {}
    for i, members in families.items():
        perp_intervals = [iv.perp() for iv, _ in members]
        prof = conical_energy(mu, mu.points[i], perp_intervals, rho, 0, energy_high)
        energy = prof.total_float
        energy_ratios[i] = energy / (m_bound * total_len)
        # pointwise pushforward values integrated over the family, the
        # reference quantity the energies are compared against
        pointwise = []
        for iv, _ in members:
            n = 8
            for kq in range(n):
                th = wrap(iv.low + (kq + 0.5) * iv.length / n)
                density = pushforward_density(union, th, perp_cutoff)
                pointwise.append(density.value_at(project(th, mu.points[i])) * iv.length / n)
        rhs = math.fsum(pointwise)
        fourier_ratios[i] = energy / rhs if rhs > 0.0 else math.inf

    return SelectionResult(mu, eprime, fam, kappa, m_bound, total_len,
                           eprime_mass / total_mass if total_mass else 0.0,
                           min_len, energy_ratios, fourier_ratios)


def _auto_energy_high(mu: DiscreteMeasure, rho: float) -> int:
    """Smallest k_high making the truncated sum exact: past the minimum atom gap
    every annulus is empty."""
    if len(mu) < 2:
        return 1
    gap = _min_gap(mu.points)
    if gap <= 0.0:
        return 40
    k = max(1, math.ceil(math.log(gap) / math.log(rho)))
    return min(k + 1, 60)


def _min_gap(pts: np.ndarray) -> float:
    best = math.inf
    n = len(pts)
    block = 512
    for a in range(0, n, block):
        pa = pts[a:a + block]
        for b in range(a, n, block):
            pb = pts[b:b + block]
            dx = pa[:, None, 0] - pb[None, :, 0]
            dy = pa[:, None, 1] - pb[None, :, 1]
            d = np.hypot(dx, dy)
            if a == b:
                np.fill_diagonal(d, math.inf)
            m = float(d.min()) if d.size else math.inf
            best = min(best, m)
    return best
