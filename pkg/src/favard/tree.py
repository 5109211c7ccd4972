"""The good-direction tree: stage families, shattering, packing, gap intervals.

Pipeline order: per-point families of good triadic direction intervals come in
(from selection or synthetic fixtures); ``build_good_stages`` prunes them to
the energy-controlled stages; ``build_tree`` grows the tree of anisotropic
cubes adapted to the very good directions, with the shattering procedure that
narrows the direction interval at a fixed generation; ``verify_tree`` checks
the structural properties exhaustively; ``collect_bad_cubes`` and
``packing_sums`` measure the packing quantities; ``propagate_good_directions``
iterates the stage construction until the finished set is large; and
``find_gap_interval`` realizes the self-contained gap-interval construction
(tube, strips, beats chain, nice strip, exit tube).

All interval-measure arithmetic runs in integer units of 3^-D for a common
depth D, so coverage tests and packing sums are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .conical import annulus_mask, bad_scales, conical_energy
from .lattice import AnisoCube, descend
from .sets import DiscreteMeasure
from .torus import (TOL, AngleInterval, TriadicInterval, d_metric,
                    d_metric_many, direction_vector, perp, wrap)

Family = list[tuple[TriadicInterval, float]]     # (interval, witness angle)


@dataclass
class TreeParams:
    """Knobs of the tree pipeline; defaults are the desk-scale choices."""

    rho: float = 0.5
    k_max: int = 5
    triadic_depth: int = 5          # max shattering depth below the root interval
    c_eps: float = 2.0**-6          # eps = c_eps / (A M)
    energy_high: Optional[int] = None
    c_j: float = 1.0                # root-interval length budget c_j / (A M)
    c_lambda: float = 2.0**-8
    big_lambda: float = 2.0**6
    c_n: float = 8.0                # N_strips = ceil(c_n * A * M)
    c_y: float = 0.25
    max_rounds: int = 64
    check_witnesses: bool = False


# ---------------------------------------------------------------------------
# exact triadic interval arithmetic (integer units)
# ---------------------------------------------------------------------------


class TriadicUnits:
    """Lengths and intersections of triadic intervals in units of 3^-depth."""

    def __init__(self, depth: int):
        self.depth = depth
        self.scale = 3**depth

    def length(self, iv: TriadicInterval) -> int:
        if iv.level > self.depth:
            raise ValueError(f"interval level {iv.level} below unit depth {self.depth}")
        return 3 ** (self.depth - iv.level)

    def bounds(self, iv: TriadicInterval) -> tuple[int, int]:
        u = self.length(iv)
        return iv.index * u, (iv.index + 1) * u

    def overlap(self, a: TriadicInterval, b: TriadicInterval) -> int:
        a0, a1 = self.bounds(a)
        b0, b1 = self.bounds(b)
        return max(0, min(a1, b1) - max(a0, b0))

    def union_length(self, ivs: Iterable[TriadicInterval]) -> int:
        spans = sorted(self.bounds(iv) for iv in ivs)
        total, cur_hi = 0, None
        for lo, hi in spans:
            if cur_hi is None or lo >= cur_hi:
                total += hi - lo
                cur_hi = hi
            elif hi > cur_hi:
                total += hi - cur_hi
                cur_hi = hi
        return total

    def cover_length(self, target: TriadicInterval, ivs: Iterable[TriadicInterval]) -> int:
        t0, t1 = self.bounds(target)
        spans = sorted(self.bounds(iv) for iv in ivs)
        total, cur = 0, t0
        for lo, hi in spans:
            lo, hi = max(lo, t0), min(hi, t1)
            if hi <= max(lo, cur):
                continue
            total += hi - max(lo, cur)
            cur = max(cur, hi)
        return total

    def to_float(self, units: int) -> float:
        return units / self.scale


def maximal_intervals(ivs: Sequence[TriadicInterval]) -> list[TriadicInterval]:
    """Maximal members of a family of triadic intervals (containment order)."""
    out: list[TriadicInterval] = []
    for iv in sorted(set(ivs), key=lambda t: (t.level, t.index)):
        if not any(kept.contains(iv) for kept in out):
            out.append(iv)
    return out


# ---------------------------------------------------------------------------
# stage construction
# ---------------------------------------------------------------------------


@dataclass
class GoodStages:
    """Per-point direction families and the derived energy-controlled stages."""

    atoms: DiscreteMeasure
    root_iv: TriadicInterval
    a_const: float
    m_bound: float
    eps: float
    rho: float
    units: TriadicUnits
    eprime: np.ndarray                       # bool mask over atoms
    families: dict[int, Family]              # per-selected-atom direction families
    energy_high: int
    energy_threshold: float                  # twice-average energy cutoff
    controlled: np.ndarray                   # energy-controlled subset of selected
    energies: dict[int, float]               # per-point energy over the family
    cover: dict[int, list[TriadicInterval]]
    filtered: dict[int, list[TriadicInterval]]
    core: dict[int, list[TriadicInterval]]
    full_cover: np.ndarray
    partial_cover: np.ndarray
    interval_budget_point: dict[int, float]
    interval_budget: float
    scale_budget: float
    checks: dict

    def core_universe(self) -> list[TriadicInterval]:
        seen = {}
        for ivs in self.core.values():
            for iv in ivs:
                seen[(iv.level, iv.index)] = iv
        return [seen[k] for k in sorted(seen)]

    def core_carriers(self, interval: TriadicInterval) -> np.ndarray:
        key = (interval.level, interval.index)
        out = [i for i, ivs in self.core.items()
               if any((iv.level, iv.index) == key for iv in ivs)]
        return np.array(sorted(out), dtype=np.int64)


def _family_intervals(fam: Family) -> list[TriadicInterval]:
    return [iv for iv, _ in fam]


def _maximal_cover(root_iv: TriadicInterval, members: list[TriadicInterval],
                   units: TriadicUnits, eps: float) -> list[TriadicInterval]:
    """Maximal triadic descendants of the root covered by the members to
    fraction at least 1 - eps."""
    out: list[TriadicInterval] = []

    def rec(iv: TriadicInterval) -> None:
        cov = units.cover_length(iv, members)
        if cov == 0:
            return
        need = (1.0 - eps) * units.length(iv)
        if cov >= need - 1e-9:
            out.append(iv)
            return
        for ch in iv.children():
            rec(ch)

    rec(root_iv)
    return out


def _clip_to(target: TriadicInterval, members: list[TriadicInterval]) -> list[TriadicInterval]:
    """target n union(members) as a list of triadic intervals (members nested)."""
    pieces = []
    for m in members:
        if target.contains(m):
            pieces.append(m)
        elif m.contains(target):
            return [target]
    return pieces


def build_good_stages(atoms: DiscreteMeasure, eprime: np.ndarray,
                      families: dict[int, Family], root_iv: TriadicInterval,
                      a_const: float, m_bound: float,
                      params: Optional[TreeParams] = None) -> GoodStages:
    """Prune per-point families to the energy-controlled stage families.

    The controlled set keeps the points whose energy over the family union is
    at most twice the average (plus one); the cover family is the maximal
    triadic cover of the union at coverage 1 - eps; the filtered family drops
    cover members with oversized per-interval energy; the core family takes
    their middle children. Verified side conditions land in `checks`.
    """
    params = params or TreeParams()
    eps = params.c_eps / (a_const * m_bound)
    units = TriadicUnits(root_iv.level + params.triadic_depth + 3)
    eprime = np.asarray(eprime, dtype=bool)
    emass = math.fsum(atoms.weights[eprime].tolist())
    if emass <= 0.0:
        raise ValueError("the selected set carries no mass")

    for i, fam in families.items():
        ivs = _family_intervals(fam)
        for iv in ivs:
            if not root_iv.contains(iv):
                raise ValueError(f"family interval {iv} of atom {i} outside the root interval")
        for a, b in zip(sorted(ivs, key=lambda t: units.bounds(t)),
                        sorted(ivs, key=lambda t: units.bounds(t))[1:]):
            if units.overlap(a, b) > 0:
                raise ValueError(f"family of atom {i} is not disjoint")

    high = params.energy_high
    if high is None:
        from .conical import _auto_energy_high
        high = _auto_energy_high(atoms, params.rho)

    energies: dict[int, float] = {}
    for i in np.nonzero(eprime)[0]:
        fam = families.get(int(i), [])
        ivs = _family_intervals(fam)
        if not ivs:
            energies[int(i)] = 0.0
            continue
        prof = conical_energy(atoms, atoms.points[i], ivs, params.rho, 0, high)
        energies[int(i)] = prof.total_float

    weighted = math.fsum(energies[int(i)] * atoms.weights[i] for i in np.nonzero(eprime)[0])
    energy_threshold = weighted / emass + 1.0

    controlled = np.zeros(len(atoms), dtype=bool)
    for i in np.nonzero(eprime)[0]:
        if energies[int(i)] <= 2.0 * energy_threshold + TOL:
            controlled[i] = True
    e0_mass = math.fsum(atoms.weights[controlled].tolist())
    chebyshev_ok = e0_mass >= emass / 2.0 - TOL

    cover: dict[int, list[TriadicInterval]] = {}
    filtered: dict[int, list[TriadicInterval]] = {}
    core: dict[int, list[TriadicInterval]] = {}
    interval_budget_point: dict[int, float] = {}
    g1_large_ok = True
    g0_covers_ok = True
    for i in np.nonzero(controlled)[0]:
        i = int(i)
        members = _family_intervals(families[i])
        cover_ivs = _maximal_cover(root_iv, members, units, eps)
        cover[i] = cover_ivs
        g0_len = units.union_length(cover_ivs)
        if units.cover_length(root_iv, cover_ivs) < units.union_length(members):
            g0_covers_ok = False
        kept = []
        for iv in cover_ivs:
            pieces = _clip_to(iv, members)
            if not pieces:
                continue
            prof = conical_energy(atoms, atoms.points[i], pieces, params.rho, 0, high)
            bound = 4.0 * (units.length(iv) / g0_len) * energy_threshold
            if prof.total_float <= bound + TOL:
                kept.append(iv)
        filtered[i] = kept
        g_len = units.union_length(members)
        g1_cap = sum(units.cover_length(iv, members) for iv in kept)
        if g1_cap < g_len / 3.0 - 1e-9:
            g1_large_ok = False
        core[i] = [iv.middle_child() for iv in kept]
        interval_budget_point[i] = max(energy_threshold / units.to_float(g0_len), m_bound)

    full_cover = np.zeros(len(atoms), dtype=bool)
    partial_cover = np.zeros(len(atoms), dtype=bool)
    root_key = (root_iv.level, root_iv.index)
    for i in np.nonzero(controlled)[0]:
        i = int(i)
        if [(iv.level, iv.index) for iv in cover[i]] == [root_key]:
            full_cover[i] = True
        else:
            partial_cover[i] = True

    interval_budget = max(interval_budget_point.values(), default=m_bound)
    checks = {
        "chebyshev_e0": chebyshev_ok,
        "e0_mass_fraction": e0_mass / emass,
        "g1_large": g1_large_ok,
        "g0_covers": g0_covers_ok,
    }
    return GoodStages(atoms, root_iv, a_const, m_bound, eps, params.rho, units, eprime,
                      families, high, energy_threshold, controlled, energies, cover, filtered, core,
                      full_cover, partial_cover, interval_budget_point, interval_budget, a_const * interval_budget, checks)


@dataclass
class FamilyGrowth:
    families: dict[int, Family]
    finished_mask: np.ndarray
    containment_ok: bool
    growth_ok: bool
    min_growth_ratio: float      # smallest unfinished growth over eps * old length


def grow_families(stages: GoodStages) -> FamilyGrowth:
    """New families: maximal intervals among the old members and the parents
    of the filtered-stage members.

    Points outside the controlled set keep their family; points whose cover
    family is already the whole root interval jump straight to it. Witness
    angles are inherited from a contained old member. Verifies the two-sided
    containment and the measured unfinished growth against the rigorous
    (eps/3) bound.
    """
    units = stages.units
    out: dict[int, Family] = {}
    root_iv = stages.root_iv
    e_fin = np.zeros(len(stages.atoms), dtype=bool)
    containment_ok = True
    min_ratio = math.inf

    def witness_for(target: TriadicInterval, fam: Family) -> float:
        for iv, th in fam:
            if target.contains(iv):
                return th
        raise AssertionError(f"no old member inside {target}")

    for i in np.nonzero(stages.eprime)[0]:
        i = int(i)
        fam = stages.families[i]
        if not stages.controlled[i]:
            out[i] = list(fam)
            continue
        if stages.full_cover[i]:
            out[i] = [(root_iv, witness_for(root_iv, fam))]
            e_fin[i] = True
            continue
        parents = [iv.parent() for iv in stages.filtered[i]]
        merged = maximal_intervals(_family_intervals(fam) + parents)
        new_fam = [(iv, witness_for(iv, fam)) for iv in merged]
        out[i] = new_fam

        old_ivs = _family_intervals(fam)
        for iv in old_ivs:
            if not any(m.contains(iv) for m in merged):
                containment_ok = False
        for m in merged:
            if not any(m.contains(iv) for iv in old_ivs):
                containment_ok = False

        old_len = units.union_length(old_ivs)
        new_len = units.union_length(merged)
        if new_len >= units.length(root_iv):
            e_fin[i] = True
        if not e_fin[i] and old_len > 0:
            ratio = (new_len - old_len) / (stages.eps * old_len)
            min_ratio = min(min_ratio, ratio)

    growth_ok = min_ratio >= 1.0 / 3.0 - 1e-9 if math.isfinite(min_ratio) else True
    return FamilyGrowth(out, e_fin, containment_ok, growth_ok,
                       min_ratio if math.isfinite(min_ratio) else math.nan)


# ---------------------------------------------------------------------------
# good intervals at a scale
# ---------------------------------------------------------------------------


def good_at_scale_all(stages: GoodStages, k: int) -> dict[int, list[TriadicInterval]]:
    """Good intervals at scale k for every atom: maximal intervals I carried
    by a controlled point within the d_I-ball of radius 10 rho^k around x."""
    rho = stages.rho
    pts = stages.atoms.points
    n = len(pts)
    radius = 10.0 * rho**k
    raw: dict[int, list[TriadicInterval]] = {i: [] for i in range(n)}
    for interval in stages.core_universe():
        carriers = stages.core_carriers(interval)
        if len(carriers) == 0:
            continue
        dmin = np.full(n, math.inf)
        for c in carriers:
            d = d_metric_many(interval, pts[c], pts)
            np.minimum(dmin, d, out=dmin)
        hit = dmin < radius
        for i in np.nonzero(hit)[0]:
            raw[int(i)].append(interval)
    return {i: maximal_intervals(ivs) for i, ivs in raw.items()}


def good_at_scale(stages: GoodStages, x_idx: int, k: int) -> list[TriadicInterval]:
    """Good intervals at scale k for one atom (same rule as the batch form)."""
    rho = stages.rho
    pts = stages.atoms.points
    radius = 10.0 * rho**k
    raw = []
    for interval in stages.core_universe():
        carriers = stages.core_carriers(interval)
        if len(carriers) == 0:
            continue
        d = min(d_metric(interval, pts[x_idx], pts[c]) for c in carriers)
        if d < radius:
            raw.append(interval)
    return maximal_intervals(raw)


# ---------------------------------------------------------------------------
# the tree
# ---------------------------------------------------------------------------


@dataclass
class TreeNode:
    node_id: int
    cube: AnisoCube
    generation: int
    interval: TriadicInterval
    tag: str                       # "root0" | "good" | "root"
    parent: Optional[int]
    root_id: int
    children: list[int] = field(default_factory=list)


@dataclass
class StoppedPiece:
    """A shattered or ended piece that did not join the tree."""

    kind: str                      # "end" | "sh"
    generation: int
    interval: TriadicInterval
    atom_idx: np.ndarray
    parent_node: int
    shatter_depth: int


@dataclass
class DirectionTree:
    stages: GoodStages
    params: TreeParams
    nodes: dict[int, TreeNode]
    generations: list[list[int]]
    roots: list[int]
    stopped: list[StoppedPiece]

    def node_mass(self, node_id: int) -> float:
        return self.nodes[node_id].cube.mass(self.stages.atoms.weights)

    def tree_of(self, root_id: int) -> list[int]:
        return [nid for nid, node in self.nodes.items() if node.root_id == root_id]

    def stop_of(self, root_id: int) -> list[StoppedPiece]:
        """The stop family of a root: Sh/End pieces hanging off its subtree."""
        members = set(self.tree_of(root_id))
        return [s for s in self.stopped if s.parent_node in members]

    def to_json(self, path) -> None:
        """Forest dump with per-node {generation, interval, atom_ids, tag}."""
        import json

        rows = []
        for nid in sorted(self.nodes):
            node = self.nodes[nid]
            rows.append({
                "id": nid, "generation": node.generation,
                "interval": {"level": node.interval.level,
                             "index": node.interval.index},
                "atom_ids": [int(i) for i in node.cube.atom_idx],
                "tag": node.tag, "parent": node.parent, "root": node.root_id,
                "bad": bool(getattr(node, "is_bad", False)),
            })
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=1)


def _sees_core_direction(stages: GoodStages, atom_idx: np.ndarray, interval: TriadicInterval) -> bool:
    for i in atom_idx:
        if stages.controlled[i] and any(interval.intersects(iv) for iv in stages.core[int(i)]):
            return True
    return False


def _owns_core_interval(stages: GoodStages, atom_idx: np.ndarray, interval: TriadicInterval) -> bool:
    key = (interval.level, interval.index)
    for i in atom_idx:
        if stages.controlled[i] and any((iv.level, iv.index) == key for iv in stages.core[int(i)]):
            return True
    return False


def _goodness_integral(stages: GoodStages, good_k: dict[int, list[TriadicInterval]],
                 atom_idx: np.ndarray, interval: TriadicInterval) -> tuple[float, float]:
    """(integral over the piece of |interval n good(y, k)| dmu(y),
    (1 - eps) * interval length * piece mass)."""
    units = stages.units
    w = stages.atoms.weights
    vals = [w[i] * units.to_float(units.cover_length(interval, good_k[int(i)]))
            for i in atom_idx]
    lhs = math.fsum(vals)
    mass = math.fsum(w[atom_idx].tolist())
    rhs = (1.0 - stages.eps) * units.to_float(units.length(interval)) * mass
    return lhs, rhs


def build_tree(stages: GoodStages, params: Optional[TreeParams] = None) -> DirectionTree:
    """Grow the direction tree of anisotropic cubes.

    Generation 0 takes the cubes of the root-adapted partition that meet the
    controlled set. A child that sees a core direction and carries the
    near-full goodness integral joins the tree; failing the integral starts
    the shattering cascade over the triadic children of its interval, where
    strict core membership decides. Shattering deeper than the family depth
    indicates a construction bug and raises.
    """
    params = params or stages_params(stages)
    rho = params.rho
    pts = stages.atoms.points
    all_idx = np.arange(len(pts), dtype=np.int64)
    root_iv = stages.root_iv

    nodes: dict[int, TreeNode] = {}
    stopped: list[StoppedPiece] = []
    roots: list[int] = []
    counter = 0

    def new_node(cube: AnisoCube, gen: int, interval: TriadicInterval, tag: str,
                 parent: Optional[int]) -> int:
        nonlocal counter
        nid = counter
        counter += 1
        root_id = nid if tag in ("root0", "root") else nodes[parent].root_id
        nodes[nid] = TreeNode(nid, cube, gen, interval, tag, parent, root_id)
        if parent is not None:
            nodes[parent].children.append(nid)
        if tag in ("root0", "root"):
            roots.append(nid)
        return nid

    top = descend(pts, all_idx, root_iv, 0, root_iv, 0, rho)
    gen0 = []
    for cube in top:
        if np.any(stages.controlled[cube.atom_idx]):
            gen0.append(new_node(cube, 0, root_iv, "root0", None))
    generations = [gen0]

    depth_cap = params.triadic_depth + 2

    for k in range(params.k_max):
        good_k = good_at_scale_all(stages, k + 1)
        next_gen: list[int] = []

        def classify_shattered(piece: AnisoCube, j_piece: TriadicInterval,
                               parent_node: int, depth: int) -> None:
            if not _sees_core_direction(stages, piece.atom_idx, j_piece):
                stopped.append(StoppedPiece("end", k + 1, j_piece, piece.atom_idx,
                                            parent_node, depth))
                return
            if _owns_core_interval(stages, piece.atom_idx, j_piece):
                next_gen.append(new_node(piece, k + 1, j_piece, "root", parent_node))
                return
            if depth >= depth_cap:
                raise RuntimeError(
                    f"shattering did not terminate by depth {depth} at generation "
                    f"{k + 1}; interval {j_piece}, atoms {piece.atom_idx[:8]}")
            stopped.append(StoppedPiece("sh", k + 1, j_piece, piece.atom_idx,
                                        parent_node, depth))
            for j_child in j_piece.children():
                for sub in descend(pts, piece.atom_idx, j_piece, k + 1, j_child, 0, rho):
                    classify_shattered(sub, j_child, parent_node, depth + 1)

        for nid in generations[k]:
            node = nodes[nid]
            kids = descend(pts, node.cube.atom_idx, node.interval, k, node.interval, 1, rho)
            for piece in kids:
                if not _sees_core_direction(stages, piece.atom_idx, node.interval):
                    stopped.append(StoppedPiece("end", k + 1, node.interval,
                                                piece.atom_idx, nid, 0))
                    continue
                lhs, rhs = _goodness_integral(stages, good_k, piece.atom_idx, node.interval)
                if lhs >= rhs - 1e-12:
                    next_gen.append(new_node(piece, k + 1, node.interval, "good", nid))
                else:
                    stopped.append(StoppedPiece("sh", k + 1, node.interval,
                                                piece.atom_idx, nid, 0))
                    for j_child in node.interval.children():
                        for sub in descend(pts, piece.atom_idx, node.interval, k + 1,
                                           j_child, 0, rho):
                            classify_shattered(sub, j_child, nid, 1)
        generations.append(next_gen)

    return DirectionTree(stages, params, nodes, generations, roots, stopped)


def stages_params(stages: GoodStages) -> TreeParams:
    p = TreeParams()
    p.rho = stages.rho
    return p


def packing_sums(tree: DirectionTree) -> dict:
    """Roots and bad packing sums against the eps^-1 * root-length * mass budget."""
    stages = tree.stages
    units = stages.units
    w = stages.atoms.weights
    roots_sum = math.fsum(
        units.to_float(units.length(tree.nodes[r].interval)) * tree.node_mass(r)
        for r in tree.roots)
    budget = (1.0 / stages.eps) * units.to_float(units.length(stages.root_iv)) * \
        math.fsum(w.tolist())
    bad = [nid for nid, node in tree.nodes.items() if getattr(node, "is_bad", False)]
    bad_sum = math.fsum(
        units.to_float(units.length(tree.nodes[b].interval)) * tree.node_mass(b)
        for b in bad)
    per_root: dict[int, float] = {}
    for b in bad:
        rid = tree.nodes[b].root_id
        per_root[rid] = per_root.get(rid, 0.0) + tree.node_mass(b)
    return {
        "roots_sum": roots_sum,
        "roots_budget": budget,
        "roots_within_budget": roots_sum <= budget + 1e-9,
        "bad_sum": bad_sum,
        "bad_per_root_mass": per_root,
    }


def collect_bad_cubes(tree: DirectionTree, model: Optional[DiscreteMeasure] = None) -> list[int]:
    """Nodes Q with some member x whose annulus cone X(x, 15 J_Q, rho l(Q), l(Q))
    meets the atom model. Marks nodes in place and returns their ids."""
    stages = tree.stages
    mu = model if model is not None else stages.atoms
    rho = tree.params.rho
    bad = []
    for nid, node in tree.nodes.items():
        wide = node.interval.dilate(15.0)
        ell = rho**node.generation
        found = False
        for i in node.cube.atom_idx:
            mask = annulus_mask(mu, stages.atoms.points[i], wide, rho * ell, ell)
            if mask.any():
                found = True
                break
        node.is_bad = found  # type: ignore[attr-defined]
        if found:
            bad.append(nid)
    return bad


# ---------------------------------------------------------------------------
# the exhaustive property checker
# ---------------------------------------------------------------------------


def verify_tree(tree: DirectionTree, c_bad: float = 64.0) -> dict:
    """Exhaustive structural checks of the tree; returns named pass/fail flags
    plus the measured constants. Everything is exact on atoms (tolerance TOL).
    """
    stages = tree.stages
    params = tree.params
    units = stages.units
    pts = stages.atoms.points
    w = stages.atoms.weights
    rho = params.rho
    report: dict = {}

    atom_sets = {nid: frozenset(node.cube.atom_idx.tolist())
                 for nid, node in tree.nodes.items()}

    # sandwich: Euclidean inner ball and d_J outer ball
    t1 = True
    for node in tree.nodes.values():
        center = pts[node.cube.center_idx]
        h_j = units.to_float(units.length(node.interval))
        r_in = h_j * rho ** (node.generation + 3)
        d_euc = np.hypot(pts[:, 0] - center[0], pts[:, 1] - center[1])
        inner = np.nonzero(d_euc <= r_in - TOL)[0]
        if not all(int(i) in atom_sets[node.node_id] for i in inner):
            t1 = False
        d_out = d_metric_many(node.interval, center, pts[node.cube.atom_idx])
        if np.any(d_out > 4.0 * rho**node.generation + TOL):
            t1 = False
    report["sandwich_balls"] = t1

    # goodness integral for every node of generation >= 1
    t2 = True
    for k in range(1, len(tree.generations)):
        good_k = good_at_scale_all(stages, k)
        for nid in tree.generations[k]:
            node = tree.nodes[nid]
            lhs, rhs = _goodness_integral(stages, good_k, node.cube.atom_idx, node.interval)
            if lhs < rhs - 1e-9:
                t2 = False
    report["goodness_integral"] = t2

    # unique ordering ancestor; same/lower generations nest or split
    t3 = True
    t4 = True
    for k, gen in enumerate(tree.generations):
        for l in range(k + 1):
            for q in gen:
                qn = tree.nodes[q]
                hits = 0
                for p in tree.generations[l]:
                    pn = tree.nodes[p]
                    atoms_sub = atom_sets[q] <= atom_sets[p]
                    ivs_sub = pn.interval.contains(qn.interval)
                    if atoms_sub and ivs_sub:
                        hits += 1
                    else:
                        atoms_meet = bool(atom_sets[q] & atom_sets[p])
                        ivs_meet = qn.interval.intersects(pn.interval)
                        if atoms_meet and ivs_meet and not (k == l and p == q):
                            t4 = False
                if hits != 1:
                    t3 = False
    report["unique_ancestor"] = t3
    report["product_disjointness"] = t4

    # roots packing
    packing = packing_sums(tree)
    report["roots_packing"] = packing["roots_within_budget"]
    report["roots_sum"] = packing["roots_sum"]
    report["roots_budget"] = packing["roots_budget"]

    # constant interval inside each subtree
    t6 = True
    for nid, node in tree.nodes.items():
        root = tree.nodes[node.root_id]
        if (node.interval.level, node.interval.index) != \
                (root.interval.level, root.interval.index):
            t6 = False
    report["subtree_interval_constant"] = t6

    # unique covering node per controlled point, core interval, scale
    t7 = True
    for k, gen in enumerate(tree.generations):
        for i in np.nonzero(stages.controlled)[0]:
            i = int(i)
            for j in stages.core[i]:
                hits = [nid for nid in gen
                        if i in atom_sets[nid] and tree.nodes[nid].interval.contains(j)]
                if len(hits) != 1:
                    t7 = False
    report["core_covering"] = t7

    # bad scale count against C * scale_budget
    t8 = True
    worst = 0.0
    for nid, node in tree.nodes.items():
        narrowed = node.interval.dilate(0.8)
        for i in node.cube.atom_idx:
            bs = bad_scales(stages.atoms, pts[i], narrowed, rho, 0, node.generation)
            worst = max(worst, len(bs) / stages.scale_budget)
            if len(bs) > c_bad * stages.scale_budget + TOL:
                t8 = False
    report["bad_scale_budget"] = t8
    report["bad_scale_max_ratio"] = worst

    # children's products are pairwise disjoint inside the parent's
    chc = True
    for nid, node in tree.nodes.items():
        kids = node.children
        for a_i in range(len(kids)):
            a = tree.nodes[kids[a_i]]
            if not (atom_sets[kids[a_i]] <= atom_sets[nid]
                    and node.interval.contains(a.interval)):
                chc = False
            for b_i in range(a_i + 1, len(kids)):
                b = tree.nodes[kids[b_i]]
                if (atom_sets[kids[a_i]] & atom_sets[kids[b_i]]) \
                        and a.interval.intersects(b.interval):
                    chc = False
    report["children_products_nested_disjoint"] = chc

    checked = ("sandwich_balls", "goodness_integral", "unique_ancestor",
               "product_disjointness", "roots_packing",
               "subtree_interval_constant", "core_covering",
               "bad_scale_budget", "children_products_nested_disjoint")
    report["all_pass"] = all(bool(report[key]) for key in checked)
    return report


def bad_chain_check(tree: DirectionTree, bad_ids: list[int]) -> dict:
    """Pointwise reduction of energies to the bad-cube sum: for controlled x,
    the energy over the union of the widened core intervals is at most
    C * M * (sum of interval lengths of the bad cubes containing x); records
    the worst C."""
    stages = tree.stages
    units = stages.units
    pts = stages.atoms.points
    worst = 0.0
    zero_violations = 0
    atom_sets = {nid: frozenset(tree.nodes[nid].cube.atom_idx.tolist()) for nid in bad_ids}
    for i in np.nonzero(stages.controlled)[0]:
        i = int(i)
        if not stages.core[i]:
            continue
        wide = [iv.dilate(15.0) for iv in stages.core[i]]
        merged = _merge_angle_intervals(wide)
        prof = conical_energy(stages.atoms, pts[i], merged, stages.rho, 0,
                              len(tree.generations) - 1)
        lhs = prof.total_float
        rhs = stages.m_bound * math.fsum(
            units.to_float(units.length(tree.nodes[nid].interval))
            for nid in bad_ids if i in atom_sets[nid])
        if rhs > 0.0:
            worst = max(worst, lhs / rhs)
        elif lhs > 1e-9:
            zero_violations += 1
    return {"max_constant": worst, "zero_rhs_violations": zero_violations}


def _merge_angle_intervals(ivs: list[AngleInterval]) -> list[AngleInterval]:
    """Merge overlapping arcs into disjoint arcs (input arcs not near-full)."""
    spans = sorted((wrap(iv.center - iv.half_width),
                    wrap(iv.center - iv.half_width) + 2 * iv.half_width) for iv in ivs)
    merged: list[list[float]] = []
    for lo, hi in spans:
        if merged and lo <= merged[-1][1] + TOL:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    # wrap-around join
    if len(merged) > 1 and merged[-1][1] >= 1.0 + merged[0][0] - TOL:
        merged[0][0] = merged[-1][0] - 1.0
        merged.pop()
    return [AngleInterval((lo + hi) / 2.0, min(0.5, (hi - lo) / 2.0)) for lo, hi in merged]


# ---------------------------------------------------------------------------
# propagation loop
# ---------------------------------------------------------------------------


@dataclass
class PropagationResult:
    finished_mask: np.ndarray
    rounds: int
    trace: list[dict]
    families: dict[int, Family]
    stages: GoodStages


def propagate_good_directions(atoms: DiscreteMeasure, eprime: np.ndarray,
                              families: dict[int, Family], root_iv: TriadicInterval,
                              a_const: float, m_bound: float,
                              params: Optional[TreeParams] = None,
                              segment_model=None) -> PropagationResult:
    """Iterate stage construction and family growth until the finished set
    finished set (family union = the whole root interval) carries a quarter
    of the selected mass.

    The average family fraction grows by at least (eps/12) tau per
    unfinished round, so the loop ends within ceil(12 / (eps tau)) rounds;
    exceeding the cap (or the configured max_rounds) raises with the trace.
    """
    params = params or TreeParams()
    eprime = np.asarray(eprime, dtype=bool)
    emass = math.fsum(atoms.weights[eprime].tolist())
    units = TriadicUnits(root_iv.level + params.triadic_depth + 3)

    tau = math.inf
    for i in np.nonzero(eprime)[0]:
        fam = families.get(int(i), [])
        if not fam:
            raise ValueError(f"selected atom {i} has an empty family")
        ln = units.union_length([iv for iv, _ in fam]) / units.length(root_iv)
        tau = min(tau, ln)
    if not (tau > 0.0):
        raise ValueError("family hypothesis fails: some family has zero length")

    eps = params.c_eps / (a_const * m_bound)
    cap = min(params.max_rounds, math.ceil(12.0 / (eps * tau)) + 1)

    if params.check_witnesses and segment_model is not None:
        _check_witnesses(segment_model, atoms, eprime, families, m_bound)

    trace: list[dict] = []
    current = {i: list(f) for i, f in families.items()}
    stages = None
    prev_energy = None
    for round_no in range(1, cap + 1):
        stages = build_good_stages(atoms, eprime, current, root_iv, a_const, m_bound, params)
        gs = grow_families(stages)
        fin_mass = math.fsum(atoms.weights[gs.finished_mask].tolist())
        avg_len = math.fsum(
            atoms.weights[i] * units.union_length([iv for iv, _ in current[int(i)]])
            / units.length(root_iv)
            for i in np.nonzero(eprime)[0]) / emass
        avg_energy = stages.energy_threshold - 1.0
        entry = {
            "round": round_no,
            "e_fin_mass_fraction": fin_mass / emass,
            "avg_family_fraction": avg_len,
            "avg_energy": avg_energy,
            "e0_mass_fraction": stages.checks["e0_mass_fraction"],
            "containment_ok": gs.containment_ok,
            "growth_ok": gs.growth_ok,
        }
        if prev_energy is not None:
            # assertion (3) measured: new average energy against the previous
            # round's energy plus the root-interval-length floor
            floor = units.to_float(units.length(root_iv))
            entry["energy_growth_constant"] = avg_energy / (prev_energy + floor)
        prev_energy = avg_energy
        trace.append(entry)
        if fin_mass >= emass / 4.0 - TOL:
            return PropagationResult(gs.finished_mask, round_no, trace, gs.families, stages)
        current = gs.families
    raise RuntimeError(
        f"propagation did not finish within {cap} rounds; trace: "
        + "; ".join(f"r{t['round']}: fin={t['e_fin_mass_fraction']:.3f}, "
                    f"avg={t['avg_family_fraction']:.4f}" for t in trace))


def _check_witnesses(segment_model, atoms: DiscreteMeasure, eprime: np.ndarray,
                     families: dict[int, Family], m_bound: float) -> None:
    """Witness bound: every witness satisfies mu_theta_perp(x) <= M.

    Evaluated on the segment model (the atomized pushforward has no bounded
    maximal function). Densities are cached per distinct witness angle.
    """
    from .projection import maximal_values_batch, pushforward_density
    from .torus import direction_vector as dvec

    by_angle: dict[float, list[int]] = {}
    for i in np.nonzero(eprime)[0]:
        for iv, th in families.get(int(i), []):
            by_angle.setdefault(perp(th), []).append(int(i))
    for t, idx in by_angle.items():
        density = pushforward_density(segment_model, t)
        e = dvec(t)
        vals = maximal_values_batch(density, atoms.points[idx] @ e)
        bad = np.nonzero(vals > m_bound + TOL)[0]
        if len(bad):
            raise ValueError(
                f"witness bound fails: witness angle {wrap(t - 0.25)} at atom "
                f"{idx[bad[0]]} has mu_theta_perp = {vals[bad[0]]} > M = {m_bound}")


# ---------------------------------------------------------------------------
# the gap interval construction
# ---------------------------------------------------------------------------


@dataclass
class GapIntervalResult:
    interval: tuple[float, float]
    z_star_idx: int
    nice_strip: int
    trace: list[int]
    width_ratio: float            # H(I) / (lambda H(J) r)
    disjoint_ok: bool
    b0_inside_ok: bool
    checks: dict


def find_gap_interval(atoms: DiscreteMeasure, f_idx: np.ndarray,
                      interval: AngleInterval, z0, r: float, big_r: float,
                      x_idx: int, alpha: float, m_bound: float, a_const: float,
                      params: Optional[TreeParams] = None) -> GapIntervalResult:
    """Find an interval in the perpendicular projection of B_0 missed by F.

    Implements the tube construction: around a witness y in the annular cone
    X(x, alpha J \\ J, rho r, r), a tube G of dimensions ~H(J) r x r splits
    into 2N+1 strips; the beats chain finds a nice strip whose lowest point
    z_* leaves an empty exit tube Y below it; the gap interval is the
    perpendicular projection of Y. Hypotheses (i)-(iv) are checked and the
    failed clause is named.
    """
    params = params or TreeParams()
    rho = params.rho
    lam = params.c_lambda / (m_bound * a_const)
    big = params.big_lambda
    pts = atoms.points
    f_idx = np.asarray(f_idx, dtype=np.int64)
    z0 = np.asarray(z0, dtype=float)
    x = pts[x_idx]
    h_j = interval.length
    checks: dict = {}

    # (i) the interval is narrow enough
    checks["i_interval_narrow"] = h_j <= params.c_j / (m_bound * a_const) + TOL
    if not checks["i_interval_narrow"]:
        raise ValueError(f"hypothesis (i) fails: H(J) = {h_j} > c_J / (M A)")

    # (iii) F inside the tube around z0; measure bound; empty widened cone
    d_f = d_metric_many(interval, z0, pts[f_idx])
    checks["iii_f_in_ball"] = bool(np.all(d_f <= big_r + TOL))
    if not checks["iii_f_in_ball"]:
        raise ValueError("hypothesis (iii) fails: F not inside B_J(z0, R)")
    d_all = d_metric_many(interval, z0, pts)
    big_ball = d_all < big * r
    ball_mass = math.fsum(atoms.weights[big_ball].tolist())
    checks["iii_measure"] = ball_mass <= m_bound * h_j * r + TOL
    if not checks["iii_measure"]:
        raise ValueError(
            f"hypothesis (iii) fails: mu(Lambda B0) = {ball_mass} > M H(J) r")
    f_pts = pts[f_idx]
    for zi in np.nonzero(big_ball)[0]:
        diff = f_pts - pts[zi]
        dist = np.hypot(diff[:, 0], diff[:, 1])
        from .torus import _direction_mask
        dmask = _direction_mask(pts[zi], interval, f_pts, dist)
        hit = dmask & (dist > lam * r) & (dist <= big * big_r)
        if hit.any():
            raise ValueError(
                f"hypothesis (iii) fails: cone at atom {zi} meets F")
    checks["iii_empty_cone"] = True

    # (iv) the exterior annular witness
    diff = pts - x
    dist = np.hypot(diff[:, 0], diff[:, 1])
    from .torus import _direction_mask
    in_alpha = _direction_mask(x, interval.dilate(alpha), pts, dist)
    in_j = _direction_mask(x, interval, pts, dist)
    annulus = (dist > rho * r) & (dist <= r)
    witnesses = np.nonzero(in_alpha & ~in_j & annulus)[0]
    checks["iv_witness"] = len(witnesses) > 0
    if not checks["iv_witness"]:
        raise ValueError("hypothesis (iv) fails: no point in X(x, alpha J \\ J, rho r, r)")
    y = pts[witnesses[0]]

    e_par = direction_vector(interval.center)
    e_per = direction_vector(perp(interval.center))

    def p_par(p):
        return (p - np.zeros(2)) @ e_par

    def p_per(p):
        return p @ e_per

    gap_perp = abs(p_per(x) - p_per(y))
    gap_par = abs(p_par(x) - p_par(y))
    t_g = (p_per(x) + p_per(y)) / 2.0

    n_strips = math.ceil(params.c_n * a_const * m_bound)
    per_all = pts @ e_per
    par_all = pts @ e_par
    in_tube = (np.abs(per_all - t_g) <= 2.0 * gap_perp + TOL)
    rel = par_all - p_par(y)
    # strip i covers rel in [(2i-1), (2i+1)] * gap_par / (2(2N+1))
    strip_of = np.floor(rel / gap_par * (2 * n_strips + 1) + 0.5).astype(int)
    in_tube &= np.abs(rel) <= gap_par / 2.0 + TOL

    # lowest |perp gap from x| point of each nonempty strip
    strip_z: dict[int, int] = {}
    for i in np.nonzero(in_tube)[0]:
        s = int(strip_of[i])
        if abs(s) > n_strips:
            continue
        cur = strip_z.get(s)
        val = abs(per_all[i] - p_per(x))
        if cur is None or val < abs(per_all[cur] - p_per(x)):
            strip_z[s] = int(i)

    def strip_val(s: int) -> float:
        zi = strip_z.get(s)
        return math.inf if zi is None else abs(per_all[zi] - p_per(x))

    # beats chain from strip 0 (the witness lives there)
    trace = [0]
    s = 0
    for _ in range(2 * n_strips + 2):
        left, mid, right = strip_val(s - 1), strip_val(s), strip_val(s + 1)
        if mid <= left and mid <= right:
            break
        s = s - 1 if left < right else s + 1
        trace.append(s)
        if abs(s) >= n_strips:
            raise ValueError(
                "beats chain exhausted the strips; contradicts the measure bound "
                f"(trace {trace})")
    nice = s
    z_star = strip_z[nice]
    zs_per = per_all[z_star]

    c_y = params.c_y
    t_y = c_y * lam * p_per(x) + (1.0 - c_y * lam) * zs_per
    half = 0.5 * c_y * lam * abs(zs_per - p_per(x))
    lo, hi = t_y - half, t_y + half

    f_per = per_all[f_idx]
    disjoint = bool(np.all((f_per < lo - TOL) | (f_per > hi + TOL)))
    width_ratio = (hi - lo) / (lam * h_j * r)
    b0_lo, b0_hi = p_per(z0) - h_j * r, p_per(z0) + h_j * r
    big_half = (hi - lo) / 2.0 * (big / lam)
    center = (lo + hi) / 2.0
    b0_inside = (center - big_half <= b0_lo + TOL) and (b0_hi <= center + big_half + TOL)

    checks["z_star_perp_gap_ratio"] = abs(zs_per - p_per(x)) / (h_j * r)
    return GapIntervalResult((lo, hi), int(z_star), nice, trace, width_ratio,
                             disjoint, b0_inside, checks)
