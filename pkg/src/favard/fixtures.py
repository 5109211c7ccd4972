"""Reference instances shared by the CLI check commands and the test suite."""

from __future__ import annotations

import numpy as np

from .sets import DiscreteMeasure, Segment, SegmentUnion, four_corners, split_parallel
from .torus import TriadicInterval
from .tree import Family, GoodStages, TreeParams, build_good_stages

# [6/27, 7/27): a transverse (near-vertical) triadic direction interval
TRANSVERSE_ROOT = TriadicInterval(3, 6)


def single_line_instance(pitch: float = 1.0 / 128.0):
    """One horizontal unit segment; families point at the transverse root."""
    union = SegmentUnion([Segment((0.0, 0.0), (1.0, 0.0))])
    atoms = union.atoms(pitch)
    root_iv = TRANSVERSE_ROOT
    theta_w = 0.24
    families = {i: [(root_iv, theta_w)] for i in range(len(atoms))}
    eprime = np.ones(len(atoms), dtype=bool)
    return union, atoms, eprime, families, root_iv


def two_direction_instance():
    """Two spatially separated clusters carrying different triadic children.

    The left cluster's atoms carry the left child of the root interval, the
    right cluster's
    the right child, so the first tree generation must shatter.
    """
    root_iv = TRANSVERSE_ROOT
    left_dir, mid_dir, right_dir = root_iv.children()
    xs_left = np.linspace(0.0, 0.35, 24)
    xs_right = np.linspace(0.65, 1.0, 24)
    pts = np.concatenate([
        np.column_stack([xs_left, np.zeros_like(xs_left)]),
        np.column_stack([xs_right, np.zeros_like(xs_right)]),
    ])
    atoms = DiscreteMeasure(pts, np.full(len(pts), 1.0 / len(pts)))
    families: dict[int, Family] = {}
    for i in range(len(xs_left)):
        families[i] = [(left_dir, left_dir.center)]
    for i in range(len(xs_left), len(pts)):
        families[i] = [(right_dir, right_dir.center)]
    eprime = np.ones(len(pts), dtype=bool)
    return atoms, eprime, families, root_iv


def cantor_horizontal_instance(pitch: float = 1.0 / 96.0):
    """The horizontal part of the four_corners(2) skeleton, scaled to diam <= 1."""
    skel = four_corners(2).skeleton()
    horiz, _ = split_parallel(skel)
    scale = 0.7  # diameter of the unit-square skeleton is sqrt(2)
    segs = [Segment((s.a[0] * scale, s.a[1] * scale),
                    (s.b[0] * scale, s.b[1] * scale)) for s in horiz.segments]
    union = SegmentUnion(segs, parallel_hint=0.0)
    atoms = union.atoms(pitch * scale)
    root_iv = TRANSVERSE_ROOT
    theta_w = 0.24
    families = {i: [(root_iv, theta_w)] for i in range(len(atoms))}
    eprime = np.ones(len(atoms), dtype=bool)
    return union, atoms, eprime, families, root_iv


def stages_for(atoms, eprime, families, root_iv, a_const=2.0, m_bound=8.0,
               params: TreeParams | None = None) -> GoodStages:
    return build_good_stages(atoms, eprime, families, root_iv, a_const, m_bound, params)


def synthetic_stages_constant_core(atoms: DiscreteMeasure, root_iv: TriadicInterval,
                                 rho: float = 0.5, a_const: float = 2.0,
                                 m_bound: float = 8.0,
                                 depth: int = 5) -> GoodStages:
    """Stages whose core family is the whole root interval for every atom:
    the no-shattering reference instance."""
    from .tree import TriadicUnits

    n = len(atoms)
    eprime = np.ones(n, dtype=bool)
    all_mask = np.ones(n, dtype=bool)
    fam = {i: [(root_iv, root_iv.center)] for i in range(n)}
    units = TriadicUnits(root_iv.level + depth + 3)
    eps = (2.0**-6) / (a_const * m_bound)
    return GoodStages(
        atoms=atoms, root_iv=root_iv, a_const=a_const, m_bound=m_bound, eps=eps, rho=rho,
        units=units, eprime=eprime, families=fam, energy_high=20,
        energy_threshold=1.0, controlled=all_mask, energies={i: 0.0 for i in range(n)},
        cover={i: [root_iv] for i in range(n)}, filtered={i: [root_iv] for i in range(n)},
        core={i: [root_iv] for i in range(n)},
        full_cover=all_mask.copy(), partial_cover=np.zeros(n, dtype=bool),
        interval_budget_point={i: m_bound for i in range(n)}, interval_budget=m_bound,
        scale_budget=a_const * m_bound, checks={"synthetic": True},
    )
