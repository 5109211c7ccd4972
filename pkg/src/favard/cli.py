"""Command line driver.

Subcommands: compute, mc, cantor-decay, pipeline, content, lattice-check,
tree-check, extract-graph. Every command writes a JSON report embedding the
full configuration and a content hash of its inputs. Exit codes: 0 all
asserted invariants passed, 1 I/O or usage error, 2 invariant failure,
3 hypothesis/precondition failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, content_hash
from .conical import bad_scales, select_good_directions
from .graphs import extract_graph, verify_lipschitz
from .lattice import check_cube_invariants, descend
from .projection import favard, favard_mc
from .sets import (DiscreteMeasure, DyadicSquareSet, Segment, SegmentUnion,
                   four_corners, segment_distances, split_parallel)
from .torus import AngleInterval, TriadicInterval, perp, wrap
from .tree import (build_tree, collect_bad_cubes, packing_sums,
                   propagate_good_directions, verify_tree)

EXIT_OK = 0
EXIT_IO = 1
EXIT_INVARIANT = 2
EXIT_HYPOTHESIS = 3


class InputError(Exception):
    """Unreadable or malformed input file (exit code 1)."""


def _load_model(path: str):
    p = Path(path)
    if not p.exists():
        raise InputError(f"input file {path} not found")
    try:
        if p.suffix == ".json":
            return DyadicSquareSet.from_json(p)
        return SegmentUnion.from_csv(p)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise InputError(str(exc)) from exc


def _as_segments(model) -> SegmentUnion:
    if isinstance(model, SegmentUnion):
        return model
    return model.skeleton()


def _write_report(out_dir: str, name: str, payload: dict) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{name}.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, default=str)
    return path


def cmd_compute(args, cfg: ExperimentConfig) -> int:
    model = _load_model(args.input)
    union = _as_segments(model)
    n = args.n_angles or cfg.n_angles
    exact = favard(union, n, cfg.workers)
    payload = {
        "command": "compute", "input": args.input,
        "input_hash": content_hash(args.input),
        "config": cfg.to_dict(),
        "favard": exact, "n_angles": n, "method": "exact",
    }
    if args.per_angle:
        from .projection import project_segments
        thetas = (np.arange(n) + 0.5) / n
        rows = [{"theta": float(t), "measure": project_segments(union, float(t)).measure}
                for t in thetas]
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "projection_measures.json", "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=1)
    status = EXIT_OK
    if args.mc:
        est, se = favard_mc(union, args.mc, cfg.seed, cfg.workers)
        payload["mc"] = {"estimate": est, "stderr": se, "needles": args.mc}
        payload["mc_within_3_sigma"] = abs(est - exact) <= 3.0 * se
        if not payload["mc_within_3_sigma"]:
            status = EXIT_INVARIANT
    path = _write_report(args.out, "compute_report", payload)
    print(f"favard = {exact!r} (n_angles={n}) -> {path}")
    if args.mc:
        print(f"mc     = {payload['mc']['estimate']!r} +- {payload['mc']['stderr']:.3e}"
              f" (|diff| <= 3 sigma: {payload['mc_within_3_sigma']})")
    return status


def cmd_mc(args, cfg: ExperimentConfig) -> int:
    model = _load_model(args.input)
    union = _as_segments(model)
    est, se = favard_mc(union, args.needles, cfg.seed, cfg.workers)
    payload = {
        "command": "mc", "input": args.input, "input_hash": content_hash(args.input),
        "config": cfg.to_dict(),
        "favard": est, "stderr": se, "needles": args.needles, "method": "mc",
    }
    path = _write_report(args.out, "mc_report", payload)
    print(f"favard_mc = {est!r} +- {se:.3e} -> {path}")
    return EXIT_OK


def cmd_cantor_decay(args, cfg: ExperimentConfig) -> int:
    if args.n_max > 6:
        print("resource guard: n_max must be <= 6", file=sys.stderr)
        return EXIT_IO
    rows = []
    for n in range(args.n_max + 1):
        skel = four_corners(n).skeleton()
        val = favard(skel, cfg.n_angles, cfg.workers)
        rows.append({"n": n, "favard": val,
                     "n_times_favard": n * val,
                     "n_sixth_times_favard": (n ** (1.0 / 6.0)) * val if n else val})
    decreasing = all(rows[i]["favard"] > rows[i + 1]["favard"] for i in range(len(rows) - 1))
    payload = {"command": "cantor-decay", "config": cfg.to_dict(),
               "rows": rows, "strictly_decreasing": decreasing}
    path = _write_report(args.out, "cantor_decay_report", payload)
    csv_path = Path(args.out) / "cantor_decay.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    for r in rows:
        print(f"n={r['n']}: Fav = {r['favard']!r}")
    print(f"strictly decreasing: {decreasing} -> {path}")
    return EXIT_OK if decreasing else EXIT_INVARIANT


def _rotate_quarter(pts: np.ndarray) -> np.ndarray:
    """Rotate by +90 degrees: (x, y) -> (-y, x)."""
    return np.column_stack([-pts[:, 1], pts[:, 0]])


def run_pipeline(union: SegmentUnion, kappa: float, cfg: ExperimentConfig) -> dict:
    """The end-to-end extraction pipeline on a parallel segment union.

    Stages: normalize to diameter 1; find the big-projection directions and a
    triadic root interval inside them; select per-atom good families;
    propagate the families in the quarter-rotated frame (where the
    perpendicular families stay triadic); bound the bad scales of the
    finished set; extract a Lipschitz graph and map it back. Raises
    ValueError with the stage name on hypothesis failure.
    """
    report: dict = {"kappa": kappa}
    if union.parallel_hint is None:
        directions = {round(s.direction_angle, 9) for s in union.segments}
        if len(directions) > 1:
            raise ValueError("stage normalize: input segments are not parallel")
    diam = union.diameter()
    pts0 = union.endpoints()
    lo = pts0.min(axis=0)
    scale = 1.0 / diam
    segs = [Segment(((s.a[0] - lo[0]) * scale, (s.a[1] - lo[1]) * scale),
                    ((s.b[0] - lo[0]) * scale, (s.b[1] - lo[1]) * scale))
            for s in union.segments]
    norm = SegmentUnion(segs, parallel_hint=union.parallel_hint)
    report["normalization"] = {"scale": scale, "offset": lo.tolist()}

    from .sets import ahlfors_constant
    a_const = max(2.0, ahlfors_constant(norm, 400, cfg.seed))
    m_bound = cfg.c_m / kappa
    report["a_const"] = a_const
    report["m_bound"] = m_bound

    total = norm.total_length
    grid = (np.arange(cfg.n_angles) + 0.5) / cfg.n_angles
    from .projection import _projection_measures
    measures = _projection_measures(norm, grid)
    good = measures > kappa * total * 1.05
    if not good.any():
        raise ValueError(f"stage directions: no theta with H(pi_theta(E)) > kappa H(E);"
                         f" max ratio = {measures.max() / total}")

    level = max(1, math.ceil(math.log(a_const * m_bound / cfg.c_j) / math.log(3.0)))
    best, best_score = None, -1.0
    for idx in range(3**level):
        j = TriadicInterval(level, idx)
        inside = (grid >= j.low) & (grid < j.high)
        score = float(np.count_nonzero(good & inside)) / max(1, np.count_nonzero(inside))
        if score > best_score:
            best, best_score = j, score
    root_iv = best
    report["root_iv"] = {"level": root_iv.level, "index": root_iv.index, "coverage": best_score}
    if best_score < 1.0:
        raise ValueError("stage directions: no triadic root interval fully inside "
                         "the good direction set "
                         f"at level {level} (best coverage {best_score})")

    depth_abs = max(6, root_iv.level + 2)
    selection = select_good_directions(
        norm, root_iv.as_angle_interval(), kappa, m_bound,
        samples_per_length=6 * 3**depth_abs,
        triadic_depth=depth_abs, rho=cfg.rho, pitch=cfg.atom_pitch)
    report["selection"] = {
        "eprime_mass_fraction": selection.eprime_mass_fraction,
        "min_family_length": selection.min_family_length,
        "g_length": selection.g_length,
        "max_energy_ratio": max(selection.energy_ratios.values(), default=0.0),
        "max_fourier_ratio": max((v for v in selection.fourier_ratios.values()
                                  if math.isfinite(v)), default=0.0),
    }
    if selection.eprime_mass_fraction < kappa / 4.0 - 1e-9:
        raise ValueError("stage selection: selected mass below kappa/4 of the total")

    atoms = selection.atoms
    rot_atoms = DiscreteMeasure(_rotate_quarter(atoms.points), atoms.weights)
    shift = rot_atoms.points.min(axis=0)
    rot_atoms = DiscreteMeasure(rot_atoms.points - shift, atoms.weights)
    rot_union = SegmentUnion(
        [Segment((-s.a[1] - shift[0], s.a[0] - shift[1]),
                 (-s.b[1] - shift[0], s.b[0] - shift[1])) for s in norm.segments])

    families = {i: fam for i, fam in selection.family.families.items()}
    params = cfg.tree_params()
    params.check_witnesses = True
    prop = propagate_good_directions(rot_atoms, selection.eprime, families, root_iv,
                                     a_const, m_bound, params,
                                     segment_model=rot_union)
    report["propagation"] = {
        "rounds": prop.rounds,
        "trace": prop.trace,
        "finished_mass_fraction": float(
            math.fsum(atoms.weights[prop.finished_mask].tolist())
            / math.fsum(atoms.weights[selection.eprime].tolist())),
    }

    f_idx = np.nonzero(prop.finished_mask)[0]
    half_j0 = root_iv.dilate(0.5)
    high = max(1, math.ceil(math.log(max(1e-12, _min_pair_gap(rot_atoms.points[f_idx])))
                            / math.log(cfg.rho))) + 1
    m0 = 0
    for i in f_idx:
        bs = bad_scales(rot_atoms.points[f_idx], rot_atoms.points[i], half_j0,
                        cfg.rho, 0, high)
        m0 = max(m0, len(bs))
    report["bad_scale_bound"] = {"m0": m0, "scale_high": high}

    cert = extract_graph(rot_atoms.points[f_idx], half_j0, m0, cfg.rho)
    retained_global = [int(f_idx[i]) for i in cert.retained_idx]
    final_width = cert.cone_half_width
    orig_interval = AngleInterval(wrap(root_iv.center - 0.25), final_width)
    ok, lip = verify_lipschitz(atoms.points[retained_global], orig_interval)
    if not ok:
        raise AssertionError("stage extract: back-mapped certificate fails the cone test")
    report["certificate"] = {
        "theta0": perp(orig_interval.center),
        "lip": lip,
        "cone_half_width": final_width,
        "retained_atoms": len(retained_global),
        "retained_mass": math.fsum(atoms.weights[retained_global].tolist()),
        "retained_mass_fraction": math.fsum(atoms.weights[retained_global].tolist())
        / math.fsum(atoms.weights.tolist()),
        "retained_idx": retained_global,
    }
    report["all_stage_invariants"] = bool(
        selection.min_family_length > 0.0
        and all(t["containment_ok"] and t["growth_ok"] for t in prop.trace)
        and len(retained_global) > 0)
    return report


def _min_pair_gap(pts: np.ndarray) -> float:
    from .conical import _min_gap
    return _min_gap(pts)


def cmd_pipeline(args, cfg: ExperimentConfig) -> int:
    model = _load_model(args.input)
    if isinstance(model, DyadicSquareSet):
        horiz, vert = split_parallel(model.skeleton())
        union = horiz if horiz.total_length >= vert.total_length else vert
    else:
        union = model
    try:
        report = run_pipeline(union, args.kappa, cfg)
    except ValueError as exc:
        print(f"hypothesis failure: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    report.update({"command": "pipeline", "input": args.input,
                   "input_hash": content_hash(args.input), "config": cfg.to_dict()})
    path = _write_report(args.out, "pipeline_report", report)
    cert = report["certificate"]
    print(f"certificate: {cert['retained_atoms']} atoms, lip = {cert['lip']:.4g}, "
          f"mass fraction = {cert['retained_mass_fraction']:.4f} -> {path}")
    return EXIT_OK if report["all_stage_invariants"] else EXIT_INVARIANT


def _load_polyline(path: str) -> list[Segment]:
    pts = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise InputError(f"{path}:{lineno}: expected x,y")
            try:
                pts.append((float(parts[0]), float(parts[1])))
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: non-numeric field") from exc
    if len(pts) < 2:
        raise InputError(f"{path}: a polyline needs at least two points")
    return [Segment(a, b) for a, b in zip(pts, pts[1:]) if a != b]


def cmd_content(args, cfg: ExperimentConfig) -> int:
    model = _load_model(args.input)
    curve = SegmentUnion(_load_polyline(args.curve))
    delta = args.delta
    from .sets import _cloud_of, _cloud_content
    e_pts, e_w, e_slack = _cloud_of(model)

    d_curve = segment_distances(e_pts, curve.segments)
    near_mask = d_curve <= 3.0 * delta
    lhs = _cloud_content(e_pts[near_mask], e_w[near_mask], e_slack) \
        if near_mask.any() else 0.0

    gamma_atoms = curve.atoms(delta / 4.0)
    d_e = _cloud_dist(gamma_atoms.points, e_pts)
    g_mask = d_e <= delta + e_slack
    rhs = _cloud_content(gamma_atoms.points[g_mask], gamma_atoms.weights[g_mask],
                         delta / 8.0) if g_mask.any() else 0.0

    if lhs == 0.0 and rhs == 0.0:
        ratio = "empty"
    else:
        ratio = lhs / rhs if rhs > 0.0 else math.inf
    payload = {"command": "content", "input": args.input,
               "input_hash": content_hash(args.input), "config": cfg.to_dict(),
               "delta": delta,
               "content_E_near_curve": lhs, "content_Edelta_on_curve": rhs,
               "ratio": ratio,
               "note": "lower bound for ell(E, delta) from this candidate curve "
                       "only; the supremum over all rectifiable curves is not "
                       "searched"}
    path = _write_report(args.out, "content_report", payload)
    print(f"H_inf(E n Gamma(3d)) = {lhs}; H_inf(E(d) n Gamma) = {rhs}; "
          f"ratio = {ratio} -> {path}")
    return EXIT_OK


def _cloud_dist(pts: np.ndarray, cloud: np.ndarray) -> np.ndarray:
    out = np.full(len(pts), math.inf)
    block = 1024
    for a in range(0, len(cloud), block):
        sub = cloud[a:a + block]
        d = np.hypot(pts[:, None, 0] - sub[None, :, 0],
                     pts[:, None, 1] - sub[None, :, 1]).min(axis=1)
        np.minimum(out, d, out=out)
    return out


def cmd_lattice_check(args, cfg: ExperimentConfig) -> int:
    rng = np.random.default_rng(cfg.seed)
    failures = 0
    reports = []
    for trial in range(args.instances):
        n = int(rng.integers(30, 120))
        pts = rng.random((n, 2))
        # alternate H(J) in {1/3, 1/27}
        h_choice = TriadicInterval(1, int(rng.integers(0, 3))) if trial % 2 == 0 \
            else TriadicInterval(3, int(rng.integers(0, 27)))
        l = int(rng.integers(0, 3))
        k = int(rng.integers(0, 3))
        cubes = descend(pts, np.arange(n), h_choice, k, h_choice, l, cfg.rho)
        rep = check_cube_invariants(pts, np.arange(n), cubes, k + l)
        ok = rep["partition"] and rep["sandwich_outer"] and rep["sandwich_inner"] \
            and rep["net_separation"]
        reports.append({"trial": trial, "H(J)": h_choice.length, **{
            key: rep[key] for key in ("partition", "sandwich_outer", "sandwich_inner",
                                      "net_separation", "cube_count")}})
        if not ok:
            failures += 1
    payload = {"command": "lattice-check", "config": cfg.to_dict(),
               "instances": args.instances, "failures": failures, "reports": reports}
    path = _write_report(args.out, "lattice_check_report", payload)
    print(f"lattice invariants: {args.instances - failures}/{args.instances} pass -> {path}")
    return EXIT_OK if failures == 0 else EXIT_INVARIANT


def cmd_tree_check(args, cfg: ExperimentConfig) -> int:
    from .fixtures import (cantor_horizontal_instance, single_line_instance,
                           stages_for, two_direction_instance)
    params = cfg.tree_params()
    results = {}
    status = EXIT_OK
    fixtures = {
        "single_line": lambda: stages_for(*single_line_instance()[1:], params=params),
        "two_direction": lambda: stages_for(*two_direction_instance(), params=params),
        "cantor_horizontal": lambda: stages_for(*cantor_horizontal_instance()[1:],
                                                params=params),
    }
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, make in fixtures.items():
        stages = make()
        tree = build_tree(stages, params)
        collect_bad_cubes(tree)
        rep = verify_tree(tree)
        rep["packing"] = {k: v for k, v in packing_sums(tree).items()
                          if k != "bad_per_root_mass"}
        rep["nodes"] = len(tree.nodes)
        results[name] = rep
        tree.to_json(out_dir / f"tree_{name}.json")
        print(f"{name}: all_pass = {rep['all_pass']} ({rep['nodes']} nodes)")
        if not rep["all_pass"]:
            status = EXIT_INVARIANT
    payload = {"command": "tree-check", "config": cfg.to_dict(), "results": results}
    path = _write_report(args.out, "tree_check_report", payload)
    print(f"-> {path}")
    return status


def cmd_extract_graph(args, cfg: ExperimentConfig) -> int:
    model = _load_model(args.input)
    union = _as_segments(model)
    atoms = union.atoms(cfg.atom_pitch)
    interval = AngleInterval(args.center, args.half_width)
    try:
        cert = extract_graph(atoms.points, interval, args.m0, cfg.rho)
    except ValueError as exc:
        print(f"precondition failure: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cert.to_json(out / "certificate.json")
    with open(out / "retained_atoms.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["atom_index"])
        for i in cert.retained_idx:
            writer.writerow([i])
    from .graphs import mass_benchmark
    retained_mass = math.fsum(atoms.weights[cert.retained_idx].tolist())
    payload = {"command": "extract-graph", "input": args.input,
               "input_hash": content_hash(args.input), "config": cfg.to_dict(),
               "lip": cert.lip, "theta0": cert.theta0,
               "cone_half_width": cert.cone_half_width,
               "retained": len(cert.retained_idx), "total_atoms": len(atoms),
               "mass_benchmark": mass_benchmark(
                   retained_mass, interval.length, 2.0,
                   atoms.total_mass)}
    path = _write_report(args.out, "extract_graph_report", payload)
    print(f"certificate: {len(cert.retained_idx)}/{len(atoms)} atoms, "
          f"lip = {cert.lip:.4g} -> {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="favard",
        description="Favard length, conical energies, and Lipschitz graph extraction")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--out", default=".", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compute", help="exact Favard length of a set model")
    p.add_argument("input")
    p.add_argument("--n-angles", type=int, default=None)
    p.add_argument("--mc", type=int, default=None,
                   help="cross-check with this many Monte Carlo needles")
    p.add_argument("--per-angle", action="store_true",
                   help="also emit per-angle projection measures as JSON rows")
    p.set_defaults(func=cmd_compute)

    p = sub.add_parser("mc", help="Buffon-needle Monte Carlo Favard estimate")
    p.add_argument("input")
    p.add_argument("--needles", type=int, default=1_000_000)
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("cantor-decay", help="Favard decay table of the 4-corners sets")
    p.add_argument("--n-max", type=int, default=5)
    p.set_defaults(func=cmd_cantor_decay)

    p = sub.add_parser("pipeline", help="end-to-end graph extraction pipeline")
    p.add_argument("input")
    p.add_argument("--kappa", type=float, required=True)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("content", help="Hausdorff content comparison near a curve")
    p.add_argument("input")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--curve", required=True, help="polyline CSV (x,y per line)")
    p.set_defaults(func=cmd_content)

    p = sub.add_parser("lattice-check", help="lattice invariants on random instances")
    p.add_argument("--instances", type=int, default=100)
    p.set_defaults(func=cmd_lattice_check)

    p = sub.add_parser("tree-check", help="tree properties on the reference fixtures")
    p.set_defaults(func=cmd_tree_check)

    p = sub.add_parser("extract-graph", help="bad-scale reduction and certificate")
    p.add_argument("input")
    p.add_argument("--center", type=float, required=True, help="interval center angle")
    p.add_argument("--half-width", type=float, required=True)
    p.add_argument("--m0", type=int, required=True)
    p.set_defaults(func=cmd_extract_graph)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    except (OSError, ValueError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        return args.func(args, cfg)
    except (InputError, FileNotFoundError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"hypothesis/precondition failure: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except RuntimeError as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
