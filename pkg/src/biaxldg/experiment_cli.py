"""Config-driven experiment driver behind the ``ldg-experiment`` command.

Subcommands map one verb onto each library construct:

  relax          one boundary-value run at the first listed eps
  sweep          a decreasing-eps continuation run emitting plot-ready CSV
  classify-loop  homotopy class of a sampled boundary loop
  lower-bound    certified slice lower bound for a 2-d field snapshot
  ball-bound     grow-and-merge lower bound for a seeded ball system
  diagnose       energy / monotonicity / defect report for a snapshot

Exit codes: 0 success, 1 experiment failed (stagnation, failed certificate,
unliftable loop), 2 invalid input.  The environment variable ``LDG_THREADS``
caps the numeric worker count; orchestration itself is single-threaded and
the cap is forwarded to the BLAS layer for spawned kernels.
"""

import argparse
import csv
import dataclasses
import json
import math
import os
import sys

import numpy as np

from . import defect_analysis as da
from . import q8_topology as q8
from . import qtensor_core as qc
from . import relaxation_solver as rs
from . import vacuum_manifold as vm


class ConfigError(ValueError):
    """The experiment configuration cannot be used as given."""


_DEFAULT_MATERIAL = (6.0, 1.0, 1.0, 1.0)
_SOLVER_KEYS = ("max_iters", "grad_tol", "step_policy", "reduction")
_SWEEP_COLUMNS = ("eps", "e_total", "e_dirichlet", "e_bulk",
                  "slope", "theta", "margin", "converged")


@dataclasses.dataclass
class ExperimentConfig:
    """One batch run: material, domain, boundary data, eps ladder, solver."""

    domain: dict
    boundary: dict
    eps_list: tuple
    h: float
    material: tuple = _DEFAULT_MATERIAL
    solver: dict = dataclasses.field(default_factory=dict)
    out_dir: str = "."
    seed: int = 0
    deterministic: bool = False


def config_from_dict(raw, base_dir="."):
    known = {"domain", "boundary", "eps", "eps_list", "h", "material",
             "solver", "out", "out_dir", "seed", "deterministic"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    try:
        domain = dict(raw["domain"])
        boundary = dict(raw["boundary"])
        eps = [float(e) for e in raw.get("eps", raw.get("eps_list", ()))]
        h = float(raw["h"])
    except (KeyError, TypeError) as err:
        raise ConfigError(f"config is missing or mangles a required field: {err}")
    _check_eps(eps)
    if h <= 0.0:
        raise ConfigError("grid spacing h must be positive")
    material = tuple(float(a) for a in raw.get("material", _DEFAULT_MATERIAL))
    if len(material) != 4:
        raise ConfigError("material takes exactly four coefficients")
    solver = dict(raw.get("solver", {}))
    bad = sorted(set(solver) - set(_SOLVER_KEYS))
    if bad:
        raise ConfigError(f"unknown solver options: {bad}")
    out_dir = raw.get("out", raw.get("out_dir", "."))
    if not os.path.isabs(out_dir):
        out_dir = os.path.join(base_dir, out_dir)
    if "loop_file" in boundary and not os.path.isabs(boundary["loop_file"]):
        boundary["loop_file"] = os.path.join(base_dir, boundary["loop_file"])
    return ExperimentConfig(domain=domain, boundary=boundary,
                            eps_list=tuple(eps), h=h, material=material,
                            solver=solver, out_dir=out_dir,
                            seed=int(raw.get("seed", 0)),
                            deterministic=bool(raw.get("deterministic", False)))


def _check_eps(eps):
    if not eps:
        raise ConfigError("the eps list is empty")
    if any(e <= 0.0 for e in eps):
        raise ConfigError("every eps must be positive")
    if any(a <= b for a, b in zip(eps, eps[1:])):
        raise ConfigError("the eps list must be strictly decreasing")


def load_config(path):
    with open(path) as fh:
        raw = json.load(fh)
    return config_from_dict(raw, base_dir=os.path.dirname(os.path.abspath(path)))


def make_domain(spec, h):
    kind = spec.get("kind")
    try:
        if kind == "disk":
            return rs.disk2d(spec["radius"], h)
        if kind == "square":
            return rs.square2d(spec["side"], h)
        if kind == "annulus":
            return rs.annulus2d(spec["r_in"], spec["r_out"], h)
        if kind == "box":
            return rs.box3d(spec["sides"], h)
        if kind == "cylinder":
            return rs.cylinder3d(spec["radius"], spec["half_length"], h)
    except KeyError as err:
        raise ConfigError(f"domain spec {kind!r} is missing {err}")
    raise ConfigError(f"unknown domain kind {kind!r}")


def load_loop(path, p):
    with open(path) as fh:
        raw = json.load(fh)
    coeffs = np.asarray(raw.get("coeffs"), dtype=float)
    if coeffs.ndim != 2 or coeffs.shape[1] != 5:
        raise ConfigError(f"{path} does not hold an (N, 5) coefficient loop")
    return q8.NLoop.from_coeffs(coeffs, p)


def boundary_field(cfg, eps, p):
    """Fresh field with the configured boundary data at one eps."""
    b = cfg.boundary
    if "loop_file" in b:
        if cfg.domain.get("kind") != "cylinder":
            raise ConfigError("loop boundaries extrude along a cylinder domain")
        loop = load_loop(b["loop_file"], p)
        return rs.cylinder_boundary(loop, cfg.domain["radius"],
                                    cfg.domain["half_length"], eps, p, cfg.h)
    tag = b.get("class")
    if cfg.domain.get("kind") != "disk":
        raise ConfigError("class boundaries are built on disk domains")
    radius = cfg.domain["radius"]
    if tag == "H0":
        pt = vm.manifold_point(np.array([1.0, 0.0, 0.0]),
                               np.array([0.0, 1.0, 0.0]), p)
        return rs.constant_field(rs.disk2d(radius, cfg.h), pt.coeffs, eps, p)
    if tag in ("H1", "H2"):
        return rs.hedgehog_2d(tag, eps, radius, p, cfg.h)
    if tag in ("H3", "H4"):
        return rs.split_pair_2d(tag, eps, radius, p, cfg.h,
                                float(b.get("separation", 0.3)))
    raise ConfigError(f"unknown boundary class {tag!r}")


def _solve_config(cfg):
    opts = dict(cfg.solver)
    if cfg.deterministic:
        opts["reduction"] = "deterministic"
    return rs.SolveConfig(**opts)


# ---------------------------------------------------------------------------
# sweeps


@dataclasses.dataclass
class SweepReport:
    rows: list
    csv_path: str
    snapshots: list
    all_converged: bool


def point_density(f, center, radii):
    """Fitted growth rate of mu(B_r) against log(r/eps)/log(1/eps).

    The 2-d analogue of a line density: around an isolated defect the
    rescaled mass of B_r grows by the class energy per unit of the
    saturating log variable, so the fitted slope reads that energy.
    """
    m = da.rescaled_measure(f, 2.0 * f.domain.h)
    radii = np.asarray(radii, dtype=float)
    t = np.log(radii / f.eps) / math.log(1.0 / f.eps)
    mass = np.array([da.mass_in_ball(m, center, r) for r in radii])
    design = np.stack([t, np.ones_like(t)], axis=1)
    return float(np.linalg.lstsq(design, mass, rcond=None)[0][0])


def _theta_and_margin(f, c_fit):
    dom = f.domain
    if dom.dim == 2:
        scale = dom.min_extent()
        theta = point_density(f, np.zeros(2), np.linspace(0.3, 0.6, 7) * scale)
        try:
            sb = da.slice_lower_bound(f, 0.9 * scale, c_fit=c_fit)
            margin = sb.measured - sb.main_term
        except da.CannotClassifyError:
            margin = math.nan
        return theta, margin
    m = da.rescaled_measure(f, 2.0 * dom.h)
    theta = da.slab_density(m, np.zeros(dom.dim), 0.8 * dom.min_extent())
    return theta, math.nan


def run_sweep(cfg):
    """Relax down the eps ladder with warm starts; emit CSV and snapshots.

    Stagnation at one rung is flagged in its row (converged = 0) and the
    partial state still seeds the next rung, so a failed sweep leaves a
    complete, inspectable table behind.
    """
    p = qc.derive_params(*cfg.material)
    os.makedirs(cfg.out_dir, exist_ok=True)
    c_fit = da.calibration_constant(p) if make_domain(cfg.domain, cfg.h).dim == 2 \
        else None
    rows, snapshots, energies, logs = [], [], [], []
    prev = None
    all_converged = True
    for eps in cfg.eps_list:
        f = boundary_field(cfg, eps, p)
        if prev is not None:
            f.values[f.domain.interior] = prev.values[f.domain.interior]
        try:
            out, info = rs.relax_with_info(f, _solve_config(cfg))
            ok = info.converged
        except rs.StagnationError as err:
            out, info, ok = err.partial, err.info, False
        all_converged &= ok
        rep = rs.assemble_energy(out)
        energies.append(rep.total)
        logs.append(math.log(1.0 / eps))
        if len(energies) >= 2:
            design = np.stack([logs, np.ones_like(logs)], axis=1)
            slope = float(np.linalg.lstsq(design, np.array(energies),
                                          rcond=None)[0][0])
        else:
            slope = math.nan
        theta, margin = _theta_and_margin(out, c_fit)
        snap = os.path.join(cfg.out_dir, f"field_eps{eps:g}.snap")
        rs.write_snapshot(snap, out)
        snapshots.append(snap)
        rows.append({"eps": eps, "e_total": rep.total,
                     "e_dirichlet": rep.dirichlet, "e_bulk": rep.bulk,
                     "slope": slope, "theta": theta, "margin": margin,
                     "converged": int(ok)})
        prev = out
    csv_path = os.path.join(cfg.out_dir, "sweep.csv")
    write_sweep_csv(csv_path, rows)
    validate_sweep_csv(csv_path)
    meta = {"config": dataclasses.asdict(cfg), "all_converged": all_converged,
            "ldg_threads": os.environ.get("LDG_THREADS")}
    with open(os.path.join(cfg.out_dir, "sweep_meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return SweepReport(rows=rows, csv_path=csv_path, snapshots=snapshots,
                       all_converged=all_converged)


def _fmt(value):
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.17g}"


def write_sweep_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_SWEEP_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in _SWEEP_COLUMNS])


def validate_sweep_csv(path):
    """Re-read a sweep table, checking the schema and the energy split."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != _SWEEP_COLUMNS:
            raise ValueError(f"bad sweep header: {header}")
        rows = []
        for line in reader:
            if len(line) != len(_SWEEP_COLUMNS):
                raise ValueError(f"ragged sweep row: {line}")
            row = {k: float(v) for k, v in zip(_SWEEP_COLUMNS, line)}
            if row["converged"] not in (0.0, 1.0):
                raise ValueError("converged flag must be 0 or 1")
            split = row["e_dirichlet"] + row["e_bulk"]
            if abs(row["e_total"] - split) > 1e-9 * max(1.0, abs(row["e_total"])):
                raise ValueError("energy parts do not sum to the total")
            rows.append(row)
    if not rows:
        raise ValueError("sweep table has no rows")
    return rows


# ---------------------------------------------------------------------------
# snapshot reports


def diagnose_field(f):
    """JSON-ready health record: energies, defects, scaling diagnostics."""
    dom = f.domain
    dm = da.defect_mask(f)
    centers = [tuple(float(x) for x in c.centroid) for c in dm.components[:3]]
    if not centers:
        centers = [tuple(0.0 for _ in range(dom.dim))]
    radii = np.linspace(0.25, 0.5, 6) * dom.min_extent()
    diag = rs.diagnostics(f, centers=centers, radii=radii)
    rep = diag["report"]
    return {
        "eps": f.eps,
        "e_total": rep.total,
        "e_dirichlet": rep.dirichlet,
        "e_bulk": rep.bulk,
        "max_q": rep.max_q,
        "max_dist": rep.max_dist,
        "defects": [{"label": int(c.label), "size": int(c.size),
                     "centroid": [float(x) for x in c.centroid],
                     "extent": np.asarray(c.extent).tolist()}
                    for c in dm.components],
        "centers": [list(c) for c in centers],
        "radii": [float(r) for r in radii],
        "profiles": [[float(v) for v in prof] for prof in diag["profiles"]],
        "monotone": diag["monotone"],
        "mono_tol": diag["mono_tol"],
        "pohozaev": [float(v) for v in diag["pohozaev"]],
        "stress_div_sup": diag["stress_div_sup"],
        "sup_dist": diag["sup_dist"],
    }


def _write_json(payload, path=None):
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# subcommands


def _config_from_args(args):
    cfg = load_config(args.config)
    if args.out:
        cfg.out_dir = args.out
    if args.eps_list:
        eps = [float(e) for e in args.eps_list.split(",") if e]
        _check_eps(eps)
        cfg.eps_list = tuple(eps)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.deterministic:
        cfg.deterministic = True
    return cfg


def cmd_relax(args):
    cfg = _config_from_args(args)
    p = qc.derive_params(*cfg.material)
    eps = cfg.eps_list[0]
    os.makedirs(cfg.out_dir, exist_ok=True)
    f = boundary_field(cfg, eps, p)
    stagnated = None
    try:
        out, info = rs.relax_with_info(f, _solve_config(cfg))
    except rs.StagnationError as err:
        out, info, stagnated = err.partial, err.info, str(err)
    snap = os.path.join(cfg.out_dir, f"field_eps{eps:g}.snap")
    rs.write_snapshot(snap, out)
    payload = {"eps": eps, "snapshot": snap,
               "iterations": info.iterations, "converged": info.converged,
               "final_energy": info.final_energy,
               "final_residual": info.final_residual}
    if stagnated:
        payload["stagnation"] = stagnated
    _write_json(payload, os.path.join(cfg.out_dir, "relax.json"))
    print(snap)
    return 1 if stagnated else 0


def cmd_sweep(args):
    cfg = _config_from_args(args)
    report = run_sweep(cfg)
    print(report.csv_path)
    return 0 if report.all_converged else 1


def cmd_classify_loop(args):
    p = qc.derive_params(*_DEFAULT_MATERIAL)
    with open(args.loop) as fh:
        raw = json.load(fh)
    if "material" in raw:
        p = qc.derive_params(*[float(a) for a in raw["material"]])
    loop = load_loop(args.loop, p)
    _write_json(q8.classification_report(loop, p), args.out)
    return 0


def cmd_lower_bound(args):
    f = rs.read_snapshot(args.snapshot)
    c_fit = args.c_fit if args.c_fit is not None \
        else da.calibration_constant(f.params)
    sb = da.slice_lower_bound(f, args.radius, c_fit=c_fit)
    trivial = sb.e_star == 0.0
    certified = bool(sb.certified or (trivial and sb.measured >= 0.0))
    payload = {"radius": args.radius, "tag": sb.tag, "e_star": sb.e_star,
               "phi_min": sb.phi_min, "main_term": sb.main_term,
               "c_fit": sb.c_fit, "bound": 0.0 if trivial else float(sb),
               "measured": sb.measured, "margin": sb.measured - sb.main_term,
               "certified": certified}
    _write_json(payload, args.out)
    return 0 if certified else 1


def cmd_ball_bound(args):
    with open(args.spec) as fh:
        raw = json.load(fh)
    try:
        balls = [da.Ball(tuple(b[:-1]), float(b[-1]), float(b[-1]))
                 for b in raw["balls"]]
        lam, r = float(raw["lam"]), float(raw["r"])
    except (KeyError, TypeError, IndexError) as err:
        raise ConfigError(f"ball spec is missing or mangles a field: {err}")
    if "e_star" in raw:
        e_star = float(raw["e_star"])
    elif "class" in raw:
        p = qc.derive_params(*[float(a) for a in
                               raw.get("material", _DEFAULT_MATERIAL)])
        e_star = q8.class_energies(p)[raw["class"]].e_star
    else:
        raise ConfigError("ball spec needs either e_star or class")
    bound, trace = da.ball_construction(da.BallSystem(balls, e_star), lam, r)
    meta = {"bound": bound, "e_star": e_star, "lam": lam, "r": r}
    if args.out:
        da.write_trace_json(args.out, trace, meta=meta)
    else:
        _write_json({**meta, "events": trace})
    return 0


def cmd_diagnose(args):
    f = rs.read_snapshot(args.snapshot)
    payload = diagnose_field(f)
    _write_json(payload, args.out)
    if args.mask_csv:
        da.write_mask_csv(args.mask_csv, da.defect_mask(f))
    return 0


# ---------------------------------------------------------------------------
# entry point


def _add_run_flags(sub):
    sub.add_argument("--config", required=True, help="experiment JSON file")
    sub.add_argument("--out", help="output directory (overrides the config)")
    sub.add_argument("--eps-list",
                     help="comma-separated eps override, strictly decreasing")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--deterministic", action="store_true",
                     help="force deterministic reductions")


def build_parser():
    ap = argparse.ArgumentParser(prog="ldg-experiment", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    relax = sub.add_parser("relax", help="one run at the first listed eps")
    _add_run_flags(relax)
    relax.set_defaults(func=cmd_relax)

    sweep = sub.add_parser("sweep", help="continuation run down the eps list")
    _add_run_flags(sweep)
    sweep.set_defaults(func=cmd_sweep)

    cl = sub.add_parser("classify-loop", help="classify a sampled loop file")
    cl.add_argument("loop", help="JSON file with an (N, 5) 'coeffs' array")
    cl.add_argument("--out", help="write the JSON report here, not stdout")
    cl.set_defaults(func=cmd_classify_loop)

    lb = sub.add_parser("lower-bound", help="slice bound for a 2-d snapshot")
    lb.add_argument("snapshot")
    lb.add_argument("radius", type=float)
    lb.add_argument("--c-fit", type=float, default=None,
                    help="calibration constant (default: fit it)")
    lb.add_argument("--out")
    lb.set_defaults(func=cmd_lower_bound)

    bb = sub.add_parser("ball-bound", help="grow-and-merge bound from seeds")
    bb.add_argument("spec", help="JSON: balls [[x, y(, z), r], ...], lam, r, "
                                 "e_star or class")
    bb.add_argument("--out")
    bb.set_defaults(func=cmd_ball_bound)

    dg = sub.add_parser("diagnose", help="health record for a snapshot")
    dg.add_argument("snapshot")
    dg.add_argument("--out")
    dg.add_argument("--mask-csv", help="also dump the defect-component table")
    dg.set_defaults(func=cmd_diagnose)
    return ap


def _apply_thread_cap():
    cap = os.environ.get("LDG_THREADS")
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ.setdefault(var, cap)


def main(argv=None):
    args = build_parser().parse_args(argv)
    _apply_thread_cap()
    try:
        return args.func(args)
    except (q8.RefineLoopError, q8.LiftFailedError,
            q8.InconsistentTopologyError) as err:
        print(str(err), file=sys.stderr)
        return 1
    except da.CannotClassifyError as err:
        print(str(err), file=sys.stderr)
        return 1
    except rs.StagnationError as err:
        print(f"solver stagnated: {err}", file=sys.stderr)
        return 1
    except (ConfigError, json.JSONDecodeError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
