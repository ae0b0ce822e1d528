"""Command line interface: data generation, inversion, bound verification and inspection.

Exit codes: 0 success, 2 invalid configuration or inputs, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import tempfile
import time
from importlib import metadata

import numpy as np

from .bayes import FemPotential
from .bounds import GeometrySummary, constant_report, observation_norms, verify_forward_bound
from .config import ConfigError, RunConfig
from .forward import ForwardSolver, MappingError, SolverError, export_field
from .mesh import build_disk_mesh
from .observe import DataVector, generate_data, measurement_points, observe
from .shape import PriorSpec, RadiusField, sample_coefficients
from .smc import CountingPotential, run

logger = logging.getLogger("shapeinv")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
SUMMARY_ANGLES = 720


def _fmt(v):
    if isinstance(v, (bool, np.bool_)) or v is None or isinstance(v, str):
        return "" if v is None else str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def write_csv(path, header, rows):
    """Write rows with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def write_manifest(out_dir, command, config: RunConfig, outputs, wall, solves, extra=None):
    """Atomically write ``manifest.json`` with config, seeds and output hashes."""
    cfg = config.resolved()
    manifest = {
        "command": command,
        "version": _version(),
        "config": cfg.to_dict(),
        "seeds": {"prior": cfg.prior.seed, "truth": cfg.truth.seed, "noise": cfg.noise.seed,
                  "smc": cfg.smc.seed},
        "wall_clock_seconds": wall,
        "forward_solves": solves,
        "outputs": {os.path.basename(p): sha256(p) for p in outputs},
    }
    if extra:
        manifest.update(extra)
    fd, tmp = tempfile.mkstemp(dir=out_dir, prefix=".manifest", suffix=".json")
    with os.fdopen(fd, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    path = os.path.join(out_dir, "manifest.json")
    os.replace(tmp, path)
    return path


def _solver(config: RunConfig, params=None):
    params = config.physics_params() if params is None else params
    return ForwardSolver(build_disk_mesh(config.mesh_config()), params)


def _truth(config: RunConfig, coeffs):
    if config.truth.y is not None:
        return RadiusField(np.asarray(config.truth.y, dtype=float), coeffs)
    rng = np.random.default_rng(config.truth.seed)
    return RadiusField(sample_coefficients(PriorSpec(coeffs, config.truth.seed), 1, rng)[0], coeffs)


def _angles():
    return np.linspace(0.0, 2 * np.pi, SUMMARY_ANGLES, endpoint=False)


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate_data(config: RunConfig, out_dir, threads=1):
    """Draw (or load) a truth, solve, add noise and write ``data.json``."""
    t0 = time.perf_counter()
    coeffs = config.coefficients()
    truth = _truth(config, coeffs)
    solver = _solver(config)
    data = generate_data(truth, config.noise_model(), (config.truth.seed, config.noise.seed),
                         solver.params, config.measurement_setup(), solver)
    data_path = os.path.join(out_dir, "data.json")
    data.save(data_path)
    phi = _angles()
    truth_path = os.path.join(out_dir, "truth_radius.csv")
    write_csv(truth_path, ["phi", "radius"], zip(phi, truth.radius(phi)))
    outputs = [data_path, truth_path]
    write_manifest(out_dir, "generate-data", config, outputs, time.perf_counter() - t0, solver.n_solves)
    return outputs


def cmd_run_smc(config: RunConfig, out_dir, data_path, threads=1):
    """Sample the posterior for the stored data and write particle summaries."""
    t0 = time.perf_counter()
    data = DataVector.load(data_path)
    setup = config.measurement_setup()
    if data.K != setup.K or not np.isclose(data.r1, setup.r1) or data.mode != setup.mode:
        raise ConfigError(
            f"data (K={data.K}, r1={data.r1}, mode={data.mode}) does not match the configuration "
            f"(K={setup.K}, r1={setup.r1}, mode={setup.mode})"
        )
    noise = config.noise_model()
    if noise is None:
        raise ConfigError("noise.enabled must be true for inversion")
    coeffs = config.coefficients()
    solver = _solver(config)
    fem = FemPotential(solver, coeffs, setup, data.delta, noise, n_workers=threads)
    pot = CountingPotential(fem)
    try:
        result = run(config.smc_config(), coeffs.n_modes, pot)
    finally:
        fem.close()
    J = coeffs.n_modes
    ps = result.particles
    part_path = os.path.join(out_dir, "particles.csv")
    write_csv(part_path, [f"y{j + 1}" for j in range(J)] + ["weight"],
              (list(y) + [w] for y, w in zip(ps.positions, ps.weights)))
    diag_path = os.path.join(out_dir, "diagnostics.csv")
    cols = ["iteration", "T", "ESS", "acceptance", "sweeps", "forward_calls", "wall_time"]
    write_csv(diag_path, cols, ([r[c] for c in cols] for r in result.diagnostics_rows()))
    phi = _angles()
    radii = np.array([RadiusField(y, coeffs).radius(phi) for y in ps.positions])
    mean = ps.weights @ radii
    std = np.sqrt(np.maximum(ps.weights @ (radii - mean) ** 2, 0.0))
    prior = PriorSpec(coeffs, config.prior.seed)
    header = ["phi", "posterior_mean", "posterior_std", "prior_mean", "prior_std"]
    columns = [phi, mean, std, prior.mean_radius(phi), prior.std_radius(phi)]
    if data.truth_y is not None and len(data.truth_y) == J:
        header.append("truth")
        columns.append(RadiusField(np.asarray(data.truth_y), coeffs).radius(phi))
    summary_path = os.path.join(out_dir, "radius_summary.csv")
    write_csv(summary_path, header, zip(*columns))
    outputs = [part_path, diag_path, summary_path]
    extra = {"data_file": os.path.abspath(data_path), "data_sha256": sha256(data_path),
             "total_sweeps": result.total_sweeps,
             "mutation_forward_calls": result.mutation_forward_calls,
             "initial_forward_calls": result.initial_forward_calls,
             "model_evaluations": result.model_evaluations}
    write_manifest(out_dir, "run-smc", config, outputs, time.perf_counter() - t0,
                   pot.forward_calls, extra)
    return outputs


def cmd_verify_bounds(config: RunConfig, out_dir, n_shapes=None, multipliers=None, threads=1):
    """Sweep wavenumbers and prior shapes, recording constants and the forward bound."""
    t0 = time.perf_counter()
    n_shapes = config.bounds.n_shapes if n_shapes is None else n_shapes
    multipliers = config.bounds.kappa_multipliers if multipliers is None else multipliers
    coeffs = config.coefficients()
    geom = GeometrySummary.from_prior(coeffs, config.geometry.R, config.geometry.R_scatt,
                                      config.geometry.R_PML)
    noise = config.noise_model()
    setup = config.measurement_setup()
    lam = noise.lambda_min if noise is not None else config.noise.variance
    gamma = config.bounds.gamma if config.bounds.gamma is not None else 2.0 * np.sqrt(setup.K)
    mesh = build_disk_mesh(config.mesh_config())
    seed_seq = np.random.SeedSequence(config.prior.seed)
    shape_seeds = [int(s.generate_state(1)[0]) for s in seed_seq.spawn(n_shapes)]
    fields = [RadiusField(sample_coefficients(PriorSpec(coeffs, s), 1)[0], coeffs) for s in shape_seeds]
    rows, solves = [], 0
    for m in multipliers:
        params = config.physics_params(m)
        solver = ForwardSolver(mesh, params)
        obs = float(np.linalg.norm(observation_norms(mesh, params, measurement_points(setup))))
        consts = constant_report(params, geom, lam, gamma, obs)
        for seed, f in zip(shape_seeds, fields):
            rep = verify_forward_bound(f, params, geom, solver, config.bounds.slack, seed)
            row = {"multiplier": m}
            row.update(rep.as_row())
            row.update({k: v for k, v in consts.items() if k not in row})
            rows.append(row)
        solves += solver.n_solves
    header = list(rows[0])
    path = os.path.join(out_dir, "bounds.csv")
    write_csv(path, header, ([r[c] for c in header] for r in rows))
    n_fail = sum(1 for r in rows if not r["passed"])
    write_manifest(out_dir, "verify-bounds", config, [path], time.perf_counter() - t0, solves,
                   {"failures": n_fail})
    return [path]


def cmd_forward_solve(config: RunConfig, out_dir, y=None, threads=1):
    """Solve for one shape; write the nodal field and the ring measurements."""
    t0 = time.perf_counter()
    coeffs = config.coefficients()
    if y is None:
        field = RadiusField(np.asarray(config.truth.y), coeffs) if config.truth.y is not None else None
    else:
        y = np.asarray(y, dtype=float)
        if y.size != coeffs.n_modes:
            raise ConfigError(f"--y needs J = {coeffs.n_modes} values, got {y.size}")
        field = RadiusField(y, coeffs)
    solver = _solver(config)
    sol = solver.solve(field)
    setup = config.measurement_setup()
    field_path = os.path.join(out_dir, "field.csv")
    export_field(sol, field_path)
    meas_path = os.path.join(out_dir, "measurements.csv")
    pts = measurement_points(setup)
    write_csv(meas_path, ["x", "y", "value"], zip(pts[:, 0], pts[:, 1], observe(sol, setup)))
    outputs = [field_path, meas_path]
    write_manifest(out_dir, "forward-solve", config, outputs, time.perf_counter() - t0, solver.n_solves,
                   {"relative_residual": sol.residual})
    return outputs


def cmd_prior_sample(config: RunConfig, out_dir, count=10, threads=1):
    """Draw prior coefficients and write them with the radii on a 720-angle grid."""
    t0 = time.perf_counter()
    spec = config.prior_spec()
    Y = sample_coefficients(spec, count)
    J = spec.n_modes
    coef_path = os.path.join(out_dir, "prior_samples.csv")
    write_csv(coef_path, ["sample"] + [f"y{j + 1}" for j in range(J)],
              ([i] + list(y) for i, y in enumerate(Y)))
    phi = _angles()
    radii = [RadiusField(y, spec.coeffs).radius(phi) for y in Y]
    rad_path = os.path.join(out_dir, "prior_radii.csv")
    write_csv(rad_path, ["phi"] + [f"r{i}" for i in range(count)], zip(phi, *radii))
    outputs = [coef_path, rad_path]
    write_manifest(out_dir, "prior-sample", config, outputs, time.perf_counter() - t0, 0)
    return outputs


# ---------------------------------------------------------------------------
# entry point


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration (defaults if omitted)")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides output.dir)")
    common.add_argument("--seed", type=int, metavar="N", help="derive every seed from N")
    common.add_argument("--threads", type=int, default=1, metavar="N",
                        help="worker processes for particle forward solves")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="shapeinv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate-data", parents=[common], help="synthetic data from a prior truth")
    p = sub.add_parser("run-smc", parents=[common], help="posterior sampling with tempered SMC")
    p.add_argument("--data", required=True, metavar="PATH", help="data JSON from generate-data")
    p = sub.add_parser("verify-bounds", parents=[common], help="evaluate constants and check the forward bound")
    p.add_argument("--n-shapes", type=int, metavar="N")
    p.add_argument("--multipliers", type=_floats, metavar="LIST", help="wavenumber multipliers, e.g. 1,2,4")
    p = sub.add_parser("forward-solve", parents=[common], help="solve for one coefficient vector")
    p.add_argument("--y", type=_floats, metavar="LIST", help="comma-separated coefficients")
    p = sub.add_parser("prior-sample", parents=[common], help="draw prior radii")
    p.add_argument("--count", type=int, default=10)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = RunConfig.load(args.config) if args.config else RunConfig().validate()
        if args.seed is not None:
            config = config.with_seed(args.seed)
        out_dir = args.out or config.output.dir
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        os.makedirs(out_dir, exist_ok=True)
        kw = {"threads": args.threads}
        if args.command == "generate-data":
            outputs = cmd_generate_data(config, out_dir, **kw)
        elif args.command == "run-smc":
            if not os.path.exists(args.data):
                raise ConfigError(f"data file not found: {args.data}")
            outputs = cmd_run_smc(config, out_dir, args.data, **kw)
        elif args.command == "verify-bounds":
            outputs = cmd_verify_bounds(config, out_dir, args.n_shapes, args.multipliers, **kw)
        elif args.command == "forward-solve":
            outputs = cmd_forward_solve(config, out_dir, args.y, **kw)
        else:
            if args.count < 0:
                raise ConfigError("--count must be non-negative")
            outputs = cmd_prior_sample(config, out_dir, args.count, **kw)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, MappingError, FloatingPointError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for path in outputs:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
