"""Configuration-driven verification runner.

Subcommands map one-to-one onto the verification suites:

* ``bellman-verify``   pointwise certification of the Bellman function
* ``operator-verify``  discretization invariants of L_h
* ``semigroup-verify`` time stepping against oracles and conservation laws
* ``pointwise``        the pointwise lower bound on a scenario
* ``embed``            the bilinear embedding bounds on a scenario
* ``ibp``              the cutoff integration-by-parts upper bound
* ``offdiag``          off-diagonal decay fits
* ``sweep``            pointwise + embedding over presets x dimension x p

Exit codes: 0 all checks passed, 1 a check failed, 2 configuration error,
3 numerical failure (solver did not converge).  Identical configuration and
seed produce byte-identical output files.  ``DIVBELL_WORKERS`` sets the
sweep worker count (default 1, serial).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__, _kernels
from . import bellman as bl
from . import harness as hz
from . import operators as ops
from . import presets as ps
from . import semigroup as sg
from .errors import ConfigError, ConvergenceError
from .grids import Boundary, Grid, GridFunction
from .reports import Summary, emit_report, fmt
from .scenario import build_scenario, load_scenario_file


def _parse_grid(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"--grid: expected N[,N[,N]], got {text!r}") from exc


def _scenario_from_args(args, name=None) -> hz.ScenarioSpec:
    sections = load_scenario_file(args.config) if args.config else None
    cells = _parse_grid(args.grid) if args.grid else None
    dim = len(cells) if cells else None
    return build_scenario(sections, preset=args.preset, dim=dim, cells=cells,
                          p=args.p, dt=args.dt, T=args.T, seed=args.seed,
                          name=name)


def _coords_header(dim: int) -> list[str]:
    return ["x", "y", "z"][:dim]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_bellman_verify(args) -> tuple[Summary, dict]:
    pvals = [args.p] if args.p else [2.0, 3.0, 4.0, 8.0]
    summary = Summary()
    rows = []
    header = ["p", "index", "re_zeta", "im_zeta", "re_eta", "im_eta",
              "prop_i_slack", "tau", "margin_hessian", "margin_drift", "valid"]
    for p in pvals:
        params = bl.BellmanParams(p)
        rng = ps.rng_for(args.seed, f"bellman-points-p{p}")
        zetas, etas = bl.sample_certification_points(params, args.points, rng)
        res = bl.certify_batch(params, zetas, etas, args.directions)
        for i in range(len(zetas)):
            rows.append((p, i, zetas[i].real, zetas[i].imag, etas[i].real,
                         etas[i].imag, res["prop_i_slack"][i], res["tau"][i],
                         res["margin_hessian"][i], res["margin_drift"][i],
                         bool(res["valid"][i])))
        summary.add(f"range-bound(p={p:g})", float(res["prop_i_slack"].min()),
                    bool((res["prop_i_slack"] >= 0.0).all()))
        shared = np.minimum(res["margin_hessian"], res["margin_drift"])
        summary.add(f"convexity+drift-tau(p={p:g})", float(shared.min()),
                    bool((shared >= -1e-10).all()),
                    note=f"{args.points} points, {args.directions} directions")
    return summary, {"bellman": (header, rows)}


def cmd_operator_verify(args) -> tuple[Summary, dict]:
    spec = _scenario_from_args(args)
    grid, A, V = spec.grid, spec.coefficients, spec.potential
    summary = Summary()
    rows = []
    gamma = ops.check_accretive(A)
    summary.add("accretivity-gamma", gamma, gamma > 0.0)
    rows.append(("gamma", gamma))
    op = ops.assemble(grid, A, V)
    rng = ps.rng_for(args.seed, "operator-verify")
    G = op.gradient
    worst_adj = 0.0
    worst_ell = np.inf
    for _ in range(50):
        u = rng.standard_normal(op.n) + 1j * rng.standard_normal(op.n)
        w = rng.standard_normal(G.shape[0]) + 1j * rng.standard_normal(G.shape[0])
        lhs = np.vdot(w, G @ u)
        rhs = np.vdot(G.T @ w, u)
        worst_adj = max(worst_adj, abs(lhs - rhs) / max(abs(lhs), 1.0))
        quad = np.vdot(u, op.matrix @ u).real
        bound = gamma * np.vdot(G @ u, G @ u).real + np.vdot(u, op.potential * u).real
        worst_ell = min(worst_ell, quad - bound)
    summary.add("adjoint-consistency", 1e-12 - worst_adj, worst_adj <= 1e-12)
    rows.append(("adjoint_gap", worst_adj))
    summary.add("discrete-ellipticity", worst_ell, worst_ell >= -1e-9)
    rows.append(("ellipticity_slack", worst_ell))
    gap = abs(ops.check_accretive(ops.symmetrize(A)) - gamma)
    summary.add("symmetrization-gamma", 1e-12 - gap, gap <= 1e-12)
    rows.append(("symmetrize_gamma_gap", gap))
    S = ops.matrix_sqrt_spd(0.5 * (A.values + np.swapaxes(A.values, -1, -2)))
    rec = np.abs(np.einsum("...ij,...jk->...ik", S, S)
                 - 0.5 * (A.values + np.swapaxes(A.values, -1, -2))).max()
    summary.add("sqrt-reconstruction", 1e-12 - rec, rec <= 1e-12 * max(A.sup_norm, 1.0))
    rows.append(("sqrt_reconstruction", rec))
    return summary, {"operator": (["check", "value"], rows)}


def cmd_semigroup_verify(args) -> tuple[Summary, dict]:
    summary = Summary()
    rows = []
    tight = sg.SolverConfig(tol=1e-13)
    # eigen-oracle for one backward Euler step
    g = Grid(cells=(64,), lo=(0.0,), hi=(1.0,), boundary=Boundary.PERIODIC)
    L = ops.assemble(g, ops.CoefficientField.identity(g), ops.PotentialField.zero(g))
    h = g.spacing[0]
    x = g.node_coords()[0]
    dt = 1e-3
    worst = 0.0
    for k in (1, 3, 7):
        lam = 2.0 * (1.0 - np.cos(2 * np.pi * k * h)) / h ** 2
        u = GridFunction(g, np.exp(2j * np.pi * k * x))
        u1 = sg.step(L, u, dt, sg.Scheme.BACKWARD_EULER, tight)
        worst = max(worst, float(np.abs(u1.values - u.values / (1 + dt * lam)).max()))
    summary.add("eigenmode-step-oracle", 1e-10 - worst, worst <= 1e-10)
    rows.append(("eigenmode_step_error", worst))
    # Crank-Nicolson against the dense exponential
    gd = Grid(cells=(64,), lo=(-3.0,), hi=(3.0,), boundary=Boundary.DIRICHLET)
    Ld = ops.assemble(gd, ops.CoefficientField.identity(gd), ops.PotentialField.zero(gd))
    f = ps.make_bump(gd, 0.0, 1.0, 1.0)
    tg = sg.TimeGrid(dt=1e-3, T=0.1, scheme=sg.Scheme.CRANK_NICOLSON, snapshot_stride=100)
    traj = sg.evolve(Ld, f, tg, sg.SolverConfig(tol=1e-12))
    oracle = sg.dense_expm_oracle(Ld, f, 0.1)
    rel = float(np.linalg.norm(traj.values[-1] - oracle.flat)
                / np.linalg.norm(oracle.flat))
    summary.add("crank-nicolson-vs-expm", 1e-4 - rel, rel <= 1e-4)
    rows.append(("cn_vs_expm_rel", rel))
    # sup-norm contraction and mass conservation
    f2 = ps.make_bump(g, 0.5, 0.2, 1.0)
    tg2 = sg.TimeGrid(dt=5e-4, T=0.1, scheme=sg.Scheme.BACKWARD_EULER)
    traj2 = sg.evolve(L, f2, tg2, tight)
    rep = sg.linf_contraction_check(L, traj2)
    summary.add("sup-norm-contraction", 1.0 + 1e-12 - rep.worst_ratio,
                rep.worst_ratio <= 1.0 + 1e-12)
    rows.append(("contraction_worst_ratio", rep.worst_ratio))
    masses = traj2.values.sum(axis=1).real * g.cell_volume
    drift = float(np.abs(masses - masses[0]).max() / abs(masses[0]))
    summary.add("mass-conservation", 1e-10 - drift, drift <= 1e-10)
    rows.append(("mass_drift_rel", drift))
    return summary, {"semigroup": (["check", "value"], rows)}


def cmd_pointwise(args) -> tuple[Summary, dict]:
    spec = _scenario_from_args(args)
    ev = hz.run_scenario(spec)
    rep = hz.pointwise_check(ev)
    dimcols = _coords_header(spec.grid.dim)
    header = dimcols + ["t", "lhs", "rhs", "slack"]
    coords = [c.ravel() for c in spec.grid.node_coords()]
    rows = []
    for k, t in enumerate(ev.traj_f.times):
        for j in range(spec.grid.n_nodes):
            rows.append(tuple(c[j] for c in coords) + (t, rep.lhs[k, j],
                                                       rep.rhs[k, j], rep.slack[k, j]))
    summary = Summary()
    summary.add("pointwise-lower-bound", rep.worst_slack + rep.eps_h, rep.ok,
                note=f"eps_h={fmt(rep.eps_h)}, mollified={rep.n_mollified}")
    summary.add("chain-rule-arrangements", 1e-10 - rep.arrangement_gap,
                rep.arrangement_gap <= 1e-10)
    return summary, {"pointwise": (header, rows)}


def cmd_embed(args) -> tuple[Summary, dict]:
    spec = _scenario_from_args(args)
    ev = hz.run_scenario(spec)
    rep = hz.embedding_check(ev)
    header = ["E_T", "tail", "mu_reliable", "norm_f_p", "norm_g_q", "gamma",
              "sum_bound", "sum_margin", "lambda_star", "product_bound",
              "product_margin", "ratio_empirical", "quad_error_est"]
    rows = [(rep.E_T, rep.tail, rep.tail_reliable, rep.norm_f_p, rep.norm_g_q,
             rep.gamma, rep.sum_bound, rep.sum_margin,
             rep.lambda_star if rep.lambda_star is not None else float("nan"),
             rep.product_bound, rep.product_margin, rep.ratio_empirical,
             rep.quad_error_est)]
    summary = Summary()
    summary.add("embedding-sum-form", rep.sum_margin - rep.quad_error_est,
                rep.sum_margin > rep.quad_error_est)
    summary.add("embedding-product-form", rep.product_margin - rep.quad_error_est,
                rep.product_margin > rep.quad_error_est)
    summary.add("embedding-tail-fit", rep.tail, rep.tail_reliable,
                note="exponential decay fit " + ("ok" if rep.tail_reliable else "unreliable"))
    return summary, {"embed": (header, rows)}


def cmd_ibp(args) -> tuple[Summary, dict]:
    spec = _scenario_from_args(args)
    ev = hz.run_scenario(spec)
    rep = hz.ibp_upper_check(ev)
    header = ["R", "term", "value"]
    rows = []
    for r in rep.rows:
        for term, val in (("I_RT", r.I_RT), ("bound", r.bound), ("eps_R", r.eps_R),
                          ("time_term_quad", r.time_term_quad),
                          ("time_term_exact", r.time_term_exact),
                          ("flux", r.flux_term), ("potential_term", r.potential_term)):
            rows.append((r.R, term, val))
    summary = Summary()
    for r in rep.rows:
        summary.add(f"ibp-upper-bound(R={r.R:g})", r.bound + r.eps_R - r.I_RT, r.ok)
    eps = [r.eps_R for r in rep.rows]
    summary.add("ibp-eps-nonincreasing", eps[0] - eps[-1],
                all(e1 <= e0 + 1e-10 + 1e-6 * abs(e0) for e0, e1 in zip(eps, eps[1:])))
    flux = [abs(r.flux_term) for r in rep.rows]
    summary.add("ibp-flux-decay", flux[0] - 2.0 * flux[-1], flux[0] >= 2.0 * flux[-1])
    summary.add("ibp-initial-nodewise-bound", 0.0, rep.nodewise_initial_ok)
    summary.add("ibp-final-nonpositive", 0.0, rep.final_nonpositive_ok)
    return summary, {"ibp": (header, rows)}


def cmd_offdiag(args) -> tuple[Summary, dict]:
    spec = _scenario_from_args(args)
    op = ops.assemble(spec.grid, spec.coefficients, spec.potential)
    wmin = min(b - a for a, b in zip(spec.grid.lo, spec.grid.hi))
    e_radius = 0.0625 * wmin
    datum = ps.make_bump(spec.grid,
                         0.5 * (np.asarray(spec.grid.lo) + np.asarray(spec.grid.hi)),
                         e_radius, 1.0)
    distances = tuple(wmin * s for s in (0.09, 0.15, 0.21, 0.27))
    ts = (0.1, 0.2, 0.4)
    header = ["operator", "t", "distance", "ratio", "d2_over_t", "excluded"]
    rows = []
    summary = Summary()
    for which in ("P", "tLP", "sqrt-t-grad-P"):
        rep = hz.offdiag_check(op, datum, tuple(0.5 * (a + b) for a, b in
                                                zip(spec.grid.lo, spec.grid.hi)),
                               e_radius, distances, band_width=0.06 * wmin, ts=ts,
                               operator=which)
        for smp in rep.samples:
            rows.append((which, smp.t, smp.distance, smp.ratio,
                         smp.distance ** 2 / smp.t, smp.excluded))
        summary.add(f"offdiag-decay({which})", rep.r_squared - 0.9, rep.ok,
                    note=f"slope={fmt(rep.slope)}, C={fmt(rep.fitted_C)}, "
                         f"c={fmt(rep.fitted_c)}")
    return summary, {"offdiag": (header, rows)}


def _sweep_cell(task):
    preset, dim, p, seed, cells_1d, cells_2d = task
    cells = (cells_1d,) if dim == 1 else (cells_2d,) * dim
    spec = build_scenario(None, preset=preset, dim=dim, cells=cells, p=p,
                          T=0.3, seed=seed, name=f"{preset}-{dim}d-p{p:g}")
    ev = hz.run_scenario(spec)
    pw = hz.pointwise_check(ev)
    em = hz.embedding_check(ev)
    return (preset, dim, p, ev.op.gamma, pw.worst_slack, pw.eps_h,
            em.sum_margin, em.product_margin, em.ratio_empirical,
            bool(pw.ok and em.ok))


def cmd_sweep(args) -> tuple[Summary, dict]:
    pvals = [args.p] if args.p else [2.0, 3.0, 4.0, 8.0]
    dims = (1, 2)
    tasks = [(preset, dim, p, args.seed, 96, 16)
             for preset in ps.PRESET_NAMES for dim in dims for p in pvals]
    workers = int(os.environ.get("DIVBELL_WORKERS", "1"))
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_cell, tasks))
    else:
        results = [_sweep_cell(t) for t in tasks]
    header = ["preset", "dim", "p", "gamma", "worst_slack", "eps_h",
              "sum_margin", "product_margin", "ratio_empirical", "pass"]
    summary = Summary()
    for row in results:
        summary.add(f"sweep({row[0]}, n={row[1]}, p={row[2]:g})",
                    min(row[4] + row[5], row[6], row[7]), row[9])
    return summary, {"sweep": (header, results)}


COMMANDS = {
    "bellman-verify": cmd_bellman_verify,
    "operator-verify": cmd_operator_verify,
    "semigroup-verify": cmd_semigroup_verify,
    "pointwise": cmd_pointwise,
    "embed": cmd_embed,
    "ibp": cmd_ibp,
    "offdiag": cmd_offdiag,
    "sweep": cmd_sweep,
}


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="divbell",
                                 description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", metavar="PATH", help="scenario file")
    ap.add_argument("--out", metavar="DIR", default="divbell-out",
                    help="output directory (default: divbell-out)")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--p", type=float, default=None, help="exponent p >= 2")
    ap.add_argument("--grid", metavar="N[,N[,N]]", default=None)
    ap.add_argument("--dt", type=float, default=None)
    ap.add_argument("--T", type=float, default=None)
    ap.add_argument("--preset", choices=ps.PRESET_NAMES, default=None)
    ap.add_argument("--points", type=int, default=10000,
                    help="sample count for bellman-verify")
    ap.add_argument("--directions", type=int, default=256,
                    help="direction sweep size for bellman-verify")
    ap.add_argument("--quiet", action="store_true")
    ap.add_argument("--version", action="version", version=__version__)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        summary, tables = COMMANDS[args.command](args)
        emit_report(summary, tables, args.out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    if not args.quiet:
        sys.stdout.write(summary.render())
        sys.stdout.write(f"backend: {_kernels.backend_name()}\n")
    return 0 if summary.all_passed else 1


if __name__ == "__main__":
    sys.exit(main())
