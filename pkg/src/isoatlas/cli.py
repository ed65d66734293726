"""
isoatlas command line
=====================

Subcommands:
    eigen    spectrum and norming constants of a matrix (JSON)
    chart    chart coordinates of a matrix, or the matrix of given coordinates (JSON)
    qr       QR / shifted / Rayleigh iteration trajectory (CSV)
    toda     Toda flow trajectory with chart and RK4 cross-checks (CSV)
    scatter  wave and scattering maps against long-time lattice fits (JSON)
    mesh     n=3 surface mesh (OBJ + CSV attribute sidecar)

Exit codes: 0 success, 1 numerical failure (singular factorization, tail not
free), 2 parse error, 3 degenerate spectrum, 4 chart, 5 shift, 6 overflow,
7 unsupported dimension.
"""

import argparse
import logging

import numpy as np

from . import config
from .charts import (
    Spectrum,
    chart_contains,
    moment_map,
    norming_constants,
    phi,
    psi,
    select_chart,
    sign_sequence,
)
from .core_linalg import Permutation, sym_tridiag_eigen
from .documents import (
    RAYLEIGH,
    MatrixDocument,
    TrajectoryWriter,
    load_matrix,
    load_state,
    parse_floats,
    parse_generator,
    parse_permutation,
    parse_shift,
    parse_spectrum,
    particle_to_dict,
    write_report,
)
from .errors import IsoAtlasError, NotJacobi, ParseError
from .mesh import build_mesh, sidecar_path, write_attributes, write_obj
from .qr_dynamics import limit_permutation, run_qr, run_rayleigh
from .toda import (
    FlowSpec,
    SIDE_MINUS,
    SIDE_PLUS,
    fit_asymptote,
    flaschka,
    flow_limit_permutation,
    inverse_flaschka,
    particle_rk4,
    scattering_map,
    toda_flow_chart,
    toda_flow_factorized,
    toda_rk4,
    wave_map,
)

logger = logging.getLogger("isoatlas")

# Lattice used by `scatter` without --input: spectrum (-1, 0, 1), chart coordinates (1, 1)
DEFAULT_SCATTER_SPECTRUM = (-1.0, 0.0, 1.0)
DEFAULT_SCATTER_BETA = (1.0, 1.0)


# ============================================================================
# Helpers
# ============================================================================


def _spectrum_for(T, doc=None, text=None):
    if text is not None:
        return parse_spectrum(text)
    if doc is not None and doc.spectrum() is not None:
        return doc.spectrum()
    return Spectrum.of(T)


def _floats(values):
    return [float(v) for v in values]


def _asymptotic_dict(a):
    return {"side": a.side, "c": _floats(a.c), "d": _floats(a.d), "sum_d": float(np.sum(a.d))}


def _require_input(args):
    if args.input is None:
        raise ParseError(f"'{args.command}' needs --input PATH (use - for stdin)")
    return args.input


# ============================================================================
# Commands
# ============================================================================


def cmd_eigen(args):
    """Ascending spectrum, gap, residual and (for Jacobi input) norming constants."""
    doc = load_matrix(_require_input(args))
    T = doc.matrix
    lambdas, Q = sym_tridiag_eigen(T)
    residual = float(np.abs(Q @ T.dense() @ Q.T - np.diag(lambdas)).max())
    spectrum = Spectrum(lambdas)
    report = {
        "n": T.n,
        "eigenvalues": _floats(lambdas),
        "gap": spectrum.gamma if T.n > 1 else None,
        "residual": residual,
        "jacobi": bool(np.all(T.off > 0.0)),
        "norming_constants": None,
        "moment_map": _floats(moment_map(T, spectrum)),
    }
    if report["jacobi"]:
        w = norming_constants(T, Permutation.identity(T.n))
        report["norming_constants"] = _floats(w.w)
    logger.info(f"eigen: n={T.n}, gap={report['gap']}, residual={residual:.3e}")
    write_report(report, args.output)
    return 0


def cmd_chart(args):
    """
    Forward: chart coordinates of the input matrix and the round-trip residual.
    Inverse (--beta given): the matrix of (spectrum, pi, beta).
    """
    if args.beta is not None:
        beta = np.array(parse_floats(args.beta, "beta"))
        doc = load_matrix(args.input) if args.input is not None else None
        if args.spectrum is None and doc is None:
            raise ParseError("Inverse chart mode needs --spectrum or --input")
        spectrum = _spectrum_for(doc.matrix if doc else None, doc, args.spectrum)
        pi = parse_permutation(args.pi) if args.pi else Permutation.identity(spectrum.n)
        T = phi(spectrum, pi, beta)
        back = psi(spectrum, pi, T).beta
        report = {
            "mode": "inverse",
            "pi": str(pi),
            "beta": _floats(beta),
            "spectrum": _floats(spectrum.lambdas),
            "matrix": MatrixDocument(T).to_dict(),
            "residual": float(np.abs(back - beta).max(initial=0.0)),
        }
    else:
        doc = load_matrix(_require_input(args))
        T = doc.matrix
        spectrum = _spectrum_for(T, doc, args.spectrum)
        pi = parse_permutation(args.pi) if args.pi else (doc.permutation() or select_chart(T))
        point = psi(spectrum, pi, T)
        back = phi(spectrum, pi, point.beta)
        report = {
            "mode": "forward",
            "pi": str(pi),
            "beta": _floats(point.beta),
            "spectrum": _floats(spectrum.lambdas),
            "sign_sequence": list(sign_sequence(T)),
            "residual": T.max_abs_diff(back),
        }
    logger.info(f"chart {report['mode']}: pi={report['pi']}, residual={report['residual']:.3e}")
    write_report(report, args.output)
    return 0


def cmd_qr(args):
    """Trajectory rows k, b_1..b_(n-1), measure; final status on the last row."""
    T0 = load_matrix(_require_input(args)).matrix
    shift = parse_shift(args.shift)
    if shift == RAYLEIGH:
        trajectory = run_rayleigh(Spectrum.of(T0), T0, args.steps)
    else:
        spectrum = Spectrum.of(T0)
        logger.info(f"qr {shift}: predicted limit pi={limit_permutation(spectrum, shift)}")
        trajectory = run_qr(T0, shift, args.steps)
    fieldnames = ["k"] + [f"b{i + 1}" for i in range(T0.n - 1)] + ["measure", "status"]
    last = len(trajectory.states) - 1
    with TrajectoryWriter(fieldnames, args.output) as writer:
        for k, (T, measure) in enumerate(zip(trajectory.states, trajectory.measures)):
            row = {"k": k, "measure": measure, "status": trajectory.status if k == last else ""}
            row.update({f"b{i + 1}": float(b) for i, b in enumerate(T.off)})
            writer.write_row(row)
    logger.info(f"qr: {last} steps, status {trajectory.status}")
    return 0


def _initial_matrix(args):
    state = load_state(_require_input(args))
    if isinstance(state, MatrixDocument):
        return state.matrix
    return flaschka(state)


def cmd_toda(args):
    """Factorized flow on a time grid, with chart-exact and RK4 discrepancies."""
    T0 = _initial_matrix(args)
    flow = FlowSpec(parse_generator(args.g), args.tmax)
    spectrum = Spectrum.of(T0)
    # the limit chart keeps every coordinate bounded for t >= 0
    pi = flow_limit_permutation(spectrum, flow.g)
    if not chart_contains(spectrum, pi, T0):
        pi = select_chart(T0)
    start = psi(spectrum, pi, T0)
    times = np.linspace(0.0, flow.t, args.steps + 1)
    rk4 = toda_rk4(T0, flow.g, times)
    n = T0.n
    fieldnames = (
        ["t"]
        + [f"a{i + 1}" for i in range(n)]
        + [f"b{i + 1}" for i in range(n - 1)]
        + ["chart_delta", "rk4_delta"]
    )
    worst = 0.0
    with TrajectoryWriter(fieldnames, args.output) as writer:
        for t, T_rk4 in zip(times, rk4):
            T = toda_flow_factorized(T0, flow.g, t)
            T_chart = phi(spectrum, pi, toda_flow_chart(spectrum, start, flow.g, t).beta)
            row = {"t": float(t), "chart_delta": T.max_abs_diff(T_chart), "rk4_delta": T.max_abs_diff(T_rk4)}
            row.update({f"a{i + 1}": float(a) for i, a in enumerate(T.diag)})
            row.update({f"b{i + 1}": float(b) for i, b in enumerate(T.off)})
            worst = max(worst, row["chart_delta"], row["rk4_delta"])
            writer.write_row(row)
    logger.info(f"toda g={flow.g}: chart pi={pi}, max discrepancy {worst:.3e}")
    return 0


def cmd_scatter(args):
    """Wave maps W-, W+, the scattering map S(W-) and RK4 tail fits on both sides."""
    if args.input is None:
        spectrum = Spectrum(DEFAULT_SCATTER_SPECTRUM)
        J = phi(spectrum, Permutation.identity(3), DEFAULT_SCATTER_BETA)
    else:
        J = _initial_matrix(args)
        if not np.all(J.off > 0.0):
            raise NotJacobi("Scattering needs a Jacobi matrix (a lattice state)")
    p0 = inverse_flaschka(J)
    incoming = wave_map(p0, SIDE_MINUS)
    outgoing = wave_map(p0, SIDE_PLUS)
    scattered = scattering_map(incoming)
    spectrum = Spectrum.of(flaschka(p0))
    t_max = args.tmax if args.tmax is not None else config.SCATTER_TMAX / spectrum.gamma
    logger.info(f"scatter: integrating to t = +/-{t_max:.3g}")
    fit_minus = fit_asymptote(particle_rk4(p0, -t_max), SIDE_MINUS)
    fit_plus = fit_asymptote(particle_rk4(p0, t_max), SIDE_PLUS)
    report = {
        "n": p0.n,
        "state": particle_to_dict(p0),
        "spectrum": _floats(spectrum.lambdas),
        "tmax": float(t_max),
        "wave_minus": _asymptotic_dict(incoming),
        "wave_plus": _asymptotic_dict(outgoing),
        "scattered": _asymptotic_dict(scattered),
        "fit_minus": dict(_asymptotic_dict(fit_minus), residual=fit_minus.residual),
        "fit_plus": dict(_asymptotic_dict(fit_plus), residual=fit_plus.residual),
        "deltas": {
            "scattering_vs_wave": scattered.max_delta(outgoing),
            "fit_minus_vs_wave": fit_minus.max_delta(incoming),
            "fit_plus_vs_wave": fit_plus.max_delta(outgoing),
        },
    }
    logger.info(f"scatter deltas: {report['deltas']}")
    write_report(report, args.output)
    return 0


def cmd_mesh(args):
    """OBJ mesh of the six chart patches plus the CSV attribute sidecar."""
    spectrum = parse_spectrum(args.spectrum)
    mesh = build_mesh(spectrum, args.grid, args.range)
    output = args.output or config.MESH_OUTPUT
    obj = write_obj(mesh, output)
    attrs = write_attributes(mesh, sidecar_path(obj))
    logger.info(f"mesh: {len(mesh.vertices)} vertices, {len(mesh.faces)} faces -> {obj}, {attrs}")
    return 0


# ============================================================================
# Parser
# ============================================================================


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--input', help='Input JSON document (- for stdin)')
    common.add_argument('--output', help='Output path (default: stdout)')
    common.add_argument('--verbose', action='store_true', help='Debug logging on stderr')

    parser = argparse.ArgumentParser(
        prog='isoatlas',
        description='Bidiagonal coordinates, QR steps and Toda flows on isospectral tridiagonal matrices',
        epilog='Set ISOATLAS_TOL to scale every numerical tolerance.',
    )
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('eigen', parents=[common], help='Spectrum and norming constants')
    p.set_defaults(func=cmd_eigen)

    p = sub.add_parser('chart', parents=[common], help='Chart coordinates or inverse chart')
    p.add_argument('--pi', help='Chart permutation, one-based, e.g. "3,1,2" (default: PLU choice)')
    p.add_argument('--beta', help='Chart coordinates "x,y": selects inverse mode')
    p.add_argument('--spectrum', help='Spectrum "4,5,7" (default: from the document)')
    p.set_defaults(func=cmd_chart)

    p = sub.add_parser('qr', parents=[common], help='QR iteration trajectory as CSV')
    p.add_argument('--shift', default='identity',
                   help='identity | s=VALUE | rayleigh (default: identity)')
    p.add_argument('--steps', type=int, default=config.QR_STEPS,
                   help=f'Maximum number of steps (default: {config.QR_STEPS})')
    p.set_defaults(func=cmd_qr)

    p = sub.add_parser('toda', parents=[common], help='Toda flow trajectory as CSV')
    p.add_argument('--g', default='id', help='id | square | table=v1,...,vn (default: id)')
    p.add_argument('--tmax', type=float, default=config.TODA_TMAX,
                   help=f'Final time (default: {config.TODA_TMAX})')
    p.add_argument('--steps', type=int, default=config.TODA_STEPS,
                   help=f'Number of time intervals (default: {config.TODA_STEPS})')
    p.set_defaults(func=cmd_toda)

    p = sub.add_parser('scatter', parents=[common], help='Wave and scattering maps')
    p.add_argument('--tmax', type=float, default=None,
                   help='Integration horizon (default: 30 / spectral gap)')
    p.set_defaults(func=cmd_scatter)

    p = sub.add_parser('mesh', parents=[common], help='n=3 surface mesh as OBJ + CSV')
    p.add_argument('--spectrum', default='4,5,7', help='Spectrum of size 3 (default: 4,5,7)')
    p.add_argument('--grid', type=int, default=config.MESH_GRID,
                   help=f'Grid points per chart axis (default: {config.MESH_GRID})')
    p.add_argument('--range', type=float, default=config.MESH_RANGE,
                   help=f'Half-width of the beta square (default: {config.MESH_RANGE})')
    p.set_defaults(func=cmd_mesh)

    return parser


def main(argv=None):
    """Parse arguments, run one subcommand and return its exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    config.setup_logging(args.verbose)
    try:
        return args.func(args)
    except IsoAtlasError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    except ValueError as e:
        logger.error(f"Invalid input: {e}")
        return ParseError.exit_code
