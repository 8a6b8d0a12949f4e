"""Command-line front end.

Exit status: 0 success, 1 usage error, 2 invalid input, 3 convergence
failure (the partial table is still written, with ``converged`` false on
the affected rows).
"""

from __future__ import annotations

import argparse
import math
import re
import sys

import numpy as np

from . import analysis, hamiltonian, reductions, weyl
from .errors import CanonicalSystemError, ConvergenceError, ValidationError
from .io import csv_text, dumps, read_hamiltonian, read_interval_set, read_problem, write_hamiltonian, write_text

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_CONVERGENCE = 0, 1, 2, 3

_UNSIGNED = r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_RECT = re.compile(rf"^([+-]?{_UNSIGNED})([+-]{_UNSIGNED})i$")
_IMAG = re.compile(rf"^([+-]?{_UNSIGNED})i$")
_REAL = re.compile(rf"^([+-]?{_UNSIGNED})$")


def parse_complex(text: str) -> complex:
    """Parse ``a+bi``, ``a-bi``, ``bi`` or ``a`` (decimal notation only)."""
    s = text.strip().replace(" ", "")
    m = _RECT.match(s)
    if m:
        return complex(float(m.group(1)), float(m.group(2)))
    m = _IMAG.match(s)
    if m:
        return complex(0.0, float(m.group(1)))
    m = _REAL.match(s)
    if m:
        return complex(float(m.group(1)), 0.0)
    raise argparse.ArgumentTypeError(f"not a complex number of the form a+bi: {text!r}")


def _positive(text: str) -> float:
    v = float(text)
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return v


def _count(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# default z-grids for the relation report (both z and z^2 in the upper half plane for dirac)
def _default_grid(kind: str) -> list:
    if kind == "schrodinger":
        return [complex(a, b) for b in np.linspace(0.5, 2.5, 5) for a in np.linspace(-3.0, -1.0, 5)]
    if kind in ("dirac", "flip"):
        return [r * complex(math.cos(t), math.sin(t))
                for r in np.linspace(1.0, 2.0, 5) for t in np.linspace(math.pi / 8, 3 * math.pi / 8, 5)]
    return [2j]


def _half(H, side: str):
    if isinstance(H, hamiltonian.WholeLineHamiltonian):
        return H.half(side)
    return H


def _whole(H, path):
    if not isinstance(H, hamiltonian.WholeLineHamiltonian):
        raise ValidationError("expected a whole-line Hamiltonian with 'right' and 'left'", path=path)
    return H


def _zpair(z: complex) -> list:
    return [z.real, z.imag]


# ---------------------------------------------------------------------------
# verbs


def cmd_m(a) -> int:
    H = _half(read_hamiltonian(a.ham), a.side)
    mv = weyl.m_halfline(H, a.z, tol=a.tol, N_max=a.N_max, alpha=a.alpha)
    write_text(dumps({"z": _zpair(a.z), "m": _zpair(mv.value), "error_radius": mv.error_radius,
                      "N_used": mv.N_used, "converged": mv.converged}), a.out)
    return EXIT_OK if mv.converged else EXIT_CONVERGENCE


def cmd_disk(a) -> int:
    H = _half(read_hamiltonian(a.ham), a.side)
    rows = []
    for N in a.N:
        d = weyl.disk_at(H, N, a.z, a.alpha)
        rows.append((N, a.z.real, a.z.imag, d.center.real, d.center.imag, d.radius))
    write_text(csv_text(["N", "z_re", "z_im", "center_re", "center_im", "radius"], rows), a.out)
    return EXIT_OK


def cmd_classify(a) -> int:
    H = _half(read_hamiltonian(a.ham), a.side)
    res = weyl.classify_limit_type(H, a.z, a.N)
    write_text(dumps({"kind": res.kind, "z": _zpair(a.z), "N": list(res.N_seq), "radii": list(res.radii)}), a.out)
    return EXIT_OK


def cmd_convert(a) -> int:
    P = read_problem(a.problem)
    if isinstance(P, reductions.SchrodingerProblem):
        H = reductions.schrodinger_to_canonical(P, a.cells_per_piece)
    elif isinstance(P, reductions.DiracPotential):
        H = reductions.dirac_to_canonical(P, a.orientation, a.cells_per_piece)
    else:
        H = reductions.jacobi_to_canonical(P, a.extension)
    write_hamiltonian(H, a.out)
    return EXIT_OK


def cmd_relations(a) -> int:
    P = read_problem(a.problem)
    kind = a.kind or {reductions.SchrodingerProblem: "schrodinger", reductions.DiracPotential: "dirac",
                      reductions.JacobiProblem: "jacobi"}[type(P)]
    if a.kind in ("dirac", "flip") and not isinstance(P, reductions.DiracPotential) or \
            a.kind == "schrodinger" and not isinstance(P, reductions.SchrodingerProblem) or \
            a.kind == "jacobi" and not isinstance(P, reductions.JacobiProblem):
        raise ValidationError(f"relation {a.kind!r} does not apply to this problem type", path=a.problem)
    zs = a.z or _default_grid(kind)
    rep = reductions.m_relation_report(kind, P, zs, a.tol, cells_per_piece=a.cells_per_piece,
                                       orientation=a.orientation, m_tol=a.m_tol)
    rows = [(r.z.real, r.z.imag, r.lhs.real, r.lhs.imag, r.rhs.real, r.rhs.imag, r.defect, r.error_radius,
             r.converged) for r in rep.rows]
    header = ["z_re", "z_im", "lhs_re", "lhs_im", "rhs_re", "rhs_im", "defect", "error_radius", "converged"]
    write_text(csv_text(header, rows), a.out)
    return EXIT_OK if not rep.flagged else EXIT_CONVERGENCE


def cmd_reflectionless(a) -> int:
    H = _whole(read_hamiltonian(a.ham), a.ham)
    A = read_interval_set(a.A)
    ys = sorted(a.y, reverse=True)
    rows, ok = [], True
    for y in ys:
        d = analysis.reflectionless_defect(H, A, y, grid=a.grid, tol_m=a.tol, N_max=a.N_max)
        ok &= d.converged
        rows.append((y, d.value, d.error_radius, len(d.flagged), d.converged))
    write_text(csv_text(["y", "value", "error_radius", "n_flagged", "converged"], rows), a.out)
    return EXIT_OK if ok else EXIT_CONVERGENCE


def cmd_bp(a) -> int:
    H = read_hamiltonian(a.ham)
    if isinstance(H, hamiltonian.WholeLineHamiltonian):
        H = H.right
    A, S = read_interval_set(a.A), read_interval_set(a.S)
    rows, ok = [], True
    for N in a.N:
        r = analysis.bp_discrepancy(H, A, S, N, a.y, nodes=a.nodes, panels=a.panels, tol_m=a.tol, N_max=a.N_max)
        conv = not r.flagged
        ok &= conv
        rows.append((N, r.y, r.value, r.minus_integral, r.plus_integral, len(r.flagged), conv))
    header = ["N", "y", "value", "minus_integral", "plus_integral", "n_flagged", "converged"]
    write_text(csv_text(header, rows), a.out)
    return EXIT_OK if ok else EXIT_CONVERGENCE


def cmd_omega(a) -> int:
    mu = _whole(read_hamiltonian(a.mu), a.mu)
    nu = _whole(read_hamiltonian(a.nu), a.nu)
    res = analysis.omega_limit_probe(mu, nu, a.x, hamiltonian.TestFamily(a.n_max))
    rows = [(x, r.value, r.tail_bound) for x, r in zip(a.x, res)]
    write_text(csv_text(["x", "distance", "tail_bound"], rows), a.out)
    return EXIT_OK


def cmd_metric(a) -> int:
    mu = _whole(read_hamiltonian(a.mu), a.mu)
    nu = _whole(read_hamiltonian(a.nu), a.nu)
    r = hamiltonian.metric_distance(mu, nu, hamiltonian.TestFamily(a.n_max))
    write_text(dumps({"value": r.value, "tail_bound": r.tail_bound, "n_terms": r.n_terms}), a.out)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cansys", description="Canonical systems: m-functions, Weyl disks, reductions, diagnostics.")
    sub = p.add_subparsers(dest="verb", metavar="VERB", parser_class=_Parser)
    sub.required = True

    def verb(name, fn, help_):
        s = sub.add_parser(name, help=help_, description=help_)
        s.add_argument("--out", default="-", help="output file (default: stdout)")
        s.set_defaults(fn=fn)
        return s

    def ham(s):
        s.add_argument("--ham", required=True, help="Hamiltonian JSON file")
        s.add_argument("--side", choices=["+", "-"], default="+", help="half of a whole-line file to use")

    s = verb("m", cmd_m, "half-line m-function with certified error radius")
    ham(s)
    s.add_argument("--z", type=parse_complex, required=True)
    s.add_argument("--tol", type=_positive, default=1e-8)
    s.add_argument("--N-max", dest="N_max", type=_positive, default=None)
    s.add_argument("--alpha", type=float, default=0.0, help="boundary angle at 0")

    s = verb("disk", cmd_disk, "Weyl disk centre and radius for each N")
    ham(s)
    s.add_argument("--z", type=parse_complex, required=True)
    s.add_argument("--N", type=_positive, nargs="+", required=True)
    s.add_argument("--alpha", type=float, default=0.0)

    s = verb("classify", cmd_classify, "limit-point / limit-circle heuristic")
    ham(s)
    s.add_argument("--z", type=parse_complex, default=1j)
    s.add_argument("--N", type=_positive, nargs="+", default=[10.0, 100.0, 1000.0, 10000.0])

    s = verb("convert", cmd_convert, "reduce a Schrödinger/Dirac/Jacobi problem to a Hamiltonian JSON")
    s.add_argument("--problem", required=True)
    s.add_argument("--cells-per-piece", dest="cells_per_piece", type=_count,
                   default=reductions.DEFAULT_CELLS_PER_PIECE)
    s.add_argument("--orientation", choices=["+", "-"], default="+")
    s.add_argument("--extension", choices=list(hamiltonian.EXTENSIONS), default="repeat-last")

    s = verb("relations", cmd_relations, "m-function correspondence report")
    s.add_argument("--problem", required=True)
    s.add_argument("--kind", choices=["schrodinger", "dirac", "flip", "jacobi"], default=None)
    s.add_argument("--z", type=parse_complex, action="append", default=None, help="repeatable")
    s.add_argument("--tol", type=_positive, default=1e-6)
    s.add_argument("--m-tol", dest="m_tol", type=_positive, default=1e-10)
    s.add_argument("--cells-per-piece", dest="cells_per_piece", type=_count,
                   default=reductions.DEFAULT_CELLS_PER_PIECE)
    s.add_argument("--orientation", choices=["+", "-"], default="+")

    s = verb("reflectionless", cmd_reflectionless, "reflectionless defect along a y-schedule")
    s.add_argument("--ham", required=True, help="whole-line Hamiltonian JSON")
    s.add_argument("--A", required=True, help="interval set: JSON file or inline [[a,b],...]")
    s.add_argument("--y", type=_positive, nargs="+", default=[0.1, 0.03, 0.01, 0.003, 0.001])
    s.add_argument("--grid", type=_count, default=64)
    s.add_argument("--tol", type=_positive, default=1e-8)
    s.add_argument("--N-max", dest="N_max", type=_positive, default=None)

    s = verb("bp", cmd_bp, "value-distribution discrepancy over N")
    s.add_argument("--ham", required=True, help="right half-line Hamiltonian JSON")
    s.add_argument("--A", required=True)
    s.add_argument("--S", required=True)
    s.add_argument("--N", type=_positive, nargs="+", default=[2.0, 4.0, 8.0, 16.0, 32.0])
    s.add_argument("--y", type=_positive, default=1e-3)
    s.add_argument("--nodes", type=_count, default=analysis.DEFAULT_NODES)
    s.add_argument("--panels", type=_count, default=None)
    s.add_argument("--tol", type=_positive, default=1e-8)
    s.add_argument("--N-max", dest="N_max", type=_positive, default=None)

    s = verb("omega", cmd_omega, "metric distance of shifts of mu to nu")
    s.add_argument("--mu", required=True)
    s.add_argument("--nu", required=True)
    s.add_argument("--x", type=float, nargs="+", required=True)
    s.add_argument("--n-max", dest="n_max", type=_count, default=20)

    s = verb("metric", cmd_metric, "metric distance between two whole-line Hamiltonians")
    s.add_argument("--mu", required=True)
    s.add_argument("--nu", required=True)
    s.add_argument("--n-max", dest="n_max", type=_count, default=20)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 0 for --help
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except ConvergenceError as exc:
        print(f"cansys: convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except CanonicalSystemError as exc:
        print(f"cansys: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
