"""Command-line runner. Every subcommand prints one JSON document on stdout.

Exit codes: 0 success, 1 engine or input-file error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

from . import group, harmonic, pile
from .lattice import Coord, PeriodicLattice, TorusQuotient, TruncatedRay
from .relax import RelaxError, check_relaxation_certificate, relax
from .state import StateFormatError, odometer_rows, read_state, state_to_dict, write_state

ENGINE_ERRORS = (RelaxError, group.GroupError, StateFormatError, ArithmeticError,
                 ValueError, OSError, RuntimeError)


class UsageError(Exception):
    pass


def _pair(text: str) -> tuple[int, int]:
    try:
        a, b = text.split(",")
        return int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two integers 'a,b', got {text!r}") from None


def _triple(text: str) -> tuple[float, float, float]:
    try:
        a, b, c = text.split(",")
        return float(a), float(b), float(c)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'x,y,r', got {text!r}") from None


def _grains(text: str) -> int:
    """Accept plain integers and powers like 10**30 or 1.2e7 when exact."""
    text = text.strip()
    try:
        if "**" in text:
            base, exp = text.split("**")
            value = int(base) ** int(exp)
        elif "e" in text.lower():
            value = Fraction(text)
            if value.denominator != 1:
                raise ValueError
            value = int(value)
        else:
            value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer grain count: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("grain count must be positive")
    return value


def _carrier(args):
    """Finite carrier from --torus/--sink, --sink-period/--reps or --length."""
    if args.state_in:
        return read_state(args.state_in[0]).sinks
    if getattr(args, "torus", None):
        m, n = args.torus
        sinks = frozenset(args.sink or [(0, 0)])
        return TorusQuotient(m, n, sinks)
    if getattr(args, "sink_period", None):
        m, n = args.sink_period
        rx, ry = args.reps
        return harmonic.periodic_torus(m, n, rx, ry)
    if getattr(args, "length", None):
        return TruncatedRay(args.length)
    raise UsageError("give a carrier: --torus m,n, --sink-period m,n, --length L or --in FILE")


def _state_doc(state, out=None, extra=None):
    if out:
        write_state(state, out, extra)
    doc = state_to_dict(state)
    if extra:
        doc.update(extra)
    return doc


def _inputs(args, count):
    files = args.state_in or []
    if len(files) != count:
        raise UsageError(f"expected {count} --in file(s), got {len(files)}")
    return [read_state(f) for f in files]


# ---------------------------------------------------------------------------
# subcommands


def cmd_relax(args):
    (state,) = _inputs(args, 1)
    rep = relax(state, args.strategy)
    cert = check_relaxation_certificate(state, rep)
    extra = {"odometer": odometer_rows(rep.odometer), "report": rep.metadata(),
             "certificate": {"ok": cert.ok, "reason": cert.reason}}
    return _state_doc(rep.stable, args.out, extra)


def cmd_bigpile(args):
    spec = PeriodicLattice(*args.sink_period)
    rep = pile.run_bigpile(args.grains, Coord(*args.center), spec, args.out)
    return rep.to_dict()


def cmd_identity(args):
    carrier = _carrier(args)
    e = group.neutral_element(carrier)
    extra = {"sequence": e.sequence()} if isinstance(carrier, TruncatedRay) else None
    return _state_doc(e, args.out, extra)


def cmd_add(args):
    a, b = _inputs(args, 2)
    return _state_doc(group.group_add(a, b), args.out)


def cmd_inverse(args):
    (a,) = _inputs(args, 1)
    return _state_doc(group.group_inverse(a), args.out)


def cmd_order(args):
    (a,) = _inputs(args, 1)
    k = group.element_order(a, args.max, args.margin)
    return {"order": k, "searched_up_to": args.max, "margin": args.margin}


def cmd_recurrent_check(args):
    (a,) = _inputs(args, 1)
    v = group.is_recurrent(a, args.margin)
    doc = {"recurrent": v.recurrent, "exact": v.exact, "margin": v.margin,
           "compared_cells": v.compared_cells}
    if v.exact:
        doc["burning_test"] = group.burning_test(a)
    return doc


def cmd_ray_torsion(args):
    k = args.modulus
    state = harmonic.ray_state_from_torsion(k, args.numerator, args.length)
    e = group.neutral_element(state.sinks)
    order = group.element_order(state, k, args.margin, identity=e)
    return _state_doc(state, args.out, {"modulus": k, "numerator": args.numerator,
                                        "sequence": state.sequence(), "order": order})


def cmd_dk_table(args):
    rows = []
    for k in range(2, args.max + 1):
        d, p = harmonic.rank_and_period(k)
        rows.append({"k": k, "d": d, "pi": p})
    return {"rows": rows}


def cmd_kernel_modp(args):
    carrier = _carrier(args)
    basis = harmonic.laplacian_kernel_mod_p(carrier, args.modulus)
    return {"carrier": carrier.to_dict(), "modulus": args.modulus, "dimension": len(basis),
            "basis": [b.values.T.tolist() for b in basis]}


def cmd_cylinder_harmonic(args):
    m, n = args.sink_period
    phi = harmonic.cylinder_transfer_harmonic(m, n, args.modulus)
    if phi is None:
        return {"found": False, "modulus": args.modulus, "sink_period": [m, n]}
    doc = {"found": True, "modulus": args.modulus, "carrier": phi.carrier.to_dict(),
           "harmonic": phi.is_harmonic(), "values": phi.values.T.tolist(),
           "info": {k: int(v) for k, v in phi.info.items()}}
    if args.out:
        write_state(harmonic.harmonic_to_state(phi), args.out)
        doc["state_file"] = args.out
    return doc


def cmd_no_torsion_prefix(args):
    return harmonic.no_torsion_prefix(args.count).to_dict()


def cmd_poisson(args):
    (psi,) = _inputs(args, 1)
    res = harmonic.poisson_solve(psi, Fraction(args.tolerance))
    return {"iterations": res.iterations, "monotone": res.monotone, "bounded": res.bounded,
            "residual": res.residual, "window": psi.window.as_list(),
            "phi": [[float(v) for v in row] for row in res.phi.T]}


def cmd_render(args):
    (state,) = _inputs(args, 1)
    text = pile.render_figure(state, args.format, args.out, overlay=args.overlay)
    doc = {"format": args.format, "bytes": len(text.encode())}
    if args.out:
        doc["path"] = str(Path(args.out))
    else:
        doc["figure"] = text
    return doc


# ---------------------------------------------------------------------------
# parser


def _add_carrier(p, length=True):
    p.add_argument("--torus", type=_pair, metavar="M,N", help="torus quotient Z^2/(mZ x nZ)")
    p.add_argument("--sink", type=_pair, action="append", metavar="X,Y",
                   help="sink residue on the torus (repeatable, default 0,0)")
    p.add_argument("--sink-period", type=_pair, metavar="M,N",
                   help="periodic sinks (mi, nj) folded onto a torus of --reps periods")
    p.add_argument("--reps", type=_pair, default=(1, 1), metavar="A,B")
    if length:
        p.add_argument("--length", type=int, help="truncated ray of this length")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cnet-sandpile",
                                 description="Sandpiles on Z^2 with a C-net of sinks.")
    ap.add_argument("--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def cmd(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=fn)
        p.add_argument("--in", dest="state_in", action="append", metavar="FILE")
        p.add_argument("--out", metavar="PATH")
        return p

    p = cmd("relax", cmd_relax, "stabilize a state file")
    p.add_argument("--strategy", choices=["bulk", "naive"], default="bulk")

    p = cmd("bigpile", cmd_bigpile, "relax N grains at one cell on periodic sinks")
    p.add_argument("--grains", type=_grains, required=True)
    p.add_argument("--center", type=_pair, default=(3, 3))
    p.add_argument("--sink-period", type=_pair, default=(6, 6))

    p = cmd("identity", cmd_identity, "neutral element of a finite carrier")
    _add_carrier(p)

    cmd("add", cmd_add, "group sum of two recurrent states (two --in)")
    cmd("inverse", cmd_inverse, "group inverse")

    p = cmd("order", cmd_order, "order of a group element")
    p.add_argument("--max", type=int, default=64)
    p.add_argument("--margin", type=int, default=group.DEFAULT_MARGIN)

    p = cmd("recurrent-check", cmd_recurrent_check, "recurrence verdict")
    p.add_argument("--margin", type=int, default=group.DEFAULT_MARGIN)

    p = cmd("ray-torsion", cmd_ray_torsion, "torsion element on the truncated ray")
    p.add_argument("--modulus", type=int, required=True)
    p.add_argument("--numerator", type=int, default=1)
    p.add_argument("--length", type=int, default=200)
    p.add_argument("--margin", type=int, default=group.DEFAULT_MARGIN)

    p = cmd("dk-table", cmd_dk_table, "rank of apparition and period of the ray recurrence")
    p.add_argument("--max", type=int, default=50)

    p = cmd("kernel-modp", cmd_kernel_modp, "kernel of the Laplacian mod a prime")
    p.add_argument("--modulus", type=int, required=True)
    _add_carrier(p)

    p = cmd("cylinder-harmonic", cmd_cylinder_harmonic, "periodic harmonic function mod p")
    p.add_argument("--sink-period", type=_pair, required=True)
    p.add_argument("--modulus", type=int, required=True)

    p = cmd("no-torsion-prefix", cmd_no_torsion_prefix, "line with intervals killing torsion")
    p.add_argument("--count", type=int, default=3, help="number of primes J")

    p = cmd("poisson", cmd_poisson, "bounded solution of Laplacian(phi) = psi")
    p.add_argument("--tolerance", default="1e-12")

    p = cmd("render", cmd_render, "draw a stable state")
    p.add_argument("--format", choices=list(pile.FORMATS), default="ascii")
    p.add_argument("--overlay", type=_triple, metavar="X,Y,R")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        doc = args.func(args)
    except UsageError as exc:
        ap.error(str(exc))
    except ENGINE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    json.dump(doc, sys.stdout, indent=1)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
