"""Command-line interface: ``killpar classify | verify | tabulate | models``.

Reports are canonical JSON (sorted keys, floats as ``%.12g``, infinities and NaN
as the strings ``"inf"``, ``"-inf"``, ``"nan"``) so that outputs diff cleanly.
Expressions use ``^`` for powers; ``^`` binds tighter than unary minus, so
``-x^2`` means ``-(x^2)``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from importlib import resources

import jsonschema
import numpy as np

from . import __version__
from .classify import (
    HYPERBOLIC, INCONCLUSIVE, PARABOLIC, ROUTES, Base, Fibers, Policy, SurfaceSpec, arclength_profile,
    classify_end, classify_extrinsic, classify_intrinsic, window_integral,
)
from .errors import (
    DomainFault, ExprError, GeometryError, IncompleteCurveError, KillparError, NonFiniteIntegrandError,
    SpecFileError, SpecInconsistencyError, StepTooLargeError,
)
from .expr import parse
from .geom import Curve2D, Domain, Metric2D
from .models import (
    AmbientModel, PenafielParams, ekt_model, penafiel_conformal_speed, sol3_cmc_profile, sol3_leaf_q,
    sol3_leaf_r, sol3_minimal_profile, sol3_model, umbrella_curve,
)
from .profile import MuProfile
from .verify import (
    annulus_harmonic_measure, curvature_flatness_check, laplacian_closed_form, laplacian_residual,
    simulate_radial_diffusion, witness,
)

EXIT_CODES = {PARABOLIC: 0, HYPERBOLIC: 1, INCONCLUSIVE: 2}
ERROR_CODES = [
    (SpecFileError, 11), (ExprError, 12), (GeometryError, 14), (SpecInconsistencyError, 15),
    (NonFiniteIntegrandError, 16), (IncompleteCurveError, 17), (StepTooLargeError, 18), (KillparError, 10),
]
USAGE_ERROR = 20


# -- canonical JSON ------------------------------------------------------------------

def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return "%.12g" % x


def _encode(obj, indent, level, out):
    if indent is None:
        pad = end = nl = ""
        sep = ", "
    else:
        pad, end = " " * (indent * (level + 1)), " " * (indent * level)
        nl, sep = "\n", ",\n"
    if obj is None:
        out.append("null")
    elif obj is True or obj is False or isinstance(obj, np.bool_):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_fmt_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{" + nl)
        items = sorted(obj.items(), key=lambda kv: str(kv[0]))
        for i, (k, v) in enumerate(items):
            out.append(f"{pad}{json.dumps(str(k), ensure_ascii=False)}: ")
            _encode(v, indent, level + 1, out)
            out.append(sep if i < len(items) - 1 else nl)
        out.append(end + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            out.append("[]")
            return
        out.append("[" + nl)
        for i, v in enumerate(seq):
            out.append(pad)
            _encode(v, indent, level + 1, out)
            out.append(sep if i < len(seq) - 1 else nl)
        out.append(end + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int | None = 2) -> str:
    """Canonical JSON text (no trailing newline); ``indent=None`` gives one line."""
    out: list = []
    _encode(obj, indent, 0, out)
    return "".join(out)


def _bound(value) -> float:
    if isinstance(value, str):
        if value in ("inf", "+inf"):
            return math.inf
        if value == "-inf":
            return -math.inf
        raise SpecFileError(f"bad range sentinel {value!r}")
    return float(value)


# -- spec files ----------------------------------------------------------------------

def _schema():
    text = resources.files("killpar").joinpath("specfile.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def _load_json(path: str, what: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise SpecFileError(f"cannot read {what} {path!r}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise SpecFileError(f"{what} {path!r} is not valid JSON: {exc.msg} at line {exc.lineno}") from None


def validate_spec(doc) -> None:
    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SpecFileError(f"spec file invalid at {where}: {exc.message}") from None


def _range(pair, what):
    lo, hi = (_bound(v) for v in pair)
    if not lo < hi:
        raise SpecFileError(f"{what} {list(pair)} is not well ordered")
    return lo, hi


def intrinsic_from_doc(d: dict) -> SurfaceSpec:
    base = d["base"]
    base = Base("line") if base == "line" else Base(*next(iter(base.items())))
    var = d.get("var", "s")
    zeros = tuple(float(z) for z in d.get("zeros", ()))
    mu = d["mu"]
    if isinstance(mu, str):
        domain = _range(d["domain"], "domain") if "domain" in d else (-math.inf, math.inf)
        if base.kind == "circle" and "domain" not in d:
            domain = (0.0, 2 * math.pi * base.size)
        elif base.kind == "compact" and "domain" not in d:
            domain = (0.0, base.size)
        profile = MuProfile.from_expression(mu, domain, zeros, var=var)
    else:
        domain = _range(d["domain"], "domain") if "domain" in d else None
        profile = MuProfile.from_table(mu["table"], domain, zeros)
    return SurfaceSpec(base, profile, Fibers(d.get("fibers", "unknown")))


def model_from_doc(m) -> AmbientModel:
    if m == "sol3":
        return sol3_model()
    if "ekt" in m:
        e = m["ekt"]
        return ekt_model(float(e.get("kappa", 0.0)), float(e.get("tau", 0.0)),
                         e.get("mu_constant", "first-principles"))
    c = m["custom"]
    coords = tuple(c.get("coords", ("u", "v")))
    dom = c.get("domain", {})
    bounds = tuple(_range(b, "domain bound") for b in dom.get("bounds", (("-inf", "inf"), ("-inf", "inf"))))
    constraints = tuple(parse(e, coords) for e in dom.get("constraints", ()))
    domain = Domain(bounds, constraints, coords)
    g = Metric2D(c["E"], c.get("F", "0"), c["G"], coords, domain, name="custom")
    return AmbientModel("custom", g, parse(c["mu"], coords), Fibers(c.get("fibers", "unknown")))


def curve_from_doc(c) -> Curve2D:
    var = c.get("var", "t")
    t_range = _range(c.get("t_range", ("-inf", "inf")), "t_range")
    return Curve2D(c["u"], c["v"], t_range, var=var, periodic=bool(c.get("periodic", False)), name="spec curve")


# -- policy ----------------------------------------------------------------------------

def resolve_policy(args, spec_policy=None) -> Policy:
    """Defaults < $KP_POLICY < spec file "policy" < --policy file < individual flags."""
    pol = Policy()
    env = os.environ.get("KP_POLICY")
    layers = []
    if env:
        layers.append(_load_json(env, "policy file"))
    if spec_policy:
        layers.append(spec_policy)
    if getattr(args, "policy", None):
        layers.append(_load_json(args.policy, "policy file"))
    for layer in layers:
        try:
            jsonschema.validate(layer, _schema()["properties"]["policy"])
        except jsonschema.ValidationError as exc:
            raise SpecFileError(f"policy invalid: {exc.message}") from None
        pol = pol.updated(layer)
    flags = {"w0": args.w0, "k_max": args.k_max, "divergence_threshold": args.threshold,
             "p_margin": args.p_margin}
    try:
        return pol.updated({k: v for k, v in flags.items() if v is not None})
    except ValueError as exc:
        raise SpecFileError(str(exc)) from None


# -- built-ins -----------------------------------------------------------------------

BUILTINS = {
    "sol3:S": ("minimal surface S(theta0, a) of Sol3, profile translated along x", ["theta0", "a"]),
    "sol3:Q": ("leaf y = t of Sol3 (hyperbolic plane)", ["t"]),
    "sol3:R": ("leaf z = t of Sol3 (Euclidean plane)", ["t"]),
    "sol3:cmc": ("synthetic profile with bounded height in Sol3", []),
    "ekt:umbrella": ("rotational umbrella over the radial line in E(kappa, tau)", ["kappa", "tau", "mu_constant"]),
    "penafiel": ("end of a rotational CMC surface in E(-1, tau), H in {0, 1/2}", ["H", "d", "tau"]),
}


def builtin_case(args):
    """(model, curve) for extrinsic built-ins, or a conformal speed for ``penafiel``."""
    name = args.builtin
    if name == "sol3:S":
        return sol3_model(), sol3_minimal_profile(args.theta0, args.a)
    if name == "sol3:Q":
        return sol3_model(), sol3_leaf_q(args.t)
    if name == "sol3:R":
        return sol3_model(), sol3_leaf_r(args.t)
    if name == "sol3:cmc":
        return sol3_model(), sol3_cmc_profile()
    if name == "ekt:umbrella":
        return ekt_model(args.kappa, args.tau, args.mu_constant), umbrella_curve()
    if name == "penafiel":
        return PenafielParams(args.H, args.d, args.tau), None
    raise SpecFileError(f"unknown built-in {name!r}; see `killpar models`")


def _builtin_params(args):
    return {k: getattr(args, k) for k in BUILTINS[args.builtin][1]}


# -- commands ------------------------------------------------------------------------

def _classify_report(args):
    if args.spec:
        doc = _load_json(args.spec, "spec file")
        validate_spec(doc)
        policy = resolve_policy(args, doc.get("policy"))
        if "intrinsic" in doc:
            report = classify_intrinsic(intrinsic_from_doc(doc["intrinsic"]), policy)
            return report, {"spec": os.path.basename(args.spec)}
        ex = doc["extrinsic"]
        route = args.route or ex.get("route", "arclength")
        report = classify_extrinsic(model_from_doc(ex["model"]), curve_from_doc(ex["curve"]), route, policy)
        return report, {"spec": os.path.basename(args.spec)}
    policy = resolve_policy(args)
    source = {"builtin": args.builtin, "params": _builtin_params(args)}
    case, curve = builtin_case(args)
    if curve is None:
        speed = penafiel_conformal_speed(case).function(["t"])
        report = classify_end(speed, 1.0, policy, {"model": f"E(-1,{case.tau:g})", "H": case.H})
        return report, source
    return classify_extrinsic(case, curve, args.route or "arclength", policy), source


def cmd_classify(args) -> int:
    report, source = _classify_report(args)
    out = report.to_dict()
    out["input"] = source
    _emit(dumps(out))
    return EXIT_CODES[report.verdict]


def _mu_arg(args) -> MuProfile:
    return MuProfile.from_expression(args.mu, var=args.var)


def cmd_verify(args) -> int:
    kind = args.kind
    if kind == "laplacian":
        mu = _mu_arg(args)
        f = parse(args.f, [args.var])
        res = laplacian_residual(mu, f, args.x, args.h)
        out = {"kind": kind, "mu": args.mu, "f": args.f, "x": args.x, "h": args.h, "residual": res,
               "closed_form": laplacian_closed_form(mu, f, args.x), "tolerance": args.tol,
               "pass": res <= args.tol}
    elif kind == "witness":
        mu = _mu_arg(args)
        w = witness(mu, args.s0)
        out = {"kind": kind, "mu": args.mu, **w.to_dict(), "tolerance": args.tol,
               "pass": w.harmonic_residual <= args.tol}
    elif kind == "curvature":
        mu = _mu_arg(args)
        lo, hi = args.range
        rep = curvature_flatness_check(mu, (lo, hi))
        out = {"kind": kind, "mu": args.mu, "range": [lo, hi], **rep.to_dict(), "tolerance": args.tol,
               "pass": rep.max_abs_k <= args.tol}
    else:
        mu = _mu_arg(args)
        exact = annulus_harmonic_measure(mu, args.a, args.b, args.x0)
        res = simulate_radial_diffusion(mu, args.x0, args.a, args.b, dt=args.dt, n=args.n, seed=args.seed,
                                        workers=args.workers)
        sigma = math.sqrt(exact * (1 - exact) / args.n)
        out = {"kind": kind, "mu": args.mu, "a": args.a, "b": args.b, "x0": args.x0, "exact": exact,
               **res.to_dict(), "sigma": sigma, "deviation_sigmas": (res.p - exact) / sigma if sigma else 0.0,
               "pass": abs(res.p - exact) <= 3 * sigma}
    _emit(dumps(out))
    return 0 if out["pass"] else 1


def _tabulate_profile(args):
    if args.mu:
        return MuProfile.from_expression(args.mu, var=args.var)
    if args.spec:
        doc = _load_json(args.spec, "spec file")
        validate_spec(doc)
        if "intrinsic" in doc:
            return intrinsic_from_doc(doc["intrinsic"]).mu
        ex = doc["extrinsic"]
        return arclength_profile(model_from_doc(ex["model"]), curve_from_doc(ex["curve"]))
    model, curve = builtin_case(args)
    if curve is None:
        raise SpecFileError("penafiel is given by its conformal speed and has no mu profile to tabulate")
    return arclength_profile(model, curve)


def _signed_integral(inv, s0, s):
    if s == s0:
        return 0.0
    lo, hi = min(s0, s), max(s0, s)
    val = window_integral(lambda x: inv(lo + x), 0.0, hi - lo, 1e-15, [])
    return val if s > s0 else -val


def cmd_tabulate(args) -> int:
    mu = _tabulate_profile(args)
    lo, hi = args.range
    if not lo < hi or args.samples < 2:
        raise SpecFileError("tabulate needs lo < hi and at least two samples")
    ss = np.linspace(lo, hi, args.samples)
    s0 = args.s0 if args.s0 is not None else (0.0 if lo <= 0.0 <= hi else lo)

    def inv(x):
        m = mu(x)
        if not m > 0:
            raise DomainFault(f"mu({x:g}) = {m:g} is not positive")
        return 1.0 / m

    # cumulative from s0 outward in both directions
    partial = {}
    right = sorted(float(s) for s in ss if s >= s0)
    left = sorted((float(s) for s in ss if s < s0), reverse=True)
    for seq in (right, left):
        acc, prev = 0.0, s0
        for s in seq:
            acc += _signed_integral(inv, prev, s)
            prev = s
            partial[s] = acc
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["s", "mu", "inv_mu", "partial_integral_from_s0"])
    for s in ss:
        m = mu(float(s))
        w.writerow(["%.12g" % v for v in (s, m, 1.0 / m if m else math.inf, partial[float(s)])])
    sys.stdout.write(buf.getvalue())
    return 0


def cmd_models(args) -> int:
    out = {name: {"description": desc, "params": params} for name, (desc, params) in BUILTINS.items()}
    _emit(dumps({"builtins": out, "version": __version__}))
    return 0


def _emit(text: str):
    sys.stdout.write(text + "\n")


# -- argument parsing ------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(dumps({"error": {"kind": "usage", "message": message}}) + "\n")
        raise SystemExit(USAGE_ERROR)


def _add_policy_flags(p):
    g = p.add_argument_group("divergence policy")
    g.add_argument("--policy", help="JSON file with policy overrides")
    g.add_argument("--w0", type=float, help="first window width (default 1)")
    g.add_argument("--k-max", type=int, dest="k_max", help="number of dyadic windows (default 40)")
    g.add_argument("--threshold", type=float, help="divergence threshold relative to the first window (default 1e6)")
    g.add_argument("--p-margin", type=float, dest="p_margin", help="inconclusive band around p = 1 (default 0.1)")


def _add_model_flags(p):
    g = p.add_argument_group("built-in parameters")
    g.add_argument("--builtin", choices=sorted(BUILTINS), help="built-in example (see `killpar models`)")
    g.add_argument("--theta0", type=float, default=math.pi / 4)
    g.add_argument("--a", type=float, default=0.0)
    g.add_argument("--t", type=float, default=0.0)
    g.add_argument("--kappa", type=float, default=0.0)
    g.add_argument("--tau", type=float, default=1.0)
    g.add_argument("--mu-constant", dest="mu_constant", default="first-principles",
                   choices=["first-principles", "as-printed"])
    g.add_argument("--H", type=float, default=0.0)
    g.add_argument("--d", type=float, default=0.0)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="killpar", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=f"killpar {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("classify", help="parabolic/hyperbolic verdict as JSON (exit 0/1/2)")
    c.add_argument("--spec", help="JSON spec file (see docs/specfile.schema.json)")
    c.add_argument("--route", choices=ROUTES, help="extrinsic route (default arclength)")
    _add_model_flags(c)
    _add_policy_flags(c)
    c.set_defaults(func=cmd_classify)

    v = sub.add_parser("verify", help="numerical identity checks (exit 0 on pass)")
    vs = v.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    for kind, help_ in (("laplacian", "finite-difference Laplacian of f(x) on dx^2 + mu^2 dtheta^2"),
                        ("witness", "bounded harmonic witness F(s) = int_s^s0 dx/mu"),
                        ("curvature", "flatness after dividing the metric by mu^2"),
                        ("walk", "radial diffusion exit probability vs harmonic measure")):
        q = vs.add_parser(kind, help=help_)
        q.add_argument("--mu", required=True, help="Killing length as an expression")
        q.add_argument("--var", default="x", help="variable name used in --mu/--f (default x)")
        q.set_defaults(func=cmd_verify)
        if kind == "laplacian":
            q.add_argument("--f", required=True)
            q.add_argument("--x", type=float, required=True)
            q.add_argument("--h", type=float, default=1e-3)
            q.add_argument("--tol", type=float, default=1e-6)
        elif kind == "witness":
            q.add_argument("--s0", type=float, default=0.0)
            q.add_argument("--tol", type=float, default=1e-5)
        elif kind == "curvature":
            q.add_argument("--range", type=float, nargs=2, required=True, metavar=("LO", "HI"))
            q.add_argument("--tol", type=float, default=1e-8)
        else:
            q.add_argument("--a", type=float, required=True)
            q.add_argument("--b", type=float, required=True)
            q.add_argument("--x0", type=float, required=True)
            q.add_argument("--n", type=int, default=100_000)
            q.add_argument("--seed", type=int, default=0)
            q.add_argument("--dt", type=float, default=None, help="time step (default 1e-4 (b-a)^2)")
            q.add_argument("--workers", type=int, default=1)

    t = sub.add_parser("tabulate", help="CSV of s, mu, 1/mu and the partial integral from s0")
    t.add_argument("--spec")
    t.add_argument("--mu", help="Killing length as an expression in --var")
    t.add_argument("--var", default="s")
    t.add_argument("--range", type=float, nargs=2, required=True, metavar=("LO", "HI"))
    t.add_argument("--samples", type=int, default=101)
    t.add_argument("--s0", type=float, default=None, help="anchor of the partial integral (default 0 or LO)")
    _add_model_flags(t)
    t.set_defaults(func=cmd_tabulate)

    m = sub.add_parser("models", help="list built-in examples")
    m.set_defaults(func=cmd_models)
    return p


def _error_code(exc) -> int:
    for cls, code in ERROR_CODES:
        if isinstance(exc, cls):
            return code
    return 10


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in ("classify", "tabulate"):
        sources = [x for x in (args.spec, args.builtin, getattr(args, "mu", None)) if x]
        if len(sources) != 1:
            parser.error(f"{args.command} needs exactly one of --spec, --builtin"
                         + (" or --mu" if args.command == "tabulate" else ""))
    try:
        return args.func(args)
    except (KillparError, ValueError) as exc:
        kind = getattr(exc, "kind", "value")
        err = {"kind": kind, "message": str(exc)}
        if getattr(exc, "offset", None) is not None:
            err["offset"] = exc.offset
        sys.stderr.write(dumps({"error": err}) + "\n")
        return _error_code(exc) if isinstance(exc, KillparError) else 10


if __name__ == "__main__":
    sys.exit(main())
