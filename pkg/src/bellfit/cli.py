"""Command-line interface: ``bellfit {fit,inequality,model,simulate,reproduce}``.

Exit codes: 0 success, 2 input or validation error, 3 numerical failure.
A verdict of the inequality test never changes the exit code.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import (EfficiencyContext, Family, builtin_reference_dataset,
                   dump_dataset, load_dataset, uniform_grid_deg)
from .errors import DatasetError, DomainError, FitError, NumericError, PreconditionError
from .fit import fit_cosine, predict_rate
from .inequality import run_inequality_test
from .lhvmodel import (coincidence_probability, model_dataset, model_from_dict,
                       single_probability, validate_model)
from .montecarlo import SimulationConfig, simulate_quantum, simulate_run
from .reproduce import reproduce_report

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

SIG_DIGITS = 6


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def round_sig(obj, digits=SIG_DIGITS):
    """Round every float in a nested structure to ``digits`` significant digits."""
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        return float(f"{x:.{digits}g}")
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): round_sig(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [round_sig(v, digits) for v in obj]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def to_json(obj) -> str:
    return json.dumps(round_sig(obj), indent=2, sort_keys=False) + "\n"


def fmt(x) -> str:
    return "n/a" if x is None else f"{x:.{SIG_DIGITS}g}"


# -- argument helpers ------------------------------------------------------

def _angle_list(values):
    out = []
    for v in values or ():
        for part in str(v).split(","):
            part = part.strip()
            if part:
                try:
                    out.append(float(part))
                except ValueError:
                    raise CliError(f"not an angle: {part!r}", EXIT_INPUT) from None
    return out


def _read_dataset(args):
    if getattr(args, "builtin", False):
        return builtin_reference_dataset(), {"builtin": "reference"}
    if not args.input:
        raise CliError("give an input CSV or --builtin", EXIT_INPUT)
    path = Path(args.input)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_INPUT) from None
    return load_dataset(raw, label=path.name), {str(path): hashlib.sha256(raw).hexdigest()}


def _read_json(path):
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}", EXIT_INPUT) from None
    try:
        return json.loads(raw), {str(path): hashlib.sha256(raw).hexdigest()}
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON ({exc})", EXIT_INPUT) from None


class Output:
    """Collects files for ``--out`` and the stdout payload of a command."""

    def __init__(self, args, command):
        self.args = args
        self.command = command
        self.files = {}
        self.digests = {}
        self.seeds = []
        self.params = {}

    def add_file(self, name, text):
        self.files[name] = text

    def manifest(self):
        return {
            "command": self.command,
            "parameters": self.params,
            "input_digests": self.digests,
            "tool_version": __version__,
            "seeds": self.seeds,
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        }

    def finish(self, stdout_text):
        man = json.dumps(self.manifest(), indent=2) + "\n"
        out_dir = getattr(self.args, "out", None)
        if out_dir:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            for name, text in self.files.items():
                (out / name).write_text(text, encoding="utf-8", newline="\n")
            (out / "manifest.json").write_text(man, encoding="utf-8", newline="\n")
        elif not getattr(self.args, "quiet", False):
            sys.stderr.write(man)
        if stdout_text and not (getattr(self.args, "quiet", False) and out_dir):
            sys.stdout.write(stdout_text)


# -- commands --------------------------------------------------------------

def _series_csv(d, f):
    lines = ["phi_deg,fit_rate"]
    grid = np.arange(0, 181, dtype=float)
    for phi, r in zip(grid, predict_rate(f, np.radians(grid))):
        lines.append(f"{phi:g},{r:.{SIG_DIGITS}g}")
    curve = "\n".join(lines) + "\n"
    excluded = set(round(math.degrees(a), 9) for a in f.excluded_angles)
    lines = ["angle_deg,rate,sigma,fit_rate,residual,excluded"]
    for a, r, s in d.points():
        model = predict_rate(f, math.radians(a))
        lines.append(f"{a:g},{r:.{SIG_DIGITS}g},{s:.{SIG_DIGITS}g},{model:.{SIG_DIGITS}g},"
                     f"{(r - model) / f.mean_rate:.{SIG_DIGITS}g},"
                     f"{int(round(a % 180.0, 9) in excluded)}")
    return curve, "\n".join(lines) + "\n"


def cmd_fit(args, out: Output):
    d, out.digests = _read_dataset(args)
    exclude = _angle_list(args.exclude_deg)
    out.params = {"exclude_deg": exclude, "weighting": args.weighting,
                  "builtin": bool(args.builtin)}
    f = fit_cosine(d, exclude=[math.radians(a) for a in exclude], weighting=args.weighting)
    payload = f.to_dict()
    curve, points = _series_csv(d, f)
    out.add_file("fit.json", to_json(payload))
    out.add_file("fit_curve.csv", curve)
    out.add_file("fit_points.csv", points)
    if args.json:
        return to_json(payload)
    return (f"mean_rate   {fmt(f.mean_rate)}\n"
            f"visibility  {fmt(f.visibility)} +- {fmt(f.visibility_sigma)}\n"
            f"phase_deg   {fmt(f.phase_deg)} +- {fmt(math.degrees(f.phase_sigma))}\n"
            f"excluded    {', '.join(fmt(math.degrees(a)) for a in f.excluded_angles) or '-'}\n"
            f"rate(90deg) {fmt(predict_rate(f, math.pi / 2))}\n")


def _context(args):
    if args.eta is None and args.family is None:
        raise CliError("give --eta and/or --family", EXIT_INPUT)
    try:
        if args.eta is None:
            return EfficiencyContext.for_family(args.family)
        return EfficiencyContext(args.eta, Family.parse(args.family or "LHV1"))
    except ValueError as exc:
        raise CliError(str(exc), EXIT_INPUT) from None


def cmd_inequality(args, out: Output):
    d, out.digests = _read_dataset(args)
    ctx = _context(args)
    out.params = {"eta": ctx.eta, "family": ctx.family.name, "resamples": args.resamples,
                  "seed": args.seed, "k": args.k, "builtin": bool(args.builtin)}
    out.seeds = [args.seed]
    rep = run_inequality_test(d, ctx, resamples=args.resamples, seed=args.seed,
                              significance_k=args.k)
    payload = rep.to_dict()
    if np.all(d.sigmas > 0):
        payload["fit_inverse_variance"] = fit_cosine(d, weighting="inverse_variance").to_dict()
    out.add_file("inequality.json", to_json(payload))
    if args.json:
        return to_json(payload)
    sigma = "" if rep.delta_exp_sigma is None else f" +- {fmt(rep.delta_exp_sigma)}"
    return (f"family {ctx.family.name}  eta {fmt(ctx.eta)}\n"
            f"visibility                 {fmt(rep.fitted.visibility)}\n"
            f"delta_exp (psi=0)          {fmt(rep.delta_exp)}{sigma}\n"
            f"delta_exp (fitted psi)     {fmt(rep.delta_exp_phase_corrected)}\n"
            f"eps approx / exact         {fmt(rep.eps_approx.value)} / {fmt(rep.eps_exact.value)}\n"
            f"D approx (eps approx)      {fmt(rep.d_eta_approx)}"
            f"{'' if rep.approx_valid else '  (outside validity, eps > 0.3)'}\n"
            f"D lower bound (eps exact)  {fmt(rep.d_eta_lower_bound)}\n"
            f"verdict (k={fmt(args.k)})            {rep.verdict.value}\n")


def _model(args, out):
    spec, out.digests = _read_json(args.model)
    try:
        return model_from_dict(spec)
    except DatasetError as exc:
        raise CliError(str(exc), EXIT_INPUT) from None


def _angles_from(args, default_n=8):
    angles = _angle_list(args.angles_deg)
    if getattr(args, "grid", None):
        if angles:
            raise CliError("use either --angles-deg or --grid", EXIT_INPUT)
        angles = uniform_grid_deg(args.grid)
    return angles or uniform_grid_deg(default_n)


def cmd_model(args, out: Output):
    m = _model(args, out)
    report = validate_model(m)
    if not report.passed:
        raise CliError(f"model validation failed: {report.summary()}", EXIT_INPUT)
    angles = _angles_from(args)
    out.params = {"angles_deg": angles, "production_rate": args.production_rate}
    ds = model_dataset(m, angles, args.production_rate, label="lhv model")
    p1 = single_probability(m)
    probs = {
        "validation": report.to_dict(),
        "model": m.to_dict(),
        "probabilities": [
            {"angle_deg": a, "p12": r / args.production_rate, "p1": p1, "p2": p1}
            for a, r in zip(angles, ds.rates.tolist())],
    }
    csv_text = dump_dataset(ds)
    out.add_file("model_dataset.csv", csv_text)
    out.add_file("model_probabilities.json", to_json(probs))
    if args.json:
        return to_json(probs)
    return f"# validation: {report.summary()}\n" + csv_text


def cmd_simulate(args, out: Output):
    angles = _angles_from(args)
    cfg = SimulationConfig(args.pairs, angles, args.seed, args.noise)
    out.seeds = [args.seed]
    if args.quantum:
        v, psi_deg, mean = args.quantum
        out.params = {"quantum": [v, psi_deg, mean], **cfg.to_dict()}
        ds = simulate_quantum(v, math.radians(psi_deg), mean, cfg)
        sidecar = {"seed": cfg.seed, "angles_deg": list(cfg.angles_deg),
                   "counts": ds.rates.tolist(), "config": cfg.to_dict(),
                   "quantum": {"v": v, "psi_deg": psi_deg, "mean": mean}}
    else:
        if not args.model:
            raise CliError("give a model JSON file or --quantum V PSI_DEG MEAN", EXIT_INPUT)
        m = _model(args, out)
        report = validate_model(m)
        if not report.passed:
            raise CliError(f"model validation failed: {report.summary()}", EXIT_INPUT)
        out.params = {"model": m.to_dict(), **cfg.to_dict()}
        res = simulate_run(m, cfg, workers=args.workers)
        ds = res.dataset
        sidecar = res.sidecar()
    csv_text = dump_dataset(ds)
    out.add_file("simulated.csv", csv_text)
    out.add_file("simulated.json", to_json(sidecar))
    if args.json:
        return to_json({"dataset": ds.points(), "sidecar": sidecar})
    return csv_text


def _reproduce_text(r):
    f = r["fits"]
    lines = ["Cosine-law fits (uniform weights)"]
    for key, title in (("all_points", "all points"), ("excluding_90", "90 deg excluded")):
        b = f[key]
        lines.append(f"  {title:16s} V = {fmt(b['visibility']['value'])} "
                     f"(ref {fmt(b['visibility']['reference'])}), psi = "
                     f"{fmt(b['phase_deg']['value'])} deg (ref {fmt(b['phase_deg']['reference'])}), "
                     f"R(90) = {fmt(b['rate90']['value'])} (ref {fmt(b['rate90']['reference'])})")
        iv = b["inverse_variance"]
        lines.append(f"  {'':16s} inverse-variance: V = {fmt(iv['visibility'])}, "
                     f"psi = {fmt(iv['phase_deg'])} deg, R(90) = {fmt(iv['rate90'])}")
    lines.append(f"  discrete-projection V = {fmt(f['visibility_discrete'])}")
    p = r["visibility_pair"]
    lines.append(f"V_B/V_A = {fmt(p['ratio']['value'])} +- {fmt(p['ratio_sigma']['value'])} "
                 f"(linear; quadrature {fmt(p['ratio_sigma_quadrature'])}); "
                 f"ref {fmt(p['ratio']['reference'])} +- {fmt(p['ratio_sigma']['reference'])}")
    lines.append("delta_exp variants")
    for k, v in r["delta_exp"].items():
        lines.append(f"  {k:22s} {fmt(v)}")
    lines.append("eps (V = {})".format(fmt(r["epsilon"]["visibility_used"])))
    for k, v in r["epsilon"].items():
        if isinstance(v, dict):
            lines.append(f"  {k:22s} {fmt(v['value'])} (ref {fmt(v['reference'])})")
        elif k != "visibility_used":
            lines.append(f"  {k:22s} {fmt(v)}")
    lines.append("bounds D(eta)")
    for k, v in r["bounds"].items():
        if isinstance(v, dict):
            lines.append(f"  {k:28s} {fmt(v['value'])} (ref {fmt(v['reference'])})")
        else:
            lines.append(f"  {k:28s} {fmt(v)}")
    dp = r["deviation_profile"]
    lines.append(f"deviation profile (eta {fmt(dp['eta'])}, eps {fmt(dp['eps'])})")
    for k in ("gamma90", "delta90", "delta_rate90", "v_eff", "model_rate90"):
        lines.append(f"  {k:22s} {fmt(dp[k]['value'])} (ref {fmt(dp[k]['reference'])})")
    lines.append("verdicts")
    for fam, v in r["verdicts"].items():
        extra = ""
        if "delta_exp" in v:
            extra = (f"  delta_exp {fmt(v['delta_exp'])} +- {fmt(v['delta_exp_sigma'])}"
                     f" vs bound {fmt(v['bound'])}")
        else:
            extra = f"  (inherited from {v['inherited_from']})"
        lines.append(f"  {fam}: {v['verdict']}{extra}")
    return "\n".join(lines) + "\n"


def cmd_reproduce(args, out: Output):
    out.params = {"resamples": args.resamples, "seed": args.seed, "k": args.k}
    out.seeds = [args.seed]
    report = reproduce_report(resamples=args.resamples, seed=args.seed, k=args.k)
    out.add_file("reproduce.json", to_json(report))
    out.add_file("reference_dataset.csv", dump_dataset(builtin_reference_dataset()))
    if args.json:
        return to_json(report)
    return _reproduce_text(report)


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS,
                        help="machine-readable output on stdout")
    common.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS,
                        help="write result files and manifest.json to DIR")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS,
                        help="suppress the manifest on stderr")

    parser = argparse.ArgumentParser(prog="bellfit", parents=[common],
                                     description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def data_args(p):
        p.add_argument("input", nargs="?", help="CSV with header angle_deg,rate,sigma")
        p.add_argument("--builtin", action="store_true", help="use the bundled reference dataset")

    p = sub.add_parser("fit", parents=[common], help="cosine-law fit")
    data_args(p)
    p.add_argument("--exclude-deg", nargs="*", default=[], metavar="DEG")
    p.add_argument("--weighting", choices=["uniform", "inverse_variance"], default="uniform")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("inequality", parents=[common], help="delta_exp >= D(eta) test")
    data_args(p)
    p.add_argument("--eta", type=float)
    p.add_argument("--family", choices=[f.name for f in Family])
    p.add_argument("--resamples", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=float, default=3.0, help="significance multiplier")
    p.set_defaults(func=cmd_inequality)

    p = sub.add_parser("model", parents=[common], help="evaluate an LHV model file")
    p.add_argument("model", help="model JSON file")
    p.add_argument("--angles-deg", nargs="*", metavar="DEG")
    p.add_argument("--grid", type=int, metavar="N", help="uniform grid of N angles over [0, 180)")
    p.add_argument("--production-rate", type=float, default=1.0)
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("simulate", parents=[common], help="seeded Monte Carlo run")
    p.add_argument("model", nargs="?", help="model JSON file")
    p.add_argument("--quantum", nargs=3, type=float, metavar=("V", "PSI_DEG", "MEAN"))
    p.add_argument("--pairs", type=int, default=100000, help="pairs per angle (model runs)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--angles-deg", nargs="*", metavar="DEG")
    p.add_argument("--grid", type=int, metavar="N")
    p.add_argument("--noise", choices=["bernoulli_counts", "poisson_rates"],
                   default="bernoulli_counts")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reproduce", parents=[common], help="full analysis of the reference dataset")
    p.add_argument("--resamples", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=float, default=3.0)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name, default in (("json", False), ("out", None), ("quiet", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    out = Output(args, args.command)
    try:
        text = args.func(args, out)
    except CliError as exc:
        print(f"bellfit: error: {exc}", file=sys.stderr)
        return exc.code
    except (DatasetError, PreconditionError, DomainError, ValueError) as exc:
        print(f"bellfit: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (FitError, NumericError, ArithmeticError) as exc:
        print(f"bellfit: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    out.finish(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
