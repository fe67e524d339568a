"""Command-line front end: `mismatchkit <group> <command> [options]`.

Every command writes one CSV file (plus an SVG chart for curve commands)
into --output-dir and prints a short summary. Exit codes: 0 success,
2 invalid input, 3 solver non-convergence or an exceeded enumeration cap.
"""

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import click
import numpy as np

from . import converse_bounds as cb_mod
from . import decoder_lab as dl
from . import dual_rates as dr
from . import lm_rates as lm
from .channel_core import SimplexDist, read_channel, read_metric
from .errors import CapExceeded, NoConvergence, ValidationError
from .report import emit_csv, emit_svg_chart

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3


@dataclass
class RunConfig:
    command: str
    channel_path: Optional[Path] = None
    metric_path: Optional[Path] = None
    codebook_path: Optional[Path] = None
    k: Optional[int] = None
    n: Optional[int] = None
    m: Optional[int] = None
    trials: Optional[int] = None
    seed: int = 0
    delta: Optional[float] = None
    tau: Optional[float] = None
    eps: Optional[float] = None
    tol: float = lm.DEFAULT_TOL
    grid_resolution: int = 64
    output_dir: Path = Path(".")
    extra: dict = field(default_factory=dict)

    REQUIRED = {
        "rate lm": ("channel_path", "metric_path"),
        "rate dual": ("channel_path", "metric_path"),
        "rate gmi": ("channel_path", "metric_path"),
        "rate product": ("channel_path", "metric_path", "k"),
        "rate margin-curve": ("channel_path", "metric_path"),
        "bound maxmin": ("channel_path", "metric_path"),
        "bound eta": ("metric_path", "n"),
        "sim decode": ("channel_path", "metric_path", "codebook_path"),
        "check lemma1": ("channel_path", "metric_path", "codebook_path", "delta"),
        "check claim2": ("channel_path", "metric_path", "codebook_path", "tau", "eps"),
        "check phi": ("channel_path", "metric_path", "codebook_path"),
        "check clt": ("channel_path", "metric_path"),
    }

    def validate(self):
        missing = [f for f in self.REQUIRED.get(self.command, ()) if getattr(self, f) is None]
        if missing:
            names = ", ".join("--" + f.replace("_path", "").replace("_", "-") for f in missing)
            raise ValidationError(f"{self.command} requires {names}")
        return self

    def search(self):
        return lm.OuterSearchConfig(resolution=self.grid_resolution, tol=self.tol)

    def load_pair(self):
        w, q = read_channel(self.channel_path), read_metric(self.metric_path)
        q.validate_against(w)
        return w, q

    def csv_path(self):
        return self.output_dir / (self.command.replace(" ", "_") + ".csv")

    def svg_path(self):
        return self.output_dir / (self.command.replace(" ", "_") + ".svg")


def _records(cfg, rows):
    schema = f"{cfg.command.replace(' ', '-')}/{SCHEMA_VERSION}"
    return [{"schema": schema, **row} for row in rows]


def _write(cfg, rows, fieldnames):
    return emit_csv(_records(cfg, rows), cfg.csv_path(), ["schema", *fieldnames])


def _parse_floats(text):
    return [float(t) for t in str(text).replace(",", " ").split()]


def _cert_row(cert):
    return {"value": cert.value, "dual_value": cert.dual_value, "gap": cert.gap,
            "px": [float(v) for v in cert.px]}


# -- execution ----------------------------------------------------------------

def execute(cfg):
    """Run one validated command; returns the summary line."""
    cfg.validate()
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    return _HANDLERS[cfg.command](cfg)


def _rate_lm(cfg):
    w, q = cfg.load_pair()
    cert = lm.lm_rate(w, q, cfg.delta or 0.0, cfg.search())
    _write(cfg, [{"delta": cfg.delta or 0.0, **_cert_row(cert)}],
           ["delta", "value", "dual_value", "gap", "px"])
    return f"LM rate {cert.value:.10g} nats (gap {cert.gap:.2g})"


def _rate_dual(cfg, restrict):
    w, q = cfg.load_pair()
    px = cfg.extra.get("px")
    if px is not None:
        solver = dr.gmi_optimizer if restrict else dr.dual_ascent
        v, value = solver(SimplexDist(px), w, q, cfg.tol)
        point = dr.DualPoint(value, np.asarray(px, dtype=float), v)
    else:
        point = dr.dual_rate(w, q, cfg.search(), restrict_a=restrict, tol=cfg.tol)
    row = {"value": point.value, "s": point.variables.s, "a": [float(x) for x in point.variables.a],
           "px": [float(x) for x in point.px]}
    _write(cfg, [row], ["value", "s", "a", "px"])
    label = "GMI" if restrict else "dual rate"
    return f"{label} {point.value:.10g} nats at s = {point.variables.s:.6g}"


def _rate_product(cfg):
    w, q = cfg.load_pair()
    search = lm.OuterSearchConfig(resolution=cfg.extra.get("product_resolution", 8), tol=cfg.tol)
    cert = lm.product_rate(w, q, cfg.k, search)
    _write(cfg, [{"k": cfg.k, **_cert_row(cert)}], ["k", "value", "dual_value", "gap", "px"])
    return f"k = {cfg.k} product rate {cert.value:.10g} nats per letter"


def _rate_margin_curve(cfg):
    w, q = cfg.load_pair()
    deltas = cfg.extra.get("deltas") or [0.0]
    curve = lm.margin_rate_curve(w, q, deltas, cfg.search())
    _write(cfg, [{"delta": d, **_cert_row(c)} for d, c in curve],
           ["delta", "value", "dual_value", "gap", "px"])
    emit_svg_chart([(d, c.value) for d, c in curve], cfg.svg_path(),
                   title="margin rate", xlabel="delta", ylabel="rate (nats)")
    return f"{len(curve)} margin-rate points, from {curve[0][1].value:.6g} to {curve[-1][1].value:.6g}"


def _bound_maxmin(cfg):
    w, q = cfg.load_pair()
    cert = cb_mod.maxmin_upper_bound(w, q, cfg.search(), cfg.tol)
    _write(cfg, [{"n": 1, **_cert_row(cert)}], ["n", "value", "dual_value", "gap", "px"])
    return f"max-min value at n = 1: {cert.value:.10g} nats"


def _bound_eta(cfg):
    q = read_metric(cfg.metric_path)
    eta = cb_mod.eta_n(q, cfg.n, cfg.extra.get("method", "auto"))
    row = {"n": cfg.n, "eta": "none" if eta is None else str(eta),
           "eta_float": None if eta is None else float(eta),
           "rational_bound": str(cb_mod.rational_eta_lower_bound(q, cfg.n)) if q.is_rational else None}
    _write(cfg, [row], ["n", "eta", "eta_float", "rational_bound"])
    return f"eta_{cfg.n} = {row['eta']}"


def _spec(cfg):
    kind = cfg.extra.get("decoder", "mismatch")
    if kind == "margin":
        return dl.DecoderSpec.margin(cfg.delta if cfg.delta is not None else math.nan)
    if kind == "threshold":
        return dl.DecoderSpec.threshold(cfg.tau if cfg.tau is not None else math.nan)
    return dl.DecoderSpec.mismatch()


def _load_codebook(cfg, w):
    book = dl.read_codebook(cfg.codebook_path)
    if book.input_size != w.input_size:
        raise ValidationError("codebook and channel input alphabets differ")
    return book


def _sim_decode(cfg):
    w, q = cfg.load_pair()
    book = _load_codebook(cfg, w)
    spec = _spec(cfg)
    if cfg.extra.get("method", "exact") == "exact":
        est = dl.exact_error_probability(book, w, q, spec)
    else:
        est = dl.mc_error_probability(book, w, q, spec, cfg.trials or 100_000, cfg.seed)
    row = {"decoder": spec.kind.value, "delta": spec.delta, "tau": spec.tau,
           "method": est.method.value, "value": est.value, "stderr": est.stderr,
           "trials": est.trials, "seed": est.seed}
    _write(cfg, [row], ["decoder", "delta", "tau", "method", "value", "stderr", "trials", "seed"])
    return f"{spec.kind.value} error probability {est.value:.10g} ({est.method.value})"


def lemma1_rows(book, w, q, delta):
    """LHS and RHS of the a = 0 lower bound for both events and the standard s values."""
    from .channel_core import product_channel, product_metric

    n, rate = book.n, book.rate
    eta = cb_mod.eta_n(q, n)
    svals = [("nR/delta", n * rate / delta)]
    if eta is not None and math.isfinite(float(eta)):
        svals.append(("nR/eta", n * rate / float(eta)))
    svals += [("1", 1.0), ("10", 10.0)]
    wn, qn = product_channel(w, n), product_metric(q, n)
    powers = w.input_size ** np.arange(n - 1, -1, -1)
    pn = np.zeros(wn.input_size)
    pn[book.words @ powers] = 1.0 / book.m
    events = [("margin", dr.margin_error_event(book, q, delta)),
              ("mismatch", dr.mismatch_error_event(book, q))]
    rows = []
    for ename, event in events:
        for sname, s in svals:
            lhs = dr.dual_objective(pn, wn, qn, dr.DualVars.zero(wn.input_size, s))
            rhs = dr.lemma1_rhs(book, w, q, s, event)
            rows.append({"event": ename, "s_rule": sname, "s": s, "lhs": lhs, "rhs": rhs,
                         "holds": bool(lhs >= rhs - 1e-12)})
    return rows


def _check_lemma1(cfg):
    w, q = cfg.load_pair()
    book = _load_codebook(cfg, w)
    rows = lemma1_rows(book, w, q, cfg.delta)
    _write(cfg, rows, ["event", "s_rule", "s", "lhs", "rhs", "holds"])
    bad = sum(not r["holds"] for r in rows)
    return f"lower bound checked at {len(rows)} points, {bad} violations"


def _check_claim2(cfg):
    w, q = cfg.load_pair()
    book = _load_codebook(cfg, w)
    res = dl.claim2_check(book, w, q, cfg.tau, cfg.eps)
    _write(cfg, [{"tau": cfg.tau, "eps": cfg.eps, "p_margin": res.p_margin,
                  "p_thresh": res.p_thresh, "tail": res.tail, "holds": res.holds}],
           ["tau", "eps", "p_margin", "p_thresh", "tail", "holds"])
    return f"margin {res.p_margin:.6g} <= thresh {res.p_thresh:.6g} + tail {res.tail:.6g}: {res.holds}"


def _check_phi(cfg):
    w, q = cfg.load_pair()
    book = _load_codebook(cfg, w)
    res = dl.phi_identity_check(book, w, q)
    _write(cfg, [{"lhs": res.lhs, "rhs": res.rhs, "equal": res.equal}], ["lhs", "rhs", "equal"])
    return f"P_e = {res.lhs:.12g}, Pr(Phi > 1/M) = {res.rhs:.12g}, equal: {res.equal}"


def _check_clt(cfg):
    w, q = cfg.load_pair()
    px = cfg.extra.get("px") or [1.0 / w.input_size] * w.input_size
    ns = cfg.extra.get("ns") or [100, 400, 1600]
    report = dl.clt_margin_check(px, w, q, cfg.extra.get("clt_k", 1.0), ns, cfg.m or 16,
                                 cfg.trials or 0, cfg.seed, cfg.extra.get("floor", 0.005))
    _write(cfg, [{"n": pt.n, "estimate": pt.estimate, "stderr": pt.stderr, "trials": pt.trials,
                  "gaussian_floor": pt.gaussian_floor, "floor_prob": report.floor_prob,
                  "holds": report.holds} for pt in report.points],
           ["n", "estimate", "stderr", "trials", "gaussian_floor", "floor_prob", "holds"])
    emit_svg_chart(report.as_pairs(), cfg.svg_path(), title="lower-tail probability",
                   xlabel="n", ylabel="estimate")
    low = min(pt.estimate for pt in report.points)
    return f"minimum estimate {low:.5g} vs floor {report.floor_prob}: {report.holds}"


_HANDLERS = {
    "rate lm": _rate_lm,
    "rate dual": lambda cfg: _rate_dual(cfg, False),
    "rate gmi": lambda cfg: _rate_dual(cfg, True),
    "rate product": _rate_product,
    "rate margin-curve": _rate_margin_curve,
    "bound maxmin": _bound_maxmin,
    "bound eta": _bound_eta,
    "sim decode": _sim_decode,
    "check lemma1": _check_lemma1,
    "check claim2": _check_claim2,
    "check phi": _check_phi,
    "check clt": _check_clt,
}


# -- click wiring ---------------------------------------------------------------

def _common(f):
    opts = [
        click.option("--channel", "channel_path", type=click.Path(exists=True, dir_okay=False, path_type=Path)),
        click.option("--metric", "metric_path", type=click.Path(exists=True, dir_okay=False, path_type=Path)),
        click.option("--output-dir", type=click.Path(file_okay=False, path_type=Path), default=Path(".")),
        click.option("--tol", type=float, default=lm.DEFAULT_TOL, show_default=True),
        click.option("--grid-resolution", type=click.IntRange(1), default=64, show_default=True),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


def _codebook_opt(f):
    return click.option("--codebook", "codebook_path",
                        type=click.Path(exists=True, dir_okay=False, path_type=Path))(f)


def _px_opt(f):
    return click.option("--px", help="input distribution, comma separated")(f)


def _run(command, extra=None, **kw):
    cfg = RunConfig(command=command, extra=extra or {}, **kw)
    click.echo(execute(cfg))


@click.group()
def main():
    """Rates, bounds and decoder experiments for mismatched decoding."""


@main.group()
def rate():
    """Achievable rates."""


@rate.command("lm")
@_common
@click.option("--delta", type=click.FloatRange(0), default=0.0)
def rate_lm(**kw):
    _run("rate lm", **kw)


@rate.command("dual")
@_common
@_px_opt
def rate_dual(px, **kw):
    _run("rate dual", {"px": _parse_floats(px) if px else None}, **kw)


@rate.command("gmi")
@_common
@_px_opt
def rate_gmi(px, **kw):
    _run("rate gmi", {"px": _parse_floats(px) if px else None}, **kw)


@rate.command("product")
@_common
@click.option("--k", type=click.IntRange(1), required=True)
@click.option("--product-resolution", type=click.IntRange(1), default=8, show_default=True)
def rate_product(product_resolution, **kw):
    _run("rate product", {"product_resolution": product_resolution}, **kw)


@rate.command("margin-curve")
@_common
@click.option("--deltas", required=True, help="ascending margins, comma separated")
def rate_margin_curve(deltas, **kw):
    _run("rate margin-curve", {"deltas": _parse_floats(deltas)}, **kw)


@main.group()
def bound():
    """Upper bounds and metric-gap quantities."""


@bound.command("maxmin")
@_common
def bound_maxmin(**kw):
    _run("bound maxmin", **kw)


@bound.command("eta")
@_common
@click.option("--n", type=click.IntRange(1), required=True)
@click.option("--method", type=click.Choice(["auto", "dp", "brute"]), default="auto")
def bound_eta(method, **kw):
    _run("bound eta", {"method": method}, **kw)


@main.group()
def sim():
    """Decoder simulation."""


@sim.command("decode")
@_common
@_codebook_opt
@click.option("--decoder", type=click.Choice(["mismatch", "margin", "threshold"]), default="mismatch")
@click.option("--delta", type=float)
@click.option("--tau", type=float)
@click.option("--method", type=click.Choice(["exact", "mc"]), default="exact")
@click.option("--trials", type=click.IntRange(1))
@click.option("--seed", type=int, default=0)
def sim_decode(decoder, method, **kw):
    _run("sim decode", {"decoder": decoder, "method": method}, **kw)


@main.group()
def check():
    """Exact and statistical checks of the error-probability inequalities."""


@check.command("lemma1")
@_common
@_codebook_opt
@click.option("--delta", type=click.FloatRange(0, min_open=True), required=True)
def check_lemma1(**kw):
    _run("check lemma1", **kw)


@check.command("claim2")
@_common
@_codebook_opt
@click.option("--tau", type=float, required=True)
@click.option("--eps", type=click.FloatRange(0, min_open=True), required=True)
def check_claim2(**kw):
    _run("check claim2", **kw)


@check.command("phi")
@_common
@_codebook_opt
def check_phi(**kw):
    _run("check phi", **kw)


@check.command("clt")
@_common
@_px_opt
@click.option("--k", "clt_k", type=click.FloatRange(0), default=1.0)
@click.option("--ns", default="100,400,1600", show_default=True)
@click.option("--m", type=click.IntRange(1), default=16)
@click.option("--trials", type=click.IntRange(1))
@click.option("--seed", type=int, default=0)
@click.option("--floor", type=click.FloatRange(0, 1, min_open=True), default=0.005)
def check_clt(px, clt_k, ns, floor, **kw):
    extra = {"px": _parse_floats(px) if px else None, "clt_k": clt_k,
             "ns": [int(v) for v in _parse_floats(ns)], "floor": floor}
    _run("check clt", extra, **kw)


def run(argv=None):
    """Entry point returning the process exit code instead of exiting."""
    try:
        main.main(args=argv, prog_name="mismatchkit", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return EXIT_INVALID
    except click.exceptions.Abort:
        return EXIT_INVALID
    except ValidationError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_INVALID
    except (NoConvergence, CapExceeded) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_SOLVER
    except (OSError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_INVALID
    return EXIT_OK


def console_main():
    sys.exit(run())
