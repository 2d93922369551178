"""Command-line surface: simulate / calibrate / filter-ll / forward / option / bic-table.

Every command is deterministic given its inputs and seed; the seed and the
resolved configuration are echoed into a '#'-prefixed metadata block at the
top of each output CSV.  Exit codes: 0 success, 2 validation error,
3 numerical-convergence failure.  POLYSPOT_THREADS caps internal parallelism.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from datetime import date as _date

import numpy as np

from .calibrate import CalibrationRow, OptimizerConfig, PriceSeries, bic, fit_ladder, one_factor_loglik
from .filters import double_jacobi_filter_ll, fit_2f, regime_filter_ll
from .jacobi import ConvergenceError
from .model import DoubleJacobiModel, OneFactorModel, RegimeModel, simulate_model
from .pricing import forward, option_polyapprox, spot
from .specfile import SpecFileError, load_spec

__all__ = ["main"]


class DataError(ValueError):
    """Input data failed validation."""


def _thread_cap() -> int:
    raw = os.environ.get("POLYSPOT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _write_output(path: str | None, metadata: list[tuple[str, object]], header: list[str], rows: list[list]):
    buf = io.StringIO()
    for key, value in metadata:
        buf.write(f"# {key}: {value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    text = buf.getvalue()
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def read_price_csv(path: str, s_max: float, calendar_spacing: bool = False):
    """Read a `date,price` CSV; returns (PriceSeries, summary metadata).

    Prices outside [0, s_max] are clipped with a count reported (never
    dropped).  Dates become day indices: row order by default, calendar day
    offsets when calendar_spacing is set.
    """
    dates: list[_date] = []
    prices: list[float] = []
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["date", "price"]:
            raise DataError(f"{path}: expected header 'date,price'")
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) < 2:
                raise DataError(f"{path}:{lineno}: expected two columns")
            try:
                dates.append(_date.fromisoformat(row[0].strip()))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad date {row[0]!r}: {exc}") from exc
            try:
                prices.append(float(row[1]))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad price {row[1]!r}") from exc
    if len(prices) < 2:
        raise DataError(f"{path}: need at least two observations")
    for prev, cur in zip(dates, dates[1:]):
        if cur <= prev:
            raise DataError(f"{path}: dates must be strictly increasing ({prev} then {cur})")
    p = np.asarray(prices)
    n_clipped = int(np.count_nonzero((p < 0.0) | (p > s_max)))
    p = np.clip(p, 0.0, s_max)
    if calendar_spacing:
        t = np.array([(d - dates[0]).days for d in dates])
    else:
        t = np.arange(len(p))
    series = PriceSeries(timestamps=t, prices=p, dt=1.0 / 365.0)
    meta = [
        ("observations", len(p)),
        ("clipped_rows", n_clipped),
        ("dropped_rows", 0),
        ("calendar_spacing", calendar_spacing),
        ("dt_years", repr(1.0 / 365.0)),
    ]
    return series, meta


def _parse_state(text: str, model):
    parts = [float(v) for v in text.split(",")]
    if isinstance(model, OneFactorModel):
        if len(parts) != 1:
            raise DataError("one-factor state is a single x value")
        return parts[0]
    if len(parts) != 2:
        raise DataError("two-factor state is 'x,y'")
    return (parts[0], parts[1])


def cmd_simulate(args) -> int:
    model = load_spec(args.spec)
    out = simulate_model(model, args.days, substeps=args.substeps, rng=int(args.seed))
    header = ["date_index", "x"] + (["y"] if "y" in out else []) + ["price"]
    rows = []
    for m in range(args.days + 1):
        row = [m, _fmt(out["x"][m])]
        if "y" in out:
            row.append(_fmt(out["y"][m]))
        row.append(_fmt(out["price"][m]))
        rows.append(row)
    meta = [
        ("command", "simulate"),
        ("spec", args.spec),
        ("model", model.kind),
        ("days", args.days),
        ("substeps", args.substeps),
        ("seed", args.seed),
        ("threads", _thread_cap()),
    ]
    _write_output(args.out, meta, header, rows)
    return 0


def _calibration_table(rows: list[CalibrationRow], kind: str):
    all_keys: list[str] = []
    for row in rows:
        for key in row.params:
            if key not in all_keys:
                all_keys.append(key)
    header = ["degree", "k", "m_obs"] + all_keys + ["a", "b", "ll", "bic", "min_bic", "converged"]
    best = min(range(len(rows)), key=lambda i: rows[i].bic)
    table = []
    for i, row in enumerate(rows):
        rec = [row.degree, row.n_params, row.m_obs]
        rec += [_fmt(row.params[k]) if k in row.params else "" for k in all_keys]
        rec += [_fmt(row.a), _fmt(row.b), _fmt(row.ll), _fmt(row.bic), "*" if i == best else "", row.converged]
        table.append(rec)
    return header, table


def cmd_calibrate(args) -> int:
    model = load_spec(args.spec)
    series, data_meta = read_price_csv(args.data, model.s_max, args.calendar_spacing)
    if len(series) < 50:
        raise DataError("calibration needs at least 50 observations")
    config = OptimizerConfig(
        restarts=args.restarts,
        workers=min(_thread_cap(), 1),
    )
    if model.kind == "one_factor":
        rows = fit_ladder(series, model.s_max, args.max_degree, config, seed=int(args.seed))
    else:
        rows = fit_2f(model.kind, series, model.s_max, args.max_degree, config, seed=int(args.seed), n_nodes=args.quad_nodes)
    header, table = _calibration_table(rows, model.kind)
    meta = [
        ("command", "calibrate"),
        ("spec", args.spec),
        ("model", model.kind),
        ("s_max", _fmt(model.s_max)),
        ("max_degree", args.max_degree),
        ("seed", args.seed),
        ("restarts", args.restarts),
        ("threads", _thread_cap()),
    ] + data_meta
    for row in rows:
        if not row.converged:
            meta.append(("warning", f"optimizer budget reached before convergence at degree {row.degree}"))
    _write_output(args.out, meta, header, table)
    return 0


def cmd_filter_ll(args) -> int:
    model = load_spec(args.spec)
    series, data_meta = read_price_csv(args.data, model.s_max, args.calendar_spacing)
    if isinstance(model, OneFactorModel):
        res = one_factor_loglik(model.factor, model.price_map, series)
        ll, per_step = res.ll, res.terms
        extra = [("clipped_observations", res.n_clipped), ("floored_terms", res.n_floored)]
    elif isinstance(model, RegimeModel):
        out = regime_filter_ll(model, series)
        ll, per_step = out.ll, out.log_z
        extra = []
    else:
        out = double_jacobi_filter_ll(model, series, n_nodes=args.quad_nodes)
        ll, per_step = out.ll, out.log_z
        extra = []
    if not math.isfinite(ll):
        raise ConvergenceError("filter likelihood is not finite for this spec and data")
    meta = [
        ("command", "filter-ll"),
        ("spec", args.spec),
        ("model", model.kind),
        ("quad_nodes", args.quad_nodes),
        ("seed", args.seed),
        ("threads", _thread_cap()),
        ("log_likelihood", _fmt(ll)),
    ] + data_meta + extra
    rows = [[m, _fmt(v)] for m, v in enumerate(per_step)]
    _write_output(args.out, meta, ["m", "log_z"], rows)
    return 0


def cmd_forward(args) -> int:
    model = load_spec(args.spec)
    state = _parse_state(args.state, model)
    if not (args.t <= args.T < args.T_prime):
        raise DataError("need t <= T < T'")
    edges = np.linspace(args.T, args.T_prime, args.curve_points + 1)
    seas = model.seasonality
    closed_ok = seas is not None and all(m.kind in ("cos", "sin") and m.freq != 0.0 for m in seas.modes)
    header = ["T_start", "T_end", "forward"] + (["forward_closed_form"] if closed_ok else [])
    rows = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        quote = forward(model, state, args.t, float(lo), float(hi), n_nodes=args.quad_nodes)
        rec = [_fmt(float(lo)), _fmt(float(hi)), _fmt(quote.value)]
        if closed_ok:
            rec.append(_fmt(forward(model, state, args.t, float(lo), float(hi), method="closed").value))
        rows.append(rec)
    meta = [
        ("command", "forward"),
        ("spec", args.spec),
        ("model", model.kind),
        ("state", args.state),
        ("t", _fmt(args.t)),
        ("quad_nodes", args.quad_nodes),
        ("seed", args.seed),
        ("threads", _thread_cap()),
        ("spot", _fmt(spot(model, state, args.t))),
    ]
    _write_output(args.out, meta, header, rows)
    return 0


def cmd_option(args) -> int:
    model = load_spec(args.spec)
    if not isinstance(model, OneFactorModel):
        raise DataError("option valuation is implemented for one-factor specs")
    state = _parse_state(args.state, model)
    strikes = [float(v) for v in args.strikes.split(",")]
    rows = []
    for k in strikes:
        value, residual = option_polyapprox(model, k, args.maturity, state, approx_degree=args.approx_degree)
        rows.append([_fmt(k), _fmt(value), _fmt(residual)])
    meta = [
        ("command", "option"),
        ("spec", args.spec),
        ("state", args.state),
        ("maturity", _fmt(args.maturity)),
        ("approx_degree", args.approx_degree),
        ("seed", args.seed),
        ("threads", _thread_cap()),
    ]
    _write_output(args.out, meta, ["strike", "value", "interp_residual"], rows)
    return 0


def cmd_bic_table(args) -> int:
    with open(args.data, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(io.StringIO("".join(lines)))
    required = {"degree", "k", "m_obs", "ll"}
    if reader.fieldnames is None or not required.issubset(set(reader.fieldnames)):
        raise DataError(f"{args.data}: needs columns {sorted(required)}")
    recs = []
    for row in reader:
        recs.append((int(row["degree"]), int(row["k"]), int(row["m_obs"]), float(row["ll"])))
    if not recs:
        raise DataError(f"{args.data}: no rows")
    values = [bic(ll, k, m) for _, k, m, ll in recs]
    best = int(np.argmin(values))
    rows = [
        [deg, k, m, _fmt(ll), _fmt(v), "*" if i == best else ""]
        for i, ((deg, k, m, ll), v) in enumerate(zip(recs, values))
    ]
    meta = [("command", "bic-table"), ("input", args.data), ("seed", args.seed), ("threads", _thread_cap())]
    _write_output(args.out, meta, ["degree", "k", "m_obs", "ll", "bic", "min_bic"], rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polyspot",
        description="Polynomial-diffusion spot price models: simulation, calibration, filtering and pricing.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, spec=True, data=False):
        if spec:
            p.add_argument("--spec", required=True, help="model spec file (YAML)")
        if data:
            p.add_argument("--data", required=True, help="price CSV with header date,price")
            p.add_argument("--calendar-spacing", action="store_true", help="use calendar day gaps instead of row order")
        p.add_argument("--seed", type=int, default=0, help="RNG seed echoed into the output")
        p.add_argument("--out", default="-", help="output CSV path (default stdout)")

    p = sub.add_parser("simulate", help="simulate factor paths and prices")
    common(p)
    p.add_argument("--days", type=int, required=True)
    p.add_argument("--substeps", type=int, default=16)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="maximum-likelihood degree ladder with BIC")
    common(p, data=True)
    p.add_argument("--max-degree", type=int, default=4)
    p.add_argument("--restarts", type=int, default=0)
    p.add_argument("--quad-nodes", type=int, default=32)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("filter-ll", help="log-likelihood of data under a fixed spec")
    common(p, data=True)
    p.add_argument("--quad-nodes", type=int, default=32)
    p.set_defaults(func=cmd_filter_ll)

    p = sub.add_parser("forward", help="delivery-period forward quotes")
    common(p)
    p.add_argument("--state", required=True, help="factor state: x or x,y")
    p.add_argument("--t", type=float, default=0.0)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--T-prime", type=float, required=True, dest="T_prime")
    p.add_argument("--curve-points", type=int, default=1)
    p.add_argument("--quad-nodes", type=int, default=16)
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("option", help="European call values by payoff approximation")
    common(p)
    p.add_argument("--state", required=True)
    p.add_argument("--maturity", type=float, required=True)
    p.add_argument("--strikes", required=True, help="comma separated strikes")
    p.add_argument("--approx-degree", type=int, default=40)
    p.set_defaults(func=cmd_option)

    p = sub.add_parser("bic-table", help="recompute BIC for a calibration table CSV")
    common(p, spec=False)
    p.add_argument("--data", required=True, help="calibration table CSV")
    p.set_defaults(func=cmd_bic_table)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (SpecFileError, DataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
