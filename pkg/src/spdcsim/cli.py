"""Command-line front end: ``spdcsim <command> [--scenario FILE] [--seed N] [--out DIR]``.

Every command is a pure function of the scenario and seed. Outputs contain no
timestamps and floats are written with ``repr``, so reruns are byte-identical.
Exit status is 0 only when all outputs were written and all fits converged.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .coincidence import Correlator, EmptyHistogramError, car_pcr, car_scan, predicted_car
from .detection import simulate_tags
from .dispersion import (CESpectrum, DispersionModel, conversion_efficiency, default_dispersion,
                         ce_spectrum)
from .fitting import FitError, fit_ce_spectrum, fit_fringe, violates_bell, BELL_CHSH_VISIBILITY
from .franson import FringeTable, fringe_scan, histogram_config, three_peak_histogram
from .scenario import Scenario, ScenarioError, load_scenario
from .tags import TimeTagStream

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_ERROR = 0, 1, 2


class Context:
    def __init__(self, scenario: Scenario, out: Path, fmt: str, input_path: str | None):
        self.sc = scenario
        self.out = out
        self.fmt = fmt
        self.input = input_path
        self.converged = True
        self.written: list[Path] = []

    @property
    def seed(self) -> int:
        return self.sc.seed

    def path(self, name: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        p = self.out / name
        self.written.append(p)
        return p

    def write_text(self, name: str, text: str) -> None:
        self.path(name).write_text(text if text.endswith("\n") else text + "\n")

    def write_json(self, name: str, obj) -> None:
        self.write_text(name, json.dumps(obj, indent=2, sort_keys=True))

    def write_table(self, stem: str, columns: list[str], rows) -> None:
        rows = [[_cell(v) for v in r] for r in rows]
        if self.fmt == "json":
            self.write_json(stem + ".json", [dict(zip(columns, r)) for r in rows])
        else:
            lines = [",".join(columns)] + [",".join(_csv_cell(v) for v in r) for r in rows]
            self.write_text(stem + ".csv", "\n".join(lines))

    def note_fit(self, res) -> None:
        self.converged = self.converged and bool(res.converged)


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    return int(v) if v.is_integer() and abs(v) < 2 ** 53 else v


def _csv_cell(v):
    return repr(v) if isinstance(v, float) else str(v)


# -- commands


def _dispersion(ctx: Context) -> DispersionModel:
    if ctx.sc.shg.dispersion_csv:
        return DispersionModel.from_csv(ctx.sc.shg.dispersion_csv)
    return default_dispersion()


def _fit_ce(ctx: Context, spec: CESpectrum, disp: DispersionModel) -> None:
    res = fit_ce_spectrum(spec, disp, ctx.sc.mode_areas, ctx.sc.grating)
    ctx.note_fit(res)
    ctx.write_text("ce_fit.json", res.to_json())
    model = conversion_efficiency(disp, _grating(res), ctx.sc.mode_areas, spec.wavelength_nm)
    ctx.write_table("ce_model", ["lambda_nm", "ce_per_w", "fit_ce_per_w"],
                    zip(spec.wavelength_nm, spec.ce_per_w, model))


def _grating(res):
    from .fitting import grating_from_fit
    return grating_from_fit(res)


def cmd_shg(ctx: Context) -> None:
    """Synthetic (or measured) CE spectrum plus its sinc^2 fit."""
    s = ctx.sc.shg
    disp = _dispersion(ctx)
    src = ctx.input or s.input_csv
    if src:
        spec = CESpectrum.from_csv(src)
    else:
        grid = np.linspace(s.grid_start_nm, s.grid_stop_nm, s.grid_points)
        clean = conversion_efficiency(disp, ctx.sc.grating, ctx.sc.mode_areas, grid)
        spec = ce_spectrum(disp, ctx.sc.grating, ctx.sc.mode_areas, grid,
                           noise_sigma_per_w=s.noise_rel * float(clean.max()), seed=ctx.seed)
    rows = zip(spec.wavelength_nm, spec.ce_per_w) if spec.sigma_per_w is None else \
        zip(spec.wavelength_nm, spec.ce_per_w, spec.sigma_per_w)
    cols = ["lambda_nm", "ce_per_w"] + ([] if spec.sigma_per_w is None else ["sigma"])
    ctx.write_table("ce_spectrum", cols, rows)
    _fit_ce(ctx, spec, disp)


def cmd_fit_ce(ctx: Context) -> None:
    src = ctx.input or ctx.sc.shg.input_csv
    if not src:
        raise ScenarioError("fit-ce needs --input or shg.input_csv")
    _fit_ce(ctx, CESpectrum.from_csv(src), _dispersion(ctx))


def cmd_pairs(ctx: Context) -> None:
    """Simulate detector time tags for one pump power."""
    p = ctx.sc.pairs
    parts = simulate_tags(ctx.sc.source, ctx.sc.detection, p.power_mw, p.duration_s, ctx.seed,
                          slab_s=p.slab_s, workers=p.workers)
    tags = TimeTagStream.concatenate(list(parts), duration_s=p.duration_s, seed=ctx.seed)
    if p.tag_format == "csv":
        tags.write_csv(ctx.path("tags.csv"))
    else:
        tags.write_binary(ctx.path("tags.bin"))
    n1, n2 = tags.counts()
    ctx.write_json("tags_summary.json", {
        "power_mw": p.power_mw, "duration_s": p.duration_s, "seed": ctx.seed,
        "tags": len(tags), "singles_hz": [n1 / p.duration_s, n2 / p.duration_s],
        "format": p.tag_format, "chain": ctx.sc.detection.describe(),
    })


def cmd_correlate(ctx: Context) -> None:
    """Histogram, CAR and PCR of a tag file (or a fresh simulation)."""
    p = ctx.sc.pairs
    src = ctx.input or p.input_tags
    corr = Correlator(ctx.sc.histogram)
    if src:
        tags = TimeTagStream.read(src)
        corr.feed(tags)
        duration = tags.duration_s
    else:
        for part in simulate_tags(ctx.sc.source, ctx.sc.detection, p.power_mw, p.duration_s,
                                  ctx.seed, slab_s=p.slab_s, workers=p.workers):
            corr.feed(part)
        duration = p.duration_s
    h = corr.result(duration)
    ctx.write_table("histogram", ["delay_fs", "counts"], zip(h.bin_centers_fs, h.counts))
    report = {"duration_s": duration, "singles": list(h.singles)}
    try:
        report.update(car_pcr(h).to_dict())
    except EmptyHistogramError:
        report.update({"car": None, "pcr_hz": 0.0, "coincidences": 0})
    ctx.write_json("car.json", _jsonable(report))


def cmd_car_scan(ctx: Context) -> None:
    s = ctx.sc.car_scan
    table = car_scan(ctx.sc.source, ctx.sc.detection, s.powers_mw, list(s.durations_s), ctx.seed,
                     ctx.sc.histogram, slab_s=s.slab_s, workers=s.workers)
    ctx.write_table("car_scan", ["power_mw", "pcr_hz", "car", "car_pred"],
                    [(r.power_mw, r.pcr_hz, r.car, r.car_pred) for r in table.rows])
    report = {"rows": [_jsonable(vars(r)) for r in table.rows]}
    car8, pcr8 = predicted_car(ctx.sc.source, ctx.sc.detection, ctx.sc.histogram, 0.008)
    report["closed_form_8uW"] = {"car": car8, "pcr_hz": pcr8}
    try:
        fit = table.fit_inverse_law()
        ctx.note_fit(fit)
        report["inverse_law"] = fit.to_dict()
    except FitError as exc:
        ctx.converged = False
        report["inverse_law"] = {"error": str(exc)}
    ctx.write_json("car_fit.json", report)


def cmd_franson(ctx: Context) -> None:
    """Three-peak histograms at selected offsets, the fringe scan and its fit."""
    sc, f = ctx.sc, ctx.sc.fringe
    chain = sc.franson_detection
    for off in f.histogram_offsets_pm:
        cfg = sc.franson.at_offset(off)
        h = three_peak_histogram(sc.source, chain, cfg, f.power_mw, f.duration_s, ctx.seed,
                                 hcfg=histogram_config(cfg), slab_s=f.slab_s, workers=f.workers)
        ctx.write_table(f"franson_hist_{off:g}pm", ["delay_fs", "counts"],
                        zip(h.bin_centers_fs, h.counts))
    table = fringe_scan(sc.source, chain, sc.franson, f.offsets_pm, f.duration_s, ctx.seed,
                        mode=f.mode, power_mw=f.power_mw, slab_s=f.slab_s, workers=f.workers)
    ctx.write_table("fringe", ["offset_pm", "central_counts", "side_early", "side_late"],
                    [(r.offset_pm, r.central_counts, r.side_early, r.side_late) for r in table.rows])
    _visibility(ctx, table)


def _visibility(ctx: Context, table: FringeTable) -> None:
    res = fit_fringe(table.points(), init={"period_pm": ctx.sc.franson.fringe_period_pm})
    ctx.note_fit(res)
    v = res["visibility"]
    extra = {"visibility": v, "visibility_stderr": res.error("visibility"),
             "bell_threshold": BELL_CHSH_VISIBILITY, "violates_bell": violates_bell(v)}
    side = table.column("side_early")
    if np.all(np.isfinite(side)):
        extra["side_peak_mean"] = float(np.mean(np.concatenate([side, table.column("side_late")])))
    ctx.write_text("visibility.json", res.to_json(**extra))


def cmd_fringe_fit(ctx: Context) -> None:
    src = ctx.input or ctx.sc.fringe.input_csv
    if not src:
        raise ScenarioError("fringe-fit needs --input or fringe.input_csv")
    _visibility(ctx, FringeTable.read_csv(src))


def cmd_selftest(ctx: Context) -> None:
    from .selftest import run_selftest
    results = run_selftest(ctx.seed)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    ctx.write_json("selftest.json", [{"check": n, "pass": ok, "detail": d} for n, ok, d in results])
    ctx.converged = all(ok for _, ok, _ in results)


def _jsonable(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, (np.floating, np.integer, np.bool_)):
            v = v.item()
        if isinstance(v, float) and not np.isfinite(v):
            v = None
        out[k] = v
    return out


COMMANDS = {
    "shg": cmd_shg, "fit-ce": cmd_fit_ce, "pairs": cmd_pairs, "correlate": cmd_correlate,
    "car-scan": cmd_car_scan, "franson": cmd_franson, "fringe-fit": cmd_fringe_fit,
    "selftest": cmd_selftest,
}


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", default=argparse.SUPPRESS, help="scenario JSON file")
    common.add_argument("--seed", type=_u64, default=argparse.SUPPRESS, help="override scenario seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default: out)")
    common.add_argument("--format", choices=["csv", "json"], default=argparse.SUPPRESS,
                        help="format of tabular outputs (default: csv)")
    common.add_argument("--input", default=argparse.SUPPRESS, help="input file for fit-ce, correlate, fringe-fit")
    parser = argparse.ArgumentParser(prog="spdcsim", parents=[common],
                                     description="QPM SPDC photon-pair source simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=(fn.__doc__ or "").strip().split("\n")[0])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    opts = vars(args)
    try:
        sc = load_scenario(opts["scenario"]) if "scenario" in opts else Scenario()
        if "seed" in opts:
            sc = replace(sc, seed=opts["seed"])
        ctx = Context(sc, Path(opts.get("out", "out")), opts.get("format", "csv"), opts.get("input"))
        ctx.write_text("scenario.json", sc.to_json())
        COMMANDS[args.command](ctx)
    except (ScenarioError, FitError, ValueError, OSError) as exc:
        print(f"spdcsim {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if not ctx.converged:
        print(f"spdcsim {args.command}: fit did not converge", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
