"""Command-line front end.

Subcommands ``prepare``, ``fit``, ``regress``, ``simulate`` and ``grades``.
Each run writes ``manifest.json`` next to its outputs; ``--manifest`` replays a
run from that file alone.

Exit status: 0 success, 2 input errors, 3 numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as dt
import json
import logging
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .grades import GradeError, GradeSystem, GradeValue, format_grade, ladder_table
from .logbook import (
    GameMode,
    LogbookError,
    PreparedDataset,
    PrepReport,
    TickPolicy,
    ingest,
    prepare,
)
from .model import ModelConfig
from .regression import (
    RegressionError,
    empirical_odds,
    fit_climber_slope,
    fit_community_exponential,
)
from .sampler import SamplerConfig, SamplerError, sample
from .simulate import SimSpec, simulate, write_simulation
from .summary import summarize

logger = logging.getLogger("gradescale")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


class InputError(Exception):
    pass


@dataclass
class RunManifest:
    command: str
    inputs: list[str] = field(default_factory=list)
    format: str | None = None
    system: str = "ewbank"
    game: str = "session"
    window_start: str = "2016-08-01"
    window_end: str = "2021-08-01"
    min_ascents: int = 30
    min_failures: int = 1
    model: dict = field(default_factory=dict)
    sampler: dict = field(default_factory=dict)
    out: str = "."
    seed: int = 0
    metadata: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return cls(**data)

    def write(self, out_dir: Path) -> None:
        with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _fmt(v: float) -> str:
    return repr(float(v))


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _date(text: str) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise InputError(f"bad date {text!r}") from None


# -- commands ----------------------------------------------------------------


def cmd_prepare(man: RunManifest) -> PreparedDataset:
    if len(man.inputs) != 1:
        raise InputError("prepare takes exactly one --input logbook")
    out = Path(man.out)
    out.mkdir(parents=True, exist_ok=True)
    system = GradeSystem.parse(man.system)
    ignored = man.options.get("ignored_ticks", [])
    policy = TickPolicy.default_for(
        system,
        ignored_ticks=ignored,
        on_unknown=man.options.get("on_unknown", "warn"),
    )
    game = GameMode(man.game)
    ing = ingest(man.inputs[0], system, policy, fmt=man.format)
    report = PrepReport(game, man.min_ascents, man.min_failures)
    report.rows_read = ing.rows_read
    report.ignored = ing.ignored
    data = prepare(
        ing.records,
        _date(man.window_start),
        _date(man.window_end),
        game_mode=game,
        min_ascents=man.min_ascents,
        min_failures=man.min_failures,
        system=system,
        report=report,
    )
    data.save(out / "dataset.json")
    (out / "prep_report.tsv").write_text(report.to_text(), encoding="utf-8")
    man.write(out)
    sys.stdout.write(report.to_text())
    return data


def dataset_row(data: PreparedDataset, d_summary, metadata: dict) -> dict:
    return {
        "country": metadata.get("country", ""),
        "gear (style)": metadata.get("style", ""),
        "climbers": data.n_climbers,
        "ascents": data.n_ascents,
        "slope": f"{d_summary.mean:.2f}",
        "hpd.lower": f"{d_summary.hpd_lower:.2f}",
        "hpd.upper": f"{d_summary.hpd_upper:.2f}",
        "min.ascents": "" if data.min_ascents is None else data.min_ascents,
        "min.failures": "" if data.min_failures is None else data.min_failures,
        "grade.type": data.system.value,
        "game": data.game_mode.value,
    }


def cmd_fit(man: RunManifest):
    if len(man.inputs) != 1:
        raise InputError("fit takes exactly one --input prepared dataset")
    out = Path(man.out)
    out.mkdir(parents=True, exist_ok=True)
    data = PreparedDataset.load(man.inputs[0])
    model_cfg = ModelConfig.for_system(data.system, **man.model)
    sampler_cfg = SamplerConfig(**{**man.sampler, "seed": man.seed})
    trace = sample(data, model_cfg, sampler_cfg)
    trace.write_csv(out / "trace.csv")

    summaries = summarize(trace)
    by_name = {s.name: s for s in summaries}
    fields = ["name", "mean", "median", "sd", "hpd_lower", "hpd_upper", "ess", "rhat"]
    _write_rows(
        out / "summary.csv",
        fields,
        ([s.name] + [_fmt(getattr(s, f)) for f in fields[1:]] for s in summaries),
    )

    rows = []
    for cid in data.climbers:
        for page in range(1, data.n_pages + 1):
            s = by_name[f"grade[{cid},{page}]"]
            rows.append([cid, page, _fmt(s.mean), _fmt(s.hpd_lower), _fmt(s.hpd_upper)])
    _write_rows(out / "grades.csv", ["climber", "page", "mean", "hpd_lower", "hpd_upper"], rows)

    row = dataset_row(data, by_name["d"], man.metadata)
    _write_rows(out / "dataset_summary.csv", list(row), [list(row.values())])
    diag = {
        "divergence_rate": trace.divergence_rate,
        "mean_accept_stat": float(trace.accept_stat.mean()),
        "step_sizes": trace.step_sizes,
        "max_rhat": float(np.nanmax([s.rhat for s in summaries])) if summaries else None,
        "min_ess": float(np.nanmin([s.ess for s in summaries])) if summaries else None,
    }
    with open(out / "diagnostics.json", "w", encoding="utf-8") as fh:
        json.dump(diag, fh, indent=2, sort_keys=True)
        fh.write("\n")
    man.write(out)
    sys.stdout.write(
        f"slope {row['slope']}, hpd.lower {row['hpd.lower']}, hpd.upper {row['hpd.upper']}\n"
    )
    return trace, summaries


def cmd_regress(man: RunManifest):
    out = Path(man.out)
    out.mkdir(parents=True, exist_ok=True)
    mode = man.options.get("mode", "climber")
    if mode == "community":
        return _regress_community(man, out)
    if len(man.inputs) != 1:
        raise InputError("per-climber regression takes one --input prepared dataset")
    data = PreparedDataset.load(man.inputs[0])
    fit_rows, point_rows, slopes = [], [], []
    for j, cid in enumerate(data.climbers):
        odds = empirical_odds(data.climber_records(j), cid)
        for p in odds.points:
            point_rows.append(
                [cid, _fmt(p.grade), int(p.failures), int(p.successes), _fmt(p.log_odds), int(p.corrected)]
            )
        try:
            fit = fit_climber_slope(odds.points)
        except RegressionError as exc:
            logger.warning("skipping climber %s: %s", cid, exc)
            continue
        slopes.append(fit.slope)
        fit_rows.append(
            [cid, _fmt(fit.slope), _fmt(fit.intercept), _fmt(fit.zero_crossing),
             _fmt(fit.r_squared), fit.n_points, fit.n_corrected]
        )
    _write_rows(
        out / "climber_points.csv",
        ["climber", "grade", "failures", "successes", "log_odds", "corrected"],
        point_rows,
    )
    _write_rows(
        out / "climber_fits.csv",
        ["climber", "slope", "intercept", "grade", "r_squared", "n_points", "n_corrected"],
        fit_rows,
    )
    if not slopes:
        raise InputError("no climber had enough distinct grades to fit")
    mean_slope = float(np.mean(slopes))
    text = (
        "per-climber log-linear regression (constant grade; not the MCMC estimate)\n"
        f"climbers fitted\t{len(slopes)}\n"
        f"mean slope m\t{mean_slope:.4f}\n"
        f"mean d = exp(m)\t{np.exp(mean_slope):.4f}\n"
    )
    (out / "regression_summary.txt").write_text(text, encoding="utf-8")
    man.write(out)
    sys.stdout.write(text)
    return mean_slope


def _read_histogram(path: str) -> dict[float, float]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"grade", "count"} <= set(reader.fieldnames):
            raise InputError("histogram needs 'grade' and 'count' columns")
        return {float(r["grade"]): float(r["count"]) for r in reader}


def _regress_community(man: RunManifest, out: Path):
    if len(man.inputs) != 1:
        raise InputError("community regression takes one --input histogram")
    try:
        lo, hi = man.options["grade_min"], man.options["grade_max"]
    except KeyError:
        raise InputError("community mode needs --grade-min and --grade-max") from None
    hist = _read_histogram(man.inputs[0])
    fit = fit_community_exponential(hist, (float(lo), float(hi)))
    _write_rows(
        out / "community_points.csv",
        ["grade", "count", "log_count", "in_fit"],
        (
            [_fmt(g), _fmt(n), _fmt(np.log(n)) if n > 0 else "", int(lo <= g <= hi and n > 0)]
            for g, n in sorted(hist.items())
        ),
    )
    _write_rows(
        out / "community_fit.csv",
        ["decay_rate", "slope", "intercept", "r_squared", "n_points", "excluded"],
        [[_fmt(fit.decay_rate), _fmt(fit.slope), _fmt(fit.intercept), _fmt(fit.r_squared),
          fit.n_points, " ".join(_fmt(g) for g in fit.excluded)]],
    )
    man.write(out)
    sys.stdout.write(f"community decay rate r {fit.decay_rate:.4f}\n")
    return fit


def cmd_simulate(man: RunManifest):
    out = Path(man.out)
    spec_data = dict(man.options.get("spec", {}))
    if man.inputs:
        with open(man.inputs[0], encoding="utf-8") as fh:
            spec_data = {**json.load(fh), **spec_data}
        # Inline the spec so the manifest alone reproduces the run.
        man.inputs = []
    spec_data["seed"] = man.seed
    spec = SimSpec.from_json(spec_data)
    man.options = {**man.options, "spec": spec.to_json()}
    sim = simulate(spec)
    write_simulation(sim, spec, out)
    man.write(out)
    sys.stdout.write(f"wrote {len(sim.records)} ascents for {spec.n_climbers} climbers\n")
    return sim


def cmd_grades(man: RunManifest):
    rows = ladder_table()
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["version", "system", "token", "value"])
    for r in rows:
        writer.writerow([r["version"], r["system"], r["token"], _fmt(r["value"])])


COMMANDS = {
    "prepare": cmd_prepare,
    "fit": cmd_fit,
    "regress": cmd_regress,
    "simulate": cmd_simulate,
    "grades": cmd_grades,
}


# -- argument handling -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gradescale", description="Climbing grade-scale inference from ascent logbooks."
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_input=True):
        p.add_argument("--manifest", help="replay a run from its manifest.json")
        p.add_argument("--input", action="append", default=None, required=False)
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("prepare", help="ingest, aggregate, filter and paginate a logbook")
    common(p)
    p.add_argument("--format", choices=["csv", "json"], default=None)
    p.add_argument("--system", default=None, help="ewbank|french|uiaa|vgrade")
    p.add_argument("--game", choices=["attempt", "session"], default=None)
    p.add_argument("--window-start", default=None)
    p.add_argument("--window-end", default=None)
    p.add_argument("--min-ascents", type=int, default=None)
    p.add_argument("--min-failures", type=int, default=None)
    p.add_argument("--ignore-tick", action="append", default=None, dest="ignored_ticks")
    p.add_argument("--on-unknown-tick", choices=["warn", "error"], default=None)

    p = sub.add_parser("fit", help="sample the posterior for a prepared dataset")
    common(p)
    p.add_argument("--chains", type=int, default=None)
    p.add_argument("--warmup", type=int, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--target-accept", type=float, default=None)
    p.add_argument("--walk-sd", type=float, default=None)
    p.add_argument("--grade-prior-mean", type=float, default=None)
    p.add_argument("--grade-prior-sd", type=float, default=None)
    p.add_argument("--country", default=None)
    p.add_argument("--style", default=None)

    p = sub.add_parser("regress", help="per-climber or community slope regressions")
    common(p)
    p.add_argument("--mode", choices=["climber", "community"], default=None)
    p.add_argument("--grade-min", type=float, default=None)
    p.add_argument("--grade-max", type=float, default=None)

    p = sub.add_parser("simulate", help="write a synthetic logbook and its ground truth")
    common(p)

    sub.add_parser("grades", help="dump the grade ladders")
    return parser


def manifest_from_args(args) -> RunManifest:
    if getattr(args, "manifest", None):
        man = RunManifest.load(args.manifest)
        if man.command != args.command:
            raise InputError(f"manifest is for {man.command!r}, not {args.command!r}")
    else:
        man = RunManifest(command=args.command)
    a = vars(args)

    def take(key, attr=None):
        if a.get(key) is not None:
            setattr(man, attr or key, a[key])

    take("input", "inputs")
    take("out")
    take("seed")
    take("format")
    take("system")
    take("game")
    take("window_start")
    take("window_end")
    take("min_ascents")
    take("min_failures")
    for key in ("ignored_ticks", "mode", "grade_min", "grade_max"):
        if a.get(key) is not None:
            man.options[key] = a[key]
    if a.get("on_unknown_tick") is not None:
        man.options["on_unknown"] = a["on_unknown_tick"]
    for key, target in (
        ("chains", "chains"), ("warmup", "warmup_iters"), ("samples", "sampling_iters"),
        ("threads", "threads"), ("target_accept", "target_accept"),
    ):
        if a.get(key) is not None:
            man.sampler[target] = a[key]
    for key in ("walk_sd", "grade_prior_mean", "grade_prior_sd"):
        if a.get(key) is not None:
            man.model[key] = a[key]
    for key in ("country", "style"):
        if a.get(key) is not None:
            man.metadata[key] = a[key]
    if man.system:
        man.system = GradeSystem.parse(man.system).value
    return man


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        man = manifest_from_args(args)
        COMMANDS[args.command](man)
    except (InputError, LogbookError, GradeError, RegressionError, FileNotFoundError,
            json.JSONDecodeError, TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SamplerError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
