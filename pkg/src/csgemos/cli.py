"""Command-line front end.

``csgemos <command> [options]`` with commands ``simulate``, ``cluster``,
``fit``, ``qm``, ``verify``, ``report`` and ``run`` (fit, qm, verify and
report in one process). Settings come from the :class:`RunConfig`
defaults, then a JSON file (``--config``), then ``CSGEMOS_<FIELD>``
environment variables, then command-line flags; each layer overrides the
previous one.

Failures print one JSON line ``{"error": ..., "exit_code": ..., "message":
...}`` to stderr and exit with 2 (configuration), 3 (data) or 4 (numeric).
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import io, pipeline
from .emos import EmosCoefficients, FitReport
from .ensemble import HIGH, LOW, lead_days_to_hours
from .errors import ConfigError, CsgEmosError, DataError, NumericError
from .pipeline import METHODS, RunConfig
from .synth import ScenarioConfig, generate

log = logging.getLogger("csgemos")

ENV_PREFIX = "CSGEMOS_"
COMMANDS = ("simulate", "cluster", "fit", "qm", "verify", "report", "run")
# settings that never change results; left out of run_config.json so bundles
# compare equal across machines and pool sizes
NON_RESULT_FIELDS = ("workers", "output_dir")
COEF_FORMAT = "%.17g"
FLOAT_ITEMS = {"thresholds"}


# -- configuration ------------------------------------------------------------------

def _kind(f: dataclasses.Field) -> tuple[str, bool]:
    ann = str(f.type)
    optional = "None" in ann
    return ann.replace("| None", "").strip(), optional


def parse_value(name: str, text: str):
    """Convert a flag or environment string to the type of ``RunConfig.<name>``."""
    f = {f.name: f for f in dataclasses.fields(RunConfig)}.get(name)
    if f is None:
        raise ConfigError(f"unknown setting {name!r}")
    kind, optional = _kind(f)
    text = str(text).strip()
    try:
        if optional and text.lower() in ("", "none", "null"):
            return None
        if kind == "bool":
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "list":
            items = [v.strip() for v in text.split(",") if v.strip()]
            return [float(v) for v in items] if name in FLOAT_ITEMS else items
        if kind == "dict":
            value = json.loads(text)
            if not isinstance(value, dict):
                raise ValueError("expected a JSON object")
            return value
        return text
    except (ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"invalid value for {name}: {exc}") from exc


def _read_config_file(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown settings in {path}: {unknown}")
    return data


def _env_settings(environ) -> dict:
    out = {}
    for f in dataclasses.fields(RunConfig):
        key = ENV_PREFIX + f.name.upper()
        if key in environ:
            out[f.name] = parse_value(f.name, environ[key])
    return out


def resolve_config(args: argparse.Namespace, environ=None) -> RunConfig:
    environ = os.environ if environ is None else environ
    merged: dict = {}
    if getattr(args, "config", None):
        merged.update(_read_config_file(args.config))
    merged.update(_env_settings(environ))
    for f in dataclasses.fields(RunConfig):
        if hasattr(args, f.name):
            value = getattr(args, f.name)
            merged[f.name] = value if isinstance(value, bool) else parse_value(f.name, value)
    try:
        return RunConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def config_record(cfg: RunConfig) -> dict:
    record = cfg.to_dict()
    for name in NON_RESULT_FIELDS:
        record.pop(name, None)
    return record


# -- file layout -----------------------------------------------------------------------

def data_paths(cfg: RunConfig) -> tuple[Path, Path, Path]:
    base = Path(cfg.data_dir)
    return (Path(cfg.forecasts or base / "forecasts.csv"),
            Path(cfg.observations or base / "observations.csv"),
            Path(cfg.reforecasts or base / "reforecasts.csv"))


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise ConfigError(f"{path} does not exist ({hint})")
    return path


def _cluster_path(out: Path, lead_h: int, label: str) -> Path:
    return out / "clusters" / f"lead{lead_h:03d}_{label}.csv"


def _coef_path(out: Path, label: str) -> Path:
    return out / "coefficients" / f"{label}.csv"


def _thr_tag(t) -> str:
    return f"{float(t):g}".replace(".", "p")


def _write_json(obj, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


class Context:
    """Lazily loaded inputs shared by the stages of one invocation."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.output_dir)
        self._ds = None
        self._archive = None
        self.chains = None
        self.qm = None
        self.qm_scores = None
        self.qm_cases = None

    @property
    def ds(self):
        if self._ds is None:
            fc, obs, _ = data_paths(self.cfg)
            _require(fc, "run `csgemos simulate` or set --forecasts")
            _require(obs, "run `csgemos simulate` or set --observations")
            self._ds = io.read_dataset(fc, obs)
            for m in self.cfg.mixture_configs:
                self._ds.members(m)
        return self._ds

    @property
    def archive(self):
        if self._archive is None:
            _, obs, rf = data_paths(self.cfg)
            _require(rf, "run `csgemos simulate` or set --reforecasts")
            self._archive = io.read_reforecasts(rf, io.read_observations(obs), self.ds)
        return self._archive

    @property
    def dates(self):
        return pipeline.verification_dates(self.ds, self.cfg)


# -- commands -----------------------------------------------------------------------------

def cmd_simulate(ctx: Context) -> dict:
    cfg = ctx.cfg
    opts = {k: tuple(v) if isinstance(v, list) else v for k, v in cfg.scenario.items()}
    if "start_date" in opts:
        opts["start_date"] = dt.date.fromisoformat(str(opts["start_date"]))
    if "lead_days" in opts:
        opts["lead_days"] = tuple(int(v) for v in opts["lead_days"])
    if "mixtures" in opts:
        raise ConfigError("scenario mixtures follow the top-level mixtures setting")
    opts.setdefault("seed", cfg.seed)
    opts["mixtures"] = tuple(cfg.mixture_configs)
    try:
        scenario_cfg = ScenarioConfig(**opts)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid scenario: {exc}") from exc
    sc = generate(scenario_cfg)
    fc, obs, rf = data_paths(cfg)
    for p in (fc, obs, rf):
        p.parent.mkdir(parents=True, exist_ok=True)
    io.write_dataset(sc.dataset, fc, obs, extra_observations=io.archive_observations(sc.reforecast))
    io.write_reforecasts(sc.reforecast, rf)
    return {"forecasts": str(fc), "observations": str(obs), "reforecasts": str(rf),
            "locations": len(sc.dataset.locations), "days": len(sc.dataset.dates)}


def _assignment_frame(pairs) -> pd.DataFrame:
    rows = [(d.isoformat(), loc, int(c)) for d, assignment in pairs for loc, c in sorted(assignment.items())]
    return pd.DataFrame(rows, columns=["target_date", "location_id", "cluster_id"])


def cmd_cluster(ctx: Context) -> dict:
    ds, cfg, dates = ctx.ds, ctx.cfg, ctx.dates
    n_files = 0
    for li, lead_h in enumerate(ds.lead_hours):
        for m in cfg.mixture_configs:
            pairs = pipeline.cluster_chain(ds, m, li, dates, cfg)
            io.write_frame(_assignment_frame(pairs), _cluster_path(ctx.out, lead_h, m.label))
            n_files += 1
    return {"cluster_files": n_files, "dates": len(dates)}


def cmd_fit(ctx: Context) -> dict:
    ds, cfg = ctx.ds, ctx.cfg
    chains = pipeline.fit_all(ds, cfg, ctx.dates)
    ctx.chains = chains
    n_fits = n_conv = 0
    for m in cfg.mixture_configs:
        rows = []
        for li, lead_h in enumerate(ds.lead_hours):
            chain = chains[(li, m.label)]
            rows += chain.coefficient_rows(lead_h)
            pairs = [(f.target_date, f.assignment) for f in chain.fits]
            io.write_frame(_assignment_frame(pairs), _cluster_path(ctx.out, lead_h, m.label))
        df = pd.DataFrame(rows)
        n_fits += len(df)
        n_conv += int(df["converged"].sum())
        io.write_frame(df, _coef_path(ctx.out, m.label), float_format=COEF_FORMAT)
    return {"fits": n_fits, "converged_share": n_conv / max(n_fits, 1)}


def read_chains(ctx: Context) -> dict:
    """Chains rebuilt from the coefficient and cluster files written by ``fit``."""
    ds, cfg = ctx.ds, ctx.cfg
    chains = {}
    for m in cfg.mixture_configs:
        coef_file = _coef_path(ctx.out, m.label)
        if not coef_file.exists():
            raise DataError(f"{coef_file} not found; run `csgemos fit` first")
        coefs = pd.read_csv(coef_file)
        for li, lead_h in enumerate(ds.lead_hours):
            cl_file = _cluster_path(ctx.out, lead_h, m.label)
            if not cl_file.exists():
                raise DataError(f"{cl_file} not found; run `csgemos fit` first")
            clusters = pd.read_csv(cl_file, dtype={"location_id": str})
            sub = coefs[coefs["lead_time_h"] == lead_h]
            fits = []
            for target in ctx.dates:
                iso = target.isoformat()
                rows = sub[sub["target_date"] == iso].sort_values("cluster_id")
                if rows.empty:
                    raise DataError(f"{coef_file}: no coefficients for {iso} at lead {lead_h} h")
                reports = [
                    FitReport(EmosCoefficients(r.a, r.b_high, r.b_low, r.c, r.d, r.delta), r.train_crps,
                              int(r.n_cases), int(r.iterations), bool(r.converged), int(r.evaluations),
                              r.init_crps)
                    for r in rows.itertuples(index=False)
                ]
                assigned = clusters[clusters["target_date"] == iso]
                assignment = dict(zip(assigned["location_id"], assigned["cluster_id"].astype(int)))
                missing = set(ds.locations) - set(assignment)
                if missing:
                    raise DataError(f"{cl_file}: {len(missing)} locations unassigned on {iso}")
                fits.append(pipeline.DateFit(target, assignment, reports))
            chains[(li, m.label)] = pipeline.ChainResult(li, m, list(ctx.dates), fits)
    return chains


def _run_qm(ctx: Context):
    if ctx.qm_scores is not None:
        return
    ds, cfg = ctx.ds, ctx.cfg
    qm = pipeline.QuantileMapper(ctx.archive, cfg).train_weights()
    day_idx = np.array([ds.day_index(d) for d in ctx.dates])
    scores, cases = {}, {}
    for li in range(len(ds.lead_days)):
        lead_cases: dict = {}
        for (label, method), s in pipeline.score_qm(qm, ds, cfg.mixture_configs, li, day_idx,
                                                    cfg.thresholds, lead_cases).items():
            scores[(li, label, method)] = s
        cases[li] = lead_cases
    ctx.qm, ctx.qm_scores, ctx.qm_cases = qm, scores, cases


def _bins_tag(bins) -> str:
    return "-".join(f"{g}{b}" for g, b in zip((HIGH, LOW), bins)) if len(bins) == 2 else str(bins[0])


def cmd_qm(ctx: Context) -> dict:
    _run_qm(ctx)
    ds, cfg, qm = ctx.ds, ctx.cfg, ctx.qm
    qdir = ctx.out / "qm"
    hist_rows, edge_rows = [], []
    for (li, group), hists in sorted(qm.hists.items()):
        lead_h = lead_days_to_hours(ds.lead_days[li])
        for h in hists:
            hist_rows += [(lead_h, group, h.mean_bin, r, c) for r, c in enumerate(h.counts)]
        edge_rows += [(lead_h, group, i, e) for i, e in enumerate(qm.bin_edges[(li, group)])]
    io.write_frame(pd.DataFrame(hist_rows, columns=["lead_time", "group", "mean_bin", "bin", "count"]),
                   qdir / "histograms.csv")
    io.write_frame(pd.DataFrame(edge_rows, columns=["lead_time", "group", "edge_index", "edge"]), qdir / "bin_edges.csv")

    n_sets = 0
    for m in cfg.mixture_configs:
        weight_rows, case_rows = [], []
        for li, lead_h in enumerate(ds.lead_hours):
            info = ctx.qm_cases[li][m.label]
            used = sorted({b for b in info["bins"].ravel()})
            for bins in used:
                w = qm.weight_set(li, m, bins)
                weight_rows += [(lead_h, _bins_tag(bins), r, v) for r, v in enumerate(w)]
            n_sets += len(used)
            qm_s, qmw_s = ctx.qm_scores[(li, m.label, "qm")], ctx.qm_scores[(li, m.label, "qmw")]
            for i, loc in enumerate(ds.locations):
                for j, d in enumerate(ctx.dates):
                    row = [lead_h, loc, d.isoformat(), _bins_tag(info["bins"][i, j]), info["mean"][i, j]]
                    row += [qm_s.prob_below[t][i, j] for t in cfg.thresholds]
                    row += [qmw_s.prob_below[t][i, j] for t in cfg.thresholds]
                    case_rows.append(row)
        cols = (["lead_time", "location_id", "valid_time", "weight_set", "mapped_mean"]
                + [f"p_le_{_thr_tag(t)}_qm" for t in cfg.thresholds]
                + [f"p_le_{_thr_tag(t)}_qmw" for t in cfg.thresholds])
        io.write_frame(pd.DataFrame(weight_rows, columns=["lead_time", "weight_set", "member_rank", "weight"]),
                       qdir / f"weights_{m.label}.csv", float_format="%.10f")
        io.write_frame(pd.DataFrame(case_rows, columns=cols), qdir / f"cases_{m.label}.csv")
    return {"weight_sets": n_sets}


def _reliability_name(meta: dict) -> str:
    return f"lead{meta['lead_time']:03d}_{meta['mixture']}_{meta['method']}_t{_thr_tag(meta['threshold'])}.csv"


def reliability_frame(diagram) -> pd.DataFrame:
    return pd.DataFrame({"bin": np.arange(diagram.count.size), "mean_prob": diagram.mean_prob,
                         "obs_freq": diagram.obs_freq, "count": diagram.count, "log10_freq": diagram.log10_freq})


def cmd_verify(ctx: Context) -> dict:
    ds, cfg = ctx.ds, ctx.cfg
    chains = ctx.chains or read_chains(ctx)
    _run_qm(ctx)
    ver = pipeline.score_all(ds, cfg, chains, ctx.qm, ctx.dates, qm_scores=ctx.qm_scores)
    vdir = ctx.out / "verify"
    io.write_frame(pd.DataFrame(pipeline.summary_rows(ver, cfg)), vdir / "summary.csv")
    io.write_frame(pd.DataFrame(pipeline.skill_rows(ver, cfg)), vdir / "skill.csv")
    sig = {m: pipeline.significance_summary(ver, cfg, m) for m in ("raw", "emos")}
    _write_json({"fdr": cfg.fdr, "tests": sig}, vdir / "significance.json")

    dates = [d.isoformat() for d in ver.dates]
    for method in METHODS:
        rows = []
        for li, lead in enumerate(ver.lead_days):
            for m in cfg.mixture_configs:
                crps = ver.scores[(li, m.label, method)].crps
                for i, loc in enumerate(ver.locations):
                    rows += [(lead_days_to_hours(lead), m.label, loc, d, v) for d, v in zip(dates, crps[i])]
        io.write_frame(pd.DataFrame(rows, columns=["lead_time", "mixture", "location_id", "valid_time", "crps"]),
                       vdir / f"scores_{method}.csv")
    for meta, diagram in pipeline.reliability_tables(ver, cfg):
        io.write_frame(reliability_frame(diagram), vdir / "reliability" / _reliability_name(meta))
    return {"dates": len(ver.dates), "cases_per_lead": int(np.isfinite(ver.obs).sum())}


def cmd_report(ctx: Context) -> dict:
    from . import plotting

    cfg = ctx.cfg
    vdir, rdir = ctx.out / "verify", ctx.out / "report"
    summary_file, skill_file = vdir / "summary.csv", vdir / "skill.csv"
    for p in (summary_file, skill_file):
        if not p.exists():
            raise DataError(f"{p} not found; run `csgemos verify` first")
    summary = pd.read_csv(summary_file)
    skill = pd.read_csv(skill_file)

    curves = summary[summary["score_kind"] == "crps"][["lead_time", "mixture", "method", "mean", "ci_lo", "ci_hi"]]
    io.write_frame(curves, rdir / "crps_vs_lead.csv")
    plotting.plot_crps_vs_lead(curves, rdir / "crps_vs_lead.png")

    tables = {}
    vs_raw = skill[skill["reference_method"] == "raw"]
    for kind, thr in [("crps", None)] + [("bs", t) for t in cfg.thresholds]:
        sub = vs_raw[vs_raw["score_kind"] == kind]
        if thr is not None:
            sub = sub[np.isclose(sub["threshold"].astype(float), thr)]
        name = "crpss" if kind == "crps" else f"bss_t{_thr_tag(thr)}"
        table = sub[["lead_time", "mixture", "method", "skill", "ci_lo", "ci_hi"]]
        io.write_frame(table, rdir / f"skill_{name}.csv")
        plotting.plot_skill(table, rdir / f"skill_{name}.png", f"{name} against raw {cfg.mixture_configs[0].label}")
        tables[name] = len(table)
    emos_vs_qmw = skill[(skill["method"] == "emos") & (skill["reference_method"] == "qmw")]
    io.write_frame(emos_vs_qmw[["lead_time", "mixture", "score_kind", "threshold", "skill", "ci_lo", "ci_hi"]],
                   rdir / "skill_emos_vs_qmw.csv")

    rel_files = sorted((vdir / "reliability").glob("*.csv"))
    for path in rel_files:
        table = pd.read_csv(path)
        io.write_frame(table, rdir / "reliability" / path.name)
        plotting.plot_reliability(table, (rdir / "reliability" / path.name).with_suffix(".png"), path.stem)
    index = {
        "curves": [{"mixture": mix, "method": method} for (mix, method) in
                   dict.fromkeys(zip(curves["mixture"], curves["method"]))],
        "skill_tables": tables,
        "reliability": [p.name for p in rel_files],
    }
    _write_json(index, rdir / "index.json")
    return {"curves": len(index["curves"]), "reliability_tables": len(rel_files)}


def cmd_run(ctx: Context) -> dict:
    out = {}
    for name, fn in (("fit", cmd_fit), ("qm", cmd_qm), ("verify", cmd_verify), ("report", cmd_report)):
        out[name] = fn(ctx)
    return out


HANDLERS = {"simulate": cmd_simulate, "cluster": cmd_cluster, "fit": cmd_fit, "qm": cmd_qm,
            "verify": cmd_verify, "report": cmd_report, "run": cmd_run}


# -- argument parsing ---------------------------------------------------------------------

def _add_setting_flags(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("settings (override config file and environment)")
    for f in dataclasses.fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        kind, _ = _kind(f)
        if kind == "bool":
            group.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=argparse.SUPPRESS)
        else:
            hint = {"list": "comma-separated", "dict": "JSON object"}.get(kind, kind)
            group.add_argument(flag, dest=f.name, metavar=hint.upper().replace("-", "_"), default=argparse.SUPPRESS)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors surface as the JSON error line instead of argparse's exit(2) text
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="csgemos", description="Dual-resolution ensemble post-processing experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "simulate": "generate a synthetic scenario into the data directory",
        "cluster": "semi-local cluster assignments per verification date",
        "fit": "semi-local CSG EMOS coefficients per date, lead time and mixture",
        "qm": "quantile-mapped forecasts and closest-member weights",
        "verify": "scores, skill, significance and reliability of all methods",
        "report": "plot data and figures from the verification outputs",
        "run": "fit, qm, verify and report in one go",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", help="JSON file with settings")
        p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
        _add_setting_flags(p)
    return parser


def _fail(code: str, exit_code: int, message: str) -> int:
    sys.stderr.write(json.dumps({"error": code, "exit_code": exit_code, "message": " ".join(str(message).split())}) + "\n")
    return exit_code


def main(argv=None, environ=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        return _fail(ConfigError.code, ConfigError.exit_code, exc)
    logging.basicConfig(level=getattr(logging, args.log_level), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args, environ)
        ctx = Context(cfg)
        result = HANDLERS[args.command](ctx)
        if args.command != "simulate":
            _write_json(config_record(cfg), ctx.out / "run_config.json")
    except CsgEmosError as exc:
        return _fail(exc.code, exc.exit_code, exc)
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        return _fail(NumericError.code, NumericError.exit_code, f"{type(exc).__name__}: {exc}")
    print(json.dumps({"command": args.command, **result}, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
