"""Command-line entry point.

    etcsim simulate paper_sec4 --out out/ --set scenario.horizon=5
    etcsim simulate scenarios_dir/ --jobs 4
    etcsim synthesize paper_sec4_design
    etcsim analyze --gamma-bar linear:10 --r-sup 1

Exit status: 0 on success, 1 when a run violates a checked invariant,
2 when the command line or a config file cannot be parsed.  Every
failure prints a ``reason=...`` line on stderr.
"""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__, config
from .errors import ArgumentError, ConfigError, EtcError, SimulationDivergence
from .gains import estimate_slope, scale, slope_at_zero
from .simulator import (
    format_summary,
    interval_bound_check,
    interval_convergence,
    simulate,
    write_events_csv,
    write_series_csv,
    write_summary,
    zeno_check,
)
from .trigger import interval_upper_bound, predicted_limit_interval

EXIT_OK, EXIT_INVARIANT, EXIT_PARSE = 0, 1, 2
MODES = ("simulate", "synthesize", "analyze")


def reason_line(reason: str, detail: str = "", **kw) -> str:
    parts = [f"reason={reason}"]
    parts += [f"{k}={v}" for k, v in kw.items()]
    if detail:
        parts.append("detail=" + " ".join(str(detail).split()))
    return " ".join(parts)


@dataclass
class RunConfig:
    mode: str
    target: str | None = None
    out: Path = Path("etcsim_out")
    overrides: list[str] = field(default_factory=list)
    jobs: int = 1
    backend: str | None = None
    gamma_bar: str | None = None
    r_sup: float | None = None

    def validate(self) -> "RunConfig":
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        if self.mode != "analyze" and not self.target:
            raise ConfigError(f"{self.mode} needs a config path or shipped name")
        if self.target and not Path(self.target).is_dir():
            if self.mode != "synthesize" or self.target not in config._DESIGN_PRESETS:
                config.resolve_path(self.target)
        if self.mode == "analyze" and not (self.target or self.gamma_bar):
            raise ConfigError("analyze needs --gamma-bar or a config file")
        return self


# --------------------------------------------------------------- simulate


def _check_results(res, sc, required) -> tuple[dict, list[str]]:
    checks: dict[str, str] = {}
    z = zeno_check(res)
    checks["zeno"] = "pass" if z.passed else "fail"
    b = interval_bound_check(res, sc.gamma_bar)
    checks["interval_bound"] = "pass" if b.passed else "fail"
    if sc.T_pred is not None and math.isfinite(sc.T_pred):
        conv = interval_convergence(res, sc.T_pred, sc.convergence_rtol)
        checks["convergence"] = {"pass": "pass", "fail": "fail"}.get(conv.status, "skip")
    else:
        checks["convergence"] = "skip"
    checks["dual_r"] = "pass" if res.diagnostics["dual_r_violations"] == 0 else "fail"
    checks["stabilization"] = ("pass" if res.summary["final_norm"]
                               < 0.01 * res.summary["initial_norm"] else "fail")
    failed = [k for k in required if checks.get(k) == "fail"]
    extra = {f"check_{k}": v for k, v in checks.items()}
    extra["interval_bound"] = b.bound
    extra["zeno_note"] = z.note or "none"
    extra["required_checks"] = ",".join(required)
    extra["status"] = "fail" if failed else "ok"
    return extra, failed


def _simulate_one(target: str, out: Path, overrides: list[str],
                  backend: str | None) -> tuple[int, str, str]:
    """Run one scenario; returns (exit code, stdout text, stderr text)."""
    try:
        sc, cp = config.load_scenario(target, overrides)
        if backend:
            sc.backend = backend
        required = config.required_checks(cp)
        sc.validate()
    except ConfigError as exc:
        return EXIT_PARSE, "", reason_line(exc.reason, str(exc), scenario=target)
    except ArgumentError as exc:
        return EXIT_PARSE, "", reason_line("parse", str(exc), scenario=target)
    out.mkdir(parents=True, exist_ok=True)
    try:
        res = simulate(sc)
    except SimulationDivergence as exc:
        res = getattr(exc, "result", None)
        if res is not None:
            write_series_csv(res, out / "series.csv")
            write_events_csv(res, out / "events.csv")
            write_summary(res, out / "summary.txt", {"status": "fail"})
        return EXIT_INVARIANT, "", reason_line(exc.reason, str(exc), scenario=sc.name)
    except EtcError as exc:
        return EXIT_INVARIANT, "", reason_line(exc.reason, str(exc), scenario=sc.name)
    extra, failed = _check_results(res, sc, required)
    write_series_csv(res, out / "series.csv")
    write_events_csv(res, out / "events.csv")
    write_summary(res, out / "summary.txt", extra)
    text = format_summary({**res.summary, **extra})
    if failed:
        return EXIT_INVARIANT, text, reason_line("invariant", f"checks failed: {','.join(failed)}",
                                                 scenario=sc.name)
    return EXIT_OK, text, ""


def _cmd_simulate(cfg: RunConfig) -> int:
    target = Path(cfg.target)
    if target.is_dir():
        files = sorted(target.glob("*.ini"))
        if not files:
            print(reason_line("parse", f"no .ini scenarios in {target}"), file=sys.stderr)
            return EXIT_PARSE
        jobs = [(str(f), cfg.out / f.stem, cfg.overrides, cfg.backend) for f in files]
        if cfg.jobs > 1:
            with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
                results = list(pool.map(_simulate_one, *zip(*jobs)))
        else:
            results = [_simulate_one(*j) for j in jobs]
    else:
        results = [_simulate_one(cfg.target, cfg.out, cfg.overrides, cfg.backend)]
    for _code, text, err in results:
        if text:
            sys.stdout.write(text)
        if err:
            print(err, file=sys.stderr)
    return max(code for code, _, _ in results)


# ------------------------------------------------------------- synthesize


def _gain_lines(prefix: str, g) -> list[str]:
    mu = slope_at_zero(g)
    return [f"{prefix}={config.describe_gain(g)}", f"{prefix}_slope={mu:.17g}"]


def _cmd_synthesize(cfg: RunConfig) -> int:
    from . import backstepping as bs

    try:
        design, opts = config.load_design(cfg.target, cfg.overrides)
        eps = config.parse_number(opts.get("eps", "1/0.99"))
        xi_mode = opts.get("xi", "auto")
        grid = None
        if any(k in opts for k in ("grid_lo", "grid_hi", "grid_num")):
            from .gains import default_grid
            grid = default_grid(config.parse_number(opts.get("grid_lo", "1e-6")),
                                config.parse_number(opts.get("grid_hi", "1e2")),
                                int(config.parse_number(opts.get("grid_num", "200"))))
    except ConfigError as exc:
        print(reason_line(exc.reason, str(exc)), file=sys.stderr)
        return EXIT_PARSE

    lines = [f"design={design.name}", f"levels={design.ell}"]
    cfg.out.mkdir(parents=True, exist_ok=True)
    report = cfg.out / "synthesis.txt"
    try:
        syn = bs.synthesize(design, grid)
    except EtcError as exc:
        # report the psi margins of every level that could be evaluated
        for j in range(1, design.ell + 1):
            try:
                pr = bs.check_psi_conditions(design, j, grid)
            except EtcError:
                break
            lines += [f"level{j}.psi_passed={str(pr.passed).lower()}",
                      f"level{j}.psi_margin={pr.worst_margin:.17g}"]
        lines.append("status=fail")
        text = "\n".join(lines) + "\n"
        report.write_text(text)
        sys.stdout.write(text)
        kw = {"level": getattr(exc, "level", None), "witness": getattr(exc, "witness", None)}
        print(reason_line(exc.reason, str(exc), **{k: v for k, v in kw.items() if v is not None}),
              file=sys.stderr)
        return EXIT_INVARIANT

    for lv in syn.synthesized:
        j = lv.level
        pr = lv.psi_report
        lines += [f"level{j}.psi_passed={str(pr.passed).lower()}",
                  f"level{j}.psi_margin={pr.worst_margin:.17g}"]
        for key, sg in lv.small_gain.items():
            lines += [f"level{j}.small_gain.{key}.holds={str(sg.holds).lower()}",
                      f"level{j}.small_gain.{key}.worst_ratio={sg.worst_ratio:.17g}",
                      f"level{j}.small_gain.{key}.witness={sg.witness}"]
        lines += _gain_lines(f"level{j}.gamma_bar_Z", lv.gamma_bar_Z)
        lines += _gain_lines(f"level{j}.gamma_bar_X", lv.gamma_bar_X)
        lines.append(f"level{j}.gamma_bar_X_max_ratio={lv.bound_ratio:.17g}")
    try:
        xi = bs.output_xi_gains(syn, mode=xi_mode)
        gb = bs.design_gamma_bar(syn, eps, xi)
    except EtcError as exc:
        print(reason_line(exc.reason, str(exc)), file=sys.stderr)
        return EXIT_INVARIANT
    lines += [f"xi_gains={xi_mode}", f"eps={eps:.17g}"]
    lines += _gain_lines("gamma_bar", gb)
    lines.append(f"gamma_bar_slope_numeric={estimate_slope(gb):.17g}")
    T = predicted_limit_interval(gb)
    lines.append(f"T_pred={T:.17g}" if T is not None else "T_pred=none")
    lines.append("status=ok")
    text = "\n".join(lines) + "\n"
    report.write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------- analyze


def _cmd_analyze(cfg: RunConfig) -> int:
    from . import interconnect as ic

    lines: list[str] = []
    try:
        cp = config.load_ini(config.resolve_path(cfg.target), cfg.overrides) \
            if cfg.target else None
        if cfg.gamma_bar:
            gb = config.parse_gain(cfg.gamma_bar)
        elif cp.has_option("analyze", "gamma_bar"):
            gb = config.parse_gain(cp.get("analyze", "gamma_bar"))
        else:
            gb = config.gamma_bar_from_section(cp)
        r_sup = cfg.r_sup
        if r_sup is None and cp is not None and cp.has_option("analyze", "r_sup"):
            r_sup = config.parse_number(cp.get("analyze", "r_sup"))
        cert = None
        if cp is not None and cp.has_section("certificate"):
            cert = config.certificate_from_section(cp)
            eps = config.parse_number(cp.get("analyze", "eps", fallback="1/0.99"))
    except ConfigError as exc:
        print(reason_line(exc.reason, str(exc)), file=sys.stderr)
        return EXIT_PARSE

    code = EXIT_OK
    try:
        lines += _gain_lines("gamma_bar", gb)
        T = predicted_limit_interval(gb)
        if T is None:
            lines.append("T_pred=none")
            print(reason_line("zeno_risk", "gamma_bar has infinite slope at zero"),
                  file=sys.stderr)
            code = EXIT_INVARIANT
        else:
            lines.append(f"T_pred={T:.17g}")
        if r_sup is not None:
            lines += [f"r_sup={r_sup:.17g}",
                      f"T_max={interval_upper_bound(gb, r_sup):.17g}"]
        if cert is not None:
            gamma = ic.triggering_gain(cert)
            tilde = ic.joint_state_gain(cert)
            lines += _gain_lines("certificate.gamma", gamma)
            lines += _gain_lines("certificate.gamma_tilde", tilde)
            for key, g in (("gamma", gamma), ("gamma_tilde", tilde)):
                Tc = predicted_limit_interval(scale(eps, g))
                lines.append(f"certificate.T_pred_{key}=" + (f"{Tc:.17g}" if Tc else "none"))
    except EtcError as exc:
        print(reason_line(exc.reason, str(exc)), file=sys.stderr)
        code = EXIT_INVARIANT
    lines.append("status=" + ("ok" if code == EXIT_OK else "fail"))
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / "analysis.txt").write_text(text)
    return code


# ------------------------------------------------------------------ main


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(reason_line("parse", message), file=sys.stderr)
        raise SystemExit(EXIT_PARSE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="etcsim", description="Event-triggered control with input delay.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="mode", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--out", type=Path, default=Path("etcsim_out"),
                        help="output directory (default: ./etcsim_out)")
        sp.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE", help="override a config entry")

    s = sub.add_parser("simulate", help="run a scenario file, shipped name or directory")
    s.add_argument("target", help="scenario .ini, shipped name, or directory of .ini files")
    common(s)
    s.add_argument("--jobs", type=int, default=1, help="workers for a scenario directory")
    s.add_argument("--backend", choices=("auto", "native", "python"))

    y = sub.add_parser("synthesize", help="backstepping synthesis report")
    y.add_argument("target", help="design .ini or shipped name")
    common(y)

    a = sub.add_parser("analyze", help="predicted and worst-case sampling intervals")
    a.add_argument("target", nargs="?", help="optional .ini with [analyze]/[trigger]")
    common(a)
    a.add_argument("--gamma-bar", help="gain expression, e.g. linear:10")
    a.add_argument("--r-sup", type=float, help="sup of |r| for the interval bound")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = RunConfig(args.mode, getattr(args, "target", None), args.out, args.overrides,
                    getattr(args, "jobs", 1), getattr(args, "backend", None),
                    getattr(args, "gamma_bar", None), getattr(args, "r_sup", None))
    try:
        cfg.validate()
    except ConfigError as exc:
        print(reason_line(exc.reason, str(exc)), file=sys.stderr)
        return EXIT_PARSE
    return run(cfg)


def run(cfg: RunConfig) -> int:
    return {"simulate": _cmd_simulate, "synthesize": _cmd_synthesize,
            "analyze": _cmd_analyze}[cfg.mode](cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
