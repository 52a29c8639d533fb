"""INI scenario/design files and the gain-expression mini language.

Gain expressions::

    poly:70,40,15,3.56,0.27     sum c_i s^i, i from 1
    linear:10                   10 s
    power:2,0.5                 2 s^0.5
    zero | identity
    scale(1/0.99, <expr>)   compose(<outer>, <inner>)
    max(<expr>, ...)        add(<expr>, <expr>)

Numbers may be written as fractions (``1/0.99``).
"""

from __future__ import annotations

import configparser
import re
from pathlib import Path
from typing import Iterable

from . import gains
from .errors import ArgumentError, ConfigError, EtcError
from .gains import GainFn

SCENARIO_DIR = Path(__file__).parent / "scenarios"

_NUM = re.compile(r"^\s*([-+0-9.eE]+)\s*(?:/\s*([-+0-9.eE]+)\s*)?$")


def parse_number(text: str) -> float:
    m = _NUM.match(str(text))
    if not m:
        raise ConfigError(f"not a number: {text!r}")
    try:
        num = float(m.group(1))
        return num / float(m.group(2)) if m.group(2) else num
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"not a number: {text!r}") from exc


def parse_numbers(text: str) -> list[float]:
    return [parse_number(t) for t in str(text).split(",") if t.strip()]


# ------------------------------------------------------- gain expressions


_TOKEN = re.compile(r"\s*(?:(?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)"
                    r"|(?P<name>[A-Za-z_]\w*)|(?P<sym>[(),:/]))")


def _tokens(text: str) -> list[tuple[str, str]]:
    out, pos = [], 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ConfigError(f"unexpected character at {text[pos:]!r}")
        kind = m.lastgroup
        out.append((kind, m.group(kind)))
        pos = m.end()
    return out


class _GainParser:
    """Recursive descent over the token list; templates take every number that follows."""

    def __init__(self, text: str):
        self.text = text
        self.toks = _tokens(text)
        self.i = 0

    def peek(self, k: int = 0):
        j = self.i + k
        return self.toks[j] if j < len(self.toks) else (None, None)

    def take(self, kind=None, value=None):
        tok = self.peek()
        if tok[0] is None or (kind and tok[0] != kind) or (value and tok[1] != value):
            want = value or kind or "token"
            raise ConfigError(f"bad gain {self.text!r}: expected {want}, got {tok[1]!r}")
        self.i += 1
        return tok[1]

    def number(self) -> float:
        num = self.take("num")
        if self.peek() == ("sym", "/"):
            self.take()
            return parse_number(f"{num}/{self.take('num')}")
        return float(num)

    def numbers(self) -> list[float]:
        vals = [self.number()]
        while self.peek() == ("sym", ",") and self.peek(1)[0] == "num":
            self.take()
            vals.append(self.number())
        return vals

    def arg(self):
        return self.number() if self.peek()[0] == "num" else self.expr()

    def expr(self) -> GainFn:
        name = self.take("name")
        if name == "zero":
            return gains.zero_gain()
        if name == "identity":
            return gains.identity()
        if self.peek() == ("sym", ":"):
            self.take()
            return _template(name, self.numbers())
        self.take("sym", "(")
        args = [self.arg()]
        while self.peek() == ("sym", ","):
            self.take()
            args.append(self.arg())
        self.take("sym", ")")
        return _combine(name, args)

    def parse(self) -> GainFn:
        g = self.expr()
        if self.peek()[0] is not None:
            raise ConfigError(f"bad gain {self.text!r}: trailing {self.peek()[1]!r}")
        return g


def _template(kind: str, vals: list[float]) -> GainFn:
    if any(v < 0 for v in vals):
        raise ConfigError(f"{kind}: coefficients must be nonnegative, got {vals}")
    if kind == "poly":
        if not any(v > 0 for v in vals):
            raise ConfigError("poly: needs a positive coefficient")
        return gains.polynomial(vals)
    if kind == "linear":
        if len(vals) != 1:
            raise ConfigError("linear:<slope> takes one number")
        return gains.linear(vals[0])
    if kind == "power":
        if len(vals) != 2:
            raise ConfigError("power:<a>,<p> takes two numbers")
        return gains.power(vals[0], vals[1])
    raise ConfigError(f"unknown gain template {kind!r}")


def _combine(head: str, args: list) -> GainFn:
    def need_gains(items):
        if not all(isinstance(a, GainFn) for a in items):
            raise ConfigError(f"{head}(...) expects gain arguments")
        return items

    if head == "scale":
        if len(args) != 2 or isinstance(args[0], GainFn):
            raise ConfigError("scale(c, g) takes a number and a gain")
        return gains.scale(args[0], need_gains(args[1:])[0])
    if head == "compose":
        if len(args) != 2:
            raise ConfigError("compose(outer, inner) takes two arguments")
        return gains.compose(*need_gains(args))
    if head == "max":
        return gains.max_of(need_gains(args))
    if head == "add":
        if len(args) != 2:
            raise ConfigError("add(a, b) takes two arguments")
        return gains.add(*need_gains(args))
    raise ConfigError(f"unknown gain combinator {head!r}")


def parse_gain(expr: str) -> GainFn:
    """Build a :class:`GainFn` from a template expression."""
    text = str(expr).strip()
    if not text:
        raise ConfigError("empty gain expression")
    try:
        return _GainParser(text).parse()
    except ConfigError:
        raise
    except EtcError as exc:
        raise ConfigError(f"bad gain {text!r}: {exc}") from exc


def describe_gain(g: GainFn, digits: int = 12) -> str:
    """Human-readable form, exact for polynomial gains."""
    if g.is_zero:
        return "0"
    if g.pieces is None:
        return g.label
    parts = []
    for p in g.pieces:
        terms = []
        for i, c in enumerate(p):
            if c == 0:
                continue
            coef = f"{c:.{digits}g}"
            terms.append(f"{coef}s" if i == 0 else f"{coef}s^{i + 1}")
        parts.append(" + ".join(reversed(terms)) or "0")
    return parts[0] if len(parts) == 1 else "max{" + ", ".join(parts) + "}"


# ------------------------------------------------------------ INI loading


def resolve_path(name_or_path: str, kind: str = "scenario") -> Path:
    """A file path, or the name of a shipped scenario/design file."""
    p = Path(name_or_path)
    if p.is_file():
        return p
    for cand in (SCENARIO_DIR / f"{name_or_path}.ini", SCENARIO_DIR / name_or_path):
        if cand.is_file():
            return cand
    raise ConfigError(f"{kind} {name_or_path!r} is neither a file nor a shipped name")


def shipped() -> list[str]:
    return sorted(p.stem for p in SCENARIO_DIR.glob("*.ini"))


def apply_overrides(cp: configparser.ConfigParser, overrides: Iterable[str]) -> None:
    """Apply ``section.key=value`` overrides in order."""
    for item in overrides or ():
        key, sep, value = item.partition("=")
        section, dot, option = key.strip().partition(".")
        if not sep or not dot or not section or not option:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, option, value.strip())


def load_ini(path, overrides: Iterable[str] = ()) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    apply_overrides(cp, overrides)
    return cp


def _get(cp, section, key, default=None, conv=None):
    if not cp.has_option(section, key):
        if default is None:
            raise ConfigError(f"missing [{section}] {key}")
        return default
    raw = cp.get(section, key)
    try:
        return conv(raw) if conv else raw
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from exc


# ------------------------------------------------------------- designs


_DESIGN_PRESETS = {"paper_sec4_design": "certified", "cubic_controller_design": "cubic"}


def load_design(name_or_path: str, overrides: Iterable[str] = ()):
    """An :class:`~etcsim.backstepping.LtsDesign` from a builtin name or file.

    Returns ``(design, synthesis_options)``.
    """
    from . import backstepping as bs

    overrides = list(overrides or ())
    try:
        path = resolve_path(name_or_path, "design")
    except ConfigError:
        if name_or_path in _DESIGN_PRESETS and not overrides:
            return bs.benchmark_design(_DESIGN_PRESETS[name_or_path]), {}
        raise
    cp = load_ini(path, overrides)
    try:
        design = design_from_ini(cp)
    except ArgumentError as exc:
        raise ConfigError(f"invalid design: {exc}") from exc
    opts = dict(cp.items("synthesis")) if cp.has_section("synthesis") else {}
    return design, opts


def design_from_ini(cp: configparser.ConfigParser):
    from dataclasses import replace

    from . import backstepping as bs

    if not cp.has_section("design"):
        raise ConfigError("design file needs a [design] section")
    preset = cp.get("design", "preset", fallback="").strip()
    base = None
    if preset:
        if preset not in _DESIGN_PRESETS:
            raise ConfigError(f"unknown design preset {preset!r}")
        radius = _get(cp, "design", "radius", 1.0, parse_number)
        base = bs.benchmark_design(_DESIGN_PRESETS[preset], radius=radius)
    ell = int(_get(cp, "design", "ell", base.ell if base else None, lambda v: int(v)))

    def vec(key):
        if cp.has_option("design", key):
            return tuple(parse_numbers(cp.get("design", key)))
        if base is not None:
            return getattr(base, key)
        raise ConfigError(f"missing [design] {key}")

    def level_item(j, key, conv, fallback_attr):
        sec = f"level{j}"
        if cp.has_option(sec, key):
            return conv(cp.get(sec, key))
        if base is not None:
            val = getattr(base, fallback_attr)[j - 1]
            return val
        if key == "m_tilde" and j == 1:
            return None
        raise ConfigError(f"missing [{sec}] {key}")

    def profile(text):
        return bs.Profile(tuple(parse_numbers(text)))

    iota, m, mt, psi, zc = [], [], [], [], []
    for j in range(1, ell + 1):
        iota.append(level_item(j, "iota", profile, "iota"))
        m.append(level_item(j, "m", profile, "m"))
        mt.append(level_item(j, "m_tilde", profile, "m_tilde") if j > 1 else None)
        psi.append(level_item(j, "psi", profile, "psi"))
        gz = parse_gain(cp.get(f"level{j}", "gamma_z")) if cp.has_option(f"level{j}", "gamma_z") \
            else (base.z_cert[j - 1].gamma_z if base else gains.zero_gain())
        gx = parse_gain(cp.get(f"level{j}", "gamma_x")) if cp.has_option(f"level{j}", "gamma_x") \
            else (base.z_cert[j - 1].gamma_x if base else None)
        if gx is None:
            raise ConfigError(f"missing [level{j}] gamma_x")
        zc.append(bs.ZCert(gz, gx))
    declared = base.declared_xi if base else None
    if cp.has_section("xi"):
        declared = tuple(parse_gain(cp.get("xi", k)) for k in ("gamma_xi_z", "gamma_xi_x",
                                                                "gamma_xi_r"))
    name = cp.get("design", "name", fallback=base.name if base else "design")
    fields = dict(ell=ell, b=vec("b"), c=vec("c"), k=vec("k"), iota=tuple(iota), m=tuple(m),
                  m_tilde=tuple(mt), psi=tuple(psi), z_cert=tuple(zc), name=name,
                  declared_xi=declared)
    if base is not None:
        return replace(base, **fields)
    return bs.LtsDesign(**fields)


# ----------------------------------------------------------- scenarios


def gamma_bar_from_section(cp: configparser.ConfigParser, section: str = "trigger") -> GainFn:
    """Triggering gain from a ``[trigger]`` section.

    Keys: ``gamma_bar`` (used as is); or ``gamma`` with ``eps`` (scaling)
    or ``eps1``/``eps2``; or ``design`` (builtin/file) with ``eps`` and
    optional ``xi = declared|derived``; or ``certificate = [certificate]``.
    """
    from . import backstepping as bs
    from . import interconnect as ic

    if not cp.has_section(section):
        raise ConfigError(f"missing [{section}] section")
    get = lambda k: cp.get(section, k) if cp.has_option(section, k) else None
    try:
        if get("gamma_bar"):
            return parse_gain(get("gamma_bar"))
        if get("design"):
            design, _ = load_design(get("design"))
            design = bs.synthesize(design)
            xi = bs.output_xi_gains(design, mode=get("xi") or "auto")
            return bs.design_gamma_bar(design, parse_number(get("eps") or "1/0.99"), xi)
        if get("certificate"):
            cert = certificate_from_section(cp, get("certificate"))
            gamma = ic.triggering_gain(cert)
        elif get("gamma"):
            gamma = parse_gain(get("gamma"))
        else:
            raise ConfigError(f"[{section}] needs gamma_bar, gamma, design or certificate")
        if get("eps1") or get("eps2"):
            return gains.build_gamma_bar(gamma, parse_number(get("eps1") or "nan"),
                                         parse_number(get("eps2") or "nan"))
        eps = parse_number(get("eps") or "nan")
        if not eps > 1:
            raise ConfigError(f"[{section}] eps must exceed 1")
        return gains.scale(eps, gamma)
    except ConfigError:
        raise
    except ArgumentError as exc:
        raise ConfigError(f"[{section}]: {exc}") from exc


def certificate_from_section(cp: configparser.ConfigParser, section: str = "certificate"):
    from . import interconnect as ic

    if not cp.has_section(section):
        raise ConfigError(f"missing [{section}] section")
    if cp.has_option(section, "preset"):
        preset = cp.get(section, "preset")
        if preset != "interconnected_demo":
            raise ConfigError(f"unknown certificate preset {preset!r}")
        return ic.demo_certificate(_get(cp, section, "a", 0.5, parse_number),
                                   _get(cp, section, "k", 2.0, parse_number))
    kw = {f: parse_gain(cp.get(section, f, fallback="zero")) for f in ic.GAIN_FIELDS}
    return ic.ISSCertificate(**kw, beta_note=cp.get(section, "beta_note", fallback=""),
                             label=section)


def scenario_from_ini(cp: configparser.ConfigParser, default_name: str = "scenario"):
    from .simulator import Scenario
    from .trigger import predicted_limit_interval

    if not cp.has_section("scenario"):
        raise ConfigError("scenario file needs a [scenario] section")
    s = "scenario"
    system = _get(cp, s, "system")
    gb = gamma_bar_from_section(cp)
    params = {k: parse_number(v) for k, v in cp.items("params")} if cp.has_section("params") else {}
    x0 = parse_numbers(cp.get(s, "x0")) if cp.has_option(s, "x0") else None
    T_pred = None
    if cp.has_option("checks", "T_pred"):
        raw = cp.get("checks", "T_pred").strip()
        T_pred = predicted_limit_interval(gb) if raw == "auto" else parse_number(raw)
    return Scenario(
        system=system, gamma_bar=gb, params=params, x0=x0,
        horizon=_get(cp, s, "horizon", 20.0, parse_number),
        step=_get(cp, s, "step", 1e-4, parse_number),
        loc_tol=_get(cp, s, "loc_tol", 1e-9, parse_number),
        record_every=int(_get(cp, s, "record_every", 1, parse_number)),
        backend=_get(cp, s, "backend", "auto"),
        name=_get(cp, s, "name", default_name),
        T_pred=T_pred,
        convergence_rtol=_get(cp, "checks", "convergence_rtol", 0.05, parse_number)
        if cp.has_section("checks") else 0.05,
    )


DEFAULT_REQUIRE = ("zeno", "interval_bound", "convergence")
KNOWN_CHECKS = ("zeno", "interval_bound", "convergence", "dual_r", "stabilization")


def required_checks(cp: configparser.ConfigParser) -> tuple[str, ...]:
    if not cp.has_option("checks", "require"):
        return DEFAULT_REQUIRE
    items = tuple(t.strip() for t in cp.get("checks", "require").split(",") if t.strip())
    bad = [t for t in items if t not in KNOWN_CHECKS]
    if bad:
        raise ConfigError(f"unknown checks {bad}; known: {', '.join(KNOWN_CHECKS)}")
    return items


def load_scenario(name_or_path: str, overrides: Iterable[str] = ()):
    path = resolve_path(name_or_path)
    cp = load_ini(path, overrides)
    required_checks(cp)
    return scenario_from_ini(cp, Path(path).stem), cp
