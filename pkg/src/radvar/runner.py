"""Config-driven runs of the acceptance checks and report rendering."""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import math
import time
from dataclasses import dataclass, field as dc_field, replace
from fractions import Fraction
from pathlib import Path

from . import experiments as ex
from .errors import ConfigError, RadvarError

CHECK_ORDER = ("partitions", "oracle", "identities", "pi_convergence", "omega", "phi", "ode",
               "bourgain", "scaling")

DEFAULTS = {
    "domain": {"kind": "flat", "dim": "2", "radius": "0.5", "lipschitz": "0.2", "height": "0.1",
               "n": "21", "graph_file": ""},
    "mesh": {"resolution": str(1 / 128), "R_trunc": "1e4", "growth": "1.08", "fine_radius": "1.25",
             "eval_radius": "1.0", "pole_height": "1.0", "n_walks": "200000", "shell": "1e-4",
             "levels": "0,1,2"},
    "harmonic": {"oracle_walks": "1000000", "oracle_resolution": "0.0625", "ks_max": "0.002",
                 "z_limit": "3.0", "time_max": "120"},
    "kernels": {"heights": "0.125,0.25,0.5,1", "identity_tol": "1e-3", "min_order": "1.0"},
    "field": {"kind": "pole", "variation_kind": "hat"},
    "omega": {"epsilon": "0.05", "tol": "2e-4", "pi_tol": "1e-5", "n_max": "10",
              "segment": "1/4,1/2", "phi_band": "0.2", "ode_residual": "5e-3"},
    "variation": {"y_min_exp": "7", "y_anchor": "2.0", "centers": "-0.4,-0.2,0,0.2,0.4",
                  "bourgain_radii": "0.1,0.05", "scaling_radii_exp": "2,3,4,5,6",
                  "n_walks": "400", "curved_resolution": "0.015625", "curved_R_trunc": "1000"},
    "run": {"checks": ",".join(CHECK_ORDER), "seed": "0", "time_limits": "true"},
}


def _floats(text: str) -> tuple:
    return tuple(float(Fraction(t.strip())) for t in text.split(",") if t.strip())


def _ints(text: str) -> tuple:
    return tuple(int(t) for t in text.split(",") if t.strip())


@dataclass
class ExperimentConfig:
    sections: dict
    source: str | None = None

    @classmethod
    def from_text(cls, text: str, source: str | None = None) -> "ExperimentConfig":
        parser = configparser.ConfigParser()
        parser.optionxform = str
        parser.read_dict(DEFAULTS)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config: {exc}") from exc
        unknown = [s for s in parser.sections() if s not in DEFAULTS]
        if unknown:
            raise ConfigError(f"unknown sections {unknown}")
        for sec in DEFAULTS:
            extra = set(parser[sec]) - set(DEFAULTS[sec])
            if extra:
                raise ConfigError(f"unknown keys in [{sec}]: {sorted(extra)}")
        cfg = cls({s: dict(parser[s]) for s in DEFAULTS}, source)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} does not exist")
        return cls.from_text(p.read_text(), str(p))

    @classmethod
    def default(cls) -> "ExperimentConfig":
        return cls.from_text("")

    def get(self, section: str, key: str) -> str:
        return self.sections[section][key]

    def num(self, section: str, key: str) -> float:
        try:
            return float(Fraction(self.get(section, key)))
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"[{section}] {key} is not a number") from exc

    @property
    def seed(self) -> int:
        return int(self.num("run", "seed"))

    @property
    def checks(self) -> tuple:
        return tuple(c.strip() for c in self.get("run", "checks").split(",") if c.strip())

    def with_overrides(self, **kv) -> "ExperimentConfig":
        """Copy with "section.key" overrides, e.g. {"run.seed": "3"}."""
        sections = {s: dict(v) for s, v in self.sections.items()}
        for k, v in kv.items():
            sec, key = k.split(".", 1)
            sections[sec][key] = str(v)
        cfg = ExperimentConfig(sections, self.source)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        d = self.sections["domain"]
        need(d["kind"] in ("flat", "tent", "random", "file"), f"unknown domain kind {d['kind']!r}")
        if d["kind"] == "file":
            need(d["graph_file"] and Path(d["graph_file"]).exists(),
                 f"graph file {d['graph_file']!r} does not exist")
        need(self.num("domain", "dim") in (2, 3), "dim must be 2 or 3")
        need(self.num("domain", "radius") > 0, "support radius must be positive")
        need(0 < self.num("mesh", "resolution") < 1, "resolution must lie in (0, 1)")
        need(self.num("mesh", "R_trunc") >= 2 * self.num("domain", "radius"),
             "R_trunc must be at least twice the support radius")
        need(self.num("mesh", "growth") >= 1, "growth must be at least 1")
        need(self.num("mesh", "pole_height") > 0, "pole must lie above the boundary")
        need(self.num("mesh", "n_walks") > 0, "walk counts must be positive")
        need(all(lv >= 0 for lv in _ints(self.get("mesh", "levels"))), "levels must be >= 0")
        need(self.num("harmonic", "oracle_walks") > 0, "walk counts must be positive")
        eps = self.num("omega", "epsilon")
        need(0 < eps < 1, f"epsilon must lie in (0, 1), got {eps}")
        need(self.num("omega", "tol") > 0 and self.num("omega", "pi_tol") > 0,
             "tolerances must be positive")
        a, b = _floats(self.get("omega", "segment"))
        need(0 < a < b <= 1, "segment must satisfy 0 < a < b <= 1")
        need(all(0 < y for y in _floats(self.get("kernels", "heights"))), "heights must be positive")
        need(self.num("variation", "y_anchor") > 1, "y_anchor must exceed 1")
        need(1 <= self.num("variation", "y_min_exp") <= 12, "y_min_exp must lie in [1, 12]")
        need(self.sections["field"]["kind"] in ("pole", "hat", "constant"), "unknown field kind")
        unknown = set(self.checks) - set(CHECK_ORDER)
        need(not unknown, f"unknown checks {sorted(unknown)}")
        need(self.seed >= 0, "seed must be nonnegative")

    def mesh_spec(self) -> ex.MeshSpec:
        dim = int(self.num("domain", "dim"))
        return ex.MeshSpec(resolution=self.num("mesh", "resolution"),
                           R_trunc=self.num("mesh", "R_trunc"), growth=self.num("mesh", "growth"),
                           fine_radius=self.num("mesh", "fine_radius"),
                           eval_radius=self.num("mesh", "eval_radius"),
                           pole=(0.0,) * (dim - 1) + (self.num("mesh", "pole_height"),),
                           n_walks=int(self.num("mesh", "n_walks")), seed=self.seed,
                           shell=self.num("mesh", "shell"))

    def to_text(self) -> str:
        parser = configparser.ConfigParser()
        parser.optionxform = str
        parser.read_dict(self.sections)
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.sections, sort_keys=True).encode()).hexdigest()


def check_kwargs(cfg: ExperimentConfig, name: str) -> dict:
    """Arguments of each check, all taken from the config."""
    spec = cfg.mesh_spec()
    seed = cfg.seed
    limits = cfg.get("run", "time_limits").lower() in ("1", "true", "yes")
    no_limit = math.inf
    eps, tol = cfg.num("omega", "epsilon"), cfg.num("omega", "tol")
    field = cfg.get("field", "kind")
    if name == "partitions":
        return {"seed": seed, "time_max": 30.0 if limits else no_limit}
    if name == "oracle":
        return {"n_walks": int(cfg.num("harmonic", "oracle_walks")), "seed": seed,
                "resolution": cfg.num("harmonic", "oracle_resolution"),
                "shell": cfg.num("mesh", "shell"), "z_limit": cfg.num("harmonic", "z_limit"),
                "ks_max": cfg.num("harmonic", "ks_max"),
                "time_max": cfg.num("harmonic", "time_max") if limits else no_limit}
    if name == "identities":
        return {"base": spec, "levels": _ints(cfg.get("mesh", "levels")),
                "heights": _floats(cfg.get("kernels", "heights")),
                "tol": cfg.num("kernels", "identity_tol"),
                "min_order": cfg.num("kernels", "min_order")}
    a, b = (Fraction(t.strip()) for t in cfg.get("omega", "segment").split(","))
    if name == "pi_convergence":
        return {"spec": spec, "epsilon": eps, "segment": (a, b), "tol": cfg.num("omega", "pi_tol"),
                "n_max": int(cfg.num("omega", "n_max")), "field": field,
                "time_max": 300.0 if limits else no_limit}
    if name == "omega":
        return {"spec": spec, "epsilon": eps, "tol": tol, "field": field}
    if name == "phi":
        return {"spec": spec, "epsilon": eps, "tol": tol, "field": field,
                "band": cfg.num("omega", "phi_band")}
    if name == "ode":
        return {"base": spec, "epsilon": eps, "tols": (tol, tol / 2), "field": field,
                "max_residual": cfg.num("omega", "ode_residual")}
    y_anchor = cfg.num("variation", "y_anchor")
    if name == "bourgain":
        curved = replace(spec, resolution=cfg.num("variation", "curved_resolution"),
                          R_trunc=cfg.num("variation", "curved_R_trunc"))
        return {"flat_spec": spec, "tent_spec": curved,
                "centers": _floats(cfg.get("variation", "centers")),
                "radii": _floats(cfg.get("variation", "bourgain_radii")), "y_anchor": y_anchor,
                "delta": 2.0 ** -cfg.num("variation", "y_min_exp"),
                "n_walks": int(cfg.num("variation", "n_walks")), "seed": seed}
    if name == "scaling":
        return {"spec": spec, "epsilon": eps, "tol": tol, "y_anchor": y_anchor,
                "y_min_exp": int(cfg.num("variation", "y_min_exp")),
                "radii": tuple(2.0 ** -k for k in _ints(cfg.get("variation", "scaling_radii_exp"))),
                "field": cfg.get("field", "variation_kind"),
                "time_max": 600.0 if limits else no_limit}
    raise ConfigError(f"unknown check {name!r}")


# ------------------------------------------------------------------ reports

def _plain(x):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, Fraction):
        return str(x)
    if hasattr(x, "item") and not isinstance(x, (str, bytes)):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, (bool, int, float, str)) or x is None:
        return x
    return str(x)


@dataclass
class RunReport:
    config_hash: str
    seed: int
    checks: list                          # CheckResult in run order
    config_text: str = ""
    timings: dict = dc_field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed and c.error is None for c in self.checks)

    def to_dict(self) -> dict:
        """Deterministic content; runtimes live in ``timings``."""
        return _plain({"config_hash": self.config_hash, "seed": self.seed,
                       "passed": self.passed, "checks": [c.to_dict() for c in self.checks]})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def table(self) -> str:
        rows = [("check", "status", "runtime_s", "summary")]
        for c in self.checks:
            status = "ERROR" if c.error else ("PASS" if c.passed else "FAIL")
            summary = c.error or ", ".join(
                f"{k}={ex._fmt(v)}" for k, v in c.measured.items()
                if isinstance(v, (int, float, bool)))
            rows.append((c.name, status, f"{self.timings.get(c.name, c.runtime):.1f}", summary))
        widths = [max(len(r[i]) for r in rows) for i in range(3)]
        lines = ["  ".join(r[i].ljust(widths[i]) for i in range(3)) + "  " + r[3] for r in rows]
        lines.append(f"config {self.config_hash[:12]}  seed {self.seed}  "
                     f"{'ALL PASS' if self.passed else 'FAILURES'}")
        return "\n".join(lines) + "\n"


def run(cfg: ExperimentConfig, cache_dir=None, log=None) -> RunReport:
    """Run the enabled checks in pipeline order.

    Failed checks are recorded and the run continues; a library error stops
    the run, and the remaining enabled checks are recorded as skipped.
    """
    cfg.validate()
    ex.set_cache_dir(cache_dir)
    enabled = [c for c in CHECK_ORDER if c in cfg.checks]
    results, timings, halted = [], {}, None
    try:
        for name in enabled:
            if halted:
                results.append(ex.CheckResult(name, False, {}, {}, error=f"skipped after {halted}"))
                continue
            t0 = time.perf_counter()
            try:
                res = ex.CHECKS[name](**check_kwargs(cfg, name))
            except RadvarError as exc:
                halted = f"{type(exc).__name__} in {name}"
                res = ex.CheckResult(name, False, {}, {}, error=f"{type(exc).__name__}: {exc}")
            res.runtime = time.perf_counter() - t0
            timings[name] = res.runtime
            results.append(res)
            if log:
                log(res.line() if res.error is None else f"[ERROR] {name}: {res.error}")
    finally:
        ex.set_cache_dir(None)
    return RunReport(cfg.digest(), cfg.seed, results, cfg.to_text(), timings)


def _write_csv(path: Path, rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in _plain(list(row))])


def read_csv(path) -> list:
    """Rows of a report CSV; numeric cells come back as int or float."""
    def parse(cell: str):
        for conv in (int, float):
            try:
                return conv(cell)
            except ValueError:
                pass
        return cell

    with Path(path).open(newline="") as fh:
        return [[parse(c) for c in row] for row in csv.reader(fh)]


def emit_report(report: RunReport, out_dir, formats=("json", "text", "csv")) -> list:
    """Write report.json, report.txt, timings.json and one CSV per series."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in formats:
        p = out / "report.json"
        p.write_text(report.to_json() + "\n")
        t = out / "timings.json"
        t.write_text(json.dumps({k: round(v, 3) for k, v in report.timings.items()}, indent=2) + "\n")
        c = out / "config.ini"
        c.write_text(report.config_text)
        written += [p, t, c]
    if "text" in formats:
        p = out / "report.txt"
        p.write_text(report.table())
        written.append(p)
    if "csv" in formats:
        for check in report.checks:
            for name, rows in check.series.items():
                p = out / f"{name}.csv"
                _write_csv(p, rows)
                written.append(p)
    return written


def load_report(path) -> dict:
    return json.loads(Path(path).read_text())


def render_table(data: dict, timings: dict | None = None) -> str:
    """Text table from a saved report.json."""
    timings = timings or {}
    checks = [ex.CheckResult(c["name"], c["passed"], c["measured"], c["tolerances"],
                             error=c.get("error"), runtime=timings.get(c["name"], 0.0))
              for c in data["checks"]]
    return RunReport(data["config_hash"], data["seed"], checks, timings=timings).table()
