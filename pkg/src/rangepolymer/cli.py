"""Configuration-driven front end.

Every experiment resolves to one JSON config (file plus flag overrides,
schema-validated, unknown keys rejected). A run fans replicas out over worker
threads, then a single writer emits the artifacts: CSV tables (UTF-8, LF,
header row), a manifest echoing the resolved config with its hash, a
git-describe-style build id and the per-replica seeds, and SVG plots that are
pure functions of their input bytes. Exit codes: 0 success, 1 criterion
failure, 2 config error.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import jsonschema
import numpy as np

from . import __version__
from .env import Delta0, Gaussian, Stable, TwoPoint, Uniform, generate_environment
from .polymer import (PolymerParams, endpoint_marginal, expansion_report,
                      halfline_marginal, homogeneous_fluctuations,
                      local_limit_probe, log_partition)
from .rangelaw import FullWindow, build_table, range_law_enumeration
from .rng import replica_seed
from .varprob import (build_coupled_system, c_h_of, simplified_drift,
                      solve_chernoff, solve_w2_sweep)
from .stochproc import sample_two_sided_bm


class ConfigError(click.ClickException):
    exit_code = 2


class CriterionFailure(click.ClickException):
    exit_code = 1


# ---------------------------------------------------------------------------
# Config schema and resolution

KINDS = ("range-law", "partition", "expansion", "endpoint-law", "processes",
         "varprob", "halfline", "local-limit-probe", "stable-exponent")

_LAW_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["name"],
    "properties": {
        "name": {"enum": ["gaussian", "two_point", "uniform", "delta0", "stable"]},
        "sigma": {"type": "number", "exclusiveMinimum": 0},
        "a": {"type": "number"},
        "b": {"type": "number"},
        "half": {"type": "number", "exclusiveMinimum": 0},
        "alpha": {"type": "number", "exclusiveMinimum": 1, "exclusiveMaximum": 2},
        "p": {"type": "number", "minimum": 0, "maximum": 1},
        "q": {"type": "number", "minimum": 0, "maximum": 1},
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": list(KINDS)},
        "n": {"type": "array", "minItems": 1,
              "items": {"type": "integer", "minimum": 2}},
        "h": {"type": "number", "exclusiveMinimum": 0},
        "beta": {"type": "number", "minimum": 0},
        "law": _LAW_SCHEMA,
        "K": {"type": "number", "exclusiveMinimum": 1},
        "grids": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
        "seed": {"type": "integer", "minimum": 0},
        "replicas": {"type": "integer", "minimum": 1},
        "out": {"type": "string"},
        "samples": {"type": "integer", "minimum": 100},
        "window": {"type": "array", "minItems": 2, "maxItems": 2,
                   "items": {"type": "integer"}},
        "method": {"enum": ["spectral", "dp"]},
        "oracle": {"enum": ["none", "enumerate", "dp"]},
        "tolerances": {"type": "object",
                       "additionalProperties": {"type": "number"}},
    },
}

_BASE = {"h": 1.0, "beta": 1.0, "law": {"name": "gaussian"}, "seed": 0,
         "replicas": 4, "K": 2.0}

_KIND_DEFAULTS = {
    "range-law": {"n": [12], "beta": 0.0, "replicas": 1,
                  "method": "spectral", "oracle": "none"},
    "partition": {"n": [1000]},
    "expansion": {"n": [1000, 10000]},
    "endpoint-law": {"n": [10000], "beta": 0.0, "replicas": 1},
    "processes": {"samples": 5000, "replicas": 1},
    "varprob": {"n": [10000], "replicas": 8},
    "halfline": {"n": [10000]},
    "local-limit-probe": {"n": [10000], "replicas": 1},
    "stable-exponent": {"n": [10000, 100000], "replicas": 50,
                        "law": {"name": "stable", "alpha": 1.5, "p": 0.5, "q": 0.5}},
}


def _load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}")


def validate_config(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "(top level)"
        raise ConfigError(f"config rejected at {where}: {exc.message}")
    return cfg


def resolve_config(kind: str, config_path, overrides: dict) -> dict:
    """Defaults of the subcommand's kind, then the file, then the flags."""
    cfg = dict(_BASE) | dict(_KIND_DEFAULTS[kind]) | {"kind": kind}
    if config_path is not None:
        file_cfg = validate_config(_load_json(config_path))
        if file_cfg["kind"] != kind:
            raise ConfigError(
                f"config kind {file_cfg['kind']!r} does not match subcommand {kind!r}")
        cfg |= file_cfg
    for key, val in overrides.items():
        if val is None:
            continue
        if key == "law":
            cfg["law"] = {"name": val}
        elif key == "alpha":
            cfg["law"] = dict(cfg.get("law", {})) | {"alpha": val}
        else:
            cfg[key] = val
    return validate_config(cfg)


def law_from_config(spec: dict):
    kinds = {"gaussian": Gaussian, "two_point": TwoPoint, "uniform": Uniform,
             "delta0": Delta0, "stable": Stable}
    params = {k: v for k, v in spec.items() if k != "name"}
    try:
        return kinds[spec["name"]](**params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"law {spec!r}: {exc}")


def _parse_ns(text: str) -> list[int]:
    out = []
    for tok in text.split(","):
        try:
            v = float(tok)
        except ValueError:
            raise ConfigError(f"bad n value {tok!r}")
        if v != int(v) or v < 2:
            raise ConfigError(f"bad n value {tok!r}")
        out.append(int(v))
    return out


def thread_count(flag: int | None) -> int:
    if flag is not None:
        n = flag
    else:
        raw = os.environ.get("RPL_THREADS", "1")
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(f"RPL_THREADS={raw!r} is not an integer")
    if n < 1:
        raise ConfigError("thread count must be >= 1")
    return n


# ---------------------------------------------------------------------------
# Deterministic artifact plumbing


def build_id() -> str:
    """Content hash of the installed sources, shaped like git describe."""
    digest = hashlib.sha256()
    root = Path(__file__).parent
    for p in sorted(root.glob("*.py")) + sorted(root.glob("*.json")):
        digest.update(p.name.encode())
        digest.update(p.read_bytes())
    return f"v{__version__}-g{digest.hexdigest()[:7]}"


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return v
    if isinstance(v, (int, np.integer)):
        return int(v)
    return v


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_manifest(out_dir: Path, command: str, cfg: dict, seeds: list[int],
                   artifacts: list[Path], extra: dict | None = None) -> Path:
    doc = {
        "command": command,
        "config": cfg,
        "config_sha256": config_hash(cfg),
        "build_id": build_id(),
        "package_version": __version__,
        "replica_seeds": seeds,
        "artifacts": {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
                      for p in artifacts},
    }
    if extra:
        doc["results"] = extra
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path


def _out_dir(cfg: dict, flag) -> Path:
    out = Path(flag) if flag is not None else Path(cfg.get("out", f"runs/{cfg['kind']}"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def map_replicas(fn, count: int, threads: int) -> list:
    """Ordered results; thread fan-out never touches the output files."""
    if threads <= 1 or count <= 1:
        return [fn(r) for r in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, range(count)))


def env_window(n: int, h: float, law) -> tuple[int, int]:
    # Heavy-tailed fields shift the optimal shell far from T*, so give the
    # window optimizer head room; 2 c_h n^(1/3) is the light-tail reach.
    mult = 16.0 if isinstance(law, Stable) else 2.0
    m = int(math.ceil(mult * c_h_of(h) * n ** (1.0 / 3.0))) + 2
    return (-m, m)


# ---------------------------------------------------------------------------
# Experiment runners (pure: config in, rows out)


def _run_range_law(cfg: dict, out: Path) -> tuple[list[Path], list[str]]:
    artifacts, failures = [], []
    tol = cfg.get("tolerances", {}).get("range_law_abs", 1e-12)
    for n in cfg["n"]:
        table = build_table(n, FullWindow(), method=cfg["method"])
        path = out / f"range_law_{n}.csv"
        table.to_csv(path)
        artifacts.append(path)
        if cfg["oracle"] == "enumerate":
            exact = range_law_enumeration(n)
            worst = max(abs(math.exp(table.logp(x, y)) - float(p))
                        for (x, y), p in exact.items())
            if worst > tol:
                failures.append(f"n={n}: spectral vs enumeration deviates by {worst:.3e}")
        elif cfg["oracle"] == "dp":
            dp = build_table(n, FullWindow(), method="dp")
            worst = max(abs(math.exp(table.logp(x, y)) - math.exp(lp))
                        for x, y, lp in dp.items())
            if worst > tol:
                failures.append(f"n={n}: spectral vs dp deviates by {worst:.3e}")
    return artifacts, failures


def _run_partition(cfg: dict, out: Path, seeds: list[int], threads: int):
    ns, h, beta = cfg["n"], cfg["h"], cfg["beta"]
    law = law_from_config(cfg["law"])
    stable_kind = cfg["kind"] == "stable-exponent"

    def work(r: int):
        rows = []
        for n in ns:
            env = None
            if beta > 0.0:
                env = generate_environment(law, env_window(n, h, law), seeds[r])
            lz = log_partition(env, PolymerParams(n=n, h=h, beta=beta))
            centered = lz + 1.5 * h * c_h_of(h) * n ** (1.0 / 3.0)
            rows.append((n, r, lz, centered))
        return rows

    results = map_replicas(work, len(seeds), threads)
    rows = sorted((row for rep in results for row in rep), key=lambda t: t[:2])
    name = "stable_exponent.csv" if stable_kind else "partition.csv"
    write_csv(out / name, ["n", "replica", "logZ", "centered"], rows)
    extra = {}
    if stable_kind and len(ns) > 1:
        iqrs = []
        for n in ns:
            vals = np.array([row[3] for row in rows if row[0] == n])
            iqrs.append(float(np.percentile(vals, 75) - np.percentile(vals, 25)))
        slope = float(np.polyfit(np.log(ns), np.log(iqrs), 1)[0])
        extra = {"iqr": dict(zip(map(str, ns), iqrs)), "iqr_log_slope": slope}
    return [out / name], extra


def _run_expansion(cfg: dict, out: Path, seeds: list[int], threads: int):
    ns, h, beta = sorted(cfg["n"]), cfg["h"], cfg["beta"]
    params = PolymerParams(n=ns[0], h=h, beta=beta)

    def work(r: int):
        if beta > 0.0:
            systems = {n: build_coupled_system(n, seeds[r], h=h) for n in ns}
            fam = {n: s.environment() for n, s in systems.items()}
            refs = {n: {"sup": s.x_at_ustar,
                        "w2": solve_w2_sweep(s, beta, h=h, k_start=cfg["K"]).value}
                    for n, s in systems.items()}
            rep = expansion_report(fam, params, limit_refs=refs, order=3)
        else:
            rep = expansion_report({n: None for n in ns}, params, order=2)
        return [(row.n, r, row.log_z, row.residual2, row.residual3,
                 row.ref_sup, row.ref_w2) for row in rep.rows]

    results = map_replicas(work, len(seeds), threads)
    rows = sorted((row for rep in results for row in rep), key=lambda t: t[:2])
    path = out / "expansion.csv"
    write_csv(path, ["n", "replica", "logZ", "residual2", "residual3",
                     "ref_sup", "ref_w2"], rows)
    return [path], {}


def _run_endpoint_law(cfg: dict, out: Path):
    if cfg["beta"] != 0.0:
        raise ConfigError("endpoint-law is the disorder-free law; set beta = 0")
    ns, h = cfg["n"], cfg["h"]
    rows, hist_rows = [], []
    for n in ns:
        st = homogeneous_fluctuations(PolymerParams(n=n, h=h, beta=0.0))
        rows.append((n, st.t_star, st.a_n, st.log_z, st.ks_normal,
                     st.ks_centered, st.mean_shift, st.sine_tv))
        if n == max(ns):
            xs, px = st.marginal.m_minus_pmf()
            v = np.abs(xs.astype(float)) / st.t_star
            keep = v <= 1.0
            for vi, pi in zip(v[keep], px[keep]):
                hist_rows.append((vi, pi * st.t_star,
                                  0.5 * math.pi * math.sin(math.pi * vi)))
    p1 = out / "endpoint_law.csv"
    write_csv(p1, ["n", "t_star", "a_n", "logZ", "ks_normal", "ks_centered",
                   "mean_shift", "sine_tv"], rows)
    p2 = out / "endpoint_hist.csv"
    write_csv(p2, ["v", "density", "sine"], hist_rows)
    return [p1, p2], {}


def _run_processes(cfg: dict, out: Path, seeds: list[int]):
    from . import acceptance
    stats = acceptance.process_statistics(samples=cfg["samples"], seed=seeds[0])
    path = out / "processes.csv"
    write_csv(path, ["check", "statistic", "value", "reference"],
              [(s.check, s.statistic, s.value, s.reference) for s in stats])
    return [path], {}


def _run_varprob(cfg: dict, out: Path, seeds: list[int], threads: int):
    if cfg["beta"] <= 0.0:
        raise ConfigError("varprob requires beta > 0")
    ns, h, beta = sorted(cfg["n"]), cfg["h"], cfg["beta"]
    drift = simplified_drift(h, beta)
    cgrid = 1e-3 if not cfg.get("grids") else float(cfg["grids"][0])

    def work(r: int):
        rows = []
        for n in ns:
            s = build_coupled_system(n, seeds[r], h=h)
            w2 = solve_w2_sweep(s, beta, h=h, k_start=cfg["K"])
            u0, v0 = w2.argmax
            rows.append((n, r, s.u_star, s.x_at_ustar, s.delta0, s.resamples,
                         w2.value, u0, v0, w2.stabilized))
        tgrid = np.linspace(-16.0, 16.0, int(round(32.0 / cgrid)) + 1)
        w = sample_two_sided_bm(tgrid, seed=replica_seed(seeds[r], 1))
        ch = solve_chernoff(w, drift, grid=cgrid)
        return rows, (r, ch.argmax, ch.value, ch.stabilized), (w2, ch)

    results = map_replicas(work, len(seeds), threads)
    rows = sorted((row for rep, _, _ in results for row in rep), key=lambda t: t[:2])
    p1 = out / "varprob.csv"
    write_csv(p1, ["n", "replica", "u_star", "sup_x", "delta0", "resamples",
                   "w2", "w2_u", "w2_v", "w2_stabilized"], rows)
    p2 = out / "chernoff.csv"
    write_csv(p2, ["replica", "s_star", "value", "stabilized"],
              [c for _, c, _ in results])
    w2_0, ch_0 = results[0][2]
    p3 = out / "solutions.json"
    p3.write_text(json.dumps({"w2": json.loads(w2_0.to_json()),
                              "chernoff": json.loads(ch_0.to_json())},
                             indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return [p1, p2, p3], {}


def _run_halfline(cfg: dict, out: Path, seeds: list[int], threads: int):
    ns, h, beta = sorted(cfg["n"]), cfg["h"], cfg["beta"]
    law = law_from_config(cfg["law"])

    def work(r: int):
        rows, pmf = [], None
        for n in ns:
            env = None
            if beta > 0.0:
                env = generate_environment(law, env_window(n, h, law), seeds[r])
            hm = halfline_marginal(env, PolymerParams(n=n, h=h, beta=beta))
            rows.append((n, r, hm.log_z, hm.mode(), hm.mean(),
                         hm.quantile(0.1), hm.quantile(0.5), hm.quantile(0.9)))
            if n == ns[-1] and r == 0:
                pmf = hm
        return rows, pmf

    results = map_replicas(work, len(seeds), threads)
    rows = sorted((row for rep, _ in results for row in rep), key=lambda t: t[:2])
    p1 = out / "halfline.csv"
    write_csv(p1, ["n", "replica", "logZ", "mode", "mean", "q10", "q50", "q90"], rows)
    p2 = out / "halfline_pmf.csv"
    results[0][1].to_csv(p2)
    return [p1, p2], {}


def _run_probe(cfg: dict, out: Path, seeds: list[int], threads: int):
    ns, h, beta = sorted(cfg["n"]), cfg["h"], cfg["beta"]
    law = law_from_config(cfg["law"])

    def work(r: int):
        rows, details = [], {}
        for n in ns:
            env = None
            if beta > 0.0:
                env = generate_environment(law, env_window(n, h, law), seeds[r])
            probe = local_limit_probe(env, PolymerParams(n=n, h=h, beta=beta))
            rows.append((n, r, probe.t_hat, probe.s_star_n, probe.correlation,
                         probe.window_mass, probe.theta))
            if r == 0:
                details[n] = probe
        return rows, details

    results = map_replicas(work, len(seeds), threads)
    rows = sorted((row for rep, _ in results for row in rep), key=lambda t: t[:2])
    p1 = out / "probe.csv"
    write_csv(p1, ["n", "replica", "t_hat", "s_star_n", "correlation",
                   "window_mass", "theta"], rows)
    artifacts = [p1]
    for n, probe in sorted(results[0][1].items()):
        path = out / f"probe_{n}.csv"
        probe.to_csv(path)
        artifacts.append(path)
    corr = {str(n): float(p.correlation) for n, p in results[0][1].items()}
    return artifacts, {"correlations": corr}


# ---------------------------------------------------------------------------
# SVG plotting: a pure function of (csv bytes, plot spec)


def _parse_csv(data: bytes) -> tuple[list[str], list[list[str]]]:
    text = data.decode("utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        return [], []
    return rows[0], rows[1:]


def render_svg(data: bytes, spec: dict) -> str:
    """Line, scatter, or histogram SVG for the named CSV columns.

    Deterministic: ids are salted with a fixed string and no date metadata is
    written, so the output depends only on (data, spec). An empty CSV yields
    empty axes.
    """
    import matplotlib
    matplotlib.use("Agg")
    from matplotlib.figure import Figure

    header, rows = _parse_csv(data)
    x_col, y_cols = spec["x"], spec["y"]
    missing = [c for c in [x_col, *y_cols] if rows and c not in header]
    if missing:
        raise KeyError(f"columns {missing} not in CSV header {header}")

    with matplotlib.rc_context({"svg.hashsalt": "rangepolymer"}):
        fig = Figure(figsize=(6.4, 4.8))
        ax = fig.add_subplot()
        if rows:
            idx = {c: header.index(c) for c in [x_col, *y_cols]}
            x = np.array([float(r[idx[x_col]]) for r in rows])
            for col in y_cols:
                y = np.array([float(r[idx[col]]) for r in rows])
                if spec.get("kind") == "scatter":
                    ax.plot(x, y, "o", markersize=3, label=col)
                elif spec.get("kind") == "hist":
                    width = float(np.min(np.diff(np.unique(x)))) if x.size > 1 else 1.0
                    ax.bar(x, y, width=width, label=col)
                else:
                    ax.plot(x, y, label=col)
            if spec.get("overlay") == "sine":
                vv = np.linspace(0.0, 1.0, 257)
                ax.plot(vv, 0.5 * np.pi * np.sin(np.pi * vv),
                        color="black", label="(pi/2) sin(pi v)")
            if len(y_cols) > 1 or spec.get("overlay"):
                ax.legend()
        if spec.get("logx"):
            ax.set_xscale("log")
        if spec.get("logy"):
            ax.set_yscale("log")
        ax.set_xlabel(x_col)
        ax.set_ylabel(", ".join(y_cols))
        if spec.get("title"):
            ax.set_title(spec["title"])
        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue().decode("utf-8")


# ---------------------------------------------------------------------------
# Command line surface


def _common(fn):
    for opt in (
        click.option("--config", "config_path",
                     type=click.Path(exists=True, dir_okay=False), default=None,
                     help="JSON experiment config."),
        click.option("--seed", type=click.IntRange(min=0), default=None,
                     help="Master seed (overrides config)."),
        click.option("--out", "out_flag", type=click.Path(file_okay=False),
                     default=None, help="Output directory."),
        click.option("--threads", type=int, default=None,
                     help="Worker threads (RPL_THREADS as fallback)."),
    ):
        fn = opt(fn)
    return fn


@click.group()
@click.version_option(version=__version__)
def main():
    """Range-penalized polymer laboratory."""


def _dispatch(kind: str, config_path, overrides: dict, out_flag, threads_flag):
    cfg = resolve_config(kind, config_path, overrides)
    threads = thread_count(threads_flag)
    out = _out_dir(cfg, out_flag)
    seeds = [replica_seed(cfg["seed"], r) for r in range(cfg["replicas"])]

    if kind == "range-law":
        artifacts, failures = _run_range_law(cfg, out)
        extra = {"oracle_failures": failures} if failures else {}
    elif kind in ("partition", "stable-exponent"):
        artifacts, extra = _run_partition(cfg, out, seeds, threads)
        failures = []
    elif kind == "expansion":
        artifacts, extra = _run_expansion(cfg, out, seeds, threads)
        failures = []
    elif kind == "endpoint-law":
        artifacts, extra = _run_endpoint_law(cfg, out)
        failures = []
    elif kind == "processes":
        artifacts, extra = _run_processes(cfg, out, seeds)
        failures = []
    elif kind == "varprob":
        artifacts, extra = _run_varprob(cfg, out, seeds, threads)
        failures = []
    elif kind == "halfline":
        artifacts, extra = _run_halfline(cfg, out, seeds, threads)
        failures = []
    elif kind == "local-limit-probe":
        artifacts, extra = _run_probe(cfg, out, seeds, threads)
        failures = []
    else:  # pragma: no cover - KINDS is closed
        raise ConfigError(f"unhandled kind {kind!r}")

    manifest = write_manifest(out, kind, cfg, seeds, artifacts, extra)
    for p in artifacts + [manifest]:
        click.echo(f"wrote {p}")
    if failures:
        raise CriterionFailure("; ".join(failures))


def _experiment_command(name: str, extra_opts=()):
    def register(fn):
        cmd = fn
        for opt in extra_opts:
            cmd = opt(cmd)
        cmd = _common(cmd)
        return main.command(name)(cmd)
    return register


_N_OPT = click.option("--n", "n_spec", default=None,
                      help="Comma list of walk lengths, e.g. 1e4,1e5.")
_H_OPT = click.option("--h", type=float, default=None)
_BETA_OPT = click.option("--beta", type=float, default=None)
_REPL_OPT = click.option("--replicas", type=int, default=None)
_LAW_OPT = click.option("--law", type=click.Choice(
    ["gaussian", "two_point", "uniform", "delta0", "stable"]), default=None)
_ALPHA_OPT = click.option("--alpha", type=float, default=None,
                          help="Stable tail exponent.")


def _num_overrides(n_spec, seed, **kw):
    over = {"n": _parse_ns(n_spec) if n_spec else None, "seed": seed}
    over.update(kw)
    return over


@_experiment_command("range-law", (
    _N_OPT,
    click.option("--method", type=click.Choice(["spectral", "dp"]), default=None),
    click.option("--oracle", type=click.Choice(["none", "enumerate", "dp"]),
                 default=None),
))
def range_law_cmd(config_path, seed, out_flag, threads, n_spec, method, oracle):
    """Exact endpoint law of the range, with optional slow-oracle audit."""
    _dispatch("range-law", config_path,
              _num_overrides(n_spec, seed, method=method, oracle=oracle),
              out_flag, threads)


@_experiment_command("partition",
                     (_N_OPT, _H_OPT, _BETA_OPT, _REPL_OPT, _LAW_OPT, _ALPHA_OPT))
def partition_cmd(config_path, seed, out_flag, threads, n_spec, h, beta,
                  replicas, law, alpha):
    """Quenched log partition functions over seeded replicas."""
    _dispatch("partition", config_path,
              _num_overrides(n_spec, seed, h=h, beta=beta, replicas=replicas,
                             law=law, alpha=alpha),
              out_flag, threads)


@main.command("stable-exponent")
@_common
@click.option("--n", "n_spec", default=None)
@_H_OPT
@_BETA_OPT
@_REPL_OPT
@_ALPHA_OPT
def stable_exponent_cmd(config_path, seed, out_flag, threads, n_spec, h, beta,
                        replicas, alpha):
    """Heavy-tail fluctuation exponent: centered logZ spread across n."""
    _dispatch("stable-exponent", config_path,
              _num_overrides(n_spec, seed, h=h, beta=beta, replicas=replicas,
                             alpha=alpha),
              out_flag, threads)


@_experiment_command("expansion",
                     (_N_OPT, _H_OPT, _BETA_OPT, _REPL_OPT,
                      click.option("--K", "k_window", type=float, default=None,
                                   help="Starting window for the W2 sweep.")))
def expansion_cmd(config_path, seed, out_flag, threads, n_spec, h, beta,
                  replicas, k_window):
    """Free-energy residuals against the coupled limit references."""
    _dispatch("expansion", config_path,
              _num_overrides(n_spec, seed, h=h, beta=beta, replicas=replicas,
                             K=k_window),
              out_flag, threads)


@_experiment_command("endpoint-law", (_N_OPT, _H_OPT))
def endpoint_law_cmd(config_path, seed, out_flag, threads, n_spec, h):
    """Disorder-free endpoint fluctuations: sine law and Gaussian width."""
    _dispatch("endpoint-law", config_path, _num_overrides(n_spec, seed, h=h),
              out_flag, threads)


@_experiment_command("processes", (
    click.option("--samples", type=int, default=None),))
def processes_cmd(config_path, seed, out_flag, threads, samples):
    """Sampler diagnostics: meander, excursion, embedding, couplings."""
    _dispatch("processes", config_path, {"seed": seed, "samples": samples},
              out_flag, threads)


@_experiment_command("varprob",
                     (_N_OPT, _H_OPT, _BETA_OPT, _REPL_OPT,
                      click.option("--K", "k_window", type=float, default=None)))
def varprob_cmd(config_path, seed, out_flag, threads, n_spec, h, beta,
                replicas, k_window):
    """Coupled limit systems and their variational solutions."""
    _dispatch("varprob", config_path,
              _num_overrides(n_spec, seed, h=h, beta=beta, replicas=replicas,
                             K=k_window),
              out_flag, threads)


@_experiment_command("halfline",
                     (_N_OPT, _H_OPT, _BETA_OPT, _REPL_OPT, _LAW_OPT))
def halfline_cmd(config_path, seed, out_flag, threads, n_spec, h, beta,
                 replicas, law):
    """Half-line model: single-endpoint marginals and partition values."""
    _dispatch("halfline", config_path,
              _num_overrides(n_spec, seed, h=h, beta=beta, replicas=replicas,
                             law=law),
              out_flag, threads)


@_experiment_command("probe",
                     (_N_OPT, _H_OPT, _BETA_OPT, _REPL_OPT, _LAW_OPT))
def probe_cmd(config_path, seed, out_flag, threads, n_spec, h, beta,
              replicas, law):
    """Report-only local-limit probe of the endpoint pmf shape."""
    _dispatch("local-limit-probe", config_path,
              _num_overrides(n_spec, seed, h=h, beta=beta, replicas=replicas,
                             law=law),
              out_flag, threads)


@main.command("gen-env")
@_common
@click.option("--law", type=click.Choice(
    ["gaussian", "two_point", "uniform", "delta0", "stable"]), default="gaussian")
@_ALPHA_OPT
@click.option("--n", "n_spec", default=None,
              help="Size the window to cover this walk length.")
@_H_OPT
@click.option("--window", "window_spec", default=None,
              help="Explicit window lo:hi.")
@_REPL_OPT
def gen_env_cmd(config_path, seed, out_flag, threads, law, alpha, n_spec, h,
                window_spec, replicas):
    """Draw i.i.d. environments and store them as binary plus CSV."""
    cfg = {"law": {"name": law}, "seed": 0, "replicas": 1, "h": 1.0,
           "n": [10000]}
    if config_path is not None:
        file_cfg = validate_config(_load_json(config_path))
        cfg |= {k: file_cfg[k] for k in ("law", "seed", "replicas", "h", "n", "out",
                                         "window") if k in file_cfg}
    if law is not None:
        cfg["law"] = {"name": law}
    if alpha is not None:
        cfg["law"] = dict(cfg["law"]) | {"alpha": alpha}
    for key, val in (("seed", seed), ("replicas", replicas), ("h", h),
                     ("n", _parse_ns(n_spec) if n_spec else None)):
        if val is not None:
            cfg[key] = val
    law_obj = law_from_config(cfg["law"])
    if window_spec is not None:
        try:
            lo, hi = (int(tok) for tok in window_spec.split(":"))
        except ValueError:
            raise ConfigError(f"bad window {window_spec!r}, expected lo:hi")
        if hi < lo:
            raise ConfigError("empty window")
        window = (lo, hi)
    elif "window" in cfg:
        window = (int(cfg["window"][0]), int(cfg["window"][1]))
        if window[1] < window[0]:
            raise ConfigError("empty window")
    else:
        window = env_window(max(cfg["n"]), cfg["h"], law_obj)
    out = Path(out_flag) if out_flag is not None else Path(cfg.get("out", "runs/gen-env"))
    out.mkdir(parents=True, exist_ok=True)
    seeds = [replica_seed(cfg["seed"], r) for r in range(cfg["replicas"])]
    artifacts = []
    for r, s in enumerate(seeds):
        env = generate_environment(law_obj, window, s)
        pb, pc = out / f"env_{r}.bin", out / f"env_{r}.csv"
        env.save(pb)
        env.to_csv(pc)
        artifacts += [pb, pc]
    manifest = write_manifest(out, "gen-env",
                              {"law": cfg["law"], "window": list(window),
                               "seed": cfg["seed"], "replicas": cfg["replicas"]},
                              seeds, artifacts)
    for p in artifacts + [manifest]:
        click.echo(f"wrote {p}")


@main.command("accept")
@click.option("--criteria", "selection", default=None,
              help="Comma list of criterion numbers; default all.")
@click.option("--thresholds", "thresholds_path",
              type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON overrides merged over the versioned defaults.")
@click.option("--out", "out_flag", type=click.Path(file_okay=False), default=None)
@click.option("--threads", type=int, default=None)
def accept_cmd(selection, thresholds_path, out_flag, threads):
    """Evaluate the acceptance criteria and print PASS/FAIL per criterion."""
    from . import acceptance
    overrides = _load_json(thresholds_path) if thresholds_path else None
    if selection is not None:
        try:
            wanted = sorted({int(tok) for tok in selection.split(",")})
        except ValueError:
            raise ConfigError(f"bad criteria selection {selection!r}")
        unknown = [i for i in wanted if i not in acceptance.CRITERIA]
        if unknown:
            raise ConfigError(f"unknown criteria {unknown}")
    else:
        wanted = sorted(acceptance.CRITERIA)
    results = acceptance.run_criteria(wanted, overrides=overrides,
                                      threads=thread_count(threads))
    for res in results:
        click.echo(res.line())
    if out_flag is not None:
        out = Path(out_flag)
        out.mkdir(parents=True, exist_ok=True)
        doc = [res.as_dict() for res in results]
        (out / "acceptance.json").write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        click.echo(f"wrote {out / 'acceptance.json'}")
    if any(not res.passed and not res.report_only for res in results):
        raise CriterionFailure("acceptance criteria failed")


@main.command("plot")
@click.option("--csv", "csv_path", type=click.Path(exists=True, dir_okay=False),
              required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--x", "x_col", required=True)
@click.option("--y", "y_cols", required=True, help="Comma list of y columns.")
@click.option("--kind", type=click.Choice(["line", "scatter", "hist"]),
              default="line")
@click.option("--logx", is_flag=True)
@click.option("--logy", is_flag=True)
@click.option("--overlay", type=click.Choice(["sine"]), default=None)
@click.option("--title", default=None)
def plot_cmd(csv_path, out_path, x_col, y_cols, kind, logx, logy, overlay, title):
    """Render a CSV to SVG; byte-identical for identical inputs."""
    data = Path(csv_path).read_bytes()
    spec = {"x": x_col, "y": [c for c in y_cols.split(",") if c],
            "kind": kind, "logx": logx, "logy": logy, "overlay": overlay,
            "title": title}
    try:
        svg = render_svg(data, spec)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0]))
    out = Path(out_path)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg, encoding="utf-8")
    click.echo(f"wrote {out}")


if __name__ == "__main__":
    main()
