"""Write study results to disk: CSV tables, SVG plots and a JSON-lines summary.

Outputs go to ``<outdir>/<kind>-<config digest>/`` so that reruns of the same
configuration overwrite the same files.  CSVs and SVGs are byte-stable for a
fixed configuration (timing columns excepted).
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import replace

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .config import ExperimentConfig, dumps  # noqa: E402
from .grid import write_field_binary  # noqa: E402

_SVG_META = {"Date": None, "Creator": None}


def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, int)) and not isinstance(v, float):
        return str(int(v))
    v = float(v)
    return "nan" if math.isnan(v) else f"{v:.12g}"


def write_table(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _save(fig, path):
    plt.rcParams["svg.hashsalt"] = "wkam"
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def _plot_rate(data, path, xlabel="epsilon"):
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(data["eps"], data["error"], "o-", label="sup error")
    slope, icpt, r2 = data.get("fit", (math.nan,) * 3)
    if not math.isnan(slope):
        xs = data["eps"]
        ax.loglog(xs, [math.exp(icpt) * x ** slope for x in xs], "--",
                  label=f"fit slope {slope:.3f}, R2 {r2:.4f}")
    if data.get("bound"):
        beta, expo = data["bound"]
        xs = data["eps"]
        ax.loglog(xs, [beta * x ** expo for x in xs], ":", label=f"{beta:.3g} eps^{expo:.3g}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("error")
    ax.set_title(data.get("title", ""))
    ax.legend()
    _save(fig, path)


def _plot_profile(data, path):
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    a1.plot(data["x"], data["v"])
    a1.set_ylabel("v")
    a2.plot(data["x"], data["p"], label="c + v_x")
    if "separatrix" in data:
        s = data["separatrix"]
        a2.plot(data["x"], s, "k:", label="separatrix")
        a2.plot(data["x"], [-v for v in s], "k:")
    a2.set_xlabel("x")
    a2.set_ylabel("momentum")
    a2.legend()
    a1.set_title(data.get("title", ""))
    _save(fig, path)


def _plot_phase(data, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    for xs, ps in data["curves"]:
        ax.plot(xs, ps, lw=0.8)
    ax.plot(data["points"], [0.0] * len(data["points"]), "ko")
    ax.set_xlabel("x")
    ax.set_ylabel("p")
    ax.set_title(data.get("title", ""))
    _save(fig, path)


def _plot(name, data, path):
    if name.startswith("rate"):
        _plot_rate(data, path)
    elif name.startswith("profile"):
        _plot_profile(data, path)
    elif name.startswith("phase"):
        _plot_phase(data, path)
    else:
        raise ValueError(f"no plot style for {name!r}")


def output_dir(cfg: ExperimentConfig, outdir=None):
    base = outdir if outdir is not None else cfg.out
    return os.path.join(base, f"{cfg.kind}-{cfg.digest()}")


def render_report(result, cfg: ExperimentConfig, outdir=None):
    """Write every table, plot and field of ``result``; returns the written paths."""
    d = output_dir(cfg, outdir)
    try:
        os.makedirs(d, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {d}: {exc}") from exc
    written = []

    def path(name):
        p = os.path.join(d, name)
        written.append(p)
        return p

    try:
        with open(path("config.txt"), "w") as fh:
            # canonical form: the location and thread count never change results
            fh.write(dumps(replace(cfg, out=ExperimentConfig.out, threads=None)))
        for name, (cols, rows) in sorted(result.tables.items()):
            write_table(path(f"{name}.csv"), cols, rows)
        for name, data in sorted(result.plots.items()):
            _plot(name, data, path(f"{name}.svg"))
        for name, f in sorted(result.fields.items()):
            write_field_binary(path(f"{name}.bin"), f)
        with open(path("summary.ndjson"), "w") as fh:
            for chk in result.checks:
                fh.write(json.dumps(chk.as_dict(), sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"writing report to {d} failed: {exc}") from exc
    return written
