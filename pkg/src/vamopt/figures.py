"""Figure rendering for the CLI report paths.

Every subcommand that emits a CSV can also render a matching PNG next to
it. Rendering is deliberately plain: fixed figure size and dpi, no
timestamps, so reruns produce identical files.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_FIGSIZE = (7.0, 4.2)
_DPI = 120


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def rate_curve_figure(curves, path):
    """Per-trigger and total message rates against the sampling rate.

    curves: list of (label, RateCurve).
    """
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.6), sharex=True)
    comps = [("lambda_delta", "position rate [msg/s]"),
             ("lambda_sigma", "speed rate [msg/s]"),
             ("lambda_theta", "orientation rate [msg/s]")]
    for ax, (comp, ylabel) in zip(axes, comps):
        for label, curve in curves:
            xs = [e.omega for e in curve.entries]
            ys = [getattr(e, comp) for e in curve.entries]
            style = "-o" if curve.provenance == "analytic" else "--s"
            ax.plot(xs, ys, style, ms=3, label=label)
        ax.set_xscale("log")
        ax.set_xlabel(r"sampling rate $\omega$ [Hz]")
        ax.set_ylabel(ylabel)
        ax.grid(True, alpha=0.3)
    axes[0].legend(fontsize=8)
    _save(fig, path)


def validation_figure(table, path):
    """Analytic vs empirical rates with 2-SE bands per trigger class."""
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.6), sharex=True)
    for ax, cls in zip(axes, ("position", "speed", "orientation")):
        xs = table.omegas
        ax.plot(xs, table.analytic[cls], "-o", ms=3, label="analytic")
        mean = table.empirical_mean[cls]
        se = table.empirical_se[cls]
        ax.errorbar(xs, mean, yerr=[2 * s for s in se], fmt="--s", ms=3,
                    capsize=2, label="simulated")
        ax.set_xscale("log")
        ax.set_title(cls)
        ax.set_xlabel(r"$\omega$ [Hz]")
        ax.set_ylabel("rate [msg/s]")
        ax.grid(True, alpha=0.3)
    axes[0].legend(fontsize=8)
    _save(fig, path)


def pdr_figure(rows, path, x_key="big_lambda"):
    """Fixed-point and Monte Carlo delivery ratio along the sweep.

    rows: dicts with keys big_lambda, n, pdr and optionally mc_pdr, mc_ci.
    """
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    xs = [r[x_key] for r in rows]
    ax.plot(xs, [r["pdr"] for r in rows], "-o", ms=3, label="fixed point")
    if any("mc_pdr" in r and r["mc_pdr"] is not None for r in rows):
        ax.errorbar(xs, [r.get("mc_pdr") for r in rows],
                    yerr=[r.get("mc_ci", 0.0) or 0.0 for r in rows],
                    fmt="--s", ms=3, capsize=2, label="Monte Carlo")
    ax.set_xlabel("aggregate rate [msg/s]" if x_key == "big_lambda" else "stations")
    ax.set_ylabel("delivery ratio")
    ax.set_ylim(0.0, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    _save(fig, path)


def pipg_figure(curves, path):
    """Expected inter-packet gap against the per-pedestrian rate.

    curves: list of (label, PipgCurve).
    """
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    for label, curve in curves:
        xs = [e.lambda_p for e in curve.entries]
        ys = [e.expected_pipg for e in curve.entries]
        ax.plot(xs, ys, label=label)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(r"pedestrian rate $\lambda$ [msg/s]")
    ax.set_ylabel("expected gap [s]")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    _save(fig, path)


def optimize_figure(rows, path):
    """Chosen sampling rate and gap improvement per scenario.

    rows: dicts with n_p, n_b, n_c, omega_star, pipg_at_star,
    pipg_at_10hz.
    """
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.5, 3.8))
    labels = [f"{r['n_p']}-{r['n_b']}-{r['n_c']}" for r in rows]
    xs = range(len(rows))
    ax1.bar(xs, [r["omega_star"] for r in rows], color="#4878a8")
    ax1.set_xticks(list(xs), labels, rotation=30, ha="right", fontsize=8)
    ax1.set_ylabel(r"$\omega^\star$ [Hz]")
    ax1.grid(True, axis="y", alpha=0.3)
    ax2.plot(xs, [r["pipg_at_star"] for r in rows], "-o", ms=4,
             label=r"at $\omega^\star$")
    ax2.plot(xs, [r["pipg_at_10hz"] for r in rows], "--s", ms=4,
             label="at 10 Hz")
    ax2.set_xticks(list(xs), labels, rotation=30, ha="right", fontsize=8)
    ax2.set_yscale("log")
    ax2.set_ylabel("expected gap [s]")
    ax2.grid(True, alpha=0.3)
    ax2.legend(fontsize=8)
    _save(fig, path)
