"""Figure rendering for the CLI report paths.

Every report command drops a PNG next to its delimited/JSON output; the
figures are diagnostic, not data carriers, so nothing downstream parses
them.
"""
from __future__ import annotations

import numpy as np

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def workspace_figure(score_map, path) -> None:
    """Heatmap of the design-score map with the best design marked."""
    fig, ax = plt.subplots(figsize=(6.5, 5.5))
    t13 = score_map.theta13_values
    t35 = score_map.theta35_values
    h13 = (t13[1] - t13[0]) / 2 if len(t13) > 1 else 2.5
    h35 = (t35[1] - t35[0]) / 2 if len(t35) > 1 else 2.5
    im = ax.imshow(score_map.scores, origin="lower", aspect="auto",
                   extent=(t35[0] - h35, t35[-1] + h35, t13[0] - h13, t13[-1] + h13),
                   cmap="viridis")
    ax.plot(score_map.best_design.theta35, score_map.best_design.theta13,
            "r*", markersize=14, label="best design")
    ax.set_xlabel("theta35 [deg]")
    ax.set_ylabel("theta13 [deg]")
    ax.set_title("design score map")
    ax.legend(loc="lower right")
    fig.colorbar(im, ax=ax, label="score")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def calibration_figure(ct_result, full_result, measurements, w, path) -> None:
    """Per-measurement residual norms for the registration-only baseline
    against the joint solve, plus the observability spectrum."""
    from .calibration import residual

    idx = np.arange(len(measurements))
    ct_norms = [np.linalg.norm(residual(ct_result.gamma_star, m, w)[:3])
                for m in measurements]
    full_norms = [np.linalg.norm(residual(full_result.gamma_star, m, w)[:3])
                  for m in measurements]

    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    axes[0].bar(idx - 0.2, ct_norms, width=0.4, label="registration only")
    axes[0].bar(idx + 0.2, full_norms, width=0.4, label="joint calibration")
    axes[0].set_xlabel("measurement")
    axes[0].set_ylabel("position residual [mm]")
    axes[0].set_yscale("log")
    axes[0].legend()
    axes[0].set_title("residuals")

    obs = full_result.observability
    if obs is not None and len(obs.initial_singular_values):
        s = np.asarray(obs.initial_singular_values)
        axes[1].semilogy(np.arange(1, s.size + 1), s / s[0], "o-")
        axes[1].axhline(obs.threshold, color="r", linestyle="--",
                        label="gate threshold")
        axes[1].legend()
    axes[1].set_xlabel("index")
    axes[1].set_ylabel("sigma / sigma_max")
    axes[1].set_title("observability spectrum")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def localization_figure(cloud, axis_fit, tip, path, window: float = 0.15) -> None:
    """Cumulative-percentage curves near the tip of one cloud."""
    from .localization import cumulative_curves, threshold_cloud, otsu_threshold

    tool = threshold_cloud(cloud, otsu_threshold(cloud.intensity))
    xs_s, ps_s, xs_t, ps_t = cumulative_curves(tool.points, axis_fit,
                                               cloud.bscan_dir, window)
    tip_s = float(tip.p @ axis_fit.direction)

    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    ax.plot(xs_s - tip_s, ps_s, "o-", label="along fitted centerline", ms=3)
    b = np.asarray(cloud.bscan_dir)
    if float(b @ axis_fit.direction) < 0:
        b = -b
    tip_t = float(tip.p @ b)
    ax.plot(xs_t - tip_t, ps_t, "s-", label="along scan direction", ms=3)
    ax.axhline(100.0, color="k", lw=0.8)
    ax.axvline(0.0, color="r", linestyle="--", label="estimated tip (d = 0)")
    ax.set_xlabel("d [mm]")
    ax.set_ylabel("cumulative percentage [%]")
    ax.set_title("tip interpolation curves")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def rcm_figure(lines, fit, path) -> None:
    """Tool centerlines near the fitted RCM point, projected on two planes."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4.5))
    p = fit.p_rcm
    for (i, j), ax, title in (((0, 1), axes[0], "x-y"), ((0, 2), axes[1], "x-z")):
        for ln in lines:
            span = np.linspace(-1.2 * np.linalg.norm(ln.p - p) - 1.0, 2.0, 2)
            seg = ln.p[None, :] + span[:, None] * ln.z[None, :]
            ax.plot(seg[:, i], seg[:, j], "b-", alpha=0.35, lw=0.8)
            ax.plot(ln.p[i], ln.p[j], "b.", ms=3)
        ax.plot(p[i], p[j], "r*", ms=14, label="fitted RCM")
        ax.set_xlabel("xyz"[i] + " [mm]")
        ax.set_ylabel("xyz"[j] + " [mm]")
        ax.set_title(title)
        ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
