"""PNG figures of RDFs and Green-Kubo running integrals."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import SimulationError  # noqa: E402

# strip the software/version tag so files are reproducible
_PNG_META = {"Software": None}


def _save(fig, path):
    try:
        fig.savefig(path, dpi=100, metadata=_PNG_META)
    except OSError as exc:
        raise SimulationError(f"cannot write figure {path}: {exc}") from None
    finally:
        plt.close(fig)
    return path


def plot_rdf(tables, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    for t in tables:
        ax.plot(t.r_mid, t.g, lw=1.2, label=f"{t.site_a} - {t.site_b}")
    ax.axhline(1.0, color="0.6", lw=0.8, ls="--")
    ax.set_xlabel(r"$r$ / $\sigma$")
    ax.set_ylabel(r"$g(r)$")
    if len(tables) <= 10:
        ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def plot_transport(res, path):
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    a1.plot(res.times, res.acf, lw=1.2)
    a1.axhline(0.0, color="0.6", lw=0.8)
    a1.set_ylabel("autocorrelation")
    a2.plot(res.times, res.prefactor * res.running, lw=1.2)
    a2.axhline(res.value, color="0.6", lw=0.8, ls="--")
    a2.set_xlabel(r"$t$ / $\tau$")
    a2.set_ylabel(f"{res.name} [{res.units}]")
    fig.tight_layout()
    return _save(fig, path)


def render_figures(bundle, directory):
    from .output import _safe

    out = Path(directory)
    paths = []
    if bundle.rdf:
        paths.append(plot_rdf(bundle.rdf, out / "rdf.png"))
    for res in bundle.transport:
        paths.append(plot_transport(res, out / f"acf_{_safe(res.name)}.png"))
    return paths
