"""Results files.

Every file starts with ``# format_version 1`` followed by ``#`` header lines
naming columns and units, then whitespace-delimited rows. Floats are written
with ``repr``-exact 17 significant digits, so emitting the same bundle twice
gives identical bytes.
"""

import math
from pathlib import Path

import numpy as np

from .errors import SimulationError

FORMAT_VERSION = 1

MASSIEU_UNITS = "dimensionless"


def _num(x):
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def _table(header, rows):
    lines = [f"# format_version {FORMAT_VERSION}"] + [f"# {h}" for h in header]
    for row in rows:
        lines.append(" ".join(r if isinstance(r, str) else _num(r) for r in row))
    return "\n".join(lines) + "\n"


def summary_text(bundle):
    header = [f"{k} = {bundle.meta[k]}" for k in sorted(bundle.meta)]
    header += [f"note: {n}" for n in bundle.notes]
    header.append("columns: name value stderr units")
    rows = [(k, v, e, u) for k, (v, e, u) in sorted(bundle.scalars.items())]
    if bundle.massieu is not None:
        rep = bundle.massieu
        rows.append(("compressibility_factor", rep.compressibility_factor, rep.errors[(0, 1)], MASSIEU_UNITS))
        rows.append(("residual_energy_over_kT", rep.residual_energy, rep.errors[(1, 0)], MASSIEU_UNITS))
        rows.append(("residual_isochoric_heat_capacity", rep.residual_heat_capacity, rep.errors[(2, 0)], "k_B"))
    return _table(header, rows)


def massieu_text(rep):
    header = [
        f"temperature = {_num(rep.temperature)} epsilon/k_B",
        f"density = {_num(rep.density)} sigma^-3",
        f"n_samples = {rep.n_samples}",
        f"A^r_mn = beta^m rho^n d^(m+n)(beta F^r/N)/d beta^m d rho^n, units: {MASSIEU_UNITS}",
        "columns: m n value stderr",
    ]
    return _table(header, [(str(m), str(n), v, e) for m, n, v, e in rep.rows()])


def rdf_text(table):
    header = [
        f"pair = {table.site_a} {table.site_b}",
        f"bin_width = {_num(table.bin_width)} sigma",
        f"partner_density = {_num(table.rho_partner)} sigma^-3",
        "columns: r_mid[sigma] g[dimensionless] n_cum[dimensionless]",
    ]
    return _table(header, zip(table.r_mid, table.g, table.n_cum))


def acf_text(res, meta=None):
    header = [f"property = {res.name}", f"units = {res.units}", f"prefactor = {_num(res.prefactor)}"]
    if meta:
        header += [f"{k} = {meta[k]}" for k in sorted(meta)]
    header.append(f"converged = {'yes' if res.converged else 'no'}")
    header.append(f"columns: t[tau] C[flux^2] integral[{res.units}]")
    return _table(header, zip(res.times, res.acf, res.prefactor * np.asarray(res.running)))


def _safe(name):
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in name)


def result_files(bundle):
    """Mapping file name -> text for every numerical output."""
    files = {"summary.dat": summary_text(bundle)}
    if bundle.massieu is not None:
        files["massieu.dat"] = massieu_text(bundle.massieu)
    for t in bundle.rdf:
        files[f"rdf_{_safe(t.site_a)}_{_safe(t.site_b)}.dat"] = rdf_text(t)
    for res in bundle.transport:
        files[f"acf_{_safe(res.name)}.dat"] = acf_text(res, bundle.correlation_meta.get(res.name))
    return files


def emit_results(bundle, directory, figures=True):
    """Write all result files (and figures) into ``directory``; returns the paths."""
    out = Path(directory)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, text in result_files(bundle).items():
            path = out / name
            path.write_text(text)
            written.append(path)
    except OSError as exc:
        raise SimulationError(f"cannot write results to {out}: {exc}") from None
    if figures:
        from .plotting import render_figures

        written += render_figures(bundle, out)
    return written
