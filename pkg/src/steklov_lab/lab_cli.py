"""Experiment runners: spectral trichotomy, DBS stability, degeneration and
Navier sweeps, with deterministic CSV/SVG reports and a small CLI.

Report schema
-------------
Every report is a list of rows `alpha,eps,nx,ny,n,value,reference,gap,verdict`.
Rows with n > 0 are data (eigenvalues, norms, distances; eps = 0 marks
reference solves); rows with n <= 0 are metric rows whose verdict is
`Satisfied` iff value <= reference, so each verdict is recomputable from the
row itself.  The metric legend and the acceptance thresholds are echoed as
`#` comments in the CSV header.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .assembly import (FeFunction, HESSIAN_ENERGY, LAPLACIAN_ENERGY,
                       assemble, assemble_boundary_factor, assemble_navier_load,
                       e_distance, normal_trace, sobolev_forms)
from .cell_problem import solve_cell, solve_cell_fem
from .mesh import DofMap, Mesh, build_mesh, mark_essential
from .navier import solve_navier
from .profile_geometry import (BoundaryProfile, DomainSpec, build_diffeo,
                               check_assumptions, fit_kappa_layer)
from .spectral import solve_steklov

__all__ = ["ExperimentConfig", "ReportRow", "ExperimentReport",
           "run_trichotomy", "run_dbs_convergence", "run_degeneration",
           "run_navier_stability", "emit", "main", "ConfigError",
           "AssumptionViolatedError"]

EXPERIMENTS = ("trichotomy", "dbs-convergence", "degeneration",
               "navier-stability")

THRESHOLDS = {
    "stable_rel_gap": 0.02,      # relative eigenvalue gap at the finest eps
    "monotone": 1.0,             # max successive gap ratio for 'decreasing'
    "critical_halving": 0.5,     # gap(eps_min) / gap(eps_max) at alpha = 3/2
    "divergence_factor": 2.0,    # lam(eps_min) >= factor * lam(eps_max)
    "edist_halving": 0.5,        # eigenfunction E-distance reduction
    "norm_halving": 0.5,         # Navier error-norm reduction over the sweep
    "trace_factor": 1.0 / 3.0,   # normal-trace reduction in the flat regime
    "gamma_residual": 0.05,      # residual in the curvature-shifted equation
    "degeneration_gap": 0.05,    # final relative gap to the clamped spectrum
}


class ConfigError(ValueError):
    pass


class AssumptionViolatedError(RuntimeError):
    """Raised when a run requires the sharp layer condition but it fails."""

    def __init__(self, report):
        super().__init__(f"layer condition violated:\n{report}")
        self.report = report


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    coefficients: tuple = (1.0, 1.0)       # cosine profile, b = 1 + cos(2 pi y)
    alpha: float = 2.0                     # single-exponent experiments
    alphas: tuple = (2.0, 1.5, 1.2)        # trichotomy / modified-Navier sweep
    eps_list: tuple = (0.125, 0.0625, 0.03125)
    per_period: int = 8                    # x-elements per oscillation period
    ny: int = 32
    grading: float = 0.7
    w_len: float = 1.0
    k: int = 2
    tol: float = 1e-9
    quad_order: int = 6
    reference_nx: int = 64
    k_hat: float = 8.0
    kappa_exponent: float = 0.0            # 0 -> built-in kappa rule
    cell_fem_check: bool = False
    seed: int = 0
    out_dir: str = "out"
    threads: int = 0                       # 0 -> STEKLOV_LAB_THREADS or 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if len(self.eps_list) < 2 or np.any(np.diff(self.eps_list) >= 0):
            raise ConfigError("eps_list must be strictly decreasing, length >= 2")
        if self.per_period < 8:
            raise ConfigError("mesh rule requires >= 8 elements per period")
        for e in self.eps_list:
            periods = self.w_len / e
            if abs(periods - round(periods)) > 1e-9:
                raise ConfigError(f"eps = {e} does not tile w_len = {self.w_len}")

    def profile(self, alpha: float) -> BoundaryProfile:
        return BoundaryProfile.fourier_cosine(self.coefficients, alpha)

    def mesh_for(self, eps: float) -> Mesh:
        nx = int(round(self.per_period * self.w_len / eps))
        return build_mesh(nx, self.ny, self.grading, self.w_len)

    def reference_mesh(self) -> Mesh:
        return build_mesh(self.reference_nx, self.ny, self.grading, self.w_len)

    def diffeo(self, alpha: float, eps: float):
        spec = DomainSpec(epsilon=eps, profile=self.profile(alpha),
                          w_len=self.w_len)
        kappa = eps ** self.kappa_exponent if self.kappa_exponent > 0 else None
        layer = fit_kappa_layer(spec, kappa=kappa, k_hat=self.k_hat)
        return build_diffeo(spec, layer)

    def n_threads(self) -> int:
        if self.threads > 0:
            return self.threads
        env = os.environ.get("STEKLOV_LAB_THREADS", "")
        return max(1, int(env)) if env.strip().isdigit() else 1


def _parse_scalar(tok: str):
    tok = tok.strip()
    if "/" in tok:
        num, den = tok.split("/", 1)
        return float(num) / float(den)
    for cast in (int, float):
        try:
            return cast(tok)
        except ValueError:
            pass
    if tok.lower() in ("true", "false"):
        return tok.lower() == "true"
    return tok


def parse_config_text(text: str) -> dict:
    """One `key = value` per line, `#` comments, arrays comma-separated."""
    out = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if "," in val:
            out[key] = tuple(_parse_scalar(t) for t in val.split(",") if t.strip())
        else:
            out[key] = _parse_scalar(val)
    return out


def load_config(experiment: str, path: str | None = None, **overrides) -> ExperimentConfig:
    values = dict(EXPERIMENT_DEFAULTS.get(experiment, {}))
    if path is not None:
        values.update(parse_config_text(Path(path).read_text(encoding="utf-8")))
    values.update({k: v for k, v in overrides.items() if v is not None})
    values["experiment"] = experiment
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    return ExperimentConfig(**values)


EXPERIMENT_DEFAULTS = {
    "trichotomy": {"alphas": (2.0, 1.5, 1.2)},
    "dbs-convergence": {"alpha": 2.0},
    # alpha = 1 admits no blending layer at eps = 1/8 (sup g_eps = 1/4 > 1/6)
    # and the spectrum overshoots before settling, so the sweep starts deeper
    "degeneration": {"alpha": 1.0,
                     "eps_list": (0.03125, 0.015625, 0.0078125)},
    # a deeper layer (kappa = eps^{3/2}) keeps the transplant's own
    # second-order defect below the error norms it is supposed to measure
    "navier-stability": {"alpha": 2.0, "alphas": (2.0, 1.5, 1.2),
                         "kappa_exponent": 1.5},
}


# ---------------------------------------------------------------------------
# reports

@dataclass(frozen=True)
class ReportRow:
    alpha: float
    eps: float
    nx: int
    ny: int
    n: int
    value: float
    reference: float
    gap: float
    verdict: str


@dataclass
class ExperimentReport:
    experiment: str
    header: tuple = ()
    rows: list = field(default_factory=list)

    def add(self, alpha, eps, nx, ny, n, value, reference, gap, verdict):
        self.rows.append(ReportRow(float(alpha), float(eps), int(nx), int(ny),
                                   int(n), float(value), float(reference),
                                   float(gap), str(verdict)))

    def metric(self, alpha, n, value, reference):
        verdict = "Satisfied" if value <= reference else "Violated"
        self.add(alpha, 0.0, 0, 0, n, value, reference, value - reference, verdict)
        return verdict

    @property
    def metric_rows(self):
        return [r for r in self.rows if r.n <= 0 and r.verdict != "Info"]

    @property
    def all_satisfied(self) -> bool:
        return all(r.verdict == "Satisfied" for r in self.metric_rows)

    def summary(self) -> dict:
        out = {}
        for r in self.metric_rows:
            prev = out.get(r.alpha, "Satisfied")
            out[r.alpha] = "Satisfied" if prev == "Satisfied" and \
                r.verdict == "Satisfied" else "Violated"
        return out

    def to_csv(self) -> str:
        lines = [f"# {h}" for h in self.header]
        lines.append("alpha,eps,nx,ny,n,value,reference,gap,verdict")
        for r in self.rows:
            lines.append(",".join([repr(r.alpha), repr(r.eps), str(r.nx),
                                   str(r.ny), str(r.n), repr(r.value),
                                   repr(r.reference), repr(r.gap), r.verdict]))
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_csv(text: str) -> "ExperimentReport":
        header = []
        rows = []
        seen_cols = False
        for raw in text.splitlines():
            if raw.startswith("#"):
                header.append(raw[2:] if raw.startswith("# ") else raw[1:])
                continue
            if not raw.strip():
                continue
            if not seen_cols:
                seen_cols = True
                continue
            a, e, nx, ny, n, v, ref, gap, verdict = raw.split(",")
            rows.append(ReportRow(float(a), float(e), int(nx), int(ny), int(n),
                                  float(v), float(ref), float(gap), verdict))
        name = "report"
        for h in header:
            if h.startswith("experiment:"):
                name = h.split(":", 1)[1].strip()
        rep = ExperimentReport(experiment=name, header=tuple(header), rows=rows)
        return rep


def _svg(report: ExperimentReport) -> str:
    """Minimal deterministic SVG: one polyline of value vs eps per (alpha, n)."""
    pts = {}
    for r in report.rows:
        if r.n > 0 and r.eps > 0:
            pts.setdefault((r.alpha, r.n), []).append((r.eps, r.value))
    W, H, ml, mb, mt, mr = 640, 420, 70, 50, 30, 160
    body = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
            f'viewBox="0 0 {W} {H}">',
            f'<rect width="{W}" height="{H}" fill="white"/>',
            f'<text x="{ml}" y="20" font-size="14">{report.experiment}: '
            f'value vs eps</text>']
    if pts:
        eps_all = sorted({e for ser in pts.values() for e, _ in ser}, reverse=True)
        vals = [v for ser in pts.values() for _, v in ser]
        vmin, vmax = min(vals), max(vals)
        if vmax <= vmin:
            vmax = vmin + 1.0
        pad = 0.05 * (vmax - vmin)
        vmin, vmax = vmin - pad, vmax + pad
        xs = {e: ml + (W - ml - mr) * i / max(1, len(eps_all) - 1)
              for i, e in enumerate(eps_all)}

        def ypix(v):
            return mt + (H - mt - mb) * (vmax - v) / (vmax - vmin)

        body.append(f'<line x1="{ml}" y1="{H - mb}" x2="{W - mr}" y2="{H - mb}" '
                    f'stroke="black"/>')
        body.append(f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{H - mb}" '
                    f'stroke="black"/>')
        for e in eps_all:
            body.append(f'<text x="{xs[e]:.1f}" y="{H - mb + 18}" font-size="11" '
                        f'text-anchor="middle">1/{round(1 / e)}</text>')
        for frac in (0.0, 0.5, 1.0):
            v = vmin + frac * (vmax - vmin)
            body.append(f'<text x="{ml - 6}" y="{ypix(v):.1f}" font-size="11" '
                        f'text-anchor="end">{v:.4g}</text>')
        colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                  "#8c564b", "#17becf", "#7f7f7f")
        for i, key in enumerate(sorted(pts)):
            series = sorted(pts[key], reverse=True)
            col = colors[i % len(colors)]
            path = " ".join(f"{xs[e]:.1f},{ypix(v):.1f}" for e, v in series)
            body.append(f'<polyline points="{path}" fill="none" stroke="{col}" '
                        f'stroke-width="1.5"/>')
            body.append(f'<text x="{W - mr + 8}" y="{mt + 14 * (i + 1)}" '
                        f'font-size="11" fill="{col}">alpha={key[0]:g} '
                        f'n={key[1]}</text>')
    body.append("</svg>")
    return "\n".join(body) + "\n"


def emit(report: ExperimentReport, fmt: str, out_dir: str) -> Path:
    """Write the report as CSV or SVG; byte-deterministic for fixed inputs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        path = out / f"{report.experiment}.csv"
        path.write_text(report.to_csv(), encoding="utf-8")
    elif fmt == "svg":
        path = out / f"{report.experiment}.svg"
        path.write_text(_svg(report), encoding="utf-8")
    else:
        raise ValueError("format must be 'csv' or 'svg'")
    return path


# ---------------------------------------------------------------------------
# shared solve helpers

def _pmap(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _steklov_cell(cfg, mesh, bc, form, part, domain):
    dm = mark_essential(mesh, DofMap.unconstrained(mesh), bc)
    A = assemble(form, mesh, dm, domain, cfg.quad_order)
    B = assemble(normal_trace(part), mesh, dm, domain, cfg.quad_order)
    C = assemble_boundary_factor(normal_trace(part), mesh, dm, domain,
                                 cfg.quad_order)
    spectrum = solve_steklov(A, B, k=cfg.k, tol=cfg.tol, seed=cfg.seed,
                             b_factor=C)
    return spectrum, dm


def _base_header(cfg: ExperimentConfig):
    eps = ", ".join(f"1/{round(1 / e)}" for e in cfg.eps_list)
    return [
        f"experiment: {cfg.experiment}",
        f"profile: cosine coefficients {list(cfg.coefficients)}",
        f"eps sweep: {eps}; mesh: {cfg.per_period}/period x ny={cfg.ny} "
        f"grading={cfg.grading}; k={cfg.k}; tol={cfg.tol}; seed={cfg.seed}",
        "rows: n > 0 data (eps = 0 marks reference solves); n <= 0 metric "
        "rows, Satisfied iff value <= reference",
    ]


def _safe_ratios(values, floor):
    """Successive ratios, reported as converged (0) below the noise floor."""
    out = []
    for a, b in zip(values, values[1:]):
        out.append(0.0 if max(a, b) <= floor else b / max(a, 1e-300))
    return out or [0.0]


def _trend_metrics(report, alpha, gaps, refs, legend_n, thr=THRESHOLDS):
    """Final-gap and monotonicity metric rows for one eigenvalue sweep."""
    rel = gaps[-1] / abs(refs[-1])
    report.metric(alpha, legend_n, rel, thr["stable_rel_gap"])
    floor = 1e-9 * abs(refs[-1])
    report.metric(alpha, legend_n - 1, max(_safe_ratios(gaps, floor)),
                  thr["monotone"])


# ---------------------------------------------------------------------------
# experiment 1: trichotomy

def run_trichotomy(config: ExperimentConfig) -> ExperimentReport:
    """Eigenvalues of the curvature-form problem with a clamped lower frame
    and the spectral trace on the oscillating top edge, across the three
    exponent regimes."""
    cfg = config
    report = ExperimentReport("trichotomy", tuple(_base_header(cfg) + [
        f"alphas: {list(cfg.alphas)}",
        "metric legend: n=-1 final relative gap; n=-2 max successive gap "
        "ratio; n=-3 critical gap halving; n=-4 divergence "
        "(2*lam1(eps_max)/lam1(eps_min))",
        f"thresholds: rel_gap<={THRESHOLDS['stable_rel_gap']}, "
        f"halving<={THRESHOLDS['critical_halving']}, "
        f"divergence factor>={THRESHOLDS['divergence_factor']}",
        "n=0 row carries the strange curvature gamma",
    ]))
    mesh0 = cfg.reference_mesh()
    spec0, _ = _steklov_cell(cfg, mesh0, "DirichletAll+ClampSigma",
                             HESSIAN_ENERGY, "Gamma", None)
    lam0 = spec0.eigenvalues
    gamma = solve_cell(cfg.profile(1.5)).gamma
    report.add(0.0, 0.0, mesh0.nx, mesh0.ny, 0, gamma, 0.0, 0.0, "Info")
    if cfg.cell_fem_check:
        gamma_fem = solve_cell_fem(cfg.profile(1.5))
        report.add(0.0, 0.0, 0, 0, -99, gamma_fem, gamma,
                   abs(gamma_fem - gamma), "Info")
    for i, lam in enumerate(lam0, start=1):
        report.add(0.0, 0.0, mesh0.nx, mesh0.ny, i, lam, lam, 0.0, "Info")

    cells = [(a, e) for a in cfg.alphas for e in cfg.eps_list]

    def solve_one(cell):
        a, e = cell
        mesh = cfg.mesh_for(e)
        dif = cfg.diffeo(a, e)
        spectrum, _ = _steklov_cell(cfg, mesh, "DirichletAll+ClampSigma",
                                    HESSIAN_ENERGY, "Gamma", dif)
        return cell, mesh, spectrum.eigenvalues

    results = dict()
    for cell, mesh, lam in _pmap(solve_one, cells, cfg.n_threads()):
        results[cell] = (mesh, lam)

    for a in cfg.alphas:
        targets = lam0 + gamma if abs(a - 1.5) < 1e-12 else lam0
        lam1_per_eps = []
        gaps = []
        for e in cfg.eps_list:
            mesh, lam = results[(a, e)]
            for i, v in enumerate(lam, start=1):
                report.add(a, e, mesh.nx, mesh.ny, i, v, targets[i - 1],
                           abs(v - targets[i - 1]), "Info")
            lam1_per_eps.append(lam[0])
            gaps.append(abs(lam[0] - targets[0]))
        if a > 1.5 + 1e-12:
            _trend_metrics(report, a, gaps, [targets[0]] * len(gaps), -1)
        elif abs(a - 1.5) < 1e-12:
            report.metric(a, -3, gaps[-1] / gaps[0],
                          THRESHOLDS["critical_halving"])
        else:
            value = THRESHOLDS["divergence_factor"] * lam1_per_eps[0]
            report.metric(a, -4, value / lam1_per_eps[-1], 1.0)
    return report


# ---------------------------------------------------------------------------
# experiment 2: DBS spectral convergence (alpha > 3/2)

def run_dbs_convergence(config: ExperimentConfig) -> ExperimentReport:
    """Both Steklov pencils on the perturbed strip against the flat reference,
    plus the transplanted H2 distance of the first eigenfunction."""
    cfg = config
    if cfg.alpha <= 1.5:
        raise ConfigError("DBS convergence requires alpha > 3/2")
    prof = cfg.profile(cfg.alpha)
    rule = (lambda a, e: e ** cfg.kappa_exponent) if cfg.kappa_exponent > 0 else None
    assumption = check_assumptions(prof, cfg.eps_list, kappa_rule=rule)
    if assumption.verdict != "Satisfied":
        raise AssumptionViolatedError(assumption)

    report = ExperimentReport("dbs-convergence", tuple(_base_header(cfg) + [
        f"alpha: {cfg.alpha}",
        "rows: n=1..k bending-form eigenvalues d_n(eps) vs d_n(0); "
        "n=101..100+k curvature-form delta_n; n=201 H2 E-distance of mode 1",
        "metric legend: n=-1/-101 final relative gaps; n=-2/-102 max "
        "successive gap ratios; n=-201 E-distance halving",
    ]))

    def solve_eps(e):
        mesh = cfg.mesh_for(e)
        dif = cfg.diffeo(cfg.alpha, e)
        out = {}
        for tag, form in (("lap", LAPLACIAN_ENERGY), ("hess", HESSIAN_ENERGY)):
            s_eps, dm = _steklov_cell(cfg, mesh, "DirichletAll", form, "All", dif)
            s_ref, _ = _steklov_cell(cfg, mesh, "DirichletAll", form, "All", None)
            out[tag] = (s_eps, s_ref, dm)
        # transplanted distance of the leading bending-form eigenfunction
        s_eps, s_ref, dm = out["lap"]
        forms = sobolev_forms(mesh, dif, cfg.quad_order)
        u_eps = FeFunction.from_free_vector(dm, mesh, s_eps.modes[:, 0])
        u_ref = FeFunction.from_free_vector(dm, mesh, s_ref.modes[:, 0])
        if u_eps.coeffs @ (forms["mass"] @ u_ref.coeffs) < 0:
            u_ref = FeFunction(mesh, -u_ref.coeffs)
        dist = e_distance(u_eps, u_ref, dif, "H2", forms=forms)
        return e, mesh, out, dist

    results = {e: (mesh, out, dist) for e, mesh, out, dist in
               _pmap(solve_eps, list(cfg.eps_list), cfg.n_threads())}

    for tag, base in (("lap", 0), ("hess", 100)):
        gaps = []
        refs = []
        for e in cfg.eps_list:
            mesh, out, _ = results[e]
            s_eps, s_ref, _ = out[tag]
            for i in range(cfg.k):
                report.add(cfg.alpha, e, mesh.nx, mesh.ny, base + i + 1,
                           s_eps.eigenvalues[i], s_ref.eigenvalues[i],
                           abs(s_eps.eigenvalues[i] - s_ref.eigenvalues[i]),
                           "Info")
            gaps.append(abs(s_eps.eigenvalues[0] - s_ref.eigenvalues[0]))
            refs.append(s_ref.eigenvalues[0])
        gaps = [max(g, 1e-300) for g in gaps]
        _trend_metrics(report, cfg.alpha, gaps, refs, -1 - base)

    dists = []
    for e in cfg.eps_list:
        mesh, _, dist = results[e]
        report.add(cfg.alpha, e, mesh.nx, mesh.ny, 201, dist, 0.0, dist, "Info")
        dists.append(dist)
    ratio = 0.0 if max(dists) <= 1e-9 else dists[-1] / max(dists[0], 1e-300)
    report.metric(cfg.alpha, -201, ratio, THRESHOLDS["edist_halving"])
    return report


# ---------------------------------------------------------------------------
# experiment 3: degeneration toward the clamped top edge (alpha < 3/2)

def run_degeneration(config: ExperimentConfig) -> ExperimentReport:
    """Curvature-form eigenvalues on the perturbed strip against the clamped
    reference spectrum they degenerate to."""
    cfg = config
    if not (1.0 - 1e-12 <= cfg.alpha < 1.5):
        raise ConfigError("degeneration requires alpha in [1, 3/2)")
    report = ExperimentReport("degeneration", tuple(_base_header(cfg) + [
        f"alpha: {cfg.alpha}",
        "rows: n=1..k eigenvalues vs the clamped-top reference; "
        "n=301..300+k clamped (value) vs unclamped (reference) spectra",
        f"metric legend: n=-1 final relative gap (<= "
        f"{THRESHOLDS['degeneration_gap']}); n=-2 max successive gap ratio",
    ]))
    mesh0 = cfg.reference_mesh()
    clamp, _ = _steklov_cell(cfg, mesh0, "DirichletAll+ClampGamma",
                             HESSIAN_ENERGY, "All", None)
    plain, _ = _steklov_cell(cfg, mesh0, "DirichletAll",
                             HESSIAN_ENERGY, "All", None)
    for i in range(cfg.k):
        report.add(0.0, 0.0, mesh0.nx, mesh0.ny, 301 + i,
                   clamp.eigenvalues[i], plain.eigenvalues[i],
                   clamp.eigenvalues[i] - plain.eigenvalues[i], "Info")

    def solve_eps(e):
        mesh = cfg.mesh_for(e)
        dif = cfg.diffeo(cfg.alpha, e)
        spectrum, _ = _steklov_cell(cfg, mesh, "DirichletAll", HESSIAN_ENERGY,
                                    "All", dif)
        return e, mesh, spectrum.eigenvalues

    gaps = []
    for e, mesh, lam in _pmap(solve_eps, list(cfg.eps_list), cfg.n_threads()):
        for i in range(cfg.k):
            report.add(cfg.alpha, e, mesh.nx, mesh.ny, i + 1, lam[i],
                       clamp.eigenvalues[i],
                       abs(lam[i] - clamp.eigenvalues[i]), "Info")
        gaps.append(abs(lam[0] - clamp.eigenvalues[0]))
    rel = gaps[-1] / clamp.eigenvalues[0]
    report.metric(cfg.alpha, -1, rel, THRESHOLDS["degeneration_gap"])
    floor = 1e-9 * clamp.eigenvalues[0]
    report.metric(cfg.alpha, -2, max(_safe_ratios(gaps, floor)),
                  THRESHOLDS["monotone"])
    return report


# ---------------------------------------------------------------------------
# experiment 4: Navier stability and the modified-Navier regimes

def _trace_lift(cfg):
    w = cfg.w_len
    fv = lambda x, y: np.sin(np.pi * x / w)
    fx = lambda x, y: (np.pi / w) * np.cos(np.pi * x / w)
    fy = lambda x, y: np.zeros_like(np.asarray(x, dtype=float))
    return fv, fx, fy


def run_navier_stability(config: ExperimentConfig) -> ExperimentReport:
    """Hinged-plate sweeps: the bending-form problem is stable, the
    curvature-form problem shows the three regimes."""
    cfg = config
    thr = THRESHOLDS
    report = ExperimentReport("navier-stability", tuple(_base_header(cfg) + [
        f"bending-form alpha: {cfg.alpha}; curvature-form alphas: "
        f"{list(cfg.alphas)}",
        "rows: n=1..3 bending-form error norms (L2, gradient, laplacian); "
        "n=11..13 curvature-form error norms (L2, gradient, hessian); "
        "n=14 normal-trace norm on the oscillating edge",
        "metric legend: n=-1..-3 bending norm halving; n=-11..-13 "
        "curvature-form norm convergence trend (alpha > 3/2); n=-14 trace "
        f"reduction (<= {thr['trace_factor']:.6g}); n=-15 relative H1 "
        "distance of the empirical limit to the curvature-shifted discrete "
        f"solution (<= {thr['gamma_residual']}); n=-16 first-order "
        "convergence trend at the critical exponent",
    ]))
    f_triple = _trace_lift(cfg)
    gamma = solve_cell(cfg.profile(1.5)).gamma

    def error_norms(mesh, dif, form):
        """Pulled-back error norms between the perturbed and flat solutions."""
        sol_e = solve_navier(mesh, f_triple, form=form, domain=dif,
                             quad_order=cfg.quad_order)
        sol_0 = solve_navier(mesh, f_triple, form=form, domain=None)
        w = sol_e.u.coeffs - sol_0.u.coeffs
        full = DofMap.unconstrained(mesh)
        forms = sobolev_forms(mesh, dif, cfg.quad_order)
        lap = assemble(LAPLACIAN_ENERGY, mesh, full, dif, cfg.quad_order).matrix
        out = {
            "L2": float(np.sqrt(w @ (forms["mass"] @ w))),
            "grad": float(np.sqrt(w @ (forms["grad"] @ w))),
            "lap": float(np.sqrt(w @ (lap @ w))),
            "hess": float(np.sqrt(w @ (forms["hess"] @ w))),
        }
        return sol_e, out

    # bending form: stable sweep
    norms_per_eps = []
    for e in cfg.eps_list:
        mesh = cfg.mesh_for(e)
        dif = cfg.diffeo(cfg.alpha, e)
        _, nrm = error_norms(mesh, dif, "Laplacian")
        vals = (nrm["L2"], nrm["grad"], nrm["lap"])
        norms_per_eps.append(vals)
        for i, v in enumerate(vals, start=1):
            report.add(cfg.alpha, e, mesh.nx, mesh.ny, i, v, 0.0, v, "Info")
    for i in range(3):
        ratio = norms_per_eps[-1][i] / max(norms_per_eps[0][i], 1e-300)
        report.metric(cfg.alpha, -1 - i, ratio, thr["norm_halving"])

    # curvature form: the three regimes
    for a in cfg.alphas:
        sols = {}
        norms = {}
        traces = {}
        for e in cfg.eps_list:
            mesh = cfg.mesh_for(e)
            dif = cfg.diffeo(a, e)
            sol_e, nrm = error_norms(mesh, dif, "Hessian")
            dm = sol_e.dofmap
            Bg = assemble(normal_trace("Gamma"), mesh, dm, dif,
                          cfg.quad_order).matrix
            ue = sol_e.u.coeffs[dm.free]
            traces[e] = float(np.sqrt(max(ue @ (Bg @ ue), 0.0)))
            sols[e] = (mesh, sol_e)
            norms[e] = nrm
            for i, key in enumerate(("L2", "grad", "hess"), start=11):
                report.add(a, e, mesh.nx, mesh.ny, i, nrm[key], 0.0,
                           nrm[key], "Info")
            report.add(a, e, mesh.nx, mesh.ny, 14, traces[e], 0.0,
                       traces[e], "Info")
        e0, e1 = cfg.eps_list[0], cfg.eps_list[-1]
        if a > 1.5 + 1e-12:
            # convergence in all norms up to second order; no rate is implied
            # for the curvature-form problem, so the trend test is monotone
            for i, key in enumerate(("L2", "grad", "hess"), start=11):
                ratio = norms[e1][key] / max(norms[e0][key], 1e-300)
                report.metric(a, -i, ratio, thr["monotone"])
        elif abs(a - 1.5) < 1e-12:
            ratio = norms[e1]["grad"] / max(norms[e0]["grad"], 1e-300)
            report.metric(a, -16, ratio, 1.0)
            # does the empirical limit satisfy the curvature-shifted flat
            # equation?  Measured as the relative first-order distance to the
            # discrete solution of that equation (the raw residual vector has
            # no scale on a graded mesh, and only first-order norms converge
            # in this regime)
            mesh, sol_e = sols[e1]
            dm = sol_e.dofmap
            import scipy.sparse.linalg as _spla
            A_ref = assemble(HESSIAN_ENERGY, mesh, dm).matrix
            Bg_ref = assemble(normal_trace("Gamma"), mesh, dm).matrix
            F_ref = assemble_navier_load(f_triple, mesh, dm)
            u_gam = _spla.splu((A_ref + gamma * Bg_ref).tocsc()).solve(F_ref)
            ref_forms = sobolev_forms(mesh, None)
            w = np.zeros(dm.n_dofs)
            w[dm.free] = sol_e.u.coeffs[dm.free] - u_gam
            ug_full = np.zeros(dm.n_dofs)
            ug_full[dm.free] = u_gam
            h1 = lambda v: np.sqrt(v @ (ref_forms["mass"] @ v)
                                   + v @ (ref_forms["grad"] @ v))
            report.metric(a, -15, h1(w) / h1(ug_full), thr["gamma_residual"])
        else:
            ratio = traces[e1] / max(traces[e0], 1e-300)
            report.metric(a, -14, ratio, thr["trace_factor"])
    return report


# ---------------------------------------------------------------------------
# CLI

RUNNERS = {
    "trichotomy": run_trichotomy,
    "dbs-convergence": run_dbs_convergence,
    "degeneration": run_degeneration,
    "navier-stability": run_navier_stability,
}

ALIASES = {"dbs": "dbs-convergence", "navier": "navier-stability"}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="steklov-lab",
        description="Finite-element experiments for biharmonic Steklov "
                    "problems on oscillating-boundary strips")
    parser.add_argument("experiment",
                        choices=sorted(EXPERIMENTS) + sorted(ALIASES))
    parser.add_argument("--config", default=None, help="key = value file")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (fallback: STEKLOV_LAB_THREADS)")
    args = parser.parse_args(argv)

    name = ALIASES.get(args.experiment, args.experiment)
    cfg = load_config(name, args.config, out_dir=args.out, threads=args.threads)
    report = RUNNERS[name](cfg)
    csv_path = emit(report, "csv", cfg.out_dir)
    emit(report, "svg", cfg.out_dir)

    for row in report.metric_rows:
        print(f"[{row.verdict:9s}] alpha={row.alpha:g} metric n={row.n}: "
              f"value={row.value:.6g} threshold={row.reference:.6g}")
    print(f"report: {csv_path}")
    ok = report.all_satisfied
    print("overall:", "Satisfied" if ok else "Violated")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
