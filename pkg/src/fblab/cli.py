"""Scenario runner: ``fblab run <config>`` and ``fblab list-presets``.

A config is a JSON document validated against ``schema/config.schema.json``.
Every run writes plot-ready CSV/JSON files and a ``summary.json`` in which
each extracted number sits next to its analytic counterpart.
"""
from __future__ import annotations

import argparse
import copy
import io
import json
import math
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .model import (ConfigurationError, FblabError, ModeParams, PhysicalConfig, ResonanceBranch,
                    reduce)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
DEFAULT_SEED = 20240917
TWO_PI = 2 * np.pi

SIMULATION_DEFAULTS = {"seed": DEFAULT_SEED, "dt_s": None, "record_every": 8, "burn_in_s": 0.0,
                       "force": "linear", "include_drive": True}


# ---------------------------------------------------------------- config handling

def load_schema() -> dict:
    text = resources.files("fblab").joinpath("schema/config.schema.json").read_text("utf-8")
    return json.loads(text)


def preset_names() -> list[str]:
    folder = resources.files("fblab").joinpath("presets")
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> dict:
    path = resources.files("fblab").joinpath(f"presets/{name}.json")
    if not path.is_file():
        raise ConfigurationError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return json.loads(path.read_text("utf-8"))


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path)


def validate_config(cfg: dict) -> None:
    """Raise ConfigurationError with a JSON pointer to the offending entry."""
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigurationError(f"{_pointer(err.absolute_path)}: {err.message}")


def read_config(path: str) -> dict:
    """Config from a file path or, failing that, a preset name."""
    p = Path(path)
    if p.is_file():
        try:
            cfg = json.loads(p.read_text("utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
    elif p.suffix == "" and p.name in preset_names():
        cfg = load_preset(p.name)
    else:
        raise ConfigurationError(f"config {path!r} not found")
    validate_config(cfg)
    return cfg


def resolve_config(cfg: dict, seed: int | None = None) -> dict:
    """Config with simulation defaults filled in and the seed override applied."""
    out = copy.deepcopy(cfg)
    sim = {**SIMULATION_DEFAULTS, **out["simulation"]}
    if seed is not None:
        sim["seed"] = int(seed)
    out["simulation"] = sim
    out.setdefault("analysis", {})
    return out


def build_model(cfg: dict) -> tuple[ModeParams, ResonanceBranch, PhysicalConfig | None]:
    """ModeParams, branch and (if given) the microscopic configuration."""
    if "params" in cfg:
        b = cfg["params"]
        branch = ResonanceBranch.parse(b.get("branch", "detuning"))
        o1, o2 = TWO_PI * b["f1_hz"], TWO_PI * b["f2_hz"]
        kw = dict(gamma=TWO_PI * b["gamma_hz"], g=TWO_PI * b["g_hz"],
                  phase=b.get("phase_rad", 0.0), kd=np.pi * b.get("kd_pi", 0.0))
        if "occupations" in b:
            p = ModeParams(o1, o2, n1=b["occupations"][0], n2=b["occupations"][1], **kw)
        else:
            p = ModeParams.from_temperature(o1, o2, temperature=b.get("temperature_k", 293.0), **kw)
        physical = None
    else:
        b = cfg["physical"]
        branch = ResonanceBranch.parse(b.get("branch", "detuning"))
        o1, o2 = TWO_PI * b["f1_hz"], TWO_PI * b["f2_hz"]
        fields = {"wavelength_m": "wavelength", "rayleigh_length_m": "rayleigh_length",
                  "radius_m": "radius", "permittivity": "permittivity",
                  "density_kg_m3": "density", "polarization_angle_rad": "polarization_angle",
                  "field1_v_per_m": "field1", "field2_v_per_m": "field2",
                  "distance_m": "distance", "temperature_k": "temperature",
                  "phase1_rad": "phase1", "phase2_rad": "phase2"}
        kw = {fields[k]: v for k, v in b.items() if k in fields}
        physical = PhysicalConfig(damping=TWO_PI * b["damping_hz"], **kw)
        p = reduce(physical, o1, o2)
    delta = TWO_PI * b.get("delta_hz", 0.0)
    detuning = branch.resonant_detuning(p.replace(detuning=0.0)) + delta
    p = p.replace(detuning=float(detuning))
    if physical is not None:
        physical = PhysicalConfig(**{**physical.__dict__, "optical_detuning": float(detuning)})
    return p, branch, physical


# ---------------------------------------------------------------- output helpers

def comparison(value: float, analytic: float, provenance: str, tolerance: float | None = None,
               scale: float | None = None, unit: str = "") -> dict:
    """One summary entry.  The error is relative to |analytic| unless ``scale`` is given."""
    value, analytic = float(value), float(analytic)
    denom = scale if scale is not None else (abs(analytic) if analytic != 0 else 1.0)
    err = abs(value - analytic) / denom
    entry = {"value": value, "analytic": analytic, "provenance": provenance,
             "error": err, "error_basis": "relative" if scale is None else f"absolute/{scale:.6g}",
             "unit": unit}
    if tolerance is not None:
        entry["tolerance"] = tolerance
        entry["pass"] = bool(err <= tolerance)
    return entry


def analytic_value(value: float, unit: str = "") -> dict:
    return {"value": float(value), "analytic": float(value), "provenance": "analytic",
            "error": 0.0, "error_basis": "relative", "unit": unit}


def csv_text(header: list[str], columns: list) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    cols = [np.asarray(c) for c in columns]
    for row in zip(*cols):
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (str, np.str_)):
        return str(v)
    return f"{float(v):.17e}"


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=True) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _settings(cfg: dict):
    from .sigproc import SimSettings

    s, a = cfg["simulation"], cfg["analysis"]
    return SimSettings(duration=s["duration_s"], n_traj=s["n_traj"], seed=s["seed"],
                       dt=s["dt_s"], record_every=s["record_every"], burn_in=s["burn_in_s"],
                       resolution=a.get("resolution_hz"))


def _lambda(params: ModeParams, branch: ResonanceBranch) -> complex:
    """Lambda with non-negative real part."""
    from .rwa import branch_lambda

    lam = branch_lambda(params, branch)
    return -lam if lam.real < 0 else lam


def _modes_entry(params: ModeParams, branch: ResonanceBranch) -> dict:
    from .rwa import eigen_solution

    sol = eigen_solution(params, branch)
    lam = complex(sol.lam)
    return {"branch": str(branch), "delta_hz": branch.effective_detuning(params) / TWO_PI,
            "lambda_hz": lam / TWO_PI,
            "eigenfrequencies_hz": [complex(f) / TWO_PI for f in sol.frequencies],
            "exceptional": bool(sol.exceptional), "provenance": "analytic"}


def _analytic_correlations(params: ModeParams, branch: ResonanceBranch, cfg: dict):
    """Columns of analytic g1_12 and g2 on a symmetric lag grid, or None if unstable."""
    from . import correlations as corr

    a = cfg["analysis"]
    tau_max = a.get("tau_max_s", 8.0 / params.gamma if params.gamma > 0 else 1e-2)
    tau = np.linspace(-tau_max, tau_max, a.get("tau_points", 401))
    try:
        c12 = corr.g1(params, 1, 2, tau, branch, method="spectral")
        g2 = corr.g2(params, tau, branch=branch)
    except (FblabError, ValueError):
        return None
    return tau, c12, g2


# ---------------------------------------------------------------- scenarios

def scenario_scan_detuning(params, branch, physical, cfg):
    from .sigproc import spectrogram_scan

    if branch.kind != "detuning":
        raise ConfigurationError("/params/branch: scan-detuning needs the detuning branch")
    a = cfg["analysis"]
    span = a.get("scan_span_hz", 2500.0)
    deltas = np.linspace(-span, span, a.get("scan_points", 21))
    centre = branch.resonant_detuning(params)
    scan = spectrogram_scan(params, centre + TWO_PI * deltas, _settings(cfg))
    f1, f2 = params.omega1 / TWO_PI, params.omega2 / TWO_PI
    keep = (scan.freqs >= 0.5 * f1) & (scan.freqs <= 1.5 * f2)
    rows_d = np.repeat(deltas, keep.sum())
    rows_f = np.tile(scan.freqs[keep], len(deltas))
    spectro = csv_text(["delta_hz", "freq_hz", "psd_m2_per_hz"],
                       [rows_d, rows_f, scan.power[:, keep].ravel()])
    modes, lam0 = [], None
    for d, (lo, hi) in zip(deltas, scan.ridges):
        p = params.replace(detuning=float(centre + TWO_PI * d))
        lam = _lambda(p, branch) / TWO_PI
        mid = f1 - 0.5 * d
        modes.append({"delta_hz": d, "fitted_hz": [lo, hi], "fitted_provenance": "fitted",
                      "analytic_hz": [mid - 0.5 * lam.real, mid + 0.5 * lam.real],
                      "analytic_gap_hz": lam.real})
    lam0 = _lambda(params.replace(detuning=float(centre)), branch)
    summary = {
        "min_ridge_gap_hz": comparison(scan.min_gap, lam0.real / TWO_PI, "fitted", 0.05, unit="Hz"),
        "hyperbola_g_hz": comparison(scan.g_fit, params.g / TWO_PI, "fitted", 0.05, unit="Hz"),
    }
    files = {"spectrogram.csv": spectro, "modes.json": json_text({"scan": modes})}
    corr = _analytic_correlations(params.replace(detuning=float(centre)), branch, cfg)
    if corr is not None:
        tau, c12, g2 = corr
        files["correlations.csv"] = csv_text(
            ["tau_s", "g1_12_re_analytic", "g1_12_im_analytic", "g2_12_analytic"],
            [tau, c12.real, c12.imag, g2])
    return summary, files


def scenario_quench(params, branch, physical, cfg):
    from .langevin import _bin_average, run_quench
    from .rwa import quench_occupations
    from .sigproc import exchange_frequency

    s, a = cfg["simulation"], cfg["analysis"]
    gamma_fb = TWO_PI * a.get("feedback_hz", 3000.0)
    t_cool = a.get("cooling_s", 10.0 / (params.gamma + gamma_fb))
    n_bins = a.get("n_bins", 24)
    q = run_quench(params, gamma_fb, t_cool, s["duration_s"], dt=s["dt_s"], n_traj=s["n_traj"],
                   seed=s["seed"], branch=branch, record_every=s["record_every"], n_bins=n_bins,
                   include_drive=s["include_drive"])
    n1_init = params.n1 * params.gamma / (params.gamma + gamma_fb)
    o1, o2, cross = quench_occupations(params, n1_init, params.n2, q.t, branch)
    tb, b1, b2, e1, e2 = q.binned
    z = np.concatenate([(b1 - _bin_average(o1, n_bins)) / e1, (b2 - _bin_average(o2, n_bins)) / e2])
    summary = {
        "initial_occupation_1": comparison(q.initial[0], n1_init, "simulated", 0.1),
        "overlay_max_abs_z": comparison(np.max(np.abs(z)), 0.0, "simulated", 3.0, scale=1.0),
    }
    lam = _lambda(params, branch)
    modes = {"analytic": _modes_entry(params, branch)}
    if params.g > 0 and lam.real > 0:
        w, w_err = exchange_frequency(q.t, q.occ1, q.occ2, lam.real, params.gamma)
        summary["exchange_frequency_hz"] = comparison(w / TWO_PI, lam.real / TWO_PI, "fitted",
                                                      0.05, unit="Hz")
        modes["fitted_exchange_hz"] = {"value": w / TWO_PI, "stderr": w_err / TWO_PI,
                                       "provenance": "fitted"}
    files = {
        "quench.csv": csv_text(
            ["t_s", "occ1_simulated", "occ1_stderr", "occ1_analytic",
             "occ2_simulated", "occ2_stderr", "occ2_analytic"],
            [q.t, q.occ1, q.occ1_err, o1, q.occ2, q.occ2_err, o2]),
        "correlations.csv": csv_text(
            ["t_s", "cross_re_simulated", "cross_im_simulated", "cross_stderr",
             "cross_re_analytic", "cross_im_analytic"],
            [q.t, q.cross.real, q.cross.imag, q.cross_err, cross.real, cross.imag]),
        "modes.json": json_text(modes),
    }
    return summary, files


def _stationary_branch_frame(params, branch, physical, cfg):
    from .langevin import simulate
    from .sigproc import branch_frame_from_records

    s = cfg["simulation"]
    kwargs = {}
    target = params
    if s["force"] == "full":
        if physical is None:
            raise ConfigurationError("/simulation/force: the full force needs a physical block")
        target = physical
        kwargs["omegas"] = (params.omega1, params.omega2)
    ens = simulate(target, dt=s["dt_s"], duration=s["burn_in_s"] + s["duration_s"],
                   n_traj=s["n_traj"], seed=s["seed"], record_every=s["record_every"],
                   force=s["force"], include_drive=s["include_drive"], **kwargs)
    i0 = int(round(s["burn_in_s"] / ens.sample_dt))
    z = ens.z[..., i0:]
    return branch_frame_from_records(z[:, 0], z[:, 1], ens.sample_dt, params, branch, ens.mass,
                                     t0=i0 * ens.sample_dt)


def scenario_squeeze(params, branch, physical, cfg):
    from . import correlations as corr
    from .sigproc import (collective_variances, empirical_g1, segment_for_resolution,
                          welch_psd)

    if branch.kind == "single":
        raise ConfigurationError("/params/branch: squeeze needs the detuning or sum branch")
    b1, b2 = _stationary_branch_frame(params, branch, physical, cfg)
    thermal = 0.5 * (params.n1 + params.n2)
    zp, zm = collective_variances(b1, b2)
    zp, zm = zp / thermal, zm / thermal
    ana = corr.stationary_variances(params, branch)
    ap, am = ana.normalized
    summary = {
        "z_plus_ratio": comparison(zp, ap, "simulated", 0.1),
        "z_minus_ratio": comparison(zm, am, "simulated", 0.1),
        # 0.45 dB is the 10 % variance tolerance expressed in decibels
        "squashing_db": comparison(10 * math.log10(zp), ana.squashing_db, "simulated",
                                   0.45, scale=1.0, unit="dB"),
    }
    if params.g > 0 and zp <= 1 <= zm and ap <= 1 <= am:
        est = corr.squeezing_gain(zp, zm, params.g, params.gamma)
        ref = corr.squeezing_gain(ap, am, params.g, params.gamma)
        summary["gain_r"] = comparison(est.r, ref.r, "fitted", 0.05)
        summary["gain_r_max"] = analytic_value(params.g / params.gamma)
    a = cfg["analysis"]
    res = a.get("resolution_hz", params.gamma / TWO_PI / 10)
    seg = segment_for_resolution(b1.sample_rate, res, b1.n)
    sq = 1 / np.sqrt(2)
    plus = b1.with_values(sq * (b1.values - b2.values))
    minus = b1.with_values(sq * (b1.values + b2.values))
    pp, pm = welch_psd(plus, seg), welch_psd(minus, seg)
    band = np.abs(pp.freqs) <= a.get("fit_halfwidth_hz", 5000.0)
    files = {
        "psd.csv": csv_text(["freq_hz", "psd_plus_per_hz", "psd_minus_per_hz"],
                            [pp.freqs[band], pp.density[band], pm.density[band]]),
        "modes.json": json_text({"analytic": _modes_entry(params, branch)}),
    }
    tau_max = a.get("tau_max_s", 8.0 / params.gamma)
    tau, emp = empirical_g1(b1, b2, tau_max)
    ana_c = corr.g1(params, 1, 2, tau, branch, method="spectral")
    files["correlations.csv"] = csv_text(
        ["tau_s", "g1_12_re_simulated", "g1_12_im_simulated", "g1_12_re_analytic",
         "g1_12_im_analytic"], [tau, emp.real, emp.imag, ana_c.real, ana_c.imag])
    return summary, files


def scenario_distance_scan(params, branch, physical, cfg):
    from . import correlations as corr
    from .sigproc import eigenmode_splitting

    if branch.kind != "detuning":
        raise ConfigurationError("/params/branch: distance-scan needs the detuning branch")
    a = cfg["analysis"]
    kds = a.get("kd_values_pi", [params.kd / np.pi])
    settings = _settings(cfg)
    half = a.get("fit_halfwidth_hz", 3000.0)
    summary, modes, psd_cols, corr_rows = {}, [], None, []
    g = params.g
    for i, kd_pi in enumerate(kds):
        p = params.replace(kd=float(np.pi * kd_pi))
        res = eigenmode_splitting(p, settings, half)
        key = f"kd_{kd_pi:+.3f}pi"
        summary[f"{key}_re_splitting"] = comparison(res.measured.real / g, res.analytic.real / g,
                                                    "fitted", 0.15, scale=1.0, unit="g")
        summary[f"{key}_minus_im_splitting"] = comparison(-res.measured.imag / g,
                                                          -res.analytic.imag / g, "fitted",
                                                          0.15, scale=1.0, unit="g")
        modes.append({"kd_pi": kd_pi, "fitted_splitting_hz": res.measured / TWO_PI,
                      "analytic_splitting_hz": res.analytic / TWO_PI,
                      "plus": {"f0_hz": res.plus.f0, "width_hz": res.plus.width},
                      "minus": {"f0_hz": res.minus.f0, "width_hz": res.minus.width},
                      "phase_difference_rad": res.phase, "phase_locked": res.locked,
                      "provenance": "fitted"})
        band = np.abs(res.psd_plus.freqs) <= half
        n = int(band.sum())
        cols = [np.full(n, kd_pi), res.psd_plus.freqs[band], res.psd_plus.density[band],
                res.psd_minus.density[band]]
        psd_cols = cols if psd_cols is None else [np.concatenate([x, y])
                                                  for x, y in zip(psd_cols, cols)]
        try:
            c0 = corr.g1(p, 1, 2, 0.0, branch, method="spectral")
            corr_rows.append((kd_pi, complex(c0)))
        except FblabError:
            corr_rows.append((kd_pi, complex(np.nan, np.nan)))
    summary["locus_radius_g"] = analytic_value(1.0, "g")
    files = {
        "psd.csv": csv_text(["kd_pi", "freq_hz", "psd_plus_per_hz", "psd_minus_per_hz"], psd_cols),
        "modes.json": json_text({"distance_scan": modes}),
        "correlations.csv": csv_text(["kd_pi", "g1_12_zero_lag_re_analytic",
                                      "g1_12_zero_lag_im_analytic"],
                                     [[r[0] for r in corr_rows], [r[1].real for r in corr_rows],
                                      [r[1].imag for r in corr_rows]]),
    }
    return summary, files


def scenario_kd_estimate(params, branch, physical, cfg):
    from . import correlations as corr
    from .sigproc import estimate_kd

    a = cfg["analysis"]
    kds = a.get("kd_values_pi", [params.kd / np.pi])
    settings = _settings(cfg)
    max_lag = a.get("max_lag_s", 8.0 / params.gamma)
    summary, modes, rows = {}, [], []
    phases = []
    for kd_pi in kds:
        p = params.replace(kd=float(np.pi * kd_pi))
        est = estimate_kd(p, settings, max_lag, branch, include_drive=cfg["simulation"]["include_drive"])
        truth = (np.pi * kd_pi) % np.pi
        diff = (est.kd - truth + 0.5 * np.pi) % np.pi - 0.5 * np.pi
        summary[f"kd_{kd_pi:+.3f}pi"] = comparison((truth + diff) / np.pi, truth / np.pi, "fitted",
                                                   0.05, scale=1.0, unit="pi")
        phases.append(est.phase)
        modes.append({"kd_pi": kd_pi, "phase_pos_rad": est.fit.phase_pos,
                      "phase_neg_rad": est.fit.phase_neg, "phase_mean_rad": est.phase,
                      "phase_law_rad": corr.gbar_prime(p, branch), "estimated_kd_pi": est.kd / np.pi,
                      "fitted_omega_hz": est.fit.omega / TWO_PI,
                      "analytic": _modes_entry(p, branch)})
        g2a = corr.g2(p, est.series.tau, branch=branch)
        c0 = corr.g1_matrix(p, 0.0, branch, method="spectral")
        g2n = g2a / float((c0[0, 0] * c0[1, 1]).real) - 1
        rows.append([np.full(len(est.series.tau), kd_pi), est.series.tau, est.series.values,
                     est.series.stderr, est.fit.filtered, g2n])
    if len(kds) >= 2:
        slope = np.polyfit(np.pi * np.asarray(kds), np.unwrap(phases), 1)[0]
        sign = float(np.sign(branch.effective_detuning(params)))
        law = -2 * sign
        summary["phase_slope"] = comparison(slope, law, "fitted", 0.05)
    cols = [np.concatenate(c) for c in zip(*rows)]
    files = {
        "correlations.csv": csv_text(["kd_pi", "tau_s", "g2_12_simulated", "g2_12_stderr",
                                      "g2_12_filtered", "g2_12_analytic"], cols),
        "modes.json": json_text({"kd_estimate": modes}),
    }
    return summary, files


def scenario_sms(params, branch, physical, cfg):
    from .sigproc import breit_wigner_fit, empirical_g1, segment_for_resolution, welch_psd

    if branch.kind != "single":
        raise ConfigurationError("/params/branch: sms needs single1 or single2")
    b, _ = _stationary_branch_frame(params, branch, physical, cfg)
    a = cfg["analysis"]
    res = a.get("resolution_hz", params.gamma / TWO_PI / 10)
    seg = segment_for_resolution(b.sample_rate, res, b.n)
    psd = welch_psd(b, seg)
    lam = _lambda(params, branch)
    half = a.get("fit_halfwidth_hz", abs(lam) / TWO_PI + 4 * params.gamma / TWO_PI)
    # the b_j spectrum is dominated by one line at +-Re(Lambda)/2; its mirror is weak
    fit = breit_wigner_fit(psd, (-half, half))
    summary = {"mode_offset_hz": comparison(abs(fit.f0), 0.5 * lam.real / TWO_PI, "fitted", 0.1,
                                            scale=params.gamma / TWO_PI, unit="Hz")}
    band = np.abs(psd.freqs) <= half
    tau, c = empirical_g1(b, b, a.get("tau_max_s", 8.0 / params.gamma))
    files = {
        "psd.csv": csv_text(["freq_hz", "psd_per_hz"], [psd.freqs[band], psd.density[band]]),
        "modes.json": json_text({"analytic": _modes_entry(params, branch)}),
        "correlations.csv": csv_text(["tau_s", "g1_jj_re_simulated", "g1_jj_im_simulated"],
                                     [tau, c.real, c.imag]),
    }
    return summary, files


SCENARIOS = {
    "scan-detuning": scenario_scan_detuning,
    "quench": scenario_quench,
    "squeeze": scenario_squeeze,
    "distance-scan": scenario_distance_scan,
    "kd-estimate": scenario_kd_estimate,
    "sms": scenario_sms,
}


def run_config(cfg: dict, out_dir: Path) -> dict:
    """Execute a validated, resolved config and write its outputs; returns the summary."""
    params, branch, physical = build_model(cfg)
    entries, files = SCENARIOS[cfg["scenario"]](params, branch, physical, cfg)
    summary = {"scenario": cfg["scenario"], "version": __version__, "config": cfg,
               "params": params.to_dict(), "branch": str(branch), "results": entries,
               "all_pass": all(e.get("pass", True) for e in entries.values())}
    files["summary.json"] = json_text(summary)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out_dir / name).write_text(text, encoding="utf-8")
    return summary


# ---------------------------------------------------------------- entry point

def _list_presets(stream) -> None:
    stream.write(f"{'name':<14} {'scenario':<14} {'gamma/2pi':>10} {'g/2pi':>8} "
                 f"{'|delta|/2pi':>11} {'kd/pi':>7}  branch\n")
    for name in preset_names():
        cfg = load_preset(name)
        b = cfg.get("params", {})
        stream.write(f"{name:<14} {cfg['scenario']:<14} {b.get('gamma_hz', float('nan')):>10.0f} "
                     f"{b.get('g_hz', float('nan')):>8.0f} {abs(b.get('delta_hz', 0.0)):>11.0f} "
                     f"{b.get('kd_pi', 0.0):>7.3f}  {b.get('branch', 'detuning')}\n")


def _origin(exc: BaseException) -> str:
    """Module of the innermost fblab frame that raised ``exc``."""
    name = type(exc).__module__
    tb = exc.__traceback__
    while tb is not None:
        mod = tb.tb_frame.f_globals.get("__name__", "")
        if mod.startswith("fblab"):
            name = mod
        tb = tb.tb_next
    return name


def _set_threads(n: int) -> None:
    import numba

    from . import langevin  # noqa: F401  selects the threading layer before the pool starts

    if not 1 <= n <= numba.config.NUMBA_NUM_THREADS:
        raise ConfigurationError(
            f"--threads must be between 1 and {numba.config.NUMBA_NUM_THREADS}")
    numba.set_num_threads(n)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fblab",
                                     description="Floquet optical-binding simulation lab")
    parser.add_argument("--version", action="version", version=f"fblab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario config (file path or preset name)")
    run.add_argument("config")
    run.add_argument("--seed", type=int, default=None, help="override the simulation seed")
    run.add_argument("--out", default=None, help="output directory")
    run.add_argument("--threads", type=int, default=None, help="number of simulation threads")
    sub.add_parser("list-presets", help="list the built-in parameter sets")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    if args.command == "list-presets":
        _list_presets(sys.stdout)
        return EXIT_OK
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigurationError("--seed must be an unsigned 64-bit integer")
        if args.threads is not None:
            _set_threads(args.threads)
        cfg = resolve_config(read_config(args.config), args.seed)
        out = Path(args.out or cfg.get("output", {}).get("dir", "fblab-out"))
        summary = run_config(cfg, out)
    except ConfigurationError as exc:
        sys.stderr.write(f"fblab: configuration error: {exc}\n")
        return EXIT_CONFIG
    except (FblabError, FloatingPointError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"fblab: numerical failure in {_origin(exc)}: "
                         f"{type(exc).__name__}: {exc}\n")
        return EXIT_NUMERICAL
    status = "all comparisons pass" if summary["all_pass"] else "some comparisons fail"
    sys.stdout.write(f"{cfg['scenario']}: {status}; outputs in {out}\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
