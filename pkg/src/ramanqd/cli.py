"""Command-line front end.

Every subcommand reads a flat key-value config (see :mod:`ramanqd.config`),
runs one reproducible experiment, and writes CSV/JSON (optionally SVG) into
the output directory.  Identical config and seed give byte-identical output.
Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import calibrate as cal
from . import experiments as exp
from . import noise, pathways, stark
from .config import ExperimentConfig, load_config
from .dynamics import (
    PulseEnvelope,
    pi_pulse_metrics,
    propagate,
    pulse_psd,
    shaped_pulse,
    square_pulse,
)
from .errors import ConfigError, RamanError
from .hamiltonian import build_effective_hamiltonian
from .output import svg_line_plot, write_csv, write_json

MJ_NAMES = ("p5_2", "p3_2", "p1_2", "m1_2", "m3_2", "m5_2")


def _setup_from_config(cfg: ExperimentConfig):
    atom = cfg.atom()
    par, perp = cfg.beam("par"), cfg.beam("perp")
    i, f, n = cfg.transition(atom)
    setup = exp.setup_transition(atom, par, perp, n, initial=i, final=f,
                                 include_f=cfg.get_bool("sim.include_f"))
    if cfg.get_bool("sim.refine_resonance"):
        setup = exp.refine_resonance(setup)
    return atom, setup


def _dt(cfg: ExperimentConfig):
    raw = cfg.get("sim.dt_s")
    return None if raw.strip() == "auto" else cfg.get_float("sim.dt_s")


def _duration(cfg: ExperimentConfig, setup) -> float:
    raw = cfg.get("pulse.duration_s")
    if raw.strip() == "auto":
        return 2.3 * setup.analytic_pi_time
    value = cfg.get_float("pulse.duration_s")
    if value <= 0:
        raise ConfigError("pulse.duration_s must be positive")
    return value


def _envelopes(cfg: ExperimentConfig, duration: float):
    shape = cfg.get("pulse.shape")
    if shape == "square":
        return None
    if shape in ("sin2", "sin4"):
        return {
            "R_perp": shaped_pulse(shape, duration, cfg.get_float("pulse.ramp_fraction")),
            "R_par": square_pulse(duration),
        }
    raise ConfigError(f"unknown pulse.shape {shape!r}")


# --- subcommands ---------------------------------------------------------------


def cmd_flop(cfg: ExperimentConfig, out: str, svg: bool, workers: int) -> None:
    atom, setup = _setup_from_config(cfg)
    duration = _duration(cfg, setup)
    envelopes = _envelopes(cfg, duration)
    traj = exp.simulate_flop(setup, duration=duration, envelopes=envelopes,
                             samples=cfg.get_int("sim.samples"), dt=_dt(cfg))
    header = ["time_s"] + [f"pop_mj_{n}" for n in MJ_NAMES]
    rows = [[t] + list(p) for t, p in zip(traj.times, traj.populations)]
    write_csv(os.path.join(out, "flop.csv"), header, rows)

    summary = {
        "config": cfg.resolved(),
        "omega_r_rad_s": setup.omega_r,
        "omega_r_hz": setup.omega_r / (2 * np.pi),
        "analytic_rabi_rad_s": abs(setup.analytic_rabi),
        "analytic_pi_time_s": setup.analytic_pi_time,
        "norm_drift": traj.metadata["norm_drift"],
    }
    try:
        w, a = exp.fit_flop_rabi(traj, setup.final, abs(setup.analytic_rabi))
        summary["fit_rabi_rad_s"] = w
        summary["fit_amplitude"] = a
        summary["fit_pi_time_s"] = float(np.pi / w)
        metrics = pi_pulse_metrics(traj, setup.final)
        summary["first_max_pi_time_s"] = metrics.pi_time
        summary["max_intermediate"] = metrics.max_intermediate
    except RamanError:
        pass
    write_json(os.path.join(out, "flop.json"), summary)
    if svg:
        svg_line_plot(os.path.join(out, "flop.svg"), traj.times * 1e6,
                      {f"mJ {n}": traj.populations[:, k] for k, n in enumerate(MJ_NAMES)},
                      x_label="time (us)", y_label="population", title="resonant flop")


def _spectrum_point(args):
    atom, beams, psi0_idx, target, duration, samples, dt = args
    ham = build_effective_hamiltonian(atom, beams)
    psi0 = np.zeros(ham.dim, dtype=complex)
    psi0[psi0_idx] = 1.0
    traj = propagate(ham, psi0, duration, samples=samples, dt=dt)
    return float(traj.population(target)[-1])


def cmd_spectrum(cfg: ExperimentConfig, out: str, svg: bool, workers: int) -> None:
    atom, setup = _setup_from_config(cfg)
    raw = cfg.get("pulse.duration_s")
    duration = setup.analytic_pi_time if raw.strip() == "auto" else cfg.get_float("pulse.duration_s")
    span = 2 * np.pi * cfg.get_float("spectrum.span_hz")
    points = cfg.get_int("sweep.points")
    offsets = np.linspace(-span / 2, span / 2, points)
    moving = "R_perp"
    tasks = []
    for off in offsets:
        beams = tuple(b.with_offset(setup.omega_r + off) if b.label == moving else b
                      for b in setup.beams)
        tasks.append((atom, beams, setup.initial, setup.final, duration,
                      max(cfg.get_int("sim.samples") // 4, 101), _dt(cfg)))
    transfers = _run_pool(_spectrum_point, tasks, workers)
    rows = [[setup.omega_r + off, (setup.omega_r + off) / (2 * np.pi), off / (2 * np.pi), tr]
            for off, tr in zip(offsets, transfers)]
    write_csv(os.path.join(out, "spectrum.csv"),
              ["omega_r_rad_s", "omega_r_hz", "offset_hz", "transfer_population"], rows)
    write_json(os.path.join(out, "spectrum.json"), {
        "config": cfg.resolved(),
        "resonance_rad_s": setup.omega_r,
        "peak_offset_hz": float(offsets[int(np.argmax(transfers))] / (2 * np.pi)),
        "duration_s": duration,
    })
    if svg:
        svg_line_plot(os.path.join(out, "spectrum.svg"),
                      [r[2] for r in rows], {"transfer": transfers},
                      x_label="drive offset from resonance (Hz)",
                      y_label="transfer population", title="multi-photon spectroscopy")


def _sweep_point(args):
    atom, p_par, p_perp, photons, dt = args
    par, perp = exp.standard_beams(p_par, p_perp)
    setup = exp.setup_transition(atom, par, perp, photons)
    w_num = exp.numeric_rabi(setup, dt=dt)
    return float(abs(setup.analytic_rabi)), float(w_num)


def cmd_power_sweep(cfg: ExperimentConfig, out: str, svg: bool, workers: int) -> None:
    atom = cfg.atom()
    par = cfg.beam("par")
    _, _, photons = cfg.transition(atom)
    powers = cfg.sweep_powers()
    numeric = cfg.get_bool("sim.numeric")
    analytic = exp.analytic_power_sweep(atom, powers, p_par=par.power, photons=photons)
    slope = exp.loglog_slope(powers, analytic)
    if numeric:
        tasks = [(atom, par.power, float(p), photons, _dt(cfg)) for p in powers]
        pairs = _run_pool(_sweep_point, tasks, workers)
        numeric_vals = np.array([b for _, b in pairs])
        slope_num = exp.loglog_slope(powers, numeric_vals)
        rows = [
            [p, a, b, (a - b) / b, slope, slope_num]
            for p, a, b in zip(powers, analytic, numeric_vals)
        ]
        header = ["power_perp_w", "rabi_analytic_rad_s", "rabi_numeric_rad_s",
                  "fractional_residual", "loglog_slope_analytic", "loglog_slope_numeric"]
    else:
        rows = [[p, a, slope] for p, a in zip(powers, analytic)]
        header = ["power_perp_w", "rabi_analytic_rad_s", "loglog_slope_analytic"]
    write_csv(os.path.join(out, "power_sweep.csv"), header, rows)
    payload = {"config": cfg.resolved(), "photons": photons,
               "loglog_slope_analytic": slope}
    if numeric:
        payload["loglog_slope_numeric"] = slope_num
    write_json(os.path.join(out, "power_sweep.json"), payload)
    if svg:
        series = {"analytic": analytic}
        if numeric:
            series["numeric"] = numeric_vals
        svg_line_plot(os.path.join(out, "power_sweep.svg"), powers * 1e3, series,
                      x_label="crossed-beam power (mW)", y_label="|Rabi| (rad/s)",
                      title=f"{photons}-photon power scaling", log_y=True)


def cmd_shape_compare(cfg: ExperimentConfig, out: str, svg: bool, workers: int) -> None:
    atom = cfg.atom()
    par, perp = cfg.beam("par"), cfg.beam("perp")
    results = exp.shape_comparison(
        atom, p_par=par.power, p_perp=perp.power,
        ramp_fraction=cfg.get_float("pulse.ramp_fraction"),
        stretch=cfg.get_float("pulse.stretch"), dt=_dt(cfg),
        refine=cfg.get_bool("sim.refine_resonance"),
    )
    rows = [[r.shape, r.duration, r.final_transfer, r.final_leakage, r.max_leakage]
            for r in results]
    write_csv(os.path.join(out, "shape_compare.csv"),
              ["shape", "duration_s", "final_transfer", "final_leakage", "max_leakage"],
              rows)
    square = next(r for r in results if r.shape == "square")
    ratios = {
        r.shape: (square.final_leakage / r.final_leakage if r.final_leakage > 0 else np.inf)
        for r in results if r.shape != "square"
    }
    write_json(os.path.join(out, "shape_compare.json"),
               {"config": cfg.resolved(), "final_leakage_reduction": ratios})


def cmd_psd(cfg: ExperimentConfig, out: str, svg: bool, workers: int) -> None:
    atom, setup = _setup_from_config(cfg)
    t_pi = setup.analytic_pi_time
    carrier = 2 * np.pi * cfg.get_float("psd.carrier_hz")
    rate = cfg.get_float("psd.sample_rate_hz")
    stretch = cfg.get_float("pulse.stretch")
    ramp = cfg.get_float("pulse.ramp_fraction")
    rows = []
    series = {}
    for shape in ("square", "sin2", "sin4"):
        env = square_pulse(t_pi) if shape == "square" else shaped_pulse(shape, stretch * t_pi, ramp)
        freqs, psd_db = pulse_psd(env, carrier, rate)
        keep = np.abs(freqs - carrier / (2 * np.pi)) < 4e6
        for fq, db in zip(freqs[keep], psd_db[keep]):
            rows.append([shape, fq - carrier / (2 * np.pi), db])
        series[shape] = psd_db[keep]
        grid = freqs[keep] - carrier / (2 * np.pi)
    write_csv(os.path.join(out, "psd.csv"),
              ["shape", "freq_offset_hz", "psd_db_rel_carrier"], rows)
    write_json(os.path.join(out, "psd.json"), {"config": cfg.resolved(),
                                               "carrier_hz": carrier / (2 * np.pi)})
    if svg:
        svg_line_plot(os.path.join(out, "psd.svg"), grid, series,
                      x_label="offset from carrier (Hz)", y_label="PSD (dB)",
                      title="pulse power spectral density")


def cmd_budget(cfg: ExperimentConfig, out: str, svg: bool, workers: int) -> None:
    atom = cfg.atom()
    par = cfg.beam("par")
    powers = cfg.sweep_powers()
    model = noise.scale_sensitivity(
        noise.DephasingModel.from_ramsey_width(
            cfg.get_float("noise.sigma_t_s"), gamma=cfg.get_float("noise.gamma")),
        3)
    reports = exp.budget_sweep(atom, powers, p_par=par.power, dephasing=model)
    rows = [[p, r.pi_time, r.leakage, r.dephasing, r.scattering, r.total]
            for p, r in zip(powers, reports)]
    write_csv(os.path.join(out, "budget.csv"),
              ["power_perp_w", "pi_time_s", "leakage", "dephasing", "scattering", "total"],
              rows)
    write_json(os.path.join(out, "budget.json"), {"config": cfg.resolved()})
    if svg:
        svg_line_plot(os.path.join(out, "budget.svg"),
                      [r.pi_time * 1e6 for r in reports],
                      {"leakage": [r.leakage for r in reports],
                       "dephasing": [r.dephasing for r in reports],
                       "scattering": [r.scattering for r in reports],
                       "total": [r.total for r in reports]},
                      x_label="pi time (us)", y_label="infidelity",
                      title="pi-pulse error budget", log_y=True)


def cmd_shifts(cfg: ExperimentConfig, out: str, svg: bool, workers: int) -> None:
    atom = cfg.atom()
    beams = [cfg.beam("par"), cfg.beam("perp")]
    table = stark.shift_table(atom, beams, include_f=cfg.get_bool("sim.include_f"))
    header = ["mj"] + [f"shift_{b.label}_hz" for b in beams] + ["shift_total_hz"]
    rows = []
    for k, mj in enumerate(table.mjs):
        row = [mj] + [table.per_beam[b.label][k] / (2 * np.pi) for b in beams]
        row.append(table.total[k] / (2 * np.pi))
        rows.append(row)
    write_csv(os.path.join(out, "shifts.csv"), header, rows)
    print(",".join(header))
    for row in rows:
        print(",".join(f"{v:+.3f}" if isinstance(v, float) else str(v) for v in row))


def cmd_rabi_expr(cfg: ExperimentConfig, out: str, svg: bool, workers: int) -> None:
    atom, setup = _setup_from_config(cfg)
    d_man = atom.manifold("D5/2")
    paths = pathways.enumerate_pathways(
        atom, d_man.levels[setup.initial], d_man.levels[setup.final],
        setup.photons, setup.beams, include_f=cfg.get_bool("sim.include_f"))
    expr = pathways.generate_rabi_expression(atom, paths, setup.beams, setup.splittings)
    text = expr.describe()
    print(text)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "rabi_expr.txt"), "w", encoding="utf-8") as fh:
        fh.write(text + "\n")


def cmd_calibrate(cfg: ExperimentConfig, out: str, svg: bool, workers: int) -> None:
    atom = cfg.atom()
    par, perp = cfg.beam("par"), cfg.beam("perp")
    split_path = cfg.get("calibrate.splittings_csv").strip()
    rabi_path = cfg.get("calibrate.rabi_csv").strip()
    if split_path or rabi_path:
        if not (split_path and rabi_path):
            raise ConfigError("calibrate needs both splittings_csv and rabi_csv (or neither)")
        splits, rabi = _load_calibration_csvs(split_path, rabi_path, par.power)
    else:
        par_powers = np.linspace(0.02, par.power, 8)
        perp_powers = cfg.sweep_powers()
        fractions = tuple(abs(a) ** 2 for a in par.polarization)
        splits, rabi = cal.make_synthetic_calibration(
            atom, w_par=par.waist, w_perp=perp.waist, par_fractions=fractions,
            perp_template=perp, par_powers=par_powers, perp_powers=perp_powers,
            p_par=par.power,
            noise_splitting_hz=cfg.get_float("calibrate.noise_splitting_hz"),
            noise_rabi_rel=cfg.get_float("calibrate.noise_rabi_rel"),
            seed=cfg.seed(),
        )
        for ds in splits:
            i, j = ds.meta["pair"]
            write_csv(os.path.join(out, f"dataset_splitting_{i}{j}.csv"),
                      ["power_w", "splitting_hz", "err_hz"],
                      zip(ds.x, ds.y, ds.y_err))
        write_csv(os.path.join(out, "dataset_rabi.csv"),
                  ["power_w", "rabi_hz", "err_hz"], zip(rabi.x, rabi.y, rabi.y_err))
    result = cal.joint_fit_beams(atom, splits, rabi, perp)
    write_json(os.path.join(out, "calibration.json"), {
        "config": cfg.resolved(),
        "params": result.params,
        "uncertainties": result.uncertainties,
        "chi_square": result.chi_square,
        "chi_square_per_dof": result.chi_square_per_dof,
        "iterations": result.iterations,
        "residuals": result.residuals,
    })
    print("fitted parameters:")
    for k, v in result.params.items():
        print(f"  {k} = {v:.6g} +- {result.uncertainties[k]:.2g}")


def _load_calibration_csvs(split_path: str, rabi_path: str, p_par: float):
    data = np.loadtxt(split_path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 5:
        raise ConfigError("splittings CSV needs columns pair_i,pair_j,power_w,splitting_hz,err_hz")
    splits = []
    for i, j in sorted({(int(a), int(b)) for a, b in data[:, :2]}):
        sel = (data[:, 0] == i) & (data[:, 1] == j)
        block = data[sel]
        order = np.argsort(block[:, 2])
        splits.append(cal.Dataset("splitting-vs-power", block[order, 2],
                                  block[order, 3], block[order, 4],
                                  meta={"pair": (i, j)}))
    rd = np.loadtxt(rabi_path, delimiter=",", skiprows=1, ndmin=2)
    if rd.shape[1] != 3:
        raise ConfigError("rabi CSV needs columns power_w,rabi_hz,err_hz")
    order = np.argsort(rd[:, 0])
    rabi = cal.Dataset("rabi-vs-power", rd[order, 0], rd[order, 1], rd[order, 2],
                       meta={"p_par": p_par})
    return splits, rabi


def cmd_ramsey(cfg: ExperimentConfig, out: str, svg: bool, workers: int) -> None:
    sigma_t = cfg.get_float("noise.sigma_t_s")
    model = noise.DephasingModel.from_ramsey_width(sigma_t)
    delays = np.linspace(0.0, cfg.get_float("ramsey.max_delay_s"),
                         cfg.get_int("ramsey.points"))
    analytic = noise.ramsey_contrast(delays, model.sigma_f)
    mc = noise.ramsey_contrast_mc(delays, model.sigma_f,
                                  draws=cfg.get_int("ramsey.mc_draws"),
                                  seed=cfg.seed())
    rows = list(zip(delays, analytic, mc))
    write_csv(os.path.join(out, "ramsey.csv"),
              ["delay_s", "contrast_analytic", "contrast_mc"], rows)
    write_json(os.path.join(out, "ramsey.json"), {
        "config": cfg.resolved(),
        "sigma_t_s": sigma_t,
        "one_over_e_delay_s": float(np.sqrt(2.0) * sigma_t),
    })
    if svg:
        svg_line_plot(os.path.join(out, "ramsey.svg"), delays * 1e3,
                      {"analytic": analytic, "monte-carlo": mc},
                      x_label="delay (ms)", y_label="contrast", title="Ramsey contrast")


def _run_pool(fn, tasks, workers: int):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


COMMANDS = {
    "flop": cmd_flop,
    "spectrum": cmd_spectrum,
    "power-sweep": cmd_power_sweep,
    "shape-compare": cmd_shape_compare,
    "psd": cmd_psd,
    "budget": cmd_budget,
    "shifts": cmd_shifts,
    "rabi-expr": cmd_rabi_expr,
    "calibrate": cmd_calibrate,
    "ramsey": cmd_ramsey,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ramanqd",
        description="Multi-photon Raman transition simulator and calibrator",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", default=None, help="experiment config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--svg", action="store_true", help="also write SVG plots")
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                       help="parallel workers for sweep points")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.values["seed"] = str(args.seed)
        COMMANDS[args.command](cfg, args.out, args.svg, args.workers)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except RamanError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
