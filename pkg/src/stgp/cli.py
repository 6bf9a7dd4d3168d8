"""Command-line surface tying the pipeline together.

Subcommands: simulate, fit, filter, spectrum, detect, compare-baseline.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Report-producing commands render figures next to their delimited outputs
unless --no-plots is given.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import config as cfgio
from .basis import wavenumber_sets
from .baseline import build_baseline
from .core import DataFormatError, NumericalError, StgpError
from .covariance import power_spectrum
from .detect import AlarmReport, DetectionConfig, beta_traces, alpha_traces, detect
from .dynamics import build_model
from .estimation import FitTemplate, fit
from .gridfile import read_cube, write_cube
from .kalman import kalman_filter, reconstruct_fields
from .simulate import simulate_spde, scenario_with, spde_equivalent_params
from .util import fmt17


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits with code 1 on usage problems."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="stgp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_sim = sub.add_parser("simulate", help="integrate a scenario and write the cube")
    p_sim.add_argument("--scenario", required=True, help="scenario config file")
    p_sim.add_argument("--out", required=True, help="output cube path (.stgp or .csv)")
    p_sim.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p_sim.add_argument("--meta", default=None, help="optional metadata config output")

    p_fit = sub.add_parser("fit", help="maximum-likelihood parameter estimation")
    p_fit.add_argument("--data", required=True, help="input cube")
    p_fit.add_argument("--init", required=True,
                       help="config with initial [params], optional [obs] and [fit]")
    p_fit.add_argument("--out", required=True, help="fitted parameter config output")
    p_fit.add_argument("--lowpass", type=int, default=None)
    p_fit.add_argument("--anisotropic", action="store_true")
    p_fit.add_argument("--demean", action="store_true")

    p_filt = sub.add_parser("filter", help="run the Kalman filter and export results")
    p_filt.add_argument("--data", required=True, help="input cube")
    p_filt.add_argument("--params", default=None, help="parameter config ([params]/[obs])")
    p_filt.add_argument("--scenario", default=None,
                        help="derive filter parameters from a scenario config instead")
    p_filt.add_argument("--model", choices=("proposed", "baseline"), default="proposed")
    p_filt.add_argument("--out", required=True, help="output directory")
    p_filt.add_argument("--obs-var", type=float, default=None,
                        help="observation-noise variance override")
    p_filt.add_argument("--lowpass", type=int, default=None)
    p_filt.add_argument("--watch", default=None,
                        help="wavenumbers for trace export, e.g. '0,1 1,0 2,2'")
    p_filt.add_argument("--ar-coeff", type=float, default=0.95)
    p_filt.add_argument("--growth-noise-var", type=float, default=1e-2)
    p_filt.add_argument("--no-plots", action="store_true")

    p_spec = sub.add_parser("spectrum", help="dump the power spectrum on a grid")
    p_spec.add_argument("--params", required=True)
    p_spec.add_argument("--out", required=True, help="CSV output path")
    p_spec.add_argument("--umax", type=float, default=8.0 * np.pi)
    p_spec.add_argument("--vmax", type=float, default=8.0 * np.pi)
    p_spec.add_argument("--n", type=int, default=65)
    p_spec.add_argument("--no-plots", action="store_true")

    p_det = sub.add_parser("detect", help="change detection on exported traces")
    p_det.add_argument("--traces", required=True, help="trace CSV from 'filter'")
    p_det.add_argument("--config", default=None, help="config with a [detection] section")
    p_det.add_argument("--out", required=True, help="report output path")
    p_det.add_argument("--no-plots", action="store_true")

    p_cmp = sub.add_parser("compare-baseline",
                           help="run both models and tabulate their scores")
    p_cmp.add_argument("--data", required=True)
    p_cmp.add_argument("--params", default=None)
    p_cmp.add_argument("--scenario", default=None)
    p_cmp.add_argument("--out", required=True, help="table CSV output")
    p_cmp.add_argument("--obs-var", type=float, default=None)
    p_cmp.add_argument("--lowpass", type=int, default=None)
    p_cmp.add_argument("--config", default=None, help="detection config")
    p_cmp.add_argument("--ar-coeff", type=float, default=0.95)
    p_cmp.add_argument("--growth-noise-var", type=float, default=1e-2)
    p_cmp.add_argument("--no-plots", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 1
    handlers = {
        "simulate": _cmd_simulate,
        "fit": _cmd_fit,
        "filter": _cmd_filter,
        "spectrum": _cmd_spectrum,
        "detect": _cmd_detect,
        "compare-baseline": _cmd_compare,
    }
    try:
        handlers[args.command](args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (DataFormatError, FileNotFoundError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (StgpError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def _cmd_simulate(args):
    spec = cfgio.read_scenario(args.scenario)
    if args.seed is not None:
        spec = scenario_with(spec, seed=args.seed)
    cube, meta = simulate_spde(spec)
    write_cube(args.out, cube)
    print(f"wrote {cube.n_frames} frames ({spec.grid.n1}x{spec.grid.n2}) to {args.out}")
    print(f"change_time={fmt17(meta['change_time'])} change_frame={meta['change_frame']} "
          f"flagged_sources={','.join(map(str, meta['flagged_sources']))} seed={meta['seed']}")
    if args.meta:
        import configparser
        mc = configparser.ConfigParser()
        mc["change"] = {
            "time": fmt17(meta["change_time"]),
            "frame": str(meta["change_frame"]),
            "flagged_sources": ",".join(map(str, meta["flagged_sources"])),
            "seed": str(meta["seed"]),
        }
        with open(args.meta, "w") as fh:
            mc.write(fh)


def _filter_params(args):
    """Resolve (params, obs_var) from --params or --scenario."""
    if args.params:
        p, obs_var = cfgio.read_params(args.params)
    elif args.scenario:
        spec = cfgio.read_scenario(args.scenario)
        p = spde_equivalent_params(spec.params, spec.half_diffusion)
        obs_var = spec.noise_var
    else:
        raise DataFormatError("pass --params or --scenario")
    if args.obs_var is not None:
        obs_var = args.obs_var
    if obs_var is None:
        obs_var = 0.01
    return p, obs_var


def _parse_watch(text):
    if text is None:
        return None
    toks = [t for t in text.replace(";", " ").split() if t]
    return tuple(tuple(int(v) for v in t.split(",")) for t in toks)


def _write_traces_csv(path, traces: dict):
    keys = list(traces)
    K = len(next(iter(traces.values())))
    with open(path, "w") as fh:
        header = ["frame"] + [f"k_{k[0]}_{k[1]}" for k in keys]
        fh.write(",".join(header) + "\n")
        for t in range(K):
            row = [str(t)] + [fmt17(traces[k][t]) for k in keys]
            fh.write(",".join(row) + "\n")


def _read_traces_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if not header or header[0] != "frame":
        raise DataFormatError(f"{path}: not a trace CSV (missing 'frame' column)")
    traces = {}
    for j, name in enumerate(header[1:], start=1):
        parts = name.split("_")
        if len(parts) != 3 or parts[0] != "k":
            raise DataFormatError(f"{path}: bad trace column name {name!r}")
        k = (int(parts[1]), int(parts[2]))
        traces[k] = np.array([float(r[j]) for r in rows])
    return traces


def _build_filter_model(cube, p, args):
    sets = wavenumber_sets(cube.grid.n1, cube.grid.n2)
    if args.model == "baseline":
        return build_baseline(cube.grid, sets, p, cube.dt, ar_coeff=args.ar_coeff,
                              growth_noise_var=args.growth_noise_var,
                              lowpass=args.lowpass)
    return build_model(cube.grid, sets, p, cube.dt, lowpass=args.lowpass)


def _default_watch(model):
    return tuple(k for k in sorted(model.block_index)
                 if max(abs(k[0]), abs(k[1])) <= 3)


def _cmd_filter(args):
    cube = read_cube(args.data)
    p, obs_var = _filter_params(args)
    model = _build_filter_model(cube, p, args)
    fr = kalman_filter(model, cube, obs_var)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)

    K = fr.n_steps
    value = np.empty_like(cube.frames)
    deriv = np.empty_like(cube.frames)
    for t in range(K):
        pair = reconstruct_fields(model, fr.means[t])
        value[t] = pair.value_field
        deriv[t] = pair.derivative_field
    np.savetxt(outdir / "filtered_fields.csv", value, fmt="%.17g", delimiter=",")
    np.savetxt(outdir / "derivative_fields.csv", deriv, fmt="%.17g", delimiter=",")

    watch = _parse_watch(args.watch) or _default_watch(model)
    a_tr = alpha_traces(fr, watch)
    b_tr = beta_traces(fr, watch)
    _write_traces_csv(outdir / "alpha_traces.csv", a_tr)
    _write_traces_csv(outdir / "beta_traces.csv", b_tr)

    import configparser
    summary = configparser.ConfigParser()
    summary["filter"] = {
        "model": args.model,
        "loglik": fmt17(fr.loglik),
        "frames": str(K),
        "state_dim": str(model.state_dim),
        "obs_var": fmt17(obs_var),
    }
    with open(outdir / "summary.cfg", "w") as fh:
        summary.write(fh)
    print(f"{args.model} filter: loglik = {fr.loglik:.6f}; results in {outdir}")

    if not args.no_plots:
        from . import plots
        times = cube.times
        plots.plot_field_snapshots(value, cube.grid, times, outdir / "filtered_fields.png",
                                   title="filtered field")
        plots.plot_field_snapshots(deriv, cube.grid, times, outdir / "derivative_fields.png",
                                   title="filtered time derivative")
        plots.plot_traces(a_tr, outdir / "alpha_traces.png", title="field amplitudes")
        plots.plot_traces(b_tr, outdir / "beta_traces.png", title="derivative amplitudes")


def _cmd_fit(args):
    cube = read_cube(args.data)
    cfg = cfgio.load_config(args.init)
    p0, obs0 = cfgio.params_from_config(cfg)
    opt = cfgio.optimizer_from_config(cfg)
    template = FitTemplate(n1=cube.grid.n1, n2=cube.grid.n2, dt=cube.dt,
                           extent=cube.grid.extent, lowpass=args.lowpass,
                           anisotropic=args.anisotropic, demean=args.demean)
    result = fit(cube, p0, obs0 if obs0 else 0.01, template, opt)
    cfgio.write_params(args.out, result.params, result.obs_var)
    print(f"fit finished after {result.n_iters} iterations "
          f"(converged={result.converged}); objective = {result.objective:.6f}")
    print(f"wrote fitted parameters to {args.out}")


def _cmd_spectrum(args):
    p, _ = cfgio.read_params(args.params)
    u1 = np.linspace(-args.umax, args.umax, args.n)
    u2 = np.linspace(-args.umax, args.umax, args.n)
    v = np.linspace(-args.vmax, args.vmax, args.n)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    grid_vals = np.empty((args.n, args.n))
    with open(out, "w") as fh:
        fh.write("u1,u2,v,value\n")
        for i, a in enumerate(u1):
            for j, b in enumerate(u2):
                val = float(power_spectrum(np.array([a, b]), 0.0, p))
                grid_vals[i, j] = val
                fh.write(f"{fmt17(a)},{fmt17(b)},0,{fmt17(val)}\n")
        for vv in v:
            val = float(power_spectrum(np.zeros(2), vv, p))
            fh.write(f"0,0,{fmt17(vv)},{fmt17(val)}\n")
    print(f"wrote spectrum samples to {out}")
    if not args.no_plots:
        from . import plots
        v_slice = np.array([float(power_spectrum(np.zeros(2), vv, p)) for vv in v])
        plots.plot_spectrum_slices(u1, u2, v, grid_vals, v_slice,
                                   out.with_suffix(".png"), title="power spectrum")


def _cmd_detect(args):
    traces = _read_traces_csv(args.traces)
    det_cfg = DetectionConfig()
    if args.config:
        det_cfg = cfgio.detection_from_config(cfgio.load_config(args.config))
    watch = [k for k in det_cfg.watch_set if k in traces]
    if watch:
        traces = {k: traces[k] for k in watch}
    report = detect(traces, det_cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_report(out, report)
    _write_traces_csv(out.with_name(out.stem + "_traces.csv"), traces)
    combined = report.combined if report.combined is not None else "none"
    print(f"combined alarm frame: {combined}")
    if not args.no_plots:
        from . import plots
        plots.plot_traces(traces, out.with_suffix(".png"), alarms=report.alarms,
                          title="monitored traces")


def _write_report(path, report: AlarmReport):
    with open(path, "w") as fh:
        fh.write("[report]\n")
        fh.write(f"method = {report.method}\n")
        fh.write(f"baseline_window = {report.baseline_window}\n")
        combined = report.combined if report.combined is not None else "none"
        fh.write(f"combined_alarm = {combined}\n\n")
        fh.write("[alarms]\n")
        for k, frame in sorted(report.alarms.items()):
            fh.write(f"k_{k[0]}_{k[1]} = {frame if frame is not None else 'none'}\n")
        fh.write("\n[stats]\n")
        for k, st in sorted(report.stats.items()):
            flag = " degenerate" if st.degenerate else ""
            fh.write(f"k_{k[0]}_{k[1]} = center {fmt17(st.center)} "
                     f"scale {fmt17(st.scale)}{flag}\n")


def _central_derivative(frames, dt):
    """Central finite difference in time, one-sided at the ends."""
    d = np.empty_like(frames)
    d[1:-1] = (frames[2:] - frames[:-2]) / (2.0 * dt)
    d[0] = (frames[1] - frames[0]) / dt
    d[-1] = (frames[-1] - frames[-2]) / dt
    return d


def _cmd_compare(args):
    cube = read_cube(args.data)
    p, obs_var = _filter_params(args)
    det_cfg = DetectionConfig()
    if args.config:
        det_cfg = cfgio.detection_from_config(cfgio.load_config(args.config))
    sets = wavenumber_sets(cube.grid.n1, cube.grid.n2)
    fd_ref = _central_derivative(cube.frames, cube.dt)

    rows = {"model": [], "loglik": [], "field_mse": [], "deriv_mse": [],
            "alarm_frame": []}
    for name in ("proposed", "baseline"):
        if name == "proposed":
            model = build_model(cube.grid, sets, p, cube.dt, lowpass=args.lowpass)
        else:
            model = build_baseline(cube.grid, sets, p, cube.dt,
                                   ar_coeff=args.ar_coeff,
                                   growth_noise_var=args.growth_noise_var,
                                   lowpass=args.lowpass)
        fr = kalman_filter(model, cube, obs_var)
        K = fr.n_steps
        value = np.empty_like(cube.frames)
        deriv = np.empty_like(cube.frames)
        for t in range(K):
            pair = reconstruct_fields(model, fr.means[t])
            value[t] = pair.value_field
            deriv[t] = pair.derivative_field
        watch = [k for k in det_cfg.watch_set if k in model.block_index]
        report = detect(beta_traces(fr, watch), det_cfg)
        rows["model"].append(name)
        rows["loglik"].append(fr.loglik)
        rows["field_mse"].append(float(np.mean((value - cube.frames) ** 2)))
        rows["deriv_mse"].append(float(np.mean((deriv - fd_ref) ** 2)))
        rows["alarm_frame"].append(report.combined)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        fh.write("model,loglik,field_mse,deriv_mse,alarm_frame\n")
        for i in range(2):
            alarm = rows["alarm_frame"][i]
            fh.write(",".join([
                rows["model"][i],
                fmt17(rows["loglik"][i]),
                fmt17(rows["field_mse"][i]),
                fmt17(rows["deriv_mse"][i]),
                str(alarm) if alarm is not None else "none",
            ]) + "\n")
    for i in range(2):
        print(f"{rows['model'][i]}: loglik={rows['loglik'][i]:.4f} "
              f"field_mse={rows['field_mse'][i]:.6g} deriv_mse={rows['deriv_mse'][i]:.6g} "
              f"alarm={rows['alarm_frame'][i]}")
    if not args.no_plots:
        from . import plots
        plots.plot_comparison(rows, out.with_suffix(".png"), title="model comparison")


if __name__ == "__main__":
    sys.exit(main())
