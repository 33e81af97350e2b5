"""Config-driven batch runner.

Usage::

    diffthermo run experiment.json [--output-dir DIR]
    diffthermo list-models
    diffthermo version
    diffthermo --schema

The config is a JSON object; ``diffthermo --schema`` prints every key and the
columns of every CSV the runner writes.  ``DIFFTHERMO_OUTPUT_DIR`` overrides
``output_dir``.  The exit status is 0 when every invariant check passed, 1
when some check failed, 2 for configuration errors and 3 when an analysis
raised.
"""

from __future__ import annotations

import argparse
import datetime
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .decomp import GRID_THRESHOLDS, decompose, reference_fields
from .errors import ConfigError, DiffThermoError
from .fpe import assemble_operator, density_from_function, evolve, stationary_density
from .helmholtz import (
    CarnotSpec,
    carnot_curves,
    gaussian_sigma_table,
    maxwell_check,
    sigma_table,
    theta_and_force,
)
from .model import CATALOG, build_model
from .numerics import Grid, grid_integrate
from .ou import ou_mb_certificate, ou_stationary
from .sde import EnsembleSpec, driven_pendulum_ledger, simulate, write_snapshot
from .thermo import ledger

ENV_OUTPUT_DIR = "DIFFTHERMO_OUTPUT_DIR"
ANALYSES = ("stationary", "decompose", "ledger", "helmholtz", "carnot", "pendulum", "ou_analytic", "ensemble")

DEFAULT_TOLERANCES = {
    "stationary_divergence": 1e-10,
    "stationary_l2": 0.05,
    "decompose": dict(GRID_THRESHOLDS),
    "ledger_balance": 1e-2,
    "ledger_sign": 1e-8,
    "maxwell_se_ratio": 5.0,
    "sigma_z": 5.0,
    "carnot_equation": 1e-12,
    "pendulum_residual_rate": 1e-5,
    "ou_certificate": 1e-10,
}

SCHEMA = {
    "config": {
        "model": "{name: catalog model, params: {...}} (see list-models)",
        "grid": "{bounds: [[lo, hi], ...], counts: [int, ...], scheme: 'upwind' | 'central'}",
        "analyses": f"non-empty list drawn from {list(ANALYSES)}",
        "tolerances": "overrides of the default tolerances (nested dict 'decompose' for tol_j/tol_div/tol_orth)",
        "seed": "integer (default 0)",
        "output_dir": "path (default 'diffthermo_out'); env DIFFTHERMO_OUTPUT_DIR overrides",
        "expected_classification": "optional; decompose fails its check when the verdict differs",
        "ledger": "{initial: {type: 'gaussian', mean, cov}, dt, steps, record_every}",
        "helmholtz": "{dim, alpha_grid, h_grid, n_samples, box_scale} for phi = x^T Xi(alpha)^-1 x / 2, Xi = diag(alpha, 1, ...)",
        "carnot": "{mu, nu, theta_hot, theta_cold, sigma_low, sigma_high, n_points}",
        "pendulum": "{m, k, eta, amplitude, frequency, x0, v0, dt, t_final, noise}",
        "ensemble": "{n_paths, dt, t_final, initial, snapshot: bool}",
    },
    "defaults": {"tolerances": DEFAULT_TOLERANCES},
    "outputs": {
        "summary.json": "metadata (timestamp, version), config, tolerances, per-analysis results and checks, passed",
        "stationary.csv": "x0..x{n-1}, f, J0..J{n-1}",
        "decompose.csv": "x0..x{n-1}, phi, j0..j{n-1}, j_dot_grad_phi",
        "ledger.csv": "t, F, S, ep_overdamped, ep_nonadiabatic, E_in, dphi_dt, dF_dt_numeric, balance_residual, entropy_residual",
        "helmholtz.csv": "h, alpha, sigma_B, sigma_se, theta, F_alpha",
        "carnot.csv": "branch, alpha, F_alpha",
        "pendulum.csv": "t, x, v, H, dissipation, input, noise_input, residual",
        "ensemble.csv": "t, mean_i..., cov_ij...",
        "ensemble_snapshot.bin": "b'DTENS001', <u8 n_paths, <u8 dim, <f8 t, then n_paths*dim <f8 values (row-major)",
    },
}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _check(value, tol, passed=None, kind="max"):
    if passed is None:
        passed = bool(value <= tol) if kind == "max" else bool(value >= tol)
    return {"value": value, "tolerance": tol, "passed": bool(passed)}


def load_config(path) -> dict:
    """Parse and validate a JSON experiment config."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return validate_config(cfg, str(path))


def validate_config(cfg, where: str = "config") -> dict:
    if not isinstance(cfg, dict):
        raise ConfigError(f"{where}: top level must be an object")
    allowed = set(SCHEMA["config"])
    for key in cfg:
        if key not in allowed:
            raise ConfigError(f"{where}: unknown key {key!r}")
    analyses = cfg.get("analyses")
    if not isinstance(analyses, list) or not analyses:
        raise ConfigError(f"{where}: key 'analyses' must be a non-empty list")
    for a in analyses:
        if a not in ANALYSES:
            raise ConfigError(f"{where}: analyses: unknown analysis {a!r}")
    needs_model = {"stationary", "decompose", "ledger", "ou_analytic", "ensemble"} & set(analyses)
    if needs_model:
        m = cfg.get("model")
        if not isinstance(m, dict) or "name" not in m:
            raise ConfigError(f"{where}: key 'model' with a 'name' is required for {sorted(needs_model)}")
        if m["name"] not in CATALOG:
            raise ConfigError(f"{where}: model.name: unknown model {m['name']!r}")
    if {"stationary", "decompose", "ledger"} & set(analyses):
        g = cfg.get("grid")
        if not isinstance(g, dict) or "bounds" not in g or "counts" not in g:
            raise ConfigError(f"{where}: key 'grid' with 'bounds' and 'counts' is required")
    for section in ("ledger", "carnot", "ensemble"):
        if section in analyses and section not in cfg:
            raise ConfigError(f"{where}: analysis {section!r} needs a {section!r} section")
    return cfg


def _tolerances(cfg) -> dict:
    tol = json.loads(json.dumps(DEFAULT_TOLERANCES))
    for k, v in (cfg.get("tolerances") or {}).items():
        if k not in tol:
            raise ConfigError(f"tolerances: unknown key {k!r}")
        if isinstance(tol[k], dict):
            tol[k].update(v)
        else:
            tol[k] = v
    return tol


def _write_field_csv(path, grid, f, J):
    pts = grid.points.reshape(-1, grid.dim)
    fv = f.values.ravel()
    Jv = J.vectors.reshape(-1, grid.dim)
    names = [f"x{k}" for k in range(grid.dim)] + ["f"] + [f"J{k}" for k in range(grid.dim)]
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for p, v, j in zip(pts, fv, Jv):
            fh.write(",".join(repr(float(x)) for x in (*p, v, *j)) + "\n")


class Runner:
    """Execute the analyses of one config, collecting results and checks."""

    def __init__(self, cfg: dict, out: Path):
        self.cfg = cfg
        self.out = out
        self.tol = _tolerances(cfg)
        self.seed = int(cfg.get("seed", 0))
        self._model = None
        self._grid = None
        self._stationary = None

    @property
    def model(self):
        if self._model is None:
            m = self.cfg["model"]
            self._model = build_model(m["name"], m.get("params", {}))
        return self._model

    @property
    def grid(self):
        if self._grid is None:
            g = self.cfg["grid"]
            self._grid = Grid(tuple(tuple(b) for b in g["bounds"]), tuple(g["counts"]))
        return self._grid

    def stationary(self):
        if self._stationary is None:
            scheme = self.cfg["grid"].get("scheme", "upwind")
            op = assemble_operator(self.model, self.grid, scheme)
            f, J = stationary_density(op)
            self._stationary = (op, f, J)
        return self._stationary

    def run_stationary(self):
        op, f, J = self.stationary()
        _write_field_csv(self.out / "stationary.csv", self.grid, f, J)
        resid = float(np.max(np.abs(op.apply(f))) / (np.max(np.abs(op.matrix)) * np.max(f.values)))
        res = {"mass": grid_integrate(f.values, self.grid), "relative_divergence": resid}
        checks = {"divergence": _check(resid, self.tol["stationary_divergence"])}
        try:
            fr, _ = reference_fields(self.model, self.grid)
        except DiffThermoError:
            fr = None
        if fr is not None:
            l2 = math.sqrt(grid_integrate((f.values - fr.values) ** 2, self.grid) / grid_integrate(fr.values**2, self.grid))
            res["relative_l2_error"] = l2
            checks["analytic_l2"] = _check(l2, self.tol["stationary_l2"])
        return res, checks

    def run_decompose(self):
        _, f, J = self.stationary()
        d = decompose(self.model, f, J, self.tol["decompose"])
        d.to_csv(self.out / "decompose.csv")
        res = d.report()
        checks = {}
        expected = self.cfg.get("expected_classification")
        if expected is not None:
            checks["classification"] = {
                "value": str(d.classification),
                "tolerance": expected,
                "passed": str(d.classification) == expected,
            }
        return res, checks

    def run_ledger(self):
        op, fss, Jss = self.stationary()
        sec = self.cfg["ledger"]
        init = sec.get("initial", {})
        if init.get("type") == "gaussian":
            mean = np.atleast_1d(np.asarray(init["mean"], dtype=float))
            cov = np.atleast_2d(np.asarray(init["cov"], dtype=float))
            P = np.linalg.inv(cov)

            def dens(x):
                d = x - mean
                return np.exp(-0.5 * np.einsum("...i,ij,...j->...", d, P, d))

            f0 = density_from_function(self.grid, dens)
        else:
            raise ConfigError("ledger.initial must be a Gaussian {type: 'gaussian', mean, cov}")
        ev = evolve(op, f0, float(sec.get("dt", 0.01)), int(sec.get("steps", 100)), int(sec.get("record_every", 1)))
        circ = Jss.vectors / fss.values[..., None]
        L = ledger(ev, self.model, fss, circulation=circ)
        L.to_csv(self.out / "ledger.csv")
        rel = L.relative_balance_error()
        ep = L.ep_overdamped if np.all(np.isfinite(L.ep_overdamped)) else L.ep_nonadiabatic
        ein = L.E_in[np.isfinite(L.E_in)]
        dF = np.diff(L.F)
        res = {
            "F_initial": float(L.F[0]),
            "F_final": float(L.F[-1]),
            "max_relative_balance": float(np.max(rel)),
            "F_strictly_decreasing": bool(np.all(dF < 0)),
            "clip_events": len(ev.clip_events),
        }
        s = self.tol["ledger_sign"]
        checks = {
            "balance": _check(float(np.max(rel)), self.tol["ledger_balance"]),
            "F_non_increasing": _check(float(np.max(dF)), s),
            "ep_non_negative": _check(float(np.min(ep)), -s, kind="min"),
        }
        if ein.size:
            checks["E_in_non_negative"] = _check(float(np.min(ein)), -s, kind="min")
        return res, checks

    def run_ou_analytic(self):
        if self.model.name != "ou":
            raise ConfigError("analysis 'ou_analytic' needs model 'ou'")
        p = self.model.params
        st = ou_stationary(p["B"], p["D"], p.get("beta", 1.0))
        cert = ou_mb_certificate(st)
        res = {
            "Xi": st.Xi,
            "circulation": st.circulation,
            "A": st.A,
            "M": st.M,
            "Gamma": st.Gamma,
            "certificate": cert,
        }
        with open(self.out / "ou_analytic.json", "w") as fh:
            json.dump(_jsonable(res), fh, indent=2, sort_keys=True)
            fh.write("\n")
        t = self.tol["ou_certificate"]
        checks = {
            k: _check(v, t)
            for k, v in cert.items()
            if math.isfinite(v)
        }
        return res, checks

    def run_helmholtz(self):
        sec = self.cfg.get("helmholtz", {})
        n = int(sec.get("dim", 2))
        alpha = np.asarray(sec.get("alpha_grid", [0.8, 0.9, 1.0, 1.1, 1.2]), dtype=float)
        h = np.asarray(sec.get("h_grid", list(np.linspace(0.5, 1.5, 21))), dtype=float)
        ns = int(sec.get("n_samples", 200_000))
        scale = float(sec.get("box_scale", 1.5))

        def Xi(a):
            d = np.ones(n)
            d[0] = a
            return np.diag(d)

        def phi(x, a):
            w = np.ones(n)
            w[0] = 1.0 / a
            return 0.5 * np.sum(w * x**2, axis=-1)

        def box(a):
            r = scale * math.sqrt(2 * h.max() * max(a, 1.0))
            return [(-r, r)] * n

        mc = theta_and_force(sigma_table(phi, h, alpha, box, ns, self.seed))
        an = theta_and_force(gaussian_sigma_table(Xi, h, alpha))
        mc.to_csv(self.out / "helmholtz.csv")
        z = np.abs(mc.sigma - an.sigma) / mc.sigma_se
        mx = maxwell_check(mc)
        ideal = np.abs(alpha[None, :] * an.F_alpha / (0.5 * an.theta) - 1.0)
        res = {
            "max_sigma_z": float(np.nanmax(z)),
            "max_contour_se_ratio": mx["max_contour_se_ratio"],
            "max_identity_residual": mx["max_identity_residual"],
            "ideal_gas_max_relative": float(np.max(ideal[1:-1, 1:-1])),
        }
        checks = {
            "sigma_vs_analytic": _check(res["max_sigma_z"], self.tol["sigma_z"]),
            "maxwell_contour": _check(res["max_contour_se_ratio"], self.tol["maxwell_se_ratio"]),
        }
        return res, checks

    def run_carnot(self):
        sec = dict(self.cfg["carnot"])
        n_points = int(sec.pop("n_points", 100))
        try:
            spec = CarnotSpec(**sec)
        except TypeError as exc:
            raise ConfigError(f"carnot: {exc}") from exc
        cyc = carnot_curves(spec, n_points)
        cyc.to_csv(self.out / "carnot.csv")
        resid = cyc.max_equation_residual()
        res = {"corners": {k: list(v) for k, v in cyc.corners.items()}, "max_equation_residual": resid}
        return res, {"equations": _check(resid, self.tol["carnot_equation"])}

    def run_pendulum(self):
        sec = self.cfg.get("pendulum", {})
        amp = float(sec.get("amplitude", 0.5))
        freq = float(sec.get("frequency", 0.9))
        L = driven_pendulum_ledger(
            float(sec.get("m", 1.0)),
            float(sec.get("k", 1.0)),
            float(sec.get("eta", 0.1)),
            lambda t: amp * math.cos(freq * t),
            float(sec.get("x0", 1.0)),
            float(sec.get("v0", 0.0)),
            float(sec.get("dt", 1e-3)),
            float(sec.get("t_final", 100.0)),
            seed=self.seed,
            noise=float(sec.get("noise", 0.0)),
        )
        L.to_csv(self.out / "pendulum.csv")
        rate = float(np.max(np.abs(L.residual[1:]) / L.t[1:]))
        avg = L.time_averages()
        res = {"max_residual_rate": rate, **avg}
        return res, {"ledger_residual": _check(rate, self.tol["pendulum_residual_rate"])}

    def run_ensemble(self):
        sec = self.cfg["ensemble"]
        spec = EnsembleSpec(
            int(sec.get("n_paths", 10_000)),
            float(sec.get("dt", 1e-3)),
            float(sec.get("t_final", 1.0)),
            sec["initial"],
            self.seed,
        )
        grid = self.grid if "grid" in self.cfg else None
        st = simulate(self.model, spec, grid)
        st.to_csv(self.out / "ensemble.csv")
        if sec.get("snapshot", False):
            write_snapshot(self.out / "ensemble_snapshot.bin", st.samples[-1], float(st.times[-1]))
        eig = float(np.min(np.linalg.eigvalsh(st.covariance[-1])))
        res = {"mean": st.mean[-1], "covariance": st.covariance[-1]}
        if grid is not None:
            res["histogram_mass"] = st.histograms[-1].integral()
        return res, {"covariance_psd": _check(eig, 0.0, kind="min")}

    def run(self) -> dict:
        analyses, all_ok = {}, True
        for name in self.cfg["analyses"]:
            res, checks = getattr(self, f"run_{name}")()
            ok = all(c["passed"] for c in checks.values())
            all_ok &= ok
            analyses[name] = {"result": res, "checks": checks, "passed": ok}
        summary = {"analyses": analyses, "tolerances": self.tol, "passed": all_ok}
        if "decompose" in analyses:
            summary["classification"] = analyses["decompose"]["result"]["classification"]
        return summary


def run(config_path, output_dir=None) -> int:
    """Run one experiment; returns the process exit status."""
    try:
        cfg = load_config(config_path)
        out = Path(os.environ.get(ENV_OUTPUT_DIR) or output_dir or cfg.get("output_dir", "diffthermo_out"))
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"output_dir {out}: {exc}") from exc
        runner = Runner(cfg, out)
        summary = runner.run()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DiffThermoError as exc:
        print(f"analysis error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 3
    summary = {
        "metadata": {
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "version": __version__,
            "config_path": str(config_path),
        },
        "config": cfg,
        **summary,
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
        fh.write("\n")
    status = "passed" if summary["passed"] else "FAILED"
    print(f"{status}: {out / 'summary.json'}")
    return 0 if summary["passed"] else 1


def list_models(stream=None) -> None:
    stream = stream or sys.stdout
    for name, entry in CATALOG.items():
        print(name, file=stream)
        print(f"  reproduces: {entry['reproduces']}", file=stream)
        for k, v in entry["schema"].items():
            print(f"  {k}: {v}", file=stream)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="diffthermo", description="Diffusion-process thermodynamics experiments")
    p.add_argument("--schema", action="store_true", help="print the config keys and CSV columns as JSON")
    sub = p.add_subparsers(dest="command")
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--output-dir", default=None)
    sub.add_parser("list-models", help="list catalog models and their parameters")
    sub.add_parser("version", help="print the package version")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.schema:
        print(json.dumps(_jsonable(SCHEMA), indent=2))
        return 0
    if args.command == "run":
        return run(args.config, args.output_dir)
    if args.command == "list-models":
        list_models()
        return 0
    if args.command == "version":
        print(__version__)
        return 0
    parser.print_help()
    return 2


if __name__ == "__main__":
    sys.exit(main())
