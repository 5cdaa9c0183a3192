"""Command-line front end: key-rate sweeps, rate landscapes, decoy bounds, self-checks.

Exit codes: 0 success, 1 configuration error, 2 validation failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import channel, decoy, mc, rates
from .config import OPTIMIZE, ConfigError, RunConfig, load_config
from .errors import RRDPSError
from .optimize import SearchSpec, optimize_point, rate_landscape, sweep_distance, sweep_transmittance
from .rates import DecoyTier, RateResult
from .sources import SourceKind, SourceModel, packet_pmf_array

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION = 0, 1, 2

RATE_COLUMNS = [
    "distance_km", "transmittance", "mu_opt", "v_th_opt", "tier",
    "Q", "e_bit", "e_src", "e_ph", "R", "source",
]
LANDSCAPE_COLUMNS = ["transmittance", "mu", "v_th", "R"]
BOUND_COLUMNS = [
    "transmittance", "mu", "tier",
    "Y0_L", "Y0_true", "Y1_L", "Y1_true", "Y2_L", "Y2_true", "Y3_L", "Y3_true",
    "e1_U", "e1_true", "e2_U", "e2_true", "e3_U", "e3_true",
]


def _fmt(value, precision: int) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return format(value, f".{precision}g")
    return str(value)


def _write_csv(rows: Iterable[dict], columns: Sequence[str], out: Optional[str], precision: int) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c), precision) for c in columns])
    _emit(buf.getvalue(), out)


def _emit(text: str, out: Optional[str]) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


# --- configuration overrides ---------------------------------------------------


def _apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    if getattr(args, "source", None):
        cfg = replace(cfg, source=replace(cfg.source, kinds=(SourceKind(args.source),)))
    if getattr(args, "tier", None):
        cfg = replace(cfg, protocol=replace(cfg.protocol, tiers=(DecoyTier(args.tier),)))
    if getattr(args, "packet_length", None) is not None:
        L = args.packet_length
        if L < 2:
            raise ConfigError(f"--packet-length: must be >= 2, got {L}")
        v_th = cfg.protocol.v_th
        if v_th != OPTIMIZE and v_th > rates.max_threshold(L):
            raise ConfigError(f"--packet-length: protocol.v_th = {v_th} is too large for L = {L}")
        cfg = replace(cfg, protocol=replace(cfg.protocol, L=L))
    if getattr(args, "seed", None) is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError(f"--seed: must be an unsigned 64-bit integer, got {args.seed}")
        cfg = replace(cfg, validate=replace(cfg.validate, seed=args.seed))
    return cfg


def _search_spec(cfg: RunConfig, tier: DecoyTier) -> SearchSpec:
    s = cfg.search
    mu = cfg.source.mu
    if mu == OPTIMIZE:
        mu_kw = dict(mu_min=s.mu_min, mu_max=s.mu_max, mu_points=s.mu_points, refine_rounds=s.refine_rounds)
    else:
        mu_kw = dict(mu_min=mu, mu_max=mu, mu_points=1, refine_rounds=0)
    v = cfg.protocol.v_th
    v_kw = {} if v == OPTIMIZE else dict(v_th_min=v, v_th_max=v)
    fr = cfg.protocol.decoy_intensities
    return SearchSpec(objective=tier, decoy_fractions=fr if isinstance(fr, tuple) else None, **mu_kw, **v_kw)


def _runs(cfg: RunConfig) -> list[tuple[SourceKind, DecoyTier]]:
    runs = []
    for kind in cfg.source.kinds:
        for tier in cfg.protocol.tiers:
            if tier.is_finite and kind is not SourceKind.WCP:
                print(f"note: skipping {kind.value} with tier {tier.value}: "
                      "finite decoy bounds need a Poissonian (wcp) source", file=sys.stderr)
                continue
            runs.append((kind, tier))
    if not runs:
        raise ConfigError("protocol.tier: no valid source/tier combination to run")
    return runs


def rate_rows(cfg: RunConfig, workers: Optional[int] = None) -> list[dict]:
    """Optimized rate rows for every (source, tier) run and sweep point."""
    L = cfg.protocol.L
    ch = cfg.channel.params(L)
    rows = []
    for kind, tier in _runs(cfg):
        src = cfg.source.model(kind, 0.1 if cfg.source.mu == OPTIMIZE else cfg.source.mu)
        spec = _search_spec(cfg, tier)
        if cfg.channel.eta is not None:
            results = sweep_transmittance(src, ch, L, spec, [cfg.channel.eta], workers)
        elif cfg.sweep.transmittance is not None:
            results = sweep_transmittance(src, ch, L, spec, cfg.sweep.transmittance, workers)
        else:
            results = sweep_distance(src, ch, L, spec, cfg.sweep.distance_km, workers)
        for res in results:
            rows.append(_rate_row(res, kind, L))
    return rows


def _rate_row(res: RateResult, kind: SourceKind, L: int) -> dict:
    d = res.distance
    return {
        "distance_km": d if d is not None and math.isfinite(d) and d >= 0 else None,
        "transmittance": res.transmittance,
        "mu_opt": res.mu,
        "v_th_opt": res.v_th,
        "tier": res.tier.value,
        "Q": res.Q,
        "e_bit": res.e_bit,
        "e_src": res.e_src,
        "e_ph": _phase_error_scalar(res, L),
        "R": res.R,
        "source": kind.value,
    }


def _phase_error_scalar(res: RateResult, L: int) -> Optional[float]:
    """Single phase-error figure per row.

    Finite tiers carry one phase error per bounded photon number; the row
    reports their average weighted by the bounded detections Y_n^L P(n).
    """
    if not isinstance(res.e_ph, tuple):
        return res.e_ph
    b = res.yield_bounds
    if b is None:
        return None
    pmf = packet_pmf_array(SourceModel.wcp(res.mu), L, b.tier.n_th)
    weights = [max(y, 0.0) * p for y, p in zip(b.yields(), pmf)]
    total = math.fsum(weights)
    if total == 0.0:
        return None
    return math.fsum(w * e for w, e in zip(weights, res.e_ph)) / total


def cmd_rate(cfg: RunConfig, out: Optional[str]) -> int:
    _write_csv(rate_rows(cfg), RATE_COLUMNS, out, cfg.output.precision)
    return EXIT_OK


# --- landscape -----------------------------------------------------------------


def landscape_rows(cfg: RunConfig) -> list[dict]:
    a = cfg.landscape
    L = cfg.protocol.L
    eta = cfg.channel.eta if cfg.channel.eta is not None else a.transmittance
    ch = cfg.channel.params(L).with_eta(eta)
    mu_grid = np.geomspace(a.mu_min, a.mu_max, a.mu_points) if a.mu_points > 1 else np.array([a.mu_min])
    v_hi = rates.max_threshold(L) if a.v_th_max is None else min(a.v_th_max, rates.max_threshold(L))
    rows = []
    for kind in cfg.source.kinds:
        src = cfg.source.model(kind, a.mu_min)
        for mu, v_th, R in rate_landscape(src, ch, L, mu_grid, range(a.v_th_min, v_hi + 1)):
            rows.append({"transmittance": eta, "mu": mu, "v_th": v_th, "R": R, "source": kind.value})
    return rows


def cmd_landscape(cfg: RunConfig, out: Optional[str]) -> int:
    cols = LANDSCAPE_COLUMNS + (["source"] if len(cfg.source.kinds) > 1 else [])
    _write_csv(landscape_rows(cfg), cols, out, cfg.output.precision)
    return EXIT_OK


# --- bounds --------------------------------------------------------------------


def _true_values(ch, tier: DecoyTier) -> dict:
    """No-eavesdropper yields and error rates up to the tier's photon number."""
    out = {"Y0_true": channel.yield_n(ch, 0)}
    for n in range(1, tier.n_th + 1):
        out[f"Y{n}_true"] = channel.yield_n(ch, n)
        out[f"e{n}_true"] = channel.error_n(ch, n)
    return out


def _bound_row(b: decoy.YieldBounds) -> dict:
    return {
        "tier": b.tier.value,
        "Y0_L": b.Y0_L, "Y1_L": b.Y1_L, "Y2_L": b.Y2_L, "Y3_L": b.Y3_L,
        "e1_U": b.e1_U, "e2_U": b.e2_U, "e3_U": b.e3_U,
    }


def bound_rows(cfg: RunConfig, observations: Optional[str] = None) -> list[dict]:
    L = cfg.protocol.L
    ch0 = cfg.channel.params(L)
    if observations is not None:
        try:
            obs = decoy.read_observations_csv(observations, L)
            tier = decoy.infer_tier(obs)
            b = decoy.estimate_bounds(tier, obs)
        except RRDPSError as exc:
            raise ConfigError(f"{observations}: {exc}") from None
        except OSError as exc:
            raise ConfigError(f"{observations}: cannot read observations ({exc.strerror})") from None
        row = {"mu": obs[0].packet_intensity / L, **_bound_row(b)}
        if cfg.channel.eta is not None:
            # the channel is known, so the model values can be listed alongside
            row["transmittance"] = cfg.channel.eta
            row.update(_true_values(ch0, tier))
        return [row]

    tiers = [t for t in cfg.protocol.tiers if t.is_finite] or [DecoyTier.FOUR]
    tier = max(tiers, key=lambda t: t.n_th)
    if cfg.channel.eta is not None:
        etas = [cfg.channel.eta]
    elif cfg.sweep.transmittance is not None:
        etas = list(cfg.sweep.transmittance)
    else:
        etas = [ch0.at_distance(d).eta for d in cfg.sweep.distance_km]
    spec = _search_spec(cfg, tier)
    rows = []
    for eta in etas:
        ch = ch0.with_eta(eta)
        if cfg.source.mu == OPTIMIZE:
            mu = optimize_point(SourceModel.wcp(0.1), ch, L, spec).mu
        else:
            mu = cfg.source.mu
        fr = spec.fractions()
        obs = decoy.simulate_observations(ch, mu, [c * mu for c in fr], L)
        b = decoy.estimate_bounds(tier, obs)
        rows.append({"transmittance": eta, "mu": mu, **_bound_row(b), **_true_values(ch, tier)})
    return rows


def cmd_bounds(cfg: RunConfig, out: Optional[str], observations: Optional[str]) -> int:
    _write_csv(bound_rows(cfg, observations), BOUND_COLUMNS, out, cfg.output.precision)
    return EXIT_OK


# --- validate ------------------------------------------------------------------


def _suite(name: str, checks: list[tuple[str, bool, float]]) -> dict:
    failures = [{"case": c, "value": v} for c, ok, v in checks if not ok]
    return {"name": name, "passed": not failures, "checks": len(checks), "failures": failures}


def _closed_form_suite(cfg: RunConfig) -> dict:
    checks = []
    L0 = cfg.protocol.L
    for L in sorted({2, L0, 128}):
        base = cfg.channel.params(L)
        for eta in (1e-5, 1e-3, 0.1, 1.0):
            ch = base.with_eta(eta)
            for mu in (1e-3, 0.02, 0.3):
                for kind in SourceKind:
                    src = cfg.source.model(kind, mu)
                    if kind is SourceKind.WCP:
                        closed = channel.wcp_gain_qber(ch, mu, L)
                    else:
                        closed = channel.hsps_gain_qber(ch, src, mu, L)
                    series = channel.series_gain_qber(ch, src, L)
                    rel = max(abs(c - s) / abs(s) for c, s in zip(closed, series))
                    checks.append((f"{kind.value} L={L} eta={eta:g} mu={mu:g}", rel <= 1e-9, rel))
    return _suite("closed_form_vs_series", checks)


def _mc_suite(cfg: RunConfig) -> dict:
    checks = []
    L = cfg.protocol.L
    base = cfg.channel.params(L)
    seed = cfg.validate.seed
    k = 0
    for kind in SourceKind:
        for mu, eta in ((0.02, 0.01), (0.1, 0.1), (0.5, 1e-3)):
            ch = base.with_eta(eta)
            src = cfg.source.model(kind, mu)
            est = mc.mc_gain_qber(mc.TrialConfig(cfg.validate.trials, (seed + k) % 2**64, src, ch, L))
            k += 1
            Q, E = channel.gain_qber(ch, src, L)
            zq, ze = est.z_scores(Q, E)
            tag = f"{kind.value} mu={mu:g} eta={eta:g}"
            checks.append((f"{tag} Q", abs(zq) <= 4.0, zq))
            if est.detections:
                checks.append((f"{tag} E", abs(ze) <= 4.0, ze))
    sift_cfg = mc.TrialConfig(min(cfg.validate.trials, 100_000), seed, SourceModel.wcp(0.1), base, L)
    rate = mc.mc_sift(sift_cfg, noiseless=True)
    checks.append(("sift noiseless", rate == 1.0, rate))
    return _suite("monte_carlo_agreement", checks)


def _bounds_suite(cfg: RunConfig) -> dict:
    checks = []
    L = cfg.protocol.L
    base = cfg.channel.params(L)
    for eta in np.logspace(-4, 0, 9):
        ch = base.with_eta(float(eta))
        for mu in (0.01, 0.05, 0.2):
            obs = decoy.simulate_observations(ch, mu, decoy.default_decoy_intensities(DecoyTier.FOUR, mu), L)
            b = decoy.estimate_bounds(DecoyTier.FOUR, obs)
            tag = f"eta={eta:.3g} mu={mu:g}"
            for n, y in enumerate(b.yields()):
                true = channel.yield_n(ch, n)
                checks.append((f"{tag} Y{n}", y <= true * (1 + 1e-9) + 1e-15, y - true))
            for n, e in enumerate(b.errors(), start=1):
                true = channel.error_n(ch, n)
                checks.append((f"{tag} e{n}", e >= true * (1 - 1e-9) - 1e-15, e - true))
            rel = abs(b.Y0_L - ch.Y0) / ch.Y0 if ch.Y0 else abs(b.Y0_L)
            checks.append((f"{tag} Y0 exact", rel <= 1e-12, rel))
    return _suite("decoy_bound_soundness", checks)


def _exactness_suite(cfg: RunConfig) -> dict:
    v = rates.phase_error_n(32, 1)
    return _suite("exact_values", [("phase_error_n(32, 1) == 1/32", v == 1 / 32, v)])


def validation_report(cfg: RunConfig) -> dict:
    suites = [_exactness_suite(cfg), _closed_form_suite(cfg), _bounds_suite(cfg), _mc_suite(cfg)]
    return {
        "seed": cfg.validate.seed,
        "trials": cfg.validate.trials,
        "packet_length": cfg.protocol.L,
        "passed": all(s["passed"] for s in suites),
        "suites": suites,
    }


def cmd_validate(cfg: RunConfig, out: Optional[str]) -> int:
    report = validation_report(cfg)
    _emit(json.dumps(report, indent=2, sort_keys=True) + "\n", out)
    return EXIT_OK if report["passed"] else EXIT_VALIDATION


# --- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration (default: packaged parameter set)")
    common.add_argument("--out", help="output file (default: output.path from the config, else stdout)")
    common.add_argument("--seed", type=int, help="seed for Monte Carlo checks (unsigned 64-bit)")
    common.add_argument("--tier", choices=[t.value for t in DecoyTier], help="decoy tier override")
    common.add_argument("--source", choices=[k.value for k in SourceKind], help="source override")
    common.add_argument("--packet-length", type=int, help="packet length L override")

    parser = argparse.ArgumentParser(
        prog="rrdps",
        description="Key rates of round-robin DPS key distribution with WCP and heralded sources.",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command")
    sub.add_parser("rate", parents=[common], help="optimized key rate along the sweep (CSV)")
    sub.add_parser("landscape", parents=[common], help="key rate over the (mu, v_th) grid (CSV)")
    b = sub.add_parser("bounds", parents=[common], help="decoy-state yield and error bounds (CSV)")
    b.add_argument("--observations", help="CSV with intensity_per_pulse,gain,qber rows")
    sub.add_parser("validate", parents=[common], help="run the self-consistency suites (JSON)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    command = args.command or "rate"
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        out = args.out or cfg.output.path
        if command == "rate":
            return cmd_rate(cfg, out)
        if command == "landscape":
            return cmd_landscape(cfg, out)
        if command == "bounds":
            return cmd_bounds(cfg, out, args.observations)
        return cmd_validate(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RRDPSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
