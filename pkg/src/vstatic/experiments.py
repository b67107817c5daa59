"""Verification suites, volume-comparison experiments, and report emission.

The comparison experiments realize the two theorems empirically: candidate
metrics g = gbar + t h are admitted when every hypothesis holds at every
scan node (curvature slack, boundary mean-curvature slack, fixed induced
boundary metric), then checked against the predicted volume sign.  Slacks
are measured against the *computed* background curvature at the same nodes,
which cancels the common finite-difference error; admitted candidates are
re-verified on a doubled quadrature before they count.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field as dc_field, asdict

import numpy as np

from . import variational as V
from .boundary_geom import induced_metric
from .chart_core import FDScheme, build_quadrature, integrate_values
from .errors import NotPositiveDefiniteError, PreconditionError
from .model_spaces import (Perturbation, c1_norm, make_model,
                           make_perturbation, make_vstatic, resolve_model)
from .tensor_calc import curvature

__all__ = [
    "RunConfig",
    "ComparisonSample",
    "run_verification_suite",
    "theorem_A_experiment",
    "theorem_B_experiment",
    "ricci_flat_counterexample",
    "emit_report",
    "CHECK_GROUPS",
]

SCHEMA_VERSION = 1


@dataclass
class RunConfig:
    """Everything a run needs; echoed verbatim into every report."""

    suite: str = "default"
    models: tuple = ()
    families: tuple = ()
    seeds: int = 20
    base_seed: int = 12345
    t_values: tuple = (0.02, 0.05, 0.1)
    radii: tuple = (0.1, 0.2)
    candidates: int = 1000
    slack_tol: float = 1e-10
    vol_tol_rel: float = 1e-9
    gate_tol: float = 1e-12
    tol_scale: float = 1.0
    hill_climb: bool = True
    jobs: int = 1
    out_json: str = ""
    out_csv: str = ""

    def __post_init__(self):
        for name in ("slack_tol", "vol_tol_rel", "gate_tol", "tol_scale"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def rng_for(self, tag):
        mix = int(np.random.SeedSequence([self.base_seed, hash(tag) % 2 ** 31])
                  .generate_state(1)[0])
        return np.random.default_rng(mix)


@dataclass
class ComparisonSample:
    """One candidate metric with its hypothesis slacks and verdict."""

    model: str
    seed: object
    family: str
    t: float
    slack_R: float
    slack_H: float
    boundary_dev: float
    d_vol: float
    admitted: bool
    verdict: str
    recheck_shift: float = 0.0

    def as_row(self):
        return [self.model, str(self.seed), repr(self.t), repr(self.slack_R),
                repr(self.slack_H), repr(self.d_vol),
                "1" if self.admitted else "0", self.verdict]


CSV_HEADER = ["model", "seed", "t", "slackR", "slackH", "dVol", "admitted",
              "verdict"]


# ---------------------------------------------------------------------------
# metric-path scanning


class CandidateScan:
    """Shared-cloud scalar/boundary/volume scans along g = gbar + t h.

    Single-level stencils suffice here: slacks compare the candidate against
    the background computed through the identical stencils, so the leading
    truncation cancels.  Only the most recent h keeps its cloud cached.
    """

    def __init__(self, model, rule=None, scheme=None):
        self.model = model
        self.scheme = scheme or FDScheme(4, 1e-3, 1)
        self.rule = rule or model.quadrature
        self.gb_interior = model.metric.evaluate(self.rule.nodes)
        self._h_cache = {}
        self.surface = model.boundary

    def _scans_for(self, h, key):
        if key not in self._h_cache:
            self._h_cache.clear()
            interior = V.MetricPathScan(self.model, h, self.rule.nodes, self.scheme)
            boundary = None
            if self.surface is not None:
                boundary = V.BoundaryPathScan(self.model, h, self.surface,
                                              scheme=self.scheme)
            hv = h.evaluate(self.rule.nodes)
            self._h_cache[key] = (interior, boundary, hv)
        return self._h_cache[key]

    def background(self):
        if not hasattr(self, "_bg"):
            scan = V.MetricPathScan(self.model, self.model.metric,
                                    self.rule.nodes, self.scheme)
            r0 = scan.scalar_at(0.0)
            h0 = None
            if self.surface is not None:
                bscan = V.BoundaryPathScan(self.model, self.model.metric,
                                           self.surface, scheme=self.scheme)
                h0 = bscan.H_at(0.0)
            vol0 = integrate_values(np.ones(len(self.rule.nodes)),
                                    self.gb_interior, self.rule)
            gi0 = None
            if self.surface is not None:
                gi0 = induced_metric(self.surface, self.model.metric)
            del scan
            self._bg = (r0, h0, vol0, gi0)
        return self._bg

    def mix_scans(self, perturbations):
        """Cached clouds for a list of fields, for linear coefficient mixes."""
        interior = [V.MetricPathScan(self.model, p.h, self.rule.nodes,
                                     self.scheme) for p in perturbations]
        boundary = None
        if self.surface is not None:
            boundary = [V.BoundaryPathScan(self.model, p.h, self.surface,
                                           scheme=self.scheme)
                        for p in perturbations]
        hvs = [p.h.evaluate(self.rule.nodes) for p in perturbations]
        return interior, boundary, hvs

    def evaluate_mix(self, mix, coeffs, t):
        """Candidate for h = sum_k c_k h_k assembled from cached clouds."""
        interior, boundary, hvs = mix
        r0, h0, vol0, gi0 = self.background()
        try:
            vals = interior[0].g_cloud.copy()
            for c, sc in zip(coeffs, interior):
                vals += (t * c) * sc.h_cloud
            rt = interior[0].scalar_from_values(vals, t)
            slack_r = float((rt - r0).min())
            slack_h = 0.0
            bdev = 0.0
            if boundary is not None:
                bvals = boundary[0].g_cloud.copy()
                for c, sc in zip(coeffs, boundary):
                    bvals += (t * c) * sc.h_cloud
                ht = boundary[0].H_from_values(bvals, t)
                slack_h = float((ht - h0).min())
                # every mixed direction is tangentially vanishing, so the
                # induced boundary metric is fixed exactly
                bdev = 0.0
            hv = sum(c * v for c, v in zip(coeffs, hvs))
            vol_t = integrate_values(np.ones(len(self.rule.nodes)),
                                     self.gb_interior + t * hv, self.rule)
        except NotPositiveDefiniteError:
            return None
        return slack_r, slack_h, bdev, vol_t - vol0

    def evaluate_candidate(self, h, key, t):
        """Slacks, boundary deviation and volume difference for gbar + t h;
        None when the path metric loses positive definiteness."""
        r0, h0, vol0, gi0 = self.background()
        interior, boundary, hv = self._scans_for(h, key)
        try:
            rt = interior.scalar_at(t)
            slack_r = float((rt - r0).min())
            slack_h = 0.0
            bdev = 0.0
            if self.surface is not None:
                ht = boundary.H_at(t)
                slack_h = float((ht - h0).min())
                gi_t = induced_metric(self.surface, self.model.metric + t * h)
                bdev = float(np.abs(gi_t - gi0).max())
            vol_t = integrate_values(np.ones(len(self.rule.nodes)),
                                     self.gb_interior + t * hv, self.rule)
        except NotPositiveDefiniteError:
            return None
        return slack_r, slack_h, bdev, vol_t - vol0


def _volume_sign_verdict(direction, d_vol, vol_tol):
    """The comparison conclusion.  ``direction`` < 0 means the candidate
    volume cannot exceed the background (kappa < 0 on static balls, or
    positive Einstein constant on closed models); > 0 means it cannot fall
    below."""
    if direction < 0:
        return "consistent" if d_vol <= vol_tol else "violates"
    return "consistent" if d_vol >= -vol_tol else "violates"


def theorem_A_experiment(model, vstatic, config, scan_rule=None, log=None):
    """Small-ball volume comparison on a static ball model.

    Candidates g = gbar + t h over tangentially vanishing families and an
    optional constrained hill climb; the verdict is 'consistent' when no
    admitted sample violates the volume sign of kappa.
    """
    fmin, _ = vstatic.f_range(model)
    if fmin <= 0:
        raise PreconditionError("theorem A sampling needs f > 0 on the ball")
    kappa = vstatic.kappa
    if kappa == 0:
        raise PreconditionError("the comparison needs kappa != 0")
    rule = scan_rule or build_quadrature(
        model.chart, tuple(max(8, q // 2) for q in model.quad_orders),
        model.quad_breaks)
    scan = CandidateScan(model, rule)
    vol_tol = config.vol_tol_rel * model.volume() * config.tol_scale
    slack_tol = config.slack_tol * config.tol_scale
    samples = []
    families = config.families or ("boundary_adapted", "bump_tensor")
    rng = config.rng_for(("thmA", model.name))
    n_h = max(1, config.candidates // (2 * len(config.t_values)) // len(families))
    hs = []
    for fam in families:
        for j in range(n_h):
            seed = int(rng.integers(2 ** 31))
            hs.append((fam, seed, make_perturbation(model, fam, seed=seed)))
    # the equality case, sampled once
    if hs:
        out0 = scan.evaluate_candidate(hs[0][2].h, (hs[0][0], hs[0][1]), 0.0)
        samples.append(_classify(model, "equality", hs[0][0], 0.0, out0, kappa,
                                 slack_tol, config.gate_tol, vol_tol))
    for fam, seed, h in hs:
        for t in tuple(config.t_values) + tuple(-t for t in config.t_values):
            out = scan.evaluate_candidate(h.h, (fam, seed), t)
            if out is None:
                samples.append(ComparisonSample(model.name, seed, fam, t,
                                                -np.inf, -np.inf, np.inf,
                                                np.nan, False, "rejected"))
                continue
            samples.append(_classify(model, seed, fam, t, out, kappa,
                                     slack_tol, config.gate_tol, vol_tol))
    if config.hill_climb and hs:
        samples.extend(_hill_climb(model, scan, hs, kappa, slack_tol,
                                   config, vol_tol, rng))
    _recheck_admitted(model, samples, {k: h for (_, k, h) in hs},
                      kappa, slack_tol, config, vol_tol)
    verdict = "consistent" if not any(s.verdict == "violates" for s in samples) \
        else "violates"
    return samples, verdict


def _classify(model, seed, fam, t, out, sign_const, slack_tol, gate_tol, vol_tol):
    slack_r, slack_h, bdev, d_vol = out
    admitted = (slack_r >= -slack_tol and slack_h >= -slack_tol
                and bdev <= gate_tol)
    verdict = "rejected"
    if admitted:
        verdict = _volume_sign_verdict(sign_const, d_vol, vol_tol)
    return ComparisonSample(model.name, seed, fam, float(t), slack_r, slack_h,
                            bdev, d_vol, admitted, verdict)


def _hill_climb(model, scan, hs, kappa, slack_tol, config, vol_tol, rng,
                rounds=120):
    """Constrained random search maximizing the minimum curvature slack over
    coefficient mixes of the sampled directions (boundary metric stays fixed
    because every direction is tangentially vanishing)."""
    fields = [h for (_, _, h) in hs[:4]]
    mix = scan.mix_scans(fields)
    t = min(config.t_values)
    best = None
    best_val = -np.inf
    samples = []
    for _ in range(rounds):
        c = rng.standard_normal(len(fields))
        c /= max(np.linalg.norm(c), 1e-12)
        if best is not None:
            c = best + 0.3 * rng.standard_normal(len(fields))
            c /= max(np.linalg.norm(c), 1e-12)
        out = scan.evaluate_mix(mix, c, t)
        if out is None:
            continue
        val = min(out[0], out[1])
        if val > best_val:
            best_val, best = val, c
        samples.append(_classify(model, f"mix{np.round(c, 4).tolist()}",
                                 "hill_climb", t, out, kappa, slack_tol,
                                 config.gate_tol, vol_tol))
    return samples


def _recheck_admitted(model, samples, h_by_seed, sign_const, slack_tol,
                      config, vol_tol):
    """Re-verify every admitted sample at doubled quadrature order; samples
    whose slacks shift beyond 10x the admission tolerance are demoted.  The
    samples are grouped by direction so each cloud is built once."""
    dbl = model.double_quadrature()
    scan = None
    todo = [s for s in samples
            if s.admitted and (s.seed in h_by_seed or s.seed == "equality")]
    for s in sorted(todo, key=lambda x: str(x.seed)):
        if s.family == "hill_climb":
            s.verdict += "(unrechecked)"
            continue
        h = h_by_seed.get(s.seed)
        if h is None and s.seed == "equality":
            h = next(iter(h_by_seed.values()))
        if scan is None:
            scan = CandidateScan(model, dbl)
        out = scan.evaluate_candidate(h.h, ("dbl", str(s.seed) if s.seed != "equality" else "eq0"), s.t)
        if out is None:
            s.admitted = False
            s.verdict = "demoted"
            continue
        shift = max(abs(out[0] - s.slack_R), abs(out[1] - s.slack_H))
        s.recheck_shift = shift
        if out[0] < -10 * slack_tol or out[1] < -10 * slack_tol:
            s.admitted = False
            s.verdict = "demoted"
        elif s.verdict in ("consistent", "violates"):
            s.verdict = _volume_sign_verdict(sign_const, s.d_vol, vol_tol)


def theorem_B_experiment(model, config, log=None):
    """Global volume comparison on a closed Einstein model with lam != 0.

    Candidates: the conformal scaling family (h = gbar, linear path) and
    seeded random fields with the derivative-informed sign bias; admission is
    R(g) >= n(n-1) lam - slack_tol at every node (measured against the
    computed background, an identical statement for Einstein backgrounds).
    """
    lam = model.einstein_lambda
    if lam is None or not model.closed:
        raise PreconditionError("theorem B needs a closed Einstein model")
    if lam == 0:
        raise PreconditionError(
            "the comparison fails for vanishing Einstein constant "
            "(scaling a scalar-flat metric changes volume both ways)")
    scan = CandidateScan(model)
    vol_tol = config.vol_tol_rel * model.volume() * config.tol_scale
    slack_tol = config.slack_tol * config.tol_scale
    samples = []
    rng = config.rng_for(("thmB", model.name))
    # conformal scalings: g = c gbar = gbar + (c-1) gbar
    cs = np.concatenate([np.linspace(0.8, 0.999, 12), [1.0],
                         np.linspace(1.001, 1.2, 12)])
    for c in cs:
        out = scan.evaluate_candidate(model.metric, "conformal", float(c - 1))
        if out is None:
            continue
        samples.append(_classify(model, "conformal", "conformal", float(c - 1),
                                 out, -lam, slack_tol, config.gate_tol, vol_tol))
    n_h = max(1, (config.candidates - len(cs)) // (2 * len(config.t_values)))
    g = model.metric.evaluate(model.quadrature.nodes)
    ginv = np.linalg.inv(g)
    for j in range(n_h):
        seed = int(rng.integers(2 ** 31))
        h = make_perturbation(model, "ambient_poly", seed=seed)
        # first-order bias: prefer directions whose linearized total scalar
        # curvature rises, i.e. -(n-1) lam * int tr h > 0
        trh = np.einsum("mab,mab->m", ginv, h.h.evaluate(model.quadrature.nodes))
        bias = -(model.dim - 1) * lam * integrate_values(trh, g, model.quadrature)
        field = h.h if bias >= 0 else (-1.0) * h.h
        for t in config.t_values:
            out = scan.evaluate_candidate(field, (seed, bias >= 0), float(t))
            if out is None:
                continue
            samples.append(_classify(model, seed, "ambient_poly", float(t),
                                     out, -lam, slack_tol, config.gate_tol,
                                     vol_tol))
    # doubled-order recheck for admitted candidates, grouped by direction
    dbl = model.double_quadrature()
    dbl_scan = CandidateScan(model, dbl)
    last_seed_field = {}
    for s in sorted((x for x in samples if x.admitted),
                    key=lambda x: (x.family, str(x.seed))):
        fld = model.metric if s.family == "conformal" else None
        if fld is None:
            if s.seed in last_seed_field:
                fld = last_seed_field[s.seed]
            else:
                h = make_perturbation(model, "ambient_poly", seed=int(s.seed))
                trh_ = np.einsum("mab,mab->m", ginv,
                                 h.h.evaluate(model.quadrature.nodes))
                bias = -(model.dim - 1) * lam * integrate_values(
                    trh_, g, model.quadrature)
                fld = h.h if bias >= 0 else (-1.0) * h.h
                last_seed_field.clear()
                last_seed_field[s.seed] = fld
        out = dbl_scan.evaluate_candidate(fld, ("dbl", str(s.seed), s.family), s.t)
        if out is None or out[0] < -10 * slack_tol:
            s.admitted = False
            s.verdict = "demoted"
            continue
        s.recheck_shift = abs(out[0] - s.slack_R)
        s.verdict = _volume_sign_verdict(-lam, s.d_vol, vol_tol)
    verdict = "consistent" if not any(s.verdict == "violates" for s in samples) \
        else "violates"
    return samples, verdict


def ricci_flat_counterexample(config, side=2 * np.pi, scales=(0.9, 1.0, 1.1)):
    """Scaling a flat torus keeps scalar curvature zero while the volume
    moves both ways; rows record R(c gbar) and the signed volume change."""
    model = make_model("torus", 3, side=side)
    rows = []
    for c in scales:
        g = float(c) * model.metric
        r = V.scalar_functional(g, model)
        dvol = V.volume_functional(g, model) - model.volume()
        rows.append({"c": float(c), "max_abs_R": float(np.abs(r).max()),
                     "d_vol": dvol})
    signs = {np.sign(row["d_vol"]) for row in rows if abs(row["d_vol"]) > 1e-12}
    return {"rows": rows, "scalar_flat": all(r["max_abs_R"] < 1e-8 for r in rows),
            "both_signs": signs == {-1.0, 1.0}}


# ---------------------------------------------------------------------------
# verification suites


def _report(name, anchor, lhs, rhs, tol, digest=None, relative=True):
    return V.VariationReport(name, anchor, float(lhs), float(rhs), tol,
                             relative=relative, digest=digest or {})


def batch_report(name, anchor, analytic, oracle, tol, digest=None):
    """Batch-normalized comparison: max |difference| over the batch against
    the batch magnitude."""
    analytic = np.atleast_1d(np.asarray(analytic, dtype=float))
    oracle = np.atleast_1d(np.asarray(oracle, dtype=float))
    scale = max(np.abs(analytic).max(), np.abs(oracle).max(), 1e-10)
    err = np.abs(analytic - oracle).max()
    rep = V.VariationReport(name, anchor, float(scale), float(scale - err),
                            tol, relative=True, digest=digest or {})
    return rep


def check_vstatic(config):
    out = []
    cases = [("sphere3_ball", 1.0, 0.5), ("sphere3", 1.0, 0.4),
             ("hyperbolic3_ball", 1.0, 0.3), ("euclidean3_ball", 1.0, 0.4),
             ("euclidean2_ball", 1.0, 0.3), ("torus3", 1.0, 0.0)]
    from .model_spaces import vstatic_residuals
    for name, a, b in cases:
        model = resolve_model(name)
        vs = make_vstatic(model, a, b)
        rng = config.rng_for(("vstatic", name))
        pts = model.sample_points(rng, 100)
        r1, r2 = vstatic_residuals(model, vs.f, vs.kappa, pts)
        out.append(_report(f"static-equation[{name}]", "static-metric-equation",
                           r1.max(), 0.0, 1e-6, {"model": name, "a": a, "b": b},
                           relative=False))
        out.append(_report(f"static-trace[{name}]", "static-trace-equation",
                           r2.max(), 0.0, 1e-6, {"model": name, "a": a, "b": b},
                           relative=False))
    return out


def check_convention(config):
    model = resolve_model("sphere3")
    rng = config.rng_for("convention")
    pts = model.sample_points(rng, 20)
    pack = curvature(model.metric, model.chart, pts)
    tgt = (np.einsum("mad,mbc->mabcd", pack.g, pack.g)
           - np.einsum("mac,mbd->mabcd", pack.g, pack.g))
    dev = np.abs(pack.riemann_low - tgt).max()
    out = [_report("space-form-curvature-lock", "curvature-convention",
                   dev, 0.0, 1e-6, relative=False)]
    from .tensor_calc import rm_dot
    val = rm_dot(pack.g, pack)
    out.append(_report("curvature-contraction-of-metric", "curvature-convention",
                       np.abs(val - 6).max(), 0.0, 1e-5, relative=False))
    return out


def check_variations(config, models=None, families=None, seeds=None):
    """DR/DH/DVol and their second variations against the path oracle."""
    out = []
    seeds = seeds or config.seeds
    grid = [
        ("euclidean3_ball", ("double_curl3d", "bump_tensor", "boundary_adapted")),
        ("sphere3_ball", ("bump_tensor", "boundary_adapted", "conformal")),
        ("torus3", ("tt_wave_torus", "ambient_poly", "conformal")),
        ("sphere3", ("ambient_poly", "bump_tensor", "conformal")),
    ]
    if models:
        grid = [gm for gm in grid if gm[0] in models]
    for name, fams in grid:
        model = resolve_model(name)
        fams = tuple(f for f in (families or fams) if f in fams) or fams
        rng = config.rng_for(("variations", name))
        for fam in fams:
            for j in range(seeds):
                seed = int(rng.integers(2 ** 31))
                h = make_perturbation(model, fam, seed=seed)
                pts = model.sample_points(rng, 5)
                inv = V.pointwise_invariants(h, model, pts)
                digest = {"model": name, "family": fam, "seed": seed}
                o1 = V.fd_oracle("scalar", model, h, 1, point=pts,
                                 t0=0.05, levels=3)
                out.append(batch_report(f"scalar-first-variation[{name}/{fam}/{seed}]",
                                        "first-variation-scalar", inv["dr"],
                                        o1.value, 1e-5, digest))
                o2 = V.fd_oracle("scalar", model, h, 2, point=pts,
                                 t0=0.1, levels=2)
                out.append(batch_report(f"scalar-second-variation[{name}/{fam}/{seed}]",
                                        "second-variation-scalar", inv["d2r"],
                                        o2.value, 1e-3, digest))
                dv, d2v = V.DVol(h, model), V.D2Vol(h, model)
                ov1 = V.fd_oracle("volume", model, h, 1, t0=0.02, levels=3)
                ov2 = V.fd_oracle("volume", model, h, 2, t0=0.03, levels=3)
                out.append(batch_report(f"volume-first-variation[{name}/{fam}/{seed}]",
                                        "first-variation-volume", dv, ov1.value,
                                        1e-8, digest))
                out.append(batch_report(f"volume-second-variation[{name}/{fam}/{seed}]",
                                        "second-variation-volume", d2v, ov2.value,
                                        1e-3, digest))
                if model.boundary is not None and h.tangentially_vanishing:
                    bpts = model.boundary.sample_points(rng, 4)
                    dh = V.DH(h, model, points=bpts)
                    d2h = V.D2H(h, model, points=bpts)
                    ob1 = V.fd_oracle("mean_curvature", model, h, 1, point=bpts,
                                      t0=0.01, levels=3)
                    ob2 = V.fd_oracle("mean_curvature", model, h, 2, point=bpts,
                                      t0=0.05, levels=2)
                    out.append(batch_report(
                        f"mean-curvature-first-variation[{name}/{fam}/{seed}]",
                        "first-variation-mean-curvature", dh, ob1.value, 1e-5,
                        digest))
                    out.append(batch_report(
                        f"mean-curvature-second-variation[{name}/{fam}/{seed}]",
                        "second-variation-mean-curvature", d2h, ob2.value, 1e-3,
                        digest))
    return out


def check_remainder(config, cases=3):
    out = []
    model = resolve_model("sphere3")
    rng = config.rng_for("remainder")
    for j in range(cases):
        seed = int(rng.integers(2 ** 31))
        h = make_perturbation(model, "ambient_poly", seed=seed)
        pts = model.sample_points(rng, 3)
        res = V.remainder_decay(model, h, pts)
        out.append(_report(f"expansion-remainder-slope[{seed}]",
                           "expansion-remainder", res["slope"], 3.0, 0.3,
                           {"seed": seed}, relative=False))
    return out


def check_criticality(config, seeds=None):
    out = []
    seeds = seeds if seeds is not None else config.seeds
    ball_cases = [("euclidean3_ball", 1.0, 0.3), ("sphere3_ball", 1.0, 0.5),
                  ("hyperbolic3_ball", 1.0, 0.3)]
    for name, a, b in ball_cases:
        model = resolve_model(name)
        vs = make_vstatic(model, a, b)
        rng = config.rng_for(("criticality", name))
        for j in range(seeds):
            seed = int(rng.integers(2 ** 31))
            fam = ("boundary_adapted", "bump_tensor", "double_curl3d")[j % 3]
            if fam == "double_curl3d" and model.kind != "euclidean_ball":
                fam = "boundary_adapted"
            h = make_perturbation(model, fam, seed=seed)
            df = V.DF(h, model, vs)
            bound = 1e-6 * c1_norm(model, h.h, seed=seed)
            out.append(_report(f"functional-criticality[{name}/{seed}]",
                               "functional-critical-point", abs(df), 0.0,
                               bound, {"model": name, "family": fam,
                                       "seed": seed}, relative=False))
    for name in ("sphere3", "torus3"):
        model = resolve_model(name)
        rng = config.rng_for(("criticality-einstein", name))
        for j in range(seeds):
            seed = int(rng.integers(2 ** 31))
            h = make_perturbation(model, "ambient_poly", seed=seed)
            edf = V.einstein_DF(h, model)
            bound = 1e-6 * c1_norm(model, h.h, seed=seed)
            out.append(_report(f"einstein-criticality[{name}/{seed}]",
                               "einstein-functional-critical-point", abs(edf),
                               0.0, bound, {"model": name, "seed": seed},
                               relative=False))
    return out


def check_second_variation(config, seeds=3):
    from .gauge import slice_project
    out = []
    model = resolve_model("euclidean3_ball")
    vs = make_vstatic(model, 1.0, 0.3)
    rng = config.rng_for("second-variation-flat")
    for j in range(seeds):
        seed = int(rng.integers(2 ** 31))
        h = make_perturbation(model, "double_curl3d", seed=seed)
        d2f = V.D2F(h, model, vs)
        o = V.fd_oracle("f_functional", model, h, 2, vstatic=vs, t0=0.05,
                        levels=3)
        out.append(_report(f"functional-second-variation[flat/{seed}]",
                           "second-variation-functional", d2f["total"],
                           o.value, 1e-3, {"seed": seed}))
    model2 = resolve_model("sphere3_ball")
    vs2 = make_vstatic(model2, 1.0, 0.5)
    rng = config.rng_for("second-variation-sphereball")
    for j in range(max(2, seeds - 1)):
        seed = int(rng.integers(2 ** 31))
        h0 = make_perturbation(model2, "bump_tensor",
                               params={"rho": 1.0, "smoothness": 4}, seed=seed)
        proj = slice_project(h0, model2)
        d2f = V.D2F(proj.hprime, model2, vs2)
        o = V.fd_oracle("f_functional", model2, proj.hprime, 2, vstatic=vs2,
                        t0=0.05, levels=3)
        out.append(_report(f"functional-second-variation[sphere-ball/{seed}]",
                           "second-variation-functional", d2f["total"],
                           o.value, 1e-3,
                           {"seed": seed, "projection_residual": proj.residual}))
    return out


def check_einstein_integrals(config, seeds=None):
    from .gauge import tt_project
    out = []
    seeds = seeds if seeds is not None else config.seeds
    # torus waves against the closed-form integral
    model = resolve_model("torus3")
    rng = config.rng_for("einstein-torus")
    L = model.params["side"]
    for j in range(min(seeds, 6)):
        seed = int(rng.integers(2 ** 31))
        h = make_perturbation(model, "tt_wave_torus", seed=seed)
        lhs, rhs = V.einstein_D2R_integral(h, model)
        out.append(_report(f"second-variation-integral[torus/{seed}]",
                           "einstein-second-variation-integral", lhs, rhs,
                           1e-6, {"seed": seed}))
    # sphere with projected transverse-traceless fields
    model = resolve_model("sphere3")
    rng = config.rng_for("einstein-sphere")
    for j in range(min(seeds, 5)):
        seed = int(rng.integers(2 ** 31))
        h0 = make_perturbation(model, "ambient_poly", seed=seed)
        proj = tt_project(h0, model)
        lhs, rhs = V.einstein_D2R_integral(proj.hprime, model)
        out.append(_report(f"second-variation-integral[sphere/{seed}]",
                           "einstein-second-variation-integral", lhs, rhs,
                           1e-4, {"seed": seed,
                                  "div_residual": proj.residual,
                                  "trace_residual": proj.trace_residual}))
    return out


def check_bochner(config, seeds=None, thetas=(-2.0, -1.0, -0.5, 0.5, 1.0)):
    out = []
    seeds = seeds if seeds is not None else config.seeds
    model = resolve_model("sphere3")
    rng = config.rng_for("bochner")
    for j in range(seeds):
        seed = int(rng.integers(2 ** 31))
        h = make_perturbation(model, "ambient_poly", seed=seed)
        lhs, rhs = V.bochner_cross_identity(h, model)
        out.append(_report(f"commutation-integral[{seed}]",
                           "cross-derivative-integral", lhs, rhs, 1e-5,
                           {"seed": seed}))
        inv = V.pointwise_invariants(h, model, model.quadrature.nodes,
                                     second_variation=False)
        for th in thetas:
            r = V.theta_inequality(h, model, th, inv=inv)
            out.append(_report(f"weighted-gradient-bound[{seed}/theta={th}]",
                               "weighted-gradient-inequality",
                               min(r["lhs"] - r["rhs"], 0.0), 0.0, 1e-8,
                               {"seed": seed, "theta": th}, relative=False))
            out.append(_report(f"gradient-defect-nonnegative[{seed}/theta={th}]",
                               "weighted-gradient-defect",
                               min(r["defect"], 0.0), 0.0, 1e-10,
                               {"seed": seed, "theta": th}, relative=False))
    return out


def check_arithmetic(config):
    out = [
        _report("threshold-alpha(3,-1)", "weyl-threshold", V.alpha(3, -1), 5.0, 1e-15),
        _report("threshold-alpha(4,-1)", "weyl-threshold", V.alpha(4, -1), 8.0, 1e-15),
        _report("gap-eta(3,-1,0)", "coercivity-gap", V.eta(3, -1, 0.0), 2.5, 1e-15),
    ]
    return out


CHECK_GROUPS = {
    "vstatic": check_vstatic,
    "convention": check_convention,
    "variations": check_variations,
    "remainder": check_remainder,
    "criticality": check_criticality,
    "second-variation": check_second_variation,
    "einstein": check_einstein_integrals,
    "bochner": check_bochner,
    "arithmetic": check_arithmetic,
}


def run_verification_suite(config, groups=None):
    """Run the selected check groups, returning VariationReports in a fixed
    order; unknown group names are rejected before any computation."""
    groups = groups or ["vstatic", "convention", "arithmetic"]
    for gname in groups:
        if gname not in CHECK_GROUPS:
            raise KeyError(f"unknown check group {gname!r}; known: "
                           f"{', '.join(sorted(CHECK_GROUPS))}")
    out = []
    for gname in groups:
        out.extend(CHECK_GROUPS[gname](config))
    return out


# ---------------------------------------------------------------------------
# report emission


def _float_repr(x):
    if isinstance(x, float):
        return float(repr(x)) if np.isfinite(x) else str(x)
    return x


def emit_report(config, checks=(), samples=(), extras=None,
                json_path=None, csv_path=None):
    """Write the versioned JSON report and the per-sample CSV.

    Identical configs (seeds included) produce byte-identical files: floats
    go through repr, keys are sorted, and no timestamps are recorded.
    """
    doc = {
        "version": SCHEMA_VERSION,
        "config": asdict(config),
        "checks": [c.as_dict() for c in checks],
        "samples": [vars(s).copy() for s in samples],
    }
    if extras:
        doc["extras"] = extras
    text = json.dumps(doc, sort_keys=True, indent=1, default=_json_default)
    if json_path:
        _write(json_path, text + "\n")
    lines = [",".join(CSV_HEADER)]
    for s in samples:
        lines.append(",".join(s.as_row()))
    csv_text = "\n".join(lines) + "\n"
    if csv_path:
        _write(csv_path, csv_text)
    return text, csv_text


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return repr(x)


def _write(path, text):
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w") as f:
        f.write(text)
