"""Executes a configured experiment: grid → assembly → solve → audits → report."""

from __future__ import annotations

import datetime as _dt
import logging
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from mixlap import barrier, linear, moser, regularity, semilinear
from mixlap.config import ExperimentConfig
from mixlap.domain import GridFunction, build_grid
from mixlap.errors import MixlapError
from mixlap.operators import assemble
from mixlap.report import AuditReport, dumps

log = logging.getLogger(__name__)


def _failure(name: str, exc: Exception) -> AuditReport:
    return AuditReport(name=name, passed=False, details={"error": type(exc).__name__, "message": str(exc)})


def run_experiment(cfg: ExperimentConfig, timestamp: Optional[str] = None) -> Tuple[dict, Optional[str]]:
    """Returns the report dict and the CSV text of the refinement study, if any."""
    rng = np.random.default_rng(cfg.seed)
    domain = cfg.domain_obj
    grid = build_grid(domain, cfg.h)
    asm = assemble(grid, cfg.s)
    nl = semilinear.make_nonlinearity(cfg.rhs.name, **cfg.rhs.params)
    solves, audits = [], {}
    csv_text = None

    # λ policy
    if cfg.lam.policy == "auto":
        probe = np.ones(grid.n_interior)
        lam1 = linear.estimate_lambda_threshold(asm, probe)
        lam = cfg.lam.factor * lam1
        solves.append({"kind": "lambda_threshold", "lambda1": lam1, "lambda": lam})
    else:
        lam = cfg.lam.value

    # main semilinear solve
    u = None
    try:
        u, trace = semilinear.solve_semilinear(asm, nl, lam, cfg.tol)
        solves.append(
            {
                "kind": "semilinear",
                "nonlinearity": nl.to_dict(),
                "trace": trace.to_dict(),
                "u_max": u.max_abs(),
                "weak_residual": semilinear.weak_residual(asm, u, nl),
            }
        )
    except MixlapError as exc:
        solves.append({"kind": "semilinear", "error": type(exc).__name__, "message": str(exc)})
        audits["semilinear"] = _failure("semilinear", exc)

    def guarded(name, fn):
        try:
            audits[name] = fn()
        except MixlapError as exc:
            audits[name] = _failure(name, exc)

    if "contraction" in cfg.audits:

        def _contraction():
            f = rng.standard_normal(grid.n_interior)
            lam_c = lam if lam > 0 else 1.0
            uc, tr = linear.contraction_solve(asm, lam_c, f, tol=1e-8)
            ud = linear.solve_direct(asm, lam_c, f)
            err = float(np.max(np.abs(uc.values - ud.values)))
            return AuditReport(
                name="contraction",
                passed=bool(err < 10 * 1e-8 and all(r < 1 for r in tr.ratios)),
                lhs=err,
                rhs=1e-7,
                fitted=tr.max_ratio,
                tolerances={"tol": 1e-8},
                details={"trace": tr.to_dict()},
            )

        guarded("contraction", _contraction)

    if "moser" in cfg.audits and u is not None:

        def _moser():
            g_vals = nl(grid.coords, u.values)
            cert = moser.compute_certificate(u, grid.dim, cfg.s, cfg.moser_M, g_vals)
            growth = semilinear.check_growth(nl, grid, np.linspace(-100.0, 100.0, 401))
            sched = cert.schedule
            main = moser.audit_main_estimate(u, sched, sched.beta[:3], g_values=g_vals)
            return AuditReport(
                name="moser",
                passed=bool(cert.passed and main.passed and growth.passed),
                lhs=cert.u_max,
                rhs=cert.bound_value,
                fitted=cert.fitted_C,
                advisory=domain.advisory,
                tolerances={"slack_eps_h": cert.slack, "max_spread": 10.0},
                details={"certificate": cert.to_dict(), "main_estimate": main.to_dict(), "growth": growth.to_dict()},
            )

        guarded("moser", _moser)

    sup = None
    if "barrier" in cfg.audits:

        def _barrier():
            nonlocal sup
            sup = barrier.verify_supersolution(grid, cfg.s)
            tr = barrier.concave_transform_check(sup, cfg.s, max(lam, 1.0))
            rep = sup.report
            rep.passed = bool(rep.passed and tr.passed)
            rep.details["concave_transform"] = tr.to_dict()
            return rep

        guarded("barrier", _barrier)

    if "comparison" in cfg.audits:

        def _comparison():
            lam_c = lam if lam > 0 else 1.0
            transform = barrier.transform_values(sup, lam_c) if sup is not None else None
            h_rhs = rng.uniform(-1.0, 1.0, grid.n_interior)
            rep = barrier.comparison_bound(asm, lam_c, h_rhs, transform=transform)
            spot = barrier.max_principle_spot_check(asm, 0.0, 10, rng)
            rep.details["max_principle"] = spot
            rep.passed = bool(rep.passed and spot["violations"] == 0)
            return rep

        guarded("comparison", _comparison)

    if "interpolation" in cfg.audits:
        guarded("interpolation", lambda: regularity.interpolation_audit(asm, cfg.p, cfg.epsilon_list, cfg.trials, rng))

    if "stability" in cfg.audits:

        def _stability():
            nonlocal csv_text
            study = regularity.RefinementStudy(domain, cfg.s, list(cfg.h_list), rhs=1.0, lam=0.0)
            study.solve((cfg.p,))
            csv_text = study.to_csv()
            return regularity.stability_audit(study, cfg.p)

        guarded("stability", _stability)

    if "holder" in cfg.audits:

        def _holder():
            target = u if u is not None else linear.solve_direct(asm, 0.0, np.ones(grid.n_interior))
            alpha, quality, info = regularity.holder_fit(target, 1)
            return AuditReport(
                name="holder",
                passed=bool(alpha >= cfg.holder_threshold and quality < cfg.holder_max_residual),
                lhs=alpha,
                rhs=cfg.holder_threshold,
                fitted=alpha,
                advisory=cfg.s > 0.5 or domain.advisory,
                tolerances={"alpha_min": cfg.holder_threshold, "max_residual": cfg.holder_max_residual},
                details={"fit_quality": quality, **info},
            )

        guarded("holder", _holder)

    overall = all(r.passed for r in audits.values() if not r.advisory)
    report = {
        "schema_version": 1,
        "config_echo": cfg.model_dump(mode="json"),
        "grid": {"N_int": grid.n_interior, "h": grid.h, "n": grid.dim},
        "lambda": lam,
        "solves": solves,
        "audits": {k: v.to_dict() for k, v in audits.items()},
        "pass": bool(overall),
        "timestamp": timestamp if timestamp is not None else _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }
    return report, csv_text


def write_outputs(report: dict, csv_text: Optional[str], cfg: ExperimentConfig, base: Path) -> Path:
    out = Path(cfg.output.report)
    if not out.is_absolute():
        out = base / out
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(dumps(report), encoding="utf-8")
    if csv_text is not None:
        csv_path = Path(cfg.output.csv) if cfg.output.csv else out.with_suffix(".csv")
        if not csv_path.is_absolute():
            csv_path = base / csv_path
        csv_path.write_text(csv_text, encoding="utf-8")
    return out
